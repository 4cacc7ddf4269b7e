//! Substrate files that validate must yield finite, positive costs.
#![no_main]

use ihanas::genome::{ArchGenome, GlobalConfig, LayerGene};
use ihanas::hwcost::{substrate_cost, SubstrateSpec, Workload};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(spec) = SubstrateSpec::from_toml(text) else {
        return;
    };
    let g = ArchGenome::from_active(
        GlobalConfig::default(),
        &[LayerGene::active(4, 2, 64, 64, 1024); 2],
    );
    if let Ok(m) = substrate_cost(&g, &spec, &Workload::default()) {
        assert!(m.e_tok_uj >= 0.0 && m.ttft_ms >= 0.0 && m.tpot_ms >= 0.0);
    }
});
