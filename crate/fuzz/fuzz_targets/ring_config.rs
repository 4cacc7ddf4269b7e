#![no_main]

use ihanas::genome::{ArchGenome, GlobalConfig, LayerGene};
use ihanas::hwcost::{chip_grid_search, RingConfig, Workload};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(cfg) = RingConfig::from_toml(text) else {
        return;
    };
    // Keep sweeps small enough for the fuzzer's time budget.
    if cfg.grid.len() > 64 || cfg.chip.max_cores > 1 << 16 {
        return;
    }
    let g = ArchGenome::from_active(
        GlobalConfig::default(),
        &[LayerGene::active(4, 2, 64, 64, 1024); 3],
    );
    if let Ok(top) = chip_grid_search(&g, &Workload::ring(), &cfg) {
        assert!(top.len() <= cfg.top_k);
    }
});
