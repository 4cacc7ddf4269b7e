#![no_main]

use ihanas::search::SearchConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(cfg) = SearchConfig::from_toml(text) else {
        return;
    };
    if cfg.validate().is_ok() {
        let again = SearchConfig::from_toml(&cfg.to_toml()).expect("round trip parses");
        assert_eq!(again.to_toml(), cfg.to_toml());
        let _ = cfg.hv_reference();
    }
});
