//! Genome documents: parsing never panics, and anything that parses survives
//! a serialize/parse round trip and can be validated and repaired.
#![no_main]

use ihanas::genome::{repair, validate, ArchGenome, SpaceRanges};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(g) = ArchGenome::from_json(text) else {
        return;
    };
    let again = ArchGenome::from_json(&g.to_json()).expect("round trip parses");
    assert_eq!(again, g);
    let r = SpaceRanges::default();
    let _ = validate(&g, &r);
    if g.layers.len() <= 256 {
        let fixed = repair(&g, &r);
        assert!(validate(&fixed, &r).is_empty());
    }
});
