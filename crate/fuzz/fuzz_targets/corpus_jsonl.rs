#![no_main]

use ihanas::surrogate::LabeledCorpus;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(c) = LabeledCorpus::parse_jsonl(text) else {
        return;
    };
    assert!(c.rows.iter().all(|(_, y)| y.is_finite()));
    let again = LabeledCorpus::parse_jsonl(&c.to_jsonl()).expect("round trip parses");
    assert_eq!(again.rows, c.rows);
    let _ = c.split(0, 0.8);
});
