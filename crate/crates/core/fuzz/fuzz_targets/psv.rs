#![no_main]

use libfuzzer_sys::fuzz_target;
use sofanet::data::parse_psv;
use sofanet::FeatureSchema;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = parse_psv(text, &FeatureSchema::standard(), "fuzz");
    }
});
