#![no_main]

use libfuzzer_sys::fuzz_target;
use sofanet::protocol::{
    decode_transcript, encode_transcript, privacy_audit_bytes, RawWindowIndex,
};

fuzz_target!(|data: &[u8]| {
    if let Ok(records) = decode_transcript(data) {
        assert_eq!(encode_transcript(&records), data);
    }
    let _ = privacy_audit_bytes(data, 8, &RawWindowIndex::new());
});
