#![no_main]

use libfuzzer_sys::fuzz_target;
use sofanet::protocol::Frame;

fuzz_target!(|data: &[u8]| {
    if let Ok(frame) = Frame::decode(data) {
        assert_eq!(frame.encode(), data);
    }
    let _ = Frame::decode_prefix(data);
});
