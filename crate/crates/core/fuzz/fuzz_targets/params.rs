#![no_main]

use libfuzzer_sys::fuzz_target;
use sofanet::nn::{decode_params, deserialize_params, serialize_params};

fuzz_target!(|data: &[u8]| {
    if let Ok(p) = decode_params(data) {
        let bytes = serialize_params(&p);
        assert_eq!(
            deserialize_params(&bytes, &p).map(|q| serialize_params(&q)),
            Ok(bytes)
        );
    }
});
