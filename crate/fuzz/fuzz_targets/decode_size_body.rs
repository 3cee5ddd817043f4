#![no_main]

use libfuzzer_sys::fuzz_target;
use poolea_core::wire;

fuzz_target!(|data: &[u8]| {
    if let Ok(size) = wire::decode_size_body(data) {
        assert_eq!(
            wire::decode_size_body(wire::encode_size_body(size).as_bytes()).ok(),
            Some(size)
        );
    }
});
