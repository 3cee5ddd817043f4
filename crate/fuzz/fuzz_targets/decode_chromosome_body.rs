#![no_main]

use libfuzzer_sys::fuzz_target;
use poolea_core::wire;

fuzz_target!(|data: &[u8]| {
    let Some((&len, body)) = data.split_first() else {
        return;
    };
    let checked = wire::decode_chromosome_body(body, usize::from(len));
    let unchecked = wire::decode_chromosome(body);
    if let Ok(c) = &checked {
        assert_eq!(c.len(), usize::from(len));
        assert_eq!(unchecked.as_ref().ok(), Some(c));
    }
    if let Ok(c) = unchecked {
        let again = wire::decode_chromosome(wire::encode_chromosome_body(&c).as_bytes())
            .expect("encoded body decodes");
        assert_eq!(again, c);
    }
});
