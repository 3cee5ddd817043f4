#![no_main]

use libfuzzer_sys::fuzz_target;
use poolea_core::Chromosome;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(c) = Chromosome::parse(text) {
        assert_eq!(c.len(), text.len());
        assert_eq!(c.to_string(), text);
        assert!(c.count_ones() <= c.len());
    }
});
