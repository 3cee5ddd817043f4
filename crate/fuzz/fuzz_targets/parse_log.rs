#![no_main]

use libfuzzer_sys::fuzz_target;
use poolea_core::analyze;

fuzz_target!(|data: &[u8]| {
    if let Ok(parsed) = analyze::parse_log(data) {
        let stats = analyze::compute_stats(&parsed.events);
        let fraction = stats.fraction_under(4.0);
        assert!((0.0..=1.0).contains(&fraction) || fraction.is_nan());
    }
});
