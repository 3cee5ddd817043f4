#![no_main]

use libfuzzer_sys::fuzz_target;
use poolea::config::ConfigFile;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(file) = ConfigFile::parse(text) {
        let _ = file.serve.resolve();
        let _ = file.island.resolve();
        let _ = file.simulate.resolve();
        let _ = file.analyze.resolve();
    }
});
