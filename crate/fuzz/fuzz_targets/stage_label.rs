#![no_main]

use libfuzzer_sys::fuzz_target;
use sleepgmu::preprocess::RawStage;
use sleepgmu::Stage;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = text.parse::<Stage>();
        let _ = text.parse::<RawStage>();
    }
});
