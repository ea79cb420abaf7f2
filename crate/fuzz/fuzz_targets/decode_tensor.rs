#![no_main]

use libfuzzer_sys::fuzz_target;
use sleepgmu::formats::{decode_tensor, encode_tensor};

fuzz_target!(|data: &[u8]| {
    if let Ok(t) = decode_tensor(data) {
        assert_eq!(t.len(), t.shape().iter().product::<usize>());
        let again = decode_tensor(&encode_tensor(&t)).expect("re-encoded tensor decodes");
        assert_eq!(again.shape(), t.shape());
    }
});
