#![no_main]
use libfuzzer_sys::fuzz_target;
use molmech_core::dump::{decode_binary, encode_binary};

fuzz_target!(|data: &[u8]| {
    if let Ok(m) = decode_binary(data) {
        assert_eq!(encode_binary(&m), data);
    }
});
