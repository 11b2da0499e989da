#![no_main]
use libfuzzer_sys::fuzz_target;
use molmech_core::dump::{decode_text, encode_text};

fuzz_target!(|data: &str| {
    if let Ok(m) = decode_text(data) {
        let again = decode_text(&encode_text(&m)).expect("re-encoded dump decodes");
        assert_eq!(m.shape(), again.shape());
        for (a, b) in m.iter().zip(again.iter()) {
            assert!(a == b || (a.re.is_nan() || a.im.is_nan()));
        }
    }
});
