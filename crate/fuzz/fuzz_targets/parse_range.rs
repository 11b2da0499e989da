#![no_main]
use libfuzzer_sys::fuzz_target;
use molmech_cli::parse_range;

fuzz_target!(|data: &str| {
    if let Ok(v) = parse_range(data) {
        assert!(!v.is_empty());
        assert!(v.iter().all(|x| x.is_finite()));
    }
});
