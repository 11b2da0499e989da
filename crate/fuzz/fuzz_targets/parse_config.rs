#![no_main]
use libfuzzer_sys::fuzz_target;
use molmech_cli::parse_config_str;

fuzz_target!(|data: &str| {
    if let Ok(run) = parse_config_str(data, "fuzz") {
        // Anything accepted must survive its own text form unchanged.
        let again = parse_config_str(&run.to_toml(), "fuzz-echo").expect("echoed config parses");
        assert_eq!(run, again);
    }
});
