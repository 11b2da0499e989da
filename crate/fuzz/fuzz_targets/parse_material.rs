#![no_main]
use libfuzzer_sys::fuzz_target;
use molmech_cli::parse_material_str;

fuzz_target!(|data: &str| {
    if let Ok(m) = parse_material_str(data, "fuzz") {
        if m.strains.len() <= 4096 {
            let _ = m.estimate_table();
        }
    }
});
