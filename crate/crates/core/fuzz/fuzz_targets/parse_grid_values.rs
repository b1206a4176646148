#![no_main]

use libfuzzer_sys::fuzz_target;
use unicom::eval::parse_grid_values;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(values) = parse_grid_values(text) {
            assert!(values.iter().all(|v| v.is_finite()));
        }
    }
});
