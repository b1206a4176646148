#![no_main]

use libfuzzer_sys::fuzz_target;
use unicom::data::uceb::{decode, encode};

fuzz_target!(|data: &[u8]| {
    // anything accepted must re-encode to the same bytes
    if let Ok(set) = decode(data) {
        assert_eq!(encode(&set), data);
    }
});
