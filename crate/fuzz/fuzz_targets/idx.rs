#![no_main]

use fsvae::data::idx::{parse_idx, serialize_idx};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(idx) = parse_idx(data) {
        assert_eq!(serialize_idx(&idx), data);
    }
});
