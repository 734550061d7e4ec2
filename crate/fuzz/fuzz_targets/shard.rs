#![no_main]

use fsvae::data::shard::{decode_shard, encode_shard};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(batch) = decode_shard(data) {
        if let Ok(bytes) = encode_shard(&batch) {
            let again = decode_shard(&bytes).unwrap();
            assert_eq!(encode_shard(&again).unwrap(), bytes);
        }
    }
});
