#![no_main]

use fsvae::nn::checkpoint::Checkpoint;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(ck) = Checkpoint::from_bytes(data) {
        let again = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        assert_eq!(again.to_bytes(), ck.to_bytes());
    }
});
