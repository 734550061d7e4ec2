#![no_main]

use fsvae::kv;
use fsvae::trainer::TrainConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    if let Ok(m) = kv::parse(text) {
        assert_eq!(kv::parse(&kv::render(&m)).unwrap(), m);
        let _ = TrainConfig::from_kv(&m);
    }
});
