use std::path::PathBuf;

use fsvae::data::idx::{parse_idx, serialize_idx, IdxData, IMAGE_MAGIC, LABEL_MAGIC};
use fsvae::data::shard::{decode_shard, encode_shard};
use fsvae::data::VideoBatch;
use fsvae::kv::{self, KvMap};
use fsvae::nn::checkpoint::{Checkpoint, NamedTensor};
use fsvae::trainer::TrainConfig;
use proptest::prelude::*;

fn corpus(target: &str) -> Vec<(PathBuf, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<(PathBuf, Vec<u8>)> =
        std::fs::read_dir(&dir).unwrap().map(|e| e.unwrap().path()).map(|p| (p.clone(), std::fs::read(p).unwrap())).collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds in {}", dir.display());
    out
}

#[test]
fn fuzz_seeds_parse_and_round_trip() {
    for (p, b) in corpus("idx") {
        let idx = parse_idx(&b).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        assert_eq!(serialize_idx(&idx), b);
    }
    for (p, b) in corpus("shard") {
        let batch = decode_shard(&b).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        assert_eq!(encode_shard(&batch).unwrap(), b);
    }
    for (p, b) in corpus("checkpoint") {
        let ck = Checkpoint::from_bytes(&b).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        assert_eq!(ck.to_bytes(), b);
    }
    for (p, b) in corpus("kv") {
        let m = kv::parse(std::str::from_utf8(&b).unwrap()).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        assert_eq!(kv::parse(&kv::render(&m)).unwrap(), m);
    }
    let cfg = kv::parse(&String::from_utf8(std::fs::read(corpus("kv")[0].0.clone()).unwrap()).unwrap()).unwrap();
    let t = TrainConfig::from_kv_over(&TrainConfig::default(), &cfg).unwrap();
    assert_eq!(t.data.digit_classes, vec![0, 1, 2]);
}

fn batch_strategy() -> impl Strategy<Value = VideoBatch> {
    (1usize..3, 1usize..3, any::<bool>()).prop_flat_map(|(b, n, with_angles)| {
        let count = b * n;
        (
            proptest::collection::vec(any::<u8>(), count * VideoBatch::PIXELS),
            proptest::collection::vec(any::<u32>(), b),
            proptest::collection::vec((-100.0f32..100.0, -100.0f32..100.0), count),
            proptest::collection::vec(-7.0f32..7.0, if with_angles { count } else { 0 }),
        )
            .prop_map(move |(px, labels, pos, angles)| VideoBatch {
                batch: b,
                n_frames: n,
                frames: px.iter().map(|&v| v as f32 / 255.0).collect(),
                labels,
                positions: pos.into_iter().map(|(r, c)| [r, c]).collect(),
                angles,
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn shard_round_trip_is_bit_exact(b in batch_strategy()) {
        let bytes = encode_shard(&b).unwrap();
        let back = decode_shard(&bytes).unwrap();
        prop_assert_eq!(&back, &b);
        prop_assert_eq!(encode_shard(&back).unwrap(), bytes);
    }

    #[test]
    fn idx_round_trip(images in any::<bool>(), n in 0u32..4, r in 1u32..5, c in 1u32..5, seed in any::<u8>()) {
        let (magic, dims) = if images { (IMAGE_MAGIC, vec![n as usize, r as usize, c as usize]) } else { (LABEL_MAGIC, vec![n as usize]) };
        let len: usize = dims.iter().product();
        let idx = IdxData { magic, dims, data: (0..len).map(|i| (i as u8).wrapping_mul(seed)).collect() };
        let bytes = serialize_idx(&idx);
        prop_assert_eq!(parse_idx(&bytes).unwrap(), idx);
        if !bytes.is_empty() {
            prop_assert!(parse_idx(&bytes[..bytes.len() - 1]).is_err());
        }
    }

    #[test]
    fn checkpoint_round_trip(values in proptest::collection::vec(any::<f64>(), 0..12), key in "[a-z][a-z0-9._]{0,8}", val in "[ -~]{0,12}") {
        let mut meta = KvMap::new();
        meta.insert(key, val.trim().to_string());
        let ck = Checkpoint {
            tensors: vec![NamedTensor { name: "t".into(), dtype: 2, dims: vec![values.len()], data: values }],
            meta,
        };
        let bytes = ck.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        prop_assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn decoders_never_panic(bytes in proptest::collection::vec(any::<u8>(), 0..64)) {
        let _ = parse_idx(&bytes);
        let _ = decode_shard(&bytes);
        let _ = Checkpoint::from_bytes(&bytes);
        let _ = kv::parse(&String::from_utf8_lossy(&bytes));
    }
}
