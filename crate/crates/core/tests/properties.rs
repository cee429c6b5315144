use candle_core::{DType, Device, Tensor};
use ndarray::{Array2, Array3};
use proptest::prelude::*;

use mmdm::cli::RunConfig;
use mmdm::denoiser::{Checkpoint, ModelConfig, MotionDenoiser};
use mmdm::evaluation::compute_fid;
use mmdm::masking::{apply_mask, masked_count, sample_mask, MaskKind, MaskToken};
use mmdm::motion::io::{decode_motion, encode_motion};
use mmdm::motion::{MotionSequence, RepresentationMode, Skeleton};

fn kind() -> impl Strategy<Value = MaskKind> {
    prop_oneof![Just(MaskKind::TimeFrames), Just(MaskKind::BodyParts)]
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn mask_has_exactly_the_rounded_count(kind in kind(), slots in 1usize..200, ratio in 0.0f64..0.99, seed: u64) {
        let m = sample_mask(kind, slots, ratio, seed).unwrap();
        let k = masked_count(ratio, slots);
        prop_assert_eq!(m.popcount(), k);
        prop_assert_eq!(m.mask.len(), slots);
        let exact = ratio * slots as f64;
        prop_assert!((k as f64 - exact).abs() <= 0.5);
        prop_assert_eq!(sample_mask(kind, slots, ratio, seed).unwrap(), m);
    }

    #[test]
    fn apply_mask_touches_only_masked_rows(
        b in 1usize..3,
        l in 1usize..12,
        h in 1usize..6,
        ratio in 0.0f64..0.9,
        seed: u64,
    ) {
        let dev = Device::Cpu;
        let tokens = Tensor::randn(0f32, 1.0, (b, l, h), &dev).unwrap();
        let pos = Tensor::randn(0f32, 1.0, (l, h), &dev).unwrap();
        let token = MaskToken { embedding: Tensor::randn(0f32, 1.0, h, &dev).unwrap() };
        let masks: Vec<Vec<bool>> =
            (0..b).map(|i| sample_mask(MaskKind::TimeFrames, l, ratio, seed.wrapping_add(i as u64)).unwrap().mask).collect();
        let out = apply_mask(&tokens, &masks, &token, &pos).unwrap().to_vec3::<f32>().unwrap();
        let x = tokens.to_vec3::<f32>().unwrap();
        let p = pos.to_vec2::<f32>().unwrap();
        let q = token.embedding.to_vec1::<f32>().unwrap();
        for i in 0..b {
            for r in 0..l {
                for c in 0..h {
                    let want = if masks[i][r] { q[c] + p[r][c] } else { x[i][r][c] };
                    prop_assert_eq!(out[i][r][c].to_bits(), want.to_bits());
                }
            }
        }
    }

    #[test]
    fn motion_bytes_round_trip(
        n in 2usize..10,
        j in 1usize..6,
        rotations: bool,
        values in proptest::collection::vec(-1e4f32..1e4, 10 * 6 * 6),
        caption in "[a-z ]{0,40}",
        fps in 1.0f32..120.0,
    ) {
        let d = if rotations { 6 } else { 3 };
        let frames = Array3::from_shape_vec((n, j, d), values[..n * j * d].to_vec()).unwrap();
        let m = MotionSequence::new(frames, caption, fps).unwrap();
        let bytes = encode_motion(&m);
        let back = decode_motion(&bytes).unwrap();
        prop_assert_eq!(&back, &m);
        prop_assert_eq!(encode_motion(&back), bytes);
    }

    #[test]
    fn fid_is_symmetric_and_non_negative(
        n in 4usize..24,
        d in 1usize..4,
        a in proptest::collection::vec(-3.0f64..3.0, 24 * 3),
        b in proptest::collection::vec(-3.0f64..3.0, 24 * 3),
    ) {
        let a = Array2::from_shape_vec((n, d), a[..n * d].to_vec()).unwrap();
        let b = Array2::from_shape_vec((n, d), b[..n * d].to_vec()).unwrap();
        let ab = compute_fid(&a, &b).unwrap();
        let ba = compute_fid(&b, &a).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - ba).abs() <= 1e-6 * ab.max(1.0), "{} vs {}", ab, ba);
        prop_assert!(compute_fid(&a, &a).unwrap() < 1e-6);
    }

    #[test]
    fn run_config_toml_round_trip(
        preset in prop_oneof![Just("micro"), Just("desk"), Just("paper")],
        steps in 1usize..100_000,
        ratio in 0.0f64..0.9,
        scale in 0.0f64..10.0,
        lambda in 0.0f64..5.0,
        parts: bool,
    ) {
        let mut c = RunConfig::preset(preset).unwrap();
        c.train.total_steps = steps;
        c.train.mask_ratio = ratio;
        c.train.loss.lambda_vel = lambda;
        c.sampling.guidance_scale = scale;
        if parts {
            c.model.strategy = MaskKind::BodyParts;
        }
        let back: RunConfig = toml::from_str(&c.to_toml().unwrap()).unwrap();
        prop_assert_eq!(back, c);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 8, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn checkpoint_round_trip(seed: u64, parts: bool, rotations: bool) {
        let strategy = if parts { MaskKind::BodyParts } else { MaskKind::TimeFrames };
        let mode = if rotations { RepresentationMode::Rotations } else { RepresentationMode::Positions };
        let model = MotionDenoiser::new(ModelConfig::micro(strategy), Skeleton::toy(mode), seed, DType::F32, &Device::Cpu).unwrap();
        let ckpt = model.to_checkpoint(Some(serde_json::json!({ "step": seed % 1000 }))).unwrap();
        let bytes = ckpt.encode().unwrap();
        let back = Checkpoint::decode(&bytes).unwrap();
        prop_assert_eq!(&back, &ckpt);
        let reloaded = MotionDenoiser::from_checkpoint(&back, DType::F32, &Device::Cpu).unwrap();
        prop_assert_eq!(reloaded.to_checkpoint(back.meta.training.clone()).unwrap().encode().unwrap(), bytes);
    }
}
