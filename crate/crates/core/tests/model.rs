//! Structural probes of the two denoisers.

use candle_core::{DType, Device, Tensor};

use mmdm::denoiser::{part_token_change, ModelConfig, MotionDenoiser, Network, PARTS};
use mmdm::diffusion::Condition;
use mmdm::masking::MaskKind;
use mmdm::motion::{BodyPart, RepresentationMode, Skeleton};

fn model(strategy: MaskKind) -> MotionDenoiser {
    let cfg = ModelConfig { max_length: 8, diffusion_steps: 20, ..ModelConfig::micro(strategy) };
    MotionDenoiser::new(cfg, Skeleton::toy(RepresentationMode::Positions), 3, DType::F32, &Device::Cpu).unwrap()
}

/// Adds noise to the given joints in every frame.
fn perturb_joints(x: &Tensor, joints: &[usize]) -> Tensor {
    let (b, n, j, d) = x.dims4().unwrap();
    let mut bump = vec![0f32; b * n * j * d];
    for (i, v) in bump.iter_mut().enumerate() {
        if joints.contains(&((i / d) % j)) {
            *v = 0.5 + (i % 7) as f32 * 0.1;
        }
    }
    (x + Tensor::from_vec(bump, (b, n, j, d), &Device::Cpu).unwrap()).unwrap()
}

fn flat(t: &Tensor) -> Vec<f32> {
    t.flatten_all().unwrap().to_vec1::<f32>().unwrap()
}

#[test]
fn part_tokens_only_see_their_own_joints() {
    let m = model(MaskKind::BodyParts);
    let Network::BodyParts(net) = m.network() else { unreachable!() };
    let skel = m.skeleton();
    let x = Tensor::randn(0f32, 1.0, (2, 4, skel.joint_count(), 3), &Device::Cpu).unwrap();
    for part in BodyPart::ALL {
        let joints: Vec<usize> = (0..skel.joint_count()).filter(|&j| skel.part_of(j) == part).collect();
        let a = net.bpst_encode(&x).unwrap().part_tokens;
        let b = net.bpst_encode(&perturb_joints(&x, &joints)).unwrap().part_tokens;
        let change = part_token_change(&a, &b).unwrap();
        assert_eq!(change.len(), PARTS);
        for (k, c) in change.iter().enumerate() {
            if k == part.index() {
                assert!(*c > 0.0, "{part:?} token did not react");
            } else {
                assert_eq!(*c, 0.0, "{part:?} joints leaked into part {k}");
            }
        }
    }
}

#[test]
fn masked_frames_are_invisible_to_the_time_frames_model() {
    let m = model(MaskKind::TimeFrames);
    let x = Tensor::randn(0f32, 1.0, (1, 6, 9, 3), &Device::Cpu).unwrap();
    let masks = vec![vec![false, true, false, false, true, false]];
    let mut bump = vec![0f32; 6 * 9 * 3];
    for frame in [1, 4] {
        for v in &mut bump[frame * 27..(frame + 1) * 27] {
            *v = 2.0;
        }
    }
    let y = (&x + Tensor::from_vec(bump, (1, 6, 9, 3), &Device::Cpu).unwrap()).unwrap();
    let run = |input: &Tensor, masks: Option<&[Vec<bool>]>| flat(&m.forward(input, &[7], Condition::Null, None, masks).unwrap());
    assert_eq!(run(&x, Some(&masks)), run(&y, Some(&masks)));
    assert_ne!(run(&x, None), run(&y, None));
}

#[test]
fn masked_parts_are_invisible_to_the_body_parts_model() {
    let m = model(MaskKind::BodyParts);
    let skel = m.skeleton();
    let frames = 3;
    let x = Tensor::randn(0f32, 1.0, (1, frames, skel.joint_count(), 3), &Device::Cpu).unwrap();
    let hidden = BodyPart::RightLeg;
    let bits: Vec<bool> = BodyPart::ALL.iter().map(|&p| p == hidden).collect();
    let masks = vec![(0..frames).flat_map(|_| bits.iter().copied()).collect::<Vec<_>>()];
    let joints: Vec<usize> = (0..skel.joint_count()).filter(|&j| skel.part_of(j) == hidden).collect();
    let y = perturb_joints(&x, &joints);
    let captions = ["a person kicks".to_string()];
    let run = |input: &Tensor, masks: Option<&[Vec<bool>]>| {
        flat(&m.forward(input, &[3], Condition::Captions(&captions), None, masks).unwrap())
    };
    assert_eq!(run(&x, Some(&masks)), run(&y, Some(&masks)));
    assert_ne!(run(&x, None), run(&y, None));
}
