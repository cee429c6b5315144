//! Both denoiser variants on a random batch, with and without training masks,
//! plus the body-part attention pattern of the spatial encoder.

use candle_core::{DType, Device, Tensor};
use mmdm::denoiser::{ModelConfig, MotionDenoiser, Network};
use mmdm::diffusion::Condition;
use mmdm::masking::MaskKind;
use mmdm::motion::{RepresentationMode, Skeleton};

pub fn run_example() -> mmdm::Result<Vec<usize>> {
    let skeleton = Skeleton::toy(RepresentationMode::Rotations);
    let captions = vec!["a person walks forward slowly".to_string(), "someone waves the left arm".to_string()];
    let mut counts = Vec::new();
    for strategy in [MaskKind::TimeFrames, MaskKind::BodyParts] {
        let model = MotionDenoiser::new(ModelConfig::micro(strategy), skeleton.clone(), 0, DType::F32, &Device::Cpu)?;
        let x_t = Tensor::randn(0f32, 1.0, (2, 12, skeleton.joint_count(), skeleton.feature_dim()), &Device::Cpu)?;
        let t = [10, 80];
        let mut rng = mmdm::rng::stream(0, mmdm::rng::Stream::Mask, 0);
        let masks = model.sample_token_masks(2, 12, 0.2, &mut rng)?;
        let out = model.forward(&x_t, &t, Condition::Captions(&captions), None, Some(&masks))?;
        let plain = model.forward_plain(&x_t, &t, Condition::Captions(&captions), None)?;
        let gap = (&out - &plain)?.abs()?.max_all()?.to_scalar::<f32>()?;
        println!(
            "{strategy:?}: {} parameters, {} token slots, output {:?}, masked vs plain max gap {gap:.3}",
            model.params().parameter_count(),
            model.token_slots(12),
            out.dims()
        );
        if let Network::BodyParts(net) = model.network() {
            let weights = &net.bpst_encode(&x_t)?.weights[0];
            println!("first spatial block attention: {:?}", weights.dims());
        }
        counts.push(model.params().parameter_count());
    }
    Ok(counts)
}

#[allow(dead_code)]
fn main() -> mmdm::Result<()> {
    run_example().map(|_| ())
}
