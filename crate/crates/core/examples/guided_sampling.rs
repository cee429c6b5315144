//! Briefly trains a micro model and samples with several guidance scales.

use mmdm::denoiser::ModelConfig;
use mmdm::diffusion::GuidanceConfig;
use mmdm::masking::MaskKind;
use mmdm::motion::{generate_synthetic_dataset, GeneratorConfig};
use mmdm::trainer::{train, TrainConfig, TrainingSet};

/// Largest elementwise change relative to the unguided (scale 0) sample.
pub fn run_example() -> mmdm::Result<Vec<f32>> {
    let data = GeneratorConfig { samples_per_archetype: 4, min_len: 16, max_len: 16, ..Default::default() };
    let set = TrainingSet::new(generate_synthetic_dataset(&data, 1)?, data.skeleton())?;
    let model = ModelConfig { max_length: 16, diffusion_steps: 20, ..ModelConfig::micro(MaskKind::BodyParts) };
    let config = TrainConfig { batch_size: 8, total_steps: 20, seq_len: 16, learning_rate: 2e-3, ..Default::default() };
    let trainer = train(set, model, config, None)?;
    let model = trainer.model();

    let caption = vec!["a person kicks with the right leg".to_string()];
    let mut outs = Vec::new();
    for scale in [0.0, 1.0, 2.5] {
        let guidance = GuidanceConfig { scale, condition_dropout_prob: 0.0 };
        let x = model.sample(&caption, 16, &guidance, 5, 0.0)?;
        println!("guidance {scale}: sample {:?}", x.dims());
        outs.push(x);
    }
    let mut changes = Vec::new();
    for (x, scale) in outs[1..].iter().zip([1.0, 2.5]) {
        let change = (x - &outs[0])?.abs()?.max_all()?.to_scalar::<f32>()?;
        println!("scale {scale} vs 0: max change {change:.4}");
        changes.push(change);
    }
    Ok(changes)
}

#[allow(dead_code)]
fn main() -> mmdm::Result<()> {
    run_example().map(|_| ())
}
