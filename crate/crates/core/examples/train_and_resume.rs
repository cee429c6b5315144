//! Trains a micro model, checkpoints it halfway, resumes, and checks the
//! resumed run retraces the uninterrupted one.

use mmdm::denoiser::{Checkpoint, ModelConfig};
use mmdm::masking::MaskKind;
use mmdm::motion::{generate_synthetic_dataset, GeneratorConfig};
use mmdm::trainer::{train, TrainConfig, Trainer, TrainingSet};

pub fn run_example() -> mmdm::Result<bool> {
    let data = GeneratorConfig { samples_per_archetype: 4, min_len: 16, max_len: 24, ..Default::default() };
    let set = TrainingSet::new(generate_synthetic_dataset(&data, 1)?, data.skeleton())?;
    let model = ModelConfig { max_length: 24, ..ModelConfig::micro(MaskKind::TimeFrames) };
    let config = TrainConfig { batch_size: 4, total_steps: 10, seq_len: 16, learning_rate: 1e-3, ..Default::default() };

    let full = train(set.clone(), model.clone(), config.clone(), None)?;
    for r in full.log() {
        println!("step {:2} total {:.4}", r.step, r.total);
    }

    let half = train(set.clone(), model, TrainConfig { total_steps: 5, ..config }, None)?;
    let bytes = half.checkpoint()?.encode()?;
    let mut resumed = Trainer::resume(&Checkpoint::decode(&bytes)?, set, None)?;
    resumed.set_total_steps(10);
    resumed.run(None)?;
    let same = resumed.log().iter().zip(&full.log()[5..]).all(|(a, b)| a == b);
    println!("resumed trajectory identical: {same}");
    Ok(same)
}

#[allow(dead_code)]
fn main() -> mmdm::Result<()> {
    run_example().map(|_| ())
}
