//! The four training losses on a clean clip and a perturbed prediction.

use candle_core::{DType, Device};
use mmdm::losses::{contacts_tensor, total_loss, LossWeights};
use mmdm::motion::{generate_synthetic_dataset, GeneratorConfig};
use mmdm::trainer::TrainingSet;

pub fn run_example() -> mmdm::Result<mmdm::losses::LossBreakdown> {
    let config = GeneratorConfig { samples_per_archetype: 1, min_len: 20, max_len: 20, ..Default::default() };
    let set = TrainingSet::new(generate_synthetic_dataset(&config, 3)?, config.skeleton())?;
    let clip = &set.motions()[0];
    let x0 = clip.to_tensor(&Device::Cpu)?.unsqueeze(0)?;
    let noisy = (&x0 + (x0.randn_like(0.0, 0.05)?))?;
    let labels = set.contacts(0);
    let contacts = contacts_tensor(&[labels], DType::F32, &Device::Cpu)?;

    let perfect = total_loss(&x0, &x0, &contacts, set.skeleton(), &LossWeights::default())?.breakdown()?;
    let off = total_loss(&x0, &noisy, &contacts, set.skeleton(), &LossWeights::default())?.breakdown()?;
    println!("identical prediction: {perfect:?}");
    println!("perturbed prediction: {off:?}");
    Ok(off)
}

#[allow(dead_code)]
fn main() -> mmdm::Result<()> {
    run_example().map(|_| ())
}
