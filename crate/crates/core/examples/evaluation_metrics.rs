//! Trains the contrastive evaluator and computes the metric suite on the
//! ground-truth test split (the "Real" row).

use mmdm::evaluation::{evaluate_real, train_evaluator, EvalConfig, EvaluatorConfig};
use mmdm::motion::{generate_synthetic_dataset, GeneratorConfig};

pub fn run_example() -> mmdm::Result<mmdm::evaluation::MetricsReport> {
    let data = GeneratorConfig { samples_per_archetype: 12, min_len: 24, max_len: 32, ..Default::default() };
    let train = generate_synthetic_dataset(&data, 1)?;
    let test = generate_synthetic_dataset(&data, 2)?;
    let evaluator = train_evaluator(&train, &data.skeleton(), &EvaluatorConfig { steps: 100, ..Default::default() }, 0)?;
    let config = EvalConfig { repeats: 3, samples: 40, ..Default::default() };
    let report = evaluate_real(&evaluator, &test, &config)?;
    println!("{}", report.to_json()?);
    Ok(report)
}

#[allow(dead_code)]
fn main() -> mmdm::Result<()> {
    run_example().map(|_| ())
}
