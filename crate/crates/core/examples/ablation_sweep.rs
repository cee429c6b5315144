//! A two-variant mask-ratio sweep at toy scale, printed as a markdown table.

use mmdm::cli::{ablation_variants, cmd_ablate, RunConfig, Sweep};

pub fn run_example() -> mmdm::Result<mmdm::cli::AblationTable> {
    let dir = tempfile::tempdir().map_err(|e| mmdm::Error::io("tempdir", e))?;
    let mut base = RunConfig::preset("micro")?;
    base.train.total_steps = 5;
    base.model.diffusion_steps = 10;
    base.evaluator.steps = 30;
    base.eval.repeats = 1;
    base.paths.out = dir.path().to_path_buf();
    let variants = ablation_variants(&base, Sweep::Ratio, &[0.1, 0.4], &[]);
    let table = cmd_ablate(&base, Sweep::Ratio, &variants)?;
    print!("{}", table.to_markdown());
    Ok(table)
}

#[allow(dead_code)]
fn main() -> mmdm::Result<()> {
    run_example().map(|_| ())
}
