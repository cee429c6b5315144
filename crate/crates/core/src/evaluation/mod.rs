//! Text-to-motion metric suite: FID, R-Precision, MM-Dist, Diversity and
//! Multimodality over a learned evaluator, with repeat statistics.

mod evaluator;
mod metrics;

pub use evaluator::{train_evaluator, EvaluatorConfig, EvaluatorEmbedder};
pub use metrics::{
    compute_fid, diversity, mm_dist, multimodality, r_precision, retrieval_rank, EIGEN_CLAMP_TOLERANCE, FID_RIDGE,
};

use std::path::Path;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::denoiser::{MotionDenoiser, SamplingConfig};
use crate::error::{Error, Result};
use crate::motion::MotionSequence;
use crate::rng::{self, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub repeats: usize,
    pub pool_size: usize,
    pub diversity_subset: usize,
    /// Test captions generated per repeat (capped at the test-set size).
    pub samples: usize,
    pub mm_prompts: usize,
    pub mm_per_prompt: usize,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            repeats: 20,
            pool_size: 32,
            diversity_subset: 30,
            samples: 64,
            mm_prompts: 4,
            mm_per_prompt: 4,
            seed: 0,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.repeats == 0 {
            problems.push("eval.repeats must be at least 1");
        }
        if self.pool_size == 0 || self.samples < self.pool_size {
            problems.push("eval.samples must be at least eval.pool_size (and pool_size >= 1)");
        }
        if self.diversity_subset == 0 {
            problems.push("eval.diversity_subset must be at least 1");
        }
        if self.mm_prompts == 0 || self.mm_per_prompt < 2 {
            problems.push("eval.mm_prompts must be >= 1 and eval.mm_per_prompt >= 2");
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::config(problems.join("; ")))
        }
    }
}

/// Mean over repeats with a normal-approximation 95% half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ci95: Option<f64>,
}

impl MetricSummary {
    pub fn from_values(values: &[f64]) -> Self {
        let r = values.len() as f64;
        let mean = values.iter().sum::<f64>() / r;
        let ci95 = (values.len() > 1).then(|| {
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (r - 1.0);
            1.96 * var.sqrt() / r.sqrt()
        });
        MetricSummary { mean, ci95 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepeatMetrics {
    pub fid: f64,
    pub r_precision: [f64; 3],
    pub mm_dist: f64,
    pub diversity: f64,
    pub multimodality: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub label: String,
    pub repeats: usize,
    pub fid: MetricSummary,
    pub r_precision_top1: MetricSummary,
    pub r_precision_top2: MetricSummary,
    pub r_precision_top3: MetricSummary,
    pub mm_dist: MetricSummary,
    pub diversity: MetricSummary,
    /// Absent for ground truth, which has one motion per caption.
    pub multimodality: Option<MetricSummary>,
    pub runs: Vec<RepeatMetrics>,
}

impl MetricsReport {
    pub fn from_runs(label: impl Into<String>, runs: Vec<RepeatMetrics>) -> Result<Self> {
        if runs.is_empty() {
            return Err(Error::invalid("no evaluation repeats"));
        }
        let col = |f: &dyn Fn(&RepeatMetrics) -> f64| MetricSummary::from_values(&runs.iter().map(f).collect::<Vec<_>>());
        let mm: Option<Vec<f64>> = runs.iter().map(|r| r.multimodality).collect();
        Ok(MetricsReport {
            label: label.into(),
            repeats: runs.len(),
            fid: col(&|r| r.fid),
            r_precision_top1: col(&|r| r.r_precision[0]),
            r_precision_top2: col(&|r| r.r_precision[1]),
            r_precision_top3: col(&|r| r.r_precision[2]),
            mm_dist: col(&|r| r.mm_dist),
            diversity: col(&|r| r.diversity),
            multimodality: mm.map(|v| MetricSummary::from_values(&v)),
            runs,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }
}

fn select_rows(x: &Array2<f64>, idx: &[usize]) -> Array2<f64> {
    x.select(ndarray::Axis(0), idx)
}

fn subset<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Vec<usize> {
    if k >= n {
        (0..n).collect()
    } else {
        let mut v = rand::seq::index::sample(rng, n, k).into_vec();
        v.sort_unstable();
        v
    }
}

fn distribution_metrics<R: Rng + ?Sized>(
    real: &Array2<f64>,
    generated: &Array2<f64>,
    text: &Array2<f64>,
    config: &EvalConfig,
    rng: &mut R,
) -> Result<(f64, [f64; 3], f64, f64)> {
    let fid = compute_fid(real, generated)?;
    let rp = r_precision(text, generated, config.pool_size, rng)?;
    let mmd = mm_dist(text, generated)?;
    let s = config.diversity_subset.min(generated.nrows() / 2);
    let div = diversity(generated, s, 1, rng)?;
    Ok((fid, rp, mmd, div))
}

/// Metrics of the ground-truth set against itself (the "Real" row).
pub fn evaluate_real(evaluator: &EvaluatorEmbedder, test: &[MotionSequence], config: &EvalConfig) -> Result<MetricsReport> {
    config.validate()?;
    let real = evaluator.embed_motions(test)?;
    let captions: Vec<String> = test.iter().map(|m| m.caption().to_string()).collect();
    let text = evaluator.embed_texts(&captions)?;
    let runs = (0..config.repeats)
        .map(|r| {
            let mut rng = rng::stream(config.seed, Stream::Evaluation, r as u64);
            let idx = subset(test.len(), config.samples, &mut rng);
            let (g, t) = (select_rows(&real, &idx), select_rows(&text, &idx));
            let (fid, r_precision, mm_dist, diversity) = distribution_metrics(&real, &g, &t, config, &mut rng)?;
            Ok(RepeatMetrics { fid, r_precision, mm_dist, diversity, multimodality: None })
        })
        .collect::<Result<Vec<_>>>()?;
    MetricsReport::from_runs("Real", runs)
}

/// Generates motions for test captions with `model` and scores them.
pub fn evaluate(
    model: &MotionDenoiser,
    evaluator: &EvaluatorEmbedder,
    test: &[MotionSequence],
    sampling: &SamplingConfig,
    config: &EvalConfig,
    label: &str,
) -> Result<MetricsReport> {
    config.validate()?;
    sampling.validate()?;
    let guidance = &sampling.guidance();
    if test.len() < config.pool_size {
        return Err(Error::invalid(format!("test set has {} motions, fewer than the pool size {}", test.len(), config.pool_size)));
    }
    let frames = sampling.frames_for(model.config());
    let fps = test[0].fps();
    let real = evaluator.embed_motions(test)?;
    let mut runs = Vec::with_capacity(config.repeats);
    for r in 0..config.repeats {
        let mut rng = rng::stream(config.seed, Stream::Evaluation, r as u64);
        let idx = subset(test.len(), config.samples, &mut rng);
        let captions: Vec<String> = idx.iter().map(|&i| test[i].caption().to_string()).collect();
        let seed = rng.random::<u64>();
        let generated = model
            .sample_motions(&captions, frames, fps, guidance, seed, sampling.inference_mask_ratio)
            .map_err(|e| Error::TrainingFailure(format!("generation failed in repeat {r}: {e}")))?;
        let g = evaluator.embed_motions(&generated)?;
        let t = evaluator.embed_texts(&captions)?;
        let (fid, r_precision, mm_dist, diversity) = distribution_metrics(&real, &g, &t, config, &mut rng)?;

        let prompts: Vec<String> = captions.iter().take(config.mm_prompts).cloned().collect();
        let repeated: Vec<String> =
            prompts.iter().flat_map(|p| std::iter::repeat_n(p.clone(), config.mm_per_prompt)).collect();
        let mm_seed = rng.random::<u64>();
        let mm_motions = model
            .sample_motions(&repeated, frames, fps, guidance, mm_seed, sampling.inference_mask_ratio)
            .map_err(|e| Error::TrainingFailure(format!("generation failed in repeat {r}: {e}")))?;
        let mm_feats = evaluator.embed_motions(&mm_motions)?;
        let groups: Vec<Array2<f64>> = (0..prompts.len())
            .map(|p| {
                let rows: Vec<usize> = (p * config.mm_per_prompt..(p + 1) * config.mm_per_prompt).collect();
                select_rows(&mm_feats, &rows)
            })
            .collect();
        let multimodality = Some(multimodality(&groups)?);
        log::info!("repeat {r}: fid {fid:.4} top1 {:.3}", r_precision[0]);
        runs.push(RepeatMetrics { fid, r_precision, mm_dist, diversity, multimodality });
    }
    MetricsReport::from_runs(label, runs)
}
