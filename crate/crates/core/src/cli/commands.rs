use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::denoiser::{Checkpoint, ModelConfig, MotionDenoiser};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, evaluate_real, train_evaluator, EvaluatorEmbedder, MetricSummary, MetricsReport};
use crate::motion::io::{read_motion, write_motion};
use crate::trainer::{LogRecord, Trainer, TrainingSet};

use super::config::{Dataset, RunConfig};
use super::render::{render_frames, write_frames, RenderOptions};

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: PathBuf,
    pub steps: usize,
    pub last: Option<LogRecord>,
}

/// Trains (or resumes) into `run.paths.out`.
pub fn cmd_train(run: &RunConfig, resume: Option<&Path>) -> Result<TrainOutcome> {
    run.validate()?;
    let data = run.load_data()?;
    let (trainer, path) = train_on(run, &data, resume)?;
    Ok(TrainOutcome { checkpoint: path, steps: trainer.step(), last: trainer.log().last().cloned() })
}

fn train_on(run: &RunConfig, data: &Dataset, resume: Option<&Path>) -> Result<(Trainer, PathBuf)> {
    let set = TrainingSet::new(data.train.clone(), data.skeleton.clone())?;
    let mut trainer = match resume {
        Some(path) => {
            let mut t = Trainer::resume(&Checkpoint::load(path)?, set, None)?;
            t.set_total_steps(run.train.total_steps);
            t
        }
        None => {
            let model = MotionDenoiser::new(
                run.model.clone(),
                data.skeleton.clone(),
                run.train.seed,
                candle_core::DType::F32,
                &candle_core::Device::Cpu,
            )?;
            Trainer::new(model, set, run.train.clone())?
        }
    };
    let path = trainer.run(Some(&run.paths.out))?.expect("out dir given");
    Ok((trainer, path))
}

#[derive(Debug, Clone)]
pub struct SampleRequest {
    pub checkpoint: PathBuf,
    pub caption: String,
    /// Frames to generate; defaults to `sampling.frames` or the model's `max_length`.
    pub length: Option<usize>,
    pub seed: u64,
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleOutcome {
    pub path: PathBuf,
    pub caption: String,
    pub frames: usize,
    pub joints: usize,
    pub features: usize,
    pub seed: u64,
    pub guidance_scale: f64,
    pub inference_mask_ratio: f64,
}

/// Generates one clip and writes it with its skeleton sidecar. With
/// `expected`, the checkpoint's model config must match it exactly.
pub fn cmd_sample(run: &RunConfig, req: &SampleRequest, expected: Option<&ModelConfig>) -> Result<SampleOutcome> {
    let ckpt = Checkpoint::load(&req.checkpoint)?;
    if let Some(exp) = expected {
        if *exp != ckpt.meta.model {
            return Err(Error::Incompatible(format!(
                "{} was trained with model {:?}, config asks for {:?}",
                req.checkpoint.display(),
                ckpt.meta.model,
                exp
            )));
        }
    }
    let model = MotionDenoiser::from_checkpoint(&ckpt, candle_core::DType::F32, &candle_core::Device::Cpu)?;
    let max = model.config().max_length;
    let frames = req.length.unwrap_or_else(|| run.sampling.frames_for(model.config()));
    if !(2..=max).contains(&frames) {
        return Err(Error::config(format!("--length {frames} must be in [2, {max}] for this checkpoint")));
    }
    let sampling = run.sampling;
    let motion = model
        .sample_motions(
            std::slice::from_ref(&req.caption),
            frames,
            run.data.generator.fps,
            &sampling.guidance(),
            req.seed,
            sampling.inference_mask_ratio,
        )?
        .remove(0);
    if let Some(dir) = req.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    write_motion(&req.out, &motion, model.skeleton())?;
    Ok(SampleOutcome {
        path: req.out.clone(),
        caption: req.caption.clone(),
        frames,
        joints: motion.joint_count(),
        features: motion.feature_dim(),
        seed: req.seed,
        guidance_scale: sampling.guidance_scale,
        inference_mask_ratio: sampling.inference_mask_ratio,
    })
}

/// The evaluator used by `evaluate` and `ablate`: trained on the train split
/// with `eval.seed`, so every command with the same config sees the same one.
pub fn build_evaluator(run: &RunConfig, data: &Dataset) -> Result<EvaluatorEmbedder> {
    train_evaluator(&data.train, &data.skeleton, &run.evaluator, run.eval.seed)
}

/// Scores a checkpoint, or the test split itself when `checkpoint` is `None`.
pub fn cmd_evaluate(run: &RunConfig, checkpoint: Option<&Path>, label: &str) -> Result<MetricsReport> {
    run.validate()?;
    let data = run.load_data()?;
    let evaluator = build_evaluator(run, &data)?;
    match checkpoint {
        None => evaluate_real(&evaluator, &data.test, &run.eval),
        Some(path) => {
            let model = MotionDenoiser::load(path)?;
            evaluate(&model, &evaluator, &data.test, &run.sampling, &run.eval, label)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Sweep {
    /// Training mask ratio.
    Ratio,
    /// Encoder and decoder depth.
    Arch,
}

pub const RATIO_GRID: [f64; 4] = [0.1, 0.2, 0.3, 0.4];
pub const ARCH_GRID: [(usize, usize); 4] = [(4, 2), (6, 2), (8, 4), (12, 4)];

#[derive(Debug, Clone)]
pub struct Variant {
    pub label: String,
    pub slug: String,
    pub config: RunConfig,
}

/// One run directory per variant under `base.paths.out`.
pub fn ablation_variants(base: &RunConfig, sweep: Sweep, ratios: &[f64], archs: &[(usize, usize)]) -> Vec<Variant> {
    let make = |label: String, slug: String, edit: &dyn Fn(&mut RunConfig)| {
        let mut config = base.clone();
        edit(&mut config);
        config.paths.out = base.paths.out.join(&slug);
        Variant { label, slug, config }
    };
    match sweep {
        Sweep::Ratio => ratios
            .iter()
            .map(|&r| make(format!("{:.0}%", r * 100.0), format!("ratio_{r:.2}"), &|c| c.train.mask_ratio = r))
            .collect(),
        Sweep::Arch => archs
            .iter()
            .map(|&(e, d)| {
                make(format!("{e:02} Encoder+{d} Decoder"), format!("arch_{e}x{d}"), &|c| {
                    c.model.encoder_layers = e;
                    c.model.decoder_layers = d;
                })
            })
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub label: String,
    pub mask_ratio: f64,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub report: Option<MetricsReport>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub sweep: Sweep,
    pub rows: Vec<AblationRow>,
}

pub const TABLE_COLUMNS: [&str; 5] = ["FID", "Top-3 R-Precision", "MM-D", "Div", "MM"];

fn cell(m: &MetricSummary) -> String {
    match m.ci95 {
        Some(ci) => format!("{:.3} ± {ci:.3}", m.mean),
        None => format!("{:.3}", m.mean),
    }
}

impl AblationTable {
    pub fn to_markdown(&self) -> String {
        let head = match self.sweep {
            Sweep::Ratio => "Mask ratio",
            Sweep::Arch => "Architecture",
        };
        let mut s = format!("| {head} | {} |\n|---|{}\n", TABLE_COLUMNS.join(" | "), "---|".repeat(TABLE_COLUMNS.len()));
        for row in &self.rows {
            match (&row.report, &row.error) {
                (Some(r), _) => {
                    let mm = r.multimodality.as_ref().map(cell).unwrap_or_else(|| "-".into());
                    let cells = [cell(&r.fid), cell(&r.r_precision_top3), cell(&r.mm_dist), cell(&r.diversity), mm];
                    let _ = writeln!(s, "| {} | {} |", row.label, cells.join(" | "));
                }
                (None, err) => {
                    let msg = err.as_deref().unwrap_or("no result").replace('|', "/");
                    let _ = writeln!(s, "| {} | failed: {msg} |{}", row.label, " |".repeat(TABLE_COLUMNS.len() - 1));
                }
            }
        }
        s
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Writes `ablation_<sweep>.md` and `.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let stem = match self.sweep {
            Sweep::Ratio => "ablation_ratio",
            Sweep::Arch => "ablation_arch",
        };
        let (md, json) = (dir.join(format!("{stem}.md")), dir.join(format!("{stem}.json")));
        std::fs::write(&md, self.to_markdown()).map_err(|e| Error::io(&md, e))?;
        std::fs::write(&json, self.to_json()?).map_err(|e| Error::io(&json, e))?;
        Ok((md, json))
    }
}

/// Trains and evaluates every variant with the shared data, evaluator and
/// seeds. A failing variant is recorded in its row and the sweep continues.
pub fn cmd_ablate(base: &RunConfig, sweep: Sweep, variants: &[Variant]) -> Result<AblationTable> {
    base.validate()?;
    let data = base.load_data()?;
    let evaluator = build_evaluator(base, &data)?;
    let rows = variants
        .iter()
        .map(|v| {
            log::info!("variant {}", v.label);
            let outcome = v.config.validate().and_then(|()| {
                let (trainer, _) = train_on(&v.config, &data, None)?;
                evaluate(trainer.model(), &evaluator, &data.test, &v.config.sampling, &v.config.eval, &v.label)
            });
            let (report, error) = match outcome {
                Ok(r) => (Some(r), None),
                Err(e) => {
                    log::error!("variant {} failed: {e}", v.label);
                    (None, Some(e.to_string()))
                }
            };
            AblationRow {
                label: v.label.clone(),
                mask_ratio: v.config.train.mask_ratio,
                encoder_layers: v.config.model.encoder_layers,
                decoder_layers: v.config.model.decoder_layers,
                report,
                error,
            }
        })
        .collect();
    Ok(AblationTable { sweep, rows })
}

/// Renders a `.mmot` file (with its skeleton sidecar) to one PPM per frame.
pub fn cmd_render(input: &Path, out_dir: &Path, opts: &RenderOptions) -> Result<Vec<PathBuf>> {
    let (motion, skeleton) = read_motion(input)?;
    write_frames(&render_frames(&motion, &skeleton, opts)?, out_dir)
}

/// Writes the configured synthetic corpus as `train/` and `test/` clip directories.
pub fn cmd_generate(run: &RunConfig, out_dir: &Path) -> Result<(usize, usize)> {
    let data = run.load_data()?;
    for (split, motions) in [("train", &data.train), ("test", &data.test)] {
        let dir = out_dir.join(split);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for (i, m) in motions.iter().enumerate() {
            write_motion(&dir.join(format!("{i:05}.mmot")), m, &data.skeleton)?;
        }
    }
    Ok((data.train.len(), data.test.len()))
}
