//! Training loop: crop, noise, mask, drop the condition, predict `x̂₀`,
//! score with the combined loss, and take one Adam step.
//!
//! All randomness of step `s` comes from streams keyed by `(seed, purpose, s)`,
//! so a checkpoint holding weights, Adam moments and `s` resumes exactly.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use candle_core::backprop::GradStore;
use candle_core::{DType, Device, Tensor};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::denoiser::{Checkpoint, MotionDenoiser, NamedArray};
use crate::diffusion::{q_sample, Condition, NoiseSchedule};
use crate::error::{Error, Result};
use crate::losses::{contacts_tensor, total_loss, LossBreakdown, LossTerms, LossWeights};
use crate::motion::{
    default_speed_threshold, detect_foot_contact, sequence_positions, FootContactLabels, MotionSequence,
    RepresentationMode, Skeleton,
};
use crate::nn::ParamStore;
use crate::rng::{self, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub total_steps: usize,
    /// Longest training window; batches use the shortest clip if it is shorter.
    pub seq_len: usize,
    pub mask_ratio: f64,
    pub condition_dropout_prob: f64,
    pub seed: u64,
    /// Steps between checkpoints; 0 writes only the final one.
    pub checkpoint_interval: usize,
    pub loss: LossWeights,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-4,
            batch_size: 16,
            total_steps: 5000,
            seq_len: 32,
            mask_ratio: 0.2,
            condition_dropout_prob: 0.1,
            seed: 0,
            checkpoint_interval: 1000,
            loss: LossWeights::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            problems.push(format!("train.learning_rate must be >= 0, got {}", self.learning_rate));
        }
        if self.batch_size == 0 {
            problems.push("train.batch_size must be at least 1".to_string());
        }
        if self.seq_len < 2 {
            problems.push("train.seq_len must be at least 2".to_string());
        }
        if !(0.0..1.0).contains(&self.mask_ratio) {
            problems.push(format!("train.mask_ratio must be in [0, 1), got {}", self.mask_ratio));
        }
        if !(0.0..1.0).contains(&self.condition_dropout_prob) {
            problems.push(format!(
                "train.condition_dropout_prob must be in [0, 1), got {}",
                self.condition_dropout_prob
            ));
        }
        if let Err(e) = self.loss.validate() {
            problems.push(e.to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::config(problems.join("; ")))
        }
    }
}

/// Motions with ground-truth foot contacts, checked against one skeleton.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    skeleton: Skeleton,
    motions: Vec<MotionSequence>,
    contacts: Vec<FootContactLabels>,
}

impl TrainingSet {
    pub fn new(motions: Vec<MotionSequence>, skeleton: Skeleton) -> Result<Self> {
        if motions.is_empty() {
            return Err(Error::invalid("training set is empty"));
        }
        let contacts = motions
            .iter()
            .map(|m| {
                let pos = sequence_positions(&skeleton, m)?;
                detect_foot_contact(&skeleton, &pos, m.fps(), default_speed_threshold(m.fps()))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TrainingSet { skeleton, motions, contacts })
    }

    pub fn len(&self) -> usize {
        self.motions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.motions.is_empty()
    }

    pub fn skeleton(&self) -> &Skeleton {
        &self.skeleton
    }

    pub fn motions(&self) -> &[MotionSequence] {
        &self.motions
    }

    /// Ground-truth foot contacts of clip `i`.
    pub fn contacts(&self, i: usize) -> &FootContactLabels {
        &self.contacts[i]
    }

    pub fn shortest(&self) -> usize {
        self.motions.iter().map(MotionSequence::len).min().unwrap_or(0)
    }
}

/// Moves the first frame's root to the origin in the ground plane (x, z).
pub fn canonicalize(frames: &mut ndarray::Array3<f32>, skeleton: &Skeleton) {
    match skeleton.mode() {
        RepresentationMode::Positions => {
            let (x, z) = (frames[[0, 0, 0]], frames[[0, 0, 2]]);
            for mut joint in frames.rows_mut() {
                joint[0] -= x;
                joint[2] -= z;
            }
        }
        RepresentationMode::Rotations => {
            let (x, z) = (frames[[0, 0, 3]], frames[[0, 0, 5]]);
            for n in 0..frames.shape()[0] {
                frames[[n, 0, 3]] -= x;
                frames[[n, 0, 5]] -= z;
            }
        }
    }
}

/// Everything random about one training step, drawn up front.
#[derive(Debug, Clone)]
pub struct PreparedBatch {
    /// `[B, L, J, D]`
    pub x0: Tensor,
    pub captions: Vec<String>,
    /// `[B, L−1, F]`
    pub contacts: Tensor,
    pub t: Vec<usize>,
    pub noise: Tensor,
    pub masks: Vec<Vec<bool>>,
    pub drop: Vec<bool>,
}

/// Dataset indices for `step`: consecutive slices of per-epoch shuffles.
pub fn batch_indices(len: usize, batch: usize, seed: u64, step: usize) -> Vec<usize> {
    let mut cache: Option<(usize, Vec<usize>)> = None;
    (0..batch)
        .map(|i| {
            let flat = step * batch + i;
            let (epoch, within) = (flat / len, flat % len);
            if cache.as_ref().map(|c| c.0) != Some(epoch) {
                let mut perm: Vec<usize> = (0..len).collect();
                perm.shuffle(&mut rng::stream(seed, Stream::Shuffle, epoch as u64));
                cache = Some((epoch, perm));
            }
            cache.as_ref().expect("filled above").1[within]
        })
        .collect()
}

pub fn prepare_batch(
    model: &MotionDenoiser,
    set: &TrainingSet,
    config: &TrainConfig,
    step: usize,
) -> Result<PreparedBatch> {
    let seed = config.seed;
    let idx = batch_indices(set.len(), config.batch_size, seed, step);
    let window = idx.iter().map(|&i| set.motions[i].len()).min().expect("batch is non-empty").min(config.seq_len);
    let mut crop = rng::stream(seed, Stream::Crop, step as u64);
    let mut frames = Vec::with_capacity(idx.len());
    let mut contacts = Vec::with_capacity(idx.len());
    let mut captions = Vec::with_capacity(idx.len());
    for &i in &idx {
        let m = &set.motions[i];
        let start = crop.random_range(0..=m.len() - window);
        let mut w = m.window(start, window)?.frames().clone();
        canonicalize(&mut w, &set.skeleton);
        frames.extend(w.iter().copied());
        let rows = set.contacts[i].contacts().slice(ndarray::s![start..start + window - 1, ..]).to_owned();
        contacts.push(FootContactLabels::new(rows)?);
        captions.push(m.caption().to_string());
    }
    let (b, j, d) = (idx.len(), set.skeleton.joint_count(), set.skeleton.feature_dim());
    let (dtype, device) = (model.dtype(), model.device().clone());
    let x0 = Tensor::from_vec(frames, (b, window, j, d), &device)?.to_dtype(dtype)?;
    let contacts = contacts_tensor(&contacts.iter().collect::<Vec<_>>(), dtype, &device)?;
    let steps = model.config().diffusion_steps;
    let mut tr = rng::stream(seed, Stream::Timestep, step as u64);
    let t = (0..b).map(|_| tr.random_range(0..steps)).collect();
    let noise = rng::gaussian_vec(&mut rng::stream(seed, Stream::Noise, step as u64), b * window * j * d);
    let noise = Tensor::from_vec(noise, (b, window, j, d), &device)?.to_dtype(dtype)?;
    let masks = model.sample_token_masks(b, window, config.mask_ratio, &mut rng::stream(seed, Stream::Mask, step as u64))?;
    let mut dr = rng::stream(seed, Stream::Dropout, step as u64);
    let drop = (0..b).map(|_| dr.random::<f64>() < config.condition_dropout_prob).collect();
    Ok(PreparedBatch { x0, captions, contacts, t, noise, masks, drop })
}

pub fn compute_loss(
    model: &MotionDenoiser,
    batch: &PreparedBatch,
    schedule: &NoiseSchedule,
    skeleton: &Skeleton,
    weights: &LossWeights,
) -> Result<LossTerms> {
    let x_t = q_sample(&batch.x0, &batch.t, &batch.noise, schedule)?;
    let x0_hat = model.forward(&x_t, &batch.t, Condition::Captions(&batch.captions), Some(&batch.drop), Some(&batch.masks))?;
    total_loss(&batch.x0, &x0_hat, &batch.contacts, skeleton, weights)
}

/// Adam with bias correction; moments are kept per parameter name.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    steps: u64,
    m: BTreeMap<String, Tensor>,
    v: BTreeMap<String, Tensor>,
}

impl Adam {
    pub fn new(learning_rate: f64) -> Self {
        Adam { learning_rate, beta1: 0.9, beta2: 0.999, eps: 1e-8, steps: 0, m: BTreeMap::new(), v: BTreeMap::new() }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Parameters without a gradient are left untouched.
    pub fn update(&mut self, params: &ParamStore, grads: &GradStore) -> Result<()> {
        self.steps += 1;
        let c1 = 1.0 - self.beta1.powi(self.steps as i32);
        let c2 = 1.0 - self.beta2.powi(self.steps as i32);
        for (name, var) in params.iter() {
            let Some(g) = grads.get(var.as_tensor()) else { continue };
            // Gradients carry their op graph; detaching keeps the moments from
            // holding every previous step's graph alive.
            let g = &g.detach();
            let m = match self.m.get(name) {
                Some(m) => ((m * self.beta1)? + (g * (1.0 - self.beta1))?)?,
                None => (g * (1.0 - self.beta1))?,
            };
            let v = match self.v.get(name) {
                Some(v) => ((v * self.beta2)? + (g.sqr()? * (1.0 - self.beta2))?)?,
                None => (g.sqr()? * (1.0 - self.beta2))?,
            };
            if self.learning_rate != 0.0 {
                let step = ((&m / c1)? / ((&v / c2)?.sqrt()? + self.eps)?)?;
                var.set(&(var.as_tensor() - (step * self.learning_rate)?)?)?;
            }
            self.m.insert(name.clone(), m.detach());
            self.v.insert(name.clone(), v.detach());
        }
        Ok(())
    }

    fn arrays(&self) -> Result<Vec<NamedArray>> {
        let mut out = Vec::new();
        for (prefix, map) in [("adam.m.", &self.m), ("adam.v.", &self.v)] {
            for (name, t) in map {
                out.push(NamedArray::from_tensor(&format!("{prefix}{name}"), t)?);
            }
        }
        Ok(out)
    }

    fn restore(learning_rate: f64, steps: u64, arrays: &[NamedArray], dtype: DType, device: &Device) -> Result<Self> {
        let mut adam = Adam::new(learning_rate);
        adam.steps = steps;
        for a in arrays {
            let target = if let Some(name) = a.name.strip_prefix("adam.m.") {
                Some((&mut adam.m, name))
            } else {
                a.name.strip_prefix("adam.v.").map(|name| (&mut adam.v, name))
            };
            if let Some((map, name)) = target {
                map.insert(name.to_string(), a.to_tensor(device)?.to_dtype(dtype)?);
            }
        }
        Ok(adam)
    }
}

/// One structured log line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub step: usize,
    pub simple: f64,
    pub pos: f64,
    pub foot: f64,
    pub vel: f64,
    pub total: f64,
}

impl LogRecord {
    fn new(step: usize, b: &LossBreakdown) -> Self {
        LogRecord { step, simple: b.simple, pos: b.pos, foot: b.foot, vel: b.vel, total: b.total }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TrainingState {
    step: usize,
    adam_steps: u64,
    config: TrainConfig,
}

pub struct Trainer {
    model: MotionDenoiser,
    set: TrainingSet,
    config: TrainConfig,
    schedule: NoiseSchedule,
    optimizer: Adam,
    step: usize,
    log: Vec<LogRecord>,
}

impl Trainer {
    pub fn new(model: MotionDenoiser, set: TrainingSet, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        if set.skeleton.joint_count() != model.skeleton().joint_count()
            || set.skeleton.feature_dim() != model.skeleton().feature_dim()
        {
            return Err(Error::invalid("training set skeleton does not match the model"));
        }
        if set.shortest() < 2 {
            return Err(Error::invalid("training clips need at least 2 frames"));
        }
        if config.seq_len.min(set.shortest()) > model.config().max_length {
            return Err(Error::config(format!(
                "train.seq_len {} exceeds model.max_length {}",
                config.seq_len,
                model.config().max_length
            )));
        }
        let schedule = NoiseSchedule::cosine(model.config().diffusion_steps)?;
        let optimizer = Adam::new(config.learning_rate);
        Ok(Trainer { model, set, config, schedule, optimizer, step: 0, log: Vec::new() })
    }

    /// Restores weights, Adam moments and the step counter. Training continues
    /// with the checkpoint's own config unless `config` overrides it; only
    /// `total_steps` and `checkpoint_interval` may differ for an exact resume.
    pub fn resume(ckpt: &Checkpoint, set: TrainingSet, config: Option<TrainConfig>) -> Result<Self> {
        let state: TrainingState = serde_json::from_value(
            ckpt.meta.training.clone().ok_or_else(|| Error::Incompatible("checkpoint has no training state".into()))?,
        )
        .map_err(|e| Error::Incompatible(format!("training state: {e}")))?;
        let model = MotionDenoiser::from_checkpoint(ckpt, DType::F32, &Device::Cpu)?;
        let config = config.unwrap_or(state.config);
        let mut trainer = Trainer::new(model, set, config)?;
        trainer.optimizer =
            Adam::restore(trainer.config.learning_rate, state.adam_steps, &ckpt.arrays, DType::F32, &Device::Cpu)?;
        trainer.step = state.step;
        Ok(trainer)
    }

    pub fn model(&self) -> &MotionDenoiser {
        &self.model
    }

    pub fn into_model(self) -> MotionDenoiser {
        self.model
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn log(&self) -> &[LogRecord] {
        &self.log
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    /// Extends or shortens the run; used when resuming with a new step budget.
    pub fn set_total_steps(&mut self, steps: usize) {
        self.config.total_steps = steps;
    }

    pub fn training_set(&self) -> &TrainingSet {
        &self.set
    }

    pub fn train_step(&mut self) -> Result<LossBreakdown> {
        let batch = prepare_batch(&self.model, &self.set, &self.config, self.step)?;
        let terms = compute_loss(&self.model, &batch, &self.schedule, &self.set.skeleton, &self.config.loss)?;
        let breakdown = terms.breakdown()?;
        if !breakdown.is_finite() {
            return Err(Error::TrainingFailure(format!(
                "non-finite loss at step {}: {breakdown:?}; timesteps {:?}, dropped {:?}",
                self.step, batch.t, batch.drop
            )));
        }
        let grads = terms.total.backward()?;
        self.optimizer.update(self.model.params(), &grads)?;
        self.step += 1;
        self.log.push(LogRecord::new(self.step, &breakdown));
        Ok(breakdown)
    }

    pub fn checkpoint(&self) -> Result<Checkpoint> {
        let state = TrainingState { step: self.step, adam_steps: self.optimizer.steps, config: self.config.clone() };
        let mut ckpt = self.model.to_checkpoint(Some(serde_json::to_value(&state)?))?;
        ckpt.arrays.extend(self.optimizer.arrays()?);
        Ok(ckpt)
    }

    /// Trains until `total_steps`. With `out_dir`, appends the JSONL log and
    /// writes `checkpoint_<step>.mmck` every interval plus `final.mmck`.
    pub fn run(&mut self, out_dir: Option<&Path>) -> Result<Option<PathBuf>> {
        let mut log_file = match out_dir {
            Some(dir) => {
                fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
                let path = dir.join("train_log.jsonl");
                Some((OpenOptions::new().create(true).append(true).open(&path).map_err(|e| Error::io(&path, e))?, path))
            }
            None => None,
        };
        while self.step < self.config.total_steps {
            let breakdown = match self.train_step() {
                Ok(b) => b,
                Err(e) => {
                    if let (Some(dir), Error::TrainingFailure(_)) = (out_dir, &e) {
                        let snapshot = dir.join(format!("failure_step_{:06}.mmck", self.step));
                        self.checkpoint()?.save(&snapshot)?;
                        log::error!("diagnostic snapshot written to {}", snapshot.display());
                    }
                    return Err(e);
                }
            };
            if let Some((file, path)) = log_file.as_mut() {
                write_record(file, path, &LogRecord::new(self.step, &breakdown))?;
            }
            if self.step.is_multiple_of(100) || self.step == 1 {
                log::info!("step {} total {:.5} simple {:.5}", self.step, breakdown.total, breakdown.simple);
            }
            if let Some(dir) = out_dir {
                if self.config.checkpoint_interval > 0 && self.step.is_multiple_of(self.config.checkpoint_interval) {
                    self.checkpoint()?.save(&dir.join(format!("checkpoint_{:06}.mmck", self.step)))?;
                }
            }
        }
        match out_dir {
            Some(dir) => {
                let path = dir.join("final.mmck");
                self.checkpoint()?.save(&path)?;
                Ok(Some(path))
            }
            None => Ok(None),
        }
    }
}

fn write_record(file: &mut File, path: &Path, record: &LogRecord) -> Result<()> {
    let line = serde_json::to_string(record)?;
    writeln!(file, "{line}").map_err(|e| Error::io(path, e))
}

/// Trains a fresh model from `seed` for `config.total_steps` steps.
pub fn train(
    set: TrainingSet,
    model_config: crate::denoiser::ModelConfig,
    config: TrainConfig,
    out_dir: Option<&Path>,
) -> Result<Trainer> {
    let model = MotionDenoiser::new(model_config, set.skeleton.clone(), config.seed, DType::F32, &Device::Cpu)?;
    let mut trainer = Trainer::new(model, set, config)?;
    trainer.run(out_dir)?;
    Ok(trainer)
}
