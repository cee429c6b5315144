//! Contrastive text-motion embedder used as the feature extractor for metrics.

use candle_core::{DType, Device, Tensor, D};
use ndarray::{Array2, Array3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::denoiser::Vocabulary;
use crate::error::{Error, Result};
use crate::motion::{sequence_positions, MotionSequence, RepresentationMode, Skeleton};
use crate::nn::{softmax_last, Linear, ParamBuilder, ParamStore};
use crate::rng::{self, Stream};
use crate::trainer::{canonicalize, Adam};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluatorConfig {
    pub hidden_dim: usize,
    pub embedding_dim: usize,
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub temperature: f64,
}

impl Default for EvaluatorConfig {
    fn default() -> Self {
        EvaluatorConfig { hidden_dim: 64, embedding_dim: 32, steps: 400, batch_size: 32, learning_rate: 3e-3, temperature: 0.1 }
    }
}

impl EvaluatorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_dim == 0 || self.embedding_dim == 0 || self.batch_size < 2 {
            return Err(Error::config("evaluator dims must be positive and batch_size >= 2"));
        }
        if !(self.learning_rate >= 0.0 && self.temperature > 0.0) {
            return Err(Error::config("evaluator learning_rate must be >= 0 and temperature > 0"));
        }
        Ok(())
    }
}

/// Motion and text encoders into a shared unit-norm embedding space.
#[derive(Debug, Clone)]
pub struct EvaluatorEmbedder {
    skeleton: Skeleton,
    vocab: Vocabulary,
    params: ParamStore,
    frame_a: Linear,
    frame_b: Linear,
    motion_out: Linear,
    words: Tensor,
    text_out: Linear,
}

/// Canonical FK positions with per-frame velocities, `(N, J·6)`.
fn motion_features(skeleton: &Skeleton, motion: &MotionSequence) -> Result<Array2<f32>> {
    let mut pos: Array3<f32> = sequence_positions(skeleton, motion)?;
    canonicalize(&mut pos, &skeleton.with_mode(RepresentationMode::Positions));
    let (n, j, _) = pos.dim();
    let fps = motion.fps();
    Ok(Array2::from_shape_fn((n, j * 6), |(f, c)| {
        let (joint, k) = (c / 6, c % 6);
        if k < 3 {
            pos[[f, joint, k]]
        } else {
            let prev = f.saturating_sub(1);
            let next = (f + 1).min(n - 1);
            // m/s, scaled down to roughly the range of the positions
            (pos[[next, joint, k - 3]] - pos[[prev, joint, k - 3]]) * fps / (next - prev) as f32 * 0.1
        }
    }))
}

impl EvaluatorEmbedder {
    pub fn new(skeleton: &Skeleton, config: &EvaluatorConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let vocab = Vocabulary::grammar();
        let (h, e) = (config.hidden_dim, config.embedding_dim);
        let width = skeleton.joint_count() * 6;
        let mut pb = ParamBuilder::new(ParamStore::new(DType::F32, Device::Cpu), rng::stream(seed, Stream::Init, 1));
        let frame_a = Linear::new(&mut pb, "eval.frame_a", width, h)?;
        let frame_b = Linear::new(&mut pb, "eval.frame_b", h, h)?;
        let motion_out = Linear::new(&mut pb, "eval.motion_out", 2 * h, e)?;
        let words = pb.normal("eval.words", &[vocab.len(), h], 1.0)?;
        let text_out = Linear::new(&mut pb, "eval.text_out", h, e)?;
        Ok(EvaluatorEmbedder {
            skeleton: skeleton.clone(),
            vocab,
            params: pb.finish(),
            frame_a,
            frame_b,
            motion_out,
            words,
            text_out,
        })
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    fn normalize(x: &Tensor) -> Result<Tensor> {
        let norm = (x.sqr()?.sum_keepdim(D::Minus1)? + 1e-12)?.sqrt()?;
        Ok(x.broadcast_div(&norm)?)
    }

    /// `feats` is `[B, N, J·6]`; returns `[B, E]`.
    fn motion_tensor(&self, feats: &Tensor) -> Result<Tensor> {
        let x = self.frame_b.forward(&self.frame_a.forward(feats)?.gelu()?)?.gelu()?;
        let pooled = Tensor::cat(&[x.mean(1)?, x.max(1)?], D::Minus1)?;
        Self::normalize(&self.motion_out.forward(&pooled)?)
    }

    fn text_tensor(&self, captions: &[String]) -> Result<Tensor> {
        let rows = captions
            .iter()
            .map(|c| {
                let mut ids = self.vocab.ids(c);
                if ids.is_empty() {
                    ids.push(0);
                }
                let idx = Tensor::from_vec(ids.clone(), ids.len(), &Device::Cpu)?;
                Ok(self.words.index_select(&idx, 0)?.mean(0)?)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::normalize(&self.text_out.forward(&Tensor::stack(&rows, 0)?)?)
    }

    pub fn embed_motions(&self, motions: &[MotionSequence]) -> Result<Array2<f64>> {
        let rows = motions
            .iter()
            .map(|m| {
                let f = motion_features(&self.skeleton, m)?;
                let t = Tensor::from_vec(f.iter().copied().collect::<Vec<_>>(), (1, f.nrows(), f.ncols()), &Device::Cpu)?;
                self.motion_tensor(&t)
            })
            .collect::<Result<Vec<_>>>()?;
        to_array(&Tensor::cat(&rows, 0)?)
    }

    pub fn embed_texts(&self, captions: &[String]) -> Result<Array2<f64>> {
        to_array(&self.text_tensor(captions)?)
    }

    /// Symmetric InfoNCE over a batch of cropped windows.
    fn batch_loss(&self, feats: &Tensor, captions: &[String], temperature: f64) -> Result<Tensor> {
        let m = self.motion_tensor(feats)?;
        let t = self.text_tensor(captions)?;
        let logits = (m.matmul(&t.t()?)? / temperature)?;
        let b = captions.len();
        // Pairs with the same caption are both positives.
        let mut target = vec![0f32; b * b];
        for i in 0..b {
            let same: Vec<usize> = (0..b).filter(|&j| captions[j] == captions[i]).collect();
            for &j in &same {
                target[i * b + j] = 1.0 / same.len() as f32;
            }
        }
        let target = Tensor::from_vec(target, (b, b), &Device::Cpu)?;
        let xent = |l: &Tensor| -> Result<Tensor> {
            let logp = softmax_last(l)?.clamp(1e-12, 1.0)?.log()?;
            Ok(((&target * logp)?.sum_all()?.neg()? / b as f64)?)
        };
        Ok(((xent(&logits)? + xent(&logits.t()?)?)? * 0.5)?)
    }
}

fn to_array(t: &Tensor) -> Result<Array2<f64>> {
    let (r, c) = t.dims2()?;
    Ok(Array2::from_shape_vec((r, c), t.to_dtype(DType::F64)?.flatten_all()?.to_vec1::<f64>()?).expect("shape"))
}

/// Trains an evaluator on `motions` and freezes it. Deterministic per seed.
pub fn train_evaluator(
    motions: &[MotionSequence],
    skeleton: &Skeleton,
    config: &EvaluatorConfig,
    seed: u64,
) -> Result<EvaluatorEmbedder> {
    if motions.len() < 2 {
        return Err(Error::invalid("evaluator training needs at least 2 motions"));
    }
    let model = EvaluatorEmbedder::new(skeleton, config, seed)?;
    let features = motions.iter().map(|m| motion_features(skeleton, m)).collect::<Result<Vec<_>>>()?;
    let mut adam = Adam::new(config.learning_rate);
    let batch = config.batch_size.min(motions.len());
    for step in 0..config.steps {
        let mut r = rng::stream(seed, Stream::Evaluation, 1_000_000 + step as u64);
        let idx = rand::seq::index::sample(&mut r, motions.len(), batch).into_vec();
        let window = idx.iter().map(|&i| features[i].nrows()).min().expect("non-empty");
        let mut data = Vec::with_capacity(batch * window * features[0].ncols());
        for &i in &idx {
            let start = r.random_range(0..=features[i].nrows() - window);
            data.extend(features[i].slice(ndarray::s![start..start + window, ..]).iter().copied());
        }
        let feats = Tensor::from_vec(data, (batch, window, features[0].ncols()), &Device::Cpu)?;
        let captions: Vec<String> = idx.iter().map(|&i| motions[i].caption().to_string()).collect();
        let loss = model.batch_loss(&feats, &captions, config.temperature)?;
        let value = loss.to_scalar::<f32>()?;
        if !value.is_finite() {
            return Err(Error::TrainingFailure(format!("evaluator loss is {value} at step {step}")));
        }
        adam.update(model.params(), &loss.backward()?)?;
    }
    let emb = model.embed_motions(motions)?;
    let spread = emb.rows().into_iter().map(|r| {
        r.iter().zip(emb.row(0).iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    });
    if spread.fold(0.0, f64::max) < 1e-4 {
        return Err(Error::TrainingFailure("evaluator collapsed: all motion embeddings coincide".into()));
    }
    Ok(model)
}
