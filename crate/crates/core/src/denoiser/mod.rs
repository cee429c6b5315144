//! Masked motion denoisers: the time-frame encoder/decoder and the body-part
//! pipeline, both predicting `x̂₀` under a prepended condition token.

mod body_parts;
mod checkpoint;
mod config;
mod text;
mod time_frames;

pub use body_parts::{part_token_change, BodyPartsNet, BpstOutput, PARTS};
pub use checkpoint::{Checkpoint, CheckpointMeta, NamedArray, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{ModelConfig, SamplingConfig};
pub use text::{cosine_similarity, ConditionEmbedding, TextEncoder, Vocabulary, OOV};
pub use time_frames::TimeFramesNet;

use std::path::Path;

use candle_core::{DType, Device, Tensor};
use rand::Rng;

use crate::diffusion::{p_sample_loop, Condition, GuidanceConfig, NoiseSchedule, X0Predictor};
use crate::error::{Error, Result};
use crate::masking::{expand_bodypart_mask, sample_mask_with, MaskKind, MaskToken};
use crate::motion::{tensor_to_array3, MotionSequence, Skeleton};
use crate::nn::{sinusoidal_embedding, Linear, ParamBuilder, ParamStore};
use crate::rng::{self, Stream};

#[derive(Debug, Clone)]
pub enum Network {
    TimeFrames(TimeFramesNet),
    BodyParts(BodyPartsNet),
}

#[derive(Debug, Clone)]
pub struct MotionDenoiser {
    config: ModelConfig,
    skeleton: Skeleton,
    params: ParamStore,
    text: TextEncoder,
    cond_in: Linear,
    cond_out: Linear,
    mask_token: MaskToken,
    network: Network,
}

impl MotionDenoiser {
    pub fn new(config: ModelConfig, skeleton: Skeleton, seed: u64, dtype: DType, device: &Device) -> Result<Self> {
        config.validate()?;
        let mut pb = ParamBuilder::new(ParamStore::new(dtype, device.clone()), rng::stream(seed, Stream::Init, 0));
        let h = config.hidden_dim;
        let text = TextEncoder::new(&mut pb, "text", Vocabulary::grammar(), h)?;
        let cond_in = Linear::new(&mut pb, "cond.in", h, h)?;
        let cond_out = Linear::new(&mut pb, "cond.out", h, h)?;
        let mask_token = MaskToken { embedding: pb.normal("mask_token", &[h], 0.02)? };
        let network = match config.strategy {
            MaskKind::TimeFrames => Network::TimeFrames(TimeFramesNet::new(
                &mut pb,
                &config,
                skeleton.joint_count(),
                skeleton.feature_dim(),
            )?),
            MaskKind::BodyParts => Network::BodyParts(BodyPartsNet::new(&mut pb, &config, &skeleton)?),
        };
        Ok(MotionDenoiser { config, skeleton, params: pb.finish(), text, cond_in, cond_out, mask_token, network })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn skeleton(&self) -> &Skeleton {
        &self.skeleton
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn text_encoder(&self) -> &TextEncoder {
        &self.text
    }

    pub fn mask_token(&self) -> &MaskToken {
        &self.mask_token
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn dtype(&self) -> DType {
        self.params.dtype()
    }

    pub fn device(&self) -> &Device {
        self.params.device()
    }

    /// Token slots a mask covers for a clip of `frames` frames.
    pub fn token_slots(&self, frames: usize) -> usize {
        match self.config.strategy {
            MaskKind::TimeFrames => frames,
            MaskKind::BodyParts => frames * PARTS,
        }
    }

    /// One mask per batch element. Body-part masks choose parts once per clip
    /// and repeat them on every frame.
    pub fn sample_token_masks<R: Rng + ?Sized>(
        &self,
        batch: usize,
        frames: usize,
        ratio: f64,
        rng: &mut R,
    ) -> Result<Vec<Vec<bool>>> {
        (0..batch)
            .map(|_| match self.config.strategy {
                MaskKind::TimeFrames => Ok(sample_mask_with(MaskKind::TimeFrames, frames, ratio, rng)?.mask),
                MaskKind::BodyParts => {
                    let bits = sample_mask_with(MaskKind::BodyParts, PARTS, ratio, rng)?.mask;
                    let partition = match &self.network {
                        Network::BodyParts(net) => net.partition(),
                        Network::TimeFrames(_) => unreachable!("strategy and network agree"),
                    };
                    expand_bodypart_mask(&bits, partition, frames)
                }
            })
            .collect()
    }

    /// Text vectors `[B, H]`; `drop[i]` forces the null condition for element `i`.
    pub fn text_vectors(&self, condition: Condition<'_>, drop: Option<&[bool]>, batch: usize) -> Result<Tensor> {
        match condition {
            Condition::Null => self.text.null_batch(batch),
            Condition::Captions(captions) => {
                if captions.len() != batch {
                    return Err(Error::invalid(format!("{} captions for a batch of {batch}", captions.len())));
                }
                let keep = vec![false; batch];
                let drop = drop.unwrap_or(&keep);
                if drop.len() != batch {
                    return Err(Error::invalid("condition dropout flags do not match the batch"));
                }
                self.text.encode_batch(captions, drop)
            }
        }
    }

    /// `[B, 1, H]`: text vector plus timestep embedding, through a GELU MLP.
    pub fn condition_token(&self, text: &Tensor, t: &[usize]) -> Result<Tensor> {
        let h = self.config.hidden_dim;
        let steps: Vec<usize> = t.iter().map(|&s| s + 1).collect();
        let time = Tensor::from_vec(sinusoidal_embedding(&steps, h), (t.len(), h), self.device())?.to_dtype(self.dtype())?;
        let x = (text + time)?;
        Ok(self.cond_out.forward(&self.cond_in.forward(&x)?.gelu()?)?.unsqueeze(1)?)
    }

    fn check_steps(&self, x_t: &Tensor, t: &[usize]) -> Result<usize> {
        let b = x_t.dim(0)?;
        if t.len() != b {
            return Err(Error::invalid(format!("{} timesteps for a batch of {b}", t.len())));
        }
        if let Some(&bad) = t.iter().find(|&&s| s >= self.config.diffusion_steps) {
            return Err(Error::invalid(format!("timestep {bad} outside [0, {})", self.config.diffusion_steps)));
        }
        Ok(b)
    }

    /// Full masked pipeline. `masks` of `None` means nothing is masked.
    pub fn forward(
        &self,
        x_t: &Tensor,
        t: &[usize],
        condition: Condition<'_>,
        drop: Option<&[bool]>,
        masks: Option<&[Vec<bool>]>,
    ) -> Result<Tensor> {
        let b = self.check_steps(x_t, t)?;
        let cond = self.condition_token(&self.text_vectors(condition, drop, b)?, t)?;
        let frames = x_t.dim(1)?;
        let none;
        let masks = match masks {
            Some(m) => m,
            None => {
                none = vec![vec![false; self.token_slots(frames)]; b];
                &none
            }
        };
        match &self.network {
            Network::TimeFrames(net) => net.forward(x_t, &cond, masks, &self.mask_token),
            Network::BodyParts(net) => net.forward(x_t, &cond, masks, &self.mask_token),
        }
    }

    /// Reference path without any masking operations.
    pub fn forward_plain(&self, x_t: &Tensor, t: &[usize], condition: Condition<'_>, drop: Option<&[bool]>) -> Result<Tensor> {
        let b = self.check_steps(x_t, t)?;
        let cond = self.condition_token(&self.text_vectors(condition, drop, b)?, t)?;
        match &self.network {
            Network::TimeFrames(net) => net.forward_plain(x_t, &cond),
            Network::BodyParts(net) => net.forward_plain(x_t, &cond),
        }
    }

    /// Guided ancestral sampling, `[B, frames, J, D]` for one caption each.
    /// A positive `inference_mask_ratio` fixes one random mask for the whole trajectory.
    pub fn sample(
        &self,
        captions: &[String],
        frames: usize,
        guidance: &GuidanceConfig,
        seed: u64,
        inference_mask_ratio: f64,
    ) -> Result<Tensor> {
        if frames < 2 || frames > self.config.max_length {
            return Err(Error::invalid(format!("length {frames} outside [2, {}]", self.config.max_length)));
        }
        let schedule = NoiseSchedule::cosine(self.config.diffusion_steps)?;
        let shape = [captions.len(), frames, self.skeleton.joint_count(), self.skeleton.feature_dim()];
        let cond = Condition::Captions(captions);
        if inference_mask_ratio > 0.0 {
            let mut r = rng::stream(seed, Stream::Mask, u64::MAX);
            let masks = self.sample_token_masks(captions.len(), frames, inference_mask_ratio, &mut r)?;
            let masked = MaskedInference { model: self, masks };
            p_sample_loop(&masked, cond, &shape, &schedule, guidance, seed, self.device(), self.dtype())
        } else {
            p_sample_loop(self, cond, &shape, &schedule, guidance, seed, self.device(), self.dtype())
        }
    }

    /// [`MotionDenoiser::sample`] split into clips.
    pub fn sample_motions(
        &self,
        captions: &[String],
        frames: usize,
        fps: f32,
        guidance: &GuidanceConfig,
        seed: u64,
        inference_mask_ratio: f64,
    ) -> Result<Vec<MotionSequence>> {
        let x = self.sample(captions, frames, guidance, seed, inference_mask_ratio)?;
        captions
            .iter()
            .enumerate()
            .map(|(i, c)| MotionSequence::new(tensor_to_array3(&x.get(i)?)?, c.clone(), fps))
            .collect()
    }

    pub fn to_checkpoint(&self, training: Option<serde_json::Value>) -> Result<Checkpoint> {
        let arrays = self
            .params
            .iter()
            .map(|(name, var)| NamedArray::from_tensor(name, var.as_tensor()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Checkpoint {
            meta: CheckpointMeta {
                model: self.config.clone(),
                skeleton: serde_json::from_str(&self.skeleton.to_json())?,
                vocabulary: self.text.vocabulary().words().to_vec(),
                training,
            },
            arrays,
        })
    }

    /// Rebuilds the model described by `ckpt` and loads its weights. Arrays
    /// whose names are not parameters (optimizer state) are ignored.
    pub fn from_checkpoint(ckpt: &Checkpoint, dtype: DType, device: &Device) -> Result<Self> {
        let skeleton = Skeleton::from_json(&ckpt.meta.skeleton.to_string())?;
        let model = MotionDenoiser::new(ckpt.meta.model.clone(), skeleton, 0, dtype, device)?;
        if ckpt.meta.vocabulary != model.text.vocabulary().words() {
            return Err(Error::Incompatible("checkpoint vocabulary differs from the caption grammar".into()));
        }
        model.load_arrays(&ckpt.arrays)?;
        Ok(model)
    }

    pub fn load_arrays(&self, arrays: &[NamedArray]) -> Result<()> {
        let mut seen = 0;
        for a in arrays {
            if self.params.get(&a.name).is_some() {
                self.params.set(&a.name, &a.to_tensor(self.device())?)?;
                seen += 1;
            }
        }
        if seen != self.params.len() {
            return Err(Error::Incompatible(format!("checkpoint holds {seen} of {} parameters", self.params.len())));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_checkpoint(None)?.save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        MotionDenoiser::from_checkpoint(&Checkpoint::load(path)?, DType::F32, &Device::Cpu)
    }
}

impl X0Predictor for MotionDenoiser {
    fn predict_x0(&self, x_t: &Tensor, t: &[usize], condition: Condition<'_>) -> Result<Tensor> {
        self.forward(x_t, t, condition, None, None)
    }
}

/// Sampling with a fixed mask applied at every denoising step.
pub struct MaskedInference<'a> {
    pub model: &'a MotionDenoiser,
    pub masks: Vec<Vec<bool>>,
}

impl X0Predictor for MaskedInference<'_> {
    fn predict_x0(&self, x_t: &Tensor, t: &[usize], condition: Condition<'_>) -> Result<Tensor> {
        self.model.forward(x_t, t, condition, None, Some(&self.masks))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::RepresentationMode;

    fn tiny(strategy: MaskKind) -> MotionDenoiser {
        let cfg = ModelConfig {
            strategy,
            encoder_layers: 1,
            decoder_layers: 1,
            hidden_dim: 16,
            heads: 2,
            max_length: 12,
            diffusion_steps: 10,
        };
        MotionDenoiser::new(cfg, Skeleton::toy(RepresentationMode::Positions), 3, DType::F32, &Device::Cpu).unwrap()
    }

    #[test]
    fn output_shape_matches_input() {
        for strategy in [MaskKind::TimeFrames, MaskKind::BodyParts] {
            let m = tiny(strategy);
            let x = Tensor::randn(0f32, 1.0, (2, 6, 9, 3), &Device::Cpu).unwrap();
            let caps = vec!["a person walks forward".to_string(), String::new()];
            let y = m.forward(&x, &[0, 9], Condition::Captions(&caps), None, None).unwrap();
            assert_eq!(y.dims(), &[2, 6, 9, 3]);
        }
    }

    #[test]
    fn too_long_and_bad_step_are_rejected() {
        let m = tiny(MaskKind::TimeFrames);
        let x = Tensor::zeros((1, 13, 9, 3), DType::F32, &Device::Cpu).unwrap();
        assert!(matches!(m.predict_x0(&x, &[0], Condition::Null), Err(Error::InvalidInput(_))));
        let x = Tensor::zeros((1, 4, 9, 3), DType::F32, &Device::Cpu).unwrap();
        assert!(matches!(m.predict_x0(&x, &[10], Condition::Null), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn unmasked_forward_equals_plain_path() {
        for strategy in [MaskKind::TimeFrames, MaskKind::BodyParts] {
            let m = tiny(strategy);
            let x = Tensor::randn(0f32, 1.0, (1, 5, 9, 3), &Device::Cpu).unwrap();
            let a = m.forward(&x, &[4], Condition::Null, None, None).unwrap();
            let b = m.forward_plain(&x, &[4], Condition::Null, None).unwrap();
            assert_eq!(a.flatten_all().unwrap().to_vec1::<f32>().unwrap(), b.flatten_all().unwrap().to_vec1::<f32>().unwrap());
        }
    }

    #[test]
    fn bodypart_masks_repeat_per_frame() {
        let m = tiny(MaskKind::BodyParts);
        let masks = m.sample_token_masks(2, 4, 0.2, &mut rng::stream(1, Stream::Mask, 0)).unwrap();
        for mask in masks {
            assert_eq!(mask.len(), 20);
            assert_eq!(mask.iter().filter(|&&b| b).count(), 4);
            assert_eq!(&mask[0..5], &mask[15..20]);
        }
    }
}
