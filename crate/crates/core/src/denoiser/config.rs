use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::masking::MaskKind;

/// Network shape. `encoder_layers` counts the time-frame encoder blocks, or
/// the body-part spatial (BPST) blocks for the body-part strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub strategy: MaskKind,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub hidden_dim: usize,
    pub heads: usize,
    pub max_length: usize,
    pub diffusion_steps: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::desk(MaskKind::TimeFrames)
    }
}

impl ModelConfig {
    /// 6 encoder + 2 decoder blocks at hidden size 64.
    pub fn desk(strategy: MaskKind) -> Self {
        ModelConfig {
            strategy,
            encoder_layers: 6,
            decoder_layers: 2,
            hidden_dim: 64,
            heads: 4,
            max_length: 64,
            diffusion_steps: 1000,
        }
    }

    /// Small enough to overfit a handful of clips in seconds.
    pub fn micro(strategy: MaskKind) -> Self {
        ModelConfig {
            strategy,
            encoder_layers: 1,
            decoder_layers: 2,
            hidden_dim: 32,
            heads: 2,
            max_length: 32,
            diffusion_steps: 100,
        }
    }

    /// Full-size widths: 512 for time frames, 640 for body parts.
    pub fn paper(strategy: MaskKind) -> Self {
        let hidden_dim = match strategy {
            MaskKind::TimeFrames => 512,
            MaskKind::BodyParts => 640,
        };
        ModelConfig {
            strategy,
            encoder_layers: 6,
            decoder_layers: 2,
            hidden_dim,
            heads: 8,
            max_length: 196,
            diffusion_steps: 1000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.hidden_dim == 0 || self.heads == 0 || !self.hidden_dim.is_multiple_of(self.heads) {
            problems.push(format!(
                "model.hidden_dim ({}) must be a positive multiple of model.heads ({})",
                self.hidden_dim, self.heads
            ));
        }
        if !self.hidden_dim.is_multiple_of(2) {
            problems.push("model.hidden_dim must be even for the timestep embedding".to_string());
        }
        if self.max_length < 2 {
            problems.push("model.max_length must be at least 2".to_string());
        }
        if self.diffusion_steps < 2 {
            problems.push("model.diffusion_steps must be at least 2".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::config(problems.join("; ")))
        }
    }

    /// `"06 Encoder+2 Decoder"`-style label.
    pub fn arch_label(&self) -> String {
        format!("{:02} Encoder+{} Decoder", self.encoder_layers, self.decoder_layers)
    }
}

/// Inference-time settings shared by `sample` and `evaluate`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingConfig {
    pub guidance_scale: f64,
    /// Fraction of tokens masked during sampling; 0 disables inference masking.
    pub inference_mask_ratio: f64,
    /// Generated length; 0 means the model's `max_length`.
    pub frames: usize,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig { guidance_scale: 2.5, inference_mask_ratio: 0.0, frames: 0 }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.guidance_scale.is_finite() && self.guidance_scale >= 0.0) {
            problems.push(format!("sampling.guidance_scale must be >= 0, got {}", self.guidance_scale));
        }
        if !(0.0..1.0).contains(&self.inference_mask_ratio) {
            problems.push(format!("sampling.inference_mask_ratio must be in [0, 1), got {}", self.inference_mask_ratio));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::config(problems.join("; ")))
        }
    }

    pub fn guidance(&self) -> crate::diffusion::GuidanceConfig {
        crate::diffusion::GuidanceConfig { scale: self.guidance_scale, condition_dropout_prob: 0.0 }
    }

    pub fn frames_for(&self, model: &ModelConfig) -> usize {
        if self.frames == 0 {
            model.max_length
        } else {
            self.frames
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_match_ablation_rows() {
        assert_eq!(ModelConfig::desk(MaskKind::TimeFrames).arch_label(), "06 Encoder+2 Decoder");
        let c = ModelConfig { encoder_layers: 12, decoder_layers: 4, ..ModelConfig::default() };
        assert_eq!(c.arch_label(), "12 Encoder+4 Decoder");
    }

    #[test]
    fn heads_must_divide() {
        let c = ModelConfig { heads: 3, ..ModelConfig::default() };
        assert!(c.validate().is_err());
        assert!(ModelConfig::paper(MaskKind::BodyParts).validate().is_ok());
    }
}
