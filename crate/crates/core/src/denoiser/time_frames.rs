use candle_core::{DType, Tensor};

use crate::error::{Error, Result};
use crate::masking::{apply_mask, MaskToken};
use crate::nn::{BiasPlacement, LayerNorm, Linear, ParamBuilder, RelativeBias, TransformerBlock};

use super::ModelConfig;

/// One token per frame. The encoder refines masked tokens; its output at the
/// masked rows is merged with the untouched rows and handed to the decoder.
#[derive(Debug, Clone)]
pub struct TimeFramesNet {
    frame_in: Linear,
    position: Tensor, // (max_length, H), learnable
    encoder: Vec<TransformerBlock>,
    encoder_bias: RelativeBias,
    decoder_position: Tensor, // (max_length, H), learnable
    decoder: Vec<TransformerBlock>,
    decoder_bias: RelativeBias,
    out_norm: LayerNorm,
    frame_out: Linear,
    joints: usize,
    features: usize,
    max_length: usize,
}

impl TimeFramesNet {
    pub fn new(pb: &mut ParamBuilder, cfg: &ModelConfig, joints: usize, features: usize) -> Result<Self> {
        let h = cfg.hidden_dim;
        let width = joints * features;
        let block = |pb: &mut ParamBuilder, name: String| TransformerBlock::new(pb, &name, h, cfg.heads, BiasPlacement::AfterScale);
        Ok(TimeFramesNet {
            frame_in: Linear::new(pb, "tf.frame_in", width, h)?,
            position: pb.normal("tf.position", &[cfg.max_length, h], 0.02)?,
            encoder: (0..cfg.encoder_layers).map(|i| block(pb, format!("tf.encoder.{i}"))).collect::<Result<_>>()?,
            encoder_bias: RelativeBias::new(pb, "tf.encoder_bias", cfg.max_length + 1, cfg.heads)?,
            decoder_position: pb.normal("tf.decoder_position", &[cfg.max_length, h], 0.02)?,
            decoder: (0..cfg.decoder_layers).map(|i| block(pb, format!("tf.decoder.{i}"))).collect::<Result<_>>()?,
            decoder_bias: RelativeBias::new(pb, "tf.decoder_bias", cfg.max_length + 1, cfg.heads)?,
            out_norm: LayerNorm::new(pb, "tf.out_norm", h)?,
            frame_out: Linear::new(pb, "tf.frame_out", h, width)?,
            joints,
            features,
            max_length: cfg.max_length,
        })
    }

    /// Frame tokens before position embedding, `[B, N, H]`.
    pub fn embed(&self, x_t: &Tensor) -> Result<Tensor> {
        let (b, n, j, d) = x_t.dims4()?;
        if j != self.joints || d != self.features {
            return Err(Error::invalid(format!("expected [B, N, {}, {}], got {:?}", self.joints, self.features, x_t.dims())));
        }
        if n > self.max_length {
            return Err(Error::invalid(format!("sequence length {n} exceeds max_length {}", self.max_length)));
        }
        self.frame_in.forward(&x_t.reshape((b, n, j * d))?)
    }

    /// `[N, H]`
    pub fn positions(&self, frames: usize) -> Result<Tensor> {
        Ok(self.position.narrow(0, 0, frames)?)
    }

    /// Runs the encoder over `[cond; masked]` and returns the decoder input:
    /// encoder output at masked rows, `masked` everywhere else.
    pub fn encoder_stage(&self, masked: &Tensor, cond: &Tensor, masks: &[Vec<bool>]) -> Result<Tensor> {
        let (b, n, h) = masked.dims3()?;
        if !masks.iter().flatten().any(|&m| m) {
            return Ok(masked.clone());
        }
        let mut x = Tensor::cat(&[cond, masked], 1)?;
        let bias = self.encoder_bias.bias(&(0..=n).collect::<Vec<_>>())?;
        for block in &self.encoder {
            x = block.forward(&x, Some(&bias))?;
        }
        let encoded = x.narrow(1, 1, n)?;
        let flags: Vec<u8> = masks.iter().flatten().map(|&m| u8::from(m)).collect();
        let select = Tensor::from_vec(flags, (b, n, 1), masked.device())?.broadcast_as((b, n, h))?.to_dtype(DType::U8)?;
        Ok(select.where_cond(&encoded, masked)?)
    }

    /// Decoder over `[cond; tokens + decoder position]`, projected back to `[B, N, J, D]`.
    pub fn decode(&self, tokens: &Tensor, cond: &Tensor) -> Result<Tensor> {
        let (b, n, _) = tokens.dims3()?;
        let tokens = tokens.broadcast_add(&self.decoder_position.narrow(0, 0, n)?)?;
        let mut x = Tensor::cat(&[cond, &tokens], 1)?;
        let bias = self.decoder_bias.bias(&(0..=n).collect::<Vec<_>>())?;
        for block in &self.decoder {
            x = block.forward(&x, Some(&bias))?;
        }
        let x = self.out_norm.forward(&x.narrow(1, 1, n)?)?;
        Ok(self.frame_out.forward(&x)?.reshape((b, n, self.joints, self.features))?)
    }

    pub fn forward(&self, x_t: &Tensor, cond: &Tensor, masks: &[Vec<bool>], mask_token: &MaskToken) -> Result<Tensor> {
        let tokens = self.embed(x_t)?;
        let pos = self.positions(tokens.dim(1)?)?;
        let tokens = tokens.broadcast_add(&pos)?;
        let masked = apply_mask(&tokens, masks, mask_token, &pos)?;
        let decoder_input = self.encoder_stage(&masked, cond, masks)?;
        self.decode(&decoder_input, cond)
    }

    /// Plain conditional denoiser with no masking code on the path.
    pub fn forward_plain(&self, x_t: &Tensor, cond: &Tensor) -> Result<Tensor> {
        let tokens = self.embed(x_t)?;
        let pos = self.positions(tokens.dim(1)?)?;
        self.decode(&tokens.broadcast_add(&pos)?, cond)
    }
}
