use candle_core::{Tensor, D};

use crate::error::{Error, Result};
use crate::masking::{apply_mask, MaskToken};
use crate::motion::{BodyPart, PartPartition, Skeleton};
use crate::nn::{BiasPlacement, LayerNorm, Linear, ParamBuilder, PartAdjacency, RelativeBias, TransformerBlock};

use super::ModelConfig;

pub const PARTS: usize = 5;

/// Intermediate results of the spatial (BPST) stage.
#[derive(Debug, Clone)]
pub struct BpstOutput {
    /// `[B·N, J, H]` joint features after the adjacency-masked blocks.
    pub joint_features: Tensor,
    /// `[B, N, 5, H]`
    pub part_tokens: Tensor,
    /// Attention weights of each spatial block, `[B·N, heads, J, J]`.
    pub weights: Vec<Tensor>,
}

/// Joints are attended within their part, pooled into five part tokens per
/// frame, flattened frame-major to `N·5` tokens, masked, and decoded.
#[derive(Debug, Clone)]
pub struct BodyPartsNet {
    joint_in: Linear,
    joint_embedding: Tensor, // (J, H)
    spatial: Vec<TransformerBlock>,
    adjacency: Tensor, // (1, J, J)
    part_in: Vec<Linear>,
    frame_position: Tensor, // (max_length, H)
    part_embedding: Tensor, // (5, H)
    decoder: Vec<TransformerBlock>,
    decoder_bias: RelativeBias,
    out_norm: LayerNorm,
    part_out: Vec<Linear>,
    partition: PartPartition,
    inverse_order: Tensor, // joint → row in the part-ordered layout
    hidden: usize,
    features: usize,
    max_length: usize,
}

impl BodyPartsNet {
    pub fn new(pb: &mut ParamBuilder, cfg: &ModelConfig, skeleton: &Skeleton) -> Result<Self> {
        let partition = skeleton.part_index_sets()?;
        let (h, d, j) = (cfg.hidden_dim, skeleton.feature_dim(), skeleton.joint_count());
        let (dtype, device) = (pb.dtype(), pb.device().clone());
        let order = partition.flattened();
        let mut inverse = vec![0u32; j];
        for (row, &joint) in order.iter().enumerate() {
            inverse[joint] = row as u32;
        }
        let part_sizes = partition.sizes();
        Ok(BodyPartsNet {
            joint_in: Linear::new(pb, "bp.joint_in", d, h)?,
            joint_embedding: pb.normal("bp.joint_embedding", &[j, h], 0.02)?,
            spatial: (0..cfg.encoder_layers)
                .map(|i| TransformerBlock::new(pb, &format!("bp.spatial.{i}"), h, cfg.heads, BiasPlacement::BeforeScale))
                .collect::<Result<_>>()?,
            adjacency: PartAdjacency::from_skeleton(skeleton).to_tensor(dtype, &device)?,
            part_in: BodyPart::ALL
                .iter()
                .map(|p| Linear::new(pb, &format!("bp.part_in.{}", p.index()), part_sizes[p.index()] * h, h))
                .collect::<Result<_>>()?,
            frame_position: pb.normal("bp.frame_position", &[cfg.max_length, h], 0.02)?,
            part_embedding: pb.normal("bp.part_embedding", &[PARTS, h], 0.02)?,
            decoder: (0..cfg.decoder_layers)
                .map(|i| TransformerBlock::new(pb, &format!("bp.decoder.{i}"), h, cfg.heads, BiasPlacement::AfterScale))
                .collect::<Result<_>>()?,
            decoder_bias: RelativeBias::new(pb, "bp.decoder_bias", cfg.max_length + 1, cfg.heads)?,
            out_norm: LayerNorm::new(pb, "bp.out_norm", h)?,
            part_out: BodyPart::ALL
                .iter()
                .map(|p| Linear::new(pb, &format!("bp.part_out.{}", p.index()), h, part_sizes[p.index()] * d))
                .collect::<Result<_>>()?,
            inverse_order: Tensor::from_vec(inverse, j, &device)?,
            partition,
            hidden: h,
            features: d,
            max_length: cfg.max_length,
        })
    }

    pub fn bpst_encode(&self, x_t: &Tensor) -> Result<BpstOutput> {
        let (b, n, j, d) = x_t.dims4()?;
        if j != self.partition.joint_count() || d != self.features {
            return Err(Error::invalid(format!(
                "expected [B, N, {}, {}], got {:?}",
                self.partition.joint_count(),
                self.features,
                x_t.dims()
            )));
        }
        if n > self.max_length {
            return Err(Error::invalid(format!("sequence length {n} exceeds max_length {}", self.max_length)));
        }
        let h = self.hidden;
        let mut x = self.joint_in.forward(&x_t.reshape((b * n, j, d))?)?.broadcast_add(&self.joint_embedding)?;
        let mut weights = Vec::with_capacity(self.spatial.len());
        for block in &self.spatial {
            let (y, w) = block.forward_with_weights(&x, Some(&self.adjacency))?;
            x = y;
            weights.push(w);
        }
        let mut parts = Vec::with_capacity(PARTS);
        for (part, joints) in self.partition.iter() {
            let idx = Tensor::from_vec(joints.iter().map(|&i| i as u32).collect::<Vec<_>>(), joints.len(), x.device())?;
            let gathered = x.index_select(&idx, 1)?.reshape((b * n, joints.len() * h))?;
            parts.push(self.part_in[part.index()].forward(&gathered)?);
        }
        let part_tokens = Tensor::stack(&parts, 1)?.reshape((b, n, PARTS, h))?;
        Ok(BpstOutput { joint_features: x, part_tokens, weights })
    }

    /// `[N·5, H]`: frame position plus part embedding.
    pub fn positions(&self, frames: usize) -> Result<Tensor> {
        let h = self.hidden;
        let frame = self.frame_position.narrow(0, 0, frames)?.unsqueeze(1)?;
        Ok(frame.broadcast_add(&self.part_embedding.unsqueeze(0)?)?.reshape((frames * PARTS, h))?)
    }

    pub fn decode(&self, tokens: &Tensor, cond: &Tensor) -> Result<Tensor> {
        let (b, l, h) = tokens.dims3()?;
        let n = l / PARTS;
        let mut x = Tensor::cat(&[cond, tokens], 1)?;
        let positions: Vec<usize> = std::iter::once(0).chain((0..l).map(|i| i / PARTS + 1)).collect();
        let bias = self.decoder_bias.bias(&positions)?;
        for block in &self.decoder {
            x = block.forward(&x, Some(&bias))?;
        }
        let x = self.out_norm.forward(&x.narrow(1, 1, l)?)?.reshape((b, n, PARTS, h))?;
        let mut pieces = Vec::with_capacity(PARTS);
        for (part, joints) in self.partition.iter() {
            let token = x.narrow(2, part.index(), 1)?.squeeze(2)?;
            pieces.push(self.part_out[part.index()].forward(&token)?.reshape((b, n, joints.len(), self.features))?);
        }
        Ok(Tensor::cat(&pieces, 2)?.index_select(&self.inverse_order, 2)?)
    }

    fn flat_tokens(&self, x_t: &Tensor) -> Result<(Tensor, Tensor)> {
        let tokens = self.bpst_encode(x_t)?.part_tokens;
        let (b, n, _, h) = tokens.dims4()?;
        let pos = self.positions(n)?;
        Ok((tokens.reshape((b, n * PARTS, h))?.broadcast_add(&pos)?, pos))
    }

    /// `masks` are per batch element over the `N·5` part tokens.
    pub fn forward(&self, x_t: &Tensor, cond: &Tensor, masks: &[Vec<bool>], mask_token: &MaskToken) -> Result<Tensor> {
        let (tokens, pos) = self.flat_tokens(x_t)?;
        let masked = apply_mask(&tokens, masks, mask_token, &pos)?;
        self.decode(&masked, cond)
    }

    pub fn forward_plain(&self, x_t: &Tensor, cond: &Tensor) -> Result<Tensor> {
        let (tokens, _) = self.flat_tokens(x_t)?;
        self.decode(&tokens, cond)
    }

    pub fn partition(&self) -> &PartPartition {
        &self.partition
    }
}

/// Sum of squared differences between two part-token tensors, per part.
pub fn part_token_change(a: &Tensor, b: &Tensor) -> Result<Vec<f64>> {
    let diff = (a - b)?.sqr()?.sum(D::Minus1)?; // [B, N, 5]
    let per_part = diff.sum(0)?.sum(0)?;
    Ok(per_part.to_dtype(candle_core::DType::F64)?.to_vec1::<f64>()?)
}
