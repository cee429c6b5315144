//! Self-attention with an additive bias, in the two placements used here:
//! relative positional bias after the `1/√d_k` scaling, and body-part
//! adjacency before it.

use candle_core::{DType, Tensor, D};

use super::{FeedForward, LayerNorm, Linear, ParamBuilder};
use crate::error::{Error, Result};
use crate::motion::Skeleton;

/// Where the additive bias enters the attention logits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BiasPlacement {
    /// `softmax(QKᵀ/√d_k + B)·V`
    AfterScale,
    /// `softmax((QKᵀ + B)/√d_k)·V`
    BeforeScale,
}

#[derive(Debug, Clone)]
pub struct AttentionOutput {
    /// `[.., L, d_v]`
    pub output: Tensor,
    /// Row-stochastic attention weights `[.., L, L]`.
    pub weights: Tensor,
}

/// Scaled dot-product attention over `[.., L, d_k]` inputs with an optional
/// bias broadcastable to `[.., L, L]`. Bias entries may be `-∞`; a row that is
/// entirely `-∞` is rejected.
pub fn biased_attention(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    bias: Option<&Tensor>,
    placement: BiasPlacement,
) -> Result<AttentionOutput> {
    let d_k = *q.dims().last().ok_or_else(|| Error::invalid("attention inputs need a feature axis"))?;
    if d_k == 0 {
        return Err(Error::invalid("attention key dimension must be positive"));
    }
    let scale = 1.0 / (d_k as f64).sqrt();
    let raw = q.contiguous()?.matmul(&k.t()?.contiguous()?)?;
    let logits = match bias {
        None => (raw * scale)?,
        Some(b) => {
            check_bias_rows(b)?;
            match placement {
                BiasPlacement::AfterScale => (raw * scale)?.broadcast_add(b)?,
                BiasPlacement::BeforeScale => (raw.broadcast_add(b)? * scale)?,
            }
        }
    };
    let weights = softmax_last(&logits)?;
    let output = weights.matmul(&v.contiguous()?)?;
    Ok(AttentionOutput { output, weights })
}

fn check_bias_rows(bias: &Tensor) -> Result<()> {
    let row_max = bias.detach().max_keepdim(D::Minus1)?.flatten_all()?.to_dtype(DType::F64)?.to_vec1::<f64>()?;
    if let Some(row) = row_max.iter().position(|&m| m == f64::NEG_INFINITY) {
        return Err(Error::DegenerateSoftmax { row });
    }
    Ok(())
}

/// Softmax over the last axis; `-∞` logits get exactly zero weight.
pub fn softmax_last(x: &Tensor) -> Result<Tensor> {
    let max = x.detach().max_keepdim(D::Minus1)?;
    let e = x.broadcast_sub(&max)?.exp()?;
    Ok(e.broadcast_div(&e.sum_keepdim(D::Minus1)?)?)
}

/// Learnable per-head bias indexed by clipped relative distance.
#[derive(Debug, Clone)]
pub struct RelativeBias {
    table: Tensor, // (heads, 2·max_len − 1)
    max_len: usize,
}

impl RelativeBias {
    pub fn new(pb: &mut ParamBuilder, name: &str, max_len: usize, heads: usize) -> Result<Self> {
        if max_len == 0 {
            return Err(Error::invalid("relative bias needs max_len >= 1"));
        }
        let table = pb.normal(&format!("{name}.table"), &[heads, 2 * max_len - 1], 0.02)?;
        Ok(RelativeBias { table, max_len })
    }

    pub fn from_table(table: Tensor) -> Result<Self> {
        let width = table.dim(1)?;
        if width % 2 == 0 {
            return Err(Error::invalid("relative bias table width must be odd"));
        }
        Ok(RelativeBias { table, max_len: width.div_ceil(2) })
    }

    pub fn table(&self) -> &Tensor {
        &self.table
    }

    /// Table column for the offset `i − j`.
    pub fn column(&self, i: usize, j: usize) -> usize {
        let reach = self.max_len as i64 - 1;
        let offset = (i as i64 - j as i64).clamp(-reach, reach);
        (offset + reach) as usize
    }

    /// `B[h, a, b] = table[h, clip(pos_a − pos_b)]`, shape `(heads, L, L)`.
    pub fn bias(&self, positions: &[usize]) -> Result<Tensor> {
        let l = positions.len();
        let idx: Vec<u32> = positions
            .iter()
            .flat_map(|&a| positions.iter().map(move |&b| (a, b)))
            .map(|(a, b)| self.column(a, b) as u32)
            .collect();
        let idx = Tensor::from_vec(idx, l * l, self.table.device())?;
        let heads = self.table.dim(0)?;
        Ok(self.table.index_select(&idx, 1)?.reshape((heads, l, l))?)
    }
}

/// `0` between joints of the same body part, `-∞` otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct PartAdjacency {
    joints: usize,
    matrix: Vec<f64>,
}

impl PartAdjacency {
    pub fn from_skeleton(skeleton: &Skeleton) -> Self {
        let j = skeleton.joint_count();
        let matrix = (0..j * j)
            .map(|idx| {
                let (a, b) = (idx / j, idx % j);
                if skeleton.part_of(a) == skeleton.part_of(b) {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            })
            .collect();
        PartAdjacency { joints: j, matrix }
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.matrix[a * self.joints + b]
    }

    pub fn joint_count(&self) -> usize {
        self.joints
    }

    /// `(1, J, J)` so it broadcasts over heads.
    pub fn to_tensor(&self, dtype: DType, device: &candle_core::Device) -> Result<Tensor> {
        Ok(Tensor::from_vec(self.matrix.clone(), (1, self.joints, self.joints), device)?.to_dtype(dtype)?)
    }
}

#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    qkv: Linear,
    out: Linear,
    heads: usize,
    placement: BiasPlacement,
}

impl MultiHeadAttention {
    pub fn new(pb: &mut ParamBuilder, name: &str, dim: usize, heads: usize, placement: BiasPlacement) -> Result<Self> {
        if heads == 0 || !dim.is_multiple_of(heads) {
            return Err(Error::config(format!("hidden_dim {dim} is not divisible by heads {heads}")));
        }
        Ok(MultiHeadAttention {
            qkv: Linear::new(pb, &format!("{name}.qkv"), dim, 3 * dim)?,
            out: Linear::new(pb, &format!("{name}.out"), dim, dim)?,
            heads,
            placement,
        })
    }

    /// `x` is `[B, L, H]`, `bias` broadcastable to `[B, heads, L, L]`.
    pub fn forward(&self, x: &Tensor, bias: Option<&Tensor>) -> Result<AttentionOutput> {
        let (b, l, h) = x.dims3()?;
        let dk = h / self.heads;
        let qkv = self.qkv.forward(x)?.reshape((b, l, 3, self.heads, dk))?;
        let part = |i: usize| -> Result<Tensor> { Ok(qkv.narrow(2, i, 1)?.squeeze(2)?.transpose(1, 2)?.contiguous()?) };
        let (q, k, v) = (part(0)?, part(1)?, part(2)?);
        let att = biased_attention(&q, &k, &v, bias, self.placement)?;
        let merged = att.output.transpose(1, 2)?.reshape((b, l, h))?;
        Ok(AttentionOutput { output: self.out.forward(&merged)?, weights: att.weights })
    }
}

/// Pre-norm transformer block.
#[derive(Debug, Clone)]
pub struct TransformerBlock {
    norm1: LayerNorm,
    attn: MultiHeadAttention,
    norm2: LayerNorm,
    ff: FeedForward,
}

impl TransformerBlock {
    pub fn new(pb: &mut ParamBuilder, name: &str, dim: usize, heads: usize, placement: BiasPlacement) -> Result<Self> {
        Ok(TransformerBlock {
            norm1: LayerNorm::new(pb, &format!("{name}.norm1"), dim)?,
            attn: MultiHeadAttention::new(pb, &format!("{name}.attn"), dim, heads, placement)?,
            norm2: LayerNorm::new(pb, &format!("{name}.norm2"), dim)?,
            ff: FeedForward::new(pb, &format!("{name}.ff"), dim)?,
        })
    }

    pub fn forward(&self, x: &Tensor, bias: Option<&Tensor>) -> Result<Tensor> {
        Ok(self.forward_with_weights(x, bias)?.0)
    }

    pub fn forward_with_weights(&self, x: &Tensor, bias: Option<&Tensor>) -> Result<(Tensor, Tensor)> {
        let att = self.attn.forward(&self.norm1.forward(x)?, bias)?;
        let x = (x + att.output)?;
        let x = (&x + self.ff.forward(&self.norm2.forward(&x)?)?)?;
        Ok((x, att.weights))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::Device;

    #[test]
    fn fully_blocked_row_is_rejected() {
        let dev = Device::Cpu;
        let q = Tensor::ones((2, 3), DType::F64, &dev).unwrap();
        let mut bias = vec![0.0; 4];
        bias[2] = f64::NEG_INFINITY;
        bias[3] = f64::NEG_INFINITY;
        let bias = Tensor::from_vec(bias, (2, 2), &dev).unwrap();
        let err = biased_attention(&q, &q, &q, Some(&bias), BiasPlacement::AfterScale).unwrap_err();
        assert!(matches!(err, Error::DegenerateSoftmax { row: 1 }));
    }

    #[test]
    fn relative_columns_depend_on_offset_only() {
        let table = Tensor::arange(0f64, 7.0, &Device::Cpu).unwrap().reshape((1, 7)).unwrap();
        let rb = RelativeBias::from_table(table).unwrap();
        let b = rb.bias(&(0..8).collect::<Vec<_>>()).unwrap().squeeze(0).unwrap().to_vec2::<f64>().unwrap();
        assert_eq!(b[3][1], b[7][5]);
        assert_eq!(b[0][0], 3.0);
        assert_eq!(b[7][0], 6.0); // clipped at +3
        assert_eq!(b[0][7], 0.0); // clipped at -3
    }

    #[test]
    fn heads_must_divide_hidden() {
        let mut pb = ParamBuilder::new(
            crate::nn::ParamStore::new(DType::F32, Device::Cpu),
            <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0),
        );
        assert!(matches!(
            MultiHeadAttention::new(&mut pb, "a", 10, 3, BiasPlacement::AfterScale),
            Err(Error::InvalidConfig(_))
        ));
    }
}
