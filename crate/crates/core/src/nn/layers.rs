use candle_core::{Tensor, D};

use super::ParamBuilder;
use crate::error::Result;

#[derive(Debug, Clone)]
pub struct Linear {
    weight: Tensor, // (in, out)
    bias: Tensor,
}

impl Linear {
    pub fn new(pb: &mut ParamBuilder, name: &str, fan_in: usize, fan_out: usize) -> Result<Self> {
        let bound = 1.0 / (fan_in as f64).sqrt();
        Ok(Linear {
            weight: pb.uniform(&format!("{name}.weight"), &[fan_in, fan_out], bound)?,
            bias: pb.zeros(&format!("{name}.bias"), &[fan_out])?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let dims = x.dims();
        let fan_in = *dims.last().expect("linear input has a feature axis");
        let rows = x.elem_count() / fan_in;
        let y = x.reshape((rows, fan_in))?.matmul(&self.weight)?.broadcast_add(&self.bias)?;
        let mut out = dims.to_vec();
        *out.last_mut().expect("non-empty") = self.weight.dim(1)?;
        Ok(y.reshape(out)?)
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    gain: Tensor,
    shift: Tensor,
}

impl LayerNorm {
    const EPS: f64 = 1e-5;

    pub fn new(pb: &mut ParamBuilder, name: &str, dim: usize) -> Result<Self> {
        Ok(LayerNorm { gain: pb.ones(&format!("{name}.gain"), &[dim])?, shift: pb.zeros(&format!("{name}.shift"), &[dim])? })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let centered = x.broadcast_sub(&x.mean_keepdim(D::Minus1)?)?;
        let var = centered.sqr()?.mean_keepdim(D::Minus1)?;
        let normed = centered.broadcast_div(&(var + Self::EPS)?.sqrt()?)?;
        Ok(normed.broadcast_mul(&self.gain)?.broadcast_add(&self.shift)?)
    }
}

/// Two-layer GELU MLP with a 4× hidden expansion.
#[derive(Debug, Clone)]
pub struct FeedForward {
    up: Linear,
    down: Linear,
}

impl FeedForward {
    pub fn new(pb: &mut ParamBuilder, name: &str, dim: usize) -> Result<Self> {
        Ok(FeedForward {
            up: Linear::new(pb, &format!("{name}.up"), dim, 4 * dim)?,
            down: Linear::new(pb, &format!("{name}.down"), 4 * dim, dim)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.down.forward(&self.up.forward(x)?.gelu()?)
    }
}

/// Sinusoidal embedding of integer positions, `(len(positions), dim)`.
pub fn sinusoidal_embedding(positions: &[usize], dim: usize) -> Vec<f64> {
    let half = dim / 2;
    let mut out = vec![0.0; positions.len() * dim];
    for (row, &p) in positions.iter().enumerate() {
        for i in 0..half {
            let freq = (-(10_000f64.ln()) * i as f64 / half as f64).exp();
            out[row * dim + i] = (p as f64 * freq).sin();
            out[row * dim + half + i] = (p as f64 * freq).cos();
        }
    }
    out
}
