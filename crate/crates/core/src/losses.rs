//! Training objective: reconstruction of `x0` plus position, foot-contact and
//! velocity regularizers. Every term takes `[N, J, D]` or `[B, N, J, D]`
//! frames, sums within a sequence as the formulas read and averages over the batch.

use candle_core::{DType, Device, Tensor, D};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::motion::{forward_kinematics, FootContactLabels, Skeleton};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub lambda_pos: f64,
    pub lambda_vel: f64,
    pub lambda_foot: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { lambda_pos: 1.0, lambda_vel: 1.0, lambda_foot: 1.0 }
    }
}

impl LossWeights {
    pub const ZERO: LossWeights = LossWeights { lambda_pos: 0.0, lambda_vel: 0.0, lambda_foot: 0.0 };

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda_pos", self.lambda_pos), ("lambda_vel", self.lambda_vel), ("lambda_foot", self.lambda_foot)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(format!("loss.{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Scalar values of each term, as logged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub simple: f64,
    pub pos: f64,
    pub foot: f64,
    pub vel: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn is_finite(&self) -> bool {
        [self.simple, self.pos, self.foot, self.vel, self.total].iter().all(|v| v.is_finite())
    }
}

/// Differentiable scalar terms.
#[derive(Debug, Clone)]
pub struct LossTerms {
    pub simple: Tensor,
    pub pos: Tensor,
    pub foot: Tensor,
    pub vel: Tensor,
    pub total: Tensor,
}

impl LossTerms {
    pub fn breakdown(&self) -> Result<LossBreakdown> {
        let v = |t: &Tensor| -> Result<f64> { Ok(t.to_dtype(DType::F64)?.to_scalar::<f64>()?) };
        Ok(LossBreakdown {
            simple: v(&self.simple)?,
            pos: v(&self.pos)?,
            foot: v(&self.foot)?,
            vel: v(&self.vel)?,
            total: v(&self.total)?,
        })
    }
}

fn batched(x: &Tensor) -> Result<Tensor> {
    match x.rank() {
        4 => Ok(x.clone()),
        3 => Ok(x.unsqueeze(0)?),
        r => Err(Error::invalid(format!("frames must be [N, J, D] or [B, N, J, D], got rank {r}"))),
    }
}

fn same_shape(a: &Tensor, b: &Tensor) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::invalid(format!("shape mismatch: {:?} vs {:?}", a.dims(), b.dims())));
    }
    Ok(())
}

fn frames_at_least_two(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::invalid(format!("need at least 2 frames, got {n}")));
    }
    Ok(())
}

/// `[B, N−1, ..]` forward differences along the frame axis.
fn frame_diff(x: &Tensor) -> Result<Tensor> {
    let n = x.dim(1)?;
    Ok((x.narrow(1, 1, n - 1)? - x.narrow(1, 0, n - 1)?)?)
}

/// Per-sequence sum of squares over `(J, D)` and frames, divided by
/// `frames_divisor`, then averaged over the batch.
fn sequence_mean(sq: &Tensor, frames_divisor: usize) -> Result<Tensor> {
    let per_seq = sq.flatten_from(1)?.sum(D::Minus1)?;
    Ok((per_seq / frames_divisor as f64)?.mean_all()?)
}

/// Mean squared error over every element.
pub fn loss_simple(x0: &Tensor, x0_hat: &Tensor) -> Result<Tensor> {
    same_shape(x0, x0_hat)?;
    Ok((x0 - x0_hat)?.sqr()?.mean_all()?)
}

/// `(1/N) Σ_i ‖FK(x0^i) − FK(x̂0^i)‖²`
pub fn loss_pos(x0: &Tensor, x0_hat: &Tensor, skeleton: &Skeleton) -> Result<Tensor> {
    same_shape(x0, x0_hat)?;
    let (a, b) = (batched(x0)?, batched(x0_hat)?);
    let n = a.dim(1)?;
    let diff = (forward_kinematics(skeleton, &a)? - forward_kinematics(skeleton, &b)?)?;
    sequence_mean(&diff.sqr()?, n)
}

/// `(1/(N−1)) Σ_i ‖(FK(x̂0^{i+1}) − FK(x̂0^i)) · f_i‖²` over foot joints.
/// `contacts` is `[B, N−1, F]` (or `[N−1, F]`) with 0/1 entries.
pub fn loss_foot(x0_hat: &Tensor, contacts: &Tensor, skeleton: &Skeleton) -> Result<Tensor> {
    let x = batched(x0_hat)?;
    let (b, n) = (x.dim(0)?, x.dim(1)?);
    frames_at_least_two(n)?;
    let feet = skeleton.foot_joints();
    let gate = match contacts.rank() {
        3 => contacts.clone(),
        2 => contacts.unsqueeze(0)?,
        r => return Err(Error::invalid(format!("contacts must be rank 2 or 3, got {r}"))),
    };
    if gate.dims() != [b, n - 1, feet.len()] {
        return Err(Error::invalid(format!("contacts shape {:?} != ({b}, {}, {})", gate.dims(), n - 1, feet.len())));
    }
    let idx = Tensor::from_vec(feet.iter().map(|&f| f as u32).collect::<Vec<_>>(), feet.len(), x.device())?;
    let positions = forward_kinematics(skeleton, &x)?.index_select(&idx, 2)?;
    let step = frame_diff(&positions)?; // [B, N−1, F, 3]
    let gated = step.broadcast_mul(&gate.to_dtype(x.dtype())?.unsqueeze(D::Minus1)?)?;
    sequence_mean(&gated.sqr()?, n - 1)
}

/// `(1/(N−1)) Σ_i ‖(x0^{i+1} − x0^i) − (x̂0^{i+1} − x̂0^i)‖²`
pub fn loss_vel(x0: &Tensor, x0_hat: &Tensor) -> Result<Tensor> {
    same_shape(x0, x0_hat)?;
    let (a, b) = (batched(x0)?, batched(x0_hat)?);
    let n = a.dim(1)?;
    frames_at_least_two(n)?;
    let r = (frame_diff(&a)? - frame_diff(&b)?)?;
    sequence_mean(&r.sqr()?, n - 1)
}

/// All four terms and their weighted sum.
pub fn total_loss(
    x0: &Tensor,
    x0_hat: &Tensor,
    contacts: &Tensor,
    skeleton: &Skeleton,
    weights: &LossWeights,
) -> Result<LossTerms> {
    let simple = loss_simple(x0, x0_hat)?;
    let pos = loss_pos(x0, x0_hat, skeleton)?;
    let foot = loss_foot(x0_hat, contacts, skeleton)?;
    let vel = loss_vel(x0, x0_hat)?;
    let total = compose(&simple, &pos, &vel, &foot, weights)?;
    Ok(LossTerms { simple, pos, foot, vel, total })
}

fn compose(simple: &Tensor, pos: &Tensor, vel: &Tensor, foot: &Tensor, w: &LossWeights) -> Result<Tensor> {
    let mut total = simple.clone();
    for (term, lambda) in [(pos, w.lambda_pos), (vel, w.lambda_vel), (foot, w.lambda_foot)] {
        if lambda != 0.0 {
            total = (total + (term * lambda)?)?;
        }
    }
    Ok(total)
}

/// Stacks per-sample contact labels into `[B, N−1, F]`.
pub fn contacts_tensor(labels: &[&FootContactLabels], dtype: DType, device: &Device) -> Result<Tensor> {
    let first = labels.first().ok_or_else(|| Error::invalid("no contact labels"))?;
    let (rows, cols) = first.contacts().dim();
    if labels.iter().any(|l| l.contacts().dim() != (rows, cols)) {
        return Err(Error::invalid("contact labels differ in shape"));
    }
    let data: Vec<f32> = labels.iter().flat_map(|l| l.as_f32()).collect();
    Ok(Tensor::from_vec(data, (labels.len(), rows, cols), device)?.to_dtype(dtype)?)
}
