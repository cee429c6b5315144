//! Random masks over frame or body-part token slots and their application in
//! embedding space: `x̃ = M ⊙ (q + pos) + (1 − M) ⊙ x`.

use candle_core::{DType, Tensor};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::motion::{BodyPart, PartPartition};
use crate::rng::{self, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskKind {
    #[default]
    TimeFrames,
    BodyParts,
}

/// A realized mask: `mask[i]` is true when slot `i` is replaced by the mask token.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskSpec {
    pub kind: MaskKind,
    pub ratio: f64,
    pub mask: Vec<bool>,
}

impl MaskSpec {
    pub fn none(kind: MaskKind, slot_count: usize) -> Self {
        MaskSpec { kind, ratio: 0.0, mask: vec![false; slot_count] }
    }

    pub fn popcount(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// `round(ratio · slots)`, ties away from zero.
pub fn masked_count(ratio: f64, slot_count: usize) -> usize {
    (ratio * slot_count as f64).round() as usize
}

fn check_ratio(ratio: f64) -> Result<()> {
    if !(0.0..1.0).contains(&ratio) {
        return Err(Error::config(format!("mask ratio must be in [0, 1), got {ratio}")));
    }
    Ok(())
}

pub fn sample_mask(kind: MaskKind, slot_count: usize, ratio: f64, seed: u64) -> Result<MaskSpec> {
    sample_mask_with(kind, slot_count, ratio, &mut rng::stream(seed, Stream::Mask, 0))
}

/// Uniformly random subset of exactly `masked_count(ratio, slot_count)` slots.
pub fn sample_mask_with<R: Rng + ?Sized>(kind: MaskKind, slot_count: usize, ratio: f64, rng: &mut R) -> Result<MaskSpec> {
    check_ratio(ratio)?;
    if slot_count == 0 {
        return Err(Error::invalid("mask needs at least one slot"));
    }
    let k = masked_count(ratio, slot_count);
    let mut mask = vec![false; slot_count];
    for i in rand::seq::index::sample(rng, slot_count, k) {
        mask[i] = true;
    }
    Ok(MaskSpec { kind, ratio, mask })
}

/// Expands five part bits to the body-part token layout used by the
/// denoiser: one token per part per frame, frame-major (`n·5 + part`).
pub fn expand_bodypart_mask(part_bits: &[bool], partition: &PartPartition, frames: usize) -> Result<Vec<bool>> {
    if part_bits.len() != BodyPart::ALL.len() {
        return Err(Error::invalid(format!("expected 5 part bits, got {}", part_bits.len())));
    }
    debug_assert!(partition.sizes().iter().all(|&s| s > 0));
    Ok((0..frames).flat_map(|_| part_bits.iter().copied()).collect())
}

/// Learnable embedding substituted at masked slots.
#[derive(Debug, Clone)]
pub struct MaskToken {
    pub embedding: Tensor,
}

/// Replaces masked rows with `mask_token + positional[row]`; other rows are
/// passed through untouched. `tokens` is `[B, L, H]` (or `[L, H]` with one mask),
/// `masks` holds one length-L mask per batch element, `positional` is `[L, H]`.
pub fn apply_mask(tokens: &Tensor, masks: &[Vec<bool>], mask_token: &MaskToken, positional: &Tensor) -> Result<Tensor> {
    let batched = match tokens.rank() {
        3 => tokens.clone(),
        2 => tokens.unsqueeze(0)?,
        r => return Err(Error::invalid(format!("tokens must be rank 2 or 3, got rank {r}"))),
    };
    let (b, l, h) = batched.dims3()?;
    if masks.len() != b || masks.iter().any(|m| m.len() != l) {
        return Err(Error::invalid(format!("masks do not match token shape ({b}, {l}, {h})")));
    }
    if positional.dims() != [l, h] {
        return Err(Error::invalid(format!("positional shape {:?} != ({l}, {h})", positional.dims())));
    }
    if mask_token.embedding.dims() != [h] {
        return Err(Error::invalid(format!("mask token shape {:?} != ({h},)", mask_token.embedding.dims())));
    }
    let flags: Vec<u8> = masks.iter().flatten().map(|&m| u8::from(m)).collect();
    let out = if flags.iter().all(|&f| f == 0) {
        batched
    } else {
        let replacement = positional.broadcast_add(&mask_token.embedding.unsqueeze(0)?)?.unsqueeze(0)?;
        let replacement = replacement.broadcast_as((b, l, h))?;
        let cond = Tensor::from_vec(flags, (b, l, 1), tokens.device())?
            .broadcast_as((b, l, h))?
            .to_dtype(DType::U8)?;
        cond.where_cond(&replacement, &batched)?
    };
    Ok(if tokens.rank() == 2 { out.squeeze(0)? } else { out })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::{RepresentationMode, Skeleton};
    use candle_core::Device;

    #[test]
    fn counts_follow_rounding_contract() {
        assert_eq!(masked_count(0.0, 10), 0);
        assert_eq!(masked_count(0.2, 10), 2);
        assert_eq!(masked_count(0.25, 10), 3); // 2.5 rounds away from zero
        assert_eq!(masked_count(0.1, 5), 1); // 0.5 rounds up
        let m = sample_mask(MaskKind::TimeFrames, 10, 0.2, 4).unwrap();
        assert_eq!(m.popcount(), 2);
        assert_eq!(sample_mask(MaskKind::TimeFrames, 10, 0.0, 4).unwrap().popcount(), 0);
    }

    #[test]
    fn ratio_out_of_range_is_config_error() {
        for r in [-0.1, 1.0, 1.5, f64::NAN] {
            assert!(matches!(sample_mask(MaskKind::TimeFrames, 4, r, 0), Err(Error::InvalidConfig(_))));
        }
    }

    #[test]
    fn same_seed_same_mask() {
        let a = sample_mask(MaskKind::BodyParts, 5, 0.4, 11).unwrap();
        let b = sample_mask(MaskKind::BodyParts, 5, 0.4, 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bodypart_expansion() {
        let p = Skeleton::toy(RepresentationMode::Positions).part_index_sets().unwrap();
        let bits = [true, false, false, false, false];
        let m = expand_bodypart_mask(&bits, &p, 3).unwrap();
        assert_eq!(m.len(), 15);
        for (i, &v) in m.iter().enumerate() {
            assert_eq!(v, i % 5 == 0);
        }
        assert!(expand_bodypart_mask(&[false; 5], &p, 4).unwrap().iter().all(|&v| !v));
        assert!(expand_bodypart_mask(&[false; 4], &p, 4).is_err());
    }

    #[test]
    fn all_masked_rows_equal_token_plus_position() {
        let dev = Device::Cpu;
        let tokens = Tensor::randn(0f32, 1.0, (3, 4), &dev).unwrap();
        let pos = Tensor::randn(0f32, 1.0, (3, 4), &dev).unwrap();
        let q = MaskToken { embedding: Tensor::new(&[0.5f32, -1.0, 2.0, 0.0], &dev).unwrap() };
        let out = apply_mask(&tokens, &[vec![true; 3]], &q, &pos).unwrap();
        let want = pos.broadcast_add(&q.embedding).unwrap();
        assert_eq!(out.to_vec2::<f32>().unwrap(), want.to_vec2::<f32>().unwrap());
        let out = apply_mask(&tokens, &[vec![false; 3]], &q, &pos).unwrap();
        assert_eq!(out.to_vec2::<f32>().unwrap(), tokens.to_vec2::<f32>().unwrap());
    }

    #[test]
    fn apply_mask_shape_errors() {
        let dev = Device::Cpu;
        let tokens = Tensor::zeros((2, 3, 4), DType::F32, &dev).unwrap();
        let pos = Tensor::zeros((3, 4), DType::F32, &dev).unwrap();
        let q = MaskToken { embedding: Tensor::zeros(4, DType::F32, &dev).unwrap() };
        assert!(apply_mask(&tokens, &[vec![false; 3]], &q, &pos).is_err());
        assert!(apply_mask(&tokens, &[vec![false; 2], vec![false; 2]], &q, &pos).is_err());
        let bad_pos = Tensor::zeros((3, 5), DType::F32, &dev).unwrap();
        assert!(apply_mask(&tokens, &[vec![false; 3], vec![false; 3]], &q, &bad_pos).is_err());
    }
}
