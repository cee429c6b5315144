//! Time-frame and body-part masks, and how masked slots are replaced by the
//! mask token plus their position embedding.

use candle_core::{Device, Tensor};
use mmdm::masking::{apply_mask, expand_bodypart_mask, masked_count, sample_mask, MaskKind, MaskToken};
use mmdm::motion::{RepresentationMode, Skeleton};

pub fn run_example() -> mmdm::Result<(usize, usize)> {
    let frames = 10;
    let tf = sample_mask(MaskKind::TimeFrames, frames, 0.3, 1)?;
    println!("time-frames mask ({} of {frames}): {:?}", tf.popcount(), tf.mask);

    let partition = Skeleton::toy(RepresentationMode::Positions).part_index_sets()?;
    let parts = sample_mask(MaskKind::BodyParts, 5, 0.4, 2)?;
    let tokens = expand_bodypart_mask(&parts.mask, &partition, frames)?;
    println!("body-parts mask per frame: {:?} -> {} of {} tokens", parts.mask, tokens.iter().filter(|&&m| m).count(), tokens.len());
    assert_eq!(parts.popcount(), masked_count(0.4, 5));

    let h = 4;
    let x = Tensor::arange(0f32, (frames * h) as f32, &Device::Cpu)?.reshape((frames, h))?;
    let positional = (Tensor::ones((frames, h), candle_core::DType::F32, &Device::Cpu)? * 0.5)?;
    let token = MaskToken { embedding: Tensor::full(-1f32, h, &Device::Cpu)? };
    let masked = apply_mask(&x, std::slice::from_ref(&tf.mask), &token, &positional)?;
    let row = tf.mask.iter().position(|&m| m).unwrap_or(0);
    println!("masked row {row}: {:?}", masked.get(row)?.to_vec1::<f32>()?);
    Ok((tf.popcount(), parts.popcount()))
}

#[allow(dead_code)]
fn main() -> mmdm::Result<()> {
    run_example().map(|_| ())
}
