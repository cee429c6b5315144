use candle_core::{Device, Tensor};
use ndarray::{Array3, ArrayView2};

use super::Skeleton;
use crate::error::{Error, Result};

/// A captioned clip of N frames, each holding J joints × D features.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionSequence {
    frames: Array3<f32>,
    caption: String,
    fps: f32,
}

impl MotionSequence {
    pub fn new(frames: Array3<f32>, caption: impl Into<String>, fps: f32) -> Result<Self> {
        let n = frames.shape()[0];
        if n < 2 {
            return Err(Error::invalid(format!("motion needs at least 2 frames, got {n}")));
        }
        if frames.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("motion frames contain non-finite values"));
        }
        if !(fps.is_finite() && fps > 0.0) {
            return Err(Error::invalid(format!("fps must be positive, got {fps}")));
        }
        Ok(MotionSequence { frames, caption: caption.into(), fps })
    }

    pub fn frames(&self) -> &Array3<f32> {
        &self.frames
    }

    pub fn caption(&self) -> &str {
        &self.caption
    }

    pub fn fps(&self) -> f32 {
        self.fps
    }

    pub fn len(&self) -> usize {
        self.frames.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn joint_count(&self) -> usize {
        self.frames.shape()[1]
    }

    pub fn feature_dim(&self) -> usize {
        self.frames.shape()[2]
    }

    pub fn frame(&self, i: usize) -> ArrayView2<'_, f32> {
        self.frames.index_axis(ndarray::Axis(0), i)
    }

    pub fn check_skeleton(&self, skeleton: &Skeleton) -> Result<()> {
        let want = (skeleton.joint_count(), skeleton.feature_dim());
        let got = (self.joint_count(), self.feature_dim());
        if want != got {
            return Err(Error::invalid(format!(
                "motion has (J, D) = {got:?}, skeleton expects {want:?}"
            )));
        }
        Ok(())
    }

    /// Frames `[start, start + len)` as a new sequence with the same caption.
    pub fn window(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.len() {
            return Err(Error::invalid(format!(
                "window [{start}, {}) exceeds motion length {}",
                start + len,
                self.len()
            )));
        }
        let frames = self.frames.slice(ndarray::s![start..start + len, .., ..]).to_owned();
        MotionSequence::new(frames, self.caption.clone(), self.fps)
    }

    pub fn to_tensor(&self, device: &Device) -> Result<Tensor> {
        Ok(array3_to_tensor(&self.frames, device)?)
    }
}

pub(crate) fn array3_to_tensor(a: &Array3<f32>, device: &Device) -> candle_core::Result<Tensor> {
    let shape = a.shape();
    let data: Vec<f32> = a.iter().copied().collect();
    Tensor::from_vec(data, (shape[0], shape[1], shape[2]), device)
}

pub(crate) fn tensor_to_array3(t: &Tensor) -> Result<Array3<f32>> {
    let (a, b, c) = t.dims3()?;
    let data = t.to_dtype(candle_core::DType::F32)?.flatten_all()?.to_vec1::<f32>()?;
    Ok(Array3::from_shape_vec((a, b, c), data).expect("shape matches tensor"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_short_and_non_finite() {
        assert!(MotionSequence::new(Array3::zeros((1, 2, 3)), "x", 20.0).is_err());
        let mut a = Array3::zeros((3, 2, 3));
        a[[1, 1, 1]] = f32::NAN;
        assert!(MotionSequence::new(a, "x", 20.0).is_err());
        assert!(MotionSequence::new(Array3::zeros((3, 2, 3)), "x", 0.0).is_err());
    }

    #[test]
    fn tensor_round_trip_is_exact() {
        let a = Array3::from_shape_fn((4, 3, 2), |(i, j, k)| (i * 100 + j * 10 + k) as f32 * 0.37);
        let t = array3_to_tensor(&a, &Device::Cpu).unwrap();
        assert_eq!(tensor_to_array3(&t).unwrap(), a);
    }
}
