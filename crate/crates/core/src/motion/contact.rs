use ndarray::{Array2, Array3};

use super::Skeleton;
use crate::error::{Error, Result};

/// Per-frame-pair foot contact flags, shape `(N - 1, |foot_joints|)`.
///
/// Row `i` describes the transition from frame `i` to frame `i + 1`; column
/// `k` follows `skeleton.foot_joints()[k]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FootContactLabels {
    contacts: Array2<u8>,
}

impl FootContactLabels {
    pub fn new(contacts: Array2<u8>) -> Result<Self> {
        if contacts.iter().any(|&c| c > 1) {
            return Err(Error::invalid("contact labels must be 0 or 1"));
        }
        Ok(FootContactLabels { contacts })
    }

    pub fn contacts(&self) -> &Array2<u8> {
        &self.contacts
    }

    pub fn rows(&self) -> usize {
        self.contacts.nrows()
    }

    pub fn as_f32(&self) -> Vec<f32> {
        self.contacts.iter().map(|&c| c as f32).collect()
    }
}

/// Default speed threshold: 0.01 m of travel per frame, expressed in m/s.
pub fn default_speed_threshold(fps: f32) -> f32 {
    0.01 * fps
}

/// A foot is in contact over `[i, i+1]` when its speed is below `speed_threshold` (m/s).
pub fn detect_foot_contact(
    skeleton: &Skeleton,
    positions: &Array3<f32>,
    fps: f32,
    speed_threshold: f32,
) -> Result<FootContactLabels> {
    let (n, j, d) = positions.dim();
    if n < 2 {
        return Err(Error::invalid(format!("contact detection needs at least 2 frames, got {n}")));
    }
    if j != skeleton.joint_count() || d != 3 {
        return Err(Error::invalid(format!(
            "positions have shape ({n}, {j}, {d}), expected (N, {}, 3)",
            skeleton.joint_count()
        )));
    }
    if !(speed_threshold > 0.0) {
        return Err(Error::invalid("speed threshold must be positive"));
    }
    let feet = skeleton.foot_joints();
    let contacts = Array2::from_shape_fn((n - 1, feet.len()), |(i, k)| {
        let f = feet[k];
        let step: f32 = (0..3)
            .map(|c| {
                let dv = positions[[i + 1, f, c]] - positions[[i, f, c]];
                dv * dv
            })
            .sum::<f32>()
            .sqrt();
        u8::from(step * fps < speed_threshold)
    });
    Ok(FootContactLabels { contacts })
}
