//! Forward kinematics over candle tensors, differentiable in the frame values.

use candle_core::{DType, Device, Tensor, D};
use ndarray::Array3;

use super::sequence::{array3_to_tensor, tensor_to_array3};
use super::{MotionSequence, RepresentationMode, Skeleton};
use crate::error::{Error, Result};

/// Keeps the rotation angle away from zero so `sqrt` stays differentiable.
const ANGLE_EPS2: f64 = 1e-12;

/// Global joint positions for frames shaped `[.., J, D]`; returns `[.., J, 3]`.
///
/// `Positions` mode is a passthrough. In `Rotations` mode each joint's local
/// axis-angle rotation is composed down the parent chain:
/// `R_j = R_parent · exp([w_j]×)`, `p_j = p_parent + R_parent · offset_j`,
/// and the root sits at `translation + offset_root`.
pub fn forward_kinematics(skeleton: &Skeleton, frames: &Tensor) -> Result<Tensor> {
    let dims = frames.dims();
    if dims.len() < 2 {
        return Err(Error::invalid(format!("frames tensor of rank {} has no (J, D) axes", dims.len())));
    }
    let (j, d) = (dims[dims.len() - 2], dims[dims.len() - 1]);
    if j != skeleton.joint_count() || d != skeleton.feature_dim() {
        return Err(Error::invalid(format!(
            "frames have (J, D) = ({j}, {d}), skeleton expects ({}, {})",
            skeleton.joint_count(),
            skeleton.feature_dim()
        )));
    }
    match skeleton.mode() {
        RepresentationMode::Positions => Ok(frames.clone()),
        RepresentationMode::Rotations => rotations_fk(skeleton, frames),
    }
}

/// FK of a whole sequence, returned as an `(N, J, 3)` array.
pub fn sequence_positions(skeleton: &Skeleton, motion: &MotionSequence) -> Result<Array3<f32>> {
    motion.check_skeleton(skeleton)?;
    if skeleton.mode() == RepresentationMode::Positions {
        return Ok(motion.frames().clone());
    }
    let t = array3_to_tensor(motion.frames(), &Device::Cpu)?;
    tensor_to_array3(&forward_kinematics(skeleton, &t)?)
}

fn rotations_fk(skeleton: &Skeleton, frames: &Tensor) -> Result<Tensor> {
    let dims = frames.dims().to_vec();
    let lead: usize = dims[..dims.len() - 2].iter().product();
    let j = skeleton.joint_count();
    let x = frames.reshape((lead, j, 6))?;
    let dtype = x.dtype();
    let device = x.device().clone();

    let mut global_rot: Vec<Option<Tensor>> = vec![None; j];
    let mut position: Vec<Option<Tensor>> = vec![None; j];
    for &joint in skeleton.topological_order() {
        let local = axis_angle_to_matrix(&x.narrow(1, joint, 1)?.narrow(2, 0, 3)?.squeeze(1)?)?;
        let offset = offset_tensor(skeleton.offsets()[joint], dtype, &device)?;
        match skeleton.parents()[joint] {
            None => {
                let translation = x.narrow(1, joint, 1)?.narrow(2, 3, 3)?.squeeze(1)?;
                position[joint] = Some(translation.broadcast_add(&offset)?);
                global_rot[joint] = Some(local);
            }
            Some(p) => {
                let parent_rot = global_rot[p].as_ref().expect("parents visited first");
                let parent_pos = position[p].as_ref().expect("parents visited first");
                // (lead, 3, 3) · (3,) as a broadcast row-sum
                let bone = parent_rot.broadcast_mul(&offset.reshape((1, 1, 3))?)?.sum(D::Minus1)?;
                position[joint] = Some((parent_pos + bone)?);
                global_rot[joint] = Some(parent_rot.matmul(&local)?);
            }
        }
    }
    let stacked: Vec<Tensor> = position.into_iter().map(|p| p.expect("every joint visited")).collect();
    let out = Tensor::stack(&stacked, 1)?;
    let mut out_dims = dims;
    *out_dims.last_mut().expect("rank >= 2") = 3;
    Ok(out.reshape(out_dims)?)
}

fn offset_tensor(offset: [f64; 3], dtype: DType, device: &Device) -> candle_core::Result<Tensor> {
    Tensor::new(&offset, device)?.to_dtype(dtype)
}

/// Rodrigues' formula for a batch of axis-angle vectors `(M, 3)` → `(M, 3, 3)`.
///
/// Uses `(1 - cos θ)/θ² = ½·(sin(θ/2)/(θ/2))²`, which is stable near θ = 0.
pub fn axis_angle_to_matrix(w: &Tensor) -> Result<Tensor> {
    let m = w.dim(0)?;
    let theta2 = (w.sqr()?.sum_keepdim(1)? + ANGLE_EPS2)?;
    let theta = theta2.sqrt()?;
    let a = (theta.sin()? / &theta)?;
    let half = (&theta * 0.5)?;
    let b = ((half.sin()? / &half)?.sqr()? * 0.5)?;

    let wx = w.narrow(1, 0, 1)?;
    let wy = w.narrow(1, 1, 1)?;
    let wz = w.narrow(1, 2, 1)?;
    let zero = wx.zeros_like()?;
    let k = Tensor::cat(
        &[&zero, &wz.neg()?, &wy, &wz, &zero, &wx.neg()?, &wy.neg()?, &wx, &zero],
        1,
    )?
    .reshape((m, 3, 3))?;
    let k2 = k.matmul(&k)?;
    let eye = Tensor::eye(3, w.dtype(), w.device())?.unsqueeze(0)?;
    let a = a.reshape((m, 1, 1))?;
    let b = b.reshape((m, 1, 1))?;
    Ok(eye.broadcast_add(&k.broadcast_mul(&a)?)?.broadcast_add(&k2.broadcast_mul(&b)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::BodyPart;

    fn chain(mode: RepresentationMode) -> Skeleton {
        Skeleton::new(
            vec!["root".into(), "child".into(), "tip".into()],
            vec![None, Some(0), Some(1)],
            vec![[0.0; 3], [1.0, 0.0, 0.0], [1.0, 0.0, 0.0]],
            vec![BodyPart::Torso; 3],
            vec![2],
            mode,
        )
        .unwrap()
    }

    fn fk_rows(skel: &Skeleton, frame: &[[f64; 6]]) -> Vec<Vec<f64>> {
        let data: Vec<f64> = frame.iter().flatten().copied().collect();
        let t = Tensor::from_vec(data, (1, frame.len(), 6), &Device::Cpu).unwrap();
        forward_kinematics(skel, &t).unwrap().squeeze(0).unwrap().to_vec2::<f64>().unwrap()
    }

    #[test]
    fn identity_rotations_give_cumulative_offsets() {
        let p = fk_rows(&chain(RepresentationMode::Rotations), &[[0.0; 6]; 3]);
        let want = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]];
        for (got, want) in p.iter().zip(want) {
            for (g, w) in got.iter().zip(want) {
                assert!((g - w).abs() < 1e-9, "{p:?}");
            }
        }
    }

    #[test]
    fn quarter_turn_at_root_lifts_the_chain() {
        let mut frame = [[0.0; 6]; 3];
        frame[0][2] = std::f64::consts::FRAC_PI_2;
        let p = fk_rows(&chain(RepresentationMode::Rotations), &frame);
        let want = [[0.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 2.0, 0.0]];
        for (got, want) in p.iter().zip(want) {
            for (g, w) in got.iter().zip(want) {
                assert!((g - w).abs() < 1e-9, "{p:?}");
            }
        }
    }

    #[test]
    fn root_translation_shifts_everything() {
        let mut frame = [[0.0; 6]; 3];
        frame[0][3..6].copy_from_slice(&[0.5, -1.0, 2.0]);
        let p = fk_rows(&chain(RepresentationMode::Rotations), &frame);
        assert!((p[2][0] - 2.5).abs() < 1e-12 && (p[2][1] + 1.0).abs() < 1e-12 && (p[2][2] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn positions_mode_is_passthrough() {
        let skel = chain(RepresentationMode::Positions);
        let t = Tensor::arange(0f32, 18.0, &Device::Cpu).unwrap().reshape((2, 3, 3)).unwrap();
        let out = forward_kinematics(&skel, &t).unwrap();
        assert_eq!(out.to_vec3::<f32>().unwrap(), t.to_vec3::<f32>().unwrap());
    }

    #[test]
    fn rejects_mismatched_shape() {
        let skel = chain(RepresentationMode::Rotations);
        let t = Tensor::zeros((2, 3, 3), DType::F32, &Device::Cpu).unwrap();
        assert!(matches!(forward_kinematics(&skel, &t), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn rodrigues_matches_z_rotation() {
        let angle = 0.7f64;
        let w = Tensor::new(&[[0.0, 0.0, angle]], &Device::Cpu).unwrap();
        let r = axis_angle_to_matrix(&w).unwrap().squeeze(0).unwrap().to_vec2::<f64>().unwrap();
        let want = [[angle.cos(), -angle.sin(), 0.0], [angle.sin(), angle.cos(), 0.0], [0.0, 0.0, 1.0]];
        for i in 0..3 {
            for k in 0..3 {
                assert!((r[i][k] - want[i][k]).abs() < 1e-12);
            }
        }
    }
}
