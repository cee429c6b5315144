//! Independent reference computations shared by the integration targets.
#![allow(dead_code)]

use candle_core::{Device, Tensor, Var};

use mmdm::motion::{BodyPart, RepresentationMode, Skeleton};

/// `softmax(scale·QKᵀ + B)·V` (bias after scaling) or `softmax(scale·(QKᵀ + B))·V`,
/// row-major `[L, d]` inputs. Returns the output and the weights.
pub fn naive_attention(
    q: &[f64],
    k: &[f64],
    v: &[f64],
    bias: &[f64],
    l: usize,
    d: usize,
    bias_after_scale: bool,
) -> (Vec<f64>, Vec<f64>) {
    let scale = 1.0 / (d as f64).sqrt();
    let mut weights = vec![0.0; l * l];
    let mut out = vec![0.0; l * d];
    for i in 0..l {
        let mut logits = vec![0.0; l];
        for j in 0..l {
            let mut dot = 0.0;
            for c in 0..d {
                dot += q[i * d + c] * k[j * d + c];
            }
            logits[j] = if bias_after_scale { dot * scale + bias[i * l + j] } else { (dot + bias[i * l + j]) * scale };
        }
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = logits.iter().map(|x| (x - m).exp()).sum();
        for j in 0..l {
            weights[i * l + j] = (logits[j] - m).exp() / z;
            for c in 0..d {
                out[i * d + c] += weights[i * l + j] * v[j * d + c];
            }
        }
    }
    (out, weights)
}

/// Root, elbow and tip in the xy-plane; every joint rotates about z.
pub fn planar_chain(l1: f64, l2: f64) -> Skeleton {
    Skeleton::new(
        vec!["root".into(), "elbow".into(), "tip".into()],
        vec![None, Some(0), Some(1)],
        vec![[0.0; 3], [l1, 0.0, 0.0], [l2, 0.0, 0.0]],
        vec![BodyPart::Torso, BodyPart::LeftArm, BodyPart::LeftArm],
        vec![2],
        RepresentationMode::Rotations,
    )
    .unwrap()
}

/// Joint angles for the planar chain and the analytic positions they give.
pub fn planar_positions(l1: f64, l2: f64, root_x: f64, t1: f64, t2: f64) -> [[f64; 3]; 3] {
    let elbow = [root_x + l1 * t1.cos(), l1 * t1.sin(), 0.0];
    let tip = [elbow[0] + l2 * (t1 + t2).cos(), elbow[1] + l2 * (t1 + t2).sin(), 0.0];
    [[root_x, 0.0, 0.0], elbow, tip]
}

pub const PLANAR_SETTINGS: [(f64, f64); 8] = [
    (0.0, 0.0),
    (std::f64::consts::FRAC_PI_2, 0.0),
    (0.0, std::f64::consts::FRAC_PI_2),
    (std::f64::consts::PI / 3.0, -std::f64::consts::PI / 4.0),
    (-std::f64::consts::PI / 6.0, std::f64::consts::PI / 2.5),
    (std::f64::consts::PI, 0.3),
    (2.0, -2.5),
    (-1.1, 3.0),
];

/// Largest absolute error of the library FK against the analytic chain.
pub fn planar_fk_error() -> f64 {
    let (l1, l2, root_x) = (0.7, 0.4, 0.25);
    let skel = planar_chain(l1, l2);
    let mut worst: f64 = 0.0;
    for (t1, t2) in PLANAR_SETTINGS {
        let mut f = vec![0.0f64; 3 * 6];
        f[2] = t1; // root axis-angle, z component
        f[3] = root_x; // root translation, x component
        f[6 + 2] = t2; // elbow axis-angle, z component
        let frames = Tensor::from_vec(f, (1, 3, 6), &Device::Cpu).unwrap();
        let p = mmdm::motion::forward_kinematics(&skel, &frames).unwrap().squeeze(0).unwrap().to_vec2::<f64>().unwrap();
        for (got, want) in p.iter().zip(planar_positions(l1, l2, root_x, t1, t2)) {
            for c in 0..3 {
                worst = worst.max((got[c] - want[c]).abs());
            }
        }
    }
    worst
}

/// Root with a spine and a two-joint leg whose tip is the foot.
pub fn four_joint(mode: RepresentationMode) -> Skeleton {
    Skeleton::new(
        vec!["root".into(), "spine".into(), "knee".into(), "foot".into()],
        vec![None, Some(0), Some(0), Some(2)],
        vec![[0.0; 3], [0.0, 0.4, 0.1], [0.1, -0.4, 0.0], [0.0, -0.45, 0.2]],
        vec![BodyPart::Torso, BodyPart::Torso, BodyPart::LeftLeg, BodyPart::LeftLeg],
        vec![3],
        mode,
    )
    .unwrap()
}

pub const FD_STEP: f64 = 1e-5;

/// Norm-wise relative error between the autograd gradient of `loss` at `x`
/// and central finite differences.
pub fn gradient_error(x: &[f64], shape: (usize, usize, usize), loss: &dyn Fn(&Tensor) -> Tensor) -> f64 {
    let var = Var::from_tensor(&Tensor::from_vec(x.to_vec(), shape, &Device::Cpu).unwrap()).unwrap();
    let grads = loss(var.as_tensor()).backward().unwrap();
    let analytic = grads.get(var.as_tensor()).unwrap().flatten_all().unwrap().to_vec1::<f64>().unwrap();

    let eval = |v: Vec<f64>| loss(&Tensor::from_vec(v, shape, &Device::Cpu).unwrap()).to_scalar::<f64>().unwrap();
    let numeric: Vec<f64> = (0..x.len())
        .map(|i| {
            let (mut hi, mut lo) = (x.to_vec(), x.to_vec());
            hi[i] += FD_STEP;
            lo[i] -= FD_STEP;
            (eval(hi) - eval(lo)) / (2.0 * FD_STEP)
        })
        .collect();

    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, n)| a - n).collect();
    let scale = norm(&analytic).max(norm(&numeric));
    if scale < 1e-12 {
        norm(&diff)
    } else {
        norm(&diff) / scale
    }
}

/// Exact two-sided binomial interval: the smallest `[lo, hi]` with at most
/// `alpha / 2` probability in each tail.
pub fn binomial_interval(n: u64, p: f64, alpha: f64) -> (u64, u64) {
    let mut pmf = vec![0.0f64; n as usize + 1];
    // log-space binomial coefficients
    let ln_fact: Vec<f64> = std::iter::once(0.0)
        .chain((1..=n).scan(0.0, |acc, k| {
            *acc += (k as f64).ln();
            Some(*acc)
        }))
        .collect();
    for k in 0..=n as usize {
        let ln = ln_fact[n as usize] - ln_fact[k] - ln_fact[n as usize - k]
            + k as f64 * p.ln()
            + (n as usize - k) as f64 * (1.0 - p).ln();
        pmf[k] = ln.exp();
    }
    let mut lo = 0;
    let mut tail = 0.0;
    while tail + pmf[lo] <= alpha / 2.0 {
        tail += pmf[lo];
        lo += 1;
    }
    let mut hi = n as usize;
    let mut tail = 0.0;
    while tail + pmf[hi] <= alpha / 2.0 {
        tail += pmf[hi];
        hi -= 1;
    }
    (lo as u64, hi as u64)
}
