//! Distribution and retrieval metrics over evaluator features (rows are samples).

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array2, ArrayView1, Axis};
use rand::seq::index::sample;
use rand::Rng;

use crate::error::{Error, Result};

pub const FID_RIDGE: f64 = 1e-6;
pub const EIGEN_CLAMP_TOLERANCE: f64 = -1e-8;

fn euclidean(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn check_finite(x: &Array2<f64>, what: &str) -> Result<()> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("{what} contains non-finite values")));
    }
    Ok(())
}

fn mean_and_cov(x: &Array2<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let (m, k) = x.dim();
    let mu = x.mean_axis(Axis(0)).expect("non-empty").to_vec();
    let mut cov = DMatrix::<f64>::zeros(k, k);
    for row in x.rows() {
        for a in 0..k {
            let da = row[a] - mu[a];
            for b in a..k {
                cov[(a, b)] += da * (row[b] - mu[b]);
            }
        }
    }
    let denom = (m.max(2) - 1) as f64;
    for a in 0..k {
        for b in a..k {
            let v = cov[(a, b)] / denom;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
        cov[(a, a)] += FID_RIDGE;
    }
    (mu, cov)
}

/// Eigenvalues of a symmetric matrix, clamping small negatives to zero.
fn clamped_eigen(m: DMatrix<f64>, what: &str) -> SymmetricEigen<f64, nalgebra::Dyn> {
    let mut e = SymmetricEigen::new(m);
    for v in e.eigenvalues.iter_mut() {
        if *v < 0.0 {
            if *v < EIGEN_CLAMP_TOLERANCE {
                log::warn!("{what}: clamping negative eigenvalue {v:e}");
            }
            *v = 0.0;
        }
    }
    e
}

/// Fréchet distance between Gaussian fits of two feature sets:
/// `‖μa − μb‖² + Tr(Σa + Σb − 2(Σa Σb)^{1/2})`.
///
/// The trace of the product root is taken as `Tr((√Σa Σb √Σa)^{1/2})`,
/// which is symmetric and shares its eigenvalues with `(Σa Σb)^{1/2}`.
pub fn compute_fid(a: &Array2<f64>, b: &Array2<f64>) -> Result<f64> {
    check_finite(a, "features_a")?;
    check_finite(b, "features_b")?;
    if a.ncols() != b.ncols() || a.nrows() == 0 || b.nrows() == 0 {
        return Err(Error::invalid(format!("feature shapes {:?} and {:?} are incompatible", a.dim(), b.dim())));
    }
    let (mu_a, cov_a) = mean_and_cov(a);
    let (mu_b, cov_b) = mean_and_cov(b);
    let shift: f64 = mu_a.iter().zip(&mu_b).map(|(x, y)| (x - y) * (x - y)).sum();
    let ea = clamped_eigen(cov_a.clone(), "covariance");
    let sqrt_a = &ea.eigenvectors
        * DMatrix::from_diagonal(&ea.eigenvalues.map(f64::sqrt))
        * ea.eigenvectors.transpose();
    let inner = &sqrt_a * &cov_b * &sqrt_a;
    let inner = (&inner + inner.transpose()) * 0.5;
    let cross: f64 = clamped_eigen(inner, "covariance product").eigenvalues.iter().map(|v| v.sqrt()).sum();
    let fid = shift + cov_a.trace() + cov_b.trace() - 2.0 * cross;
    Ok(fid.max(0.0))
}

/// Top-1/2/3 retrieval accuracy: each motion's true text against
/// `pool_size − 1` random distractor texts, by Euclidean distance.
pub fn r_precision<R: Rng + ?Sized>(
    text: &Array2<f64>,
    motion: &Array2<f64>,
    pool_size: usize,
    rng: &mut R,
) -> Result<[f64; 3]> {
    let n = motion.nrows();
    if text.dim() != motion.dim() {
        return Err(Error::invalid("text and motion embeddings must be aligned"));
    }
    if pool_size < 1 || n < pool_size {
        return Err(Error::invalid(format!("r-precision needs at least {pool_size} samples, got {n}")));
    }
    let mut hits = [0usize; 3];
    for i in 0..n {
        let distractors: Vec<usize> =
            sample(rng, n - 1, pool_size - 1).into_iter().map(|j| if j >= i { j + 1 } else { j }).collect();
        let candidates: Vec<ArrayView1<'_, f64>> =
            std::iter::once(text.row(i)).chain(distractors.iter().map(|&j| text.row(j))).collect();
        let rank = retrieval_rank(motion.row(i), &candidates, 0);
        for (k, hit) in hits.iter_mut().enumerate() {
            if rank <= k {
                *hit += 1;
            }
        }
    }
    Ok(hits.map(|h| h as f64 / n as f64))
}

/// Zero-based rank of `candidates[truth]` by distance to `query`; ties count in its favour.
pub fn retrieval_rank(query: ArrayView1<'_, f64>, candidates: &[ArrayView1<'_, f64>], truth: usize) -> usize {
    let d_true = euclidean(query, candidates[truth]);
    candidates.iter().enumerate().filter(|&(j, c)| j != truth && euclidean(query, *c) < d_true).count()
}

/// Mean distance between two disjoint random subsets of size `subset`,
/// averaged over `repeats` draws.
pub fn diversity<R: Rng + ?Sized>(features: &Array2<f64>, subset: usize, repeats: usize, rng: &mut R) -> Result<f64> {
    let n = features.nrows();
    if subset == 0 || 2 * subset > n {
        return Err(Error::invalid(format!("diversity needs 2·{subset} samples, got {n}")));
    }
    let repeats = repeats.max(1);
    let mut total = 0.0;
    for _ in 0..repeats {
        let idx = sample(rng, n, 2 * subset).into_vec();
        let (first, second) = idx.split_at(subset);
        total += first.iter().zip(second).map(|(&a, &b)| euclidean(features.row(a), features.row(b))).sum::<f64>()
            / subset as f64;
    }
    Ok(total / repeats as f64)
}

/// Mean pairwise distance within each prompt's group, averaged over prompts.
pub fn multimodality(groups: &[Array2<f64>]) -> Result<f64> {
    if groups.is_empty() {
        return Err(Error::invalid("multimodality needs at least one group"));
    }
    let mut total = 0.0;
    for g in groups {
        let m = g.nrows();
        if m < 2 {
            return Err(Error::invalid(format!("multimodality groups need at least 2 members, got {m}")));
        }
        let mut sum = 0.0;
        for a in 0..m {
            for b in a + 1..m {
                sum += euclidean(g.row(a), g.row(b));
            }
        }
        total += sum / (m * (m - 1) / 2) as f64;
    }
    Ok(total / groups.len() as f64)
}

/// Mean distance between matched text and motion embeddings.
pub fn mm_dist(text: &Array2<f64>, motion: &Array2<f64>) -> Result<f64> {
    if text.dim() != motion.dim() || text.nrows() == 0 {
        return Err(Error::invalid("text and motion embeddings must be aligned and non-empty"));
    }
    Ok(text.rows().into_iter().zip(motion.rows()).map(|(t, m)| euclidean(t, m)).sum::<f64>() / text.nrows() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{self, Stream};
    use ndarray::array;

    #[test]
    fn fid_identical_is_zero_and_symmetric() {
        let mut r = rng::stream(0, Stream::Evaluation, 0);
        let a = Array2::from_shape_fn((200, 3), |_| r.random::<f64>());
        let b = Array2::from_shape_fn((150, 3), |_| r.random::<f64>() * 2.0);
        assert!(compute_fid(&a, &a).unwrap() < 1e-6);
        let (ab, ba) = (compute_fid(&a, &b).unwrap(), compute_fid(&b, &a).unwrap());
        assert!((ab - ba).abs() < 1e-9);
    }

    #[test]
    fn fid_rejects_nan() {
        let a = array![[0.0, f64::NAN], [1.0, 1.0]];
        assert!(compute_fid(&a, &a).is_err());
    }

    #[test]
    fn perfect_alignment_retrieves_everything() {
        let mut r = rng::stream(1, Stream::Evaluation, 0);
        let e = Array2::from_shape_fn((40, 4), |_| r.random::<f64>());
        let p = r_precision(&e, &e, 32, &mut r).unwrap();
        assert_eq!(p, [1.0, 1.0, 1.0]);
        assert!(r_precision(&e, &e, 41, &mut r).is_err());
    }

    #[test]
    fn small_metric_contracts() {
        let mut r = rng::stream(2, Stream::Evaluation, 0);
        let same = Array2::from_elem((6, 2), 1.5);
        assert_eq!(diversity(&same, 3, 4, &mut r).unwrap(), 0.0);
        let spread = array![[0.0], [2.0]];
        let flat = array![[5.0], [5.0]];
        assert_eq!(multimodality(&[spread, flat]).unwrap(), 1.0);
        assert_eq!(mm_dist(&array![[0.0], [3.0]], &array![[1.0], [4.0]]).unwrap(), 1.0);
        assert!(multimodality(&[array![[1.0]]]).is_err());
    }
}
