use candle_core::{DType, Device, Tensor};
use serde::{Deserialize, Serialize};

use super::NoiseSchedule;
use crate::error::{Error, Result};
use crate::rng::{self, Stream};

/// What the denoiser is conditioned on for a whole batch.
#[derive(Debug, Clone, Copy)]
pub enum Condition<'a> {
    /// The learned null condition (unconditional branch).
    Null,
    /// One caption per batch element; empty captions fall back to the null condition.
    Captions(&'a [String]),
}

/// Anything that predicts clean frames `x̂₀` from noisy frames `x_t`.
pub trait X0Predictor {
    /// `x_t` is `[B, N, J, D]`, `t` holds one step index per batch element.
    fn predict_x0(&self, x_t: &Tensor, t: &[usize], condition: Condition<'_>) -> Result<Tensor>;
}

impl<P: X0Predictor + ?Sized> X0Predictor for &P {
    fn predict_x0(&self, x_t: &Tensor, t: &[usize], condition: Condition<'_>) -> Result<Tensor> {
        (**self).predict_x0(x_t, t, condition)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GuidanceConfig {
    pub scale: f64,
    pub condition_dropout_prob: f64,
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        GuidanceConfig { scale: 2.5, condition_dropout_prob: 0.1 }
    }
}

impl GuidanceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.scale.is_finite() && self.scale >= 0.0) {
            return Err(Error::config(format!("guidance.scale must be >= 0, got {}", self.scale)));
        }
        if !(0.0..1.0).contains(&self.condition_dropout_prob) {
            return Err(Error::config(format!(
                "guidance.condition_dropout_prob must be in [0, 1), got {}",
                self.condition_dropout_prob
            )));
        }
        Ok(())
    }
}

/// `x_t = √ᾱ_t · x0 + √(1 − ᾱ_t) · noise`, one step index per batch element.
pub fn q_sample(x0: &Tensor, t: &[usize], noise: &Tensor, schedule: &NoiseSchedule) -> Result<Tensor> {
    if x0.dims() != noise.dims() {
        return Err(Error::invalid(format!("x0 shape {:?} != noise shape {:?}", x0.dims(), noise.dims())));
    }
    if x0.rank() == 0 || x0.dim(0)? != t.len() {
        return Err(Error::invalid(format!("{} timesteps for batch of shape {:?}", t.len(), x0.dims())));
    }
    if let Some(&bad) = t.iter().find(|&&t| t >= schedule.steps()) {
        return Err(Error::invalid(format!("timestep {bad} outside [0, {})", schedule.steps())));
    }
    let bars: Vec<f64> = t.iter().map(|&t| schedule.alpha_bars()[t]).collect();
    q_sample_with_alpha_bars(x0, &bars, noise)
}

/// [`q_sample`] with explicit `ᾱ` values, one per batch element.
pub fn q_sample_with_alpha_bars(x0: &Tensor, alpha_bars: &[f64], noise: &Tensor) -> Result<Tensor> {
    let mut bshape = vec![1usize; x0.rank()];
    bshape[0] = alpha_bars.len();
    let signal: Vec<f64> = alpha_bars.iter().map(|a| a.sqrt()).collect();
    let spread: Vec<f64> = alpha_bars.iter().map(|a| (1.0 - a).sqrt()).collect();
    let signal = Tensor::from_vec(signal, bshape.as_slice(), x0.device())?.to_dtype(x0.dtype())?;
    let spread = Tensor::from_vec(spread, bshape.as_slice(), x0.device())?.to_dtype(x0.dtype())?;
    Ok((x0.broadcast_mul(&signal)? + noise.broadcast_mul(&spread)?)?)
}

/// Classifier-free guidance: `u + s·(c − u)`.
pub fn guided_x0<P: X0Predictor + ?Sized>(
    denoiser: &P,
    x_t: &Tensor,
    t: &[usize],
    condition: Condition<'_>,
    guidance: &GuidanceConfig,
) -> Result<Tensor> {
    let s = guidance.scale;
    if s == 1.0 {
        return denoiser.predict_x0(x_t, t, condition);
    }
    let unconditional = denoiser.predict_x0(x_t, t, Condition::Null)?;
    if s == 0.0 {
        return Ok(unconditional);
    }
    let conditional = denoiser.predict_x0(x_t, t, condition)?;
    combine_guidance(&unconditional, &conditional, s)
}

pub fn combine_guidance(unconditional: &Tensor, conditional: &Tensor, scale: f64) -> Result<Tensor> {
    Ok((unconditional + ((conditional - unconditional)? * scale)?)?)
}

/// Ancestral sampling from `x_T ~ N(0, I)` down to `x̂₀`.
///
/// Every step predicts `x̂₀` with guidance and draws `x_{t−1}` from the DDPM
/// posterior; the final step returns `x̂₀` itself.
pub fn p_sample_loop<P: X0Predictor + ?Sized>(
    denoiser: &P,
    condition: Condition<'_>,
    shape: &[usize],
    schedule: &NoiseSchedule,
    guidance: &GuidanceConfig,
    seed: u64,
    device: &Device,
    dtype: DType,
) -> Result<Tensor> {
    p_sample_loop_observed(denoiser, condition, shape, schedule, guidance, seed, device, dtype, |_, _| {})
}

/// [`p_sample_loop`] reporting every `(t, x_t)` from `x_T` down to `x_1`.
#[allow(clippy::too_many_arguments)]
pub fn p_sample_loop_observed<P: X0Predictor + ?Sized>(
    denoiser: &P,
    condition: Condition<'_>,
    shape: &[usize],
    schedule: &NoiseSchedule,
    guidance: &GuidanceConfig,
    seed: u64,
    device: &Device,
    dtype: DType,
    mut observe: impl FnMut(usize, &Tensor),
) -> Result<Tensor> {
    let batch = *shape.first().ok_or_else(|| Error::invalid("empty sample shape"))?;
    let count: usize = shape.iter().product();
    let steps = schedule.steps();
    let mut x = gaussian(seed, steps as u64, count, shape, device, dtype)?;
    for t in (0..steps).rev() {
        observe(t, &x);
        let ts = vec![t; batch];
        // Detached so the autograd graph does not chain across steps.
        let x0_hat = guided_x0(denoiser, &x, &ts, condition, guidance)?.detach();
        ensure_finite(&x0_hat, t)?;
        if t == 0 {
            return Ok(x0_hat);
        }
        let (c0, ct, var) = schedule.posterior(t);
        let z = gaussian(seed, t as u64, count, shape, device, dtype)?;
        x = ((x0_hat * c0)? + (x * ct)?)?;
        x = (x + (z * var.sqrt())?)?;
        ensure_finite(&x, t)?;
    }
    unreachable!("loop returns at t = 0")
}

fn gaussian(seed: u64, index: u64, count: usize, shape: &[usize], device: &Device, dtype: DType) -> Result<Tensor> {
    let mut rng = rng::stream(seed, Stream::Sampling, index);
    let data = rng::gaussian_vec(&mut rng, count);
    Ok(Tensor::from_vec(data, shape, device)?.to_dtype(dtype)?)
}

fn ensure_finite(x: &Tensor, step: usize) -> Result<()> {
    let values = x.flatten_all()?.to_dtype(DType::F64)?.to_vec1::<f64>()?;
    if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NumericFailure { step, detail: format!("non-finite value at flat index {pos}") });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Fixed(Tensor);

    impl X0Predictor for Fixed {
        fn predict_x0(&self, _: &Tensor, _: &[usize], _: Condition<'_>) -> Result<Tensor> {
            Ok(self.0.clone())
        }
    }

    /// Unconditional branch returns 0, conditional returns 1.
    struct Branches;

    impl X0Predictor for Branches {
        fn predict_x0(&self, x: &Tensor, _: &[usize], c: Condition<'_>) -> Result<Tensor> {
            Ok(match c {
                Condition::Null => x.zeros_like()?,
                Condition::Captions(_) => x.ones_like()?,
            })
        }
    }

    struct Exploding;

    impl X0Predictor for Exploding {
        fn predict_x0(&self, x: &Tensor, t: &[usize], _: Condition<'_>) -> Result<Tensor> {
            if t[0] < 3 {
                Ok((x.ones_like()? * f64::NAN)?)
            } else {
                Ok(x.clone())
            }
        }
    }

    #[test]
    fn guidance_extrapolates() {
        let x = Tensor::zeros((2, 3), DType::F32, &Device::Cpu).unwrap();
        let caps = vec!["a".to_string(), "b".to_string()];
        let g = GuidanceConfig { scale: 2.5, condition_dropout_prob: 0.1 };
        let out = guided_x0(&Branches, &x, &[0, 0], Condition::Captions(&caps), &g).unwrap();
        assert!(out.flatten_all().unwrap().to_vec1::<f32>().unwrap().iter().all(|&v| v == 2.5));
        for (s, want) in [(0.0, 0.0f32), (1.0, 1.0)] {
            let g = GuidanceConfig { scale: s, ..g };
            let out = guided_x0(&Branches, &x, &[0, 0], Condition::Captions(&caps), &g).unwrap();
            assert!(out.flatten_all().unwrap().to_vec1::<f32>().unwrap().iter().all(|&v| v == want));
        }
    }

    #[test]
    fn fixed_predictor_is_returned_verbatim() {
        let a = Tensor::arange(0f32, 12.0, &Device::Cpu).unwrap().reshape((1, 2, 2, 3)).unwrap();
        let schedule = NoiseSchedule::cosine(20).unwrap();
        for seed in [0, 9] {
            let out = p_sample_loop(
                &Fixed(a.clone()),
                Condition::Null,
                &[1, 2, 2, 3],
                &schedule,
                &GuidanceConfig::default(),
                seed,
                &Device::Cpu,
                DType::F32,
            )
            .unwrap();
            assert_eq!(out.flatten_all().unwrap().to_vec1::<f32>().unwrap(), a.flatten_all().unwrap().to_vec1::<f32>().unwrap());
        }
    }

    #[test]
    fn non_finite_prediction_reports_the_step() {
        let schedule = NoiseSchedule::cosine(10).unwrap();
        let err = p_sample_loop(
            &Exploding,
            Condition::Null,
            &[1, 2, 1, 3],
            &schedule,
            &GuidanceConfig { scale: 1.0, condition_dropout_prob: 0.0 },
            0,
            &Device::Cpu,
            DType::F32,
        )
        .unwrap_err();
        assert!(matches!(err, Error::NumericFailure { step: 2, .. }), "{err}");
    }

    #[test]
    fn q_sample_argument_checks() {
        let s = NoiseSchedule::cosine(10).unwrap();
        let x = Tensor::zeros((2, 3), DType::F32, &Device::Cpu).unwrap();
        let n = Tensor::zeros((2, 4), DType::F32, &Device::Cpu).unwrap();
        assert!(q_sample(&x, &[0, 0], &n, &s).is_err());
        assert!(q_sample(&x, &[0], &x, &s).is_err());
        assert!(q_sample(&x, &[0, 10], &x, &s).is_err());
    }

    #[test]
    fn zero_noise_scales_signal() {
        let s = NoiseSchedule::cosine(10).unwrap();
        let x = Tensor::ones((1, 4), DType::F64, &Device::Cpu).unwrap();
        let out = q_sample(&x, &[3], &x.zeros_like().unwrap(), &s).unwrap();
        let want = s.alpha_bars()[3].sqrt();
        assert!(out.flatten_all().unwrap().to_vec1::<f64>().unwrap().iter().all(|&v| v == want));
        let out = q_sample_with_alpha_bars(&x, &[1.0], &x.ones_like().unwrap()).unwrap();
        assert_eq!(out.flatten_all().unwrap().to_vec1::<f64>().unwrap(), vec![1.0; 4]);
    }

    #[test]
    fn guidance_config_validation() {
        assert!(GuidanceConfig { scale: -1.0, condition_dropout_prob: 0.0 }.validate().is_err());
        assert!(GuidanceConfig { scale: 1.0, condition_dropout_prob: 1.0 }.validate().is_err());
        assert!(GuidanceConfig::default().validate().is_ok());
    }
}
