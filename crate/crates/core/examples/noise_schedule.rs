//! The cosine schedule, the forward noising process and the reverse posterior.

use candle_core::{Device, Tensor};
use mmdm::diffusion::{q_sample, NoiseSchedule};

pub fn run_example() -> mmdm::Result<Vec<f64>> {
    let schedule = NoiseSchedule::cosine(100)?;
    for t in [1, 24, 49, 74, 99] {
        let (c0, ct, var) = schedule.posterior(t);
        println!("t={t:3} alpha_bar={:.5} posterior coeffs ({c0:.4}, {ct:.4}) var {var:.2e}", schedule.alpha_bars()[t]);
    }

    // Empirical variance of x_t when x_0 = 0 is 1 − ᾱ_t.
    let n = 20_000;
    let x0 = Tensor::zeros((1, n), candle_core::DType::F32, &Device::Cpu)?;
    let noise = Tensor::randn(0f32, 1.0, (1, n), &Device::Cpu)?;
    let mut variances = Vec::new();
    for t in [10, 50, 90] {
        let xt = q_sample(&x0, &[t], &noise, &schedule)?;
        let var = xt.sqr()?.mean_all()?.to_scalar::<f32>()? as f64;
        println!("t={t}: empirical var {var:.4}, expected {:.4}", 1.0 - schedule.alpha_bars()[t]);
        variances.push(var);
    }
    Ok(variances)
}

#[allow(dead_code)]
fn main() -> mmdm::Result<()> {
    run_example().map(|_| ())
}
