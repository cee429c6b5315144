//! Forward noising, the cosine schedule and guided ancestral sampling.

mod sampling;
mod schedule;

pub use sampling::{
    combine_guidance, guided_x0, p_sample_loop, p_sample_loop_observed, q_sample, q_sample_with_alpha_bars,
    Condition, GuidanceConfig, X0Predictor,
};
pub use schedule::{NoiseSchedule, COSINE_OFFSET, MAX_ALPHA, MIN_ALPHA};
