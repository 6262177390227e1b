//! Synthetic approach traces standing in for simulator-recorded training data.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::trace::{Label, SpeedTrace};
use super::{EstimatorError, BUCKET_SPACING_M, DEFAULT_START_DISTANCE_M};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub start_distance: u32,
    /// Cruise speed range, km/h.
    pub min_speed: f64,
    pub max_speed: f64,
    /// Braking deceleration range for compliant drivers, m/s^2.
    pub min_decel: f64,
    pub max_decel: f64,
    /// Largest relative speed drift over the approach for runners.
    pub runner_drift: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            start_distance: DEFAULT_START_DISTANCE_M,
            min_speed: 30.0,
            max_speed: 60.0,
            min_decel: 1.5,
            max_decel: 3.5,
            runner_drift: 0.1,
        }
    }
}

/// `count_per_class` compliant traces followed by as many runner traces.
///
/// Compliant drivers cruise, then brake uniformly to a stop exactly at the
/// line. Runners hold their speed, or drift it by a few percent, through the
/// line. Gaussian noise is added to every sample and clamped at zero.
pub fn generate_traces(seed: u64, count_per_class: usize, noise_sigma: f64) -> Result<Vec<SpeedTrace>, EstimatorError> {
    generate_traces_with(seed, count_per_class, noise_sigma, &GeneratorConfig::default())
}

pub fn generate_traces_with(
    seed: u64,
    count_per_class: usize,
    noise_sigma: f64,
    config: &GeneratorConfig,
) -> Result<Vec<SpeedTrace>, EstimatorError> {
    if count_per_class == 0 {
        return Err(EstimatorError::InvalidArgument("count_per_class must be at least 1".into()));
    }
    if !(noise_sigma >= 0.0) {
        return Err(EstimatorError::InvalidArgument(format!("noise sigma must be non-negative, got {noise_sigma}")));
    }
    let noise = Normal::new(0.0, noise_sigma)
        .map_err(|_| EstimatorError::InvalidArgument(format!("noise sigma must be non-negative, got {noise_sigma}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let distances: Vec<f64> = (0..=config.start_distance / BUCKET_SPACING_M)
        .map(|i| f64::from(config.start_distance - i * BUCKET_SPACING_M))
        .collect();

    let mut traces = Vec::with_capacity(2 * count_per_class);
    for _ in 0..count_per_class {
        let cruise = rng.gen_range(config.min_speed..=config.max_speed);
        let decel = rng.gen_range(config.min_decel..=config.max_decel);
        let speeds = distances
            .iter()
            .map(|&d| cruise.min((2.0 * decel * d).sqrt() * 3.6))
            .map(|v| add_noise(v, &noise, &mut rng))
            .collect();
        traces.push(SpeedTrace::new(config.start_distance, speeds, Some(Label::Complied))?);
    }
    for _ in 0..count_per_class {
        let cruise = rng.gen_range(config.min_speed..=config.max_speed);
        let drift = if rng.gen_bool(0.5) { 0.0 } else { rng.gen_range(-config.runner_drift..=config.runner_drift) };
        let span = f64::from(config.start_distance.max(1));
        let speeds = distances
            .iter()
            .map(|&d| cruise * (1.0 + drift * (1.0 - d / span)))
            .map(|v| add_noise(v, &noise, &mut rng))
            .collect();
        traces.push(SpeedTrace::new(config.start_distance, speeds, Some(Label::Ran))?);
    }
    Ok(traces)
}

fn add_noise(v: f64, noise: &Normal<f64>, rng: &mut impl Rng) -> f64 {
    (v + noise.sample(rng)).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_compliant_traces_end_stopped() {
        let traces = generate_traces(1, 10, 0.0).unwrap();
        assert_eq!(traces.len(), 20);
        let (complied, ran): (Vec<_>, Vec<_>) = traces.iter().partition(|t| t.label == Some(Label::Complied));
        assert_eq!((complied.len(), ran.len()), (10, 10));
        for t in complied {
            assert_eq!(*t.speeds().last().unwrap(), 0.0);
            assert_eq!(t.bucket_count(), 21);
        }
        for t in ran {
            assert!(*t.speeds().last().unwrap() >= 27.0);
        }
    }

    #[test]
    fn same_seed_same_output() {
        assert_eq!(generate_traces(1, 10, 2.0).unwrap(), generate_traces(1, 10, 2.0).unwrap());
        assert_ne!(generate_traces(1, 10, 2.0).unwrap(), generate_traces(2, 10, 2.0).unwrap());
    }

    #[test]
    fn noisy_speeds_stay_non_negative() {
        for t in generate_traces(3, 50, 5.0).unwrap() {
            assert!(t.speeds().iter().all(|&s| s >= 0.0));
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(generate_traces(1, 0, 1.0).is_err());
        assert!(generate_traces(1, 1, -1.0).is_err());
    }
}
