//! Acquisition functions over a posterior mean and variance (maximization).

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::gp::Prediction;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

pub fn norm_pdf(z: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

pub fn norm_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Expected improvement over `incumbent`.
pub fn ei(mean: f64, var: f64, incumbent: f64) -> f64 {
    let sigma = var.max(0.0).sqrt();
    if sigma <= 0.0 {
        return 0.0;
    }
    let diff = mean - incumbent;
    let z = diff / sigma;
    (diff * norm_cdf(z) + sigma * norm_pdf(z)).max(0.0)
}

/// Probability of improving on `incumbent` by more than `bias`.
pub fn pi(mean: f64, var: f64, incumbent: f64, bias: f64) -> f64 {
    let sigma = var.max(0.0).sqrt();
    let diff = mean - incumbent - bias;
    if sigma <= 0.0 {
        return if diff > 0.0 { 1.0 } else { 0.0 };
    }
    norm_cdf(diff / sigma)
}

pub fn ucb(mean: f64, var: f64, tau: f64) -> f64 {
    mean + tau * var.max(0.0).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AcquisitionKind {
    Ei,
    Pi,
    Ucb,
    Thompson,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AcquisitionSpec {
    pub kind: AcquisitionKind,
    pub pi_bias: f64,
    pub ucb_tau: f64,
    /// Grow τ as `ucb_tau * sqrt(log(t + 1))` instead of keeping it constant.
    pub ucb_schedule: bool,
    /// Random features drawn per Thompson suggestion.
    pub thompson_features: usize,
}

impl Default for AcquisitionSpec {
    fn default() -> Self {
        Self {
            kind: AcquisitionKind::Ei,
            pi_bias: 0.0,
            ucb_tau: 2.0,
            ucb_schedule: false,
            thompson_features: 200,
        }
    }
}

impl AcquisitionSpec {
    pub fn ei() -> Self {
        Self::default()
    }

    pub fn tau(&self, t: usize) -> f64 {
        if self.ucb_schedule {
            self.ucb_tau * ((t + 1) as f64).ln().max(0.0).sqrt()
        } else {
            self.ucb_tau
        }
    }

    /// Scores one prediction; `t` is the number of observations so far.
    /// Thompson has no closed form here and scores as the mean.
    pub fn score(&self, p: Prediction, incumbent: f64, t: usize) -> f64 {
        match self.kind {
            AcquisitionKind::Ei => ei(p.mean, p.var, incumbent),
            AcquisitionKind::Pi => pi(p.mean, p.var, incumbent, self.pi_bias),
            AcquisitionKind::Ucb => ucb(p.mean, p.var, self.tau(t)),
            AcquisitionKind::Thompson => p.mean,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn ei_edge_cases() {
        assert_eq!(ei(3.0, 0.0, 1.0), 0.0);
        assert!((ei(0.0, 1.0, 0.0) - 0.398942).abs() < 1e-6);
        let e = ei(10.0, 1.0, 0.0);
        assert!((e - 10.0).abs() / 10.0 < 1e-6);
    }

    #[test]
    fn ei_matches_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let n = 2_000_000;
        let (mu, sigma, best) = (0.3, 1.2, 0.5);
        let total: f64 = (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                (mu + sigma * z - best).max(0.0)
            })
            .sum();
        assert!((total / n as f64 - ei(mu, sigma * sigma, best)).abs() < 2e-3);
    }

    #[test]
    fn pi_values() {
        assert!((pi(1.5, 4.0, 1.0, 0.5) - 0.5).abs() < 1e-12);
        assert!((pi(3.0, 4.0, 0.5, 0.5) - 0.841_344_746_068_542_9).abs() < 1e-9);
        assert_eq!(pi(2.0, 0.0, 1.0, 0.5), 1.0);
        assert_eq!(pi(1.2, 0.0, 1.0, 0.5), 0.0);
    }

    #[test]
    fn ucb_values() {
        assert_eq!(ucb(1.0, 4.0, 0.0), 1.0);
        assert_eq!(ucb(1.0, 4.0, 2.0), 5.0);
    }

    #[test]
    fn schedule_grows() {
        let s = AcquisitionSpec {
            ucb_schedule: true,
            ..Default::default()
        };
        assert!(s.tau(100) > s.tau(10));
        assert_eq!(AcquisitionSpec::default().tau(100), 2.0);
    }

    proptest! {
        #[test]
        fn translation_invariance(mu in -5.0..5.0f64, var in 0.0..4.0f64, best in -5.0..5.0f64, c in -10.0..10.0f64, bias in 0.0..1.0f64) {
            prop_assert!((ei(mu, var, best) - ei(mu + c, var, best + c)).abs() < 1e-9);
            prop_assert!((pi(mu, var, best, bias) - pi(mu + c, var, best + c, bias)).abs() < 1e-9);
        }

        #[test]
        fn ei_nonnegative_and_monotone_in_sigma(mu in -3.0..0.0f64, s1 in 0.0..3.0f64, ds in 0.0..3.0f64) {
            let a = ei(mu, s1 * s1, 0.0);
            let b = ei(mu, (s1 + ds).powi(2), 0.0);
            prop_assert!(a >= 0.0);
            prop_assert!(b + 1e-12 >= a);
        }

        #[test]
        fn pi_nonincreasing_in_bias(mu in -3.0..3.0f64, var in 0.01..4.0f64, b1 in 0.0..2.0f64, db in 0.0..2.0f64) {
            prop_assert!(pi(mu, var, 0.0, b1 + db) <= pi(mu, var, 0.0, b1) + 1e-15);
        }

        #[test]
        fn ucb_nondecreasing_in_tau(mu in -3.0..3.0f64, var in 0.0..4.0f64, t1 in 0.0..5.0f64, dt in 0.0..5.0f64) {
            prop_assert!(ucb(mu, var, t1 + dt) >= ucb(mu, var, t1));
        }
    }
}
