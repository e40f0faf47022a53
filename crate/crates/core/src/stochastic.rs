//! Alternative stochasticity mechanisms, used as ablation baselines against
//! the denoising multiplicative unit.
//!
//! Two mechanisms:
//!
//! - annealed gradient noise: after each backward pass, add
//!   `N(0, sigma_t^2)` to every gradient entry, with
//!   `sigma_t^2 = eta / (1 + t)^0.55` so the perturbation decays over
//!   training;
//! - stochastic gate weights: each multiplicative-unit weight is a gate
//!   `w = clamp(mu + eps, 0, 1)` with `eps ~ N(0, 0.25)` resampled per step.
//!   `mu` itself is never clamped. A penalty `lambda_l0 * sum Phi(mu / 0.5)`
//!   estimates the expected number of open gates (the probability each gate
//!   is nonzero under the noise) and pushes gates shut.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::matrix::Matrix;
use crate::stats::norm_cdf;

/// Gate noise standard deviation (variance 0.25).
pub const STG_SIGMA: f64 = 0.5;

/// Annealed gradient-noise variance at iteration `t` (0-based):
/// `eta / (1 + t)^0.55`.
pub fn grad_noise_sigma2(eta: f64, t: u64) -> f64 {
    eta / (1.0 + t as f64).powf(0.55)
}

/// Add elementwise `N(0, sigma2)` noise to a gradient in place.
pub fn apply_gradient_noise(grad: &mut Matrix, sigma2: f64, rng: &mut impl Rng) {
    if sigma2 <= 0.0 {
        return;
    }
    let normal = Normal::new(0.0, sigma2.sqrt()).expect("finite std");
    for v in grad.data_mut() {
        *v += normal.sample(rng);
    }
}

/// Effective gate weights for one step: `clamp(mu + eps, 0, 1)` with
/// `eps ~ N(0, STG_SIGMA^2)` i.i.d. per entry.
pub fn stg_weight(mu: &Matrix, rng: &mut impl Rng) -> Matrix {
    let normal = Normal::new(0.0, STG_SIGMA).expect("finite std");
    let mut w = mu.clone();
    for v in w.data_mut() {
        *v = (*v + normal.sample(rng)).clamp(0.0, 1.0);
    }
    w
}

/// Expected open-gate penalty: `lambda_l0 * sum_i Phi(mu_i / STG_SIGMA)`.
/// Each term is the probability that the gate `clamp(mu + eps, 0, 1)` is
/// strictly positive.
pub fn stg_l0_penalty(mu: &Matrix, lambda_l0: f64) -> f64 {
    lambda_l0 * mu.iter().map(|&m| norm_cdf(m / STG_SIGMA)).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn sigma2_decays_and_matches_spot_value() {
        let eta = 10.0;
        let mut prev = f64::INFINITY;
        for t in [0u64, 1, 10, 100, 1023, 10_000, 1_000_000] {
            let s = grad_noise_sigma2(eta, t);
            assert!(s < prev, "variance must strictly decrease");
            prev = s;
        }
        // t = 1023: 10 / 1024^0.55 = 10 / 2^5.5
        let want = 10.0 / 2f64.powf(5.5);
        assert!((grad_noise_sigma2(eta, 1023) - want).abs() < 1e-12);
        assert!((want - 0.22097087).abs() < 1e-8);
    }

    #[test]
    fn gradient_noise_perturbs_with_right_scale() {
        let mut rng = stream(7, "grad-noise");
        let mut g = Matrix::zeros(100, 100);
        apply_gradient_noise(&mut g, 4.0, &mut rng);
        let var = g.iter().map(|&v| v * v).sum::<f64>() / g.len() as f64;
        assert!((var - 4.0).abs() < 0.2, "empirical variance {var} far from 4");
    }

    #[test]
    fn zero_sigma_leaves_gradient_untouched() {
        let mut rng = stream(8, "grad-noise");
        let mut g = Matrix::row_vector(&[1.0, -2.0, 3.0]);
        let before = g.clone();
        apply_gradient_noise(&mut g, 0.0, &mut rng);
        assert_eq!(g, before);
    }

    #[test]
    fn gate_weights_stay_in_unit_interval() {
        let mut rng = stream(9, "stg-eps");
        let mu = Matrix::row_vector(&[-3.0, 0.0, 0.5, 1.0, 4.0]);
        for _ in 0..100 {
            let w = stg_weight(&mu, &mut rng);
            assert!(w.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
        // Far-negative mu gates stay shut, far-positive stay open.
        let w = stg_weight(&mu, &mut rng);
        assert_eq!(w.at(0, 0), 0.0);
        assert_eq!(w.at(0, 4), 1.0);
    }

    #[test]
    fn l0_penalty_matches_normal_cdf_table() {
        // Phi(1) for mu=0.5 (0.5/0.5), Phi(0) for mu=0, Phi(-20) for mu=-10.
        let mu = Matrix::row_vector(&[0.5]);
        assert!((stg_l0_penalty(&mu, 1.0) - 0.841344746068543).abs() < 1e-6);
        let mu = Matrix::row_vector(&[0.0]);
        assert!((stg_l0_penalty(&mu, 1.0) - 0.5).abs() < 1e-8);
        let mu = Matrix::row_vector(&[-10.0]);
        assert!(stg_l0_penalty(&mu, 1.0) < 1e-12);
        // Scales linearly in lambda and sums over entries.
        let mu = Matrix::row_vector(&[0.0, 0.0]);
        assert!((stg_l0_penalty(&mu, 0.01) - 0.01).abs() < 1e-10);
    }
}
