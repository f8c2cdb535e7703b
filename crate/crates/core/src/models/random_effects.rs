use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::math::log_normal_pdf;
use crate::model::{
    check_theta, Bounds, LatentModel, LatentPoint, LatentSpace, LogDensity, ModelCapabilities,
    ParameterVector,
};

pub const RANDOM_EFFECTS_FLOOR: f64 = 1e-6;

/// Observations `y_j ~ Normal(μ + b, σ²)` sharing one latent effect
/// `b ~ Normal(0, τ²)`. Parameters are `(μ, τ, σ)`.
#[derive(Debug, Clone)]
pub struct RandomEffectsModel {
    data: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomEffectsParams {
    pub mu: f64,
    pub tau: f64,
    pub sigma: f64,
}

impl RandomEffectsParams {
    pub fn to_vector(self) -> Result<ParameterVector> {
        ParameterVector::new(vec![self.mu, self.tau, self.sigma])
    }

    pub fn from_vector(theta: &ParameterVector) -> Self {
        Self {
            mu: theta[0],
            tau: theta[1],
            sigma: theta[2],
        }
    }
}

pub fn make_random_effects(
    data: Vec<f64>,
    mu: f64,
    tau: f64,
    sigma: f64,
) -> Result<(RandomEffectsModel, ParameterVector)> {
    let model = RandomEffectsModel::new(data)?;
    let theta = RandomEffectsParams { mu, tau, sigma }.to_vector()?;
    check_theta(&model, &theta)?;
    Ok((model, theta))
}

impl RandomEffectsModel {
    pub fn new(data: Vec<f64>) -> Result<Self> {
        if data.is_empty() {
            return Err(contract("random-effects model needs at least one observation"));
        }
        if data.iter().any(|y| !y.is_finite()) {
            return Err(contract("random-effects data must be finite"));
        }
        Ok(Self { data })
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Conjugate posterior of the effect: `(mean, variance)`.
    pub fn effect_posterior(&self, theta: &ParameterVector) -> Result<(f64, f64)> {
        check_theta(self, theta)?;
        let p = RandomEffectsParams::from_vector(theta);
        let m = self.data.len() as f64;
        let precision = 1.0 / (p.tau * p.tau) + m / (p.sigma * p.sigma);
        let resid: f64 = self.data.iter().map(|y| y - p.mu).sum();
        let var = 1.0 / precision;
        Ok((resid / (p.sigma * p.sigma) * var, var))
    }
}

impl LatentModel for RandomEffectsModel {
    fn name(&self) -> &'static str {
        "random_effects"
    }

    fn parameter_names(&self) -> Vec<String> {
        ["mu", "tau", "sigma"].map(String::from).to_vec()
    }

    fn parameter_bounds(&self) -> Vec<Bounds> {
        vec![
            Bounds::UNBOUNDED,
            Bounds::at_least(RANDOM_EFFECTS_FLOOR),
            Bounds::at_least(RANDOM_EFFECTS_FLOOR),
        ]
    }

    fn latent_space(&self) -> LatentSpace {
        LatentSpace::continuous(1).expect("dimension 1")
    }

    fn capabilities(&self) -> ModelCapabilities {
        ModelCapabilities {
            has_analytic_marginal: true,
            has_exact_posterior_sampler: false,
        }
    }

    fn log_joint(&self, theta: &ParameterVector, w: &LatentPoint) -> Result<LogDensity> {
        check_theta(self, theta)?;
        self.latent_space().check(w)?;
        let LatentPoint::Continuous(b) = w else {
            unreachable!("checked above")
        };
        let p = RandomEffectsParams::from_vector(theta);
        let b = b[0];
        let obs: f64 = self
            .data
            .iter()
            .map(|&y| log_normal_pdf(y, p.mu + b, p.sigma))
            .sum();
        LogDensity::new(log_normal_pdf(b, 0.0, p.tau) + obs)
    }

    /// `y ~ Normal(μ·1, σ²I + τ²·11ᵀ)` via the rank-one determinant and
    /// inverse identities.
    fn log_marginal_analytic(&self, theta: &ParameterVector) -> Result<LogDensity> {
        check_theta(self, theta)?;
        let p = RandomEffectsParams::from_vector(theta);
        let m = self.data.len() as f64;
        let s2 = p.sigma * p.sigma;
        let t2 = p.tau * p.tau;
        let denom = s2 + m * t2;
        let (sum_d, sum_d2) = self.data.iter().fold((0.0, 0.0), |(s, q), &y| {
            let d = y - p.mu;
            (s + d, q + d * d)
        });
        let log_det = (m - 1.0) * s2.ln() + denom.ln();
        let quad = (sum_d2 - t2 * sum_d * sum_d / denom) / s2;
        let value = -0.5 * m * (2.0 * std::f64::consts::PI).ln() - 0.5 * log_det - 0.5 * quad;
        LogDensity::new(value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::log_normal_pdf_var;

    fn th(mu: f64, tau: f64, sigma: f64) -> ParameterVector {
        RandomEffectsParams { mu, tau, sigma }.to_vector().unwrap()
    }

    #[test]
    fn single_observation_marginal_and_posterior() {
        let (m, t) = make_random_effects(vec![0.0], 0.0, 1.0, 1.0).unwrap();
        let l = m.log_marginal_analytic(&t).unwrap().get();
        assert!((l - log_normal_pdf_var(0.0, 0.0, 2.0)).abs() < 1e-14);
        let (mean, var) = m.effect_posterior(&t).unwrap();
        assert_eq!(mean, 0.0);
        assert!((var - 0.5).abs() < 1e-15);
    }

    #[test]
    fn tiny_tau_gives_iid_product() {
        let data = vec![0.3, -1.2, 2.2, 0.9];
        let m = RandomEffectsModel::new(data.clone()).unwrap();
        let l = m.log_marginal_analytic(&th(0.4, 1e-6, 1.3)).unwrap().get();
        let iid: f64 = data.iter().map(|&y| log_normal_pdf(y, 0.4, 1.3)).sum();
        assert!(((l - iid) / iid).abs() < 1e-8);
    }

    #[test]
    fn marginal_matches_dense_gaussian_for_two_points() {
        // Two observations: covariance [[s2+t2, t2], [t2, s2+t2]].
        let data = vec![0.7, -0.4];
        let m = RandomEffectsModel::new(data.clone()).unwrap();
        let (mu, tau, sigma) = (0.2, 0.8, 1.1);
        let (s2, t2) = (sigma * sigma, tau * tau);
        let (a, b) = (s2 + t2, t2);
        let det = a * a - b * b;
        let (d0, d1) = (data[0] - mu, data[1] - mu);
        let quad = (a * d0 * d0 - 2.0 * b * d0 * d1 + a * d1 * d1) / det;
        let expect = -(2.0 * std::f64::consts::PI).ln() - 0.5 * det.ln() - 0.5 * quad;
        let got = m.log_marginal_analytic(&th(mu, tau, sigma)).unwrap().get();
        assert!((got - expect).abs() < 1e-13);
    }

    #[test]
    fn latent_space_is_one_dimensional() {
        let m = RandomEffectsModel::new(vec![1.0]).unwrap();
        assert_eq!(m.latent_space(), LatentSpace::continuous(1).unwrap());
        assert!(!m.capabilities().has_exact_posterior_sampler);
        assert!(m.coordinate_log_weights(&th(0.0, 1.0, 1.0)).is_err());
    }

    #[test]
    fn bounds_enforced() {
        assert!(make_random_effects(vec![0.0], 0.0, 0.0, 1.0).is_err());
        assert!(make_random_effects(vec![0.0], 0.0, 1.0, 1e-7).is_err());
        assert!(make_random_effects(vec![], 0.0, 1.0, 1.0).is_err());
    }
}
