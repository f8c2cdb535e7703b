use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::math::log_normal_pdf;
use crate::model::{
    check_theta, Bounds, LatentModel, LatentPoint, LatentSpace, LogDensity, ModelCapabilities,
    ParameterVector,
};

/// Lower bound on the mixing weight distance from 0 and 1, and on σ.
pub const MIXTURE_FLOOR: f64 = 1e-6;

/// Variance floor applied by the EM M-step.
const EM_VARIANCE_FLOOR: f64 = 1e-12;

/// Two-component Gaussian mixture with a shared standard deviation.
///
/// Parameters are `(π, μ1, μ2, σ)`; the latent `w_i ∈ {0, 1}` assigns
/// observation `i` to component 1 (`w_i = 0`, weight `π`) or component 2.
#[derive(Debug, Clone)]
pub struct GaussianMixtureModel {
    data: Vec<f64>,
}

/// Named view of a mixture parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureParams {
    pub pi: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub sigma: f64,
}

impl MixtureParams {
    pub fn to_vector(self) -> Result<ParameterVector> {
        ParameterVector::new(vec![self.pi, self.mu1, self.mu2, self.sigma])
    }

    pub fn from_vector(theta: &ParameterVector) -> Self {
        Self {
            pi: theta[0],
            mu1: theta[1],
            mu2: theta[2],
            sigma: theta[3],
        }
    }
}

/// Builds a mixture model over `data`. The initial parameters are validated
/// and returned alongside the model.
pub fn make_gaussian_mixture(
    data: Vec<f64>,
    pi: f64,
    mu1: f64,
    mu2: f64,
    sigma: f64,
) -> Result<(GaussianMixtureModel, ParameterVector)> {
    let model = GaussianMixtureModel::new(data)?;
    let theta = MixtureParams { pi, mu1, mu2, sigma }.to_vector()?;
    check_theta(&model, &theta)?;
    Ok((model, theta))
}

impl GaussianMixtureModel {
    pub fn new(data: Vec<f64>) -> Result<Self> {
        if data.is_empty() {
            return Err(contract("mixture needs at least one observation"));
        }
        if data.iter().any(|y| !y.is_finite()) {
            return Err(contract("mixture data must be finite"));
        }
        Ok(Self { data })
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Per-observation `[log π + log N(y_i; μ1, σ²), log(1−π) + log N(y_i; μ2, σ²)]`.
    pub fn component_log_terms(&self, theta: &ParameterVector) -> Result<Vec<[f64; 2]>> {
        check_theta(self, theta)?;
        let p = MixtureParams::from_vector(theta);
        let (lw1, lw2) = (p.pi.ln(), (1.0 - p.pi).ln());
        Ok(self
            .data
            .iter()
            .map(|&y| {
                [
                    lw1 + log_normal_pdf(y, p.mu1, p.sigma),
                    lw2 + log_normal_pdf(y, p.mu2, p.sigma),
                ]
            })
            .collect())
    }

    /// Posterior probability that each observation belongs to component 1.
    pub fn responsibilities(&self, theta: &ParameterVector) -> Result<Vec<f64>> {
        Ok(self
            .component_log_terms(theta)?
            .into_iter()
            .map(|[a, b]| 1.0 / (1.0 + (b - a).exp()))
            .collect())
    }

    fn sum_terms(terms: &[[f64; 2]], idx: &[usize]) -> f64 {
        terms.iter().zip(idx).map(|(t, &k)| t[k]).sum()
    }

    /// One EM update of `theta`.
    pub fn em_step(&self, theta: &ParameterVector) -> Result<ParameterVector> {
        let old = MixtureParams::from_vector(theta);
        let r = self.responsibilities(theta)?;
        let n = self.data.len() as f64;
        let (mut s1, mut s2, mut sy1, mut sy2) = (0.0, 0.0, 0.0, 0.0);
        for (&ri, &y) in r.iter().zip(&self.data) {
            s1 += ri;
            s2 += 1.0 - ri;
            sy1 += ri * y;
            sy2 += (1.0 - ri) * y;
        }
        let pi = (s1 / n).clamp(MIXTURE_FLOOR, 1.0 - MIXTURE_FLOOR);
        let mu1 = if s1 > 0.0 { sy1 / s1 } else { old.mu1 };
        let mu2 = if s2 > 0.0 { sy2 / s2 } else { old.mu2 };
        let ss: f64 = r
            .iter()
            .zip(&self.data)
            .map(|(&ri, &y)| ri * (y - mu1).powi(2) + (1.0 - ri) * (y - mu2).powi(2))
            .sum();
        let var = (ss / n).max(EM_VARIANCE_FLOOR);
        MixtureParams {
            pi,
            mu1,
            mu2,
            sigma: var.sqrt().max(MIXTURE_FLOOR),
        }
        .to_vector()
    }
}

impl LatentModel for GaussianMixtureModel {
    fn name(&self) -> &'static str {
        "mixture"
    }

    fn parameter_names(&self) -> Vec<String> {
        ["pi", "mu1", "mu2", "sigma"].map(String::from).to_vec()
    }

    fn parameter_bounds(&self) -> Vec<Bounds> {
        vec![
            Bounds::new(MIXTURE_FLOOR, 1.0 - MIXTURE_FLOOR),
            Bounds::UNBOUNDED,
            Bounds::UNBOUNDED,
            Bounds::at_least(MIXTURE_FLOOR),
        ]
    }

    fn latent_space(&self) -> LatentSpace {
        LatentSpace::finite_discrete(vec![2; self.data.len()]).expect("n > 0")
    }

    fn capabilities(&self) -> ModelCapabilities {
        ModelCapabilities {
            has_analytic_marginal: true,
            has_exact_posterior_sampler: true,
        }
    }

    fn log_joint(&self, theta: &ParameterVector, w: &LatentPoint) -> Result<LogDensity> {
        self.latent_space().check(w)?;
        let terms = self.component_log_terms(theta)?;
        let LatentPoint::Discrete(idx) = w else {
            unreachable!("checked above")
        };
        LogDensity::new(Self::sum_terms(&terms, idx))
    }

    fn log_joint_many(&self, theta: &ParameterVector, points: &[LatentPoint]) -> Result<Vec<f64>> {
        let terms = self.component_log_terms(theta)?;
        let space = self.latent_space();
        points
            .iter()
            .map(|w| {
                space.check(w)?;
                let LatentPoint::Discrete(idx) = w else {
                    unreachable!("checked above")
                };
                Ok(Self::sum_terms(&terms, idx))
            })
            .collect()
    }

    fn log_marginal_analytic(&self, theta: &ParameterVector) -> Result<LogDensity> {
        let total = self
            .component_log_terms(theta)?
            .into_iter()
            .map(|[a, b]| {
                let m = a.max(b);
                m + ((a - m).exp() + (b - m).exp()).ln()
            })
            .sum();
        LogDensity::new(total)
    }

    fn coordinate_log_weights(&self, theta: &ParameterVector) -> Result<Vec<Vec<f64>>> {
        Ok(self
            .component_log_terms(theta)?
            .into_iter()
            .map(|t| t.to_vec())
            .collect())
    }
}

/// One row of an EM baseline run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmRecord {
    pub iter: usize,
    pub theta: ParameterVector,
    pub log_marginal: f64,
}

/// Runs EM from `theta0` until the largest parameter change drops below
/// `tolerance` or `max_iterations` updates have been made. Row 0 is the start.
pub fn run_em(
    model: &GaussianMixtureModel,
    theta0: &ParameterVector,
    tolerance: f64,
    max_iterations: usize,
) -> Result<Vec<EmRecord>> {
    let mut theta = theta0.clone();
    let mut rows = vec![EmRecord {
        iter: 0,
        theta: theta.clone(),
        log_marginal: model.log_marginal_analytic(&theta)?.get(),
    }];
    for iter in 1..=max_iterations {
        let next = model.em_step(&theta)?;
        let change = next
            .values()
            .iter()
            .zip(theta.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        theta = next;
        rows.push(EmRecord {
            iter,
            theta: theta.clone(),
            log_marginal: model.log_marginal_analytic(&theta)?.get(),
        });
        if change < tolerance {
            break;
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::logsumexp;

    fn data() -> Vec<f64> {
        vec![-2.1, -1.7, 0.3, 1.9, 2.4]
    }

    fn theta(pi: f64, mu1: f64, mu2: f64, sigma: f64) -> ParameterVector {
        MixtureParams { pi, mu1, mu2, sigma }.to_vector().unwrap()
    }

    #[test]
    fn latent_space_is_one_binary_coordinate_per_point() {
        let m = GaussianMixtureModel::new(data()).unwrap();
        assert_eq!(
            m.latent_space(),
            LatentSpace::finite_discrete(vec![2, 2, 2, 2, 2]).unwrap()
        );
    }

    #[test]
    fn log_joint_matches_hand_sum() {
        let m = GaussianMixtureModel::new(data()).unwrap();
        let th = theta(0.3, -1.0, 1.5, 0.8);
        let w = vec![0, 1, 1, 0, 1];
        let mut expect = 0.0;
        for (y, &k) in data().iter().zip(&w) {
            let (p, mu) = if k == 0 { (0.3, -1.0) } else { (0.7, 1.5) };
            let dens = (-(y - mu) * (y - mu) / (2.0 * 0.64)).exp()
                / (0.8 * (2.0 * std::f64::consts::PI).sqrt());
            expect += (p * dens).ln();
        }
        let got = m.log_joint(&th, &LatentPoint::Discrete(w)).unwrap().get();
        assert!((got - expect).abs() < 1e-12, "{got} vs {expect}");
    }

    #[test]
    fn batch_path_matches_pointwise() {
        let m = GaussianMixtureModel::new(data()).unwrap();
        let th = theta(0.6, 0.0, 1.0, 1.3);
        let pts: Vec<_> = (0..32usize)
            .map(|b| LatentPoint::Discrete((0..5).map(|i| (b >> i) & 1).collect()))
            .collect();
        let many = m.log_joint_many(&th, &pts).unwrap();
        for (p, v) in pts.iter().zip(many) {
            assert_eq!(m.log_joint(&th, p).unwrap().get().to_bits(), v.to_bits());
        }
    }

    #[test]
    fn equal_means_reduce_to_single_gaussian() {
        let m = GaussianMixtureModel::new(data()).unwrap();
        for pi in [0.1, 0.5, 0.93] {
            let th = theta(pi, 0.4, 0.4, 1.2);
            let l = m.log_marginal_analytic(&th).unwrap().get();
            let single: f64 = data().iter().map(|&y| log_normal_pdf(y, 0.4, 1.2)).sum();
            assert!((l - single).abs() < 1e-12);
        }
        // n = 1: responsibility equals π regardless of y
        let one = GaussianMixtureModel::new(vec![3.7]).unwrap();
        let r = one.responsibilities(&theta(0.35, 1.0, 1.0, 2.0)).unwrap();
        assert!((r[0] - 0.35).abs() < 1e-15);
    }

    #[test]
    fn enumerated_marginal_matches_closed_form() {
        let m = GaussianMixtureModel::new(data()).unwrap();
        let th = theta(0.45, -1.5, 2.0, 0.9);
        let all: Vec<f64> = (0..32usize)
            .map(|b| {
                let w = LatentPoint::Discrete((0..5).map(|i| (b >> i) & 1).collect());
                m.log_joint(&th, &w).unwrap().get()
            })
            .collect();
        let l = m.log_marginal_analytic(&th).unwrap().get();
        assert!((logsumexp(&all) - l).abs() < 1e-10);
    }

    #[test]
    fn huge_sigma_flattens_responsibilities() {
        let m = GaussianMixtureModel::new(data()).unwrap();
        let r = m.responsibilities(&theta(0.3, -2.0, 2.0, 1e6)).unwrap();
        assert!(r.iter().all(|ri| (ri - 0.3).abs() < 1e-6));
    }

    #[test]
    fn label_swap_symmetry() {
        let m = GaussianMixtureModel::new(data()).unwrap();
        let a = m.log_marginal_analytic(&theta(0.3, -1.0, 2.0, 1.1)).unwrap().get();
        let b = m.log_marginal_analytic(&theta(0.7, 2.0, -1.0, 1.1)).unwrap().get();
        assert!((a - b).abs() <= 1e-12 * a.abs());
    }

    #[test]
    fn contract_violations() {
        assert!(GaussianMixtureModel::new(vec![]).is_err());
        assert!(GaussianMixtureModel::new(vec![f64::NAN]).is_err());
        assert!(make_gaussian_mixture(data(), 0.0, 0.0, 1.0, 1.0).is_err());
        assert!(make_gaussian_mixture(data(), 0.5, 0.0, 1.0, 1e-7).is_err());
        let m = GaussianMixtureModel::new(data()).unwrap();
        let w = LatentPoint::Discrete(vec![0; 5]);
        assert!(m.log_joint(&ParameterVector::new(vec![0.5, 0.0, 1.0]).unwrap(), &w).is_err());
    }

    #[test]
    fn em_symmetric_line_is_fixed() {
        let m = GaussianMixtureModel::new(data()).unwrap();
        let next = m.em_step(&theta(0.5, 0.7, 0.7, 1.0)).unwrap();
        let mean = data().iter().sum::<f64>() / 5.0;
        assert!((next[0] - 0.5).abs() < 1e-15);
        assert!((next[1] - mean).abs() < 1e-12);
        assert!((next[2] - mean).abs() < 1e-12);
    }

    #[test]
    fn em_converges_to_fixed_point() {
        let m = GaussianMixtureModel::new(data()).unwrap();
        let rows = run_em(&m, &theta(0.4, -1.0, 1.0, 1.0), 1e-10, 100_000).unwrap();
        for pair in rows.windows(2) {
            assert!(pair[1].log_marginal >= pair[0].log_marginal - 1e-10);
        }
        let last = &rows.last().unwrap().theta;
        let again = m.em_step(last).unwrap();
        for (a, b) in again.values().iter().zip(last.values()) {
            assert!((a - b).abs() < 1e-8);
        }
    }
}
