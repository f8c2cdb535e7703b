//! Monte Carlo estimates of the truncated likelihood-ratio integrals and the
//! sequential decision built on them.
//!
//! For two parameter values `θ1, θ2` with posteriors `P_θ1(w|y)` and
//! `P_θ2(w|y)`:
//!
//! ```text
//! I1 = E_{θ1}[min(1, L(θ2,w) / L(θ1,w))]
//! I2 = E_{θ2}[min(1, L(θ1,w) / L(θ2,w))]
//! ```
//!
//! and `L(θ1) < L(θ2)` exactly when `I1 > I2`. Both equal the shared overlap
//! mass divided by the respective marginal, so `I1 / I2 = L(θ2) / L(θ1)`.
//! Only joint densities and posterior draws are needed, never the marginals.

use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::math::{derive_seed, two_sided_z};
use crate::model::{check_theta, LatentModel, ParameterVector};
use crate::sampler::{ess_of_series, ChainConfig, PosteriorStream, SampleBatch, SamplerKind};

/// First batch size per side in [`compare_likelihoods`].
pub const INITIAL_BATCH: usize = 1024;

/// Monte Carlo estimate of one side of the inequality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncatedRatioEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_samples: usize,
    pub ess: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    /// `L(θ1) < L(θ2)`.
    FirstSmaller,
    /// `L(θ2) < L(θ1)`.
    SecondSmaller,
    Inconclusive,
}

impl Decision {
    pub fn as_str(self) -> &'static str {
        match self {
            Decision::FirstSmaller => "FirstSmaller",
            Decision::SecondSmaller => "SecondSmaller",
            Decision::Inconclusive => "Inconclusive",
        }
    }
}

impl std::str::FromStr for Decision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "FirstSmaller" => Ok(Decision::FirstSmaller),
            "SecondSmaller" => Ok(Decision::SecondSmaller),
            "Inconclusive" => Ok(Decision::Inconclusive),
            other => Err(contract(format!("unknown decision {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonResult {
    pub decision: Decision,
    pub est1: TruncatedRatioEstimate,
    pub est2: TruncatedRatioEstimate,
    /// Estimate of `log L(θ2) − log L(θ1)`; absent when an integral
    /// estimate is zero.
    pub log_lr_estimate: Option<f64>,
    pub log_lr_std_error: Option<f64>,
    pub z_statistic: f64,
    pub confidence: f64,
    /// Posterior draws used across both sides.
    pub samples_spent: usize,
}

/// `min(1, exp(delta_log))`, computed without overflow.
pub fn truncated_log_ratio(delta_log: f64) -> Result<f64> {
    if delta_log.is_nan() {
        return Err(contract("truncated ratio of NaN log difference"));
    }
    Ok(delta_log.min(0.0).exp())
}

/// Integrand value at one point given `log L(θa, w)` and `log L(θb, w)`.
///
/// A vanishing denominator gives 1 and a vanishing numerator gives 0; both
/// vanishing is an error.
pub fn truncated_integrand(log_a: f64, log_b: f64) -> Result<f64> {
    match (log_a == f64::NEG_INFINITY, log_b == f64::NEG_INFINITY) {
        (true, true) => Err(Error::DegenerateSupport),
        (true, false) => Ok(1.0),
        (false, true) => Ok(0.0),
        (false, false) => truncated_log_ratio(log_b - log_a),
    }
}

/// Summarizes integrand values. Unweighted MCMC values use the
/// autocorrelation ESS; exact draws count fully; weights use Kish's ESS.
pub fn estimate_from_values(
    values: &[f64],
    weights: Option<&[f64]>,
    kind: SamplerKind,
) -> Result<TruncatedRatioEstimate> {
    let n = values.len();
    if n == 0 {
        return Err(contract("no samples to estimate from"));
    }
    let (mean, var, ess) = match weights {
        Some(w) => {
            if w.len() != n {
                return Err(contract(format!(
                    "{} weights for {n} samples",
                    w.len()
                )));
            }
            if w.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                return Err(contract("weights must be positive and finite"));
            }
            let sw: f64 = w.iter().sum();
            let sw2: f64 = w.iter().map(|x| x * x).sum();
            let mean = w.iter().zip(values).map(|(a, v)| a * v).sum::<f64>() / sw;
            let var = w
                .iter()
                .zip(values)
                .map(|(a, v)| a * (v - mean) * (v - mean))
                .sum::<f64>()
                / sw;
            (mean, var, (sw * sw / sw2).min(n as f64))
        }
        None => {
            let mean = values.iter().sum::<f64>() / n as f64;
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let ess = match kind {
                SamplerKind::Exact => n as f64,
                SamplerKind::Mcmc => ess_of_series(values),
            };
            (mean, var, ess)
        }
    };
    // a [0, 1]-valued variable has variance at most 1/4
    let var = var.clamp(0.0, 0.25);
    Ok(TruncatedRatioEstimate {
        mean: mean.clamp(0.0, 1.0),
        std_error: (var / ess).sqrt(),
        n_samples: n,
        ess,
    })
}

fn integrand_values(
    model: &dyn LatentModel,
    theta_a: &ParameterVector,
    theta_b: &ParameterVector,
    points: &[crate::model::LatentPoint],
) -> Result<Vec<f64>> {
    let la = model.log_joint_many(theta_a, points)?;
    let lb = model.log_joint_many(theta_b, points)?;
    la.iter()
        .zip(&lb)
        .map(|(&a, &b)| truncated_integrand(a, b))
        .collect()
}

/// Estimates `E_{θa}[min(1, L(θb,w)/L(θa,w))]` from draws of the posterior
/// under `θa`.
pub fn estimate_truncated_integral(
    model: &dyn LatentModel,
    theta_a: &ParameterVector,
    theta_b: &ParameterVector,
    samples: &SampleBatch,
    weights: Option<&[f64]>,
) -> Result<TruncatedRatioEstimate> {
    if samples.points.is_empty() {
        return Err(contract("empty sample batch"));
    }
    let space = model.latent_space();
    for p in &samples.points {
        space.check(p)?;
    }
    let values = integrand_values(model, theta_a, theta_b, &samples.points)?;
    estimate_from_values(&values, weights, samples.kind)
}

/// `log L(θ2) − log L(θ1)` from the two integral estimates, with a
/// delta-method standard error.
pub fn likelihood_ratio_from_integrals(
    est1: &TruncatedRatioEstimate,
    est2: &TruncatedRatioEstimate,
) -> Result<(f64, f64)> {
    if !(est1.mean > 0.0) {
        return Err(Error::UndefinedRatio { which: "est1" });
    }
    if !(est2.mean > 0.0) {
        return Err(Error::UndefinedRatio { which: "est2" });
    }
    let log_lr = est1.mean.ln() - est2.mean.ln();
    let se = ((est1.std_error / est1.mean).powi(2) + (est2.std_error / est2.mean).powi(2)).sqrt();
    Ok((log_lr, se))
}

struct Side<'m> {
    stream: PosteriorStream<'m>,
    values: Vec<f64>,
}

/// Decides whether `L(θ1) < L(θ2)` from two independent posterior streams.
///
/// Draws `INITIAL_BATCH` points per side, then doubles the per-side count
/// until the two-sided z-test on `I1 − I2` clears the `confidence` level or
/// `max_samples` per side is reached.
pub fn compare_likelihoods(
    model: &dyn LatentModel,
    theta1: &ParameterVector,
    theta2: &ParameterVector,
    sampler_config: &ChainConfig,
    confidence: f64,
    max_samples: usize,
) -> Result<ComparisonResult> {
    if !(confidence > 0.5 && confidence < 1.0) {
        return Err(contract(format!(
            "confidence {confidence} outside (0.5, 1)"
        )));
    }
    if max_samples < INITIAL_BATCH {
        return Err(contract(format!(
            "max_samples {max_samples} below the initial batch of {INITIAL_BATCH}"
        )));
    }
    check_theta(model, theta1)?;
    check_theta(model, theta2)?;
    let z_crit = two_sided_z(confidence);

    let side_config = |tag: u64| ChainConfig {
        seed: derive_seed(sampler_config.seed, &[tag]),
        ..sampler_config.clone()
    };
    let mut sides = [
        Side {
            stream: PosteriorStream::new(model, theta1, &side_config(1))?,
            values: Vec::new(),
        },
        Side {
            stream: PosteriorStream::new(model, theta2, &side_config(2))?,
            values: Vec::new(),
        },
    ];

    let mut target = INITIAL_BATCH;
    loop {
        for (k, side) in sides.iter_mut().enumerate() {
            let (a, b) = if k == 0 { (theta1, theta2) } else { (theta2, theta1) };
            let fresh = side.stream.draw(target - side.values.len())?;
            side.values
                .extend(integrand_values(model, a, b, &fresh)?);
        }
        let est1 = estimate_from_values(&sides[0].values, None, sides[0].stream.kind())?;
        let est2 = estimate_from_values(&sides[1].values, None, sides[1].stream.kind())?;
        let diff = est1.mean - est2.mean;
        let se = est1.std_error.hypot(est2.std_error);
        let z = if se > 0.0 {
            diff / se
        } else if diff == 0.0 {
            0.0
        } else {
            diff.signum() * f64::INFINITY
        };
        let decision = if z >= z_crit {
            Some(Decision::FirstSmaller)
        } else if z <= -z_crit {
            Some(Decision::SecondSmaller)
        } else if target >= max_samples {
            Some(Decision::Inconclusive)
        } else {
            None
        };
        if let Some(decision) = decision {
            let lr = likelihood_ratio_from_integrals(&est1, &est2).ok();
            return Ok(ComparisonResult {
                decision,
                est1,
                est2,
                log_lr_estimate: lr.map(|p| p.0),
                log_lr_std_error: lr.map(|p| p.1),
                // keep the report JSON-representable
                z_statistic: z.clamp(-f64::MAX, f64::MAX),
                confidence,
                samples_spent: 2 * target,
            });
        }
        target = (2 * target).min(max_samples);
    }
}
