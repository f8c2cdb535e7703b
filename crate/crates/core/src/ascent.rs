//! Proposal-based likelihood ascent.
//!
//! Each iteration proposes `θ*` near the current estimate and moves there
//! only when [`compare_likelihoods`] concludes `L(θ) < L(θ*)`. The proposal
//! scale grows after an accepted move and shrinks otherwise.

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::estimator::{compare_likelihoods, Decision, INITIAL_BATCH};
use crate::math::derive_seed;
use crate::model::{check_theta, Bounds, LatentModel, ParameterVector};
use crate::sampler::ChainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AscentConfig {
    pub initial_scale: f64,
    pub shrink: f64,
    pub grow: f64,
    pub min_scale: f64,
    pub max_iterations: usize,
    pub comparison_confidence: f64,
    /// Per-side sample budget of each comparison.
    pub comparison_budget: usize,
    pub seed: u64,
}

impl AscentConfig {
    pub const DEFAULT_SHRINK: f64 = 0.9;
    pub const DEFAULT_GROW: f64 = 1.5;
    pub const DEFAULT_MIN_SCALE: f64 = 1e-4;
    pub const DEFAULT_CONFIDENCE: f64 = 0.95;

    pub fn new(initial_scale: f64, max_iterations: usize, comparison_budget: usize, seed: u64) -> Self {
        Self {
            initial_scale,
            shrink: Self::DEFAULT_SHRINK,
            grow: Self::DEFAULT_GROW,
            min_scale: Self::DEFAULT_MIN_SCALE,
            max_iterations,
            comparison_confidence: Self::DEFAULT_CONFIDENCE,
            comparison_budget,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.min_scale > 0.0 && self.min_scale < self.initial_scale) {
            return Err(contract("need 0 < min_scale < initial_scale"));
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(contract("shrink must lie in (0, 1)"));
        }
        if !(self.grow >= 1.0 && self.grow.is_finite()) {
            return Err(contract("grow must be at least 1"));
        }
        if !(self.comparison_confidence > 0.5 && self.comparison_confidence < 1.0) {
            return Err(contract("comparison_confidence must lie in (0.5, 1)"));
        }
        if self.comparison_budget < INITIAL_BATCH {
            return Err(contract(format!(
                "comparison_budget must be at least {INITIAL_BATCH}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AscentRecord {
    pub iter: usize,
    pub theta: ParameterVector,
    pub proposed: ParameterVector,
    pub decision: Decision,
    /// Proposal scale used at this iteration.
    pub scale: f64,
    pub accepted: bool,
    /// Analytic `log L(theta)` when the model provides one.
    pub log_marginal_analytic: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    ScaleFloor,
    IterationCap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AscentTrace {
    pub iterations: Vec<AscentRecord>,
    pub final_theta: ParameterVector,
    /// `None` only on a partial trace attached to an error.
    pub terminated_by: Option<Termination>,
}

/// Folds `x` into `[lower, upper]` by reflection at the finite ends.
pub fn reflect_into(x: f64, b: Bounds) -> Result<f64> {
    if b.lower > b.upper || b.lower.is_nan() || b.upper.is_nan() {
        return Err(contract(format!(
            "empty feasible interval [{}, {}]",
            b.lower, b.upper
        )));
    }
    let (lo, hi) = (b.lower, b.upper);
    Ok(match (lo.is_finite(), hi.is_finite()) {
        (true, true) => {
            let width = hi - lo;
            if width == 0.0 {
                lo
            } else {
                let y = (x - lo).rem_euclid(2.0 * width);
                let y = if y > width { 2.0 * width - y } else { y };
                (lo + y).clamp(lo, hi)
            }
        }
        (true, false) => {
            if x < lo {
                2.0 * lo - x
            } else {
                x
            }
        }
        (false, true) => {
            if x > hi {
                2.0 * hi - x
            } else {
                x
            }
        }
        (false, false) => x,
    })
}

/// `theta` plus `N(0, scale²)` noise per coordinate, reflected into bounds.
pub fn gaussian_propose(
    theta: &ParameterVector,
    scale: f64,
    bounds: &[Bounds],
    rng_seed: u64,
) -> Result<ParameterVector> {
    if bounds.len() != theta.len() {
        return Err(contract("one bound per parameter coordinate required"));
    }
    if !(scale >= 0.0 && scale.is_finite()) {
        return Err(contract("proposal scale must be nonnegative and finite"));
    }
    for (&v, b) in theta.values().iter().zip(bounds) {
        if b.lower > b.upper {
            return Err(contract(format!(
                "empty feasible interval [{}, {}]",
                b.lower, b.upper
            )));
        }
        if !b.contains(v) {
            return Err(contract(format!("current value {v} out of bounds")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let out = theta
        .values()
        .iter()
        .zip(bounds)
        .map(|(&v, &b)| {
            let z: f64 = StandardNormal.sample(&mut rng);
            reflect_into(v + scale * z, b)
        })
        .collect::<Result<Vec<_>>>()?;
    ParameterVector::new(out)
}

/// Source of candidate parameters.
pub trait Proposer {
    fn propose(
        &mut self,
        theta: &ParameterVector,
        scale: f64,
        bounds: &[Bounds],
        seed: u64,
    ) -> Result<ParameterVector>;
}

/// The default spherical Gaussian proposal.
#[derive(Debug, Default, Clone, Copy)]
pub struct GaussianProposer;

impl Proposer for GaussianProposer {
    fn propose(
        &mut self,
        theta: &ParameterVector,
        scale: f64,
        bounds: &[Bounds],
        seed: u64,
    ) -> Result<ParameterVector> {
        gaussian_propose(theta, scale, bounds, seed)
    }
}

/// Runs the ascent with Gaussian proposals.
pub fn maximize(
    model: &dyn LatentModel,
    theta0: &ParameterVector,
    config: &AscentConfig,
    sampler: &ChainConfig,
) -> Result<AscentTrace> {
    maximize_with(model, theta0, config, sampler, &mut GaussianProposer)
}

pub fn maximize_with(
    model: &dyn LatentModel,
    theta0: &ParameterVector,
    config: &AscentConfig,
    sampler: &ChainConfig,
    proposer: &mut dyn Proposer,
) -> Result<AscentTrace> {
    config.validate()?;
    check_theta(model, theta0)?;
    let bounds = model.parameter_bounds();
    let analytic = model.capabilities().has_analytic_marginal;

    let mut trace = AscentTrace {
        iterations: Vec::new(),
        final_theta: theta0.clone(),
        terminated_by: None,
    };
    let mut theta = theta0.clone();
    let mut scale = config.initial_scale;

    let abort = |e: Error, trace: &AscentTrace| Error::AscentAborted {
        source: Box::new(e),
        partial: Box::new(trace.clone()),
    };

    for iter in 0.. {
        if iter >= config.max_iterations {
            trace.terminated_by = Some(Termination::IterationCap);
            break;
        }
        if scale < config.min_scale {
            trace.terminated_by = Some(Termination::ScaleFloor);
            break;
        }
        let proposed = proposer
            .propose(&theta, scale, &bounds, derive_seed(config.seed, &[iter as u64, 0]))
            .map_err(|e| abort(e, &trace))?;
        let chain = ChainConfig {
            seed: derive_seed(config.seed, &[iter as u64, 1]),
            ..sampler.clone()
        };
        let result = compare_likelihoods(
            model,
            &theta,
            &proposed,
            &chain,
            config.comparison_confidence,
            config.comparison_budget,
        )
        .map_err(|e| abort(e, &trace))?;
        let log_marginal_analytic = if analytic {
            Some(
                model
                    .log_marginal_analytic(&theta)
                    .map_err(|e| abort(e, &trace))?
                    .get(),
            )
        } else {
            None
        };
        let accepted = result.decision == Decision::FirstSmaller;
        trace.iterations.push(AscentRecord {
            iter,
            theta: theta.clone(),
            proposed: proposed.clone(),
            decision: result.decision,
            scale,
            accepted,
            log_marginal_analytic,
        });
        if accepted {
            theta = proposed;
            scale *= config.grow;
        } else {
            scale *= config.shrink;
        }
        trace.final_theta = theta.clone();
    }
    Ok(trace)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn parse_f64(s: &str, what: &str) -> Result<f64> {
    s.parse()
        .map_err(|_| contract(format!("bad {what} value {s:?} in trace CSV")))
}

impl AscentTrace {
    /// Writes one row per iteration:
    /// `iter, theta.<name>..., proposed.<name>..., decision, scale, accepted,
    /// log_marginal_analytic`.
    pub fn write_csv<W: Write>(&self, out: W, names: &[String]) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["iter".to_string()];
        header.extend(names.iter().map(|n| format!("theta.{n}")));
        header.extend(names.iter().map(|n| format!("proposed.{n}")));
        header.extend(
            ["decision", "scale", "accepted", "log_marginal_analytic"].map(String::from),
        );
        w.write_record(&header)?;
        for r in &self.iterations {
            let mut row = vec![r.iter.to_string()];
            row.extend(r.theta.values().iter().map(f64::to_string));
            row.extend(r.proposed.values().iter().map(f64::to_string));
            row.push(r.decision.as_str().to_string());
            row.push(r.scale.to_string());
            row.push(r.accepted.to_string());
            row.push(fmt_opt(r.log_marginal_analytic));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Parses the rows written by [`AscentTrace::write_csv`].
    pub fn read_csv_records<R: Read>(input: R) -> Result<Vec<AscentRecord>> {
        let mut rdr = csv::Reader::from_reader(input);
        let header = rdr.headers()?.clone();
        let dim = header.iter().filter(|h| h.starts_with("theta.")).count();
        if header.len() != 2 * dim + 5 {
            return Err(contract("unexpected trace CSV header"));
        }
        let mut out = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let col = |i: usize| rec.get(i).unwrap_or("");
            let vec_at = |start: usize| -> Result<ParameterVector> {
                ParameterVector::new(
                    (start..start + dim)
                        .map(|i| parse_f64(col(i), "parameter"))
                        .collect::<Result<Vec<_>>>()?,
                )
            };
            let base = 1 + 2 * dim;
            let lm = col(base + 3);
            out.push(AscentRecord {
                iter: col(0)
                    .parse()
                    .map_err(|_| contract("bad iter in trace CSV"))?,
                theta: vec_at(1)?,
                proposed: vec_at(1 + dim)?,
                decision: col(base).parse()?,
                scale: parse_f64(col(base + 1), "scale")?,
                accepted: col(base + 2)
                    .parse()
                    .map_err(|_| contract("bad accepted flag in trace CSV"))?,
                log_marginal_analytic: if lm.is_empty() {
                    None
                } else {
                    Some(parse_f64(lm, "log marginal")?)
                },
            });
        }
        Ok(out)
    }
}
