//! Posterior draws from `P_θ(w | y) ∝ p_θ(y, w)`.
//!
//! Models whose posterior factorizes over discrete coordinates get exact
//! i.i.d. draws. Continuous latents use random-walk Metropolis–Hastings,
//! which needs nothing beyond the joint density.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::math::logsumexp;
use crate::model::{check_theta, LatentModel, LatentPoint, ParameterVector};

/// Settings for one Markov chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub burn_in: usize,
    pub thinning: usize,
    pub initial_step: f64,
    pub target_acceptance: f64,
    pub seed: u64,
}

impl ChainConfig {
    pub const DEFAULT_BURN_IN: usize = 2000;

    /// Optimal-scaling acceptance target for a latent dimension.
    pub fn default_target_acceptance(dimension: usize) -> f64 {
        if dimension <= 1 {
            0.44
        } else {
            0.234
        }
    }

    pub fn for_dimension(dimension: usize, seed: u64) -> Self {
        Self {
            burn_in: Self::DEFAULT_BURN_IN,
            thinning: 1,
            initial_step: 1.0,
            target_acceptance: Self::default_target_acceptance(dimension),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.thinning == 0 {
            return Err(contract("thinning must be positive"));
        }
        if !(self.initial_step.is_finite() && self.initial_step > 0.0) {
            return Err(contract("initial step must be positive and finite"));
        }
        if !(self.target_acceptance > 0.0 && self.target_acceptance < 1.0) {
            return Err(contract("target acceptance must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    /// Independent exact draws.
    Exact,
    /// Correlated Markov chain draws.
    Mcmc,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleBatch {
    pub points: Vec<LatentPoint>,
    /// Fraction of accepted post-burn-in proposals; 1.0 for exact draws.
    pub acceptance_rate: f64,
    pub theta: ParameterVector,
    pub kind: SamplerKind,
}

/// Exact sampler for coordinatewise-factorizing discrete posteriors.
pub struct ExactStream {
    /// Cumulative probabilities per coordinate.
    cumulative: Vec<Vec<f64>>,
    rng: ChaCha8Rng,
}

impl ExactStream {
    pub fn new(model: &dyn LatentModel, theta: &ParameterVector, seed: u64) -> Result<Self> {
        if !model.capabilities().has_exact_posterior_sampler {
            return Err(Error::Unsupported {
                model: model.name().to_string(),
                capability: "an exact posterior sampler",
            });
        }
        let weights = model.coordinate_log_weights(theta)?;
        let cumulative = weights
            .into_iter()
            .enumerate()
            .map(|(c, lw)| {
                let norm = logsumexp(&lw);
                if norm == f64::NEG_INFINITY || norm.is_nan() {
                    return Err(contract(format!(
                        "posterior of coordinate {c} has no mass"
                    )));
                }
                let mut acc = 0.0;
                let mut cum: Vec<f64> = lw
                    .iter()
                    .map(|&x| {
                        acc += (x - norm).exp();
                        acc
                    })
                    .collect();
                // guard against the last entry rounding below 1
                if let Some(last) = lw.iter().rposition(|&x| x > f64::NEG_INFINITY) {
                    for p in &mut cum[last..] {
                        *p = f64::INFINITY;
                    }
                }
                Ok(cum)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            cumulative,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn draw(&mut self, n: usize) -> Vec<LatentPoint> {
        (0..n)
            .map(|_| {
                let idx = self
                    .cumulative
                    .iter()
                    .map(|cum| {
                        let u: f64 = self.rng.random();
                        cum.iter().position(|&p| u < p).expect("last entry is +inf")
                    })
                    .collect();
                LatentPoint::Discrete(idx)
            })
            .collect()
    }
}

/// Spherical Gaussian random-walk Metropolis–Hastings chain.
///
/// The step size adapts only during burn-in and is frozen afterwards.
pub struct MhChain<'m> {
    model: &'m dyn LatentModel,
    theta: ParameterVector,
    state: Vec<f64>,
    log_p: f64,
    step: f64,
    thinning: usize,
    rng: ChaCha8Rng,
    accepted: u64,
    proposed: u64,
}

impl<'m> MhChain<'m> {
    /// Starts a chain at the origin and runs burn-in.
    pub fn start(
        model: &'m dyn LatentModel,
        theta: &ParameterVector,
        config: &ChainConfig,
    ) -> Result<Self> {
        config.validate()?;
        check_theta(model, theta)?;
        let space = model.latent_space();
        if !space.is_continuous() {
            return Err(contract("random-walk MH needs a continuous latent space"));
        }
        let state = vec![0.0; space.dimension()];
        let log_p = model
            .log_joint(theta, &LatentPoint::Continuous(state.clone()))?
            .get();
        if log_p == f64::NEG_INFINITY {
            return Err(Error::BadInitialization);
        }
        let mut chain = Self {
            model,
            theta: theta.clone(),
            state,
            log_p,
            step: config.initial_step,
            thinning: config.thinning,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            accepted: 0,
            proposed: 0,
        };

        // Multiplicative Robbins–Monro style rule: ×1.01 on accept and ×0.99
        // on reject at a 0.5 target, exponents rescaled so the fixed point
        // sits at the requested acceptance rate.
        let target = config.target_acceptance;
        let up = 1.01f64.ln() * 2.0 * (1.0 - target);
        let down = 0.99f64.ln() * 2.0 * target;
        let mut burn_accepts = 0usize;
        for _ in 0..config.burn_in {
            if chain.transition()? {
                burn_accepts += 1;
                chain.step *= up.exp();
            } else {
                chain.step *= down.exp();
            }
        }
        if config.burn_in > 0 && burn_accepts == 0 {
            return Err(Error::StuckChain {
                burn_in: config.burn_in,
            });
        }
        chain.accepted = 0;
        chain.proposed = 0;
        Ok(chain)
    }

    fn transition(&mut self) -> Result<bool> {
        let proposal: Vec<f64> = self
            .state
            .iter()
            .map(|&x| {
                let z: f64 = self.rng.sample(StandardNormal);
                x + self.step * z
            })
            .collect();
        let u: f64 = self.rng.random();
        self.proposed += 1;
        if proposal.iter().any(|v| !v.is_finite()) {
            return Ok(false);
        }
        let log_q = self
            .model
            .log_joint(&self.theta, &LatentPoint::Continuous(proposal.clone()))?
            .get();
        let delta = log_q - self.log_p;
        if delta.is_nan() {
            return Err(contract("NaN log-joint difference in MH step"));
        }
        if u.ln() < delta {
            self.state = proposal;
            self.log_p = log_q;
            self.accepted += 1;
            Ok(true)
        } else {
            Ok(false)
        }
    }

    /// Returns `n` thinned states.
    pub fn draw(&mut self, n: usize) -> Result<Vec<LatentPoint>> {
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            for _ in 0..self.thinning {
                self.transition()?;
            }
            out.push(LatentPoint::Continuous(self.state.clone()));
        }
        Ok(out)
    }

    /// Current (frozen after burn-in) proposal standard deviation.
    pub fn step_size(&self) -> f64 {
        self.step
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

/// A posterior draw source: exact where available, otherwise MH.
pub enum PosteriorStream<'m> {
    Exact(ExactStream),
    Mcmc(MhChain<'m>),
}

impl<'m> PosteriorStream<'m> {
    pub fn new(
        model: &'m dyn LatentModel,
        theta: &ParameterVector,
        config: &ChainConfig,
    ) -> Result<Self> {
        if model.capabilities().has_exact_posterior_sampler {
            Ok(Self::Exact(ExactStream::new(model, theta, config.seed)?))
        } else if model.latent_space().is_continuous() {
            Ok(Self::Mcmc(MhChain::start(model, theta, config)?))
        } else {
            Err(Error::Unsupported {
                model: model.name().to_string(),
                capability: "posterior sampling (no exact sampler, discrete latent)",
            })
        }
    }

    pub fn draw(&mut self, n: usize) -> Result<Vec<LatentPoint>> {
        match self {
            Self::Exact(s) => Ok(s.draw(n)),
            Self::Mcmc(c) => c.draw(n),
        }
    }

    pub fn kind(&self) -> SamplerKind {
        match self {
            Self::Exact(_) => SamplerKind::Exact,
            Self::Mcmc(_) => SamplerKind::Mcmc,
        }
    }

    pub fn acceptance_rate(&self) -> f64 {
        match self {
            Self::Exact(_) => 1.0,
            Self::Mcmc(c) => c.acceptance_rate(),
        }
    }
}

/// `n` independent exact posterior draws.
pub fn sample_discrete_posterior(
    model: &dyn LatentModel,
    theta: &ParameterVector,
    n: usize,
    seed: u64,
) -> Result<SampleBatch> {
    if n == 0 {
        return Err(contract("sample count must be positive"));
    }
    let mut stream = ExactStream::new(model, theta, seed)?;
    Ok(SampleBatch {
        points: stream.draw(n),
        acceptance_rate: 1.0,
        theta: theta.clone(),
        kind: SamplerKind::Exact,
    })
}

/// `n` post-burn-in, thinned random-walk MH states.
pub fn rwmh_sample(
    model: &dyn LatentModel,
    theta: &ParameterVector,
    n: usize,
    config: &ChainConfig,
) -> Result<SampleBatch> {
    if n == 0 {
        return Err(contract("sample count must be positive"));
    }
    let mut chain = MhChain::start(model, theta, config)?;
    let points = chain.draw(n)?;
    Ok(SampleBatch {
        points,
        acceptance_rate: chain.acceptance_rate(),
        theta: theta.clone(),
        kind: SamplerKind::Mcmc,
    })
}

/// ESS of a per-point statistic over a batch. Exact batches report `n`.
pub fn effective_sample_size(
    batch: &SampleBatch,
    summary: impl Fn(&LatentPoint) -> f64,
) -> Result<f64> {
    if batch.points.is_empty() {
        return Err(contract("effective sample size of an empty batch"));
    }
    match batch.kind {
        SamplerKind::Exact => Ok(batch.points.len() as f64),
        SamplerKind::Mcmc => {
            let values: Vec<f64> = batch.points.iter().map(summary).collect();
            Ok(ess_of_series(&values))
        }
    }
}

/// `n / (1 + 2 Σ ρ_k)` with Geyer's initial-positive-sequence truncation.
/// A constant series returns `n`.
pub fn ess_of_series(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return n as f64;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = values.iter().map(|v| v - mean).collect();
    let autocov = |lag: usize| -> f64 {
        centered[..n - lag]
            .iter()
            .zip(&centered[lag..])
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / n as f64
    };
    let gamma0 = autocov(0);
    if gamma0 <= 0.0 || !gamma0.is_finite() {
        return n as f64;
    }
    // τ = −1 + 2 Σ_m (ρ_{2m} + ρ_{2m+1}), stopping at the first non-positive pair
    let mut tau = -1.0;
    let mut lag = 0;
    while lag + 1 < n {
        let pair = (autocov(lag) + autocov(lag + 1)) / gamma0;
        if pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair;
        lag += 2;
    }
    let ess = n as f64 / tau.max(1.0 / n as f64);
    ess.clamp(1.0, n as f64)
}
