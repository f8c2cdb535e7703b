//! Built-in models: a finite table, a two-component Gaussian mixture and a
//! normal random-effects model, plus seeded data simulators.

mod mixture;
mod random_effects;
mod table;

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{contract, Error, Result};

pub use mixture::{
    make_gaussian_mixture, run_em, EmRecord, GaussianMixtureModel, MixtureParams, MIXTURE_FLOOR,
};
pub use random_effects::{
    make_random_effects, RandomEffectsModel, RandomEffectsParams, RANDOM_EFFECTS_FLOOR,
};
pub use table::{make_table_model, TableModel};

fn normal(mean: f64, sd: f64) -> Result<Normal<f64>> {
    Normal::new(mean, sd).map_err(|e| contract(format!("bad normal({mean}, {sd}): {e}")))
}

/// Draws `n` observations from a two-component mixture.
pub fn simulate_mixture(n: usize, seed: u64, truth: MixtureParams) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c1 = normal(truth.mu1, truth.sigma)?;
    let c2 = normal(truth.mu2, truth.sigma)?;
    Ok((0..n)
        .map(|_| {
            if rng.random::<f64>() < truth.pi {
                c1.sample(&mut rng)
            } else {
                c2.sample(&mut rng)
            }
        })
        .collect())
}

/// Draws one effect `b ~ N(0, τ²)` and `m` observations `N(μ + b, σ²)`.
pub fn simulate_random_effects(m: usize, seed: u64, truth: RandomEffectsParams) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = normal(0.0, truth.tau)?.sample(&mut rng);
    let obs = normal(truth.mu + b, truth.sigma)?;
    Ok((0..m).map(|_| obs.sample(&mut rng)).collect())
}

/// Reads a one-column numeric text file. Blank lines and `#` comments are
/// skipped.
pub fn load_data_file(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)?;
    parse_data(&text).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub(crate) fn parse_data(text: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let v: f64 = line
            .parse()
            .map_err(|_| Error::Config(format!("line {}: not a number: {line:?}", lineno + 1)))?;
        if !v.is_finite() {
            return Err(Error::Config(format!("line {}: non-finite value", lineno + 1)));
        }
        out.push(v);
    }
    Ok(out)
}
