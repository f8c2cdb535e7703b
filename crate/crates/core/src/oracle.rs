//! Exact values of the two truncated-ratio integrals.
//!
//! For finite latent spaces everything is enumerated; for one-dimensional
//! continuous latents the marginals and the overlap mass
//! `M = ∫ min(L(θ1, w), L(θ2, w)) dμ(w)` come from Romberg-accelerated
//! trapezoid quadrature. Both integrals follow from `i_k = M / L(θ_k)`.
//!
//! None of this is used by the Monte Carlo estimator; it exists so the
//! estimator can be checked against something independent.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{contract, Error, Result};
use crate::math::LogSumExp;
use crate::model::{LatentKind, LatentModel, LatentPoint, ParameterVector};
use crate::models::TableModel;

/// Default cap on the number of enumerated latent points.
pub const DEFAULT_ENUMERATION_CAP: u64 = 1 << 20;

/// Relative slack used when deciding that two integrals (or marginals) tie.
pub const TIE_TOLERANCE: f64 = 1e-12;

const ENUM_CHUNK: usize = 4096;
const TAIL_LOG_RATIO: f64 = -27.631_021_115_928_55; // ln 1e-12
const MAX_BRACKET_EXPANSIONS: usize = 80;
const MAX_ROMBERG_LEVELS: usize = 22;
const ROMBERG_TOLERANCE: f64 = 1e-13;

/// Exact values for one `(θ1, θ2)` pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExactIntegrals {
    /// `∫ min(1, L(θ2,w)/L(θ1,w)) dP_θ1(w|y)`.
    pub i1: f64,
    /// `∫ min(1, L(θ1,w)/L(θ2,w)) dP_θ2(w|y)`.
    pub i2: f64,
    pub log_m: f64,
    pub log_l1: f64,
    pub log_l2: f64,
}

impl ExactIntegrals {
    fn from_logs(log_m: f64, log_l1: f64, log_l2: f64) -> Result<Self> {
        if log_l1 == f64::NEG_INFINITY || log_l2 == f64::NEG_INFINITY {
            return Err(contract("marginal likelihood is zero; posterior undefined"));
        }
        if [log_m, log_l1, log_l2].iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
            return Err(contract("non-finite accumulation in exact oracle"));
        }
        Ok(Self {
            i1: (log_m - log_l1).exp().min(1.0),
            i2: (log_m - log_l2).exp().min(1.0),
            log_m,
            log_l1,
            log_l2,
        })
    }

    /// `log L(θ2) − log L(θ1)`.
    pub fn log_likelihood_ratio(&self) -> f64 {
        self.log_l2 - self.log_l1
    }
}

/// Enumerates all latent points with the default cap.
pub fn exact_integrals(
    model: &dyn LatentModel,
    theta1: &ParameterVector,
    theta2: &ParameterVector,
) -> Result<ExactIntegrals> {
    exact_integrals_with_cap(model, theta1, theta2, DEFAULT_ENUMERATION_CAP)
}

pub fn exact_integrals_with_cap(
    model: &dyn LatentModel,
    theta1: &ParameterVector,
    theta2: &ParameterVector,
    cap: u64,
) -> Result<ExactIntegrals> {
    let space = model.latent_space();
    let cardinalities = match space.kind() {
        LatentKind::FiniteDiscrete { cardinalities } => cardinalities.clone(),
        LatentKind::Continuous { .. } => {
            return Err(Error::WrongOracle(
                "enumeration needs a finite discrete latent space; use quadrature".into(),
            ))
        }
    };
    let total = match space.total_cardinality() {
        Some(t) if t <= cap => t,
        Some(t) => {
            return Err(Error::EnumerationCap {
                cardinality: t.to_string(),
                cap,
            })
        }
        None => {
            return Err(Error::EnumerationCap {
                cardinality: "more than 2^64".into(),
                cap,
            })
        }
    };

    let (mut l1, mut l2, mut m) = (LogSumExp::new(), LogSumExp::new(), LogSumExp::new());
    let mut odometer = vec![0usize; cardinalities.len()];
    let mut remaining = total;
    let mut chunk = Vec::with_capacity(ENUM_CHUNK);
    while remaining > 0 {
        chunk.clear();
        while chunk.len() < ENUM_CHUNK && remaining > 0 {
            chunk.push(LatentPoint::Discrete(odometer.clone()));
            remaining -= 1;
            for (d, k) in odometer.iter_mut().zip(&cardinalities) {
                *d += 1;
                if *d < *k {
                    break;
                }
                *d = 0;
            }
        }
        let a = model.log_joint_many(theta1, &chunk)?;
        let b = model.log_joint_many(theta2, &chunk)?;
        for (&x, &y) in a.iter().zip(&b) {
            l1.push(x);
            l2.push(y);
            m.push(x.min(y));
        }
    }
    ExactIntegrals::from_logs(m.value(), l1.value(), l2.value())
}

fn log_joint_1d(model: &dyn LatentModel, theta: &ParameterVector, b: f64) -> Result<f64> {
    Ok(model
        .log_joint(theta, &LatentPoint::Continuous(vec![b]))?
        .get())
}

/// Locates the posterior mode and a curvature-matched standard deviation.
fn mode_and_scale(model: &dyn LatentModel, theta: &ParameterVector) -> Result<(f64, f64)> {
    let f = |x: f64| log_joint_1d(model, theta, x);
    // bracket a maximum by walking uphill with doubling steps
    let (mut a, mut b) = (0.0f64, 0.0f64);
    let mut fb = f(b)?;
    for dir in [1.0, -1.0] {
        let mut step = dir;
        let mut x = b + step;
        let mut fx = f(x)?;
        if fx <= fb {
            continue;
        }
        let mut prev = b;
        while fx > fb {
            prev = b;
            b = x;
            fb = fx;
            step *= 2.0;
            x = b + step;
            fx = f(x)?;
            if step.abs() > 1e12 {
                return Err(Error::NonIntegrable("posterior mode search diverged".into()));
            }
        }
        a = prev;
        let c = x;
        let (lo, hi) = if a < c { (a, c) } else { (c, a) };
        a = lo;
        b = hi;
        break;
    }
    if a == b {
        // 0 is already a local max on both sides
        a = -1.0;
        b = 1.0;
    }
    // golden-section search
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (a, b);
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (f(x1)?, f(x2)?);
    for _ in 0..200 {
        if (hi - lo).abs() <= 1e-10 * (1.0 + lo.abs().max(hi.abs())) {
            break;
        }
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2)?;
        }
    }
    let mode = 0.5 * (lo + hi);
    let h = 1e-3 * (1.0 + mode.abs());
    let curv = (f(mode + h)? - 2.0 * f(mode)? + f(mode - h)?) / (h * h);
    let sd = if curv < 0.0 && curv.is_finite() {
        (-1.0 / curv).sqrt()
    } else {
        1.0
    };
    Ok((mode, sd))
}

/// Romberg integration of `exp(log_f(x) − shift)` over `[a, b]`.
fn romberg_scaled(
    log_f: &dyn Fn(f64) -> Result<f64>,
    a: f64,
    b: f64,
    shift: f64,
    min_intervals: usize,
) -> Result<f64> {
    if b <= a {
        return Ok(0.0);
    }
    let g = |x: f64| -> Result<f64> { Ok((log_f(x)? - shift).exp()) };
    let mut n = min_intervals.max(2);
    let mut h = (b - a) / n as f64;
    let mut sum = 0.5 * (g(a)? + g(b)?);
    for k in 1..n {
        sum += g(a + k as f64 * h)?;
    }
    let mut prev_row = vec![sum * h];
    for _level in 1..MAX_ROMBERG_LEVELS {
        // add midpoints
        let mut mid = 0.0;
        for k in 0..n {
            mid += g(a + (k as f64 + 0.5) * h)?;
        }
        sum += mid;
        n *= 2;
        h *= 0.5;
        let mut row = Vec::with_capacity(prev_row.len() + 1);
        row.push(sum * h);
        let mut factor = 4.0;
        for j in 0..prev_row.len() {
            let r = row[j] + (row[j] - prev_row[j]) / (factor - 1.0);
            row.push(r);
            factor *= 4.0;
        }
        let best = *row.last().unwrap();
        let last_best = *prev_row.last().unwrap();
        let scale = best.abs().max(row[0].abs());
        if row.len() >= 3 && (best - last_best).abs() <= ROMBERG_TOLERANCE * scale {
            return Ok(if best > 0.0 { best } else { row[0] });
        }
        prev_row = row;
    }
    let best = *prev_row.last().unwrap();
    Ok(if best > 0.0 { best } else { prev_row[0] })
}

/// Quadrature version of [`exact_integrals`] for one-dimensional continuous
/// latent spaces.
pub fn quadrature_integrals(
    model: &dyn LatentModel,
    theta1: &ParameterVector,
    theta2: &ParameterVector,
    nodes: usize,
) -> Result<ExactIntegrals> {
    let space = model.latent_space();
    match space.kind() {
        LatentKind::Continuous { dimension: 1 } => {}
        LatentKind::Continuous { dimension } => {
            return Err(Error::WrongOracle(format!(
                "quadrature supports one latent dimension, model has {dimension}"
            )))
        }
        LatentKind::FiniteDiscrete { .. } => {
            return Err(Error::WrongOracle(
                "quadrature needs a continuous latent space; use enumeration".into(),
            ))
        }
    }
    if nodes == 0 {
        return Err(contract("quadrature needs a positive node count"));
    }

    let f1 = |x: f64| log_joint_1d(model, theta1, x);
    let f2 = |x: f64| log_joint_1d(model, theta2, x);
    let fm = |x: f64| -> Result<f64> { Ok(f1(x)?.min(f2(x)?)) };

    let (m1, s1) = mode_and_scale(model, theta1)?;
    let (m2, s2) = mode_and_scale(model, theta2)?;
    let mut lo = (m1 - 8.0 * s1).min(m2 - 8.0 * s2);
    let mut hi = (m1 + 8.0 * s1).max(m2 + 8.0 * s2);
    let peak1 = f1(m1)?;
    let peak2 = f2(m2)?;

    let grid = |lo: f64, hi: f64| -> Result<(Vec<f64>, Vec<(f64, f64)>)> {
        let count = nodes.max(64);
        let xs: Vec<f64> = (0..=count)
            .map(|k| lo + (hi - lo) * k as f64 / count as f64)
            .collect();
        let vals = xs
            .iter()
            .map(|&x| Ok((f1(x)?, f2(x)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok((xs, vals))
    };

    // expand the bracket until every integrand has decayed at both ends
    let mut expansions = 0;
    let (xs, vals) = loop {
        let (xs, vals) = grid(lo, hi)?;
        let peak_m = vals
            .iter()
            .map(|&(a, b)| a.min(b))
            .fold(f64::NEG_INFINITY, f64::max);
        let decayed = |x: f64| -> Result<bool> {
            let (a, b) = (f1(x)?, f2(x)?);
            Ok(a - peak1 < TAIL_LOG_RATIO
                && b - peak2 < TAIL_LOG_RATIO
                && (peak_m == f64::NEG_INFINITY || a.min(b) - peak_m < TAIL_LOG_RATIO))
        };
        let (left_ok, right_ok) = (decayed(lo)?, decayed(hi)?);
        if left_ok && right_ok {
            break (xs, vals);
        }
        expansions += 1;
        if expansions > MAX_BRACKET_EXPANSIONS {
            return Err(Error::NonIntegrable(format!(
                "integrand still above 1e-12 of its peak on [{lo}, {hi}]"
            )));
        }
        let half = 0.5 * (hi - lo);
        let center = 0.5 * (hi + lo);
        if !left_ok {
            lo = center - 1.5 * half;
        }
        if !right_ok {
            hi = center + 1.5 * half;
        }
    };

    let l1 = romberg_scaled(&f1, lo, hi, peak1, nodes)?;
    let l2 = romberg_scaled(&f2, lo, hi, peak2, nodes)?;

    // split the overlap integrand at the crossings of f1 and f2 so each
    // piece is smooth
    let mut breaks = vec![lo];
    for k in 1..xs.len() {
        let d0 = vals[k - 1].0 - vals[k - 1].1;
        let d1 = vals[k].0 - vals[k].1;
        if d0.is_finite() && d1.is_finite() && d0 * d1 < 0.0 {
            let (mut a, mut b, mut da) = (xs[k - 1], xs[k], d0);
            for _ in 0..200 {
                let c = 0.5 * (a + b);
                let dc = f1(c)? - f2(c)?;
                if dc == 0.0 || (b - a) <= 1e-14 * (1.0 + c.abs()) {
                    a = c;
                    b = c;
                    break;
                }
                if (dc < 0.0) == (da < 0.0) {
                    a = c;
                    da = dc;
                } else {
                    b = c;
                }
            }
            breaks.push(0.5 * (a + b));
        }
    }
    breaks.push(hi);
    let shift_m = vals
        .iter()
        .map(|&(a, b)| a.min(b))
        .fold(f64::NEG_INFINITY, f64::max);
    let log_m = if shift_m == f64::NEG_INFINITY {
        f64::NEG_INFINITY
    } else {
        let pieces = breaks.len() - 1;
        let per_piece = (nodes / pieces).max(8);
        let mut total = 0.0;
        for w in breaks.windows(2) {
            total += romberg_scaled(&fm, w[0], w[1], shift_m, per_piece)?;
        }
        shift_m + total.ln()
    };

    ExactIntegrals::from_logs(log_m, peak1 + l1.ln(), peak2 + l2.ln())
}

/// Ordering of two values with a relative tie band.
pub fn tolerant_sign(a: f64, b: f64) -> i8 {
    let scale = a.abs().max(b.abs());
    if (a - b).abs() <= TIE_TOLERANCE * scale {
        0
    } else if a > b {
        1
    } else {
        -1
    }
}

/// One random instance drawn by [`verify_theorem`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableInstance {
    pub theta1: Vec<f64>,
    pub theta2: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyFailure {
    pub index: usize,
    pub instance: TableInstance,
    pub integrals: Option<ExactIntegrals>,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub instance_count: usize,
    pub seed: u64,
    pub passes: usize,
    pub failures: Vec<VerifyFailure>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// The standard per-instance check: ordering equivalence plus the
/// `i1·L1 = i2·L2 = M` identity.
pub fn theorem_check(ex: &ExactIntegrals) -> Option<String> {
    let lhs = tolerant_sign(ex.i1, ex.i2);
    let rhs = tolerant_sign(ex.log_l2.exp(), ex.log_l1.exp());
    if lhs != rhs {
        return Some(format!(
            "sign(i1 - i2) = {lhs} but sign(L2 - L1) = {rhs}"
        ));
    }
    let m = ex.log_m.exp();
    let gap = (ex.i1 * ex.log_l1.exp() - ex.i2 * ex.log_l2.exp()).abs();
    if gap > 1e-12 * m {
        return Some(format!("|i1*L1 - i2*L2| = {gap:e} exceeds 1e-12 * M = {:e}", 1e-12 * m));
    }
    None
}

fn random_instance(rng: &mut ChaCha8Rng) -> TableInstance {
    let k = rng.random_range(2..=64usize);
    let theta1: Vec<f64> = (0..k).map(|_| rng.random_range(-3.0..3.0f64).exp()).collect();
    let theta2 = match rng.random_range(0..10u32) {
        // exact tie: same cells in another order
        0 => {
            let mut t = theta1.clone();
            t.rotate_left(1);
            t
        }
        // partial overlap
        1..=3 => theta1
            .iter()
            .map(|&v| {
                if rng.random_bool(0.5) {
                    v
                } else {
                    rng.random_range(-3.0..3.0f64).exp()
                }
            })
            .collect(),
        _ => (0..k).map(|_| rng.random_range(-3.0..3.0f64).exp()).collect(),
    };
    TableInstance { theta1, theta2 }
}

/// Checks the theorem on `instance_count` random table models.
pub fn verify_theorem(instance_count: usize, seed: u64) -> VerifyReport {
    verify_theorem_with(instance_count, seed, theorem_check)
}

/// [`verify_theorem`] with a caller-supplied per-instance check.
pub fn verify_theorem_with(
    instance_count: usize,
    seed: u64,
    check: impl Fn(&ExactIntegrals) -> Option<String>,
) -> VerifyReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = VerifyReport {
        instance_count,
        seed,
        passes: 0,
        failures: Vec::new(),
    };
    for index in 0..instance_count {
        let instance = random_instance(&mut rng);
        let outcome = (|| -> Result<ExactIntegrals> {
            let model = TableModel::with_cells(instance.theta1.len())?;
            let t1 = ParameterVector::new(instance.theta1.clone())?;
            let t2 = ParameterVector::new(instance.theta2.clone())?;
            exact_integrals(&model, &t1, &t2)
        })();
        match outcome {
            Ok(ex) => match check(&ex) {
                None => report.passes += 1,
                Some(reason) => report.failures.push(VerifyFailure {
                    index,
                    instance,
                    integrals: Some(ex),
                    reason,
                }),
            },
            Err(e) => report.failures.push(VerifyFailure {
                index,
                instance,
                integrals: None,
                reason: e.to_string(),
            }),
        }
    }
    report
}
