//! The latent-variable model abstraction.
//!
//! A model fixes its observed data at construction. Everything downstream
//! only ever sees `log p_θ(y, w)` as a function of the parameter `θ` and the
//! latent value `w`, plus a description of the latent space and its
//! dominating measure.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};

/// A point in a model's parameter space. All entries are finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ParameterVector(Vec<f64>);

impl ParameterVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(contract(format!(
                "parameter entry {i} is not finite ({})",
                values[i]
            )));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<Vec<f64>> for ParameterVector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<ParameterVector> for Vec<f64> {
    fn from(p: ParameterVector) -> Self {
        p.0
    }
}

impl std::ops::Index<usize> for ParameterVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl fmt::Display for ParameterVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, ")")
    }
}

/// One value of the latent variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LatentPoint {
    /// One index per discrete coordinate.
    Discrete(Vec<usize>),
    /// A real vector.
    Continuous(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum LatentKind {
    FiniteDiscrete { cardinalities: Vec<usize> },
    Continuous { dimension: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DominatingMeasure {
    Counting,
    Lebesgue,
}

/// The latent space `W` together with its dominating measure.
///
/// Only the two valid pairings can be constructed: finite-discrete with
/// counting measure, continuous with Lebesgue measure.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatentSpace {
    kind: LatentKind,
    measure: DominatingMeasure,
}

impl LatentSpace {
    pub fn finite_discrete(cardinalities: Vec<usize>) -> Result<Self> {
        if cardinalities.is_empty() || cardinalities.contains(&0) {
            return Err(contract("discrete cardinalities must be positive and nonempty"));
        }
        Ok(Self {
            kind: LatentKind::FiniteDiscrete { cardinalities },
            measure: DominatingMeasure::Counting,
        })
    }

    pub fn continuous(dimension: usize) -> Result<Self> {
        if dimension == 0 {
            return Err(contract("continuous latent dimension must be positive"));
        }
        Ok(Self {
            kind: LatentKind::Continuous { dimension },
            measure: DominatingMeasure::Lebesgue,
        })
    }

    pub fn kind(&self) -> &LatentKind {
        &self.kind
    }

    pub fn measure(&self) -> DominatingMeasure {
        self.measure
    }

    /// Number of coordinates of a latent point.
    pub fn dimension(&self) -> usize {
        match &self.kind {
            LatentKind::FiniteDiscrete { cardinalities } => cardinalities.len(),
            LatentKind::Continuous { dimension } => *dimension,
        }
    }

    pub fn is_continuous(&self) -> bool {
        matches!(self.kind, LatentKind::Continuous { .. })
    }

    /// Product of the discrete cardinalities, `None` on overflow or for
    /// continuous spaces.
    pub fn total_cardinality(&self) -> Option<u64> {
        match &self.kind {
            LatentKind::FiniteDiscrete { cardinalities } => cardinalities
                .iter()
                .try_fold(1u64, |acc, &c| acc.checked_mul(c as u64)),
            LatentKind::Continuous { .. } => None,
        }
    }

    /// Checks that `w` is a valid point of this space.
    pub fn check(&self, w: &LatentPoint) -> Result<()> {
        match (&self.kind, w) {
            (LatentKind::FiniteDiscrete { cardinalities }, LatentPoint::Discrete(idx)) => {
                if idx.len() != cardinalities.len() {
                    return Err(contract(format!(
                        "latent point has {} coordinates, expected {}",
                        idx.len(),
                        cardinalities.len()
                    )));
                }
                for (c, (&i, &k)) in idx.iter().zip(cardinalities).enumerate() {
                    if i >= k {
                        return Err(contract(format!(
                            "latent coordinate {c} = {i} out of range 0..{k}"
                        )));
                    }
                }
                Ok(())
            }
            (LatentKind::Continuous { dimension }, LatentPoint::Continuous(x)) => {
                if x.len() != *dimension {
                    return Err(contract(format!(
                        "latent point has dimension {}, expected {dimension}",
                        x.len()
                    )));
                }
                if x.iter().any(|v| !v.is_finite()) {
                    return Err(contract("continuous latent coordinates must be finite"));
                }
                Ok(())
            }
            _ => Err(contract("latent point kind does not match the latent space")),
        }
    }
}

/// A log density: finite or `-inf`, never `+inf` or NaN.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
#[serde(transparent)]
pub struct LogDensity(f64);

impl LogDensity {
    pub fn new(value: f64) -> Result<Self> {
        if value.is_nan() || value == f64::INFINITY {
            return Err(contract(format!("invalid log density {value}")));
        }
        Ok(Self(value))
    }

    pub fn get(self) -> f64 {
        self.0
    }

    pub fn is_neg_infinite(self) -> bool {
        self.0 == f64::NEG_INFINITY
    }
}

/// Optional operations a model implements. Only oracles and tests use these;
/// the comparison engine needs `log_joint` and a sampler.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelCapabilities {
    pub has_analytic_marginal: bool,
    pub has_exact_posterior_sampler: bool,
}

/// Closed box constraint on one parameter coordinate. Infinite ends allowed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lower: f64,
    pub upper: f64,
}

impl Bounds {
    pub const UNBOUNDED: Bounds = Bounds {
        lower: f64::NEG_INFINITY,
        upper: f64::INFINITY,
    };

    pub fn new(lower: f64, upper: f64) -> Self {
        Self { lower, upper }
    }

    pub fn at_least(lower: f64) -> Self {
        Self {
            lower,
            upper: f64::INFINITY,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lower && x <= self.upper
    }
}

/// A latent-variable model with fixed observed data.
///
/// Implementations must be pure: `log_joint` returns bit-identical values for
/// equal inputs and never NaN for in-contract inputs.
pub trait LatentModel: Send + Sync {
    fn name(&self) -> &'static str;

    /// One name per parameter coordinate.
    fn parameter_names(&self) -> Vec<String>;

    fn parameter_dim(&self) -> usize {
        self.parameter_names().len()
    }

    /// Feasible box for each parameter coordinate.
    fn parameter_bounds(&self) -> Vec<Bounds>;

    fn latent_space(&self) -> LatentSpace;

    fn capabilities(&self) -> ModelCapabilities;

    /// `log p_θ(y, w)` for the model's fixed data `y`.
    fn log_joint(&self, theta: &ParameterVector, w: &LatentPoint) -> Result<LogDensity>;

    /// `log_joint` over many points. Models may override this with a faster
    /// path; results must equal the pointwise values.
    fn log_joint_many(&self, theta: &ParameterVector, points: &[LatentPoint]) -> Result<Vec<f64>> {
        points
            .iter()
            .map(|w| self.log_joint(theta, w).map(LogDensity::get))
            .collect()
    }

    /// `log L(θ)` in closed form.
    fn log_marginal_analytic(&self, _theta: &ParameterVector) -> Result<LogDensity> {
        Err(Error::Unsupported {
            model: self.name().to_string(),
            capability: "an analytic marginal",
        })
    }

    /// Unnormalized per-coordinate posterior log weights for models whose
    /// posterior factorizes over discrete coordinates: entry `c` holds one
    /// log weight per value of coordinate `c`.
    fn coordinate_log_weights(&self, _theta: &ParameterVector) -> Result<Vec<Vec<f64>>> {
        Err(Error::Unsupported {
            model: self.name().to_string(),
            capability: "an exact posterior sampler",
        })
    }
}

/// Validates dimension and box constraints of `theta` for `model`.
pub fn check_theta(model: &(impl LatentModel + ?Sized), theta: &ParameterVector) -> Result<()> {
    let bounds = model.parameter_bounds();
    if theta.len() != bounds.len() {
        return Err(contract(format!(
            "{} expects {} parameters, got {}",
            model.name(),
            bounds.len(),
            theta.len()
        )));
    }
    let names = model.parameter_names();
    for ((v, b), name) in theta.values().iter().zip(&bounds).zip(&names) {
        if !b.contains(*v) {
            return Err(contract(format!(
                "parameter {name} = {v} outside [{}, {}]",
                b.lower, b.upper
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_vector_rejects_non_finite() {
        assert!(ParameterVector::new(vec![1.0, f64::NAN]).is_err());
        assert!(ParameterVector::new(vec![f64::INFINITY]).is_err());
        assert!(ParameterVector::new(vec![0.2, 0.3]).is_ok());
        let parsed: std::result::Result<ParameterVector, _> = serde_json::from_str("[1.0, 2.0]");
        assert_eq!(parsed.unwrap().values(), &[1.0, 2.0]);
    }

    #[test]
    fn latent_space_pairings_and_checks() {
        let d = LatentSpace::finite_discrete(vec![2, 3]).unwrap();
        assert_eq!(d.measure(), DominatingMeasure::Counting);
        assert_eq!(d.total_cardinality(), Some(6));
        assert!(d.check(&LatentPoint::Discrete(vec![1, 2])).is_ok());
        assert!(d.check(&LatentPoint::Discrete(vec![2, 0])).is_err());
        assert!(d.check(&LatentPoint::Discrete(vec![0])).is_err());
        assert!(d.check(&LatentPoint::Continuous(vec![0.0, 0.0])).is_err());

        let c = LatentSpace::continuous(1).unwrap();
        assert_eq!(c.measure(), DominatingMeasure::Lebesgue);
        assert_eq!(c.total_cardinality(), None);
        assert!(c.check(&LatentPoint::Continuous(vec![f64::NAN])).is_err());

        assert!(LatentSpace::finite_discrete(vec![]).is_err());
        assert!(LatentSpace::finite_discrete(vec![2, 0]).is_err());
        assert!(LatentSpace::continuous(0).is_err());
    }

    #[test]
    fn huge_cardinality_overflows_to_none() {
        let d = LatentSpace::finite_discrete(vec![2; 80]).unwrap();
        assert_eq!(d.total_cardinality(), None);
    }

    #[test]
    fn log_density_rejects_nan_and_pos_inf() {
        assert!(LogDensity::new(f64::NAN).is_err());
        assert!(LogDensity::new(f64::INFINITY).is_err());
        assert!(LogDensity::new(f64::NEG_INFINITY).unwrap().is_neg_infinite());
    }
}
