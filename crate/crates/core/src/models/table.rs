use crate::error::{contract, Result};
use crate::model::{
    check_theta, Bounds, LatentModel, LatentPoint, LatentSpace, LogDensity, ModelCapabilities,
    ParameterVector,
};

/// A single fixed observation with a finite latent variable `w ∈ {0..K−1}`.
///
/// The parameter is the table itself: `θ_w = p_θ(y, w)`. Entries need not
/// sum to one; their sum is the marginal `L(θ)`.
#[derive(Debug, Clone)]
pub struct TableModel {
    cells: usize,
    table: Option<ParameterVector>,
}

impl TableModel {
    /// A table model with `cells` latent values and no reference table.
    pub fn with_cells(cells: usize) -> Result<Self> {
        if cells == 0 {
            return Err(contract("table model needs at least one cell"));
        }
        Ok(Self { cells, table: None })
    }

    /// The table passed to [`make_table_model`], if any.
    pub fn table(&self) -> Option<&ParameterVector> {
        self.table.as_ref()
    }

    pub fn cells(&self) -> usize {
        self.cells
    }
}

/// Builds a table model from a strictly positive joint table, keeping the
/// table as the model's reference parameter.
pub fn make_table_model(joint: &[f64]) -> Result<TableModel> {
    if joint.is_empty() {
        return Err(contract("table model needs at least one cell"));
    }
    if let Some(v) = joint.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(contract(format!(
            "table entries must be positive and finite, got {v}"
        )));
    }
    Ok(TableModel {
        cells: joint.len(),
        table: Some(ParameterVector::new(joint.to_vec())?),
    })
}

impl LatentModel for TableModel {
    fn name(&self) -> &'static str {
        "table"
    }

    fn parameter_names(&self) -> Vec<String> {
        (0..self.cells).map(|i| format!("p{i}")).collect()
    }

    fn parameter_bounds(&self) -> Vec<Bounds> {
        // Zero cells are allowed as parameters so degenerate posteriors can be
        // expressed; the constructor only accepts positive tables.
        vec![Bounds::at_least(0.0); self.cells]
    }

    fn latent_space(&self) -> LatentSpace {
        LatentSpace::finite_discrete(vec![self.cells]).expect("cells > 0")
    }

    fn capabilities(&self) -> ModelCapabilities {
        ModelCapabilities {
            has_analytic_marginal: true,
            has_exact_posterior_sampler: true,
        }
    }

    fn log_joint(&self, theta: &ParameterVector, w: &LatentPoint) -> Result<LogDensity> {
        check_theta(self, theta)?;
        self.latent_space().check(w)?;
        let LatentPoint::Discrete(idx) = w else {
            unreachable!("checked above")
        };
        LogDensity::new(theta[idx[0]].ln())
    }

    fn log_marginal_analytic(&self, theta: &ParameterVector) -> Result<LogDensity> {
        check_theta(self, theta)?;
        LogDensity::new(theta.values().iter().sum::<f64>().ln())
    }

    fn coordinate_log_weights(&self, theta: &ParameterVector) -> Result<Vec<Vec<f64>>> {
        check_theta(self, theta)?;
        Ok(vec![theta.values().iter().map(|v| v.ln()).collect()])
    }
}
