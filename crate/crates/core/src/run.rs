//! Executes a [`RunConfig`] and assembles the JSON run report.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use crate::ascent::{maximize, Termination};
use crate::config::{Command, DataSource, ModelConfig, RunConfig, SimTruth};
use crate::error::{Error, Result};
use crate::estimator::{compare_likelihoods, ComparisonResult};
use crate::math::derive_seed;
use crate::model::{LatentModel, ParameterVector};
use crate::models::{
    load_data_file, run_em, simulate_mixture, simulate_random_effects, EmRecord,
    GaussianMixtureModel, RandomEffectsModel, TableModel,
};
use crate::oracle::{verify_theorem, VerifyReport};

pub const ARTIFACT: &str = env!("CARGO_PKG_NAME");
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// One seed used by a run and what it drove.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedEntry {
    pub purpose: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareOutcome {
    #[serde(flatten)]
    pub result: ComparisonResult,
    /// Closed-form `log L(θ2) − log L(θ1)` when the model has one.
    pub analytic_log_lr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaximizeOutcome {
    pub final_theta: ParameterVector,
    pub terminated_by: Termination,
    pub iterations: usize,
    pub accepted: usize,
    pub final_log_marginal_analytic: Option<f64>,
    pub trace_csv: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmOutcome {
    pub iterations: usize,
    pub converged: bool,
    pub final_theta: ParameterVector,
    pub final_log_marginal: f64,
    pub trace_csv: String,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CommandOutcome {
    Compare(CompareOutcome),
    Maximize(MaximizeOutcome),
    Verify(VerifyReport),
    Em(EmOutcome),
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub artifact: &'static str,
    pub version: &'static str,
    pub config: RunConfig,
    pub wall_clock_seconds: f64,
    pub seeds: Vec<SeedEntry>,
    pub success: bool,
    pub result: Option<CommandOutcome>,
    pub error: Option<String>,
}

impl RunReport {
    pub fn exit_code(&self) -> i32 {
        if self.success {
            0
        } else {
            1
        }
    }
}

fn load_data(source: &DataSource) -> Result<Vec<f64>> {
    match source {
        DataSource::Inline(v) => Ok(v.clone()),
        DataSource::File(p) => load_data_file(p),
        DataSource::Simulate { n, seed, truth } => match truth {
            SimTruth::Mixture(t) => simulate_mixture(*n, *seed, *t),
            SimTruth::RandomEffects(t) => simulate_random_effects(*n, *seed, *t),
        },
    }
}

/// Instantiates the configured model, loading or simulating its data.
pub fn build_model(config: &ModelConfig) -> Result<Box<dyn LatentModel>> {
    Ok(match config {
        ModelConfig::Table { cells } => Box::new(TableModel::with_cells(*cells)?),
        ModelConfig::Mixture { data } => Box::new(GaussianMixtureModel::new(load_data(data)?)?),
        ModelConfig::RandomEffects { data } => {
            Box::new(RandomEffectsModel::new(load_data(data)?)?)
        }
    })
}

fn seed_ledger(config: &RunConfig) -> Vec<SeedEntry> {
    let mut seeds = Vec::new();
    if let Some(
        ModelConfig::Mixture {
            data: DataSource::Simulate { seed, .. },
        }
        | ModelConfig::RandomEffects {
            data: DataSource::Simulate { seed, .. },
        },
    ) = &config.model
    {
        seeds.push(SeedEntry {
            purpose: "model.simulate".into(),
            seed: *seed,
        });
    }
    match &config.command {
        Command::Compare { .. } => {
            let base = config.sampler.as_ref().map_or(0, |s| s.seed);
            seeds.push(SeedEntry {
                purpose: "sampler".into(),
                seed: base,
            });
            for (tag, side) in [(1, "theta1"), (2, "theta2")] {
                seeds.push(SeedEntry {
                    purpose: format!("posterior stream {side}"),
                    seed: derive_seed(base, &[tag]),
                });
            }
        }
        Command::Maximize { ascent, .. } => seeds.push(SeedEntry {
            purpose: "maximize (iteration k: proposal derive(seed,[k,0]), chains derive(seed,[k,1]))"
                .into(),
            seed: ascent.seed,
        }),
        Command::Verify { seed, .. } => seeds.push(SeedEntry {
            purpose: "verify instances".into(),
            seed: *seed,
        }),
        Command::Em { .. } => {}
    }
    seeds
}

fn csv_writer(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn write_em_csv(path: &Path, names: &[String], rows: &[EmRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(csv_writer(path)?);
    let mut header = vec!["iter".to_string()];
    header.extend(names.iter().map(|n| format!("theta.{n}")));
    header.push("log_marginal".into());
    w.write_record(&header)?;
    for r in rows {
        let mut row = vec![r.iter.to_string()];
        row.extend(r.theta.values().iter().map(f64::to_string));
        row.push(r.log_marginal.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn execute(config: &RunConfig) -> Result<CommandOutcome> {
    let model = config.model.as_ref().map(build_model).transpose()?;
    let output = config.output.as_deref();
    match &config.command {
        Command::Compare {
            theta1,
            theta2,
            confidence,
            max_samples,
        } => {
            let model = model.expect("compare has a model");
            let sampler = config.sampler.as_ref().expect("compare has a sampler");
            let result =
                compare_likelihoods(model.as_ref(), theta1, theta2, sampler, *confidence, *max_samples)?;
            let analytic_log_lr = if model.capabilities().has_analytic_marginal {
                Some(
                    model.log_marginal_analytic(theta2)?.get()
                        - model.log_marginal_analytic(theta1)?.get(),
                )
            } else {
                None
            };
            Ok(CommandOutcome::Compare(CompareOutcome {
                result,
                analytic_log_lr,
            }))
        }
        Command::Maximize { theta0, ascent } => {
            let model = model.expect("maximize has a model");
            let sampler = config.sampler.as_ref().expect("maximize has a sampler");
            let path = output.expect("maximize has an output");
            let trace = maximize(model.as_ref(), theta0, ascent, sampler)?;
            trace.write_csv(csv_writer(path)?, &model.parameter_names())?;
            let final_log_marginal_analytic = if model.capabilities().has_analytic_marginal {
                Some(model.log_marginal_analytic(&trace.final_theta)?.get())
            } else {
                None
            };
            Ok(CommandOutcome::Maximize(MaximizeOutcome {
                final_theta: trace.final_theta.clone(),
                terminated_by: trace.terminated_by.expect("complete trace"),
                iterations: trace.iterations.len(),
                accepted: trace.iterations.iter().filter(|r| r.accepted).count(),
                final_log_marginal_analytic,
                trace_csv: path.display().to_string(),
            }))
        }
        Command::Verify {
            instance_count,
            seed,
        } => Ok(CommandOutcome::Verify(verify_theorem(*instance_count, *seed))),
        Command::Em {
            theta0,
            tolerance,
            max_iterations,
        } => {
            let ModelConfig::Mixture { data } = config.model.as_ref().expect("em has a model")
            else {
                return Err(Error::Config("em requires a mixture model".into()));
            };
            let mixture = GaussianMixtureModel::new(load_data(data)?)?;
            let path = output.expect("em has an output");
            let rows = run_em(&mixture, theta0, *tolerance, *max_iterations)?;
            write_em_csv(path, &mixture.parameter_names(), &rows)?;
            let last = rows.last().expect("row 0 always present");
            let converged = rows.len() >= 2 && {
                let prev = &rows[rows.len() - 2].theta;
                last.theta
                    .values()
                    .iter()
                    .zip(prev.values())
                    .all(|(a, b)| (a - b).abs() < *tolerance)
            };
            Ok(CommandOutcome::Em(EmOutcome {
                iterations: rows.len() - 1,
                converged,
                final_theta: last.theta.clone(),
                final_log_marginal: last.log_marginal,
                trace_csv: path.display().to_string(),
            }))
        }
    }
}

/// Runs the configured workflow. Errors are captured in the report.
pub fn run(config: RunConfig) -> RunReport {
    let start = Instant::now();
    let outcome = execute(&config);
    let seeds = seed_ledger(&config);
    let (success, result, error) = match outcome {
        Ok(CommandOutcome::Verify(r)) => (r.all_passed(), Some(CommandOutcome::Verify(r)), None),
        Ok(o) => (true, Some(o), None),
        Err(e) => (false, None, Some(e.to_string())),
    };
    RunReport {
        artifact: ARTIFACT,
        version: VERSION,
        config,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        seeds,
        success,
        result,
        error,
    }
}
