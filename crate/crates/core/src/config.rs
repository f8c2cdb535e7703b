//! Run configuration: a TOML document with one `[model]` block, an optional
//! `[sampler]` block and exactly one command block (`[compare]`,
//! `[maximize]`, `[verify]` or `[em]`).
//!
//! Parsing is strict. Unknown keys, missing required fields and
//! out-of-range values are all rejected, and every default is written into
//! the returned [`RunConfig`] so the config echo in a report is complete.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::ascent::AscentConfig;
use crate::error::{Error, Result};
use crate::model::{Bounds, ParameterVector};
use crate::models::{MixtureParams, RandomEffectsParams, MIXTURE_FLOOR, RANDOM_EFFECTS_FLOOR};
use crate::sampler::ChainConfig;

pub const DEFAULT_CONFIDENCE: f64 = 0.95;
pub const DEFAULT_MAX_SAMPLES: usize = 1 << 16;
pub const DEFAULT_INITIAL_SCALE: f64 = 0.1;
pub const DEFAULT_MAX_ITERATIONS: usize = 500;
pub const DEFAULT_COMPARISON_BUDGET: usize = 1 << 14;
pub const DEFAULT_INSTANCE_COUNT: usize = 1000;
pub const DEFAULT_EM_TOLERANCE: f64 = 1e-10;
pub const DEFAULT_EM_MAX_ITERATIONS: usize = 10_000;

// ---- raw document -------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    output: Option<PathBuf>,
    model: Option<RawModel>,
    sampler: Option<RawSampler>,
    compare: Option<RawCompare>,
    maximize: Option<RawMaximize>,
    verify: Option<RawVerify>,
    em: Option<RawEm>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum RawModel {
    Table {
        cells: Option<usize>,
    },
    Mixture {
        data: Option<Vec<f64>>,
        data_file: Option<PathBuf>,
        simulate: Option<RawSimulate<MixtureParams>>,
    },
    RandomEffects {
        data: Option<Vec<f64>>,
        data_file: Option<PathBuf>,
        simulate: Option<RawSimulate<RandomEffectsParams>>,
    },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSimulate<T> {
    n: usize,
    seed: u64,
    truth: T,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSampler {
    burn_in: Option<usize>,
    thin: Option<usize>,
    step: Option<f64>,
    target_acceptance: Option<f64>,
    seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCompare {
    theta1: Vec<f64>,
    theta2: Vec<f64>,
    confidence: Option<f64>,
    max_samples: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMaximize {
    theta0: Vec<f64>,
    seed: Option<u64>,
    initial_scale: Option<f64>,
    shrink: Option<f64>,
    grow: Option<f64>,
    min_scale: Option<f64>,
    max_iterations: Option<usize>,
    confidence: Option<f64>,
    comparison_budget: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawVerify {
    instance_count: Option<usize>,
    seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEm {
    theta0: Vec<f64>,
    tolerance: Option<f64>,
    max_iterations: Option<usize>,
}

// ---- validated config ---------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommandKind {
    Compare,
    Maximize,
    Verify,
    Em,
}

impl CommandKind {
    pub fn name(self) -> &'static str {
        match self {
            CommandKind::Compare => "compare",
            CommandKind::Maximize => "maximize",
            CommandKind::Verify => "verify",
            CommandKind::Em => "em",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Inline(Vec<f64>),
    File(PathBuf),
    Simulate {
        n: usize,
        seed: u64,
        truth: SimTruth,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(untagged)]
pub enum SimTruth {
    Mixture(MixtureParams),
    RandomEffects(RandomEffectsParams),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelConfig {
    Table { cells: usize },
    Mixture { data: DataSource },
    RandomEffects { data: DataSource },
}

impl ModelConfig {
    pub fn parameter_names(&self) -> Vec<String> {
        match self {
            ModelConfig::Table { cells } => (0..*cells).map(|i| format!("p{i}")).collect(),
            ModelConfig::Mixture { .. } => ["pi", "mu1", "mu2", "sigma"].map(String::from).to_vec(),
            ModelConfig::RandomEffects { .. } => ["mu", "tau", "sigma"].map(String::from).to_vec(),
        }
    }

    pub fn parameter_bounds(&self) -> Vec<Bounds> {
        match self {
            ModelConfig::Table { cells } => vec![Bounds::at_least(0.0); *cells],
            ModelConfig::Mixture { .. } => vec![
                Bounds::new(MIXTURE_FLOOR, 1.0 - MIXTURE_FLOOR),
                Bounds::UNBOUNDED,
                Bounds::UNBOUNDED,
                Bounds::at_least(MIXTURE_FLOOR),
            ],
            ModelConfig::RandomEffects { .. } => vec![
                Bounds::UNBOUNDED,
                Bounds::at_least(RANDOM_EFFECTS_FLOOR),
                Bounds::at_least(RANDOM_EFFECTS_FLOOR),
            ],
        }
    }

    /// Latent dimension when it is known without loading data.
    fn latent_dimension_hint(&self) -> usize {
        match self {
            ModelConfig::Table { .. } | ModelConfig::RandomEffects { .. } => 1,
            ModelConfig::Mixture { .. } => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum Command {
    Compare {
        theta1: ParameterVector,
        theta2: ParameterVector,
        confidence: f64,
        max_samples: usize,
    },
    Maximize {
        theta0: ParameterVector,
        ascent: AscentConfig,
    },
    Verify {
        instance_count: usize,
        seed: u64,
    },
    Em {
        theta0: ParameterVector,
        tolerance: f64,
        max_iterations: usize,
    },
}

impl Command {
    pub fn kind(&self) -> CommandKind {
        match self {
            Command::Compare { .. } => CommandKind::Compare,
            Command::Maximize { .. } => CommandKind::Maximize,
            Command::Verify { .. } => CommandKind::Verify,
            Command::Em { .. } => CommandKind::Em,
        }
    }
}

/// A validated run configuration with all defaults filled in.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: Command,
    pub model: Option<ModelConfig>,
    pub sampler: Option<ChainConfig>,
    pub output: Option<PathBuf>,
}

/// Command-line overrides applied before validation.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub burn_in: Option<usize>,
    pub thin: Option<usize>,
    pub step: Option<f64>,
    /// Replaces the command's primary seed.
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
    /// Subcommand named on the command line, which must match the config.
    pub expect: Option<CommandKind>,
}

fn cfg_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn toml_error(text: &str, e: toml::de::Error) -> Error {
    let line = e
        .span()
        .map(|s| text[..s.start.min(text.len())].lines().count().max(1));
    match line {
        Some(l) => cfg_err(format!("{} (line {l})", e.message())),
        None => cfg_err(e.message().to_string()),
    }
}

fn in_open(name: &str, v: f64, lo: f64, hi: f64) -> Result<f64> {
    if v > lo && v < hi {
        Ok(v)
    } else {
        Err(cfg_err(format!("{name} = {v} violates {lo} < {name} < {hi}")))
    }
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(cfg_err(format!("{name} = {v} violates {name} > 0")))
    }
}

fn at_least_usize(name: &str, v: usize, lo: usize) -> Result<usize> {
    if v >= lo {
        Ok(v)
    } else {
        Err(cfg_err(format!("{name} = {v} violates {name} >= {lo}")))
    }
}

fn theta(name: &str, values: Vec<f64>, model: &ModelConfig) -> Result<ParameterVector> {
    let names = model.parameter_names();
    if values.len() != names.len() {
        return Err(cfg_err(format!(
            "{name} has {} entries, model expects {} ({})",
            values.len(),
            names.len(),
            names.join(", ")
        )));
    }
    for ((v, b), pname) in values.iter().zip(model.parameter_bounds()).zip(&names) {
        if !v.is_finite() || !b.contains(*v) {
            return Err(cfg_err(format!(
                "{name}.{pname} = {v} violates {} <= {pname} <= {}",
                b.lower, b.upper
            )));
        }
    }
    ParameterVector::new(values).map_err(|e| cfg_err(e.to_string()))
}

fn data_source<T>(
    kind: &str,
    data: Option<Vec<f64>>,
    data_file: Option<PathBuf>,
    simulate: Option<RawSimulate<T>>,
    wrap: impl Fn(T) -> SimTruth,
) -> Result<DataSource> {
    let given = data.is_some() as u8 + data_file.is_some() as u8 + simulate.is_some() as u8;
    if given != 1 {
        return Err(cfg_err(format!(
            "{kind} model needs exactly one of model.data, model.data_file, model.simulate"
        )));
    }
    if let Some(d) = data {
        if d.is_empty() {
            return Err(cfg_err("model.data must not be empty"));
        }
        return Ok(DataSource::Inline(d));
    }
    if let Some(p) = data_file {
        return Ok(DataSource::File(p));
    }
    let s = simulate.expect("counted above");
    at_least_usize("model.simulate.n", s.n, 1)?;
    Ok(DataSource::Simulate {
        n: s.n,
        seed: s.seed,
        truth: wrap(s.truth),
    })
}

fn check_truth(truth: &SimTruth) -> Result<()> {
    match truth {
        SimTruth::Mixture(t) => {
            in_open("model.simulate.truth.pi", t.pi, 0.0, 1.0)?;
            positive("model.simulate.truth.sigma", t.sigma)?;
        }
        SimTruth::RandomEffects(t) => {
            positive("model.simulate.truth.tau", t.tau)?;
            positive("model.simulate.truth.sigma", t.sigma)?;
        }
    }
    Ok(())
}

/// Parses and validates a config document.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    parse_config_with(text, &Overrides::default())
}

/// [`parse_config`] with command-line overrides applied first.
pub fn parse_config_with(text: &str, overrides: &Overrides) -> Result<RunConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| toml_error(text, e))?;

    let present: Vec<CommandKind> = [
        (raw.compare.is_some(), CommandKind::Compare),
        (raw.maximize.is_some(), CommandKind::Maximize),
        (raw.verify.is_some(), CommandKind::Verify),
        (raw.em.is_some(), CommandKind::Em),
    ]
    .into_iter()
    .filter_map(|(p, k)| p.then_some(k))
    .collect();
    let kind = match present.as_slice() {
        [k] => *k,
        [] => {
            return Err(cfg_err(
                "no command block: expected one of [compare], [maximize], [verify], [em]",
            ))
        }
        many => {
            let names: Vec<_> = many.iter().map(|k| format!("[{}]", k.name())).collect();
            return Err(cfg_err(format!(
                "exactly one command block allowed, found {}",
                names.join(", ")
            )));
        }
    };
    if let Some(expect) = overrides.expect {
        if expect != kind {
            return Err(cfg_err(format!(
                "subcommand `{}` does not match the config's [{}] block",
                expect.name(),
                kind.name()
            )));
        }
    }

    // model
    let model = match raw.model {
        None => None,
        Some(RawModel::Table { cells }) => Some(ModelConfig::Table {
            cells: match cells {
                Some(c) => at_least_usize("model.cells", c, 1)?,
                None => 0, // inferred from the parameters below
            },
        }),
        Some(RawModel::Mixture {
            data,
            data_file,
            simulate,
        }) => Some(ModelConfig::Mixture {
            data: data_source("mixture", data, data_file, simulate, SimTruth::Mixture)?,
        }),
        Some(RawModel::RandomEffects {
            data,
            data_file,
            simulate,
        }) => Some(ModelConfig::RandomEffects {
            data: data_source(
                "random_effects",
                data,
                data_file,
                simulate,
                SimTruth::RandomEffects,
            )?,
        }),
    };
    if let Some(
        ModelConfig::Mixture {
            data: DataSource::Simulate { truth, .. },
        }
        | ModelConfig::RandomEffects {
            data: DataSource::Simulate { truth, .. },
        },
    ) = &model
    {
        check_truth(truth)?;
    }

    let mut model = match (kind, model) {
        (CommandKind::Verify, Some(_)) => {
            return Err(cfg_err("[model] is not used by verify; remove it"))
        }
        (CommandKind::Verify, None) => None,
        (_, None) => return Err(cfg_err("missing field `model`")),
        (_, Some(m)) => Some(m),
    };
    if let Some(ModelConfig::Table { cells }) = &mut model {
        if *cells == 0 {
            let inferred = match (&raw.compare, &raw.maximize, &raw.em) {
                (Some(c), _, _) => c.theta1.len(),
                (_, Some(m), _) => m.theta0.len(),
                (_, _, Some(e)) => e.theta0.len(),
                _ => 0,
            };
            *cells = at_least_usize("model.cells", inferred, 1)?;
        }
    }

    // sampler
    let mut sampler_raw = raw.sampler;
    if matches!(kind, CommandKind::Verify | CommandKind::Em) {
        if sampler_raw.is_some() {
            return Err(cfg_err(format!(
                "[sampler] is not used by {}; remove it",
                kind.name()
            )));
        }
        if overrides.burn_in.is_some() || overrides.thin.is_some() || overrides.step.is_some() {
            return Err(cfg_err(format!(
                "sampler flags are not used by {}",
                kind.name()
            )));
        }
    } else {
        let s = sampler_raw.get_or_insert_with(RawSampler::default);
        if kind == CommandKind::Maximize && s.seed.is_some() {
            return Err(cfg_err(
                "sampler.seed is not used by maximize; chain seeds derive from maximize.seed",
            ));
        }
        if let Some(v) = overrides.burn_in {
            s.burn_in = Some(v);
        }
        if let Some(v) = overrides.thin {
            s.thin = Some(v);
        }
        if let Some(v) = overrides.step {
            s.step = Some(v);
        }
    }

    let mut seed_override = overrides.seed;
    let sampler = match (&sampler_raw, &model) {
        (Some(s), Some(m)) => {
            let seed = match kind {
                CommandKind::Compare => match seed_override.take().or(s.seed) {
                    Some(seed) => seed,
                    None => return Err(cfg_err("missing field `sampler.seed`")),
                },
                // replaced per comparison by seeds derived from maximize.seed
                _ => 0,
            };
            let dim = m.latent_dimension_hint();
            Some(ChainConfig {
                burn_in: s.burn_in.unwrap_or(ChainConfig::DEFAULT_BURN_IN),
                thinning: at_least_usize("sampler.thin", s.thin.unwrap_or(1), 1)?,
                initial_step: positive("sampler.step", s.step.unwrap_or(1.0))?,
                target_acceptance: in_open(
                    "sampler.target_acceptance",
                    s.target_acceptance
                        .unwrap_or_else(|| ChainConfig::default_target_acceptance(dim)),
                    0.0,
                    1.0,
                )?,
                seed,
            })
        }
        _ => None,
    };

    let command = match kind {
        CommandKind::Compare => {
            let c = raw.compare.expect("kind");
            let m = model.as_ref().expect("checked");
            Command::Compare {
                theta1: theta("compare.theta1", c.theta1, m)?,
                theta2: theta("compare.theta2", c.theta2, m)?,
                confidence: in_open(
                    "compare.confidence",
                    c.confidence.unwrap_or(DEFAULT_CONFIDENCE),
                    0.5,
                    1.0,
                )?,
                max_samples: at_least_usize(
                    "compare.max_samples",
                    c.max_samples.unwrap_or(DEFAULT_MAX_SAMPLES),
                    crate::estimator::INITIAL_BATCH,
                )?,
            }
        }
        CommandKind::Maximize => {
            let c = raw.maximize.expect("kind");
            let m = model.as_ref().expect("checked");
            let seed = match seed_override.take().or(c.seed) {
                Some(s) => s,
                None => return Err(cfg_err("missing field `maximize.seed`")),
            };
            let initial_scale =
                positive("maximize.initial_scale", c.initial_scale.unwrap_or(DEFAULT_INITIAL_SCALE))?;
            let min_scale = positive(
                "maximize.min_scale",
                c.min_scale.unwrap_or(AscentConfig::DEFAULT_MIN_SCALE),
            )?;
            if min_scale >= initial_scale {
                return Err(cfg_err(format!(
                    "maximize.min_scale = {min_scale} violates min_scale < initial_scale = {initial_scale}"
                )));
            }
            let grow = c.grow.unwrap_or(AscentConfig::DEFAULT_GROW);
            if !(grow >= 1.0 && grow.is_finite()) {
                return Err(cfg_err(format!("maximize.grow = {grow} violates grow >= 1")));
            }
            Command::Maximize {
                theta0: theta("maximize.theta0", c.theta0, m)?,
                ascent: AscentConfig {
                    initial_scale,
                    shrink: in_open(
                        "maximize.shrink",
                        c.shrink.unwrap_or(AscentConfig::DEFAULT_SHRINK),
                        0.0,
                        1.0,
                    )?,
                    grow,
                    min_scale,
                    max_iterations: c.max_iterations.unwrap_or(DEFAULT_MAX_ITERATIONS),
                    comparison_confidence: in_open(
                        "maximize.confidence",
                        c.confidence.unwrap_or(AscentConfig::DEFAULT_CONFIDENCE),
                        0.5,
                        1.0,
                    )?,
                    comparison_budget: at_least_usize(
                        "maximize.comparison_budget",
                        c.comparison_budget.unwrap_or(DEFAULT_COMPARISON_BUDGET),
                        crate::estimator::INITIAL_BATCH,
                    )?,
                    seed,
                },
            }
        }
        CommandKind::Verify => {
            let c = raw.verify.expect("kind");
            let seed = match seed_override.take().or(c.seed) {
                Some(s) => s,
                None => return Err(cfg_err("missing field `verify.seed`")),
            };
            Command::Verify {
                instance_count: c.instance_count.unwrap_or(DEFAULT_INSTANCE_COUNT),
                seed,
            }
        }
        CommandKind::Em => {
            let c = raw.em.expect("kind");
            let m = model.as_ref().expect("checked");
            if !matches!(m, ModelConfig::Mixture { .. }) {
                return Err(cfg_err("em requires model.kind = \"mixture\""));
            }
            if seed_override.is_some() {
                return Err(cfg_err("em has no seed to override"));
            }
            Command::Em {
                theta0: theta("em.theta0", c.theta0, m)?,
                tolerance: positive("em.tolerance", c.tolerance.unwrap_or(DEFAULT_EM_TOLERANCE))?,
                max_iterations: c.max_iterations.unwrap_or(DEFAULT_EM_MAX_ITERATIONS),
            }
        }
    };

    let output = overrides.output.clone().or(raw.output);
    if matches!(kind, CommandKind::Maximize | CommandKind::Em) && output.is_none() {
        return Err(cfg_err(format!(
            "missing field `output` ({} writes a CSV there)",
            kind.name()
        )));
    }

    Ok(RunConfig {
        command,
        model,
        sampler,
        output,
    })
}
