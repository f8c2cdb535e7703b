use thiserror::Error;

use crate::ascent::AscentTrace;

/// Errors raised anywhere in the comparison pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// An input violated an operation's precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    /// The model does not implement an optional capability.
    #[error("model `{model}` does not support {capability}")]
    Unsupported {
        model: String,
        capability: &'static str,
    },

    /// Exact enumeration refused because the latent space is too large.
    #[error("latent space has {cardinality} points, over the enumeration cap of {cap}")]
    EnumerationCap { cardinality: String, cap: u64 },

    /// The requested oracle cannot handle this latent space.
    #[error("wrong oracle: {0}")]
    WrongOracle(String),

    /// The quadrature bracket never decayed.
    #[error("integrand does not decay: {0}")]
    NonIntegrable(String),

    /// Both joint densities vanish at a sample point.
    #[error("degenerate support: both log-joints are -inf at a sample point")]
    DegenerateSupport,

    /// A ratio of integral estimates is undefined because one of them is zero.
    #[error("undefined likelihood ratio: integral estimate {which} has zero mean")]
    UndefinedRatio { which: &'static str },

    /// The sampler's initial state has zero density.
    #[error("bad initialization: log-joint is -inf at the initial chain state")]
    BadInitialization,

    /// No proposal was accepted during burn-in.
    #[error("chain stuck: zero acceptances over {burn_in} burn-in steps")]
    StuckChain { burn_in: usize },

    /// A comparison failed mid-run; the trace up to that point is attached.
    #[error("ascent aborted after {} iterations: {source}", partial.iterations.len())]
    AscentAborted {
        #[source]
        source: Box<Error>,
        partial: Box<AscentTrace>,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}
