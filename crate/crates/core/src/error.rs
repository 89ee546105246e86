use thiserror::Error;

/// Errors raised by the analysis pipeline.
///
/// Probabilities and times are carried as `f64` regardless of the scalar
/// type the computation ran in, so the error type stays non-generic.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid session field `{field}`: {reason}")]
    InvalidSession { field: &'static str, reason: String },

    #[error("scenario must contain at least one session")]
    EmptyScenario,

    #[error("unstable queue: traffic intensity rho = {rho:.6} (steady state requires rho < 1)")]
    Unstable { rho: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error(
        "probability mass insufficient for p = {requested} (attained {attained:.6}); \
         increase i_max mass threshold"
    )]
    InsufficientMass { requested: f64, attained: f64 },

    #[error(
        "probability mass insufficient for p in {failed:?} (attained {attained:.6}); \
         increase i_max mass threshold"
    )]
    QuantilesUnavailable { failed: Vec<f64>, attained: f64 },

    #[error("service time too long relative to arrival rate for stable recursion (k_0 = {k0:e})")]
    DegenerateRecursion { k0: f64 },

    #[error("queue-length recursion produced pi_{index} = {value:e}; quadrature error too large")]
    NegativeProbability { index: usize, value: f64 },

    #[error("state cap {cap} reached with attained mass {attained:.6} below threshold {threshold}")]
    StateCapReached { cap: usize, attained: f64, threshold: f64 },

    #[error(
        "Monte Carlo budget of {max_points} points exceeded for component {component} \
         (last integral {integral:.6}, est. stddev {stddev:.6})"
    )]
    MonteCarloBudget { component: usize, max_points: usize, integral: f64, stddev: f64 },

    #[error("cumulative distribution decreased by {decrease:e} at grid index {index}")]
    NonMonotoneCdf { index: usize, decrease: f64 },

    #[error("inputs were not computed from the same scenario: {0}")]
    Mismatch(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
