use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A per-user rate was requested on a carrier that serves nobody.
    #[error("carrier {carrier} in area {area} has no active user")]
    EmptyCarrier { area: usize, carrier: u8 },

    #[error("operation only defined for a single-area cell (got {areas} areas)")]
    UnsupportedGeometry { areas: usize },

    #[error("system is not stable at load {rho}")]
    Unstable { rho: f64 },

    #[error("target throughput {target} exceeds the zero-load throughput {max}")]
    InfeasibleTarget { target: f64, max: f64 },

    #[error(
        "state space of {states} states exceeds the budget of {budget}; \
         try max_total <= {suggested_max_total}"
    )]
    TooLarge {
        states: u128,
        budget: usize,
        suggested_max_total: u32,
    },

    #[error(
        "stationary solver did not converge in {iterations} iterations (residual {residual:e})"
    )]
    NotConverged {
        iterations: usize,
        residual: f64,
        /// Residual after each convergence check, oldest first.
        trace: Vec<f64>,
    },

    #[error("degenerate solve: {0}")]
    Degenerate(String),

    #[error("no data: {0}")]
    NoData(String),

    #[error("unknown preset `{0}` (valid: dc-hsdpa, db-hsdpa, lte)")]
    UnknownPreset(String),

    #[error("capacity probe at theta={theta} failed (bracket [{lo}, {hi}]): {source}")]
    Probe {
        theta: f64,
        lo: f64,
        hi: f64,
        #[source]
        source: Box<Error>,
    },
}
