use thiserror::Error;

/// Errors raised by graph construction, scenario building and the solvers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("destination `{destination}` is not reachable from origin `{origin}`")]
    UnreachableDestination { origin: String, destination: String },
    #[error("duplicate edge id `{0}`")]
    DuplicateEdgeId(String),
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("path enumeration exceeded the cap of {cap} paths")]
    PathExplosion { cap: usize },
    #[error("dimension mismatch: expected {expected}, found {found} ({context})")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("negative coefficient {value} ({context})")]
    NegativeCoefficient { context: String, value: f64 },
    #[error("empty scenario specification")]
    EmptySpec,
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("invalid grid size {0}")]
    InvalidGridSize(usize),
    #[error("unsupported distribution `{0}`")]
    UnsupportedDistribution(String),
    #[error("integrand is not finite on scenario {index} (value {value})")]
    SingularIntegrand { index: usize, value: f64 },
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error("signal {signal} is never sent; its posterior is undefined")]
    DegenerateSignal { signal: usize },
    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    SolverDivergence { iterations: usize, residual: f64 },
    #[error("degenerate two-link instance: a1 + a2 = 0")]
    DegenerateInstance,
    #[error("instance is not a two parallel link network: {0}")]
    NotTwoLink(String),
    #[error("no feasible policy found")]
    Infeasible,
    #[error("no obedient policy found, including the full-information fallback")]
    NoFeasibleFound,
    #[error("system optimum cost is zero while the policy cost is {numerator}")]
    ZeroOptimalCost { numerator: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
