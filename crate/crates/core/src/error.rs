use thiserror::Error;

/// Errors surfaced by the toolkit. Variants carry enough context to be
/// reported by the CLI with the failing module's name.
#[derive(Debug, Error)]
pub enum FluxError {
    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("degenerate zero at {position:?}: Hessian eigenvalue {eig:.3e} within tolerance of 0")]
    DegenerateZero { position: Vec<f64>, eig: f64 },

    #[error("incomplete critical-point sweep: Poincare-Hopf sum {sum} != 0 over {count} zeros")]
    IncompleteSweep { sum: i64, count: usize },

    #[error("point {position:?} is not a zero of the drift: |v| = {residual:.3e}")]
    NotAZero { position: Vec<f64>, residual: f64 },

    #[error("drift Jacobian asymmetry {asym:.3e} exceeds tolerance; drift is not dual to a closed form")]
    NonSymmetricJacobian { asym: f64 },

    #[error("unstable-manifold trace from saddle {saddle:?} did not reach a sink within the time budget")]
    EscapeTimeout { saddle: Vec<f64> },

    #[error("trajectory from saddle {saddle:?} ends near two sinks; cannot assign edge target")]
    AmbiguousTarget { saddle: Vec<f64> },

    #[error("gain mismatch on edge {edge}: |gain - primitive difference| = {residual:.3e}")]
    GainMismatch { edge: usize, residual: f64 },

    #[error("undirected Morse graph is disconnected")]
    DisconnectedGraph,

    #[error("no spanning arborescence exists{0}")]
    NoArborescence(String),

    #[error("minimal spanning tree is ambiguous: runner-up gap {gap:.3e} below tie tolerance")]
    AmbiguousMinimum { gap: f64 },

    #[error("no cycle-rooted spanning tree with cocycle sign {sign:+} exists")]
    NoSignedCycle { sign: i8 },

    #[error("cocycle is exact at graph level: every edge pair has equal heights, flux exponent undefined")]
    ExactFormNoFlux,

    #[error("positive-cycle minimum {plus} does not beat negative-cycle minimum {minus}; exponent not reported")]
    AssumptionViolated { plus: f64, minus: f64 },

    #[error("transition matrix is not row-stochastic: row {row} sums to {sum}")]
    NotStochastic { row: usize, sum: f64 },

    #[error("Markov chain is reducible; stationary distribution not unique")]
    ReducibleChain,

    #[error("merge-tree window of {periods:?} periods too small: result moved by {delta:.3e} under enlargement")]
    WindowTooSmall { periods: Vec<i32>, delta: f64 },

    #[error("stationary solve did not converge: residual {residual:.3e} after {iters} iterations")]
    NotConverged { residual: f64, iters: usize },

    #[error("stationary density has nonpositive entry {value:.3e} at cell {cell}")]
    NegativeDensity { cell: usize, value: f64 },

    #[error("field and form live on different grids or tori")]
    GridMismatch,

    #[error("grid too coarse for eps = {eps}: need eps >= {min_eps:.3e} (= max|v| h / 2)")]
    GridTooCoarse { eps: f64, min_eps: f64 },

    #[error("adaptive quadrature failed to reach tolerance {tol:.1e} (estimate {estimate:.6e})")]
    QuadratureFailure { tol: f64, estimate: f64 },

    #[error("SDE step too large: dt max|v| + 3 sqrt(2 eps dt) = {step:.3e} exceeds half the minimal period")]
    StepTooLarge { step: f64 },

    #[error("path lift is ambiguous: segment of length {len:.3e} exceeds half a period")]
    AmbiguousWinding { len: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, FluxError>;
