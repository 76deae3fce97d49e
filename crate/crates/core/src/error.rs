use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("unknown flow `{0}`")]
    UnknownFlow(String),

    #[error("flow parameter `{name}` = {value} outside documented range {range}")]
    FlowParameter {
        name: String,
        value: f64,
        range: &'static str,
    },

    #[error("invalid flow: {0}")]
    InvalidFlow(String),

    #[error("invalid metric: {0}")]
    InvalidMetric(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("degree error: {0}")]
    Degree(String),

    #[error("eigensolver failed: {0}")]
    Eigen(String),

    #[error("iterative eigensolver did not converge (max residual {max_residual:.3e})")]
    NotConverged { max_residual: f64 },

    #[error("pairing violation in sector {sector}: state {index} (E = {re:.6e}{im:+.6e}i) has d-image residual {residual:.3e}")]
    PairingViolation {
        sector: usize,
        index: usize,
        re: f64,
        im: f64,
        residual: f64,
    },

    #[error("Witten index methods disagree: trace {trace:.12e} vs zero-mode count {count}; unpaired states: {unpaired}")]
    WittenMismatch {
        trace: f64,
        count: i64,
        unpaired: String,
    },

    #[error("time step rejected at t = {time:.6e}: error estimate {estimate:.3e} exceeds {tolerance:.3e}")]
    StepRejected {
        time: f64,
        estimate: f64,
        tolerance: f64,
    },

    #[error("evolution diverged at t = {time:.6e}: norm grew by {growth:.3e}")]
    Diverged { time: f64, growth: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("scan resolution insufficient: {0}")]
    ScanResolution(String),

    #[error("Jacobian sign methods disagree for solution at phi0 = {phi0:.12e}")]
    SignMismatch { phi0: f64 },

    #[error("ill-conditioned conditioning: marginal below floor on {fraction:.2}% of cells")]
    IllConditioned { fraction: f64 },

    #[error("binning mismatch: {0}")]
    BinningMismatch(String),

    #[error("config error at {pointer}: {message}")]
    Config { pointer: String, message: String },

    #[error("linear solve failed: {0}")]
    Solve(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
