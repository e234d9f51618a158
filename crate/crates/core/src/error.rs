use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("branch '{branch}' references undeclared node '{node}'")]
    DanglingNode { branch: String, node: String },

    #[error("branch '{branch}': {what} must be positive, got {value}")]
    NonPositiveValue { branch: String, what: &'static str, value: f64 },

    #[error("duplicate branch label '{0}'")]
    DuplicateLabel(String),

    #[error("invalid circuit: {0}")]
    InvalidCircuit(String),

    #[error("invalid waveform: {0}")]
    InvalidWaveform(String),

    #[error("cannot resample from dt={from} to dt={to}: ratio is not a positive integer")]
    NonIntegerResample { from: f64, to: f64 },

    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),

    #[error("singular nodal matrix: node '{node}' has no path to ground")]
    SingularMatrix { node: String },

    #[error("newton iteration did not converge at t={time:.6e} s: branch '{branch}', residual {residual:.3e}")]
    NewtonDivergence { time: f64, branch: String, residual: f64 },

    #[error("line section '{label}' is shorter than one time step (travel time {travel_time:.3e} s < dt {dt:.3e} s)")]
    LineTooShort { label: String, travel_time: f64, dt: f64 },

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("modal decomposition failed: {0}")]
    ModalDecomposition(String),

    #[error("lightning waveform fit failed: {reason} (residual {residual:.3e})")]
    WaveformFit { reason: String, residual: f64 },

    #[error("inconsistent short-circuit data: zero-sequence impedance {z0:.4} ohm is not positive")]
    InconsistentShortCircuit { z0: f64 },

    #[error("invalid component: {0}")]
    InvalidComponent(String),

    #[error("invalid EGM setup: {0}")]
    InvalidEgm(String),

    #[error("flashover oracle failed on stroke {stroke}: {reason}")]
    Oracle { stroke: usize, reason: String },

    #[error("analysis error: {0}")]
    Analysis(String),

    #[error("frequency grids do not match ({0})")]
    GridMismatch(String),

    #[error("config syntax error at line {line}: {message}")]
    ConfigSyntax { line: usize, message: String },

    #[error("config value out of range at '{key}': {message}")]
    ConfigValue { key: String, message: String },

    #[error("no scenarios defined")]
    NoScenarios,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
