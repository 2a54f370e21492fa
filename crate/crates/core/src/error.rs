use thiserror::Error;

/// Errors shared by the simulation, training and analysis modules.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid time step: dt = {0} ms (must be > 0)")]
    InvalidTimestep(f64),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite stimulus in layer {layer} at step {step}")]
    NumericOverflow { layer: usize, step: usize },

    #[error("degenerate kernel: repeated eigenvalue for tau_u={tau_u}, tau_w={tau_w}, a={a}")]
    DegenerateKernel { tau_u: f64, tau_w: f64, a: f64 },

    #[error("degenerate signal: {0}")]
    DegenerateSignal(String),

    #[error("degenerate surrogate distribution: zero standard deviation for {0}")]
    DegenerateSurrogate(String),

    #[error("invalid band {name}: [{lo}, {hi}] Hz does not fit below Nyquist {nyquist} Hz")]
    InvalidBand {
        name: String,
        lo: f64,
        hi: f64,
        nyquist: f64,
    },

    #[error("signal too short: {len} samples, need more than {required}")]
    TooShort { len: usize, required: usize },

    #[error("infeasible CTC target: {0}")]
    InfeasibleTarget(String),

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("utterance shorter than one analysis window: {samples} samples < {window}")]
    UtteranceTooShort { samples: usize, window: usize },

    #[error("format error: {0}")]
    Format(String),

    #[error("config hash mismatch: artifact was produced with {found:#018x}, expected {expected:#018x}")]
    HashMismatch { expected: u64, found: u64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CoreError>;
