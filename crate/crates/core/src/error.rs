use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("exponents give sum of squares {sum_sq} > 1 (negative A^2)")]
    ExponentDomain { sum_sq: f64 },

    #[error("strict_positive background requires q_i > 0, got q = {q:?}")]
    ExponentSign { q: [f64; 3] },

    #[error("time must be positive, got t = {0}")]
    NonpositiveTime(f64),

    #[error("lapse is not populated")]
    MissingLapse,

    #[error("stored lapse disagrees with the lapse solved from gamma at mode {k:?} (|diff| = {diff:e})")]
    StaleLapse { k: [i32; 3], diff: f64 },

    #[error("scalar-field amplitude A vanishes; Hamiltonian constraint cannot fix chi")]
    ZeroScalarAmplitude,

    #[error("least-norm constraint solve is singular at mode {k:?}")]
    SolveFailure { k: [i32; 3] },

    #[error("parabolic gauge lambda must be nonzero and finite, got {0}")]
    InvalidLambda(f64),

    #[error("step limit {max_steps} exceeded at mode {k:?} (t = {t:e})")]
    StepLimitExceeded { k: [i32; 3], t: f64, max_steps: usize },

    #[error("parabolic gauge only integrates toward the past (t_min = {t_min} >= t_start = {t_start})")]
    ForwardParabolic { t_start: f64, t_min: f64 },

    #[error("non-finite state at mode {k:?} (t = {t:e})")]
    NonFiniteState { k: [i32; 3], t: f64 },

    #[error("invalid integrator options: {0}")]
    InvalidOptions(String),

    #[error("identity needs accumulator `{0}`")]
    MissingAccumulator(String),

    #[error("diagnostic requires gauge {expected}")]
    WrongGauge { expected: &'static str },

    #[error("fit needs >= 10 points over >= 2 decades (got {points} points over {decades:.2} decades)")]
    InsufficientSpan { points: usize, decades: f64 },

    #[error("trajectory reaches only t = {t_min:e}; limits need t_min <= 1e-4")]
    InsufficientDepth { t_min: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Config(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
