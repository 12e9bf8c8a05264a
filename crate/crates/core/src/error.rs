use std::path::PathBuf;

use num_complex::Complex64;

/// Errors raised by the simulator.
///
/// Every variant has a stable snake-case [`kind`](Error::kind) used in
/// machine-readable outputs (sweep cell status, CLI error JSON).
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("frequency `{name}` must be positive, got {value}")]
    NonPositiveFrequency { name: String, value: f64 },
    #[error("cavity loss must be non-negative, got {0}")]
    NegativeLoss(f64),
    #[error("coupling must be non-negative, got {0}")]
    NegativeCoupling(f64),
    #[error("emitter loss {0} is not supported (only gamma = 0)")]
    EmitterLossUnsupported(f64),
    #[error("ring needs at least 3 cavities, got {0}")]
    RingTooSmall(usize),
    #[error("expected {expected} cavity frequencies, got {found}")]
    FrequencyCountMismatch { expected: usize, found: usize },
    #[error("parameter `{0}` is not finite")]
    NonFiniteParameter(&'static str),
    #[error("emitter count must be at least 1")]
    NoEmitters,
    #[error("operation requires {expected} cavities, got {found}")]
    UnsupportedRing { expected: usize, found: usize },
    #[error("operation requires equal cavity frequencies")]
    NotSymmetric,

    #[error("step size underflow at t = {t} (h = {h})")]
    StepSizeUnderflow { t: f64, h: f64 },
    #[error("non-finite state encountered at t = {t}")]
    NonFiniteState { t: f64 },
    #[error("no steady state reached by t = {t} (residual {residual:e})")]
    NoConvergence { t: f64, residual: f64 },
    #[error("invalid integration setting: {0}")]
    InvalidIntegration(&'static str),

    #[error("omega_c + 2J vanishes")]
    FrequencyCollapse,
    #[error("singular denominator {0:e} in the closed-form steady state")]
    SingularDenominator(f64),
    #[error("no superradiant transition: sum of alpha_tilde real parts is {0}")]
    NoTransition(f64),
    #[error("no root of the critical detuning equation in (0, {max}]")]
    NoRoot { max: f64 },

    #[error("state is not steady (rhs residual {0:e})")]
    NotSteady(f64),
    #[error("Z = 0: the spin fluctuation cannot be eliminated")]
    ZeroZ,
    #[error("eigenvalue computation did not converge")]
    EigenFailure,

    #[error("|beta| = {0} >= 1 in the Holstein-Primakoff expansion")]
    BetaOverflow(f64),
    #[error("Z = 1/2 is a pole of the Holstein-Primakoff amplitude")]
    ZAtHalf,
    #[error("drift has an eigenvalue {0} too close to the imaginary axis")]
    MarginalDrift(Complex64),
    #[error("Lyapunov system is singular")]
    SingularLyapunov,

    #[error("invalid sweep axis: {0}")]
    InvalidAxis(String),
    #[error("unknown observable `{0}`")]
    UnknownObservable(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NonPositiveFrequency { .. } => "non_positive_frequency",
            Error::NegativeLoss(_) => "negative_loss",
            Error::NegativeCoupling(_) => "negative_coupling",
            Error::EmitterLossUnsupported(_) => "emitter_loss_unsupported",
            Error::RingTooSmall(_) => "ring_too_small",
            Error::FrequencyCountMismatch { .. } => "frequency_count_mismatch",
            Error::NonFiniteParameter(_) => "non_finite_parameter",
            Error::NoEmitters => "no_emitters",
            Error::UnsupportedRing { .. } => "unsupported_ring",
            Error::NotSymmetric => "not_symmetric",
            Error::StepSizeUnderflow { .. } => "step_size_underflow",
            Error::NonFiniteState { .. } => "non_finite_state",
            Error::NoConvergence { .. } => "no_convergence",
            Error::InvalidIntegration(_) => "invalid_integration",
            Error::FrequencyCollapse => "frequency_collapse",
            Error::SingularDenominator(_) => "singular_denominator",
            Error::NoTransition(_) => "no_transition",
            Error::NoRoot { .. } => "no_root",
            Error::NotSteady(_) => "not_steady",
            Error::ZeroZ => "zero_z",
            Error::EigenFailure => "eigen_failure",
            Error::BetaOverflow(_) => "beta_overflow",
            Error::ZAtHalf => "z_at_half",
            Error::MarginalDrift(_) => "marginal_drift",
            Error::SingularLyapunov => "singular_lyapunov",
            Error::InvalidAxis(_) => "invalid_axis",
            Error::UnknownObservable(_) => "unknown_observable",
            Error::Io { .. } => "io",
            Error::Json { .. } => "json",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
