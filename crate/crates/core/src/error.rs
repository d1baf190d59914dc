use thiserror::Error;

/// Errors produced by the simulation and inference routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("quadrature did not converge: estimate {estimate:e}, error estimate {error:e}")]
    QuadratureNonConvergence { estimate: f64, error: f64 },

    #[error("ODE step size underflow at t = {t:e} s (T = {temperature} K)")]
    StepSizeUnderflow { t: f64, temperature: f64 },

    #[error("incomplete gamma evaluation failed for a = {a}, x = {x}")]
    IncompleteGamma { a: f64, x: f64 },

    #[error("optimizer did not converge: best objective {objective:e} after {iterations} iterations")]
    NonConvergence { objective: f64, iterations: usize },

    #[error("non-positive radiant flux {flux:e} eV/s at T = {temperature} K")]
    NonPositiveFlux { temperature: f64, flux: f64 },

    #[error("{path}: line {line}: field `{field}`: {message}")]
    Parse { path: String, line: u64, field: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn ensure_finite(name: &str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{name} must be finite, got {value}")))
    }
}
