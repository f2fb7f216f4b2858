use thiserror::Error;

use crate::exprdiff::ParseError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised by the chart library.
///
/// The type is `Clone` because lazily built blend levels cache their outcome,
/// including failures, and hand out copies.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("t = {t} lies outside [-{r}, 0]")]
    Domain { t: f64, r: f64 },

    #[error("grid mismatch: ({0}) vs ({1})")]
    GridMismatch(String, String),

    #[error("component index {index} out of range 1..={n}")]
    Component { index: usize, n: usize },

    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error("cannot evaluate `{expr}`: {reason}")]
    Eval { expr: String, reason: String },

    #[error("L(phi) = {eta:?} lies outside W")]
    OutsideW { eta: Vec<f64> },

    #[error("delayed-value vector {v:?} lies outside V")]
    OutsideV { v: Vec<f64> },

    #[error("delay d{index}(eta) = {value} is outside [0, {r}]")]
    DelayRange { index: usize, value: f64, r: f64 },

    #[error(
        "grid too coarse: need |psi|_C < {eps:e}, achieved {achieved:e} with N = {grid}; \
         use N >= {suggested}"
    )]
    GridTooCoarse {
        eps: f64,
        achieved: f64,
        grid: usize,
        suggested: usize,
    },

    #[error("exhaustion level {level} exceeds the cap J_max = {cap}")]
    LevelCap { level: usize, cap: usize },

    #[error("fixed-point iterate left V after {iterations} steps (input not in the chart domain)")]
    Diverged { iterations: usize, v: Vec<f64> },

    #[error("fixed-point iteration did not converge in {iterations} steps (last step {last_step:e})")]
    NoConvergence { iterations: usize, last_step: f64 },

    #[error("function is not in X0: slope at 0 is {slope:?}")]
    NotInX0 { slope: Vec<f64> },

    #[error("I - D2R is singular (measured |D2R| = {norm})")]
    Singular { norm: f64 },

    #[error("solution segment left U at t = {t}: {reason}")]
    LeftU { t: f64, reason: String },

    #[error("state norm {norm:e} exceeded the bound at t = {t}")]
    Unstable { t: f64, norm: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o: {0}")]
    Io(String),
}

impl Error {
    /// True for the failures that mean "the point is outside the chart domain".
    pub fn is_outside_domain(&self) -> bool {
        matches!(
            self,
            Error::OutsideV { .. } | Error::Diverged { .. } | Error::NoConvergence { .. }
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}
