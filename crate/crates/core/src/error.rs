use thiserror::Error;

/// Errors raised by the certificate and simulation machinery.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("time {s} outside the admissible range [{lo}, {hi}]")]
    OutOfRange { s: f64, lo: f64, hi: f64 },

    #[error("empty window: s0 = {s0} exceeds horizon {horizon}")]
    EmptyWindow { s0: f64, horizon: f64 },

    #[error(
        "quadrature on [{a}, {b}] did not converge: estimate {estimate}, residual {residual} after {subdivisions} subdivisions"
    )]
    QuadratureFailed {
        a: f64,
        b: f64,
        estimate: f64,
        residual: f64,
        subdivisions: usize,
    },

    #[error("integrand is not finite near s = {at}; partial value {partial}")]
    DivergentIntegral { at: f64, partial: f64 },

    #[error("switch s0 = {s0} is not admissible: window margin {margin} <= 0")]
    Inadmissible { s0: f64, margin: f64 },

    #[error("noise floor inf g over [{s0}, T] is zero")]
    DegenerateNoise { s0: f64 },

    #[error("generator residual requested at the kink r = R_sw = {r_sw}; evaluate one-sided")]
    AtKink { r_sw: f64 },

    #[error("switch s0 = {s0} is not grid aligned; nearest aligned switches are {below} and {above}")]
    NotGridAligned { s0: f64, below: f64, above: f64 },

    #[error("no admissible grid-aligned switch; window margins: {margins:?}")]
    NoAdmissibleSwitch { margins: Vec<(f64, f64)> },

    #[error("unsupported transport problem: {0}")]
    UnsupportedTransport(String),

    #[error("path {path} exploded (|x| > 1e8) at reverse time {t}; reduce the step size")]
    Explosion { path: usize, t: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidInput(msg()))
    }
}
