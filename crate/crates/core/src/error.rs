use thiserror::Error;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },

    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },

    #[error("exponent at byte {offset} is not a constant")]
    NonConstantExponent { offset: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("singular metric at {point:?} (condition number {condition:.3e})")]
    SingularMetric { point: Vec<f64>, condition: f64 },

    #[error("metric signature at {point:?} is ({found_pos},{found_neg}), declared ({pos},{neg})")]
    SignatureMismatch {
        point: Vec<f64>,
        pos: usize,
        neg: usize,
        found_pos: usize,
        found_neg: usize,
    },

    #[error("Schouten tensor is undefined in dimension 2; supply an override")]
    UnsupportedSchouten,

    #[error("Schouten override fails {identity} at {point:?}: lhs {lhs:.6e}, rhs {rhs:.6e}")]
    SchoutenIdentity {
        identity: &'static str,
        point: Vec<f64>,
        lhs: f64,
        rhs: f64,
    },

    #[error("null velocity at t = {t}")]
    NullVelocity { t: f64 },

    #[error("causal character mismatch at t = {t}: {message}")]
    CausalMismatch { t: f64, message: String },

    #[error("causal character of the velocity changed near t = {t}")]
    CausalFlip { t: f64 },

    #[error("step size underflow; last good t = {t}")]
    StepUnderflow { t: f64 },

    #[error("step budget exhausted; last good t = {t}")]
    TooManySteps { t: f64 },

    #[error("pole of the Mobius map at t = {t}")]
    Pole { t: f64 },

    #[error("input curve is not a conformal geodesic (residual {residual:.3e} at t = {t})")]
    NotConformalGeodesic { t: f64, residual: f64 },

    #[error("boundary defining coordinate must be positive, got {0}")]
    NonPositiveCoordinate(f64),

    #[error("map leaves the target chart at (s, t) = ({s}, {t}): u0 = {u0}")]
    MapExitsChart { s: f64, t: f64, u0: f64 },

    #[error("only {used} samples above the noise floor; all samples at noise floor")]
    AtNoiseFloor { used: usize },

    #[error("extrapolation does not converge (error estimate {estimate:.3e} grows)")]
    NonConvergent { estimate: f64 },

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
