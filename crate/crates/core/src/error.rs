use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("integrand is not finite at xi = {at}")]
    NonFiniteIntegrand { at: f64 },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("finite-difference step refinement stalled at h = {h}")]
    StepUnderflow { h: f64 },
    #[error("order {0} is not supported by this evaluator")]
    UnsupportedOrder(String),
    #[error("quadrature ({quadrature}) and Grunwald-Letnikov ({grunwald}) disagree beyond {limit}")]
    SchemeDisagreement {
        quadrature: f64,
        grunwald: f64,
        limit: f64,
    },
    #[error("power-rule exponent p = {0} must exceed -1")]
    Pole(f64),
    #[error("weight field is not polynomial and the series did not settle within {terms} terms")]
    NonPolynomialWeight { terms: usize },
    #[error("boundary term D^{order} f at the lower limit diverges")]
    DivergentBoundaryTerm { order: f64 },
    #[error("matrix order is the zero matrix")]
    ZeroMatrix,
    #[error("function is undefined at eigenvalue {0}")]
    UndefinedAtEigenvalue(String),
    #[error("matrix is numerically ill-conditioned: {0}")]
    IllConditioned(String),
    #[error("matrix order is not normal")]
    NotNormal,
    #[error("matrix order is not diagonalizable")]
    NonDiagonalizableOrder,
    #[error("matrix order is not positive definite")]
    NotPositiveDefinite,
    #[error("ambient dimensions differ: {0} vs {1}")]
    AmbientMismatch(usize, usize),
    #[error("form signatures differ")]
    SignatureMismatch,
    #[error("block multiplicity {p} exceeds ambient dimension {n}")]
    BlockTooLarge { p: usize, n: usize },
    #[error("transformation system is singular (det = {det:e})")]
    SingularSystem { det: f64 },
    #[error("connection series did not converge after {terms} terms (tail {tail:e})")]
    SeriesNoConverge { terms: usize, tail: f64 },
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("invalid input: {0}")]
    Invalid(String),
}
