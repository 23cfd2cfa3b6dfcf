use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("integration failure: {0}")]
    Integration(String),
    #[error("no radial solution: {0}")]
    NoSolution(String),
    #[error("eigensolver failure: {0}")]
    Eigen(String),
    #[error("unsupported dimension N = {0} (projected bubbles need N = 3)")]
    UnsupportedDimension(usize),
    #[error("harmonic truncation too small: boundary residual {residual:.3e} exceeds {tol:.3e}")]
    Truncation { residual: f64, tol: f64 },
    #[error("derivative unreliable: step halving changed the value by {0:.3e} (relative)")]
    DerivativeUnreliable(f64),
    #[error("configuration rejected: {0}")]
    Rejected(String),
    #[error("maximizer of the reduced energy lies on the landscape boundary at ({ell}, {r})")]
    LandscapeBoundary { ell: f64, r: f64 },
    #[error("quadrature did not converge: {0}")]
    Quadrature(String),
    #[error("evaluation failed at {point:?}: {message}")]
    Evaluation { point: Vec<f64>, message: String },
    #[error("near-degenerate mode k = {mode}, i = {index}: |mu| = {value:.3e}")]
    NearDegenerate { mode: usize, index: usize, value: f64 },
}

pub type Result<T> = std::result::Result<T, LabError>;
