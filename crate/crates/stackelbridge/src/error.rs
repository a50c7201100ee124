use thiserror::Error;

/// Errors shared across the library.
#[derive(Debug, Error)]
pub enum Error {
    /// A callable produced a non-finite value.
    #[error("non-finite value in {context}: x = {x:?}, y = {y:?}")]
    Numerical {
        context: &'static str,
        x: Vec<f64>,
        y: Vec<f64>,
    },

    /// Step size violates the admissibility condition r < 2γ/L_y².
    #[error("inadmissible step r = {r}: requires r < 2γ/L² = {limit}")]
    Admissibility { r: f64, limit: f64 },

    /// Vector/matrix dimensions do not match the ambient dimension.
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    /// An iterative procedure ran out of iterations before reaching its tolerance.
    #[error("{what} did not converge after {iterations} iterations (residual {residual:.3e})")]
    Convergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
        last: Vec<f64>,
    },

    /// Mirror step asked to grow a coordinate whose mass is exactly zero.
    #[error("mirror step cannot re-enter support: coordinate {index} is zero with negative cost {cost}")]
    DegenerateSupport { index: usize, cost: f64 },

    /// I − ∇_y h is singular (spectral radius of ∇_y h at or above one).
    #[error("singular sensitivity system: I - ∇_y h is not invertible")]
    SingularSystem,

    /// Theorem-style bounds are stated under γ = 1; the caller must rescale.
    #[error("bound requires the normalization γ = 1 (got γ = {gamma}); rescale f by 1/γ and r by γ")]
    Normalization { gamma: f64 },

    /// A problem instance is outside its domain of definition.
    #[error("domain error: {0}")]
    Domain(String),

    /// Malformed input file.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// An origin-destination pair has no connecting path.
    #[error("no path connects origin {origin} to destination {destination}")]
    Connectivity { origin: usize, destination: usize },

    /// Invalid set/config combination (e.g. mirror dynamics on a non-simplex set).
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
