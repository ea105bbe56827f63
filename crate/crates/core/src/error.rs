use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// The potential violates a structural assumption the operation relies on.
    #[error("assumption violated: {0}")]
    Assumption(String),

    #[error("quadrature on [{lo}, {hi}] did not converge: achieved {achieved:e}, target {target:e}")]
    Quadrature {
        lo: f64,
        hi: f64,
        achieved: f64,
        target: f64,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A velocity that does not integrate to zero cannot be written as `-∂ₓf` with `f` vanishing at both ends.
    #[error("velocity is not tangent: total integral {total:e} exceeds {tolerance:e}")]
    Tangent { total: f64, tolerance: f64 },

    #[error("rate fit failed: {0}")]
    Fit(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit status used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numerical(_) | Error::Quadrature { .. } => 3,
            _ => 2,
        }
    }
}
