//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("field is not Hermitian-symmetric: {0}")]
    Symmetry(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("scaling error: {0}")]
    Scaling(String),

    /// Nonlinear fit did not converge; carries the best parameters seen.
    #[error("fit did not converge after {iterations} iterations (residual {residual:.6e})")]
    FitDiverged {
        iterations: usize,
        residual: f64,
        best_params: Vec<f64>,
    },

    #[error("solver did not converge after {max_iter} iterations")]
    Convergence { max_iter: usize },

    #[error("estimation error: {0}")]
    Estimation(String),

    #[error("sampling error: {0}")]
    Sampling(String),

    #[error("input error: {0}")]
    Input(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("at k=({kx},{ky}): {source}")]
    AtFrequency {
        kx: i32,
        ky: i32,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Annotate an error with the k-space location it occurred at.
    pub fn at_frequency(self, kx: i32, ky: i32) -> Error {
        Error::AtFrequency {
            kx,
            ky,
            source: Box::new(self),
        }
    }
}
