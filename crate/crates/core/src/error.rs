use thiserror::Error;

/// Errors raised by the physics modules.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("sector has {states} states, above the enumeration cap {cap}; use the Monte Carlo pathway instead")]
    CapExceeded { states: u128, cap: usize },
    #[error("lattice is not bipartite: {0}")]
    NotBipartite(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("numerical routine did not converge: {0}")]
    NonConvergence(String),
    #[error("acceptance rate {rate:.3e} is below the floor {floor:.1e}; use a smaller lattice or a shorter time")]
    AcceptanceFloor { rate: f64, floor: f64 },
    #[error("fit rejected: {0}")]
    FitRejected(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
