use thiserror::Error;

/// Failure modes shared by every layer of the crate.
///
/// `ConfigValidation` carries the complete list of problems found in one
/// config file, so callers can surface all of them in a single run instead
/// of fixing them one at a time.
#[derive(Debug, Error)]
pub enum Error {
    /// A model object (topology, link set, rate menu, ...) violates a
    /// structural invariant and could not be built.
    #[error("invalid model: {0}")]
    InvalidModel(String),

    /// An operation was called with arguments outside its domain.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// One or more named problems in an experiment config.
    #[error("invalid config:\n  - {}", .0.join("\n  - "))]
    ConfigValidation(Vec<String>),

    /// An iterative solver ran out of iterations before meeting its
    /// tolerance. The message says which solver and how far it got.
    #[error("no convergence: {0}")]
    NonConvergence(String),

    /// A filesystem read or write failed. The message names the path.
    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;
