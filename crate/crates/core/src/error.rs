//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by dataset handling, evaluation, and the optimizers.
#[derive(Debug, Error)]
pub enum Error {
    /// A file or record does not match the documented on-disk format.
    #[error("format error: {0}")]
    Format(String),

    /// A value violates an invariant (score sums, ranges, non-finite numbers).
    #[error("validation error: {0}")]
    Validation(String),

    /// Cross-record agreement failed (image counts, class counts, labels).
    #[error("consistency error: {0}")]
    Consistency(String),

    /// A caller-supplied argument is outside its documented domain.
    #[error("argument error: {0}")]
    Argument(String),

    /// A cascade slot references an architecture with no profile on record.
    #[error("no profile for slot {slot}: {params}")]
    MissingProfile { slot: usize, params: String },

    /// Linear algebra failed beyond recovery (factorization after max jitter).
    #[error("numerical error: {0}")]
    Numerical(String),

    /// Every lattice point has already been observed; nothing left to propose.
    #[error("design space exhausted: all lattice points observed")]
    Exhausted,

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
