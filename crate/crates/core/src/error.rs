use thiserror::Error;

use crate::modpairs::ModulePair;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("modulus {0} is not prime")]
    NonPrimeModulus(u64),
    #[error("zero has no multiplicative inverse")]
    ZeroInverse,
    #[error("dimension or field mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix is singular (a diagonal entry is zero)")]
    SingularMatrix,
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),
    #[error("enumeration of {needed} items exceeds the budget of {budget}")]
    BudgetExceeded { needed: u128, budget: u128 },
    #[error("pair is not free: it does not generate a free cyclic submodule")]
    NotFree,
    #[error("matrix is not a unit of the triangular ring")]
    NotAUnit,
    #[error("block matrix is not invertible")]
    NotInvertible,
    #[error("unsupported dimension {0} (need n >= 2)")]
    UnsupportedDimension(usize),
    #[error("no admissible pivot column for row {row}")]
    PivotSelectionFailed { row: usize },
    #[error("linear system for V is singular at column {column}")]
    SingularSystem { column: usize },
    #[error("orbit has no canonical representative; reduced normal form is {normal_form}")]
    CanonicalizationFailed { normal_form: Box<ModulePair> },
    #[error("pair is not canonical")]
    NotCanonical,
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
    #[error("parse error: {0}")]
    Parse(String),
}
