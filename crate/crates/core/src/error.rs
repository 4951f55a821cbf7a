//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
#[non_exhaustive]
pub enum Error {
    #[error("invalid physical constants: {0}")]
    InvalidConstants(String),

    #[error("invalid Zeeman level: 2m = {m2} not in manifold 2j = {j2}")]
    InvalidLevel { j2: i32, m2: i32 },

    /// j = 0 and j = 1/2 make j(2j - 1) vanish; such manifolds carry no
    /// quadrupole moment.
    #[error("quadrupole geometric factor undefined for 2j = {j2}")]
    DegenerateManifold { j2: i32 },

    #[error("invalid field geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid trap parameters: {0}")]
    InvalidTrap(String),

    #[error("ion separation undefined at zero axial frequency")]
    ZeroFrequency,

    #[error("invalid state specification: {0}")]
    InvalidState(String),

    /// Shift budgets are defined for states whose kets all live in the D
    /// manifold; mixed ground/metastable preparation states are representable
    /// but have no budget.
    #[error("shift budget undefined outside the D manifold")]
    BudgetUndefined,

    #[error("invalid noise model: {0}")]
    InvalidNoise(String),

    #[error("invalid experiment plan: {0}")]
    InvalidPlan(String),

    #[error("parity expectation {0} outside [-1, 1]")]
    ProbabilityRange(f64),

    #[error("dataset violates schema: {0}")]
    InvalidDataset(String),

    /// Anything wrong with a run configuration file: unreadable, unparseable,
    /// unknown keys, bad units, or values a mode cannot accept. The CLI maps
    /// this variant to its dedicated exit code.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("fit input rejected: {0}")]
    FitInput(String),

    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv failure: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
