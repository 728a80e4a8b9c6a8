//! Crate-wide error type.

use thiserror::Error;

use crate::solver::{BarvinokSolution, SolveReport};

/// Errors for table construction, enumeration, sampling, and solving.
#[derive(Debug, Error)]
pub enum Error {
    #[error("rank {0} not supported; tables must be 2-way or 3-way")]
    UnsupportedRank(usize),

    #[error("axis {axis} out of range for a rank-{rank} table")]
    AxisOutOfRange { axis: usize, rank: usize },

    #[error("dims {dims:?} imply {expected} cells but {got} were given")]
    ShapeMismatch {
        dims: Vec<usize>,
        expected: usize,
        got: usize,
    },

    #[error("every axis must have positive length")]
    EmptyAxis,

    #[error("negative entry at flat position {0}")]
    NegativeEntry(usize),

    #[error("entry at flat position {0} is not a finite nonnegative number")]
    NotFiniteEntry(usize),

    #[error("axis totals disagree: {0:?}")]
    MismatchedTotals(Vec<i64>),

    #[error("move generation needs at least 2 indices along every axis")]
    DegenerateAxis,

    #[error("move shape does not match table dims")]
    MoveShapeMismatch,

    #[error("move application would drive a cell negative")]
    Infeasible,

    #[error("fiber exceeds enumeration budget of {budget} tables")]
    BudgetExceeded { budget: usize },

    #[error("fiber is empty")]
    EmptyFiber,

    #[error("table does not lie in the given fiber")]
    TableOutsideFiber,

    #[error("move set is generated on demand; this operation needs a materialized set")]
    NotMaterialized,

    #[error("tilting parameter must be positive, got theta = {0}")]
    NonPositiveTheta(f64),

    #[error("margin entry is zero at axis {axis}, index {index}; drop the empty slice first")]
    ZeroMargin { axis: usize, index: usize },

    #[error(
        "MLE solve did not converge: residual {:.3e} after {} iterations",
        report.residual_inf,
        report.iterations
    )]
    NotConverged { report: Box<SolveReport> },

    #[error(
        "(P, Q) solve did not converge: residual {:.3e} after {} iterations",
        best.residual,
        best.iterations
    )]
    PqNotConverged { best: Box<BarvinokSolution> },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),

    #[error("invalid chain config: {0}")]
    InvalidConfig(&'static str),
}

pub type Result<T> = std::result::Result<T, Error>;
