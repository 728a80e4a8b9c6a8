//! `fiberwalk`: contingency-table fibers under the model of independence.
//!
//! A *fiber* is the set of all nonnegative integer tables sharing fixed
//! plane-sum margins (the 1-margins, which are the sufficient statistics of
//! the independence log-linear model). This crate provides, for 2-way and
//! 3-way tables:
//!
//! - dense integer/real tensors with plane-sum margins ([`tensor`]);
//! - the explicit quadratic Markov basis of the independence model and
//!   feasible move application ([`moves`]);
//! - exact fiber enumeration with the uniform and hypergeometric conditional
//!   distributions, plus brute-force conditional oracles ([`fiber`]);
//! - a seedable Metropolis–Hastings fiber sampler targeting either
//!   distribution ([`sampler`]);
//! - the strictly concave geometric-tilting MLE: log-partition primitives,
//!   damped Newton on general margins, the reduced two-variable `(P, Q)`
//!   system for heavy-corner margins `(B n^2, n^2, ..., n^2)`, and the 2-way
//!   typical table ([`solver`]);
//! - experiment drivers that sweep `(n, B)` grids and compare the solved
//!   expected table against its closed-form limits across the critical ratio
//!   `B_c = 1/(2^(2/3) - 1)` ([`phase`]).
//!
//! ```
//! use fiberwalk::{MarginSpec, fiber, solver};
//!
//! // All 3x3 tables with every row and column sum equal to 2.
//! let spec = MarginSpec::new(vec![vec![2, 2, 2], vec![2, 2, 2]]).unwrap();
//! let f = fiber::enumerate_fiber(&spec, 10_000).unwrap();
//! assert_eq!(f.len(), 21);
//!
//! // Constant margins force the constant expected table: 6 units over 9 cells.
//! let report = solver::solve_mle(&spec, &solver::SolveOptions::default()).unwrap();
//! assert!(report.expected.data().iter().all(|z| (z - 2.0 / 3.0).abs() < 1e-9));
//! ```

pub mod error;
pub mod fiber;
pub mod moves;
pub mod phase;
pub mod rng;
pub mod sampler;
pub mod solver;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{MarginSpec, RealTable, Table};
