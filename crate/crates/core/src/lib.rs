//! Polynomial approximation of discounted moments
//! `E[exp(-∫ r(X_s) ds) f(X_t) | X_0 = x]` of Markov processes.
//!
//! The process generator is applied to a monomial basis, overflowing powers
//! are projected back (finite section or Taylor expansion), and the
//! resulting k×k matrix `A_k` is exponentiated against coefficient vectors:
//!
//! ```text
//! E[...] ≈ <exp(t A_k) f, b(x)>
//! ```
//!
//! Modules:
//! - [`basis`]: basis layouts, coefficient vectors, Taylor overflow closure
//! - [`generator`]: matrix generators for CIR, Black-Karasinski and the
//!   rating-migration model
//! - [`expmv`]: action of the matrix exponential, sensitivities, resolvent
//!   diagnostics
//! - [`models`]: closed-form references
//! - [`montecarlo`]: simulation references

// `!(x > 0.0)` rejects NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

mod approx;
pub mod basis;
mod dual;
pub mod error;
pub mod expmv;
pub mod generator;
mod linalg;
pub mod models;
pub mod montecarlo;

pub use basis::{
    enumerate_basis, evaluate, reduce_degree, taylor_overflow, BasisKind, BasisLayout,
    CoefficientVector, MultiIndex, TaylorCoefficients,
};
pub use error::{Error, Result};
pub use expmv::{
    expmv_grid, phragmen_series, resolvent_norm, sensitivity, Expmv, ExpmvResult, StepInfo,
    TimeGrid, SENSITIVITY_TOL,
};
pub use generator::{
    build_ay_univariate, build_bk, build_cir, build_credit, check_generator, perturb_generator,
    perturb_generator_centered, GENERATOR_ROW_TOL,
    BkParams, CirParams, CreditParams, ExpansionPoint, MatrixGenerator, ModelSpec, ParamId,
    Projection,
};
pub use models::{
    bk_moment_map, bk_moment_map_inverse, cir_bond_price, credit_analytic_1d,
    credit_analytic_2d_commuting, noncommutativity, MigrationMatrix, COMMUTATOR_TOL,
    MAX_EIGEN_CONDITION,
};
pub use montecarlo::{mc_bk_yield, mc_cir_bond, mc_migration, McEstimate, SimConfig};

pub use nalgebra::{DMatrix, DVector};
