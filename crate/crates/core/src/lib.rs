//! p-capacity and p-parabolicity of model warped products.
//!
//! A model manifold is `M = N x_f L` where the base `N` is rotationally
//! symmetric with metric profile `sigma`, the warp `f` is radial and the
//! fiber `L` enters only through its dimension and total volume. Everything
//! downstream is driven by the boundary measure of the radial ball `D_t`,
//!
//! ```text
//! S(t) = vol(L) * f(t)^l * omega_{n-1} * sigma(t)^{n-1}
//! ```
//!
//! From `S` the crate computes the capacity of the core `D = B_1 x_f L`
//! inside `D_R` two independent ways (closed-form flux integral and direct
//! minimization of the discrete p-energy), follows it as `R` grows, and
//! decides p-parabolicity by testing divergence of `int_1^inf S^{1/(1-p)}`.
//! The [`submersion`] module covers bases carrying fibers of bounded volume.

// `!(x > 0.0)` is used throughout to reject NaN along with non-positive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod capacity;
pub mod criterion;
pub mod geometry;
pub mod profile;
pub mod quadrature;
pub mod regression;
pub mod submersion;

pub use capacity::{
    capacity_limit, flux_capacity, optimal_profile, variational_capacity, variational_solve,
    CapacityError, CapacityEstimate, CapacityLimit, LimitOptions, Method, OptimalProfile, Trend,
    VariationalSolution,
};
pub use criterion::{
    classify, criterion_integrand, cross_check, sweep_p, ClassifyOptions, CriterionError,
    CrossCheck, Decision, Sweep, Verdict,
};
pub use geometry::{sphere_area, FluxDensity, FluxFactors, ModelError, ModelManifold};
pub use profile::{EvalError, ParseError, ProfileExpr};
pub use quadrature::{QuadratureError, QuadratureSpec};
pub use submersion::{
    check_uniform_bound, pulled_back_energy, transfer_verdict, verify_decay, BoundCheck,
    CutoffFamily, CutoffShape, DecayReport, SubmersionError, SubmersionSpec,
};
