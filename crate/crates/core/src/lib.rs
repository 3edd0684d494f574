//! Heavy-ball dynamics `εx'' + γx' + ∇f(x) = 0`, their gradient-flow limit
//! `γx' + ∇f(x) = 0`, and the numerical diagnostics used to study the
//! small-mass limit: energy dissipation, velocity and length bounds,
//! tracking between the two systems, and limit-point classification.

// `!(a <= b)` is used on purpose so that NaN fails.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod dynamics;
pub mod example_xy;
pub mod experiment;
pub mod objectives;
pub mod ode;
