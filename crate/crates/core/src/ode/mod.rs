//! Adaptive explicit integration of first-order systems `y' = g(t, y)`.
//!
//! The stepper is the Dormand–Prince 5(4) embedded pair with a
//! proportional–integral step controller and the standard fifth-order
//! continuous extension. Every accepted step keeps its interpolation
//! coefficients, so a [`Trajectory`] can be evaluated (and differentiated)
//! anywhere on its span. On top of the dense output sit zero-crossing
//! detection ([`detect_event`]) and Gauss–Kronrod quadrature along the
//! solution ([`arc_length`], [`integrate_along`]).

mod config;
mod dopri5;
mod events;
mod quadrature;
mod trajectory;

pub use config::IntegratorConfig;
pub use dopri5::{integrate, integrate_with_stop, EarlyStop};
pub use events::{detect_event, Direction, EventQuery};
pub use quadrature::{arc_length, integrate_along, Selector};
pub use trajectory::{Termination, Trajectory};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OdeError {
    #[error("invalid integrator configuration: {0}")]
    InvalidConfig(String),
    #[error("step size {h:e} underflowed at t = {t}")]
    StepUnderflow { t: f64, h: f64 },
    #[error("exceeded {steps} steps before t = {t}")]
    MaxStepsExceeded { t: f64, steps: usize },
    #[error("non-finite state encountered at t = {t}")]
    NonFiniteState { t: f64 },
    #[error("time {t} outside trajectory span [{start}, {end}]")]
    OutOfRange { t: f64, start: f64, end: f64 },
}
