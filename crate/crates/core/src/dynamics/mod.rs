//! Heavy-ball and gradient-flow systems, their energy functionals and the
//! closed-form constants behind the velocity and length bounds.
//!
//! States of the heavy-ball system are laid out as `[x, v]` (length `2n`);
//! gradient-flow states are just `x`. The Euclidean inner product is used
//! throughout, so the dual norm coincides with the norm.

mod bounds;
mod run;

pub use bounds::{
    eta_constant, length_lemma_constants, phi_bound, speed_bound, speed_bound_a, speed_bound_b, LengthLemmaConstants,
    SpeedBound, SpeedBoundInputs,
};
pub use run::{Dynamics, Run, CONVERGENCE_DWELL, CONVERGENCE_TOL};

use std::sync::Arc;

use thiserror::Error;

use crate::objectives::Objective;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("{0}")]
    InvalidParameter(String),
    #[error("expected vectors of dimension {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("Lipschitz constant {l} must be at least max(1, epsilon) = {required}")]
    InvalidLipschitz { l: f64, required: f64 },
}

fn positive(name: &str, v: f64) -> Result<(), DynamicsError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(DynamicsError::InvalidParameter(format!("{name} must be positive")))
    }
}

fn check_dim(expected: usize, v: &[f64]) -> Result<(), DynamicsError> {
    if v.len() != expected {
        return Err(DynamicsError::DimensionMismatch { expected, got: v.len() });
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(DynamicsError::InvalidParameter("initial data must be finite".into()));
    }
    Ok(())
}

/// `εx'' + γx' + ∇f(x) = 0`, `x(0) = x0`, `x'(0) = v0`.
#[derive(Debug, Clone)]
pub struct HeavyBallProblem {
    pub epsilon: f64,
    pub gamma: f64,
    pub x0: Vec<f64>,
    pub v0: Vec<f64>,
    pub objective: Arc<dyn Objective>,
}

impl HeavyBallProblem {
    pub fn new(
        objective: Arc<dyn Objective>,
        epsilon: f64,
        gamma: f64,
        x0: Vec<f64>,
        v0: Vec<f64>,
    ) -> Result<Self, DynamicsError> {
        positive("epsilon", epsilon)?;
        positive("gamma", gamma)?;
        check_dim(objective.dim(), &x0)?;
        check_dim(objective.dim(), &v0)?;
        Ok(Self {
            epsilon,
            gamma,
            x0,
            v0,
            objective,
        })
    }

    pub fn dim(&self) -> usize {
        self.x0.len()
    }

    /// `[x0, v0]`.
    pub fn initial_state(&self) -> Vec<f64> {
        let mut y = self.x0.clone();
        y.extend_from_slice(&self.v0);
        y
    }

    /// The gradient-flow limit with the same friction and start.
    pub fn degenerate(&self) -> GradientFlowProblem {
        GradientFlowProblem {
            gamma: self.gamma,
            x0: self.x0.clone(),
            objective: Arc::clone(&self.objective),
        }
    }
}

/// `γx' + ∇f(x) = 0`, `x(0) = x0`.
#[derive(Debug, Clone)]
pub struct GradientFlowProblem {
    pub gamma: f64,
    pub x0: Vec<f64>,
    pub objective: Arc<dyn Objective>,
}

impl GradientFlowProblem {
    pub fn new(objective: Arc<dyn Objective>, gamma: f64, x0: Vec<f64>) -> Result<Self, DynamicsError> {
        positive("gamma", gamma)?;
        check_dim(objective.dim(), &x0)?;
        Ok(Self { gamma, x0, objective })
    }

    pub fn dim(&self) -> usize {
        self.x0.len()
    }
}

/// Either system, for code that handles both.
#[derive(Debug, Clone)]
pub enum Problem {
    HeavyBall(HeavyBallProblem),
    GradientFlow(GradientFlowProblem),
}

impl Problem {
    pub fn objective(&self) -> &Arc<dyn Objective> {
        match self {
            Problem::HeavyBall(p) => &p.objective,
            Problem::GradientFlow(p) => &p.objective,
        }
    }

    pub fn x0(&self) -> &[f64] {
        match self {
            Problem::HeavyBall(p) => &p.x0,
            Problem::GradientFlow(p) => &p.x0,
        }
    }

    /// Initial velocity; for the gradient flow it is `−∇f(x0)/γ`.
    pub fn v0(&self) -> Vec<f64> {
        match self {
            Problem::HeavyBall(p) => p.v0.clone(),
            Problem::GradientFlow(p) => {
                let mut g = vec![0.0; p.dim()];
                p.objective.gradient(&p.x0, &mut g);
                g.iter().map(|v| -v / p.gamma).collect()
            }
        }
    }

    pub fn epsilon(&self) -> Option<f64> {
        match self {
            Problem::HeavyBall(p) => Some(p.epsilon),
            Problem::GradientFlow(_) => None,
        }
    }

    pub fn gamma(&self) -> f64 {
        match self {
            Problem::HeavyBall(p) => p.gamma,
            Problem::GradientFlow(p) => p.gamma,
        }
    }

    pub fn simulate(
        &self,
        config: &crate::ode::IntegratorConfig,
        early_stop: bool,
    ) -> Result<Run, crate::ode::OdeError> {
        match self {
            Problem::HeavyBall(p) => p.simulate(config, early_stop),
            Problem::GradientFlow(p) => p.simulate(config, early_stop),
        }
    }
}

/// First-order form `(x, v)' = (v, −(γv + ∇f(x))/ε)`.
pub fn heavy_ball_field(p: &HeavyBallProblem) -> impl Fn(f64, &[f64], &mut [f64]) + '_ {
    let n = p.dim();
    let (eps, gamma) = (p.epsilon, p.gamma);
    move |_t, y, dy| {
        let (x, v) = y.split_at(n);
        let (dx, dv) = dy.split_at_mut(n);
        dx.copy_from_slice(v);
        p.objective.gradient(x, dv);
        for i in 0..n {
            dv[i] = -(gamma * v[i] + dv[i]) / eps;
        }
    }
}

/// `x' = −∇f(x)/γ`.
pub fn gradient_flow_field(p: &GradientFlowProblem) -> impl Fn(f64, &[f64], &mut [f64]) + '_ {
    let gamma = p.gamma;
    move |_t, x, dx| {
        p.objective.gradient(x, dx);
        dx.iter_mut().for_each(|g| *g = -*g / gamma);
    }
}

/// `F = f(x) + (ε/2)‖v‖²`.
pub fn total_energy(x: &[f64], v: &[f64], epsilon: f64, objective: &dyn Objective) -> f64 {
    objective.value(x) + 0.5 * epsilon * dot(v, v)
}

/// `H_α(x, y) = f(x) + α‖x − y‖²`.
pub fn lyapunov_h(x: &[f64], y: &[f64], alpha: f64, objective: &dyn Objective) -> f64 {
    let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    objective.value(x) + alpha * d2
}

/// `u = x + βv`.
pub fn auxiliary_state(x: &[f64], v: &[f64], beta: f64) -> Vec<f64> {
    x.iter().zip(v).map(|(a, b)| a + beta * b).collect()
}

/// Acceleration of the heavy-ball system, solved from the equation of
/// motion rather than differenced.
pub fn heavy_ball_acceleration(x: &[f64], v: &[f64], epsilon: f64, gamma: f64, objective: &dyn Objective) -> Vec<f64> {
    let mut a = vec![0.0; x.len()];
    objective.gradient(x, &mut a);
    for i in 0..x.len() {
        a[i] = -(gamma * v[i] + a[i]) / epsilon;
    }
    a
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::{xy_objective, Constant};
    use proptest::prelude::*;

    fn xy_problem() -> HeavyBallProblem {
        HeavyBallProblem::new(Arc::new(xy_objective()), 0.01, 0.5, vec![1.0, -1.0], vec![0.1, 0.1]).unwrap()
    }

    #[test]
    fn heavy_ball_field_at_reference_point() {
        let p = xy_problem();
        let f = heavy_ball_field(&p);
        let mut dy = [0.0; 4];
        f(0.0, &p.initial_state(), &mut dy);
        assert_eq!(dy[0], 0.1);
        assert_eq!(dy[1], 0.1);
        assert!((dy[2] + 405.0).abs() < 1e-9, "{}", dy[2]);
        assert!((dy[3] - 395.0).abs() < 1e-9, "{}", dy[3]);
    }

    #[test]
    fn flat_objective_gives_equilibrium_and_pure_damping() {
        let obj = Arc::new(Constant { dim: 2, level: 1.0 });
        let p = HeavyBallProblem::new(obj, 0.1, 0.5, vec![0.3, 0.2], vec![0.0, 0.0]).unwrap();
        let mut dy = [1.0; 4];
        heavy_ball_field(&p)(0.0, &p.initial_state(), &mut dy);
        assert_eq!(dy, [0.0; 4]);
        let mut dy = [0.0; 4];
        heavy_ball_field(&p)(0.0, &[0.3, 0.2, 1.0, -2.0], &mut dy);
        assert_eq!(&dy[2..], &[-5.0, 10.0]);
    }

    #[test]
    fn critical_point_velocity_decays_at_gamma_over_eps() {
        let p = xy_problem();
        let mut dy = [0.0; 4];
        heavy_ball_field(&p)(0.0, &[2.0, 0.5, 0.3, -0.7], &mut dy);
        assert!((dy[2] - (-0.5 * 0.3 / 0.01)).abs() < 1e-12);
        assert!((dy[3] - (0.5 * 0.7 / 0.01)).abs() < 1e-12);
    }

    #[test]
    fn gradient_flow_field_at_reference_point() {
        let p = xy_problem().degenerate();
        let mut dx = [0.0; 2];
        gradient_flow_field(&p)(0.0, &[1.0, -1.0], &mut dx);
        assert_eq!(dx, [-8.0, 8.0]);
    }

    #[test]
    fn energy_and_lyapunov_values() {
        let f = xy_objective();
        assert_eq!(total_energy(&[1.0, -1.0], &[0.0, 0.0], 0.01, &f), 4.0);
        let e = total_energy(&[1.0, -1.0], &[0.1, 0.1], 0.01, &f);
        assert!((e - 4.0001).abs() < 1e-15);
        assert_eq!(total_energy(&[2.0, 0.5], &[0.0, 0.0], 0.01, &f), 0.0);
        assert_eq!(lyapunov_h(&[1.0, 0.0], &[0.0, 0.0], 1.0, &f), 2.0);
        assert_eq!(lyapunov_h(&[0.3, 0.4], &[0.3, 0.4], 7.0, &f), f.value(&[0.3, 0.4]));
    }

    #[test]
    fn auxiliary_state_reference() {
        let u = auxiliary_state(&[1.0, -1.0], &[0.1, 0.1], 0.006667);
        assert!((u[0] - 1.0006667).abs() < 1e-12);
        assert!((u[1] + 0.9993333).abs() < 1e-12);
        assert_eq!(auxiliary_state(&[1.0, 2.0], &[0.0, 0.0], 0.5), vec![1.0, 2.0]);
    }

    #[test]
    fn invalid_problems_rejected() {
        let obj: Arc<dyn Objective> = Arc::new(xy_objective());
        assert!(HeavyBallProblem::new(obj.clone(), 0.0, 0.5, vec![1.0, 1.0], vec![0.0, 0.0]).is_err());
        assert!(HeavyBallProblem::new(obj.clone(), 0.1, -0.5, vec![1.0, 1.0], vec![0.0, 0.0]).is_err());
        assert!(matches!(
            HeavyBallProblem::new(obj.clone(), 0.1, 0.5, vec![1.0], vec![0.0, 0.0]),
            Err(DynamicsError::DimensionMismatch { .. })
        ));
        assert!(GradientFlowProblem::new(obj, 0.0, vec![1.0, 1.0]).is_err());
    }

    proptest! {
        #[test]
        fn gradient_flow_is_a_descent_direction(x in -3.0..3.0f64, y in -3.0..3.0f64, gamma in 0.1..5.0f64) {
            let p = GradientFlowProblem::new(Arc::new(xy_objective()), gamma, vec![x, y]).unwrap();
            let mut d = [0.0; 2];
            gradient_flow_field(&p)(0.0, &[x, y], &mut d);
            let mut g = [0.0; 2];
            xy_objective().gradient(&[x, y], &mut g);
            let lhs = dot(&d, &g);
            let rhs = -dot(&g, &g) / gamma;
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
            prop_assert!(lhs <= 0.0);
        }

        #[test]
        fn lyapunov_dominates_objective(
            x in prop::collection::vec(-3.0..3.0f64, 2),
            y in prop::collection::vec(-3.0..3.0f64, 2),
            alpha in 0.0..100.0f64,
        ) {
            let f = xy_objective();
            prop_assert!(lyapunov_h(&x, &y, alpha, &f) >= f.value(&x));
        }

        #[test]
        fn auxiliary_state_is_linear_in_velocity(
            x in prop::collection::vec(-3.0..3.0f64, 3),
            v in prop::collection::vec(-3.0..3.0f64, 3),
            beta in 0.0..1.0f64,
        ) {
            let u1 = auxiliary_state(&x, &v, beta);
            let v2: Vec<f64> = v.iter().map(|a| 2.0 * a).collect();
            let u2 = auxiliary_state(&x, &v2, beta);
            for i in 0..3 {
                prop_assert!(((u2[i] - x[i]) - 2.0 * (u1[i] - x[i])).abs() < 1e-12);
            }
        }
    }
}
