use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{dot, gradient_flow_field, heavy_ball_field, norm, GradientFlowProblem, HeavyBallProblem};
use crate::objectives::Objective;
use crate::ode::{integrate_along, integrate_with_stop, EarlyStop, IntegratorConfig, OdeError, Trajectory};

/// Gradient and velocity norms below which a run counts as settled.
pub const CONVERGENCE_TOL: f64 = 1e-9;
/// How long the settled condition must hold before stopping early.
pub const CONVERGENCE_DWELL: f64 = 1.0;

const LENGTH_REL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "system", rename_all = "snake_case")]
pub enum Dynamics {
    HeavyBall { epsilon: f64, gamma: f64 },
    GradientFlow { gamma: f64 },
}

impl Dynamics {
    pub fn gamma(&self) -> f64 {
        match *self {
            Dynamics::HeavyBall { gamma, .. } | Dynamics::GradientFlow { gamma } => gamma,
        }
    }

    pub fn epsilon(&self) -> Option<f64> {
        match *self {
            Dynamics::HeavyBall { epsilon, .. } => Some(epsilon),
            Dynamics::GradientFlow { .. } => None,
        }
    }
}

/// A solved trajectory together with the system that produced it.
///
/// Velocities and accelerations are recovered from the equations of
/// motion at the interpolated position, not by differencing.
#[derive(Debug, Clone)]
pub struct Run {
    pub dynamics: Dynamics,
    pub objective: Arc<dyn Objective>,
    pub trajectory: Trajectory,
}

impl HeavyBallProblem {
    /// Integrates over `[0, config.t_end]`. The step is capped at `ε/γ`,
    /// the fast damping time scale. With `early_stop`, the run ends once
    /// gradient and velocity have both stayed below [`CONVERGENCE_TOL`]
    /// for [`CONVERGENCE_DWELL`].
    pub fn simulate(&self, config: &IntegratorConfig, early_stop: bool) -> Result<Run, OdeError> {
        let config = config.clone().cap_max_step(self.epsilon / self.gamma);
        let n = self.dim();
        let obj = &self.objective;
        let settled = move |y: &[f64], _dy: &[f64]| {
            let (x, v) = y.split_at(n);
            norm(v) <= CONVERGENCE_TOL && grad_norm(obj.as_ref(), x) <= CONVERGENCE_TOL
        };
        let stop = early_stop.then_some(EarlyStop {
            dwell: CONVERGENCE_DWELL,
            converged: &settled,
        });
        let trajectory = integrate_with_stop(heavy_ball_field(self), &self.initial_state(), &config, stop)?;
        Ok(Run {
            dynamics: Dynamics::HeavyBall {
                epsilon: self.epsilon,
                gamma: self.gamma,
            },
            objective: Arc::clone(&self.objective),
            trajectory,
        })
    }
}

impl GradientFlowProblem {
    pub fn simulate(&self, config: &IntegratorConfig, early_stop: bool) -> Result<Run, OdeError> {
        let obj = &self.objective;
        let settled = move |x: &[f64], _dx: &[f64]| grad_norm(obj.as_ref(), x) <= CONVERGENCE_TOL;
        let stop = early_stop.then_some(EarlyStop {
            dwell: CONVERGENCE_DWELL,
            converged: &settled,
        });
        let trajectory = integrate_with_stop(gradient_flow_field(self), &self.x0, config, stop)?;
        Ok(Run {
            dynamics: Dynamics::GradientFlow { gamma: self.gamma },
            objective: Arc::clone(&self.objective),
            trajectory,
        })
    }
}

fn grad_norm(obj: &dyn Objective, x: &[f64]) -> f64 {
    let mut g = vec![0.0; x.len()];
    obj.gradient(x, &mut g);
    norm(&g)
}

impl Run {
    /// Dimension of the position space.
    pub fn dim(&self) -> usize {
        self.objective.dim()
    }

    pub fn t_end(&self) -> f64 {
        self.trajectory.t_end()
    }

    pub fn times(&self) -> &[f64] {
        self.trajectory.times()
    }

    pub fn position(&self, t: f64) -> Result<Vec<f64>, OdeError> {
        let mut y = self.trajectory.dense_eval(t)?;
        y.truncate(self.dim());
        Ok(y)
    }

    /// Position at node `i`.
    pub fn node_position(&self, i: usize) -> &[f64] {
        &self.trajectory.state(i)[..self.dim()]
    }

    /// Position and velocity at `t`.
    pub fn phase(&self, t: f64) -> Result<(Vec<f64>, Vec<f64>), OdeError> {
        let y = self.trajectory.dense_eval(t)?;
        Ok(self.split_phase(&y))
    }

    /// Position and velocity from a raw trajectory state.
    pub fn split_phase(&self, y: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.dim();
        match self.dynamics {
            Dynamics::HeavyBall { .. } => (y[..n].to_vec(), y[n..2 * n].to_vec()),
            Dynamics::GradientFlow { gamma } => {
                let mut v = vec![0.0; n];
                self.objective.gradient(&y[..n], &mut v);
                v.iter_mut().for_each(|g| *g = -*g / gamma);
                (y[..n].to_vec(), v)
            }
        }
    }

    pub fn velocity(&self, t: f64) -> Result<Vec<f64>, OdeError> {
        Ok(self.phase(t)?.1)
    }

    /// Second derivative of the position.
    pub fn acceleration(&self, t: f64) -> Result<Vec<f64>, OdeError> {
        match self.dynamics {
            Dynamics::HeavyBall { epsilon, gamma } => {
                let (x, v) = self.phase(t)?;
                Ok(super::heavy_ball_acceleration(
                    &x,
                    &v,
                    epsilon,
                    gamma,
                    self.objective.as_ref(),
                ))
            }
            Dynamics::GradientFlow { .. } => {
                // Central difference of the exact field along the interpolant.
                let h = 1e-6 * t.abs().max(1.0);
                let (a, b) = ((t - h).max(0.0), (t + h).min(self.t_end()));
                let va = self.velocity(a)?;
                let vb = self.velocity(b)?;
                Ok(va.iter().zip(&vb).map(|(p, q)| (q - p) / (b - a)).collect())
            }
        }
    }

    /// `F = f(x) + (ε/2)‖v‖²`, reducing to `f(x)` for the gradient flow.
    pub fn energy(&self, t: f64) -> Result<f64, OdeError> {
        let (x, v) = self.phase(t)?;
        Ok(self.energy_of(&x, &v))
    }

    pub fn energy_of(&self, x: &[f64], v: &[f64]) -> f64 {
        let kinetic = self.dynamics.epsilon().map_or(0.0, |e| 0.5 * e * dot(v, v));
        self.objective.value(x) + kinetic
    }

    pub fn gradient_norm(&self, t: f64) -> Result<f64, OdeError> {
        let x = self.position(t)?;
        Ok(grad_norm(self.objective.as_ref(), &x))
    }

    /// `∫_{t0}^{t1} ‖x'(t)‖ dt`.
    pub fn length(&self, t0: f64, t1: f64) -> Result<f64, OdeError> {
        let n = self.dim();
        match self.dynamics {
            Dynamics::HeavyBall { .. } => integrate_along(&self.trajectory, t0, t1, LENGTH_REL_TOL, |_t, y, _dy| {
                norm(&y[n..2 * n])
            }),
            Dynamics::GradientFlow { gamma } => {
                let obj = self.objective.as_ref();
                integrate_along(&self.trajectory, t0, t1, LENGTH_REL_TOL, |_t, y, _dy| {
                    grad_norm(obj, &y[..n]) / gamma
                })
            }
        }
    }

    /// `∫_{t0}^{t1} ‖x'(t)‖² dt`.
    pub fn kinetic_integral(&self, t0: f64, t1: f64) -> Result<f64, OdeError> {
        integrate_along(&self.trajectory, t0, t1, LENGTH_REL_TOL, |_t, y, _dy| {
            let (_, v) = self.split_phase(y);
            dot(&v, &v)
        })
    }

    pub fn final_position(&self) -> &[f64] {
        &self.trajectory.final_state()[..self.dim()]
    }

    pub fn final_velocity(&self) -> Vec<f64> {
        self.split_phase(self.trajectory.final_state()).1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::{xy_objective, Quadratic};

    fn reference_run(epsilon: f64, t_end: f64) -> Run {
        let p = HeavyBallProblem::new(Arc::new(xy_objective()), epsilon, 0.5, vec![1.0, -1.0], vec![0.1, 0.1]).unwrap();
        p.simulate(&IntegratorConfig::new(t_end), false).unwrap()
    }

    #[test]
    fn max_step_respects_damping_scale() {
        let run = reference_run(0.01, 1.0);
        let h_max = run.times().windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
        assert!(h_max <= 0.02 * (1.0 + 1e-12), "{h_max}");
    }

    #[test]
    fn energy_decreases_on_reference_run() {
        let run = reference_run(0.01, 5.0);
        let e: Vec<f64> = (0..=500).map(|i| run.energy(5.0 * i as f64 / 500.0).unwrap()).collect();
        for w in e.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "{} {}", w[0], w[1]);
        }
        assert!((e[0] - 4.0001).abs() < 1e-12);
    }

    #[test]
    fn acceleration_matches_equation_of_motion() {
        let run = reference_run(0.1, 1.0);
        let t = 0.37;
        let a = run.acceleration(t).unwrap();
        let (x, v) = run.phase(t).unwrap();
        let mut g = [0.0; 2];
        xy_objective().gradient(&x, &mut g);
        for i in 0..2 {
            let r = 0.1 * a[i] + 0.5 * v[i] + g[i];
            assert!(r.abs() < 1e-12, "{r}");
        }
        // And with the interpolant's own derivative of v.
        let mut y = [0.0; 4];
        let mut dy = [0.0; 4];
        run.trajectory.dense_eval_with_derivative(t, &mut y, &mut dy).unwrap();
        assert!((dy[2] - a[0]).abs() < 1e-5 * a[0].abs().max(1.0));
    }

    #[test]
    fn gradient_flow_on_quadratic_has_exact_length() {
        let p = GradientFlowProblem::new(Arc::new(Quadratic { dim: 2 }), 1.0, vec![3.0, 4.0]).unwrap();
        let run = p.simulate(&IntegratorConfig::new(2.0), false).unwrap();
        // x(t) = x0·e^{-t}, so the length is ‖x0‖(1 − e^{-2}).
        let expected = 5.0 * (1.0 - (-2.0f64).exp());
        assert!((run.length(0.0, 2.0).unwrap() - expected).abs() < 1e-7);
        let a = run.acceleration(1.0).unwrap();
        let x = run.position(1.0).unwrap();
        assert!((a[0] - x[0]).abs() < 1e-5);
    }

    #[test]
    fn early_stop_on_converging_run() {
        let p = HeavyBallProblem::new(Arc::new(xy_objective()), 0.01, 0.5, vec![1.0, -1.0], vec![0.1, 0.1]).unwrap();
        let run = p.simulate(&IntegratorConfig::new(200.0), true).unwrap();
        let term = run.trajectory.termination();
        assert!(term.converged(), "{term:?}");
        assert!(term.time() < 200.0);
        let x = run.final_position();
        assert!((x[0] * x[1] - 1.0).abs() < 1e-6, "{x:?}");
    }
}
