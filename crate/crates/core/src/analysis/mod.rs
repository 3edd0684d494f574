//! Numerical checks run against solved trajectories: energy dissipation,
//! velocity and length bounds, tracking between the two systems, limit
//! points, and a grid estimate of the largest trajectory length.

mod report;
mod sigma;

pub use report::{
    full_diagnostics, DiagnosticsReport, DiagnosticsSettings, LipschitzSource, RegionSource, Slacks, Window,
    SCHEMA_VERSION,
};
pub use sigma::{circle_points, sigma_estimate, unit_directions, SigmaCell, SigmaEstimate, SigmaGrid};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{
    dot, heavy_ball_acceleration, norm, speed_bound, Dynamics, DynamicsError, LengthLemmaConstants, Run, SpeedBound,
    SpeedBoundInputs,
};
use crate::objectives::{
    classify_critical_point, gradient_norm_sup_on_box, value_sup_on_box, BoxRegion, CriticalClass, Objective,
    ObjectiveError,
};
use crate::ode::OdeError;

/// Additive slack for inequalities whose sides come from quadrature.
pub const INEQUALITY_SLACK: f64 = 1e-6;
/// Relative slack for identities evaluated on the dense output.
pub const IDENTITY_SLACK: f64 = 1e-5;
/// Slack for monotonicity of the energy between nodes.
pub const MONOTONE_SLACK: f64 = 1e-9;
/// Tolerance for classifying a final point against the critical set.
pub const CLASSIFY_TOL: f64 = 1e-3;
/// Number of grid points used by [`tracking_distance`].
pub const TRACKING_SAMPLES: usize = 1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("trajectory spans [0, {available}] but [0, {required}] was requested")]
    SpanMismatch { required: f64, available: f64 },
    #[error("trajectory left the certified box")]
    BoxViolation,
    #[error("runs use objectives of different dimension")]
    DimensionMismatch,
    #[error("empty grid")]
    EmptyGrid,
    #[error(transparent)]
    Ode(#[from] OdeError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    /// The hypotheses of the bound were not met, so it says nothing.
    Vacuous,
    NotApplicable,
}

/// `lhs ≤ rhs + slack`, with both sides kept so the verdict can be redone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InequalityCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub verdict: Verdict,
}

impl InequalityCheck {
    pub fn compare(lhs: f64, rhs: f64, slack: f64) -> Self {
        let verdict = if lhs <= rhs + slack {
            Verdict::Pass
        } else {
            Verdict::Fail
        };
        Self {
            lhs,
            rhs,
            slack,
            verdict,
        }
    }

    pub fn vacuous(lhs: f64, rhs: f64, slack: f64) -> Self {
        Self {
            lhs,
            rhs,
            slack,
            verdict: Verdict::Vacuous,
        }
    }

    pub fn not_applicable() -> Self {
        Self {
            lhs: 0.0,
            rhs: 0.0,
            slack: 0.0,
            verdict: Verdict::NotApplicable,
        }
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    pub fn failed(&self) -> bool {
        self.verdict == Verdict::Fail
    }

    /// Whether the stored verdict follows from the stored numbers.
    pub fn is_consistent(&self) -> bool {
        match self.verdict {
            Verdict::Pass => self.lhs <= self.rhs + self.slack,
            Verdict::Fail => !(self.lhs <= self.rhs + self.slack),
            Verdict::Vacuous | Verdict::NotApplicable => true,
        }
    }
}

/// Times at which pointwise identities are sampled: interior nodes and
/// every segment midpoint.
fn interior_samples(run: &Run) -> Vec<f64> {
    let times = run.times();
    let mut out = Vec::with_capacity(2 * times.len());
    for (i, w) in times.windows(2).enumerate() {
        if i > 0 {
            out.push(w[0]);
        }
        out.push(0.5 * (w[0] + w[1]));
    }
    out
}

/// Rate of change of `f` along `velocity` at `x`, from central differences
/// of `f` itself so that a wrong gradient cannot cancel out.
fn value_rate(obj: &dyn Objective, x: &[f64], velocity: &[f64]) -> f64 {
    let speed = norm(velocity);
    if speed == 0.0 {
        return 0.0;
    }
    let step = 1e-5 * (1.0 + norm(x));
    let shifted = |sign: f64| -> Vec<f64> {
        x.iter()
            .zip(velocity)
            .map(|(xi, vi)| xi + sign * step * vi / speed)
            .collect()
    };
    speed * (obj.value(&shifted(1.0)) - obj.value(&shifted(-1.0))) / (2.0 * step)
}

/// Largest `|dF/dt + γ‖x'‖²| / (1 + ‖x'‖²)` at interior nodes and segment
/// midpoints. The kinetic part of `dF/dt` comes from the interpolant's
/// derivative, the potential part from differences of `f`.
pub fn dissipation_residual(run: &Run) -> Result<InequalityCheck, AnalysisError> {
    let n = run.dim();
    let dim = run.trajectory.dim();
    let mut y = vec![0.0; dim];
    let mut dy = vec![0.0; dim];
    let obj = run.objective.as_ref();
    let gamma = run.dynamics.gamma();
    let mut worst = 0.0_f64;
    for t in interior_samples(run) {
        run.trajectory.dense_eval_with_derivative(t, &mut y, &mut dy)?;
        let df = value_rate(obj, &y[..n], &dy[..n]);
        let (df, speed2) = match run.dynamics {
            Dynamics::HeavyBall { epsilon, .. } => {
                let v = &y[n..];
                (df + epsilon * dot(v, &dy[n..]), dot(v, v))
            }
            Dynamics::GradientFlow { .. } => (df, dot(&dy, &dy)),
        };
        let r = (df + gamma * speed2).abs() / (1.0 + speed2);
        worst = worst.max(r);
    }
    Ok(InequalityCheck::compare(worst, IDENTITY_SLACK, 0.0))
}

/// Largest increase of `F` between consecutive nodes.
pub fn energy_monotone(run: &Run) -> InequalityCheck {
    let mut worst = f64::NEG_INFINITY;
    let mut prev = None;
    for i in 0..run.trajectory.len() {
        let (x, v) = run.split_phase(run.trajectory.state(i));
        let e = run.energy_of(&x, &v);
        if let Some(p) = prev {
            worst = worst.max(e - p);
        }
        prev = Some(e);
    }
    if worst == f64::NEG_INFINITY {
        worst = 0.0;
    }
    InequalityCheck::compare(worst, 0.0, MONOTONE_SLACK)
}

/// `∫‖x'‖² ≤ (sup f − inf f + εr0²/2)/γ` over the whole run; `ε = 0` for
/// the gradient flow.
pub fn l2_velocity_check(run: &Run, sup_f_start: f64, inf_f: f64, r0: f64) -> Result<InequalityCheck, AnalysisError> {
    let lhs = run.kinetic_integral(0.0, run.t_end())?;
    let eps = run.dynamics.epsilon().unwrap_or(0.0);
    let rhs = (sup_f_start - inf_f + eps * r0 * r0 / 2.0) / run.dynamics.gamma();
    Ok(InequalityCheck::compare(lhs, rhs, INEQUALITY_SLACK))
}

/// Whether every node position lies in `region`.
pub fn stays_in(run: &Run, region: &BoxRegion) -> bool {
    (0..run.trajectory.len()).all(|i| region.contains(run.node_position(i)))
}

/// Largest speed over the nodes of the run.
pub fn sup_speed(run: &Run) -> f64 {
    (0..run.trajectory.len())
        .map(|i| norm(&run.split_phase(run.trajectory.state(i)).1))
        .fold(0.0, f64::max)
}

/// `sup ‖v‖` over nodes against the uniform bound `r`, without slack.
///
/// Returns [`AnalysisError::BoxViolation`] if the run left `region`, in
/// which case the suprema behind `r` do not apply.
pub fn certify_speed_bound(
    run: &Run,
    bound: &SpeedBound,
    region: &BoxRegion,
) -> Result<InequalityCheck, AnalysisError> {
    if !stays_in(run, region) {
        return Err(AnalysisError::BoxViolation);
    }
    Ok(InequalityCheck::compare(sup_speed(run), bound.uniform, 0.0))
}

/// Velocity bound for heavy-ball runs that stay in `region`, with initial
/// speed at most `r0`.
pub fn speed_bound_for_start(
    obj: &dyn Objective,
    region: &BoxRegion,
    gamma: f64,
    epsilon: f64,
    lipschitz: f64,
    r0: f64,
) -> Result<SpeedBound, AnalysisError> {
    let inputs = SpeedBoundInputs {
        gamma,
        lipschitz,
        r0,
        sup_f: value_sup_on_box(obj, region),
        inf_f: obj.known_inf().unwrap_or(0.0),
        sup_grad: gradient_norm_sup_on_box(obj, region),
    };
    Ok(speed_bound(epsilon, &inputs)?)
}

pub fn speed_bound_for(run: &Run, region: &BoxRegion, lipschitz: f64, r0: f64) -> Result<SpeedBound, AnalysisError> {
    let eps = run.dynamics.epsilon().unwrap_or(0.0);
    speed_bound_for_start(run.objective.as_ref(), region, run.dynamics.gamma(), eps, lipschitz, r0)
}

/// Results of the three pointwise inequalities for `H_α(u, x)`, `u = x + βv`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovChecks {
    /// `d/dt H_α + a‖x'‖² + b‖x''‖² ≤ 0`.
    pub h_alpha: InequalityCheck,
    /// `‖∇H_α(u, x)‖ ≤ c‖x'‖ + ε‖x''‖` with the stated `c`.
    pub grad_h: InequalityCheck,
    /// The same with `c` replaced by `Lβ + γ + 2√2·αβ`.
    pub grad_h_corrected: InequalityCheck,
}

/// Evaluates the `H_α` inequalities at every interior node. The stored
/// `lhs` is the largest `(left side) − (right side)`; `rhs` is 0.
///
/// The checks are vacuous when either `x` or `u` leaves `region`, since
/// the Lipschitz constant only holds there.
pub fn lyapunov_checks(run: &Run, k: &LengthLemmaConstants, region: &BoxRegion) -> LyapunovChecks {
    let Dynamics::HeavyBall { epsilon, gamma } = run.dynamics else {
        let na = InequalityCheck::not_applicable();
        return LyapunovChecks {
            h_alpha: na,
            grad_h: na,
            grad_h_corrected: na,
        };
    };
    let n = run.dim();
    let obj = run.objective.as_ref();
    let c_corrected = k.lipschitz * k.beta + gamma + 2.0 * std::f64::consts::SQRT_2 * k.alpha * k.beta;
    let mut gu = vec![0.0; n];
    let (mut h_worst, mut g_worst, mut gc_worst) = (f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    let mut inside = true;
    let len = run.trajectory.len();
    for i in 1..len.saturating_sub(1) {
        let y = run.trajectory.state(i);
        let (x, v) = y.split_at(n);
        let a = heavy_ball_acceleration(x, v, epsilon, gamma, obj);
        let u: Vec<f64> = x.iter().zip(v).map(|(p, q)| p + k.beta * q).collect();
        inside &= region.contains(x) && region.contains(&u);
        obj.gradient(&u, &mut gu);

        let u_dot: Vec<f64> = v.iter().zip(&a).map(|(p, q)| p + k.beta * q).collect();
        let dh = dot(&gu, &u_dot) + 2.0 * k.alpha * k.beta * k.beta * dot(v, &a);
        let (sv, sa) = (norm(v), norm(&a));
        h_worst = h_worst.max(dh + k.a_diss * sv * sv + k.b_diss * sa * sa);

        // ∇H_α(u, x) = (∇f(u) + 2α(u − x), −2α(u − x)), u − x = βv.
        let mut g2 = 0.0;
        for j in 0..n {
            let d = 2.0 * k.alpha * k.beta * v[j];
            g2 += (gu[j] + d).powi(2) + d * d;
        }
        let gnorm = g2.sqrt();
        g_worst = g_worst.max(gnorm - (k.c_grad * sv + epsilon * sa));
        gc_worst = gc_worst.max(gnorm - (c_corrected * sv + epsilon * sa));
    }
    let fix = |w: f64| if w == f64::NEG_INFINITY { 0.0 } else { w };
    let make = |w: f64| {
        if inside {
            InequalityCheck::compare(fix(w), 0.0, INEQUALITY_SLACK)
        } else {
            InequalityCheck::vacuous(fix(w), 0.0, INEQUALITY_SLACK)
        }
    };
    LyapunovChecks {
        h_alpha: make(h_worst),
        grad_h: make(g_worst),
        grad_h_corrected: make(gc_worst),
    }
}

/// `sup_t ‖x_a(t) − x_b(t)‖` over [`TRACKING_SAMPLES`] uniform times in
/// `[0, horizon]`.
pub fn tracking_distance(a: &Run, b: &Run, horizon: f64) -> Result<f64, AnalysisError> {
    if a.dim() != b.dim() {
        return Err(AnalysisError::DimensionMismatch);
    }
    for r in [a, b] {
        if r.t_end() < horizon {
            return Err(AnalysisError::SpanMismatch {
                required: horizon,
                available: r.t_end(),
            });
        }
    }
    let mut worst = 0.0_f64;
    for i in 0..TRACKING_SAMPLES {
        let t = horizon * i as f64 / (TRACKING_SAMPLES - 1) as f64;
        let (pa, pb) = (a.position(t)?, b.position(t)?);
        let d: f64 = pa.iter().zip(&pb).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
        worst = worst.max(d);
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitPoint {
    pub position: Vec<f64>,
    pub time: f64,
    pub gradient_norm: f64,
    pub speed: f64,
    pub converged: bool,
    /// `None` when the objective has no known critical set.
    pub classification: Option<CriticalClass>,
}

/// Final point of the run, flagged converged when the early stop fired or
/// gradient and speed are below `tol_g` and `tol_v` at the end.
pub fn limit_point(run: &Run, tol_g: f64, tol_v: f64) -> LimitPoint {
    let x = run.final_position().to_vec();
    let v = run.final_velocity();
    let mut g = vec![0.0; x.len()];
    run.objective.gradient(&x, &mut g);
    let (gn, sv) = (norm(&g), norm(&v));
    let converged = run.trajectory.termination().converged() || (gn <= tol_g && sv <= tol_v);
    LimitPoint {
        classification: classify_critical_point(run.objective.as_ref(), &x, CLASSIFY_TOL).ok(),
        position: x,
        time: run.t_end(),
        gradient_norm: gn,
        speed: sv,
        converged,
    }
}
