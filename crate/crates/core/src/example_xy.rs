//! The two-dimensional example `f(x, y) = (xy − 1)²` started from the
//! antidiagonal point `(a, −a)`.
//!
//! Along the gradient flow `x² − y²` is conserved and the solution has a
//! closed form that runs into the origin. The heavy-ball system instead
//! ends on the hyperbola `xy = 1`. Envelope bounds on `u = x + y` and
//! `v = x − y` hold up to the first time `xy` reaches `1/2`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{Dynamics, DynamicsError, GradientFlowProblem, HeavyBallProblem, Run};
use crate::objectives::xy_objective;
use crate::ode::{detect_event, Direction, EventQuery, OdeError};

/// Largest sample spacing used by [`claims_check`].
pub const CLAIM_SAMPLE_STEP: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExampleError {
    #[error("{0}")]
    InvalidParameter(String),
    #[error("epsilon exceeds γ²/(8a²+8)={threshold} for a={a}, γ={gamma}")]
    EpsilonTooLarge {
        epsilon: f64,
        threshold: f64,
        a: f64,
        gamma: f64,
    },
    #[error("check window is empty")]
    EmptyWindow,
    #[error("claims need a heavy-ball run of the xy objective from the given start")]
    WrongRun,
    #[error(transparent)]
    Ode(#[from] OdeError),
}

impl From<DynamicsError> for ExampleError {
    fn from(e: DynamicsError) -> Self {
        ExampleError::InvalidParameter(e.to_string())
    }
}

/// Initial data `x0 = (a, −a)`, `v0 = (b, b)` with friction and mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExampleInit {
    pub a: f64,
    pub b: f64,
    pub gamma: f64,
    pub epsilon: f64,
}

impl ExampleInit {
    pub fn new(a: f64, b: f64, gamma: f64, epsilon: f64) -> Result<Self, ExampleError> {
        for (name, v) in [("a", a), ("b", b), ("gamma", gamma), ("epsilon", epsilon)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ExampleError::InvalidParameter(format!("{name} must be positive")));
            }
        }
        Ok(Self { a, b, gamma, epsilon })
    }

    /// `a = 1`, `b = 0.1`, `γ = 0.5`, `ε = 0.01`.
    pub fn reference() -> Self {
        Self {
            a: 1.0,
            b: 0.1,
            gamma: 0.5,
            epsilon: 0.01,
        }
    }

    pub fn x0(&self) -> Vec<f64> {
        vec![self.a, -self.a]
    }

    pub fn v0(&self) -> Vec<f64> {
        vec![self.b, self.b]
    }

    /// `γ²/(8a² + 8)`; envelopes exist only for smaller ε.
    pub fn epsilon_threshold(&self) -> f64 {
        epsilon_threshold(self.a, self.gamma)
    }

    pub fn heavy_ball(&self) -> HeavyBallProblem {
        HeavyBallProblem::new(Arc::new(xy_objective()), self.epsilon, self.gamma, self.x0(), self.v0())
            .expect("validated init")
    }

    pub fn gradient_flow(&self) -> GradientFlowProblem {
        GradientFlowProblem::new(Arc::new(xy_objective()), self.gamma, self.x0()).expect("validated init")
    }
}

pub fn epsilon_threshold(a: f64, gamma: f64) -> f64 {
    gamma * gamma / (8.0 * a * a + 8.0)
}

/// Exact gradient-flow solution from `(a, −a)`:
/// `x(t) = c/√(e^{4t/γ} − c²)`, `y = −x`, `c = a/√(1 + a²)`.
pub fn degenerate_closed_form(a: f64, gamma: f64, t: f64) -> (f64, f64) {
    let c = a / (1.0 + a * a).sqrt();
    // Scaled by e^{-2t/γ} so large t underflows to 0 instead of inf/inf.
    let decay = (-2.0 * t / gamma).exp();
    let x = c * decay / (1.0 - c * c * decay * decay).sqrt();
    (x, -x)
}

/// `(x, y, x', y') ↦ (u, v, u', v')` with `u = x + y`, `v = x − y`.
pub fn uv_transform(s: [f64; 4]) -> [f64; 4] {
    [s[0] + s[1], s[0] - s[1], s[2] + s[3], s[2] - s[3]]
}

pub fn uv_inverse(s: [f64; 4]) -> [f64; 4] {
    [
        0.5 * (s[0] + s[1]),
        0.5 * (s[0] - s[1]),
        0.5 * (s[2] + s[3]),
        0.5 * (s[2] - s[3]),
    ]
}

/// `x² − y²`, conserved along the gradient flow.
pub fn conserved_quantity(x: f64, y: f64) -> f64 {
    x * x - y * y
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvelopeKind {
    LowerU,
    UpperV,
    LowerV,
}

/// Amplitudes and rates of the exponential envelopes on `u` and `v`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeSet {
    pub a: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
    pub r4: f64,
    pub r5: f64,
    pub r6: f64,
    /// End of the window on which the envelopes were checked, once known.
    pub valid_until: Option<f64>,
}

pub fn envelope_constants(init: &ExampleInit) -> Result<EnvelopeSet, ExampleError> {
    let ExampleInit { a, b, gamma, epsilon } = *init;
    let threshold = init.epsilon_threshold();
    if !(epsilon < threshold) {
        return Err(ExampleError::EpsilonTooLarge {
            epsilon,
            threshold,
            a,
            gamma,
        });
    }
    let s1 = (gamma * gamma + 4.0 * epsilon).sqrt();
    let s2 = (gamma * gamma - 4.0 * epsilon).sqrt();
    let k = a * a + 1.0;
    let s3 = (gamma * gamma - 8.0 * k * epsilon).sqrt();
    Ok(EnvelopeSet {
        a,
        c1: 2.0 * b * epsilon / s1,
        r1: 2.0 / (s1 + gamma),
        r2: -2.0 / (s1 - gamma),
        c2: a * gamma / s2 - a,
        r3: -2.0 / (gamma + s2),
        r4: -2.0 / (gamma - s2),
        c3: a * gamma / s3 - a,
        r5: -4.0 * k / (gamma + s3),
        r6: -4.0 * k / (gamma - s3),
        valid_until: None,
    })
}

impl EnvelopeSet {
    /// `c1(e^{r1 t} − e^{r2 t})`, a lower bound for `u`.
    pub fn lower_u(&self, t: f64) -> f64 {
        self.c1 * ((self.r1 * t).exp() - (self.r2 * t).exp())
    }

    /// `(2a + c2)e^{r3 t} − c2 e^{r4 t}`, an upper bound for `v`.
    pub fn upper_v(&self, t: f64) -> f64 {
        (2.0 * self.a + self.c2) * (self.r3 * t).exp() - self.c2 * (self.r4 * t).exp()
    }

    /// `(2a + c3)e^{r5 t} − c3 e^{r6 t}`, a lower bound for `v`.
    pub fn lower_v(&self, t: f64) -> f64 {
        (2.0 * self.a + self.c3) * (self.r5 * t).exp() - self.c3 * (self.r6 * t).exp()
    }

    pub fn bound(&self, kind: EnvelopeKind, t: f64) -> f64 {
        match kind {
            EnvelopeKind::LowerU => self.lower_u(t),
            EnvelopeKind::UpperV => self.upper_v(t),
            EnvelopeKind::LowerV => self.lower_v(t),
        }
    }

    /// `(2a + c3)r5 − c3 r6`, zero because the lower `v` envelope starts
    /// with zero slope.
    pub fn consistency_residual(&self) -> f64 {
        (2.0 * self.a + self.c3) * self.r5 - self.c3 * self.r6
    }

    /// Rate ordering `r1 > 0 > r2`, `r3 > r4`, `r5 > r6`, all `r3..r6 < 0`.
    pub fn rates_ordered(&self) -> bool {
        self.r1 > 0.0
            && self.r2 < 0.0
            && [self.r3, self.r4, self.r5, self.r6].iter().all(|r| *r < 0.0)
            && self.r3 > self.r4
            && self.r5 > self.r6
    }
}

fn require_heavy_ball_xy(run: &Run) -> Result<(), ExampleError> {
    let ok =
        matches!(run.dynamics, Dynamics::HeavyBall { .. }) && run.objective.name() == "xy" && run.objective.dim() == 2;
    if ok {
        Ok(())
    } else {
        Err(ExampleError::WrongRun)
    }
}

/// Earliest time at which `xy` equals `threshold`, in either direction.
pub fn crossing_time(run: &Run, threshold: f64) -> Option<f64> {
    let q = EventQuery::new(move |_t, y: &[f64]| y[0] * y[1] - threshold, Direction::Any);
    detect_event(&run.trajectory, &q)
}

/// Stopping times that bound the envelope windows. `None` means the event
/// was not reached within the run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClaimTimes {
    /// First time `xy = 1/2`.
    pub crossing: Option<f64>,
    /// First falling zero of `u'`.
    pub u_turn: Option<f64>,
    /// First falling zero of `v`.
    pub v_zero: Option<f64>,
    /// First return of `v'` to zero after the start.
    pub v_turn: Option<f64>,
    pub run_end: f64,
}

impl ClaimTimes {
    pub fn window_end(&self) -> f64 {
        [self.crossing, self.u_turn, self.v_zero]
            .into_iter()
            .flatten()
            .fold(self.run_end, f64::min)
    }
}

pub fn claim_times(run: &Run) -> Result<ClaimTimes, ExampleError> {
    require_heavy_ball_xy(run)?;
    let traj = &run.trajectory;
    let u_dot = EventQuery::new(|_t, y: &[f64]| y[2] + y[3], Direction::Falling);
    let v = EventQuery::new(|_t, y: &[f64]| y[0] - y[1], Direction::Falling);
    // v' starts at zero; the rising zero is its first return.
    let v_dot = EventQuery::new(|_t, y: &[f64]| y[2] - y[3], Direction::Rising);
    Ok(ClaimTimes {
        crossing: crossing_time(run, 0.5),
        u_turn: detect_event(traj, &u_dot),
        v_zero: detect_event(traj, &v),
        v_turn: detect_event(traj, &v_dot),
        run_end: run.t_end(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Claim {
    /// `u ≥ c1(e^{r1 t} − e^{r2 t})`.
    LowerU,
    /// `v' < 0`.
    VDecreasing,
    /// `v ≤ (2a + c2)e^{r3 t} − c2 e^{r4 t}`.
    UpperV,
    /// `v ≥ (2a + c3)e^{r5 t} − c3 e^{r6 t}`.
    LowerV,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimVerdict {
    pub claim: Claim,
    pub holds: bool,
    /// Largest value of `(checked side) − (bound)` oriented so that
    /// positive means violated.
    pub max_excess: f64,
    pub first_violation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimsReport {
    pub envelopes: EnvelopeSet,
    pub times: ClaimTimes,
    pub window: (f64, f64),
    pub tolerance: f64,
    pub samples: usize,
    pub verdicts: Vec<ClaimVerdict>,
    /// `xy` nondecreasing on the window, up to `1e-9`.
    pub xy_monotone: bool,
    /// `u' > −1e-9` on the window.
    pub u_monotone: bool,
    pub min_v: f64,
}

impl ClaimsReport {
    pub fn all_hold(&self) -> bool {
        self.verdicts.iter().all(|v| v.holds)
    }

    pub fn verdict(&self, claim: Claim) -> Option<&ClaimVerdict> {
        self.verdicts.iter().find(|v| v.claim == claim)
    }
}

const MONOTONE_SLACK: f64 = 1e-9;

/// Checks the four envelope claims at every node and on a uniform grid of
/// spacing at most [`CLAIM_SAMPLE_STEP`] over `[0, window_end]`.
pub fn claims_check(run: &Run, init: &ExampleInit, env: &EnvelopeSet, tol: f64) -> Result<ClaimsReport, ExampleError> {
    let times = claim_times(run)?;
    let start = run.trajectory.state(0);
    if start[..2] != init.x0()[..] || start[2..] != init.v0()[..] {
        return Err(ExampleError::WrongRun);
    }
    let end = times.window_end();
    if !(end > 0.0) {
        return Err(ExampleError::EmptyWindow);
    }
    let n = (end / CLAIM_SAMPLE_STEP).ceil() as usize;
    let mut ts: Vec<f64> = (0..=n).map(|i| end * i as f64 / n as f64).collect();
    ts.extend(run.times().iter().copied().filter(|&t| t < end));
    ts.sort_by(f64::total_cmp);
    ts.dedup();

    let claims = [Claim::LowerU, Claim::VDecreasing, Claim::UpperV, Claim::LowerV];
    let mut excess = [f64::NEG_INFINITY; 4];
    let mut first: [Option<f64>; 4] = [None; 4];
    let (mut xy_monotone, mut u_monotone) = (true, true);
    let mut min_v = f64::INFINITY;
    let mut prev_xy = f64::NEG_INFINITY;
    for &t in &ts {
        let (p, vel) = run.phase(t)?;
        let [u, v, u_dot, v_dot] = uv_transform([p[0], p[1], vel[0], vel[1]]);
        let e = [env.lower_u(t) - u, v_dot, v - env.upper_v(t), env.lower_v(t) - v];
        for i in 0..4 {
            excess[i] = excess[i].max(e[i]);
            if e[i] > tol && first[i].is_none() {
                first[i] = Some(t);
            }
        }
        let xy = p[0] * p[1];
        if xy < prev_xy - MONOTONE_SLACK {
            xy_monotone = false;
        }
        prev_xy = prev_xy.max(xy);
        if u_dot <= -MONOTONE_SLACK {
            u_monotone = false;
        }
        min_v = min_v.min(v);
    }
    let verdicts = claims
        .iter()
        .enumerate()
        .map(|(i, &claim)| ClaimVerdict {
            claim,
            holds: first[i].is_none(),
            max_excess: excess[i],
            first_violation: first[i],
        })
        .collect();
    Ok(ClaimsReport {
        envelopes: EnvelopeSet {
            valid_until: Some(end),
            ..*env
        },
        times,
        window: (0.0, end),
        tolerance: tol,
        samples: ts.len(),
        verdicts,
        xy_monotone,
        u_monotone,
        min_v,
    })
}
