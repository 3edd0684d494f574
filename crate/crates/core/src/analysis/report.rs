use serde::{Deserialize, Serialize};

use super::{
    certify_speed_bound, dissipation_residual, energy_monotone, l2_velocity_check, limit_point, lyapunov_checks,
    speed_bound_for, stays_in, sup_speed, AnalysisError, InequalityCheck, LimitPoint, IDENTITY_SLACK, INEQUALITY_SLACK,
    MONOTONE_SLACK,
};
use crate::dynamics::{
    length_lemma_constants, norm, Dynamics, LengthLemmaConstants, Problem, Run, SpeedBound, CONVERGENCE_TOL,
};
use crate::objectives::{lipschitz_bound_on_box, BoxRegion};
use crate::ode::{IntegratorConfig, Termination};

/// Version of the JSON layout written for [`DiagnosticsReport`].
pub const SCHEMA_VERSION: u32 = 1;

const DEFAULT_TAIL_TOL: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsSettings {
    /// Region for the Lipschitz constant and suprema. When absent, the
    /// bounding box of the run, padded, is used.
    pub region: Option<BoxRegion>,
    /// Replaces the computed Lipschitz constant.
    pub lipschitz: Option<f64>,
    /// Start of the tail whose length is checked against `tail_tol`.
    pub tail_split: Option<f64>,
    pub tail_tol: f64,
    pub early_stop: bool,
    /// Drives the sampled Lipschitz estimate when the objective has no analytic bound.
    pub seed: u64,
}

impl Default for DiagnosticsSettings {
    fn default() -> Self {
        Self {
            region: None,
            lipschitz: None,
            tail_split: None,
            tail_tol: DEFAULT_TAIL_TOL,
            early_stop: false,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LipschitzSource {
    Analytic,
    Sampled,
    Configured,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionSource {
    Configured,
    Pilot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub name: String,
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Slacks {
    pub inequality: f64,
    pub identity: f64,
    pub monotone: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub schema_version: u32,
    pub system: Dynamics,
    pub objective: String,
    pub x0: Vec<f64>,
    pub v0: Vec<f64>,
    pub termination: Termination,
    pub region: BoxRegion,
    pub region_source: RegionSource,
    pub stays_in_region: bool,
    pub lipschitz: f64,
    pub lipschitz_source: LipschitzSource,
    pub slacks: Slacks,
    /// Largest scaled `|dF/dt + γ‖x'‖²|` against the identity slack.
    pub dissipation: InequalityCheck,
    pub energy_monotone: InequalityCheck,
    pub l2_bound: InequalityCheck,
    pub speed_bound: InequalityCheck,
    pub speed: Option<SpeedBound>,
    pub lemma_constants: Option<LengthLemmaConstants>,
    pub h_alpha: InequalityCheck,
    pub grad_h: InequalityCheck,
    pub grad_h_corrected: InequalityCheck,
    pub length: f64,
    pub length_tail: Option<InequalityCheck>,
    pub limit_point: LimitPoint,
    pub windows: Vec<Window>,
}

impl DiagnosticsReport {
    /// Every check by name, in a fixed order.
    pub fn checks(&self) -> Vec<(&'static str, &InequalityCheck)> {
        let mut out = vec![
            ("dissipation", &self.dissipation),
            ("energy_monotone", &self.energy_monotone),
            ("l2_bound", &self.l2_bound),
            ("speed_bound", &self.speed_bound),
            ("h_alpha", &self.h_alpha),
            ("grad_h", &self.grad_h),
            ("grad_h_corrected", &self.grad_h_corrected),
        ];
        if let Some(t) = &self.length_tail {
            out.push(("length_tail", t));
        }
        out
    }

    pub fn failures(&self) -> Vec<&'static str> {
        self.checks()
            .into_iter()
            .filter(|(_, c)| c.failed())
            .map(|(n, _)| n)
            .collect()
    }

    pub fn all_pass(&self) -> bool {
        self.failures().is_empty()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

fn pilot_region(run: &Run) -> BoxRegion {
    let n = run.dim();
    let pts = (0..run.trajectory.len()).map(|i| run.node_position(i));
    let bbox = BoxRegion::bounding(n, pts).expect("nonempty run");
    let width = (0..n).map(|i| bbox.width(i)).fold(0.0, f64::max);
    bbox.expanded(0.1 * width + 0.1)
}

/// Integrates `problem` once and runs every check that applies to it.
///
/// Heavy-ball-only checks (speed bound, `H_α` inequalities) are marked
/// not applicable for the gradient flow; the `L²` bound uses `ε = 0` there.
pub fn full_diagnostics(
    problem: &Problem,
    config: &IntegratorConfig,
    settings: &DiagnosticsSettings,
) -> Result<(Run, DiagnosticsReport), AnalysisError> {
    let run = problem.simulate(config, settings.early_stop)?;
    let obj = problem.objective().as_ref();
    let x0 = problem.x0().to_vec();
    let v0 = problem.v0();
    let r0 = norm(&v0);
    let eps = problem.epsilon();

    let (region, region_source) = match &settings.region {
        Some(r) => (r.clone(), RegionSource::Configured),
        None => (pilot_region(&run), RegionSource::Pilot),
    };
    let inside = stays_in(&run, &region);
    let (lipschitz, lipschitz_source) = match settings.lipschitz {
        Some(l) => (l, LipschitzSource::Configured),
        None => {
            let src = if obj.hessian_bound(&region).is_some() {
                LipschitzSource::Analytic
            } else {
                LipschitzSource::Sampled
            };
            (
                lipschitz_bound_on_box(obj, &region, eps.unwrap_or(0.0), settings.seed),
                src,
            )
        }
    };

    let dissipation = dissipation_residual(&run)?;
    let monotone = energy_monotone(&run);
    let l2 = l2_velocity_check(&run, obj.value(&x0), obj.known_inf().unwrap_or(0.0), r0)?;

    let (speed_check, speed) = match run.dynamics {
        Dynamics::HeavyBall { .. } => {
            let b = speed_bound_for(&run, &region, lipschitz, r0)?;
            let check = match certify_speed_bound(&run, &b, &region) {
                Ok(c) => c,
                Err(AnalysisError::BoxViolation) => InequalityCheck::vacuous(sup_speed(&run), b.uniform, 0.0),
                Err(e) => return Err(e),
            };
            (check, Some(b))
        }
        Dynamics::GradientFlow { .. } => (InequalityCheck::not_applicable(), None),
    };

    let (lemma, lyap) = match run.dynamics {
        Dynamics::HeavyBall { epsilon, gamma } => {
            let k = length_lemma_constants(gamma, epsilon, lipschitz)?;
            (Some(k), Some(lyapunov_checks(&run, &k, &region)))
        }
        Dynamics::GradientFlow { .. } => (None, None),
    };
    let na = InequalityCheck::not_applicable();

    let t_end = run.t_end();
    let length = run.length(0.0, t_end)?;
    let mut windows = vec![Window {
        name: "run".into(),
        start: 0.0,
        end: t_end,
    }];
    let length_tail = match settings.tail_split {
        Some(s) => {
            let lhs = if s < t_end { run.length(s, t_end)? } else { 0.0 };
            windows.push(Window {
                name: "length_tail".into(),
                start: s.min(t_end),
                end: t_end,
            });
            Some(InequalityCheck::compare(lhs, settings.tail_tol, 0.0))
        }
        None => None,
    };

    let report = DiagnosticsReport {
        schema_version: SCHEMA_VERSION,
        system: run.dynamics,
        objective: obj.name().to_string(),
        x0,
        v0,
        termination: run.trajectory.termination(),
        region,
        region_source,
        stays_in_region: inside,
        lipschitz,
        lipschitz_source,
        slacks: Slacks {
            inequality: INEQUALITY_SLACK,
            identity: IDENTITY_SLACK,
            monotone: MONOTONE_SLACK,
        },
        dissipation,
        energy_monotone: monotone,
        l2_bound: l2,
        speed_bound: speed_check,
        speed,
        lemma_constants: lemma,
        h_alpha: lyap.map_or(na, |l| l.h_alpha),
        grad_h: lyap.map_or(na, |l| l.grad_h),
        grad_h_corrected: lyap.map_or(na, |l| l.grad_h_corrected),
        length,
        length_tail,
        limit_point: limit_point(&run, CONVERGENCE_TOL, CONVERGENCE_TOL),
        windows,
    };
    Ok((run, report))
}
