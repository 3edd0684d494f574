use super::trajectory::{Termination, Trajectory, DENSE_COEFFS};
use super::{IntegratorConfig, OdeError};

// Dormand–Prince 5(4) tableau.
const C2: f64 = 0.2;
const C3: f64 = 0.3;
const C4: f64 = 0.8;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 0.2;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// Fifth-order minus embedded fourth-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

// Continuous extension.
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

// Step controller (Hairer–Wanner defaults with PI stabilisation).
const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;
const PI_BETA: f64 = 0.04;
const EXPO1: f64 = 0.2 - PI_BETA * 0.75;

const MAX_NONFINITE_RETRIES: usize = 60;

/// Stops a run once `converged(y, dy)` has held at every accepted node
/// for `dwell` time units.
pub struct EarlyStop<'a> {
    pub dwell: f64,
    pub converged: &'a dyn Fn(&[f64], &[f64]) -> bool,
}

/// Integrates `y' = field(t, y)` from `t = 0` to `config.t_end`.
pub fn integrate<F>(field: F, y0: &[f64], config: &IntegratorConfig) -> Result<Trajectory, OdeError>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    integrate_with_stop(field, y0, config, None)
}

/// Like [`integrate`], but may end early on the convergence rule.
pub fn integrate_with_stop<F>(
    field: F,
    y0: &[f64],
    config: &IntegratorConfig,
    stop: Option<EarlyStop<'_>>,
) -> Result<Trajectory, OdeError>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    config.validate()?;
    let n = y0.len();
    if y0.iter().any(|v| !v.is_finite()) {
        return Err(OdeError::NonFiniteState { t: 0.0 });
    }
    let t_end = config.t_end;
    let h_max = config.max_step.unwrap_or(t_end).min(t_end);
    let (rtol, atol) = (config.rel_tol, config.abs_tol);

    let mut targets: Vec<f64> = config
        .forced_times
        .iter()
        .copied()
        .filter(|&s| s > 0.0 && s < t_end)
        .collect();
    targets.sort_by(f64::total_cmp);
    targets.dedup();
    targets.push(t_end);
    let mut target_idx = 0;

    let mut y = y0.to_vec();
    let mut k1 = vec![0.0; n];
    field(0.0, &y, &mut k1);
    if k1.iter().any(|v| !v.is_finite()) {
        return Err(OdeError::NonFiniteState { t: 0.0 });
    }
    let mut traj = Trajectory::start(&y, &k1, atol);

    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut k5 = vec![0.0; n];
    let mut k6 = vec![0.0; n];
    let mut k7 = vec![0.0; n];
    let mut ys = vec![0.0; n];
    let mut y_new = vec![0.0; n];
    let mut coeffs = vec![0.0; DENSE_COEFFS * n];

    let mut t = 0.0_f64;
    let mut h = match config.initial_step {
        Some(h0) => h0.min(h_max),
        None => initial_step(&field, &y, &k1, h_max, rtol, atol, &mut ys, &mut k2),
    };
    let mut fac_old = 1e-4_f64;
    let mut last_rejected = false;
    let mut nonfinite = 0usize;
    let mut steps = 0usize;
    let mut converged_since: Option<f64> = None;

    if let Some(rule) = &stop {
        if (rule.converged)(&y, &k1) {
            converged_since = Some(0.0);
        }
    }

    loop {
        let target = targets[target_idx];
        let mut landing = false;
        if t + 1.01 * h >= target {
            h = target - t;
            landing = true;
        }
        let floor = 16.0 * f64::EPSILON * t.abs().max(1.0);
        if h < floor {
            return Err(OdeError::StepUnderflow { t, h });
        }
        steps += 1;
        if steps > config.max_steps {
            return Err(OdeError::MaxStepsExceeded {
                t,
                steps: config.max_steps,
            });
        }

        for i in 0..n {
            ys[i] = y[i] + h * A21 * k1[i];
        }
        field(t + C2 * h, &ys, &mut k2);
        for i in 0..n {
            ys[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        field(t + C3 * h, &ys, &mut k3);
        for i in 0..n {
            ys[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        field(t + C4 * h, &ys, &mut k4);
        for i in 0..n {
            ys[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        field(t + C5 * h, &ys, &mut k5);
        for i in 0..n {
            ys[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        field(t + h, &ys, &mut k6);
        for i in 0..n {
            y_new[i] = y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        let t_new = if landing { target } else { t + h };
        field(t_new, &y_new, &mut k7);

        let mut err = 0.0;
        for i in 0..n {
            let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sk = atol + rtol * y[i].abs().max(y_new[i].abs());
            err += (e / sk) * (e / sk);
        }
        let err = (err / n.max(1) as f64).sqrt();

        if !err.is_finite() || y_new.iter().chain(k7.iter()).any(|v| !v.is_finite()) {
            nonfinite += 1;
            if nonfinite > MAX_NONFINITE_RETRIES {
                return Err(OdeError::NonFiniteState { t });
            }
            h *= FAC_MIN;
            last_rejected = true;
            continue;
        }
        nonfinite = 0;

        let fac11 = err.powf(EXPO1);
        if err <= 1.0 {
            let fac = (fac11 / fac_old.powf(PI_BETA) / SAFETY).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
            let mut h_new = h / fac;
            fac_old = err.max(1e-4);

            for i in 0..n {
                let ydiff = y_new[i] - y[i];
                let bspl = h * k1[i] - ydiff;
                coeffs[i] = y[i];
                coeffs[n + i] = ydiff;
                coeffs[2 * n + i] = bspl;
                coeffs[3 * n + i] = ydiff - h * k7[i] - bspl;
                coeffs[4 * n + i] = h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
            }
            traj.push_step(t_new, &y_new, &k7, &coeffs);
            t = t_new;
            std::mem::swap(&mut y, &mut y_new);
            std::mem::swap(&mut k1, &mut k7);

            if last_rejected {
                h_new = h_new.min(h);
            }
            last_rejected = false;
            h = h_new.min(h_max);

            if let Some(rule) = &stop {
                if (rule.converged)(&y, &k1) {
                    let since = *converged_since.get_or_insert(t);
                    if t - since >= rule.dwell {
                        traj.finish(Termination::Converged { t });
                        return Ok(traj);
                    }
                } else {
                    converged_since = None;
                }
            }

            if landing {
                target_idx += 1;
                if target_idx == targets.len() {
                    traj.finish(Termination::Horizon { t });
                    return Ok(traj);
                }
            }
        } else {
            h /= (fac11 / SAFETY).min(1.0 / FAC_MIN);
            last_rejected = true;
        }
    }
}

/// Starting step heuristic from Hairer, Nørsett & Wanner.
#[allow(clippy::too_many_arguments)]
fn initial_step<F>(
    field: &F,
    y0: &[f64],
    f0: &[f64],
    h_max: f64,
    rtol: f64,
    atol: f64,
    y1: &mut [f64],
    f1: &mut [f64],
) -> f64
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    let mut dnf = 0.0;
    let mut dny = 0.0;
    for i in 0..y0.len() {
        let sk = atol + rtol * y0[i].abs();
        dnf += (f0[i] / sk).powi(2);
        dny += (y0[i] / sk).powi(2);
    }
    let mut h = if dnf <= 1e-10 || dny <= 1e-10 {
        1e-6
    } else {
        (dny / dnf).sqrt() * 0.01
    };
    h = h.min(h_max);
    for i in 0..y0.len() {
        y1[i] = y0[i] + h * f0[i];
    }
    field(h, y1, f1);
    let mut der2 = 0.0;
    for i in 0..y0.len() {
        let sk = atol + rtol * y0[i].abs();
        der2 += ((f1[i] - f0[i]) / sk).powi(2);
    }
    let der2 = der2.sqrt() / h;
    let der12 = der2.abs().max(dnf.sqrt());
    let h1 = if der12 <= 1e-15 || !der12.is_finite() {
        (h * 1e-3).max(1e-6)
    } else {
        (0.01 / der12).powf(0.2)
    };
    (100.0 * h).min(h1).min(h_max)
}
