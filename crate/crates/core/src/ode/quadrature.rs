use std::ops::Range;

use super::{OdeError, Trajectory};

/// How the speed along a trajectory is read off the solution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Selector {
    /// Position components; speed is the norm of their time derivative.
    Position(Range<usize>),
    /// Components that already hold the velocity.
    Velocity(Range<usize>),
}

// Gauss–Kronrod 7/15 abscissae and weights (QUADPACK qk15).
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

const MAX_DEPTH: u32 = 40;

/// `∫_{t0}^{t1} integrand(t, y(t), y'(t)) dt` along the dense output.
///
/// The interval is split at trajectory nodes (the interpolant is a
/// polynomial inside each segment) and every piece is integrated with
/// adaptive Gauss–Kronrod 7/15 to the relative tolerance `rel_tol`.
pub fn integrate_along<I>(traj: &Trajectory, t0: f64, t1: f64, rel_tol: f64, integrand: I) -> Result<f64, OdeError>
where
    I: Fn(f64, &[f64], &[f64]) -> f64,
{
    let end = traj.t_end();
    for t in [t0, t1] {
        if t.is_nan() || t < 0.0 || t > end {
            return Err(OdeError::OutOfRange { t, start: 0.0, end });
        }
    }
    if t1 <= t0 || traj.segments() == 0 {
        return Ok(0.0);
    }
    let n = traj.dim();
    let mut y = vec![0.0; n];
    let mut dy = vec![0.0; n];
    let times = traj.times();
    let first = traj.segment_of(t0);
    let last = traj.segment_of(t1);
    let mut total = 0.0;
    for k in first..=last {
        let a = times[k].max(t0);
        let b = times[k + 1].min(t1);
        if b <= a {
            continue;
        }
        let mut f = |t: f64| {
            traj.eval_segment(k, t, Some(&mut y), Some(&mut dy));
            integrand(t, &y, &dy)
        };
        total += adaptive(&mut f, a, b, rel_tol, MAX_DEPTH);
    }
    Ok(total)
}

/// Length `∫‖x'(t)‖ dt` of the selected curve over `[t0, t1]`.
pub fn arc_length(traj: &Trajectory, selector: &Selector, t0: f64, t1: f64) -> Result<f64, OdeError> {
    const REL: f64 = 1e-10;
    match selector {
        Selector::Position(r) => {
            let r = r.clone();
            integrate_along(traj, t0, t1, REL, move |_t, _y, dy| norm(&dy[r.clone()]))
        }
        Selector::Velocity(r) => {
            let r = r.clone();
            integrate_along(traj, t0, t1, REL, move |_t, y, _dy| norm(&y[r.clone()]))
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn kronrod<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * h, (k - g).abs() * h)
}

fn adaptive<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64, rel_tol: f64, depth: u32) -> f64 {
    let (k, err) = kronrod(f, a, b);
    let tol = rel_tol * k.abs() + 1e-15 * (b - a);
    if err <= tol || depth == 0 || b - a <= 1e-14 * a.abs().max(1.0) {
        return k;
    }
    let m = 0.5 * (a + b);
    adaptive(f, a, m, rel_tol, depth - 1) + adaptive(f, m, b, rel_tol, depth - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ode::{integrate, IntegratorConfig};

    #[test]
    fn kronrod_integrates_polynomials_exactly() {
        let mut f = |t: f64| t.powi(9) - 3.0 * t * t;
        let v = adaptive(&mut f, 0.0, 2.0, 1e-14, 10);
        assert!((v - (2f64.powi(10) / 10.0 - 8.0)).abs() < 1e-12);
    }

    #[test]
    fn kink_is_resolved_by_bisection() {
        let mut f = |t: f64| (t - 0.3).abs();
        let v = adaptive(&mut f, 0.0, 1.0, 1e-12, MAX_DEPTH);
        assert!((v - (0.045 + 0.245)).abs() < 1e-10, "{v}");
    }

    #[test]
    fn constant_state_has_zero_length() {
        let f = |_t: f64, _y: &[f64], dy: &mut [f64]| dy.fill(0.0);
        let traj = integrate(f, &[1.0, 2.0], &IntegratorConfig::new(3.0)).unwrap();
        assert_eq!(arc_length(&traj, &Selector::Position(0..2), 0.0, 3.0).unwrap(), 0.0);
    }

    #[test]
    fn out_of_range_rejected() {
        let f = |_t: f64, y: &[f64], dy: &mut [f64]| dy[0] = -y[0];
        let traj = integrate(f, &[1.0], &IntegratorConfig::new(1.0)).unwrap();
        assert!(arc_length(&traj, &Selector::Position(0..1), 0.0, 2.0).is_err());
        assert!(arc_length(&traj, &Selector::Position(0..1), -0.1, 0.5).is_err());
    }
}
