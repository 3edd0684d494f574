use serde::{Deserialize, Serialize};

use super::{positive, DynamicsError};

/// Constants of the heavy-ball length estimate.
///
/// With `u = x + βv`, the function `H_α(u, x)` decays at least like
/// `−a_diss‖x'‖² − b_diss‖x''‖²`, and `‖∇H_α(u, x)‖ ≤ c_grad‖x'‖ + ε‖x''‖`
/// is the companion gradient estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LengthLemmaConstants {
    pub beta: f64,
    pub alpha: f64,
    pub a_diss: f64,
    pub b_diss: f64,
    pub c_grad: f64,
    pub lipschitz: f64,
    pub gamma: f64,
    pub epsilon: f64,
}

impl LengthLemmaConstants {
    /// `c/a + ε²/(bc)`, the coefficient in front of the desingularised term.
    pub fn length_coefficient(&self) -> f64 {
        self.c_grad / self.a_diss + self.epsilon.powi(2) / (self.b_diss * self.c_grad)
    }

    /// `4(1 + L/γ)`.
    pub fn ratio_ca_cap(&self) -> f64 {
        4.0 * (1.0 + self.lipschitz / self.gamma)
    }

    /// `2L + 6L/γ`.
    pub fn ratio_ebc_cap(&self) -> f64 {
        2.0 * self.lipschitz + 6.0 * self.lipschitz / self.gamma
    }
}

/// `β = min{ε/((1+γ)L), √(1+γ/L) − 1}` and the derived `α, a, b, c`.
pub fn length_lemma_constants(gamma: f64, epsilon: f64, lipschitz: f64) -> Result<LengthLemmaConstants, DynamicsError> {
    positive("gamma", gamma)?;
    positive("epsilon", epsilon)?;
    let required = epsilon.max(1.0);
    if !(lipschitz >= required) || !lipschitz.is_finite() {
        return Err(DynamicsError::InvalidLipschitz { l: lipschitz, required });
    }
    let l = lipschitz;
    let beta = (epsilon / ((1.0 + gamma) * l)).min((1.0 + gamma / l).sqrt() - 1.0);
    let alpha = (gamma * beta + epsilon) / (2.0 * beta * beta);
    let a_diss = gamma - l * beta * (1.0 + beta / 2.0);
    let b_diss = beta * (epsilon - l * beta / 2.0);
    let c_grad = l * beta + gamma + epsilon + gamma * beta;
    Ok(LengthLemmaConstants {
        beta,
        alpha,
        a_diss,
        b_diss,
        c_grad,
        lipschitz: l,
        gamma,
        epsilon,
    })
}

/// `η = 2r(r + 1)`.
pub fn eta_constant(r: f64) -> f64 {
    2.0 * r * (r + 1.0)
}

/// `φ(t) = 8(2 + L + 5L/γ)·m·ψ(t/(2m))` for a caller-supplied concave `ψ`.
pub fn phi_bound<P>(t: f64, psi: P, lipschitz: f64, gamma: f64, m: u32) -> f64
where
    P: Fn(f64) -> f64,
{
    let m = f64::from(m.max(1));
    8.0 * (2.0 + lipschitz + 5.0 * lipschitz / gamma) * m * psi(t / (2.0 * m))
}

/// Data entering the ε-uniform velocity bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedBoundInputs {
    pub gamma: f64,
    pub lipschitz: f64,
    /// Bound on the initial speed.
    pub r0: f64,
    pub sup_f: f64,
    pub inf_f: f64,
    /// `sup ‖∇f‖` over the region.
    pub sup_grad: f64,
}

/// Energy branch `√((2/ε)(sup f − inf f) + r0²)`; decreasing in ε.
pub fn speed_bound_a(epsilon: f64, p: &SpeedBoundInputs) -> f64 {
    (2.0 / epsilon * (p.sup_f - p.inf_f) + p.r0 * p.r0).sqrt()
}

/// Acceleration branch
/// `(1/γ)[√((εL²/γ²)(sup f − inf f + εr0²/2) + (γr0 + G)²) + G]`;
/// increasing in ε.
pub fn speed_bound_b(epsilon: f64, p: &SpeedBoundInputs) -> f64 {
    let g = p.sup_grad;
    let inner = epsilon * p.lipschitz.powi(2) / p.gamma.powi(2) * (p.sup_f - p.inf_f + epsilon * p.r0 * p.r0 / 2.0)
        + (p.gamma * p.r0 + g).powi(2);
    (inner.sqrt() + g) / p.gamma
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedBound {
    /// `min(A(ε), B(ε))` at the requested ε.
    pub at_epsilon: f64,
    /// `sup_ε min(A(ε), B(ε))`, valid for every ε.
    pub uniform: f64,
    /// Where the supremum is attained.
    pub maximizer: f64,
}

const LOG_EPS_LO: f64 = -40.0;
const LOG_EPS_HI: f64 = 40.0;
const SCAN_POINTS: usize = 400;
const GOLDEN_TOL: f64 = 1e-8;

/// Velocity bound for the heavy-ball system, both at `epsilon` and
/// uniformly in ε.
///
/// The uniform value maximises `min(A, B)` over `ln ε`: a coarse scan
/// brackets the crossing of the decreasing and increasing branches, then
/// golden-section search refines it.
pub fn speed_bound(epsilon: f64, p: &SpeedBoundInputs) -> Result<SpeedBound, DynamicsError> {
    positive("gamma", p.gamma)?;
    if !(p.sup_f >= p.inf_f) {
        return Err(DynamicsError::InvalidParameter("sup_f must be at least inf_f".into()));
    }
    if !(p.r0 >= 0.0 && p.sup_grad >= 0.0 && p.lipschitz >= 0.0) {
        return Err(DynamicsError::InvalidParameter(
            "r0, sup_grad and the Lipschitz constant must be nonnegative".into(),
        ));
    }
    let m = |s: f64| {
        let e = s.exp();
        speed_bound_a(e, p).min(speed_bound_b(e, p))
    };
    let at_epsilon = if epsilon > 0.0 { m(epsilon.ln()) } else { f64::NAN };

    let step = (LOG_EPS_HI - LOG_EPS_LO) / (SCAN_POINTS - 1) as f64;
    let (mut best_i, mut best) = (0, f64::NEG_INFINITY);
    for i in 0..SCAN_POINTS {
        let v = m(LOG_EPS_LO + step * i as f64);
        if v > best {
            best = v;
            best_i = i;
        }
    }
    let mut lo = LOG_EPS_LO + step * best_i.saturating_sub(1) as f64;
    let mut hi = LOG_EPS_LO + step * (best_i + 1).min(SCAN_POINTS - 1) as f64;
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - ratio * (hi - lo);
    let mut d = lo + ratio * (hi - lo);
    let (mut fc, mut fd) = (m(c), m(d));
    while hi - lo > GOLDEN_TOL {
        if fc >= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - ratio * (hi - lo);
            fc = m(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + ratio * (hi - lo);
            fd = m(d);
        }
    }
    let s = 0.5 * (lo + hi);
    let (uniform, arg) = if m(s) >= best {
        (m(s), s)
    } else {
        (best, LOG_EPS_LO + step * best_i as f64)
    };
    Ok(SpeedBound {
        at_epsilon,
        uniform,
        maximizer: arg.exp(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reference_constants() {
        let k = length_lemma_constants(0.5, 0.01, 1.0).unwrap();
        assert!((k.beta - 0.01 / 1.5).abs() < 1e-15);
        assert!((k.alpha - 150.0).abs() < 1e-9, "{}", k.alpha);
        assert!((k.a_diss - 0.493311).abs() < 1e-6, "{}", k.a_diss);
        assert!((k.b_diss - 4.4444e-5).abs() < 1e-9, "{}", k.b_diss);
        assert!((k.c_grad - 0.52).abs() < 1e-12);
        assert!((k.c_grad / k.a_diss - 1.054).abs() < 1e-3);
        let ebc = 0.01f64.powi(2) / (k.b_diss * k.c_grad);
        assert!((ebc - 4.327).abs() < 1e-3, "{ebc}");
        assert!(k.c_grad / k.a_diss <= 12.0 && ebc <= 14.0);
    }

    #[test]
    fn lipschitz_below_floor_is_rejected() {
        assert!(matches!(
            length_lemma_constants(0.5, 0.01, 0.9),
            Err(DynamicsError::InvalidLipschitz { .. })
        ));
        assert!(matches!(
            length_lemma_constants(0.5, 2.0, 1.5),
            Err(DynamicsError::InvalidLipschitz { .. })
        ));
    }

    #[test]
    fn eta_and_phi() {
        assert_eq!(eta_constant(0.0), 0.0);
        assert_eq!(eta_constant(1.0), 4.0);
        assert_eq!(phi_bound(0.0, |t| t.sqrt(), 3.0, 0.5, 4), 0.0);
        assert_eq!(phi_bound(4.0, |t| t, 1.0, 0.5, 2), 208.0);
        let a = phi_bound(3.0, |t| t, 2.0, 0.7, 1);
        let b = phi_bound(3.0, |t| t, 2.0, 0.7, 9);
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn stationary_speed_bound_is_zero() {
        let p = SpeedBoundInputs {
            gamma: 0.5,
            lipschitz: 1.0,
            r0: 0.0,
            sup_f: 1.0,
            inf_f: 1.0,
            sup_grad: 0.0,
        };
        let s = speed_bound(0.01, &p).unwrap();
        assert_eq!(s.uniform, 0.0);
        assert_eq!(s.at_epsilon, 0.0);
    }

    #[test]
    fn branch_b_at_zero_mass() {
        let p = SpeedBoundInputs {
            gamma: 0.5,
            lipschitz: 26.0,
            r0: 0.3,
            sup_f: 25.0,
            inf_f: 0.0,
            sup_grad: 7.0,
        };
        let b0 = speed_bound_b(0.0, &p);
        assert!((b0 - (0.3 + 2.0 * 7.0 / 0.5)).abs() < 1e-12);
    }

    /// Brute-force oracle: global log-grid then a local refinement grid.
    fn grid_max(p: &SpeedBoundInputs) -> f64 {
        let m = |s: f64| {
            let e = f64::exp(s);
            speed_bound_a(e, p).min(speed_bound_b(e, p))
        };
        let n = 10_000;
        let (lo, hi) = (-40.0, 40.0);
        let h = (hi - lo) / n as f64;
        let (i, _) = (0..=n)
            .map(|i| (i, m(lo + h * i as f64)))
            .fold(
                (0, f64::NEG_INFINITY),
                |acc, (i, v)| if v > acc.1 { (i, v) } else { acc },
            );
        let (a, b) = (lo + h * (i as f64 - 1.0), lo + h * (i as f64 + 1.0));
        let h2 = (b - a) / n as f64;
        (0..=n).map(|j| m(a + h2 * j as f64)).fold(f64::NEG_INFINITY, f64::max)
    }

    #[test]
    fn golden_section_matches_grid_on_reference_box() {
        let p = SpeedBoundInputs {
            gamma: 0.5,
            lipschitz: 26.0,
            r0: 0.02f64.sqrt(),
            sup_f: 25.0,
            inf_f: 0.0,
            sup_grad: 20.0 * 2f64.sqrt(),
        };
        let s = speed_bound(0.01, &p).unwrap();
        let oracle = grid_max(&p);
        assert!(
            (s.uniform - oracle).abs() <= 1e-6 * oracle.max(1.0),
            "{} vs {oracle}",
            s.uniform
        );
        assert!(s.uniform >= s.at_epsilon);
        // At the maximiser the two branches agree.
        let (a, b) = (speed_bound_a(s.maximizer, &p), speed_bound_b(s.maximizer, &p));
        assert!((a - b).abs() < 1e-5 * a, "{a} {b}");
    }

    fn inputs() -> impl Strategy<Value = SpeedBoundInputs> {
        (0.05..5.0f64, 1.0..50.0f64, 0.0..3.0f64, 0.0..30.0f64, 0.0..40.0f64).prop_map(
            |(gamma, lipschitz, r0, df, sup_grad)| SpeedBoundInputs {
                gamma,
                lipschitz,
                r0,
                sup_f: df,
                inf_f: 0.0,
                sup_grad,
            },
        )
    }

    proptest! {
        #[test]
        fn branch_monotonicity(p in inputs(), e1 in 1e-4..1.0f64, k in 1.01..10.0f64) {
            let e2 = e1 * k;
            prop_assert!(speed_bound_a(e2, &p) <= speed_bound_a(e1, &p) + 1e-12);
            prop_assert!(speed_bound_b(e2, &p) >= speed_bound_b(e1, &p) - 1e-12);
        }

        #[test]
        fn golden_section_agrees_with_grid(p in inputs()) {
            let s = speed_bound(0.1, &p).unwrap();
            let oracle = grid_max(&p);
            prop_assert!((s.uniform - oracle).abs() <= 1e-6 * oracle.max(1.0));
        }

        #[test]
        fn lemma_constant_invariants(
            gamma in 0.01..10.0f64,
            epsilon in 1e-4..1.0f64,
            extra in 0.0..100.0f64,
        ) {
            let l = epsilon.max(1.0) + extra;
            let k = length_lemma_constants(gamma, epsilon, l).unwrap();
            prop_assert!(k.alpha >= 0.25);
            prop_assert!(k.a_diss > 0.0 && k.b_diss > 0.0 && k.c_grad > 0.0);
            prop_assert!(k.c_grad / k.a_diss <= k.ratio_ca_cap());
            prop_assert!(epsilon.powi(2) / (k.b_diss * k.c_grad) <= k.ratio_ebc_cap());
            // The cross term vanishes by the choice of α.
            prop_assert!((2.0 * k.alpha * k.beta * k.beta - gamma * k.beta - epsilon).abs()
                <= 1e-12 * (gamma * k.beta + epsilon));
        }
    }
}
