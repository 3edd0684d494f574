//! Objective functions with analytic gradients and box-wise bounds.
//!
//! Every objective is assumed lower bounded with a locally Lipschitz
//! gradient and tame (definable) enough that bounded trajectories have
//! finite length. That assumption is documented per objective; nothing
//! here checks it at runtime.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObjectiveError {
    #[error("unknown objective '{0}' (available: xy, quadratic, constant)")]
    UnknownObjective(String),
    #[error("objective '{0}' has no known critical structure")]
    UnsupportedObjective(String),
    #[error("invalid box: {0}")]
    InvalidBox(String),
}

/// Known shape of the critical set, where one is available.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticalStructure {
    /// `{0} ∪ {xy = 1}` in the plane.
    OriginAndHyperbola,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticalClass {
    Origin,
    Hyperbola,
    NotCritical,
}

/// A smooth, lower-bounded function on `R^n`.
pub trait Objective: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64], out: &mut [f64]);

    fn known_inf(&self) -> Option<f64> {
        None
    }

    fn critical_structure(&self) -> Option<CriticalStructure> {
        None
    }

    /// Upper bound on the largest absolute Hessian row sum over `region`.
    fn hessian_bound(&self, _region: &BoxRegion) -> Option<f64> {
        None
    }

    /// Upper bound on `f` over `region`.
    fn value_sup(&self, _region: &BoxRegion) -> Option<f64> {
        None
    }

    /// Upper bound on `‖∇f‖` over `region`.
    fn gradient_norm_sup(&self, _region: &BoxRegion) -> Option<f64> {
        None
    }
}

/// Axis-aligned closed box `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxRegion {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxRegion {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self, ObjectiveError> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(ObjectiveError::InvalidBox("dimension mismatch".into()));
        }
        if lo.iter().chain(&hi).any(|v| !v.is_finite()) {
            return Err(ObjectiveError::InvalidBox("bounds must be finite".into()));
        }
        if lo.iter().zip(&hi).any(|(l, h)| l > h) {
            return Err(ObjectiveError::InvalidBox("lower bound exceeds upper".into()));
        }
        Ok(Self { lo, hi })
    }

    /// `[-half_width, half_width]^dim`.
    pub fn cube(dim: usize, half_width: f64) -> Result<Self, ObjectiveError> {
        Self::new(vec![-half_width; dim], vec![half_width; dim])
    }

    /// Smallest box containing all `points` (each of length `dim`).
    pub fn bounding<'a, I>(dim: usize, points: I) -> Result<Self, ObjectiveError>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        for p in points {
            for i in 0..dim {
                lo[i] = lo[i].min(p[i]);
                hi[i] = hi[i].max(p[i]);
            }
        }
        Self::new(lo, hi)
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn width(&self, i: usize) -> f64 {
        self.hi[i] - self.lo[i]
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (l, h))| *v >= *l && *v <= *h)
    }

    pub fn contains_box(&self, other: &BoxRegion) -> bool {
        self.contains(&other.lo) && self.contains(&other.hi)
    }

    pub fn expanded(&self, margin: f64) -> Self {
        Self {
            lo: self.lo.iter().map(|v| v - margin).collect(),
            hi: self.hi.iter().map(|v| v + margin).collect(),
        }
    }

    /// Regular grid with `per_axis` points along each axis (corners included).
    pub fn grid(&self, per_axis: usize) -> Vec<Vec<f64>> {
        let per_axis = per_axis.max(1);
        let d = self.dim();
        let total = per_axis.pow(d as u32);
        let mut out = Vec::with_capacity(total);
        for mut idx in 0..total {
            let p = (0..d)
                .map(|i| {
                    let j = idx % per_axis;
                    idx /= per_axis;
                    if per_axis == 1 {
                        0.5 * (self.lo[i] + self.hi[i])
                    } else {
                        self.lo[i] + self.width(i) * j as f64 / (per_axis - 1) as f64
                    }
                })
                .collect();
            out.push(p);
        }
        out
    }

    /// Interval of `x_0 · x_1` over a planar box.
    fn product_range(&self) -> (f64, f64) {
        let c = [
            self.lo[0] * self.lo[1],
            self.lo[0] * self.hi[1],
            self.hi[0] * self.lo[1],
            self.hi[0] * self.hi[1],
        ];
        let min = c.iter().copied().fold(f64::INFINITY, f64::min);
        let max = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (min, max)
    }

    fn max_sq(&self, i: usize) -> f64 {
        (self.lo[i] * self.lo[i]).max(self.hi[i] * self.hi[i])
    }
}

/// `f(x, y) = (xy − 1)²`.
///
/// Critical set `{0} ∪ {xy = 1}`; the origin is a saddle with value 1 and
/// the hyperbola is the set of global minimisers (value 0). The function is
/// semi-algebraic, hence definable in every o-minimal structure.
#[derive(Debug, Clone, Copy, Default)]
pub struct XyObjective;

pub fn xy_objective() -> XyObjective {
    XyObjective
}

impl Objective for XyObjective {
    fn name(&self) -> &str {
        "xy"
    }

    fn dim(&self) -> usize {
        2
    }

    fn value(&self, p: &[f64]) -> f64 {
        let r = p[0] * p[1] - 1.0;
        r * r
    }

    fn gradient(&self, p: &[f64], out: &mut [f64]) {
        let r = p[0] * p[1] - 1.0;
        out[0] = 2.0 * p[1] * r;
        out[1] = 2.0 * p[0] * r;
    }

    fn known_inf(&self) -> Option<f64> {
        Some(0.0)
    }

    fn critical_structure(&self) -> Option<CriticalStructure> {
        Some(CriticalStructure::OriginAndHyperbola)
    }

    /// Hessian `[[2y², 4xy − 2], [4xy − 2, 2x²]]`, bounded entrywise with
    /// interval arithmetic.
    fn hessian_bound(&self, region: &BoxRegion) -> Option<f64> {
        let (pmin, pmax) = region.product_range();
        let off = (4.0 * pmin - 2.0).abs().max((4.0 * pmax - 2.0).abs());
        let row_x = 2.0 * region.max_sq(1) + off;
        let row_y = 2.0 * region.max_sq(0) + off;
        Some(row_x.max(row_y))
    }

    fn value_sup(&self, region: &BoxRegion) -> Option<f64> {
        let (pmin, pmax) = region.product_range();
        Some((pmin - 1.0).powi(2).max((pmax - 1.0).powi(2)))
    }

    fn gradient_norm_sup(&self, region: &BoxRegion) -> Option<f64> {
        let (pmin, pmax) = region.product_range();
        let r = (pmin - 1.0).abs().max((pmax - 1.0).abs());
        Some(2.0 * r * (region.max_sq(0) + region.max_sq(1)).sqrt())
    }
}

/// `f(x) = ½‖x‖²` on `R^n`.
#[derive(Debug, Clone, Copy)]
pub struct Quadratic {
    pub dim: usize,
}

impl Objective for Quadratic {
    fn name(&self) -> &str {
        "quadratic"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        0.5 * x.iter().map(|v| v * v).sum::<f64>()
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(x);
    }

    fn known_inf(&self) -> Option<f64> {
        Some(0.0)
    }

    fn hessian_bound(&self, _region: &BoxRegion) -> Option<f64> {
        Some(1.0)
    }
}

/// `f ≡ level`.
#[derive(Debug, Clone, Copy)]
pub struct Constant {
    pub dim: usize,
    pub level: f64,
}

impl Objective for Constant {
    fn name(&self) -> &str {
        "constant"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, _x: &[f64]) -> f64 {
        self.level
    }

    fn gradient(&self, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }

    fn known_inf(&self) -> Option<f64> {
        Some(self.level)
    }

    fn hessian_bound(&self, _region: &BoxRegion) -> Option<f64> {
        Some(0.0)
    }

    fn value_sup(&self, _region: &BoxRegion) -> Option<f64> {
        Some(self.level)
    }

    fn gradient_norm_sup(&self, _region: &BoxRegion) -> Option<f64> {
        Some(0.0)
    }
}

pub const OBJECTIVE_NAMES: [&str; 3] = ["xy", "quadratic", "constant"];

/// Looks an objective up by its registry name. The planar variants are
/// returned for `quadratic` and `constant`.
pub fn objective_by_name(name: &str) -> Result<Arc<dyn Objective>, ObjectiveError> {
    match name {
        "xy" => Ok(Arc::new(XyObjective)),
        "quadratic" => Ok(Arc::new(Quadratic { dim: 2 })),
        "constant" => Ok(Arc::new(Constant { dim: 2, level: 0.0 })),
        other => Err(ObjectiveError::UnknownObjective(other.to_string())),
    }
}

/// Classifies `p` against the objective's known critical set.
///
/// The origin is tested first, so it wins whenever both tests pass.
pub fn classify_critical_point(obj: &dyn Objective, p: &[f64], tol: f64) -> Result<CriticalClass, ObjectiveError> {
    match obj.critical_structure() {
        Some(CriticalStructure::OriginAndHyperbola) => {
            let norm = (p[0] * p[0] + p[1] * p[1]).sqrt();
            Ok(if norm <= tol {
                CriticalClass::Origin
            } else if (p[0] * p[1] - 1.0).abs() <= tol {
                CriticalClass::Hyperbola
            } else {
                CriticalClass::NotCritical
            })
        }
        None => Err(ObjectiveError::UnsupportedObjective(obj.name().to_string())),
    }
}

const SAMPLED_POINTS: usize = 10_000;
const SAMPLED_SAFETY: f64 = 1.25;

/// Lipschitz constant for `∇f` on `region`, clamped below by `max(1, eps_bar)`.
///
/// Uses the objective's analytic Hessian bound when it has one; otherwise
/// the largest finite-difference Hessian row sum over a grid of about 10⁴
/// points plus as many points drawn with `seed`, inflated by 25%.
pub fn lipschitz_bound_on_box(obj: &dyn Objective, region: &BoxRegion, eps_bar: f64, seed: u64) -> f64 {
    let raw = obj
        .hessian_bound(region)
        .unwrap_or_else(|| SAMPLED_SAFETY * sampled_hessian_bound(obj, region, seed));
    raw.max(1.0).max(eps_bar)
}

fn grid_per_axis(dim: usize) -> usize {
    ((SAMPLED_POINTS as f64).powf(1.0 / dim as f64).round() as usize).max(2)
}

fn sampled_hessian_bound(obj: &dyn Objective, region: &BoxRegion, seed: u64) -> f64 {
    let n = obj.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let drawn: Vec<Vec<f64>> = (0..SAMPLED_POINTS).map(|_| random_point(region, &mut rng)).collect();
    let mut gp = vec![0.0; n];
    let mut gm = vec![0.0; n];
    let mut worst = 0.0_f64;
    for p in region.grid(grid_per_axis(n)).into_iter().chain(drawn) {
        let mut rows = vec![0.0; n];
        let mut q = p.clone();
        for j in 0..n {
            let h = 1e-6 * (1.0 + p[j].abs());
            q[j] = p[j] + h;
            obj.gradient(&q, &mut gp);
            q[j] = p[j] - h;
            obj.gradient(&q, &mut gm);
            q[j] = p[j];
            for i in 0..n {
                rows[i] += ((gp[i] - gm[i]) / (2.0 * h)).abs();
            }
        }
        worst = rows.into_iter().fold(worst, f64::max);
    }
    worst
}

/// Upper bound (analytic) or grid estimate of `sup f` over `region`.
pub fn value_sup_on_box(obj: &dyn Objective, region: &BoxRegion) -> f64 {
    obj.value_sup(region).unwrap_or_else(|| {
        region
            .grid(grid_per_axis(obj.dim()))
            .iter()
            .map(|p| obj.value(p))
            .fold(f64::NEG_INFINITY, f64::max)
    })
}

/// Upper bound (analytic) or grid estimate of `sup ‖∇f‖` over `region`.
pub fn gradient_norm_sup_on_box(obj: &dyn Objective, region: &BoxRegion) -> f64 {
    obj.gradient_norm_sup(region).unwrap_or_else(|| {
        let mut g = vec![0.0; obj.dim()];
        region
            .grid(grid_per_axis(obj.dim()))
            .iter()
            .map(|p| {
                obj.gradient(p, &mut g);
                g.iter().map(|v| v * v).sum::<f64>().sqrt()
            })
            .fold(0.0, f64::max)
    })
}

fn random_point(region: &BoxRegion, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..region.lo.len())
        .map(|i| {
            if region.width(i) > 0.0 {
                rng.gen_range(region.lo[i]..=region.hi[i])
            } else {
                region.lo[i]
            }
        })
        .collect()
}

/// Largest relative deviation between the analytic gradient and a
/// five-point central difference at `samples` seeded random points.
pub fn check_gradient(obj: &dyn Objective, region: &BoxRegion, samples: usize, seed: u64) -> f64 {
    let n = obj.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut analytic = vec![0.0; n];
    let mut numeric = vec![0.0; n];
    let mut worst = 0.0_f64;
    for _ in 0..samples.max(1) {
        let p = random_point(region, &mut rng);
        obj.gradient(&p, &mut analytic);
        let mut q = p.clone();
        for j in 0..n {
            let h = 1e-5 * region.width(j).max(1e-3);
            let mut at = |offset: f64| {
                q[j] = p[j] + offset;
                obj.value(&q)
            };
            let (f2p, f1p, f1m, f2m) = (at(2.0 * h), at(h), at(-h), at(-2.0 * h));
            q[j] = p[j];
            numeric[j] = (-f2p + 8.0 * f1p - 8.0 * f1m + f2m) / (12.0 * h);
        }
        let diff = analytic
            .iter()
            .zip(&numeric)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let scale = norm(&analytic).max(norm(&numeric));
        let rel = if diff == 0.0 { 0.0 } else { diff / scale };
        worst = worst.max(rel);
    }
    worst
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grad(obj: &dyn Objective, p: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; obj.dim()];
        obj.gradient(p, &mut g);
        g
    }

    #[test]
    fn xy_values_and_gradients() {
        let f = xy_objective();
        assert_eq!(f.value(&[1.0, 1.0]), 0.0);
        assert_eq!(grad(&f, &[1.0, 1.0]), vec![0.0, 0.0]);
        assert_eq!(f.value(&[0.0, 0.0]), 1.0);
        assert_eq!(grad(&f, &[0.0, 0.0]), vec![0.0, 0.0]);
        assert_eq!(f.value(&[1.0, 0.0]), 1.0);
        assert_eq!(grad(&f, &[1.0, 0.0]), vec![0.0, -2.0]);
        assert_eq!(grad(&f, &[1.0, -1.0]), vec![4.0, -4.0]);
    }

    #[test]
    fn classification() {
        let f = xy_objective();
        assert_eq!(
            classify_critical_point(&f, &[0.0, 0.0], 1e-3),
            Ok(CriticalClass::Origin)
        );
        assert_eq!(
            classify_critical_point(&f, &[2.0, 0.5], 1e-3),
            Ok(CriticalClass::Hyperbola)
        );
        assert_eq!(
            classify_critical_point(&f, &[1.0, 0.0], 1e-3),
            Ok(CriticalClass::NotCritical)
        );
        // With a huge tolerance both match and the origin wins.
        assert_eq!(classify_critical_point(&f, &[0.5, 0.5], 2.0), Ok(CriticalClass::Origin));
        let q = Quadratic { dim: 2 };
        assert!(matches!(
            classify_critical_point(&q, &[0.0, 0.0], 1e-3),
            Err(ObjectiveError::UnsupportedObjective(_))
        ));
    }

    #[test]
    fn lipschitz_on_reference_box() {
        let f = xy_objective();
        let b = BoxRegion::cube(2, 2.0).unwrap();
        assert_eq!(lipschitz_bound_on_box(&f, &b, 0.01, 0), 26.0);
    }

    #[test]
    fn lipschitz_shrinks_to_origin_value() {
        let f = xy_objective();
        let b = BoxRegion::cube(2, 1e-6).unwrap();
        let l = lipschitz_bound_on_box(&f, &b, 0.01, 0);
        assert!((l - 2.0).abs() < 1e-9, "{l}");
    }

    #[test]
    fn constant_objective_is_clamped() {
        let c = Constant { dim: 2, level: 3.0 };
        let b = BoxRegion::cube(2, 5.0).unwrap();
        assert_eq!(lipschitz_bound_on_box(&c, &b, 0.01, 0), 1.0);
        assert_eq!(lipschitz_bound_on_box(&c, &b, 1.5, 0), 1.5);
        assert_eq!(check_gradient(&c, &b, 10, 1), 0.0);
    }

    #[derive(Debug)]
    struct NoHessian;
    impl Objective for NoHessian {
        fn name(&self) -> &str {
            "xy-sampled"
        }
        fn dim(&self) -> usize {
            2
        }
        fn value(&self, p: &[f64]) -> f64 {
            XyObjective.value(p)
        }
        fn gradient(&self, p: &[f64], out: &mut [f64]) {
            XyObjective.gradient(p, out)
        }
    }

    #[test]
    fn sampled_bound_brackets_analytic_on_xy() {
        let b = BoxRegion::cube(2, 2.0).unwrap();
        let sampled = lipschitz_bound_on_box(&NoHessian, &b, 0.0, 0);
        // Exact row-sum maximum is 26 at the corners; the estimate is 1.25x.
        assert!((sampled - 1.25 * 26.0).abs() < 1e-4, "{sampled}");
        assert_eq!(
            lipschitz_bound_on_box(&NoHessian, &b, 0.0, 9),
            lipschitz_bound_on_box(&NoHessian, &b, 0.0, 9)
        );
        // Random draws never beat the corners, so the seed does not move this one.
        assert_eq!(lipschitz_bound_on_box(&NoHessian, &b, 0.0, 9), sampled);
        assert!((value_sup_on_box(&NoHessian, &b) - 25.0).abs() < 1e-12);
        let g = gradient_norm_sup_on_box(&NoHessian, &b);
        assert!((g - 20.0 * 2f64.sqrt()).abs() < 1e-9, "{g}");
    }

    #[test]
    fn analytic_sup_bounds_on_reference_box() {
        let f = xy_objective();
        let b = BoxRegion::cube(2, 2.0).unwrap();
        assert_eq!(value_sup_on_box(&f, &b), 25.0);
        assert!((gradient_norm_sup_on_box(&f, &b) - 20.0 * 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn gradient_check_passes_and_catches_sign_flip() {
        let f = xy_objective();
        let b = BoxRegion::cube(2, 2.0).unwrap();
        assert!(check_gradient(&f, &b, 100, 7) <= 1e-6);

        #[derive(Debug)]
        struct Flipped;
        impl Objective for Flipped {
            fn name(&self) -> &str {
                "flipped"
            }
            fn dim(&self) -> usize {
                2
            }
            fn value(&self, p: &[f64]) -> f64 {
                XyObjective.value(p)
            }
            fn gradient(&self, p: &[f64], out: &mut [f64]) {
                XyObjective.gradient(p, out);
                out.iter_mut().for_each(|v| *v = -*v);
            }
        }
        let e = check_gradient(&Flipped, &b, 100, 7);
        assert!((e - 2.0).abs() < 1e-6, "{e}");
    }

    #[test]
    fn registry_lookup() {
        assert_eq!(objective_by_name("xy").unwrap().name(), "xy");
        for name in OBJECTIVE_NAMES {
            assert_eq!(objective_by_name(name).unwrap().name(), name);
        }
        assert!(matches!(
            objective_by_name("rosenbrock"),
            Err(ObjectiveError::UnknownObjective(_))
        ));
    }

    #[test]
    fn box_validation() {
        assert!(BoxRegion::new(vec![1.0], vec![0.0]).is_err());
        assert!(BoxRegion::new(vec![0.0], vec![f64::INFINITY]).is_err());
        assert!(BoxRegion::new(vec![0.0, 1.0], vec![1.0]).is_err());
        let b = BoxRegion::cube(2, 1.0).unwrap();
        assert_eq!(b.grid(3).len(), 9);
        assert!(b.grid(3).iter().all(|p| b.contains(p)));
    }

    fn point() -> impl Strategy<Value = (f64, f64)> {
        (-3.0..3.0f64, -3.0..3.0f64)
    }

    proptest! {
        #[test]
        fn xy_is_nonnegative((x, y) in point()) {
            prop_assert!(xy_objective().value(&[x, y]) >= 0.0);
        }

        #[test]
        fn xy_gradient_swaps_with_arguments((x, y) in point()) {
            let f = xy_objective();
            let a = grad(&f, &[x, y]);
            let b = grad(&f, &[y, x]);
            prop_assert_eq!(a[0], b[1]);
            prop_assert_eq!(a[1], b[0]);
        }

        #[test]
        fn lipschitz_monotone_in_box(
            (x0, y0) in point(),
            (w0, w1) in (0.0..2.0f64, 0.0..2.0f64),
            (e0, e1, e2, e3) in (0.0..1.0f64, 0.0..1.0f64, 0.0..1.0f64, 0.0..1.0f64),
        ) {
            let f = xy_objective();
            let inner = BoxRegion::new(vec![x0, y0], vec![x0 + w0, y0 + w1]).unwrap();
            let outer = BoxRegion::new(
                vec![x0 - e0, y0 - e1],
                vec![x0 + w0 + e2, y0 + w1 + e3],
            ).unwrap();
            let li = lipschitz_bound_on_box(&f, &inner, 0.01, 0);
            let lo = lipschitz_bound_on_box(&f, &outer, 0.01, 0);
            prop_assert!(li <= lo + 1e-12);
        }

        #[test]
        fn analytic_hessian_bound_dominates_samples((x0, y0) in point(), w in 0.01..2.0f64) {
            let f = xy_objective();
            let b = BoxRegion::new(vec![x0, y0], vec![x0 + w, y0 + w]).unwrap();
            let analytic = f.hessian_bound(&b).unwrap();
            for p in b.grid(7) {
                let (x, y) = (p[0], p[1]);
                let off = (4.0 * x * y - 2.0).abs();
                let row = (2.0 * y * y + off).max(2.0 * x * x + off);
                prop_assert!(row <= analytic + 1e-12);
            }
        }
    }
}
