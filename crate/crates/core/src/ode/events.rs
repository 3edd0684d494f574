use super::Trajectory;

/// Which sign changes of the event function count as a crossing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Negative to positive.
    Rising,
    /// Positive to negative.
    Falling,
    Any,
}

impl Direction {
    fn accepts(self, before: f64, after: f64) -> bool {
        match self {
            Direction::Rising => before < 0.0 && after > 0.0,
            Direction::Falling => before > 0.0 && after < 0.0,
            Direction::Any => before * after < 0.0,
        }
    }

    /// A sample that is exactly zero, judged by the sign of its neighbour.
    fn accepts_zero(self, neighbour: f64, neighbour_is_after: bool) -> bool {
        let s = if neighbour_is_after { neighbour } else { -neighbour };
        match self {
            Direction::Rising => s > 0.0,
            Direction::Falling => s < 0.0,
            Direction::Any => true,
        }
    }
}

/// Zero-crossing query against a trajectory's dense output.
pub struct EventQuery<G> {
    pub function: G,
    pub direction: Direction,
    /// Search window; the whole span when `None`.
    pub window: Option<(f64, f64)>,
}

impl<G> EventQuery<G>
where
    G: Fn(f64, &[f64]) -> f64,
{
    pub fn new(function: G, direction: Direction) -> Self {
        Self {
            function,
            direction,
            window: None,
        }
    }

    pub fn within(mut self, start: f64, end: f64) -> Self {
        self.window = Some((start, end));
        self
    }
}

const SUBSAMPLES: usize = 4;
const G_TOL: f64 = 1e-10;
const WIDTH_REL: f64 = 1e-12;

/// Earliest crossing of `query.function` inside the window, or `None`.
///
/// Each segment is sampled at a few interior points to catch crossings
/// between nodes; the first bracket is narrowed by bisection and then
/// polished with a safeguarded (Illinois) secant iteration.
pub fn detect_event<G>(traj: &Trajectory, query: &EventQuery<G>) -> Option<f64>
where
    G: Fn(f64, &[f64]) -> f64,
{
    let span_end = traj.t_end();
    let (lo, hi) = query.window.unwrap_or((0.0, span_end));
    let lo = lo.max(0.0);
    let hi = hi.min(span_end);
    if !(lo <= hi) {
        return None;
    }
    let mut buf = vec![0.0; traj.dim()];
    let mut eval = |t: f64| -> f64 {
        traj.dense_eval_into(t, &mut buf).expect("time within span");
        (query.function)(t, &buf)
    };

    let samples = sample_times(traj, lo, hi);
    let mut prev_t = samples[0];
    let mut prev_g = eval(prev_t);
    if samples.len() == 1 {
        return (prev_g == 0.0 && query.direction == Direction::Any).then_some(prev_t);
    }
    for (i, &t) in samples.iter().enumerate().skip(1) {
        let g = eval(t);
        if i == 1 && prev_g == 0.0 && query.direction.accepts_zero(g, true) {
            return Some(prev_t);
        }
        if g == 0.0 && prev_g != 0.0 && query.direction.accepts_zero(prev_g, false) {
            return Some(t);
        }
        if query.direction.accepts(prev_g, g) {
            return Some(refine(&mut eval, prev_t, prev_g, t, g, span_end));
        }
        prev_t = t;
        prev_g = g;
    }
    None
}

fn sample_times(traj: &Trajectory, lo: f64, hi: f64) -> Vec<f64> {
    let times = traj.times();
    let mut out = vec![lo];
    if hi == lo {
        return out;
    }
    let first = traj.segment_of(lo);
    let last = traj.segment_of(hi);
    for k in first..=last.min(traj.segments().saturating_sub(1)) {
        if traj.segments() == 0 {
            break;
        }
        let (a, b) = (times[k], times[k + 1]);
        for j in 1..=SUBSAMPLES {
            let s = a + (b - a) * j as f64 / SUBSAMPLES as f64;
            if s > lo && s < hi {
                out.push(s);
            }
        }
    }
    out.push(hi);
    out.dedup();
    out
}

fn refine<E>(eval: &mut E, mut a: f64, mut ga: f64, mut b: f64, mut gb: f64, span: f64) -> f64
where
    E: FnMut(f64) -> f64,
{
    let width_tol = WIDTH_REL * span.max(1.0);
    let initial = b - a;
    // Bisection until the bracket is small relative to where it started.
    while b - a > 1e-3 * initial && b - a > width_tol {
        let m = 0.5 * (a + b);
        let gm = eval(m);
        if gm == 0.0 {
            return m;
        }
        if ga * gm < 0.0 {
            b = m;
            gb = gm;
        } else {
            a = m;
            ga = gm;
        }
    }
    // Illinois secant polish.
    let mut side = 0i8;
    for _ in 0..200 {
        if b - a <= width_tol {
            break;
        }
        let mut c = (a * gb - b * ga) / (gb - ga);
        if !(c > a && c < b) {
            c = 0.5 * (a + b);
        }
        let gc = eval(c);
        if gc == 0.0 {
            return c;
        }
        if ga * gc < 0.0 {
            b = c;
            gb = gc;
            if side == -1 {
                ga *= 0.5;
            }
            side = -1;
        } else {
            a = c;
            ga = gc;
            if side == 1 {
                gb *= 0.5;
            }
            side = 1;
        }
        if gc.abs() <= G_TOL && b - a <= width_tol {
            break;
        }
    }
    // Report the bracket end closer to the root; ga/gb may carry Illinois
    // weights, so re-evaluate.
    let (fa, fb) = (eval(a).abs(), eval(b).abs());
    if fa <= fb {
        a
    } else {
        b
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ode::{integrate, IntegratorConfig};

    fn decay_traj() -> Trajectory {
        let f = |_t: f64, y: &[f64], dy: &mut [f64]| dy[0] = -y[0];
        integrate(f, &[1.0], &IntegratorConfig::new(3.0)).unwrap()
    }

    #[test]
    fn half_life_of_decay() {
        let traj = decay_traj();
        let q = EventQuery::new(|_t, y: &[f64]| y[0] - 0.5, Direction::Falling);
        let t = detect_event(&traj, &q).unwrap();
        assert!((t - std::f64::consts::LN_2).abs() < 1e-8, "{t}");
        // Wrong direction finds nothing.
        let q = EventQuery::new(|_t, y: &[f64]| y[0] - 0.5, Direction::Rising);
        assert!(detect_event(&traj, &q).is_none());
    }

    #[test]
    fn no_sign_change_is_absent() {
        let traj = decay_traj();
        let q = EventQuery::new(|_t, y: &[f64]| y[0] + 1.0, Direction::Any);
        assert_eq!(detect_event(&traj, &q), None);
    }

    #[test]
    fn zero_at_window_start_counts_with_direction() {
        let traj = decay_traj();
        let q = EventQuery::new(|_t, y: &[f64]| y[0] - 1.0, Direction::Falling);
        assert_eq!(detect_event(&traj, &q), Some(0.0));
        let q = EventQuery::new(|_t, y: &[f64]| y[0] - 1.0, Direction::Rising);
        assert_eq!(detect_event(&traj, &q), None);
    }

    #[test]
    fn window_restricts_search() {
        let traj = decay_traj();
        let q = EventQuery::new(|t: f64, _y: &[f64]| (3.0 * t).sin(), Direction::Any).within(0.5, 3.0);
        let t = detect_event(&traj, &q).unwrap();
        assert!((t - std::f64::consts::PI / 3.0).abs() < 1e-10, "{t}");
    }

    #[test]
    fn repeated_detection_is_identical() {
        let traj = decay_traj();
        let q = EventQuery::new(|_t, y: &[f64]| y[0] - 0.3, Direction::Any);
        let a = detect_event(&traj, &q).unwrap();
        let b = detect_event(&traj, &q).unwrap();
        assert!((a - b).abs() <= 1e-12);
    }
}
