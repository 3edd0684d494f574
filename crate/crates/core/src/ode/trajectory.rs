use serde::{Deserialize, Serialize};

use super::OdeError;

/// Why an integration run ended.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Termination {
    /// Reached the configured `t_end`.
    Horizon { t: f64 },
    /// The early-stop predicate held for the whole dwell window ending at `t`.
    Converged { t: f64 },
}

impl Termination {
    pub fn time(&self) -> f64 {
        match *self {
            Termination::Horizon { t } | Termination::Converged { t } => t,
        }
    }

    pub fn converged(&self) -> bool {
        matches!(self, Termination::Converged { .. })
    }
}

/// Number of interpolation coefficient vectors per step.
pub(crate) const DENSE_COEFFS: usize = 5;

/// Immutable numerical solution with continuous extension.
///
/// Node `i` has time `times()[i]`, state `state(i)` and field value
/// `derivative(i)`. Segment `i` spans `[times[i], times[i + 1]]`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    dim: usize,
    times: Vec<f64>,
    states: Vec<f64>,
    derivs: Vec<f64>,
    coeffs: Vec<f64>,
    abs_tol: f64,
    termination: Termination,
}

impl Trajectory {
    pub(crate) fn start(y0: &[f64], dy0: &[f64], abs_tol: f64) -> Self {
        Self {
            dim: y0.len(),
            times: vec![0.0],
            states: y0.to_vec(),
            derivs: dy0.to_vec(),
            coeffs: Vec::new(),
            abs_tol,
            termination: Termination::Horizon { t: 0.0 },
        }
    }

    pub(crate) fn push_step(&mut self, t: f64, y: &[f64], dy: &[f64], coeffs: &[f64]) {
        debug_assert_eq!(coeffs.len(), DENSE_COEFFS * self.dim);
        self.times.push(t);
        self.states.extend_from_slice(y);
        self.derivs.extend_from_slice(dy);
        self.coeffs.extend_from_slice(coeffs);
    }

    pub(crate) fn finish(&mut self, termination: Termination) {
        self.termination = termination;
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn segments(&self) -> usize {
        self.times.len() - 1
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn derivative(&self, i: usize) -> &[f64] {
        &self.derivs[i * self.dim..(i + 1) * self.dim]
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().expect("trajectory has at least one node")
    }

    pub fn final_state(&self) -> &[f64] {
        self.state(self.len() - 1)
    }

    pub fn termination(&self) -> Termination {
        self.termination
    }

    pub fn abs_tol(&self) -> f64 {
        self.abs_tol
    }

    fn check_range(&self, t: f64) -> Result<(), OdeError> {
        let end = self.t_end();
        if t.is_nan() || t < 0.0 || t > end {
            return Err(OdeError::OutOfRange { t, start: 0.0, end });
        }
        Ok(())
    }

    /// Index of the segment containing `t`; `t` must be within the span.
    pub(crate) fn segment_of(&self, t: f64) -> usize {
        let n = self.segments();
        if n == 0 {
            return 0;
        }
        let k = self.times.partition_point(|&s| s <= t);
        k.saturating_sub(1).min(n - 1)
    }

    fn node_at(&self, t: f64) -> Option<usize> {
        let k = self.times.partition_point(|&s| s < t);
        (k < self.times.len() && self.times[k] == t).then_some(k)
    }

    /// Interpolated state at `t`.
    pub fn dense_eval(&self, t: f64) -> Result<Vec<f64>, OdeError> {
        let mut out = vec![0.0; self.dim];
        self.dense_eval_into(t, &mut out)?;
        Ok(out)
    }

    pub fn dense_eval_into(&self, t: f64, out: &mut [f64]) -> Result<(), OdeError> {
        self.check_range(t)?;
        if let Some(i) = self.node_at(t) {
            out.copy_from_slice(self.state(i));
            return Ok(());
        }
        let k = self.segment_of(t);
        self.eval_segment(k, t, Some(out), None);
        Ok(())
    }

    /// Time derivative of the interpolant at `t`. Equals the stored field
    /// value at nodes.
    pub fn dense_derivative_into(&self, t: f64, out: &mut [f64]) -> Result<(), OdeError> {
        self.check_range(t)?;
        if let Some(i) = self.node_at(t) {
            out.copy_from_slice(self.derivative(i));
            return Ok(());
        }
        let k = self.segment_of(t);
        self.eval_segment(k, t, None, Some(out));
        Ok(())
    }

    /// State and derivative at `t` in one lookup.
    pub fn dense_eval_with_derivative(&self, t: f64, state: &mut [f64], deriv: &mut [f64]) -> Result<(), OdeError> {
        self.check_range(t)?;
        if let Some(i) = self.node_at(t) {
            state.copy_from_slice(self.state(i));
            deriv.copy_from_slice(self.derivative(i));
            return Ok(());
        }
        let k = self.segment_of(t);
        self.eval_segment(k, t, Some(state), Some(deriv));
        Ok(())
    }

    /// Evaluates segment `k` at `t` (which may lie anywhere in the closed
    /// segment) without node snapping.
    pub(crate) fn eval_segment(&self, k: usize, t: f64, state: Option<&mut [f64]>, deriv: Option<&mut [f64]>) {
        let n = self.dim;
        let t0 = self.times[k];
        let h = self.times[k + 1] - t0;
        let th = (t - t0) / h;
        let th1 = 1.0 - th;
        let c = &self.coeffs[k * DENSE_COEFFS * n..(k + 1) * DENSE_COEFFS * n];
        if let Some(y) = state {
            for i in 0..n {
                let (c0, c1, c2, c3, c4) = (c[i], c[n + i], c[2 * n + i], c[3 * n + i], c[4 * n + i]);
                y[i] = c0 + th * (c1 + th1 * (c2 + th * (c3 + th1 * c4)));
            }
        }
        if let Some(dy) = deriv {
            let w2 = 1.0 - 2.0 * th;
            let w3 = th * (2.0 - 3.0 * th);
            let w4 = 2.0 * th * th1 * w2;
            for i in 0..n {
                let (c1, c2, c3, c4) = (c[n + i], c[2 * n + i], c[3 * n + i], c[4 * n + i]);
                dy[i] = (c1 + w2 * c2 + w3 * c3 + w4 * c4) / h;
            }
        }
    }
}
