use super::OdeError;

/// Step-size and horizon controls for [`integrate`](super::integrate).
#[derive(Debug, Clone, PartialEq)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Upper bound on any accepted step.
    pub max_step: Option<f64>,
    /// First trial step; estimated from the field when absent.
    pub initial_step: Option<f64>,
    pub t_end: f64,
    pub max_steps: usize,
    /// Times the stepper must land on exactly, in addition to the horizon.
    pub forced_times: Vec<f64>,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-9,
            abs_tol: 1e-11,
            max_step: None,
            initial_step: None,
            t_end: 1.0,
            max_steps: 5_000_000,
            forced_times: Vec::new(),
        }
    }
}

impl IntegratorConfig {
    pub fn new(t_end: f64) -> Self {
        Self {
            t_end,
            ..Self::default()
        }
    }

    pub fn with_tolerances(mut self, rel_tol: f64, abs_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self.abs_tol = abs_tol;
        self
    }

    pub fn with_max_step(mut self, max_step: f64) -> Self {
        self.max_step = Some(max_step);
        self
    }

    /// Caps `max_step` at `cap`, keeping any tighter existing limit.
    pub fn cap_max_step(mut self, cap: f64) -> Self {
        self.max_step = Some(self.max_step.map_or(cap, |m| m.min(cap)));
        self
    }

    pub fn with_forced_times(mut self, times: Vec<f64>) -> Self {
        self.forced_times = times;
        self
    }

    pub fn validate(&self) -> Result<(), OdeError> {
        let bad = |what: &str| Err(OdeError::InvalidConfig(what.to_string()));
        if !(self.rel_tol > 0.0) {
            return bad("rel_tol must be positive");
        }
        if !(self.abs_tol > 0.0) {
            return bad("abs_tol must be positive");
        }
        if !(self.t_end > 0.0) || !self.t_end.is_finite() {
            return bad("t_end must be positive and finite");
        }
        if self.max_steps == 0 {
            return bad("max_steps must be positive");
        }
        if let Some(m) = self.max_step {
            if !(m > 0.0) {
                return bad("max_step must be positive");
            }
        }
        if let Some(h) = self.initial_step {
            if !(h > 0.0) {
                return bad("initial_step must be positive");
            }
        }
        Ok(())
    }
}
