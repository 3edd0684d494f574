use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::speed_bound_for_start;
use crate::dynamics::{length_lemma_constants, LengthLemmaConstants, SpeedBound};
use crate::example_xy::{envelope_constants, epsilon_threshold, EnvelopeSet, ExampleError, ExampleInit};
use crate::objectives::{lipschitz_bound_on_box, objective_by_name, BoxRegion};
use crate::ode::IntegratorConfig;

/// Stiffness range the integrator is tuned for.
pub const EPSILON_RANGE: (f64, f64) = (1e-4, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Figure1,
    EpsilonSweep,
    Claims,
    Diagnostics,
    Custom,
}

impl Preset {
    pub const ALL: [Preset; 5] = [
        Preset::Figure1,
        Preset::EpsilonSweep,
        Preset::Claims,
        Preset::Diagnostics,
        Preset::Custom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Figure1 => "figure1",
            Preset::EpsilonSweep => "epsilon-sweep",
            Preset::Claims => "claims",
            Preset::Diagnostics => "diagnostics",
            Preset::Custom => "custom",
        }
    }

    fn default_horizon(self) -> f64 {
        match self {
            Preset::EpsilonSweep => 200.0,
            Preset::Claims => 5.0,
            Preset::Figure1 | Preset::Diagnostics | Preset::Custom => 50.0,
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| ConfigError::single("preset", format!("unknown preset `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("{}", .0.iter().map(|e| e.message.as_str()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<FieldError>),
}

impl ConfigError {
    fn single(field: &str, message: String) -> Self {
        ConfigError::Invalid(vec![FieldError {
            field: field.into(),
            message,
        }])
    }

    pub fn fields(&self) -> Vec<FieldError> {
        match self {
            ConfigError::Parse(m) => vec![FieldError {
                field: String::new(),
                message: m.clone(),
            }],
            ConfigError::Invalid(v) => v.clone(),
        }
    }
}

/// Partial settings, as read from a config file or the command line.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigOverrides {
    pub a: Option<f64>,
    pub abs_tol: Option<f64>,
    pub b: Option<f64>,
    pub box_half_width: Option<f64>,
    pub claims_tol: Option<f64>,
    pub epsilon: Option<f64>,
    pub epsilons: Option<Vec<f64>>,
    pub gamma: Option<f64>,
    pub horizon: Option<f64>,
    pub objective: Option<String>,
    pub out: Option<String>,
    pub preset: Option<Preset>,
    pub rel_tol: Option<f64>,
    pub samples: Option<usize>,
    pub seed: Option<u32>,
    pub sigma_directions: Option<usize>,
    pub sigma_radius: Option<f64>,
    pub sigma_starts: Option<usize>,
    pub tail_split: Option<f64>,
}

impl ConfigOverrides {
    /// Parses the flat `key = value` config format.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.message().to_string()))
    }
}

/// Fully resolved experiment settings. Keys are declared in sorted order,
/// which makes the serialized form canonical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Initial position `(a, −a)`.
    pub a: f64,
    pub abs_tol: f64,
    /// Initial velocity `(b, b)`.
    pub b: f64,
    /// Half width of the box `[−w, w]^n` for Lipschitz constants and suprema.
    pub box_half_width: f64,
    pub claims_tol: f64,
    pub epsilon: f64,
    /// Sweep ladder, strictly decreasing.
    pub epsilons: Vec<f64>,
    pub gamma: f64,
    pub horizon: f64,
    pub objective: String,
    pub out: String,
    pub preset: Preset,
    pub rel_tol: f64,
    /// Rows per trajectory CSV.
    pub samples: usize,
    /// Seed for sampled estimates.
    pub seed: u32,
    pub sigma_directions: usize,
    pub sigma_radius: f64,
    pub sigma_starts: usize,
    /// Start of the window whose length must be negligible.
    pub tail_split: f64,
}

/// Environment variable that overrides the configured output directory.
pub const OUT_ENV: &str = "HEAVYBALL_OUT";

impl ExperimentConfig {
    pub fn defaults(preset: Preset) -> Self {
        let horizon = preset.default_horizon();
        Self {
            a: 1.0,
            abs_tol: 1e-12,
            b: 0.1,
            box_half_width: 2.0,
            claims_tol: 1e-6,
            epsilon: 0.01,
            epsilons: vec![0.1, 0.03, 0.01, 0.003, 0.001],
            gamma: 0.5,
            horizon,
            objective: "xy".into(),
            out: "out".into(),
            preset,
            rel_tol: 1e-10,
            samples: 2000,
            seed: 0,
            sigma_directions: 8,
            sigma_radius: 0.1,
            sigma_starts: 8,
            tail_split: horizon / 2.0,
        }
    }

    /// Layers preset defaults, the config file, the output-directory
    /// environment override and command-line flags, later layers winning.
    pub fn resolve(file: &ConfigOverrides, env_out: Option<String>, flags: &ConfigOverrides) -> Self {
        let preset = flags.preset.or(file.preset).unwrap_or(Preset::Figure1);
        let mut cfg = Self::defaults(preset);
        let mut tail_given = false;
        for layer in [file, flags] {
            tail_given |= layer.tail_split.is_some();
            cfg.apply(layer);
        }
        if let Some(out) = env_out.filter(|s| !s.is_empty()) {
            if flags.out.is_none() {
                cfg.out = out;
            }
        }
        if !tail_given {
            cfg.tail_split = cfg.horizon / 2.0;
        }
        cfg
    }

    fn apply(&mut self, o: &ConfigOverrides) {
        macro_rules! take {
            ($($f:ident),*) => { $( if let Some(v) = &o.$f { self.$f = v.clone(); } )* };
        }
        take!(
            a,
            abs_tol,
            b,
            box_half_width,
            claims_tol,
            epsilon,
            epsilons,
            gamma,
            horizon,
            objective,
            out,
            preset,
            rel_tol,
            samples,
            seed,
            sigma_directions,
            sigma_radius,
            sigma_starts,
            tail_split
        );
    }

    /// Parses a complete config file without flags or environment.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let o = ConfigOverrides::parse(text)?;
        let cfg = Self::resolve(&o, None, &ConfigOverrides::default());
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_canonical(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn integrator(&self) -> IntegratorConfig {
        IntegratorConfig::new(self.horizon).with_tolerances(self.rel_tol, self.abs_tol)
    }

    pub fn region(&self) -> BoxRegion {
        BoxRegion::cube(2, self.box_half_width).expect("validated width")
    }

    pub fn example_init(&self) -> ExampleInit {
        ExampleInit {
            a: self.a,
            b: self.b,
            gamma: self.gamma,
            epsilon: self.epsilon,
        }
    }

    /// Collects every field-level problem rather than stopping at the first.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut errs = Vec::new();
        let mut bad = |field: &str, message: String| {
            errs.push(FieldError {
                field: field.into(),
                message,
            })
        };
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if !pos(self.gamma) {
            bad("gamma", "gamma must be positive".into());
        }
        if !pos(self.a) {
            bad("a", "a must be positive".into());
        }
        if !(self.b >= 0.0 && self.b.is_finite()) {
            bad("b", "b must be nonnegative".into());
        }
        let (lo, hi) = EPSILON_RANGE;
        let in_range = |e: f64| (lo..=hi).contains(&e);
        if !in_range(self.epsilon) {
            bad("epsilon", format!("epsilon must lie in [{lo}, {hi}]"));
        }
        if self.epsilons.is_empty() {
            bad("epsilons", "epsilons must not be empty".into());
        } else if !self.epsilons.iter().all(|&e| in_range(e)) {
            bad("epsilons", format!("every epsilon must lie in [{lo}, {hi}]"));
        } else if !self.epsilons.windows(2).all(|w| w[1] < w[0]) {
            bad("epsilons", "epsilons must be strictly decreasing".into());
        }
        if !pos(self.horizon) {
            bad("horizon", "horizon must be positive".into());
        } else if !(self.tail_split >= 0.0 && self.tail_split <= self.horizon) {
            bad("tail_split", "tail_split must lie in [0, horizon]".into());
        }
        if !pos(self.rel_tol) || !pos(self.abs_tol) {
            bad("rel_tol", "tolerances must be positive".into());
        }
        if !pos(self.claims_tol) {
            bad("claims_tol", "claims_tol must be positive".into());
        }
        if !pos(self.box_half_width) {
            bad("box_half_width", "box_half_width must be positive".into());
        }
        if self.samples < 2 {
            bad("samples", "samples must be at least 2".into());
        }
        if self.sigma_starts == 0 || self.sigma_directions == 0 {
            bad("sigma_starts", "sigma grid sizes must be positive".into());
        }
        if !(self.sigma_radius >= 0.0 && self.sigma_radius.is_finite()) {
            bad("sigma_radius", "sigma_radius must be nonnegative".into());
        }
        if self.out.is_empty() {
            bad("out", "output directory must not be empty".into());
        }
        match objective_by_name(&self.objective) {
            Err(e) => bad("objective", e.to_string()),
            Ok(o) if o.dim() != 2 => bad("objective", "objective must be planar".into()),
            Ok(_) => {}
        }
        let example_preset = matches!(self.preset, Preset::Figure1 | Preset::Claims | Preset::EpsilonSweep);
        if example_preset && self.objective != "xy" {
            bad("objective", format!("preset {} runs the xy objective", self.preset));
        }
        if self.preset == Preset::Claims && pos(self.gamma) && pos(self.a) {
            if !(self.b > 0.0) {
                bad("b", "b must be positive".into());
            }
            if let Err(e @ ExampleError::EpsilonTooLarge { .. }) = envelope_constants(&self.example_init()) {
                bad("epsilon", e.to_string());
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(errs))
        }
    }

    /// Constants implied by the configuration, echoed so runs are auditable.
    pub fn derived(&self) -> Result<DerivedConstants, ConfigError> {
        self.validate()?;
        let obj = objective_by_name(&self.objective).expect("validated objective");
        let region = self.region();
        let lipschitz = lipschitz_bound_on_box(obj.as_ref(), &region, self.epsilon, u64::from(self.seed));
        let lemma = length_lemma_constants(self.gamma, self.epsilon, lipschitz)
            .map_err(|e| ConfigError::single("gamma", e.to_string()))?;
        let init = self.example_init();
        let r0 = (2.0f64).sqrt() * self.b;
        let speed = speed_bound_for_start(obj.as_ref(), &region, self.gamma, self.epsilon, lipschitz, r0)
            .map_err(|e| ConfigError::single("gamma", e.to_string()))?;
        let f0 = obj.value(&init.x0());
        let inf = obj.known_inf().unwrap_or(0.0);
        Ok(DerivedConstants {
            epsilon_threshold: epsilon_threshold(self.a, self.gamma),
            envelopes: envelope_constants(&init).ok(),
            lipschitz,
            region,
            lemma_constants: lemma,
            speed_bound: speed,
            l2_rhs: (f0 - inf + self.epsilon * r0 * r0 / 2.0) / self.gamma,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedConstants {
    /// `γ²/(8a² + 8)`.
    pub epsilon_threshold: f64,
    /// Present only when `ε` is below the threshold.
    pub envelopes: Option<EnvelopeSet>,
    pub lipschitz: f64,
    pub region: BoxRegion,
    pub lemma_constants: LengthLemmaConstants,
    pub speed_bound: SpeedBound,
    pub l2_rhs: f64,
}
