use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Experiment selected by a configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Normality,
    Sweep,
    Concentration,
    Entropy,
    Quantifier,
    Recurrence,
    Equilibrium,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Normality => "normality",
            Self::Sweep => "sweep",
            Self::Concentration => "concentration",
            Self::Entropy => "entropy",
            Self::Quantifier => "quantifier",
            Self::Recurrence => "recurrence",
            Self::Equilibrium => "equilibrium",
        }
    }

    fn needs_dims(&self) -> bool {
        matches!(self, Self::Normality | Self::Sweep | Self::Concentration | Self::Entropy | Self::Quantifier)
    }
}

/// Initial wave function `ψ₀`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialState {
    /// Uniform on the unit sphere.
    Random,
    /// The energy eigenvector `φ_index`.
    Eigenstate(usize),
    /// Column `index` of the decomposition's block basis.
    BlockState(usize),
}

/// Pass/fail thresholds of the acceptance checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    /// Fraction of decompositions that must be normal for every tested state.
    pub sweep_pass_fraction: f64,
    /// Lower bound on `⟨ψ|P_eq|ψ⟩` for thermal equilibrium.
    pub equilibrium: f64,
    /// Fraction of times a state must spend in equilibrium.
    pub residence_fraction: f64,
    /// Fraction of times the entropy must sit above `θ k log D`.
    pub entropy_near_max_fraction: f64,
    /// Relative slack between the mean entropy and its prediction; defaults
    /// to `log(1000 n) / log D`.
    pub entropy_relative_slack: Option<f64>,
    /// Upper bound on the decomposition-averaged squared deviation.
    pub quantifier_msd: f64,
    /// Upper bound on the best recurrence deviation.
    pub recurrence_deviation: f64,
    /// Relative tolerance between empirical and exact sphere variance.
    pub variance_relative: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            sweep_pass_fraction: 0.95,
            equilibrium: 0.9,
            residence_fraction: 0.9,
            entropy_near_max_fraction: 0.9,
            entropy_relative_slack: None,
            quantifier_msd: 0.02,
            recurrence_deviation: 0.5,
            variance_relative: 0.05,
        }
    }
}

fn default_epsilon() -> f64 {
    0.2
}
fn default_delta() -> f64 {
    0.1
}
fn default_c1() -> f64 {
    10.0
}
fn default_theta() -> f64 {
    0.9
}
fn default_k() -> f64 {
    1.0
}
fn default_samples() -> usize {
    1000
}
fn default_trials() -> usize {
    100
}
fn default_random_states() -> usize {
    20
}
fn default_adversarial_states() -> usize {
    10
}
fn default_true() -> bool {
    true
}
fn default_window() -> [f64; 2] {
    [0.0, 1.0]
}
fn default_resonance_tolerance() -> f64 {
    1e-14
}
fn default_retries() -> usize {
    10
}
fn default_initial_state() -> InitialState {
    InitialState::Random
}

/// A single JSON experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub master_seed: u64,
    /// Macro-space dimensions `d_ν`.
    #[serde(default)]
    pub dims: Vec<usize>,
    /// Shell dimension `D`; must equal `Σ d_ν` when both are given.
    #[serde(default)]
    pub dim: Option<usize>,
    #[serde(default)]
    pub eq_fraction: Option<f64>,
    #[serde(default)]
    pub n_small: Option<usize>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_delta")]
    pub delta_prime: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_c1")]
    pub c1: f64,
    #[serde(default = "default_theta")]
    pub theta: f64,
    /// Boltzmann constant.
    #[serde(default = "default_k")]
    pub k: f64,
    #[serde(default)]
    pub thresholds: Thresholds,
    /// Averaging horizon `T`; defaults to `100 / (min level spacing)`.
    #[serde(default)]
    pub horizon: Option<f64>,
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Decompositions, sphere samples or measurement repetitions.
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_random_states")]
    pub random_states: usize,
    #[serde(default = "default_adversarial_states")]
    pub adversarial_states: usize,
    /// Include every block-basis state in a sweep.
    #[serde(default = "default_true")]
    pub block_states: bool,
    #[serde(default = "default_initial_state")]
    pub initial_state: InitialState,
    /// Explicit eigenvalues; sampled uniformly from `energy_window` otherwise.
    #[serde(default)]
    pub spectrum: Option<Vec<f64>>,
    #[serde(default = "default_window")]
    pub energy_window: [f64; 2],
    #[serde(default = "default_resonance_tolerance")]
    pub resonance_tolerance: f64,
    #[serde(default = "default_retries")]
    pub max_retries: usize,
    /// Earliest time considered by a recurrence scan.
    #[serde(default)]
    pub t_min: Option<f64>,
    #[serde(default)]
    pub t_max: Option<f64>,
    #[serde(default)]
    pub step: Option<f64>,
    /// Further dimension lists whose `max_ν F_ν` medians are compared with
    /// the main one in a sweep.
    #[serde(default)]
    pub scaling_dims: Vec<Vec<usize>>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

/// One validation problem, located by a field path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigIssue {
    pub path: String,
    pub message: String,
}

impl std::fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config { path: "<document>".into(), message: e.to_string() })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Shell dimension implied by the configuration, if any.
    pub fn shell_dim(&self) -> Option<usize> {
        if let Some(spectrum) = &self.spectrum {
            return Some(spectrum.len());
        }
        if !self.dims.is_empty() {
            return Some(self.dims.iter().sum());
        }
        self.dim
    }

    /// Every problem found; empty when the configuration can be run.
    pub fn validate(&self) -> Vec<ConfigIssue> {
        let mut issues = Vec::new();
        let mut bad = |path: &str, message: String| issues.push(ConfigIssue { path: path.into(), message });

        if self.kind.needs_dims() && self.dims.is_empty() {
            bad("dims", "must list at least one macro-space dimension".into());
        }
        if let Some(i) = self.dims.iter().position(|&d| d == 0) {
            bad(&format!("dims[{i}]"), "must be >= 1".into());
        }
        let total: usize = self.dims.iter().sum();
        if let Some(dim) = self.dim {
            if dim == 0 {
                bad("dim", "must be >= 1".into());
            }
            if !self.dims.is_empty() && dim != total {
                bad("dims", format!("sum to {total}, but dim is {dim}"));
            }
        }
        if let Some(spectrum) = &self.spectrum {
            if spectrum.is_empty() {
                bad("spectrum", "must contain at least one eigenvalue".into());
            }
            if let Some(i) = spectrum.iter().position(|e| !e.is_finite()) {
                bad(&format!("spectrum[{i}]"), "must be finite".into());
            }
            if !self.dims.is_empty() && spectrum.len() != total {
                bad("spectrum", format!("has {} levels, but dims sum to {total}", spectrum.len()));
            }
        }

        for (path, value) in [("epsilon", self.epsilon), ("delta_prime", self.delta_prime), ("theta", self.theta)] {
            if !(value > 0.0 && value < 1.0) {
                bad(path, format!("must lie in (0, 1), got {value}"));
            }
        }
        for (path, value) in [("delta", self.delta), ("c1", self.c1), ("k", self.k)] {
            if !(value > 0.0 && value.is_finite()) {
                bad(path, format!("must be positive, got {value}"));
            }
        }
        if !(self.resonance_tolerance >= 0.0) {
            bad("resonance_tolerance", format!("must be >= 0, got {}", self.resonance_tolerance));
        }
        let [lo, hi] = self.energy_window;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            bad("energy_window", format!("must satisfy lo < hi, got [{lo}, {hi}]"));
        }
        if let Some(h) = self.horizon {
            if !(h > 0.0 && h.is_finite()) {
                bad("horizon", format!("must be positive, got {h}"));
            }
        }
        if self.samples == 0 {
            bad("samples", "must be >= 1".into());
        }

        let t = &self.thresholds;
        for (path, value) in [
            ("thresholds.sweep_pass_fraction", t.sweep_pass_fraction),
            ("thresholds.equilibrium", t.equilibrium),
            ("thresholds.residence_fraction", t.residence_fraction),
            ("thresholds.entropy_near_max_fraction", t.entropy_near_max_fraction),
        ] {
            if !(0.0..=1.0).contains(&value) {
                bad(path, format!("must lie in [0, 1], got {value}"));
            }
        }
        for (path, value) in [
            ("thresholds.quantifier_msd", t.quantifier_msd),
            ("thresholds.recurrence_deviation", t.recurrence_deviation),
            ("thresholds.variance_relative", t.variance_relative),
            ("thresholds.entropy_relative_slack", t.entropy_relative_slack.unwrap_or(1.0)),
        ] {
            if !(value > 0.0) {
                bad(path, format!("must be positive, got {value}"));
            }
        }

        let state_dim = self.shell_dim();
        match (self.initial_state, state_dim) {
            (InitialState::Eigenstate(i) | InitialState::BlockState(i), Some(d)) if i >= d => {
                bad("initial_state", format!("index {i} out of range for D = {d}"));
            }
            _ => {}
        }

        match self.kind {
            ExperimentKind::Sweep => {
                if self.trials == 0 {
                    bad("trials", "must be >= 1".into());
                }
                for (i, dims) in self.scaling_dims.iter().enumerate() {
                    if dims.is_empty() || dims.contains(&0) {
                        bad(&format!("scaling_dims[{i}]"), "must be a non-empty list of positive dimensions".into());
                    }
                }
            }
            ExperimentKind::Concentration if self.trials < 100 => {
                bad("trials", format!("must be >= 100, got {}", self.trials));
            }
            ExperimentKind::Quantifier => {
                if self.trials < 10 {
                    bad("trials", format!("must be >= 10, got {}", self.trials));
                }
                if matches!(self.initial_state, InitialState::BlockState(_)) {
                    bad("initial_state", "must be `random` or an eigenstate".into());
                }
            }
            ExperimentKind::Recurrence => {
                if state_dim.is_none() {
                    bad("spectrum", "give explicit eigenvalues, dims or dim".into());
                }
                match (self.t_max, self.step) {
                    (Some(t_max), Some(step)) if step > 0.0 && t_max >= step && t_max.is_finite() => {}
                    (None, _) => bad("t_max", "is required".into()),
                    (_, None) => bad("step", "is required".into()),
                    _ => bad("step", "must satisfy 0 < step <= t_max".into()),
                }
                if let (Some(t_min), Some(t_max)) = (self.t_min, self.t_max) {
                    if !(t_min >= 0.0 && t_min <= t_max) {
                        bad("t_min", "must satisfy 0 <= t_min <= t_max".into());
                    }
                }
            }
            ExperimentKind::Equilibrium => {
                if state_dim.is_none() {
                    bad("dim", "is required".into());
                }
                match self.eq_fraction {
                    Some(f) if f > 0.0 && f < 1.0 => {}
                    Some(f) => bad("eq_fraction", format!("must lie in (0, 1), got {f}")),
                    None => bad("eq_fraction", "is required".into()),
                }
                if self.n_small.unwrap_or(0) == 0 {
                    bad("n_small", "must be >= 1".into());
                }
            }
            ExperimentKind::Entropy if self.trials == 0 => bad("trials", "must be >= 1".into()),
            _ => {}
        }
        issues
    }

    /// Validation folded into a single [`Error::Config`].
    pub fn ensure_valid(&self) -> Result<()> {
        let issues = self.validate();
        match issues.first() {
            None => Ok(()),
            Some(first) => Err(Error::Config {
                path: first.path.clone(),
                message: issues
                    .iter()
                    .enumerate()
                    .map(|(i, issue)| if i == 0 { issue.message.clone() } else { issue.to_string() })
                    .collect::<Vec<_>>()
                    .join("; "),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal(kind: &str) -> ExperimentConfig {
        ExperimentConfig::from_json(&format!(r#"{{"kind":"{kind}","master_seed":1,"dims":[2,2]}}"#)).unwrap()
    }

    #[test]
    fn empty_dims_rejected() {
        let c = ExperimentConfig::from_json(r#"{"kind":"normality","master_seed":1}"#).unwrap();
        let issues = c.validate();
        assert_eq!(issues[0].path, "dims");
    }

    #[test]
    fn dims_must_sum_to_dim() {
        let mut c = minimal("normality");
        c.dim = Some(5);
        let issues = c.validate();
        assert_eq!(issues.len(), 1);
        assert_eq!(issues[0].path, "dims");
        assert!(matches!(c.ensure_valid(), Err(Error::Config { path, .. }) if path == "dims"));
    }

    #[test]
    fn round_trip() {
        let mut c = minimal("sweep");
        c.scaling_dims = vec![vec![1, 1]];
        c.initial_state = InitialState::BlockState(3);
        c.thresholds.entropy_relative_slack = Some(0.5);
        c.output_dir = Some("results".into());
        let back = ExperimentConfig::from_json(&c.to_json().unwrap()).unwrap();
        assert_eq!(back, c);
        assert!(c.validate().is_empty());
    }

    #[test]
    fn unknown_fields_and_missing_seed_rejected() {
        assert!(ExperimentConfig::from_json(r#"{"kind":"sweep","master_seed":1,"dimz":[1]}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"kind":"sweep","dims":[1]}"#).is_err());
    }

    #[test]
    fn kind_specific_requirements() {
        let mut c = minimal("concentration");
        c.trials = 50;
        assert_eq!(c.validate()[0].path, "trials");
        let r = ExperimentConfig::from_json(r#"{"kind":"recurrence","master_seed":1,"spectrum":[0,1]}"#).unwrap();
        assert_eq!(r.validate()[0].path, "t_max");
        let e = ExperimentConfig::from_json(r#"{"kind":"equilibrium","master_seed":1,"dim":100}"#).unwrap();
        let paths: Vec<_> = e.validate().into_iter().map(|i| i.path).collect();
        assert_eq!(paths, vec!["eq_fraction", "n_small"]);
        let mut q = minimal("quantifier");
        q.initial_state = InitialState::BlockState(0);
        assert_eq!(q.validate()[0].path, "initial_state");
        let mut n = minimal("normality");
        n.epsilon = 1.5;
        assert_eq!(n.validate()[0].path, "epsilon");
    }
}
