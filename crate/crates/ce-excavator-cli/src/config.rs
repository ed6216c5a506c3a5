//! Run configuration: JSON text, strict fields, diagnostics by line and field.

use ce_excavator::exclusion::ExclusionConfig;
use ce_excavator::family::{ConstantsInputs, Direction, Probes, RationalFamily};
use ce_excavator::scalar::C64;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyName {
    Lattes2,
    Quadratic,
    Custom,
}

/// A builtin family, or coefficient lists `[[re, im], ...]` in ascending
/// powers. `direction` overrides the perturbation u (default u ≡ 1).
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySpec {
    pub name: FamilyName,
    #[serde(default)]
    pub numerator: Option<Vec<C64>>,
    #[serde(default)]
    pub denominator: Option<Vec<C64>>,
    #[serde(default)]
    pub direction: Option<Direction>,
    #[serde(default = "default_collision_floor")]
    pub collision_floor: f64,
}

fn default_collision_floor() -> f64 {
    1e-3
}

impl Default for FamilySpec {
    fn default() -> Self {
        Self { name: FamilyName::Lattes2, numerator: None, denominator: None, direction: None, collision_floor: 1e-3 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    pub engine: u64,
    pub probes: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self { engine: 1, probes: 1 }
    }
}

/// Probe sizes for the estimated constants (seed lives in `seeds`).
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeSizes {
    pub grid_points: usize,
    pub param_samples: usize,
    pub gamma0_len: usize,
    pub outside_n: usize,
    pub outside_samples: usize,
}

impl Default for ProbeSizes {
    fn default() -> Self {
        let p = Probes::default();
        Self {
            grid_points: p.grid_points,
            param_samples: p.param_samples,
            gamma0_len: p.gamma0_len,
            outside_n: p.outside_n,
            outside_samples: p.outside_samples,
        }
    }
}

/// File names inside the output directory.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Outputs {
    pub orbit: String,
    pub report: String,
    pub intervals: String,
    pub verify: String,
    pub constants: String,
}

impl Default for Outputs {
    fn default() -> Self {
        Self {
            orbit: "orbit.json".into(),
            report: "report.json".into(),
            intervals: "intervals.csv".into(),
            verify: "verify.json".into(),
            constants: "constants.json".into(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub family: FamilySpec,
    pub epsilon: f64,
    pub delta: f64,
    pub delta_prime: f64,
    pub epsilon1: f64,
    pub alpha: Option<f64>,
    pub kb: Option<f64>,
    pub deletion_factor: f64,
    pub tau: f64,
    pub precision_bits: u32,
    pub max_time: usize,
    pub windows: usize,
    pub window_start: Option<usize>,
    pub element_budget: usize,
    pub weak_distortion_samples: usize,
    /// Largest R in the history-count suite of `verify`.
    pub history_max_r: u32,
    pub seeds: Seeds,
    pub probes: ProbeSizes,
    pub outputs: Outputs,
}

impl Default for RunConfig {
    fn default() -> Self {
        let k = ConstantsInputs::default();
        let e = ExclusionConfig::default();
        Self {
            family: FamilySpec::default(),
            epsilon: 1e-6,
            delta: k.delta,
            delta_prime: k.delta_prime,
            epsilon1: k.epsilon1,
            alpha: None,
            kb: None,
            deletion_factor: k.deletion_factor,
            tau: k.tau,
            precision_bits: e.precision_bits,
            max_time: e.max_time,
            windows: e.windows,
            window_start: e.window_start,
            element_budget: e.element_budget,
            weak_distortion_samples: e.weak_distortion_samples,
            history_max_r: 15,
            seeds: Seeds::default(),
            probes: ProbeSizes::default(),
            outputs: Outputs::default(),
        }
    }
}

fn field(name: &str, msg: impl Into<String>) -> CliError {
    CliError::Config { field: Some(name.to_string()), line: None, message: msg.into() }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| {
            let full = e.to_string();
            let suffix = format!(" at line {} column {}", e.line(), e.column());
            let message = full.strip_suffix(&suffix).unwrap_or(&full).to_string();
            CliError::Config { field: None, line: Some((e.line(), e.column())), message }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config {
            field: None,
            line: None,
            message: format!("cannot read {}: {e}", path.display()),
        })?;
        Self::parse(&text)
    }

    /// Checks that need no derivation; the constants ledger re-validates
    /// the rest.
    pub fn validate(&self) -> Result<(), CliError> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(field("epsilon", "must be positive"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(field("delta", "must lie in (0, 1)"));
        }
        if !(self.delta_prime > self.delta) {
            return Err(field("delta_prime", format!("must exceed delta ({} <= {})", self.delta_prime, self.delta)));
        }
        if !(self.delta_prime < 1.0) {
            return Err(field("delta_prime", "must be below 1"));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(field("tau", "must lie in (0, 1)"));
        }
        if !(self.epsilon1 > 0.0) {
            return Err(field("epsilon1", "must be positive"));
        }
        if let Some(a) = self.alpha {
            if !(a > 0.0) {
                return Err(field("alpha", "must be positive"));
            }
        }
        if let Some(kb) = self.kb {
            if !(kb > 0.0) {
                return Err(field("kb", "must be positive"));
            }
        }
        if !(self.deletion_factor > 0.0) {
            return Err(field("deletion_factor", "must be positive"));
        }
        if self.precision_bits < 64 {
            return Err(field("precision_bits", "must be at least 64"));
        }
        if self.max_time == 0 {
            return Err(field("max_time", "must be positive"));
        }
        if self.element_budget == 0 {
            return Err(field("element_budget", "must be positive"));
        }
        if self.history_max_r > 30 {
            return Err(field("history_max_r", "at most 30"));
        }
        match self.family.name {
            FamilyName::Custom => {
                if self.family.numerator.is_none() {
                    return Err(field("family.numerator", "required for a custom family"));
                }
                if self.family.denominator.is_none() {
                    return Err(field("family.denominator", "required for a custom family"));
                }
            }
            _ => {
                if self.family.numerator.is_some() || self.family.denominator.is_some() {
                    return Err(field("family.numerator", "coefficients only apply to a custom family"));
                }
            }
        }
        Ok(())
    }

    pub fn build_family(&self) -> Result<RationalFamily, CliError> {
        let c = |x: f64| C64::new(x, 0.0);
        let (name, num, den) = match self.family.name {
            FamilyName::Lattes2 => ("lattes2", vec![c(-2.0), c(0.0), c(1.0)], vec![c(0.0), c(0.0), c(1.0)]),
            FamilyName::Quadratic => ("quadratic", vec![c(-2.0), c(0.0), c(1.0)], vec![c(1.0)]),
            FamilyName::Custom => (
                "custom",
                self.family.numerator.clone().unwrap_or_default(),
                self.family.denominator.clone().unwrap_or_default(),
            ),
        };
        let dir = self.family.direction.clone().unwrap_or_else(|| Direction::constant(1.0));
        RationalFamily::new(name, num, den, dir, self.epsilon, self.family.collision_floor)
            .map_err(|e| field("family", e.to_string()))
    }

    pub fn constants_inputs(&self) -> ConstantsInputs {
        let p = &self.probes;
        ConstantsInputs {
            tau: self.tau,
            delta: self.delta,
            delta_prime: self.delta_prime,
            epsilon1: self.epsilon1,
            alpha: self.alpha,
            kb: self.kb,
            deletion_factor: self.deletion_factor,
            probes: Probes {
                grid_points: p.grid_points,
                param_samples: p.param_samples,
                gamma0_len: p.gamma0_len,
                outside_n: p.outside_n,
                outside_samples: p.outside_samples,
                seed: self.seeds.probes,
            },
        }
    }

    pub fn exclusion_config(&self) -> ExclusionConfig {
        ExclusionConfig {
            precision_bits: self.precision_bits,
            max_time: self.max_time,
            windows: self.windows,
            window_start: self.window_start,
            element_budget: self.element_budget,
            seed: self.seeds.engine,
            weak_distortion_samples: self.weak_distortion_samples,
        }
    }
}
