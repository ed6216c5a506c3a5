//! Report entries emitted by the exclusion engine.

use crate::family::ConstantsLedger;
use crate::orbit::BoundExpansionCheck;
use serde::Serialize;
use std::collections::BTreeMap;

/// Pass count of a check, with every failure itemized.
#[derive(Clone, Debug, Serialize)]
pub struct CheckTally<T> {
    pub total: usize,
    pub passed: usize,
    pub violations: Vec<T>,
}

impl<T> Default for CheckTally<T> {
    fn default() -> Self {
        Self { total: 0, passed: 0, violations: Vec::new() }
    }
}

impl<T> CheckTally<T> {
    pub fn record(&mut self, pass: bool, item: T) {
        self.total += 1;
        if pass {
            self.passed += 1;
        } else {
            self.violations.push(item);
        }
    }

    /// 1 when nothing was checked.
    pub fn pass_rate(&self) -> f64 {
        if self.total == 0 {
            1.0
        } else {
            self.passed as f64 / self.total as f64
        }
    }

    pub fn all_pass(&self) -> bool {
        self.passed == self.total
    }

    pub fn merge(&mut self, other: CheckTally<T>) {
        self.total += other.total;
        self.passed += other.passed;
        self.violations.extend(other.violations);
    }
}

/// Endpoint separation between consecutive free returns.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DoublingCheck {
    pub l: usize,
    pub element: u64,
    pub from_time: usize,
    pub to_time: usize,
    pub ratio: f64,
}

/// E ≤ slack·h·r at a deep essential return.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QTimeCheck {
    pub l: usize,
    pub time: usize,
    pub depth: i64,
    pub escape_time: usize,
    pub bound: f64,
}

/// Share of the elements making an essential return at `time` lost to the
/// basic assumption by their next essential return. Pooled over the
/// elements of one return time, since each stands for unsampled siblings.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BaAnchorAudit {
    pub l: usize,
    pub time: usize,
    pub elements: usize,
    pub measure: f64,
    pub deleted: f64,
    pub fraction: f64,
    pub bound: f64,
}

/// A deleted fraction against its bound.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundCheck {
    pub l: usize,
    pub fraction: f64,
    pub bound: f64,
    pub pass: bool,
}

impl BoundCheck {
    pub fn new(l: usize, fraction: f64, bound: f64) -> Self {
        Self { l, fraction, bound, pass: fraction <= bound }
    }
}

/// Measure flow of one critical point through a window.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct MeasureLine {
    pub l: usize,
    pub input: f64,
    pub retained: f64,
    pub deleted_basic: f64,
    pub deleted_large_deviation: f64,
    pub deleted_blind: f64,
    pub deleted_star: f64,
    pub deleted_exponent: f64,
    pub deleted_precision: f64,
    /// |input − retained − deletions| / input.
    pub balance_residual: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StartTrigger {
    LargeScale,
    EssentialReturn,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StartEntry {
    pub l: usize,
    pub n_l: usize,
    pub trigger: StartTrigger,
    /// Surrogate diameter of ξ_{N_l}(ω₀).
    pub diameter: f64,
    /// |ξ′_{N_l}(0)|·|ω₀| converted to chordal length.
    pub tangent_diameter: f64,
    pub elements: usize,
    /// Inessential returns into U before N_l.
    pub early_returns: usize,
    /// Smallest Q with every sampled ratio in [Q^{−k}, Q^k].
    pub weak_distortion_q: Option<f64>,
    pub weak_distortion_samples: usize,
    /// Steps run between N_l and the first window.
    pub lead_in_steps: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct WindowReport {
    pub index: usize,
    pub n: usize,
    pub end: usize,
    pub measures: Vec<MeasureLine>,
    /// Retained measure of ∩_l Ω_l over |ω₀| after the window.
    pub retained_fraction: f64,
    /// β with retained = (1 − e^{−βn})·input, per l; None when nothing was lost.
    pub achieved_beta: Vec<Option<f64>>,
    /// Free returns into U by depth r.
    pub return_histogram: BTreeMap<i64, usize>,
    /// Free returns into components of untracked critical points.
    pub untracked_returns: usize,
    pub distortion_max: f64,
    pub doubling: CheckTally<DoublingCheck>,
    pub bound_expansion: CheckTally<BoundExpansionCheck>,
    pub q_time: CheckTally<QTimeCheck>,
    /// Anchors at essential returns inside this window, deletions so far.
    pub basic_assumption: CheckTally<BaAnchorAudit>,
    pub large_deviation: Vec<BoundCheck>,
    pub blind: Vec<BoundCheck>,
    pub star: Vec<BoundCheck>,
    pub escape_cap_bindings: usize,
    pub exponent_min_at_returns: Option<f64>,
    /// γ_I − 4Kα.
    pub exponent_floor: f64,
    pub exponent_floor_violations: usize,
    pub restoration_failures: usize,
    pub certification_failures: usize,
    pub subsampled_splits: usize,
    pub dropped_children: usize,
    pub active_elements: usize,
}

impl WindowReport {
    pub fn balanced(&self, tol: f64) -> bool {
        self.measures.iter().all(|m| m.balance_residual <= tol)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ExclusionReport {
    pub family: String,
    pub epsilon: f64,
    pub precision_bits: u32,
    pub element_budget: usize,
    pub seed: u64,
    pub constants: ConstantsLedger,
    pub start: Vec<StartEntry>,
    pub windows: Vec<WindowReport>,
    /// Every essential-return anchor of the run.
    pub basic_assumption: CheckTally<BaAnchorAudit>,
    pub retained_fraction: f64,
    /// Windows stopped early because 2n passed max_time.
    pub horizon_reached: bool,
}
