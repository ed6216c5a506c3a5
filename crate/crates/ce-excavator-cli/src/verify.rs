//! Pass/fail summary over an exclusion report and the history-count suite.

use ce_excavator::exclusion::{enumerate_histories, history_count, CheckTally, ExclusionReport};
use num_bigint::BigUint;
use serde::Serialize;

/// Pass-rate floor for slack-factor checks.
pub const SOFT_THRESHOLD: f64 = 0.95;
/// Relative tolerance of the measure balance.
pub const BALANCE_TOL: f64 = 1e-12;

#[derive(Clone, Debug, Serialize)]
pub struct VerifyCheck {
    pub name: String,
    /// Hard checks must pass every item; soft ones need the threshold.
    pub hard: bool,
    pub total: usize,
    pub passed: usize,
    pub pass_rate: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl VerifyCheck {
    fn new(name: &str, hard: bool, total: usize, passed: usize) -> Self {
        let pass_rate = if total == 0 { 1.0 } else { passed as f64 / total as f64 };
        let threshold = if hard { 1.0 } else { SOFT_THRESHOLD };
        Self { name: name.into(), hard, total, passed, pass_rate, threshold, pass: pass_rate >= threshold }
    }

    fn from_tally<T>(name: &str, hard: bool, t: &CheckTally<T>) -> Self {
        Self::new(name, hard, t.total, t.passed)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct HistoryMismatch {
    pub r_total: u32,
    pub s: u32,
    pub delta: u32,
    pub what: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct HistorySuite {
    pub max_r: u32,
    pub deltas: Vec<u32>,
    pub cases: usize,
    pub mismatches: Vec<HistoryMismatch>,
    pub pass: bool,
}

/// DP count against exhaustive enumeration, and both against the bounds,
/// for every R ≤ max_r, s ≤ R and Δ in `deltas`. The s = 0 case is only
/// compared at R = 0, where enumeration and the empty-history convention
/// agree.
pub fn history_suite(max_r: u32, deltas: &[u32]) -> HistorySuite {
    let mut cases = 0;
    let mut mismatches = Vec::new();
    for &delta in deltas {
        let table = enumerate_histories(max_r, delta);
        for r in 0..=max_r {
            for s in 0..=r {
                if s == 0 && r > 0 {
                    continue;
                }
                cases += 1;
                let h = history_count(r, s, delta);
                let (count, weighted) = table[r as usize][s as usize];
                let mut bad = |what: &str| mismatches.push(HistoryMismatch { r_total: r, s, delta, what: what.into() });
                if h.exact != BigUint::from(count) {
                    bad("exact != enumeration");
                }
                if h.weighted != BigUint::from(weighted) {
                    bad("weighted != enumeration");
                }
                if h.exact > h.binomial {
                    bad("exact > binomial");
                }
                if h.weighted > h.weighted_bound {
                    bad("weighted > bound");
                }
            }
        }
    }
    let pass = mismatches.is_empty();
    HistorySuite { max_r, deltas: deltas.to_vec(), cases, mismatches, pass }
}

#[derive(Clone, Debug, Serialize)]
pub struct DistortionLine {
    pub window: usize,
    pub distortion_max: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifySummary {
    pub family: String,
    pub epsilon: f64,
    pub checks: Vec<VerifyCheck>,
    pub history: HistorySuite,
    pub weak_distortion_q: Vec<Option<f64>>,
    pub distortion: Vec<DistortionLine>,
    pub retained_fraction: f64,
    pub failed: Vec<String>,
    pub pass: bool,
}

fn bound_checks(out: &mut Vec<VerifyCheck>, name: &str, lines: Vec<bool>) {
    let passed = lines.iter().filter(|&&p| p).count();
    out.push(VerifyCheck::new(name, true, lines.len(), passed));
}

/// Hard: basic-assumption measure, large deviation, blind and star bounds,
/// measure balance, history counts. Soft: doubling, bound expansion, q-time.
pub fn verify_summary(report: &ExclusionReport, history: HistorySuite) -> VerifySummary {
    let mut checks = Vec::new();
    checks.push(VerifyCheck::from_tally("basic_assumption", true, &report.basic_assumption));
    let ws = &report.windows;
    bound_checks(&mut checks, "large_deviation", ws.iter().flat_map(|w| w.large_deviation.iter().map(|b| b.pass)).collect());
    bound_checks(&mut checks, "blind", ws.iter().flat_map(|w| w.blind.iter().map(|b| b.pass)).collect());
    bound_checks(&mut checks, "star", ws.iter().flat_map(|w| w.star.iter().map(|b| b.pass)).collect());
    bound_checks(
        &mut checks,
        "balance",
        ws.iter().flat_map(|w| w.measures.iter().map(|m| m.balance_residual <= BALANCE_TOL)).collect(),
    );
    let mut doubling = CheckTally::default();
    let mut bound_expansion = CheckTally::default();
    let mut q_time = CheckTally::default();
    for w in ws {
        doubling.merge(w.doubling.clone());
        bound_expansion.merge(w.bound_expansion.clone());
        q_time.merge(w.q_time.clone());
    }
    checks.push(VerifyCheck::from_tally("doubling", false, &doubling));
    checks.push(VerifyCheck::from_tally("bound_expansion", false, &bound_expansion));
    checks.push(VerifyCheck::from_tally("q_time", false, &q_time));
    checks.push(VerifyCheck::new("history_count", true, history.cases, history.cases - history.mismatches.len().min(history.cases)));

    let failed: Vec<String> = checks.iter().filter(|c| !c.pass).map(|c| c.name.clone()).collect();
    VerifySummary {
        family: report.family.clone(),
        epsilon: report.epsilon,
        pass: failed.is_empty(),
        checks,
        history,
        weak_distortion_q: report.start.iter().map(|s| s.weak_distortion_q).collect(),
        distortion: ws.iter().map(|w| DistortionLine { window: w.index, distortion_max: w.distortion_max }).collect(),
        retained_fraction: report.retained_fraction,
        failed,
    }
}
