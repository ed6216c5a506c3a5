//! The constants of the exclusion argument and their numerical estimation.

use super::RationalFamily;
use crate::error::{Error, Result};
use crate::orbit::expansion::{outside_expansion_estimate, SamplingPlan};
use crate::orbit::trace::NeighborhoodSystem;
use crate::scalar::C64;
use crate::sphere::orbit::iterate_raw;
use crate::sphere::{fibonacci_sphere, DerivLedger};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Sampling plan for the numerically estimated constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Probes {
    /// Fibonacci sphere points for Γ.
    pub grid_points: usize,
    /// Parameters in [−ε, ε] for Γ (evenly spaced, endpoints included).
    pub param_samples: usize,
    /// Critical-value orbit length for γ₀.
    pub gamma0_len: usize,
    /// Horizon n for the outside-expansion probe.
    pub outside_n: usize,
    pub outside_samples: usize,
    pub seed: u64,
}

impl Default for Probes {
    fn default() -> Self {
        Self { grid_points: 1_000_000, param_samples: 3, gamma0_len: 2000, outside_n: 20, outside_samples: 10_000, seed: 1 }
    }
}

/// User-chosen constants; everything else is estimated or derived.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantsInputs {
    pub tau: f64,
    pub delta: f64,
    pub delta_prime: f64,
    pub epsilon1: f64,
    /// Basic-assumption exponent; defaults to the largest admissible value.
    pub alpha: Option<f64>,
    /// Basic-assumption constant; defaults to δ³.
    pub kb: Option<f64>,
    /// Deletion at returns uses K_b e^{−factor·α·ν}.
    pub deletion_factor: f64,
    pub probes: Probes,
}

impl Default for ConstantsInputs {
    fn default() -> Self {
        Self {
            tau: 0.5,
            delta: (-3f64).exp(),
            delta_prime: (-2f64).exp(),
            epsilon1: 0.1,
            alpha: None,
            kb: None,
            deletion_factor: 2.0,
            probes: Probes::default(),
        }
    }
}

/// Estimated dynamical quantities the ledger is built from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Estimates {
    pub gamma0: f64,
    pub gamma_h: f64,
    pub big_gamma: f64,
    pub k: usize,
    pub c0: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConstantsLedger {
    pub alpha: f64,
    pub beta: f64,
    pub gamma0: f64,
    pub gamma_h: f64,
    pub tau: f64,
    pub big_gamma: f64,
    pub k: usize,
    pub kb: f64,
    pub c0: f64,
    pub delta: f64,
    pub delta_prime: f64,
    pub big_delta: f64,
    pub big_delta_prime: f64,
    pub epsilon1: f64,
    pub s_large: f64,
    pub gamma_b: f64,
    pub gamma_i: f64,
    pub gamma_c: f64,
    pub gamma_l: f64,
    pub h: f64,
    pub theta: f64,
    pub alpha_hat: f64,
    pub q_blind: f64,
    pub epsilon2: f64,
    pub deletion_factor: f64,
    pub lambda_hat: Option<f64>,
    pub c_prime: Option<f64>,
}

const REL_TOL: f64 = 1e-12;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= REL_TOL * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

impl ConstantsLedger {
    /// min(γ₀, γ_H)(1 − τ)/(400 K Γ).
    pub fn alpha_bound(est: &Estimates, tau: f64) -> f64 {
        est.gamma0.min(est.gamma_h) * (1.0 - tau) / (400.0 * est.k as f64 * est.big_gamma)
    }

    pub fn from_estimates(est: Estimates, inputs: &ConstantsInputs) -> Result<Self> {
        let tau = inputs.tau;
        let base = est.gamma0.min(est.gamma_h);
        if !(base > 0.0) || !base.is_finite() {
            return Err(Error::NotCollectEckmann(format!(
                "family not numerically CE at base (gamma0 = {}, gammaH = {})",
                est.gamma0, est.gamma_h
            )));
        }
        let bound = Self::alpha_bound(&est, tau);
        let alpha = match inputs.alpha {
            Some(a) if a > bound * (1.0 + REL_TOL) => {
                return Err(Error::Constants(format!("alpha = {a} exceeds the admissible bound {bound}")))
            }
            Some(a) => a,
            None => bound,
        };
        let m = base * (1.0 - tau);
        let gamma_i = m / 3.0;
        let k = est.k as f64;
        let h = 4.0 * k * k / gamma_i;
        let theta = 1.0 / (6.0 * h);
        let ledger = Self {
            alpha,
            beta: alpha,
            gamma0: est.gamma0,
            gamma_h: est.gamma_h,
            tau,
            big_gamma: est.big_gamma,
            k: est.k,
            kb: inputs.kb.unwrap_or(inputs.delta.powi(3)),
            c0: est.c0,
            delta: inputs.delta,
            delta_prime: inputs.delta_prime,
            big_delta: -inputs.delta.ln(),
            big_delta_prime: -inputs.delta_prime.ln(),
            epsilon1: inputs.epsilon1,
            s_large: inputs.epsilon1 * inputs.delta,
            gamma_b: 0.75 * m,
            gamma_i,
            gamma_c: 0.25 * m,
            gamma_l: m / 6.0,
            h,
            theta,
            alpha_hat: 2.0 * k * alpha / gamma_i,
            q_blind: 2.0 * alpha,
            epsilon2: theta * tau / 2.0,
            deletion_factor: inputs.deletion_factor,
            lambda_hat: None,
            c_prime: None,
        };
        ledger.validate()?;
        Ok(ledger)
    }

    fn estimates(&self) -> Estimates {
        Estimates { gamma0: self.gamma0, gamma_h: self.gamma_h, big_gamma: self.big_gamma, k: self.k, c0: self.c0 }
    }

    /// Re-check every invariant from the stored primary values.
    pub fn validate(&self) -> Result<()> {
        let fail = |what: &str| Err(Error::Constants(what.to_string()));
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return fail("tau must lie in (0, 1)");
        }
        if !(self.delta > 0.0 && self.delta < self.delta_prime && self.delta_prime < 1.0) {
            return fail("need 0 < delta < delta_prime < 1");
        }
        if !(self.epsilon1 > 0.0) || !close(self.s_large, self.epsilon1 * self.delta) {
            return fail("S must equal epsilon1 * delta with epsilon1 > 0");
        }
        if self.k < 2 || !(self.big_gamma > 0.0) || !(self.kb > 0.0) || !(self.c0 > 0.0) {
            return fail("K >= 2 and Gamma, K_b, C0 > 0 required");
        }
        if !(self.alpha > 0.0) || self.alpha > Self::alpha_bound(&self.estimates(), self.tau) * (1.0 + REL_TOL) {
            return fail("alpha outside (0, min(gamma0, gammaH)(1 - tau)/(400 K Gamma)]");
        }
        if self.beta != self.alpha {
            return fail("beta must equal alpha");
        }
        let m = self.gamma0.min(self.gamma_h) * (1.0 - self.tau);
        let k = self.k as f64;
        let checks = [
            ("gamma_B", self.gamma_b, 0.75 * m),
            ("gamma_I", self.gamma_i, m / 3.0),
            ("gamma_C", self.gamma_c, 0.25 * m),
            ("gamma_L", self.gamma_l, m / 6.0),
            ("h", self.h, 4.0 * k * k / self.gamma_i),
            ("theta", self.theta, 1.0 / (6.0 * self.h)),
            ("alpha_hat", self.alpha_hat, 2.0 * k * self.alpha / self.gamma_i),
            ("q_blind", self.q_blind, 2.0 * self.alpha),
            ("epsilon2", self.epsilon2, self.theta * self.tau / 2.0),
            ("Delta", self.big_delta, -self.delta.ln()),
            ("Delta'", self.big_delta_prime, -self.delta_prime.ln()),
        ];
        for (name, got, want) in checks {
            if !close(got, want) {
                return Err(Error::Constants(format!("{name} = {got} but the formula gives {want}")));
            }
        }
        if !(self.gamma_i < self.gamma_b / 2.0) {
            return fail("gamma_I < gamma_B / 2 violated");
        }
        if !(self.deletion_factor > 0.0) {
            return fail("deletion factor must be positive");
        }
        Ok(())
    }
}

/// Least-squares slope of ledger[k] against k over k in [n/2, n].
pub fn back_half_slope(ledger: &DerivLedger) -> f64 {
    let n = ledger.steps();
    let ks: Vec<usize> = (n / 2..=n).collect();
    let m = ks.len() as f64;
    let mx = ks.iter().map(|&k| k as f64).sum::<f64>() / m;
    let my = ks.iter().map(|&k| ledger.get(k)).sum::<f64>() / m;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for &k in &ks {
        let dx = k as f64 - mx;
        sxy += dx * (ledger.get(k) - my);
        sxx += dx * dx;
    }
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

/// Γ = 1.1 · max log f_a♯ over a Fibonacci grid and sampled parameters.
pub fn estimate_big_gamma(fam: &RationalFamily, probes: &Probes) -> Result<f64> {
    let grid = fibonacci_sphere(probes.grid_points.max(1));
    let eps = fam.epsilon();
    let params: Vec<f64> = match probes.param_samples {
        0 | 1 => vec![0.0],
        n => (0..n).map(|i| -eps + 2.0 * eps * i as f64 / (n - 1) as f64).collect(),
    };
    let mut best = f64::NEG_INFINITY;
    for a in params {
        let f = fam.map_at::<C64>(&a, 53)?;
        let m = grid.par_iter().map(|p| f.log_spherical_derivative(p)).reduce(|| f64::NEG_INFINITY, f64::max);
        best = best.max(m);
    }
    Ok(1.1 * best)
}

/// γ₀ and C₀ from the critical-value orbits of the tracked critical points at a = 0.
pub fn estimate_gamma0(fam: &RationalFamily, len: usize) -> Result<(f64, f64)> {
    let tracked = fam.tracked();
    if tracked.is_empty() {
        return Err(Error::NotCollectEckmann("no critical point with a tracked orbit".into()));
    }
    let f = fam.base_map::<C64>(53);
    let mut ledgers = Vec::new();
    for l in tracked {
        let v = f.evaluate(&fam.paths()[l].base)?;
        let (_, ledger) = iterate_raw(&f, &v, len)?;
        if ledger.values().iter().any(|x| !x.is_finite()) {
            return Err(Error::NotCollectEckmann(format!("critical value orbit of {l} meets Crit")));
        }
        ledgers.push(ledger);
    }
    let gamma0 = ledgers.iter().map(back_half_slope).fold(f64::INFINITY, f64::min);
    let c0 = ledgers
        .iter()
        .flat_map(|l| l.values().iter().enumerate().map(|(k, v)| (v - gamma0 * k as f64).exp()).collect::<Vec<_>>())
        .fold(f64::INFINITY, f64::min);
    Ok((gamma0, c0))
}

/// Estimate Γ, γ₀, C₀, γ_H and assemble a validated ledger.
pub fn derive_constants(fam: &RationalFamily, inputs: &ConstantsInputs) -> Result<ConstantsLedger> {
    let probes = &inputs.probes;
    if probes.grid_points == 0 || probes.outside_samples == 0 || probes.gamma0_len < 2 {
        return Err(Error::Constants("probes must be non-empty".into()));
    }
    let nbhd = NeighborhoodSystem::new(inputs.delta, inputs.delta_prime).map_err(|e| Error::Constants(e.to_string()))?;
    let (gamma0, c0) = estimate_gamma0(fam, probes.gamma0_len)?;
    let big_gamma = estimate_big_gamma(fam, probes)?;
    let f = fam.base_map::<C64>(53);
    let crit: Vec<_> = fam.paths().iter().map(|p| p.base.clone()).collect();
    let plan = SamplingPlan::Random { count: probes.outside_samples, seed: probes.seed };
    let outside = outside_expansion_estimate(&f, &crit, &nbhd, probes.outside_n, &plan)?;
    let est = Estimates { gamma0, gamma_h: outside.lambda_hat.ln(), big_gamma, k: fam.max_local_degree(), c0 };
    let mut ledger = ConstantsLedger::from_estimates(est, inputs)?;
    ledger.lambda_hat = Some(outside.lambda_hat);
    ledger.c_prime = outside.c_prime;
    Ok(ledger)
}
