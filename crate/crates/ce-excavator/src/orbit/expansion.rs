//! Basic assumption, finite-horizon Lyapunov exponents and expansion away
//! from the critical set.

use super::trace::{NeighborhoodSystem, OrbitTrace};
use crate::error::{Error, Result};
use crate::scalar::C64;
use crate::sphere::{chordal_distance, fibonacci_sphere, random_sphere, DerivLedger, RationalMap, SpherePoint};
use rayon::prelude::*;
use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct BasicAssumption {
    pub pass: bool,
    pub first_violation: Option<usize>,
}

/// dist_k ≥ K_b e^{−factor·α·k} for 1 ≤ k ≤ n, where `dists[k]` is the
/// distance at time k. Time 0 is the critical point itself and is skipped.
pub fn basic_assumption_series(dists: &[f64], kb: f64, alpha: f64, factor: f64, n: usize) -> BasicAssumption {
    let last = n.min(dists.len().saturating_sub(1));
    for (k, d) in dists.iter().enumerate().take(last + 1).skip(1) {
        if *d < kb * (-factor * alpha * k as f64).exp() {
            return BasicAssumption { pass: false, first_violation: Some(k) };
        }
    }
    BasicAssumption { pass: true, first_violation: None }
}

/// Basic assumption along a trace up to time n (capped at the horizon).
pub fn basic_assumption_check(trace: &OrbitTrace, kb: f64, alpha: f64, factor: f64, n: usize) -> BasicAssumption {
    basic_assumption_series(&trace.crit_dist, kb, alpha, factor, n.min(trace.certified_horizon))
}

/// (min, max) of ledger[k]/k over k in [K/2, K] for the first K steps.
pub fn lyapunov_from_ledger(ledger: &DerivLedger, steps: usize) -> (f64, f64) {
    let k_max = steps.min(ledger.steps());
    if k_max == 0 {
        return (0.0, 0.0);
    }
    let k_min = (k_max / 2).max(1);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for k in k_min..=k_max {
        let v = ledger.get(k) / k as f64;
        lo = lo.min(v);
        hi = hi.max(v);
    }
    (lo, hi)
}

/// Finite-horizon surrogates for the lower and upper Lyapunov exponents.
pub fn lyapunov_estimates(trace: &OrbitTrace) -> (f64, f64) {
    lyapunov_from_ledger(&trace.ledger, trace.usable_steps())
}

/// Which points seed the outside-expansion probe.
#[derive(Clone, Debug)]
pub enum SamplingPlan {
    Random { count: usize, seed: u64 },
    Fibonacci { count: usize },
    Points(Vec<SpherePoint<C64>>),
}

impl SamplingPlan {
    pub fn points(&self) -> Vec<SpherePoint<C64>> {
        match self {
            SamplingPlan::Random { count, seed } => random_sphere(*count, *seed),
            SamplingPlan::Fibonacci { count } => fibonacci_sphere(*count),
            SamplingPlan::Points(p) => p.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OutsideExpansion {
    pub lambda_hat: f64,
    /// min |Df^m(z)|/λ̂^m over segments z ∈ U, f^m z ∈ U, avoiding U between, m ≤ n.
    pub c_prime: Option<f64>,
    pub samples_used: usize,
    pub segments: usize,
}

struct Probe {
    in_u: Vec<bool>,
    log_sharp: Vec<f64>,
}

/// λ̂ = min over sampled z whose first n iterates avoid U of |Df^n(z)|^{1/n}.
pub fn outside_expansion_estimate(
    f: &RationalMap<C64>,
    crit: &[SpherePoint<C64>],
    nbhd: &NeighborhoodSystem,
    n: usize,
    plan: &SamplingPlan,
) -> Result<OutsideExpansion> {
    if n == 0 {
        return Err(Error::NoOutsideSamples { n });
    }
    let in_u = |p: &SpherePoint<C64>| crit.iter().any(|c| nbhd.in_u(chordal_distance(p, c)));
    let steps = 4 * n;
    let probes: Vec<Probe> = plan
        .points()
        .par_iter()
        .map(|z| {
            let mut p = z.clone();
            let mut probe = Probe { in_u: Vec::with_capacity(steps), log_sharp: Vec::with_capacity(steps) };
            for _ in 0..steps {
                probe.in_u.push(in_u(&p));
                match f.step(&p) {
                    Ok((next, ls)) => {
                        probe.log_sharp.push(ls);
                        p = next;
                    }
                    Err(_) => break,
                }
            }
            probe
        })
        .collect();
    let mut lambda_log = f64::INFINITY;
    let mut used = 0;
    for pr in &probes {
        if pr.log_sharp.len() >= n && pr.in_u[..n].iter().all(|b| !b) {
            used += 1;
            let s: f64 = pr.log_sharp[..n].iter().sum();
            lambda_log = lambda_log.min(s / n as f64);
        }
    }
    if used == 0 {
        return Err(Error::NoOutsideSamples { n });
    }
    let mut c_log = f64::INFINITY;
    let mut segments = 0;
    for pr in &probes {
        let visits: Vec<usize> = (0..pr.in_u.len()).filter(|&i| pr.in_u[i]).collect();
        for w in visits.windows(2) {
            let (i, j) = (w[0], w[1]);
            if j - i <= n && j <= pr.log_sharp.len() {
                segments += 1;
                let s: f64 = pr.log_sharp[i..j].iter().sum();
                c_log = c_log.min(s - (j - i) as f64 * lambda_log);
            }
        }
    }
    Ok(OutsideExpansion {
        lambda_hat: lambda_log.exp(),
        c_prime: (segments > 0).then(|| c_log.exp()),
        samples_used: used,
        segments,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    #[test]
    fn basic_assumption_examples() {
        let alpha = 0.01;
        let synthetic: Vec<f64> = (0..20).map(|k| (-3.0 * alpha * k as f64).exp()).collect();
        assert_eq!(basic_assumption_series(&synthetic, 1.0, alpha, 2.0, 19).first_violation, Some(1));
        let exact: Vec<f64> = (0..20).map(|k| 0.5 * (-2.0 * alpha * k as f64).exp()).collect();
        assert!(basic_assumption_series(&exact, 0.5, alpha, 2.0, 19).pass);
        let bounded = vec![0.3; 50];
        assert!(basic_assumption_series(&bounded, 0.3, alpha, 2.0, 49).pass);
    }

    #[test]
    fn linear_ledger_gives_its_slope() {
        let l = DerivLedger::from_steps(&[0.75; 40]);
        assert_eq!(lyapunov_from_ledger(&l, 40), (0.75, 0.75));
    }

    #[test]
    fn circle_samples_expand_by_two() {
        let f = RationalMap::<C64>::from_c64(53, &[c(0.0), c(0.0), c(1.0)], &[c(1.0)]).unwrap();
        let crit = vec![SpherePoint::from_c64(53, c(0.0)), SpherePoint::infinity(53)];
        let nbhd = NeighborhoodSystem::new(0.1, 0.2).unwrap();
        let pts = (0..64).map(|k| SpherePoint::from_c64(53, C64::from_polar(1.0, 0.1 * k as f64))).collect();
        let est = outside_expansion_estimate(&f, &crit, &nbhd, 20, &SamplingPlan::Points(pts)).unwrap();
        assert!((est.lambda_hat - 2.0).abs() < 1e-12);
        assert_eq!(est.samples_used, 64);
    }

    #[test]
    fn all_samples_inside_is_an_error() {
        let f = RationalMap::<C64>::from_c64(53, &[c(0.0), c(0.0), c(1.0)], &[c(1.0)]).unwrap();
        let crit = vec![SpherePoint::from_c64(53, c(0.0))];
        let nbhd = NeighborhoodSystem::new(0.1, 0.2).unwrap();
        let plan = SamplingPlan::Points(vec![SpherePoint::from_c64(53, c(0.01))]);
        assert!(matches!(outside_expansion_estimate(&f, &crit, &nbhd, 5, &plan), Err(Error::NoOutsideSamples { .. })));
        assert!(outside_expansion_estimate(&f, &crit, &nbhd, 5, &SamplingPlan::Points(vec![])).is_err());
    }

    #[test]
    fn lattes_expands_outside_u() {
        let f = RationalMap::<C64>::from_c64(53, &[c(-2.0), c(0.0), c(1.0)], &[c(0.0), c(0.0), c(1.0)]).unwrap();
        let crit = vec![SpherePoint::from_c64(53, c(0.0)), SpherePoint::infinity(53)];
        let nbhd = NeighborhoodSystem::new(0.1, 0.2).unwrap();
        let est = outside_expansion_estimate(&f, &crit, &nbhd, 20, &SamplingPlan::Random { count: 10_000, seed: 1 }).unwrap();
        assert!(est.lambda_hat > 1.0, "{est:?}");
    }
}
