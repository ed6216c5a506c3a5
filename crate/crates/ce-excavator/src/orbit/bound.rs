//! Bound periods: how long an orbit shadows an early critical orbit.

use super::trace::{OrbitTrace, ReturnEvent};
use crate::error::{Error, Result};
use crate::scalar::{Scalar, C64};
use crate::sphere::orbit::iterate_raw;
use crate::sphere::{chordal_distance, Chart, RationalMap, SpherePoint};
use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct BoundPeriod {
    pub p: usize,
    /// The data ran out before the inequality failed.
    pub truncated: bool,
}

/// Largest p with sep[j] ≤ e^{−βj}·dist[j] for every 1 ≤ j ≤ p, where
/// `sep[j − 1]` and `dist[j − 1]` hold the values at j.
pub fn bound_period_from_series(sep: &[f64], dist: &[f64], beta: f64) -> BoundPeriod {
    let n = sep.len().min(dist.len());
    for j in 1..=n {
        if sep[j - 1] > (-beta * j as f64).exp() * dist[j - 1] {
            return BoundPeriod { p: j - 1, truncated: false };
        }
    }
    BoundPeriod { p: n, truncated: true }
}

/// Pointwise bound period of the return at time ν against the orbit of the
/// critical point it returned to.
pub fn bound_period_pointwise(trace: &OrbitTrace, nu: usize, partner: &OrbitTrace, beta: f64) -> Result<BoundPeriod> {
    let avail = trace.certified_horizon.saturating_sub(nu);
    for j in 1..=avail {
        if j > partner.certified_horizon {
            return Err(Error::PartnerTooShort { needed: avail, available: partner.certified_horizon });
        }
        let sep = chordal_distance(&trace.points[nu + j], &partner.points[j]);
        if sep > (-beta * j as f64).exp() * partner.crit_dist[j] {
            return Ok(BoundPeriod { p: j - 1, truncated: false });
        }
    }
    Ok(BoundPeriod { p: avail, truncated: true })
}

/// Interval bound period: the minimum of the pointwise criterion over
/// sampled curve orbits (index j is time ν + j) and partner orbits.
pub fn bound_period_interval(curve: &[Vec<SpherePoint<C64>>], partners: &[&OrbitTrace], beta: f64) -> Result<BoundPeriod> {
    let mut best: Option<BoundPeriod> = None;
    for orbit in curve {
        for partner in partners {
            let avail = orbit.len().saturating_sub(1);
            let mut res = BoundPeriod { p: avail, truncated: true };
            for j in 1..=avail {
                if j > partner.certified_horizon {
                    return Err(Error::PartnerTooShort { needed: avail, available: partner.certified_horizon });
                }
                let sep = chordal_distance(&orbit[j], &partner.points[j]);
                if sep > (-beta * j as f64).exp() * partner.crit_dist[j] {
                    res = BoundPeriod { p: j - 1, truncated: false };
                    break;
                }
            }
            best = Some(match best {
                Some(b) if b.p < res.p || (b.p == res.p && !b.truncated) => b,
                _ => res,
            });
        }
    }
    best.ok_or_else(|| Error::Invariant("empty curve sample".into()))
}

/// Orbits of `samples` points on the host segment of length e^{−r}/r²
/// through `center` along `direction` (chart coordinates), middle third removed.
pub fn host_curve_orbits<S: Scalar>(
    f: &RationalMap<S>,
    center: &SpherePoint<S>,
    direction: C64,
    r: f64,
    samples: usize,
    len: usize,
) -> Result<Vec<Vec<SpherePoint<C64>>>> {
    let chart = center.chart();
    let x0 = center.coordinate(chart).expect("chart of the point");
    let prec = center.prec();
    let half = 0.5 * (-r).exp() / (r * r);
    let u = if direction.norm() > 0.0 { direction / direction.norm() } else { C64::new(1.0, 0.0) };
    let mut out = Vec::with_capacity(samples);
    for i in 0..samples {
        // t in [1/3, 1] on alternating sides
        let frac = 1.0 / 3.0 + (2.0 / 3.0) * (i / 2) as f64 / ((samples / 2).max(1)) as f64;
        let t = if i % 2 == 0 { frac } else { -frac } * half;
        let x = x0.add(&S::from_c64(prec, u * t));
        let p = match chart {
            Chart::Affine => SpherePoint::finite(x),
            Chart::Inverse => SpherePoint::new(S::one(prec), x)?,
        };
        let (pts, _) = iterate_raw(f, &p, len)?;
        out.push(pts.iter().map(|q| q.to_f64_point()).collect());
    }
    Ok(out)
}

pub const BOUND_SLACK: f64 = 2.0;

/// Outcome of the bound-period expansion check at one return.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundExpansionCheck {
    pub time: usize,
    pub depth: i64,
    pub bound_period: usize,
    pub local_degree: usize,
    /// log|Df^p(ξ_ν)|.
    pub log_growth: f64,
    pub lower_length: bool,
    pub upper_length: bool,
    pub growth: bool,
    /// p ≤ 2α d ν/γ, informational.
    pub within_time_bound: bool,
}

impl BoundExpansionCheck {
    pub fn all_pass(&self) -> bool {
        self.lower_length && self.upper_length && self.growth
    }
}

/// d r/(2Γ) ≤ p ≤ 2 d r/γ and |Df^p(ξ_ν)| ≥ e^{γp/(2d)}, each with slack 2.
pub fn check_bound_expansion(trace: &OrbitTrace, event: &ReturnEvent, gamma: f64, big_gamma: f64, alpha: f64) -> BoundExpansionCheck {
    let d = trace.local_degrees.get(event.component).copied().unwrap_or(2);
    let p = event.bound_period;
    let log_growth = if p == 0 { 0.0 } else { trace.log_derivative_from(event.time, p) };
    bound_expansion_from(event, d, log_growth, gamma, big_gamma, alpha)
}

pub(crate) fn bound_expansion_from(
    event: &ReturnEvent,
    d: usize,
    log_growth: f64,
    gamma: f64,
    big_gamma: f64,
    alpha: f64,
) -> BoundExpansionCheck {
    let df = d as f64;
    let r = event.depth as f64;
    let pf = event.bound_period as f64;
    BoundExpansionCheck {
        time: event.time,
        depth: event.depth,
        bound_period: event.bound_period,
        local_degree: d,
        log_growth,
        lower_length: pf >= df * r / (2.0 * big_gamma) / BOUND_SLACK,
        upper_length: pf <= BOUND_SLACK * 2.0 * df * r / gamma,
        growth: log_growth >= gamma * pf / (2.0 * df) - BOUND_SLACK.ln(),
        within_time_bound: pf <= 2.0 * alpha * df * event.time as f64 / gamma,
    }
}
