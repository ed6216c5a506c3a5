//! Orbit traces annotated with distances to the critical set, and returns.

use super::bound::{bound_period_pointwise, BoundPeriod};
use crate::error::{Error, Result};
use crate::family::RationalFamily;
use crate::scalar::{Scalar, C64};
use crate::sphere::{chordal_distance, iterate_orbit, DerivLedger, RationalMap, SpherePoint};
use serde::Serialize;

/// Closed chordal balls U′ ⊃ U ⊃ U² around the critical points.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NeighborhoodSystem {
    pub delta: f64,
    pub delta_prime: f64,
}

impl NeighborhoodSystem {
    pub fn new(delta: f64, delta_prime: f64) -> Result<Self> {
        if !(delta > 0.0 && delta < delta_prime && delta_prime < 1.0) {
            return Err(Error::Invariant(format!("need 0 < delta < delta_prime < 1, got {delta}, {delta_prime}")));
        }
        Ok(Self { delta, delta_prime })
    }

    pub fn delta_sq(&self) -> f64 {
        self.delta * self.delta
    }

    pub fn in_u(&self, d: f64) -> bool {
        d <= self.delta
    }

    pub fn in_u_prime(&self, d: f64) -> bool {
        d <= self.delta_prime
    }

    pub fn in_u2(&self, d: f64) -> bool {
        d <= self.delta_sq()
    }

    /// Components of U′ are disjoint when centers are more than 2δ′ apart.
    pub fn check_disjoint<S: Scalar>(&self, centers: &[SpherePoint<S>]) -> Result<()> {
        for i in 0..centers.len() {
            for j in (i + 1)..centers.len() {
                let d = chordal_distance(&centers[i], &centers[j]);
                if d <= 2.0 * self.delta_prime {
                    return Err(Error::Invariant(format!("components {i} and {j} of U' overlap (distance {d:e})")));
                }
            }
        }
        Ok(())
    }
}

/// r with dist ∈ [e^{−r−1/2}, e^{−r+1/2}).
pub fn depth_of(dist: f64) -> i64 {
    let d = dist.max(f64::MIN_POSITIVE);
    (-d.ln() - 0.5).ceil() as i64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReturnKind {
    Essential,
    Inessential,
    Pseudo,
    /// Entry into U′ during a bound period; kept for diagnostics only.
    BoundReturn,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DepthClass {
    Deep,
    Shallow,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReturnEvent {
    pub time: usize,
    pub component: usize,
    pub distance: f64,
    pub depth: i64,
    pub kind: ReturnKind,
    pub depth_class: DepthClass,
    pub bound_period: usize,
    pub free_period: usize,
    /// Bound period cut short by the certified horizon.
    pub truncated: bool,
}

impl ReturnEvent {
    pub fn is_free(&self) -> bool {
        self.kind != ReturnKind::BoundReturn
    }

    pub fn is_into_u(&self) -> bool {
        matches!(self.kind, ReturnKind::Essential | ReturnKind::Inessential)
    }
}

/// An orbit with per-point distances to Crit_a and a derivative ledger.
#[derive(Clone, Debug, Serialize)]
pub struct OrbitTrace {
    pub param: f64,
    pub critical_index: Option<usize>,
    #[serde(skip)]
    pub points: Vec<SpherePoint<C64>>,
    /// ledger[k] = log|Df^k(points[ledger_origin])|.
    pub ledger: DerivLedger,
    pub ledger_origin: usize,
    pub crit_dist: Vec<f64>,
    pub nearest: Vec<usize>,
    /// Local degrees of Crit_a, by critical index.
    pub local_degrees: Vec<usize>,
    pub returns: Vec<ReturnEvent>,
    pub certified_horizon: usize,
}

impl OrbitTrace {
    /// Annotate an orbit computed at working precision.
    pub fn from_orbit<S: Scalar>(
        f: &RationalMap<S>,
        points: &[SpherePoint<S>],
        crit: &[(SpherePoint<S>, usize)],
        ledger_origin: usize,
        certified_horizon: usize,
        param: f64,
        critical_index: Option<usize>,
    ) -> Self {
        let mut steps = Vec::with_capacity(points.len());
        let mut crit_dist = Vec::with_capacity(points.len());
        let mut nearest = Vec::with_capacity(points.len());
        for (k, p) in points.iter().enumerate() {
            if k >= ledger_origin {
                steps.push(f.log_spherical_derivative(p));
            }
            let (i, d) = nearest_critical(p, crit);
            crit_dist.push(d);
            nearest.push(i);
        }
        Self {
            param,
            critical_index,
            points: points.iter().map(|p| p.to_f64_point()).collect(),
            ledger: DerivLedger::from_steps(&steps),
            ledger_origin,
            crit_dist,
            nearest,
            local_degrees: crit.iter().map(|c| c.1).collect(),
            returns: Vec::new(),
            certified_horizon: certified_horizon.min(points.len().saturating_sub(1)),
        }
    }

    /// Trace of an arbitrary point under f, ledger from the point itself.
    pub fn plain<S: Scalar>(f: &RationalMap<S>, p: &SpherePoint<S>, n: usize) -> Result<Self> {
        let crit: Vec<_> = crate::sphere::critical_points(f)?.into_iter().map(|c| (c.point, c.local_degree)).collect();
        let frag = iterate_orbit(f, p, n)?;
        Ok(Self::from_orbit(f, &frag.points, &crit, 0, frag.certified_horizon, 0.0, None))
    }

    /// Synthetic trace from distances and a cumulative ledger (tests, audits).
    pub fn synthetic(crit_dist: Vec<f64>, ledger: DerivLedger) -> Self {
        let n = crit_dist.len();
        Self {
            param: 0.0,
            critical_index: None,
            points: vec![SpherePoint::infinity(53); n],
            ledger,
            ledger_origin: 0,
            nearest: vec![0; n],
            crit_dist,
            local_degrees: vec![2],
            returns: Vec::new(),
            certified_horizon: n.saturating_sub(1),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Ledger steps backed by certified points.
    pub fn usable_steps(&self) -> usize {
        (self.certified_horizon + 1).saturating_sub(self.ledger_origin).min(self.ledger.steps())
    }

    /// log|Df^p(points[t])| from the ledger.
    pub fn log_derivative_from(&self, t: usize, p: usize) -> f64 {
        let a = t - self.ledger_origin;
        self.ledger.segment(a, a + p)
    }
}

pub(crate) fn nearest_critical<S: Scalar>(p: &SpherePoint<S>, crit: &[(SpherePoint<S>, usize)]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, (c, _)) in crit.iter().enumerate() {
        let d = chordal_distance(p, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// Trace of ξ_{k,l}(a) for k = 0..=n; the ledger starts at v_l(a) = ξ_1.
pub fn critical_trace<S: Scalar>(fam: &RationalFamily, l: usize, a: &S::Real, n: usize, prec: u32) -> Result<OrbitTrace> {
    let af = S::real_to_f64(a);
    let f = fam.map_at::<S>(a, prec)?;
    let crit = fam.critical_set_at(af, &f)?;
    let c = crit.get(l).ok_or(Error::CriticalIndex(l))?.0.clone();
    let frag = iterate_orbit(&f, &c, n)?;
    Ok(OrbitTrace::from_orbit(&f, &frag.points, &crit, 1, frag.certified_horizon, af, Some(l)))
}

/// Free returns into U and pseudo-returns into U′ \ U, from time 1 to the
/// certified horizon. Entries into U′ inside a bound period are kept with
/// kind BoundReturn. `partners[k]` is the trace of critical point k at the
/// same parameter. With `diameters` (curve diameters per time) a return
/// into U is essential iff diam ≥ ½·dist/(log dist)²; without, every return
/// into U is essential.
pub fn detect_returns(
    trace: &OrbitTrace,
    nbhd: &NeighborhoodSystem,
    beta: f64,
    partners: &[OrbitTrace],
    diameters: Option<&[f64]>,
) -> Result<Vec<ReturnEvent>> {
    let mut out: Vec<ReturnEvent> = Vec::new();
    let mut free_from = 1;
    for k in 1..=trace.certified_horizon {
        let d = trace.crit_dist[k];
        if !nbhd.in_u_prime(d) {
            continue;
        }
        let comp = trace.nearest[k];
        let depth = depth_of(d);
        let depth_class = if nbhd.in_u2(d) { DepthClass::Deep } else { DepthClass::Shallow };
        if k < free_from {
            out.push(ReturnEvent {
                time: k,
                component: comp,
                distance: d,
                depth,
                kind: ReturnKind::BoundReturn,
                depth_class,
                bound_period: 0,
                free_period: 0,
                truncated: false,
            });
            continue;
        }
        let kind = if !nbhd.in_u(d) {
            ReturnKind::Pseudo
        } else {
            match diameters {
                Some(diam) if diam[k] < 0.5 * d / d.ln().powi(2) => ReturnKind::Inessential,
                _ => ReturnKind::Essential,
            }
        };
        let partner = partners.get(comp).ok_or(Error::CriticalIndex(comp))?;
        let BoundPeriod { p, truncated } = bound_period_pointwise(trace, k, partner, beta)?;
        out.push(ReturnEvent {
            time: k,
            component: comp,
            distance: d,
            depth,
            kind,
            depth_class,
            bound_period: p,
            free_period: 0,
            truncated,
        });
        free_from = k + p + 1;
    }
    fill_free_periods(&mut out, trace.certified_horizon);
    Ok(out)
}

/// Free period of each free return: times strictly between the end of its
/// bound period and the next free return (or past the horizon).
pub(crate) fn fill_free_periods(events: &mut [ReturnEvent], horizon: usize) {
    let free: Vec<usize> = (0..events.len()).filter(|&i| events[i].is_free()).collect();
    for (j, &i) in free.iter().enumerate() {
        let end = free.get(j + 1).map_or(horizon + 1, |&n| events[n].time);
        let start = events[i].time + events[i].bound_period + 1;
        events[i].free_period = end.saturating_sub(start);
    }
}
