//! Partition elements and the three-sample curve surrogate of ξ_n(ω).

use super::interval::Interval;
use crate::error::{Error, Result};
use crate::family::RationalFamily;
use crate::orbit::{ReturnEvent, ReturnKind};
use crate::scalar::{BigComplex, C64};
use crate::sphere::{chordal_distance, point::chordal_from_origin, RationalMap, SpherePoint};
use rug::Float;
use serde::Serialize;
use std::fmt;
use std::sync::Arc;

/// Agreement required between working and doubled precision.
pub const CERT_TOL: f64 = 1e-6;

pub type CritSet = Arc<Vec<(SpherePoint<C64>, usize)>>;

/// One parameter's orbit sample at the curve's current time.
#[derive(Clone, Debug)]
pub(crate) struct Sample {
    pub param: Float,
    pub map: Arc<RationalMap<BigComplex>>,
    pub point: SpherePoint<BigComplex>,
    /// log|Df^{time−1}(ξ_1)|.
    pub ledger: f64,
    /// log f♯ of the last step.
    pub last_ls: f64,
}

impl Sample {
    /// ξ_time(a) from the critical point c_l(a). With `capture`, also the
    /// point at that time.
    pub(crate) fn compute(
        fam: &RationalFamily,
        l: usize,
        a: Float,
        time: usize,
        capture: Option<usize>,
    ) -> Result<(Self, Option<SpherePoint<BigComplex>>)> {
        let prec = a.prec();
        let map = fam.map_at::<BigComplex>(&a, prec)?;
        let mut point = fam.critical_point_at(l, a.to_f64(), &map)?;
        let mut ledger = 0.0;
        let mut last_ls = 0.0;
        let mut captured = None;
        for k in 0..time {
            if capture == Some(k) {
                captured = Some(point.clone());
            }
            let (next, ls) = map.step(&point)?;
            if k >= 1 {
                ledger += ls;
            }
            last_ls = ls;
            point = next;
        }
        if capture == Some(time) {
            captured = Some(point.clone());
        }
        Ok((Self { param: a, map: Arc::new(map), point, ledger, last_ls }, captured))
    }

    pub(crate) fn step(&mut self, time: usize) -> Result<()> {
        let (next, ls) = self.map.step(&self.point)?;
        if time >= 1 {
            self.ledger += ls;
        }
        self.last_ls = ls;
        self.point = next;
        Ok(())
    }
}

/// Where the curve sits relative to Crit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Geometry {
    /// Distance from the lo–mid–hi polyline to the nearest critical point.
    pub dist: f64,
    pub component: usize,
    /// Max pairwise chordal distance of the three samples.
    pub diam: f64,
    /// Chordal distance between the endpoint samples.
    pub sep: f64,
}

/// ξ_time over an element, surrogated by its endpoints and midpoint.
#[derive(Clone, Debug)]
pub(crate) struct Curve {
    pub time: usize,
    pub l: usize,
    pub samples: [Sample; 3],
    pub crit: CritSet,
}

impl Curve {
    /// Curve of `iv` at `time`, computed from scratch. The second value is
    /// the endpoint separation at `capture`, when requested.
    pub fn fresh(fam: &RationalFamily, l: usize, iv: &Interval, time: usize, capture: Option<usize>) -> Result<(Self, Option<f64>)> {
        let (lo, c0) = Sample::compute(fam, l, iv.lo.clone(), time, capture)?;
        let (mid, _) = Sample::compute(fam, l, iv.mid(), time, None)?;
        let (hi, c2) = Sample::compute(fam, l, iv.hi.clone(), time, capture)?;
        let crit = fam.critical_set_at(mid.param.to_f64(), &*mid.map)?;
        let crit: Vec<_> = crit.into_iter().map(|(p, d)| (p.to_f64_point(), d)).collect();
        let sep = match (c0, c2) {
            (Some(a), Some(b)) => Some(chordal_distance(&a, &b)),
            _ => None,
        };
        Ok((Self { time, l, samples: [lo, mid, hi], crit: Arc::new(crit) }, sep))
    }

    pub fn step(&mut self) -> Result<()> {
        for s in &mut self.samples {
            s.step(self.time)?;
        }
        self.time += 1;
        Ok(())
    }

    /// Halves [lo, mid] and [mid, hi]; each needs one new sample.
    pub fn bisect(&self, fam: &RationalFamily) -> Result<[(Interval, Curve); 2]> {
        let [lo, mid, hi] = &self.samples;
        let left = Interval::new(lo.param.clone(), mid.param.clone());
        let right = Interval::new(mid.param.clone(), hi.param.clone());
        let (q1, _) = Sample::compute(fam, self.l, left.mid(), self.time, None)?;
        let (q3, _) = Sample::compute(fam, self.l, right.mid(), self.time, None)?;
        let mk = |a: &Sample, b: Sample, c: &Sample| Curve {
            time: self.time,
            l: self.l,
            samples: [a.clone(), b, c.clone()],
            crit: self.crit.clone(),
        };
        Ok([(left, mk(lo, q1, mid)), (right, mk(mid, q3, hi))])
    }

    pub fn geometry(&self) -> Geometry {
        let pts: Vec<SpherePoint<C64>> = self.samples.iter().map(|s| s.point.to_f64_point()).collect();
        let mut best = (f64::INFINITY, 0);
        for (i, (c, _)) in self.crit.iter().enumerate() {
            let d = polyline_distance(&pts, c);
            if d < best.0 {
                best = (d, i);
            }
        }
        let p = |i: usize| &self.samples[i].point;
        let d01 = chordal_distance(p(0), p(1));
        let d12 = chordal_distance(p(1), p(2));
        let d02 = chordal_distance(p(0), p(2));
        Geometry { dist: best.0, component: best.1, diam: d01.max(d12).max(d02), sep: d02 }
    }

    /// min over samples of log|Df^{time−1}(v)|/(time − 1).
    pub fn exponent_lower(&self) -> Option<f64> {
        (self.time >= 2).then(|| {
            let n = (self.time - 1) as f64;
            self.samples.iter().map(|s| s.ledger / n).fold(f64::INFINITY, f64::min)
        })
    }

    /// |expm1| of the ledger gap between the endpoints.
    pub fn distortion(&self) -> f64 {
        (self.samples[0].ledger - self.samples[2].ledger).exp_m1().abs()
    }
}

/// Chordal distance from `c` to the polyline through `pts`, measured in the
/// chart where c sits at the origin.
fn polyline_distance(pts: &[SpherePoint<C64>], c: &SpherePoint<C64>) -> f64 {
    let xs: Vec<Option<C64>> = pts
        .iter()
        .map(|p| {
            let q = p.rotate_to_origin(c);
            q.to_c64().filter(|x| x.norm() < 1e8)
        })
        .collect();
    let mut best = pts.iter().map(|p| chordal_distance(p, c)).fold(f64::INFINITY, f64::min);
    for w in xs.windows(2) {
        if let (Some(a), Some(b)) = (w[0], w[1]) {
            let e = b - a;
            let ee = e.norm_sqr();
            let t = if ee > 0.0 { (-(a.conj() * e).re / ee).clamp(0.0, 1.0) } else { 0.0 };
            best = best.min(chordal_from_origin((a + e * t).norm()));
        }
    }
    best
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "reason")]
pub enum DeletionReason {
    BasicAssumption { time: usize },
    LargeDeviation,
    Exponent,
    Precision,
    Star,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Active,
    Escaped,
    Deleted(DeletionReason),
    BlindDeleted,
}

impl Status {
    pub fn is_live(&self) -> bool {
        matches!(self, Status::Active | Status::Escaped)
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Status::Active => write!(f, "active"),
            Status::Escaped => write!(f, "escaped"),
            Status::BlindDeleted => write!(f, "blind-deleted"),
            Status::Deleted(r) => match r {
                DeletionReason::BasicAssumption { time } => write!(f, "deleted(basic-assumption@{time})"),
                DeletionReason::LargeDeviation => write!(f, "deleted(large-deviation)"),
                DeletionReason::Exponent => write!(f, "deleted(exponent)"),
                DeletionReason::Precision => write!(f, "deleted(precision)"),
                DeletionReason::Star => write!(f, "deleted(star)"),
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EscapeTime {
    Open,
    Finite(usize),
    /// A descendant broke the basic assumption before escaping.
    NegInfinity,
}

/// E_l(·, ν) for one essential return.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EscapeRecord {
    pub nu: usize,
    pub depth: i64,
    pub deep: bool,
    /// ν + p once the bound period has ended.
    pub bound_end: Option<usize>,
    pub escape: EscapeTime,
    /// First essential return after an escape; these enter T_n.
    pub counted: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct AnchorKey {
    pub time: usize,
    pub id: u64,
}

/// Bound-period state after a return.
#[derive(Clone, Debug)]
pub(crate) struct Binding {
    pub nu: usize,
    /// Index of the return in the element history.
    pub event: usize,
    pub partner: SpherePoint<BigComplex>,
    pub j: usize,
    pub ledger_at_nu: f64,
}

#[derive(Clone, Debug)]
pub(crate) enum Phase {
    Free,
    Bound(Box<Binding>),
}

/// A parameter interval followed through its returns.
#[derive(Clone, Debug)]
pub struct PartitionElement {
    pub id: u64,
    pub interval: Interval,
    pub l: usize,
    /// Lebesgue measure of ω₀ this element stands for; its own length
    /// unless siblings were subsampled away.
    pub measure: Float,
    pub history: Vec<ReturnEvent>,
    /// (time, lower bound on log|Df^{time−1}(v_l(a))|/(time − 1)).
    pub exponent_ledger: Vec<(usize, f64)>,
    pub escape_records: Vec<EscapeRecord>,
    pub t_accumulator: u64,
    pub status: Status,
    /// Time at which the element left play.
    pub deleted_at: Option<usize>,
    pub(crate) curve: Option<Box<Curve>>,
    pub(crate) phase: Phase,
    pub(crate) anchor: Option<AnchorKey>,
    /// (time, endpoint separation, partner tracked) at the last free return.
    pub(crate) last_free_return: Option<(usize, f64, bool)>,
    pub(crate) diam_prev: f64,
}

impl PartitionElement {
    pub(crate) fn with_curve(id: u64, interval: Interval, l: usize, measure: Float, curve: Curve) -> Self {
        Self {
            id,
            interval,
            l,
            measure,
            history: Vec::new(),
            exponent_ledger: Vec::new(),
            escape_records: Vec::new(),
            t_accumulator: 0,
            status: Status::Active,
            deleted_at: None,
            curve: Some(Box::new(curve)),
            phase: Phase::Free,
            anchor: None,
            last_free_return: None,
            diam_prev: 0.0,
        }
    }

    /// Element without dynamics, for bookkeeping tests and audits.
    pub fn synthetic(id: u64, interval: Interval, l: usize, history: Vec<ReturnEvent>) -> Self {
        let measure = interval.len();
        Self {
            id,
            interval,
            l,
            measure,
            history,
            exponent_ledger: Vec::new(),
            escape_records: Vec::new(),
            t_accumulator: 0,
            status: Status::Active,
            deleted_at: None,
            curve: None,
            phase: Phase::Free,
            anchor: None,
            last_free_return: None,
            diam_prev: 0.0,
        }
    }

    pub fn time(&self) -> Option<usize> {
        self.curve.as_ref().map(|c| c.time)
    }

    pub fn geometry(&self) -> Option<Geometry> {
        self.curve.as_ref().map(|c| c.geometry())
    }

    /// Current exponent lower bound, or the last recorded one.
    pub fn exponent_lower(&self) -> Option<f64> {
        self.curve.as_ref().and_then(|c| c.exponent_lower()).or_else(|| self.exponent_ledger.last().map(|e| e.1))
    }

    /// Time of the last free return into U.
    pub fn last_return(&self) -> Option<usize> {
        self.history.iter().rev().find(|e| e.is_free() && e.is_into_u()).map(|e| e.time)
    }

    /// measure / length.
    pub fn density(&self) -> Float {
        let len = self.interval.len();
        if len == 0 {
            return Float::with_val(len.prec(), 1);
        }
        Float::with_val(len.prec(), &self.measure / &len)
    }

    pub fn is_bound(&self) -> bool {
        matches!(self.phase, Phase::Bound(_))
    }

    pub(crate) fn curve(&self) -> Result<&Curve> {
        self.curve.as_deref().ok_or_else(|| Error::Invariant(format!("element {} has no dynamics", self.id)))
    }

    pub(crate) fn curve_mut(&mut self) -> Result<&mut Curve> {
        let id = self.id;
        self.curve.as_deref_mut().ok_or_else(|| Error::Invariant(format!("element {id} has no dynamics")))
    }

    pub fn escape_time(&self, nu: usize) -> Option<EscapeTime> {
        self.escape_records.iter().find(|r| r.nu == nu).map(|r| r.escape)
    }

    /// Free returns into U with their kinds, for quick inspection.
    pub fn free_returns(&self) -> impl Iterator<Item = &ReturnEvent> {
        self.history.iter().filter(|e| e.kind != ReturnKind::BoundReturn && e.is_into_u())
    }
}

/// Escape time of `element` at its return ν (None when ν is not an
/// essential return of the element).
pub fn escape_time(element: &PartitionElement, nu: usize) -> Option<EscapeTime> {
    element.escape_time(nu)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lattes() -> RationalFamily {
        RationalFamily::lattes2(1e-6).unwrap()
    }

    #[test]
    fn bisection_reuses_the_middle_sample() {
        let fam = lattes();
        let iv = Interval::from_f64(256, -1e-6, 1e-6);
        let (c, _) = Curve::fresh(&fam, 1, &iv, 6, None).unwrap();
        let [(l, cl), (r, cr)] = c.bisect(&fam).unwrap();
        assert_eq!(l.hi, r.lo);
        assert_eq!(chordal_distance(&cl.samples[2].point, &cr.samples[0].point), 0.0);
        let g = c.geometry();
        assert!(cl.geometry().diam < g.diam && cr.geometry().diam < g.diam);
    }

    #[test]
    fn stepping_matches_fresh_computation() {
        let fam = lattes();
        let iv = Interval::from_f64(256, 0.0, 1e-7);
        let (mut c, _) = Curve::fresh(&fam, 1, &iv, 3, None).unwrap();
        for _ in 0..4 {
            c.step().unwrap();
        }
        let (d, _) = Curve::fresh(&fam, 1, &iv, 7, None).unwrap();
        for i in 0..3 {
            assert_eq!(chordal_distance(&c.samples[i].point, &d.samples[i].point), 0.0);
            assert!((c.samples[i].ledger - d.samples[i].ledger).abs() < 1e-12);
        }
    }

    #[test]
    fn polyline_sees_a_crossing_between_samples() {
        let c = SpherePoint::from_c64(53, C64::new(0.0, 0.0));
        let pts = [C64::new(-0.1, 0.01), C64::new(0.0, 0.05), C64::new(0.1, 0.01)]
            .map(|z| SpherePoint::from_c64(53, z))
            .to_vec();
        let d = polyline_distance(&pts, &c);
        assert!(d < chordal_distance(&pts[0], &c));
        let straight = [C64::new(-0.1, 0.01), C64::new(0.1, 0.01)].map(|z| SpherePoint::from_c64(53, z)).to_vec();
        assert!((polyline_distance(&straight, &c) - chordal_from_origin(0.01)).abs() < 1e-15);
    }

    #[test]
    fn status_strings() {
        assert_eq!(Status::Deleted(DeletionReason::BasicAssumption { time: 37 }).to_string(), "deleted(basic-assumption@37)");
        assert_eq!(Status::BlindDeleted.to_string(), "blind-deleted");
    }
}
