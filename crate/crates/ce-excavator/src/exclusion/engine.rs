//! The windowed exclusion loop: start phase, per-step refinement and
//! deletion, escape accounting and the window cuts.

use super::element::{
    AnchorKey, Binding, Curve, DeletionReason, EscapeRecord, EscapeTime, Geometry, PartitionElement, Phase, Sample, Status, CERT_TOL,
};
use super::interval::{intersection_measure, Interval, WeightedSet};
use super::report::{
    BaAnchorAudit, BoundCheck, CheckTally, DoublingCheck, ExclusionReport, MeasureLine, QTimeCheck, StartEntry, StartTrigger, WindowReport,
};
use crate::error::{Error, Result};
use crate::family::{orbit_with_param_derivative, ConstantsLedger, RationalFamily};
use crate::orbit::bound::bound_expansion_from;
use crate::orbit::{depth_of, BoundExpansionCheck, DepthClass, NeighborhoodSystem, ReturnEvent, ReturnKind};
use crate::scalar::BigComplex;
use crate::sphere::chordal_distance;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rug::Float;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Engine knobs that are not constants of the argument.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExclusionConfig {
    pub precision_bits: u32,
    /// Last time any window may reach.
    pub max_time: usize,
    pub windows: usize,
    /// First window start; defaults to the latest start time N_l.
    pub window_start: Option<usize>,
    /// Elements kept per critical point after each step.
    pub element_budget: usize,
    pub seed: u64,
    pub weak_distortion_samples: usize,
}

impl Default for ExclusionConfig {
    fn default() -> Self {
        Self {
            precision_bits: 256,
            max_time: 256,
            windows: 2,
            window_start: None,
            element_budget: 256,
            seed: 1,
            weak_distortion_samples: 8,
        }
    }
}

/// dist/(log dist)², the Whitney upper bound at distance `d`.
pub fn whitney_upper(d: f64) -> f64 {
    if d >= 1.0 {
        f64::INFINITY
    } else if d <= 0.0 {
        0.0
    } else {
        d / d.ln().powi(2)
    }
}

/// diam ≥ ½·dist/(log dist)².
pub fn is_essential(diam: f64, dist: f64) -> bool {
    diam > 0.0 && diam >= 0.5 * whitney_upper(dist)
}

pub(crate) struct Ctx<'a> {
    fam: &'a RationalFamily,
    k: &'a ConstantsLedger,
    nbhd: NeighborhoodSystem,
    prec: u32,
    /// Absolute width below which elements freeze.
    floor: f64,
    tracked: Vec<bool>,
    seed: u64,
}

impl<'a> Ctx<'a> {
    fn new(fam: &'a RationalFamily, k: &'a ConstantsLedger, cfg: &ExclusionConfig) -> Result<Self> {
        if cfg.precision_bits < 64 {
            return Err(Error::Invariant(format!("precision_bits {} below 64", cfg.precision_bits)));
        }
        let nbhd = NeighborhoodSystem::new(k.delta, k.delta_prime)?;
        let mut tracked = vec![false; fam.paths().len()];
        for l in fam.tracked() {
            tracked[l] = true;
        }
        let floor = 2.0 * fam.epsilon() * 2f64.powi(-(cfg.precision_bits as i32 - 8));
        Ok(Self { fam, k, nbhd, prec: cfg.precision_bits, floor, tracked, seed: cfg.seed })
    }

    /// K_b e^{−factor·α·t}.
    fn threshold(&self, t: usize) -> f64 {
        basic_threshold(self.k, t)
    }

    fn event(&self, t: usize, g: &Geometry, kind: ReturnKind) -> ReturnEvent {
        ReturnEvent {
            time: t,
            component: g.component,
            distance: g.dist,
            depth: depth_of(g.dist),
            kind,
            depth_class: if self.nbhd.in_u2(g.dist) { DepthClass::Deep } else { DepthClass::Shallow },
            bound_period: 0,
            free_period: 0,
            truncated: false,
        }
    }
}

pub fn basic_threshold(k: &ConstantsLedger, t: usize) -> f64 {
    k.kb * (-k.deletion_factor * k.alpha * t as f64).exp()
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn mix(a: u64, b: u64, c: u64) -> u64 {
    splitmix(splitmix(splitmix(a) ^ b) ^ c)
}

/// Stratified choice of `quota` indices out of `k`, in increasing order.
pub fn select(k: usize, quota: usize, seed: u64) -> Vec<usize> {
    if quota >= k {
        return (0..k).collect();
    }
    let u: f64 = ChaCha8Rng::seed_from_u64(seed).gen();
    (0..quota).map(|i| (((i as f64 + u) * k as f64 / quota as f64).floor() as usize).min(k - 1)).collect()
}

/// Everything one element produced in one step.
#[derive(Default)]
pub(crate) struct Outcome {
    kept: Vec<PartitionElement>,
    removed: Vec<PartitionElement>,
    /// Basic-assumption deletions charged to an anchor.
    ba: Vec<(AnchorKey, Float)>,
    anchors: Vec<(AnchorKey, usize, Float)>,
    doubling: CheckTally<DoublingCheck>,
    boundexp: CheckTally<BoundExpansionCheck>,
    qtime: CheckTally<QTimeCheck>,
    depths: BTreeMap<i64, usize>,
    untracked: usize,
    exponents: Vec<f64>,
    subsampled: usize,
    dropped: usize,
}

impl Outcome {
    fn merge(&mut self, o: Outcome) {
        self.kept.extend(o.kept);
        self.removed.extend(o.removed);
        self.ba.extend(o.ba);
        self.anchors.extend(o.anchors);
        self.doubling.merge(o.doubling);
        self.boundexp.merge(o.boundexp);
        self.qtime.merge(o.qtime);
        for (r, c) in o.depths {
            *self.depths.entry(r).or_default() += c;
        }
        self.untracked += o.untracked;
        self.exponents.extend(o.exponents);
        self.subsampled += o.subsampled;
        self.dropped += o.dropped;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Mode {
    Whole,
    Whitney,
    BaOnly,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Verdict {
    Keep,
    Violate,
    Frozen,
}

struct Piece {
    iv: Interval,
    curve: Curve,
    verdict: Verdict,
}

/// Bisects until every piece meets the mode's diameter bound.
fn refine(ctx: &Ctx, iv: Interval, curve: Curve, mode: Mode, thr: f64, out: &mut Vec<Piece>) -> Result<()> {
    let g = curve.geometry();
    let accept = match mode {
        Mode::Whole => true,
        Mode::Whitney => g.diam <= whitney_upper(g.dist.max(thr)),
        Mode::BaOnly => g.dist >= thr || g.diam <= whitney_upper(thr),
    };
    if accept {
        let verdict = if g.dist < thr { Verdict::Violate } else { Verdict::Keep };
        out.push(Piece { iv, curve, verdict });
        return Ok(());
    }
    if iv.len().to_f64() / 2.0 < ctx.floor {
        out.push(Piece { iv, curve, verdict: Verdict::Frozen });
        return Ok(());
    }
    for (civ, cc) in curve.bisect(ctx.fam)? {
        refine(ctx, civ, cc, mode, thr, out)?;
    }
    Ok(())
}

fn child_of(e: &PartitionElement, id: u64, interval: Interval, measure: Float, curve: Curve) -> PartitionElement {
    PartitionElement {
        id,
        interval,
        l: e.l,
        measure,
        history: e.history.clone(),
        exponent_ledger: e.exponent_ledger.clone(),
        escape_records: e.escape_records.clone(),
        t_accumulator: e.t_accumulator,
        status: e.status,
        deleted_at: None,
        curve: Some(Box::new(curve)),
        phase: e.phase.clone(),
        anchor: e.anchor,
        last_free_return: e.last_free_return,
        diam_prev: e.diam_prev,
    }
}

/// Takes the element out of play.
fn retire(e: &mut PartitionElement, status: Status, t: usize) {
    if matches!(status, Status::Deleted(DeletionReason::BasicAssumption { .. })) {
        for r in &mut e.escape_records {
            if r.escape == EscapeTime::Open {
                r.escape = EscapeTime::NegInfinity;
            }
        }
    }
    e.status = status;
    e.deleted_at = Some(t);
    e.curve = None;
    e.phase = Phase::Free;
}

fn sum_len(ivs: impl Iterator<Item = Float>, prec: u32) -> Float {
    let mut s = Float::new(prec);
    for x in ivs {
        s += x;
    }
    s
}

/// Endpoint separation of ξ_t over `iv`.
fn capture_sep(fam: &RationalFamily, l: usize, iv: &Interval, t: usize) -> Result<f64> {
    let (lo, _) = Sample::compute(fam, l, iv.lo.clone(), t, None)?;
    let (hi, _) = Sample::compute(fam, l, iv.hi.clone(), t, None)?;
    Ok(chordal_distance(&lo.point, &hi.point))
}

/// Splits the parent's measure over the pieces, removes violators and
/// frozen pieces, subsamples the rest to `quota` and returns the kept
/// children. Deleted measure is charged to `charge`.
#[allow(clippy::too_many_arguments)]
fn settle(
    ctx: &Ctx,
    e: &PartitionElement,
    pieces: Vec<Piece>,
    t: usize,
    quota: usize,
    kind: ReturnKind,
    charge: Option<AnchorKey>,
    out: &mut Outcome,
) -> Vec<PartitionElement> {
    let prec = e.interval.prec();
    if pieces.len() == 1 && pieces[0].verdict == Verdict::Keep {
        let p = pieces.into_iter().next().expect("one piece");
        return vec![child_of(e, e.id, p.iv, e.measure.clone(), p.curve)];
    }
    let dens = e.density();
    let mut survivors = Vec::new();
    let mut surv_measure = Float::new(prec);
    for (i, p) in pieces.into_iter().enumerate() {
        let share = Float::with_val(prec, &dens * &p.iv.len());
        match p.verdict {
            Verdict::Keep => {
                surv_measure += &share;
                survivors.push(p);
            }
            Verdict::Violate | Verdict::Frozen => {
                let g = p.curve.geometry();
                let mut d = child_of(e, mix(e.id, t as u64, i as u64), p.iv, share.clone(), p.curve);
                if ctx.nbhd.in_u_prime(g.dist) {
                    d.history.push(ctx.event(t, &g, kind));
                }
                if p.verdict == Verdict::Violate {
                    retire(&mut d, Status::Deleted(DeletionReason::BasicAssumption { time: t }), t);
                    if let Some(a) = charge {
                        out.ba.push((a, share));
                    }
                } else {
                    retire(&mut d, Status::Deleted(DeletionReason::Precision), t);
                }
                out.removed.push(d);
            }
        }
    }
    let sel = select(survivors.len(), quota, mix(ctx.seed ^ e.id, t as u64, 0x5e1));
    if sel.len() < survivors.len() {
        out.subsampled += 1;
        out.dropped += survivors.len() - sel.len();
    }
    let kept_len = sum_len(sel.iter().map(|&i| survivors[i].iv.len()), prec);
    let mut slots: Vec<Option<Piece>> = survivors.into_iter().map(Some).collect();
    sel.iter()
        .map(|&i| {
            let p = slots[i].take().expect("selected once");
            let mut m = Float::with_val(prec, &surv_measure * &p.iv.len());
            m /= &kept_len;
            child_of(e, mix(e.id, t as u64, i as u64 + 1), p.iv, m, p.curve)
        })
        .collect()
}

/// Appends a free event, closing the free period of the previous one.
fn push_free_event(e: &mut PartitionElement, ev: ReturnEvent) {
    if let Some(prev) = e.history.iter_mut().rev().find(|x| x.is_free()) {
        prev.free_period = ev.time.saturating_sub(prev.time + prev.bound_period + 1);
    }
    e.history.push(ev);
}

fn start_binding(ctx: &Ctx, e: &mut PartitionElement, comp: usize, t: usize) -> Result<()> {
    let mid = &e.curve()?.samples[1];
    let partner = ctx.fam.critical_point_at(comp, mid.param.to_f64(), &*mid.map)?;
    let ledger_at_nu = mid.ledger;
    e.phase = Phase::Bound(Box::new(Binding { nu: t, event: e.history.len() - 1, partner, j: 0, ledger_at_nu }));
    Ok(())
}

fn pseudo_return(ctx: &Ctx, e: &mut PartitionElement, g: &Geometry, t: usize) -> Result<()> {
    push_free_event(e, ctx.event(t, g, ReturnKind::Pseudo));
    start_binding(ctx, e, g.component, t)
}

fn qtime(ctx: &Ctx, l: usize, r: &EscapeRecord, esc: usize, out: &mut Outcome) {
    let bound = 2.0 * ctx.k.h * r.depth as f64;
    out.qtime.record(esc as f64 <= bound, QTimeCheck { l, time: r.nu, depth: r.depth, escape_time: esc, bound });
}

/// A free return into U at time t.
fn free_return(ctx: &Ctx, mut e: PartitionElement, g: Geometry, t: usize, quota: usize, out: &mut Outcome) -> Result<()> {
    let d = g.dist;
    let tracked = ctx.tracked[g.component];
    let essential = is_essential(g.diam, d);
    let kind = if essential { ReturnKind::Essential } else { ReturnKind::Inessential };
    *out.depths.entry(depth_of(d)).or_default() += 1;
    if !tracked {
        out.untracked += 1;
    }
    if let Some((t0, sep0, true)) = e.last_free_return {
        if sep0 > 0.0 {
            let ratio = g.sep / sep0;
            out.doubling.record(ratio >= 2.0, DoublingCheck { l: e.l, element: e.id, from_time: t0, to_time: t, ratio });
        }
    }
    if let Some(x) = e.curve()?.exponent_lower() {
        e.exponent_ledger.push((t, x));
        out.exponents.push(x);
    }
    let prev_anchor = e.anchor.take();
    // the measure audit needs binding information, which untracked
    // components do not give
    let new_anchor = (essential && tracked).then_some(AnchorKey { time: t, id: e.id });
    if let Some(a) = new_anchor {
        out.anchors.push((a, e.l, e.measure.clone()));
    }
    let thr = ctx.threshold(t);
    let mode = if essential {
        Mode::Whitney
    } else if d < thr {
        Mode::BaOnly
    } else {
        Mode::Whole
    };
    let curve = *e.curve.take().expect("checked above");
    let mut pieces = Vec::new();
    refine(ctx, e.interval.clone(), curve, mode, thr, &mut pieces)?;
    let open = e.escape_records.iter().any(|r| r.escape == EscapeTime::Open);
    for mut c in settle(ctx, &e, pieces, t, quota, kind, prev_anchor, out) {
        let cg = c.curve()?.geometry();
        c.anchor = new_anchor.or(prev_anchor);
        c.status = Status::Active;
        c.diam_prev = cg.diam;
        c.last_free_return = Some((t, cg.sep, ctx.tracked[cg.component]));
        let ckind = if ctx.nbhd.in_u(cg.dist) {
            Some(kind)
        } else if ctx.nbhd.in_u_prime(cg.dist) {
            Some(ReturnKind::Pseudo)
        } else {
            None
        };
        if let Some(k) = ckind {
            push_free_event(&mut c, ctx.event(t, &cg, k));
            if k == ReturnKind::Essential {
                let deep = ctx.nbhd.in_u2(cg.dist);
                c.escape_records.push(EscapeRecord {
                    nu: t,
                    depth: depth_of(cg.dist),
                    deep,
                    bound_end: None,
                    escape: if deep { EscapeTime::Open } else { EscapeTime::Finite(0) },
                    counted: !open,
                });
            }
            start_binding(ctx, &mut c, cg.component, t)?;
        }
        out.kept.push(c);
    }
    Ok(())
}

/// Equal split of a large-scale curve into pieces of diameter ≤ S.
fn escape_split(ctx: &Ctx, mut e: PartitionElement, g: Geometry, t: usize, quota: usize, out: &mut Outcome) -> Result<()> {
    let l = e.l;
    for r in &mut e.escape_records {
        if r.escape == EscapeTime::Open {
            if let Some(be) = r.bound_end {
                let esc = t - be;
                r.escape = EscapeTime::Finite(esc);
                if r.deep {
                    qtime(ctx, l, r, esc, out);
                }
            }
        }
    }
    let s = ctx.k.s_large;
    let k = ((g.diam / s).ceil() as usize).max(2);
    let pieces = e.interval.split_equal(k);
    let sel = select(k, quota, mix(ctx.seed ^ e.id, t as u64, 0xe5c));
    if sel.len() < k {
        out.subsampled += 1;
        out.dropped += k - sel.len();
    }
    let capture = e.last_free_return.map(|x| x.0);
    let mut kids = Vec::new();
    for i in sel {
        verified_split(ctx, l, pieces[i].clone(), t, capture, &mut kids)?;
    }
    let prec = e.interval.prec();
    let total = sum_len(kids.iter().map(|k| k.0.len()), prec);
    e.curve = None;
    for (j, (iv, curve, sep0)) in kids.into_iter().enumerate() {
        let mut m = Float::with_val(prec, &e.measure * &iv.len());
        m /= &total;
        let mut c = child_of(&e, mix(e.id, t as u64, 0x1000 + j as u64), iv, m, curve);
        c.status = Status::Escaped;
        c.last_free_return = match (e.last_free_return, sep0) {
            (Some((t0, _, tr)), Some(s0)) => Some((t0, s0, tr)),
            _ => None,
        };
        post_split(ctx, c, t, out)?;
    }
    Ok(())
}

fn verified_split(
    ctx: &Ctx,
    l: usize,
    iv: Interval,
    t: usize,
    capture: Option<usize>,
    kids: &mut Vec<(Interval, Curve, Option<f64>)>,
) -> Result<()> {
    let (c, sep) = Curve::fresh(ctx.fam, l, &iv, t, capture)?;
    if c.geometry().diam <= ctx.k.s_large || iv.len().to_f64() / 2.0 < ctx.floor {
        kids.push((iv, c, sep));
        return Ok(());
    }
    for h in iv.split_equal(2) {
        verified_split(ctx, l, h, t, capture, kids)?;
    }
    Ok(())
}

/// Classifies a fresh escape child at its own geometry.
fn post_split(ctx: &Ctx, mut c: PartitionElement, t: usize, out: &mut Outcome) -> Result<()> {
    let cg = c.curve()?.geometry();
    c.diam_prev = cg.diam;
    if ctx.nbhd.in_u(cg.dist) {
        return free_return(ctx, c, cg, t, 1, out);
    }
    if ctx.nbhd.in_u_prime(cg.dist) {
        pseudo_return(ctx, &mut c, &cg, t)?;
    }
    out.kept.push(c);
    Ok(())
}

/// Processing of a free element at its current time.
fn process_free(ctx: &Ctx, mut e: PartitionElement, g: Geometry, t: usize, quota: usize, out: &mut Outcome) -> Result<()> {
    if ctx.nbhd.in_u(g.dist) {
        return free_return(ctx, e, g, t, quota, out);
    }
    if g.diam >= ctx.k.s_large {
        return escape_split(ctx, e, g, t, quota, out);
    }
    if ctx.nbhd.in_u_prime(g.dist) {
        pseudo_return(ctx, &mut e, &g, t)?;
    }
    e.diam_prev = g.diam;
    out.kept.push(e);
    Ok(())
}

/// Bound period over at t: p = j − 1.
fn finish_binding(ctx: &Ctx, e: &mut PartitionElement, b: Binding, out: &mut Outcome) -> Result<()> {
    let p = b.j - 1;
    let c = e.curve.as_deref().ok_or_else(|| Error::Invariant("bound element without dynamics".into()))?;
    let mid = &c.samples[1];
    let log_growth = (mid.ledger - mid.last_ls) - b.ledger_at_nu;
    let degree = |comp: usize| c.crit.get(comp).map_or(2, |x| x.1);
    let ev = &mut e.history[b.event];
    ev.bound_period = p;
    if ev.is_into_u() && ctx.tracked[ev.component] {
        let chk = bound_expansion_from(ev, degree(ev.component), log_growth, ctx.k.gamma_i, ctx.k.big_gamma, ctx.k.alpha);
        out.boundexp.record(chk.all_pass(), chk);
    }
    let diam_prev = e.diam_prev;
    let l = e.l;
    if let Some(r) = e.escape_records.iter_mut().rev().find(|r| r.nu == b.nu) {
        r.bound_end = Some(b.nu + p);
        if r.escape == EscapeTime::Open && diam_prev >= ctx.k.s_large {
            r.escape = EscapeTime::Finite(0);
            if r.deep {
                qtime(ctx, l, r, 0, out);
            }
        }
    }
    e.phase = Phase::Free;
    Ok(())
}

/// Refinement inside a bound period, only to delete basic-assumption
/// violators. Children keep the binding.
fn ba_split(ctx: &Ctx, mut e: PartitionElement, t: usize, quota: usize, out: &mut Outcome) -> Result<()> {
    let thr = ctx.threshold(t);
    let curve = *e.curve.take().expect("bound element has a curve");
    let mut pieces = Vec::new();
    refine(ctx, e.interval.clone(), curve, Mode::BaOnly, thr, &mut pieces)?;
    let whole = pieces.len() == 1;
    for mut c in settle(ctx, &e, pieces, t, quota, ReturnKind::BoundReturn, e.anchor, out) {
        let cg = c.curve()?.geometry();
        if ctx.nbhd.in_u_prime(cg.dist) {
            c.history.push(ctx.event(t, &cg, ReturnKind::BoundReturn));
        }
        if !whole {
            if let Some((t0, _, tr)) = c.last_free_return {
                c.last_free_return = Some((t0, capture_sep(ctx.fam, c.l, &c.interval, t0)?, tr));
            }
        }
        c.diam_prev = cg.diam;
        out.kept.push(c);
    }
    Ok(())
}

/// One time step of one element.
fn advance(ctx: &Ctx, mut e: PartitionElement, quota: usize) -> Result<Outcome> {
    let mut out = Outcome::default();
    e.curve_mut()?.step()?;
    let (t, g) = {
        let c = e.curve()?;
        (c.time, c.geometry())
    };
    if let Phase::Bound(mut b) = std::mem::replace(&mut e.phase, Phase::Free) {
        let c = e.curve.as_deref().expect("stepped above");
        let mid = &c.samples[1];
        let (next, _) = mid.map.step(&b.partner)?;
        b.partner = next;
        b.j += 1;
        let pf = b.partner.to_f64_point();
        let pd = c.crit.iter().map(|(p, _)| chordal_distance(&pf, p)).fold(f64::INFINITY, f64::min);
        let tol = (-ctx.k.beta * b.j as f64).exp() * pd;
        let holds = c.samples.iter().all(|s| chordal_distance(&s.point, &b.partner) <= tol);
        if holds {
            e.phase = Phase::Bound(b);
            if g.dist < ctx.threshold(t) {
                ba_split(ctx, e, t, quota, &mut out)?;
            } else {
                if ctx.nbhd.in_u_prime(g.dist) {
                    e.history.push(ctx.event(t, &g, ReturnKind::BoundReturn));
                }
                e.diam_prev = g.diam;
                out.kept.push(e);
            }
            return Ok(out);
        }
        finish_binding(ctx, &mut e, *b, &mut out)?;
    }
    process_free(ctx, e, g, t, quota, &mut out)?;
    Ok(out)
}

/// Per-element child quotas: the budget shared within each l.
fn quotas(elements: &[PartitionElement], budget: usize) -> Vec<usize> {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for e in elements {
        *counts.entry(e.l).or_default() += 1;
    }
    let mut rank: BTreeMap<usize, usize> = BTreeMap::new();
    elements
        .iter()
        .map(|e| {
            let c = counts[&e.l];
            let r = rank.entry(e.l).or_default();
            let q = budget / c;
            let extra = usize::from(*r < budget % c);
            *r += 1;
            if q == 0 {
                1
            } else {
                q + extra
            }
        })
        .collect()
}

/// One step of every element: a parallel map, then an ordered reduce.
fn step_all(ctx: &Ctx, elements: Vec<PartitionElement>, budget: usize) -> Result<Outcome> {
    let qs = quotas(&elements, budget);
    let results: Vec<Result<Outcome>> = elements.into_par_iter().zip(qs).map(|(e, q)| advance(ctx, e, q)).collect();
    let mut total = Outcome::default();
    for r in results {
        total.merge(r?);
    }
    Ok(total)
}

/// Which critical point's start phase ended how.
pub struct StartPhase {
    pub entry: StartEntry,
    pub elements: Vec<PartitionElement>,
    pub removed: Vec<PartitionElement>,
    audit: Outcome,
}

/// Iterates ω₀ until ξ_n(ω₀) reaches the large scale outside U or makes an
/// essential return, then partitions it.
pub fn start_phase(fam: &RationalFamily, k: &ConstantsLedger, l: usize, cfg: &ExclusionConfig) -> Result<StartPhase> {
    let ctx = Ctx::new(fam, k, cfg)?;
    start_phase_ctx(&ctx, l, cfg)
}

fn start_phase_ctx(ctx: &Ctx, l: usize, cfg: &ExclusionConfig) -> Result<StartPhase> {
    let eps = ctx.fam.epsilon();
    let omega0 = Interval::from_f64(ctx.prec, -eps, eps);
    let (mut curve, _) = Curve::fresh(ctx.fam, l, &omega0, 0, None)?;
    let mut early = 0;
    let mut found = None;
    for t in 1..=cfg.max_time {
        curve.step()?;
        let g = curve.geometry();
        if ctx.nbhd.in_u(g.dist) {
            if is_essential(g.diam, g.dist) {
                found = Some((t, g, StartTrigger::EssentialReturn));
                break;
            }
            early += 1;
        } else if g.diam >= ctx.k.s_large {
            found = Some((t, g, StartTrigger::LargeScale));
            break;
        }
    }
    let (n, g, trigger) = found.ok_or(Error::StartPhaseHorizon { l, horizon: cfg.max_time })?;
    let root_id = mix(ctx.seed, l as u64, 0x57a);
    let mut root = PartitionElement::with_curve(root_id, omega0.clone(), l, omega0.len(), curve);
    let anchor = AnchorKey { time: n, id: root_id };
    root.anchor = Some(anchor);
    let mut audit = Outcome::default();
    audit.anchors.push((anchor, l, omega0.len()));
    process_free(ctx, root, g, n, cfg.element_budget.max(1), &mut audit)?;
    let elements = std::mem::take(&mut audit.kept);
    let removed = std::mem::take(&mut audit.removed);

    let tangent_diameter = orbit_with_param_derivative::<BigComplex>(ctx.fam, l, &Float::with_val(ctx.prec, 0), n, ctx.prec)
        .ok()
        .and_then(|(trace, tangents)| {
            let tg = tangents.get(n)?;
            let x = trace.points.get(n)?.coordinate(tg.chart)?;
            Some(2.0 * tg.value.norm() / (1.0 + x.norm_sqr()) * 2.0 * eps)
        })
        .unwrap_or(f64::NAN);

    let (q, samples) = weak_distortion(ctx, &elements, n, cfg.weak_distortion_samples)?;
    let entry = StartEntry {
        l,
        n_l: n,
        trigger,
        diameter: g.diam,
        tangent_diameter,
        elements: elements.len(),
        early_returns: early,
        weak_distortion_q: q,
        weak_distortion_samples: samples,
        lead_in_steps: 0,
    };
    Ok(StartPhase { entry, elements, removed, audit })
}

/// Smallest Q with every sampled ratio |ξ_{N+k}(a) − ξ_{N+k}(b)| /
/// (|Df^k(ξ_N(a))|·|ξ_N(a) − ξ_N(b)|) in [Q^{−k}, Q^k]. The pairs are the
/// left end a of an element and b = a + 2^{−2N}|ω|, short enough to stay
/// below S for a while.
fn weak_distortion(ctx: &Ctx, elements: &[PartitionElement], n: usize, samples: usize) -> Result<(Option<f64>, usize)> {
    if elements.is_empty() || samples == 0 {
        return Ok((None, 0));
    }
    let m = samples.min(elements.len());
    let mut q: Option<f64> = None;
    let mut used = 0;
    for i in 0..m {
        let e = &elements[i * elements.len() / m];
        let c = e.curve()?;
        let mut a = c.samples[0].clone();
        let mut off = e.interval.len();
        off >>= (2 * n) as u32;
        let (mut b, _) = Sample::compute(ctx.fam, e.l, Float::with_val(ctx.prec, &a.param + &off), c.time, None)?;
        let sep0 = chordal_distance(&a.point, &b.point);
        if sep0 <= 0.0 {
            continue;
        }
        used += 1;
        let l0 = a.ledger;
        for kk in 1..=n {
            a.step(c.time + kk - 1)?;
            b.step(c.time + kk - 1)?;
            let sep = chordal_distance(&a.point, &b.point);
            if sep > ctx.k.s_large {
                break;
            }
            let ratio = sep / ((a.ledger - l0).exp() * sep0);
            let qk = (ratio.ln().abs() / kk as f64).exp();
            q = Some(q.map_or(qk, |x| x.max(qk)));
        }
    }
    Ok((q, used))
}

struct Anchor {
    l: usize,
    measure: Float,
    deleted: Float,
}

/// The partition after some number of windows.
pub struct ExclusionState {
    pub time: usize,
    pub omega0: Interval,
    pub tracked: Vec<usize>,
    pub elements: Vec<PartitionElement>,
    pub removed: Vec<PartitionElement>,
    anchors: BTreeMap<AnchorKey, Anchor>,
}

impl ExclusionState {
    pub fn measure_retained(&self) -> f64 {
        measure_retained(&self.elements, &self.tracked, &self.omega0)
    }

    fn absorb(&mut self, out: &mut Outcome) {
        for (key, l, m) in out.anchors.drain(..) {
            let p = m.prec();
            self.anchors.insert(key, Anchor { l, measure: m, deleted: Float::new(p) });
        }
        for (key, m) in out.ba.drain(..) {
            if let Some(a) = self.anchors.get_mut(&key) {
                a.deleted += m;
            }
        }
    }

    fn ba_audit(&self, alpha: f64, range: Option<(usize, usize)>) -> CheckTally<BaAnchorAudit> {
        let mut pooled: BTreeMap<(usize, usize), (usize, Float, Float)> = BTreeMap::new();
        for (key, a) in &self.anchors {
            if range.is_some_and(|(lo, hi)| key.time < lo || key.time > hi) {
                continue;
            }
            let p = a.measure.prec();
            let slot = pooled.entry((a.l, key.time)).or_insert_with(|| (0, Float::new(p), Float::new(p)));
            slot.0 += 1;
            slot.1 += &a.measure;
            slot.2 += &a.deleted;
        }
        let mut tally = CheckTally::default();
        for ((l, time), (elements, m, d)) in pooled {
            let fraction = if m > 0 { Float::with_val(m.prec(), &d / &m).to_f64() } else { 0.0 };
            let bound = (-alpha * time as f64).exp();
            tally.record(
                fraction <= bound,
                BaAnchorAudit { l, time, elements, measure: m.to_f64(), deleted: d.to_f64(), fraction, bound },
            );
        }
        tally
    }
}

/// m(∩_l Ω_l)/|ω₀|, each Ω_l weighted by its elements' densities.
pub fn measure_retained(elements: &[PartitionElement], tracked: &[usize], omega0: &Interval) -> f64 {
    let prec = omega0.prec();
    let sets: Vec<WeightedSet> = tracked
        .iter()
        .map(|&l| {
            WeightedSet::new(
                elements.iter().filter(|e| e.l == l && e.status.is_live()).map(|e| (e.interval.clone(), e.density())).collect(),
            )
        })
        .collect();
    let m = intersection_measure(&sets, prec);
    Float::with_val(prec, &m / &omega0.len()).to_f64()
}

/// Deletes elements with a recorded return ν ≤ up_to closer to Crit than
/// K_b e^{−factor·α·ν}. Returns survivors, deleted elements and deleted measure.
pub fn delete_basic_violators(
    elements: Vec<PartitionElement>,
    k: &ConstantsLedger,
    up_to: usize,
) -> (Vec<PartitionElement>, Vec<PartitionElement>, Float) {
    let prec = elements.first().map_or(64, |e| e.interval.prec());
    let mut measure = Float::new(prec);
    let mut survivors = Vec::new();
    let mut deleted = Vec::new();
    for mut e in elements {
        let hit = e.history.iter().find(|ev| ev.time <= up_to && ev.distance < basic_threshold(k, ev.time)).map(|ev| ev.time);
        match hit {
            Some(nu) => {
                measure += &e.measure;
                retire(&mut e, Status::Deleted(DeletionReason::BasicAssumption { time: nu }), nu);
                deleted.push(e);
            }
            None => survivors.push(e),
        }
    }
    (survivors, deleted, measure)
}

/// Refinement of an element at its current time: the partition of a
/// return into U, the equal split at large scale, or the element itself.
/// Returns (children, removed pieces).
pub fn classify_and_refine(
    fam: &RationalFamily,
    k: &ConstantsLedger,
    cfg: &ExclusionConfig,
    element: PartitionElement,
) -> Result<(Vec<PartitionElement>, Vec<PartitionElement>)> {
    let ctx = Ctx::new(fam, k, cfg)?;
    let (t, g) = {
        let c = element.curve()?;
        (c.time, c.geometry())
    };
    let mut out = Outcome::default();
    process_free(&ctx, element, g, t, usize::MAX, &mut out)?;
    Ok((out.kept, out.removed))
}

/// A live element over `interval` at time `time`, computed from scratch.
pub fn element_at(fam: &RationalFamily, l: usize, interval: Interval, time: usize) -> Result<PartitionElement> {
    let (curve, _) = Curve::fresh(fam, l, &interval, time, None)?;
    let id = mix(l as u64, time as u64, 0xe1e);
    let len = interval.len();
    Ok(PartitionElement::with_curve(id, interval, l, len, curve))
}

/// Result of the large-deviation cut over one window.
pub struct LargeDeviationCut {
    pub survivors: Vec<PartitionElement>,
    pub deleted: Vec<PartitionElement>,
    pub blind: Vec<PartitionElement>,
    pub cap_bindings: usize,
}

/// T_n = Σ min(E, 2n − ν) over counted essential returns ν ∈ [n, 2n];
/// T_n ≥ τn deletes, and an open final escape of length ≥ 6hαn is a
/// blind escape.
pub fn large_deviation_cut(elements: Vec<PartitionElement>, n: usize, k: &ConstantsLedger) -> LargeDeviationCut {
    let end = 2 * n;
    let blind_len = 6.0 * k.h * k.alpha * n as f64;
    let mut cut = LargeDeviationCut { survivors: Vec::new(), deleted: Vec::new(), blind: Vec::new(), cap_bindings: 0 };
    for mut e in elements {
        let recs: Vec<&EscapeRecord> = e.escape_records.iter().filter(|r| r.counted && r.nu >= n && r.nu <= end).collect();
        let value = |r: &EscapeRecord| match r.escape {
            EscapeTime::Finite(x) => x,
            EscapeTime::Open => r.bound_end.map_or(0, |b| end.saturating_sub(b)),
            EscapeTime::NegInfinity => 0,
        };
        let blind = recs.last().is_some_and(|r| r.escape == EscapeTime::Open && value(r) as f64 >= blind_len);
        let scored = if blind { &recs[..recs.len() - 1] } else { &recs[..] };
        let mut total = 0u64;
        for r in scored {
            let cap = end - r.nu;
            let v = value(r);
            if v > cap {
                cut.cap_bindings += 1;
            }
            total += v.min(cap) as u64;
        }
        e.t_accumulator = total;
        if blind {
            retire(&mut e, Status::BlindDeleted, end);
            cut.blind.push(e);
        } else if total as f64 >= k.tau * n as f64 {
            retire(&mut e, Status::Deleted(DeletionReason::LargeDeviation), end);
            cut.deleted.push(e);
        } else {
            cut.survivors.push(e);
        }
    }
    cut
}

/// E, B and their starred variants for one critical point, as interval sets.
#[derive(Clone, Debug, Serialize)]
pub struct LStatus {
    pub l: usize,
    pub e: Vec<Interval>,
    pub b: Vec<Interval>,
    pub e_star: Vec<Interval>,
    pub b_star: Vec<Interval>,
}

#[derive(Clone, Debug, Serialize)]
pub struct StatusSets {
    pub n: usize,
    pub per_l: Vec<LStatus>,
}

/// `set` minus the union of `holes`.
fn subtract(set: &[Interval], holes: &[&Interval]) -> Vec<Interval> {
    let mut cur: Vec<Interval> = set.to_vec();
    for h in holes {
        let mut next = Vec::new();
        for iv in cur {
            if !iv.overlaps(h) {
                next.push(iv);
                continue;
            }
            if iv.lo < h.lo {
                next.push(Interval::new(iv.lo.clone(), h.lo.clone()));
            }
            if h.hi < iv.hi {
                next.push(Interval::new(h.hi.clone(), iv.hi.clone()));
            }
        }
        cur = next;
    }
    cur
}

/// Membership from stored ledgers: own checkpoints up to n, and other
/// critical points' deletions up to α̂n (starred: 2α̂n).
pub fn status_sets(
    live: &[PartitionElement],
    removed: &[PartitionElement],
    tracked: &[usize],
    n: usize,
    gamma: f64,
    k: &ConstantsLedger,
) -> StatusSets {
    let reach = k.alpha_hat * n as f64;
    let per_l = tracked
        .iter()
        .map(|&l| {
            let own: Vec<&PartitionElement> = live.iter().filter(|e| e.l == l && e.status.is_live()).collect();
            let own_e: Vec<Interval> = own
                .iter()
                .filter(|e| e.exponent_ledger.iter().filter(|x| x.0 <= n).all(|x| x.1 >= gamma))
                .map(|e| e.interval.clone())
                .collect();
            let own_b: Vec<Interval> = own
                .iter()
                .filter(|e| e.history.iter().filter(|ev| ev.time <= n).all(|ev| ev.distance >= basic_threshold(k, ev.time)))
                .map(|e| e.interval.clone())
                .collect();
            let holes = |exp: bool, horizon: f64| -> Vec<&Interval> {
                removed
                    .iter()
                    .filter(|r| r.l != l && r.deleted_at.is_some_and(|t| t as f64 <= horizon))
                    .filter(|r| match r.status {
                        Status::Deleted(DeletionReason::Exponent) => exp,
                        Status::Deleted(DeletionReason::BasicAssumption { .. }) => !exp,
                        _ => false,
                    })
                    .map(|r| &r.interval)
                    .collect()
            };
            LStatus {
                l,
                e: subtract(&own_e, &holes(true, reach)),
                b: subtract(&own_b, &holes(false, reach)),
                e_star: subtract(&own_e, &holes(true, 2.0 * reach)),
                b_star: subtract(&own_b, &holes(false, 2.0 * reach)),
            }
        })
        .collect();
    StatusSets { n, per_l }
}

/// Deletes whole elements meeting an element of another critical point
/// deleted at a time in [α̂n, 2α̂n]. A fine element longer than the
/// deleted one it meets is a scale inversion.
pub fn star_upgrade(
    live: Vec<PartitionElement>,
    removed: &[PartitionElement],
    n: usize,
    alpha_hat: f64,
) -> Result<(Vec<PartitionElement>, Vec<PartitionElement>)> {
    let (lo, hi) = (alpha_hat * n as f64, 2.0 * alpha_hat * n as f64);
    let coarse: Vec<&PartitionElement> = removed
        .iter()
        .filter(|r| !matches!(r.status, Status::Deleted(DeletionReason::Star)) && !r.status.is_live())
        .filter(|r| r.deleted_at.is_some_and(|t| t as f64 >= lo && t as f64 <= hi))
        .collect();
    let mut survivors = Vec::new();
    let mut deleted = Vec::new();
    for mut e in live {
        let mut hit = false;
        for c in coarse.iter().filter(|c| c.l != e.l && c.interval.overlaps(&e.interval)) {
            let (fine, big) = (e.interval.len(), c.interval.len());
            if fine > big {
                return Err(Error::ScaleInversion { fine: fine.to_f64(), coarse: big.to_f64() });
            }
            hit = true;
        }
        if hit {
            retire(&mut e, Status::Deleted(DeletionReason::Star), n);
            deleted.push(e);
        } else {
            survivors.push(e);
        }
    }
    Ok((survivors, deleted))
}

fn live_measure(elements: &[PartitionElement], l: usize, prec: u32) -> Float {
    sum_len(elements.iter().filter(|e| e.l == l && e.status.is_live()).map(|e| e.measure.clone()), prec)
}

/// One window [n, 2n].
pub(crate) fn run_window(ctx: &Ctx, state: &mut ExclusionState, index: usize, budget: usize) -> Result<WindowReport> {
    let n = state.time;
    let end = 2 * n;
    let k = ctx.k;
    let prec = ctx.prec;
    let inputs: Vec<Float> = state.tracked.iter().map(|&l| live_measure(&state.elements, l, prec)).collect();
    let floor_pre = k.gamma_b - 4.0 * k.k as f64 * k.alpha;
    for e in &state.elements {
        if let Some(x) = e.exponent_lower() {
            if x < floor_pre {
                return Err(Error::Invariant(format!(
                    "window {index}: element {} enters at n = {n} with exponent {x:.6} below {floor_pre:.6}",
                    e.id
                )));
            }
        }
    }
    let mut window_removed: Vec<PartitionElement> = Vec::new();
    let (mut elements, star_deleted) = star_upgrade(std::mem::take(&mut state.elements), &state.removed, n, k.alpha_hat)?;
    window_removed.extend(star_deleted);

    let mut acc = Outcome::default();
    for _ in n + 1..=end {
        let mut out = step_all(ctx, elements, budget)?;
        state.absorb(&mut out);
        elements = std::mem::take(&mut out.kept);
        window_removed.append(&mut out.removed);
        acc.merge(out);
    }

    let mut cert_fail = 0;
    let mut certified = Vec::with_capacity(elements.len());
    for mut e in elements {
        let c = e.curve()?;
        let mid = &c.samples[1];
        let hi = Float::with_val(2 * prec, &mid.param);
        let (fine, _) = Sample::compute(ctx.fam, e.l, hi, c.time, None)?;
        if chordal_distance(&fine.point.to_f64_point(), &mid.point.to_f64_point()) > CERT_TOL {
            cert_fail += 1;
            retire(&mut e, Status::Deleted(DeletionReason::Precision), end);
            window_removed.push(e);
        } else {
            certified.push(e);
        }
    }

    let cut = large_deviation_cut(certified, n, k);
    let cap_bindings = cut.cap_bindings;
    window_removed.extend(cut.deleted);
    window_removed.extend(cut.blind);

    let mut restoration = 0;
    let mut distortion_max: f64 = 0.0;
    let mut survivors = Vec::with_capacity(cut.survivors.len());
    for mut e in cut.survivors {
        let c = e.curve()?;
        distortion_max = distortion_max.max(c.distortion());
        if c.exponent_lower().is_some_and(|x| x < k.gamma_b) {
            restoration += 1;
            retire(&mut e, Status::Deleted(DeletionReason::Exponent), end);
            window_removed.push(e);
        } else {
            survivors.push(e);
        }
    }
    state.elements = survivors;
    state.time = end;

    let ld_bound = (n as f64 * (k.epsilon2 - k.theta * k.tau)).exp();
    let blind_bound = (-k.q_blind * n as f64).exp();
    let star_bound = 4.0 * (-k.alpha * k.alpha_hat * n as f64).exp();
    let mut measures = Vec::new();
    let mut achieved_beta = Vec::new();
    let (mut ld, mut blind, mut star) = (Vec::new(), Vec::new(), Vec::new());
    for (i, &l) in state.tracked.iter().enumerate() {
        let input = &inputs[i];
        let retained = live_measure(&state.elements, l, prec);
        let of = |pred: &dyn Fn(&Status) -> bool| {
            sum_len(window_removed.iter().filter(|e| e.l == l && pred(&e.status)).map(|e| e.measure.clone()), prec)
        };
        let basic = of(&|s| matches!(s, Status::Deleted(DeletionReason::BasicAssumption { .. })));
        let large = of(&|s| *s == Status::Deleted(DeletionReason::LargeDeviation));
        let bl = of(&|s| *s == Status::BlindDeleted);
        let st = of(&|s| *s == Status::Deleted(DeletionReason::Star));
        let ex = of(&|s| *s == Status::Deleted(DeletionReason::Exponent));
        let pr = of(&|s| *s == Status::Deleted(DeletionReason::Precision));
        let mut gap = Float::with_val(prec, input - &retained);
        for x in [&basic, &large, &bl, &st, &ex, &pr] {
            gap -= x;
        }
        let frac = |x: &Float| if *input > 0 { Float::with_val(prec, x / input).to_f64() } else { 0.0 };
        let residual = frac(&gap).abs();
        ld.push(BoundCheck::new(l, frac(&large), ld_bound));
        blind.push(BoundCheck::new(l, frac(&bl), blind_bound));
        star.push(BoundCheck::new(l, frac(&st), star_bound));
        let lost = 1.0 - frac(&retained);
        achieved_beta.push((*input > 0 && lost > 0.0).then(|| -lost.ln() / n as f64));
        measures.push(MeasureLine {
            l,
            input: input.to_f64(),
            retained: retained.to_f64(),
            deleted_basic: basic.to_f64(),
            deleted_large_deviation: large.to_f64(),
            deleted_blind: bl.to_f64(),
            deleted_star: st.to_f64(),
            deleted_exponent: ex.to_f64(),
            deleted_precision: pr.to_f64(),
            balance_residual: residual,
        });
    }
    state.removed.extend(window_removed);

    let exponent_floor = k.gamma_i - 4.0 * k.k as f64 * k.alpha;
    Ok(WindowReport {
        index,
        n,
        end,
        measures,
        retained_fraction: state.measure_retained(),
        achieved_beta,
        return_histogram: acc.depths,
        untracked_returns: acc.untracked,
        distortion_max,
        doubling: acc.doubling,
        bound_expansion: acc.boundexp,
        q_time: acc.qtime,
        basic_assumption: state.ba_audit(k.alpha, Some((n, end))),
        large_deviation: ld,
        blind,
        star,
        escape_cap_bindings: cap_bindings,
        exponent_min_at_returns: acc.exponents.iter().copied().reduce(f64::min),
        exponent_floor,
        exponent_floor_violations: acc.exponents.iter().filter(|&&x| x < exponent_floor).count(),
        restoration_failures: restoration,
        certification_failures: cert_fail,
        subsampled_splits: acc.subsampled,
        dropped_children: acc.dropped,
        active_elements: state.elements.len(),
    })
}

/// Start phases for every tracked critical point, then the windows.
pub fn run_exclusion(fam: &RationalFamily, k: &ConstantsLedger, cfg: &ExclusionConfig) -> Result<(ExclusionReport, ExclusionState)> {
    let ctx = Ctx::new(fam, k, cfg)?;
    let tracked = fam.tracked();
    if tracked.is_empty() {
        return Err(Error::InvalidFamily("no tracked critical point".into()));
    }
    let eps = fam.epsilon();
    let omega0 = Interval::from_f64(ctx.prec, -eps, eps);
    let mut state =
        ExclusionState { time: 0, omega0, tracked: tracked.clone(), elements: Vec::new(), removed: Vec::new(), anchors: BTreeMap::new() };
    let mut start = Vec::new();
    for &l in &tracked {
        let mut sp = start_phase_ctx(&ctx, l, cfg)?;
        state.absorb(&mut sp.audit);
        state.elements.extend(sp.elements);
        state.removed.extend(sp.removed);
        start.push(sp.entry);
    }
    let n0 = start.iter().map(|s| s.n_l).max().unwrap_or(0).max(cfg.window_start.unwrap_or(0));
    for s in &mut start {
        s.lead_in_steps = n0 - s.n_l;
    }
    loop {
        let (behind, ahead): (Vec<_>, Vec<_>) = std::mem::take(&mut state.elements).into_iter().partition(|e| e.time().is_some_and(|t| t < n0));
        state.elements = ahead;
        if behind.is_empty() {
            break;
        }
        let mut out = step_all(&ctx, behind, cfg.element_budget)?;
        state.absorb(&mut out);
        state.elements.append(&mut out.kept);
        state.removed.append(&mut out.removed);
    }
    state.time = n0;

    let mut windows = Vec::new();
    let mut horizon_reached = false;
    for w in 0..cfg.windows {
        if 2 * state.time > cfg.max_time || state.time == 0 {
            horizon_reached = true;
            break;
        }
        windows.push(run_window(&ctx, &mut state, w, cfg.element_budget).map_err(|e| Error::InWindow { index: w, source: Box::new(e) })?);
    }
    let report = ExclusionReport {
        family: fam.name().to_string(),
        epsilon: eps,
        precision_bits: ctx.prec,
        element_budget: cfg.element_budget,
        seed: cfg.seed,
        constants: k.clone(),
        start,
        windows,
        basic_assumption: state.ba_audit(k.alpha, None),
        retained_fraction: state.measure_retained(),
        horizon_reached,
    };
    Ok((report, state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::{derive_constants, ConstantsInputs, Direction, Probes};
    use crate::orbit::ReturnEvent;
    use crate::scalar::C64;
    use proptest::prelude::*;

    const P: u32 = 256;

    fn constants(fam: &RationalFamily) -> ConstantsLedger {
        let inputs = ConstantsInputs {
            probes: Probes { grid_points: 20_000, param_samples: 3, gamma0_len: 2000, outside_n: 20, outside_samples: 2000, seed: 3 },
            ..ConstantsInputs::default()
        };
        derive_constants(fam, &inputs).unwrap()
    }

    fn lattes() -> (RationalFamily, ConstantsLedger) {
        let fam = RationalFamily::lattes2(1e-6).unwrap();
        let k = constants(&fam);
        (fam, k)
    }

    fn event(time: usize, distance: f64) -> ReturnEvent {
        ReturnEvent {
            time,
            component: 1,
            distance,
            depth: depth_of(distance),
            kind: ReturnKind::Essential,
            depth_class: DepthClass::Shallow,
            bound_period: 0,
            free_period: 0,
            truncated: false,
        }
    }

    fn record(nu: usize, escape: EscapeTime, bound_end: Option<usize>) -> EscapeRecord {
        EscapeRecord { nu, depth: 8, deep: true, bound_end, escape, counted: true }
    }

    fn total(elements: &[PartitionElement]) -> Float {
        sum_len(elements.iter().map(|e| e.measure.clone()), P)
    }

    #[test]
    fn lattes_start_phase_reaches_large_scale() {
        let (fam, k) = lattes();
        let sp = start_phase(&fam, &k, 1, &ExclusionConfig::default()).unwrap();
        let e = &sp.entry;
        assert_eq!(e.trigger, StartTrigger::LargeScale);
        assert!(e.n_l > 1 && e.n_l < 20, "N = {}", e.n_l);
        assert!(e.diameter >= k.s_large);
        let ratio = e.diameter / e.tangent_diameter;
        assert!((0.5..=2.0).contains(&ratio), "discretized {} vs tangent {}", e.diameter, e.tangent_diameter);
        assert!(e.weak_distortion_q.is_some_and(|q| (1.0..2.0).contains(&q)));
        assert_eq!(total(&sp.elements), Interval::from_f64(P, -1e-6, 1e-6).len());
        for el in &sp.elements {
            assert!(el.geometry().unwrap().diam <= k.s_large);
        }
    }

    #[test]
    fn diameter_grows_at_free_steps_before_start() {
        let (fam, k) = lattes();
        let iv = Interval::from_f64(P, -1e-6, 1e-6);
        let (mut c, _) = Curve::fresh(&fam, 1, &iv, 1, None).unwrap();
        let mut prev = c.geometry().diam;
        while prev < k.s_large {
            c.step().unwrap();
            let d = c.geometry().diam;
            assert!(d > prev, "time {}", c.time);
            prev = d;
        }
    }

    #[test]
    fn frozen_family_never_starts() {
        let c = |x: f64| C64::new(x, 0.0);
        let fam =
            RationalFamily::new("still", vec![c(-2.0), c(0.0), c(1.0)], vec![c(0.0), c(0.0), c(1.0)], Direction::constant(0.0), 1e-6, 1e-3)
                .unwrap();
        let (_, k) = lattes();
        let cfg = ExclusionConfig { max_time: 40, ..ExclusionConfig::default() };
        let err = start_phase(&fam, &k, 1, &cfg).err().unwrap();
        assert_eq!(err, Error::StartPhaseHorizon { l: 1, horizon: 40 });
    }

    #[test]
    fn small_image_is_its_own_child() {
        let (fam, k) = lattes();
        let e = element_at(&fam, 1, Interval::from_f64(P, -1e-6, 1e-6), 3).unwrap();
        let (kept, removed) = classify_and_refine(&fam, &k, &ExclusionConfig::default(), e.clone()).unwrap();
        assert!(removed.is_empty());
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].interval, e.interval);
        assert_eq!(kept[0].measure, e.measure);
    }

    #[test]
    fn large_scale_split_into_two_equal_children() {
        let (fam, k) = lattes();
        let e = element_at(&fam, 1, Interval::from_f64(P, -1e-6, 1e-6), 7).unwrap();
        let d = e.geometry().unwrap().diam;
        assert!(d > k.s_large && d <= 2.0 * k.s_large, "diam {d}");
        let (kept, removed) = classify_and_refine(&fam, &k, &ExclusionConfig::default(), e.clone()).unwrap();
        assert!(removed.is_empty());
        assert_eq!(kept.len(), 2);
        assert_eq!(kept[0].interval.lo, e.interval.lo);
        assert_eq!(kept[0].interval.hi, kept[1].interval.lo);
        assert_eq!(kept[1].interval.hi, e.interval.hi);
        assert_eq!(kept[0].interval.len(), kept[1].interval.len());
        for c in &kept {
            assert!(c.geometry().unwrap().diam <= k.s_large);
            assert_eq!(c.status, Status::Escaped);
        }
        assert_eq!(total(&kept), e.measure);
    }

    #[test]
    fn essential_return_children_meet_the_whitney_bound() {
        let (fam, k) = lattes();
        let ctx = Ctx::new(&fam, &k, &ExclusionConfig::default()).unwrap();
        let omega = Interval::from_f64(P, -1e-6, 1e-6);
        // a sub-interval whose curve makes an essential return
        let mut found = None;
        'search: for t in 8..16 {
            let pieces = omega.split_equal(1 << 12);
            for iv in pieces.iter().step_by(7) {
                let e = element_at(&fam, 1, iv.clone(), t).unwrap();
                let g = e.geometry().unwrap();
                if ctx.nbhd.in_u(g.dist) && is_essential(g.diam, g.dist) && g.diam > 2.0 * whitney_upper(g.dist) {
                    found = Some(e);
                    break 'search;
                }
            }
        }
        let e = found.expect("an essential return with a large image");
        let t = e.time().unwrap();
        let thr = basic_threshold(&k, t);
        let (kept, removed) = classify_and_refine(&fam, &k, &ExclusionConfig::default(), e.clone()).unwrap();
        assert!(kept.len() >= 2);
        let mut all: Vec<&PartitionElement> = kept.iter().chain(removed.iter()).collect();
        all.sort_by(|a, b| a.interval.lo.partial_cmp(&b.interval.lo).unwrap());
        assert_eq!(all[0].interval.lo, e.interval.lo);
        assert_eq!(all.last().unwrap().interval.hi, e.interval.hi);
        for w in all.windows(2) {
            assert_eq!(w[0].interval.hi, w[1].interval.lo);
        }
        for c in &kept {
            let g = c.geometry().unwrap();
            assert!(g.diam <= whitney_upper(g.dist.max(thr)));
        }
        let mut sum = total(&kept);
        sum += total(&removed);
        let rel = Float::with_val(P, &sum - &e.measure).to_f64().abs() / e.measure.to_f64();
        assert!(rel < 1e-60, "{rel:e}");
    }

    #[test]
    fn basic_violators_are_deleted_with_their_time() {
        let (_, k) = lattes();
        let thr = basic_threshold(&k, 5);
        let ok = PartitionElement::synthetic(1, Interval::from_f64(P, 0.0, 1e-7), 1, vec![event(5, 2.0 * thr)]);
        let bad = PartitionElement::synthetic(2, Interval::from_f64(P, 1e-7, 3e-7), 1, vec![event(3, 0.1), event(5, 0.5 * thr)]);
        let (surv, del, m) = delete_basic_violators(vec![ok.clone(), bad], &k, 10);
        assert_eq!(surv.len(), 1);
        assert_eq!(surv[0].id, 1);
        assert_eq!(del[0].status, Status::Deleted(DeletionReason::BasicAssumption { time: 5 }));
        assert_eq!(del[0].status.to_string(), "deleted(basic-assumption@5)");
        assert_eq!(m, Interval::from_f64(P, 1e-7, 3e-7).len());
        // violations after up_to are not looked at
        let late = PartitionElement::synthetic(3, Interval::from_f64(P, 0.0, 1e-7), 1, vec![event(12, 0.0)]);
        assert_eq!(delete_basic_violators(vec![late], &k, 10).0.len(), 1);
        let (surv, del, _) = delete_basic_violators(vec![ok], &k, 10);
        assert_eq!((surv.len(), del.len()), (1, 0));
    }

    #[test]
    fn large_deviation_cut_is_inclusive() {
        let (_, mut k) = lattes();
        k.tau = 0.5;
        let n = 10;
        let mk = |id: u64, recs: Vec<EscapeRecord>| {
            let mut e = PartitionElement::synthetic(id, Interval::from_f64(P, id as f64, id as f64 + 1.0), 1, Vec::new());
            e.escape_records = recs;
            e
        };
        let at = mk(1, vec![record(12, EscapeTime::Finite(3), Some(13)), record(15, EscapeTime::Finite(2), Some(16))]);
        let below = mk(2, vec![record(12, EscapeTime::Finite(4), Some(13))]);
        let outside = mk(3, vec![record(9, EscapeTime::Finite(9), Some(10))]);
        // E = 30 is capped at 2n − ν = 1
        let capped = mk(4, vec![record(19, EscapeTime::Finite(30), Some(19))]);
        let cut = large_deviation_cut(vec![at, below, outside, capped], n, &k);
        assert_eq!(cut.deleted.iter().map(|e| e.id).collect::<Vec<_>>(), vec![1]);
        assert_eq!(cut.deleted[0].t_accumulator, 5);
        assert_eq!(cut.deleted[0].status, Status::Deleted(DeletionReason::LargeDeviation));
        assert_eq!(cut.survivors.iter().map(|e| e.t_accumulator).collect::<Vec<_>>(), vec![4, 0, 1]);
        assert_eq!(cut.cap_bindings, 1);
        assert!(cut.blind.is_empty());
    }

    #[test]
    fn long_open_final_escape_is_blind() {
        let (_, mut k) = lattes();
        let n = 10;
        k.h = 10.0;
        k.alpha = 0.01; // 6hαn = 6
        k.tau = 1.0;
        let mut e = PartitionElement::synthetic(1, Interval::from_f64(P, 0.0, 1.0), 1, Vec::new());
        e.escape_records = vec![record(11, EscapeTime::Finite(1), Some(12)), record(13, EscapeTime::Open, Some(14))];
        let cut = large_deviation_cut(vec![e.clone()], n, &k);
        assert_eq!(cut.blind.len(), 1);
        assert_eq!(cut.blind[0].status, Status::BlindDeleted);
        e.escape_records[1].bound_end = Some(15);
        assert_eq!(large_deviation_cut(vec![e], n, &k).survivors.len(), 1);
    }

    fn deleted(id: u64, l: usize, lo: f64, hi: f64, at: usize) -> PartitionElement {
        let mut e = PartitionElement::synthetic(id, Interval::from_f64(P, lo, hi), l, Vec::new());
        retire(&mut e, Status::Deleted(DeletionReason::BasicAssumption { time: at }), at);
        e
    }

    #[test]
    fn star_upgrade_without_other_deletions_is_identity() {
        let live: Vec<_> = (0..4).map(|i| PartitionElement::synthetic(i, Interval::from_f64(P, i as f64, i as f64 + 1.0), 1, vec![])).collect();
        let removed = vec![deleted(9, 1, 0.0, 3.0, 5), deleted(10, 0, 0.0, 3.0, 50)];
        let (surv, del) = star_upgrade(live.clone(), &removed, 6, 0.5).unwrap();
        assert!(del.is_empty());
        assert_eq!(surv.len(), live.len());
    }

    #[test]
    fn coarse_deletion_removes_the_three_fine_elements_under_it() {
        let live: Vec<_> = (0..4).map(|i| PartitionElement::synthetic(i, Interval::from_f64(P, i as f64, i as f64 + 1.0), 1, vec![])).collect();
        let removed = vec![deleted(9, 0, 0.0, 3.0, 5)];
        let (surv, del) = star_upgrade(live, &removed, 6, 0.5).unwrap();
        assert_eq!(del.iter().map(|e| e.id).collect::<Vec<_>>(), vec![0, 1, 2]);
        assert!(del.iter().all(|e| e.status == Status::Deleted(DeletionReason::Star)));
        assert_eq!(surv.iter().map(|e| e.id).collect::<Vec<_>>(), vec![3]);
    }

    #[test]
    fn fine_element_larger_than_coarse_is_an_inversion() {
        let live = vec![PartitionElement::synthetic(0, Interval::from_f64(P, 0.0, 4.0), 1, vec![])];
        let removed = vec![deleted(9, 0, 1.0, 2.0, 5)];
        assert!(matches!(star_upgrade(live, &removed, 6, 0.5), Err(Error::ScaleInversion { .. })));
    }

    #[test]
    fn starred_sets_sit_inside_unstarred() {
        let (_, mut k) = lattes();
        k.alpha_hat = 0.5;
        let live: Vec<_> = (0..4).map(|i| PartitionElement::synthetic(i, Interval::from_f64(P, i as f64, i as f64 + 1.0), 1, vec![])).collect();
        let removed = vec![deleted(9, 0, 0.5, 1.5, 5), deleted(10, 0, 2.5, 3.0, 2)];
        let s = status_sets(&live, &removed, &[0, 1], 6, 0.0, &k);
        let l1 = &s.per_l[1];
        let len = |v: &[Interval]| v.iter().map(|i| i.len().to_f64()).sum::<f64>();
        assert_eq!(len(&l1.b), 3.5);
        assert_eq!(len(&l1.b_star), 2.5);
        assert_eq!(len(&l1.e), 4.0);
        for x in &l1.b_star {
            assert!(l1.b.iter().any(|y| y.lo <= x.lo && x.hi <= y.hi));
        }
    }

    #[test]
    fn retained_measure_of_intersections() {
        let eps = 1e-6;
        let omega = Interval::from_f64(P, -eps, eps);
        let whole = vec![PartitionElement::synthetic(0, omega.clone(), 0, vec![]), PartitionElement::synthetic(1, omega.clone(), 1, vec![])];
        assert_eq!(measure_retained(&whole, &[0, 1], &omega), 1.0);
        let parts = vec![
            PartitionElement::synthetic(0, Interval::from_f64(P, 0.0, eps), 0, vec![]),
            PartitionElement::synthetic(1, Interval::from_f64(P, eps / 2.0, eps), 1, vec![]),
        ];
        assert!((measure_retained(&parts, &[0, 1], &omega) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn quotas_share_the_budget_per_critical_point() {
        let mk = |l| PartitionElement::synthetic(0, Interval::from_f64(P, 0.0, 1.0), l, vec![]);
        let els = vec![mk(0), mk(0), mk(0), mk(1)];
        assert_eq!(quotas(&els, 10), vec![4, 3, 3, 10]);
        assert_eq!(quotas(&els, 2), vec![1, 1, 1, 2]);
    }

    proptest! {
        #[test]
        fn selection_is_sorted_distinct_and_sized(k in 1usize..500, quota in 1usize..300, seed in any::<u64>()) {
            let s = select(k, quota, seed);
            prop_assert_eq!(s.len(), k.min(quota));
            prop_assert!(s.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(s.iter().all(|&i| i < k));
        }
    }

    #[test]
    fn single_window_balances_and_repeats() {
        let (fam, k) = lattes();
        let cfg = ExclusionConfig { windows: 1, element_budget: 48, ..ExclusionConfig::default() };
        let (a, sa) = run_exclusion(&fam, &k, &cfg).unwrap();
        let (b, _) = run_exclusion(&fam, &k, &cfg).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        let w = &a.windows[0];
        assert!(w.balanced(1e-12), "{:?}", w.measures);
        assert_eq!(w.end, 2 * w.n);
        assert!(a.retained_fraction > 0.0 && a.retained_fraction <= 1.0);
        let m = &w.measures[0];
        assert!(m.retained <= m.input);
        // live elements are disjoint
        let mut iv: Vec<&Interval> = sa.elements.iter().map(|e| &e.interval).collect();
        iv.sort_by(|x, y| x.lo.partial_cmp(&y.lo).unwrap());
        assert!(iv.windows(2).all(|p| p[0].hi <= p[1].lo));
    }

    #[test]
    fn zero_windows_stop_after_the_start_phase() {
        let (fam, k) = lattes();
        let cfg = ExclusionConfig { windows: 0, ..ExclusionConfig::default() };
        let (r, _) = run_exclusion(&fam, &k, &cfg).unwrap();
        assert!(r.windows.is_empty());
        assert_eq!(r.start.len(), 1);
        assert_eq!(r.retained_fraction, 1.0);
    }
}
