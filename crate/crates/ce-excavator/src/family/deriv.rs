//! Parameter derivatives of critical orbits and transversality sums.

use super::RationalFamily;
use crate::error::{Error, Result};
use crate::orbit::trace::OrbitTrace;
use crate::scalar::{Scalar, C64};
use crate::sphere::critical::{chart_poly, derivative_s, eval_s};
use crate::sphere::map::LocalJet;
use crate::sphere::orbit::iterate_raw;
use crate::sphere::{iterate_orbit, Chart, Form, RationalMap, SpherePoint};
use serde::Serialize;

/// A tangent vector at a sphere point, expressed in one chart.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Tangent {
    pub chart: Chart,
    pub value: C64,
}

/// Re-express a tangent at the point with chart coordinate x (in `from`).
fn convert(value: C64, x: C64, from: Chart, to: Chart) -> C64 {
    if from == to {
        value
    } else {
        -value / (x * x)
    }
}

impl Tangent {
    pub fn in_chart<S: Scalar>(&self, at: &SpherePoint<S>, chart: Chart) -> C64 {
        let x = at.coordinate(self.chart).map(|v| v.to_c64()).unwrap_or_default();
        convert(self.value, x, self.chart, chart)
    }
}

/// ∂_a f at p read in `target`: W/Q (affine) or −Q W/P² (inverse).
fn param_partial<S: Scalar>(jet: &LocalJet<S>, weight: &Form<S>, p: &SpherePoint<S>, target: Chart) -> C64 {
    let w = weight.eval(p.z(), p.w());
    match target {
        Chart::Affine => w.div(&jet.q).to_c64(),
        Chart::Inverse => jet.q.mul(&w).div(&jet.p.mul(&jet.p)).neg().to_c64(),
    }
}

fn weight_form<S: Scalar>(fam: &RationalFamily, prec: u32) -> Form<S> {
    Form::new(fam.weight_form().iter().map(|c| S::from_c64(prec, *c)).collect())
}

/// c_l′(a) in the chart of the critical point, by implicit differentiation
/// of the (m−1)-th derivative of the Jacobian chart polynomial.
fn critical_velocity<S: Scalar>(fam: &RationalFamily, l: usize, f: &RationalMap<S>, c: &SpherePoint<S>) -> Result<Tangent> {
    let path = fam.path(l)?;
    let prec = f.prec();
    let mut g = chart_poly(f, path.chart);
    let mut ga: Vec<S> = {
        let j1 = fam.jacobian_a_derivative();
        let mut v: Vec<S> = j1.iter().map(|x| S::from_c64(prec, *x)).collect();
        v.resize(g.len(), S::zero(prec));
        if path.chart == Chart::Inverse {
            v.reverse();
        }
        v
    };
    for _ in 1..path.local_degree - 1 {
        g = derivative_s(&g);
        ga = derivative_s(&ga);
    }
    let x = c.coordinate(path.chart).ok_or_else(|| Error::Invariant("critical point at chart pole".into()))?;
    let num = eval_s(&ga, &x);
    if num.is_zero() {
        return Ok(Tangent { chart: path.chart, value: C64::new(0.0, 0.0) });
    }
    let den = eval_s(&derivative_s(&g), &x);
    if den.is_zero() {
        return Err(Error::Invariant(format!("critical point {l} is not simple in its jet")));
    }
    Ok(Tangent { chart: path.chart, value: num.div(&den).neg().to_c64() })
}

/// Orbit ξ_{k,l}(a), k = 0..=n, with ξ′_k from the recursion
/// ξ′_{k+1} = ∂_z f(ξ_k)·ξ′_k + ∂_a f(ξ_k), seeded with c_l′(a).
pub fn orbit_with_param_derivative<S: Scalar>(
    fam: &RationalFamily,
    l: usize,
    a: &S::Real,
    n: usize,
    prec: u32,
) -> Result<(OrbitTrace, Vec<Tangent>)> {
    let af = S::real_to_f64(a);
    let f = fam.map_at::<S>(a, prec)?;
    let crit = fam.critical_set_at(af, &f)?;
    let c = crit.get(l).ok_or(Error::CriticalIndex(l))?.0.clone();
    let frag = iterate_orbit(&f, &c, n)?;
    if frag.precision_exhausted {
        return Err(Error::PrecisionExhausted { step: n, horizon: frag.certified_horizon });
    }
    let weight = weight_form::<S>(fam, prec);
    let seed = critical_velocity(fam, l, &f, &c)?;
    let mut tangents = Vec::with_capacity(n + 1);
    tangents.push(Tangent { chart: c.chart(), value: seed.in_chart(&c, c.chart()) });
    for k in 0..n {
        let p = &frag.points[k];
        let target = frag.points[k + 1].chart();
        let jet = f.jet(p);
        let d = f.chart_derivative_from(p, &jet, target);
        let value = d * tangents[k].value + param_partial(&jet, &weight, p, target);
        tangents.push(Tangent { chart: target, value });
    }
    let trace = OrbitTrace::from_orbit(&f, &frag.points, &crit, 1, frag.certified_horizon, af, Some(l));
    Ok((trace, tangents))
}

/// Running sums of ∂_a f(ξ_n)/Df^n(v) for n < m_max, in the chart of v.
/// Entry m − 1 is the m-term partial sum; also returns max |∂_a f(ξ_n)|.
fn transversality_sums<S: Scalar>(fam: &RationalFamily, l: usize, a: &S::Real, m_max: usize, prec: u32) -> Result<(Vec<C64>, Vec<C64>, f64)> {
    let af = S::real_to_f64(a);
    let f = fam.map_at::<S>(a, prec)?;
    let crit = fam.critical_set_at(af, &f)?;
    let c = crit.get(l).ok_or(Error::CriticalIndex(l))?.0.clone();
    let (points, _) = iterate_raw(&f, &c, m_max)?;
    let weight = weight_form::<S>(fam, prec);
    let mut sums = Vec::with_capacity(m_max);
    // derivs[n] = Df^n(v) from chart(ξ_1) to chart(ξ_{n+1})
    let mut derivs = Vec::with_capacity(m_max);
    let mut d = C64::new(1.0, 0.0);
    let mut acc = C64::new(0.0, 0.0);
    let mut b: f64 = 0.0;
    for n in 0..m_max {
        let p = &points[n];
        let target = points[n + 1].chart();
        let jet = f.jet(p);
        if n >= 1 {
            d *= f.chart_derivative_from(p, &jet, target);
            if d == C64::new(0.0, 0.0) {
                return Err(Error::DerivativeUnderflow { step: n });
            }
        }
        let an = param_partial(&jet, &weight, p, target);
        b = b.max(an.norm());
        if d.norm().is_finite() {
            acc += an / d;
        }
        sums.push(acc);
        derivs.push(d);
    }
    Ok((sums, derivs, b))
}

/// Partial sum Σ_{n=0}^{m−1} ∂_a f(ξ_n)/Df^n(v_l(a)), in the chart of v_l(a).
pub fn transversality_ratio<S: Scalar>(fam: &RationalFamily, l: usize, a: &S::Real, m: usize, prec: u32) -> Result<C64> {
    if m == 0 {
        return Ok(C64::new(0.0, 0.0));
    }
    let (sums, _, _) = transversality_sums::<S>(fam, l, a, m, prec)?;
    Ok(sums[m - 1])
}

/// Partial sums at m and 2m with the tail bound B Σ_{n=m}^{2m} e^{−γ n}/C,
/// and the cross-check ξ′_m / Df^{m−1}(v).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TransversalityCertificate {
    pub m: usize,
    pub partial_m: C64,
    pub partial_2m: C64,
    pub cauchy_gap: f64,
    pub tail_bound: f64,
    /// Max |∂_a f| seen along the orbit up to 2m.
    pub b_bound: f64,
    pub cauchy_ok: bool,
    pub magnitude: f64,
    /// |L| above 1e−8.
    pub nondegenerate: bool,
    pub cross_check: C64,
    pub cross_check_rel_err: f64,
}

pub const NONDEGENERACY_THRESHOLD: f64 = 1e-8;

pub fn transversality_certificate<S: Scalar>(
    fam: &RationalFamily,
    l: usize,
    a: &S::Real,
    m: usize,
    gamma: f64,
    c0: f64,
    prec: u32,
) -> Result<TransversalityCertificate> {
    if m == 0 {
        return Err(Error::Invariant("certificate needs m >= 1".into()));
    }
    let (sums, derivs, b) = transversality_sums::<S>(fam, l, a, 2 * m, prec)?;
    let (pm, p2m) = (sums[m - 1], sums[2 * m - 1]);
    let tail: f64 = (m..=2 * m).map(|n| (-gamma * n as f64).exp()).sum::<f64>() * b / c0;
    let (_, tangents) = orbit_with_param_derivative::<S>(fam, l, a, m, prec)?;
    // ξ′_m lives in chart(ξ_m); derivs[m−1] maps chart(ξ_1) into chart(ξ_m)
    let cross = tangents[m].value / derivs[m - 1];
    let gap = (pm - p2m).norm();
    let magnitude = p2m.norm();
    Ok(TransversalityCertificate {
        m,
        partial_m: pm,
        partial_2m: p2m,
        cauchy_gap: gap,
        tail_bound: tail,
        b_bound: b,
        cauchy_ok: gap <= tail,
        magnitude,
        nondegenerate: magnitude > NONDEGENERACY_THRESHOLD,
        cross_check: cross,
        cross_check_rel_err: (cross - pm).norm() / pm.norm().max(f64::MIN_POSITIVE),
    })
}

/// |Df_a^n(v_l(a)) / Df_b^n(v_l(b)) − 1| from the two ledgers.
pub fn distortion_ratio<S: Scalar>(fam: &RationalFamily, l: usize, a: &S::Real, b: &S::Real, n: usize, prec: u32) -> Result<f64> {
    let ta = crate::orbit::trace::critical_trace::<S>(fam, l, a, n + 1, prec)?;
    let tb = crate::orbit::trace::critical_trace::<S>(fam, l, b, n + 1, prec)?;
    let usable = ta.usable_steps().min(tb.usable_steps());
    if usable < n {
        return Err(Error::PrecisionExhausted { step: n, horizon: usable });
    }
    Ok((ta.ledger.get(n) - tb.ledger.get(n)).exp_m1().abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::Direction;
    use crate::scalar::BigComplex;
    use rug::Float;

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    #[test]
    fn lattes_second_derivative_is_five() {
        let fam = RationalFamily::lattes2(1e-3).unwrap();
        let (_, t) = orbit_with_param_derivative::<C64>(&fam, 1, &0.0, 3, 53).unwrap();
        // ξ_1 = 1 + a, ξ_2 = 1 + a − 2/(1 + a)²
        assert!((t[1].value - c(1.0)).norm() < 1e-14);
        assert!((t[2].value - c(5.0)).norm() < 1e-13);
        assert_eq!(t[2].chart, Chart::Affine);
    }

    #[test]
    fn constant_family_has_no_parameter_derivative() {
        let fam = RationalFamily::new("frozen", vec![c(-2.0), c(0.0), c(1.0)], vec![c(0.0), c(0.0), c(1.0)], Direction::constant(0.0), 1e-3, 1e-3).unwrap();
        let (_, t) = orbit_with_param_derivative::<C64>(&fam, 1, &0.0, 10, 53).unwrap();
        assert!(t.iter().all(|v| v.value == c(0.0)));
        for m in 1..6 {
            assert_eq!(transversality_ratio::<C64>(&fam, 1, &0.0, m, 53).unwrap(), c(0.0));
        }
    }

    #[test]
    fn single_term_is_the_partial_at_c() {
        let fam = RationalFamily::lattes2(1e-3).unwrap();
        assert_eq!(transversality_ratio::<C64>(&fam, 1, &0.0, 1, 53).unwrap(), c(1.0));
    }

    #[test]
    fn lattes_sum_is_geometric() {
        let fam = RationalFamily::lattes2(1e-3).unwrap();
        // 1 + 1/4 − 1/16 + 1/64 − ... = 6/5
        let s = transversality_ratio::<C64>(&fam, 1, &0.0, 30, 53).unwrap();
        assert!((s - c(1.2)).norm() < 1e-12, "{s}");
        let cert = transversality_certificate::<C64>(&fam, 1, &0.0, 30, 4f64.ln() / 6.0, 1.0, 53).unwrap();
        assert!(cert.cauchy_ok && cert.nondegenerate);
        assert!(cert.cross_check_rel_err < 1e-4);
    }

    #[test]
    fn recursion_matches_finite_differences_off_base() {
        let fam = RationalFamily::lattes2(1e-3).unwrap();
        let prec = 256;
        let a0 = 1e-5;
        let (_, t) = orbit_with_param_derivative::<BigComplex>(&fam, 1, &Float::with_val(prec, a0), 20, prec).unwrap();
        let h = 1e-20;
        let orbit = |a: Float| {
            let f = fam.map_at::<BigComplex>(&a, prec).unwrap();
            let cp = fam.critical_point_at(1, a.to_f64(), &f).unwrap();
            iterate_raw(&f, &cp, 20).unwrap().0
        };
        let plus = orbit(Float::with_val(prec, a0) + h);
        let minus = orbit(Float::with_val(prec, a0) - h);
        for k in 1..=20 {
            let chart = t[k].chart;
            let xp = plus[k].coordinate(chart).unwrap();
            let xm = minus[k].coordinate(chart).unwrap();
            let fd = xp.sub(&xm).to_c64() / (2.0 * h);
            let rel = (fd - t[k].value).norm() / t[k].value.norm();
            assert!(rel < 1e-4, "k = {k}: {fd} vs {}", t[k].value);
        }
    }

    #[test]
    fn distortion_examples() {
        let fam = RationalFamily::lattes2(1e-3).unwrap();
        let prec = 128;
        let a = Float::with_val(prec, 3e-4);
        assert_eq!(distortion_ratio::<BigComplex>(&fam, 1, &a, &a, 5, prec).unwrap(), 0.0);
        let b = Float::with_val(prec, 3e-4 + 1e-12);
        assert!(distortion_ratio::<BigComplex>(&fam, 1, &a, &b, 5, prec).unwrap() <= 1e-6);
    }
}
