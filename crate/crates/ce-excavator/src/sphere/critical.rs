//! Critical points: zeros of the Jacobian form, with multiplicities.

use super::map::RationalMap;
use super::point::{chordal_distance, Chart, SpherePoint};
use super::poly;
use crate::error::{Error, Result};
use crate::scalar::{Scalar, C64};

/// A critical point with its local degree (multiplicity of the Jacobian zero plus one).
#[derive(Clone, Debug)]
pub struct CriticalPoint<S: Scalar> {
    pub point: SpherePoint<S>,
    pub local_degree: usize,
}

const MULTIPLICITY_TOL: f64 = 1e-8;
const CLUSTER_RADIUS: f64 = 1e-3;

/// Chart polynomial of the Jacobian form with coefficients in S.
pub(crate) fn chart_poly<S: Scalar>(f: &RationalMap<S>, chart: Chart) -> Vec<S> {
    let c = f.jacobian().coeffs().to_vec();
    match chart {
        Chart::Affine => c,
        Chart::Inverse => c.into_iter().rev().collect(),
    }
}

pub(crate) fn derivative_s<S: Scalar>(p: &[S]) -> Vec<S> {
    if p.len() <= 1 {
        let prec = p.first().map(|c| c.prec()).unwrap_or(53);
        return vec![S::zero(prec)];
    }
    p.iter().enumerate().skip(1).map(|(k, c)| c.mul_f64(k as f64)).collect()
}

pub(crate) fn eval_s<S: Scalar>(p: &[S], x: &S) -> S {
    let mut acc = p[p.len() - 1].clone();
    for c in p[..p.len() - 1].iter().rev() {
        acc = acc.mul(x).add(c);
    }
    acc
}

fn abs_sum(p: &[C64], x: C64) -> f64 {
    // scale for relative residuals: Σ |c_k| |x|^k
    let r = x.norm().max(1.0);
    p.iter().enumerate().map(|(k, c)| c.norm() * r.powi(k as i32)).sum()
}

/// Newton polish of a root of multiplicity m: Newton on the (m−1)-th derivative.
pub(crate) fn polish<S: Scalar>(chart_poly: &[S], start: &S, m: usize) -> Result<S> {
    let mut g = chart_poly.to_vec();
    for _ in 1..m {
        g = derivative_s(&g);
    }
    let dg = derivative_s(&g);
    let gc: Vec<C64> = g.iter().map(|c| c.to_c64()).collect();
    let prec = start.prec();
    let tol = 2f64.powi(-(prec as i32) + 12);
    let mut x = start.clone();
    for _ in 0..200 {
        let gv = eval_s(&g, &x);
        if gv.is_zero() {
            return Ok(x);
        }
        let dv = eval_s(&dg, &x);
        if dv.is_zero() {
            break;
        }
        let step = gv.div(&dv);
        x = x.sub(&step);
        if step.abs() <= tol * x.abs().max(1.0) {
            return Ok(x);
        }
    }
    let xc = x.to_c64();
    let residual = eval_s(&g, &x).abs() / abs_sum(&gc, xc).max(f64::MIN_POSITIVE);
    if residual < 1e-10 {
        Ok(x)
    } else {
        Err(Error::RootFinding { residual })
    }
}

/// Order of vanishing of the chart polynomial at x (relative tolerance).
fn vanishing_order<S: Scalar>(chart_poly: &[S], x: &S) -> usize {
    let mut g = chart_poly.to_vec();
    let xc = x.to_c64();
    let mut order = 0;
    loop {
        let gc: Vec<C64> = g.iter().map(|c| c.to_c64()).collect();
        if poly::is_zero(&gc) {
            return order;
        }
        let rel = eval_s(&g, x).abs() / abs_sum(&gc, xc);
        if rel >= MULTIPLICITY_TOL {
            return order;
        }
        order += 1;
        g = derivative_s(&g);
    }
}

/// All critical points of f with local degrees. The Jacobian form is
/// root-found in the affine chart; roots lost to a degree deficit sit at ∞.
/// Each cluster is polished in the chart where it has modulus ≤ 1.
pub fn critical_points<S: Scalar>(f: &RationalMap<S>) -> Result<Vec<CriticalPoint<S>>> {
    let prec = f.prec();
    let total = 2 * f.degree() - 2;
    let jc = f.jacobian().to_c64();
    let affine_deg = poly::degree(&jc);
    let mut raw: Vec<SpherePoint<C64>> = poly::roots(&jc[..=affine_deg])
        .into_iter()
        .map(|r| SpherePoint::from_c64(53, r))
        .collect();
    for _ in affine_deg..total {
        raw.push(SpherePoint::infinity(53));
    }
    // greedy clustering on the sphere
    let mut clusters: Vec<(SpherePoint<C64>, usize)> = Vec::new();
    for r in raw {
        match clusters.iter_mut().find(|(c, _)| chordal_distance(c, &r) < CLUSTER_RADIUS) {
            Some(entry) => entry.1 += 1,
            None => clusters.push((r, 1)),
        }
    }
    let mut out = Vec::new();
    for (center, m) in clusters {
        let chart = center.chart();
        let cp = chart_poly(f, chart);
        let x0 = center.coordinate(chart).unwrap_or_else(|| C64::new(0.0, 0.0));
        let x = polish(&cp, &S::from_c64(prec, x0), m)?;
        let order = vanishing_order(&cp, &x);
        if order != m {
            return Err(Error::RootFinding { residual: eval_s(&cp, &x).abs() });
        }
        let point = match chart {
            Chart::Affine => SpherePoint::finite(x),
            Chart::Inverse => SpherePoint::new(S::one(prec), x)?,
        };
        let sharp = f.spherical_derivative(&point);
        if sharp >= 1e-8 {
            return Err(Error::RootFinding { residual: sharp });
        }
        out.push(CriticalPoint { point, local_degree: m + 1 });
    }
    let count: usize = out.iter().map(|c| c.local_degree - 1).sum();
    if count != total {
        return Err(Error::InvalidMap(format!("Riemann-Hurwitz count {count} != {total}")));
    }
    sort_critical(&mut out);
    Ok(out)
}

/// Finite points by (|z|, arg z), infinity last.
pub(crate) fn sort_critical<S: Scalar>(v: &mut [CriticalPoint<S>]) {
    let key = |c: &CriticalPoint<S>| match c.point.to_c64() {
        None => (f64::INFINITY, 0.0),
        Some(z) => ((z.norm() * 1e9).round() / 1e9, z.arg()),
    };
    v.sort_by(|a, b| key(a).partial_cmp(&key(b)).unwrap_or(std::cmp::Ordering::Equal));
}

/// Largest local degree K.
pub fn max_local_degree<S: Scalar>(crit: &[CriticalPoint<S>]) -> usize {
    crit.iter().map(|c| c.local_degree).max().unwrap_or(0)
}
