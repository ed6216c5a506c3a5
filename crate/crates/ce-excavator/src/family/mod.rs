//! One-parameter families f_a = f₀ + a·u with tracked critical points.

pub mod constants;
pub mod deriv;

use crate::error::{Error, Result};
use crate::scalar::{Scalar, C64};
use crate::sphere::critical::{chart_poly, critical_points, polish};
use crate::sphere::orbit::iterate_raw;
use crate::sphere::poly;
use crate::sphere::{chordal_distance, Chart, RationalMap, SpherePoint};

pub use constants::{derive_constants, ConstantsInputs, ConstantsLedger, Probes};
pub use deriv::{distortion_ratio, orbit_with_param_derivative, transversality_certificate, transversality_ratio, Tangent, TransversalityCertificate};

/// Perturbation direction u = numerator / denominator (ascending coefficients).
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Direction {
    pub numerator: Vec<C64>,
    pub denominator: Vec<C64>,
}

impl Direction {
    pub fn constant(c: f64) -> Self {
        Self { numerator: vec![C64::new(c, 0.0)], denominator: vec![C64::new(1.0, 0.0)] }
    }
}

/// Number of table steps per unit ε on each side of a = 0.
const PATH_STEPS: usize = 1024;
/// Iterates checked when deciding whether a critical point is tracked.
const RELATION_DEPTH: usize = 24;
const RELATION_TOL: f64 = 1e-8;

/// A critical point c_l(a), followed by Newton continuation.
#[derive(Clone, Debug)]
pub struct CriticalPath {
    pub local_degree: usize,
    /// Chart in which the path is tracked (the chart of c_l(0)).
    pub chart: Chart,
    /// c_l(0) as an f64 point.
    pub base: SpherePoint<C64>,
    /// False when the forward orbit of the critical value meets Crit.
    pub tracked: bool,
    /// Chart coordinates at a_j = −ε + j ε / PATH_STEPS.
    table: Vec<C64>,
}

#[derive(Clone, Debug)]
pub struct RationalFamily {
    name: String,
    base_num: Vec<C64>,
    base_den: Vec<C64>,
    direction: Direction,
    /// Numerator increment W with f_a = (P₀ + a W) / Q₀.
    weight: Vec<C64>,
    degree: usize,
    epsilon: f64,
    paths: Vec<CriticalPath>,
}

impl RationalFamily {
    /// Build f_a = P₀/Q₀ + a·u. The poles of u must be poles of f₀ (u's
    /// denominator divides Q₀), otherwise the degree would jump for a ≠ 0.
    pub fn new(name: &str, num: Vec<C64>, den: Vec<C64>, direction: Direction, epsilon: f64, collision_floor: f64) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::InvalidFamily(format!("epsilon must be positive, got {epsilon}")));
        }
        let base = RationalMap::<C64>::from_c64(53, &num, &den)?;
        let degree = base.degree();
        if poly::is_zero(&direction.denominator) {
            return Err(Error::InvalidFamily("direction denominator is zero".into()));
        }
        let (quot, rem) = poly::divide(&den, &direction.denominator);
        let scale = poly::max_abs(&den).max(1.0);
        if poly::max_abs(&rem) > 1e-12 * scale {
            return Err(Error::InvalidFamily("poles of the direction u must be poles of f0".into()));
        }
        let weight = poly::trim(&poly::mul(&direction.numerator, &quot));
        if poly::degree(&weight) > degree {
            return Err(Error::InvalidFamily(format!(
                "direction raises the degree ({} > {degree})",
                poly::degree(&weight)
            )));
        }
        let mut fam = Self {
            name: name.to_string(),
            base_num: num,
            base_den: den,
            direction,
            weight,
            degree,
            epsilon,
            paths: Vec::new(),
        };
        fam.paths = fam.build_paths(collision_floor)?;
        Ok(fam)
    }

    /// f_a(z) = 1 − 2/z² + a, a flexible Lattès map at a = 0.
    pub fn lattes2(epsilon: f64) -> Result<Self> {
        let c = |x: f64| C64::new(x, 0.0);
        Self::new("lattes2", vec![c(-2.0), c(0.0), c(1.0)], vec![c(0.0), c(0.0), c(1.0)], Direction::constant(1.0), epsilon, 1e-3)
    }

    /// f_a(z) = z² − 2 + a (Chebyshev at a = 0).
    pub fn quadratic(epsilon: f64) -> Result<Self> {
        let c = |x: f64| C64::new(x, 0.0);
        Self::new("quadratic", vec![c(-2.0), c(0.0), c(1.0)], vec![c(1.0)], Direction::constant(1.0), epsilon, 1e-3)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn direction(&self) -> &Direction {
        &self.direction
    }

    pub fn base_coefficients(&self) -> (&[C64], &[C64]) {
        (&self.base_num, &self.base_den)
    }

    pub fn paths(&self) -> &[CriticalPath] {
        &self.paths
    }

    pub fn path(&self, l: usize) -> Result<&CriticalPath> {
        self.paths.get(l).ok_or(Error::CriticalIndex(l))
    }

    /// Indices of tracked critical points (Crit′).
    pub fn tracked(&self) -> Vec<usize> {
        (0..self.paths.len()).filter(|&l| self.paths[l].tracked).collect()
    }

    /// Max local degree K.
    pub fn max_local_degree(&self) -> usize {
        self.paths.iter().map(|p| p.local_degree).max().unwrap_or(0)
    }

    /// True when u ≡ 0.
    pub fn is_constant(&self) -> bool {
        poly::is_zero(&self.weight)
    }

    pub fn base_map<S: Scalar>(&self, prec: u32) -> RationalMap<S> {
        RationalMap::from_c64(prec, &self.base_num, &self.base_den).expect("base map validated at construction")
    }

    fn check_range(&self, a: f64) -> Result<()> {
        if !(a.abs() <= self.epsilon) {
            return Err(Error::ParamOutOfRange { a, epsilon: self.epsilon });
        }
        Ok(())
    }

    /// f_a with coefficients P₀ + a W over Q₀.
    pub fn map_at<S: Scalar>(&self, a: &S::Real, prec: u32) -> Result<RationalMap<S>> {
        let af = S::real_to_f64(a);
        self.check_range(af)?;
        self.map_unchecked(a, prec)
    }

    fn map_unchecked<S: Scalar>(&self, a: &S::Real, prec: u32) -> Result<RationalMap<S>> {
        let af = S::real_to_f64(a);
        let aval = S::from_real(prec, a);
        let n = self.base_num.len().max(self.weight.len());
        let num: Vec<S> = (0..n)
            .map(|k| {
                let p0 = S::from_c64(prec, self.base_num.get(k).copied().unwrap_or_default());
                let w = self.weight.get(k).copied().unwrap_or_default();
                if w == C64::new(0.0, 0.0) {
                    p0
                } else {
                    p0.add(&aval.mul(&S::from_c64(prec, w)))
                }
            })
            .collect();
        let den: Vec<S> = self.base_den.iter().map(|c| S::from_c64(prec, *c)).collect();
        // leading-coefficient cancellation
        let nc: Vec<C64> = num.iter().map(|c| c.to_c64()).collect();
        let scale = poly::max_abs(&nc).max(poly::max_abs(&self.base_den));
        let lead = |v: &[C64], d: usize| v.get(d).map_or(0.0, |c| c.norm());
        if lead(&self.base_den, self.degree) == 0.0 && lead(&nc, self.degree) <= 1e-12 * scale {
            return Err(Error::DegreeDrop { a: af, detail: "leading coefficient cancels".into() });
        }
        RationalMap::new(num, den).map_err(|e| Error::DegreeDrop { a: af, detail: e.to_string() })
    }

    /// ∂_a of the Jacobian form (it is affine in a).
    pub(crate) fn jacobian_a_derivative(&self) -> Vec<C64> {
        let d = self.degree;
        let pad = |v: &[C64]| {
            let mut out = v.to_vec();
            out.resize(d + 1, C64::new(0.0, 0.0));
            out
        };
        let w = pad(&self.weight);
        let q = pad(&self.base_den);
        let dz = |v: &[C64]| (0..d).map(|k| v[k + 1] * (k + 1) as f64).collect::<Vec<_>>();
        let dw = |v: &[C64]| (0..d).map(|k| v[k] * (d - k) as f64).collect::<Vec<_>>();
        let a = poly::mul(&dz(&w), &dw(&q));
        let b = poly::mul(&dw(&w), &dz(&q));
        a.iter().zip(b.iter()).map(|(x, y)| x - y).collect()
    }

    /// Weight W as a degree-d binary form (the ∂_a of the numerator form).
    pub(crate) fn weight_form(&self) -> Vec<C64> {
        let mut w = self.weight.clone();
        w.resize(self.degree + 1, C64::new(0.0, 0.0));
        w
    }

    fn build_paths(&self, floor: f64) -> Result<Vec<CriticalPath>> {
        let base = self.base_map::<C64>(53);
        let crit = critical_points(&base)?;
        let big = self.base_map::<crate::scalar::BigComplex>(256);
        let big_crit = critical_points(&big)?;
        let mut paths = Vec::with_capacity(crit.len());
        for (idx, cp) in crit.iter().enumerate() {
            let chart = cp.point.chart();
            let m = cp.local_degree - 1;
            let mut table = vec![C64::new(0.0, 0.0); 2 * PATH_STEPS + 1];
            let c0 = cp.point.coordinate(chart).unwrap_or_default();
            table[PATH_STEPS] = c0;
            for dir in [1i64, -1] {
                let mut prev = c0;
                let mut prev_a = 0.0;
                for j in 1..=PATH_STEPS {
                    let a = dir as f64 * self.epsilon * j as f64 / PATH_STEPS as f64;
                    let slot = (PATH_STEPS as i64 + dir * j as i64) as usize;
                    match self.continue_root(chart, m, prev, prev_a, a) {
                        Ok(x) => {
                            table[slot] = x;
                            prev = x;
                            prev_a = a;
                        }
                        // the degenerate parameter itself is rejected later by map_at
                        Err(Error::DegreeDrop { .. }) => {
                            for k in j..=PATH_STEPS {
                                table[(PATH_STEPS as i64 + dir * k as i64) as usize] = prev;
                            }
                            break;
                        }
                        Err(e) => return Err(e),
                    }
                }
            }
            // critical relation check at base, in high precision
            let v = big.evaluate(&big_crit[idx].point)?;
            let (orbit, _) = iterate_raw(&big, &v, RELATION_DEPTH)?;
            let tracked = orbit
                .iter()
                .all(|p| big_crit.iter().all(|c| chordal_distance(p, &c.point) > RELATION_TOL));
            paths.push(CriticalPath { local_degree: cp.local_degree, chart, base: cp.point.clone(), tracked, table });
        }
        // collision floor across the table
        for j in (0..=2 * PATH_STEPS).step_by(16) {
            for i in 0..paths.len() {
                for k in (i + 1)..paths.len() {
                    let pi = chart_point(paths[i].chart, paths[i].table[j]);
                    let pk = chart_point(paths[k].chart, paths[k].table[j]);
                    if chordal_distance(&pi, &pk) < floor {
                        return Err(Error::InvalidFamily(format!("critical points {i} and {k} collide within |a| <= epsilon")));
                    }
                }
            }
        }
        Ok(paths)
    }

    /// Newton continuation from (prev_a, prev) to a, halving the step on failure.
    fn continue_root(&self, chart: Chart, m: usize, prev: C64, prev_a: f64, a: f64) -> Result<C64> {
        let mut from_a = prev_a;
        let mut from_x = prev;
        let mut step = a - prev_a;
        let mut halvings = 0;
        while from_a != a {
            let target = if (a - from_a).abs() < step.abs() { a } else { from_a + step };
            let f = self.map_unchecked::<C64>(&target, 53)?;
            let cp = chart_poly(&f, chart);
            match polish(&cp, &from_x, m) {
                Ok(x) if (x - from_x).norm() < 0.1 => {
                    from_a = target;
                    from_x = x;
                }
                _ => {
                    halvings += 1;
                    if halvings > 30 {
                        return Err(Error::InvalidFamily(format!("critical path continuation failed near a = {target:e}")));
                    }
                    step /= 2.0;
                }
            }
        }
        Ok(from_x)
    }

    /// c_l(a) at the working precision of `f_a` (which must be map_at(a)).
    pub fn critical_point_at<S: Scalar>(&self, l: usize, a: f64, f_a: &RationalMap<S>) -> Result<SpherePoint<S>> {
        let path = self.path(l)?;
        let prec = f_a.prec();
        let pos = (a / self.epsilon + 1.0) * PATH_STEPS as f64;
        let j = pos.floor().clamp(0.0, (2 * PATH_STEPS - 1) as f64) as usize;
        let t = (pos - j as f64).clamp(0.0, 1.0);
        let guess = path.table[j] * (1.0 - t) + path.table[j + 1] * t;
        let cp = chart_poly(f_a, path.chart);
        let x = polish(&cp, &S::from_c64(prec, guess), path.local_degree - 1)?;
        let point = match path.chart {
            Chart::Affine => SpherePoint::finite(x),
            Chart::Inverse => SpherePoint::new(S::one(prec), x)?,
        };
        Ok(point)
    }

    /// All critical points of f_a, in path order, with local degrees.
    pub fn critical_set_at<S: Scalar>(&self, a: f64, f_a: &RationalMap<S>) -> Result<Vec<(SpherePoint<S>, usize)>> {
        (0..self.paths.len())
            .map(|l| Ok((self.critical_point_at(l, a, f_a)?, self.paths[l].local_degree)))
            .collect()
    }
}

fn chart_point(chart: Chart, x: C64) -> SpherePoint<C64> {
    match chart {
        Chart::Affine => SpherePoint::finite(x),
        Chart::Inverse => SpherePoint::new(C64::new(1.0, 0.0), x).expect("nonzero"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::BigComplex;
    use rug::Float;

    #[test]
    fn lattes_paths() {
        let fam = RationalFamily::lattes2(1e-3).unwrap();
        assert_eq!(fam.paths().len(), 2);
        assert_eq!(fam.max_local_degree(), 2);
        // c = 0 maps to the critical point ∞: untracked; c = ∞ is tracked
        assert!(!fam.paths()[0].tracked);
        assert!(fam.paths()[1].tracked);
        assert_eq!(fam.tracked(), vec![1]);
    }

    #[test]
    fn map_at_zero_reproduces_base() {
        let fam = RationalFamily::lattes2(1e-3).unwrap();
        let f = fam.map_at::<C64>(&0.0, 53).unwrap();
        let g = fam.base_map::<C64>(53);
        assert_eq!(f.numerator().to_c64(), g.numerator().to_c64());
        assert_eq!(f.denominator().to_c64(), g.denominator().to_c64());
    }

    #[test]
    fn map_at_adds_coefficients() {
        let fam = RationalFamily::lattes2(0.1).unwrap();
        let f = fam.map_at::<BigComplex>(&Float::with_val(128, 0.01), 128).unwrap();
        let num = f.numerator().to_c64();
        assert!((num[2] - C64::new(1.01, 0.0)).norm() < 1e-15);
        assert_eq!(num[0], C64::new(-2.0, 0.0));
        assert!(fam.map_at::<C64>(&0.2, 53).is_err());
    }

    #[test]
    fn leading_cancellation_is_a_degree_drop() {
        let c = |x: f64| C64::new(x, 0.0);
        let dir = Direction { numerator: vec![c(0.0), c(0.0), c(-1.0)], denominator: vec![c(1.0)] };
        let fam = RationalFamily::new("drop", vec![c(1.0), c(0.0), c(1.0)], vec![c(1.0)], dir, 1.0, 1e-6);
        match fam {
            Ok(f) => assert!(matches!(f.map_at::<C64>(&1.0, 53), Err(Error::DegreeDrop { .. }))),
            Err(e) => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn moving_critical_points_are_followed() {
        // f_a(z) = z² + a z: critical point at −a/2, plus ∞
        let c = |x: f64| C64::new(x, 0.0);
        let dir = Direction { numerator: vec![c(0.0), c(1.0)], denominator: vec![c(1.0)] };
        let fam = RationalFamily::new("shift", vec![c(0.0), c(0.0), c(1.0)], vec![c(1.0)], dir, 0.01, 1e-3).unwrap();
        let a = 0.0073;
        let f = fam.map_at::<BigComplex>(&Float::with_val(200, a), 200).unwrap();
        let p = fam.critical_point_at(0, a, &f).unwrap();
        assert!((p.to_c64().unwrap() - c(-a / 2.0)).norm() < 1e-15);
        assert!(f.spherical_derivative(&p) < 1e-50);
    }
}
