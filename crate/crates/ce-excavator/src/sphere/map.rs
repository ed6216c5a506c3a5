//! Rational maps acting on projective coordinates.

use super::point::{Chart, SpherePoint};
use super::poly;
use crate::error::{Error, Result};
use crate::scalar::{BigComplex, Scalar, C64};

/// Binary form Σ c_k z^k w^(deg-k).
#[derive(Clone, Debug)]
pub struct Form<S: Scalar> {
    coeffs: Vec<S>,
}

impl<S: Scalar> Form<S> {
    pub fn new(coeffs: Vec<S>) -> Self {
        Self { coeffs }
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[S] {
        &self.coeffs
    }

    /// Homogeneous Horner: needs the powers w^0..w^deg.
    fn eval_with(&self, z: &S, wpow: &[S]) -> S {
        let d = self.degree();
        let mut acc = self.coeffs[d].clone();
        for k in (0..d).rev() {
            acc = acc.mul(z).add(&self.coeffs[k].mul(&wpow[d - k]));
        }
        acc
    }

    pub fn eval(&self, z: &S, w: &S) -> S {
        let wpow = powers(w, self.degree());
        self.eval_with(z, &wpow)
    }

    /// ∂/∂z as a form of degree deg-1.
    pub fn dz(&self) -> Self {
        let d = self.degree();
        let coeffs = (0..d).map(|k| self.coeffs[k + 1].mul_f64((k + 1) as f64)).collect();
        Self { coeffs }
    }

    /// ∂/∂w as a form of degree deg-1.
    pub fn dw(&self) -> Self {
        let d = self.degree();
        let coeffs = (0..d).map(|k| self.coeffs[k].mul_f64((d - k) as f64)).collect();
        Self { coeffs }
    }

    pub fn mul(&self, other: &Self) -> Self {
        let prec = self.coeffs[0].prec();
        let mut out = vec![S::zero(prec); self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                out[i + j] = out[i + j].add(&a.mul(b));
            }
        }
        Self { coeffs: out }
    }

    pub fn sub(&self, other: &Self) -> Self {
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a.sub(b)).collect();
        Self { coeffs }
    }

    pub fn to_c64(&self) -> Vec<C64> {
        self.coeffs.iter().map(|c| c.to_c64()).collect()
    }

    pub fn to_big(&self, prec: u32) -> Form<BigComplex> {
        Form { coeffs: self.coeffs.iter().map(|c| c.to_big(prec)).collect() }
    }
}

fn powers<S: Scalar>(w: &S, d: usize) -> Vec<S> {
    let mut out = Vec::with_capacity(d + 1);
    out.push(S::one(w.prec()));
    for k in 1..=d {
        let next = out[k - 1].mul(w);
        out.push(next);
    }
    out
}

/// Values needed by derivative computations at one point.
#[derive(Clone, Debug)]
pub struct LocalJet<S: Scalar> {
    pub p: S,
    pub q: S,
    pub jac: S,
}

/// A rational map f = P/Q of degree d ≥ 2, stored as two binary forms of
/// degree d so that evaluation never special-cases infinity.
#[derive(Clone, Debug)]
pub struct RationalMap<S: Scalar> {
    num: Form<S>,
    den: Form<S>,
    degree: usize,
    jac: Form<S>,
}

impl<S: Scalar> RationalMap<S> {
    /// Build from affine coefficient lists (ascending powers). Rejects
    /// degree < 2 and numerator/denominator pairs with a common root.
    pub fn new(num: Vec<S>, den: Vec<S>) -> Result<Self> {
        let prec = num.first().or(den.first()).map(|c| c.prec()).unwrap_or(53);
        let nc: Vec<C64> = num.iter().map(|c| c.to_c64()).collect();
        let dc: Vec<C64> = den.iter().map(|c| c.to_c64()).collect();
        if poly::is_zero(&nc) || poly::is_zero(&dc) {
            return Err(Error::InvalidMap("numerator or denominator is identically zero".into()));
        }
        let degree = poly::degree(&nc).max(poly::degree(&dc));
        if degree < 2 {
            return Err(Error::InvalidMap(format!("degree {degree} < 2")));
        }
        let res = poly::homogeneous_resultant(&nc, &dc, degree);
        if res < 1e-10 {
            return Err(Error::InvalidMap(format!("numerator and denominator share a root (resultant {res:e})")));
        }
        let pad = |mut v: Vec<S>| {
            v.truncate(degree + 1);
            v.resize(degree + 1, S::zero(prec));
            Form::new(v)
        };
        let num = pad(num);
        let den = pad(den);
        let jac = num.dz().mul(&den.dw()).sub(&num.dw().mul(&den.dz()));
        Ok(Self { num, den, degree, jac })
    }

    pub fn from_c64(prec: u32, num: &[C64], den: &[C64]) -> Result<Self> {
        Self::new(
            num.iter().map(|c| S::from_c64(prec, *c)).collect(),
            den.iter().map(|c| S::from_c64(prec, *c)).collect(),
        )
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// The same map with MPFR coefficients at `prec` bits (exact copy).
    pub fn to_big(&self, prec: u32) -> RationalMap<BigComplex> {
        RationalMap {
            num: self.num.to_big(prec),
            den: self.den.to_big(prec),
            degree: self.degree,
            jac: self.jac.to_big(prec),
        }
    }

    pub fn prec(&self) -> u32 {
        self.num.coeffs[0].prec()
    }

    pub fn numerator(&self) -> &Form<S> {
        &self.num
    }

    pub fn denominator(&self) -> &Form<S> {
        &self.den
    }

    /// Jacobian form P_z Q_w − P_w Q_z of degree 2d − 2; its zeros are Crit.
    pub fn jacobian(&self) -> &Form<S> {
        &self.jac
    }

    pub fn jet(&self, p: &SpherePoint<S>) -> LocalJet<S> {
        let wpow = powers(p.w(), 2 * self.degree - 2);
        let pv = self.num.eval_with(p.z(), &wpow);
        let qv = self.den.eval_with(p.z(), &wpow);
        let jac = self.jac.eval_with(p.z(), &wpow);
        LocalJet { p: pv, q: qv, jac }
    }

    pub fn evaluate(&self, p: &SpherePoint<S>) -> Result<SpherePoint<S>> {
        let wpow = powers(p.w(), self.degree);
        let pv = self.num.eval_with(p.z(), &wpow);
        let qv = self.den.eval_with(p.z(), &wpow);
        SpherePoint::new(pv, qv).map_err(|_| Error::Indeterminate(p.describe()))
    }

    /// Image together with log f♯ at p.
    pub fn step(&self, p: &SpherePoint<S>) -> Result<(SpherePoint<S>, f64)> {
        let jet = self.jet(p);
        let lsd = self.log_sharp_from(p, &jet);
        let img = SpherePoint::new(jet.p, jet.q).map_err(|_| Error::Indeterminate(p.describe()))?;
        Ok((img, lsd))
    }

    fn log_sharp_from(&self, p: &SpherePoint<S>, jet: &LocalJet<S>) -> f64 {
        // f♯ = |J| (|z|²+|w|²) / (d (|P|²+|Q|²)), homogeneous of degree 0
        let lj = jet.jac.ln_abs();
        if lj == f64::NEG_INFINITY {
            return lj;
        }
        let nz = p.z().abs().powi(2) + p.w().abs().powi(2);
        let (lp, lq) = (jet.p.ln_abs(), jet.q.ln_abs());
        let m = lp.max(lq);
        let sum = (2.0 * (lp - m)).exp() + (2.0 * (lq - m)).exp();
        lj + nz.ln() - (self.degree as f64).ln() - (2.0 * m + sum.ln())
    }

    /// ln f♯(p); −∞ exactly at critical points.
    pub fn log_spherical_derivative(&self, p: &SpherePoint<S>) -> f64 {
        let jet = self.jet(p);
        self.log_sharp_from(p, &jet)
    }

    /// f♯(p) = |f′(z)|(1+|z|²)/(1+|f(z)|²).
    pub fn spherical_derivative(&self, p: &SpherePoint<S>) -> f64 {
        self.log_spherical_derivative(p).exp()
    }

    /// Complex derivative of f read from the chart of `p` into `target`.
    pub fn chart_derivative(&self, p: &SpherePoint<S>, target: Chart) -> C64 {
        let jet = self.jet(p);
        self.chart_derivative_from(p, &jet, target)
    }

    pub(crate) fn chart_derivative_from(&self, p: &SpherePoint<S>, jet: &LocalJet<S>, target: Chart) -> C64 {
        let src = p.chart();
        // f' = ± J / (d T²) at the representative with the chart coordinate
        // equal to 1; rescale by the square of that coordinate.
        let t = match target {
            Chart::Affine => &jet.q,
            Chart::Inverse => &jet.p,
        };
        let rep = match src {
            Chart::Affine => p.w(),
            Chart::Inverse => p.z(),
        };
        let num = jet.jac.mul(rep).mul(rep);
        let den = t.mul(t).mul_f64(self.degree as f64);
        let mut v = num.div(&den);
        if (src == Chart::Inverse) != (target == Chart::Inverse) {
            v = v.neg();
        }
        v.to_c64()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere::point::chordal_distance;

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    pub(crate) fn lattes() -> RationalMap<C64> {
        RationalMap::from_c64(53, &[c(-2.0), c(0.0), c(1.0)], &[c(0.0), c(0.0), c(1.0)]).unwrap()
    }

    fn square() -> RationalMap<C64> {
        RationalMap::from_c64(53, &[c(0.0), c(0.0), c(1.0)], &[c(1.0)]).unwrap()
    }

    fn pt(x: f64) -> SpherePoint<C64> {
        SpherePoint::from_c64(53, c(x))
    }

    #[test]
    fn evaluate_examples() {
        let f = lattes();
        assert!(f.evaluate(&pt(0.0)).unwrap().is_infinity());
        let m1 = f.evaluate(&pt(-1.0)).unwrap();
        assert_eq!(m1.to_c64().unwrap(), c(-1.0));
        let inf = SpherePoint::infinity(53);
        assert!(square().evaluate(&inf).unwrap().is_infinity());
    }

    #[test]
    fn spherical_derivative_examples() {
        assert!((square().spherical_derivative(&pt(1.0)) - 2.0).abs() < 1e-15);
        assert_eq!(square().spherical_derivative(&pt(0.0)), 0.0);
        assert!((lattes().spherical_derivative(&pt(-1.0)) - 4.0).abs() < 1e-14);
    }

    #[test]
    fn sharp_matches_affine_formula() {
        let f = lattes();
        for x in [0.3, -1.7, 2.5] {
            let z = C64::new(x, 0.4);
            let fz = c(1.0) - c(2.0) / (z * z);
            let fp = c(4.0) / (z * z * z);
            let expected = fp.norm() * (1.0 + z.norm_sqr()) / (1.0 + fz.norm_sqr());
            let got = f.spherical_derivative(&SpherePoint::from_c64(53, z));
            assert!((got / expected - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn chart_derivative_matches_difference_quotient() {
        let f = lattes();
        for z in [C64::new(0.7, 0.2), C64::new(3.0, -1.0), C64::new(-0.2, 0.1)] {
            let p = SpherePoint::from_c64(53, z);
            let h = 1e-7;
            for target in [Chart::Affine, Chart::Inverse] {
                let d = f.chart_derivative(&p, target);
                let read = |q: &SpherePoint<C64>| f.evaluate(q).unwrap().coordinate(target).unwrap().to_c64();
                let src = p.chart();
                let x0 = p.coordinate(src).unwrap();
                let shifted = |dx: f64| -> SpherePoint<C64> {
                    let x = x0 + C64::new(dx, 0.0);
                    match src {
                        Chart::Affine => SpherePoint::finite(x),
                        Chart::Inverse => SpherePoint::new(c(1.0), x).unwrap(),
                    }
                };
                let fd = (read(&shifted(h)) - read(&shifted(-h))) / (2.0 * h);
                assert!((fd - d).norm() / d.norm() < 1e-6, "{z} {target:?} {fd} {d}");
            }
        }
        let _ = chordal_distance(&pt(0.0), &pt(1.0));
    }

    #[test]
    fn rejects_common_roots_and_low_degree() {
        assert!(RationalMap::<C64>::from_c64(53, &[c(-1.0), c(0.0), c(1.0)], &[c(-1.0), c(1.0)]).is_err());
        assert!(RationalMap::<C64>::from_c64(53, &[c(0.0), c(1.0)], &[c(1.0)]).is_err());
    }
}
