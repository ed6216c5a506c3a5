//! Complex scalars used by the sphere layer.
//!
//! Two backends: `C64` (hardware doubles, for scans) and `BigComplex`
//! (MPFR floats at a configurable precision, for exclusion runs).
//! Magnitudes leave the backend as `f64`; only coordinates and
//! parameters carry full precision.

use num_complex::Complex64;
use rug::Float;
use std::fmt::Debug;

pub type C64 = Complex64;

/// Arithmetic needed by projective evaluation.
pub trait Scalar: Clone + Debug + Send + Sync + 'static {
    /// Real type used for family parameters.
    type Real: Clone + Debug + Send + Sync + 'static;

    fn prec(&self) -> u32;
    fn from_c64(prec: u32, z: C64) -> Self;
    fn from_real(prec: u32, r: &Self::Real) -> Self;
    fn real_from_f64(prec: u32, x: f64) -> Self::Real;
    fn real_to_f64(r: &Self::Real) -> f64;

    fn add(&self, o: &Self) -> Self;
    fn sub(&self, o: &Self) -> Self;
    fn mul(&self, o: &Self) -> Self;
    fn div(&self, o: &Self) -> Self;
    fn neg(&self) -> Self;
    fn conj(&self) -> Self;
    fn mul_f64(&self, r: f64) -> Self;
    /// Multiply by 2^k exactly.
    fn mul_pow2(&self, k: i32) -> Self;

    fn is_zero(&self) -> bool;
    fn to_c64(&self) -> C64;
    /// |z| as f64 (may underflow to 0 for extremely small values).
    fn abs(&self) -> f64;
    /// ln |z| without intermediate underflow; -inf at zero.
    fn ln_abs(&self) -> f64;
    /// Exponent e with max(|re|,|im|) in [2^(e-1), 2^e); None at zero.
    fn exponent(&self) -> Option<i32>;

    /// Exact copy at an MPFR precision (used for precision certification).
    fn to_big(&self, prec: u32) -> BigComplex;

    fn zero(prec: u32) -> Self {
        Self::from_c64(prec, C64::new(0.0, 0.0))
    }
    fn one(prec: u32) -> Self {
        Self::from_c64(prec, C64::new(1.0, 0.0))
    }
}

fn f64_exponent(x: f64) -> Option<i32> {
    if x == 0.0 || !x.is_finite() {
        return None;
    }
    let e = x.abs().log2().floor() as i32 + 1;
    Some(e)
}

impl Scalar for C64 {
    type Real = f64;

    fn prec(&self) -> u32 {
        53
    }
    fn from_c64(_prec: u32, z: C64) -> Self {
        z
    }
    fn from_real(_prec: u32, r: &f64) -> Self {
        C64::new(*r, 0.0)
    }
    fn real_from_f64(_prec: u32, x: f64) -> f64 {
        x
    }
    fn real_to_f64(r: &f64) -> f64 {
        *r
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn div(&self, o: &Self) -> Self {
        self / o
    }
    fn neg(&self) -> Self {
        -self
    }
    fn conj(&self) -> Self {
        Complex64::conj(self)
    }
    fn mul_f64(&self, r: f64) -> Self {
        self * r
    }
    fn mul_pow2(&self, k: i32) -> Self {
        let s = 2f64.powi(k);
        C64::new(self.re * s, self.im * s)
    }
    fn is_zero(&self) -> bool {
        self.re == 0.0 && self.im == 0.0
    }
    fn to_c64(&self) -> C64 {
        *self
    }
    fn abs(&self) -> f64 {
        self.norm()
    }
    fn ln_abs(&self) -> f64 {
        match self.exponent() {
            None => f64::NEG_INFINITY,
            Some(e) => self.mul_pow2(-e).norm().ln() + e as f64 * std::f64::consts::LN_2,
        }
    }
    fn exponent(&self) -> Option<i32> {
        let m = self.re.abs().max(self.im.abs());
        f64_exponent(m)
    }
    fn to_big(&self, prec: u32) -> BigComplex {
        BigComplex::with_val(prec, self.re, self.im)
    }
}

/// Complex number over two MPFR floats of equal precision.
#[derive(Clone, Debug, PartialEq)]
pub struct BigComplex {
    pub re: Float,
    pub im: Float,
}

impl BigComplex {
    pub fn new(re: Float, im: Float) -> Self {
        Self { re, im }
    }

    pub fn with_val(prec: u32, re: f64, im: f64) -> Self {
        Self { re: Float::with_val(prec, re), im: Float::with_val(prec, im) }
    }

    /// Same value at another precision (exact when widening).
    pub fn with_prec(&self, prec: u32) -> Self {
        Self { re: Float::with_val(prec, &self.re), im: Float::with_val(prec, &self.im) }
    }
}

impl Scalar for BigComplex {
    type Real = Float;

    fn prec(&self) -> u32 {
        self.re.prec()
    }
    fn from_c64(prec: u32, z: C64) -> Self {
        Self::with_val(prec, z.re, z.im)
    }
    fn from_real(prec: u32, r: &Float) -> Self {
        Self { re: Float::with_val(prec, r), im: Float::new(prec) }
    }
    fn real_from_f64(prec: u32, x: f64) -> Float {
        Float::with_val(prec, x)
    }
    fn real_to_f64(r: &Float) -> f64 {
        r.to_f64()
    }
    fn add(&self, o: &Self) -> Self {
        let p = self.prec();
        Self { re: Float::with_val(p, &self.re + &o.re), im: Float::with_val(p, &self.im + &o.im) }
    }
    fn sub(&self, o: &Self) -> Self {
        let p = self.prec();
        Self { re: Float::with_val(p, &self.re - &o.re), im: Float::with_val(p, &self.im - &o.im) }
    }
    fn mul(&self, o: &Self) -> Self {
        let p = self.prec();
        let re = Float::with_val(p, &self.re * &o.re - &self.im * &o.im);
        let im = Float::with_val(p, &self.re * &o.im + &self.im * &o.re);
        Self { re, im }
    }
    fn div(&self, o: &Self) -> Self {
        let p = self.prec();
        let den = Float::with_val(p, &o.re * &o.re + &o.im * &o.im);
        let mut re = Float::with_val(p, &self.re * &o.re + &self.im * &o.im);
        let mut im = Float::with_val(p, &self.im * &o.re - &self.re * &o.im);
        re /= &den;
        im /= &den;
        Self { re, im }
    }
    fn neg(&self) -> Self {
        Self { re: -self.re.clone(), im: -self.im.clone() }
    }
    fn conj(&self) -> Self {
        Self { re: self.re.clone(), im: -self.im.clone() }
    }
    fn mul_f64(&self, r: f64) -> Self {
        let p = self.prec();
        Self { re: Float::with_val(p, &self.re * r), im: Float::with_val(p, &self.im * r) }
    }
    fn mul_pow2(&self, k: i32) -> Self {
        let mut out = self.clone();
        out.re <<= k;
        out.im <<= k;
        out
    }
    fn is_zero(&self) -> bool {
        self.re.is_zero() && self.im.is_zero()
    }
    fn to_c64(&self) -> C64 {
        C64::new(self.re.to_f64(), self.im.to_f64())
    }
    fn abs(&self) -> f64 {
        self.to_c64().norm()
    }
    fn ln_abs(&self) -> f64 {
        match self.exponent() {
            None => f64::NEG_INFINITY,
            Some(e) => self.mul_pow2(-e).to_c64().norm().ln() + e as f64 * std::f64::consts::LN_2,
        }
    }
    fn exponent(&self) -> Option<i32> {
        match (self.re.get_exp(), self.im.get_exp()) {
            (None, None) => None,
            (Some(a), None) | (None, Some(a)) => Some(a),
            (Some(a), Some(b)) => Some(a.max(b)),
        }
    }
    fn to_big(&self, prec: u32) -> BigComplex {
        self.with_prec(prec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn big_arithmetic_matches_doubles() {
        let a = C64::new(0.3, -1.25);
        let b = C64::new(-2.0, 0.5);
        let ba = BigComplex::from_c64(128, a);
        let bb = BigComplex::from_c64(128, b);
        assert!((ba.mul(&bb).to_c64() - a * b).norm() < 1e-15);
        assert!((ba.div(&bb).to_c64() - a / b).norm() < 1e-15);
        assert!((ba.sub(&bb).to_c64() - (a - b)).norm() < 1e-15);
        assert_eq!(ba.conj().to_c64(), a.conj());
    }

    #[test]
    fn ln_abs_survives_underflow() {
        let tiny = BigComplex::with_val(256, 1.0, 0.0).mul_pow2(-2000);
        let expected = -2000.0 * std::f64::consts::LN_2;
        assert!((tiny.ln_abs() - expected).abs() < 1e-9);
        assert_eq!(BigComplex::zero(64).ln_abs(), f64::NEG_INFINITY);
        assert!((C64::new(3.0, 4.0).ln_abs() - 5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn exponent_brackets_magnitude() {
        for x in [0.5, 0.75, 1.0, 3.0, 1e-10] {
            let e = C64::new(x, 0.0).exponent().unwrap();
            assert!(x >= 2f64.powi(e - 1) && x < 2f64.powi(e), "{x} {e}");
            let eb = BigComplex::with_val(64, x, 0.0).exponent().unwrap();
            assert_eq!(e, eb);
        }
    }
}
