//! Points of the Riemann sphere in projective coordinates.

use crate::error::{Error, Result};
use crate::scalar::{BigComplex, Scalar, C64};

/// Which affine chart a point is read in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Chart {
    /// ζ = z / w, used when |z| ≤ |w|.
    Affine,
    /// ω = w / z, used when |z| > |w|.
    Inverse,
}

/// A point (z : w) of the sphere. Both coordinates are kept scaled so that
/// max(|z|, |w|) lies in [1/2, 1].
#[derive(Clone, Debug)]
pub struct SpherePoint<S: Scalar> {
    z: S,
    w: S,
}

impl<S: Scalar> SpherePoint<S> {
    /// Build from a projective pair, rejecting (0 : 0).
    pub fn new(z: S, w: S) -> Result<Self> {
        if z.is_zero() && w.is_zero() {
            return Err(Error::Indeterminate("(0 : 0)".into()));
        }
        Ok(Self::normalized(z, w))
    }

    /// Caller guarantees the pair is not (0 : 0).
    pub(crate) fn normalized(z: S, w: S) -> Self {
        let e = match (z.exponent(), w.exponent()) {
            (Some(a), Some(b)) => a.max(b),
            (Some(a), None) | (None, Some(a)) => a,
            (None, None) => panic!("degenerate projective pair"),
        };
        let (mut z, mut w) = if e != 0 { (z.mul_pow2(-e), w.mul_pow2(-e)) } else { (z, w) };
        // component max now in [1/2, 1); the modulus can still reach √2
        if z.abs().max(w.abs()) > 1.0 {
            z = z.mul_pow2(-1);
            w = w.mul_pow2(-1);
        }
        Self { z, w }
    }

    pub fn finite(z: S) -> Self {
        let one = S::one(z.prec());
        Self::normalized(z, one)
    }

    pub fn infinity(prec: u32) -> Self {
        Self { z: S::one(prec), w: S::zero(prec) }
    }

    pub fn from_c64(prec: u32, z: C64) -> Self {
        Self::finite(S::from_c64(prec, z))
    }

    pub fn z(&self) -> &S {
        &self.z
    }

    pub fn w(&self) -> &S {
        &self.w
    }

    pub fn prec(&self) -> u32 {
        self.z.prec()
    }

    pub fn is_infinity(&self) -> bool {
        self.w.is_zero()
    }

    pub fn chart(&self) -> Chart {
        if self.z.abs() <= self.w.abs() {
            Chart::Affine
        } else {
            Chart::Inverse
        }
    }

    /// Coordinate in the given chart; None when the point is the chart's pole.
    pub fn coordinate(&self, chart: Chart) -> Option<S> {
        match chart {
            Chart::Affine if self.w.is_zero() => None,
            Chart::Affine => Some(self.z.div(&self.w)),
            Chart::Inverse if self.z.is_zero() => None,
            Chart::Inverse => Some(self.w.div(&self.z)),
        }
    }

    /// Affine value as f64, None at infinity.
    pub fn to_c64(&self) -> Option<C64> {
        self.coordinate(Chart::Affine).map(|v| v.to_c64())
    }

    /// Same point with f64 coordinates.
    pub fn to_f64_point(&self) -> SpherePoint<C64> {
        SpherePoint::normalized(self.z.to_c64(), self.w.to_c64())
    }

    /// Exact copy at an MPFR precision.
    pub fn to_big(&self, prec: u32) -> SpherePoint<BigComplex> {
        SpherePoint { z: self.z.to_big(prec), w: self.w.to_big(prec) }
    }

    /// Chordal distance to another point.
    pub fn dist(&self, other: &Self) -> f64 {
        chordal_distance(self, other)
    }

    /// Image under the unitary rotation of the sphere taking `c` to 0.
    /// The rotation is an isometry of the chordal metric.
    pub fn rotate_to_origin(&self, c: &Self) -> Self {
        let (a, b) = (&c.z, &c.w);
        let z = b.mul(&self.z).sub(&a.mul(&self.w));
        let w = a.conj().mul(&self.z).add(&b.conj().mul(&self.w));
        Self::normalized(z, w)
    }

    /// Short human readable form.
    pub fn describe(&self) -> String {
        match self.to_c64() {
            None => "inf".to_string(),
            Some(v) => format!("{}{:+}i", v.re, v.im),
        }
    }
}

impl SpherePoint<BigComplex> {
    pub fn with_prec(&self, prec: u32) -> Self {
        Self { z: self.z.with_prec(prec), w: self.w.with_prec(prec) }
    }
}

/// σ(p, q) = 2|z₁w₂ − z₂w₁| / (‖p‖‖q‖), a metric on the sphere with diameter 2.
pub fn chordal_distance<S: Scalar>(p: &SpherePoint<S>, q: &SpherePoint<S>) -> f64 {
    let cross = p.z.mul(&q.w).sub(&q.z.mul(&p.w));
    if cross.is_zero() {
        return 0.0;
    }
    let np = (p.z.abs().powi(2) + p.w.abs().powi(2)).sqrt();
    let nq = (q.z.abs().powi(2) + q.w.abs().powi(2)).sqrt();
    let a = cross.abs();
    let d = if a > 1e-290 {
        2.0 * a / (np * nq)
    } else {
        (std::f64::consts::LN_2 + cross.ln_abs() - (np * nq).ln()).exp()
    };
    d.min(2.0)
}

/// Chordal distance from the origin of a local coordinate x: 2|x|/√(1+|x|²).
pub fn chordal_from_origin(x: f64) -> f64 {
    2.0 * x / (1.0 + x * x).sqrt()
}
