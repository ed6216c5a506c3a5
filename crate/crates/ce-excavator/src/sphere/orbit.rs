//! Orbit iteration with spherical-derivative accumulation.

use super::map::RationalMap;
use super::point::{chordal_distance, SpherePoint};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Chordal divergence above which a precision-doubled recomputation
/// invalidates an orbit.
pub const CERTIFY_TOL: f64 = 1e-6;

/// Entry k holds log|Df^k(start)| in the spherical metric.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DerivLedger {
    log_products: Vec<f64>,
}

impl Default for DerivLedger {
    fn default() -> Self {
        Self { log_products: vec![0.0] }
    }
}

impl DerivLedger {
    /// Ledger from per-step log f♯ values.
    pub fn from_steps(steps: &[f64]) -> Self {
        let mut log_products = Vec::with_capacity(steps.len() + 1);
        log_products.push(0.0);
        let mut acc = 0.0;
        for s in steps {
            acc += s;
            log_products.push(acc);
        }
        Self { log_products }
    }

    /// Ledger from cumulative values; entry 0 must be 0.
    pub fn from_cumulative(values: Vec<f64>) -> Result<Self> {
        if values.first() != Some(&0.0) {
            return Err(Error::Invariant("ledger entry 0 must be 0".into()));
        }
        Ok(Self { log_products: values })
    }

    pub fn push_step(&mut self, log_sharp: f64) {
        let last = *self.log_products.last().unwrap();
        self.log_products.push(last + log_sharp);
    }

    pub fn get(&self, k: usize) -> f64 {
        self.log_products[k]
    }

    /// Number of derivative steps covered.
    pub fn steps(&self) -> usize {
        self.log_products.len() - 1
    }

    pub fn values(&self) -> &[f64] {
        &self.log_products
    }

    /// log|Df^(n-m)(f^m start)| from the stored prefix sums.
    pub fn segment(&self, m: usize, n: usize) -> f64 {
        self.log_products[n] - self.log_products[m]
    }

    pub fn truncated(&self, steps: usize) -> Self {
        Self { log_products: self.log_products[..=steps.min(self.steps())].to_vec() }
    }
}

/// Points f^k(p) for k = 0..=n with their derivative ledger.
#[derive(Clone, Debug)]
pub struct OrbitFragment<S: Scalar> {
    pub points: Vec<SpherePoint<S>>,
    pub ledger: DerivLedger,
    /// Largest k for which the precision-doubled orbit agrees to CERTIFY_TOL.
    pub certified_horizon: usize,
    /// Set when the certified horizon falls short of n.
    pub precision_exhausted: bool,
}

/// Iterate without certification; the hot path for engine stepping.
pub fn iterate_raw<S: Scalar>(f: &RationalMap<S>, p: &SpherePoint<S>, n: usize) -> Result<(Vec<SpherePoint<S>>, DerivLedger)> {
    let mut points = Vec::with_capacity(n + 1);
    let mut ledger = DerivLedger::default();
    points.push(p.clone());
    for _ in 0..n {
        let (next, ls) = f.step(points.last().unwrap())?;
        ledger.push_step(ls);
        points.push(next);
    }
    Ok((points, ledger))
}

/// First index where two orbits diverge beyond CERTIFY_TOL, minus one.
pub fn agreement_horizon<S: Scalar, T: Scalar>(a: &[SpherePoint<S>], b: &[SpherePoint<T>]) -> usize {
    let n = a.len().min(b.len());
    for k in 0..n {
        let prec = a[k].prec().max(b[k].prec()).max(64);
        if chordal_distance(&a[k].to_big(prec), &b[k].to_big(prec)) > CERTIFY_TOL {
            return k.saturating_sub(1);
        }
    }
    n.saturating_sub(1)
}

/// Iterate n steps and certify against a recomputation at twice the precision.
pub fn iterate_orbit<S: Scalar>(f: &RationalMap<S>, p: &SpherePoint<S>, n: usize) -> Result<OrbitFragment<S>> {
    let (points, ledger) = iterate_raw(f, p, n)?;
    let prec2 = 2 * p.prec();
    let f2 = f.to_big(prec2);
    let (ref_points, _) = iterate_raw(&f2, &p.to_big(prec2), n)?;
    let certified_horizon = agreement_horizon(&points, &ref_points);
    Ok(OrbitFragment { precision_exhausted: certified_horizon < n, points, ledger, certified_horizon })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{BigComplex, C64};

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    fn lattes<S: Scalar>(prec: u32) -> RationalMap<S> {
        RationalMap::from_c64(prec, &[c(-2.0), c(0.0), c(1.0)], &[c(0.0), c(0.0), c(1.0)]).unwrap()
    }

    #[test]
    fn lattes_orbit_of_zero() {
        let f = lattes::<BigComplex>(128);
        let o = iterate_orbit(&f, &SpherePoint::from_c64(128, c(0.0)), 4).unwrap();
        let got: Vec<Option<C64>> = o.points.iter().map(|p| p.to_c64()).collect();
        assert_eq!(got, vec![Some(c(0.0)), None, Some(c(1.0)), Some(c(-1.0)), Some(c(-1.0))]);
        assert_eq!(o.ledger.get(1), f64::NEG_INFINITY);
        assert_eq!(o.certified_horizon, 4);
    }

    #[test]
    fn zero_steps() {
        let f = lattes::<C64>(53);
        let o = iterate_orbit(&f, &SpherePoint::from_c64(53, c(0.3)), 0).unwrap();
        assert_eq!(o.points.len(), 1);
        assert_eq!(o.ledger.values(), &[0.0]);
    }

    #[test]
    fn multiplier_along_one() {
        let f = lattes::<C64>(53);
        let o = iterate_orbit(&f, &SpherePoint::from_c64(53, c(1.0)), 3).unwrap();
        assert!((o.ledger.get(3) - 64f64.ln()).abs() < 1e-13);
    }

    #[test]
    fn chaotic_orbit_loses_certification_in_doubles() {
        let f = lattes::<C64>(53);
        let o = iterate_orbit(&f, &SpherePoint::from_c64(53, C64::new(0.3, 0.7)), 200).unwrap();
        assert!(o.precision_exhausted);
        assert!(o.certified_horizon > 10 && o.certified_horizon < 200);
    }
}
