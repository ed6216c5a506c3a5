//! Parameter intervals with MPFR endpoints and weighted interval sets.

use rug::Float;
use serde::{Serialize, Serializer};
use std::cmp::Ordering;

#[derive(Clone, Debug, PartialEq)]
pub struct Interval {
    pub lo: Float,
    pub hi: Float,
}

impl Serialize for Interval {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        (float_string(&self.lo), float_string(&self.hi)).serialize(s)
    }
}

/// Round-trippable decimal form of an endpoint.
pub fn float_string(x: &Float) -> String {
    x.to_string_radix(10, None)
}

impl Interval {
    pub fn new(lo: Float, hi: Float) -> Self {
        debug_assert!(lo <= hi);
        Self { lo, hi }
    }

    pub fn from_f64(prec: u32, lo: f64, hi: f64) -> Self {
        Self::new(Float::with_val(prec, lo), Float::with_val(prec, hi))
    }

    pub fn prec(&self) -> u32 {
        self.lo.prec()
    }

    pub fn len(&self) -> Float {
        Float::with_val(self.prec(), &self.hi - &self.lo)
    }

    pub fn is_empty(&self) -> bool {
        self.hi <= self.lo
    }

    pub fn mid(&self) -> Float {
        let mut m = Float::with_val(self.prec(), &self.lo + &self.hi);
        m /= 2;
        m
    }

    /// k pieces of equal length; the outer endpoints are reused exactly so
    /// the pieces tile the interval.
    pub fn split_equal(&self, k: usize) -> Vec<Interval> {
        assert!(k >= 1);
        let p = self.prec();
        let len = self.len();
        let mut cuts = Vec::with_capacity(k + 1);
        cuts.push(self.lo.clone());
        for i in 1..k {
            let mut x = Float::with_val(p, &len * i as u32);
            x /= k as u32;
            x += &self.lo;
            cuts.push(x);
        }
        cuts.push(self.hi.clone());
        cuts.windows(2).map(|w| Interval::new(w[0].clone(), w[1].clone())).collect()
    }

    /// Overlap of positive length.
    pub fn overlaps(&self, o: &Interval) -> bool {
        self.lo < o.hi && o.lo < self.hi
    }
}

/// Disjoint intervals, each carrying a density (retained measure per unit
/// length). Density 1 everywhere is a plain interval set.
#[derive(Clone, Debug, Default)]
pub struct WeightedSet {
    pieces: Vec<(Interval, Float)>,
}

impl WeightedSet {
    /// Sorts the pieces; panics on overlap.
    pub fn new(mut pieces: Vec<(Interval, Float)>) -> Self {
        pieces.retain(|(i, _)| !i.is_empty());
        pieces.sort_by(|a, b| a.0.lo.partial_cmp(&b.0.lo).unwrap_or(Ordering::Equal));
        for w in pieces.windows(2) {
            assert!(w[0].0.hi <= w[1].0.lo, "overlapping pieces in a weighted set");
        }
        Self { pieces }
    }

    pub fn unit(intervals: Vec<Interval>) -> Self {
        let pieces = intervals
            .into_iter()
            .map(|i| {
                let one = Float::with_val(i.prec(), 1);
                (i, one)
            })
            .collect();
        Self::new(pieces)
    }

    pub fn pieces(&self) -> &[(Interval, Float)] {
        &self.pieces
    }
}

/// ∫ Π_l ρ_l over the line, by a sweep over all breakpoints.
pub fn intersection_measure(sets: &[WeightedSet], prec: u32) -> Float {
    if sets.is_empty() {
        return Float::new(prec);
    }
    let mut cuts: Vec<&Float> = sets.iter().flat_map(|s| s.pieces.iter().flat_map(|(i, _)| [&i.lo, &i.hi])).collect();
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    cuts.dedup_by(|a, b| a == b);
    let mut idx = vec![0usize; sets.len()];
    let mut total = Float::new(prec);
    for w in cuts.windows(2) {
        let (x0, x1) = (w[0], w[1]);
        let mut dens = Float::with_val(prec, 1);
        let mut covered = true;
        for (l, set) in sets.iter().enumerate() {
            while idx[l] < set.pieces.len() && set.pieces[idx[l]].0.hi <= *x0 {
                idx[l] += 1;
            }
            match set.pieces.get(idx[l]) {
                Some((iv, rho)) if iv.lo <= *x0 && iv.hi >= *x1 => dens *= rho,
                _ => {
                    covered = false;
                    break;
                }
            }
        }
        if covered {
            let seg = Float::with_val(prec, x1 - x0);
            total += Float::with_val(prec, &seg * &dens);
        }
    }
    total
}
