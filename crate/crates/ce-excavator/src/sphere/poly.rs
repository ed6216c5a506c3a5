//! Dense complex polynomials with ascending coefficients (index = power).

use crate::scalar::C64;
use nalgebra::DMatrix;

pub fn trim(p: &[C64]) -> Vec<C64> {
    let mut v = p.to_vec();
    while v.len() > 1 && v.last().map_or(false, |c| c.norm() == 0.0) {
        v.pop();
    }
    if v.is_empty() {
        v.push(C64::new(0.0, 0.0));
    }
    v
}

/// Degree after trimming exact zeros; the zero polynomial has degree 0.
pub fn degree(p: &[C64]) -> usize {
    trim(p).len() - 1
}

pub fn is_zero(p: &[C64]) -> bool {
    p.iter().all(|c| c.norm() == 0.0)
}

pub fn eval(p: &[C64], z: C64) -> C64 {
    p.iter().rev().fold(C64::new(0.0, 0.0), |acc, c| acc * z + c)
}

pub fn derivative(p: &[C64]) -> Vec<C64> {
    if p.len() <= 1 {
        return vec![C64::new(0.0, 0.0)];
    }
    p.iter().enumerate().skip(1).map(|(k, c)| c * k as f64).collect()
}

pub fn mul(a: &[C64], b: &[C64]) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

pub fn add(a: &[C64], b: &[C64]) -> Vec<C64> {
    let n = a.len().max(b.len());
    (0..n)
        .map(|k| a.get(k).copied().unwrap_or_default() + b.get(k).copied().unwrap_or_default())
        .collect()
}

pub fn scale(a: &[C64], s: C64) -> Vec<C64> {
    a.iter().map(|c| c * s).collect()
}

/// Polynomial long division; returns (quotient, remainder).
pub fn divide(num: &[C64], den: &[C64]) -> (Vec<C64>, Vec<C64>) {
    let den = trim(den);
    let mut rem = trim(num);
    let dd = den.len() - 1;
    let lead = den[dd];
    if rem.len() < den.len() {
        return (vec![C64::new(0.0, 0.0)], rem);
    }
    let mut quot = vec![C64::new(0.0, 0.0); rem.len() - dd];
    for k in (0..quot.len()).rev() {
        let c = rem[k + dd] / lead;
        quot[k] = c;
        for (j, d) in den.iter().enumerate() {
            rem[k + j] -= c * d;
        }
    }
    rem.truncate(dd.max(1));
    (quot, rem)
}

pub fn max_abs(p: &[C64]) -> f64 {
    p.iter().fold(0.0, |m, c| m.max(c.norm()))
}

/// All roots of a polynomial of degree ≥ 1 from companion-matrix eigenvalues.
pub fn roots(p: &[C64]) -> Vec<C64> {
    let p = trim(p);
    let n = p.len() - 1;
    if n == 0 {
        return Vec::new();
    }
    let lead = p[n];
    let mut m = DMatrix::<C64>::zeros(n, n);
    for i in 1..n {
        m[(i, i - 1)] = C64::new(1.0, 0.0);
    }
    for i in 0..n {
        m[(i, n - 1)] = -p[i] / lead;
    }
    let schur = nalgebra::linalg::Schur::new(m);
    let (_, t) = schur.unpack();
    (0..n).map(|i| t[(i, i)]).collect()
}

/// Resultant of two binary forms of formal degree `d` (coefficients padded),
/// computed from the Sylvester matrix after scaling each form to unit max
/// coefficient. A common root, including one at infinity, gives 0.
pub fn homogeneous_resultant(p: &[C64], q: &[C64], d: usize) -> f64 {
    let norm = |v: &[C64]| -> Vec<C64> {
        let m = max_abs(v);
        let mut out: Vec<C64> = v.iter().map(|c| if m > 0.0 { c / m } else { *c }).collect();
        out.resize(d + 1, C64::new(0.0, 0.0));
        out
    };
    let p = norm(p);
    let q = norm(q);
    let size = 2 * d;
    let mut s = DMatrix::<C64>::zeros(size, size);
    for row in 0..d {
        for k in 0..=d {
            // highest power first in each row
            s[(row, row + k)] = p[d - k];
            s[(row + d, row + k)] = q[d - k];
        }
    }
    s.determinant().norm()
}
