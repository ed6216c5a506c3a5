//! Counting return histories (r_1, …, r_s) with r_j ≥ Δ and Σ r_j = R.

use num_bigint::BigUint;
use num_traits::{One, Zero};
use serde::{Serialize, Serializer};

/// Decimal string, so counts beyond 2^53 survive JSON readers.
fn decimal<S: Serializer>(x: &BigUint, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&x.to_str_radix(10))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct HistoryCount {
    /// Number of histories.
    #[serde(serialize_with = "decimal")]
    pub exact: BigUint,
    /// C(R + s − 1, s − 1).
    #[serde(serialize_with = "decimal")]
    pub binomial: BigUint,
    /// Σ over histories of Π r_j² (each return can sit in r_j² sub-partitions).
    #[serde(serialize_with = "decimal")]
    pub weighted: BigUint,
    /// C(R + s − 1, s − 1) · max over histories of Π r_j².
    #[serde(serialize_with = "decimal")]
    pub weighted_bound: BigUint,
}

pub fn binomial(n: u64, k: u64) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigUint::one();
    for i in 0..k {
        acc = acc * BigUint::from(n - i) / BigUint::from(i + 1);
    }
    acc
}

/// Exact count by dynamic programming, with the pigeonhole bound. The empty
/// history (s = 0) counts once whatever R is.
pub fn history_count(r_total: u32, s: u32, delta: u32) -> HistoryCount {
    if s == 0 {
        return HistoryCount {
            exact: BigUint::one(),
            binomial: BigUint::one(),
            weighted: BigUint::one(),
            weighted_bound: BigUint::one(),
        };
    }
    let (rt, su, dl) = (r_total as usize, s as usize, delta.max(1) as usize);
    // count[j][σ], weighted[j][σ], maxprod[j][σ] over the first j parts
    let mut count = vec![vec![BigUint::zero(); rt + 1]; su + 1];
    let mut weighted = count.clone();
    let mut maxprod: Vec<Vec<Option<BigUint>>> = vec![vec![None; rt + 1]; su + 1];
    count[0][0] = BigUint::one();
    weighted[0][0] = BigUint::one();
    maxprod[0][0] = Some(BigUint::one());
    for j in 1..=su {
        for sigma in 0..=rt {
            let mut c = BigUint::zero();
            let mut w = BigUint::zero();
            let mut m: Option<BigUint> = None;
            for r in dl..=sigma {
                let prev = sigma - r;
                if count[j - 1][prev].is_zero() {
                    continue;
                }
                let sq = BigUint::from((r * r) as u64);
                c += &count[j - 1][prev];
                w += &weighted[j - 1][prev] * &sq;
                if let Some(pm) = &maxprod[j - 1][prev] {
                    let cand = pm * &sq;
                    if m.as_ref().map_or(true, |x| cand > *x) {
                        m = Some(cand);
                    }
                }
            }
            count[j][sigma] = c;
            weighted[j][sigma] = w;
            maxprod[j][sigma] = m;
        }
    }
    let bin = binomial((rt + su - 1) as u64, (su - 1) as u64);
    let wb = maxprod[su][rt].as_ref().map_or_else(BigUint::zero, |m| &bin * m);
    HistoryCount { exact: count[su][rt].clone(), binomial: bin, weighted: weighted[su][rt].clone(), weighted_bound: wb }
}

/// Largest R for enumeration: counts stay below 2^40 and products of r_j²
/// below 2^42.
pub const MAX_ENUMERATION_R: u32 = 40;

/// Exhaustive enumeration of every history with Σ r_j ≤ max_r and parts
/// ≥ Δ. Entry [R][s] holds (count, Σ Π r_j²).
pub fn enumerate_histories(max_r: u32, delta: u32) -> Vec<Vec<(u64, u128)>> {
    assert!(max_r <= MAX_ENUMERATION_R, "enumeration limited to R <= {MAX_ENUMERATION_R}");
    let m = max_r as usize;
    let delta = delta.max(1) as usize;
    // flat tables indexed [s][R]
    let mut count = vec![0u64; (m + 1) * (m + 1)];
    let mut weight = vec![0u128; (m + 1) * (m + 1)];
    count[0] = 1;
    weight[0] = 1;
    // Prefixes are the histories with room for two more parts. Each other
    // history is its longest such prefix plus a tail of one or two parts,
    // visited once in the inner loops; prefixes count themselves when the
    // depth-first walk reaches them.
    let mut parts = vec![0usize; m + 1];
    let mut sums = vec![0usize; m + 2];
    let mut prods = vec![1u64; m + 2];
    let mut len = 0;
    let stride = m + 1;
    loop {
        let (sigma, prod) = (sums[len], prods[len]);
        let room = m - sigma;
        for r in delta.max((room + 1).saturating_sub(2 * delta))..=room {
            let p = prod * (r * r) as u64;
            let i = (len + 1) * stride + sigma + r;
            count[i] += 1;
            weight[i] += p as u128;
            // hot loop; no overflow below MAX_ENUMERATION_R
            if room - r < delta {
                continue;
            }
            let base = (len + 2) * stride + sigma + r;
            let cells = base + delta..=base + room - r;
            for (q, (c, w)) in (delta..).zip(count[cells.clone()].iter_mut().zip(weight[cells].iter_mut())) {
                *c = c.wrapping_add(1);
                *w = w.wrapping_add(p.wrapping_mul((q * q) as u64) as u128);
            }
        }
        if room >= 3 * delta {
            parts[len] = delta;
        } else {
            loop {
                if len == 0 {
                    return table(&count, &weight, m);
                }
                len -= 1;
                parts[len] += 1;
                if sums[len] + parts[len] + 2 * delta <= m {
                    break;
                }
            }
        }
        let r = parts[len];
        sums[len + 1] = sums[len] + r;
        prods[len + 1] = prods[len] * (r * r) as u64;
        len += 1;
        let i = len * stride + sums[len];
        count[i] += 1;
        weight[i] += prods[len] as u128;
    }
}

fn table(count: &[u64], weight: &[u128], m: usize) -> Vec<Vec<(u64, u128)>> {
    (0..=m).map(|r| (0..=m).map(|s| (count[s * (m + 1) + r], weight[s * (m + 1) + r])).collect()).collect()
}
