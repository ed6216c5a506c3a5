use ce_excavator::exclusion::{
    binomial, history_count, run_exclusion, select, ExclusionConfig, Interval, PartitionElement, Status,
};
use ce_excavator::family::{derive_constants, ConstantsInputs, Probes, RationalFamily};
use num_bigint::BigUint;
use proptest::prelude::*;
use rug::Float;

const PREC: u32 = 256;

fn probes() -> Probes {
    Probes { grid_points: 20_000, param_samples: 3, gamma0_len: 2000, outside_n: 20, outside_samples: 2000, seed: 3 }
}

fn run(budget: usize, windows: usize, seed: u64) -> (ce_excavator::exclusion::ExclusionReport, ce_excavator::exclusion::ExclusionState) {
    let fam = RationalFamily::lattes2(1e-6).unwrap();
    let k = derive_constants(&fam, &ConstantsInputs { probes: probes(), ..ConstantsInputs::default() }).unwrap();
    let cfg = ExclusionConfig { element_budget: budget, windows, seed, ..ExclusionConfig::default() };
    run_exclusion(&fam, &k, &cfg).unwrap()
}

fn sum(es: &[PartitionElement]) -> Float {
    let mut s = Float::new(PREC);
    for e in es {
        s += &e.measure;
    }
    s
}

#[test]
fn measure_is_conserved_and_intervals_stay_disjoint() {
    let (report, st) = run(64, 1, 5);
    let total = Float::with_val(PREC, sum(&st.elements) + sum(&st.removed));
    let omega = st.omega0.len();
    let rel = Float::with_val(PREC, &total - &omega).abs() / omega;
    assert!(rel.to_f64() < 1e-12, "{}", rel.to_f64());

    let mut live: Vec<&PartitionElement> = st.elements.iter().filter(|e| e.status.is_live()).collect();
    live.sort_by(|a, b| a.l.cmp(&b.l).then(a.interval.lo.total_cmp(&b.interval.lo)));
    for w in live.windows(2) {
        if w[0].l == w[1].l {
            assert!(w[0].interval.hi <= w[1].interval.lo);
        }
    }
    for e in st.elements.iter().chain(&st.removed) {
        assert!(e.interval.lo >= st.omega0.lo && e.interval.hi <= st.omega0.hi);
    }
    for e in &st.removed {
        assert!(!e.status.is_live());
        assert!(e.deleted_at.is_some(), "{:?}", e.status);
        assert!(matches!(e.status, Status::Deleted(_) | Status::BlindDeleted));
    }
    assert!(report.windows.iter().all(|w| w.balanced(1e-12)));
    assert!((0.0..=1.0).contains(&report.retained_fraction));
}

#[test]
fn seeds_change_the_sample_but_not_the_accounting() {
    let (a, _) = run(32, 1, 1);
    let (b, _) = run(32, 1, 2);
    for r in [&a, &b] {
        assert!(r.windows[0].balanced(1e-12));
        assert!(r.basic_assumption.all_pass());
    }
    let (c, _) = run(32, 1, 1);
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&c).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn history_count_respects_its_bounds(r in 0u32..40, s in 0u32..12, delta in 1u32..4) {
        let h = history_count(r, s, delta);
        prop_assert!(h.exact <= h.binomial);
        prop_assert!(h.weighted <= h.weighted_bound);
        if s > 0 && s * delta > r {
            prop_assert_eq!(&h.exact, &BigUint::from(0u32));
        }
        if s == 1 && r >= delta {
            prop_assert_eq!(&h.exact, &BigUint::from(1u32));
        }
    }

    #[test]
    fn binomial_is_symmetric(n in 0u64..60, k in 0u64..60) {
        prop_assume!(k <= n);
        prop_assert_eq!(binomial(n, k), binomial(n, n - k));
    }

    #[test]
    fn equal_split_tiles(lo in -1e-3..1e-3f64, len in 1e-12..1e-3f64, k in 1usize..9) {
        let i = Interval::from_f64(PREC, lo, lo + len);
        let parts = i.split_equal(k);
        prop_assert_eq!(parts.len(), k);
        prop_assert_eq!(&parts[0].lo, &i.lo);
        prop_assert_eq!(&parts[k - 1].hi, &i.hi);
        for w in parts.windows(2) {
            prop_assert_eq!(&w[0].hi, &w[1].lo);
        }
    }

    #[test]
    fn selection_keeps_everything_within_quota(n in 0usize..30, seed in any::<u64>()) {
        prop_assert_eq!(select(n, n + 3, seed), (0..n).collect::<Vec<_>>());
    }
}
