//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Runs without the libtest harness so every line is printed.

use ce_excavator::exclusion::{enumerate_histories, history_count, ExclusionReport};
use ce_excavator::family::{orbit_with_param_derivative, transversality_certificate, transversality_ratio, RationalFamily};
use ce_excavator::scalar::{BigComplex, Scalar, C64};
use ce_excavator::sphere::orbit::iterate_raw;
use ce_excavator::sphere::{chordal_distance, random_sphere, Chart, RationalMap, SpherePoint};
use ce_excavator_cli::config::ProbeSizes;
use ce_excavator_cli::{cmd_exclude, cmd_orbit, verify_summary, history_suite, RunConfig};
use num_bigint::BigUint;
use rug::Float;
use std::time::{Duration, Instant};

const LOG4: f64 = 1.386_294_361_119_890_6;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn c(x: f64) -> C64 {
    C64::new(x, 0.0)
}

fn small_probes() -> ProbeSizes {
    ProbeSizes { grid_points: 20_000, outside_samples: 2000, ..ProbeSizes::default() }
}

fn criterion_1() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig { probes: small_probes(), ..RunConfig::default() };
    let t = Instant::now();
    let r = cmd_orbit(&cfg, dir.path(), 1, "0", 200).unwrap();
    let el = t.elapsed();
    let err = (r.lyapunov_lower - LOG4).abs().max((r.lyapunov_upper - LOG4).abs());
    outcome(
        err <= 1e-6 && el < Duration::from_secs(1),
        format!("lyapunov [{:.12}, {:.12}], max error {err:.2e}, {:.3}s", r.lyapunov_lower, r.lyapunov_upper, el.as_secs_f64()),
    )
}

fn maps() -> Vec<RationalMap<C64>> {
    vec![
        RationalMap::from_c64(53, &[c(-2.0), c(0.0), c(1.0)], &[c(0.0), c(0.0), c(1.0)]).unwrap(),
        RationalMap::from_c64(53, &[c(-2.0), c(0.0), c(1.0)], &[c(1.0)]).unwrap(),
        RationalMap::from_c64(53, &[c(-1.0), C64::new(0.0, 0.3), c(1.0)], &[c(2.0), c(1.0), c(0.5)]).unwrap(),
    ]
}

/// Chart coordinate of p in its own chart.
fn own(p: &SpherePoint<C64>) -> C64 {
    p.coordinate(p.chart()).unwrap()
}

fn criterion_2() -> Outcome {
    const N: usize = 100_000;
    let t = Instant::now();
    let pts = random_sphere(3 * N, 11);
    let mut symmetry = 0;
    let mut triangle = 0;
    for k in 0..N {
        let (p, q, r) = (&pts[3 * k], &pts[3 * k + 1], &pts[3 * k + 2]);
        if chordal_distance(p, q) != chordal_distance(q, p) {
            symmetry += 1;
        }
        if chordal_distance(p, r) > chordal_distance(p, q) + chordal_distance(q, r) + 1e-12 {
            triangle += 1;
        }
    }
    let maps = maps();
    let starts = random_sphere(N, 12);
    let mut chain = 0;
    let mut chart = 0;
    let mut chain_err: f64 = 0.0;
    let mut chart_err: f64 = 0.0;
    for (k, p0) in starts.iter().enumerate() {
        let f = &maps[k % maps.len()];
        // chain rule: ledger against the product of chart derivatives
        let Ok((orbit, ledger)) = iterate_raw(f, p0, 4) else { continue };
        let mut log_prod = (1.0 + own(&orbit[0]).norm_sqr()).ln() - (1.0 + own(&orbit[4]).norm_sqr()).ln();
        for j in 0..4 {
            log_prod += f.chart_derivative(&orbit[j], orbit[j + 1].chart()).norm().ln();
        }
        let e = (log_prod - ledger.get(4)).abs();
        if ledger.get(4).is_finite() {
            chain_err = chain_err.max(e);
            if e > 1e-9 {
                chain += 1;
            }
        }
        // chart consistency: the two target charts and the sharp derivative
        let img = &orbit[1];
        let (Some(y), Some(_)) = (img.coordinate(Chart::Affine), img.coordinate(Chart::Inverse)) else { continue };
        let da = f.chart_derivative(p0, Chart::Affine);
        let di = f.chart_derivative(p0, Chart::Inverse);
        let rel = (di + da / (y * y)).norm() / di.norm().max(f64::MIN_POSITIVE);
        let x = own(p0);
        let sharp = da.norm() * (1.0 + x.norm_sqr()) / (1.0 + y.norm_sqr());
        let rel2 = (sharp / f.spherical_derivative(p0) - 1.0).abs();
        let e = rel.max(rel2);
        if e.is_finite() {
            chart_err = chart_err.max(e);
            if e > 1e-10 {
                chart += 1;
            }
        }
    }
    let el = t.elapsed();
    outcome(
        symmetry + triangle + chain + chart == 0 && el < Duration::from_secs(30),
        format!(
            "failures: symmetry {symmetry}, triangle {triangle}, chain {chain} (max {chain_err:.1e}), chart {chart} (max {chart_err:.1e}); {:.2}s",
            el.as_secs_f64()
        ),
    )
}

fn criterion_3() -> Outcome {
    let fam = RationalFamily::lattes2(1e-3).unwrap();
    let prec = 512;
    let h = Float::with_val(prec, 1e-60);
    let mut worst: f64 = 0.0;
    for a0 in [0.0, 1e-5] {
        let a = Float::with_val(prec, a0);
        let (_, t) = orbit_with_param_derivative::<BigComplex>(&fam, 1, &a, 30, prec).unwrap();
        let orbit = |a: Float| {
            let f = fam.map_at::<BigComplex>(&a, prec).unwrap();
            let cp = fam.critical_point_at(1, a.to_f64(), &f).unwrap();
            iterate_raw(&f, &cp, 30).unwrap().0
        };
        let plus = orbit(Float::with_val(prec, &a + &h));
        let minus = orbit(Float::with_val(prec, &a - &h));
        for k in 1..=30 {
            let ch = t[k].chart;
            let diff = plus[k].coordinate(ch).unwrap().sub(&minus[k].coordinate(ch).unwrap());
            let fd = diff.mul_pow2(-1).to_c64() / 1e-60;
            worst = worst.max((fd - t[k].value).norm() / t[k].value.norm());
        }
    }
    outcome(worst <= 1e-4, format!("max relative error {worst:.2e} over k <= 30, a in {{0, 1e-5}}"))
}

fn criterion_4() -> Outcome {
    let fam = RationalFamily::lattes2(1e-3).unwrap();
    let s = transversality_ratio::<C64>(&fam, 1, &0.0, 30, 53).unwrap();
    let cert = transversality_certificate::<C64>(&fam, 1, &0.0, 30, LOG4 / 6.0, 1.0, 53).unwrap();
    let target = 4.0 / 3.0;
    let err = (s - c(target)).norm();
    outcome(
        err <= 1e-6 && cert.cross_check_rel_err <= 1e-4,
        format!(
            "partial sum {:.12} (target 4/3, error {err:.2e}); cross-check relative error {:.2e}",
            s.re, cert.cross_check_rel_err
        ),
    )
}

fn criterion_5() -> Outcome {
    let t = Instant::now();
    let suite = history_suite(30, &[1, 2, 3]);
    let el = t.elapsed();
    // spot check against the enumeration at the far corner
    let table = enumerate_histories(20, 1);
    let corner = history_count(20, 7, 1).exact == BigUint::from(table[20][7].0);
    outcome(
        suite.pass && corner && el < Duration::from_secs(10),
        format!("{} cases, {} mismatches, {:.2}s", suite.cases, suite.mismatches.len(), el.as_secs_f64()),
    )
}

struct Runs {
    report: ExclusionReport,
    identical: bool,
}

fn lattes_runs() -> Runs {
    let cfg = RunConfig::default();
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    let report = cmd_exclude(&cfg, d1.path()).unwrap();
    cmd_exclude(&cfg, d2.path()).unwrap();
    let same = |name: &str| std::fs::read(d1.path().join(name)).unwrap() == std::fs::read(d2.path().join(name)).unwrap();
    Runs { identical: same(&cfg.outputs.report) && same(&cfg.outputs.intervals), report }
}

fn criterion_6(r: &ExclusionReport) -> Outcome {
    let ba = &r.basic_assumption;
    let worst = ba.violations.iter().map(|v| v.fraction / v.bound).fold(0.0, f64::max);
    outcome(
        ba.all_pass() && r.windows.len() == 2,
        format!("{}/{} essential-return audits within e^(-alpha nu), worst violation ratio {worst:.2}", ba.passed, ba.total),
    )
}

fn criterion_7(r: &ExclusionReport) -> Outcome {
    let s = verify_summary(r, history_suite(0, &[1]));
    let get = |n: &str| s.checks.iter().find(|c| c.name == n).unwrap().clone();
    let (d, b) = (get("doubling"), get("bound_expansion"));
    let itemized = r.windows.iter().all(|w| {
        w.doubling.violations.len() == w.doubling.total - w.doubling.passed
            && w.bound_expansion.violations.len() == w.bound_expansion.total - w.bound_expansion.passed
    });
    outcome(
        d.total > 0 && b.total > 0 && d.pass_rate >= 0.95 && b.pass_rate >= 0.95 && itemized,
        format!("doubling {}/{}, bound expansion {}/{}, violations itemized: {itemized}", d.passed, d.total, b.passed, b.total),
    )
}

fn criterion_8(r: &ExclusionReport) -> Outcome {
    let lines: Vec<String> = r
        .windows
        .iter()
        .flat_map(|w| w.large_deviation.iter().map(move |b| format!("n={} {:.2e}<={:.2e}", w.n, b.fraction, b.bound)))
        .collect();
    let pass = r.windows.iter().all(|w| w.n <= 128 && !w.large_deviation.is_empty() && w.large_deviation.iter().all(|b| b.pass));
    outcome(pass, lines.join(", "))
}

fn criterion_9(runs: &Runs) -> Outcome {
    let worst = runs.report.windows.iter().flat_map(|w| w.measures.iter().map(|m| m.balance_residual)).fold(0.0, f64::max);
    outcome(
        worst <= 1e-12 && runs.identical,
        format!("max balance residual {worst:.1e}, reruns byte-identical: {}", runs.identical),
    )
}

fn criterion_10() -> Outcome {
    let t = Instant::now();
    let mut fractions = Vec::new();
    for eps in [1e-5, 1e-6, 1e-7] {
        let cfg = RunConfig { epsilon: eps, window_start: Some(10), ..RunConfig::default() };
        let dir = tempfile::tempdir().unwrap();
        let r = cmd_exclude(&cfg, dir.path()).unwrap();
        fractions.push(if r.windows.len() == 2 { r.retained_fraction } else { f64::NAN });
    }
    let el = t.elapsed();
    let monotone = fractions.windows(2).all(|w| w[1] >= w[0]);
    outcome(
        monotone && el < Duration::from_secs(600),
        format!(
            "retained {:.4} / {:.4} / {:.4} at eps 1e-5 / 1e-6 / 1e-7 (windows 10, 20, 40); {:.1}s",
            fractions[0],
            fractions[1],
            fractions[2],
            el.as_secs_f64()
        ),
    )
}

fn main() {
    // libtest flags such as --nocapture are accepted and ignored
    let mut results = Vec::new();
    let mut run = |n: usize, name: &str, f: &dyn Fn() -> Outcome| {
        let o = f();
        println!("criterion {n:>2} {:<4} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push(o.pass);
    };
    run(1, "lattes exponent", &criterion_1);
    run(2, "metric and chain rule", &criterion_2);
    run(3, "parameter derivative", &criterion_3);
    run(4, "transversality", &criterion_4);
    run(5, "history count", &criterion_5);
    let runs = lattes_runs();
    run(6, "basic assumption audit", &|| criterion_6(&runs.report));
    run(7, "doubling and bound period", &|| criterion_7(&runs.report));
    run(8, "large deviation", &|| criterion_8(&runs.report));
    run(9, "conservation", &|| criterion_9(&runs));
    run(10, "density trend", &criterion_10);
    let failed = results.iter().filter(|p| !**p).count();
    println!("{} of {} criteria pass", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
