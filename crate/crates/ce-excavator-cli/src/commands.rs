//! The four subcommands. Each writes its file into the output directory and
//! returns what it wrote.

use ce_excavator::exclusion::{float_string, run_exclusion, ExclusionReport, PartitionElement};
use ce_excavator::family::{derive_constants, ConstantsLedger, RationalFamily};
use ce_excavator::orbit::{critical_trace, detect_returns, lyapunov_estimates, NeighborhoodSystem, OrbitTrace, ReturnEvent};
use ce_excavator::scalar::BigComplex;
use rug::Float;
use serde::Serialize;
use std::fs;
use std::path::{Path, PathBuf};

use crate::config::RunConfig;
use crate::verify::{history_suite, verify_summary, VerifySummary};
use crate::CliError;

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io { path: path.display().to_string(), message: e.to_string() }
}

fn target(out: &Path, name: &str) -> Result<PathBuf, CliError> {
    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    Ok(out.join(name))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| io_err(path, e))
}

/// Derive the constants and re-validate the ledger.
pub fn constants_for(cfg: &RunConfig, fam: &RationalFamily) -> Result<ConstantsLedger, CliError> {
    let k = derive_constants(fam, &cfg.constants_inputs())?;
    k.validate()?;
    Ok(k)
}

#[derive(Clone, Debug, Serialize)]
#[serde(untagged)]
pub enum PointRepr {
    Finite([f64; 2]),
    /// Always "inf".
    Infinity(&'static str),
}

#[derive(Clone, Debug, Serialize)]
pub struct OrbitRow {
    pub k: usize,
    pub point: PointRepr,
    pub crit_dist: f64,
    pub nearest: usize,
    /// log|Df^{k−1}(v)|, from the critical value v = ξ₁; absent at k = 0.
    pub log_derivative: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct OrbitReport {
    pub family: String,
    pub l: usize,
    pub a: String,
    pub n: usize,
    pub precision_bits: u32,
    pub certified_horizon: usize,
    pub rows: Vec<OrbitRow>,
    pub returns: Vec<ReturnEvent>,
    pub lyapunov_lower: f64,
    pub lyapunov_upper: f64,
    /// log|Df^K(v)|/K at the last certified step K; absent when K = 0.
    pub exponent: Option<f64>,
}

pub fn parse_param(a: &str, prec: u32) -> Result<Float, CliError> {
    let parsed = Float::parse(a.trim()).map_err(|e| CliError::Config {
        field: Some("a".into()),
        line: None,
        message: format!("not a number: {e}"),
    })?;
    Ok(Float::with_val(prec, parsed))
}

fn rows_of(trace: &OrbitTrace) -> Vec<OrbitRow> {
    trace
        .points
        .iter()
        .enumerate()
        .map(|(k, p)| OrbitRow {
            k,
            point: match p.to_c64() {
                Some(z) => PointRepr::Finite([z.re, z.im]),
                None => PointRepr::Infinity("inf"),
            },
            crit_dist: trace.crit_dist[k],
            nearest: trace.nearest[k],
            log_derivative: (k >= trace.ledger_origin && k - trace.ledger_origin <= trace.ledger.steps())
                .then(|| trace.ledger.get(k - trace.ledger_origin)),
        })
        .collect()
}

/// Orbit of critical point l at parameter a for n steps.
pub fn cmd_orbit(cfg: &RunConfig, out: &Path, l: usize, a: &str, n: usize) -> Result<OrbitReport, CliError> {
    let fam = cfg.build_family()?;
    let k = constants_for(cfg, &fam)?;
    let prec = cfg.precision_bits;
    let a_val = parse_param(a, prec)?;
    let mut trace = critical_trace::<BigComplex>(&fam, l, &a_val, n, prec)?;
    let partners = (0..fam.paths().len())
        .map(|j| critical_trace::<BigComplex>(&fam, j, &a_val, n, prec))
        .collect::<Result<Vec<_>, _>>()?;
    let nbhd = NeighborhoodSystem::new(k.delta, k.delta_prime)?;
    trace.returns = detect_returns(&trace, &nbhd, k.beta, &partners, None)?;
    let (lo, hi) = lyapunov_estimates(&trace);
    let steps = trace.usable_steps();
    let report = OrbitReport {
        family: fam.name().to_string(),
        l,
        a: float_string(&a_val),
        n,
        precision_bits: prec,
        certified_horizon: trace.certified_horizon,
        rows: rows_of(&trace),
        returns: trace.returns.clone(),
        lyapunov_lower: lo,
        lyapunov_upper: hi,
        exponent: (steps > 0).then(|| trace.ledger.get(steps) / steps as f64),
    };
    write_json(&target(out, &cfg.outputs.orbit)?, &report)?;
    Ok(report)
}

fn csv_row(e: &PartitionElement) -> [String; 6] {
    let last_return = e.last_return().map(|t| t.to_string()).unwrap_or_default();
    let exponent = e.exponent_lower().map(|x| format!("{x:e}")).unwrap_or_default();
    [float_string(&e.interval.lo), float_string(&e.interval.hi), e.l.to_string(), e.status.to_string(), last_return, exponent]
}

/// Start phase and windows; writes the report and the surviving intervals.
pub fn cmd_exclude(cfg: &RunConfig, out: &Path) -> Result<ExclusionReport, CliError> {
    let fam = cfg.build_family()?;
    let k = constants_for(cfg, &fam)?;
    let (report, state) = run_exclusion(&fam, &k, &cfg.exclusion_config())?;
    write_json(&target(out, &cfg.outputs.report)?, &report)?;

    let path = target(out, &cfg.outputs.intervals)?;
    let mut live: Vec<&PartitionElement> = state.elements.iter().filter(|e| e.status.is_live()).collect();
    live.sort_by(|x, y| x.l.cmp(&y.l).then(x.interval.lo.total_cmp(&y.interval.lo)));
    let mut w = csv::Writer::from_path(&path).map_err(|e| io_err(&path, e))?;
    w.write_record(["a_lo", "a_hi", "l", "status", "last_return", "exponent_lower"]).map_err(|e| io_err(&path, e))?;
    for e in live {
        w.write_record(csv_row(e)).map_err(|e| io_err(&path, e))?;
    }
    w.flush().map_err(|e| io_err(&path, e))?;
    Ok(report)
}

/// Exclusion run plus the history-count suite, summarized as pass/fail checks.
pub fn cmd_verify(cfg: &RunConfig, out: &Path) -> Result<VerifySummary, CliError> {
    let fam = cfg.build_family()?;
    let k = constants_for(cfg, &fam)?;
    let (report, _) = run_exclusion(&fam, &k, &cfg.exclusion_config())?;
    let summary = verify_summary(&report, history_suite(cfg.history_max_r, &[1, 2, 3]));
    write_json(&target(out, &cfg.outputs.verify)?, &summary)?;
    Ok(summary)
}

pub fn cmd_constants(cfg: &RunConfig, out: &Path) -> Result<ConstantsLedger, CliError> {
    let fam = cfg.build_family()?;
    let k = constants_for(cfg, &fam)?;
    write_json(&target(out, &cfg.outputs.constants)?, &k)?;
    Ok(k)
}
