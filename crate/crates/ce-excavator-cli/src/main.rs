use ce_excavator_cli::{cmd_constants, cmd_exclude, cmd_orbit, cmd_verify, CliError, RunConfig};
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "ce-excavator", version, about = "Parameter exclusion experiments for Collet-Eckmann rational maps")]
struct Cli {
    /// JSON run configuration (defaults apply when omitted).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true)]
    precision_bits: Option<u32>,
    /// Seed for both the engine and the constant probes.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    windows: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Orbit of a critical point: points, ledger, returns, Lyapunov estimates.
    Orbit {
        /// Critical index.
        #[arg(long)]
        l: usize,
        /// Parameter, as a decimal string.
        #[arg(long, default_value = "0", allow_hyphen_values = true)]
        a: String,
        #[arg(long)]
        n: usize,
    },
    /// Start phase and windows: report JSON and surviving intervals CSV.
    Exclude,
    /// Pass/fail check summary; exits 3 when a check fails.
    Verify,
    /// Derived constants ledger.
    Constants,
}

fn load(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(p) = cli.precision_bits {
        cfg.precision_bits = p;
    }
    if let Some(s) = cli.seed {
        cfg.seeds.engine = s;
        cfg.seeds.probes = s;
    }
    if let Some(w) = cli.windows {
        cfg.windows = w;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn init_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("CE_EXCAVATOR_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| CliError::Config {
        field: Some("CE_EXCAVATOR_THREADS".into()),
        line: None,
        message: format!("expected a positive integer, got {v:?}"),
    })?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Io {
        path: "thread pool".into(),
        message: e.to_string(),
    })
}

fn run(cli: &Cli) -> Result<(), CliError> {
    init_threads()?;
    let cfg = load(cli)?;
    match &cli.command {
        Command::Orbit { l, a, n } => {
            let r = cmd_orbit(&cfg, &cli.out, *l, a, *n)?;
            println!("lyapunov [{:.12}, {:.12}] over {} steps", r.lyapunov_lower, r.lyapunov_upper, r.certified_horizon);
        }
        Command::Exclude => {
            let r = cmd_exclude(&cfg, &cli.out)?;
            println!("retained fraction {:.6} after {} windows", r.retained_fraction, r.windows.len());
        }
        Command::Verify => {
            let s = cmd_verify(&cfg, &cli.out)?;
            for c in &s.checks {
                let kind = if c.hard { "hard" } else { "soft" };
                println!("{:<16} {kind} {}/{} {}", c.name, c.passed, c.total, if c.pass { "ok" } else { "FAIL" });
            }
            if !s.pass {
                return Err(CliError::Verify(s.failed.join(", ")));
            }
        }
        Command::Constants => {
            let k = cmd_constants(&cfg, &cli.out)?;
            println!("{}", serde_json::to_string_pretty(&k).expect("ledger serializes"));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
