use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use kwind::config::RunConfig;
use kwind::error::Error;
use kwind::harness::{self, RunReport};
use kwind::krylov::BUDGET_ENV;
use kwind::selftest::{self, SelftestOptions, CRITERIA};

#[derive(Debug, Parser)]
#[command(name = "kwind", version, about = "Krylov and size winding of thermal operators")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML run configuration; flags below override its values.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads, 0 for all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// First disorder seed; realization r uses seed + r.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    realizations: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Disorder ensemble of the spin model.
    SpinRun,
    /// Solvable, large-q and ramp-plateau curves.
    Analytic,
    /// Scramblon size distributions, C_S and peak-in-n profiles.
    Scramblon,
    /// Oracle and invariant checks, one line per acceptance criterion.
    Selftest {
        /// Comma-separated criteria to run.
        #[arg(long, value_delimiter = ',')]
        only: Vec<usize>,
        /// Scale the bounds of one criterion, as ID=FACTOR.
        #[arg(long, value_name = "ID=FACTOR", value_parser = parse_tighten)]
        tighten: Option<(usize, f64)>,
    },
}

fn parse_tighten(s: &str) -> Result<(usize, f64), String> {
    let (id, f) = s.split_once('=').ok_or("expected ID=FACTOR")?;
    let id: usize = id.trim().parse().map_err(|e| format!("criterion: {e}"))?;
    let f: f64 = f.trim().parse().map_err(|e| format!("factor: {e}"))?;
    if !(1..=CRITERIA).contains(&id) {
        return Err(format!("criterion must lie in 1..={CRITERIA}"));
    }
    if !(f >= 0.0 && f.is_finite()) {
        return Err("factor must be finite and nonnegative".into());
    }
    Ok((id, f))
}

fn resolve(c: &Common) -> Result<RunConfig, Error> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(d) = &c.out {
        cfg.output_dir = d.clone();
    }
    if let Some(t) = c.threads {
        cfg.threads = t;
    }
    if let Some(s) = c.seed {
        cfg.model.seed_base = s;
    }
    if let Some(r) = c.realizations {
        cfg.model.realizations = r;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_report(r: &RunReport) {
    println!("wrote {} files to {}", r.files.len(), r.output_dir.display());
    for (k, v) in &r.summary {
        println!("  {k} = {v}");
    }
    for f in &r.failures {
        eprintln!("failed: {}: {}", f.item, f.error);
    }
}

fn run(cli: &Cli) -> Result<i32, Error> {
    let cfg = resolve(&cli.common)?;
    match &cli.command {
        Command::SpinRun => {
            let res = harness::spin_run(&cfg)?;
            print_report(&res.report);
            if let Some(f) = res.fit {
                println!("  b_n fit: alpha = {:.6}, relative residual = {:.4}", f.alpha, f.residual);
            }
            println!("  {}/{} realizations completed", res.completed.len(), cfg.model.realizations);
            Ok(res.exit_code())
        }
        Command::Analytic => {
            let r = harness::analytic_run(&cfg)?;
            print_report(&r);
            Ok(r.exit_code())
        }
        Command::Scramblon => {
            let r = harness::scramblon_run(&cfg)?;
            print_report(&r);
            Ok(r.exit_code())
        }
        Command::Selftest { only, tighten } => {
            if let Some(&bad) = only.iter().find(|&&id| !(1..=CRITERIA).contains(&id)) {
                return Err(Error::Argument(format!("no criterion {bad}")));
            }
            let scratch;
            let workdir = match &cli.common.out {
                Some(d) => {
                    std::fs::create_dir_all(d)?;
                    d.clone()
                }
                None => {
                    scratch = tempfile::tempdir()?;
                    scratch.path().to_path_buf()
                }
            };
            let mut opts = SelftestOptions::new(workdir);
            opts.only = only.clone();
            opts.tighten = *tighten;
            opts.realizations = cfg.model.realizations;
            opts.seed_base = cfg.model.seed_base;
            opts.threads = cfg.threads;
            let report = selftest::run_selftest(&opts, |o| println!("{}", o.line()))?;
            println!(
                "{}/{} criteria passed in {:.1} s",
                report.passed(),
                report.outcomes.len(),
                report.seconds
            );
            Ok(if report.all_passed() { 0 } else { 3 })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let code = match run(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("kwind: {e}");
            if matches!(e, Error::Resource { .. }) {
                eprintln!("kwind: set {BUDGET_ENV} (MB) or lower --threads to change the budget");
            }
            harness::exit_code(&e)
        }
    };
    ExitCode::from(code as u8)
}
