//! Experiment CLI. Exit codes: 0 success, 2 configuration/validation
//! failure, 1 runtime abort.

use clap::{Parser, Subcommand};
use sada::control::ForceMode;
use sada::error::Error;
use sada::harness::{
    compare_policies, convergence_study, read_reports_jsonl, run_experiment,
    write_convergence_csv, ConvergenceScheme, ExperimentKind, RunConfig, SeedSpec,
};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "sada", about = "Stability-guided adaptive sampling acceleration experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the experiment described by a configuration file.
    Run {
        /// Flat key = value configuration file.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override the seed list (e.g. `0..100` or `1,5,9`).
        #[arg(long)]
        seeds: Option<String>,
        /// Override the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Force a controller mode (`none` or `fresh`).
        #[arg(long)]
        force_mode: Option<String>,
        /// Select the sampling policy (`sada`, `eq5`, or `none`).
        #[arg(long)]
        policy: Option<String>,
    },
    /// Convergence-order study of the numerical schemes.
    Convergence {
        /// `adams-moulton`, `lagrange-k`, `backward-extrap`, or `all`.
        #[arg(long, default_value = "all")]
        scheme: String,
        /// Interpolation stencil size for `lagrange-k`.
        #[arg(long, default_value_t = 4)]
        nodes: usize,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Head-to-head of the controller against the bypass baseline at a
    /// matched evaluation budget.
    Compare {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Budget matching tolerance (relative).
        #[arg(long, default_value_t = 0.05)]
        tolerance: f64,
    },
    /// Summarize a reports.jsonl file.
    Report {
        /// Path to a reports.jsonl produced by `run`.
        reports: PathBuf,
    },
}

fn load_config(
    config: Option<PathBuf>,
    seeds: Option<String>,
    out: Option<PathBuf>,
) -> Result<RunConfig, Error> {
    let mut cfg = match config {
        Some(path) => RunConfig::load(&path)?,
        None => RunConfig::default(),
    };
    if let Some(spec) = seeds {
        cfg.seeds = SeedSpec::parse(&spec)?;
    }
    if let Some(dir) = out {
        cfg.out_dir = dir;
    }
    Ok(cfg)
}

fn cmd_run(
    config: Option<PathBuf>,
    seeds: Option<String>,
    out: Option<PathBuf>,
    force_mode: Option<String>,
    policy: Option<String>,
) -> Result<bool, Error> {
    let mut cfg = load_config(config, seeds, out)?;
    if let Some(mode) = force_mode {
        cfg.policy.force_mode = match mode.as_str() {
            "none" => ForceMode::None,
            "fresh" => ForceMode::Fresh,
            other => {
                return Err(Error::InvalidConfig(vec![format!("unknown force mode `{other}`")]))
            }
        };
    }
    if let Some(policy) = policy {
        cfg.experiment = match policy.as_str() {
            "sada" => ExperimentKind::Sada,
            "eq5" => ExperimentKind::Eq5,
            "none" => ExperimentKind::Baseline,
            other => {
                return Err(Error::InvalidConfig(vec![format!("unknown policy `{other}`")]))
            }
        };
    }
    let reports = run_experiment(&cfg)?;
    let incomplete = reports.iter().filter(|r| r.incomplete).count();
    println!(
        "experiment {} over {} seed(s) -> {}",
        cfg.experiment,
        cfg.seeds.0.len(),
        cfg.out_dir.join("reports.jsonl").display()
    );
    if !reports.is_empty() {
        summarize(&reports);
    }
    if incomplete > 0 {
        eprintln!("{incomplete} run(s) aborted; reports flagged incomplete");
        return Ok(false);
    }
    Ok(true)
}

fn summarize(reports: &[sada::harness::RunReport]) {
    let complete: Vec<_> = reports.iter().filter(|r| !r.incomplete).collect();
    if complete.is_empty() {
        return;
    }
    let mut by_label: std::collections::BTreeMap<&str, Vec<&sada::harness::RunReport>> =
        Default::default();
    for r in &complete {
        by_label.entry(r.experiment.as_str()).or_default().push(r);
    }
    println!(
        "{:<28} {:>6} {:>10} {:>12} {:>12}",
        "experiment", "runs", "speedup", "rel-l2", "psnr-db"
    );
    for (label, rs) in by_label {
        let n = rs.len() as f64;
        let speedup = rs.iter().map(|r| r.nfe_speedup).sum::<f64>() / n;
        let rel = rs.iter().map(|r| r.terminal_rel_l2).sum::<f64>() / n;
        let psnr = rs.iter().map(|r| r.terminal_psnr_db).sum::<f64>() / n;
        println!("{label:<28} {:>6} {speedup:>10.3} {rel:>12.5} {psnr:>12.2}", rs.len());
    }
}

fn cmd_convergence(scheme: &str, nodes: usize, out: &std::path::Path) -> Result<(), Error> {
    let resolutions = sada::harness::DEFAULT_RESOLUTIONS;
    let mut rows = Vec::new();
    let schemes: Vec<(ConvergenceScheme, usize)> = match scheme {
        "adams-moulton" => vec![(ConvergenceScheme::AdamsMoulton, 0)],
        "backward-extrap" => vec![(ConvergenceScheme::BackwardExtrap, 0)],
        "lagrange-k" => vec![(ConvergenceScheme::LagrangeK, nodes)],
        "all" => vec![
            (ConvergenceScheme::AdamsMoulton, 0),
            (ConvergenceScheme::LagrangeK, 2),
            (ConvergenceScheme::LagrangeK, 3),
            (ConvergenceScheme::LagrangeK, 4),
            (ConvergenceScheme::BackwardExtrap, 0),
        ],
        other => {
            return Err(Error::InvalidConfig(vec![format!("unknown scheme `{other}`")]));
        }
    };
    for (s, n) in schemes {
        rows.extend(convergence_study(s, &resolutions, n)?);
    }
    println!(
        "{:<14} {:<6} {:>10} {:>14} {:>8}",
        "scheme", "fn", "h", "error", "order"
    );
    for r in &rows {
        println!(
            "{:<14} {:<6} {:>10.2e} {:>14.6e} {:>8.3}",
            r.scheme, r.function, r.h, r.error, r.observed_order
        );
    }
    write_convergence_csv(&out.join("convergence.csv"), &rows)?;
    println!("table -> {}", out.join("convergence.csv").display());
    Ok(())
}

fn cmd_compare(
    config: Option<PathBuf>,
    seeds: Option<String>,
    out: Option<PathBuf>,
    tolerance: f64,
) -> Result<(), Error> {
    let cfg = load_config(config, seeds, out)?;
    let summary = compare_policies(&cfg, tolerance)?;
    println!("seeds: {}", summary.seeds);
    println!(
        "controller : speedup {:.3}x, mean rel-l2 {:.5}",
        summary.sada_nfe_speedup, summary.sada_mean_rel_l2
    );
    println!(
        "bypass     : tau {:.5}, speedup {:.3}x, mean rel-l2 {:.5}",
        summary.eq5_tau, summary.eq5_nfe_speedup, summary.eq5_mean_rel_l2
    );
    println!(
        "budget mismatch {:.2}% (tolerance {:.0}%)",
        100.0 * summary.nfe_mismatch,
        100.0 * summary.matched_within
    );
    println!("summary -> {}", cfg.out_dir.join("compare.json").display());
    Ok(())
}

fn cmd_report(path: &std::path::Path) -> Result<(), Error> {
    let reports = read_reports_jsonl(path)?;
    if reports.is_empty() {
        println!("no reports in {}", path.display());
        return Ok(());
    }
    summarize(&reports);
    let incomplete = reports.iter().filter(|r| r.incomplete).count();
    if incomplete > 0 {
        println!("{incomplete} incomplete run(s)");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, seeds, out, force_mode, policy } => {
            match cmd_run(config, seeds, out, force_mode, policy) {
                Ok(true) => Ok(()),
                Ok(false) => return ExitCode::from(1),
                Err(e) => Err(e),
            }
        }
        Command::Convergence { scheme, nodes, out } => cmd_convergence(&scheme, nodes, &out),
        Command::Compare { config, seeds, out, tolerance } => {
            cmd_compare(config, seeds, out, tolerance)
        }
        Command::Report { reports } => cmd_report(&reports),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::InvalidConfig(_)) => {
            eprintln!("{e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(1)
        }
    }
}
