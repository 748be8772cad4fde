//! Experiment drivers: paired baseline/accelerated runs, policy
//! head-to-heads, the approximation-scheme comparison, and the token-cache
//! sweep.

use super::config::{DenoiserConfig, ExperimentKind, RunConfig};
use super::convergence::{convergence_study, ConvergenceScheme, DEFAULT_RESOLUTIONS};
use super::io::{write_convergence_csv, write_csv, write_reports_jsonl, write_vector_blob};
use super::metrics::{compute_psnr, mse, rel_l2};
use crate::control::{eq5_run, sada_run, CriterionSample, ForcedStepwisePolicy, PolicyParams};
use crate::denoiser::{cache_assisted_forward, EvalCounter, LayerCache, TokenCachePlan, TokenFeatureMap};
use crate::error::{Error, Result};
use crate::numerics::Vector;
use crate::schedule::{NoiseSchedule, TimestepGrid};
use crate::solver::{
    run_baseline, run_sampler, RunOutcome, SadaMode, SamplerConfig, SkipSource, SolverStepRecord,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::time::Instant;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeCounts {
    pub fresh: usize,
    pub step_wise: usize,
    pub multistep_wise: usize,
    pub token_wise: usize,
}

impl ModeCounts {
    fn from_outcome(outcome: &RunOutcome) -> Self {
        let counts = outcome.mode_counts();
        Self {
            fresh: counts[0].1,
            step_wise: counts[1].1,
            multistep_wise: counts[2].1,
            token_wise: counts[3].1,
        }
    }

    pub fn total(&self) -> usize {
        self.fresh + self.step_wise + self.multistep_wise + self.token_wise
    }
}

/// Per-seed run report; terminal metrics are against the paired same-seed
/// baseline. `wall_time_s` is informational and excluded from reproducibility
/// comparisons.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub experiment: String,
    pub solver: String,
    pub steps: usize,
    pub seed: u64,
    pub nfe_full: u64,
    /// Partial token passes, in full-evaluation equivalents.
    pub nfe_token_fraction: f64,
    pub nfe_equivalent: f64,
    /// Baseline full-eval equivalents divided by this run's.
    pub nfe_speedup: f64,
    pub mode_counts: ModeCounts,
    pub terminal_rel_l2: f64,
    pub terminal_psnr_db: f64,
    pub per_step_mse: Vec<f64>,
    pub wall_time_s: f64,
    pub config_hash: String,
    pub policy: PolicyParams,
    pub assumptions: Vec<String>,
    pub incomplete: bool,
}

fn token_dims(config: &RunConfig) -> (usize, usize) {
    match config.denoiser {
        DenoiserConfig::Token { tokens, layers, .. } => (tokens, layers),
        _ => (0, 0),
    }
}

fn build_report(
    config: &RunConfig,
    label: &str,
    seed: u64,
    outcome: &RunOutcome,
    baseline: &RunOutcome,
    assumptions: Vec<String>,
    wall_time_s: f64,
) -> Result<RunReport> {
    let rel = rel_l2(&outcome.terminal, &baseline.terminal)?;
    let peak = baseline.terminal.max_abs().max(f64::MIN_POSITIVE);
    let psnr = compute_psnr(&outcome.terminal, &baseline.terminal, peak)?;
    let per_step_mse: Result<Vec<f64>> = outcome
        .trajectory
        .iter()
        .zip(&baseline.trajectory)
        .map(|(a, b)| mse(&a.x0_t, &b.x0_t))
        .collect();
    let (tokens, layers) = token_dims(config);
    let nfe_equivalent = outcome.full_equivalents();
    let counter_equivalent = outcome.counter.full_equivalents(tokens, layers);
    if (nfe_equivalent - counter_equivalent).abs() > 1e-9 {
        return Err(Error::InvalidConfig(vec![format!(
            "evaluation accounting mismatch: per-step {nfe_equivalent} vs counter {counter_equivalent}"
        )]));
    }
    Ok(RunReport {
        experiment: label.to_string(),
        solver: config.solver.to_string(),
        steps: config.steps,
        seed,
        nfe_full: outcome.counter.full_evals,
        nfe_token_fraction: nfe_equivalent - outcome.counter.full_evals as f64,
        nfe_equivalent,
        nfe_speedup: baseline.full_equivalents() / nfe_equivalent,
        mode_counts: ModeCounts::from_outcome(outcome),
        terminal_rel_l2: rel,
        terminal_psnr_db: psnr,
        per_step_mse: per_step_mse?,
        wall_time_s,
        config_hash: config.hash(),
        policy: config.policy.clone(),
        assumptions,
        incomplete: false,
    })
}

fn incomplete_report(config: &RunConfig, label: &str, seed: u64, err: &Error) -> RunReport {
    RunReport {
        experiment: label.to_string(),
        solver: config.solver.to_string(),
        steps: config.steps,
        seed,
        nfe_full: 0,
        nfe_token_fraction: 0.0,
        nfe_equivalent: 0.0,
        nfe_speedup: 0.0,
        mode_counts: ModeCounts::default(),
        terminal_rel_l2: f64::NAN,
        terminal_psnr_db: f64::NAN,
        per_step_mse: Vec::new(),
        wall_time_s: 0.0,
        config_hash: config.hash(),
        policy: config.policy.clone(),
        assumptions: vec![format!("run aborted: {err}")],
        incomplete: true,
    }
}

/// One paired seed of a run-type experiment; returns the report plus the
/// step records and criterion log for CSV emission.
#[allow(clippy::type_complexity)]
fn run_seed(
    config: &RunConfig,
    schedule: &NoiseSchedule,
    grid: &TimestepGrid,
    seed: u64,
) -> Result<(RunReport, Vec<SolverStepRecord>, Vec<CriterionSample>, Vector, Vector)> {
    let oracle = config.build_oracle(schedule)?;
    let sampler = SamplerConfig::new(config.solver, config.steps, seed);
    let started = Instant::now();
    let baseline = run_baseline(&sampler, oracle.as_ref(), schedule, grid)?;
    let (outcome, criterion, assumptions, label) = match config.experiment {
        ExperimentKind::Baseline => {
            let out = run_baseline(&sampler, oracle.as_ref(), schedule, grid)?;
            (out, Vec::new(), Vec::new(), "baseline")
        }
        ExperimentKind::Sada => {
            let (out, log) = sada_run(&sampler, oracle.as_ref(), schedule, grid, &config.policy)?;
            (out, log.criterion, log.assumptions, "sada")
        }
        ExperimentKind::Eq5 => {
            let out = eq5_run(&sampler, oracle.as_ref(), schedule, grid, config.eq5_tau)?;
            (out, Vec::new(), Vec::new(), "eq5")
        }
        _ => unreachable!("run_seed only handles run-type experiments"),
    };
    let wall = started.elapsed().as_secs_f64();
    let report = build_report(config, label, seed, &outcome, &baseline, assumptions, wall)?;
    Ok((report, outcome.trajectory, criterion, outcome.terminal, baseline.terminal))
}

fn write_steps_csv(
    path: &Path,
    records: &[SolverStepRecord],
    baseline_mse: &[f64],
    criterion: &[CriterionSample],
) -> Result<()> {
    let rows: Vec<String> = records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let crit = criterion.iter().find(|c| c.index == r.index);
            format!(
                "{},{},{},{},{},{},{}",
                r.index,
                r.t,
                r.mode,
                r.cost_fraction,
                baseline_mse.get(i).copied().unwrap_or(f64::NAN),
                crit.map(|c| c.scalar_stat.to_string()).unwrap_or_default(),
                crit.map(|c| c.stable_fraction.to_string()).unwrap_or_default(),
            )
        })
        .collect();
    write_csv(path, "index,t,mode,cost_fraction,x0_mse_vs_baseline,criterion_stat,stable_fraction", &rows)
}

/// Execute the configured experiment over all seeds; reports land in
/// `out_dir/reports.jsonl` along with per-step CSVs and optional terminal
/// vector dumps. Aborted seeds yield reports flagged incomplete.
pub fn run_experiment(config: &RunConfig) -> Result<Vec<RunReport>> {
    config.validate()?;
    std::fs::create_dir_all(&config.out_dir)?;
    let reports = match config.experiment {
        ExperimentKind::Convergence => {
            let mut rows = Vec::new();
            rows.extend(convergence_study(
                ConvergenceScheme::AdamsMoulton,
                &DEFAULT_RESOLUTIONS,
                0,
            )?);
            for nodes in [2, 3, 4] {
                rows.extend(convergence_study(
                    ConvergenceScheme::LagrangeK,
                    &DEFAULT_RESOLUTIONS,
                    nodes,
                )?);
            }
            rows.extend(convergence_study(
                ConvergenceScheme::BackwardExtrap,
                &DEFAULT_RESOLUTIONS,
                0,
            )?);
            write_convergence_csv(&config.out_dir.join("convergence.csv"), &rows)?;
            Vec::new()
        }
        ExperimentKind::FdVsAm => run_fd_vs_am(config)?,
        ExperimentKind::TokenSweep => run_token_sweep(config)?,
        _ => run_paired(config)?,
    };
    write_reports_jsonl(&config.out_dir.join("reports.jsonl"), &reports)?;
    Ok(reports)
}

fn install_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> T {
    if workers == 0 {
        f()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .expect("thread pool");
        pool.install(f)
    }
}

fn run_paired(config: &RunConfig) -> Result<Vec<RunReport>> {
    let schedule = config.build_schedule();
    let grid = TimestepGrid::for_schedule(config.steps, &schedule)?;
    let seeds = config.seeds.0.clone();
    let results: Vec<(RunReport, Option<(Vec<SolverStepRecord>, Vec<f64>, Vec<CriterionSample>, Vector, Vector)>)> =
        install_pool(config.workers, || {
            seeds
                .par_iter()
                .map(|&seed| match run_seed(config, &schedule, &grid, seed) {
                    Ok((report, records, criterion, terminal, base_terminal)) => {
                        let mse = report.per_step_mse.clone();
                        (report, Some((records, mse, criterion, terminal, base_terminal)))
                    }
                    Err(e) => (incomplete_report(config, &config.experiment.to_string(), seed, &e), None),
                })
                .collect()
        });
    let mut reports = Vec::with_capacity(results.len());
    for (report, extras) in results {
        if let Some((records, mse, criterion, terminal, base_terminal)) = extras {
            let seed = report.seed;
            write_steps_csv(
                &config.out_dir.join(format!("steps_{seed}.csv")),
                &records,
                &mse,
                &criterion,
            )?;
            if config.dump_vectors {
                write_vector_blob(&config.out_dir.join(format!("terminal_{seed}.f64")), &terminal)?;
                write_vector_blob(
                    &config.out_dir.join(format!("terminal_baseline_{seed}.f64")),
                    &base_terminal,
                )?;
            }
        }
        reports.push(report);
    }
    Ok(reports)
}

/// Paired approximation study: identical forced skip schedules, one run per
/// state-estimation scheme, per-step reconstruction MSE against the paired
/// baseline at the skipped steps.
fn run_fd_vs_am(config: &RunConfig) -> Result<Vec<RunReport>> {
    let schedule = config.build_schedule();
    let grid = TimestepGrid::for_schedule(config.steps, &schedule)?;
    let seeds = config.seeds.0.clone();
    let variants = [
        (SkipSource::AdamsMoulton, "fd-vs-am/adams-moulton"),
        (SkipSource::BackwardExtrapolate, "fd-vs-am/finite-difference"),
    ];
    let per_seed: Vec<Result<Vec<(RunReport, Vec<Option<f64>>)>>> = install_pool(config.workers, || {
        seeds
            .par_iter()
            .map(|&seed| {
                let oracle = config.build_oracle(&schedule)?;
                let sampler = SamplerConfig::new(config.solver, config.steps, seed);
                let baseline = run_baseline(&sampler, oracle.as_ref(), &schedule, &grid)?;
                let mut out = Vec::new();
                for (source, label) in variants {
                    let started = Instant::now();
                    let mut policy = ForcedStepwisePolicy::new(source);
                    let run = run_sampler(&sampler, oracle.as_ref(), &schedule, &grid, &mut policy)?;
                    let wall = started.elapsed().as_secs_f64();
                    let report =
                        build_report(config, label, seed, &run, &baseline, Vec::new(), wall)?;
                    // Reconstruction error is defined at the skipped steps.
                    let skipped_mse: Vec<Option<f64>> = run
                        .trajectory
                        .iter()
                        .zip(&baseline.trajectory)
                        .map(|(a, b)| {
                            (a.mode == SadaMode::StepWise)
                                .then(|| mse(&a.x0_t, &b.x0_t))
                                .transpose()
                        })
                        .collect::<Result<Vec<Option<f64>>>>()?;
                    out.push((report, skipped_mse));
                }
                Ok(out)
            })
            .collect()
    });

    let mut reports = Vec::new();
    // per variant, per step: samples across seeds
    let mut tables: Vec<Vec<Vec<f64>>> = vec![vec![Vec::new(); config.steps]; variants.len()];
    for seed_result in per_seed {
        let seed_runs = seed_result?;
        for (v, (report, skipped)) in seed_runs.into_iter().enumerate() {
            for (i, entry) in skipped.iter().enumerate() {
                if let Some(m) = entry {
                    tables[v][i].push(*m);
                }
            }
            reports.push(report);
        }
    }
    let times = grid.times();
    let mut rows = Vec::new();
    for i in 0..config.steps {
        if tables[0][i].is_empty() {
            continue;
        }
        let stat = |vals: &[f64]| {
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            (mean, var.sqrt())
        };
        let (am_mean, am_std) = stat(&tables[0][i]);
        let (fd_mean, fd_std) = stat(&tables[1][i]);
        rows.push(format!(
            "{},{},{},{},{},{}",
            i, times[i], am_mean, am_std, fd_mean, fd_std
        ));
    }
    write_csv(
        &config.out_dir.join("fd_vs_am.csv"),
        "index,t,am_mean,am_std,fd_mean,fd_std",
        &rows,
    )?;
    reports.sort_by(|a, b| (a.experiment.clone(), a.seed).cmp(&(b.experiment.clone(), b.seed)));
    Ok(reports)
}

/// Token-cache sweep: replay a baseline token trajectory through the cache
/// protocol at a ladder of reduce fractions, pruning the least-drifted
/// tokens, and measure output error against the recorded full forwards. The
/// cache initializes once at the first step so the sweep isolates pruning
/// error.
fn run_token_sweep(config: &RunConfig) -> Result<Vec<RunReport>> {
    let DenoiserConfig::Token { layers, tokens, channels, seed: model_seed } = config.denoiser
    else {
        return Err(Error::InvalidConfig(vec!["token-sweep requires a token denoiser".into()]));
    };
    let schedule = config.build_schedule();
    let steps = config.token_sweep_steps;
    let grid = TimestepGrid::for_schedule(steps, &schedule)?;
    let seeds = config.seeds.0.clone();
    let mut reports = Vec::new();
    let mut rows = Vec::new();
    for &fraction in &config.token_sweep_fractions {
        let n_reduce = ((tokens as f64) * fraction).round() as usize;
        let per_seed: Vec<Result<(RunReport, Vec<f64>)>> = install_pool(config.workers, || {
            seeds
                .par_iter()
                .map(|&seed| {
                    let oracle = config.build_oracle(&schedule)?;
                    let model = oracle.token_model().expect("token oracle");
                    let sampler = SamplerConfig::new(config.solver, steps, seed);
                    let baseline = run_baseline(&sampler, oracle.as_ref(), &schedule, &grid)?;
                    let started = Instant::now();
                    let mut cache = LayerCache::new(layers, tokens, channels, 0, steps.max(1));
                    let mut counter = EvalCounter::default();
                    let mut shadow = 0u64;
                    let mut errors = Vec::with_capacity(steps);
                    let mut init_input: Option<TokenFeatureMap> = None;
                    for (i, record) in baseline.trajectory.iter().enumerate() {
                        let input =
                            TokenFeatureMap::from_vector(&record.x_t, tokens, channels)?;
                        let plan = if i == 0 || n_reduce == 0 {
                            TokenCachePlan::full(tokens)
                        } else {
                            let reference = init_input.as_ref().expect("init stored");
                            let mut drift: Vec<(usize, f64)> = (0..tokens)
                                .map(|tk| {
                                    let d: f64 = input
                                        .row(tk)
                                        .iter()
                                        .zip(reference.row(tk))
                                        .map(|(a, b)| (a - b) * (a - b))
                                        .sum();
                                    (tk, d)
                                })
                                .collect();
                            drift.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
                            let reduce: Vec<usize> =
                                drift[..n_reduce].iter().map(|(tk, _)| *tk).collect();
                            let fix: Vec<usize> =
                                drift[n_reduce..].iter().map(|(tk, _)| *tk).collect();
                            TokenCachePlan::new(fix, reduce, tokens)?
                        };
                        let (out, _cost) = cache_assisted_forward(
                            &input,
                            record.t,
                            i,
                            model,
                            &plan,
                            &mut cache,
                            &mut counter,
                            &mut shadow,
                        )?;
                        if i == 0 {
                            init_input = Some(input);
                        }
                        errors.push(rel_l2(&out.to_vector(), &record.eps_or_u)?);
                    }
                    let wall = started.elapsed().as_secs_f64();
                    let report = RunReport {
                        experiment: format!("token-sweep@{fraction:.2}"),
                        solver: config.solver.to_string(),
                        steps,
                        seed,
                        nfe_full: counter.full_evals,
                        nfe_token_fraction: counter.token_evals as f64
                            / (tokens * layers) as f64,
                        nfe_equivalent: counter.full_equivalents(tokens, layers),
                        nfe_speedup: steps as f64 / counter.full_equivalents(tokens, layers),
                        mode_counts: ModeCounts {
                            fresh: 0,
                            step_wise: 0,
                            multistep_wise: 0,
                            token_wise: steps - 1,
                        },
                        terminal_rel_l2: *errors.last().expect("at least one step"),
                        terminal_psnr_db: 0.0,
                        per_step_mse: errors.clone(),
                        wall_time_s: wall,
                        config_hash: config.hash(),
                        policy: config.policy.clone(),
                        assumptions: Vec::new(),
                        incomplete: false,
                    };
                    Ok((report, errors))
                })
                .collect()
        });
        let mut terminal = Vec::new();
        for r in per_seed {
            let (report, errors) = r?;
            terminal.push(*errors.last().expect("nonempty"));
            reports.push(report);
        }
        let n = terminal.len() as f64;
        let mean = terminal.iter().sum::<f64>() / n;
        let std =
            (terminal.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
        rows.push(format!("{fraction},{n_reduce},{mean},{std}"));
        let _ = model_seed;
    }
    write_csv(
        &config.out_dir.join("token_sweep.csv"),
        "reduce_fraction,reduced_tokens,terminal_rel_mean,terminal_rel_std",
        &rows,
    )?;
    Ok(reports)
}

/// Head-to-head summary at matched evaluation budgets.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompareSummary {
    pub seeds: usize,
    pub sada_nfe_speedup: f64,
    pub sada_mean_rel_l2: f64,
    pub eq5_tau: f64,
    pub eq5_nfe_speedup: f64,
    pub eq5_mean_rel_l2: f64,
    /// Relative budget mismatch |eq5 − sada|/sada.
    pub nfe_mismatch: f64,
    pub matched_within: f64,
}

fn policy_means(
    config: &RunConfig,
    schedule: &NoiseSchedule,
    grid: &TimestepGrid,
    tau: Option<f64>,
) -> Result<(f64, f64)> {
    let seeds = config.seeds.0.clone();
    let results: Vec<Result<(f64, f64)>> = install_pool(config.workers, || {
        seeds
            .par_iter()
            .map(|&seed| {
                let oracle = config.build_oracle(schedule)?;
                let sampler = SamplerConfig::new(config.solver, config.steps, seed);
                let baseline = run_baseline(&sampler, oracle.as_ref(), schedule, grid)?;
                let outcome = match tau {
                    Some(tau) => eq5_run(&sampler, oracle.as_ref(), schedule, grid, tau)?,
                    None => {
                        sada_run(&sampler, oracle.as_ref(), schedule, grid, &config.policy)?.0
                    }
                };
                let rel = rel_l2(&outcome.terminal, &baseline.terminal)?;
                let speedup = baseline.full_equivalents() / outcome.full_equivalents();
                Ok((rel, speedup))
            })
            .collect()
    });
    let mut rel_sum = 0.0;
    let mut speedup_sum = 0.0;
    let n = results.len() as f64;
    for r in results {
        let (rel, speedup) = r?;
        rel_sum += rel;
        speedup_sum += speedup;
    }
    Ok((rel_sum / n, speedup_sum / n))
}

/// Match the bypass policy's evaluation budget to the controller's by
/// bisecting its threshold, then compare mean terminal errors.
pub fn compare_policies(config: &RunConfig, tolerance: f64) -> Result<CompareSummary> {
    config.validate()?;
    let schedule = config.build_schedule();
    let grid = TimestepGrid::for_schedule(config.steps, &schedule)?;
    let (sada_rel, sada_speedup) = policy_means(config, &schedule, &grid, None)?;

    // The bypass rate is monotone in tau.
    let (mut lo, mut hi) = (-0.5_f64, 0.5_f64);
    for _ in 0..28 {
        let mid = 0.5 * (lo + hi);
        let (_, speedup) = policy_means(config, &schedule, &grid, Some(mid))?;
        if speedup < sada_speedup {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo) < 1e-9 {
            break;
        }
    }
    let tau = 0.5 * (lo + hi);
    let (eq5_rel, eq5_speedup) = policy_means(config, &schedule, &grid, Some(tau))?;
    let summary = CompareSummary {
        seeds: config.seeds.0.len(),
        sada_nfe_speedup: sada_speedup,
        sada_mean_rel_l2: sada_rel,
        eq5_tau: tau,
        eq5_nfe_speedup: eq5_speedup,
        eq5_mean_rel_l2: eq5_rel,
        nfe_mismatch: (eq5_speedup - sada_speedup).abs() / sada_speedup,
        matched_within: tolerance,
    };
    std::fs::create_dir_all(&config.out_dir)?;
    std::fs::write(
        config.out_dir.join("compare.json"),
        serde_json::to_string_pretty(&summary)?,
    )?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::SeedSpec;
    use crate::solver::SolverKind;

    fn small_config(dir: &Path) -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.steps = 20;
        cfg.seeds = SeedSpec((0..3).collect());
        cfg.out_dir = dir.to_path_buf();
        cfg
    }

    #[test]
    fn baseline_reports_are_self_referential() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small_config(dir.path());
        cfg.experiment = ExperimentKind::Baseline;
        let reports = run_experiment(&cfg).unwrap();
        assert_eq!(reports.len(), 3);
        for r in &reports {
            assert_eq!(r.terminal_rel_l2, 0.0);
            assert_eq!(r.terminal_psnr_db, super::super::metrics::PSNR_SENTINEL_DB);
            assert_eq!(r.mode_counts.fresh, cfg.steps - 1);
            assert_eq!(r.mode_counts.total(), cfg.steps - 1);
            assert_eq!(r.nfe_speedup, 1.0);
        }
        assert!(dir.path().join("reports.jsonl").exists());
        assert!(dir.path().join("steps_0.csv").exists());
        assert!(dir.path().join("terminal_0.f64").exists());
        assert!(dir.path().join("terminal_0.json").exists());
    }

    #[test]
    fn forced_fresh_sada_has_zero_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small_config(dir.path());
        cfg.experiment = ExperimentKind::Sada;
        cfg.policy.force_mode = crate::control::ForceMode::Fresh;
        let reports = run_experiment(&cfg).unwrap();
        for r in &reports {
            assert_eq!(r.terminal_rel_l2, 0.0);
            assert_eq!(r.mode_counts.total(), cfg.steps - 1);
        }
    }

    #[test]
    fn reports_are_reproducible_modulo_wall_time() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let mut cfg_a = small_config(dir_a.path());
        cfg_a.experiment = ExperimentKind::Sada;
        let mut cfg_b = cfg_a.clone();
        cfg_b.out_dir = dir_b.path().to_path_buf();
        run_experiment(&cfg_a).unwrap();
        run_experiment(&cfg_b).unwrap();
        let mut a: Vec<serde_json::Value> =
            std::fs::read_to_string(dir_a.path().join("reports.jsonl"))
                .unwrap()
                .lines()
                .map(|l| serde_json::from_str(l).unwrap())
                .collect();
        let mut b: Vec<serde_json::Value> =
            std::fs::read_to_string(dir_b.path().join("reports.jsonl"))
                .unwrap()
                .lines()
                .map(|l| serde_json::from_str(l).unwrap())
                .collect();
        for v in a.iter_mut().chain(b.iter_mut()) {
            v.as_object_mut().unwrap().remove("wall_time_s");
        }
        assert_eq!(a, b);
    }

    #[test]
    fn eq5_experiment_runs() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small_config(dir.path());
        cfg.experiment = ExperimentKind::Eq5;
        cfg.eq5_tau = 0.0;
        let reports = run_experiment(&cfg).unwrap();
        assert_eq!(reports.len(), 3);
        assert!(reports.iter().all(|r| !r.incomplete));
    }

    #[test]
    fn fd_vs_am_emits_paired_reports_and_table() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small_config(dir.path());
        cfg.experiment = ExperimentKind::FdVsAm;
        cfg.solver = SolverKind::EulerPfOde;
        let reports = run_experiment(&cfg).unwrap();
        assert_eq!(reports.len(), 6);
        let table = std::fs::read_to_string(dir.path().join("fd_vs_am.csv")).unwrap();
        assert!(table.lines().count() > 3);
        assert!(table.starts_with("index,t,am_mean,am_std,fd_mean,fd_std"));
    }

    #[test]
    fn token_sweep_error_grows_with_reduction() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small_config(dir.path());
        cfg.experiment = ExperimentKind::TokenSweep;
        cfg.denoiser = DenoiserConfig::Token { layers: 2, tokens: 16, channels: 4, seed: 3 };
        cfg.token_sweep_fractions = vec![0.0, 0.25, 0.75];
        cfg.token_sweep_steps = 8;
        cfg.seeds = SeedSpec((0..4).collect());
        let reports = run_experiment(&cfg).unwrap();
        assert_eq!(reports.len(), 12);
        let mean_at = |frac: &str| {
            let matching: Vec<&RunReport> = reports
                .iter()
                .filter(|r| r.experiment == format!("token-sweep@{frac}"))
                .collect();
            matching.iter().map(|r| r.terminal_rel_l2).sum::<f64>() / matching.len() as f64
        };
        let none = mean_at("0.00");
        let some = mean_at("0.25");
        let most = mean_at("0.75");
        assert_eq!(none, 0.0, "full computation must be exact");
        assert!(some <= most, "error should not decrease with more pruning: {some} vs {most}");
    }
}
