//! Run configuration: a flat key/value text format, validation, and the
//! configuration hash recorded in every report.

use crate::control::{CriterionReduction, ForceMode, PolicyParams, TokenStat};
use crate::denoiser::{GaussianMixture, GmmOracle, TokenModel, TokenOracle};
use crate::error::{Error, Result};
use crate::schedule::{NoiseSchedule, ScheduleKind};
use crate::solver::SolverKind;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Baseline,
    Sada,
    Eq5,
    Convergence,
    FdVsAm,
    TokenSweep,
}

impl std::fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ExperimentKind::Baseline => "baseline",
            ExperimentKind::Sada => "sada",
            ExperimentKind::Eq5 => "eq5",
            ExperimentKind::Convergence => "convergence",
            ExperimentKind::FdVsAm => "fd-vs-am",
            ExperimentKind::TokenSweep => "token-sweep",
        };
        f.write_str(s)
    }
}

/// Seed list specification: an exclusive range `a..b` or an explicit list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedSpec(pub Vec<u64>);

impl SeedSpec {
    pub fn parse(text: &str) -> Result<Self> {
        let text = text.trim();
        if let Some((a, b)) = text.split_once("..") {
            let lo: u64 = a.trim().parse().map_err(|_| bad_seed(text))?;
            let hi: u64 = b.trim().parse().map_err(|_| bad_seed(text))?;
            if hi <= lo {
                return Err(bad_seed(text));
            }
            return Ok(SeedSpec((lo..hi).collect()));
        }
        let seeds: std::result::Result<Vec<u64>, _> =
            text.split(',').map(|s| s.trim().parse::<u64>()).collect();
        match seeds {
            Ok(v) if !v.is_empty() => Ok(SeedSpec(v)),
            _ => Err(bad_seed(text)),
        }
    }
}

fn bad_seed(text: &str) -> Error {
    Error::InvalidConfig(vec![format!("cannot parse seed specification `{text}`")])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum DenoiserConfig {
    Gmm {
        dim: usize,
        weights: Vec<f64>,
        mean_scale: f64,
        variance: f64,
        seed: u64,
    },
    Token {
        layers: usize,
        tokens: usize,
        channels: usize,
        seed: u64,
    },
}

/// Fully resolved experiment configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub experiment: ExperimentKind,
    pub solver: SolverKind,
    pub steps: usize,
    pub seeds: SeedSpec,
    pub schedule: ScheduleKind,
    pub beta_start: f64,
    pub beta_end: f64,
    pub train_steps: u32,
    pub denoiser: DenoiserConfig,
    pub policy: PolicyParams,
    pub eq5_tau: f64,
    pub out_dir: PathBuf,
    pub dump_vectors: bool,
    pub workers: usize,
    /// Reduce fractions swept by the token-sweep experiment.
    pub token_sweep_fractions: Vec<f64>,
    pub token_sweep_steps: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            experiment: ExperimentKind::Sada,
            solver: SolverKind::Dpmpp2m,
            steps: 50,
            seeds: SeedSpec((0..16).collect()),
            schedule: ScheduleKind::VpLinear,
            beta_start: 1e-4,
            beta_end: 0.02,
            train_steps: 1000,
            denoiser: DenoiserConfig::Gmm {
                dim: 4,
                weights: vec![0.3, 0.7],
                mean_scale: 0.85,
                variance: 1.0,
                seed: 5,
            },
            policy: PolicyParams::default(),
            eq5_tau: 0.01,
            out_dir: PathBuf::from("out"),
            dump_vectors: true,
            workers: 0,
            token_sweep_fractions: vec![0.0, 0.2, 0.4, 0.6, 0.8],
            token_sweep_steps: 10,
        }
    }
}

impl RunConfig {
    /// Parse the flat `key = value` format (`#` starts a comment).
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut problems = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                problems.push(format!("line {}: expected `key = value`", lineno + 1));
                continue;
            };
            let key = key.trim();
            let value = value.trim().trim_matches('"');
            if let Err(e) = cfg.apply(key, value) {
                problems.push(format!("line {}: {e}", lineno + 1));
            }
        }
        if !problems.is_empty() {
            return Err(Error::InvalidConfig(problems));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    fn apply(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let parse_f64 =
            |v: &str| v.parse::<f64>().map_err(|_| format!("`{v}` is not a number"));
        let parse_usize =
            |v: &str| v.parse::<usize>().map_err(|_| format!("`{v}` is not an integer"));
        let parse_u64 = |v: &str| v.parse::<u64>().map_err(|_| format!("`{v}` is not an integer"));
        let parse_u32 = |v: &str| v.parse::<u32>().map_err(|_| format!("`{v}` is not an integer"));
        let parse_bool = |v: &str| match v {
            "true" | "yes" | "1" => Ok(true),
            "false" | "no" | "0" => Ok(false),
            _ => Err(format!("`{v}` is not a boolean")),
        };
        let parse_f64_list = |v: &str| -> std::result::Result<Vec<f64>, String> {
            v.split(',')
                .map(|s| s.trim().parse::<f64>().map_err(|_| format!("`{s}` is not a number")))
                .collect()
        };
        match key {
            "experiment" => {
                self.experiment = match value {
                    "baseline" => ExperimentKind::Baseline,
                    "sada" => ExperimentKind::Sada,
                    "eq5" => ExperimentKind::Eq5,
                    "convergence" => ExperimentKind::Convergence,
                    "fd-vs-am" => ExperimentKind::FdVsAm,
                    "token-sweep" => ExperimentKind::TokenSweep,
                    _ => return Err(format!("unknown experiment `{value}`")),
                }
            }
            "solver" | "solver_kind" => {
                self.solver = match value {
                    "euler-pfode" => SolverKind::EulerPfOde,
                    "euler-flow" => SolverKind::EulerFlow,
                    "dpmpp-2m" => SolverKind::Dpmpp2m,
                    _ => return Err(format!("unknown solver `{value}`")),
                }
            }
            "steps" | "n" => self.steps = parse_usize(value)?,
            "seeds" => self.seeds = SeedSpec::parse(value).map_err(|e| e.to_string())?,
            "schedule" => {
                self.schedule = match value {
                    "vp-linear" => ScheduleKind::VpLinear,
                    "vp-cosine" => ScheduleKind::VpCosine,
                    "flow-linear" => ScheduleKind::FlowLinear,
                    _ => return Err(format!("unknown schedule `{value}`")),
                }
            }
            "beta_start" => self.beta_start = parse_f64(value)?,
            "beta_end" => self.beta_end = parse_f64(value)?,
            "train_steps" => self.train_steps = parse_u32(value)?,
            "denoiser" => match value {
                "gmm" => {
                    if !matches!(self.denoiser, DenoiserConfig::Gmm { .. }) {
                        self.denoiser = RunConfig::default().denoiser;
                    }
                }
                "token" => {
                    if !matches!(self.denoiser, DenoiserConfig::Token { .. }) {
                        self.denoiser =
                            DenoiserConfig::Token { layers: 4, tokens: 64, channels: 16, seed: 0 };
                    }
                }
                _ => return Err(format!("unknown denoiser `{value}`")),
            },
            "gmm_dim" => match &mut self.denoiser {
                DenoiserConfig::Gmm { dim, .. } => *dim = parse_usize(value)?,
                _ => return Err("gmm_dim requires denoiser = gmm".to_string()),
            },
            "gmm_weights" => {
                let w = parse_f64_list(value)?;
                match &mut self.denoiser {
                    DenoiserConfig::Gmm { weights, .. } => *weights = w,
                    _ => return Err("gmm_weights requires denoiser = gmm".to_string()),
                }
            }
            "gmm_mean_scale" => match &mut self.denoiser {
                DenoiserConfig::Gmm { mean_scale, .. } => *mean_scale = parse_f64(value)?,
                _ => return Err("gmm_mean_scale requires denoiser = gmm".to_string()),
            },
            "gmm_variance" => match &mut self.denoiser {
                DenoiserConfig::Gmm { variance, .. } => *variance = parse_f64(value)?,
                _ => return Err("gmm_variance requires denoiser = gmm".to_string()),
            },
            "gmm_seed" => match &mut self.denoiser {
                DenoiserConfig::Gmm { seed, .. } => *seed = parse_u64(value)?,
                _ => return Err("gmm_seed requires denoiser = gmm".to_string()),
            },
            "token_layers" => match &mut self.denoiser {
                DenoiserConfig::Token { layers, .. } => *layers = parse_usize(value)?,
                _ => return Err("token_layers requires denoiser = token".to_string()),
            },
            "token_tokens" => match &mut self.denoiser {
                DenoiserConfig::Token { tokens, .. } => *tokens = parse_usize(value)?,
                _ => return Err("token_tokens requires denoiser = token".to_string()),
            },
            "token_channels" => match &mut self.denoiser {
                DenoiserConfig::Token { channels, .. } => *channels = parse_usize(value)?,
                _ => return Err("token_channels requires denoiser = token".to_string()),
            },
            "token_seed" => match &mut self.denoiser {
                DenoiserConfig::Token { seed, .. } => *seed = parse_u64(value)?,
                _ => return Err("token_seed requires denoiser = token".to_string()),
            },
            "criterion_reduction" => {
                self.policy.criterion_reduction = match value {
                    "mean" => CriterionReduction::Mean,
                    "stable-fraction" => CriterionReduction::StableFraction,
                    _ => return Err(format!("unknown criterion reduction `{value}`")),
                }
            }
            "stable_steps_to_enter" | "M" => {
                self.policy.stable_steps_to_enter = parse_usize(value)?
            }
            "multistep_interval" | "r" => self.policy.multistep_interval = parse_usize(value)?,
            "lagrange_nodes" => self.policy.lagrange_nodes = parse_usize(value)?,
            "token_cache_start" | "T_star" => {
                self.policy.token_cache_start = parse_usize(value)?
            }
            "token_cache_interval" | "cache_interval" => {
                self.policy.token_cache_interval = parse_usize(value)?
            }
            "token_stat" => {
                self.policy.token_stat = match value {
                    "channel-mean" => TokenStat::ChannelMean,
                    _ => return Err(format!("unknown token stat `{value}`")),
                }
            }
            "force_mode" => {
                self.policy.force_mode = match value {
                    "none" => ForceMode::None,
                    "fresh" => ForceMode::Fresh,
                    _ => return Err(format!("unknown force mode `{value}`")),
                }
            }
            "enable_multistep" => self.policy.enable_multistep = parse_bool(value)?,
            "enable_tokenwise" => self.policy.enable_tokenwise = parse_bool(value)?,
            "eq5_tau" | "tau" => self.eq5_tau = parse_f64(value)?,
            "out_dir" | "out" => self.out_dir = PathBuf::from(value),
            "dump_vectors" => self.dump_vectors = parse_bool(value)?,
            "workers" => self.workers = parse_usize(value)?,
            "token_sweep_fractions" => self.token_sweep_fractions = parse_f64_list(value)?,
            "token_sweep_steps" => self.token_sweep_steps = parse_usize(value)?,
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    /// Every violation, collected.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.steps < 4 {
            problems.push(format!("steps must be >= 4, got {}", self.steps));
        }
        if self.seeds.0.is_empty() {
            problems.push("seed list is empty".to_string());
        }
        if self.beta_start <= 0.0 || self.beta_end <= self.beta_start {
            problems.push(format!(
                "beta range must satisfy 0 < beta_start < beta_end, got ({}, {})",
                self.beta_start, self.beta_end
            ));
        }
        if self.train_steps < 2 {
            problems.push("train_steps must be >= 2".to_string());
        }
        match &self.denoiser {
            DenoiserConfig::Gmm { dim, weights, variance, .. } => {
                if *dim == 0 {
                    problems.push("gmm_dim must be positive".to_string());
                }
                if weights.is_empty() {
                    problems.push("gmm_weights must be non-empty".to_string());
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > 1e-9 {
                    problems.push(format!("gmm_weights sum to {total}, expected 1"));
                }
                if !(variance > &0.0) {
                    problems.push("gmm_variance must be positive".to_string());
                }
            }
            DenoiserConfig::Token { layers, tokens, channels, .. } => {
                if *layers == 0 || *tokens == 0 || *channels == 0 {
                    problems.push("token model dimensions must be positive".to_string());
                }
            }
        }
        if matches!(self.experiment, ExperimentKind::TokenSweep)
            && !matches!(self.denoiser, DenoiserConfig::Token { .. })
        {
            problems.push("token-sweep requires denoiser = token".to_string());
        }
        if self
            .token_sweep_fractions
            .iter()
            .any(|f| !(0.0..=1.0).contains(f))
        {
            problems.push("token_sweep_fractions must lie in [0, 1]".to_string());
        }
        if self.token_sweep_steps < 4 {
            problems.push("token_sweep_steps must be >= 4".to_string());
        }
        if matches!(self.schedule, ScheduleKind::FlowLinear)
            != matches!(self.solver, SolverKind::EulerFlow)
        {
            problems.push(
                "flow-linear schedule and euler-flow solver must be used together".to_string(),
            );
        }
        if let Err(Error::InvalidConfig(mut p)) = self.policy.validate() {
            problems.append(&mut p);
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(problems))
        }
    }

    pub fn build_schedule(&self) -> NoiseSchedule {
        match self.schedule {
            ScheduleKind::VpLinear => {
                NoiseSchedule::vp_linear(self.train_steps, self.beta_start, self.beta_end)
            }
            ScheduleKind::VpCosine => NoiseSchedule::vp_cosine(self.train_steps),
            ScheduleKind::FlowLinear => NoiseSchedule::flow_linear(),
        }
    }

    pub fn build_oracle(&self, schedule: &NoiseSchedule) -> Result<Box<dyn crate::denoiser::DenoiserOracle>> {
        match &self.denoiser {
            DenoiserConfig::Gmm { dim, weights, mean_scale, variance, seed } => {
                let gmm = GaussianMixture::seeded_testbed(
                    *dim,
                    weights.clone(),
                    *mean_scale,
                    *variance,
                    *seed,
                )?;
                let oracle = if matches!(self.solver, SolverKind::EulerFlow) {
                    GmmOracle::velocity_predictor(gmm, schedule.clone())
                } else {
                    GmmOracle::epsilon_predictor(gmm, schedule.clone())
                };
                Ok(Box::new(oracle))
            }
            DenoiserConfig::Token { layers, tokens, channels, seed } => {
                let model = TokenModel::new(*layers, *tokens, *channels, *seed);
                Ok(Box::new(TokenOracle::new(model)))
            }
        }
    }

    /// SHA-256 of the canonical serialized configuration. Execution details
    /// that cannot affect results (output directory, worker count, vector
    /// dumping) are excluded so reports from the same experiment hash alike.
    pub fn hash(&self) -> String {
        // BTreeMap round-trip sorts keys so the hash is field-order stable.
        let value = serde_json::to_value(self).expect("config serializes");
        let mut canonical: BTreeMap<String, serde_json::Value> = match value {
            serde_json::Value::Object(m) => m.into_iter().collect(),
            _ => unreachable!("config is a struct"),
        };
        for incidental in ["out_dir", "workers", "dump_vectors"] {
            canonical.remove(incidental);
        }
        let bytes = serde_json::to_vec(&canonical).expect("canonical config serializes");
        let digest = Sha256::digest(&bytes);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flat_key_values() {
        let text = "
# comment
experiment = sada
solver = euler-pfode
steps = 25
seeds = 0..8
gmm_dim = 6
gmm_weights = 0.5, 0.5
r = 5
force_mode = fresh
";
        let cfg = RunConfig::parse(text).unwrap();
        assert_eq!(cfg.experiment, ExperimentKind::Sada);
        assert_eq!(cfg.solver, SolverKind::EulerPfOde);
        assert_eq!(cfg.steps, 25);
        assert_eq!(cfg.seeds.0.len(), 8);
        assert_eq!(cfg.policy.multistep_interval, 5);
        assert_eq!(cfg.policy.force_mode, ForceMode::Fresh);
        match cfg.denoiser {
            DenoiserConfig::Gmm { dim, ref weights, .. } => {
                assert_eq!(dim, 6);
                assert_eq!(weights, &vec![0.5, 0.5]);
            }
            _ => panic!("expected gmm"),
        }
    }

    #[test]
    fn collects_every_violation() {
        let text = "
steps = 2
seeds = 7,8
beta_start = 0.5
beta_end = 0.1
gmm_weights = 0.5, 0.2
";
        match RunConfig::parse(text) {
            Err(Error::InvalidConfig(problems)) => {
                assert!(problems.len() >= 3, "{problems:?}");
            }
            other => panic!("expected invalid config, got {other:?}"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(
            RunConfig::parse("nonsense = 1"),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn seed_specs() {
        assert_eq!(SeedSpec::parse("3..6").unwrap().0, vec![3, 4, 5]);
        assert_eq!(SeedSpec::parse("1, 5, 9").unwrap().0, vec![1, 5, 9]);
        assert!(SeedSpec::parse("9..3").is_err());
        assert!(SeedSpec::parse("abc").is_err());
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = RunConfig::default();
        let b = RunConfig::default();
        assert_eq!(a.hash(), b.hash());
        let mut c = RunConfig::default();
        c.steps = 51;
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn flow_solver_requires_flow_schedule() {
        let text = "solver = euler-flow";
        assert!(RunConfig::parse(text).is_err());
        let text = "solver = euler-flow\nschedule = flow-linear";
        assert!(RunConfig::parse(text).is_ok());
    }
}
