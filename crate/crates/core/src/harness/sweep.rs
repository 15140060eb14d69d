//! Parameter sweeps, ablations and the random-search phase baseline.
//!
//! A sweep clones the base configuration, overrides one axis per point and
//! evaluates it with the requested method under shared seeds. Results land
//! in a [`MetricTable`] whose CSV schema is stable:
//!
//! ```text
//! run_id,axis,value,seeds,episodes,mean_asr,std_asr,mean_reward
//! ```

use super::config::ExperimentConfig;
use super::strategies::{strategy_eval, Strategy};
use crate::env::{ChannelMode, SimEnv};
use crate::ppo::{evaluate_greedy, AblationFlags, EvalSummary, Trainer};
use crate::rng::{derive_key, label, substream};
use crate::{Error, Result};
use rand::Rng;
use std::fmt::Write as _;

/// Sweepable axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    PMax,
    Kappa,
    Layers,
    Atoms,
    LearningRate,
    BatchSize,
    Depth,
}

impl SweepAxis {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pmax" | "p_max" => Ok(Self::PMax),
            "kappa" | "rhi" => Ok(Self::Kappa),
            "m" | "layers" => Ok(Self::Layers),
            "n" | "atoms" => Ok(Self::Atoms),
            "lr" | "learning_rate" => Ok(Self::LearningRate),
            "b" | "batch" => Ok(Self::BatchSize),
            "l" | "depth" => Ok(Self::Depth),
            other => Err(Error::Config(format!(
                "unknown sweep axis '{other}' (expected pmax|kappa|m|n|lr|b|l)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::PMax => "pmax_dbm",
            Self::Kappa => "kappa",
            Self::Layers => "layers",
            Self::Atoms => "atoms",
            Self::LearningRate => "lr",
            Self::BatchSize => "batch",
            Self::Depth => "depth",
        }
    }

    fn apply(&self, cfg: &mut ExperimentConfig, value: f64) -> Result<()> {
        match self {
            Self::PMax => cfg.scenario.p_max_dbm = value,
            Self::Kappa => cfg.scenario.rhi_level = value,
            Self::Layers => cfg.scenario.sim_layers = value as usize,
            Self::Atoms => cfg.scenario.atoms_per_layer = value as usize,
            Self::LearningRate => cfg.trainer.learning_rate = value,
            Self::BatchSize => cfg.trainer.batch_size = value as usize,
            Self::Depth => cfg.trainer.bilstm_depth = value as usize,
        }
        cfg.validate()
    }
}

/// How each sweep point is scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepMethod {
    /// Train the policy optimizer, then evaluate greedily.
    Ppo,
    /// Evaluate a static strategy.
    Static(Strategy),
    /// Best-of-C random phase search per slot at full power.
    RandomSearch,
}

impl SweepMethod {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ppo" => Ok(Self::Ppo),
            "strategy1" | "s1" => Ok(Self::Static(Strategy::NoSim)),
            "strategy2" | "s2" => Ok(Self::Static(Strategy::UniformHalfPower)),
            "strategy3" | "s3" => Ok(Self::Static(Strategy::UniformMaxPower)),
            "random-search" | "rs" => Ok(Self::RandomSearch),
            other => Err(Error::Config(format!(
                "unknown sweep method '{other}' (expected ppo|strategy1|strategy2|strategy3|random-search)"
            ))),
        }
    }

    pub fn name(&self) -> String {
        match self {
            Self::Ppo => "ppo".into(),
            Self::Static(s) => format!("strategy{}", s.id()),
            Self::RandomSearch => "random-search".into(),
        }
    }
}

/// One result row.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub run_id: String,
    pub axis: String,
    pub value: f64,
    pub seeds: Vec<u64>,
    pub episodes: usize,
    pub mean_asr: f64,
    pub std_asr: f64,
    pub mean_reward: f64,
}

/// Result table with a stable CSV schema.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricTable {
    pub rows: Vec<MetricRow>,
}

impl MetricTable {
    pub const CSV_HEADER: &'static str =
        "run_id,axis,value,seeds,episodes,mean_asr,std_asr,mean_reward";

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let seeds = r
                .seeds
                .iter()
                .map(|s| s.to_string())
                .collect::<Vec<_>>()
                .join("|");
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.run_id, r.axis, r.value, seeds, r.episodes, r.mean_asr, r.std_asr, r.mean_reward
            );
        }
        out
    }
}

/// Candidates tried per slot by the random phase search.
pub const RANDOM_SEARCH_CANDIDATES: usize = 32;

/// Best-of-C random phase search at full power, evaluated on the shared
/// evaluation streams. Candidate phases are redrawn per slot.
pub fn random_search_eval(
    cfg: &ExperimentConfig,
    episodes: usize,
    seed: u64,
    candidates: usize,
) -> Result<EvalSummary> {
    let env_cfg = cfg.env_config(ChannelMode::Stacked)?;
    let mut env = SimEnv::new(env_cfg.clone(), derive_key(seed, &[label::EVALUATION]))?;
    let phase_len = env_cfg.sim_layers * env_cfg.atoms_per_layer;
    let k_users = env_cfg.num_users;
    let mut asrs = Vec::with_capacity(episodes);
    let mut rewards = Vec::with_capacity(episodes);
    let mut per_user = vec![0.0; k_users];
    for ep in 0..episodes {
        env.reset()?;
        let mut ep_asr = 0.0;
        let mut ep_reward = 0.0;
        let mut slots = 0.0;
        loop {
            let mut rng = substream(seed, &[label::RANDOM_SEARCH, ep as u64, env.slot() as u64]);
            let pool: Vec<Vec<f64>> = (0..candidates)
                .map(|_| {
                    let mut a: Vec<f64> = (0..phase_len)
                        .map(|_| rng.random_range(-1.0..1.0))
                        .collect();
                    a.extend(std::iter::repeat(1.0).take(k_users));
                    a
                })
                .collect();
            let (_, reward, done, report, _) = env.step_best_of(&pool)?;
            ep_asr += report.mean_secrecy;
            ep_reward += reward;
            for u in 0..k_users {
                per_user[u] += report.secrecy_rates[u];
            }
            slots += 1.0;
            if done {
                break;
            }
        }
        asrs.push(ep_asr / slots);
        rewards.push(ep_reward / slots);
    }
    let n = asrs.len() as f64;
    let mean_asr = asrs.iter().sum::<f64>() / n;
    let var = asrs
        .iter()
        .map(|a| (a - mean_asr) * (a - mean_asr))
        .sum::<f64>()
        / n;
    let slots_total = n * env_cfg.slots_per_episode as f64;
    Ok(EvalSummary {
        episodes,
        mean_asr,
        std_asr: var.sqrt(),
        mean_reward: rewards.iter().sum::<f64>() / n,
        per_user_asr: per_user.iter().map(|s| s / slots_total).collect(),
    })
}

fn score_point(
    cfg: &ExperimentConfig,
    method: SweepMethod,
    episodes: usize,
    seed: u64,
) -> Result<EvalSummary> {
    match method {
        SweepMethod::Static(strategy) => strategy_eval(strategy, cfg, episodes, seed, None),
        SweepMethod::RandomSearch => {
            random_search_eval(cfg, episodes, seed, RANDOM_SEARCH_CANDIDATES)
        }
        SweepMethod::Ppo => {
            let env_cfg = cfg.env_config(ChannelMode::Stacked)?;
            let mut trainer =
                Trainer::new(env_cfg.clone(), cfg.trainer.clone(), cfg.ablation, seed)?;
            trainer.run(None)?;
            evaluate_greedy(
                trainer.model(),
                trainer.scaler(),
                &env_cfg,
                &cfg.trainer,
                seed,
                episodes,
            )
        }
    }
}

fn aggregate_row(
    run_id: String,
    axis: String,
    value: f64,
    seeds: &[u64],
    episodes: usize,
    summaries: &[EvalSummary],
) -> MetricRow {
    let n = summaries.len() as f64;
    let mean_asr = summaries.iter().map(|s| s.mean_asr).sum::<f64>() / n;
    let std_asr = if summaries.len() > 1 {
        let var = summaries
            .iter()
            .map(|s| (s.mean_asr - mean_asr) * (s.mean_asr - mean_asr))
            .sum::<f64>()
            / n;
        var.sqrt()
    } else {
        summaries[0].std_asr
    };
    MetricRow {
        run_id,
        axis,
        value,
        seeds: seeds.to_vec(),
        episodes,
        mean_asr,
        std_asr,
        mean_reward: summaries.iter().map(|s| s.mean_reward).sum::<f64>() / n,
    }
}

/// Sweeps one axis over the given values. Every point shares the same seed
/// list, so channel draws coincide wherever the physics dimensions allow.
pub fn run_sweep(
    axis: SweepAxis,
    values: &[f64],
    method: SweepMethod,
    base: &ExperimentConfig,
    episodes: usize,
    seeds: &[u64],
) -> Result<MetricTable> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    if seeds.is_empty() {
        return Err(Error::Config("sweep needs at least one seed".into()));
    }
    let mut table = MetricTable::default();
    for &value in values {
        let mut cfg = base.clone();
        axis.apply(&mut cfg, value)?;
        let summaries: Vec<EvalSummary> = seeds
            .iter()
            .map(|&s| score_point(&cfg, method, episodes, s))
            .collect::<Result<_>>()?;
        table.rows.push(aggregate_row(
            format!("sweep-{}-{}-{}", axis.name(), method.name(), value),
            axis.name().into(),
            value,
            seeds,
            episodes,
            &summaries,
        ));
    }
    Ok(table)
}

/// Ablation variants: the full method plus each mechanism disabled in turn,
/// plus an everything-off configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AblationVariant {
    Full,
    NoBilstm,
    NoOpdu,
    NoPf,
    NoMhsa,
    Plain,
}

impl AblationVariant {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "full" => Ok(Self::Full),
            "no-bilstm" | "nobilstm" => Ok(Self::NoBilstm),
            "no-opdu" | "noopdu" => Ok(Self::NoOpdu),
            "no-pf" | "nopf" => Ok(Self::NoPf),
            "no-mhsa" | "nomhsa" => Ok(Self::NoMhsa),
            "plain" => Ok(Self::Plain),
            other => Err(Error::Config(format!(
                "unknown ablation variant '{other}' (expected full|no-bilstm|no-opdu|no-pf|no-mhsa|plain)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Full => "full",
            Self::NoBilstm => "no-bilstm",
            Self::NoOpdu => "no-opdu",
            Self::NoPf => "no-pf",
            Self::NoMhsa => "no-mhsa",
            Self::Plain => "plain",
        }
    }

    pub fn flags(&self) -> AblationFlags {
        match self {
            Self::Full => AblationFlags::default(),
            Self::NoBilstm => AblationFlags {
                disable_bilstm: true,
                ..AblationFlags::default()
            },
            Self::NoOpdu => AblationFlags {
                disable_opdu: true,
                ..AblationFlags::default()
            },
            Self::NoPf => AblationFlags {
                disable_pf: true,
                ..AblationFlags::default()
            },
            Self::NoMhsa => AblationFlags {
                disable_mhsa: true,
                ..AblationFlags::default()
            },
            Self::Plain => AblationFlags {
                disable_bilstm: true,
                disable_opdu: true,
                disable_pf: true,
                disable_mhsa: true,
            },
        }
    }

    pub fn default_set() -> Vec<Self> {
        vec![Self::Full, Self::NoBilstm, Self::NoOpdu, Self::NoPf]
    }
}

/// Trains each requested variant under shared seeds and reports greedy
/// evaluation scores.
pub fn run_ablation(
    variants: &[AblationVariant],
    base: &ExperimentConfig,
    episodes: usize,
    seeds: &[u64],
) -> Result<MetricTable> {
    if seeds.is_empty() {
        return Err(Error::Config("ablation needs at least one seed".into()));
    }
    let mut table = MetricTable::default();
    for (idx, variant) in variants.iter().enumerate() {
        let mut cfg = base.clone();
        cfg.ablation = variant.flags();
        let summaries: Vec<EvalSummary> = seeds
            .iter()
            .map(|&s| score_point(&cfg, SweepMethod::Ppo, episodes, s))
            .collect::<Result<_>>()?;
        table.rows.push(aggregate_row(
            format!("ablate-{}", variant.name()),
            "ablation".into(),
            idx as f64,
            seeds,
            episodes,
            &summaries,
        ));
    }
    Ok(table)
}
