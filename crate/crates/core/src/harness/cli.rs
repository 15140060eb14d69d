//! Command-line interface.
//!
//! Subcommands: `train`, `evaluate`, `sweep`, `ablate`, `baseline`. Result
//! tables print to stdout as CSV and, when `--out` is given, also land in
//! the output directory together with JSON-lines logs, trace records and
//! checkpoints. Exit codes: 0 success, 2 configuration error, 3 numeric
//! divergence.

use super::config::ExperimentConfig;
use super::strategies::{strategy_eval, Strategy};
use super::sweep::{
    run_ablation, run_sweep, AblationVariant, MetricRow, MetricTable, SweepAxis, SweepMethod,
};
use crate::env::{ChannelMode, TraceRecord};
use crate::neural::{load_checkpoint, save_checkpoint, ActorCritic, EncoderSettings};
use crate::ppo::{evaluate_greedy_traced, EvalSummary, StateScaler, Trainer};
use crate::{Error, Result};
use clap::{Args, Parser, Subcommand};
use std::io::Write as _;
use std::path::{Path, PathBuf};

#[derive(Parser, Debug)]
#[command(
    name = "simsec",
    about = "Simulator and trainer for secure uplink through stacked programmable metasurfaces",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct CommonOpts {
    /// Path to a JSON experiment configuration; defaults apply when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; overrides the configured one.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for CSV tables, logs and checkpoints.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train the policy optimizer, then evaluate it greedily.
    Train {
        #[command(flatten)]
        common: CommonOpts,
        /// Override the number of evolution episodes.
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Evaluate a trained checkpoint greedily.
    Evaluate {
        #[command(flatten)]
        common: CommonOpts,
        /// Checkpoint file produced by `train`.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Number of evaluation episodes.
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Evaluate a static baseline strategy (1, 2 or 3).
    Baseline {
        #[command(flatten)]
        common: CommonOpts,
        /// Strategy id: 1 no stack, 2 uniform phase half power, 3 uniform
        /// phase max power.
        #[arg(long)]
        strategy: u8,
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Sweep one axis over a list of values.
    Sweep {
        #[command(flatten)]
        common: CommonOpts,
        /// Axis: pmax|kappa|m|n|lr|b|l.
        #[arg(long)]
        axis: String,
        /// Comma-separated axis values.
        #[arg(long)]
        values: String,
        /// Scoring method: ppo|strategy1|strategy2|strategy3|random-search.
        #[arg(long, default_value = "strategy3")]
        method: String,
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Train ablation variants under shared seeds.
    Ablate {
        #[command(flatten)]
        common: CommonOpts,
        /// Comma-separated variants
        /// (full|no-bilstm|no-opdu|no-pf|no-mhsa|plain).
        #[arg(long)]
        variants: Option<String>,
        #[arg(long)]
        episodes: Option<usize>,
    },
}

fn load_config(common: &CommonOpts) -> Result<(ExperimentConfig, u64)> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::standard(),
    };
    if let Some(seed) = common.seed {
        cfg.trainer.seed = seed;
    }
    let seed = cfg.trainer.seed;
    Ok((cfg, seed))
}

fn write_outputs(out: &Option<PathBuf>, file_name: &str, table: &MetricTable) -> Result<()> {
    let csv = table.to_csv();
    print!("{csv}");
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(file_name), csv)?;
    }
    Ok(())
}

fn write_traces(out: &Option<PathBuf>, traces: &[TraceRecord]) -> Result<()> {
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        let mut f = std::fs::File::create(dir.join("traces.jsonl"))?;
        for t in traces {
            let line = serde_json::to_string(t)
                .map_err(|e| Error::Config(format!("trace serialization: {e}")))?;
            writeln!(f, "{line}")?;
        }
    }
    Ok(())
}

fn summary_row(run_id: String, axis: &str, value: f64, seed: u64, s: &EvalSummary) -> MetricRow {
    MetricRow {
        run_id,
        axis: axis.into(),
        value,
        seeds: vec![seed],
        episodes: s.episodes,
        mean_asr: s.mean_asr,
        std_asr: s.std_asr,
        mean_reward: s.mean_reward,
    }
}

fn encoder_settings(cfg: &ExperimentConfig) -> EncoderSettings {
    EncoderSettings {
        input_dim: 4 * cfg.scenario.num_users + 1,
        hidden_dim: cfg.trainer.hidden_dim,
        window: cfg.trainer.history_window,
        depth: cfg.trainer.bilstm_depth,
        attention_heads: cfg.trainer.attention_heads,
        use_recurrent: !cfg.ablation.disable_bilstm,
        use_attention: !cfg.ablation.disable_bilstm && !cfg.ablation.disable_mhsa,
    }
}

fn cmd_train(common: CommonOpts, episodes: Option<usize>) -> Result<()> {
    let (mut cfg, seed) = load_config(&common)?;
    if let Some(ep) = episodes {
        cfg.trainer.training_episodes = ep;
    }
    cfg.validate()?;
    let env_cfg = cfg.env_config(ChannelMode::Stacked)?;
    let mut trainer = Trainer::new(env_cfg.clone(), cfg.trainer.clone(), cfg.ablation, seed)?;
    trainer.run(common.out.as_deref())?;
    let eval = trainer.evaluate(cfg.trainer.eval_episodes)?;
    let mut table = MetricTable::default();
    table
        .rows
        .push(summary_row("train".into(), "final", 0.0, seed, &eval));
    write_outputs(&common.out, "summary.csv", &table)?;
    Ok(())
}

fn cmd_evaluate(common: CommonOpts, checkpoint: &Path, episodes: Option<usize>) -> Result<()> {
    let (cfg, seed) = load_config(&common)?;
    cfg.validate()?;
    let env_cfg = cfg.env_config(ChannelMode::Stacked)?;
    let mut model = ActorCritic::new(&encoder_settings(&cfg), env_cfg.action_dim(), seed);
    load_checkpoint(&mut model, checkpoint)?;
    let scaler = StateScaler::new(env_cfg.num_users, env_cfg.area_size);
    let episodes = episodes.unwrap_or(cfg.trainer.eval_episodes);
    let mut traces = Vec::new();
    let eval = evaluate_greedy_traced(
        &model,
        &scaler,
        &env_cfg,
        &cfg.trainer,
        seed,
        episodes,
        Some(&mut traces),
    )?;
    let mut table = MetricTable::default();
    table.rows.push(summary_row(
        "evaluate".into(),
        "checkpoint",
        0.0,
        seed,
        &eval,
    ));
    write_outputs(&common.out, "evaluate.csv", &table)?;
    write_traces(&common.out, &traces)?;
    Ok(())
}

fn cmd_baseline(common: CommonOpts, strategy: u8, episodes: Option<usize>) -> Result<()> {
    let (cfg, seed) = load_config(&common)?;
    cfg.validate()?;
    let strategy = Strategy::from_id(strategy)?;
    let episodes = episodes.unwrap_or(20);
    let mut traces = Vec::new();
    let eval = strategy_eval(strategy, &cfg, episodes, seed, Some(&mut traces))?;
    let mut table = MetricTable::default();
    table.rows.push(summary_row(
        format!("baseline-strategy{}", strategy.id()),
        "strategy",
        strategy.id() as f64,
        seed,
        &eval,
    ));
    write_outputs(&common.out, "baseline.csv", &table)?;
    write_traces(&common.out, &traces)?;
    Ok(())
}

fn parse_values(values: &str) -> Result<Vec<f64>> {
    values
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::Config(format!("bad sweep value '{s}': {e}")))
        })
        .collect()
}

fn cmd_sweep(
    common: CommonOpts,
    axis: &str,
    values: &str,
    method: &str,
    episodes: Option<usize>,
) -> Result<()> {
    let (cfg, seed) = load_config(&common)?;
    cfg.validate()?;
    let axis = SweepAxis::parse(axis)?;
    let values = parse_values(values)?;
    let method = SweepMethod::parse(method)?;
    let episodes = episodes.unwrap_or(5);
    let table = run_sweep(axis, &values, method, &cfg, episodes, &[seed])?;
    write_outputs(&common.out, "sweep.csv", &table)?;
    Ok(())
}

fn cmd_ablate(common: CommonOpts, variants: Option<&str>, episodes: Option<usize>) -> Result<()> {
    let (cfg, seed) = load_config(&common)?;
    cfg.validate()?;
    let variants = match variants {
        Some(list) => list
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|s| AblationVariant::parse(s.trim()))
            .collect::<Result<Vec<_>>>()?,
        None => AblationVariant::default_set(),
    };
    let episodes = episodes.unwrap_or(cfg.trainer.eval_episodes);
    let table = run_ablation(&variants, &cfg, episodes, &[seed])?;
    write_outputs(&common.out, "ablation.csv", &table)?;
    Ok(())
}

/// Parses the argument list and runs the requested command; returns the
/// process exit code.
pub fn cli_main(argv: Vec<String>) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are successful exits.
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
        }
    };
    let result = match cli.command {
        Command::Train { common, episodes } => cmd_train(common, episodes),
        Command::Evaluate {
            common,
            checkpoint,
            episodes,
        } => cmd_evaluate(common, &checkpoint, episodes),
        Command::Baseline {
            common,
            strategy,
            episodes,
        } => cmd_baseline(common, strategy, episodes),
        Command::Sweep {
            common,
            axis,
            values,
            method,
            episodes,
        } => cmd_sweep(common, &axis, &values, &method, episodes),
        Command::Ablate {
            common,
            variants,
            episodes,
        } => cmd_ablate(common, variants.as_deref(), episodes),
    };
    match result {
        Ok(()) => 0,
        Err(Error::Divergence(msg)) => {
            eprintln!("error: training diverged: {msg}");
            3
        }
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

/// Writes a checkpoint for an externally built model (exposed for tests and
/// tooling symmetry with `load_checkpoint`).
pub fn save_model_checkpoint(model: &mut ActorCritic, path: &Path) -> Result<()> {
    save_checkpoint(model, path)
}
