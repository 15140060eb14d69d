//! Static baseline strategies.
//!
//! 1. No stack: a single antenna per user receives a direct Rician channel,
//!    everyone transmits at the power cap.
//! 2. Uniform stack: every atom at phase π, everyone at half the cap.
//! 3. Uniform stack at full power: phase π, power cap.
//!
//! Baselines run on the same evaluation streams as greedy policy evaluation,
//! so under one master seed every strategy sees identical channels, motion
//! and initial placements.

use super::config::ExperimentConfig;
use crate::env::{ChannelMode, SimEnv, TraceRecord};
use crate::ppo::EvalSummary;
use crate::rng::{derive_key, label};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// Strategy 1: single-antenna system without the stack, max power.
    NoSim,
    /// Strategy 2: uniform phase π, half power.
    UniformHalfPower,
    /// Strategy 3: uniform phase π, max power.
    UniformMaxPower,
}

impl Strategy {
    pub fn from_id(id: u8) -> Result<Self> {
        match id {
            1 => Ok(Self::NoSim),
            2 => Ok(Self::UniformHalfPower),
            3 => Ok(Self::UniformMaxPower),
            other => Err(Error::Config(format!(
                "unknown strategy id {other}; expected 1, 2 or 3"
            ))),
        }
    }

    pub fn id(&self) -> u8 {
        match self {
            Self::NoSim => 1,
            Self::UniformHalfPower => 2,
            Self::UniformMaxPower => 3,
        }
    }

    fn channel_mode(&self) -> ChannelMode {
        match self {
            Self::NoSim => ChannelMode::Direct,
            _ => ChannelMode::Stacked,
        }
    }

    /// Fixed normalized action: phase entries 0 decode to π, power entries
    /// −1/0/+1 decode to zero, half and full power.
    fn action(&self, phase_len: usize, num_users: usize) -> Vec<f64> {
        let power_coord = match self {
            Self::NoSim | Self::UniformMaxPower => 1.0,
            Self::UniformHalfPower => 0.0,
        };
        let mut a = vec![0.0; phase_len + num_users];
        for v in a.iter_mut().skip(phase_len) {
            *v = power_coord;
        }
        a
    }
}

/// Evaluates a static strategy over greedy-evaluation streams; optionally
/// records per-slot trace records.
pub fn strategy_eval(
    strategy: Strategy,
    cfg: &ExperimentConfig,
    episodes: usize,
    seed: u64,
    mut traces: Option<&mut Vec<TraceRecord>>,
) -> Result<EvalSummary> {
    let env_cfg = cfg.env_config(strategy.channel_mode())?;
    let mut env = SimEnv::new(env_cfg.clone(), derive_key(seed, &[label::EVALUATION]))?;
    let action = strategy.action(
        env_cfg.sim_layers * env_cfg.atoms_per_layer,
        env_cfg.num_users,
    );
    let powers = crate::env::decode_action(
        &action,
        env_cfg.sim_layers,
        env_cfg.atoms_per_layer,
        env_cfg.num_users,
        env_cfg.p_max,
    )?
    .1;
    let k_users = env_cfg.num_users;
    let mut asrs = Vec::with_capacity(episodes);
    let mut rewards = Vec::with_capacity(episodes);
    let mut per_user = vec![0.0; k_users];
    for _ in 0..episodes {
        env.reset()?;
        let mut ep_asr = 0.0;
        let mut ep_reward = 0.0;
        let mut slots = 0.0;
        loop {
            let (state, reward, done, report) = env.step(&action)?;
            ep_asr += report.mean_secrecy;
            ep_reward += reward;
            for u in 0..k_users {
                per_user[u] += report.secrecy_rates[u];
            }
            if let Some(sink) = traces.as_deref_mut() {
                sink.push(TraceRecord {
                    slot: env.slot(),
                    positions: state.mu_positions.clone(),
                    powers: powers.clone(),
                    secrecy: report.secrecy_rates.clone(),
                    reward,
                });
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
