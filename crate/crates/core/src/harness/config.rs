//! Experiment configuration: JSON on disk, linear units inside.
//!
//! Every field has a default matching the reference scenario (100 m square,
//! base station at (0,0,20), eavesdropper at (20,20,0), 3.5 GHz carrier,
//! −110 dBm/Hz noise, 10 dB Rician factor, −20 dB gain at 1 m, 30 dBm power
//! cap, 4 layers of 36 atoms). Unknown keys are rejected, not ignored, so a
//! typo cannot silently fall back to a default.

use crate::channel::PathLossModel;
use crate::env::{ChannelMode, EnvConfig, RewardConfig};
use crate::ppo::{AblationFlags, TrainerSettings};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const CONFIG_VERSION: u32 = 1;
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Physical scenario block, in the units the experiment table uses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub area_size_m: f64,
    pub bs_position: [f64; 3],
    pub eve_position: [f64; 3],
    pub num_users: usize,
    pub max_velocity_mps: f64,
    pub path_loss_exponent: f64,
    pub carrier_frequency_hz: f64,
    pub noise_dbm_per_hz: f64,
    pub rician_factor_db: f64,
    pub path_loss_at_1m_db: f64,
    pub rhi_level: f64,
    pub p_max_dbm: f64,
    pub r_min_bps_hz: f64,
    pub sim_layers: usize,
    pub atoms_per_layer: usize,
    pub heading_perturbation_rad: f64,
    pub slot_duration_s: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            area_size_m: 100.0,
            bs_position: [0.0, 0.0, 20.0],
            eve_position: [20.0, 20.0, 0.0],
            num_users: 2,
            max_velocity_mps: 2.0,
            path_loss_exponent: 2.0,
            carrier_frequency_hz: 3.5e9,
            noise_dbm_per_hz: -110.0,
            rician_factor_db: 10.0,
            path_loss_at_1m_db: -20.0,
            rhi_level: 0.1,
            p_max_dbm: 30.0,
            r_min_bps_hz: 0.5,
            sim_layers: 4,
            atoms_per_layer: 36,
            heading_perturbation_rad: std::f64::consts::PI / 6.0,
            slot_duration_s: 1.0,
        }
    }
}

impl ScenarioConfig {
    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_frequency_hz
    }
}

/// Reward shaping gains; the feasibility threshold comes from the scenario's
/// minimum secrecy requirement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardGains {
    pub gain_diff: f64,
    pub gain_pro: f64,
    pub gain_sta: f64,
    pub stability_band: f64,
}

impl Default for RewardGains {
    fn default() -> Self {
        Self {
            gain_diff: 1.0,
            gain_pro: 1.0,
            gain_sta: 0.5,
            stability_band: 0.5,
        }
    }
}

/// Top-level experiment configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub version: u32,
    pub scenario: ScenarioConfig,
    pub reward: RewardGains,
    pub trainer: TrainerSettings,
    pub ablation: AblationFlags,
}

impl ExperimentConfig {
    pub fn standard() -> Self {
        Self {
            version: CONFIG_VERSION,
            ..Self::default()
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: Self = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("invalid config {}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Config(format!("serialize config: {e}")))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        let s = &self.scenario;
        if s.num_users == 0 {
            return Err(Error::Config("num_users must be at least 1".into()));
        }
        let side = (s.atoms_per_layer as f64).sqrt().round() as usize;
        if side * side != s.atoms_per_layer || s.atoms_per_layer == 0 {
            return Err(Error::Config(format!(
                "atoms_per_layer must be a perfect square, got {}",
                s.atoms_per_layer
            )));
        }
        if s.sim_layers == 0 {
            return Err(Error::Config("sim_layers must be at least 1".into()));
        }
        if !(s.area_size_m > 0.0) || !(s.carrier_frequency_hz > 0.0) || !(s.slot_duration_s > 0.0) {
            return Err(Error::Config(
                "area size, carrier frequency and slot duration must be positive".into(),
            ));
        }
        let t = &self.trainer;
        if t.slots_per_episode == 0 || t.batch_size == 0 || t.update_epochs == 0 {
            return Err(Error::Config(
                "slots_per_episode, batch_size and update_epochs must be positive".into(),
            ));
        }
        if t.history_window == 0 || t.hidden_dim == 0 || t.bilstm_depth == 0 {
            return Err(Error::Config(
                "history_window, hidden_dim and bilstm_depth must be positive".into(),
            ));
        }
        if !self.ablation.disable_bilstm
            && !self.ablation.disable_mhsa
            && t.hidden_dim % t.attention_heads.max(1) != 0
        {
            return Err(Error::Config(format!(
                "hidden_dim {} is not divisible by attention_heads {}",
                t.hidden_dim, t.attention_heads
            )));
        }
        if !(t.clip_epsilon > 0.0 && t.clip_epsilon < 1.0) {
            return Err(Error::Config(format!(
                "clip_epsilon must be in (0,1), got {}",
                t.clip_epsilon
            )));
        }
        if !(0.0..1.0).contains(&t.discount) {
            return Err(Error::Config(format!(
                "discount must be in [0,1), got {}",
                t.discount
            )));
        }
        if !(t.alpha_min > 0.0 && t.alpha_min <= 1.0) {
            return Err(Error::Config(format!(
                "alpha_min must be in (0,1], got {}",
                t.alpha_min
            )));
        }
        Ok(())
    }

    /// Converts dB-unit scenario fields into the linear-unit environment
    /// configuration.
    pub fn env_config(&self, mode: ChannelMode) -> Result<EnvConfig> {
        let s = &self.scenario;
        let path_loss =
            PathLossModel::new(db_to_linear(s.path_loss_at_1m_db), s.path_loss_exponent)?;
        let rician = db_to_linear(s.rician_factor_db);
        Ok(EnvConfig {
            num_users: s.num_users,
            sim_layers: s.sim_layers,
            atoms_per_layer: s.atoms_per_layer,
            wavelength: s.wavelength(),
            area_size: s.area_size_m,
            bs_position: s.bs_position,
            eve_position: s.eve_position,
            v_max: s.max_velocity_mps,
            heading_perturbation: s.heading_perturbation_rad,
            slot_duration: s.slot_duration_s,
            path_loss,
            rician_sim: rician,
            rician_eve: rician,
            kappa: s.rhi_level,
            noise_power: dbm_to_watts(s.noise_dbm_per_hz),
            p_max: dbm_to_watts(s.p_max_dbm),
            slots_per_episode: self.trainer.slots_per_episode,
            channel_mode: mode,
            reward: RewardConfig {
                gain_diff: self.reward.gain_diff,
                gain_pro: self.reward.gain_pro,
                gain_sta: self.reward.gain_sta,
                stability_band: self.reward.stability_band,
                min_secrecy: s.r_min_bps_hz,
            },
        })
    }
}
