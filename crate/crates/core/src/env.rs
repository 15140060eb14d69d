//! Episodic decision process over the physical simulator.
//!
//! One environment instance owns the stack geometry, the user kinematics and
//! the channel streams. A step decodes the normalized action into per-atom
//! phases and per-user powers, advances mobility, redraws channels, scores
//! the slot and assembles the next observation
//! `[positions, secrecy vector, SINR vector, mean secrecy]` of length `4K+1`.
//!
//! Rewards combine a rate increment term, a saturating progression term and
//! a stability penalty; the positive terms are gated off whenever any user
//! falls below the minimum secrecy requirement.
//!
//! All randomness is derived structurally from `(seed, episode, slot, user)`,
//! so two environments with the same seed see identical draws no matter what
//! actions they take. Static strategies therefore share channel realizations.

use crate::channel::{
    correlation_matrix, sample_eve_channel, sample_sim_channel, ChannelRealization,
    CorrelationMatrix, LinkParams, PathLossModel,
};
use crate::em::{Cascade, PhaseConfig, SimGeometry};
use crate::metrics::{secrecy_report, secrecy_report_from_channels, LinkSnapshot, SecrecyReport};
use crate::mobility::{step_mobility, Bounds, MuKinematics};
use crate::rng::{label, substream};
use crate::{Error, Result};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// Reward shaping gains and the feasibility gate threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    pub gain_diff: f64,
    pub gain_pro: f64,
    pub gain_sta: f64,
    /// Mean-secrecy change below this magnitude draws no stability penalty.
    pub stability_band: f64,
    /// Per-user minimum secrecy rate; below it the positive terms are gated.
    pub min_secrecy: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            gain_diff: 1.0,
            gain_pro: 1.0,
            gain_sta: 0.5,
            stability_band: 0.5,
            min_secrecy: 0.5,
        }
    }
}

/// How user gains at the base station are formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChannelMode {
    /// Through the metasurface stack: `g_k = |w_k^H G^H h_k|²`.
    Stacked,
    /// No stack: one antenna per user with a direct scalar Rician channel.
    Direct,
}

/// Scenario parameters in linear units.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    pub num_users: usize,
    pub sim_layers: usize,
    pub atoms_per_layer: usize,
    pub wavelength: f64,
    pub area_size: f64,
    pub bs_position: [f64; 3],
    pub eve_position: [f64; 3],
    pub v_max: f64,
    pub heading_perturbation: f64,
    pub slot_duration: f64,
    pub path_loss: PathLossModel,
    pub rician_sim: f64,
    pub rician_eve: f64,
    pub kappa: f64,
    pub noise_power: f64,
    pub p_max: f64,
    pub slots_per_episode: usize,
    pub channel_mode: ChannelMode,
    pub reward: RewardConfig,
}

impl EnvConfig {
    pub fn action_dim(&self) -> usize {
        self.sim_layers * self.atoms_per_layer + self.num_users
    }

    pub fn state_dim(&self) -> usize {
        4 * self.num_users + 1
    }
}

/// Observation of one slot; flattens to `4K+1` reals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdpState {
    pub mu_positions: Vec<[f64; 2]>,
    pub secrecy: Vec<f64>,
    pub sinr: Vec<f64>,
    pub mean_secrecy: f64,
}

impl MdpState {
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(4 * self.mu_positions.len() + 1);
        for p in &self.mu_positions {
            out.push(p[0]);
            out.push(p[1]);
        }
        out.extend_from_slice(&self.secrecy);
        out.extend_from_slice(&self.sinr);
        out.push(self.mean_secrecy);
        out
    }
}

/// Maps a normalized action in `[−1,1]^{M·N+K}` to phases in `[0,2π)` and
/// powers in `[0, P_max]`. Entries are clipped to the box first.
pub fn decode_action(
    action: &[f64],
    layers: usize,
    atoms_per_layer: usize,
    num_users: usize,
    p_max: f64,
) -> Result<(PhaseConfig, Vec<f64>)> {
    let expected = layers * atoms_per_layer + num_users;
    if action.len() != expected {
        return Err(Error::DimensionMismatch {
            context: "action length",
            expected,
            got: action.len(),
        });
    }
    let mut phases = ndarray::Array2::zeros((layers, atoms_per_layer));
    for m in 0..layers {
        for n in 0..atoms_per_layer {
            let x = action[m * atoms_per_layer + n].clamp(-1.0, 1.0);
            phases[(m, n)] = ((x + 1.0) * PI).rem_euclid(2.0 * PI);
        }
    }
    let powers = action[layers * atoms_per_layer..]
        .iter()
        .map(|&x| (x.clamp(-1.0, 1.0) + 1.0) / 2.0 * p_max)
        .collect();
    Ok((PhaseConfig::from_matrix(phases)?, powers))
}

/// Composite shaped reward between two consecutive slot reports.
pub fn compute_reward(prev: &SecrecyReport, next: &SecrecyReport, cfg: &RewardConfig) -> f64 {
    let r_diff = next.mean_secrecy - prev.mean_secrecy;
    let r_pro = 1.0 - (-next.mean_secrecy).exp();
    let delta = r_diff.abs();
    let r_sta = if delta > cfg.stability_band {
        delta
    } else {
        0.0
    };
    let feasible = next.secrecy_rates.iter().all(|&r| r >= cfg.min_secrecy);
    let mut diff_term = cfg.gain_diff * r_diff;
    let mut pro_term = cfg.gain_pro * r_pro;
    if !feasible {
        if diff_term > 0.0 {
            diff_term = 0.0;
        }
        pro_term = 0.0;
    }
    diff_term + pro_term - cfg.gain_sta * r_sta
}

/// JSON-lines trace record of one executed slot.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceRecord {
    pub slot: usize,
    pub positions: Vec<[f64; 2]>,
    pub powers: Vec<f64>,
    pub secrecy: Vec<f64>,
    pub reward: f64,
}

/// Episodic simulator environment.
pub struct SimEnv {
    cfg: EnvConfig,
    geom: SimGeometry,
    cascade: Cascade,
    corr: CorrelationMatrix,
    bounds: Bounds,
    kinematics: Vec<MuKinematics>,
    seed: u64,
    episode: u64,
    next_episode: u64,
    slot: usize,
    last_report: SecrecyReport,
    state: MdpState,
}

impl SimEnv {
    pub fn new(cfg: EnvConfig, seed: u64) -> Result<Self> {
        if cfg.num_users == 0 {
            return Err(Error::InvalidParameter("need at least one user".into()));
        }
        if cfg.slots_per_episode == 0 {
            return Err(Error::InvalidParameter(
                "need at least one slot per episode".into(),
            ));
        }
        let geom = SimGeometry::new(
            cfg.sim_layers,
            cfg.atoms_per_layer,
            cfg.num_users,
            cfg.wavelength,
        )?;
        let cascade = Cascade::new(&geom)?;
        let corr = correlation_matrix(&geom)?;
        let bounds = Bounds::square(cfg.area_size);
        let empty_report = SecrecyReport {
            rates: vec![0.0; cfg.num_users],
            eve_rates: vec![0.0; cfg.num_users],
            secrecy_rates: vec![0.0; cfg.num_users],
            bs_sinrs: vec![0.0; cfg.num_users],
            mean_secrecy: 0.0,
            sum_secrecy: 0.0,
        };
        let state = MdpState {
            mu_positions: vec![[0.0, 0.0]; cfg.num_users],
            secrecy: vec![0.0; cfg.num_users],
            sinr: vec![0.0; cfg.num_users],
            mean_secrecy: 0.0,
        };
        Ok(Self {
            cfg,
            geom,
            cascade,
            corr,
            bounds,
            kinematics: Vec::new(),
            seed,
            episode: 0,
            next_episode: 0,
            slot: 0,
            last_report: empty_report,
            state,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn geometry(&self) -> &SimGeometry {
        &self.geom
    }

    pub fn state(&self) -> &MdpState {
        &self.state
    }

    pub fn last_report(&self) -> &SecrecyReport {
        &self.last_report
    }

    pub fn episode(&self) -> u64 {
        self.episode
    }

    pub fn slot(&self) -> usize {
        self.slot
    }

    fn sim_link(&self) -> LinkParams {
        LinkParams {
            path_loss: self.cfg.path_loss,
            rician_factor: self.cfg.rician_sim,
        }
    }

    fn eve_link(&self) -> LinkParams {
        LinkParams {
            path_loss: self.cfg.path_loss,
            rician_factor: self.cfg.rician_eve,
        }
    }

    fn draw_channels(&self, slot: usize) -> Result<ChannelRealization> {
        let k = self.cfg.num_users;
        let mut h_sim = Vec::with_capacity(k);
        let mut h_eve = Vec::with_capacity(k);
        for user in 0..k {
            let mu3 = [
                self.kinematics[user].position[0],
                self.kinematics[user].position[1],
                0.0,
            ];
            if self.cfg.channel_mode == ChannelMode::Stacked {
                let mut rng = substream(
                    self.seed,
                    &[label::SIM_CHANNEL, self.episode, slot as u64, user as u64],
                );
                h_sim.push(sample_sim_channel(
                    mu3,
                    self.cfg.bs_position,
                    &self.geom,
                    &self.sim_link(),
                    &self.corr,
                    &mut rng,
                )?);
            }
            let mut rng = substream(
                self.seed,
                &[label::EVE_CHANNEL, self.episode, slot as u64, user as u64],
            );
            h_eve.push(sample_eve_channel(
                mu3,
                self.cfg.eve_position,
                &self.eve_link(),
                self.cfg.wavelength,
                &mut rng,
            )?);
        }
        Ok(ChannelRealization {
            h_sim,
            h_eve,
            slot: slot as u64,
        })
    }

    /// Direct scalar Rician gain for the no-stack mode; unit steering
    /// line-of-sight, unit-variance scattering.
    fn direct_gain(&self, user: usize, slot: usize) -> Result<f64> {
        let mu3 = [
            self.kinematics[user].position[0],
            self.kinematics[user].position[1],
            0.0,
        ];
        let beta = crate::channel::path_loss(mu3, self.cfg.bs_position, &self.cfg.path_loss)?;
        let xi = self.cfg.rician_sim;
        if xi.is_infinite() {
            return Ok(beta);
        }
        let mut rng = substream(
            self.seed,
            &[
                label::DIRECT_CHANNEL,
                self.episode,
                slot as u64,
                user as u64,
            ],
        );
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        let scattered = Complex64::new(re, im) * FRAC_1_SQRT_2;
        let h = (Complex64::new(xi.sqrt(), 0.0) + scattered) * (beta / (1.0 + xi)).sqrt();
        Ok(h.norm_sqr())
    }

    fn score_realization(
        &self,
        slot: usize,
        channels: &ChannelRealization,
        phases: &PhaseConfig,
        powers: &[f64],
    ) -> Result<SecrecyReport> {
        let kappas = vec![self.cfg.kappa; self.cfg.num_users];
        match self.cfg.channel_mode {
            ChannelMode::Stacked => secrecy_report_from_channels(
                &self.cascade,
                phases,
                channels,
                powers,
                &kappas,
                self.cfg.noise_power,
            ),
            ChannelMode::Direct => {
                let mut bs_gains = Vec::with_capacity(self.cfg.num_users);
                for user in 0..self.cfg.num_users {
                    bs_gains.push(self.direct_gain(user, slot)?);
                }
                let eve_gains = channels.h_eve.iter().map(|h| h.norm_sqr()).collect();
                secrecy_report(&LinkSnapshot {
                    bs_gains,
                    eve_gains,
                    powers: powers.to_vec(),
                    impairments: kappas,
                    noise_power: self.cfg.noise_power,
                })
            }
        }
    }

    fn score_slot(
        &self,
        slot: usize,
        phases: &PhaseConfig,
        powers: &[f64],
    ) -> Result<SecrecyReport> {
        let channels = self.draw_channels(slot)?;
        self.score_realization(slot, &channels, phases, powers)
    }

    fn assemble_state(&self, report: &SecrecyReport) -> MdpState {
        MdpState {
            mu_positions: self.kinematics.iter().map(|k| k.position).collect(),
            secrecy: report.secrecy_rates.clone(),
            sinr: report.bs_sinrs.clone(),
            mean_secrecy: report.mean_secrecy,
        }
    }

    /// Starts a new episode: fresh kinematics and channels, scored once with
    /// the uniform-phase, half-power configuration to populate the metric
    /// fields of the initial state.
    pub fn reset(&mut self) -> Result<MdpState> {
        self.episode = self.next_episode;
        self.next_episode += 1;
        self.slot = 0;
        let mut init_rng = substream(self.seed, &[label::EPISODE_INIT, self.episode]);
        self.kinematics = (0..self.cfg.num_users)
            .map(|_| {
                let x = init_rng.random_range(0.0..self.cfg.area_size);
                let y = init_rng.random_range(0.0..self.cfg.area_size);
                let heading = init_rng.random_range(0.0..2.0 * PI);
                MuKinematics::new([x, y], heading)
            })
            .collect();
        let phases = PhaseConfig::uniform(self.cfg.sim_layers, self.cfg.atoms_per_layer, PI);
        let powers = vec![self.cfg.p_max / 2.0; self.cfg.num_users];
        let report = self.score_slot(0, &phases, &powers)?;
        self.state = self.assemble_state(&report);
        self.last_report = report;
        Ok(self.state.clone())
    }

    /// Executes one action: decode, move users, redraw channels, score, and
    /// shape the reward against the previous slot's report.
    pub fn step(&mut self, action: &[f64]) -> Result<(MdpState, f64, bool, SecrecyReport)> {
        let (phases, powers) = decode_action(
            action,
            self.cfg.sim_layers,
            self.cfg.atoms_per_layer,
            self.cfg.num_users,
            self.cfg.p_max,
        )?;
        let slot = self.slot + 1;
        for (user, kin) in self.kinematics.iter_mut().enumerate() {
            let mut rng = substream(
                self.seed,
                &[label::MOBILITY, self.episode, slot as u64, user as u64],
            );
            *kin = step_mobility(
                kin,
                self.cfg.slot_duration,
                self.cfg.heading_perturbation,
                self.cfg.v_max,
                &self.bounds,
                &mut rng,
            );
        }
        let report = self.score_slot(slot, &phases, &powers)?;
        let next_state = self.assemble_state(&report);
        let reward = compute_reward(&self.last_report, &report, &self.cfg.reward);
        self.slot = slot;
        self.state = next_state.clone();
        self.last_report = report.clone();
        let done = self.slot >= self.cfg.slots_per_episode;
        Ok((next_state, reward, done, report))
    }

    /// Advances one slot once (mobility and channel draw shared) and commits
    /// the candidate action scoring the highest sum secrecy on that slot.
    /// Returns the chosen candidate's index alongside the usual step output.
    pub fn step_best_of(
        &mut self,
        candidates: &[Vec<f64>],
    ) -> Result<(MdpState, f64, bool, SecrecyReport, usize)> {
        if candidates.is_empty() {
            return Err(Error::InvalidParameter("no candidate actions".into()));
        }
        let slot = self.slot + 1;
        for (user, kin) in self.kinematics.iter_mut().enumerate() {
            let mut rng = substream(
                self.seed,
                &[label::MOBILITY, self.episode, slot as u64, user as u64],
            );
            *kin = step_mobility(
                kin,
                self.cfg.slot_duration,
                self.cfg.heading_perturbation,
                self.cfg.v_max,
                &self.bounds,
                &mut rng,
            );
        }
        let channels = self.draw_channels(slot)?;
        let mut best: Option<(usize, SecrecyReport)> = None;
        for (idx, action) in candidates.iter().enumerate() {
            let (phases, powers) = decode_action(
                action,
                self.cfg.sim_layers,
                self.cfg.atoms_per_layer,
                self.cfg.num_users,
                self.cfg.p_max,
            )?;
            let report = self.score_realization(slot, &channels, &phases, &powers)?;
            let better = match &best {
                Some((_, cur)) => report.sum_secrecy > cur.sum_secrecy,
                None => true,
            };
            if better {
                best = Some((idx, report));
            }
        }
        let (chosen, report) = best.expect("at least one candidate");
        let next_state = self.assemble_state(&report);
        let reward = compute_reward(&self.last_report, &report, &self.cfg.reward);
        self.slot = slot;
        self.state = next_state.clone();
        self.last_report = report.clone();
        let done = self.slot >= self.cfg.slots_per_episode;
        Ok((next_state, reward, done, report, chosen))
    }
}
