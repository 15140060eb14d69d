//! Training engine.
//!
//! Per episode: roll the policy out for the full slot horizon, post-process
//! the trajectory (policy-weighted critic targets, generalized advantages
//! from the current critic), push every transition into the prioritized
//! replay buffer, then — once past warm-up — run one update round on a batch
//! mixing the freshest trajectory with `⌈α·b⌉` replayed records. The replay
//! share `α` adapts to the measured divergence between the historical
//! behavior policy and the current one; update epochs stop early when the
//! per-round divergence from the round-start policy passes the target.

use super::advantage::{discounted_returns, gae_advantages, pbe_return};
use super::buffer::ReplayBuffer;
use super::loss::{actor_critic_loss_backward, adapt_alpha, kl_estimate};
use super::{AblationFlags, TrainerSettings, Transition};
use crate::env::{EnvConfig, SimEnv};
use crate::metrics::SecrecyReport;
use crate::neural::{
    clip_grad_norm, gaussian_log_density, sample_gaussian, save_checkpoint, zero_grads,
    ActorCritic, EncoderSettings,
};
use crate::rng::{derive_key, label, substream};
use crate::{Error, Result};
use ndarray::{Array1, Array2, Array3, Axis};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

/// Fixed elementwise squashing of raw observations before they reach the
/// network: positions map to the unit square, SINRs pass through a log, the
/// rate-like entries are scaled down. The environment state itself stays raw.
#[derive(Debug, Clone)]
pub struct StateScaler {
    num_users: usize,
    area_size: f64,
}

impl StateScaler {
    pub fn new(num_users: usize, area_size: f64) -> Self {
        Self {
            num_users,
            area_size,
        }
    }

    pub fn scale(&self, flat: &[f64]) -> Vec<f64> {
        let k = self.num_users;
        debug_assert_eq!(flat.len(), 4 * k + 1);
        let mut out = Vec::with_capacity(flat.len());
        for &p in &flat[..2 * k] {
            out.push(p / self.area_size);
        }
        for &r in &flat[2 * k..3 * k] {
            out.push(r / 10.0);
        }
        for &g in &flat[3 * k..4 * k] {
            out.push((1.0 + g.max(0.0)).log2() / 10.0);
        }
        out.push(flat[4 * k] / 10.0);
        out
    }
}

/// Per-episode log record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub episode: usize,
    pub mean_reward: f64,
    pub mean_asr: f64,
    pub per_user_asr: Vec<f64>,
    pub kl: f64,
    pub alpha_kl: f64,
    pub actor_loss: f64,
    pub critic_loss: f64,
    pub wall_time_s: f64,
}

/// Greedy evaluation summary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalSummary {
    pub episodes: usize,
    pub mean_asr: f64,
    pub std_asr: f64,
    pub mean_reward: f64,
    pub per_user_asr: Vec<f64>,
}

pub struct TrainOutcome {
    pub metrics: Vec<EpisodeMetrics>,
    pub eval: EvalSummary,
}

struct Rollout {
    windows: Vec<Array2<f64>>,
    final_window: Array2<f64>,
    actions: Vec<Vec<f64>>,
    rewards: Vec<f64>,
    dones: Vec<bool>,
    logps: Vec<f64>,
    reports: Vec<SecrecyReport>,
}

fn init_log_std(model: &mut ActorCritic, settings: &TrainerSettings, num_users: usize) {
    model.policy.log_std.fill(settings.std_init.ln());
    if settings.std_init_power > 0.0 {
        let dim = model.policy.log_std.len();
        for j in dim - num_users..dim {
            model.policy.log_std[j] = settings.std_init_power.ln();
        }
    }
}

/// Admission bound for replayed records: reject candidates whose stored
/// behavior log-density differs from the round-start policy's by more.
const MAX_BEHAVIOR_LOG_GAP: f64 = 1.0;

pub struct Trainer {
    settings: TrainerSettings,
    ablation: AblationFlags,
    enc_settings: EncoderSettings,
    env: SimEnv,
    model: ActorCritic,
    optim: crate::neural::AdamW,
    buffer: ReplayBuffer,
    scaler: StateScaler,
    alpha_kl: f64,
    snapshot: u64,
    policy_rng: ChaCha8Rng,
    update_rng: ChaCha8Rng,
    seed: u64,
    fresh_pool: Vec<Transition>,
}

impl Trainer {
    pub fn new(
        env_cfg: EnvConfig,
        settings: TrainerSettings,
        ablation: AblationFlags,
        seed: u64,
    ) -> Result<Self> {
        let scaler = StateScaler::new(env_cfg.num_users, env_cfg.area_size);
        let enc = EncoderSettings {
            input_dim: env_cfg.state_dim(),
            hidden_dim: settings.hidden_dim,
            window: settings.history_window,
            depth: settings.bilstm_depth,
            attention_heads: settings.attention_heads,
            use_recurrent: !ablation.disable_bilstm,
            use_attention: !ablation.disable_bilstm && !ablation.disable_mhsa,
        };
        if enc.use_attention && settings.hidden_dim % settings.attention_heads != 0 {
            return Err(Error::InvalidParameter(format!(
                "hidden dim {} not divisible by {} attention heads",
                settings.hidden_dim, settings.attention_heads
            )));
        }
        let action_dim = env_cfg.action_dim();
        let mut model = ActorCritic::new(&enc, action_dim, seed);
        init_log_std(&mut model, &settings, env_cfg.num_users);
        let enc_settings = enc.clone();
        let env = SimEnv::new(env_cfg, seed)?;
        let optim = crate::neural::AdamW::new(settings.learning_rate, settings.weight_decay);
        let buffer = ReplayBuffer::new(settings.buffer_capacity);
        let alpha_kl = settings.alpha_init.clamp(settings.alpha_min, 1.0);
        Ok(Self {
            env,
            model,
            optim,
            buffer,
            scaler,
            alpha_kl,
            snapshot: 0,
            policy_rng: substream(seed, &[label::POLICY_SAMPLE]),
            update_rng: substream(seed, &[label::BUFFER_SAMPLE]),
            seed,
            settings,
            ablation,
            enc_settings,
            fresh_pool: Vec::new(),
        })
    }

    pub fn model(&self) -> &ActorCritic {
        &self.model
    }

    pub fn model_mut(&mut self) -> &mut ActorCritic {
        &mut self.model
    }

    pub fn scaler(&self) -> &StateScaler {
        &self.scaler
    }

    pub fn settings(&self) -> &TrainerSettings {
        &self.settings
    }

    pub fn alpha_kl(&self) -> f64 {
        self.alpha_kl
    }

    fn window_to_batch(window: &Array2<f64>) -> Array3<f64> {
        let (h, d) = window.dim();
        window.to_shape((1, h, d)).unwrap().to_owned()
    }

    fn deque_to_window(deque: &VecDeque<Vec<f64>>) -> Array2<f64> {
        let h = deque.len();
        let d = deque[0].len();
        let mut out = Array2::zeros((h, d));
        for (t, row) in deque.iter().enumerate() {
            out.row_mut(t).assign(&Array1::from_vec(row.clone()));
        }
        out
    }

    fn collect_episode(&mut self, greedy: bool) -> Result<Rollout> {
        let horizon = self.env.config().slots_per_episode;
        let h = self.settings.history_window;
        let state = self.env.reset()?;
        let mut deque: VecDeque<Vec<f64>> = VecDeque::with_capacity(h);
        let scaled = self.scaler.scale(&state.flatten());
        for _ in 0..h {
            deque.push_back(scaled.clone());
        }
        let mut rollout = Rollout {
            windows: Vec::with_capacity(horizon),
            final_window: Array2::zeros((0, 0)),
            actions: Vec::with_capacity(horizon),
            rewards: Vec::with_capacity(horizon),
            dones: Vec::with_capacity(horizon),
            logps: Vec::with_capacity(horizon),
            reports: Vec::with_capacity(horizon),
        };
        let log_std: Vec<f64> = self.model.policy.log_std.iter().cloned().collect();
        let std: Vec<f64> = log_std.iter().map(|l| l.exp()).collect();
        loop {
            let window = Self::deque_to_window(&deque);
            let fwd = self.model.forward(&Self::window_to_batch(&window));
            let mean: Vec<f64> = fwd.mean.row(0).iter().cloned().collect();
            let action = if greedy {
                mean.clone()
            } else {
                sample_gaussian(&mean, &std, &mut self.policy_rng)
            };
            let logp = gaussian_log_density(&mean, &log_std, &action);
            let (next_state, reward, done, report) = self.env.step(&action)?;
            deque.pop_front();
            deque.push_back(self.scaler.scale(&next_state.flatten()));
            rollout.windows.push(window);
            rollout.actions.push(action);
            rollout.rewards.push(reward);
            rollout.dones.push(done);
            rollout.logps.push(logp);
            rollout.reports.push(report);
            if done {
                rollout.final_window = Self::deque_to_window(&deque);
                break;
            }
        }
        Ok(rollout)
    }

    /// Batched state values for the trajectory windows plus the final window.
    fn trajectory_values(&self, rollout: &Rollout) -> Array1<f64> {
        let t_len = rollout.windows.len();
        let (h, d) = rollout.windows[0].dim();
        let mut batch = Array3::zeros((t_len + 1, h, d));
        for (i, w) in rollout.windows.iter().enumerate() {
            batch.index_axis_mut(Axis(1), 0); // no-op; keep shape checker quiet
            batch.slice_mut(ndarray::s![i, .., ..]).assign(w);
        }
        batch
            .slice_mut(ndarray::s![t_len, .., ..])
            .assign(&rollout.final_window);
        self.model.forward(&batch).values
    }

    /// Post-processes a finished episode into transitions with advantages
    /// and critic targets, and pushes them into the buffer.
    fn absorb_rollout(&mut self, rollout: &Rollout) -> Result<()> {
        let values = self.trajectory_values(rollout);
        let values_vec: Vec<f64> = values.iter().cloned().collect();
        let targets = if self.ablation.disable_pf {
            discounted_returns(&rollout.rewards, &rollout.dones, self.settings.discount)
        } else {
            // Per-dimension geometric-mean likelihood: a joint density of a
            // d-dimensional action scales like c^d and would collapse (or
            // explode) the weight product for any realistic d, so the step
            // weight uses exp(logπ/d), which tracks policy sharpness at
            // every action dimensionality.
            let dim = self.model.policy.action_dim() as f64;
            let densities: Vec<f64> = rollout.logps.iter().map(|l| (l / dim).exp()).collect();
            pbe_return(
                &rollout.rewards,
                &densities,
                self.settings.clipped_discount,
                self.settings.prob_weighting,
            )?
        };
        let (advantages, _) = gae_advantages(
            &rollout.rewards,
            &rollout.dones,
            &values_vec,
            self.settings.discount,
            self.settings.gae_lambda,
        )?;
        for t in 0..rollout.windows.len() {
            let next_window = if t + 1 < rollout.windows.len() {
                rollout.windows[t + 1].clone()
            } else {
                rollout.final_window.clone()
            };
            let transition = Transition {
                window: rollout.windows[t].clone(),
                next_window,
                action: rollout.actions[t].clone(),
                reward: rollout.rewards[t],
                done: rollout.dones[t],
                logp_behavior: rollout.logps[t],
                snapshot_id: self.snapshot,
                advantage: advantages[t],
                value_target: targets[t],
            };
            self.buffer.insert(transition.clone());
            self.fresh_pool.push(transition);
        }
        // The on-policy pool spans at most the configured round length.
        let max_pool =
            self.settings.episodes_per_round.max(1) * self.env.config().slots_per_episode;
        if self.fresh_pool.len() > max_pool {
            let excess = self.fresh_pool.len() - max_pool;
            self.fresh_pool.drain(..excess);
        }
        Ok(())
    }

    /// One update round over a mixed fresh/replay batch. Returns
    /// `(kl_mix, actor_loss, critic_loss, epochs_run)`. A critic-only round
    /// zeroes the surrogate term so only value (and shared encoder)
    /// parameters move; warm-up uses this to pre-fit the baseline before any
    /// policy update.
    fn update_round(&mut self, critic_only: bool) -> Result<(f64, f64, f64, usize)> {
        let s = &self.settings;
        let fresh_len = self.fresh_pool.len();
        let batch_size = s.batch_size;
        // `⌈α·b⌉` replayed records; the rest comes from the fresh trajectory.
        // When the trajectory is shorter than the on-policy share the batch
        // shrinks rather than padding with additional stale data.
        let (fresh_take, offline_take) = if self.ablation.disable_opdu {
            (fresh_len.min(batch_size), 0)
        } else {
            let off_target = ((self.alpha_kl * batch_size as f64).ceil() as usize).min(batch_size);
            let fresh = (batch_size - off_target).min(fresh_len);
            (fresh, off_target)
        };
        // Fresh subset: all of the trajectory when it fits, otherwise a
        // uniform draw without replacement.
        let mut fresh_idx: Vec<usize> = (0..fresh_len).collect();
        if fresh_take < fresh_len {
            use rand::Rng;
            for i in 0..fresh_take {
                let j = self.update_rng.random_range(i..fresh_len);
                fresh_idx.swap(i, j);
            }
        }
        fresh_idx.truncate(fresh_take);
        let mut batch: Vec<Transition> = fresh_idx
            .iter()
            .map(|&i| self.fresh_pool[i].clone())
            .collect();
        let n_fresh = batch.len();
        if offline_take > 0 {
            let sampled = self.buffer.sample(offline_take, &mut self.update_rng)?;
            batch.extend(sampled.into_iter().cloned());
        }
        let b = batch.len();
        if b == 0 {
            return Ok((0.0, 0.0, 0.0, 0));
        }
        let (h, d) = (batch[0].window.nrows(), batch[0].window.ncols());
        let mut windows = Array3::zeros((b, h, d));
        for (i, tr) in batch.iter().enumerate() {
            windows.slice_mut(ndarray::s![i, .., ..]).assign(&tr.window);
        }
        // Round-start densities define the clip centers for the candidate
        // batch (fresh trajectory plus replayed records).
        let log_std_vec: Vec<f64> = self.model.policy.log_std.iter().cloned().collect();
        let fwd0 = self.model.forward(&windows);
        let logp_old_all: Vec<f64> = (0..b)
            .map(|i| {
                let mean_row: Vec<f64> = fwd0.mean.row(i).iter().cloned().collect();
                gaussian_log_density(&mean_row, &log_std_vec, &batch[i].action)
            })
            .collect();
        let logp_mu_all: Vec<f64> = batch.iter().map(|t| t.logp_behavior).collect();
        let kl_mix = if offline_take > 0 {
            kl_estimate(&logp_mu_all[n_fresh..], &logp_old_all[n_fresh..])
        } else {
            0.0
        };
        if !self.ablation.disable_opdu && offline_take > 0 && !critic_only {
            self.alpha_kl = adapt_alpha(self.alpha_kl, kl_mix, s.kl_threshold, s.alpha_min);
        }
        // Importance-weight truncation: a replayed record whose behavior
        // density is nats away from the current policy carries an unbounded
        // surrogate contribution through the shifted clip window, so stale
        // candidates are dropped (the divergence estimate above still sees
        // them, which is what steers the mixing fraction down).
        let mut keep: Vec<usize> = (0..n_fresh).collect();
        for i in n_fresh..b {
            if (logp_old_all[i] - logp_mu_all[i]).abs() <= MAX_BEHAVIOR_LOG_GAP {
                keep.push(i);
            }
        }
        let batch: Vec<Transition> = keep.iter().map(|&i| batch[i].clone()).collect();
        let logp_old: Vec<f64> = keep.iter().map(|&i| logp_old_all[i]).collect();
        let logp_mu: Vec<f64> = keep.iter().map(|&i| logp_mu_all[i]).collect();
        let b = batch.len();
        if b == 0 {
            self.snapshot += 1;
            return Ok((kl_mix, 0.0, 0.0, 0));
        }
        let mut windows = Array3::zeros((b, h, d));
        for (i, tr) in batch.iter().enumerate() {
            windows.slice_mut(ndarray::s![i, .., ..]).assign(&tr.window);
        }
        let targets: Vec<f64> = batch.iter().map(|t| t.value_target).collect();
        // Normalize advantages over the admitted batch; a critic-only round
        // zeroes them so no policy gradient flows.
        let mut adv: Vec<f64> = batch.iter().map(|t| t.advantage).collect();
        if critic_only {
            adv.iter_mut().for_each(|a| *a = 0.0);
        } else {
            let mean = adv.iter().sum::<f64>() / b as f64;
            let var = adv.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / b as f64;
            let inv_std = 1.0 / var.sqrt().max(1e-8);
            for a in adv.iter_mut() {
                *a = (*a - mean) * inv_std;
            }
        }
        let mut actor_loss_out = 0.0;
        let mut critic_loss_out = 0.0;
        let mut epochs_run = 0;
        let actions: Vec<Vec<f64>> = batch.iter().map(|t| t.action.clone()).collect();
        let minibatch = if s.minibatch_size == 0 {
            b
        } else {
            s.minibatch_size.min(b)
        };
        let mut order: Vec<usize> = (0..b).collect();
        for epoch in 0..s.update_epochs {
            // Divergence from the round-start snapshot, over the full batch.
            if epoch > 0 {
                let fwd = self.model.forward(&windows);
                let log_std_cur: Vec<f64> = self.model.policy.log_std.iter().cloned().collect();
                let logp_new: Vec<f64> = (0..b)
                    .map(|i| {
                        let mean_row: Vec<f64> = fwd.mean.row(i).iter().cloned().collect();
                        gaussian_log_density(&mean_row, &log_std_cur, &batch[i].action)
                    })
                    .collect();
                if kl_estimate(&logp_old, &logp_new) > s.target_kl {
                    break;
                }
            }
            use rand::seq::SliceRandom;
            order.shuffle(&mut self.update_rng);
            for chunk in order.chunks(minibatch) {
                let mb = chunk.len();
                let mut mb_windows = Array3::zeros((mb, h, d));
                for (row, &i) in chunk.iter().enumerate() {
                    mb_windows
                        .slice_mut(ndarray::s![row, .., ..])
                        .assign(&batch[i].window);
                }
                let mb_actions: Vec<Vec<f64>> = chunk.iter().map(|&i| actions[i].clone()).collect();
                let mb_adv: Vec<f64> = chunk.iter().map(|&i| adv[i]).collect();
                let mb_mu: Vec<f64> = chunk.iter().map(|&i| logp_mu[i]).collect();
                let mb_old: Vec<f64> = chunk.iter().map(|&i| logp_old[i]).collect();
                let mb_targets: Vec<f64> = chunk.iter().map(|&i| targets[i]).collect();
                zero_grads(&mut self.model);
                let (total, actor_loss, critic_loss, _) = actor_critic_loss_backward(
                    &mut self.model,
                    &mb_windows,
                    &mb_actions,
                    &mb_adv,
                    &mb_mu,
                    &mb_old,
                    &mb_targets,
                    s.clip_epsilon,
                    s.beta_b,
                );
                if !total.is_finite() {
                    return Err(Error::Divergence(format!(
                        "non-finite loss at snapshot {} epoch {epoch}: actor {actor_loss}, critic {critic_loss}",
                        self.snapshot
                    )));
                }
                clip_grad_norm(&mut self.model, s.grad_clip);
                self.optim.step(&mut self.model);
                actor_loss_out = actor_loss;
                critic_loss_out = critic_loss;
            }
            epochs_run = epoch + 1;
        }
        self.snapshot += 1;
        Ok((kl_mix, actor_loss_out, critic_loss_out, epochs_run))
    }

    /// Full training loop: warm-up collection followed by evolution rounds.
    /// Writes a JSON-lines metric log and periodic checkpoints when an
    /// output directory is given.
    pub fn run(&mut self, out_dir: Option<&Path>) -> Result<Vec<EpisodeMetrics>> {
        let restarts = self.settings.restarts.max(1);
        let per_restart = (self.settings.training_episodes / restarts).max(1);
        let total = restarts * (self.settings.warmup_episodes + per_restart);
        let mut best_val = f64::NEG_INFINITY;
        let mut best_ckpt: Option<crate::neural::Checkpoint> = None;
        let mut metrics_file = match out_dir {
            Some(dir) => {
                std::fs::create_dir_all(dir)?;
                Some(std::fs::File::create(dir.join("metrics.jsonl"))?)
            }
            None => None,
        };
        let restart_len = self.settings.warmup_episodes + per_restart;
        let mut all = Vec::with_capacity(total);
        for episode in 0..total {
            let local_episode = episode % restart_len;
            if restarts > 1 && local_episode == 0 && episode > 0 {
                let restart_idx = (episode / restart_len) as u64;
                let mut model = ActorCritic::new(
                    &self.enc_settings,
                    self.model.policy.action_dim(),
                    derive_key(self.seed, &[label::PARAM_INIT, restart_idx]),
                );
                init_log_std(&mut model, &self.settings, self.env.config().num_users);
                self.model = model;
                self.optim = crate::neural::AdamW::new(
                    self.settings.learning_rate,
                    self.settings.weight_decay,
                );
                self.buffer = ReplayBuffer::new(self.settings.buffer_capacity);
                self.fresh_pool.clear();
                self.alpha_kl = self.settings.alpha_init.clamp(self.settings.alpha_min, 1.0);
                self.snapshot += 1;
            }
            let start = Instant::now();
            let rollout = self.collect_episode(false)?;
            self.absorb_rollout(&rollout)?;
            let (mut kl, mut actor_loss, mut critic_loss) = (0.0, 0.0, 0.0);
            let round_boundary = (local_episode + 1) % self.settings.episodes_per_round.max(1) == 0;
            if round_boundary && self.buffer.len() >= self.settings.batch_size {
                let critic_only = local_episode < self.settings.warmup_episodes;
                let (k, a, c, _epochs) = self.update_round(critic_only)?;
                kl = k;
                actor_loss = a;
                critic_loss = c;
                self.fresh_pool.clear();
            }
            let t_len = rollout.reports.len() as f64;
            let mean_asr = rollout.reports.iter().map(|r| r.mean_secrecy).sum::<f64>() / t_len;
            let k_users = self.env.config().num_users;
            let per_user_asr: Vec<f64> = (0..k_users)
                .map(|u| {
                    rollout
                        .reports
                        .iter()
                        .map(|r| r.secrecy_rates[u])
                        .sum::<f64>()
                        / t_len
                })
                .collect();
            let record = EpisodeMetrics {
                episode,
                mean_reward: rollout.rewards.iter().sum::<f64>() / t_len,
                mean_asr,
                per_user_asr,
                kl,
                alpha_kl: self.alpha_kl,
                actor_loss,
                critic_loss,
                wall_time_s: start.elapsed().as_secs_f64(),
            };
            if let Some(f) = metrics_file.as_mut() {
                let line = serde_json::to_string(&record)
                    .map_err(|e| Error::Config(format!("metrics serialization: {e}")))?;
                writeln!(f, "{line}")?;
            }
            if let Some(dir) = out_dir {
                let done_count = episode + 1;
                if self.settings.checkpoint_interval > 0
                    && done_count % self.settings.checkpoint_interval == 0
                {
                    let path = dir.join(format!("checkpoint_ep{done_count:05}.json"));
                    save_checkpoint(&mut self.model, &path)?;
                }
            }
            all.push(record);
            // Best-checkpoint selection on a validation stream disjoint from
            // both training and final-evaluation streams.
            let vi = self.settings.validation_interval;
            if vi > 0
                && local_episode >= self.settings.warmup_episodes
                && (local_episode + 1) % vi == 0
            {
                let val = evaluate_greedy(
                    &self.model,
                    &self.scaler,
                    self.env.config(),
                    &self.settings,
                    derive_key(self.seed, &[label::VALIDATION]),
                    self.settings.validation_episodes,
                )?;
                if val.mean_asr > best_val {
                    best_val = val.mean_asr;
                    best_ckpt = Some(crate::neural::Checkpoint::capture(&mut self.model));
                }
            }
        }
        if let Some(ckpt) = best_ckpt {
            ckpt.restore(&mut self.model)?;
        }
        if let Some(dir) = out_dir {
            save_checkpoint(&mut self.model, &dir.join("checkpoint.json"))?;
        }
        Ok(all)
    }

    /// Greedy evaluation of the current policy on a fresh environment.
    pub fn evaluate(&self, episodes: usize) -> Result<EvalSummary> {
        evaluate_greedy(
            &self.model,
            &self.scaler,
            self.env.config(),
            &self.settings,
            self.seed,
            episodes,
        )
    }
}

/// Runs `episodes` greedy (mean-action) episodes and reports the achieved
/// secrecy statistics. The evaluation environment derives its streams from
/// the evaluation label, so every policy evaluated under the same master
/// seed sees identical channels and motion. Per-slot trace records land in
/// `traces` when a sink is supplied.
pub fn evaluate_greedy_traced(
    model: &ActorCritic,
    scaler: &StateScaler,
    env_cfg: &EnvConfig,
    settings: &TrainerSettings,
    seed: u64,
    episodes: usize,
    mut traces: Option<&mut Vec<crate::env::TraceRecord>>,
) -> Result<EvalSummary> {
    let mut env = SimEnv::new(env_cfg.clone(), derive_key(seed, &[label::EVALUATION]))?;
    let h = settings.history_window;
    let k_users = env_cfg.num_users;
    let mut asrs = Vec::with_capacity(episodes);
    let mut rewards_all = Vec::with_capacity(episodes);
    let mut per_user = vec![0.0; k_users];
    for _ in 0..episodes {
        let state = env.reset()?;
        let mut deque: VecDeque<Vec<f64>> = VecDeque::with_capacity(h);
        let scaled = scaler.scale(&state.flatten());
        for _ in 0..h {
            deque.push_back(scaled.clone());
        }
        let mut ep_asr = 0.0;
        let mut ep_reward = 0.0;
        let mut slots = 0.0;
        loop {
            let window = Trainer::deque_to_window(&deque);
            let fwd = model.forward(&Trainer::window_to_batch(&window));
            let action: Vec<f64> = fwd.mean.row(0).iter().cloned().collect();
            let (next_state, reward, done, report) = env.step(&action)?;
            deque.pop_front();
            deque.push_back(scaler.scale(&next_state.flatten()));
            ep_asr += report.mean_secrecy;
            ep_reward += reward;
            for u in 0..k_users {
                per_user[u] += report.secrecy_rates[u];
            }
            if let Some(sink) = traces.as_deref_mut() {
                let powers = crate::env::decode_action(
                    &action,
                    env_cfg.sim_layers,
                    env_cfg.atoms_per_layer,
                    env_cfg.num_users,
                    env_cfg.p_max,
                )?
                .1;
                sink.push(crate::env::TraceRecord {
                    slot: env.slot(),
                    positions: next_state.mu_positions.clone(),
                    powers,
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
        rewards_all.push(ep_reward / slots);
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
        mean_reward: rewards_all.iter().sum::<f64>() / n,
        per_user_asr: per_user.iter().map(|s| s / slots_total).collect(),
    })
}

/// [`evaluate_greedy_traced`] without trace collection.
pub fn evaluate_greedy(
    model: &ActorCritic,
    scaler: &StateScaler,
    env_cfg: &EnvConfig,
    settings: &TrainerSettings,
    seed: u64,
    episodes: usize,
) -> Result<EvalSummary> {
    evaluate_greedy_traced(model, scaler, env_cfg, settings, seed, episodes, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::PathLossModel;
    use crate::env::{ChannelMode, RewardConfig};
    use crate::ppo::AblationFlags;

    pub(crate) fn tiny_env() -> EnvConfig {
        EnvConfig {
            num_users: 2,
            sim_layers: 2,
            atoms_per_layer: 4,
            wavelength: 0.0857,
            area_size: 100.0,
            bs_position: [0.0, 0.0, 20.0],
            eve_position: [20.0, 20.0, 0.0],
            v_max: 2.0,
            heading_perturbation: std::f64::consts::PI / 6.0,
            slot_duration: 1.0,
            path_loss: PathLossModel::new(0.01, 2.0).unwrap(),
            rician_sim: 10.0,
            rician_eve: 10.0,
            kappa: 0.1,
            noise_power: 1e-14,
            p_max: 1.0,
            slots_per_episode: 8,
            channel_mode: ChannelMode::Stacked,
            reward: RewardConfig::default(),
        }
    }

    pub(crate) fn tiny_settings() -> TrainerSettings {
        TrainerSettings {
            batch_size: 16,
            update_epochs: 2,
            hidden_dim: 16,
            bilstm_depth: 1,
            attention_heads: 2,
            history_window: 3,
            warmup_episodes: 1,
            training_episodes: 3,
            eval_episodes: 2,
            checkpoint_interval: 0,
            ..TrainerSettings::default()
        }
    }

    #[test]
    fn scaler_shapes_and_monotone_sinr() {
        let s = StateScaler::new(2, 100.0);
        let flat = vec![50.0, 25.0, 10.0, 90.0, 1.0, 2.0, 100.0, 10.0, 1.5];
        let out = s.scale(&flat);
        assert_eq!(out.len(), 9);
        assert!((out[0] - 0.5).abs() < 1e-15);
        assert!(out[6] > out[7]); // log keeps order
    }

    #[test]
    fn zero_learning_rate_leaves_parameters_bit_equal() {
        let mut settings = tiny_settings();
        settings.learning_rate = 0.0;
        settings.weight_decay = 0.0;
        let mut trainer = Trainer::new(tiny_env(), settings, AblationFlags::default(), 3).unwrap();
        let before = crate::neural::Checkpoint::capture(&mut trainer.model);
        trainer.run(None).unwrap();
        let after = crate::neural::Checkpoint::capture(&mut trainer.model);
        for (a, b) in before.params.iter().zip(after.params.iter()) {
            assert_eq!(a.name, b.name);
            for (x, y) in a.data.iter().zip(b.data.iter()) {
                assert!(x == y, "{} changed", a.name);
            }
        }
    }

    #[test]
    fn fixed_seed_reproduces_metric_log() {
        let run = |seed: u64| {
            let mut t =
                Trainer::new(tiny_env(), tiny_settings(), AblationFlags::default(), seed).unwrap();
            t.run(None).unwrap()
        };
        let a = run(11);
        let b = run(11);
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b.iter()) {
            assert_eq!(x.mean_reward, y.mean_reward);
            assert_eq!(x.mean_asr, y.mean_asr);
            assert_eq!(x.kl, y.kl);
            assert_eq!(x.actor_loss, y.actor_loss);
            assert_eq!(x.critic_loss, y.critic_loss);
        }
        let c = run(12);
        assert!(a
            .iter()
            .zip(c.iter())
            .any(|(x, y)| x.mean_asr != y.mean_asr));
    }

    #[test]
    fn ratio_identity_before_any_update() {
        // Recomputing the stored action's density under the unchanged policy
        // reproduces the stored behavior log-density.
        let mut trainer =
            Trainer::new(tiny_env(), tiny_settings(), AblationFlags::default(), 5).unwrap();
        let rollout = trainer.collect_episode(false).unwrap();
        let log_std: Vec<f64> = trainer.model.policy.log_std.iter().cloned().collect();
        for t in 0..rollout.windows.len() {
            let fwd = trainer
                .model
                .forward(&Trainer::window_to_batch(&rollout.windows[t]));
            let mean: Vec<f64> = fwd.mean.row(0).iter().cloned().collect();
            let logp = gaussian_log_density(&mean, &log_std, &rollout.actions[t]);
            assert!((logp - rollout.logps[t]).abs() < 1e-10);
        }
    }

    #[test]
    fn alpha_stays_in_bounds_through_training() {
        let mut settings = tiny_settings();
        settings.training_episodes = 6;
        let mut trainer =
            Trainer::new(tiny_env(), settings.clone(), AblationFlags::default(), 9).unwrap();
        trainer.run(None).unwrap();
        assert!(trainer.alpha_kl() >= settings.alpha_min && trainer.alpha_kl() <= 1.0);
    }

    #[test]
    fn evaluation_is_deterministic_for_same_seed() {
        let trainer =
            Trainer::new(tiny_env(), tiny_settings(), AblationFlags::default(), 21).unwrap();
        let a = trainer.evaluate(2).unwrap();
        let b = trainer.evaluate(2).unwrap();
        assert_eq!(a.mean_asr, b.mean_asr);
        assert_eq!(a.per_user_asr, b.per_user_asr);
    }

    #[test]
    fn run_writes_metric_log_and_periodic_checkpoints() {
        let dir = tempfile::tempdir().unwrap();
        let mut settings = tiny_settings();
        settings.warmup_episodes = 0;
        settings.training_episodes = 4;
        settings.checkpoint_interval = 2;
        let mut trainer = Trainer::new(tiny_env(), settings, AblationFlags::default(), 2).unwrap();
        let metrics = trainer.run(Some(dir.path())).unwrap();
        assert_eq!(metrics.len(), 4);
        let log = std::fs::read_to_string(dir.path().join("metrics.jsonl")).unwrap();
        assert_eq!(log.lines().count(), 4);
        for line in log.lines() {
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            assert!(v.get("mean_asr").is_some() && v.get("alpha_kl").is_some());
        }
        assert!(dir.path().join("checkpoint_ep00002.json").exists());
        assert!(dir.path().join("checkpoint_ep00004.json").exists());
        assert!(dir.path().join("checkpoint.json").exists());
    }
}
