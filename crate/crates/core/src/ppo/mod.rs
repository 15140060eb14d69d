//! Clipped-surrogate policy optimization with three additions: off-policy
//! reuse of replay data through behavior-adjusted clipping bounds and a
//! KL-adaptive mixing fraction, policy-weighted critic return targets, and a
//! recurrent attention encoder over state windows (built in [`crate::neural`]).

mod advantage;
mod buffer;
mod loss;
mod trainer;

pub use self::advantage::{discounted_returns, gae_advantages, pbe_q_backup, pbe_return};
pub use self::buffer::ReplayBuffer;
pub use self::loss::{
    actor_critic_loss_backward, adapt_alpha, clipped_policy_loss, kl_estimate, opdu_loss,
    opdu_loss_and_grad,
};
pub use self::trainer::{
    evaluate_greedy, evaluate_greedy_traced, EpisodeMetrics, EvalSummary, StateScaler,
    TrainOutcome, Trainer,
};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

/// One stored step: the state window the policy saw, the raw (pre-clip)
/// action it drew, the slot outcome, and the densities needed for
/// importance-ratio corrections later. `advantage` and `value_target` are
/// filled when the collection episode is post-processed.
#[derive(Debug, Clone)]
pub struct Transition {
    pub window: Array2<f64>,
    pub next_window: Array2<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub logp_behavior: f64,
    pub snapshot_id: u64,
    pub advantage: f64,
    pub value_target: f64,
}

/// Mechanism switches for ablation studies. Disabling the recurrent encoder
/// swaps in a dense network over the flattened window; disabling off-policy
/// reuse makes every update batch purely on-policy; disabling policy
/// feedback replaces the weighted critic targets with plain discounted
/// returns; disabling attention removes the self-attention stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblationFlags {
    pub disable_bilstm: bool,
    pub disable_opdu: bool,
    pub disable_pf: bool,
    pub disable_mhsa: bool,
}

/// All trainer hyperparameters. Defaults follow the experiment table:
/// clipping 0.3, discount 0.98, target KL 0.02, KL threshold 0.5, clipped
/// discount and probability weighting 0.7, batch 128, buffer 10⁶, warm-up 50
/// plus 500 evolution episodes of 40 slots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainerSettings {
    pub clip_epsilon: f64,
    pub discount: f64,
    pub gae_lambda: f64,
    pub target_kl: f64,
    pub kl_threshold: f64,
    pub alpha_min: f64,
    pub alpha_init: f64,
    pub clipped_discount: f64,
    pub prob_weighting: f64,
    pub batch_size: usize,
    pub update_epochs: usize,
    /// Episodes collected between consecutive update rounds; every round's
    /// on-policy share spans this many fresh trajectories.
    pub episodes_per_round: usize,
    /// Optimizer step granularity inside an update epoch; 0 runs the whole
    /// batch as one step.
    pub minibatch_size: usize,
    /// Greedy validation cadence in episodes for best-checkpoint selection;
    /// 0 keeps the final parameters.
    pub validation_interval: usize,
    /// Episodes per validation probe.
    pub validation_episodes: usize,
    /// Independent training restarts sharing the episode budget; the
    /// validation stream picks the best checkpoint across all of them.
    pub restarts: usize,
    pub beta_b: f64,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub grad_clip: f64,
    pub buffer_capacity: usize,
    pub hidden_dim: usize,
    pub bilstm_depth: usize,
    pub attention_heads: usize,
    pub history_window: usize,
    pub warmup_episodes: usize,
    pub training_episodes: usize,
    pub slots_per_episode: usize,
    pub eval_episodes: usize,
    pub checkpoint_interval: usize,
    pub std_init: f64,
    /// Initial exploration std of the power coordinates; zero reuses
    /// `std_init`.
    pub std_init_power: f64,
    pub seed: u64,
}

impl Default for TrainerSettings {
    fn default() -> Self {
        Self {
            clip_epsilon: 0.3,
            discount: 0.98,
            gae_lambda: 0.95,
            target_kl: 0.02,
            kl_threshold: 0.5,
            alpha_min: 0.05,
            alpha_init: 0.5,
            clipped_discount: 0.7,
            prob_weighting: 0.7,
            batch_size: 128,
            update_epochs: 10,
            episodes_per_round: 1,
            minibatch_size: 0,
            validation_interval: 0,
            validation_episodes: 8,
            restarts: 1,
            beta_b: 0.5,
            learning_rate: 0.001,
            weight_decay: 0.01,
            grad_clip: 0.5,
            buffer_capacity: 1_000_000,
            hidden_dim: 128,
            bilstm_depth: 3,
            attention_heads: 4,
            history_window: 8,
            warmup_episodes: 50,
            training_episodes: 500,
            slots_per_episode: 40,
            eval_episodes: 20,
            checkpoint_interval: 100,
            std_init: 0.5,
            std_init_power: 0.0,
            seed: 0,
        }
    }
}
