//! Self-contained differentiable building blocks.
//!
//! Everything is plain `f64` on `ndarray` storage with hand-written
//! reverse-mode gradients: dense layers, an LSTM cell, a bidirectional LSTM
//! with a residual input projection, multi-head self-attention, a diagonal
//! Gaussian policy head and a value head. Forward passes take a batch as the
//! leading axis; each block returns the cache its backward pass needs.
//!
//! Parameters are exposed through [`Parameterized::visit_params`], which the
//! optimizer, gradient clipping, checkpointing and the finite-difference
//! test harness all share.

mod attention;
mod checkpoint;
mod dense;
mod encoder;
mod heads;
mod lstm;
mod optim;
mod params;

pub use attention::{Mhsa, MhsaCache};
pub use checkpoint::{
    load_checkpoint, save_checkpoint, Checkpoint, ParamRecord, CHECKPOINT_VERSION,
};
pub use dense::{Dense, Linear};
pub use encoder::{Encoder, EncoderCache, EncoderSettings};
pub use heads::{
    gaussian_log_density, gaussian_log_density_grads, sample_gaussian, PolicyCache, PolicyHead,
    ValueCache, ValueHead,
};
pub use lstm::{BiLstmCache, BiLstmLayer, LstmCell, LstmStepCache};
pub use optim::AdamW;
pub use params::{
    clip_grad_norm, fan_in_uniform, global_grad_norm, grad_entry, orthogonal, param_entry,
    param_layout, set_param_entry, zero_grads, ParamMut, Parameterized,
};

use ndarray::{Array1, Array2, Array3};

/// Shared actor-critic model: one feature encoder feeding a Gaussian policy
/// head and a value head.
pub struct ActorCritic {
    pub encoder: Encoder,
    pub policy: PolicyHead,
    pub value: ValueHead,
}

/// Forward artifacts of a batch pass through the full model.
pub struct AcForward {
    pub features: Array2<f64>,
    pub mean: Array2<f64>,
    pub values: Array1<f64>,
    enc_cache: EncoderCache,
    pol_cache: PolicyCache,
    val_cache: ValueCache,
}

impl ActorCritic {
    pub fn new(settings: &EncoderSettings, action_dim: usize, seed: u64) -> Self {
        let mut rng = crate::rng::substream(seed, &[crate::rng::label::PARAM_INIT]);
        let encoder = Encoder::new(settings, &mut rng);
        let policy = PolicyHead::new(settings.hidden_dim, action_dim, &mut rng);
        let value = ValueHead::new(settings.hidden_dim, &mut rng);
        Self {
            encoder,
            policy,
            value,
        }
    }

    /// Batched forward pass over stacked state windows `(batch, H, state)`.
    pub fn forward(&self, windows: &Array3<f64>) -> AcForward {
        let (features, enc_cache) = self.encoder.forward(windows);
        let (mean, pol_cache) = self.policy.forward(&features);
        let (values, val_cache) = self.value.forward(&features);
        AcForward {
            features,
            mean,
            values,
            enc_cache,
            pol_cache,
            val_cache,
        }
    }

    /// Accumulates gradients for upstream signals on the policy mean, the
    /// per-dimension log-std and the values. Encoder gradients receive the
    /// sum of both heads' contributions.
    pub fn backward(
        &mut self,
        windows: &Array3<f64>,
        fwd: &AcForward,
        gmean: &Array2<f64>,
        g_log_std: &Array1<f64>,
        gvalues: &Array1<f64>,
    ) {
        let gfeat_pol = self.policy.backward(&fwd.pol_cache, gmean, g_log_std);
        let gfeat_val = self.value.backward(&fwd.val_cache, gvalues);
        let gfeat = gfeat_pol + gfeat_val;
        self.encoder.backward(windows, &fwd.enc_cache, &gfeat);
    }
}

impl Parameterized for ActorCritic {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(ParamMut<'_>)) {
        self.encoder.visit_params(&format!("{prefix}encoder."), f);
        self.policy.visit_params(&format!("{prefix}policy."), f);
        self.value.visit_params(&format!("{prefix}value."), f);
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Stacks a time-major window list `(H × (batch × d))` into `(batch, H, d)`.
pub fn stack_windows(steps: &[Array2<f64>]) -> Array3<f64> {
    let h = steps.len();
    let (batch, d) = steps[0].dim();
    let mut out = Array3::zeros((batch, h, d));
    for (t, step) in steps.iter().enumerate() {
        out.index_axis_mut(ndarray::Axis(1), t).assign(step);
    }
    out
}
