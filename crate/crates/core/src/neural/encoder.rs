//! Shared feature encoder over a window of stacked states.
//!
//! Default path: a stack of bidirectional LSTM layers reads the window, an
//! optional multi-head self-attention mixes the per-step outputs, and the
//! feature is the last position plus a linear projection of the last raw
//! state (residual shortcut). The ablation path replaces all of it with a
//! two-layer dense network over the flattened window.

use super::attention::{Mhsa, MhsaCache};
use super::dense::{Dense, Linear};
use super::lstm::{BiLstmCache, BiLstmLayer};
use super::params::{ParamMut, Parameterized};
use super::stack_windows;
use ndarray::{Array2, Array3, Axis};
use rand::Rng;

/// Architecture knobs for the encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderSettings {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub window: usize,
    pub depth: usize,
    pub attention_heads: usize,
    pub use_recurrent: bool,
    pub use_attention: bool,
}

pub enum EncoderVariant {
    Recurrent {
        layers: Vec<BiLstmLayer>,
        attention: Option<Mhsa>,
        residual: Linear,
    },
    DenseFlat {
        l1: Dense,
        l2: Dense,
    },
}

pub struct Encoder {
    pub settings: EncoderSettings,
    pub variant: EncoderVariant,
}

pub enum EncoderCache {
    Recurrent {
        /// Input sequence of each layer, time-major.
        layer_inputs: Vec<Vec<Array2<f64>>>,
        layer_caches: Vec<BiLstmCache>,
        attn_input: Option<Array3<f64>>,
        attn_cache: Option<MhsaCache>,
    },
    DenseFlat {
        flat: Array2<f64>,
        h1_act: Array2<f64>,
        h2_act: Array2<f64>,
    },
}

impl Encoder {
    pub fn new(settings: &EncoderSettings, rng: &mut impl Rng) -> Self {
        let variant = if settings.use_recurrent {
            let mut layers = Vec::with_capacity(settings.depth);
            for d in 0..settings.depth {
                let input = if d == 0 {
                    settings.input_dim
                } else {
                    settings.hidden_dim
                };
                layers.push(BiLstmLayer::new(settings.hidden_dim, input, rng));
            }
            let attention = if settings.use_attention {
                Some(
                    Mhsa::new(settings.hidden_dim, settings.attention_heads, rng)
                        .expect("hidden dim must be divisible by attention heads"),
                )
            } else {
                None
            };
            EncoderVariant::Recurrent {
                layers,
                attention,
                residual: Linear::new(settings.hidden_dim, settings.input_dim, rng),
            }
        } else {
            EncoderVariant::DenseFlat {
                l1: Dense::new(
                    settings.hidden_dim,
                    settings.window * settings.input_dim,
                    rng,
                ),
                l2: Dense::new(settings.hidden_dim, settings.hidden_dim, rng),
            }
        };
        Self {
            settings: settings.clone(),
            variant,
        }
    }

    fn split_time_major(windows: &Array3<f64>) -> Vec<Array2<f64>> {
        let (_, h, _) = windows.dim();
        (0..h)
            .map(|t| windows.index_axis(Axis(1), t).to_owned())
            .collect()
    }

    /// `(batch, H, input) → (batch, hidden)`.
    pub fn forward(&self, windows: &Array3<f64>) -> (Array2<f64>, EncoderCache) {
        let (_, h, d) = windows.dim();
        debug_assert_eq!(h, self.settings.window);
        debug_assert_eq!(d, self.settings.input_dim);
        match &self.variant {
            EncoderVariant::Recurrent {
                layers,
                attention,
                residual,
            } => {
                let mut seq = Self::split_time_major(windows);
                let mut layer_inputs = Vec::with_capacity(layers.len());
                let mut layer_caches = Vec::with_capacity(layers.len());
                for layer in layers {
                    let (ys, cache) = layer.forward(&seq);
                    layer_inputs.push(seq);
                    layer_caches.push(cache);
                    seq = ys;
                }
                let (mut attn_input, mut attn_cache) = (None, None);
                let last = if let Some(mhsa) = attention {
                    let stacked = stack_windows(&seq);
                    let (z, cache) = mhsa.forward(&stacked);
                    let out = z.index_axis(Axis(1), h - 1).to_owned();
                    attn_input = Some(stacked);
                    attn_cache = Some(cache);
                    out
                } else {
                    seq[h - 1].clone()
                };
                let x_last = windows.index_axis(Axis(1), h - 1).to_owned();
                let features = last + residual.forward(&x_last);
                (
                    features,
                    EncoderCache::Recurrent {
                        layer_inputs,
                        layer_caches,
                        attn_input,
                        attn_cache,
                    },
                )
            }
            EncoderVariant::DenseFlat { l1, l2 } => {
                let (batch, h, d) = windows.dim();
                let flat = windows.to_shape((batch, h * d)).unwrap().to_owned();
                let h1_act = l1.forward(&flat).mapv(f64::tanh);
                let h2_act = l2.forward(&h1_act).mapv(f64::tanh);
                (
                    h2_act.clone(),
                    EncoderCache::DenseFlat {
                        flat,
                        h1_act,
                        h2_act,
                    },
                )
            }
        }
    }

    /// Accumulates parameter gradients for a feature gradient. The input
    /// gradient is dropped (windows are observations, not parameters).
    pub fn backward(&mut self, windows: &Array3<f64>, cache: &EncoderCache, gfeat: &Array2<f64>) {
        let h = self.settings.window;
        match (&mut self.variant, cache) {
            (
                EncoderVariant::Recurrent {
                    layers,
                    attention,
                    residual,
                },
                EncoderCache::Recurrent {
                    layer_inputs,
                    layer_caches,
                    attn_input,
                    attn_cache,
                },
            ) => {
                let x_last = windows.index_axis(Axis(1), h - 1).to_owned();
                residual.backward(&x_last, gfeat);
                let batch = gfeat.nrows();
                let hidden = self.settings.hidden_dim;
                // Gradient arriving at the top sequence.
                let mut gseq: Vec<Array2<f64>> = vec![Array2::zeros((batch, hidden)); h];
                if let (Some(mhsa), Some(ai), Some(ac)) =
                    (attention.as_mut(), attn_input.as_ref(), attn_cache.as_ref())
                {
                    let mut gz = Array3::zeros(ai.dim());
                    gz.index_axis_mut(Axis(1), h - 1).assign(gfeat);
                    let gx3 = mhsa.backward(ac, &gz);
                    for t in 0..h {
                        gseq[t] = gx3.index_axis(Axis(1), t).to_owned();
                    }
                } else {
                    gseq[h - 1] = gfeat.clone();
                }
                for (layer, (inputs, lcache)) in layers
                    .iter_mut()
                    .zip(layer_inputs.iter().zip(layer_caches.iter()))
                    .rev()
                {
                    let _ = inputs;
                    gseq = layer.backward(lcache, &gseq);
                }
            }
            (
                EncoderVariant::DenseFlat { l1, l2 },
                EncoderCache::DenseFlat {
                    flat,
                    h1_act,
                    h2_act,
                },
            ) => {
                let g2 = gfeat * &h2_act.mapv(|y| 1.0 - y * y);
                let gh1 = l2.backward(h1_act, &g2);
                let g1 = gh1 * &h1_act.mapv(|y| 1.0 - y * y);
                l1.backward(flat, &g1);
            }
            _ => unreachable!("cache variant mismatch"),
        }
    }
}

impl Parameterized for Encoder {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(ParamMut<'_>)) {
        match &mut self.variant {
            EncoderVariant::Recurrent {
                layers,
                attention,
                residual,
            } => {
                for (i, layer) in layers.iter_mut().enumerate() {
                    layer.visit_params(&format!("{prefix}bilstm{i}."), f);
                }
                if let Some(mhsa) = attention {
                    mhsa.visit_params(&format!("{prefix}mhsa."), f);
                }
                residual.visit_params(&format!("{prefix}residual."), f);
            }
            EncoderVariant::DenseFlat { l1, l2 } => {
                l1.visit_params(&format!("{prefix}flat1."), f);
                l2.visit_params(&format!("{prefix}flat2."), f);
            }
        }
    }
}
