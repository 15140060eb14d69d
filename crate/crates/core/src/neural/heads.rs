//! Gaussian policy head and value head.
//!
//! The policy mean is `tanh` of a two-layer dense stack, so it lives in
//! `(−1,1)^dim`; the standard deviation is a state-independent per-dimension
//! `exp(log_std)` parameter. Samples are taken from the diagonal Gaussian
//! and their log-density is evaluated before any clipping the environment
//! applies.

use super::dense::Dense;
use super::params::{ParamMut, Parameterized};
use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use std::f64::consts::PI;

/// Initial policy standard deviation.
pub const INITIAL_STD: f64 = 0.5;

pub struct PolicyHead {
    pub hidden: Dense,
    pub out: Dense,
    pub log_std: Array1<f64>,
    pub g_log_std: Array1<f64>,
}

pub struct PolicyCache {
    feat: Array2<f64>,
    h1: Array2<f64>, // tanh activations of the hidden layer
    mean: Array2<f64>,
}

impl PolicyHead {
    pub fn new(feature_dim: usize, action_dim: usize, rng: &mut impl Rng) -> Self {
        let mut out = Dense::new(action_dim, feature_dim, rng);
        // Small output scale: the initial mean sits near the action-space
        // center and early updates stay local.
        out.w.mapv_inplace(|w| w * 0.01);
        Self {
            hidden: Dense::new(feature_dim, feature_dim, rng),
            out,
            log_std: Array1::from_elem(action_dim, INITIAL_STD.ln()),
            g_log_std: Array1::zeros(action_dim),
        }
    }

    pub fn action_dim(&self) -> usize {
        self.out.out_dim()
    }

    pub fn std(&self) -> Array1<f64> {
        self.log_std.mapv(f64::exp)
    }

    /// `(batch × feat) → (batch × act)` means in `(−1,1)`.
    pub fn forward(&self, feat: &Array2<f64>) -> (Array2<f64>, PolicyCache) {
        let h1 = self.hidden.forward(feat).mapv(f64::tanh);
        let mean = self.out.forward(&h1).mapv(f64::tanh);
        (
            mean.clone(),
            PolicyCache {
                feat: feat.clone(),
                h1,
                mean,
            },
        )
    }

    /// Backprop a gradient on the mean (and optionally on `log_std`);
    /// returns the feature gradient.
    pub fn backward(
        &mut self,
        cache: &PolicyCache,
        gmean: &Array2<f64>,
        g_log_std: &Array1<f64>,
    ) -> Array2<f64> {
        self.g_log_std += g_log_std;
        let gu = gmean * &cache.mean.mapv(|m| 1.0 - m * m);
        let gh1 = self.out.backward(&cache.h1, &gu);
        let g1 = gh1 * &cache.h1.mapv(|y| 1.0 - y * y);
        self.hidden.backward(&cache.feat, &g1)
    }
}

impl Parameterized for PolicyHead {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(ParamMut<'_>)) {
        self.hidden.visit_params(&format!("{prefix}hidden."), f);
        self.out.visit_params(&format!("{prefix}out."), f);
        f(ParamMut {
            name: format!("{prefix}log_std"),
            value: self.log_std.view_mut().into_dyn(),
            grad: self.g_log_std.view_mut().into_dyn(),
        });
    }
}

/// Draws one action from the diagonal Gaussian; no clipping here.
pub fn sample_gaussian(mean: &[f64], std: &[f64], rng: &mut impl Rng) -> Vec<f64> {
    mean.iter()
        .zip(std.iter())
        .map(|(&m, &s)| m + s * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// Diagonal Gaussian log-density of `action`.
pub fn gaussian_log_density(mean: &[f64], log_std: &[f64], action: &[f64]) -> f64 {
    let mut acc = 0.0;
    for ((&m, &ls), &a) in mean.iter().zip(log_std.iter()).zip(action.iter()) {
        let inv_std = (-ls).exp();
        let z = (a - m) * inv_std;
        acc += -0.5 * z * z - ls - 0.5 * (2.0 * PI).ln();
    }
    acc
}

/// Gradients of the log-density with respect to the mean entries and the
/// log-std entries: `(∂logπ/∂m_i, ∂logπ/∂log_std_i)`.
pub fn gaussian_log_density_grads(
    mean: &[f64],
    log_std: &[f64],
    action: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let mut gm = Vec::with_capacity(mean.len());
    let mut gls = Vec::with_capacity(mean.len());
    for ((&m, &ls), &a) in mean.iter().zip(log_std.iter()).zip(action.iter()) {
        let inv_var = (-2.0 * ls).exp();
        let diff = a - m;
        gm.push(diff * inv_var);
        gls.push(diff * diff * inv_var - 1.0);
    }
    (gm, gls)
}

pub struct ValueHead {
    pub hidden: Dense,
    pub out: Dense, // 1 × feature
}

pub struct ValueCache {
    feat: Array2<f64>,
    h1: Array2<f64>,
}

impl ValueHead {
    pub fn new(feature_dim: usize, rng: &mut impl Rng) -> Self {
        let mut out = Dense::new(1, feature_dim, rng);
        out.w.mapv_inplace(|w| w * 0.01);
        Self {
            hidden: Dense::new(feature_dim, feature_dim, rng),
            out,
        }
    }

    /// `(batch × feat) → batch` state values.
    pub fn forward(&self, feat: &Array2<f64>) -> (Array1<f64>, ValueCache) {
        let h1 = self.hidden.forward(feat).mapv(f64::tanh);
        let v = self.out.forward(&h1);
        (
            v.index_axis(Axis(1), 0).to_owned(),
            ValueCache {
                feat: feat.clone(),
                h1,
            },
        )
    }

    pub fn backward(&mut self, cache: &ValueCache, gv: &Array1<f64>) -> Array2<f64> {
        let gv2 = gv.view().insert_axis(Axis(1)).to_owned();
        let gh1 = self.out.backward(&cache.h1, &gv2);
        let g1 = gh1 * &cache.h1.mapv(|y| 1.0 - y * y);
        self.hidden.backward(&cache.feat, &g1)
    }
}

impl Parameterized for ValueHead {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(ParamMut<'_>)) {
        self.hidden.visit_params(&format!("{prefix}hidden."), f);
        self.out.visit_params(&format!("{prefix}out."), f);
    }
}
