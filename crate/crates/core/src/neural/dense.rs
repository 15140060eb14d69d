//! Dense (affine) and bias-free linear layers with manual backprop.

use super::params::{fan_in_uniform, ParamMut, Parameterized};
use ndarray::{Array1, Array2, Axis};
use rand::Rng;

/// Affine layer `y = x Wᵀ + b` over rows of a batch.
pub struct Dense {
    pub w: Array2<f64>, // out × in
    pub b: Array1<f64>,
    pub gw: Array2<f64>,
    pub gb: Array1<f64>,
}

impl Dense {
    pub fn new(out_dim: usize, in_dim: usize, rng: &mut impl Rng) -> Self {
        Self {
            w: fan_in_uniform(out_dim, in_dim, rng),
            b: Array1::zeros(out_dim),
            gw: Array2::zeros((out_dim, in_dim)),
            gb: Array1::zeros(out_dim),
        }
    }

    pub fn out_dim(&self) -> usize {
        self.w.nrows()
    }

    pub fn in_dim(&self) -> usize {
        self.w.ncols()
    }

    /// `(batch × in) → (batch × out)`.
    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        debug_assert_eq!(x.ncols(), self.in_dim());
        x.dot(&self.w.t()) + &self.b
    }

    /// Accumulates weight/bias gradients and returns the input gradient.
    pub fn backward(&mut self, x: &Array2<f64>, gy: &Array2<f64>) -> Array2<f64> {
        debug_assert_eq!(gy.ncols(), self.out_dim());
        self.gw += &gy.t().dot(x);
        self.gb += &gy.sum_axis(Axis(0));
        gy.dot(&self.w)
    }
}

impl Parameterized for Dense {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(ParamMut<'_>)) {
        f(ParamMut {
            name: format!("{prefix}w"),
            value: self.w.view_mut().into_dyn(),
            grad: self.gw.view_mut().into_dyn(),
        });
        f(ParamMut {
            name: format!("{prefix}b"),
            value: self.b.view_mut().into_dyn(),
            grad: self.gb.view_mut().into_dyn(),
        });
    }
}

/// Bias-free linear map `y = x Wᵀ`.
pub struct Linear {
    pub w: Array2<f64>, // out × in
    pub gw: Array2<f64>,
}

impl Linear {
    pub fn new(out_dim: usize, in_dim: usize, rng: &mut impl Rng) -> Self {
        Self {
            w: fan_in_uniform(out_dim, in_dim, rng),
            gw: Array2::zeros((out_dim, in_dim)),
        }
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.w.t())
    }

    pub fn backward(&mut self, x: &Array2<f64>, gy: &Array2<f64>) -> Array2<f64> {
        self.gw += &gy.t().dot(x);
        gy.dot(&self.w)
    }
}

impl Parameterized for Linear {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(ParamMut<'_>)) {
        f(ParamMut {
            name: format!("{prefix}w"),
            value: self.w.view_mut().into_dyn(),
            grad: self.gw.view_mut().into_dyn(),
        });
    }
}
