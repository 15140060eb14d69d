//! Multi-head scaled dot-product self-attention over a short window.
//!
//! Per head: `softmax(Q Kᵀ / √d_h) V` over the window positions; head
//! outputs are concatenated, linearly projected and added back to the input
//! (residual). Projections carry no biases.

use super::params::{fan_in_uniform, ParamMut, Parameterized};
use crate::{Error, Result};
use ndarray::{Array2, Array3};
use rand::Rng;

pub struct Mhsa {
    pub heads: usize,
    pub dim: usize,
    pub wq: Array2<f64>,
    pub wk: Array2<f64>,
    pub wv: Array2<f64>,
    pub wo: Array2<f64>,
    pub gwq: Array2<f64>,
    pub gwk: Array2<f64>,
    pub gwv: Array2<f64>,
    pub gwo: Array2<f64>,
}

pub struct MhsaCache {
    x2: Array2<f64>, // (batch·H) × dim
    q2: Array2<f64>,
    k2: Array2<f64>,
    v2: Array2<f64>,
    /// Attention weights per (sample, head), each H × H.
    attn: Vec<Array2<f64>>,
    o2: Array2<f64>,
    batch: usize,
    window: usize,
}

impl Mhsa {
    pub fn new(dim: usize, heads: usize, rng: &mut impl Rng) -> Result<Self> {
        if heads == 0 || dim % heads != 0 {
            return Err(Error::InvalidParameter(format!(
                "feature dim {dim} not divisible by heads {heads}"
            )));
        }
        Ok(Self {
            heads,
            dim,
            wq: fan_in_uniform(dim, dim, rng),
            wk: fan_in_uniform(dim, dim, rng),
            wv: fan_in_uniform(dim, dim, rng),
            wo: fan_in_uniform(dim, dim, rng),
            gwq: Array2::zeros((dim, dim)),
            gwk: Array2::zeros((dim, dim)),
            gwv: Array2::zeros((dim, dim)),
            gwo: Array2::zeros((dim, dim)),
        })
    }

    fn flatten(x: &Array3<f64>) -> Array2<f64> {
        let (b, h, d) = x.dim();
        x.to_shape((b * h, d)).unwrap().to_owned()
    }

    fn unflatten(x: &Array2<f64>, batch: usize, window: usize) -> Array3<f64> {
        let d = x.ncols();
        x.to_shape((batch, window, d)).unwrap().to_owned()
    }

    /// `(batch, H, dim) → (batch, H, dim)` with residual add.
    pub fn forward(&self, x: &Array3<f64>) -> (Array3<f64>, MhsaCache) {
        let (batch, window, dim) = x.dim();
        debug_assert_eq!(dim, self.dim);
        let dh = dim / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let x2 = Self::flatten(x);
        let q2 = x2.dot(&self.wq.t());
        let k2 = x2.dot(&self.wk.t());
        let v2 = x2.dot(&self.wv.t());
        let mut attn = Vec::with_capacity(batch * self.heads);
        let mut o2 = Array2::zeros((batch * window, dim));
        for b in 0..batch {
            for head in 0..self.heads {
                let cols = head * dh..(head + 1) * dh;
                let rows = b * window..(b + 1) * window;
                let q = q2.slice(ndarray::s![rows.clone(), cols.clone()]);
                let k = k2.slice(ndarray::s![rows.clone(), cols.clone()]);
                let v = v2.slice(ndarray::s![rows.clone(), cols.clone()]);
                let mut scores = q.dot(&k.t());
                scores.mapv_inplace(|s| s * scale);
                // Row softmax with max subtraction.
                for mut row in scores.rows_mut() {
                    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    row.mapv_inplace(|s| (s - max).exp());
                    let sum = row.sum();
                    row.mapv_inplace(|s| s / sum);
                }
                let out = scores.dot(&v);
                o2.slice_mut(ndarray::s![rows, cols]).assign(&out);
                attn.push(scores);
            }
        }
        let y2 = o2.dot(&self.wo.t());
        let y = x + &Self::unflatten(&y2, batch, window);
        let cache = MhsaCache {
            x2,
            q2,
            k2,
            v2,
            attn,
            o2,
            batch,
            window,
        };
        (y, cache)
    }

    /// Accumulates projection gradients and returns the input gradient
    /// (including the residual path).
    pub fn backward(&mut self, cache: &MhsaCache, gy: &Array3<f64>) -> Array3<f64> {
        let (batch, window) = (cache.batch, cache.window);
        let dim = self.dim;
        let dh = dim / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let gy2 = Self::flatten(gy);
        self.gwo += &gy2.t().dot(&cache.o2);
        let go2 = gy2.dot(&self.wo);
        let mut gq2 = Array2::zeros((batch * window, dim));
        let mut gk2 = Array2::zeros((batch * window, dim));
        let mut gv2 = Array2::zeros((batch * window, dim));
        for b in 0..batch {
            for head in 0..self.heads {
                let cols = head * dh..(head + 1) * dh;
                let rows = b * window..(b + 1) * window;
                let a = &cache.attn[b * self.heads + head];
                let q = cache.q2.slice(ndarray::s![rows.clone(), cols.clone()]);
                let k = cache.k2.slice(ndarray::s![rows.clone(), cols.clone()]);
                let v = cache.v2.slice(ndarray::s![rows.clone(), cols.clone()]);
                let go = go2.slice(ndarray::s![rows.clone(), cols.clone()]);
                let ga = go.dot(&v.t());
                let gv = a.t().dot(&go);
                // Softmax backward per row: gS = A ∘ (gA − rowsum(gA ∘ A)).
                let mut gs = Array2::zeros((window, window));
                for r in 0..window {
                    let dot: f64 = (0..window).map(|c| ga[(r, c)] * a[(r, c)]).sum();
                    for c in 0..window {
                        gs[(r, c)] = a[(r, c)] * (ga[(r, c)] - dot);
                    }
                }
                gs.mapv_inplace(|s| s * scale);
                let gq = gs.dot(&k);
                let gk = gs.t().dot(&q);
                gq2.slice_mut(ndarray::s![rows.clone(), cols.clone()])
                    .assign(&gq);
                gk2.slice_mut(ndarray::s![rows.clone(), cols.clone()])
                    .assign(&gk);
                gv2.slice_mut(ndarray::s![rows, cols]).assign(&gv);
            }
        }
        self.gwq += &gq2.t().dot(&cache.x2);
        self.gwk += &gk2.t().dot(&cache.x2);
        self.gwv += &gv2.t().dot(&cache.x2);
        let gx2 = gq2.dot(&self.wq) + gk2.dot(&self.wk) + gv2.dot(&self.wv);
        gy + &Self::unflatten(&gx2, batch, window)
    }
}

impl Parameterized for Mhsa {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(ParamMut<'_>)) {
        let pairs: [(&str, &mut Array2<f64>, &mut Array2<f64>); 4] = [
            ("wq", &mut self.wq, &mut self.gwq),
            ("wk", &mut self.wk, &mut self.gwk),
            ("wv", &mut self.wv, &mut self.gwv),
            ("wo", &mut self.wo, &mut self.gwo),
        ];
        for (name, value, grad) in pairs {
            f(ParamMut {
                name: format!("{prefix}{name}"),
                value: value.view_mut().into_dyn(),
                grad: grad.view_mut().into_dyn(),
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    #[test]
    fn rejects_bad_head_split() {
        let mut rng = substream(1, &[3]);
        assert!(Mhsa::new(6, 4, &mut rng).is_err());
        assert!(Mhsa::new(8, 0, &mut rng).is_err());
        assert!(Mhsa::new(8, 4, &mut rng).is_ok());
    }

    #[test]
    fn singleton_window_is_projection_plus_residual() {
        let mut rng = substream(2, &[3]);
        let m = Mhsa::new(4, 2, &mut rng).unwrap();
        let x = Array3::from_shape_fn((1, 1, 4), |(_, _, d)| 0.3 * d as f64 - 0.2);
        let (y, cache) = m.forward(&x);
        // Softmax over one position is exactly 1.
        for a in &cache.attn {
            assert_eq!(a[(0, 0)], 1.0);
        }
        // Output = Wo · (Wv x) + x.
        let x2 = x.to_shape((1, 4)).unwrap().to_owned();
        let expect = x2.dot(&m.wv.t()).dot(&m.wo.t()) + &x2;
        for d in 0..4 {
            assert!((y[(0, 0, d)] - expect[(0, d)]).abs() < 1e-14);
        }
    }

    #[test]
    fn identical_positions_attend_uniformly() {
        let mut rng = substream(3, &[3]);
        let m = Mhsa::new(6, 3, &mut rng).unwrap();
        let row = [0.4, -0.1, 0.7, 0.2, -0.5, 0.9];
        let x = Array3::from_shape_fn((2, 5, 6), |(_, _, d)| row[d]);
        let (_, cache) = m.forward(&x);
        for a in &cache.attn {
            for w in a.iter() {
                assert!((w - 0.2).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn attention_rows_normalize() {
        let mut rng = substream(4, &[3]);
        let m = Mhsa::new(8, 4, &mut rng).unwrap();
        let x = Array3::from_shape_fn((3, 4, 8), |(b, t, d)| ((b + t * d) as f64 * 0.13).sin());
        let (y, cache) = m.forward(&x);
        assert_eq!(y.dim(), (3, 4, 8));
        for a in &cache.attn {
            for row in a.rows() {
                assert!((row.sum() - 1.0).abs() < 1e-12);
            }
        }
    }
}
