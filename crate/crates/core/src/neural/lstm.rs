//! LSTM cell and bidirectional layer with backprop through time.
//!
//! Gate equations on the concatenated `[h_prev, x]` input:
//!
//! ```text
//! f = σ(W_f·[h,x] + b_f)     i = σ(W_i·[h,x] + b_i)
//! ĉ = tanh(W_C·[h,x] + b_C)  c' = f∘c + i∘ĉ
//! o = σ(W_o·[h,x] + b_o)     h' = o∘tanh(c')
//! ```
//!
//! The bidirectional layer runs one cell forward over the window and an
//! independent cell backward, summing the two hidden sequences per step.

use super::params::{fan_in_uniform, orthogonal, ParamMut, Parameterized};
use super::sigmoid;
use ndarray::{concatenate, s, Array1, Array2, Axis};
use rand::Rng;

pub struct LstmCell {
    pub hidden: usize,
    pub input: usize,
    pub w_f: Array2<f64>,
    pub w_i: Array2<f64>,
    pub w_c: Array2<f64>,
    pub w_o: Array2<f64>,
    pub b_f: Array1<f64>,
    pub b_i: Array1<f64>,
    pub b_c: Array1<f64>,
    pub b_o: Array1<f64>,
    pub gw_f: Array2<f64>,
    pub gw_i: Array2<f64>,
    pub gw_c: Array2<f64>,
    pub gw_o: Array2<f64>,
    pub gb_f: Array1<f64>,
    pub gb_i: Array1<f64>,
    pub gb_c: Array1<f64>,
    pub gb_o: Array1<f64>,
}

/// Intermediates of one cell step, consumed by the backward pass.
pub struct LstmStepCache {
    pub z: Array2<f64>, // batch × (hidden+input), [h_prev, x]
    pub f: Array2<f64>,
    pub i: Array2<f64>,
    pub chat: Array2<f64>,
    pub o: Array2<f64>,
    pub c: Array2<f64>,
    pub tanh_c: Array2<f64>,
    pub c_prev: Array2<f64>,
}

impl LstmCell {
    pub fn new(hidden: usize, input: usize, rng: &mut impl Rng) -> Self {
        // Orthogonal recurrent blocks, fan-in uniform input blocks.
        fn gate<R: Rng>(hidden: usize, input: usize, rng: &mut R) -> Array2<f64> {
            let rec = orthogonal(hidden, hidden, rng);
            let inp = fan_in_uniform(hidden, input, rng);
            concatenate(Axis(1), &[rec.view(), inp.view()]).unwrap()
        }
        Self {
            hidden,
            input,
            w_f: gate(hidden, input, rng),
            w_i: gate(hidden, input, rng),
            w_c: gate(hidden, input, rng),
            w_o: gate(hidden, input, rng),
            b_f: Array1::zeros(hidden),
            b_i: Array1::zeros(hidden),
            b_c: Array1::zeros(hidden),
            b_o: Array1::zeros(hidden),
            gw_f: Array2::zeros((hidden, hidden + input)),
            gw_i: Array2::zeros((hidden, hidden + input)),
            gw_c: Array2::zeros((hidden, hidden + input)),
            gw_o: Array2::zeros((hidden, hidden + input)),
            gb_f: Array1::zeros(hidden),
            gb_i: Array1::zeros(hidden),
            gb_c: Array1::zeros(hidden),
            gb_o: Array1::zeros(hidden),
        }
    }

    /// One step over a batch: returns `(h, c, cache)`.
    pub fn forward(
        &self,
        x: &Array2<f64>,
        h_prev: &Array2<f64>,
        c_prev: &Array2<f64>,
    ) -> (Array2<f64>, Array2<f64>, LstmStepCache) {
        debug_assert_eq!(x.ncols(), self.input);
        debug_assert_eq!(h_prev.ncols(), self.hidden);
        let z = concatenate(Axis(1), &[h_prev.view(), x.view()]).unwrap();
        let f = (z.dot(&self.w_f.t()) + &self.b_f).mapv(sigmoid);
        let i = (z.dot(&self.w_i.t()) + &self.b_i).mapv(sigmoid);
        let chat = (z.dot(&self.w_c.t()) + &self.b_c).mapv(f64::tanh);
        let o = (z.dot(&self.w_o.t()) + &self.b_o).mapv(sigmoid);
        let c = &f * c_prev + &i * &chat;
        let tanh_c = c.mapv(f64::tanh);
        let h = &o * &tanh_c;
        let cache = LstmStepCache {
            z,
            f,
            i,
            chat,
            o,
            c: c.clone(),
            tanh_c,
            c_prev: c_prev.clone(),
        };
        (h, c, cache)
    }

    /// Backprop of one step: takes gradients on `h` and `c`, accumulates
    /// parameter gradients and returns `(gx, gh_prev, gc_prev)`.
    pub fn backward(
        &mut self,
        cache: &LstmStepCache,
        gh: &Array2<f64>,
        gc: &Array2<f64>,
    ) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
        let d_o = gh * &cache.tanh_c;
        let d_c = gc + &(gh * &cache.o * cache.tanh_c.mapv(|t| 1.0 - t * t));
        let d_f = &d_c * &cache.c_prev;
        let gc_prev = &d_c * &cache.f;
        let d_i = &d_c * &cache.chat;
        let d_chat = &d_c * &cache.i;
        let dz_f = d_f * cache.f.mapv(|v| v * (1.0 - v));
        let dz_i = d_i * cache.i.mapv(|v| v * (1.0 - v));
        let dz_c = d_chat * cache.chat.mapv(|v| 1.0 - v * v);
        let dz_o = d_o * cache.o.mapv(|v| v * (1.0 - v));
        self.gw_f += &dz_f.t().dot(&cache.z);
        self.gw_i += &dz_i.t().dot(&cache.z);
        self.gw_c += &dz_c.t().dot(&cache.z);
        self.gw_o += &dz_o.t().dot(&cache.z);
        self.gb_f += &dz_f.sum_axis(Axis(0));
        self.gb_i += &dz_i.sum_axis(Axis(0));
        self.gb_c += &dz_c.sum_axis(Axis(0));
        self.gb_o += &dz_o.sum_axis(Axis(0));
        let gz =
            dz_f.dot(&self.w_f) + dz_i.dot(&self.w_i) + dz_c.dot(&self.w_c) + dz_o.dot(&self.w_o);
        let gh_prev = gz.slice(s![.., ..self.hidden]).to_owned();
        let gx = gz.slice(s![.., self.hidden..]).to_owned();
        (gx, gh_prev, gc_prev)
    }
}

impl Parameterized for LstmCell {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(ParamMut<'_>)) {
        let pairs: [(&str, &mut Array2<f64>, &mut Array2<f64>); 4] = [
            ("w_f", &mut self.w_f, &mut self.gw_f),
            ("w_i", &mut self.w_i, &mut self.gw_i),
            ("w_c", &mut self.w_c, &mut self.gw_c),
            ("w_o", &mut self.w_o, &mut self.gw_o),
        ];
        for (name, value, grad) in pairs {
            f(ParamMut {
                name: format!("{prefix}{name}"),
                value: value.view_mut().into_dyn(),
                grad: grad.view_mut().into_dyn(),
            });
        }
        let biases: [(&str, &mut Array1<f64>, &mut Array1<f64>); 4] = [
            ("b_f", &mut self.b_f, &mut self.gb_f),
            ("b_i", &mut self.b_i, &mut self.gb_i),
            ("b_c", &mut self.b_c, &mut self.gb_c),
            ("b_o", &mut self.b_o, &mut self.gb_o),
        ];
        for (name, value, grad) in biases {
            f(ParamMut {
                name: format!("{prefix}{name}"),
                value: value.view_mut().into_dyn(),
                grad: grad.view_mut().into_dyn(),
            });
        }
    }
}

/// Bidirectional layer: independent forward and backward cells, per-step
/// outputs summed.
pub struct BiLstmLayer {
    pub fwd: LstmCell,
    pub bwd: LstmCell,
}

pub struct BiLstmCache {
    fwd_steps: Vec<LstmStepCache>,
    /// Indexed by time t (the backward cell processes t = H−1 … 0).
    bwd_steps: Vec<LstmStepCache>,
}

impl BiLstmLayer {
    pub fn new(hidden: usize, input: usize, rng: &mut impl Rng) -> Self {
        Self {
            fwd: LstmCell::new(hidden, input, rng),
            bwd: LstmCell::new(hidden, input, rng),
        }
    }

    pub fn hidden(&self) -> usize {
        self.fwd.hidden
    }

    /// Time-major window in, summed hidden sequence out.
    pub fn forward(&self, xs: &[Array2<f64>]) -> (Vec<Array2<f64>>, BiLstmCache) {
        let horizon = xs.len();
        let batch = xs[0].nrows();
        let hidden = self.fwd.hidden;
        let mut fwd_steps = Vec::with_capacity(horizon);
        let mut h = Array2::zeros((batch, hidden));
        let mut c = Array2::zeros((batch, hidden));
        let mut fwd_h = Vec::with_capacity(horizon);
        for x in xs {
            let (hn, cn, cache) = self.fwd.forward(x, &h, &c);
            fwd_steps.push(cache);
            fwd_h.push(hn.clone());
            h = hn;
            c = cn;
        }
        let mut bwd_steps: Vec<Option<LstmStepCache>> = (0..horizon).map(|_| None).collect();
        let mut bwd_h: Vec<Option<Array2<f64>>> = (0..horizon).map(|_| None).collect();
        let mut h = Array2::zeros((batch, hidden));
        let mut c = Array2::zeros((batch, hidden));
        for t in (0..horizon).rev() {
            let (hn, cn, cache) = self.bwd.forward(&xs[t], &h, &c);
            bwd_steps[t] = Some(cache);
            bwd_h[t] = Some(hn.clone());
            h = hn;
            c = cn;
        }
        let ys = (0..horizon)
            .map(|t| &fwd_h[t] + bwd_h[t].as_ref().unwrap())
            .collect();
        let cache = BiLstmCache {
            fwd_steps,
            bwd_steps: bwd_steps.into_iter().map(Option::unwrap).collect(),
        };
        (ys, cache)
    }

    /// BPTT through both directions; returns per-step input gradients.
    pub fn backward(&mut self, cache: &BiLstmCache, gys: &[Array2<f64>]) -> Vec<Array2<f64>> {
        let horizon = gys.len();
        let batch = gys[0].nrows();
        let hidden = self.fwd.hidden;
        let input = self.fwd.input;
        let mut gxs = vec![Array2::zeros((batch, input)); horizon];
        // Forward cell: reverse time order.
        let mut gh_carry = Array2::zeros((batch, hidden));
        let mut gc_carry = Array2::zeros((batch, hidden));
        for t in (0..horizon).rev() {
            let gh = gys[t].clone() + gh_carry;
            let (gx, gh_prev, gc_prev) = self.fwd.backward(&cache.fwd_steps[t], &gh, &gc_carry);
            gxs[t] += &gx;
            gh_carry = gh_prev;
            gc_carry = gc_prev;
        }
        // Backward cell processed t = H−1 … 0, so BPTT walks t = 0 … H−1.
        let mut gh_carry = Array2::zeros((batch, hidden));
        let mut gc_carry = Array2::zeros((batch, hidden));
        for t in 0..horizon {
            let gh = gys[t].clone() + gh_carry;
            let (gx, gh_prev, gc_prev) = self.bwd.backward(&cache.bwd_steps[t], &gh, &gc_carry);
            gxs[t] += &gx;
            gh_carry = gh_prev;
            gc_carry = gc_prev;
        }
        gxs
    }
}

impl Parameterized for BiLstmLayer {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(ParamMut<'_>)) {
        self.fwd.visit_params(&format!("{prefix}fwd."), f);
        self.bwd.visit_params(&format!("{prefix}bwd."), f);
    }
}
