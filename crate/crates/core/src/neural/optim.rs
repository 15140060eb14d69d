//! Decoupled-weight-decay adaptive moment optimizer, written out from its
//! update equations:
//!
//! ```text
//! m ← β₁ m + (1−β₁) g        v ← β₂ v + (1−β₂) g²
//! m̂ = m/(1−β₁ᵗ)              v̂ = v/(1−β₂ᵗ)
//! θ ← θ − lr · ( m̂/(√v̂ + ε) + wd·θ )
//! ```

use super::params::Parameterized;
use std::collections::HashMap;

pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    t: u64,
    state: HashMap<String, (Vec<f64>, Vec<f64>)>,
}

impl AdamW {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            t: 0,
            state: HashMap::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// Applies one update from the accumulated gradients.
    pub fn step(&mut self, model: &mut dyn Parameterized) {
        self.t += 1;
        let t = self.t as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (lr, b1, b2, eps) = (self.lr, self.beta1, self.beta2, self.eps);
        let decay = self.weight_decay;
        let state = &mut self.state;
        model.visit_params("", &mut |mut p| {
            // Decay applies to weight matrices only; biases and the policy
            // log-std are one-dimensional and stay undecayed.
            let wd = if p.value.ndim() >= 2 { decay } else { 0.0 };
            let len = p.value.len();
            let (m, v) = state
                .entry(p.name.clone())
                .or_insert_with(|| (vec![0.0; len], vec![0.0; len]));
            for ((theta, g), (mi, vi)) in p
                .value
                .iter_mut()
                .zip(p.grad.iter())
                .zip(m.iter_mut().zip(v.iter_mut()))
            {
                *mi = b1 * *mi + (1.0 - b1) * g;
                *vi = b2 * *vi + (1.0 - b2) * g * g;
                let mhat = *mi / bc1;
                let vhat = *vi / bc2;
                *theta -= lr * (mhat / (vhat.sqrt() + eps) + wd * *theta);
            }
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::params::{zero_grads, ParamMut, Parameterized};
    use ndarray::Array1;

    struct Toy {
        w: Array1<f64>,
        g: Array1<f64>,
    }

    impl Parameterized for Toy {
        fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(ParamMut<'_>)) {
            f(ParamMut {
                name: format!("{prefix}w"),
                value: self.w.view_mut().into_dyn(),
                grad: self.g.view_mut().into_dyn(),
            });
        }
    }

    struct ToyMatrix {
        w: ndarray::Array2<f64>,
        g: ndarray::Array2<f64>,
    }

    impl Parameterized for ToyMatrix {
        fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(ParamMut<'_>)) {
            f(ParamMut {
                name: format!("{prefix}w"),
                value: self.w.view_mut().into_dyn(),
                grad: self.g.view_mut().into_dyn(),
            });
        }
    }

    #[test]
    fn descends_a_quadratic() {
        let mut toy = Toy {
            w: ndarray::array![3.0, -2.0],
            g: Array1::zeros(2),
        };
        let mut opt = AdamW::new(0.05, 0.0);
        for _ in 0..2000 {
            zero_grads(&mut toy);
            let g = toy.w.mapv(|w| 2.0 * w);
            toy.g.assign(&g);
            opt.step(&mut toy);
        }
        assert!(toy.w.iter().all(|&w| w.abs() < 1e-3), "{:?}", toy.w);
    }

    #[test]
    fn zero_learning_rate_is_a_no_op() {
        let mut toy = Toy {
            w: ndarray::array![1.5, -0.5],
            g: ndarray::array![10.0, -3.0],
        };
        let before = toy.w.clone();
        let mut opt = AdamW::new(0.0, 0.01);
        for _ in 0..5 {
            opt.step(&mut toy);
        }
        assert_eq!(toy.w, before);
    }

    #[test]
    fn weight_decay_shrinks_matrices_but_not_vectors() {
        let mut toy = ToyMatrix {
            w: ndarray::array![[1.0]],
            g: ndarray::array![[0.0]],
        };
        let mut opt = AdamW::new(0.1, 0.5);
        opt.step(&mut toy);
        assert!((toy.w[(0, 0)] - (1.0 - 0.1 * 0.5)).abs() < 1e-12);
        // One-dimensional parameters (biases, log-std) stay undecayed.
        let mut vec_toy = Toy {
            w: ndarray::array![1.0],
            g: ndarray::array![0.0],
        };
        let mut opt = AdamW::new(0.1, 0.5);
        opt.step(&mut vec_toy);
        assert_eq!(vec_toy.w[0], 1.0);
    }
}
