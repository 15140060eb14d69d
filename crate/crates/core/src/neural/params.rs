//! Parameter traversal, initialization and gradient utilities.

use ndarray::{Array2, ArrayViewMutD};
use rand::Rng;
use rand_distr::StandardNormal;

/// Mutable view of one named parameter and its gradient buffer.
pub struct ParamMut<'a> {
    pub name: String,
    pub value: ArrayViewMutD<'a, f64>,
    pub grad: ArrayViewMutD<'a, f64>,
}

/// Anything holding named parameter/gradient pairs.
pub trait Parameterized {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(ParamMut<'_>));
}

/// Zeroes every gradient buffer.
pub fn zero_grads(model: &mut dyn Parameterized) {
    model.visit_params("", &mut |mut p| p.grad.fill(0.0));
}

/// Euclidean norm over all gradients.
pub fn global_grad_norm(model: &mut dyn Parameterized) -> f64 {
    let mut sq = 0.0;
    model.visit_params("", &mut |p| {
        sq += p.grad.iter().map(|g| g * g).sum::<f64>();
    });
    sq.sqrt()
}

/// Scales all gradients so their global norm does not exceed `max_norm`.
/// Returns the pre-clip norm.
pub fn clip_grad_norm(model: &mut dyn Parameterized, max_norm: f64) -> f64 {
    let norm = global_grad_norm(model);
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        model.visit_params("", &mut |mut p| p.grad.mapv_inplace(|g| g * scale));
    }
    norm
}

/// Names and flat lengths of every parameter, in visit order.
pub fn param_layout(model: &mut dyn Parameterized) -> Vec<(String, usize)> {
    let mut out = Vec::new();
    model.visit_params("", &mut |p| out.push((p.name.clone(), p.value.len())));
    out
}

/// Reads one flat entry of a named parameter.
pub fn param_entry(model: &mut dyn Parameterized, name: &str, idx: usize) -> f64 {
    let mut out = f64::NAN;
    model.visit_params("", &mut |p| {
        if p.name == name {
            out = *p.value.iter().nth(idx).expect("index in range");
        }
    });
    assert!(!out.is_nan(), "parameter {name} not found");
    out
}

/// Writes one flat entry of a named parameter.
pub fn set_param_entry(model: &mut dyn Parameterized, name: &str, idx: usize, val: f64) {
    let mut hit = false;
    model.visit_params("", &mut |mut p| {
        if p.name == name {
            *p.value.iter_mut().nth(idx).expect("index in range") = val;
            hit = true;
        }
    });
    assert!(hit, "parameter {name} not found");
}

/// Reads one flat entry of a named gradient.
pub fn grad_entry(model: &mut dyn Parameterized, name: &str, idx: usize) -> f64 {
    let mut out = f64::NAN;
    model.visit_params("", &mut |p| {
        if p.name == name {
            out = *p.grad.iter().nth(idx).expect("index in range");
        }
    });
    assert!(!out.is_nan(), "gradient {name} not found");
    out
}

/// Fan-in scaled uniform init: `U(−1/√in, 1/√in)`.
pub fn fan_in_uniform(rows: usize, cols: usize, rng: &mut impl Rng) -> Array2<f64> {
    let bound = 1.0 / (cols as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-bound..bound))
}

/// Orthogonal init via modified Gram-Schmidt on Gaussian draws. For
/// rectangular shapes the shorter side is orthonormalized.
pub fn orthogonal(rows: usize, cols: usize, rng: &mut impl Rng) -> Array2<f64> {
    let transpose = rows > cols;
    let (r, c) = if transpose {
        (cols, rows)
    } else {
        (rows, cols)
    };
    // r <= c: orthonormalize the r rows.
    let mut a = Array2::from_shape_fn((r, c), |_| rng.sample::<f64, _>(StandardNormal));
    for i in 0..r {
        for _pass in 0..2 {
            for j in 0..i {
                let dot: f64 = (0..c).map(|k| a[(i, k)] * a[(j, k)]).sum();
                for k in 0..c {
                    a[(i, k)] -= dot * a[(j, k)];
                }
            }
        }
        let norm: f64 = (0..c).map(|k| a[(i, k)] * a[(i, k)]).sum::<f64>().sqrt();
        let inv = 1.0 / norm.max(1e-12);
        for k in 0..c {
            a[(i, k)] *= inv;
        }
    }
    if transpose {
        a.t().to_owned()
    } else {
        a
    }
}
