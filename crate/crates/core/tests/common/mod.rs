//! Shared test plumbing: central finite-difference gradient verification.

use rand::Rng;
use simsec::neural::{grad_entry, param_entry, param_layout, set_param_entry, Parameterized};

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOL: f64 = 1e-4;

/// Checks sampled parameter entries of `model` against central differences
/// of `loss_fn`. `loss_fn` must zero grads, run forward+backward and return
/// the loss. Returns the number of entries checked.
pub fn fd_check<M: Parameterized>(
    model: &mut M,
    loss_fn: &mut dyn FnMut(&mut M) -> f64,
    max_per_param: usize,
    rng: &mut impl Rng,
    context: &str,
) -> usize {
    let _ = loss_fn(model);
    let layout = param_layout(model);
    let mut checked = 0;
    for (name, len) in layout {
        let picks = max_per_param.min(len);
        for pick in 0..picks {
            let idx = if picks == len {
                pick
            } else {
                rng.random_range(0..len)
            };
            let saved = param_entry(model, &name, idx);
            let analytic = {
                let _ = loss_fn(model);
                grad_entry(model, &name, idx)
            };
            set_param_entry(model, &name, idx, saved + FD_STEP);
            let plus = loss_fn(model);
            set_param_entry(model, &name, idx, saved - FD_STEP);
            let minus = loss_fn(model);
            set_param_entry(model, &name, idx, saved);
            let fd = (plus - minus) / (2.0 * FD_STEP);
            let denom = analytic.abs().max(fd.abs()).max(1e-6);
            let rel = (analytic - fd).abs() / denom;
            assert!(
                rel < FD_TOL,
                "{context}: {name}[{idx}] analytic {analytic:.9e} vs fd {fd:.9e} (rel {rel:.2e})"
            );
            checked += 1;
        }
    }
    checked
}
