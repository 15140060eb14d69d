//! Surrogate losses, the KL estimator and the offline-mix adaptation rule.
//!
//! The off-policy surrogate generalizes the clipped objective to data drawn
//! under a behavior policy `μ`: the ratio is `r_π = π/μ` and the clip window
//! is re-centered at `π_old/μ`, i.e. `[(π_old/μ)(1−ε), (π_old/μ)(1+ε)]`.
//! When `μ = π_old` this is exactly the on-policy clipped loss.

/// Off-policy clipped surrogate and its per-sample gradient with respect to
/// `log π(a|s)`. All densities enter as log-densities. Returns
/// `(loss, dloss/dlogp_new)`; the loss is negated for minimization.
pub fn opdu_loss_and_grad(
    advantages: &[f64],
    logp_new: &[f64],
    logp_mu: &[f64],
    logp_old: &[f64],
    epsilon: f64,
) -> (f64, Vec<f64>) {
    let n = advantages.len();
    assert!(n > 0, "empty batch");
    assert!(logp_new.len() == n && logp_mu.len() == n && logp_old.len() == n);
    let mut loss = 0.0;
    let mut grads = vec![0.0; n];
    for i in 0..n {
        let ratio = (logp_new[i] - logp_mu[i]).exp();
        let center = (logp_old[i] - logp_mu[i]).exp();
        let lo = center * (1.0 - epsilon);
        let hi = center * (1.0 + epsilon);
        let surr1 = ratio * advantages[i];
        let surr2 = ratio.clamp(lo, hi) * advantages[i];
        if surr1 <= surr2 {
            loss -= surr1;
            // d(ρ)/d(logπ) = ρ
            grads[i] = -ratio * advantages[i] / n as f64;
        } else {
            // The clipped branch is active only when ρ is outside the
            // window, where its gradient vanishes.
            loss -= surr2;
        }
    }
    (loss / n as f64, grads)
}

/// Off-policy clipped surrogate loss value.
pub fn opdu_loss(
    advantages: &[f64],
    logp_new: &[f64],
    logp_mu: &[f64],
    logp_old: &[f64],
    epsilon: f64,
) -> f64 {
    opdu_loss_and_grad(advantages, logp_new, logp_mu, logp_old, epsilon).0
}

/// Standard clipped surrogate: behavior and old policy coincide.
pub fn clipped_policy_loss(
    advantages: &[f64],
    logp_new: &[f64],
    logp_old: &[f64],
    epsilon: f64,
) -> f64 {
    opdu_loss(advantages, logp_new, logp_old, logp_old, epsilon)
}

/// Empirical `KL(μ ‖ π)`: mean of `log μ − log π` over actions drawn from μ.
pub fn kl_estimate(logp_mu: &[f64], logp_pi: &[f64]) -> f64 {
    assert_eq!(logp_mu.len(), logp_pi.len());
    if logp_mu.is_empty() {
        return 0.0;
    }
    logp_mu
        .iter()
        .zip(logp_pi.iter())
        .map(|(m, p)| m - p)
        .sum::<f64>()
        / logp_mu.len() as f64
}

/// Offline-fraction adaptation: shrink proportionally when the divergence
/// exceeds the threshold, otherwise grow by 5% up to 1.
pub fn adapt_alpha(alpha: f64, d_kl: f64, delta_kl: f64, alpha_min: f64) -> f64 {
    if d_kl > delta_kl {
        (alpha * delta_kl / d_kl).max(alpha_min)
    } else {
        (alpha * 1.05).min(1.0)
    }
}

use crate::neural::{gaussian_log_density, gaussian_log_density_grads, ActorCritic};
use ndarray::{Array1, Array2, Array3};

/// One full objective evaluation with gradient accumulation: forward the
/// model over the batch windows, form the off-policy clipped surrogate plus
/// `β_b`-weighted critic error, and backpropagate both heads. Gradients are
/// accumulated into the model (call `zero_grads` first). Shared by the
/// trainer's update epochs and the gradient-check suite.
///
/// Returns `(total_loss, actor_loss, critic_loss, approx_kl)` where
/// `approx_kl` estimates `KL(π_old ‖ π)` over the batch.
#[allow(clippy::too_many_arguments)]
pub fn actor_critic_loss_backward(
    model: &mut ActorCritic,
    windows: &Array3<f64>,
    actions: &[Vec<f64>],
    advantages: &[f64],
    logp_mu: &[f64],
    logp_old: &[f64],
    targets: &[f64],
    epsilon: f64,
    beta_b: f64,
) -> (f64, f64, f64, f64) {
    let b = actions.len();
    let fwd = model.forward(windows);
    let action_dim = model.policy.action_dim();
    let log_std: Vec<f64> = model.policy.log_std.iter().cloned().collect();
    let mean_rows: Vec<Vec<f64>> = (0..b)
        .map(|i| fwd.mean.row(i).iter().cloned().collect())
        .collect();
    let logp_new: Vec<f64> = (0..b)
        .map(|i| gaussian_log_density(&mean_rows[i], &log_std, &actions[i]))
        .collect();
    let approx_kl = kl_estimate(logp_old, &logp_new);
    let (actor_loss, dlogp) = opdu_loss_and_grad(advantages, &logp_new, logp_mu, logp_old, epsilon);
    let diffs: Vec<f64> = (0..b).map(|i| fwd.values[i] - targets[i]).collect();
    let critic_loss = diffs.iter().map(|e| e * e).sum::<f64>() / b as f64;
    let mut gmean = Array2::zeros((b, action_dim));
    let mut g_log_std = Array1::zeros(action_dim);
    for i in 0..b {
        if dlogp[i] == 0.0 {
            continue;
        }
        let (gm, gls) = gaussian_log_density_grads(&mean_rows[i], &log_std, &actions[i]);
        for j in 0..action_dim {
            gmean[(i, j)] = dlogp[i] * gm[j];
            g_log_std[j] += dlogp[i] * gls[j];
        }
    }
    let gvalues = Array1::from_iter(diffs.iter().map(|e| beta_b * 2.0 * e / b as f64));
    model.backward(windows, &fwd, &gmean, &g_log_std, &gvalues);
    (
        actor_loss + beta_b * critic_loss,
        actor_loss,
        critic_loss,
        approx_kl,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_ratios_give_negative_mean_advantage() {
        let adv = [1.0, -2.0, 0.5];
        let logp = [0.3, -0.1, 0.7];
        let loss = clipped_policy_loss(&adv, &logp, &logp, 0.3);
        let mean = adv.iter().sum::<f64>() / 3.0;
        assert!((loss + mean).abs() < 1e-15);
    }

    #[test]
    fn clip_arithmetic_reference() {
        // ρ = 1.5, ε = 0.3, A = 1 → contribution min(1.5, 1.3) = 1.3.
        let adv = [1.0];
        let logp_old = [0.0];
        let logp_new = [1.5f64.ln()];
        let loss = clipped_policy_loss(&adv, &logp_new, &logp_old, 0.3);
        assert!((loss + 1.3).abs() < 1e-12);
    }

    #[test]
    fn negative_advantage_lower_clip_bounds_the_objective() {
        // A < 0 and ρ → 0: contribution pinned at (1−ε)·A.
        let adv = [-2.0];
        let logp_old = [0.0];
        let logp_new = [-30.0];
        let loss = clipped_policy_loss(&adv, &logp_new, &logp_old, 0.3);
        assert!((loss - 0.7 * 2.0).abs() < 1e-12);
        // No gradient incentive to collapse the ratio further.
        let (_, grads) = opdu_loss_and_grad(&adv, &logp_new, &logp_old, &logp_old, 0.3);
        assert_eq!(grads[0], 0.0);
    }

    #[test]
    fn opdu_reduces_to_clipped_when_mu_is_old() {
        let adv = [0.7, -1.2, 2.0, 0.1];
        let logp_old = [0.2, -0.5, 0.9, 0.0];
        let logp_new = [0.5, -0.2, 0.4, 0.3];
        let a = opdu_loss(&adv, &logp_new, &logp_old, &logp_old, 0.3);
        let b = clipped_policy_loss(&adv, &logp_new, &logp_old, 0.3);
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn opdu_all_equal_policies_is_negative_mean_advantage() {
        let adv = [0.7, -1.2, 2.0];
        let logp = [0.1, 0.2, 0.3];
        let loss = opdu_loss(&adv, &logp, &logp, &logp, 0.3);
        let mean = adv.iter().sum::<f64>() / 3.0;
        assert!((loss + mean).abs() < 1e-15);
    }

    #[test]
    fn opdu_scalar_bound_substitution() {
        // π_old/μ = 2, ε = 0.3 → window (1.4, 2.6). With ρ = 3 and A = 1 the
        // clipped branch pins the contribution at 2.6.
        let adv = [1.0];
        let logp_mu = [0.0];
        let logp_old = [2.0f64.ln()];
        let logp_new = [3.0f64.ln()];
        let loss = opdu_loss(&adv, &logp_new, &logp_mu, &logp_old, 0.3);
        assert!((loss + 2.6).abs() < 1e-12);
        // Below the window with A = 1: min picks the raw ratio.
        let logp_new = [1.0f64.ln()];
        let loss = opdu_loss(&adv, &logp_new, &logp_mu, &logp_old, 0.3);
        assert!((loss + 1.0).abs() < 1e-12);
    }

    #[test]
    fn per_sample_contribution_is_bounded() {
        // |min(ρA, clip(ρ)A)| ≤ (1+ε)|A| whenever ρ ≤ 1+ε or A < 0.
        let eps = 0.3;
        for &(adv, logr) in &[
            (1.0, 0.2),
            (1.0, -3.0),
            (-1.0, 0.2),
            (-1.0, -3.0),
            (2.0, 0.05),
        ] {
            let loss = clipped_policy_loss(&[adv], &[logr], &[0.0], eps);
            assert!(loss.abs() <= (1.0 + eps) * adv.abs() + 1e-12);
        }
    }

    #[test]
    fn opdu_gradient_equals_clipped_gradient_when_behavior_is_old() {
        let adv = [0.7, -1.2, 2.0, 0.1];
        let logp_old = [0.2, -0.5, 0.9, 0.0];
        let logp_new = [0.5, -0.9, 1.0, 0.2];
        let (la, ga) = opdu_loss_and_grad(&adv, &logp_new, &logp_old, &logp_old, 0.3);
        // Reference: direct clipped-surrogate gradient.
        let n = adv.len() as f64;
        for i in 0..adv.len() {
            let ratio = (logp_new[i] - logp_old[i]).exp();
            let surr1 = ratio * adv[i];
            let surr2 = ratio.clamp(0.7, 1.3) * adv[i];
            let expect = if surr1 <= surr2 {
                -ratio * adv[i] / n
            } else {
                0.0
            };
            assert!((ga[i] - expect).abs() < 1e-15);
        }
        assert!(la.is_finite());
    }

    #[test]
    fn kl_reference_cases() {
        let logp = [0.1, -0.2, 0.3];
        assert_eq!(kl_estimate(&logp, &logp), 0.0);
        let shifted: Vec<f64> = logp.iter().map(|p| p - 0.5).collect();
        assert!((kl_estimate(&logp, &shifted) - 0.5).abs() < 1e-15);
        // Asymmetry.
        assert!((kl_estimate(&shifted, &logp) + 0.5).abs() < 1e-15);
    }

    #[test]
    fn alpha_adaptation_branches() {
        // Substitution: α = 0.5, D = 1.0, δ = 0.5 → max(α_min, 0.25).
        assert!((adapt_alpha(0.5, 1.0, 0.5, 0.05) - 0.25).abs() < 1e-15);
        assert!((adapt_alpha(0.5, 1.0, 0.5, 0.3) - 0.3).abs() < 1e-15);
        // Growth branch: +5% per call, capped at 1.
        let mut a = 0.5;
        for _ in 0..40 {
            a = adapt_alpha(a, 0.1, 0.5, 0.05);
            assert!(a <= 1.0);
        }
        assert!((a - 1.0).abs() < 1e-12);
        // Divergence floor.
        assert!((adapt_alpha(0.9, 1e12, 0.5, 0.05) - 0.05).abs() < 1e-15);
    }
}
