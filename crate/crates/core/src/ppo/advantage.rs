//! Return and advantage estimators.

use crate::{Error, Result};

/// Generalized advantage estimation over one contiguous trajectory.
///
/// `values` holds `T+1` state values (the last one bootstraps the final
/// transition and is masked by its done flag). Returns `(advantages,
/// return_targets)` with `return = advantage + value`.
pub fn gae_advantages(
    rewards: &[f64],
    dones: &[bool],
    values: &[f64],
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let t_len = rewards.len();
    if t_len == 0 {
        return Err(Error::InvalidParameter("empty trajectory".into()));
    }
    if dones.len() != t_len || values.len() != t_len + 1 {
        return Err(Error::DimensionMismatch {
            context: "gae inputs",
            expected: t_len,
            got: dones.len().min(values.len()),
        });
    }
    let mut advantages = vec![0.0; t_len];
    let mut carry = 0.0;
    for t in (0..t_len).rev() {
        let not_done = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * values[t + 1] * not_done - values[t];
        carry = delta + gamma * lambda * not_done * carry;
        advantages[t] = carry;
    }
    let returns = advantages
        .iter()
        .zip(values.iter())
        .map(|(a, v)| a + v)
        .collect();
    Ok((advantages, returns))
}

/// Plain discounted return targets (the policy-feedback ablation path).
pub fn discounted_returns(rewards: &[f64], dones: &[bool], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut carry = 0.0;
    for t in (0..rewards.len()).rev() {
        if dones[t] {
            carry = 0.0;
        }
        carry = rewards[t] + gamma * carry;
        out[t] = carry;
    }
    out
}

/// Policy-weighted return targets: every tail reward is discounted by the
/// clipped discount and multiplied by the running product of bounded step
/// weights `w = min(1, π(a|s))^weighting`:
///
/// ```text
/// R̂(t) = Σ_{c=t}^{T} Υc^{c−t} · r(c) · Π_{v=t}^{c} w(v)
/// ```
pub fn pbe_return(
    rewards: &[f64],
    densities: &[f64],
    clipped_discount: f64,
    weighting: f64,
) -> Result<Vec<f64>> {
    let t_len = rewards.len();
    if t_len == 0 {
        return Err(Error::InvalidParameter("empty trajectory".into()));
    }
    if densities.len() != t_len {
        return Err(Error::DimensionMismatch {
            context: "pbe densities",
            expected: t_len,
            got: densities.len(),
        });
    }
    let weights: Vec<f64> = densities
        .iter()
        .map(|&p| p.min(1.0).max(0.0).powf(weighting))
        .collect();
    let mut out = vec![0.0; t_len];
    let mut carry = 0.0;
    for t in (0..t_len).rev() {
        carry = weights[t] * (rewards[t] + clipped_discount * carry);
        out[t] = carry;
    }
    Ok(out)
}

/// One-step action-value backup `r + Υ·E_{a'∼π}[Q(s',a')]`. The expectation
/// is supplied as `(probability, q)` pairs — exact for discrete supports,
/// `1/n`-weighted samples for a continuous policy. `None` marks a terminal
/// state.
pub fn pbe_q_backup(reward: f64, gamma: f64, next: Option<&[(f64, f64)]>) -> f64 {
    match next {
        None => reward,
        Some(pairs) => {
            let expect: f64 = pairs.iter().map(|(p, q)| p * q).sum();
            reward + gamma * expect
        }
    }
}
