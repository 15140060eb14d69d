//! Uplink SINRs, rates and secrecy rates.
//!
//! The base-station SINR of user `k` treats every other user's received
//! power as interference and adds the residual-hardware-impairment
//! distortion of *all* users, the desired one included:
//!
//! ```text
//! γ_k = g_k P_k / ( Σ_{j≠k} g_j P_j + Σ_i g_i κ_i² P_i + N₀ )
//! ```
//!
//! The eavesdropper sees the same structure with its own gains. Rates are
//! `log₂(1+γ)`; the per-user secrecy rate is the hinge of the rate gap.

use crate::channel::{overall_channel_from_propagated, ChannelRealization};
use crate::em::{Cascade, PhaseConfig};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Scalar link state of one slot: effective power gains, transmit powers,
/// impairment levels and noise power, everything linear.
#[derive(Debug, Clone)]
pub struct LinkSnapshot {
    /// `g_k = |w_k^H G^H h_k|²` per user.
    pub bs_gains: Vec<f64>,
    /// `e_k = |h_eve,k|²` per user.
    pub eve_gains: Vec<f64>,
    /// Transmit powers in watts.
    pub powers: Vec<f64>,
    /// Residual hardware impairment levels `κ_k`.
    pub impairments: Vec<f64>,
    /// Noise power in watts.
    pub noise_power: f64,
}

impl LinkSnapshot {
    pub fn num_users(&self) -> usize {
        self.powers.len()
    }

    fn validate(&self) -> Result<()> {
        let k = self.powers.len();
        if self.bs_gains.len() != k || self.eve_gains.len() != k || self.impairments.len() != k {
            return Err(Error::DimensionMismatch {
                context: "link snapshot per-user vectors",
                expected: k,
                got: self.bs_gains.len(),
            });
        }
        if !(self.noise_power > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "noise power must be positive, got {}",
                self.noise_power
            )));
        }
        Ok(())
    }
}

fn sinr(gains: &[f64], powers: &[f64], impairments: &[f64], noise: f64, k: usize) -> f64 {
    let mut denom = noise;
    for j in 0..powers.len() {
        if j != k {
            denom += gains[j] * powers[j];
        }
        denom += gains[j] * impairments[j] * impairments[j] * powers[j];
    }
    gains[k] * powers[k] / denom
}

/// SINR of user `k` at the base station.
pub fn sinr_bs(snapshot: &LinkSnapshot, k: usize) -> f64 {
    sinr(
        &snapshot.bs_gains,
        &snapshot.powers,
        &snapshot.impairments,
        snapshot.noise_power,
        k,
    )
}

/// SINR of user `k`'s signal at the eavesdropper.
pub fn sinr_eve(snapshot: &LinkSnapshot, k: usize) -> f64 {
    sinr(
        &snapshot.eve_gains,
        &snapshot.powers,
        &snapshot.impairments,
        snapshot.noise_power,
        k,
    )
}

/// Spectral efficiency `log₂(1+γ)` in bit/s/Hz.
pub fn rate(gamma: f64) -> f64 {
    (1.0 + gamma).log2()
}

/// Hinged secrecy rate `[R − R_eve]⁺`.
pub fn secrecy_rate(rate_k: f64, rate_eve: f64) -> f64 {
    (rate_k - rate_eve).max(0.0)
}

/// Per-slot rate and secrecy summary.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SecrecyReport {
    pub rates: Vec<f64>,
    pub eve_rates: Vec<f64>,
    pub secrecy_rates: Vec<f64>,
    pub bs_sinrs: Vec<f64>,
    pub mean_secrecy: f64,
    pub sum_secrecy: f64,
}

/// Computes every per-user and aggregate quantity from a link snapshot.
pub fn secrecy_report(snapshot: &LinkSnapshot) -> Result<SecrecyReport> {
    snapshot.validate()?;
    let k = snapshot.num_users();
    let mut rates = Vec::with_capacity(k);
    let mut eve_rates = Vec::with_capacity(k);
    let mut secrecy_rates = Vec::with_capacity(k);
    let mut bs_sinrs = Vec::with_capacity(k);
    for i in 0..k {
        let gb = sinr_bs(snapshot, i);
        let ge = sinr_eve(snapshot, i);
        let rb = rate(gb);
        let re = rate(ge);
        bs_sinrs.push(gb);
        rates.push(rb);
        eve_rates.push(re);
        secrecy_rates.push(secrecy_rate(rb, re));
    }
    let sum_secrecy: f64 = secrecy_rates.iter().sum();
    let mean_secrecy = sum_secrecy / k as f64;
    Ok(SecrecyReport {
        rates,
        eve_rates,
        secrecy_rates,
        bs_sinrs,
        mean_secrecy,
        sum_secrecy,
    })
}

/// Assembles the snapshot from the wave-domain cascade and a channel draw,
/// then reports rates and secrecy. `kappas` and `powers` are per user.
pub fn secrecy_report_from_channels(
    cascade: &Cascade,
    phases: &PhaseConfig,
    channels: &ChannelRealization,
    powers: &[f64],
    kappas: &[f64],
    noise_power: f64,
) -> Result<SecrecyReport> {
    let k = channels.h_sim.len();
    if powers.len() != k || kappas.len() != k || channels.h_eve.len() != k {
        return Err(Error::DimensionMismatch {
            context: "per-user inputs to secrecy report",
            expected: k,
            got: powers.len(),
        });
    }
    let mut bs_gains = Vec::with_capacity(k);
    let mut eve_gains = Vec::with_capacity(k);
    for i in 0..k {
        let propagated = cascade.propagated_input(phases, i)?;
        let h = overall_channel_from_propagated(&propagated, &channels.h_sim[i]);
        bs_gains.push(h.norm_sqr());
        eve_gains.push(channels.h_eve[i].norm_sqr());
    }
    let snapshot = LinkSnapshot {
        bs_gains,
        eve_gains,
        powers: powers.to_vec(),
        impairments: kappas.to_vec(),
        noise_power,
    };
    secrecy_report(&snapshot)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn snap(
        bs_gains: Vec<f64>,
        eve_gains: Vec<f64>,
        powers: Vec<f64>,
        impairments: Vec<f64>,
        noise_power: f64,
    ) -> LinkSnapshot {
        LinkSnapshot {
            bs_gains,
            eve_gains,
            powers,
            impairments,
            noise_power,
        }
    }

    #[test]
    fn single_user_no_impairment_is_snr() {
        let s = snap(vec![2.0], vec![0.5], vec![3.0], vec![0.0], 1.5);
        assert!((sinr_bs(&s, 0) - 2.0 * 3.0 / 1.5).abs() < 1e-15);
        assert!((sinr_eve(&s, 0) - 0.5 * 3.0 / 1.5).abs() < 1e-15);
    }

    #[test]
    fn own_impairment_limits_single_user_sinr() {
        // g = 1, P = 1, κ = 0.1, negligible noise: γ → 1/κ² = 100.
        let s = snap(vec![1.0], vec![0.0], vec![1.0], vec![0.1], 1e-300);
        assert!((sinr_bs(&s, 0) - 100.0).abs() / 100.0 < 1e-12);
    }

    #[test]
    fn zero_power_zero_sinr() {
        let s = snap(
            vec![1.0, 2.0],
            vec![0.3, 0.4],
            vec![0.0, 1.0],
            vec![0.1, 0.1],
            1e-14,
        );
        assert_eq!(sinr_bs(&s, 0), 0.0);
        assert_eq!(rate(sinr_bs(&s, 0)), 0.0);
    }

    #[test]
    fn symmetric_two_user_eve_sinrs_match() {
        let s = snap(
            vec![1.0, 1.0],
            vec![0.7, 0.7],
            vec![0.5, 0.5],
            vec![0.1, 0.1],
            1e-14,
        );
        assert!((sinr_eve(&s, 0) - sinr_eve(&s, 1)).abs() < 1e-18);
        let zeroed = snap(vec![1.0], vec![0.0], vec![1.0], vec![0.0], 1.0);
        assert_eq!(sinr_eve(&zeroed, 0), 0.0);
    }

    #[test]
    fn rate_reference_points() {
        assert_eq!(rate(0.0), 0.0);
        assert!((rate(1.0) - 1.0).abs() < 1e-15);
        assert!((rate(3.0) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn secrecy_hinge() {
        assert!((secrecy_rate(2.0, 0.5) - 1.5).abs() < 1e-15);
        assert_eq!(secrecy_rate(0.5, 2.0), 0.0);
        assert_eq!(secrecy_rate(1.3, 1.3), 0.0);
    }

    #[test]
    fn report_distant_eavesdropper_and_zero_power() {
        let s = snap(
            vec![1e-9, 2e-9],
            vec![0.0, 0.0],
            vec![0.5, 0.5],
            vec![0.1, 0.1],
            1e-14,
        );
        let rep = secrecy_report(&s).unwrap();
        for i in 0..2 {
            assert_eq!(rep.secrecy_rates[i], rep.rates[i]);
        }
        assert!((rep.sum_secrecy - 2.0 * rep.mean_secrecy).abs() < 1e-15);
        let off = snap(
            vec![1e-9, 2e-9],
            vec![1e-10, 1e-10],
            vec![0.0, 0.0],
            vec![0.1, 0.1],
            1e-14,
        );
        let rep = secrecy_report(&off).unwrap();
        assert!(rep.rates.iter().all(|&r| r == 0.0));
        assert!(rep.secrecy_rates.iter().all(|&r| r == 0.0));
        assert_eq!(rep.mean_secrecy, 0.0);
    }

    #[test]
    fn single_user_monotone_in_power() {
        let mut prev = -1.0;
        for p in [0.01, 0.1, 0.5, 1.0] {
            let s = snap(vec![1e-9], vec![0.0], vec![p], vec![0.0], 1e-14);
            let g = sinr_bs(&s, 0);
            assert!(g > prev);
            prev = g;
        }
    }

    #[test]
    fn sinr_non_increasing_in_impairments() {
        for kappa in [0.0, 0.05, 0.1, 0.2, 0.4] {
            let base = snap(
                vec![1.0, 0.8],
                vec![0.2, 0.3],
                vec![0.5, 0.5],
                vec![0.1, 0.1],
                1e-14,
            );
            let mut bumped = base.clone();
            bumped.impairments[1] += kappa;
            assert!(sinr_bs(&bumped, 0) <= sinr_bs(&base, 0));
            assert!(sinr_eve(&bumped, 0) <= sinr_eve(&base, 0));
        }
    }

    #[test]
    fn sinr_scale_invariance() {
        let s = snap(
            vec![1.0, 0.8],
            vec![0.2, 0.3],
            vec![0.5, 0.5],
            vec![0.1, 0.1],
            1e-6,
        );
        let c = 3.7e4;
        let scaled = snap(
            s.bs_gains.iter().map(|g| g * c).collect(),
            s.eve_gains.iter().map(|g| g * c).collect(),
            s.powers.clone(),
            s.impairments.clone(),
            s.noise_power * c,
        );
        for k in 0..2 {
            assert!((sinr_bs(&s, k) - sinr_bs(&scaled, k)).abs() / sinr_bs(&s, k) < 1e-12);
            assert!((sinr_eve(&s, k) - sinr_eve(&scaled, k)).abs() / sinr_eve(&s, k) < 1e-12);
        }
    }

    #[test]
    fn report_rejects_bad_shapes() {
        let s = snap(
            vec![1.0],
            vec![0.2, 0.3],
            vec![0.5, 0.5],
            vec![0.1, 0.1],
            1e-14,
        );
        assert!(secrecy_report(&s).is_err());
        let s = snap(vec![1.0], vec![0.2], vec![0.5], vec![0.1], 0.0);
        assert!(secrecy_report(&s).is_err());
    }
}
