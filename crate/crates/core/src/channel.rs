//! Stochastic uplink channels.
//!
//! Two link classes exist per user and slot: the vector channel from the
//! user to the output metasurface layer (spatially correlated Rician fading,
//! line-of-sight steering toward the user) and the scalar channel straight
//! to the eavesdropper (Rician with a unit-modulus distance-phase
//! line-of-sight term). Path loss follows the power law `ρ d^{−α}`.
//!
//! Fading is redrawn independently every slot; all temporal structure comes
//! from user motion. Sampling takes an explicit random stream so parallel
//! environment instances never share hidden state.

use crate::em::SimGeometry;
use crate::{Error, Result};
use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// Power-law path loss: linear gain `ρ d^{−α}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathLossModel {
    /// Linear power gain at 1 m.
    pub reference_gain: f64,
    /// Path loss exponent.
    pub exponent: f64,
}

impl PathLossModel {
    pub fn new(reference_gain: f64, exponent: f64) -> Result<Self> {
        if !(reference_gain > 0.0 && reference_gain.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "reference gain must be positive, got {reference_gain}"
            )));
        }
        if !(exponent >= 0.0 && exponent.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "path loss exponent must be non-negative, got {exponent}"
            )));
        }
        Ok(Self {
            reference_gain,
            exponent,
        })
    }
}

/// Rician parameters of one link class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkParams {
    pub path_loss: PathLossModel,
    /// Linear line-of-sight to scattered power ratio; `inf` selects the pure
    /// line-of-sight limit (no fading draw).
    pub rician_factor: f64,
}

fn distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}

/// Linear path gain between two points.
pub fn path_loss(pos_a: [f64; 3], pos_b: [f64; 3], model: &PathLossModel) -> Result<f64> {
    let d = distance(pos_a, pos_b);
    if d <= 0.0 {
        return Err(Error::CoincidentPoints);
    }
    Ok(model.reference_gain * d.powf(-model.exponent))
}

/// Normalized sinc, `sin(πx)/(πx)`.
pub fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Spatial correlation of the output layer plus a sampling root with
/// `root · rootᵀ ≈ R`.
#[derive(Debug, Clone)]
pub struct CorrelationMatrix {
    pub matrix: Array2<f64>,
    pub sampling_root: Array2<f64>,
}

/// Cyclic Jacobi eigendecomposition of a real symmetric matrix.
/// Returns (eigenvalues, eigenvector columns).
fn symmetric_eigen(a: &Array2<f64>) -> (Array1<f64>, Array2<f64>) {
    let n = a.nrows();
    let mut m = a.clone();
    let mut v: Array2<f64> = Array2::eye(n);
    let scale: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
    for _sweep in 0..64 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += m[(i, j)] * m[(i, j)];
            }
        }
        if off.sqrt() <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let tau = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let eig = Array1::from_iter((0..n).map(|i| m[(i, i)]));
    (eig, v)
}

/// Builds the sinc spatial correlation of the output layer and its symmetric
/// PSD sampling root. Negative eigenvalues within `1e-9` of zero are clamped;
/// anything more negative is rejected as a non-physical correlation.
pub fn correlation_matrix(geom: &SimGeometry) -> Result<CorrelationMatrix> {
    let n = geom.atoms_per_layer();
    let top = geom.layers();
    let mut r = Array2::zeros((n, n));
    for i in 0..n {
        let pi = geom.atom_position(top, i)?;
        for j in 0..n {
            let pj = geom.atom_position(top, j)?;
            r[(i, j)] = sinc(2.0 * distance(pi, pj) / geom.wavelength());
        }
    }
    let (eig, v) = symmetric_eigen(&r);
    if let Some(min) = eig.iter().cloned().reduce(f64::min) {
        if min < -1e-9 {
            return Err(Error::InvalidParameter(format!(
                "correlation matrix has eigenvalue {min} below -1e-9"
            )));
        }
    }
    // root = V diag(sqrt(max(λ, 0))) Vᵀ
    let sqrt_eig: Vec<f64> = eig.iter().map(|&l| l.max(0.0).sqrt()).collect();
    let mut scaled = v.clone();
    for (j, mut col) in scaled.columns_mut().into_iter().enumerate() {
        col.mapv_inplace(|x| x * sqrt_eig[j]);
    }
    let root = scaled.dot(&v.t());
    Ok(CorrelationMatrix {
        matrix: r,
        sampling_root: root,
    })
}

/// Line-of-sight steering vector over the `√N × √N` output grid for an
/// (azimuth, elevation) arrival direction.
pub fn steering_vector(azimuth: f64, elevation: f64, geom: &SimGeometry) -> Array1<Complex64> {
    let side = geom.grid_side();
    let k = 2.0 * PI * geom.atom_pitch() / geom.wavelength();
    let row_term = elevation.sin() * azimuth.sin();
    let col_term = elevation.cos();
    Array1::from_iter((0..geom.atoms_per_layer()).map(|i| {
        let row = (i / side) as f64;
        let col = (i % side) as f64;
        Complex64::cis(k * (row * row_term + col * col_term))
    }))
}

/// Arrival angles (azimuth, elevation) of the user as seen from the array
/// broadside: elevation is measured from the +z axis, azimuth in the x-y
/// plane from +x.
pub fn aoa_from_positions(mu_pos: [f64; 3], bs_pos: [f64; 3]) -> Result<(f64, f64)> {
    let d = distance(mu_pos, bs_pos);
    if d <= 0.0 {
        return Err(Error::CoincidentPoints);
    }
    let dx = mu_pos[0] - bs_pos[0];
    let dy = mu_pos[1] - bs_pos[1];
    let dz = mu_pos[2] - bs_pos[2];
    let elevation = (dz / d).clamp(-1.0, 1.0).acos();
    let azimuth = dy.atan2(dx);
    Ok((azimuth, elevation))
}

fn complex_normal(rng: &mut impl Rng) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * FRAC_1_SQRT_2
}

/// Draws the correlated Rician vector channel from a user to the output
/// layer: `√(β/(1+ξ)) (√ξ ā + root·z)` with `z` circularly symmetric unit
/// normal. An infinite Rician factor returns the exact line-of-sight channel
/// without consuming randomness.
pub fn sample_sim_channel(
    mu_pos: [f64; 3],
    bs_pos: [f64; 3],
    geom: &SimGeometry,
    params: &LinkParams,
    corr: &CorrelationMatrix,
    rng: &mut impl Rng,
) -> Result<Array1<Complex64>> {
    let beta = path_loss(mu_pos, bs_pos, &params.path_loss)?;
    let (azimuth, elevation) = aoa_from_positions(mu_pos, bs_pos)?;
    let los = steering_vector(azimuth, elevation, geom);
    let xi = params.rician_factor;
    if xi.is_infinite() {
        return Ok(los.mapv(|a| a * beta.sqrt()));
    }
    let n = geom.atoms_per_layer();
    let z = Array1::from_iter((0..n).map(|_| complex_normal(rng)));
    let mut scattered = Array1::zeros(n);
    for i in 0..n {
        let mut acc = Complex64::new(0.0, 0.0);
        for j in 0..n {
            acc += corr.sampling_root[(i, j)] * z[j];
        }
        scattered[i] = acc;
    }
    let scale = (beta / (1.0 + xi)).sqrt();
    let los_amp = xi.sqrt();
    Ok(Array1::from_iter(
        los.iter()
            .zip(scattered.iter())
            .map(|(&a, &s)| (a * los_amp + s) * scale),
    ))
}

/// Draws the scalar Rician channel from a user to the eavesdropper. The
/// line-of-sight term is the unit-modulus distance phase `e^{−j2πd/λ}`.
pub fn sample_eve_channel(
    mu_pos: [f64; 3],
    eve_pos: [f64; 3],
    params: &LinkParams,
    wavelength: f64,
    rng: &mut impl Rng,
) -> Result<Complex64> {
    let d = distance(mu_pos, eve_pos);
    if d <= 0.0 {
        return Err(Error::CoincidentPoints);
    }
    let beta = path_loss(mu_pos, eve_pos, &params.path_loss)?;
    let los = Complex64::cis(-2.0 * PI * d / wavelength);
    let xi = params.rician_factor;
    if xi.is_infinite() {
        return Ok(los * beta.sqrt());
    }
    let scattered = complex_normal(rng);
    Ok((los * xi.sqrt() + scattered) * (beta / (1.0 + xi)).sqrt())
}

/// End-to-end scalar channel `w^H G^H h` for one user.
pub fn overall_channel(
    w1: &Array1<Complex64>,
    g: &Array2<Complex64>,
    h_sim: &Array1<Complex64>,
) -> Result<Complex64> {
    let n = h_sim.len();
    if w1.len() != n || g.nrows() != n || g.ncols() != n {
        return Err(Error::DimensionMismatch {
            context: "overall channel dimensions",
            expected: n,
            got: w1.len().min(g.nrows()).min(g.ncols()),
        });
    }
    // w^H G^H h = (G w)^H h
    let gw = g.dot(w1);
    Ok(gw
        .iter()
        .zip(h_sim.iter())
        .map(|(&u, &h)| u.conj() * h)
        .sum())
}

/// Same contraction when the propagated input `G w` is already available.
pub fn overall_channel_from_propagated(
    propagated: &Array1<Complex64>,
    h_sim: &Array1<Complex64>,
) -> Complex64 {
    propagated
        .iter()
        .zip(h_sim.iter())
        .map(|(&u, &h)| u.conj() * h)
        .sum()
}

/// Per-slot channel draw for every user.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    pub h_sim: Vec<Array1<Complex64>>,
    pub h_eve: Vec<Complex64>,
    pub slot: u64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    fn model() -> PathLossModel {
        PathLossModel::new(0.01, 2.0).unwrap()
    }

    #[test]
    fn path_loss_reference_cases() {
        let m = model();
        let g1 = path_loss([0.0; 3], [1.0, 0.0, 0.0], &m).unwrap();
        assert!((g1 - 0.01).abs() < 1e-18);
        let g10 = path_loss([0.0; 3], [10.0, 0.0, 0.0], &m).unwrap();
        assert!((g10 - 1e-4).abs() < 1e-18);
        let flat = PathLossModel::new(0.01, 0.0).unwrap();
        let gf = path_loss([0.0; 3], [37.0, 2.0, 1.0], &flat).unwrap();
        assert_eq!(gf, 0.01);
        assert!(path_loss([1.0, 2.0, 3.0], [1.0, 2.0, 3.0], &m).is_err());
        // Strictly decreasing in distance for a positive exponent.
        let near = path_loss([0.0; 3], [5.0, 0.0, 0.0], &m).unwrap();
        let far = path_loss([0.0; 3], [6.0, 0.0, 0.0], &m).unwrap();
        assert!(far < near);
    }

    #[test]
    fn correlation_diag_and_neighbors() {
        let geom = SimGeometry::new(2, 16, 2, 0.0857).unwrap();
        let corr = correlation_matrix(&geom).unwrap();
        let side = geom.grid_side();
        for i in 0..16 {
            assert!((corr.matrix[(i, i)] - 1.0).abs() < 1e-15);
        }
        // Adjacent atoms sit half a wavelength apart: sinc(1) = 0.
        assert!(corr.matrix[(0, 1)].abs() < 1e-15);
        // Diagonal neighbor at λ/√2: sinc(√2) against direct evaluation.
        let diag = corr.matrix[(0, side + 1)];
        let x = 2.0_f64.sqrt();
        let expect = (PI * x).sin() / (PI * x);
        assert!((diag - expect).abs() < 1e-14);
    }

    #[test]
    fn correlation_root_reconstructs_matrix() {
        for n in [4usize, 16, 36] {
            let geom = SimGeometry::new(2, n, 2, 0.0857).unwrap();
            let corr = correlation_matrix(&geom).unwrap();
            let rec = corr.sampling_root.dot(&corr.sampling_root.t());
            let max_err = rec
                .iter()
                .zip(corr.matrix.iter())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(max_err <= 1e-8, "n={n}: reconstruction error {max_err}");
        }
    }

    #[test]
    fn steering_first_entry_unit_and_row_only_at_broadside() {
        let geom = SimGeometry::new(2, 16, 2, 0.0857).unwrap();
        let v = steering_vector(0.83, 2.31, &geom);
        assert!((v[0] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        for e in v.iter() {
            assert!((e.norm() - 1.0).abs() < 1e-14);
        }
        // Elevation π/2 kills the column term.
        let v = steering_vector(0.4, PI / 2.0, &geom);
        let side = geom.grid_side();
        for r in 0..side {
            for c in 1..side {
                assert!((v[r * side + c] - v[r * side]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn aoa_reference_cases() {
        let bs = [0.0, 0.0, 20.0];
        // Directly below the base station.
        let (_, el) = aoa_from_positions([0.0, 0.0, 0.0], bs).unwrap();
        assert!((el - PI).abs() < 1e-12);
        // On the +x axis at base-station height.
        let (az, el) = aoa_from_positions([13.0, 0.0, 20.0], bs).unwrap();
        assert!(az.abs() < 1e-12);
        assert!((el - PI / 2.0).abs() < 1e-12);
        // Swapping x and y complements the azimuth.
        let (az1, _) = aoa_from_positions([3.0, 7.0, 0.0], bs).unwrap();
        let (az2, _) = aoa_from_positions([7.0, 3.0, 0.0], bs).unwrap();
        assert!((az2 - (PI / 2.0 - az1)).abs() < 1e-12);
        assert!(aoa_from_positions(bs, bs).is_err());
    }

    #[test]
    fn sim_channel_rician_limits() {
        let geom = SimGeometry::new(2, 16, 2, 0.0857).unwrap();
        let corr = correlation_matrix(&geom).unwrap();
        let bs = [0.0, 0.0, 20.0];
        let mu = [30.0, 40.0, 0.0];
        let mut rng = substream(1, &[1]);
        let params = LinkParams {
            path_loss: model(),
            rician_factor: 1e12,
        };
        let h = sample_sim_channel(mu, bs, &geom, &params, &corr, &mut rng).unwrap();
        let beta = path_loss(mu, bs, &model()).unwrap();
        let (az, el) = aoa_from_positions(mu, bs).unwrap();
        let los = steering_vector(az, el, &geom);
        for (a, b) in h.iter().zip(los.iter()) {
            let expect = b * beta.sqrt();
            assert!((a - expect).norm() / expect.norm() < 1e-5);
        }
        // Exact line-of-sight branch.
        let inf = LinkParams {
            path_loss: model(),
            rician_factor: f64::INFINITY,
        };
        let h = sample_sim_channel(mu, bs, &geom, &inf, &corr, &mut rng).unwrap();
        for (a, b) in h.iter().zip(los.iter()) {
            assert_eq!(*a, b * beta.sqrt());
        }
    }

    #[test]
    fn sim_channel_mean_power_matches_path_loss() {
        let geom = SimGeometry::new(2, 16, 2, 0.0857).unwrap();
        let corr = correlation_matrix(&geom).unwrap();
        let bs = [0.0, 0.0, 20.0];
        let mu = [30.0, 40.0, 0.0];
        let params = LinkParams {
            path_loss: model(),
            rician_factor: 0.0,
        };
        let beta = path_loss(mu, bs, &model()).unwrap();
        let mut rng = substream(2, &[2]);
        let draws = 10_000;
        let n = geom.atoms_per_layer() as f64;
        let mut samples = Vec::with_capacity(draws);
        for _ in 0..draws {
            let h = sample_sim_channel(mu, bs, &geom, &params, &corr, &mut rng).unwrap();
            samples.push(h.iter().map(|c| c.norm_sqr()).sum::<f64>() / n);
        }
        let mean = samples.iter().sum::<f64>() / draws as f64;
        let var = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / draws as f64;
        let se = (var / draws as f64).sqrt();
        assert!(
            (mean - beta).abs() < 3.0 * se,
            "mean {mean}, beta {beta}, se {se}"
        );
    }

    #[test]
    fn eve_channel_statistics_and_scaling() {
        let params = LinkParams {
            path_loss: model(),
            rician_factor: 10.0,
        };
        let mu = [30.0, 40.0, 0.0];
        let eve = [20.0, 20.0, 0.0];
        let lambda = 0.0857;
        let beta = path_loss(mu, eve, &model()).unwrap();
        // Infinite factor: exact modulus.
        let inf = LinkParams {
            path_loss: model(),
            rician_factor: f64::INFINITY,
        };
        let mut rng = substream(3, &[3]);
        let h = sample_eve_channel(mu, eve, &inf, lambda, &mut rng).unwrap();
        assert!((h.norm() - beta.sqrt()).abs() < 1e-15);
        // Mean power across draws.
        let draws = 10_000;
        let mut powers = Vec::with_capacity(draws);
        for _ in 0..draws {
            let h = sample_eve_channel(mu, eve, &params, lambda, &mut rng).unwrap();
            powers.push(h.norm_sqr());
        }
        let mean = powers.iter().sum::<f64>() / draws as f64;
        let var = powers.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>() / draws as f64;
        let se = (var / draws as f64).sqrt();
        assert!(
            (mean - beta).abs() < 3.0 * se,
            "mean {mean}, beta {beta}, se {se}"
        );
        // Doubling the distance at exponent 2 halves the amplitude scale.
        let far = [40.0, 60.0, 0.0]; // twice as far from eve
        let beta_far = path_loss(far, eve, &model()).unwrap();
        assert!((beta_far.sqrt() / beta.sqrt() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn overall_channel_identity_zero_and_naive() {
        use rand::Rng;
        let n = 9;
        let mut rng = substream(4, &[4]);
        let mut cvec =
            |_: usize| {
                Array1::from_iter((0..n).map(|_| {
                    Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
                }))
            };
        let w = cvec(0);
        let h = cvec(1);
        let eye = Array2::from_shape_fn((n, n), |(i, j)| {
            Complex64::new(if i == j { 1.0 } else { 0.0 }, 0.0)
        });
        let hk = overall_channel(&w, &eye, &h).unwrap();
        let inner: Complex64 = w.iter().zip(h.iter()).map(|(&a, &b)| a.conj() * b).sum();
        assert!((hk - inner).norm() < 1e-14);
        let zero = Array1::zeros(n);
        assert_eq!(
            overall_channel(&w, &eye, &zero).unwrap(),
            Complex64::new(0.0, 0.0)
        );
        // Naive triple contraction oracle.
        let mut rng2 = substream(4, &[5]);
        let g = Array2::from_shape_fn((n, n), |_| {
            Complex64::new(rng2.random_range(-1.0..1.0), rng2.random_range(-1.0..1.0))
        });
        let fast = overall_channel(&w, &g, &h).unwrap();
        let mut naive = Complex64::new(0.0, 0.0);
        for a in 0..n {
            for b in 0..n {
                naive += w[a].conj() * g[(b, a)].conj() * h[b];
            }
        }
        assert!((fast - naive).norm() < 1e-12);
        // Global phase covariance.
        let c = Complex64::cis(0.31);
        let h_rot = h.mapv(|x| x * c);
        let rot = overall_channel(&w, &g, &h_rot).unwrap();
        assert!((rot - fast * c).norm() < 1e-12);
        assert!((rot.norm() - fast.norm()).abs() < 1e-12);
        // Dimension mismatch.
        let short = Array1::zeros(n - 1);
        assert!(overall_channel(&short, &g, &h).is_err());
    }

    #[test]
    fn resampling_same_stream_is_identical() {
        let geom = SimGeometry::new(2, 9, 2, 0.0857).unwrap();
        let corr = correlation_matrix(&geom).unwrap();
        let params = LinkParams {
            path_loss: model(),
            rician_factor: 10.0,
        };
        let bs = [0.0, 0.0, 20.0];
        let mu = [12.0, -7.0, 0.0];
        let a =
            sample_sim_channel(mu, bs, &geom, &params, &corr, &mut substream(9, &[1, 2])).unwrap();
        let b =
            sample_sim_channel(mu, bs, &geom, &params, &corr, &mut substream(9, &[1, 2])).unwrap();
        assert_eq!(a, b);
    }
}
