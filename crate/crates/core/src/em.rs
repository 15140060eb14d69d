//! Multilayer metasurface geometry and wave-domain beamforming.
//!
//! A stack of `M` metasurface layers sits between the receive antennas and
//! the service area. Each layer carries `N` phase-programmable atoms on a
//! `√N × √N` grid. A field incident on one layer reaches the next through
//! near-field diffraction; the per-hop coupling between an atom pair at
//! distance `d` with obliquity angle `χ` is
//!
//! ```text
//! w = (d_x d_y cos χ / d) · (1/(2πd) − j/λ) · e^{j 2π d / λ}
//! ```
//!
//! Stacking phase layers and diffraction hops yields the cascade
//! `G = Φ_M W_M Φ_{M−1} W_{M−1} ⋯ Φ_2 W_2 Φ_1`, the linear transform the
//! stack realizes in the wave domain.
//!
//! Geometry conventions: layer planes are parallel to the x-y plane, layer
//! `m` (1-based) at height `m · d_layer`; atoms are indexed row-major with
//! the row axis along y and the column axis along x; the antennas form a
//! half-wavelength uniform linear array along y at height 0, centered under
//! the grid.

use crate::{Error, Result};
use ndarray::{Array1, Array2};
use num_complex::Complex64;
use std::f64::consts::PI;

/// 3-D point in meters.
pub type Point = [f64; 3];

fn dist(a: Point, b: Point) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Full 3-D layout of the metasurface stack and the receive array.
///
/// All derived quantities (layer spacing, atom pitch, atom size) follow the
/// half-wavelength grid convention: pitch `λ/2`, atom size `λ/2 × λ/2`,
/// stack thickness `5λ` split evenly over the layers.
#[derive(Debug, Clone)]
pub struct SimGeometry {
    layers: usize,
    atoms_per_layer: usize,
    grid_side: usize,
    atom_pitch: f64,
    atom_size: (f64, f64),
    layer_spacing: f64,
    wavelength: f64,
    antenna_positions: Vec<Point>,
    atom_xy: Vec<[f64; 2]>,
}

/// Stack thickness in wavelengths, split evenly across the layers.
pub const STACK_THICKNESS_WAVELENGTHS: f64 = 5.0;

impl SimGeometry {
    /// Builds the stack geometry for `layers` metasurfaces of
    /// `atoms_per_layer` atoms each (must be a perfect square) and a
    /// `num_antennas`-element receive array.
    pub fn new(
        layers: usize,
        atoms_per_layer: usize,
        num_antennas: usize,
        wavelength: f64,
    ) -> Result<Self> {
        if layers == 0 {
            return Err(Error::InvalidGeometry("layer count must be >= 1".into()));
        }
        if num_antennas == 0 {
            return Err(Error::InvalidGeometry("antenna count must be >= 1".into()));
        }
        if !(wavelength.is_finite() && wavelength > 0.0) {
            return Err(Error::InvalidGeometry(format!(
                "wavelength must be positive, got {wavelength}"
            )));
        }
        let side = (atoms_per_layer as f64).sqrt().round() as usize;
        if side == 0 || side * side != atoms_per_layer {
            return Err(Error::InvalidGeometry(format!(
                "atoms per layer must be a perfect square, got {atoms_per_layer}"
            )));
        }
        let pitch = wavelength / 2.0;
        let layer_spacing = STACK_THICKNESS_WAVELENGTHS * wavelength / layers as f64;
        let half = (side as f64 - 1.0) / 2.0;
        let mut atom_xy = Vec::with_capacity(atoms_per_layer);
        for n in 0..atoms_per_layer {
            let row = (n / side) as f64;
            let col = (n % side) as f64;
            atom_xy.push([(col - half) * pitch, (row - half) * pitch]);
        }
        let ant_half = (num_antennas as f64 - 1.0) / 2.0;
        let antenna_positions = (0..num_antennas)
            .map(|k| [0.0, (k as f64 - ant_half) * wavelength / 2.0, 0.0])
            .collect();
        Ok(Self {
            layers,
            atoms_per_layer,
            grid_side: side,
            atom_pitch: pitch,
            atom_size: (pitch, pitch),
            layer_spacing,
            wavelength,
            antenna_positions,
            atom_xy,
        })
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn atoms_per_layer(&self) -> usize {
        self.atoms_per_layer
    }

    pub fn grid_side(&self) -> usize {
        self.grid_side
    }

    pub fn atom_pitch(&self) -> f64 {
        self.atom_pitch
    }

    pub fn atom_size(&self) -> (f64, f64) {
        self.atom_size
    }

    pub fn layer_spacing(&self) -> f64 {
        self.layer_spacing
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    pub fn num_antennas(&self) -> usize {
        self.antenna_positions.len()
    }

    pub fn antenna_position(&self, k: usize) -> Result<Point> {
        self.antenna_positions
            .get(k)
            .copied()
            .ok_or(Error::IndexOutOfRange {
                what: "antenna",
                got: k,
                min: 0,
                max: self.antenna_positions.len() - 1,
            })
    }

    /// Position of atom `n` (0-based, row-major) on layer `m` (1-based).
    pub fn atom_position(&self, layer: usize, n: usize) -> Result<Point> {
        self.check_layer(layer)?;
        let xy = self.atom_xy.get(n).ok_or(Error::IndexOutOfRange {
            what: "atom",
            got: n,
            min: 0,
            max: self.atoms_per_layer - 1,
        })?;
        Ok([xy[0], xy[1], layer as f64 * self.layer_spacing])
    }

    fn check_layer(&self, layer: usize) -> Result<()> {
        if layer < 1 || layer > self.layers {
            return Err(Error::IndexOutOfRange {
                what: "layer",
                got: layer,
                min: 1,
                max: self.layers,
            });
        }
        Ok(())
    }
}

/// Per-atom phase shifts for the whole stack, each in `[0, 2π)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseConfig {
    phases: Array2<f64>,
}

impl PhaseConfig {
    /// Wraps an `M × N` phase matrix; every entry must lie in `[0, 2π)`.
    pub fn from_matrix(phases: Array2<f64>) -> Result<Self> {
        for &p in phases.iter() {
            if !(p.is_finite() && (0.0..2.0 * PI).contains(&p)) {
                return Err(Error::InvalidParameter(format!(
                    "phase {p} outside [0, 2*pi)"
                )));
            }
        }
        Ok(Self { phases })
    }

    /// All atoms on all layers at the same phase (wrapped into `[0, 2π)`).
    pub fn uniform(layers: usize, atoms_per_layer: usize, phase: f64) -> Self {
        let wrapped = phase.rem_euclid(2.0 * PI);
        Self {
            phases: Array2::from_elem((layers, atoms_per_layer), wrapped),
        }
    }

    pub fn zeros(layers: usize, atoms_per_layer: usize) -> Self {
        Self {
            phases: Array2::zeros((layers, atoms_per_layer)),
        }
    }

    pub fn layers(&self) -> usize {
        self.phases.nrows()
    }

    pub fn atoms_per_layer(&self) -> usize {
        self.phases.ncols()
    }

    /// Phase of atom `n` (0-based) on layer `m` (1-based).
    pub fn phase(&self, layer: usize, n: usize) -> f64 {
        self.phases[(layer - 1, n)]
    }

    pub fn phases(&self) -> &Array2<f64> {
        &self.phases
    }
}

/// Diagonal phase matrix of one layer: `diag(e^{jφ_m^1}, …, e^{jφ_m^N})`.
pub fn phase_matrix(config: &PhaseConfig, layer: usize) -> Result<Array2<Complex64>> {
    if layer < 1 || layer > config.layers() {
        return Err(Error::IndexOutOfRange {
            what: "layer",
            got: layer,
            min: 1,
            max: config.layers(),
        });
    }
    let n = config.atoms_per_layer();
    let mut out = Array2::zeros((n, n));
    for i in 0..n {
        out[(i, i)] = Complex64::cis(config.phase(layer, i));
    }
    Ok(out)
}

/// Diffraction coefficient between a source point and a target point on
/// parallel planes: `(d_x d_y cos χ / d)(1/(2πd) − j/λ) e^{j2πd/λ}` with
/// `cos χ` the normal distance over the full distance.
pub fn diffraction_coefficient(
    geom: &SimGeometry,
    source: Point,
    target: Point,
) -> Result<Complex64> {
    let d = dist(source, target);
    if d <= 0.0 {
        return Err(Error::CoincidentPoints);
    }
    let cos_chi = (target[2] - source[2]).abs() / d;
    let (dx, dy) = geom.atom_size;
    let amp = dx * dy * cos_chi / d;
    let lambda = geom.wavelength;
    let radial = Complex64::new(amp / (2.0 * PI * d), -amp / lambda);
    Ok(radial * Complex64::cis(2.0 * PI * d / lambda))
}

/// Inter-layer transmission matrix `W_m` for `2 ≤ m ≤ M`: the entry in row
/// `n'`, column `n` couples atom `n'` on layer `m−1` to atom `n` on layer `m`.
pub fn propagation_matrix(geom: &SimGeometry, layer: usize) -> Result<Array2<Complex64>> {
    if layer < 2 || layer > geom.layers {
        return Err(Error::IndexOutOfRange {
            what: "layer",
            got: layer,
            min: 2,
            max: geom.layers.max(2),
        });
    }
    let n = geom.atoms_per_layer;
    let mut w = Array2::zeros((n, n));
    // Relative coordinates: adjacent layers are exactly one spacing apart,
    // which keeps W_m bit-identical across m.
    for src in 0..n {
        let xy_src = geom.atom_xy[src];
        let p_src = [xy_src[0], xy_src[1], 0.0];
        for dst in 0..n {
            let xy_dst = geom.atom_xy[dst];
            let p_dst = [xy_dst[0], xy_dst[1], geom.layer_spacing];
            w[(src, dst)] = diffraction_coefficient(geom, p_src, p_dst)?;
        }
    }
    Ok(w)
}

/// Transmission vector from antenna `k` (0-based) to the atoms of layer 1.
pub fn input_vector(geom: &SimGeometry, antenna: usize) -> Result<Array1<Complex64>> {
    let ant = geom.antenna_position(antenna)?;
    let layer1_z = geom.layer_spacing;
    if (ant[2] - layer1_z).abs() == 0.0 {
        return Err(Error::InvalidGeometry(
            "antenna lies on the first layer plane".into(),
        ));
    }
    let mut v = Array1::zeros(geom.atoms_per_layer);
    for n in 0..geom.atoms_per_layer {
        let atom = geom.atom_position(1, n)?;
        v[n] = diffraction_coefficient(geom, ant, atom)?;
    }
    Ok(v)
}

fn check_dims(geom: &SimGeometry, config: &PhaseConfig) -> Result<()> {
    if config.layers() != geom.layers {
        return Err(Error::DimensionMismatch {
            context: "phase config layers vs geometry",
            expected: geom.layers,
            got: config.layers(),
        });
    }
    if config.atoms_per_layer() != geom.atoms_per_layer {
        return Err(Error::DimensionMismatch {
            context: "phase config atoms vs geometry",
            expected: geom.atoms_per_layer,
            got: config.atoms_per_layer(),
        });
    }
    Ok(())
}

/// Scales row `i` of `m` by `e^{jφ_i}` in place, i.e. left-multiplies by the
/// layer's diagonal phase matrix.
fn scale_rows(m: &mut Array2<Complex64>, config: &PhaseConfig, layer: usize) {
    for (i, mut row) in m.rows_mut().into_iter().enumerate() {
        let f = Complex64::cis(config.phase(layer, i));
        row.mapv_inplace(|v| v * f);
    }
}

/// Full cascade matrix `G = Φ_M W_M ⋯ Φ_2 W_2 Φ_1`, evaluated right-to-left.
pub fn beamforming_matrix(geom: &SimGeometry, config: &PhaseConfig) -> Result<Array2<Complex64>> {
    check_dims(geom, config)?;
    let mut acc = phase_matrix(config, 1)?;
    for m in 2..=geom.layers {
        let w = propagation_matrix(geom, m)?;
        acc = w.dot(&acc);
        scale_rows(&mut acc, config, m);
    }
    Ok(acc)
}

/// Precomputed diffraction operators for one geometry: the inter-layer
/// matrices and the per-antenna input vectors. Lets callers apply the cascade
/// to vectors in `O(M N²)` instead of forming `G` in `O(M N³)`.
#[derive(Debug, Clone)]
pub struct Cascade {
    layers: usize,
    atoms_per_layer: usize,
    /// `w_mats[i]` is the transmission matrix from layer `i+1` to layer `i+2`.
    w_mats: Vec<Array2<Complex64>>,
    input_vectors: Vec<Array1<Complex64>>,
}

impl Cascade {
    pub fn new(geom: &SimGeometry) -> Result<Self> {
        let w_mats = (2..=geom.layers)
            .map(|m| propagation_matrix(geom, m))
            .collect::<Result<Vec<_>>>()?;
        let input_vectors = (0..geom.num_antennas())
            .map(|k| input_vector(geom, k))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            layers: geom.layers,
            atoms_per_layer: geom.atoms_per_layer,
            w_mats,
            input_vectors,
        })
    }

    pub fn input_vector(&self, antenna: usize) -> &Array1<Complex64> {
        &self.input_vectors[antenna]
    }

    /// Applies `G` to a vector by propagating layer by layer.
    pub fn apply(&self, config: &PhaseConfig, v: &Array1<Complex64>) -> Result<Array1<Complex64>> {
        if v.len() != self.atoms_per_layer {
            return Err(Error::DimensionMismatch {
                context: "cascade apply input length",
                expected: self.atoms_per_layer,
                got: v.len(),
            });
        }
        if config.layers() != self.layers || config.atoms_per_layer() != self.atoms_per_layer {
            return Err(Error::DimensionMismatch {
                context: "phase config vs cascade",
                expected: self.layers * self.atoms_per_layer,
                got: config.layers() * config.atoms_per_layer(),
            });
        }
        let mut x: Array1<Complex64> = v
            .iter()
            .enumerate()
            .map(|(n, &vn)| vn * Complex64::cis(config.phase(1, n)))
            .collect();
        for m in 2..=self.layers {
            // W_m as defined has rows indexed by the source layer, so the
            // forward hop applies the transpose: x'_n = Σ_{n'} W[n', n] x_{n'}.
            let w = &self.w_mats[m - 2];
            let mut next = Array1::zeros(self.atoms_per_layer);
            for dst in 0..self.atoms_per_layer {
                let mut acc = Complex64::new(0.0, 0.0);
                for src in 0..self.atoms_per_layer {
                    acc += w[(src, dst)] * x[src];
                }
                next[dst] = acc * Complex64::cis(config.phase(m, dst));
            }
            x = next;
        }
        Ok(x)
    }

    /// `G · w_k` for antenna `k`; the end-to-end user channel is then the
    /// Hermitian inner product of this vector with the user's stack channel.
    pub fn propagated_input(
        &self,
        config: &PhaseConfig,
        antenna: usize,
    ) -> Result<Array1<Complex64>> {
        self.apply(config, &self.input_vectors[antenna])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array1;

    fn geom(m: usize, n: usize, k: usize) -> SimGeometry {
        SimGeometry::new(m, n, k, 0.0857).unwrap()
    }

    fn rand_phases(m: usize, n: usize, seed: u64) -> PhaseConfig {
        use rand::Rng;
        let mut rng = crate::rng::substream(seed, &[99]);
        let phases = Array2::from_shape_fn((m, n), |_| rng.random_range(0.0..2.0 * PI - 1e-9));
        PhaseConfig::from_matrix(phases).unwrap()
    }

    #[test]
    fn geometry_rejects_bad_inputs() {
        assert!(SimGeometry::new(0, 16, 2, 0.0857).is_err());
        assert!(SimGeometry::new(4, 15, 2, 0.0857).is_err());
        assert!(SimGeometry::new(4, 16, 0, 0.0857).is_err());
        assert!(SimGeometry::new(4, 16, 2, 0.0).is_err());
    }

    #[test]
    fn layer_spacing_is_thickness_over_layers() {
        let g = geom(4, 16, 2);
        assert!((g.layer_spacing() - 5.0 * 0.0857 / 4.0).abs() < 1e-15);
        // All inter-layer atom distances are at least the layer spacing.
        let mut min_d = f64::INFINITY;
        for a in 0..16 {
            for b in 0..16 {
                let p = g.atom_position(1, a).unwrap();
                let q = g.atom_position(2, b).unwrap();
                min_d = min_d.min(dist(p, q));
            }
        }
        assert!(min_d >= g.layer_spacing());
    }

    #[test]
    fn phase_matrix_zero_is_identity() {
        let cfg = PhaseConfig::zeros(2, 9);
        let p = phase_matrix(&cfg, 1).unwrap();
        for i in 0..9 {
            for j in 0..9 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_eq!(p[(i, j)], Complex64::new(expect, 0.0));
            }
        }
    }

    #[test]
    fn phase_matrix_pi_is_negative_identity() {
        let cfg = PhaseConfig::uniform(1, 4, PI);
        let p = phase_matrix(&cfg, 1).unwrap();
        for i in 0..4 {
            assert!((p[(i, i)] - Complex64::new(-1.0, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn phase_matrix_unit_modulus() {
        let cfg = rand_phases(3, 16, 5);
        for m in 1..=3 {
            let p = phase_matrix(&cfg, m).unwrap();
            for i in 0..16 {
                assert!((p[(i, i)].norm() - 1.0).abs() < 1e-12);
                for j in 0..16 {
                    if i != j {
                        assert_eq!(p[(i, j)], Complex64::new(0.0, 0.0));
                    }
                }
            }
        }
        assert!(phase_matrix(&cfg, 0).is_err());
        assert!(phase_matrix(&cfg, 4).is_err());
    }

    // Frozen reference values computed with 60-digit arithmetic from the
    // coefficient formula; wavelength 0.0857 m, layer spacing 5λ/4, atom size
    // λ/2, lateral offsets in grid pitches (λ/2).
    const ONAXIS_RE: f64 = 0.2;
    const ONAXIS_IM: f64 = 0.025464790894703253723;
    const OFFSET_ABS: [f64; 6] = [
        0.20161462143235287125,
        0.17361438331138439139,
        0.12255248080778617166,
        0.082239057902759370207,
        0.056307544624941152132,
        0.040064793080739699409,
    ];

    #[test]
    fn diffraction_matches_high_precision_reference() {
        let g = geom(4, 16, 2); // spacing 5λ/4
        let lam = g.wavelength();
        let src = [0.0, 0.0, 0.0];
        let on = diffraction_coefficient(&g, src, [0.0, 0.0, g.layer_spacing()]).unwrap();
        assert!((on.re - ONAXIS_RE).abs() / ONAXIS_RE < 1e-12);
        assert!((on.im - ONAXIS_IM).abs() / ONAXIS_IM < 1e-12);
        for (k, &expect) in OFFSET_ABS.iter().enumerate() {
            let tgt = [k as f64 * lam / 2.0, 0.0, g.layer_spacing()];
            let w = diffraction_coefficient(&g, src, tgt).unwrap();
            assert!(
                (w.norm() - expect).abs() / expect < 1e-12,
                "offset {k}: {} vs {expect}",
                w.norm()
            );
        }
        // Magnitude strictly decreases with lateral offset.
        for k in 1..OFFSET_ABS.len() {
            assert!(OFFSET_ABS[k] < OFFSET_ABS[k - 1]);
        }
    }

    #[test]
    fn diffraction_second_reference_case() {
        // Exact 3.5 GHz wavelength, two layers (spacing 5λ/2), diagonal
        // offset √5 pitches.
        let lam = 299_792_458.0 / 3.5e9;
        let g = SimGeometry::new(2, 16, 2, lam).unwrap();
        let src = [0.0, 0.0, 0.0];
        let tgt = [lam / 2.0, lam, g.layer_spacing()];
        let w = diffraction_coefficient(&g, src, tgt).unwrap();
        let expect = Complex64::new(-0.083466334284321453782, 0.0011267046096182926862);
        assert!((w - expect).norm() / expect.norm() < 1e-12);
    }

    #[test]
    fn diffraction_rejects_coincident_points() {
        let g = geom(2, 4, 1);
        let p = [0.1, 0.2, 0.3];
        assert!(matches!(
            diffraction_coefficient(&g, p, p),
            Err(Error::CoincidentPoints)
        ));
    }

    #[test]
    fn diffraction_reciprocity_and_mirror_symmetry() {
        let g = geom(3, 16, 2);
        let a = [0.01, -0.02, 0.0];
        let b = [-0.03, 0.04, g.layer_spacing()];
        // Swapping source and target keeps the same normal distance.
        let ab = diffraction_coefficient(&g, a, b).unwrap();
        let ba = diffraction_coefficient(&g, b, a).unwrap();
        assert!((ab - ba).norm() < 1e-16);
        // Mirror-image targets have equal coefficients.
        let m1 = diffraction_coefficient(&g, [0.0; 3], [0.05, 0.01, 0.2]).unwrap();
        let m2 = diffraction_coefficient(&g, [0.0; 3], [-0.05, -0.01, 0.2]).unwrap();
        assert!((m1 - m2).norm() < 1e-16);
    }

    #[test]
    fn propagation_matrix_is_complex_symmetric_and_layer_independent() {
        let g = geom(4, 9, 2);
        let w2 = propagation_matrix(&g, 2).unwrap();
        for a in 0..9 {
            for b in 0..9 {
                assert!((w2[(a, b)] - w2[(b, a)]).norm() < 1e-16);
            }
        }
        for m in 3..=4 {
            let wm = propagation_matrix(&g, m).unwrap();
            for (x, y) in w2.iter().zip(wm.iter()) {
                assert_eq!(x, y);
            }
        }
        assert!(propagation_matrix(&g, 1).is_err());
        assert!(propagation_matrix(&g, 5).is_err());
    }

    #[test]
    fn propagation_matrix_degenerate_single_atom() {
        let g = geom(2, 1, 1);
        let w = propagation_matrix(&g, 2).unwrap();
        let expect = diffraction_coefficient(
            &g,
            g.atom_position(1, 0).unwrap(),
            g.atom_position(2, 0).unwrap(),
        )
        .unwrap();
        assert_eq!(w.dim(), (1, 1));
        assert_eq!(w[(0, 0)], expect);
    }

    #[test]
    fn input_vector_matches_direct_coefficient_and_symmetries() {
        let g = geom(2, 16, 2);
        let v = input_vector(&g, 0).unwrap();
        for n in 0..16 {
            let direct = diffraction_coefficient(
                &g,
                g.antenna_position(0).unwrap(),
                g.atom_position(1, n).unwrap(),
            )
            .unwrap();
            assert_eq!(v[n], direct);
        }
        // Single centered antenna: 4-fold mirror symmetry of the grid.
        let gc = geom(2, 16, 1);
        let vc = input_vector(&gc, 0).unwrap();
        let side = gc.grid_side();
        for r in 0..side {
            for c in 0..side {
                let n = r * side + c;
                let col_flip = r * side + (side - 1 - c);
                let row_flip = (side - 1 - r) * side + c;
                assert!((vc[n] - vc[col_flip]).norm() < 1e-16);
                assert!((vc[n] - vc[row_flip]).norm() < 1e-16);
            }
        }
        // Two antennas symmetric about the grid center: row-flip permutation.
        let v0 = input_vector(&g, 0).unwrap();
        let v1 = input_vector(&g, 1).unwrap();
        for r in 0..side {
            for c in 0..side {
                let n = r * side + c;
                let flipped = (side - 1 - r) * side + c;
                assert!((v0[n] - v1[flipped]).norm() < 1e-16);
            }
        }
    }

    /// Naive sequential propagation used as an independent oracle: applies
    /// each phase layer and each diffraction hop with explicit scalar loops.
    fn sequential_oracle(
        g: &SimGeometry,
        cfg: &PhaseConfig,
        v: &Array1<Complex64>,
    ) -> Array1<Complex64> {
        let n = g.atoms_per_layer();
        let mut x: Vec<Complex64> = (0..n)
            .map(|i| v[i] * Complex64::cis(cfg.phase(1, i)))
            .collect();
        for m in 2..=g.layers() {
            let mut next = vec![Complex64::new(0.0, 0.0); n];
            for (dst, slot) in next.iter_mut().enumerate() {
                let p_dst = g.atom_position(m, dst).unwrap();
                let mut acc = Complex64::new(0.0, 0.0);
                for (src, &xs) in x.iter().enumerate() {
                    let p_src = g.atom_position(m - 1, src).unwrap();
                    acc += diffraction_coefficient(g, p_src, p_dst).unwrap() * xs;
                }
                *slot = acc * Complex64::cis(cfg.phase(m, dst));
            }
            next.clone_into(&mut x);
        }
        Array1::from_vec(x)
    }

    #[test]
    fn beamforming_single_layer_is_phase_matrix() {
        let g = geom(1, 9, 2);
        let cfg = rand_phases(1, 9, 11);
        let gm = beamforming_matrix(&g, &cfg).unwrap();
        let pm = phase_matrix(&cfg, 1).unwrap();
        assert_eq!(gm, pm);
    }

    #[test]
    fn beamforming_zero_phases_is_propagation_product() {
        let g = geom(3, 4, 1);
        let cfg = PhaseConfig::zeros(3, 4);
        let gm = beamforming_matrix(&g, &cfg).unwrap();
        let w2 = propagation_matrix(&g, 2).unwrap();
        let w3 = propagation_matrix(&g, 3).unwrap();
        let expect = w3.dot(&w2);
        for (a, b) in gm.iter().zip(expect.iter()) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn beamforming_matches_sequential_oracle() {
        use rand::Rng;
        let mut rng = crate::rng::substream(3, &[7]);
        for &(m, n) in &[(2, 4), (3, 9), (4, 16)] {
            let g = geom(m, n, 1);
            let cfg = rand_phases(m, n, 100 + m as u64);
            let gm = beamforming_matrix(&g, &cfg).unwrap();
            let v: Array1<Complex64> = (0..n)
                .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect();
            let via_matrix = gm.dot(&v);
            let oracle = sequential_oracle(&g, &cfg, &v);
            let cascade = Cascade::new(&g).unwrap().apply(&cfg, &v).unwrap();
            for i in 0..n {
                assert!((via_matrix[i] - oracle[i]).norm() / oracle[i].norm() < 1e-10);
                assert!((cascade[i] - oracle[i]).norm() / oracle[i].norm() < 1e-10);
            }
        }
    }

    #[test]
    fn beamforming_phase_homogeneity() {
        let g = geom(3, 9, 1);
        let cfg = rand_phases(3, 9, 21);
        let g0 = beamforming_matrix(&g, &cfg).unwrap();
        // Add a constant phase to every atom of layer 2.
        let c = 0.731;
        let mut shifted = cfg.phases().clone();
        for v in shifted.row_mut(1).iter_mut() {
            *v = (*v + c).rem_euclid(2.0 * PI);
        }
        let cfg2 = PhaseConfig::from_matrix(shifted).unwrap();
        let g1 = beamforming_matrix(&g, &cfg2).unwrap();
        let factor = Complex64::cis(c);
        for (a, b) in g0.iter().zip(g1.iter()) {
            assert!((a * factor - b).norm() < 1e-12);
        }
    }

    #[test]
    fn beamforming_associativity() {
        let g = geom(4, 9, 1);
        let cfg = rand_phases(4, 9, 31);
        let right_to_left = beamforming_matrix(&g, &cfg).unwrap();
        // Group the product left-to-right instead.
        let mut mats: Vec<Array2<Complex64>> = vec![phase_matrix(&cfg, 1).unwrap()];
        for m in 2..=4 {
            mats.push(propagation_matrix(&g, m).unwrap());
            mats.push(phase_matrix(&cfg, m).unwrap());
        }
        let mut acc = mats.pop().unwrap();
        while let Some(m) = mats.pop() {
            acc = acc.dot(&m);
        }
        for (a, b) in right_to_left.iter().zip(acc.iter()) {
            assert!((a - b).norm() / b.norm().max(1e-30) < 1e-10);
        }
    }

    #[test]
    fn beamforming_rejects_dimension_mismatch() {
        let g = geom(3, 9, 1);
        let cfg = PhaseConfig::zeros(2, 9);
        assert!(beamforming_matrix(&g, &cfg).is_err());
        let cfg = PhaseConfig::zeros(3, 4);
        assert!(beamforming_matrix(&g, &cfg).is_err());
    }

    #[test]
    fn input_vector_rejects_antenna_on_layer_plane() {
        let mut g = geom(2, 4, 1);
        g.antenna_positions[0][2] = g.layer_spacing();
        assert!(input_vector(&g, 0).is_err());
    }
}
