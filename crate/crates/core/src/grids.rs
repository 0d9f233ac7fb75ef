//! Frequency, reciprocal-space and time discretizations.
//!
//! Reciprocal space is a Cartesian lattice of `n` nodes per axis spanning
//! `[-extent, extent]`, nodes at cell midpoints: coordinate
//! `(j - (n-1)/2)·Δ` with `Δ = 2·extent/n`. Even counts never place a node on
//! a coordinate plane; odd counts give a lattice closed under `k₁ + k₂`
//! (within the box), which the homogeneous rank-3 terms need.
//!
//! The independent half grid keeps every node with `k_z > 0`, the nodes of the
//! `k_z = 0` plane that are lexicographically positive (`k_y > 0`, or
//! `k_y = 0` and `k_x > 0`), and the origin. Every other node is the mirror
//! `-k` of exactly one half-grid node; the origin is its own mirror and is
//! flagged as self-paired (half weight, real-valued fields).

use crate::linalg::{cross, norm, scale, CVec3, Vec3, C64};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// Quadrature rule for the oscillator-frequency axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuadratureRule {
    UniformMidpoint,
    GaussLegendre,
    /// Nodes `iΔ`, `i = 1..n`, weights `Δ`. Closed under differences, which
    /// the frequency convolutions of the field solver require.
    Harmonic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyGrid {
    pub omega_max: f64,
    pub rule: QuadratureRule,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

pub fn build_frequency_grid(omega_max: f64, n_omega: usize, rule: QuadratureRule) -> Result<FrequencyGrid> {
    if !(omega_max.is_finite() && omega_max > 0.0) {
        return Err(Error::Config(format!("omega_max must be positive, got {omega_max}")));
    }
    if n_omega == 0 {
        return Err(Error::Config("n_omega must be at least 1".into()));
    }
    let (nodes, weights) = match rule {
        QuadratureRule::UniformMidpoint => {
            let d = omega_max / n_omega as f64;
            ((0..n_omega).map(|i| (i as f64 + 0.5) * d).collect(), vec![d; n_omega])
        }
        QuadratureRule::Harmonic => {
            let d = omega_max / n_omega as f64;
            ((1..=n_omega).map(|i| i as f64 * d).collect(), vec![d; n_omega])
        }
        QuadratureRule::GaussLegendre => {
            let (x, w) = gauss_legendre(n_omega);
            let half = 0.5 * omega_max;
            (x.iter().map(|&x| half * (x + 1.0)).collect(), w.iter().map(|&w| half * w).collect())
        }
    };
    Ok(FrequencyGrid {
        omega_max,
        rule,
        nodes,
        weights,
    })
}

impl FrequencyGrid {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Node spacing for the harmonic rule.
    pub fn harmonic_spacing(&self) -> Result<f64> {
        match self.rule {
            QuadratureRule::Harmonic => Ok(self.omega_max / self.len() as f64),
            other => Err(Error::UnsupportedGrid(format!(
                "operation needs a harmonic frequency grid, got {other:?}"
            ))),
        }
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

/// Gauss–Legendre nodes and weights on [-1, 1].
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        if d != 0.0 {
            dp = d;
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, z);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Reciprocal-space lattice with the half-space bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct KGrid {
    pub extent: [f64; 3],
    pub counts: [usize; 3],
    pub spacing: [f64; 3],
    pub half_nodes: Vec<Vec3>,
    pub weights: Vec<f64>,
    pub self_paired: Vec<bool>,
    /// Doubled integer lattice coordinates `2j - (n-1)` of every full-grid node.
    full_lattice: Vec<[i64; 3]>,
    full_of_half: Vec<usize>,
    /// For each full node: (half index, whether the value is the conjugate mirror).
    half_of_full: Vec<(usize, bool)>,
    mirror: Vec<usize>,
    lookup: HashMap<[i64; 3], usize>,
}

pub fn build_kgrid(extent: [f64; 3], counts: [usize; 3]) -> Result<KGrid> {
    for a in 0..3 {
        if counts[a] == 0 {
            return Err(Error::Config(format!("k-grid count along axis {a} must be at least 1")));
        }
        if !(extent[a].is_finite() && extent[a] > 0.0) {
            return Err(Error::Config(format!(
                "k-grid extent along axis {a} must be positive, got {}",
                extent[a]
            )));
        }
    }
    let spacing = [0, 1, 2].map(|a| 2.0 * extent[a] / counts[a] as f64);
    let mut full_lattice = Vec::with_capacity(counts.iter().product());
    for ix in 0..counts[0] {
        for iy in 0..counts[1] {
            for iz in 0..counts[2] {
                let m = |j: usize, n: usize| 2 * j as i64 - (n as i64 - 1);
                full_lattice.push([m(ix, counts[0]), m(iy, counts[1]), m(iz, counts[2])]);
            }
        }
    }
    let lookup: HashMap<[i64; 3], usize> = full_lattice.iter().enumerate().map(|(i, &m)| (m, i)).collect();
    let mirror: Vec<usize> = full_lattice.iter().map(|m| lookup[&[-m[0], -m[1], -m[2]]]).collect();

    let is_half = |m: &[i64; 3]| m[2] > 0 || (m[2] == 0 && (m[1] > 0 || (m[1] == 0 && m[0] >= 0)));
    let cell = spacing.iter().product::<f64>();
    let mut half_nodes = Vec::new();
    let mut weights = Vec::new();
    let mut self_paired = Vec::new();
    let mut full_of_half = Vec::new();
    let mut half_of_full = vec![(usize::MAX, false); full_lattice.len()];
    for (f, m) in full_lattice.iter().enumerate() {
        if is_half(m) {
            let h = half_nodes.len();
            let origin = *m == [0, 0, 0];
            half_nodes.push([0, 1, 2].map(|a| 0.5 * m[a] as f64 * spacing[a]));
            weights.push(if origin { 0.5 * cell } else { cell });
            self_paired.push(origin);
            full_of_half.push(f);
            half_of_full[f] = (h, false);
        }
    }
    for f in 0..full_lattice.len() {
        if half_of_full[f].0 == usize::MAX {
            let (h, _) = half_of_full[mirror[f]];
            half_of_full[f] = (h, true);
        }
    }
    Ok(KGrid {
        extent,
        counts,
        spacing,
        half_nodes,
        weights,
        self_paired,
        full_lattice,
        full_of_half,
        half_of_full,
        mirror,
        lookup,
    })
}

impl KGrid {
    pub fn half_len(&self) -> usize {
        self.half_nodes.len()
    }

    pub fn full_len(&self) -> usize {
        self.full_lattice.len()
    }

    /// Volume of one reciprocal-space cell; the quadrature weight of a full-grid node.
    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    pub fn box_volume(&self) -> f64 {
        8.0 * self.extent.iter().product::<f64>()
    }

    pub fn full_node(&self, f: usize) -> Vec3 {
        let m = self.full_lattice[f];
        [0, 1, 2].map(|a| 0.5 * m[a] as f64 * self.spacing[a])
    }

    pub fn full_nodes(&self) -> Vec<Vec3> {
        (0..self.full_len()).map(|f| self.full_node(f)).collect()
    }

    pub fn full_of_half(&self, h: usize) -> usize {
        self.full_of_half[h]
    }

    /// Half-grid representative of a full node and whether the full node is its mirror.
    pub fn half_of_full(&self, f: usize) -> (usize, bool) {
        self.half_of_full[f]
    }

    pub fn mirror(&self, f: usize) -> usize {
        self.mirror[f]
    }

    pub fn lattice(&self, f: usize) -> [i64; 3] {
        self.full_lattice[f]
    }

    /// Full index of `k_a + k_b`, if that node exists.
    pub fn sum_index(&self, a: usize, b: usize) -> Option<usize> {
        let (ma, mb) = (self.full_lattice[a], self.full_lattice[b]);
        self.lookup.get(&[ma[0] + mb[0], ma[1] + mb[1], ma[2] + mb[2]]).copied()
    }

    /// Full index of `k_a - k_b`, if that node exists.
    pub fn difference_index(&self, a: usize, b: usize) -> Option<usize> {
        self.sum_index(a, self.mirror[b])
    }

    /// True when every pairwise sum of interior nodes can land on the lattice.
    pub fn is_sum_closed(&self) -> bool {
        self.counts.iter().all(|n| n % 2 == 1)
    }

    pub fn origin_half_index(&self) -> Option<usize> {
        self.self_paired.iter().position(|&s| s)
    }
}

/// Orthonormal polarization triad with `e3 = k̂`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triad {
    pub e: [Vec3; 3],
}

/// Triad for direction `k`: `e1 = normalize(ẑ × k̂)` (or `x̂` when `k̂ ∥ ẑ`),
/// `e2 = e3 × e1`, `e3 = k̂`.
pub fn build_triad(k: Vec3) -> Result<Triad> {
    let kn = norm(k);
    if kn == 0.0 || !kn.is_finite() {
        return Err(Error::DegenerateDirection);
    }
    let e3 = scale(k, 1.0 / kn);
    let zx = cross([0.0, 0.0, 1.0], e3);
    let zn = norm(zx);
    let e1 = if zn < 1e-12 { [1.0, 0.0, 0.0] } else { scale(zx, 1.0 / zn) };
    let e2 = cross(e3, e1);
    Ok(Triad { e: [e1, e2, e3] })
}

/// [`build_triad`] with the Cartesian axes as the fallback at `k = 0`.
pub fn triad_or_cartesian(k: Vec3) -> Triad {
    build_triad(k).unwrap_or(Triad {
        e: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    })
}

/// Imaginary parts on self-paired nodes at or below this are discarded.
pub const REALITY_TOLERANCE: f64 = 1e-10;

/// Extend a half-grid field to the full grid using `v(-k) = conj(v(k))`.
pub fn mirror_extend(grid: &KGrid, half: &[CVec3]) -> Result<Vec<CVec3>> {
    if half.len() != grid.half_len() {
        return Err(Error::Shape(format!(
            "half-grid field has {} nodes, grid has {}",
            half.len(),
            grid.half_len()
        )));
    }
    for (h, v) in half.iter().enumerate() {
        if grid.self_paired[h] {
            let im = v.0.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
            if im > REALITY_TOLERANCE {
                return Err(Error::Reality(format!(
                    "self-paired node {:?} carries imaginary part {im:.3e}",
                    grid.half_nodes[h]
                )));
            }
        }
    }
    Ok((0..grid.full_len())
        .map(|f| {
            let (h, conj) = grid.half_of_full(f);
            let v = half[h];
            if grid.self_paired[h] {
                CVec3(v.0.map(|z| C64::new(z.re, 0.0)))
            } else if conj {
                v.conj()
            } else {
                v
            }
        })
        .collect())
}

/// Restrict a full-grid field to the half grid.
pub fn restrict_to_half(grid: &KGrid, full: &[CVec3]) -> Vec<CVec3> {
    (0..grid.half_len()).map(|h| full[grid.full_of_half(h)]).collect()
}

/// Sample times. Uniform grids carry their spacing.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    pub nodes: Vec<f64>,
    dt: Option<f64>,
}

impl TimeGrid {
    /// `t_m = (m - n_neg)·dt`, `m = 0..n_neg + n_pos`.
    pub fn uniform(dt: f64, n_neg: usize, n_pos: usize) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::Config(format!("time step must be positive, got {dt}")));
        }
        if n_pos == 0 {
            return Err(Error::Config("time grid needs at least one non-negative sample".into()));
        }
        Ok(Self {
            nodes: (0..n_neg + n_pos).map(|m| (m as f64 - n_neg as f64) * dt).collect(),
            dt: Some(dt),
        })
    }

    /// `n` samples `t_m = m·period/n` on one period.
    pub fn periodic(period: f64, n: usize) -> Result<Self> {
        Self::uniform(period / n as f64, 0, n)
    }

    /// Arbitrary sample times; uniformity is detected.
    pub fn from_nodes(nodes: Vec<f64>) -> Self {
        let dt = if nodes.len() >= 2 {
            let d = nodes[1] - nodes[0];
            let uniform = d > 0.0
                && nodes
                    .windows(2)
                    .all(|w| ((w[1] - w[0]) - d).abs() <= 1e-12 * d.abs().max(1.0));
            uniform.then_some(d)
        } else {
            None
        };
        Self { nodes, dt }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn dt(&self) -> Result<f64> {
        self.dt
            .ok_or_else(|| Error::UnsupportedGrid("operation needs a uniform time grid".into()))
    }

    /// Index of the first sample with `t >= 0`.
    pub fn zero_index(&self) -> usize {
        self.nodes.iter().position(|&t| t >= -1e-12 * self.dt.unwrap_or(1.0)).unwrap_or(self.nodes.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::dot;
    use proptest::prelude::*;

    #[test]
    fn midpoint_single_cell() {
        let g = build_frequency_grid(1.0, 1, QuadratureRule::UniformMidpoint).unwrap();
        assert_eq!(g.nodes, vec![0.5]);
        assert_eq!(g.weights, vec![1.0]);
    }

    #[test]
    fn midpoint_uniform_partition() {
        let g = build_frequency_grid(2.0, 4, QuadratureRule::UniformMidpoint).unwrap();
        assert_eq!(g.nodes, vec![0.25, 0.75, 1.25, 1.75]);
        assert_eq!(g.weights, vec![0.5; 4]);
    }

    #[test]
    fn gauss_legendre_integrates_quadratic() {
        let g = build_frequency_grid(1.0, 8, QuadratureRule::GaussLegendre).unwrap();
        assert!((g.integrate(|w| w * w) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn gauss_legendre_exact_to_degree_2n_minus_1() {
        for n in 1..=12 {
            let g = build_frequency_grid(2.0, n, QuadratureRule::GaussLegendre).unwrap();
            for deg in 0..2 * n {
                let exact = 2f64.powi(deg as i32 + 1) / (deg as f64 + 1.0);
                let got = g.integrate(|w| w.powi(deg as i32));
                assert!((got - exact).abs() < 1e-12 * exact.max(1.0), "n={n} deg={deg}");
            }
            assert!(g.nodes.windows(2).all(|w| w[1] > w[0]));
            assert!(g.weights.iter().all(|&w| w > 0.0));
        }
    }

    #[test]
    fn harmonic_grid_weights_sum_to_omega_max() {
        let g = build_frequency_grid(3.0, 6, QuadratureRule::Harmonic).unwrap();
        assert_eq!(g.nodes[0], 0.5);
        assert!((g.weights.iter().sum::<f64>() - 3.0).abs() < 1e-14);
        assert_eq!(g.harmonic_spacing().unwrap(), 0.5);
    }

    #[test]
    fn frequency_grid_rejects_bad_input() {
        assert!(build_frequency_grid(0.0, 4, QuadratureRule::UniformMidpoint).is_err());
        assert!(build_frequency_grid(1.0, 0, QuadratureRule::UniformMidpoint).is_err());
    }

    #[test]
    fn single_cell_kgrid_is_self_paired_origin() {
        let g = build_kgrid([1.0; 3], [1, 1, 1]).unwrap();
        assert_eq!(g.half_len(), 1);
        assert_eq!(g.half_nodes[0], [0.0, 0.0, 0.0]);
        assert!(g.self_paired[0]);
        assert!((g.weights[0] - 0.5 * g.box_volume()).abs() < 1e-12);
    }

    #[test]
    fn two_per_axis_gives_four_half_nodes() {
        let g = build_kgrid([1.0; 3], [2, 2, 2]).unwrap();
        assert_eq!(g.half_len(), 4);
        assert_eq!(g.full_len(), 8);
        assert!(g.half_nodes.iter().all(|k| k[2] > 0.0));
        assert!(g.half_nodes.iter().all(|k| k[2] == 0.5));
    }

    #[test]
    fn kgrid_rejects_zero_count() {
        assert!(build_kgrid([1.0; 3], [2, 0, 2]).is_err());
    }

    #[test]
    fn axis_aligned_triad() {
        let t = build_triad([0.0, 0.0, 2.0]).unwrap();
        assert_eq!(t.e, [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
        assert!(matches!(build_triad([0.0; 3]), Err(Error::DegenerateDirection)));
    }

    #[test]
    fn diagonal_triad_is_orthonormal() {
        let s = 1.0 / 3f64.sqrt();
        let t = build_triad([s, s, s]).unwrap();
        for a in 0..3 {
            for b in 0..3 {
                let expect = if a == b { 1.0 } else { 0.0 };
                assert!((dot(t.e[a], t.e[b]) - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mirror_extend_rejects_complex_self_paired_node() {
        let g = build_kgrid([1.0; 3], [3, 3, 3]).unwrap();
        let mut half = vec![CVec3::from_real([1.0, 2.0, 3.0]); g.half_len()];
        let o = g.origin_half_index().unwrap();
        half[o].0[1] = C64::new(1.0, 1e-6);
        assert!(matches!(mirror_extend(&g, &half), Err(Error::Reality(_))));
        half[o].0[1] = C64::new(1.0, 1e-13);
        let full = mirror_extend(&g, &half).unwrap();
        assert_eq!(full[g.full_of_half(o)].0[1].im, 0.0);
    }

    #[test]
    fn time_grid_uniformity_detection() {
        assert!(TimeGrid::from_nodes(vec![0.0, 0.1, 0.2]).dt().is_ok());
        assert!(TimeGrid::from_nodes(vec![0.0, 0.1, 0.25]).dt().is_err());
        let g = TimeGrid::uniform(0.5, 2, 3).unwrap();
        assert_eq!(g.nodes, vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
        assert_eq!(g.zero_index(), 2);
    }

    proptest! {
        #[test]
        fn kgrid_tiles_box_once(nx in 1usize..6, ny in 1usize..6, nz in 1usize..6,
                                ex in 0.1f64..3.0, ey in 0.1f64..3.0, ez in 0.1f64..3.0) {
            let g = build_kgrid([ex, ey, ez], [nx, ny, nz]).unwrap();
            let total: f64 = g.weights.iter().sum();
            prop_assert!((total - 0.5 * g.box_volume()).abs() < 1e-12 * g.box_volume());
            prop_assert!(g.half_nodes.iter().all(|k| k[2] >= 0.0));
            prop_assert!(g.weights.iter().all(|&w| w > 0.0));
            let mut seen = vec![0usize; g.full_len()];
            for h in 0..g.half_len() {
                let f = g.full_of_half(h);
                seen[f] += 1;
                if !g.self_paired[h] {
                    seen[g.mirror(f)] += 1;
                }
            }
            prop_assert!(seen.iter().all(|&c| c == 1));
        }

        #[test]
        fn triad_complete_and_deterministic(x in -5.0f64..5.0, y in -5.0f64..5.0, z in -5.0f64..5.0) {
            prop_assume!(norm([x, y, z]) > 1e-6);
            let t = build_triad([x, y, z]).unwrap();
            prop_assert_eq!(t, build_triad([x, y, z]).unwrap());
            for i in 0..3 {
                for j in 0..3 {
                    let s: f64 = (0..3).map(|l| t.e[l][i] * t.e[l][j]).sum();
                    let id = if i == j { 1.0 } else { 0.0 };
                    prop_assert!((s - id).abs() < 1e-12);
                }
            }
            let c = cross(t.e[0], t.e[1]);
            for a in 0..3 {
                prop_assert!((c[a] - t.e[2][a]).abs() < 1e-12);
            }
        }

        #[test]
        fn mirror_extend_restricts_to_identity(seed in 0u64..1000) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let g = build_kgrid([1.0, 1.5, 2.0], [3, 4, 3]).unwrap();
            let half: Vec<CVec3> = (0..g.half_len()).map(|h| {
                let mut v = CVec3([0; 3].map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))));
                if g.self_paired[h] { v = CVec3(v.0.map(|z| C64::new(z.re, 0.0))); }
                v
            }).collect();
            let full = mirror_extend(&g, &half).unwrap();
            prop_assert_eq!(restrict_to_half(&g, &full), half);
            for f in 0..g.full_len() {
                prop_assert_eq!(full[g.mirror(f)], full[f].conj());
            }
        }
    }
}
