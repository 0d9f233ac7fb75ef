//! Field containers over the half k grid and the transforms between them.
//!
//! A [`Spectrum`] stores `Ẽ(k, ±ω_b)` for every half-grid node; values at
//! the mirrored node follow from `Ẽ(-k, ω) = conj Ẽ(k, -ω)`. A
//! [`TimeField`] stores `E(k, t_m)` for every half-grid node, with
//! `E(-k, t) = conj E(k, t)`.

use crate::grids::{FrequencyGrid, KGrid, TimeGrid};
use crate::linalg::{CVec3, C64};
use crate::par::map_range;
use crate::units::Conventions;
use crate::{Error, Result};
use std::sync::Arc;

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub kgrid: Arc<KGrid>,
    pub omega: Arc<FrequencyGrid>,
    /// `[h][s]` with `s = b` for `+ω_b` and `s = n_ω + b` for `-ω_b`.
    pub data: Vec<CVec3>,
}

impl Spectrum {
    pub fn zeros(kgrid: Arc<KGrid>, omega: Arc<FrequencyGrid>) -> Self {
        let n = kgrid.half_len() * 2 * omega.len();
        Self {
            kgrid,
            omega,
            data: vec![CVec3::ZERO; n],
        }
    }

    pub fn n_omega(&self) -> usize {
        self.omega.len()
    }

    #[inline]
    pub fn index(&self, h: usize, b: usize, negative: bool) -> usize {
        let n = self.n_omega();
        h * 2 * n + if negative { n + b } else { b }
    }

    #[inline]
    pub fn get(&self, h: usize, b: usize, negative: bool) -> CVec3 {
        self.data[self.index(h, b, negative)]
    }

    pub fn set(&mut self, h: usize, b: usize, negative: bool, v: CVec3) {
        let i = self.index(h, b, negative);
        self.data[i] = v;
    }

    /// Value at a full-grid node.
    #[inline]
    pub fn at_full(&self, f: usize, b: usize, negative: bool) -> CVec3 {
        let (h, mirrored) = self.kgrid.half_of_full(f);
        if mirrored {
            self.get(h, b, !negative).conj()
        } else {
            self.get(h, b, negative)
        }
    }

    pub fn signed_frequency(&self, b: usize, negative: bool) -> f64 {
        let w = self.omega.nodes[b];
        if negative {
            -w
        } else {
            w
        }
    }

    pub fn sup_norm(&self) -> f64 {
        self.data.iter().map(|v| v.max_abs()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &Spectrum) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (*a - *b).max_abs())
            .fold(0.0, f64::max)
    }

    pub fn scaled(&self, s: f64) -> Spectrum {
        Spectrum {
            data: self.data.iter().map(|v| v.scale_re(s)).collect(),
            ..self.clone()
        }
    }

    pub fn has_nan(&self) -> bool {
        self.data.iter().any(|v| v.0.iter().any(|z| !z.is_finite()))
    }

    /// Quadrature L² norm over the full k grid and both frequency signs,
    /// `(Σ ΔV Δω |v|²)^{1/2}`.
    pub fn l2_norm(&self) -> f64 {
        let n = self.n_omega();
        let mut acc = 0.0;
        for h in 0..self.kgrid.half_len() {
            // each half node stands for itself and its mirror
            let wk = 2.0 * self.kgrid.weights[h];
            for s in 0..2 * n {
                acc += wk * self.omega.weights[s % n] * self.data[h * 2 * n + s].norm_sqr();
            }
        }
        acc.sqrt()
    }

    /// Largest violation of `Ẽ(0, -ω) = conj Ẽ(0, ω)` on self-paired nodes.
    pub fn self_pair_violation(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for h in 0..self.kgrid.half_len() {
            if self.kgrid.self_paired[h] {
                for b in 0..self.n_omega() {
                    worst = worst.max((self.get(h, b, true) - self.get(h, b, false).conj()).max_abs());
                }
            }
        }
        worst
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeField {
    pub kgrid: Arc<KGrid>,
    pub time: TimeGrid,
    /// `[h][m]`
    pub data: Vec<CVec3>,
}

impl TimeField {
    pub fn zeros(kgrid: Arc<KGrid>, time: TimeGrid) -> Self {
        let n = kgrid.half_len() * time.len();
        Self {
            kgrid,
            time,
            data: vec![CVec3::ZERO; n],
        }
    }

    #[inline]
    pub fn get(&self, h: usize, m: usize) -> CVec3 {
        self.data[h * self.time.len() + m]
    }

    pub fn series(&self, h: usize) -> &[CVec3] {
        let n = self.time.len();
        &self.data[h * n..(h + 1) * n]
    }

    #[inline]
    pub fn at_full(&self, f: usize, m: usize) -> CVec3 {
        let (h, mirrored) = self.kgrid.half_of_full(f);
        let v = self.get(h, m);
        if mirrored {
            v.conj()
        } else {
            v
        }
    }

    pub fn check_compatible(&self, other: &TimeField) -> Result<()> {
        if self.kgrid.counts != other.kgrid.counts || self.time.len() != other.time.len() {
            return Err(Error::Shape(format!(
                "time fields on different grids: k counts {:?} vs {:?}, {} vs {} samples",
                self.kgrid.counts,
                other.kgrid.counts,
                self.time.len(),
                other.time.len()
            )));
        }
        Ok(())
    }

    pub fn max_abs_diff(&self, other: &TimeField) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (*a - *b).max_abs())
            .fold(0.0, f64::max)
    }
}

/// Inverse temporal transform,
/// `E(k, t) = (2π)^{time_exp} Σ_b Δω_b [Ẽ(k, ω_b) e^{iω_b t} + Ẽ(k, -ω_b) e^{-iω_b t}]`.
pub fn synthesize(spec: &Spectrum, time: &TimeGrid, conventions: &Conventions) -> TimeField {
    let pref = conventions.synthesis_prefactor();
    let n = spec.n_omega();
    let nt = time.len();
    let phase: Vec<C64> = (0..n * nt)
        .map(|i| C64::from_polar(1.0, spec.omega.nodes[i / nt] * time.nodes[i % nt]))
        .collect();
    let rows = map_range(spec.kgrid.half_len(), |h| {
        (0..nt)
            .map(|m| {
                let mut acc = CVec3::ZERO;
                for b in 0..n {
                    let p = phase[b * nt + m];
                    let w = spec.omega.weights[b] * pref;
                    acc += spec.get(h, b, false).scale(p * w) + spec.get(h, b, true).scale(p.conj() * w);
                }
                acc
            })
            .collect::<Vec<_>>()
    });
    TimeField {
        kgrid: spec.kgrid.clone(),
        time: time.clone(),
        data: rows.into_iter().flatten().collect(),
    }
}

/// Forward temporal transform on a periodic window,
/// `Ẽ(k, ±ω_b) = (2π)^{-1-time_exp} Σ_m Δt E(k, t_m) e^{∓iω_b t_m}`;
/// the exact inverse of [`synthesize`] when the window is one period of a
/// harmonic frequency grid.
pub fn analyze(field: &TimeField, omega: Arc<FrequencyGrid>, conventions: &Conventions) -> Result<Spectrum> {
    let dt = field.time.dt()?;
    let pref = conventions.analysis_prefactor() * dt;
    let n = omega.len();
    let nt = field.time.len();
    let phase: Vec<C64> = (0..n * nt)
        .map(|i| C64::from_polar(pref, -omega.nodes[i / nt] * field.time.nodes[i % nt]))
        .collect();
    let rows = map_range(field.kgrid.half_len(), |h| {
        let series = field.series(h);
        let mut out = vec![CVec3::ZERO; 2 * n];
        for b in 0..n {
            let (mut pos, mut neg) = (CVec3::ZERO, CVec3::ZERO);
            for (m, v) in series.iter().enumerate() {
                let p = phase[b * nt + m];
                pos += v.scale(p);
                neg += v.scale(p.conj());
            }
            out[b] = pos;
            out[n + b] = neg;
        }
        out
    });
    Ok(Spectrum {
        kgrid: field.kgrid.clone(),
        omega,
        data: rows.into_iter().flatten().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grids::{build_frequency_grid, build_kgrid, QuadratureRule};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn setup() -> (Arc<KGrid>, Arc<FrequencyGrid>) {
        (
            Arc::new(build_kgrid([1.0; 3], [3, 3, 2]).unwrap()),
            Arc::new(build_frequency_grid(3.0, 6, QuadratureRule::Harmonic).unwrap()),
        )
    }

    fn random_spectrum(g: Arc<KGrid>, w: Arc<FrequencyGrid>, seed: u64) -> Spectrum {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = Spectrum::zeros(g, w);
        for v in s.data.iter_mut() {
            *v = CVec3([0; 3].map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))));
        }
        s
    }

    #[test]
    fn synthesis_then_analysis_is_identity() {
        let (g, w) = setup();
        let s = random_spectrum(g, w.clone(), 2);
        let period = 2.0 * PI / w.harmonic_spacing().unwrap();
        let t = TimeGrid::periodic(period, 8 * 12 + 1).unwrap();
        let conv = Conventions::default();
        let back = analyze(&synthesize(&s, &t, &conv), w, &conv).unwrap();
        assert!(back.max_abs_diff(&s) < 1e-12);
    }

    #[test]
    fn single_bin_synthesis() {
        let (g, w) = setup();
        let mut s = Spectrum::zeros(g, w.clone());
        let a = C64::new(0.3, -0.2);
        s.set(1, 2, false, CVec3([a, C64::new(0.0, 0.0), C64::new(0.0, 0.0)]));
        let t = TimeGrid::uniform(0.1, 0, 5).unwrap();
        let e = synthesize(&s, &t, &Conventions::default());
        for m in 0..5 {
            let expect = a * C64::from_polar((2.0 * PI).powf(-1.5) * w.weights[2], w.nodes[2] * t.nodes[m]);
            assert!((e.get(1, m)[0] - expect).norm() < 1e-15);
        }
    }

    #[test]
    fn conjugate_symmetric_spectrum_gives_real_origin_field() {
        let g = Arc::new(build_kgrid([1.0; 3], [3, 3, 3]).unwrap());
        let w = Arc::new(build_frequency_grid(2.0, 4, QuadratureRule::Harmonic).unwrap());
        let mut s = random_spectrum(g.clone(), w, 5);
        let o = g.origin_half_index().unwrap();
        for b in 0..4 {
            let v = s.get(o, b, false);
            s.set(o, b, true, v.conj());
        }
        assert!(s.self_pair_violation() < 1e-15);
        let e = synthesize(&s, &TimeGrid::uniform(0.3, 0, 7).unwrap(), &Conventions::default());
        for m in 0..7 {
            assert!(e.get(o, m).0.iter().all(|z| z.im.abs() < 1e-14));
        }
    }

    #[test]
    fn l2_norm_of_constant() {
        let (g, w) = setup();
        let mut s = Spectrum::zeros(g.clone(), w.clone());
        for v in s.data.iter_mut() {
            *v = CVec3([C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0)]);
        }
        // no origin on an even axis: full box × both frequency signs
        let expect = (g.box_volume() * 2.0 * 3.0).sqrt();
        assert!((s.l2_norm() - expect).abs() < 1e-12);
    }
}
