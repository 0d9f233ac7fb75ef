//! Susceptibility kernels built from coupling tensors.
//!
//! Every kernel is a weighted sum over bath frequencies of scalar
//! propagators times coupling products,
//!
//! `χ⁽¹⁾(t, k, k₁) = Θ(t) Σ_b w_b sin(ω_b t)/ω_b · M_b(k, k₁)`,
//! `M_b(k, k₁) = Σ_p ΔV f(ω_b, k, p) f†(ω_b, k₁, p)`,
//!
//! and the rank-3 analogue with one propagator per time argument.
//! [`KernelModes`] holds the coupling products; time- and frequency-domain
//! kernels are both evaluated from it. The frequency kernel has an analytic
//! route (closed-form transform of each damped propagator,
//! `(2π)^{-3/2} w_b / (ω_b² - (ω - iη)²)`) and a numeric route (trapezoid
//! transform of the sampled time kernel); tests hold them against each other.

use crate::grids::{KGrid, TimeGrid};
use crate::linalg::{CMat3, CTensor3, C64, ZERO};
use crate::medium::{Couplings, FieldKind, MaxTracker, ValidationReport, VALIDATION_TOLERANCE};
use crate::par::map_range;
use crate::units::{complex_frequency, sin_over_omega, Conventions};
use crate::grids::FrequencyGrid;
use crate::{Error, Result};
use std::sync::Arc;

/// Relative L² tolerance of the Kramers–Kronig comparison.
pub const KK_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub enum ModeData {
    /// `[b][spatial]`
    Rank1(Vec<Vec<CMat3>>),
    /// `[b₁·n_ω + b₂][spatial]`
    Rank2(Vec<Vec<CTensor3>>),
}

/// Coupling products per bath frequency (pair). The spatial block has one
/// entry for homogeneous media (coefficient of the momentum delta) and
/// `n_k²` resp. `n_k³` entries over full-grid indices otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelModes {
    pub kind: FieldKind,
    pub rank: usize,
    pub omega: Arc<FrequencyGrid>,
    pub kgrid: Arc<KGrid>,
    pub homogeneous: bool,
    pub data: ModeData,
}

/// `Σ_{j₂} x_{i j j₂} conj(a_{i₂ j₂})`, result indexed `[i][j][i₂]`.
fn dress_last(x: &CTensor3, a: &CMat3) -> CTensor3 {
    let mut out = CTensor3::ZERO;
    for i in 0..3 {
        for j in 0..3 {
            for i2 in 0..3 {
                let mut acc = ZERO;
                for j2 in 0..3 {
                    acc += x.get(i, j, j2) * a.0[i2][j2].conj();
                }
                out.set(i, j, i2, acc);
            }
        }
    }
    out
}

/// `Σ_{j₁} x_{i j₁ m} conj(a_{i₁ j₁})`, result indexed `[i][i₁][m]`.
fn dress_middle(x: &CTensor3, a: &CMat3) -> CTensor3 {
    let mut out = CTensor3::ZERO;
    for i in 0..3 {
        for i1 in 0..3 {
            for m in 0..3 {
                let mut acc = ZERO;
                for j1 in 0..3 {
                    acc += x.get(i, j1, m) * a.0[i1][j1].conj();
                }
                out.set(i, i1, m, acc);
            }
        }
    }
    out
}

/// `Σ c_{i j₁ j₂} conj(a_{i₁ j₁}) conj(b_{i₂ j₂})`.
pub fn dress(c: &CTensor3, a: &CMat3, b: &CMat3) -> CTensor3 {
    dress_middle(&dress_last(c, b), a)
}

pub fn build_modes(kind: FieldKind, rank: usize, couplings: &Couplings) -> Result<KernelModes> {
    let f1 = couplings.rank1.as_ref().ok_or_else(|| {
        Error::Config(format!(
            "{} kernel of rank {rank} needs the rank-2 coupling tensor",
            kind.label()
        ))
    })?;
    if f1.kind != kind {
        return Err(Error::Config(format!(
            "coupling of kind {} passed for a {} kernel",
            f1.kind.label(),
            kind.label()
        )));
    }
    let n_w = f1.n_omega();
    let g = f1.kgrid.clone();
    let n = g.full_len();
    let dv = g.cell_volume();
    match rank {
        1 => {
            let (homogeneous, data) = if f1.is_homogeneous() {
                let v = (0..n_w)
                    .map(|b| {
                        let f = f1.local(b).unwrap();
                        vec![f.matmul(&f.adjoint())]
                    })
                    .collect();
                (true, v)
            } else {
                let v = map_range(n_w, |b| {
                    let mut block = vec![CMat3::ZERO; n * n];
                    for k in 0..n {
                        for k1 in 0..n {
                            let mut acc = CMat3::ZERO;
                            for p in 0..n {
                                acc += f1.value(b, k, p).matmul(&f1.value(b, k1, p).adjoint()) * dv;
                            }
                            block[k * n + k1] = acc;
                        }
                    }
                    block
                });
                (false, v)
            };
            Ok(KernelModes {
                kind,
                rank,
                omega: f1.omega.clone(),
                kgrid: g,
                homogeneous,
                data: ModeData::Rank1(data),
            })
        }
        2 => {
            let f2 = couplings.rank2.as_ref().ok_or_else(|| {
                Error::Config(format!("{} kernel of rank 2 needs the rank-3 coupling tensor", kind.label()))
            })?;
            if f2.kind != kind || f2.n_omega() != n_w || f2.kgrid.full_len() != n {
                return Err(Error::Shape("rank-3 coupling does not match the rank-2 coupling grids".into()));
            }
            let homogeneous = f1.is_homogeneous() && f2.is_homogeneous();
            let data = if homogeneous {
                map_range(n_w * n_w, |i| {
                    let (b1, b2) = (i / n_w, i % n_w);
                    vec![dress(
                        f2.local(b1, b2).unwrap(),
                        f1.local(b1).unwrap(),
                        f1.local(b2).unwrap(),
                    )]
                })
            } else {
                let n3 = n * n * n;
                if (n_w * n_w) as f64 * (n3 * n * n) as f64 > 2e9 {
                    return Err(Error::Parameter(
                        "tabulated rank-3 kernel too large; use homogeneous couplings".into(),
                    ));
                }
                map_range(n_w * n_w, |i| {
                    let (b1, b2) = (i / n_w, i % n_w);
                    // contract p₂ first, then p₁
                    let mut half = vec![CTensor3::ZERO; n3]; // [k][p1][k2]
                    for k in 0..n {
                        for p1 in 0..n {
                            for k2 in 0..n {
                                let mut acc = CTensor3::ZERO;
                                for p2 in 0..n {
                                    let c = f2.value(b1, b2, k, p1, p2);
                                    if c.max_abs() == 0.0 {
                                        continue;
                                    }
                                    acc = acc.add(&dress_last(&c, &f1.value(b2, k2, p2)).scale(dv.into()));
                                }
                                half[(k * n + p1) * n + k2] = acc;
                            }
                        }
                    }
                    let mut block = vec![CTensor3::ZERO; n3];
                    for k in 0..n {
                        for k1 in 0..n {
                            for k2 in 0..n {
                                let mut acc = CTensor3::ZERO;
                                for p1 in 0..n {
                                    let h = &half[(k * n + p1) * n + k2];
                                    if h.max_abs() == 0.0 {
                                        continue;
                                    }
                                    acc = acc.add(&dress_middle(h, &f1.value(b1, k1, p1)).scale(dv.into()));
                                }
                                block[(k * n + k1) * n + k2] = acc;
                            }
                        }
                    }
                    block
                })
            };
            Ok(KernelModes {
                kind,
                rank,
                omega: f1.omega.clone(),
                kgrid: g,
                homogeneous,
                data: ModeData::Rank2(data),
            })
        }
        _ => Err(Error::Parameter(format!("kernel rank must be 1 or 2, got {rank}"))),
    }
}

impl KernelModes {
    pub fn spatial_len(&self) -> usize {
        if self.homogeneous {
            1
        } else {
            let n = self.kgrid.full_len();
            if self.rank == 1 {
                n * n
            } else {
                n * n * n
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelDomain {
    Time,
    Frequency,
}

#[derive(Debug, Clone, PartialEq)]
pub enum KernelData {
    /// `[sample][spatial]`, flattened.
    Rank1(Vec<CMat3>),
    /// `[sample₁][sample₂][spatial]`, flattened.
    Rank2(Vec<CTensor3>),
}

/// A sampled kernel. Both arguments of a rank-3 kernel share `axis`.
#[derive(Debug, Clone, PartialEq)]
pub struct SusceptibilityKernel {
    pub kind: FieldKind,
    pub rank: usize,
    pub domain: KernelDomain,
    pub axis: Vec<f64>,
    /// Uniform spacing of `axis` when it has one.
    pub spacing: Option<f64>,
    pub homogeneous: bool,
    pub kgrid: Arc<KGrid>,
    /// Damping applied in the transform (0 for raw time kernels).
    pub eta: f64,
    pub data: KernelData,
}

/// Hooks for kernel construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KernelOptions {
    /// Keep every `stride`-th time sample per axis for rank-3 kernels.
    pub stride: usize,
    /// Test hook: omit the step functions, producing an acausal kernel.
    pub drop_step: bool,
}

impl Default for KernelOptions {
    fn default() -> Self {
        Self {
            stride: 1,
            drop_step: false,
        }
    }
}

impl SusceptibilityKernel {
    pub fn spatial_len(&self) -> usize {
        if self.homogeneous {
            1
        } else {
            let n = self.kgrid.full_len();
            if self.rank == 1 {
                n * n
            } else {
                n * n * n
            }
        }
    }

    pub fn n_samples(&self) -> usize {
        self.axis.len()
    }

    pub fn rank1(&self) -> Option<&[CMat3]> {
        match &self.data {
            KernelData::Rank1(v) => Some(v),
            KernelData::Rank2(_) => None,
        }
    }

    pub fn rank2(&self) -> Option<&[CTensor3]> {
        match &self.data {
            KernelData::Rank2(v) => Some(v),
            KernelData::Rank1(_) => None,
        }
    }

    /// Rank-2 block at sample `s`.
    pub fn block1(&self, s: usize) -> &[CMat3] {
        let n = self.spatial_len();
        &self.rank1().expect("rank-2 kernel")[s * n..(s + 1) * n]
    }

    /// Rank-3 block at samples `(s1, s2)`.
    pub fn block2(&self, s1: usize, s2: usize) -> &[CTensor3] {
        let n = self.spatial_len();
        let i = s1 * self.n_samples() + s2;
        &self.rank2().expect("rank-3 kernel")[i * n..(i + 1) * n]
    }

    pub fn max_abs(&self) -> f64 {
        match &self.data {
            KernelData::Rank1(v) => v.iter().map(|m| m.max_abs()).fold(0.0, f64::max),
            KernelData::Rank2(v) => v.iter().map(|m| m.max_abs()).fold(0.0, f64::max),
        }
    }

    /// Time kernel multiplied by `e^{-η(t₁+…)}` on its positive support.
    pub fn regularized(&self, eta: f64) -> Result<SusceptibilityKernel> {
        if self.domain != KernelDomain::Time {
            return Err(Error::Parameter("regularized() applies to time-domain kernels".into()));
        }
        let damp = |t: f64| (-eta * t.abs()).exp();
        let n = self.spatial_len();
        let ns = self.n_samples();
        let data = match &self.data {
            KernelData::Rank1(v) => KernelData::Rank1(
                v.iter()
                    .enumerate()
                    .map(|(i, m)| *m * damp(self.axis[i / n]))
                    .collect(),
            ),
            KernelData::Rank2(v) => KernelData::Rank2(
                v.iter()
                    .enumerate()
                    .map(|(i, m)| {
                        let s = i / n;
                        m.scale((damp(self.axis[s / ns]) * damp(self.axis[s % ns])).into())
                    })
                    .collect(),
            ),
        };
        Ok(SusceptibilityKernel {
            data,
            eta: self.eta + eta,
            ..self.clone()
        })
    }

    /// Bilinear interpolation of a rank-3 time kernel at `(t₁, t₂)` for
    /// spatial entry `j`. Zero outside the sampled window.
    pub fn interpolate2(&self, t1: f64, t2: f64, j: usize) -> CTensor3 {
        let h = self.spacing.expect("uniform kernel axis");
        let t0 = self.axis[0];
        let ns = self.n_samples();
        let locate = |t: f64| -> Option<(usize, f64)> {
            let x = (t - t0) / h;
            if x < -1e-9 || x > (ns - 1) as f64 + 1e-9 {
                return None;
            }
            let x = x.clamp(0.0, (ns - 1) as f64);
            let i = (x.floor() as usize).min(ns.saturating_sub(2));
            Some((i, x - i as f64))
        };
        let (Some((i1, a)), Some((i2, b))) = (locate(t1), locate(t2)) else {
            return CTensor3::ZERO;
        };
        if ns == 1 {
            return self.block2(0, 0)[j];
        }
        let v = |p: usize, q: usize| self.block2(p, q)[j];
        v(i1, i2)
            .scale(((1.0 - a) * (1.0 - b)).into())
            .add(&v(i1 + 1, i2).scale((a * (1.0 - b)).into()))
            .add(&v(i1, i2 + 1).scale(((1.0 - a) * b).into()))
            .add(&v(i1 + 1, i2 + 1).scale((a * b).into()))
    }
}

fn check_finite(kernel: &SusceptibilityKernel) -> Result<()> {
    let n = kernel.spatial_len();
    let bad = match &kernel.data {
        KernelData::Rank1(v) => v.iter().position(|m| m.0.iter().flatten().any(|z| !z.is_finite())),
        KernelData::Rank2(v) => v.iter().position(|m| m.0.iter().any(|z| !z.is_finite())),
    };
    match bad {
        None => Ok(()),
        Some(i) => {
            let s = i / n;
            let loc = if kernel.rank == 1 {
                format!("sample {}", kernel.axis[s])
            } else {
                let ns = kernel.n_samples();
                format!("samples ({}, {})", kernel.axis[s / ns], kernel.axis[s % ns])
            };
            Err(Error::Numerical(format!(
                "non-finite {} kernel value at {loc}, spatial entry {}",
                kernel.kind.label(),
                i % n
            )))
        }
    }
}

/// Time-domain kernel of the given rank from the medium's couplings.
pub fn build_kernel_time(
    kind: FieldKind,
    rank: usize,
    couplings: &Couplings,
    time: &TimeGrid,
    options: KernelOptions,
) -> Result<SusceptibilityKernel> {
    let modes = build_modes(kind, rank, couplings)?;
    kernel_time_from_modes(&modes, time, options)
}

pub fn kernel_time_from_modes(
    modes: &KernelModes,
    time: &TimeGrid,
    options: KernelOptions,
) -> Result<SusceptibilityKernel> {
    let dt = time.dt()?;
    let stride = options.stride.max(1);
    let axis: Vec<f64> = if modes.rank == 1 {
        time.nodes.clone()
    } else {
        time.nodes.iter().step_by(stride).copied().collect()
    };
    let spacing = if modes.rank == 1 { dt } else { dt * stride as f64 };
    let w = &modes.omega;
    let prop = |b: usize, t: f64| -> f64 {
        if t > 0.0 || options.drop_step {
            w.weights[b] * sin_over_omega(w.nodes[b], t)
        } else {
            0.0
        }
    };
    let kernel = evaluate(modes, &axis, |b, t| C64::new(prop(b, t), 0.0));
    let kernel = SusceptibilityKernel {
        domain: KernelDomain::Time,
        spacing: Some(spacing),
        eta: 0.0,
        ..kernel
    };
    check_finite(&kernel)?;
    Ok(kernel)
}

/// Frequency kernel from the closed-form transform of each damped
/// propagator, sampled at `axis`.
pub fn frequency_kernel(
    modes: &KernelModes,
    axis: &[f64],
    eta: f64,
    conventions: &Conventions,
) -> Result<SusceptibilityKernel> {
    if !(eta >= 0.0 && eta.is_finite()) {
        return Err(Error::Parameter(format!("eta must be non-negative, got {eta}")));
    }
    let w = &modes.omega;
    let pref = conventions.kernel_prefactor(1);
    let prop = |b: usize, nu: f64| -> C64 {
        let z = complex_frequency(nu, eta);
        pref * w.weights[b] / (w.nodes[b] * w.nodes[b] - z * z)
    };
    let kernel = evaluate(modes, axis, prop);
    let kernel = SusceptibilityKernel {
        domain: KernelDomain::Frequency,
        spacing: uniform_spacing(axis),
        eta,
        ..kernel
    };
    check_finite(&kernel)?;
    Ok(kernel)
}

/// `Σ_b p(b, x) M_b` for rank 1, `Σ p(b₁, x₁) p(b₂, x₂) K_{b₁b₂}` for rank 2.
fn evaluate(modes: &KernelModes, axis: &[f64], p: impl Fn(usize, f64) -> C64 + Sync) -> SusceptibilityKernel {
    let n_w = modes.omega.len();
    let ns = axis.len();
    let sp = modes.spatial_len();
    let table: Vec<C64> = (0..n_w * ns).map(|i| p(i / ns, axis[i % ns])).collect();
    let pv = |b: usize, s: usize| table[b * ns + s];
    let data = match &modes.data {
        ModeData::Rank1(m) => {
            let blocks = map_range(ns, |s| {
                let mut out = vec![CMat3::ZERO; sp];
                for (b, mb) in m.iter().enumerate() {
                    let c = pv(b, s);
                    if c == ZERO {
                        continue;
                    }
                    for (o, x) in out.iter_mut().zip(mb) {
                        *o += x.scale(c);
                    }
                }
                out
            });
            KernelData::Rank1(blocks.into_iter().flatten().collect())
        }
        ModeData::Rank2(m) => {
            // q[s₁][b₂] = Σ_{b₁} p(b₁, s₁) K_{b₁ b₂}
            let q = map_range(ns, |s1| {
                let mut out = vec![CTensor3::ZERO; n_w * sp];
                for b1 in 0..n_w {
                    let c = pv(b1, s1);
                    if c == ZERO {
                        continue;
                    }
                    for b2 in 0..n_w {
                        for (j, x) in m[b1 * n_w + b2].iter().enumerate() {
                            let o = &mut out[b2 * sp + j];
                            *o = o.add(&x.scale(c));
                        }
                    }
                }
                out
            });
            let blocks = map_range(ns * ns, |i| {
                let (s1, s2) = (i / ns, i % ns);
                let mut out = vec![CTensor3::ZERO; sp];
                for b2 in 0..n_w {
                    let c = pv(b2, s2);
                    if c == ZERO {
                        continue;
                    }
                    for (j, o) in out.iter_mut().enumerate() {
                        *o = o.add(&q[s1][b2 * sp + j].scale(c));
                    }
                }
                out
            });
            KernelData::Rank2(blocks.into_iter().flatten().collect())
        }
    };
    SusceptibilityKernel {
        kind: modes.kind,
        rank: modes.rank,
        domain: KernelDomain::Time,
        axis: axis.to_vec(),
        spacing: None,
        homogeneous: modes.homogeneous,
        kgrid: modes.kgrid.clone(),
        eta: 0.0,
        data,
    }
}

fn uniform_spacing(axis: &[f64]) -> Option<f64> {
    if axis.len() < 2 {
        return None;
    }
    let h = axis[1] - axis[0];
    let ok = axis
        .windows(2)
        .all(|p| ((p[1] - p[0]) - h).abs() <= 1e-9 * h.abs().max(1e-300));
    (ok && h > 0.0).then_some(h)
}

/// Numeric transform of a time kernel: trapezoid sum of
/// `(2π)^{-3n/2} χ(t) e^{-iωt - η|t|}` over the stored samples, per axis.
pub fn kernel_to_frequency(
    kernel: &SusceptibilityKernel,
    axis: &[f64],
    eta: f64,
    conventions: &Conventions,
) -> Result<SusceptibilityKernel> {
    if kernel.domain != KernelDomain::Time {
        return Err(Error::Parameter("kernel_to_frequency expects a time-domain kernel".into()));
    }
    let h = kernel
        .spacing
        .ok_or_else(|| Error::UnsupportedGrid("kernel time axis is not uniform".into()))?;
    let nt = kernel.n_samples();
    let nf = axis.len();
    let sp = kernel.spatial_len();
    // phase[f][m] with trapezoid end weights
    let phase: Vec<C64> = (0..nf * nt)
        .map(|i| {
            let (f, m) = (i / nt, i % nt);
            let t = kernel.axis[m];
            let end = if m == 0 || m + 1 == nt { 0.5 } else { 1.0 };
            C64::from_polar(end * h * (-eta * t.abs()).exp(), -axis[f] * t)
        })
        .collect();
    let ph = |f: usize, m: usize| phase[f * nt + m];
    let data = match &kernel.data {
        KernelData::Rank1(v) => {
            let pref = conventions.kernel_prefactor(1);
            let blocks = map_range(nf, |f| {
                let mut out = vec![CMat3::ZERO; sp];
                for m in 0..nt {
                    let c = ph(f, m) * pref;
                    for (o, x) in out.iter_mut().zip(&v[m * sp..(m + 1) * sp]) {
                        *o += x.scale(c);
                    }
                }
                out
            });
            KernelData::Rank1(blocks.into_iter().flatten().collect())
        }
        KernelData::Rank2(v) => {
            let pref = conventions.kernel_prefactor(2);
            // pass over t₂: y[m₁][f₂]
            let y = map_range(nt, |m1| {
                let mut out = vec![CTensor3::ZERO; nf * sp];
                for f2 in 0..nf {
                    for m2 in 0..nt {
                        let c = ph(f2, m2);
                        let base = (m1 * nt + m2) * sp;
                        for j in 0..sp {
                            let o = &mut out[f2 * sp + j];
                            *o = o.add(&v[base + j].scale(c));
                        }
                    }
                }
                out
            });
            let blocks = map_range(nf * nf, |i| {
                let (f1, f2) = (i / nf, i % nf);
                let mut out = vec![CTensor3::ZERO; sp];
                for (m1, ym) in y.iter().enumerate() {
                    let c = ph(f1, m1) * pref;
                    for (j, o) in out.iter_mut().enumerate() {
                        *o = o.add(&ym[f2 * sp + j].scale(c));
                    }
                }
                out
            });
            KernelData::Rank2(blocks.into_iter().flatten().collect())
        }
    };
    let out = SusceptibilityKernel {
        domain: KernelDomain::Frequency,
        axis: axis.to_vec(),
        spacing: uniform_spacing(axis),
        eta,
        data,
        ..kernel.clone()
    };
    check_finite(&out)?;
    Ok(out)
}

/// Swap symmetry `(t₁,k₁,i₁) ↔ (t₂,k₂,i₂)` of a rank-3 kernel in either domain.
pub fn check_kernel_symmetry(kernel: &SusceptibilityKernel) -> Result<ValidationReport> {
    if kernel.rank != 2 {
        return Err(Error::Parameter("pair-swap symmetry applies to rank-3 kernels".into()));
    }
    let ns = kernel.n_samples();
    let n = kernel.kgrid.full_len();
    let mut worst = MaxTracker::default();
    for s1 in 0..ns {
        for s2 in 0..ns {
            let a = kernel.block2(s1, s2);
            let b = kernel.block2(s2, s1);
            if kernel.homogeneous {
                worst.observe(a[0].max_abs_diff(&b[0].swap_trailing()), || {
                    format!("samples ({}, {})", kernel.axis[s1], kernel.axis[s2])
                });
            } else {
                for k in 0..n {
                    for k1 in 0..n {
                        for k2 in 0..n {
                            let x = &a[(k * n + k1) * n + k2];
                            let y = b[(k * n + k2) * n + k1].swap_trailing();
                            worst.observe(x.max_abs_diff(&y), || {
                                format!(
                                    "samples ({}, {}), k indices ({k}, {k1}, {k2})",
                                    kernel.axis[s1], kernel.axis[s2]
                                )
                            });
                        }
                    }
                }
            }
        }
    }
    Ok(ValidationReport::new(
        format!("{} rank-3 kernel pair-swap symmetry", kernel.kind.label()),
        worst.value,
        worst.location,
        VALIDATION_TOLERANCE,
    ))
}

fn mirror_axis(axis: &[f64]) -> Result<Vec<usize>> {
    axis.iter()
        .map(|&x| {
            axis.iter()
                .position(|&y| (x + y).abs() <= 1e-12 * x.abs().max(1.0))
                .ok_or_else(|| Error::UnsupportedGrid(format!("frequency axis has no mirror of {x}")))
        })
        .collect()
}

/// `χ̃(-ω…, -k…) = conj χ̃(ω…, k…)` on a symmetric frequency axis.
pub fn check_frequency_reality(kernel: &SusceptibilityKernel) -> Result<ValidationReport> {
    if kernel.domain != KernelDomain::Frequency {
        return Err(Error::Parameter("frequency reality applies to frequency kernels".into()));
    }
    let mir = mirror_axis(&kernel.axis)?;
    let g = &kernel.kgrid;
    let n = g.full_len();
    let ns = kernel.n_samples();
    let mut worst = MaxTracker::default();
    match kernel.rank {
        1 => {
            for s in 0..ns {
                let a = kernel.block1(s);
                let b = kernel.block1(mir[s]);
                if kernel.homogeneous {
                    worst.observe(a[0].max_abs_diff(&b[0].conj()), || format!("omega {}", kernel.axis[s]));
                } else {
                    for k in 0..n {
                        for k1 in 0..n {
                            let d = a[k * n + k1].max_abs_diff(&b[g.mirror(k) * n + g.mirror(k1)].conj());
                            worst.observe(d, || format!("omega {}, k indices ({k}, {k1})", kernel.axis[s]));
                        }
                    }
                }
            }
        }
        _ => {
            for s1 in 0..ns {
                for s2 in 0..ns {
                    let a = kernel.block2(s1, s2);
                    let b = kernel.block2(mir[s1], mir[s2]);
                    if kernel.homogeneous {
                        worst.observe(a[0].max_abs_diff(&b[0].conj()), || {
                            format!("omegas ({}, {})", kernel.axis[s1], kernel.axis[s2])
                        });
                    } else {
                        for k in 0..n {
                            for k1 in 0..n {
                                for k2 in 0..n {
                                    let m = (g.mirror(k) * n + g.mirror(k1)) * n + g.mirror(k2);
                                    let d = a[(k * n + k1) * n + k2].max_abs_diff(&b[m].conj());
                                    worst.observe(d, || {
                                        format!(
                                            "omegas ({}, {}), k indices ({k}, {k1}, {k2})",
                                            kernel.axis[s1], kernel.axis[s2]
                                        )
                                    });
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    let scale = kernel.max_abs().max(1.0);
    Ok(ValidationReport::new(
        format!("{} rank-{} frequency kernel reality", kernel.kind.label(), kernel.rank + 1),
        worst.value / scale,
        worst.location,
        VALIDATION_TOLERANCE,
    ))
}

/// Discrete principal-value Hilbert transform
/// `H[g](ω) = (1/π) P∫ g(ω') / (ω - ω') dω'` on a uniform grid, by
/// Maclaurin's rule (only odd index offsets contribute).
pub fn hilbert_transform(g: &[f64]) -> Vec<f64> {
    let n = g.len();
    map_range(n, |i| {
        let mut acc = 0.0;
        let start = if i % 2 == 0 { 1 } else { 0 };
        for j in (start..n).step_by(2) {
            acc += g[j] / (i as f64 - j as f64);
        }
        2.0 * acc / std::f64::consts::PI
    })
}

/// Kramers–Kronig consistency of a rank-2 frequency kernel: for a causal
/// kernel `Re χ̃ = H[Im χ̃]` componentwise. Reports the relative L² mismatch.
pub fn check_causality_kk(kernel: &SusceptibilityKernel) -> Result<ValidationReport> {
    if kernel.domain != KernelDomain::Frequency || kernel.rank != 1 {
        return Err(Error::Parameter("Kramers–Kronig check needs a rank-2 frequency kernel".into()));
    }
    if kernel.spacing.is_none() {
        return Err(Error::UnsupportedGrid("Kramers–Kronig check needs a uniform frequency axis".into()));
    }
    mirror_axis(&kernel.axis)?;
    let ns = kernel.n_samples();
    let sp = kernel.spatial_len();
    let data = kernel.rank1().unwrap();
    let mut num = 0.0;
    let mut den = 0.0;
    let mut worst = MaxTracker::default();
    for j in 0..sp {
        for a in 0..3 {
            for b in 0..3 {
                let re: Vec<f64> = (0..ns).map(|s| data[s * sp + j].0[a][b].re).collect();
                let im: Vec<f64> = (0..ns).map(|s| data[s * sp + j].0[a][b].im).collect();
                let h = hilbert_transform(&im);
                for s in 0..ns {
                    let d = re[s] - h[s];
                    num += d * d;
                    den += re[s] * re[s];
                    worst.observe(d.abs(), || {
                        format!("omega {}, component ({a}, {b}), spatial entry {j}", kernel.axis[s])
                    });
                }
            }
        }
    }
    let mismatch = if den == 0.0 {
        if num == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (num / den).sqrt()
    };
    Ok(ValidationReport::new(
        format!("{} rank-2 kernel Kramers-Kronig", kernel.kind.label()),
        mismatch,
        worst.location,
        KK_TOLERANCE,
    ))
}

/// Symmetric frequency axis `±(i - 1/2)·Δ`, uniform across zero.
pub fn symmetric_midpoint_axis(omega_max: f64, n_half: usize) -> Vec<f64> {
    let d = omega_max / n_half as f64;
    let mut axis: Vec<f64> = (0..n_half).rev().map(|i| -(i as f64 + 0.5) * d).collect();
    axis.extend((0..n_half).map(|i| (i as f64 + 0.5) * d));
    axis
}
