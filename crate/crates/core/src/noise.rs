//! Noise sources from the homogeneous bath solutions.
//!
//! Mode amplitudes are classical circular Gaussians with `b† = conj(b)`,
//! variance `1/(Δω·ΔV)` per bin, so that the free bath fields
//! `X_N(ω, k, t) = √(ħ/2ω) Σ_λ [b_λ e^{-iωt} + conj(b_λ) e^{iωt}] e_{kλ}`
//! are real. The noise polarization sums the linear term, the bilinear
//! `X_N X_N` term, and the memory term that couples `X_N` to the previous
//! field through `∫₀ᵗ dt' sin ω₂(t-t')/ω₂ f†E(t')`; the two operator
//! orderings of that term coincide for c-numbers and contribute a factor 2.

use crate::fields::magnetic_from_electric;
use crate::grids::{triad_or_cartesian, FrequencyGrid, KGrid, TimeGrid};
use crate::linalg::{CMat3, CVec3, C64};
use crate::medium::{Couplings, FieldKind, Medium};
use crate::par::map_range;
use crate::spectra::{analyze, synthesize, Spectrum, TimeField};
use crate::units::{sin_over_omega, Conventions, Units};
use crate::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::f64::consts::PI;
use std::sync::Arc;

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseRealization {
    pub seed: u64,
    pub hbar: f64,
    pub omega: Arc<FrequencyGrid>,
    pub kgrid: Arc<KGrid>,
    /// Electric-bath amplitudes `[b][h]`, one component per polarization λ.
    pub b: Vec<CVec3>,
    /// Magnetic-bath amplitudes, same layout.
    pub d: Vec<CVec3>,
}

/// Draw all amplitudes from a ChaCha8 stream seeded by `seed`, in the fixed
/// order `b` then `d`, each over `(bin, half node, λ, re/im)`.
pub fn sample_modes(omega: Arc<FrequencyGrid>, kgrid: Arc<KGrid>, seed: u64, hbar: f64) -> Result<NoiseRealization> {
    if !(hbar.is_finite() && hbar > 0.0) {
        return Err(Error::Parameter(format!("hbar must be positive, got {hbar}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dv = kgrid.cell_volume();
    let n = omega.len() * kgrid.half_len();
    let draw = |rng: &mut ChaCha8Rng| -> Vec<CVec3> {
        (0..n)
            .map(|i| {
                let b = i / kgrid.half_len();
                let sigma = (0.5 / (omega.weights[b] * dv)).sqrt();
                CVec3([0; 3].map(|_| {
                    let re: f64 = StandardNormal.sample(rng);
                    let im: f64 = StandardNormal.sample(rng);
                    C64::new(sigma * re, sigma * im)
                }))
            })
            .collect()
    };
    let b = draw(&mut rng);
    let d = draw(&mut rng);
    Ok(NoiseRealization {
        seed,
        hbar,
        omega,
        kgrid,
        b,
        d,
    })
}

impl NoiseRealization {
    pub fn zeros(omega: Arc<FrequencyGrid>, kgrid: Arc<KGrid>, hbar: f64) -> Self {
        let n = omega.len() * kgrid.half_len();
        Self {
            seed: 0,
            hbar,
            omega,
            kgrid,
            b: vec![CVec3::ZERO; n],
            d: vec![CVec3::ZERO; n],
        }
    }

    pub fn amplitudes(&self, kind: FieldKind) -> &[CVec3] {
        match kind {
            FieldKind::Electric => &self.b,
            FieldKind::Magnetic => &self.d,
        }
    }

    /// `√(ħ/2ω_b) Σ_λ c_λ e_{kλ}`, so that `X_N = 2 Re(a e^{-iωt})`.
    pub fn mode_vector(&self, kind: FieldKind, b: usize, h: usize) -> CVec3 {
        let c = self.amplitudes(kind)[b * self.kgrid.half_len() + h];
        let triad = triad_or_cartesian(self.kgrid.half_nodes[h]);
        let s = (self.hbar / (2.0 * self.omega.nodes[b])).sqrt();
        let mut a = CVec3::ZERO;
        for (lambda, e) in triad.e.iter().enumerate() {
            a += CVec3::from_real(*e).scale(c[lambda] * s);
        }
        a
    }
}

/// Free bath fields `(X_N, Y_N)` at bin `b`, half node `h`, time `t`.
pub fn free_bath_evolution(real: &NoiseRealization, b: usize, h: usize, t: f64) -> Result<(CVec3, CVec3)> {
    if b >= real.omega.len() || h >= real.kgrid.half_len() {
        return Err(Error::OutOfGrid(format!("bin {b}, half node {h}")));
    }
    if real.omega.nodes[b] == 0.0 {
        return Err(Error::ExcludedBin(format!("bin {b}")));
    }
    let p = C64::from_polar(1.0, -real.omega.nodes[b] * t);
    let ev = |kind| {
        let a = real.mode_vector(kind, b, h);
        CVec3(a.scale(p).0.map(|z| C64::new(2.0 * z.re, 0.0)))
    };
    Ok((ev(FieldKind::Electric), ev(FieldKind::Magnetic)))
}

/// Periodic time grid for the noise pipeline: one period `2π/Δω` of the
/// harmonic frequency grid with `oversample·2n + 1` samples.
pub fn noise_time_grid(omega: &FrequencyGrid, oversample: usize) -> Result<TimeGrid> {
    let d = omega.harmonic_spacing()?;
    TimeGrid::periodic(2.0 * PI / d, oversample.max(1) * 2 * omega.len() + 1)
}

/// `G(t) = ∫₀ᵗ sin ω(t-t')/ω · u(t') dt'` by the trapezoid rule on a
/// uniform grid starting at `t = 0`.
pub fn retarded_convolution(omega: f64, dt: f64, u: &[CVec3]) -> Vec<CVec3> {
    retarded_convolution_with_rate(omega, dt, u).0
}

/// `G` together with `Ġ(t) = ∫₀ᵗ cos ω(t-t') u(t') dt'`. Uses running sums of
/// `e^{∓iωt'} u(t')`, which reproduce the direct trapezoid sums at every node.
pub fn retarded_convolution_with_rate(omega: f64, dt: f64, u: &[CVec3]) -> (Vec<CVec3>, Vec<CVec3>) {
    let n = u.len();
    let mut g = vec![CVec3::ZERO; n];
    let mut gd = vec![CVec3::ZERO; n];
    if n < 2 {
        return (g, gd);
    }
    if omega * dt * n as f64 <= 1e-3 {
        // near-static mode: direct O(n²) sum keeps full relative accuracy
        for i in 1..n {
            let t = i as f64 * dt;
            for (m, v) in u.iter().enumerate().take(i + 1) {
                let c = if m == 0 || m == i { 0.5 } else { 1.0 } * dt;
                let tau = t - m as f64 * dt;
                g[i] += v.scale_re(c * sin_over_omega(omega, tau));
                gd[i] += v.scale_re(c * (omega * tau).cos());
            }
        }
        return (g, gd);
    }
    let mut sa = CVec3::ZERO; // Σ e^{-iωt'} u
    let mut sb = CVec3::ZERO; // Σ e^{+iωt'} u
    let (mut first_a, mut first_b) = (CVec3::ZERO, CVec3::ZERO);
    for (i, v) in u.iter().enumerate() {
        let t = i as f64 * dt;
        let p = C64::from_polar(1.0, -omega * t);
        let va = v.scale(p);
        let vb = v.scale(p.conj());
        sa += va;
        sb += vb;
        if i == 0 {
            first_a = va;
            first_b = vb;
            continue;
        }
        let a = (sa - (first_a + va).scale_re(0.5)).scale_re(dt).scale(p.conj());
        let b = (sb - (first_b + vb).scale_re(0.5)).scale_re(dt).scale(p);
        g[i] = (a - b).scale(C64::new(0.0, -0.5 / omega));
        gd[i] = (a + b).scale_re(0.5);
    }
    (g, gd)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NoiseOptions {
    /// Test hook: omit the memory term.
    pub drop_memory: bool,
}

/// Noise polarization `P_N(k, t)` on the half grid.
pub fn noise_polarization(
    real: &NoiseRealization,
    couplings: &Couplings,
    e_prev: Option<&TimeField>,
    time: &TimeGrid,
    options: NoiseOptions,
) -> Result<TimeField> {
    noise_density(FieldKind::Electric, real, couplings, e_prev, time, options)
}

/// Noise magnetization `M_N(k, t)` on the half grid.
pub fn noise_magnetization(
    real: &NoiseRealization,
    couplings: &Couplings,
    b_prev: Option<&TimeField>,
    time: &TimeGrid,
    options: NoiseOptions,
) -> Result<TimeField> {
    noise_density(FieldKind::Magnetic, real, couplings, b_prev, time, options)
}

fn noise_density(
    kind: FieldKind,
    real: &NoiseRealization,
    couplings: &Couplings,
    drive: Option<&TimeField>,
    time: &TimeGrid,
    options: NoiseOptions,
) -> Result<TimeField> {
    let g = real.kgrid.clone();
    let mut out = TimeField::zeros(g.clone(), time.clone());
    let Some(f1) = couplings.rank1.as_ref() else {
        if couplings.rank2.is_some() {
            return Err(Error::Config(format!(
                "{} rank-3 coupling needs the rank-2 coupling",
                kind.label()
            )));
        }
        return Ok(out);
    };
    if f1.n_omega() != real.omega.len() || f1.kgrid.counts != g.counts {
        return Err(Error::Shape("coupling grids differ from the noise realization grids".into()));
    }
    if let Some(e) = drive {
        if e.kgrid.counts != g.counts || e.time.len() != time.len() {
            return Err(Error::Shape(format!(
                "previous-order field on {:?} × {} samples, noise on {:?} × {}",
                e.kgrid.counts,
                e.time.len(),
                g.counts,
                time.len()
            )));
        }
    }
    let n_w = real.omega.len();
    let nt = time.len();
    let nh = g.half_len();
    let nf = g.full_len();
    let dv = g.cell_volume();
    let w = &real.omega.weights;
    let modes: Vec<CVec3> = (0..n_w * nh).map(|i| real.mode_vector(kind, i / nh, i % nh)).collect();
    let phase: Vec<C64> = (0..n_w * nt)
        .map(|i| C64::from_polar(1.0, -real.omega.nodes[i / nt] * time.nodes[i % nt]))
        .collect();
    // X_N is real, hence identical at mirrored nodes
    let x_half = |b: usize, h: usize, m: usize| -> CVec3 {
        let z = modes[b * nh + h].scale(phase[b * nt + m]);
        CVec3(z.0.map(|c| C64::new(2.0 * c.re, 0.0)))
    };
    let x_full = |b: usize, f: usize, m: usize| x_half(b, g.half_of_full(f).0, m);

    // linear term
    let linear = map_range(nh, |h| {
        let fh = g.full_of_half(h);
        (0..nt)
            .map(|m| {
                let mut acc = CVec3::ZERO;
                for b in 0..n_w {
                    if let Some(fb) = f1.local(b) {
                        acc += fb.mul_vec(x_half(b, h, m)).scale_re(w[b]);
                    } else {
                        for f in 0..nf {
                            let v = f1.value(b, fh, f);
                            if v.max_abs() != 0.0 {
                                acc += v.mul_vec(x_full(b, f, m)).scale_re(w[b] * dv);
                            }
                        }
                    }
                }
                acc
            })
            .collect::<Vec<_>>()
    });
    out.data = linear.into_iter().flatten().collect();

    let Some(f2) = couplings.rank2.as_ref() else {
        return Ok(out);
    };
    // Z = X_N + 2G, the second slot of the rank-3 coupling
    let x_table: Vec<CVec3> = (0..n_w * nf * nt).map(|i| x_full(i / (nf * nt), (i / nt) % nf, i % nt)).collect();
    let mut z_table = x_table.clone();
    if let (Some(e), false) = (drive, options.drop_memory) {
        let dt = time.dt()?;
        let start = time.zero_index();
        let g_rows = map_range(n_w * nf, |i| {
            let (b, f) = (i / nf, i % nf);
            let u: Vec<CVec3> = (start..nt)
                .map(|m| match f1.local(b) {
                    Some(fb) => fb.adjoint().mul_vec(e.at_full(f, m)),
                    None => {
                        let mut acc = CVec3::ZERO;
                        for p in 0..nf {
                            let v = f1.value(b, p, f);
                            if v.max_abs() != 0.0 {
                                acc += v.adjoint().mul_vec(e.at_full(p, m)).scale_re(dv);
                            }
                        }
                        acc
                    }
                })
                .collect();
            retarded_convolution(real.omega.nodes[b], dt, &u)
        });
        for (i, row) in g_rows.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                z_table[i * nt + start + j] += v.scale_re(2.0);
            }
        }
    }
    let xt = |b: usize, f: usize, m: usize| x_table[(b * nf + f) * nt + m];
    let zt = |b: usize, f: usize, m: usize| z_table[(b * nf + f) * nt + m];
    let quadratic = map_range(nh, |h| {
        let fh = g.full_of_half(h);
        (0..nt)
            .map(|m| {
                let mut acc = CVec3::ZERO;
                for f1i in 0..nf {
                    if f2.is_homogeneous() {
                        let Some(f2i) = g.difference_index(fh, f1i) else {
                            continue;
                        };
                        for b1 in 0..n_w {
                            let x1 = xt(b1, f1i, m);
                            for b2 in 0..n_w {
                                let c = f2.local(b1, b2).unwrap();
                                acc += c.contract(x1, zt(b2, f2i, m)).scale_re(w[b1] * w[b2] * dv);
                            }
                        }
                    } else {
                        for f2i in 0..nf {
                            for b1 in 0..n_w {
                                let x1 = xt(b1, f1i, m);
                                for b2 in 0..n_w {
                                    let c = f2.value(b1, b2, fh, f1i, f2i);
                                    if c.max_abs() != 0.0 {
                                        acc += c.contract(x1, zt(b2, f2i, m)).scale_re(w[b1] * w[b2] * dv * dv);
                                    }
                                }
                            }
                        }
                    }
                }
                acc
            })
            .collect::<Vec<_>>()
    });
    for (o, q) in out.data.iter_mut().zip(quadratic.into_iter().flatten()) {
        *o += q;
    }
    Ok(out)
}

/// `J̃ = -μ₀ω² P̃_N - μ₀ω k × M̃_N` with signed ω.
pub fn source_term(
    p_n: &TimeField,
    m_n: &TimeField,
    omega: Arc<FrequencyGrid>,
    units: &Units,
    conventions: &Conventions,
) -> Result<Spectrum> {
    p_n.check_compatible(m_n)?;
    let p = analyze(p_n, omega.clone(), conventions)?;
    let m = analyze(m_n, omega, conventions)?;
    Ok(source_from_spectra(&p, &m, units))
}

pub fn source_from_spectra(p: &Spectrum, m: &Spectrum, units: &Units) -> Spectrum {
    let mut j = Spectrum::zeros(p.kgrid.clone(), p.omega.clone());
    for h in 0..p.kgrid.half_len() {
        let k = p.kgrid.half_nodes[h];
        for b in 0..p.n_omega() {
            for neg in [false, true] {
                let w = p.signed_frequency(b, neg);
                let v = p.get(h, b, neg).scale_re(-units.mu0 * w * w)
                    - CVec3::cross_real(k, m.get(h, b, neg)).scale_re(units.mu0 * w);
                j.set(h, b, neg, v);
            }
        }
    }
    j
}

/// Source of the field equation as a function of the previous-order field.
pub trait SourceModel: Sync {
    fn source(&self, e_prev: Option<&Spectrum>) -> Result<Spectrum>;
    /// Whether [`SourceModel::source`] depends on its argument.
    fn field_dependent(&self) -> bool;
}

/// A source that ignores the field.
pub struct FixedSource(pub Spectrum);

impl SourceModel for FixedSource {
    fn source(&self, _: Option<&Spectrum>) -> Result<Spectrum> {
        Ok(self.0.clone())
    }

    fn field_dependent(&self) -> bool {
        false
    }
}

/// Noise-driven source: synthesizes `E` and `B` of the previous order on the
/// noise time grid, evaluates `P_N`, `M_N` and transforms back.
pub struct NoiseSource<'a> {
    pub realization: &'a NoiseRealization,
    pub medium: &'a Medium,
    pub time: TimeGrid,
    pub units: Units,
    pub conventions: Conventions,
    pub options: NoiseOptions,
}

impl NoiseSource<'_> {
    pub fn densities(&self, e_prev: Option<&Spectrum>) -> Result<(TimeField, TimeField)> {
        let (e_t, b_t) = match e_prev {
            Some(e) => {
                let b = magnetic_from_electric(e);
                (
                    Some(synthesize(e, &self.time, &self.conventions)),
                    Some(synthesize(&b, &self.time, &self.conventions)),
                )
            }
            None => (None, None),
        };
        let p = noise_polarization(self.realization, &self.medium.electric, e_t.as_ref(), &self.time, self.options)?;
        let m = noise_magnetization(self.realization, &self.medium.magnetic, b_t.as_ref(), &self.time, self.options)?;
        Ok((p, m))
    }
}

impl SourceModel for NoiseSource<'_> {
    fn source(&self, e_prev: Option<&Spectrum>) -> Result<Spectrum> {
        let (p, m) = self.densities(e_prev)?;
        source_term(&p, &m, self.realization.omega.clone(), &self.units, &self.conventions)
    }

    fn field_dependent(&self) -> bool {
        (self.medium.electric.has_nonlinear() || self.medium.magnetic.has_nonlinear()) && !self.options.drop_memory
    }
}

/// Sum `Σ_b w_b F_b X_N(b, h, t)` for homogeneous rank-2 couplings; exposed for oracles.
pub fn linear_noise_direct(real: &NoiseRealization, kind: FieldKind, f: &[CMat3], h: usize, t: f64) -> CVec3 {
    let mut acc = CVec3::ZERO;
    for (b, fb) in f.iter().enumerate() {
        let (x, y) = free_bath_evolution(real, b, h, t).expect("bin in range");
        let v = if kind == FieldKind::Electric { x } else { y };
        acc += fb.mul_vec(v).scale_re(real.omega.weights[b]);
    }
    acc
}
