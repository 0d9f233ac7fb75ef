//! Direct time integration of the oscillator baths, an independent check of
//! the convolution solution used by the noise and susceptibility modules.
//!
//! The integrator is the fourth-order Yoshida composition of velocity
//! Verlet with a fixed step; drives sampled on a uniform grid are
//! evaluated between samples by four-point Lagrange interpolation.

use crate::grids::{FrequencyGrid, KGrid, TimeGrid};
use crate::linalg::{CVec3, C64};
use crate::medium::{CouplingTensor1, Couplings, FieldKind};
use crate::noise::{retarded_convolution_with_rate, NoiseRealization};
use crate::par::map_range;
use crate::spectra::TimeField;
use crate::{Error, Result};
use std::sync::Arc;

/// Largest accepted `Δt·ω_max`.
pub const STABILITY_LIMIT: f64 = 0.1;

/// Bath coordinates and momenta sampled on the drive's time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BathTrajectory {
    pub kind: FieldKind,
    pub omega: Arc<FrequencyGrid>,
    pub kgrid: Arc<KGrid>,
    pub time: TimeGrid,
    /// `true` when nodes are full-grid indices, `false` for half-grid ones.
    pub full_k: bool,
    /// `[b][node][m]`
    pub x: Vec<CVec3>,
    pub q: Vec<CVec3>,
}

impl BathTrajectory {
    pub fn n_nodes(&self) -> usize {
        if self.full_k {
            self.kgrid.full_len()
        } else {
            self.kgrid.half_len()
        }
    }

    fn index(&self, b: usize, node: usize, m: usize) -> usize {
        (b * self.n_nodes() + node) * self.time.len() + m
    }

    pub fn x_at(&self, b: usize, node: usize, m: usize) -> CVec3 {
        self.x[self.index(b, node, m)]
    }

    pub fn q_at(&self, b: usize, node: usize, m: usize) -> CVec3 {
        self.q[self.index(b, node, m)]
    }

    /// Free-bath energy `Σ |Q|² + ω²|X|²` per sample.
    pub fn energy(&self) -> Vec<f64> {
        let nt = self.time.len();
        let nn = self.n_nodes();
        (0..nt)
            .map(|m| {
                let mut e = 0.0;
                for b in 0..self.omega.len() {
                    let w2 = self.omega.nodes[b] * self.omega.nodes[b];
                    for node in 0..nn {
                        e += self.q_at(b, node, m).norm_sqr() + w2 * self.x_at(b, node, m).norm_sqr();
                    }
                }
                e
            })
            .collect()
    }
}

/// RMS of `X_a - X_b` divided by the RMS of `X_b`.
pub fn relative_rms(a: &BathTrajectory, b: &BathTrajectory) -> Result<f64> {
    if a.x.len() != b.x.len() {
        return Err(Error::Shape(format!("trajectories of {} and {} samples", a.x.len(), b.x.len())));
    }
    let (mut num, mut den) = (0.0, 0.0);
    for (p, q) in a.x.iter().zip(&b.x) {
        num += (*p - *q).norm_sqr();
        den += q.norm_sqr();
    }
    Ok(if den == 0.0 { num.sqrt() } else { (num / den).sqrt() })
}

/// Four-point Lagrange interpolation of uniformly sampled series.
struct Interpolator {
    t0: f64,
    dt: f64,
    n: usize,
}

impl Interpolator {
    fn new(time: &TimeGrid) -> Result<Self> {
        if time.len() < 4 {
            return Err(Error::UnsupportedGrid("drive needs at least four samples".into()));
        }
        Ok(Self {
            t0: time.nodes[0],
            dt: time.dt()?,
            n: time.len(),
        })
    }

    /// First stencil index and the four weights at time `t`.
    fn stencil(&self, t: f64) -> (usize, [f64; 4]) {
        let x = (t - self.t0) / self.dt;
        let i = (x.floor() as i64).clamp(1, self.n as i64 - 3) as usize;
        let s = x - i as f64;
        (
            i - 1,
            [
                -s * (s - 1.0) * (s - 2.0) / 6.0,
                (s + 1.0) * (s - 1.0) * (s - 2.0) / 2.0,
                -(s + 1.0) * s * (s - 2.0) / 2.0,
                (s + 1.0) * s * (s - 1.0) / 6.0,
            ],
        )
    }

    fn eval(&self, series: &[CVec3], t: f64) -> CVec3 {
        let (i, w) = self.stencil(t);
        let mut acc = CVec3::ZERO;
        for (j, wj) in w.iter().enumerate() {
            acc += series[i + j].scale_re(*wj);
        }
        acc
    }
}

const YOSHIDA_W1: f64 = 1.351_207_191_959_657_8; // 1/(2 - 2^{1/3})
const YOSHIDA_W0: f64 = -1.702_414_383_919_315_3; // -2^{1/3}/(2 - 2^{1/3})

/// One Yoshida step of `ẍ = a(x, t)` for a vector state; `h` may be negative.
pub fn yoshida_step(
    x: &mut [CVec3],
    q: &mut [CVec3],
    t: &mut f64,
    h: f64,
    accel: &mut dyn FnMut(&[CVec3], f64, &mut [CVec3]),
) {
    let c = [YOSHIDA_W1 / 2.0, (YOSHIDA_W0 + YOSHIDA_W1) / 2.0, (YOSHIDA_W0 + YOSHIDA_W1) / 2.0, YOSHIDA_W1 / 2.0];
    let d = [YOSHIDA_W1, YOSHIDA_W0, YOSHIDA_W1];
    let mut a = vec![CVec3::ZERO; x.len()];
    for i in 0..4 {
        for (xi, qi) in x.iter_mut().zip(q.iter()) {
            *xi += qi.scale_re(c[i] * h);
        }
        *t += c[i] * h;
        if i < 3 {
            accel(x, *t, &mut a);
            for (qi, ai) in q.iter_mut().zip(&a) {
                *qi += ai.scale_re(d[i] * h);
            }
        }
    }
}

fn check_step(dt: f64, omega: &FrequencyGrid) -> Result<()> {
    let w_max = omega.nodes.iter().copied().fold(0.0, f64::max);
    let limit = STABILITY_LIMIT / w_max;
    if !(dt > 0.0 && dt.is_finite()) || dt > limit {
        return Err(Error::Stability { dt, limit });
    }
    Ok(())
}

/// `∫d³k₁ f†(ω_b, k₁, k) E(k₁, t)` on the drive grid for half node `h`.
fn linear_force(coupling: &CouplingTensor1, drive: &TimeField, b: usize, h: usize) -> Vec<CVec3> {
    let g = &drive.kgrid;
    let nt = drive.time.len();
    match coupling.local(b) {
        Some(f) => {
            let fa = f.adjoint();
            drive.series(h).iter().map(|e| fa.mul_vec(*e)).collect()
        }
        None => {
            let fh = g.full_of_half(h);
            let dv = g.cell_volume();
            let mats: Vec<_> = (0..g.full_len())
                .map(|f1| coupling.value(b, f1, fh).adjoint())
                .collect();
            (0..nt)
                .map(|m| {
                    let mut acc = CVec3::ZERO;
                    for (f1, a) in mats.iter().enumerate() {
                        if a.max_abs() != 0.0 {
                            acc += a.mul_vec(drive.at_full(f1, m)).scale_re(dv);
                        }
                    }
                    acc
                })
                .collect()
        }
    }
}

fn check_drive(coupling: &CouplingTensor1, drive: &TimeField) -> Result<()> {
    if coupling.kgrid.counts != drive.kgrid.counts {
        return Err(Error::Shape(format!(
            "coupling on {:?}, drive on {:?}",
            coupling.kgrid.counts, drive.kgrid.counts
        )));
    }
    Ok(())
}

/// Free-bath state `(X_N, Q_N)` at time `t`.
fn free_state(real: &NoiseRealization, kind: FieldKind, b: usize, h: usize, t: f64) -> (CVec3, CVec3) {
    let a = real.mode_vector(kind, b, h);
    let w = real.omega.nodes[b];
    let z = a.scale(C64::from_polar(1.0, -w * t));
    let re = |v: CVec3| CVec3(v.0.map(|c| C64::new(2.0 * c.re, 0.0)));
    (re(z), re(z.scale(C64::new(0.0, -w))))
}

/// Integrates `Ẍ + ω²X = ∫d³k₁ f†E` per bin and half node from the free
/// bath state at the first drive sample (rest when `noise` is `None`).
/// The step is the largest divisor of the drive step not exceeding `dt`.
pub fn integrate_bath_linear(
    coupling: &CouplingTensor1,
    drive: &TimeField,
    dt: f64,
    noise: Option<&NoiseRealization>,
) -> Result<BathTrajectory> {
    check_drive(coupling, drive)?;
    check_step(dt, &coupling.omega)?;
    let interp = Interpolator::new(&drive.time)?;
    let sub = (interp.dt / dt).ceil().max(1.0) as usize;
    let h_step = interp.dt / sub as f64;
    let g = drive.kgrid.clone();
    let nh = g.half_len();
    let nt = drive.time.len();
    let omega = coupling.omega.clone();
    let rows = map_range(omega.len() * nh, |i| {
        let (b, h) = (i / nh, i % nh);
        let w2 = omega.nodes[b] * omega.nodes[b];
        let u = linear_force(coupling, drive, b, h);
        let t0 = drive.time.nodes[0];
        let (x0, q0) = noise.map_or((CVec3::ZERO, CVec3::ZERO), |r| free_state(r, coupling.kind, b, h, t0));
        let (mut x, mut q, mut t) = ([x0], [q0], t0);
        let mut xs = Vec::with_capacity(nt);
        let mut qs = Vec::with_capacity(nt);
        xs.push(x0);
        qs.push(q0);
        let mut accel = |x: &[CVec3], t: f64, a: &mut [CVec3]| {
            a[0] = interp.eval(&u, t) - x[0].scale_re(w2);
        };
        for m in 1..nt {
            for _ in 0..sub {
                yoshida_step(&mut x, &mut q, &mut t, h_step, &mut accel);
            }
            // pin the clock to the grid to avoid drift in long runs
            t = drive.time.nodes[m];
            xs.push(x[0]);
            qs.push(q[0]);
        }
        (xs, qs)
    });
    let (x, q) = rows.into_iter().fold((Vec::new(), Vec::new()), |(mut x, mut q), (a, b)| {
        x.extend(a);
        q.extend(b);
        (x, q)
    });
    Ok(BathTrajectory {
        kind: coupling.kind,
        omega,
        kgrid: g,
        time: drive.time.clone(),
        full_k: false,
        x,
        q,
    })
}

/// `X(t) = X_N(t) + ∫_{t₀}^t dt' sin ω(t-t')/ω ∫d³k₁ f†E(k₁, t')` by the
/// trapezoid rule on the drive grid; the drive vanishes before `t₀`.
pub fn first_order_solution(
    coupling: &CouplingTensor1,
    drive: &TimeField,
    noise: Option<&NoiseRealization>,
) -> Result<BathTrajectory> {
    check_drive(coupling, drive)?;
    let dt = drive.time.dt()?;
    let g = drive.kgrid.clone();
    let nh = g.half_len();
    let omega = coupling.omega.clone();
    let rows = map_range(omega.len() * nh, |i| {
        let (b, h) = (i / nh, i % nh);
        let u = linear_force(coupling, drive, b, h);
        let (mut x, mut q) = retarded_convolution_with_rate(omega.nodes[b], dt, &u);
        if let Some(r) = noise {
            for (m, &t) in drive.time.nodes.iter().enumerate() {
                let (xn, qn) = free_state(r, coupling.kind, b, h, t);
                x[m] += xn;
                q[m] += qn;
            }
        }
        (x, q)
    });
    let (x, q) = rows.into_iter().fold((Vec::new(), Vec::new()), |(mut x, mut q), (a, b)| {
        x.extend(a);
        q.extend(b);
        (x, q)
    });
    Ok(BathTrajectory {
        kind: coupling.kind,
        omega,
        kgrid: g,
        time: drive.time.clone(),
        full_k: false,
        x,
        q,
    })
}

/// Integrates the bath including the rank-3 coupling terms,
/// `Ẍ_ω(k) + ω²X_ω(k) = ∫f†E + ∫dω₂ f*_{jik}(ω, ω₂, k₁, k, k₂) E_j(k₁) X*_{ω₂,k}(k₂)
///  + ∫dω₁ f*_{kji}(ω₁, ω, k₂, k₁, k) E_k(k₂) X*_{ω₁,j}(k₁)`,
/// on the full k grid from rest. Intended for a handful of bins and nodes.
pub fn integrate_bath_nonlinear(couplings: &Couplings, drive: &TimeField, dt: f64) -> Result<BathTrajectory> {
    let f1 = couplings
        .rank1
        .as_ref()
        .ok_or_else(|| Error::Config("bath integration needs the rank-2 coupling".into()))?;
    check_drive(f1, drive)?;
    check_step(dt, &f1.omega)?;
    let interp = Interpolator::new(&drive.time)?;
    let sub = (interp.dt / dt).ceil().max(1.0) as usize;
    let h_step = interp.dt / sub as f64;
    let g = drive.kgrid.clone();
    let nf = g.full_len();
    let nh = g.half_len();
    let nt = drive.time.len();
    let omega = f1.omega.clone();
    let n_w = omega.len();
    let dv = g.cell_volume();

    // linear forces on the full grid: the force is real-linear in a real field,
    // so mirrored nodes carry the conjugate series
    let mut lin = vec![Vec::new(); n_w * nf];
    for b in 0..n_w {
        for h in 0..nh {
            let u = linear_force(f1, drive, b, h);
            let f = g.full_of_half(h);
            let fm = g.mirror(f);
            if fm != f {
                lin[b * nf + fm] = u.iter().map(|v| v.conj()).collect();
            }
            lin[b * nf + f] = u;
        }
    }
    let e_full: Vec<Vec<CVec3>> = (0..nf).map(|f| (0..nt).map(|m| drive.at_full(f, m)).collect()).collect();
    // nonzero rank-3 entries: (out b, out k, partner bin, partner k, E node, tensor with index roles fixed)
    struct Term {
        out: usize,
        partner: usize,
        e_node: usize,
        /// `T_{i j k}` with `i` the output, `j` the E index, `k` the X* index.
        t: crate::linalg::CTensor3,
        weight: f64,
    }
    let mut terms = Vec::new();
    if let Some(f2) = couplings.rank2.as_ref() {
        for b in 0..n_w {
            for k in 0..nf {
                for b2 in 0..n_w {
                    for f1i in 0..nf {
                        for f2i in 0..nf {
                            // second term: f*_{j i k}(ω, ω₂, k₁, k, k₂)
                            let c = f2.value(b, b2, f1i, k, f2i);
                            if c.max_abs() != 0.0 {
                                let mut t = crate::linalg::CTensor3::ZERO;
                                for i in 0..3 {
                                    for j in 0..3 {
                                        for kk in 0..3 {
                                            t.set(i, j, kk, c.get(j, i, kk).conj());
                                        }
                                    }
                                }
                                terms.push(Term {
                                    out: b * nf + k,
                                    partner: b2 * nf + f2i,
                                    e_node: f1i,
                                    t,
                                    weight: omega.weights[b2] * dv * dv,
                                });
                            }
                            // third term: f*_{k j i}(ω₁, ω, k₂, k₁, k) with ω₁ = ω_{b2}, k₂ = f1i (E), k₁ = f2i (X*)
                            let c = f2.value(b2, b, f1i, f2i, k);
                            if c.max_abs() != 0.0 {
                                let mut t = crate::linalg::CTensor3::ZERO;
                                for i in 0..3 {
                                    for j in 0..3 {
                                        for kk in 0..3 {
                                            // output i, E index j (was k), X* index kk (was j)
                                            t.set(i, j, kk, c.get(j, kk, i).conj());
                                        }
                                    }
                                }
                                terms.push(Term {
                                    out: b * nf + k,
                                    partner: b2 * nf + f2i,
                                    e_node: f1i,
                                    t,
                                    weight: omega.weights[b2] * dv * dv,
                                });
                            }
                        }
                    }
                }
            }
        }
    }
    let w2: Vec<f64> = (0..n_w * nf).map(|i| omega.nodes[i / nf].powi(2)).collect();
    let mut accel = |x: &[CVec3], t: f64, a: &mut [CVec3]| {
        for (i, ai) in a.iter_mut().enumerate() {
            *ai = interp.eval(&lin[i], t) - x[i].scale_re(w2[i]);
        }
        if terms.is_empty() {
            return;
        }
        let e_now: Vec<CVec3> = e_full.iter().map(|s| interp.eval(s, t)).collect();
        for term in &terms {
            a[term.out] += term.t.contract(e_now[term.e_node], x[term.partner].conj()).scale_re(term.weight);
        }
    };
    let n_state = n_w * nf;
    let mut x = vec![CVec3::ZERO; n_state];
    let mut q = vec![CVec3::ZERO; n_state];
    let mut t = drive.time.nodes[0];
    let mut xs = vec![CVec3::ZERO; n_state * nt];
    let mut qs = vec![CVec3::ZERO; n_state * nt];
    for m in 1..nt {
        for _ in 0..sub {
            yoshida_step(&mut x, &mut q, &mut t, h_step, &mut accel);
        }
        t = drive.time.nodes[m];
        for i in 0..n_state {
            if !(x[i].max_abs().is_finite() && q[i].max_abs().is_finite()) {
                return Err(Error::Numerical(format!(
                    "bath integration became unstable at t = {t}; reduce the rank-3 coupling or the step"
                )));
            }
            xs[i * nt + m] = x[i];
            qs[i * nt + m] = q[i];
        }
    }
    Ok(BathTrajectory {
        kind: f1.kind,
        omega,
        kgrid: g,
        time: drive.time.clone(),
        full_k: true,
        x: xs,
        q: qs,
    })
}

/// `P(k, t) = ∫dω₁ ∫d³k₁ f(ω₁, k, k₁) X_{ω₁}(k₁, t)` from a half-grid trajectory.
pub fn density_from_bath(coupling: &CouplingTensor1, traj: &BathTrajectory) -> Result<TimeField> {
    if traj.full_k || traj.kgrid.counts != coupling.kgrid.counts {
        return Err(Error::Shape("density_from_bath needs a half-grid trajectory on the coupling grid".into()));
    }
    let g = traj.kgrid.clone();
    let nt = traj.time.len();
    let nf = g.full_len();
    let dv = g.cell_volume();
    let x_full = |b: usize, f: usize, m: usize| {
        let (h, mirrored) = g.half_of_full(f);
        let v = traj.x_at(b, h, m);
        if mirrored {
            v.conj()
        } else {
            v
        }
    };
    let rows = map_range(g.half_len(), |h| {
        let fh = g.full_of_half(h);
        (0..nt)
            .map(|m| {
                let mut acc = CVec3::ZERO;
                for b in 0..traj.omega.len() {
                    let w = traj.omega.weights[b];
                    match coupling.local(b) {
                        Some(f) => acc += f.mul_vec(traj.x_at(b, h, m)).scale_re(w),
                        None => {
                            for f1 in 0..nf {
                                let v = coupling.value(b, fh, f1);
                                if v.max_abs() != 0.0 {
                                    acc += v.mul_vec(x_full(b, f1, m)).scale_re(w * dv);
                                }
                            }
                        }
                    }
                }
                acc
            })
            .collect::<Vec<_>>()
    });
    Ok(TimeField {
        kgrid: g,
        time: traj.time.clone(),
        data: rows.into_iter().flatten().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grids::{build_frequency_grid, build_kgrid, QuadratureRule};
    use crate::medium::{make_coupling1, make_coupling2, Lorentzian, Parametrization1, Parametrization2};
    use crate::noise::sample_modes;

    fn setup(n_w: usize, counts: [usize; 3]) -> (Arc<FrequencyGrid>, Arc<KGrid>, CouplingTensor1) {
        let w = Arc::new(build_frequency_grid(2.0, n_w, QuadratureRule::Harmonic).unwrap());
        let g = Arc::new(build_kgrid([1.0; 3], counts).unwrap());
        let l = Lorentzian::new(0.7, 1.2, 0.5).unwrap();
        let c = make_coupling1(FieldKind::Electric, Parametrization1::IsotropicLorentzian(l), w.clone(), g.clone()).unwrap();
        (w, g, c)
    }

    fn smooth_drive(g: Arc<KGrid>, time: TimeGrid, amp: f64, freq: f64) -> TimeField {
        let mut e = TimeField::zeros(g.clone(), time.clone());
        let nt = time.len();
        for h in 0..g.half_len() {
            for m in 0..nt {
                let t = time.nodes[m];
                // switched on smoothly from zero
                let s = (1.0 - (-t * t).exp()) * amp;
                let z = if g.self_paired[h] {
                    C64::new(s * (freq * t).sin(), 0.0)
                } else {
                    C64::from_polar(s, freq * t + h as f64)
                };
                e.data[h * nt + m] = CVec3([z, z * 0.5, C64::new(0.0, 0.0)]);
            }
        }
        e
    }

    #[test]
    fn zero_drive_from_rest_stays_zero() {
        let (_, g, c) = setup(3, [1, 1, 2]);
        let t = TimeGrid::uniform(0.01, 0, 200).unwrap();
        let e = TimeField::zeros(g, t);
        let traj = integrate_bath_linear(&c, &e, 0.01, None).unwrap();
        assert!(traj.x.iter().all(|v| *v == CVec3::ZERO));
        let fo = first_order_solution(&c, &e, None).unwrap();
        assert!(fo.x.iter().all(|v| *v == CVec3::ZERO));
    }

    #[test]
    fn step_limit_is_enforced() {
        let (_, g, c) = setup(3, [1, 1, 2]);
        let t = TimeGrid::uniform(0.2, 0, 20).unwrap();
        let e = TimeField::zeros(g, t);
        assert!(matches!(integrate_bath_linear(&c, &e, 0.2, None), Err(Error::Stability { .. })));
    }

    #[test]
    fn free_oscillation_conserves_energy() {
        let (w, g, c) = setup(2, [1, 1, 1]);
        let r = sample_modes(w.clone(), g.clone(), 3, 1.0).unwrap();
        // 100 periods of the slowest mode
        let period = 2.0 * std::f64::consts::PI / w.nodes[0];
        let dt = 0.0025;
        let n = (100.0 * period / dt).round() as usize;
        let t = TimeGrid::uniform(dt, 0, n + 1).unwrap();
        let e = TimeField::zeros(g, t);
        let traj = integrate_bath_linear(&c, &e, dt, Some(&r)).unwrap();
        let en = traj.energy();
        let drift = en.iter().map(|x| (x - en[0]).abs()).fold(0.0, f64::max) / en[0];
        assert!(drift < 1e-8, "{drift}");
        // and the phase follows the free solution
        let free = first_order_solution(&c, &traj_drive(&traj), Some(&r)).unwrap();
        assert!(relative_rms(&traj, &free).unwrap() < 1e-6);
    }

    fn traj_drive(traj: &BathTrajectory) -> TimeField {
        TimeField::zeros(traj.kgrid.clone(), traj.time.clone())
    }

    #[test]
    fn constant_drive_closed_form() {
        let (w, g, c) = setup(2, [1, 1, 1]);
        let t = TimeGrid::uniform(0.01, 0, 1001).unwrap();
        let mut e = TimeField::zeros(g, t.clone());
        for v in e.data.iter_mut() {
            *v = CVec3::from_real([1.0, 0.0, 0.0]);
        }
        let fo = first_order_solution(&c, &e, None).unwrap();
        let f = c.local(1).unwrap().adjoint().mul_vec(CVec3::from_real([1.0, 0.0, 0.0]));
        let om = w.nodes[1];
        for m in [10, 500, 1000] {
            let expect = f.scale_re((1.0 - (om * t.nodes[m]).cos()) / (om * om));
            assert!((fo.x_at(1, 0, m) - expect).max_abs() < 1e-5);
        }
    }

    #[test]
    fn ode_matches_convolution_solution() {
        let (w, g, c) = setup(3, [1, 1, 2]);
        let r = sample_modes(w, g.clone(), 8, 1.0).unwrap();
        let t = TimeGrid::uniform(0.002, 0, 5001).unwrap();
        let e = smooth_drive(g, t, 0.8, 1.3);
        let ode = integrate_bath_linear(&c, &e, 0.002, Some(&r)).unwrap();
        let conv = first_order_solution(&c, &e, Some(&r)).unwrap();
        assert!(relative_rms(&ode, &conv).unwrap() < 1e-6);
    }

    #[test]
    fn integration_is_time_reversible() {
        let mut x = vec![CVec3::from_real([1.0, 0.0, -0.5])];
        let mut q = vec![CVec3::from_real([0.0, 0.3, 0.0])];
        let (x0, q0) = (x.clone(), q.clone());
        let mut t = 0.0;
        let mut accel = |x: &[CVec3], t: f64, a: &mut [CVec3]| {
            a[0] = CVec3::from_real([t.sin(), (0.5 * t).cos(), 0.0]) - x[0].scale_re(2.0);
        };
        for _ in 0..1000 {
            yoshida_step(&mut x, &mut q, &mut t, 0.01, &mut accel);
        }
        for _ in 0..1000 {
            yoshida_step(&mut x, &mut q, &mut t, -0.01, &mut accel);
        }
        assert!((x[0] - x0[0]).max_abs() < 1e-11);
        assert!((q[0] - q0[0]).max_abs() < 1e-11);
        assert!(t.abs() < 1e-12);
    }

    #[test]
    fn nonlinear_reduces_to_linear_and_scales() {
        let (w, g, c) = setup(2, [1, 1, 3]);
        let t = TimeGrid::uniform(0.01, 0, 801).unwrap();
        let e = smooth_drive(g.clone(), t, 0.5, 0.9);
        let lin = integrate_bath_linear(&c, &e, 0.01, None).unwrap();
        let only_linear = Couplings {
            rank1: Some(c.clone()),
            rank2: None,
        };
        let nl0 = integrate_bath_nonlinear(&only_linear, &e, 0.01).unwrap();
        for b in 0..w.len() {
            for h in 0..g.half_len() {
                let f = g.full_of_half(h);
                for m in 0..e.time.len() {
                    assert!((nl0.x_at(b, f, m) - lin.x_at(b, h, m)).max_abs() < 1e-13);
                }
            }
        }
        let mut d = [0.0; 27];
        d[0] = 1.0;
        d[4] = 0.5;
        d[14] = -0.3;
        let dev = |alpha: f64| {
            let cc = Couplings {
                rank1: Some(c.clone()),
                rank2: Some(
                    make_coupling2(
                        FieldKind::Electric,
                        Parametrization2::LorentzianProduct {
                            lorentzian: Lorentzian::new(alpha, 1.2, 0.5).unwrap(),
                            tensor: d,
                        },
                        w.clone(),
                        g.clone(),
                        true,
                    )
                    .unwrap(),
                ),
            };
            let nl = integrate_bath_nonlinear(&cc, &e, 0.01).unwrap();
            nl.x.iter().zip(&nl0.x).map(|(a, b)| (*a - *b).max_abs()).fold(0.0, f64::max)
        };
        let (d1, d2) = (dev(1e-3), dev(2e-3));
        assert!(d1 > 0.0);
        let slope = (d2 / d1).log2();
        assert!((slope - 1.0).abs() < 0.05, "{slope}");
    }

    #[test]
    fn bath_density_reproduces_convolution() {
        use crate::fields::polarization_eval;
        use crate::susceptibility::{build_kernel_time, KernelOptions};
        let (_, g, c) = setup(4, [1, 1, 2]);
        let t = TimeGrid::uniform(0.005, 0, 2001).unwrap();
        let e = smooth_drive(g, t.clone(), 1.0, 0.7);
        let conv = first_order_solution(&c, &e, None).unwrap();
        let p_bath = density_from_bath(&c, &conv).unwrap();
        let couplings = Couplings {
            rank1: Some(c),
            rank2: None,
        };
        let kernel = build_kernel_time(FieldKind::Electric, 1, &couplings, &t, KernelOptions::default()).unwrap();
        let p = polarization_eval(&e, Some(&kernel), None, None).unwrap();
        let scale = p.data.iter().map(|v| v.max_abs()).fold(0.0, f64::max);
        assert!(p.max_abs_diff(&p_bath) < 1e-10 * scale);
    }
}
