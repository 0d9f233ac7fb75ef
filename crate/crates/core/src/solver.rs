//! Order-by-order solution of the frequency-domain field equation.
//!
//! With `N(Ẽ)` the susceptibility terms, the field equation reads
//! `Λ Ẽ + N(Ẽ) = J̃` and each order applies `Ẽ⁽ⁿ⁾ = Λ⁻¹ (J̃⁽ⁿ⁻¹⁾ - N(Ẽ⁽ⁿ⁻¹⁾))`.
//! Fields live on the half k grid × `±ω_b`; the frequency kernels are
//! sampled on the same signed axis.

use crate::fields::magnetic_from_electric;
use crate::grids::{FrequencyGrid, KGrid};
use crate::linalg::{dot, CMat3, CVec3, Vec3, C64};
use crate::medium::{FieldKind, Medium};
use crate::noise::SourceModel;
use crate::par::map_range;
use crate::spectra::Spectrum;
use crate::susceptibility::{build_modes, frequency_kernel, KernelData, SusceptibilityKernel};
use crate::units::{complex_frequency, Conventions, Units};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// `Λ = k kᵀ - k² I + ((ω - iη)²/c²) I`.
pub fn assemble_lambda(k: Vec3, omega: f64, eta: f64, c: f64) -> CMat3 {
    let w = complex_frequency(omega, eta);
    let d = w * w / (c * c);
    let k2 = dot(k, k);
    let mut m = CMat3::outer_real(k, k);
    for i in 0..3 {
        m.0[i][i] += d - k2;
    }
    m
}

/// Closed-form inverse through the longitudinal and transverse projectors.
pub fn invert_lambda(k: Vec3, omega: f64, eta: f64, c: f64) -> Result<CMat3> {
    let w = complex_frequency(omega, eta);
    let w2 = w * w;
    let k2 = dot(k, k);
    let ck2 = c * c * k2;
    let scale = w2.norm().max(ck2).max(f64::MIN_POSITIVE);
    let transverse = w2 - ck2;
    if w2.norm() <= 1e-14 * scale || (k2 > 0.0 && transverse.norm() <= 1e-14 * scale) {
        return Err(Error::Singular { k, omega });
    }
    let long = C64::new(c * c, 0.0) / w2;
    if k2 == 0.0 {
        return Ok(CMat3::identity().scale(long));
    }
    let pl = CMat3::outer_real(k, k) * (1.0 / k2);
    let pt = CMat3::identity() - pl;
    Ok(pl.scale(long) + pt.scale(C64::new(c * c, 0.0) / transverse))
}

/// `Λ` and `Λ⁻¹` tabulated over half nodes × signed bins.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaOperator {
    pub eta: f64,
    /// `[h][s]`, same layout as [`Spectrum`].
    pub lambda: Vec<CMat3>,
    pub inverse: Vec<CMat3>,
}

impl LambdaOperator {
    pub fn build(kgrid: &KGrid, omega: &FrequencyGrid, eta: f64, c: f64) -> Result<Self> {
        let n = omega.len();
        let mut lambda = Vec::with_capacity(kgrid.half_len() * 2 * n);
        let mut inverse = Vec::with_capacity(lambda.capacity());
        for &k in &kgrid.half_nodes {
            for s in 0..2 * n {
                let w = signed_node(omega, s);
                lambda.push(assemble_lambda(k, w, eta, c));
                inverse.push(invert_lambda(k, w, eta, c)?);
            }
        }
        Ok(Self { eta, lambda, inverse })
    }

    pub fn apply(&self, e: &Spectrum) -> Spectrum {
        apply_table(&self.lambda, e)
    }

    pub fn apply_inverse(&self, e: &Spectrum) -> Spectrum {
        apply_table(&self.inverse, e)
    }

    /// Largest `|Λ Λ⁻¹ - I|` over the table.
    pub fn identity_violation(&self) -> f64 {
        self.lambda
            .iter()
            .zip(&self.inverse)
            .map(|(a, b)| a.matmul(b).max_abs_diff(&CMat3::identity()))
            .fold(0.0, f64::max)
    }
}

fn apply_table(table: &[CMat3], e: &Spectrum) -> Spectrum {
    Spectrum {
        data: table.iter().zip(&e.data).map(|(m, v)| m.mul_vec(*v)).collect(),
        ..e.clone()
    }
}

fn signed_node(omega: &FrequencyGrid, s: usize) -> f64 {
    let n = omega.len();
    if s < n {
        omega.nodes[s]
    } else {
        -omega.nodes[s - n]
    }
}

/// The solver's frequency axis: `+ω_b` then `-ω_b`.
pub fn signed_axis(omega: &FrequencyGrid) -> Vec<f64> {
    (0..2 * omega.len()).map(|s| signed_node(omega, s)).collect()
}

/// Signed-axis index of `ω_s - ω_j` on a harmonic grid (`ω_b = (b+1)Δ`), if stored.
fn difference_sample(s: usize, j: usize, n: usize) -> Option<usize> {
    if s < n {
        match s.cmp(&j) {
            std::cmp::Ordering::Greater => Some(s - j - 1),
            std::cmp::Ordering::Less => Some(n + j - s - 1),
            std::cmp::Ordering::Equal => None,
        }
    } else {
        let b = s - n + j + 1;
        (b < n).then_some(n + b)
    }
}

/// Frequency-domain susceptibilities on the signed axis.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyKernels {
    pub omega: Arc<FrequencyGrid>,
    pub kgrid: Arc<KGrid>,
    pub chi1: Option<SusceptibilityKernel>,
    pub chi2: Option<SusceptibilityKernel>,
    pub zeta1: Option<SusceptibilityKernel>,
    pub zeta2: Option<SusceptibilityKernel>,
}

impl FrequencyKernels {
    pub fn empty(omega: Arc<FrequencyGrid>, kgrid: Arc<KGrid>) -> Self {
        Self {
            omega,
            kgrid,
            chi1: None,
            chi2: None,
            zeta1: None,
            zeta2: None,
        }
    }

    /// Kernels of every coupling present in `medium`, by the analytic transform.
    pub fn from_medium(
        medium: &Medium,
        omega: Arc<FrequencyGrid>,
        kgrid: Arc<KGrid>,
        eta: f64,
        conventions: &Conventions,
    ) -> Result<Self> {
        let axis = signed_axis(&omega);
        let mut out = Self::empty(omega, kgrid);
        let build = |kind: FieldKind, rank: usize| -> Result<Option<SusceptibilityKernel>> {
            let couplings = medium.couplings(kind);
            let present = if rank == 1 {
                couplings.rank1.is_some()
            } else {
                couplings.rank2.is_some()
            };
            if !present {
                return Ok(None);
            }
            let modes = build_modes(kind, rank, couplings)?;
            frequency_kernel(&modes, &axis, eta, conventions).map(Some)
        };
        out.chi1 = build(FieldKind::Electric, 1)?;
        out.chi2 = build(FieldKind::Electric, 2)?;
        out.zeta1 = build(FieldKind::Magnetic, 1)?;
        out.zeta2 = build(FieldKind::Magnetic, 2)?;
        out.check()?;
        Ok(out)
    }

    pub fn is_empty(&self) -> bool {
        self.chi1.is_none() && self.chi2.is_none() && self.zeta1.is_none() && self.zeta2.is_none()
    }

    pub fn is_linear(&self) -> bool {
        self.chi2.is_none() && self.zeta2.is_none()
    }

    fn all(&self) -> impl Iterator<Item = (&SusceptibilityKernel, usize)> {
        [(&self.chi1, 1), (&self.chi2, 2), (&self.zeta1, 1), (&self.zeta2, 2)]
            .into_iter()
            .filter_map(|(k, r)| k.as_ref().map(|k| (k, r)))
    }

    pub fn check(&self) -> Result<()> {
        let ns = 2 * self.omega.len();
        for (k, rank) in self.all() {
            if k.rank != rank || k.n_samples() != ns || k.kgrid.counts != self.kgrid.counts {
                return Err(Error::Shape(format!(
                    "{} rank-{} kernel with {} samples on {:?}, expected rank {rank}, {ns} samples on {:?}",
                    k.kind.label(),
                    k.rank + 1,
                    k.n_samples(),
                    k.kgrid.counts,
                    self.kgrid.counts
                )));
            }
        }
        Ok(())
    }

    /// Copy with the rank-2 kernels multiplied by `linear` and the rank-3
    /// kernels by `nonlinear`.
    pub fn scaled(&self, linear: f64, nonlinear: f64) -> Self {
        let scale = |k: &Option<SusceptibilityKernel>, s: f64| {
            k.as_ref().map(|k| {
                let mut k = k.clone();
                match &mut k.data {
                    KernelData::Rank1(v) => v.iter_mut().for_each(|m| *m = *m * s),
                    KernelData::Rank2(v) => v.iter_mut().for_each(|t| *t = t.scale(s.into())),
                }
                k
            })
        };
        Self {
            chi1: scale(&self.chi1, linear),
            chi2: scale(&self.chi2, nonlinear),
            zeta1: scale(&self.zeta1, linear),
            zeta2: scale(&self.zeta2, nonlinear),
            ..self.clone()
        }
    }

    /// Per-bin linear operator `A` with `N(Ẽ) = A Ẽ`, for homogeneous rank-2
    /// kernels: `(2π)^{3/2} μ₀ [ω² χ̃ - [k]ₓ ζ̃ [k]ₓ]`.
    pub fn linear_operator(&self, h: usize, s: usize, units: &Units, conventions: &Conventions) -> Option<CMat3> {
        let pref = conventions.field_equation_prefactor() * units.mu0;
        let w = signed_node(&self.omega, s);
        let mut a = CMat3::ZERO;
        if let Some(k) = &self.chi1 {
            if !k.homogeneous {
                return None;
            }
            a += k.block1(s)[0] * (pref * w * w);
        }
        if let Some(k) = &self.zeta1 {
            if !k.homogeneous {
                return None;
            }
            let kx = CMat3::cross_matrix(self.kgrid.half_nodes[h]);
            a += kx.matmul(&k.block1(s)[0]).matmul(&kx) * (-pref);
        }
        Some(a)
    }

    /// Largest Frobenius norm of `Λ⁻¹ A` over all bins; bounds the per-order
    /// contraction of the linear recurrence. `None` for tabulated kernels.
    pub fn contraction_norm(&self, lambda: &LambdaOperator, units: &Units, conventions: &Conventions) -> Option<f64> {
        let ns = 2 * self.omega.len();
        let mut worst: f64 = 0.0;
        for h in 0..self.kgrid.half_len() {
            for s in 0..ns {
                let a = self.linear_operator(h, s, units, conventions)?;
                worst = worst.max(lambda.inverse[h * ns + s].matmul(&a).frobenius());
            }
        }
        Some(worst)
    }
}

/// `∫d³k₁ χ(ω, k, k₁) F(k₁, ω) + ∫d³k₁ d³k₂ ∫₀^∞ dω₁ χ(ω₁, ω-ω₁, …) F(k₁, ω₁) F(k₂, ω-ω₁)`
/// without the field-equation prefactors.
pub fn response(
    field: &Spectrum,
    rank1: Option<&SusceptibilityKernel>,
    rank2: Option<&SusceptibilityKernel>,
) -> Result<Spectrum> {
    let g = field.kgrid.clone();
    let n = field.n_omega();
    let ns = 2 * n;
    for k in [rank1, rank2].into_iter().flatten() {
        if k.n_samples() != ns || k.kgrid.counts != g.counts {
            return Err(Error::Shape(format!(
                "kernel with {} samples on {:?} applied to a field with {ns} samples on {:?}",
                k.n_samples(),
                k.kgrid.counts,
                g.counts
            )));
        }
    }
    let nf = g.full_len();
    let dv = g.cell_volume();
    let at = |f: usize, s: usize| field.at_full(f, s % n, s >= n);
    let rows = map_range(g.half_len(), |h| {
        let fh = g.full_of_half(h);
        let mut out = vec![CVec3::ZERO; ns];
        for (s, o) in out.iter_mut().enumerate() {
            let mut acc = CVec3::ZERO;
            if let Some(k1) = rank1 {
                let block = k1.block1(s);
                if k1.homogeneous {
                    acc += block[0].mul_vec(field.data[h * ns + s]);
                } else {
                    for f1 in 0..nf {
                        acc += block[fh * nf + f1].mul_vec(at(f1, s)).scale_re(dv);
                    }
                }
            }
            if let Some(k2) = rank2 {
                for j in 0..n {
                    let Some(s2) = difference_sample(s, j, n) else {
                        continue;
                    };
                    let block = k2.block2(j, s2);
                    let wj = field.omega.weights[j];
                    if k2.homogeneous {
                        let c = block[0];
                        for f1 in 0..nf {
                            if let Some(f2) = g.difference_index(fh, f1) {
                                acc += c.contract(at(f1, j), at(f2, s2)).scale_re(wj * dv);
                            }
                        }
                    } else {
                        for f1 in 0..nf {
                            let a = at(f1, j);
                            for f2 in 0..nf {
                                let c = &block[(fh * nf + f1) * nf + f2];
                                acc += c.contract(a, at(f2, s2)).scale_re(wj * dv * dv);
                            }
                        }
                    }
                }
            }
            *o = acc;
        }
        out
    });
    Ok(Spectrum {
        data: rows.into_iter().flatten().collect(),
        ..field.clone()
    })
}

/// Susceptibility terms of the field equation,
/// `(2π)^{3/2} μ₀ [ω² R_χ(Ẽ) + ω k × R_ζ(B̃)]` with `B̃ = k × Ẽ / (-ω)`.
pub fn medium_terms(e: &Spectrum, kernels: &FrequencyKernels, units: &Units, conventions: &Conventions) -> Result<Spectrum> {
    let mut out = Spectrum::zeros(e.kgrid.clone(), e.omega.clone());
    if kernels.is_empty() {
        return Ok(out);
    }
    if e.kgrid.counts != kernels.kgrid.counts || e.n_omega() != kernels.omega.len() {
        return Err(Error::Shape("field and kernel grids differ".into()));
    }
    let pref = conventions.field_equation_prefactor() * units.mu0;
    let n = e.n_omega();
    let re = (kernels.chi1.is_some() || kernels.chi2.is_some())
        .then(|| response(e, kernels.chi1.as_ref(), kernels.chi2.as_ref()))
        .transpose()?;
    let rm = (kernels.zeta1.is_some() || kernels.zeta2.is_some())
        .then(|| response(&magnetic_from_electric(e), kernels.zeta1.as_ref(), kernels.zeta2.as_ref()))
        .transpose()?;
    for h in 0..e.kgrid.half_len() {
        let k = e.kgrid.half_nodes[h];
        for s in 0..2 * n {
            let w = signed_node(&e.omega, s);
            let i = h * 2 * n + s;
            let mut v = CVec3::ZERO;
            if let Some(r) = &re {
                v += r.data[i].scale_re(w * w);
            }
            if let Some(r) = &rm {
                v += CVec3::cross_real(k, r.data[i]).scale_re(w);
            }
            out.data[i] = v.scale_re(pref);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub max_order: usize,
    /// Relative sup-norm change that counts as converged.
    pub tolerance: f64,
    /// Pole regularization; `None` means `0.01·ω_max`.
    pub eta: Option<f64>,
    /// Under-relaxation factor in `(0, 1]`.
    pub damping: f64,
    /// Consecutive orders below tolerance required.
    pub convergence_window: usize,
    /// Orders over which a 10× growth of the field sup-norm signals divergence.
    pub divergence_window: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_order: 50,
            tolerance: 1e-8,
            eta: None,
            damping: 1.0,
            convergence_window: 1,
            divergence_window: 5,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(Error::Config(format!("solver.tolerance must be positive, got {}", self.tolerance)));
        }
        if let Some(eta) = self.eta {
            if !(eta > 0.0 && eta.is_finite()) {
                return Err(Error::Config(format!("solver.eta must be positive, got {eta}")));
            }
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::Config(format!("solver.damping must lie in (0, 1], got {}", self.damping)));
        }
        if self.convergence_window == 0 || self.divergence_window == 0 {
            return Err(Error::Config("solver windows must be at least 1".into()));
        }
        Ok(())
    }

    pub fn eta_for(&self, omega: &FrequencyGrid) -> f64 {
        self.eta.unwrap_or(0.01 * omega.omega_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderRecord {
    pub order: usize,
    /// Relative sup-norm change from the previous order (0 at order 0).
    pub sup_change: f64,
    /// L² residual of the field equation.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub order: usize,
    pub e: Spectrum,
    pub history: Vec<OrderRecord>,
}

/// Inputs shared by every order.
pub struct Problem<'a> {
    pub kernels: &'a FrequencyKernels,
    pub lambda: &'a LambdaOperator,
    pub units: Units,
    pub conventions: Conventions,
}

impl Problem<'_> {
    /// `‖Λ Ẽ + N(Ẽ) - J̃‖₂`.
    pub fn residual(&self, e: &Spectrum, j: &Spectrum) -> Result<f64> {
        let mut lhs = self.lambda.apply(e);
        let n = medium_terms(e, self.kernels, &self.units, &self.conventions)?;
        for ((l, a), b) in lhs.data.iter_mut().zip(&n.data).zip(&j.data) {
            *l = *l + *a - *b;
        }
        Ok(lhs.l2_norm())
    }

    pub fn zero_order(&self, j0: &Spectrum) -> Result<FieldState> {
        let e = self.lambda.apply_inverse(j0);
        let residual = self.residual(&e, j0)?;
        Ok(FieldState {
            order: 0,
            e,
            history: vec![OrderRecord {
                order: 0,
                sup_change: 0.0,
                residual,
            }],
        })
    }

    /// One application of the recurrence, blended with the previous iterate
    /// when `damping < 1`.
    pub fn iterate_order(&self, prev: &FieldState, j: &Spectrum, damping: f64) -> Result<FieldState> {
        let n = medium_terms(&prev.e, self.kernels, &self.units, &self.conventions)?;
        let mut rhs = j.clone();
        for (r, a) in rhs.data.iter_mut().zip(&n.data) {
            *r = *r - *a;
        }
        let mut e = self.lambda.apply_inverse(&rhs);
        if damping != 1.0 {
            for (x, p) in e.data.iter_mut().zip(&prev.e.data) {
                *x = x.scale_re(damping) + p.scale_re(1.0 - damping);
            }
        }
        Ok(FieldState {
            order: prev.order + 1,
            e,
            history: prev.history.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutcome {
    pub state: FieldState,
    pub converged: bool,
    /// Source of the last order, for residual checks.
    pub source: Spectrum,
}

pub fn relative_change(new: &Spectrum, old: &Spectrum) -> f64 {
    let d = new.max_abs_diff(old);
    let s = new.sup_norm().max(old.sup_norm());
    if s == 0.0 {
        0.0
    } else {
        d / s
    }
}

/// Zero order, then the recurrence until the relative change stays below
/// tolerance for `convergence_window` orders or `max_order` is reached.
pub fn solve(config: &SolverConfig, problem: &Problem, source: &dyn SourceModel) -> Result<SolveOutcome> {
    config.validate()?;
    let mut j = source.source(None)?;
    let mut state = problem.zero_order(&j)?;
    let stationary = problem.kernels.is_empty() && !source.field_dependent();
    if stationary || config.max_order == 0 {
        return Ok(SolveOutcome {
            converged: stationary,
            state,
            source: j,
        });
    }
    let mut below = 0;
    let mut norms = vec![state.e.sup_norm()];
    while state.order < config.max_order {
        if source.field_dependent() {
            j = source.source(Some(&state.e))?;
        }
        let mut next = problem.iterate_order(&state, &j, config.damping)?;
        let change = relative_change(&next.e, &state.e);
        let residual = problem.residual(&next.e, &j)?;
        next.history.push(OrderRecord {
            order: next.order,
            sup_change: change,
            residual,
        });
        let order = next.order;
        state = next;
        let norm = state.e.sup_norm();
        norms.push(norm);
        if !norm.is_finite() || !change.is_finite() {
            return Err(Error::Divergence {
                order,
                from: norms[0],
                to: norm,
                history: state.history,
            });
        }
        let w = config.divergence_window;
        if norms.len() > w {
            let from = norms[norms.len() - 1 - w];
            if norm > 10.0 * from {
                return Err(Error::Divergence {
                    order,
                    from,
                    to: norm,
                    history: state.history,
                });
            }
        }
        below = if change < config.tolerance { below + 1 } else { 0 };
        if below >= config.convergence_window {
            return Ok(SolveOutcome {
                state,
                converged: true,
                source: j,
            });
        }
    }
    Ok(SolveOutcome {
        state,
        converged: false,
        source: j,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grids::{build_frequency_grid, build_kgrid, QuadratureRule};
    use crate::linalg::levi_civita;
    use crate::medium::{make_coupling1, Couplings, Lorentzian, Parametrization1};
    use crate::noise::FixedSource;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn lambda_examples() {
        let m = assemble_lambda([0.0, 0.0, 1.0], 2.0, 0.0, 1.0);
        let expect = CMat3::diag([3.0.into(), 3.0.into(), 4.0.into()]);
        assert!(m.max_abs_diff(&expect) < 1e-15);
        let m = assemble_lambda([0.0; 3], 1.0, 0.0, 1.0);
        assert!(m.max_abs_diff(&CMat3::identity()) < 1e-15);
        let inv = invert_lambda([0.0, 0.0, 1.0], 2.0, 0.0, 1.0).unwrap();
        let expect = CMat3::diag([(1.0 / 3.0).into(), (1.0 / 3.0).into(), 0.25.into()]);
        assert!(inv.max_abs_diff(&expect) < 1e-15);
        assert!(matches!(
            invert_lambda([0.0, 0.0, 1.5], 1.5, 0.0, 1.0),
            Err(Error::Singular { .. })
        ));
        assert!(invert_lambda([0.0, 0.0, 1.5], 1.5, 0.01, 1.0).is_ok());
    }

    #[test]
    fn lambda_matches_levi_civita_contraction() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let k: Vec3 = [0; 3].map(|_| rng.gen_range(-2.0..2.0));
            let (w, eta, c) = (rng.gen_range(-3.0..3.0), rng.gen_range(0.0..0.5), rng.gen_range(0.5..2.0));
            let z = complex_frequency(w, eta);
            let mut brute = CMat3::ZERO;
            for i in 0..3 {
                for i1 in 0..3 {
                    let mut acc = 0.0;
                    for j in 0..3 {
                        for m in 0..3 {
                            for n in 0..3 {
                                acc += levi_civita(i, j, m) * levi_civita(m, n, i1) * k[j] * k[n];
                            }
                        }
                    }
                    brute.0[i][i1] = acc.into();
                }
                brute.0[i][i] += z * z / (c * c);
            }
            let m = assemble_lambda(k, w, eta, c);
            assert!(m.max_abs_diff(&brute) < 1e-13);
            if eta > 1e-3 {
                let inv = invert_lambda(k, w, eta, c).unwrap();
                assert!(m.matmul(&inv).max_abs_diff(&CMat3::identity()) < 1e-10);
            }
        }
    }

    #[test]
    fn difference_samples_on_harmonic_grid() {
        let n = 4;
        let w = build_frequency_grid(4.0, n, QuadratureRule::Harmonic).unwrap();
        let axis = signed_axis(&w);
        for s in 0..2 * n {
            for j in 0..n {
                let target = axis[s] - axis[j];
                match difference_sample(s, j, n) {
                    Some(s2) => assert!((axis[s2] - target).abs() < 1e-12),
                    None => assert!(target.abs() < 1e-12 || target.abs() > 4.0 + 1e-12),
                }
            }
        }
    }

    /// Linear medium rescaled so the contraction norm equals `target`.
    fn linear_setup(target: f64) -> (Arc<FrequencyGrid>, Arc<KGrid>, FrequencyKernels, LambdaOperator) {
        let strength = 1.0;
        let w = Arc::new(build_frequency_grid(3.0, 6, QuadratureRule::Harmonic).unwrap());
        let g = Arc::new(build_kgrid([2.0; 3], [3, 3, 2]).unwrap());
        let l = Lorentzian::new(strength, 1.5, 0.5).unwrap();
        let medium = Medium {
            electric: Couplings {
                rank1: Some(make_coupling1(FieldKind::Electric, Parametrization1::IsotropicLorentzian(l), w.clone(), g.clone()).unwrap()),
                rank2: None,
            },
            magnetic: Couplings {
                rank1: Some(
                    make_coupling1(FieldKind::Magnetic, Parametrization1::IsotropicLorentzian(l), w.clone(), g.clone()).unwrap(),
                ),
                rank2: None,
            },
        };
        let conv = Conventions::default();
        let kernels = FrequencyKernels::from_medium(&medium, w.clone(), g.clone(), 0.1, &conv).unwrap();
        let lambda = LambdaOperator::build(&g, &w, 0.1, 1.0).unwrap();
        let norm = kernels.contraction_norm(&lambda, &Units::default(), &conv).unwrap();
        (w, g, kernels.scaled(target / norm, 1.0), lambda)
    }

    fn random_source(g: &Arc<KGrid>, w: &Arc<FrequencyGrid>, seed: u64) -> Spectrum {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = Spectrum::zeros(g.clone(), w.clone());
        for v in s.data.iter_mut() {
            *v = CVec3([0; 3].map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))));
        }
        s
    }

    #[test]
    fn zero_medium_is_stationary_at_order_zero() {
        let w = Arc::new(build_frequency_grid(3.0, 6, QuadratureRule::Harmonic).unwrap());
        let g = Arc::new(build_kgrid([2.0; 3], [3, 3, 2]).unwrap());
        let kernels = FrequencyKernels::empty(w.clone(), g.clone());
        let lambda = LambdaOperator::build(&g, &w, 0.03, 1.0).unwrap();
        let p = Problem {
            kernels: &kernels,
            lambda: &lambda,
            units: Units::default(),
            conventions: Conventions::default(),
        };
        let j = random_source(&g, &w, 1);
        let out = solve(&SolverConfig::default(), &p, &FixedSource(j.clone())).unwrap();
        assert!(out.converged);
        assert_eq!(out.state.order, 0);
        assert!(p.residual(&out.state.e, &j).unwrap() < 1e-10 * j.l2_norm());
        let zero = Spectrum::zeros(g, w);
        assert!((p.residual(&zero, &j).unwrap() - j.l2_norm()).abs() < 1e-12 * j.l2_norm());
    }

    #[test]
    fn single_point_zero_order() {
        let w = Arc::new(build_frequency_grid(4.0, 2, QuadratureRule::Harmonic).unwrap());
        let g = Arc::new(build_kgrid([2.0, 2.0, 2.0], [1, 1, 2]).unwrap());
        let lambda = LambdaOperator::build(&g, &w, 0.0, 1.0).unwrap();
        let kernels = FrequencyKernels::empty(w.clone(), g.clone());
        let p = Problem {
            kernels: &kernels,
            lambda: &lambda,
            units: Units::default(),
            conventions: Conventions::default(),
        };
        // k = (0, 0, 1), ω = 2
        let h = g.half_nodes.iter().position(|k| (k[2] - 1.0).abs() < 1e-12).unwrap();
        let mut j = Spectrum::zeros(g, w);
        j.set(h, 0, false, CVec3::from_real([1.0, 0.0, 0.0]));
        let e = p.zero_order(&j).unwrap().e;
        assert!((e.get(h, 0, false) - CVec3::from_real([1.0 / 3.0, 0.0, 0.0])).max_abs() < 1e-15);
    }

    #[test]
    fn linear_iteration_is_a_neumann_series() {
        let (w, g, kernels, lambda) = linear_setup(0.5);
        let p = Problem {
            kernels: &kernels,
            lambda: &lambda,
            units: Units::default(),
            conventions: Conventions::default(),
        };
        let j = random_source(&g, &w, 3);
        // per-bin operator A with N(Ẽ) = A Ẽ for homogeneous kernels
        let n = w.len();
        let a_of = |h: usize, s: usize| -> CMat3 {
            kernels.linear_operator(h, s, &Units::default(), &Conventions::default()).unwrap()
        };
        let mut state = p.zero_order(&j).unwrap();
        let mut partial = state.e.clone();
        let mut term = state.e.clone();
        let mut last_res = f64::INFINITY;
        for _ in 0..6 {
            state = p.iterate_order(&state, &j, 1.0).unwrap();
            for h in 0..g.half_len() {
                for s in 0..2 * n {
                    let i = h * 2 * n + s;
                    term.data[i] = -lambda.inverse[i].matmul(&a_of(h, s)).mul_vec(term.data[i]);
                    partial.data[i] += term.data[i];
                }
            }
            assert!(state.e.max_abs_diff(&partial) < 1e-10 * partial.sup_norm());
            let r = p.residual(&state.e, &j).unwrap();
            assert!(r < last_res);
            last_res = r;
        }
        // linearity in J
        let j2 = j.scaled(-2.5);
        let s1 = p.iterate_order(&p.zero_order(&j).unwrap(), &j, 1.0).unwrap();
        let s2 = p.iterate_order(&p.zero_order(&j2).unwrap(), &j2, 1.0).unwrap();
        assert!(s1.e.scaled(-2.5).max_abs_diff(&s2.e) < 1e-12 * s2.e.sup_norm());
    }

    #[test]
    fn strong_coupling_diverges() {
        let (w, g, kernels, lambda) = linear_setup(3.0);
        let p = Problem {
            kernels: &kernels,
            lambda: &lambda,
            units: Units::default(),
            conventions: Conventions::default(),
        };
        let j = random_source(&g, &w, 4);
        let cfg = SolverConfig {
            max_order: 60,
            ..SolverConfig::default()
        };
        match solve(&cfg, &p, &FixedSource(j)) {
            Err(Error::Divergence { history, .. }) => assert!(!history.is_empty()),
            other => panic!("expected divergence, got {:?}", other.map(|o| o.converged)),
        }
    }

    #[test]
    fn weak_coupling_converges_with_damping_too() {
        let (w, g, kernels, lambda) = linear_setup(0.5);
        let p = Problem {
            kernels: &kernels,
            lambda: &lambda,
            units: Units::default(),
            conventions: Conventions::default(),
        };
        let j = random_source(&g, &w, 5);
        let plain = solve(&SolverConfig::default(), &p, &FixedSource(j.clone())).unwrap();
        assert!(plain.converged);
        let damped = solve(
            &SolverConfig {
                damping: 0.7,
                max_order: 200,
                ..SolverConfig::default()
            },
            &p,
            &FixedSource(j.clone()),
        )
        .unwrap();
        assert!(damped.converged);
        assert!(damped.state.e.max_abs_diff(&plain.state.e) < 1e-6 * plain.state.e.sup_norm());
        assert!(plain.state.history.last().unwrap().residual < 1e-6 * j.l2_norm());
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        for bad in [
            SolverConfig {
                tolerance: 0.0,
                ..Default::default()
            },
            SolverConfig {
                eta: Some(0.0),
                ..Default::default()
            },
            SolverConfig {
                damping: 1.5,
                ..Default::default()
            },
        ] {
            assert!(matches!(bad.validate(), Err(Error::Config(_))));
        }
    }
}
