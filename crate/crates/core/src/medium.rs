//! Coupling tensors between the field and the oscillator continua.
//!
//! Rank-2 tensors `f⁽¹⁾_ij(ω, k, k₁)` and rank-3 tensors
//! `f⁽²⁾_ijk(ω₁, ω₂, k, k₁, k₂)` come in two storage forms:
//!
//! * homogeneous: a matrix (or rank-3 tensor) per frequency bin that
//!   multiplies an implicit momentum delta, `δ(k - k₁)` resp. `δ(k - k₁ - k₂)`;
//! * tabulated: dense values over full-grid k indices.
//!
//! Discretely the delta is `δ_{k,k₁} / ΔV`, which is what
//! [`CouplingTensor1::to_tabulated`] materializes.

use crate::grids::{FrequencyGrid, KGrid};
use crate::linalg::{CMat3, CTensor3};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Absolute tolerance for reality and pair-swap validation.
pub const VALIDATION_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldKind {
    Electric,
    Magnetic,
}

impl FieldKind {
    pub fn label(self) -> &'static str {
        match self {
            FieldKind::Electric => "electric",
            FieldKind::Magnetic => "magnetic",
        }
    }
}

/// Lorentzian amplitude profile `s·√(γ/π) / √((ω-ω₀)² + γ²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Lorentzian {
    pub strength: f64,
    pub center: f64,
    pub width: f64,
}

impl Lorentzian {
    pub fn new(strength: f64, center: f64, width: f64) -> Result<Self> {
        let l = Self {
            strength,
            center,
            width,
        };
        l.validate()?;
        Ok(l)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.strength.is_finite() && self.strength >= 0.0) {
            return Err(Error::Parameter(format!(
                "lorentzian strength must be non-negative, got {}",
                self.strength
            )));
        }
        if !(self.width.is_finite() && self.width > 0.0) {
            return Err(Error::Parameter(format!(
                "lorentzian width must be positive, got {}",
                self.width
            )));
        }
        if !self.center.is_finite() {
            return Err(Error::Parameter("lorentzian center must be finite".into()));
        }
        Ok(())
    }

    pub fn amplitude(&self, omega: f64) -> f64 {
        let d = omega - self.center;
        self.strength * (self.width / std::f64::consts::PI).sqrt() / (d * d + self.width * self.width).sqrt()
    }
}

/// Ways to specify a rank-2 coupling.
#[derive(Debug, Clone, PartialEq)]
pub enum Parametrization1 {
    IsotropicLorentzian(Lorentzian),
    AnisotropicDiagonal([Lorentzian; 3]),
    /// One matrix per frequency node, homogeneous in space.
    HomogeneousDense(Vec<CMat3>),
    /// Values indexed `[ω][k][k₁]` over full-grid nodes.
    Tabulated(Vec<CMat3>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Coupling1Data {
    Homogeneous(Vec<CMat3>),
    Tabulated(Vec<CMat3>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingTensor1 {
    pub kind: FieldKind,
    pub omega: Arc<FrequencyGrid>,
    pub kgrid: Arc<KGrid>,
    pub data: Coupling1Data,
}

pub fn make_coupling1(
    kind: FieldKind,
    parametrization: Parametrization1,
    omega: Arc<FrequencyGrid>,
    kgrid: Arc<KGrid>,
) -> Result<CouplingTensor1> {
    let n_w = omega.len();
    let data = match parametrization {
        Parametrization1::IsotropicLorentzian(l) => {
            l.validate()?;
            Coupling1Data::Homogeneous(
                omega
                    .nodes
                    .iter()
                    .map(|&w| CMat3::diag([l.amplitude(w).into(); 3]))
                    .collect(),
            )
        }
        Parametrization1::AnisotropicDiagonal(ls) => {
            for l in &ls {
                l.validate()?;
            }
            Coupling1Data::Homogeneous(
                omega
                    .nodes
                    .iter()
                    .map(|&w| CMat3::diag(ls.map(|l| l.amplitude(w).into())))
                    .collect(),
            )
        }
        Parametrization1::HomogeneousDense(v) => {
            if v.len() != n_w {
                return Err(Error::Shape(format!("expected {n_w} matrices, got {}", v.len())));
            }
            Coupling1Data::Homogeneous(v)
        }
        Parametrization1::Tabulated(v) => {
            let n_k = kgrid.full_len();
            if v.len() != n_w * n_k * n_k {
                return Err(Error::Shape(format!(
                    "tabulated rank-2 coupling needs {} entries, got {}",
                    n_w * n_k * n_k,
                    v.len()
                )));
            }
            Coupling1Data::Tabulated(v)
        }
    };
    let t = CouplingTensor1 {
        kind,
        omega,
        kgrid,
        data,
    };
    if let Some(bad) = t.values().find(|m| m.0.iter().flatten().any(|z| !z.is_finite())) {
        return Err(Error::Parameter(format!("non-finite coupling entry {bad:?}")));
    }
    let report = check_reality1(&t);
    if !report.passed {
        return Err(Error::Reality(report.summary()));
    }
    Ok(t)
}

impl CouplingTensor1 {
    fn values(&self) -> impl Iterator<Item = &CMat3> {
        match &self.data {
            Coupling1Data::Homogeneous(v) | Coupling1Data::Tabulated(v) => v.iter(),
        }
    }

    pub fn is_homogeneous(&self) -> bool {
        matches!(self.data, Coupling1Data::Homogeneous(_))
    }

    pub fn n_omega(&self) -> usize {
        self.omega.len()
    }

    /// Coefficient matrix of the momentum delta at bin `b` (homogeneous form).
    pub fn local(&self, b: usize) -> Option<&CMat3> {
        match &self.data {
            Coupling1Data::Homogeneous(v) => v.get(b),
            Coupling1Data::Tabulated(_) => None,
        }
    }

    fn tab_index(&self, b: usize, k: usize, k1: usize) -> usize {
        let n = self.kgrid.full_len();
        (b * n + k) * n + k1
    }

    /// Discrete value at `(ω_b, k, k₁)` over full-grid indices; the
    /// homogeneous delta becomes `δ_{k,k₁}/ΔV`.
    pub fn value(&self, b: usize, k: usize, k1: usize) -> CMat3 {
        match &self.data {
            Coupling1Data::Homogeneous(v) => {
                if k == k1 {
                    v[b] * (1.0 / self.kgrid.cell_volume())
                } else {
                    CMat3::ZERO
                }
            }
            Coupling1Data::Tabulated(v) => v[self.tab_index(b, k, k1)],
        }
    }

    pub fn to_tabulated(&self) -> CouplingTensor1 {
        let n = self.kgrid.full_len();
        let mut out = Vec::with_capacity(self.n_omega() * n * n);
        for b in 0..self.n_omega() {
            for k in 0..n {
                for k1 in 0..n {
                    out.push(self.value(b, k, k1));
                }
            }
        }
        CouplingTensor1 {
            data: Coupling1Data::Tabulated(out),
            ..self.clone()
        }
    }

    /// Multiply every entry by `s`.
    pub fn scaled(&self, s: f64) -> CouplingTensor1 {
        let map = |v: &Vec<CMat3>| v.iter().map(|m| *m * s).collect();
        CouplingTensor1 {
            data: match &self.data {
                Coupling1Data::Homogeneous(v) => Coupling1Data::Homogeneous(map(v)),
                Coupling1Data::Tabulated(v) => Coupling1Data::Tabulated(map(v)),
            },
            ..self.clone()
        }
    }

    fn bin_of(&self, omega: f64) -> Result<usize> {
        self.omega
            .nodes
            .iter()
            .position(|&w| (w - omega).abs() <= 1e-9 * w.abs().max(1.0))
            .ok_or_else(|| Error::OutOfGrid(format!("omega = {omega} is not a node of the frequency grid")))
    }
}

/// `f†_ij(ω, k₁, k) = conj(f_ji(ω, k₁, k))`: conjugate transpose in the tensor
/// indices at fixed arguments. For homogeneous forms the coefficient of the
/// momentum delta is returned when `k₁ == k` and zero otherwise.
pub fn adjoint1(tensor: &CouplingTensor1, omega: f64, k1: usize, k: usize) -> Result<CMat3> {
    let b = tensor.bin_of(omega)?;
    let n = tensor.kgrid.full_len();
    if k1 >= n || k >= n {
        return Err(Error::OutOfGrid(format!("k index ({k1}, {k}) outside full grid of {n} nodes")));
    }
    Ok(match &tensor.data {
        Coupling1Data::Homogeneous(v) => {
            if k1 == k {
                v[b].adjoint()
            } else {
                CMat3::ZERO
            }
        }
        Coupling1Data::Tabulated(v) => v[tensor.tab_index(b, k1, k)].adjoint(),
    })
}

/// Outcome of a symmetry or reality check.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub check: String,
    pub max_violation: f64,
    pub location: Option<String>,
    pub tolerance: f64,
    pub passed: bool,
}

impl ValidationReport {
    pub fn new(check: impl Into<String>, max_violation: f64, location: Option<String>, tolerance: f64) -> Self {
        Self {
            check: check.into(),
            passed: max_violation < tolerance,
            max_violation,
            location,
            tolerance,
        }
    }

    pub fn summary(&self) -> String {
        format!(
            "{}: {} (max violation {:.3e}, tolerance {:.1e}{})",
            self.check,
            if self.passed { "pass" } else { "FAIL" },
            self.max_violation,
            self.tolerance,
            self.location.as_ref().map(|l| format!(", at {l}")).unwrap_or_default()
        )
    }
}

/// Running maximum with the location where it occurred.
#[derive(Default)]
pub(crate) struct MaxTracker {
    pub value: f64,
    pub location: Option<String>,
}

impl MaxTracker {
    pub fn observe(&mut self, v: f64, loc: impl FnOnce() -> String) {
        if v > self.value || (v.is_nan() && !self.value.is_nan()) {
            self.value = v;
            self.location = Some(loc());
        }
    }
}

fn check_reality1(t: &CouplingTensor1) -> ValidationReport {
    let name = format!("{} rank-2 coupling reality", t.kind.label());
    let mut worst = MaxTracker::default();
    match &t.data {
        Coupling1Data::Homogeneous(v) => {
            for (b, m) in v.iter().enumerate() {
                worst.observe(m.max_imag(), || format!("omega bin {b}"));
            }
        }
        Coupling1Data::Tabulated(_) => {
            let g = &t.kgrid;
            for b in 0..t.n_omega() {
                for k in 0..g.full_len() {
                    for k1 in 0..g.full_len() {
                        let d = t.value(b, k, k1).max_abs_diff(&t.value(b, g.mirror(k), g.mirror(k1)).conj());
                        worst.observe(d, || format!("omega bin {b}, k {:?}, k1 {:?}", g.full_node(k), g.full_node(k1)));
                    }
                }
            }
        }
    }
    ValidationReport::new(name, worst.value, worst.location, VALIDATION_TOLERANCE)
}

/// Ways to specify a rank-3 coupling.
#[derive(Debug, Clone, PartialEq)]
pub enum Parametrization2 {
    /// `c_ijk(ω₁, ω₂) = d_ijk · ℓ(ω₁) · ℓ(ω₂)` with `ℓ` the Lorentzian amplitude.
    LorentzianProduct { lorentzian: Lorentzian, tensor: [f64; 27] },
    /// Homogeneous values indexed `[ω₁][ω₂]`.
    HomogeneousTable(Vec<CTensor3>),
    /// Values indexed `[ω₁][ω₂][k][k₁][k₂]` over full-grid nodes.
    Tabulated(Vec<CTensor3>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Coupling2Data {
    Homogeneous(Vec<CTensor3>),
    Tabulated(Vec<CTensor3>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingTensor2 {
    pub kind: FieldKind,
    pub omega: Arc<FrequencyGrid>,
    pub kgrid: Arc<KGrid>,
    pub data: Coupling2Data,
}

/// Build a rank-3 coupling. With `symmetrize` the stored tensor is the
/// projection onto the pair-swap symmetric part; without it the input is
/// kept verbatim so that validation can report the asymmetry.
pub fn make_coupling2(
    kind: FieldKind,
    parametrization: Parametrization2,
    omega: Arc<FrequencyGrid>,
    kgrid: Arc<KGrid>,
    symmetrize: bool,
) -> Result<CouplingTensor2> {
    let n_w = omega.len();
    let data = match parametrization {
        Parametrization2::LorentzianProduct { lorentzian, tensor } => {
            lorentzian.validate()?;
            if tensor.iter().any(|x| !x.is_finite()) {
                return Err(Error::Parameter("rank-3 coupling tensor entries must be finite".into()));
            }
            let d = CTensor3::from_real(tensor);
            let mut v = Vec::with_capacity(n_w * n_w);
            for &w1 in &omega.nodes {
                for &w2 in &omega.nodes {
                    let unit = Lorentzian {
                        strength: 1.0,
                        ..lorentzian
                    };
                    let s = lorentzian.strength * unit.amplitude(w1) * unit.amplitude(w2);
                    v.push(d.scale(s.into()));
                }
            }
            Coupling2Data::Homogeneous(v)
        }
        Parametrization2::HomogeneousTable(v) => {
            if v.len() != n_w * n_w {
                return Err(Error::Shape(format!("expected {} tensors, got {}", n_w * n_w, v.len())));
            }
            Coupling2Data::Homogeneous(v)
        }
        Parametrization2::Tabulated(v) => {
            let n_k = kgrid.full_len();
            let need = n_w * n_w * n_k * n_k * n_k;
            if v.len() != need {
                return Err(Error::Shape(format!(
                    "tabulated rank-3 coupling needs {need} entries, got {}",
                    v.len()
                )));
            }
            Coupling2Data::Tabulated(v)
        }
    };
    let t = CouplingTensor2 {
        kind,
        omega,
        kgrid,
        data,
    };
    if t.values().any(|x| x.0.iter().any(|z| !z.is_finite())) {
        return Err(Error::Parameter("non-finite rank-3 coupling entry".into()));
    }
    let report = check_reality2(&t);
    if !report.passed {
        return Err(Error::Reality(report.summary()));
    }
    Ok(if symmetrize { symmetrize_coupling2(&t) } else { t })
}

impl CouplingTensor2 {
    fn values(&self) -> impl Iterator<Item = &CTensor3> {
        match &self.data {
            Coupling2Data::Homogeneous(v) | Coupling2Data::Tabulated(v) => v.iter(),
        }
    }

    pub fn is_homogeneous(&self) -> bool {
        matches!(self.data, Coupling2Data::Homogeneous(_))
    }

    pub fn n_omega(&self) -> usize {
        self.omega.len()
    }

    /// Coefficient of `δ(k - k₁ - k₂)` at bins `(b1, b2)` (homogeneous form).
    pub fn local(&self, b1: usize, b2: usize) -> Option<&CTensor3> {
        match &self.data {
            Coupling2Data::Homogeneous(v) => v.get(b1 * self.n_omega() + b2),
            Coupling2Data::Tabulated(_) => None,
        }
    }

    fn tab_index(&self, b1: usize, b2: usize, k: usize, k1: usize, k2: usize) -> usize {
        let n = self.kgrid.full_len();
        (((b1 * self.n_omega() + b2) * n + k) * n + k1) * n + k2
    }

    /// Discrete value over full-grid indices; the homogeneous delta becomes
    /// `δ_{k, k₁+k₂}/ΔV`.
    pub fn value(&self, b1: usize, b2: usize, k: usize, k1: usize, k2: usize) -> CTensor3 {
        match &self.data {
            Coupling2Data::Homogeneous(v) => {
                if self.kgrid.sum_index(k1, k2) == Some(k) {
                    v[b1 * self.n_omega() + b2].scale((1.0 / self.kgrid.cell_volume()).into())
                } else {
                    CTensor3::ZERO
                }
            }
            Coupling2Data::Tabulated(v) => v[self.tab_index(b1, b2, k, k1, k2)],
        }
    }

    pub fn to_tabulated(&self) -> CouplingTensor2 {
        let n = self.kgrid.full_len();
        let n_w = self.n_omega();
        let mut out = Vec::with_capacity(n_w * n_w * n * n * n);
        for b1 in 0..n_w {
            for b2 in 0..n_w {
                for k in 0..n {
                    for k1 in 0..n {
                        for k2 in 0..n {
                            out.push(self.value(b1, b2, k, k1, k2));
                        }
                    }
                }
            }
        }
        CouplingTensor2 {
            data: Coupling2Data::Tabulated(out),
            ..self.clone()
        }
    }

    /// The same tensor under the simultaneous swap `(ω₁,k₁,j) ↔ (ω₂,k₂,k)`.
    pub fn swapped(&self) -> CouplingTensor2 {
        let n_w = self.n_omega();
        let data = match &self.data {
            Coupling2Data::Homogeneous(v) => {
                let mut out = vec![CTensor3::ZERO; v.len()];
                for b1 in 0..n_w {
                    for b2 in 0..n_w {
                        out[b1 * n_w + b2] = v[b2 * n_w + b1].swap_trailing();
                    }
                }
                Coupling2Data::Homogeneous(out)
            }
            Coupling2Data::Tabulated(v) => {
                let n = self.kgrid.full_len();
                let mut out = vec![CTensor3::ZERO; v.len()];
                for b1 in 0..n_w {
                    for b2 in 0..n_w {
                        for k in 0..n {
                            for k1 in 0..n {
                                for k2 in 0..n {
                                    out[self.tab_index(b1, b2, k, k1, k2)] =
                                        v[self.tab_index(b2, b1, k, k2, k1)].swap_trailing();
                                }
                            }
                        }
                    }
                }
                Coupling2Data::Tabulated(out)
            }
        };
        CouplingTensor2 {
            data,
            ..self.clone()
        }
    }

    fn zip_with(&self, other: &CouplingTensor2, f: impl Fn(&CTensor3, &CTensor3) -> CTensor3) -> CouplingTensor2 {
        let zip = |a: &Vec<CTensor3>, b: &Vec<CTensor3>| a.iter().zip(b).map(|(x, y)| f(x, y)).collect();
        let data = match (&self.data, &other.data) {
            (Coupling2Data::Homogeneous(a), Coupling2Data::Homogeneous(b)) => Coupling2Data::Homogeneous(zip(a, b)),
            (Coupling2Data::Tabulated(a), Coupling2Data::Tabulated(b)) => Coupling2Data::Tabulated(zip(a, b)),
            _ => unreachable!("zip_with on tensors of different storage forms"),
        };
        CouplingTensor2 {
            data,
            ..self.clone()
        }
    }

    pub fn scaled(&self, s: f64) -> CouplingTensor2 {
        self.zip_with(self, |a, _| a.scale(s.into()))
    }

    /// Largest difference between this tensor and its pair swap.
    pub fn pair_swap_violation(&self) -> (f64, Option<String>) {
        let sw = self.swapped();
        let n_w = self.n_omega();
        let mut worst = MaxTracker::default();
        match (&self.data, &sw.data) {
            (Coupling2Data::Homogeneous(a), Coupling2Data::Homogeneous(b)) => {
                for (i, (x, y)) in a.iter().zip(b).enumerate() {
                    worst.observe(x.max_abs_diff(y), || format!("omega bins ({}, {})", i / n_w, i % n_w));
                }
            }
            (Coupling2Data::Tabulated(a), Coupling2Data::Tabulated(b)) => {
                let n = self.kgrid.full_len();
                for (i, (x, y)) in a.iter().zip(b).enumerate() {
                    worst.observe(x.max_abs_diff(y), || {
                        let k2 = i % n;
                        let k1 = (i / n) % n;
                        let k = (i / n / n) % n;
                        let b2 = (i / n / n / n) % n_w;
                        let b1 = i / n / n / n / n_w;
                        format!("omega bins ({b1}, {b2}), k indices ({k}, {k1}, {k2})")
                    });
                }
            }
            _ => unreachable!(),
        }
        (worst.value, worst.location)
    }
}

/// Projection onto the pair-swap symmetric part, `(T + swap(T)) / 2`.
pub fn symmetrize_coupling2(tensor: &CouplingTensor2) -> CouplingTensor2 {
    let sw = tensor.swapped();
    tensor.zip_with(&sw, |a, b| a.add(b).scale(0.5.into()))
}

pub fn check_pair_symmetry(tensor: &CouplingTensor2) -> ValidationReport {
    let (v, loc) = tensor.pair_swap_violation();
    ValidationReport::new(
        format!("{} rank-3 coupling pair-swap symmetry", tensor.kind.label()),
        v,
        loc,
        VALIDATION_TOLERANCE,
    )
}

fn check_reality2(t: &CouplingTensor2) -> ValidationReport {
    let name = format!("{} rank-3 coupling reality", t.kind.label());
    let mut worst = MaxTracker::default();
    let n_w = t.n_omega();
    match &t.data {
        Coupling2Data::Homogeneous(v) => {
            for (i, x) in v.iter().enumerate() {
                let im = x.0.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
                worst.observe(im, || format!("omega bins ({}, {})", i / n_w, i % n_w));
            }
        }
        Coupling2Data::Tabulated(_) => {
            let g = &t.kgrid;
            let n = g.full_len();
            for b1 in 0..n_w {
                for b2 in 0..n_w {
                    for k in 0..n {
                        for k1 in 0..n {
                            for k2 in 0..n {
                                let a = t.value(b1, b2, k, k1, k2);
                                let m = t.value(b1, b2, g.mirror(k), g.mirror(k1), g.mirror(k2)).conj();
                                worst.observe(a.max_abs_diff(&m), || {
                                    format!("omega bins ({b1}, {b2}), k indices ({k}, {k1}, {k2})")
                                });
                            }
                        }
                    }
                }
            }
        }
    }
    ValidationReport::new(name, worst.value, worst.location, VALIDATION_TOLERANCE)
}

/// Either rank of coupling tensor.
#[derive(Debug, Clone, Copy)]
pub enum AnyCoupling<'a> {
    Rank2(&'a CouplingTensor1),
    Rank3(&'a CouplingTensor2),
}

/// Reality check `f(…, k, …) = conj(f(…, -k, …))` for either rank.
pub fn check_reality(tensor: AnyCoupling<'_>) -> ValidationReport {
    match tensor {
        AnyCoupling::Rank2(t) => check_reality1(t),
        AnyCoupling::Rank3(t) => check_reality2(t),
    }
}

/// Couplings of one kind (electric `f` or magnetic `g`).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Couplings {
    pub rank1: Option<CouplingTensor1>,
    pub rank2: Option<CouplingTensor2>,
}

impl Couplings {
    pub fn is_empty(&self) -> bool {
        self.rank1.is_none() && self.rank2.is_none()
    }

    pub fn has_nonlinear(&self) -> bool {
        self.rank2.is_some()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Medium {
    pub electric: Couplings,
    pub magnetic: Couplings,
}

impl Medium {
    pub fn couplings(&self, kind: FieldKind) -> &Couplings {
        match kind {
            FieldKind::Electric => &self.electric,
            FieldKind::Magnetic => &self.magnetic,
        }
    }

    pub fn is_linear(&self) -> bool {
        !self.electric.has_nonlinear() && !self.magnetic.has_nonlinear()
    }

    /// Reality and pair-swap reports for every tensor present.
    pub fn validation_reports(&self) -> Vec<ValidationReport> {
        let mut out = Vec::new();
        for c in [&self.electric, &self.magnetic] {
            if let Some(t) = &c.rank1 {
                out.push(check_reality(AnyCoupling::Rank2(t)));
            }
            if let Some(t) = &c.rank2 {
                out.push(check_reality(AnyCoupling::Rank3(t)));
                out.push(check_pair_symmetry(t));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grids::{build_frequency_grid, build_kgrid, QuadratureRule};
    use crate::linalg::C64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grids(n_w: usize, counts: [usize; 3]) -> (Arc<FrequencyGrid>, Arc<KGrid>) {
        (
            Arc::new(build_frequency_grid(2.0, n_w, QuadratureRule::Harmonic).unwrap()),
            Arc::new(build_kgrid([1.0; 3], counts).unwrap()),
        )
    }

    fn random_c(rng: &mut ChaCha8Rng) -> C64 {
        C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
    }

    /// Tabulated rank-2 data satisfying the reality condition by construction.
    fn mirrored_table1(rng: &mut ChaCha8Rng, w: &FrequencyGrid, g: &KGrid) -> Vec<CMat3> {
        let n = g.full_len();
        let mut v = vec![CMat3::ZERO; w.len() * n * n];
        for b in 0..w.len() {
            for k in 0..n {
                for k1 in 0..n {
                    let i = (b * n + k) * n + k1;
                    let j = (b * n + g.mirror(k)) * n + g.mirror(k1);
                    if j < i {
                        v[i] = v[j].conj();
                    } else if j == i {
                        v[i] = CMat3([[0; 3]; 3].map(|r| r.map(|_| C64::new(rng.gen_range(-1.0..1.0), 0.0))));
                    } else {
                        v[i] = CMat3([[0; 3]; 3].map(|r| r.map(|_| random_c(rng))));
                    }
                }
            }
        }
        v
    }

    #[test]
    fn zero_strength_gives_zero_tensor() {
        let (w, g) = grids(4, [2, 2, 2]);
        let l = Lorentzian::new(0.0, 1.0, 0.1).unwrap();
        let t = make_coupling1(FieldKind::Electric, Parametrization1::IsotropicLorentzian(l), w, g).unwrap();
        assert!((0..4).all(|b| t.local(b).unwrap().max_abs() == 0.0));
    }

    #[test]
    fn lorentzian_peak_value() {
        let (w, g) = grids(2, [2, 2, 2]);
        let l = Lorentzian::new(1.0, 1.0, 0.1).unwrap();
        let t = make_coupling1(FieldKind::Electric, Parametrization1::IsotropicLorentzian(l), w, g).unwrap();
        // node 0 sits at ω = 1 = ω₀: s·√(γ/π)/γ
        let expect = (0.1f64 / std::f64::consts::PI).sqrt() / 0.1;
        let m = t.local(0).unwrap();
        for i in 0..3 {
            assert!((m.0[i][i].re - expect).abs() < 1e-14);
        }
        assert_eq!(m.0[0][1], C64::new(0.0, 0.0));
    }

    #[test]
    fn parameter_errors() {
        assert!(Lorentzian::new(-1.0, 1.0, 0.1).is_err());
        assert!(Lorentzian::new(1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn tabulated_reality_violation_is_rejected() {
        let (w, g) = grids(2, [2, 1, 1]);
        let n = g.full_len();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut v = mirrored_table1(&mut rng, &w, &g);
        v[(0 * n + 0) * n + 1].0[0][0] += C64::new(1e-3, 0.0);
        let err = make_coupling1(FieldKind::Electric, Parametrization1::Tabulated(v), w, g).unwrap_err();
        assert!(matches!(err, Error::Reality(_)));
    }

    #[test]
    fn homogeneous_lorentzian_passes_reality_with_zero_violation() {
        let (w, g) = grids(5, [2, 2, 2]);
        let l = Lorentzian::new(0.7, 1.0, 0.2).unwrap();
        let t = make_coupling1(FieldKind::Magnetic, Parametrization1::AnisotropicDiagonal([l; 3]), w, g).unwrap();
        let r = check_reality(AnyCoupling::Rank2(&t));
        assert!(r.passed);
        assert_eq!(r.max_violation, 0.0);
    }

    #[test]
    fn randomized_mirrored_table_passes_reality() {
        let (w, g) = grids(3, [2, 2, 1]);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let v = mirrored_table1(&mut rng, &w, &g);
        let t = make_coupling1(FieldKind::Electric, Parametrization1::Tabulated(v), w, g).unwrap();
        assert!(check_reality(AnyCoupling::Rank2(&t)).passed);
    }

    #[test]
    fn adjoint_of_real_diagonal_is_itself_and_involutive() {
        let (w, g) = grids(3, [2, 2, 2]);
        let l = Lorentzian::new(1.0, 1.0, 0.3).unwrap();
        let t = make_coupling1(FieldKind::Electric, Parametrization1::IsotropicLorentzian(l), w.clone(), g.clone())
            .unwrap();
        let a = adjoint1(&t, w.nodes[1], 3, 3).unwrap();
        assert_eq!(&a, t.local(1).unwrap());
        assert!(adjoint1(&t, 0.123, 3, 3).is_err());
        assert!(adjoint1(&t, w.nodes[1], 3, 99).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v = mirrored_table1(&mut rng, &w, &g);
        let t = make_coupling1(FieldKind::Electric, Parametrization1::Tabulated(v), w.clone(), g.clone()).unwrap();
        let a = adjoint1(&t, w.nodes[2], 1, 5).unwrap();
        assert_eq!(a, t.value(2, 1, 5).adjoint());
        assert_eq!(a.adjoint(), t.value(2, 1, 5));
    }

    fn random_tensor(rng: &mut ChaCha8Rng) -> CTensor3 {
        CTensor3([0; 27].map(|_| C64::new(rng.gen_range(-1.0..1.0), 0.0)))
    }

    #[test]
    fn symmetrize_fixed_point_and_odd_part_vanishes() {
        let (w, g) = grids(3, [2, 2, 2]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let v: Vec<CTensor3> = (0..9).map(|_| random_tensor(&mut rng)).collect();
        let raw = make_coupling2(
            FieldKind::Electric,
            Parametrization2::HomogeneousTable(v),
            w.clone(),
            g.clone(),
            false,
        )
        .unwrap();
        let sym = symmetrize_coupling2(&raw);
        assert_eq!(sym.pair_swap_violation().0, 0.0);
        assert_eq!(symmetrize_coupling2(&sym), sym);

        // odd part: (T - swap T)/2 symmetrizes to zero
        let odd = raw.zip_with(&raw.swapped(), |a, b| a.add(&b.scale((-1.0).into())).scale(0.5.into()));
        let killed = symmetrize_coupling2(&odd);
        assert!(killed.values().all(|t| t.max_abs() < 1e-15));

        // direct formula
        let sw = raw.swapped();
        for ((s, a), b) in sym.values().zip(raw.values()).zip(sw.values()) {
            assert!(s.max_abs_diff(&a.add(b).scale(0.5.into())) < 1e-15);
        }
        // symmetric + antisymmetric reconstructs the input
        for ((s, o), a) in sym.values().zip(odd.values()).zip(raw.values()) {
            assert!(s.add(o).max_abs_diff(a) < 1e-15);
        }
    }

    #[test]
    fn lorentzian_product_with_asymmetric_tensor() {
        let (w, g) = grids(3, [3, 3, 3]);
        let mut d = [0.0; 27];
        d[9 * 0 + 3 * 1 + 2] = 1.0; // d_012 only: asymmetric in the trailing pair
        let l = Lorentzian::new(0.5, 1.0, 0.4).unwrap();
        let raw = make_coupling2(
            FieldKind::Electric,
            Parametrization2::LorentzianProduct { lorentzian: l, tensor: d },
            w.clone(),
            g.clone(),
            false,
        )
        .unwrap();
        assert!(!check_pair_symmetry(&raw).passed);
        let sym = make_coupling2(
            FieldKind::Electric,
            Parametrization2::LorentzianProduct { lorentzian: l, tensor: d },
            w,
            g,
            true,
        )
        .unwrap();
        let r = check_pair_symmetry(&sym);
        assert!(r.passed, "{}", r.summary());
        let zero = make_coupling2(
            FieldKind::Electric,
            Parametrization2::LorentzianProduct {
                lorentzian: Lorentzian::new(0.0, 1.0, 0.4).unwrap(),
                tensor: d,
            },
            sym.omega.clone(),
            sym.kgrid.clone(),
            true,
        )
        .unwrap();
        assert!(zero.values().all(|t| t.max_abs() == 0.0));
    }

    #[test]
    fn tabulated_rank3_swap_symmetry_and_linearity() {
        let (w, g) = grids(2, [2, 1, 1]);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = g.full_len();
        let len = 4 * n * n * n;
        // build mirrored data so the reality condition holds
        let mut v = vec![CTensor3::ZERO; len];
        let idx = |b1: usize, b2: usize, k: usize, k1: usize, k2: usize| (((b1 * 2 + b2) * n + k) * n + k1) * n + k2;
        for b1 in 0..2 {
            for b2 in 0..2 {
                for k in 0..n {
                    for k1 in 0..n {
                        for k2 in 0..n {
                            let i = idx(b1, b2, k, k1, k2);
                            let j = idx(b1, b2, g.mirror(k), g.mirror(k1), g.mirror(k2));
                            v[i] = if j < i {
                                v[j].conj()
                            } else {
                                CTensor3([0; 27].map(|_| random_c(&mut rng)))
                            };
                        }
                    }
                }
            }
        }
        let t = make_coupling2(FieldKind::Magnetic, Parametrization2::Tabulated(v), w, g, true).unwrap();
        assert!(check_pair_symmetry(&t).passed);
        assert!(check_reality(AnyCoupling::Rank3(&t)).passed);
        let s1 = symmetrize_coupling2(&t.scaled(2.0));
        let s2 = symmetrize_coupling2(&t).scaled(2.0);
        assert!(s1.values().zip(s2.values()).all(|(a, b)| a.max_abs_diff(b) < 1e-14));
    }

    #[test]
    fn homogeneous_value_materializes_delta() {
        let (w, g) = grids(2, [3, 3, 3]);
        let l = Lorentzian::new(1.0, 1.0, 0.3).unwrap();
        let t = make_coupling1(FieldKind::Electric, Parametrization1::IsotropicLorentzian(l), w, g.clone()).unwrap();
        let tab = t.to_tabulated();
        let dv = g.cell_volume();
        assert_eq!(tab.value(1, 4, 4), *t.local(1).unwrap() * (1.0 / dv));
        assert_eq!(tab.value(1, 4, 5), CMat3::ZERO);
    }
}
