//! Run commands shared by the command-line tool and the tests. Each command
//! reads a [`RunConfig`], writes into an output directory and returns the
//! [`Manifest`] it wrote there. Outputs carry no timestamps, so a rerun with
//! the same config and seed reproduces every file byte for byte.

use crate::bath::{density_from_bath, first_order_solution, integrate_bath_linear, relative_rms};
use crate::config::RunConfig;
use crate::fields::{
    displacement, gauss_violation, magnetic_from_electric, magnetic_h, polarization_eval, spectrum_table,
    to_time_domain,
};
use crate::grids::{FrequencyGrid, KGrid, TimeGrid};
use crate::io::{columnar, write_text, Axis, ConventionFlags, NlmdArray};
use crate::linalg::{CVec3, C64};
use crate::medium::{FieldKind, Medium, ValidationReport};
use crate::noise::{noise_time_grid, sample_modes, NoiseOptions, NoiseRealization, NoiseSource};
use crate::solver::{response, solve, FrequencyKernels, LambdaOperator, OrderRecord, Problem};
use crate::spectra::{analyze, synthesize, Spectrum, TimeField};
use crate::susceptibility::{
    build_kernel_time, build_modes, check_causality_kk, check_frequency_reality, check_kernel_symmetry,
    frequency_kernel, symmetric_midpoint_axis, KernelData, KernelDomain, KernelOptions, SusceptibilityKernel,
};
use crate::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::sync::Arc;

pub const MANIFEST: &str = "manifest.toml";
pub const CONVERGENCE_LOG: &str = "convergence.txt";

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub max_order: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(s) = self.seed {
            cfg.noise.seed = s;
            cfg.oracle.seed = s;
        }
        if let Some(n) = self.max_order {
            cfg.solver.max_order = n;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRecord {
    pub name: String,
    pub value: f64,
    /// `None` for values recorded without a pass/fail threshold.
    pub tolerance: Option<f64>,
    pub passed: bool,
    pub location: Option<String>,
}

impl CheckRecord {
    pub fn bounded(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance: Some(tolerance),
            passed: value <= tolerance,
            location: None,
        }
    }

    pub fn info(name: impl Into<String>, value: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance: None,
            passed: true,
            location: None,
        }
    }

    fn line(&self) -> String {
        let tol = self.tolerance.map_or("-".to_string(), |t| format!("{t:.3e}"));
        let status = match (self.tolerance, self.passed) {
            (None, _) => "info",
            (_, true) => "pass",
            (_, false) => "FAIL",
        };
        format!("{status} {} {:.6e} {tol}", self.name, self.value)
    }
}

impl From<&ValidationReport> for CheckRecord {
    fn from(r: &ValidationReport) -> Self {
        Self {
            name: r.check.clone(),
            value: r.max_violation,
            tolerance: Some(r.tolerance),
            passed: r.passed,
            location: r.location.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub command: String,
    pub tool_version: String,
    pub schema_version: u32,
    pub config_sha256: String,
    pub seed: u64,
    pub eta: f64,
    pub damping: f64,
    pub partial: bool,
    pub converged: Option<bool>,
    pub orders: Option<usize>,
    pub outputs: Vec<String>,
    pub checks: Vec<CheckRecord>,
    pub config: RunConfig,
}

impl Manifest {
    fn new(command: &str, cfg: &RunConfig) -> Self {
        Self {
            command: command.into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            schema_version: cfg.schema_version,
            config_sha256: cfg.hash(),
            seed: cfg.noise.seed,
            eta: cfg.eta(),
            damping: cfg.solver.damping,
            partial: false,
            converged: None,
            orders: None,
            outputs: Vec::new(),
            checks: Vec::new(),
            config: cfg.clone(),
        }
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }
}

/// Output directory that records the files written into it.
struct Writer<'a> {
    dir: &'a Path,
    manifest: Manifest,
    flags: ConventionFlags,
}

impl<'a> Writer<'a> {
    fn new(dir: &'a Path, command: &str, cfg: &RunConfig) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Self {
            dir,
            manifest: Manifest::new(command, cfg),
            flags: ConventionFlags {
                eta: cfg.eta(),
                conventions: cfg.conventions,
                units: cfg.units,
            },
        })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.manifest.outputs.push(name.into());
        self.dir.join(name)
    }

    fn array(&mut self, name: &str, axes: Vec<Axis>, meta: Vec<(String, String)>, data: Vec<C64>) -> Result<()> {
        let a = NlmdArray::new(axes, self.flags, meta, data)?;
        let p = self.path(name);
        a.write(&p)
    }

    fn text(&mut self, name: &str, text: &str) -> Result<()> {
        let p = self.path(name);
        write_text(&p, text)
    }

    fn finish(self) -> Result<Manifest> {
        let p = self.dir.join(MANIFEST);
        write_text(&p, &self.manifest.to_toml())?;
        Ok(self.manifest)
    }
}

struct Setup {
    omega: Arc<FrequencyGrid>,
    kgrid: Arc<KGrid>,
    medium: Medium,
}

fn setup(cfg: &RunConfig) -> Result<Setup> {
    let omega = cfg.frequency_grid()?;
    let kgrid = cfg.kgrid()?;
    let medium = cfg.medium(&omega, &kgrid)?;
    Ok(Setup { omega, kgrid, medium })
}

fn grid_meta(kgrid: &KGrid, omega: &FrequencyGrid) -> Vec<(String, String)> {
    vec![
        ("k_counts".into(), format!("{:?}", kgrid.counts)),
        ("k_extent".into(), format!("{:?}", kgrid.extent)),
        ("omega_max".into(), format!("{:e}", omega.omega_max)),
        ("n_omega".into(), omega.len().to_string()),
    ]
}

fn kinds() -> [(FieldKind, &'static str); 2] {
    [(FieldKind::Electric, "chi"), (FieldKind::Magnetic, "zeta")]
}

/// Largest |χ| at any sample with a negative time argument.
fn negative_time_leak(k: &SusceptibilityKernel) -> f64 {
    let ns = k.n_samples();
    let sp = k.spatial_len();
    let mut worst: f64 = 0.0;
    match &k.data {
        KernelData::Rank1(d) => {
            for s in (0..ns).filter(|&s| k.axis[s] < 0.0) {
                for m in &d[s * sp..(s + 1) * sp] {
                    worst = worst.max(m.0.iter().flatten().map(|z| z.norm()).fold(0.0, f64::max));
                }
            }
        }
        KernelData::Rank2(d) => {
            for s1 in 0..ns {
                for s2 in 0..ns {
                    if k.axis[s1] >= 0.0 && k.axis[s2] >= 0.0 {
                        continue;
                    }
                    let base = (s1 * ns + s2) * sp;
                    for t in &d[base..base + sp] {
                        worst = worst.max(t.0.iter().map(|z| z.norm()).fold(0.0, f64::max));
                    }
                }
            }
        }
    }
    worst
}

fn time_kernel(cfg: &RunConfig, medium: &Medium, kind: FieldKind, rank: usize) -> Result<Option<SusceptibilityKernel>> {
    let c = medium.couplings(kind);
    let present = if rank == 1 { c.rank1.is_some() } else { c.rank2.is_some() };
    if !present {
        return Ok(None);
    }
    let options = KernelOptions {
        stride: cfg.grids.kernel.rank2_stride,
        drop_step: false,
    };
    build_kernel_time(kind, rank, c, &cfg.kernel_time_grid()?, options).map(Some)
}

/// Reality and pair symmetry of the couplings, causality of the time kernels,
/// Kramers–Kronig consistency and frequency reality of the rank-2 kernels,
/// swap symmetry of the rank-3 kernels.
pub fn cmd_validate(cfg: &RunConfig, out: &Path) -> Result<Manifest> {
    let s = setup(cfg)?;
    let mut w = Writer::new(out, "validate", cfg)?;
    let mut checks: Vec<CheckRecord> = s.medium.validation_reports().iter().map(CheckRecord::from).collect();
    for (kind, label) in kinds() {
        let c = s.medium.couplings(kind);
        if let Some(k) = time_kernel(cfg, &s.medium, kind, 1)? {
            checks.push(CheckRecord::bounded(format!("{label}1 time kernel causality"), negative_time_leak(&k), 0.0));
            let kk_eta = cfg.kk_eta();
            let n_half = ((40.0 * cfg.grids.omega_max / kk_eta).ceil() as usize).clamp(64, 4000);
            let axis = symmetric_midpoint_axis(4.0 * cfg.grids.omega_max, n_half);
            let fk = frequency_kernel(&build_modes(kind, 1, c)?, &axis, kk_eta, &cfg.conventions)?;
            checks.push((&check_frequency_reality(&fk)?).into());
            checks.push((&check_causality_kk(&fk)?).into());
        }
        if let Some(k) = time_kernel(cfg, &s.medium, kind, 2)? {
            checks.push(CheckRecord::bounded(format!("{label}2 time kernel causality"), negative_time_leak(&k), 0.0));
            checks.push((&check_kernel_symmetry(&k)?).into());
            let axis = symmetric_midpoint_axis(2.0 * cfg.grids.omega_max, cfg.grids.n_omega.min(8));
            let fk = frequency_kernel(&build_modes(kind, 2, c)?, &axis, cfg.eta(), &cfg.conventions)?;
            checks.push((&check_frequency_reality(&fk)?).into());
            checks.push((&check_kernel_symmetry(&fk)?).into());
        }
    }
    let report: String = checks.iter().map(|c| c.line() + "\n").collect();
    w.text("validation.txt", &format!("# status check value tolerance\n{report}"))?;
    w.manifest.checks = checks;
    w.finish()
}

fn kernel_array(k: &SusceptibilityKernel) -> (Vec<Axis>, Vec<(String, String)>, Vec<C64>) {
    let ns = k.n_samples();
    let sample_axis = |name: &str| match (k.domain, k.spacing) {
        (KernelDomain::Time, Some(h)) => Axis::new(name, ns, h, k.axis[0]),
        _ => Axis::categorical(name, ns),
    };
    let mut axes = vec![sample_axis(if k.domain == KernelDomain::Time { "t" } else { "omega" })];
    if k.rank == 2 {
        axes.push(sample_axis(if k.domain == KernelDomain::Time { "t2" } else { "omega2" }));
    }
    if k.homogeneous {
        axes.push(Axis::categorical("spatial", 1));
    } else {
        let n = k.kgrid.full_len();
        for name in ["k", "k1", "k2"].iter().take(k.rank + 1) {
            axes.push(Axis::categorical(*name, n));
        }
    }
    for name in ["i", "j", "l"].iter().take(k.rank + 1) {
        axes.push(Axis::categorical(*name, 3));
    }
    let data: Vec<C64> = match &k.data {
        KernelData::Rank1(d) => d.iter().flat_map(|m| m.0.iter().flatten().copied()).collect(),
        KernelData::Rank2(d) => d.iter().flat_map(|t| t.0.iter().copied()).collect(),
    };
    let mut meta = vec![
        ("kind".into(), k.kind.label().to_string()),
        ("tensor_rank".into(), (k.rank + 1).to_string()),
        ("domain".into(), format!("{:?}", k.domain).to_lowercase()),
        ("homogeneous".into(), k.homogeneous.to_string()),
        ("kernel_eta".into(), format!("{:e}", k.eta)),
    ];
    if k.domain == KernelDomain::Frequency {
        meta.push(("omega_layout".into(), "positive bins ascending, then negative bins".into()));
    }
    (axes, meta, data)
}

/// Time-domain kernels on the kernel grid and frequency kernels on the
/// solver's signed harmonic axis.
pub fn cmd_susceptibility(cfg: &RunConfig, out: &Path) -> Result<Manifest> {
    let s = setup(cfg)?;
    let mut w = Writer::new(out, "susceptibility", cfg)?;
    let fk = FrequencyKernels::from_medium(&s.medium, s.omega.clone(), s.kgrid.clone(), cfg.eta(), &cfg.conventions)?;
    for (kind, label) in kinds() {
        let freq = match kind {
            FieldKind::Electric => [&fk.chi1, &fk.chi2],
            FieldKind::Magnetic => [&fk.zeta1, &fk.zeta2],
        };
        for rank in 1..=2 {
            if cfg.outputs.time_kernels {
                if let Some(k) = time_kernel(cfg, &s.medium, kind, rank)? {
                    let (axes, mut meta, data) = kernel_array(&k);
                    meta.extend(grid_meta(&s.kgrid, &s.omega));
                    w.array(&format!("{label}{rank}_time.nlmd"), axes, meta, data)?;
                }
            }
            if let Some(k) = freq[rank - 1] {
                let (axes, mut meta, data) = kernel_array(k);
                meta.extend(grid_meta(&s.kgrid, &s.omega));
                w.array(&format!("{label}{rank}_freq.nlmd"), axes, meta, data)?;
            }
        }
    }
    w.finish()
}

fn spectrum_array(e: &Spectrum) -> (Vec<Axis>, Vec<C64>) {
    let axes = vec![
        Axis::categorical("k_half", e.kgrid.half_len()),
        Axis::categorical("omega", 2 * e.n_omega()),
        Axis::categorical("component", 3),
    ];
    (axes, e.data.iter().flat_map(|v| v.0).collect())
}

fn time_array(f: &TimeField) -> Result<(Vec<Axis>, Vec<C64>)> {
    let axes = vec![
        Axis::categorical("k_half", f.kgrid.half_len()),
        Axis::new("t", f.time.len(), f.time.dt()?, f.time.nodes[0]),
        Axis::categorical("component", 3),
    ];
    Ok((axes, f.data.iter().flat_map(|v| v.0).collect()))
}

fn convergence_log(history: &[OrderRecord]) -> String {
    columnar(
        &["order", "sup_change", "residual"],
        history.iter().map(|r| vec![r.order as f64, r.sup_change, r.residual]),
    )
}

fn realization(cfg: &RunConfig, omega: &Arc<FrequencyGrid>, kgrid: &Arc<KGrid>) -> Result<NoiseRealization> {
    if cfg.noise.enabled {
        sample_modes(omega.clone(), kgrid.clone(), cfg.noise.seed, cfg.units.hbar)
    } else {
        Ok(NoiseRealization::zeros(omega.clone(), kgrid.clone(), cfg.units.hbar))
    }
}

fn add(a: &Spectrum, b: &Spectrum) -> Spectrum {
    Spectrum {
        data: a.data.iter().zip(&b.data).map(|(x, y)| *x + *y).collect(),
        ..a.clone()
    }
}

/// Fixed-point solution of the field equation driven by the noise sources.
/// On divergence the convergence log and a manifest flagged `partial` are
/// written before the error is returned.
pub fn cmd_solve(cfg: &RunConfig, out: &Path) -> Result<Manifest> {
    let s = setup(cfg)?;
    let mut w = Writer::new(out, "solve", cfg)?;
    let eta = cfg.eta();
    let (units, conv) = (cfg.units, cfg.conventions);
    let kernels = FrequencyKernels::from_medium(&s.medium, s.omega.clone(), s.kgrid.clone(), eta, &conv)?;
    let lambda = LambdaOperator::build(&s.kgrid, &s.omega, eta, units.c)?;
    let real = realization(cfg, &s.omega, &s.kgrid)?;
    let time = noise_time_grid(&s.omega, cfg.grids.time_oversample)?;
    let source = NoiseSource {
        realization: &real,
        medium: &s.medium,
        time: time.clone(),
        units,
        conventions: conv,
        options: NoiseOptions {
            drop_memory: cfg.noise.drop_memory,
        },
    };
    let problem = Problem {
        kernels: &kernels,
        lambda: &lambda,
        units,
        conventions: conv,
    };
    let outcome = match solve(&cfg.solver, &problem, &source) {
        Ok(o) => o,
        Err(Error::Divergence {
            order,
            from,
            to,
            history,
        }) => {
            w.text(CONVERGENCE_LOG, &convergence_log(&history))?;
            w.manifest.partial = true;
            w.manifest.converged = Some(false);
            w.manifest.orders = Some(order);
            w.manifest.checks.push(CheckRecord::info("sup-norm at divergence", to));
            w.finish()?;
            return Err(Error::Divergence {
                order,
                from,
                to,
                history,
            });
        }
        Err(e) => return Err(e),
    };
    let e = &outcome.state.e;
    w.text(CONVERGENCE_LOG, &convergence_log(&outcome.state.history))?;
    w.manifest.converged = Some(outcome.converged);
    w.manifest.orders = Some(outcome.state.order);
    let j_norm = outcome.source.l2_norm();
    let residual = problem.residual(e, &outcome.source)?;
    w.manifest
        .checks
        .push(CheckRecord::info("relative residual", if j_norm > 0.0 { residual / j_norm } else { residual }));
    w.manifest.checks.push(CheckRecord::info(
        "longitudinal balance",
        gauss_violation(e, &kernels, &outcome.source, eta, &units, &conv)?,
    ));
    let meta = grid_meta(&s.kgrid, &s.omega);
    if cfg.outputs.spectra {
        let (axes, data) = spectrum_array(e);
        let mut m = meta.clone();
        m.push(("quantity".into(), "E".into()));
        m.push(("omega_layout".into(), "positive bins ascending, then negative bins".into()));
        w.array("e_spectrum.nlmd", axes, m, data)?;
        w.text("power_spectrum.txt", &spectrum_table(e))?;
    }
    if cfg.outputs.time_fields {
        let pref = conv.field_equation_prefactor();
        let b = magnetic_from_electric(e);
        let (p_n, m_n) = source.densities(Some(e))?;
        let mut p = analyze(&p_n, s.omega.clone(), &conv)?;
        if kernels.chi1.is_some() || kernels.chi2.is_some() {
            p = add(&p, &response(e, kernels.chi1.as_ref(), kernels.chi2.as_ref())?.scaled(pref));
        }
        let mut m = analyze(&m_n, s.omega.clone(), &conv)?;
        if kernels.zeta1.is_some() || kernels.zeta2.is_some() {
            m = add(&m, &response(&b, kernels.zeta1.as_ref(), kernels.zeta2.as_ref())?.scaled(pref));
        }
        let e_t = to_time_domain(e, &time, &conv);
        let b_t = synthesize(&b, &time, &conv);
        let p_t = synthesize(&p, &time, &conv);
        let m_t = synthesize(&m, &time, &conv);
        let d_t = displacement(&e_t, &p_t, &units)?;
        let h_t = magnetic_h(&b_t, &m_t, &units)?;
        for (name, q, f) in [
            ("e_time.nlmd", "E", &e_t),
            ("b_time.nlmd", "B", &b_t),
            ("p_time.nlmd", "P", &p_t),
            ("m_time.nlmd", "M", &m_t),
            ("d_time.nlmd", "D", &d_t),
            ("h_time.nlmd", "H", &h_t),
        ] {
            let (axes, data) = time_array(f)?;
            let mut mm = meta.clone();
            mm.push(("quantity".into(), q.into()));
            w.array(name, axes, mm, data)?;
        }
    }
    w.finish()
}

/// One noise realization and its zero-order densities.
pub fn cmd_sample(cfg: &RunConfig, out: &Path) -> Result<Manifest> {
    let s = setup(cfg)?;
    let mut w = Writer::new(out, "sample", cfg)?;
    let real = realization(cfg, &s.omega, &s.kgrid)?;
    let meta = grid_meta(&s.kgrid, &s.omega);
    let axes = vec![
        Axis::categorical("bath", 2),
        Axis::categorical("bin", s.omega.len()),
        Axis::categorical("k_half", s.kgrid.half_len()),
        Axis::categorical("polarization", 3),
    ];
    let data: Vec<C64> = real.b.iter().chain(&real.d).flat_map(|v| v.0).collect();
    w.array("noise_amplitudes.nlmd", axes, meta.clone(), data)?;
    let time = noise_time_grid(&s.omega, cfg.grids.time_oversample)?;
    let source = NoiseSource {
        realization: &real,
        medium: &s.medium,
        time,
        units: cfg.units,
        conventions: cfg.conventions,
        options: NoiseOptions::default(),
    };
    let (p, m) = source.densities(None)?;
    for (name, q, f) in [("p_noise.nlmd", "P_N", &p), ("m_noise.nlmd", "M_N", &m)] {
        let (axes, data) = time_array(f)?;
        let mut mm = meta.clone();
        mm.push(("quantity".into(), q.into()));
        w.array(name, axes, mm, data)?;
    }
    w.finish()
}

/// Smooth random drive: a sum of `terms` tones, switched on as `1 - e^{-(t/τ)²}`,
/// with random complex polarizations (real on self-paired nodes).
pub fn smooth_random_drive(
    kgrid: Arc<KGrid>,
    time: TimeGrid,
    base_frequency: f64,
    amplitude: f64,
    terms: usize,
    rng: &mut ChaCha8Rng,
) -> TimeField {
    let mut e = TimeField::zeros(kgrid.clone(), time.clone());
    let nt = time.len();
    let tau = 2.0 / base_frequency;
    let t0 = time.nodes[0];
    for h in 0..kgrid.half_len() {
        let tones: Vec<(f64, f64, [f64; 6])> = (0..terms)
            .map(|_| {
                let f = base_frequency * rng.gen_range(0.5..1.5);
                let phase = rng.gen_range(0.0..std::f64::consts::TAU);
                let mut pol = [0.0; 6];
                for p in pol.iter_mut() {
                    *p = rng.gen_range(-1.0..1.0);
                }
                (f, phase, pol)
            })
            .collect();
        for m in 0..nt {
            let t = time.nodes[m] - t0;
            let ramp = amplitude * (1.0 - (-(t / tau).powi(2)).exp());
            let mut v = CVec3::ZERO;
            for (f, phase, pol) in &tones {
                let z = if kgrid.self_paired[h] {
                    C64::new((f * t + phase).cos(), 0.0)
                } else {
                    C64::from_polar(1.0, f * t + phase)
                };
                for a in 0..3 {
                    v.0[a] += z * C64::new(pol[a], if kgrid.self_paired[h] { 0.0 } else { pol[a + 3] });
                }
            }
            e.data[h * nt + m] = v.scale_re(ramp / terms.max(1) as f64);
        }
    }
    e
}

/// At most this many drive samples enter the quadratic-cost density check.
const DENSITY_SAMPLES: usize = 2000;

/// Bath comparisons on the oracle lattice: ODE against the convolution
/// solution per random drive, bath density against the kernel convolution,
/// energy conservation of the free bath.
pub fn cmd_oracle(cfg: &RunConfig, out: &Path) -> Result<Manifest> {
    let omega = cfg.frequency_grid()?;
    let kgrid = cfg.oracle_kgrid()?;
    let medium = cfg.medium(&omega, &kgrid)?;
    let mut w = Writer::new(out, "oracle", cfg)?;
    let o = cfg.oracle;
    let dt = cfg.oracle_dt();
    let period = std::f64::consts::TAU / o.drive_frequency;
    let nt = ((o.periods * period / dt).ceil() as usize).max(2) + 1;
    let time = TimeGrid::uniform(dt, 0, nt)?;
    let mut rng = ChaCha8Rng::seed_from_u64(o.seed);
    let mut checks = Vec::new();
    let mut table = Vec::new();
    for (kind, label) in kinds() {
        let Some(c) = medium.couplings(kind).rank1.as_ref() else {
            continue;
        };
        for d in 0..o.drives {
            let drive = smooth_random_drive(kgrid.clone(), time.clone(), o.drive_frequency, o.amplitude, 3, &mut rng);
            let ode = integrate_bath_linear(c, &drive, dt, None)?;
            let conv = first_order_solution(c, &drive, None)?;
            let rms = if o.amplitude == 0.0 { ode.x.iter().map(|v| v.max_abs()).fold(0.0, f64::max) } else { relative_rms(&ode, &conv)? };
            table.push(vec![kind_code(kind), d as f64, rms]);
            checks.push(CheckRecord::bounded(format!("{label} bath ode vs convolution, drive {d}"), rms, 1e-6));
        }
        let short = TimeGrid::uniform(dt, 0, nt.min(DENSITY_SAMPLES))?;
        let drive = smooth_random_drive(kgrid.clone(), short.clone(), o.drive_frequency, o.amplitude, 3, &mut rng);
        let conv = first_order_solution(c, &drive, None)?;
        let p_bath = density_from_bath(c, &conv)?;
        let couplings = crate::medium::Couplings {
            rank1: Some(c.clone()),
            rank2: None,
        };
        let kernel = build_kernel_time(kind, 1, &couplings, &short, KernelOptions::default())?;
        let p = polarization_eval(&drive, Some(&kernel), None, None)?;
        let scale = p.data.iter().map(|v| v.max_abs()).fold(0.0, f64::max);
        let dev = if scale > 0.0 { p.max_abs_diff(&p_bath) / scale } else { p.max_abs_diff(&p_bath) };
        checks.push(CheckRecord::bounded(format!("{label} bath density vs kernel convolution"), dev, 1e-8));
        let real = sample_modes(omega.clone(), kgrid.clone(), o.seed, cfg.units.hbar)?;
        let free = integrate_bath_linear(c, &TimeField::zeros(kgrid.clone(), time.clone()), dt, Some(&real))?;
        let energy = free.energy();
        let e0 = energy[0];
        let drift = energy.iter().map(|e| (e - e0).abs()).fold(0.0, f64::max) / e0.max(f64::MIN_POSITIVE);
        checks.push(CheckRecord::bounded(format!("{label} free bath energy drift"), drift, 1e-8));
    }
    w.text("oracle_rms.txt", &columnar(&["kind", "drive", "relative_rms"], table))?;
    let report: String = checks.iter().map(|c| c.line() + "\n").collect();
    w.text("oracle.txt", &format!("# status check value tolerance\n{report}"))?;
    w.manifest.checks = checks;
    w.finish()
}

fn kind_code(kind: FieldKind) -> f64 {
    match kind {
        FieldKind::Electric => 0.0,
        FieldKind::Magnetic => 1.0,
    }
}
