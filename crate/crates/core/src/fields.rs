//! Post-processing: time-domain fields, derived quantities and the
//! time-domain constitutive relations.

use crate::grids::TimeGrid;
use crate::linalg::{dot, CVec3, Vec3, C64};
use crate::par::map_range;
use crate::solver::{response, FrequencyKernels};
use crate::spectra::{synthesize, Spectrum, TimeField};
use crate::susceptibility::{KernelDomain, SusceptibilityKernel};
use crate::units::{complex_frequency, Conventions, Units};
use crate::{Error, Result};
use std::fmt::Write as _;

pub fn to_time_domain(e: &Spectrum, time: &TimeGrid, conventions: &Conventions) -> TimeField {
    synthesize(e, time, conventions)
}

/// `B̃ = k × Ẽ / (-ω)` at every stored signed frequency.
pub fn magnetic_from_electric(e: &Spectrum) -> Spectrum {
    let n = e.n_omega();
    let mut b = Spectrum::zeros(e.kgrid.clone(), e.omega.clone());
    for h in 0..e.kgrid.half_len() {
        let k = e.kgrid.half_nodes[h];
        for s in 0..2 * n {
            let w = e.signed_frequency(s % n, s >= n);
            let i = h * 2 * n + s;
            b.data[i] = CVec3::cross_real(k, e.data[i]).scale_re(-1.0 / w);
        }
    }
    b
}

/// `D = ε₀ E + P`.
pub fn displacement(e: &TimeField, p: &TimeField, units: &Units) -> Result<TimeField> {
    e.check_compatible(p)?;
    Ok(TimeField {
        data: e.data.iter().zip(&p.data).map(|(a, b)| a.scale_re(units.eps0) + *b).collect(),
        ..e.clone()
    })
}

/// `H = B/μ₀ - M`.
pub fn magnetic_h(b: &TimeField, m: &TimeField, units: &Units) -> Result<TimeField> {
    b.check_compatible(m)?;
    Ok(TimeField {
        data: b.data.iter().zip(&m.data).map(|(a, x)| a.scale_re(1.0 / units.mu0) - *x).collect(),
        ..b.clone()
    })
}

/// `φ̃ = -i k·P̃ / (ε₀ k²)`; undefined at `k = 0`.
pub fn scalar_potential_at(k: Vec3, p: CVec3, eps0: f64) -> Result<C64> {
    let k2 = dot(k, k);
    if k2 == 0.0 {
        return Err(Error::ExcludedBin("scalar potential is undefined at k = 0".into()));
    }
    Ok(C64::new(0.0, -1.0) * p.dot_real(k) / (eps0 * k2))
}

/// Scalar potential per half node; `None` at the origin.
pub fn scalar_potential(p: &TimeField, units: &Units) -> Vec<Option<Vec<C64>>> {
    (0..p.kgrid.half_len())
        .map(|h| {
            let k = p.kgrid.half_nodes[h];
            p.series(h)
                .iter()
                .map(|v| scalar_potential_at(k, *v, units.eps0).ok())
                .collect()
        })
        .collect()
}

/// Time-domain constitutive relation: `noise + χ⁽¹⁾∗F + χ⁽²⁾∗[F, F]` with the
/// trapezoid rule over lags `τ ∈ [0, t - t₀]`; the field is taken to vanish
/// before the first sample.
pub fn constitutive_eval(
    field: &TimeField,
    rank1: Option<&SusceptibilityKernel>,
    rank2: Option<&SusceptibilityKernel>,
    noise: Option<&TimeField>,
) -> Result<TimeField> {
    let dt = field.time.dt()?;
    let nt = field.time.len();
    let g = field.kgrid.clone();
    let nf = g.full_len();
    let dv = g.cell_volume();
    if let Some(n) = noise {
        field.check_compatible(n)?;
    }
    // lag index l ↦ kernel sample index
    let lags = |k: &SusceptibilityKernel| -> Result<usize> {
        if k.domain != KernelDomain::Time || k.kgrid.counts != g.counts {
            return Err(Error::Shape("constitutive evaluation needs time kernels on the field's k grid".into()));
        }
        let h = k.spacing.ok_or_else(|| Error::Shape("kernel axis is not uniform".into()))?;
        if (h - dt).abs() > 1e-9 * dt {
            return Err(Error::Shape(format!("kernel spacing {h} differs from field step {dt}")));
        }
        let z = k
            .axis
            .iter()
            .position(|t| t.abs() <= 1e-9 * dt)
            .ok_or_else(|| Error::Shape("kernel axis lacks t = 0".into()))?;
        if k.n_samples() - z < nt {
            return Err(Error::Shape(format!(
                "kernel covers {} lags, field needs {nt}",
                k.n_samples() - z
            )));
        }
        Ok(z)
    };
    let z1 = rank1.map(lags).transpose()?;
    let z2 = rank2.map(lags).transpose()?;
    let trap = |l: usize, m: usize| if l == 0 || l == m { 0.5 * dt } else { dt };
    let rows = map_range(g.half_len(), |h| {
        let fh = g.full_of_half(h);
        (0..nt)
            .map(|m| {
                let mut acc = noise.map(|n| n.get(h, m)).unwrap_or(CVec3::ZERO);
                if m == 0 {
                    return acc;
                }
                if let (Some(k), Some(z)) = (rank1, z1) {
                    for l in 0..=m {
                        let block = k.block1(z + l);
                        let c = trap(l, m);
                        if k.homogeneous {
                            acc += block[0].mul_vec(field.get(h, m - l)).scale_re(c);
                        } else {
                            for f1 in 0..nf {
                                acc += block[fh * nf + f1].mul_vec(field.at_full(f1, m - l)).scale_re(c * dv);
                            }
                        }
                    }
                }
                if let (Some(k), Some(z)) = (rank2, z2) {
                    for l1 in 0..=m {
                        for l2 in 0..=m {
                            let block = k.block2(z + l1, z + l2);
                            let c = trap(l1, m) * trap(l2, m);
                            for f1 in 0..nf {
                                let a = field.at_full(f1, m - l1);
                                if k.homogeneous {
                                    if let Some(f2) = g.difference_index(fh, f1) {
                                        acc += block[0].contract(a, field.at_full(f2, m - l2)).scale_re(c * dv);
                                    }
                                } else {
                                    for f2 in 0..nf {
                                        acc += block[(fh * nf + f1) * nf + f2]
                                            .contract(a, field.at_full(f2, m - l2))
                                            .scale_re(c * dv * dv);
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
    Ok(TimeField {
        data: rows.into_iter().flatten().collect(),
        ..field.clone()
    })
}

pub fn polarization_eval(
    e: &TimeField,
    chi1: Option<&SusceptibilityKernel>,
    chi2: Option<&SusceptibilityKernel>,
    p_n: Option<&TimeField>,
) -> Result<TimeField> {
    constitutive_eval(e, chi1, chi2, p_n)
}

pub fn magnetization_eval(
    b: &TimeField,
    zeta1: Option<&SusceptibilityKernel>,
    zeta2: Option<&SusceptibilityKernel>,
    m_n: Option<&TimeField>,
) -> Result<TimeField> {
    constitutive_eval(b, zeta1, zeta2, m_n)
}

/// Longitudinal balance of a solution: the k-projection of the field
/// equation gives `k·(ε₀ (w/ω)² Ẽ + P̃) = 0` with `w = ω - iη` and
/// `P̃ = P̃_N + (2π)^{3/2} χ̃ Ẽ`, where `k·P̃_N = -k·J̃/(μ₀ω²)`.
/// Returns the worst relative violation over nodes with `k ≠ 0`.
pub fn gauss_violation(
    e: &Spectrum,
    kernels: &FrequencyKernels,
    j: &Spectrum,
    eta: f64,
    units: &Units,
    conventions: &Conventions,
) -> Result<f64> {
    let induced = if kernels.chi1.is_some() || kernels.chi2.is_some() {
        Some(response(e, kernels.chi1.as_ref(), kernels.chi2.as_ref())?)
    } else {
        None
    };
    let pref = conventions.field_equation_prefactor();
    let n = e.n_omega();
    let mut worst: f64 = 0.0;
    for h in 0..e.kgrid.half_len() {
        let k = e.kgrid.half_nodes[h];
        if dot(k, k) == 0.0 {
            continue;
        }
        for s in 0..2 * n {
            let om = e.signed_frequency(s % n, s >= n);
            let w = complex_frequency(om, eta);
            let i = h * 2 * n + s;
            let pe = induced.as_ref().map(|r| r.data[i].scale_re(pref)).unwrap_or(CVec3::ZERO);
            let pn = j.data[i].dot_real(k) / (-units.mu0 * om * om);
            let de = e.data[i].dot_real(k) * (w * w / (om * om)) * units.eps0;
            let balance = de + pe.dot_real(k) + pn;
            let scale = units.eps0 * e.data[i].norm_sqr().sqrt() + pe.norm_sqr().sqrt() + pn.norm();
            if scale > 0.0 {
                worst = worst.max(balance.norm() / (scale * crate::linalg::norm(k)));
            }
        }
    }
    Ok(worst)
}

/// Columnar `|Ẽ(k, ω)|²` per half node and signed frequency.
pub fn spectrum_table(e: &Spectrum) -> String {
    let n = e.n_omega();
    let mut out = String::from("# kx ky kz omega power\n");
    for h in 0..e.kgrid.half_len() {
        let k = e.kgrid.half_nodes[h];
        for neg in [true, false] {
            let order: Vec<usize> = if neg { (0..n).rev().collect() } else { (0..n).collect() };
            for b in order {
                let w = e.signed_frequency(b, neg);
                let p = e.get(h, b, neg).norm_sqr();
                let _ = writeln!(out, "{:.12e} {:.12e} {:.12e} {:.12e} {:.12e}", k[0], k[1], k[2], w, p);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grids::{build_frequency_grid, build_kgrid, FrequencyGrid, KGrid, QuadratureRule};
    use crate::medium::{make_coupling1, make_coupling2, Couplings, FieldKind, Lorentzian, Parametrization1, Parametrization2};
    use crate::spectra::analyze;
    use crate::susceptibility::{build_kernel_time, KernelOptions};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn grids() -> (Arc<FrequencyGrid>, Arc<KGrid>) {
        (
            Arc::new(build_frequency_grid(3.0, 6, QuadratureRule::Harmonic).unwrap()),
            Arc::new(build_kgrid([2.0; 3], [3, 3, 3]).unwrap()),
        )
    }

    fn random_time_field(g: Arc<KGrid>, t: TimeGrid, seed: u64) -> TimeField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut f = TimeField::zeros(g, t);
        for v in f.data.iter_mut() {
            *v = CVec3([0; 3].map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))));
        }
        f
    }

    #[test]
    fn magnetic_field_examples() {
        let w = Arc::new(build_frequency_grid(4.0, 2, QuadratureRule::Harmonic).unwrap());
        let g = Arc::new(build_kgrid([2.0; 3], [1, 1, 2]).unwrap());
        let h = g.half_nodes.iter().position(|k| k[2] > 0.0).unwrap();
        let kz = g.half_nodes[h][2];
        let mut e = Spectrum::zeros(g.clone(), w.clone());
        e.set(h, 1, false, CVec3::from_real([1.0, 0.0, 0.0]));
        e.set(h, 0, false, CVec3::from_real([0.0, 0.0, 2.0]));
        let b = magnetic_from_electric(&e);
        let expect = CVec3::from_real([0.0, kz / -w.nodes[1], 0.0]);
        assert!((b.get(h, 1, false) - expect).max_abs() < 1e-15);
        assert_eq!(b.get(h, 0, false), CVec3::ZERO);
        // Faraday: ω B̃ + k × Ẽ = 0 elementwise
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for v in e.data.iter_mut() {
            *v = CVec3([0; 3].map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))));
        }
        let b = magnetic_from_electric(&e);
        for hh in 0..g.half_len() {
            for s in 0..4 {
                let om = e.signed_frequency(s % 2, s >= 2);
                let r = b.data[hh * 4 + s].scale_re(om) + CVec3::cross_real(g.half_nodes[hh], e.data[hh * 4 + s]);
                assert!(r.max_abs() < 1e-14);
            }
        }
    }

    #[test]
    fn scalar_potential_and_displacement() {
        let p = CVec3::from_real([0.0, 0.0, 0.7]);
        let phi = scalar_potential_at([0.0, 0.0, 1.0], p, 2.0).unwrap();
        assert!((phi - C64::new(0.0, -0.35)).norm() < 1e-15);
        assert_eq!(scalar_potential_at([0.0, 1.0, 0.0], p, 1.0).unwrap(), C64::new(0.0, 0.0));
        assert!(matches!(scalar_potential_at([0.0; 3], p, 1.0), Err(Error::ExcludedBin(_))));

        let (_, g) = grids();
        let t = TimeGrid::uniform(0.1, 0, 4).unwrap();
        let e = random_time_field(g.clone(), t.clone(), 1);
        let pf = random_time_field(g.clone(), t.clone(), 2);
        let units = Units { eps0: 2.0, ..Units::default() };
        let zero = TimeField::zeros(g.clone(), t);
        let d = displacement(&e, &pf, &units).unwrap();
        for i in 0..d.data.len() {
            assert!((d.data[i] - (e.data[i].scale_re(2.0) + pf.data[i])).max_abs() < 1e-15);
        }
        assert_eq!(displacement(&zero, &pf, &units).unwrap().data, pf.data);
        let phis = scalar_potential(&pf, &units);
        assert!(phis[g.origin_half_index().unwrap()].is_none());
    }

    #[test]
    fn linear_convolution_matches_frequency_product() {
        let (w, _) = grids();
        let g = Arc::new(build_kgrid([2.0; 3], [1, 1, 1]).unwrap());
        let l = Lorentzian::new(0.8, 1.5, 0.4).unwrap();
        let c = Couplings {
            rank1: Some(make_coupling1(FieldKind::Electric, Parametrization1::IsotropicLorentzian(l), w.clone(), g.clone()).unwrap()),
            rank2: None,
        };
        // slowly switched-on single mode, measured late so the switch-on transient has decayed
        let eta = 0.15;
        let dt = 0.01;
        let nt = 6000;
        let t = TimeGrid::uniform(dt, 0, nt).unwrap();
        let w0 = 1.2;
        let h = 0;
        let mut e = TimeField::zeros(g.clone(), t.clone());
        for m in 0..nt {
            let tt = t.nodes[m];
            let ramp = 1.0 - (-0.5 * tt).exp();
            e.data[h * nt + m] = CVec3::from_real([ramp * (w0 * tt).cos(), 0.0, 0.0]);
        }
        let kernel = build_kernel_time(FieldKind::Electric, 1, &c, &t, KernelOptions::default())
            .unwrap()
            .regularized(eta)
            .unwrap();
        let p = polarization_eval(&e, Some(&kernel), None, None).unwrap();
        let modes = crate::susceptibility::build_modes(FieldKind::Electric, 1, &c).unwrap();
        let chi = crate::susceptibility::frequency_kernel(&modes, &[w0], eta, &Conventions::default()).unwrap();
        // continuous convention: P̃ = (2π)^{3/2} χ̃ Ẽ
        let x = chi.block1(0)[0].0[0][0] * (2.0 * std::f64::consts::PI).powf(1.5);
        let mut err: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for m in nt - 800..nt {
            let tt = t.nodes[m];
            let expect = (x * C64::from_polar(1.0, w0 * tt)).re;
            err = err.max((p.get(h, m)[0].re - expect).abs());
            scale = scale.max(expect.abs());
        }
        assert!(err < 0.01 * scale, "{err} vs {scale}");
    }

    #[test]
    fn quadratic_term_is_even_in_the_field() {
        let (w, g) = grids();
        let l = Lorentzian::new(0.5, 1.0, 0.3).unwrap();
        let mut d = [0.0; 27];
        d[0] = 1.0;
        d[13] = 0.5;
        let c = Couplings {
            rank1: Some(make_coupling1(FieldKind::Magnetic, Parametrization1::IsotropicLorentzian(l), w.clone(), g.clone()).unwrap()),
            rank2: Some(
                make_coupling2(
                    FieldKind::Magnetic,
                    Parametrization2::LorentzianProduct { lorentzian: l, tensor: d },
                    w.clone(),
                    g.clone(),
                    true,
                )
                .unwrap(),
            ),
        };
        let t = TimeGrid::uniform(0.05, 0, 12).unwrap();
        let k2 = build_kernel_time(FieldKind::Magnetic, 2, &c, &t, KernelOptions::default()).unwrap();
        let b = random_time_field(g.clone(), t.clone(), 7);
        let minus = TimeField {
            data: b.data.iter().map(|v| -*v).collect(),
            ..b.clone()
        };
        let m1 = magnetization_eval(&b, None, Some(&k2), None).unwrap();
        let m2 = magnetization_eval(&minus, None, Some(&k2), None).unwrap();
        assert!(m1.max_abs_diff(&m2) < 1e-14);
        assert!(m1.data.iter().any(|v| v.max_abs() > 1e-6));
        let zero = magnetization_eval(&TimeField::zeros(g, t), None, Some(&k2), None).unwrap();
        assert!(zero.data.iter().all(|v| *v == CVec3::ZERO));
    }

    #[test]
    fn time_domain_round_trip() {
        let (w, g) = grids();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut s = Spectrum::zeros(g, w.clone());
        for v in s.data.iter_mut() {
            *v = CVec3([0; 3].map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))));
        }
        let t = crate::noise::noise_time_grid(&w, 4).unwrap();
        let conv = Conventions::default();
        let back = analyze(&to_time_domain(&s, &t, &conv), w, &conv).unwrap();
        assert!(back.max_abs_diff(&s) < 1e-10);
        let table = spectrum_table(&s);
        assert_eq!(table.lines().count(), 1 + s.data.len());
    }
}
