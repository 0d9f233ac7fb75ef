//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Each exported function wraps a plain Rust function of the same name with a
//! `_native` suffix so the numerics can be unit-tested off the browser.

use nlmd_core::bath::{first_order_solution, integrate_bath_linear, relative_rms, STABILITY_LIMIT};
use nlmd_core::grids::{build_frequency_grid, build_kgrid, QuadratureRule, TimeGrid};
use nlmd_core::medium::{make_coupling1, Couplings, FieldKind, Lorentzian, Medium, Parametrization1};
use nlmd_core::noise::{noise_time_grid, sample_modes, NoiseOptions, NoiseSource};
use nlmd_core::pipeline::smooth_random_drive;
use nlmd_core::solver::{solve, FrequencyKernels, LambdaOperator, OrderRecord, Problem, SolverConfig};
use nlmd_core::susceptibility::{build_modes, frequency_kernel, hilbert_transform, symmetric_midpoint_axis};
use nlmd_core::units::{Conventions, Units};
use nlmd_core::{Error, Result};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;
use wasm_bindgen::prelude::*;

const MAX_POINTS: usize = 1500;

fn lorentzian_medium(
    strength: f64,
    center: f64,
    width: f64,
    omega_max: f64,
    n_omega: usize,
    counts: [usize; 3],
) -> Result<Couplings> {
    let omega = Arc::new(build_frequency_grid(omega_max, n_omega, QuadratureRule::Harmonic)?);
    let kgrid = Arc::new(build_kgrid([1.0; 3], counts)?);
    let l = Lorentzian::new(strength, center, width)?;
    Ok(Couplings {
        rank1: Some(make_coupling1(FieldKind::Electric, Parametrization1::IsotropicLorentzian(l), omega, kgrid)?),
        rank2: None,
    })
}

fn js(e: Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen(getter_with_clone)]
#[derive(Debug, Clone)]
pub struct KkCurves {
    pub omega: Vec<f64>,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
    /// Hilbert transform of `im`; equals `re` for a causal kernel.
    pub kk: Vec<f64>,
    pub mismatch: f64,
}

/// `χ̃_xx(ω)` of an isotropic Lorentzian bath next to the Kramers–Kronig
/// reconstruction of its real part.
pub fn kk_spectrum_native(strength: f64, center: f64, width: f64, eta: f64) -> Result<KkCurves> {
    let omega_max = 2.0 * center + 8.0 * width;
    let couplings = lorentzian_medium(strength, center, width, omega_max, 256, [1, 1, 1])?;
    let axis = symmetric_midpoint_axis(2.0 * omega_max, 600);
    let k = frequency_kernel(&build_modes(FieldKind::Electric, 1, &couplings)?, &axis, eta, &Conventions::default())?;
    let data = k.rank1().ok_or_else(|| Error::Parameter("expected a rank-2 kernel".into()))?;
    let re: Vec<f64> = data.iter().map(|m| m.0[0][0].re).collect();
    let im: Vec<f64> = data.iter().map(|m| m.0[0][0].im).collect();
    let kk = hilbert_transform(&im);
    let num: f64 = re.iter().zip(&kk).map(|(a, b)| (a - b).powi(2)).sum();
    let den: f64 = re.iter().map(|a| a * a).sum();
    Ok(KkCurves {
        omega: axis,
        re,
        im,
        kk,
        mismatch: (num / den).sqrt(),
    })
}

#[wasm_bindgen]
pub fn kk_spectrum(strength: f64, center: f64, width: f64, eta: f64) -> std::result::Result<KkCurves, JsError> {
    kk_spectrum_native(strength, center, width, eta).map_err(js)
}

#[wasm_bindgen(getter_with_clone)]
#[derive(Debug, Clone)]
pub struct BathCurves {
    pub t: Vec<f64>,
    /// `Re X_x` of the lowest bath mode from the time integration.
    pub ode: Vec<f64>,
    /// The same coordinate from the retarded convolution.
    pub conv: Vec<f64>,
    pub rms: f64,
}

/// Drives a Lorentzian bath with a smooth random field and compares the
/// integrated oscillator coordinates with the convolution solution.
pub fn bath_oracle_native(center: f64, width: f64, drive_frequency: f64, periods: f64, seed: u64) -> Result<BathCurves> {
    let omega_max = 2.0 * center;
    let couplings = lorentzian_medium(0.5, center, width, omega_max, 6, [1, 1, 1])?;
    let c = couplings.rank1.as_ref().unwrap();
    let dt = 0.25 * STABILITY_LIMIT / omega_max;
    let nt = (periods * std::f64::consts::TAU / drive_frequency / dt).ceil() as usize + 1;
    if nt > 400_000 {
        return Err(Error::Parameter("too many time steps; lower periods or raise the drive frequency".into()));
    }
    let time = TimeGrid::uniform(dt, 0, nt)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let drive = smooth_random_drive(c.kgrid.clone(), time.clone(), drive_frequency, 1.0, 3, &mut rng);
    let ode = integrate_bath_linear(c, &drive, dt, None)?;
    let conv = first_order_solution(c, &drive, None)?;
    let stride = nt.div_ceil(MAX_POINTS);
    let pick = |tr: &nlmd_core::bath::BathTrajectory| (0..nt).step_by(stride).map(|m| tr.x_at(0, 0, m).0[0].re).collect();
    Ok(BathCurves {
        t: (0..nt).step_by(stride).map(|m| time.nodes[m]).collect(),
        ode: pick(&ode),
        conv: pick(&conv),
        rms: relative_rms(&ode, &conv)?,
    })
}

#[wasm_bindgen]
pub fn bath_oracle(
    center: f64,
    width: f64,
    drive_frequency: f64,
    periods: f64,
    seed: u32,
) -> std::result::Result<BathCurves, JsError> {
    bath_oracle_native(center, width, drive_frequency, periods, seed as u64).map_err(js)
}

#[wasm_bindgen(getter_with_clone)]
#[derive(Debug, Clone)]
pub struct Convergence {
    /// Relative sup-norm change per order.
    pub change: Vec<f64>,
    pub residual: Vec<f64>,
    pub converged: bool,
    pub diverged: bool,
}

/// Iterates the field equation for a noise-driven Lorentzian medium and
/// reports the per-order history, including diverging runs.
pub fn solver_convergence_native(strength: f64, center: f64, width: f64, seed: u64) -> Result<Convergence> {
    let units = Units::default();
    let conv = Conventions::default();
    let electric = lorentzian_medium(strength, center, width, 8.0, 16, [3, 3, 1])?;
    let c = electric.rank1.as_ref().unwrap();
    let (omega, kgrid) = (c.omega.clone(), c.kgrid.clone());
    let medium = Medium {
        electric,
        magnetic: Couplings::default(),
    };
    let cfg = SolverConfig {
        max_order: 60,
        tolerance: 1e-10,
        ..Default::default()
    };
    let eta = 0.01 * omega.omega_max;
    let kernels = FrequencyKernels::from_medium(&medium, omega.clone(), kgrid.clone(), eta, &conv)?;
    let lambda = LambdaOperator::build(&kgrid, &omega, eta, units.c)?;
    let realization = sample_modes(omega.clone(), kgrid, seed, units.hbar)?;
    let source = NoiseSource {
        realization: &realization,
        medium: &medium,
        time: noise_time_grid(&omega, 4)?,
        units,
        conventions: conv,
        options: NoiseOptions::default(),
    };
    let problem = Problem {
        kernels: &kernels,
        lambda: &lambda,
        units,
        conventions: conv,
    };
    let split = |h: &[OrderRecord]| -> (Vec<f64>, Vec<f64>) {
        (h.iter().map(|r| r.sup_change).collect(), h.iter().map(|r| r.residual).collect())
    };
    match solve(&cfg, &problem, &source) {
        Ok(out) => {
            let (change, residual) = split(&out.state.history);
            Ok(Convergence {
                change,
                residual,
                converged: out.converged,
                diverged: false,
            })
        }
        Err(Error::Divergence { history, .. }) => {
            let (change, residual) = split(&history);
            Ok(Convergence {
                change,
                residual,
                converged: false,
                diverged: true,
            })
        }
        Err(e) => Err(e),
    }
}

#[wasm_bindgen]
pub fn solver_convergence(strength: f64, center: f64, width: f64, seed: u32) -> std::result::Result<Convergence, JsError> {
    solver_convergence_native(strength, center, width, seed as u64).map_err(js)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kk_curves_agree_for_a_narrow_line() {
        let k = kk_spectrum_native(0.3, 2.0, 0.3, 0.1).unwrap();
        assert_eq!(k.omega.len(), k.re.len());
        assert!(k.mismatch < 0.05, "{}", k.mismatch);
    }

    #[test]
    fn bath_routes_agree() {
        let b = bath_oracle_native(1.5, 0.4, 1.0, 5.0, 3).unwrap();
        assert!(b.t.len() <= MAX_POINTS && b.t.len() == b.ode.len());
        assert!(b.rms < 1e-5, "{}", b.rms);
    }

    #[test]
    fn weak_medium_converges_and_strong_one_diverges() {
        let weak = solver_convergence_native(0.05, 2.0, 0.5, 1).unwrap();
        assert!(weak.converged && !weak.diverged);
        let strong = solver_convergence_native(30.0, 2.0, 0.2, 1).unwrap();
        assert!(strong.diverged && !strong.change.is_empty());
    }
}
