//! Physical constants and Fourier normalization conventions.
//!
//! Every transform in the crate goes through the helpers in this module so
//! the (2π) bookkeeping lives in one place:
//!
//! * temporal synthesis of fields: `E(t) = (2π)^time_exp · Σ_ω Δω · Ẽ(ω) e^{+iωt}`
//!   with `time_exp = -3/2`; analysis is the exact discrete inverse on a
//!   periodic window, `Ẽ(ω) = (2π)^{-1-time_exp} · Σ_t Δt · E(t) e^{-iωt}`.
//! * susceptibility kernels of order n:
//!   `χ̃(ω₁..ω_n) = (2π)^{n·kernel_exp_per_order} ∫ dt₁..dt_n χ(t₁..t_n) e^{-Σ(iω_m + η)|t_m|}`
//!   with `kernel_exp_per_order = -3/2`. With this choice the `(2π)^{3/2}`
//!   prefactors of the frequency-domain field equation reproduce the
//!   time-domain constitutive convolutions exactly at first and second order.
//! * complex frequency: `ω → ω - iη`, the prescription under which both the
//!   damped kernels and the propagator `Λ⁻¹` are retarded for `e^{+iωt}` synthesis.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// ε₀, μ₀, c and ħ. Natural units by default.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Units {
    #[serde(default = "one")]
    pub eps0: f64,
    #[serde(default = "one")]
    pub mu0: f64,
    #[serde(default = "one")]
    pub c: f64,
    #[serde(default = "one")]
    pub hbar: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for Units {
    fn default() -> Self {
        Self {
            eps0: 1.0,
            mu0: 1.0,
            c: 1.0,
            hbar: 1.0,
        }
    }
}

impl Units {
    pub fn validate(&self) -> crate::Result<()> {
        for (name, v) in [
            ("eps0", self.eps0),
            ("mu0", self.mu0),
            ("c", self.c),
            ("hbar", self.hbar),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(crate::Error::Config(format!("units.{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Exponents of 2π used by the transforms. Recorded in every exported file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Conventions {
    /// Exponent on 2π in temporal synthesis of fields.
    pub time_exp: f64,
    /// Exponent on 2π per kernel order in the kernel transform.
    pub kernel_exp_per_order: f64,
    /// Exponent on 2π for spatial transforms of rank-n coupling tensors,
    /// stored as the coefficient `a` in `a·(n+1)`. Tensors are specified
    /// directly in reciprocal space, so this only labels outputs.
    pub tensor_exp_per_rank: f64,
}

impl Default for Conventions {
    fn default() -> Self {
        Self {
            time_exp: -1.5,
            kernel_exp_per_order: -1.5,
            tensor_exp_per_rank: -1.5,
        }
    }
}

impl Conventions {
    /// Prefactor multiplying `Σ Δω Ẽ e^{iωt}` in synthesis.
    pub fn synthesis_prefactor(&self) -> f64 {
        (2.0 * PI).powf(self.time_exp)
    }

    /// Prefactor multiplying `Σ Δt E e^{-iωt}` in analysis; the inverse of
    /// synthesis on a periodic window of length 2π/Δω.
    pub fn analysis_prefactor(&self) -> f64 {
        (2.0 * PI).powf(-1.0 - self.time_exp)
    }

    /// Prefactor of an order-n kernel transform.
    pub fn kernel_prefactor(&self, order: usize) -> f64 {
        (2.0 * PI).powf(self.kernel_exp_per_order * order as f64)
    }

    /// The `(2π)^{3/2}` factor in front of the susceptibility terms of the
    /// field equation.
    pub fn field_equation_prefactor(&self) -> f64 {
        (2.0 * PI).powf(1.5)
    }
}

/// Regularized complex frequency `ω - iη`.
pub fn complex_frequency(omega: f64, eta: f64) -> Complex64 {
    Complex64::new(omega, -eta)
}

/// `sin(ωt)/ω`, evaluated by its series near the removable singularity.
pub fn sin_over_omega(omega: f64, t: f64) -> f64 {
    let x = omega * t;
    if x.abs() < 1e-4 {
        t - omega * omega * t * t * t / 6.0
    } else {
        (omega * t).sin() / omega
    }
}
