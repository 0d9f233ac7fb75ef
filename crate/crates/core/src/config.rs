//! TOML run configuration.
//!
//! ```toml
//! schema_version = 1
//!
//! [grids]
//! omega_max = 4.0
//! n_omega = 16
//! k_extent = [1.0, 1.0, 1.0]
//! k_counts = [3, 3, 3]
//!
//! [medium.electric.rank1]
//! type = "isotropic-lorentzian"
//! strength = 0.2
//! center = 2.0
//! width = 0.5
//!
//! [noise]
//! seed = 7
//!
//! [solver]
//! max_order = 40
//! ```

use crate::grids::{build_frequency_grid, build_kgrid, FrequencyGrid, KGrid, QuadratureRule, TimeGrid};
use crate::medium::{
    make_coupling1, make_coupling2, Couplings, FieldKind, Lorentzian, Medium, Parametrization1, Parametrization2,
};
use crate::solver::SolverConfig;
use crate::units::{Conventions, Units};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;
use std::sync::Arc;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub grids: GridConfig,
    #[serde(default)]
    pub units: Units,
    #[serde(default)]
    pub conventions: Conventions,
    #[serde(default)]
    pub medium: MediumConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub oracle: OracleConfig,
    #[serde(default)]
    pub outputs: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub omega_max: f64,
    pub n_omega: usize,
    #[serde(default = "harmonic")]
    pub rule: QuadratureRule,
    pub k_extent: [f64; 3],
    pub k_counts: [usize; 3],
    /// Noise time grid: `oversample·2·n_omega + 1` samples over one period.
    #[serde(default = "default_oversample")]
    pub time_oversample: usize,
    #[serde(default)]
    pub kernel: KernelGridConfig,
}

fn harmonic() -> QuadratureRule {
    QuadratureRule::Harmonic
}

fn default_oversample() -> usize {
    4
}

/// Sampling of exported and validated kernels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelGridConfig {
    /// Time step; defaults to `0.05/ω_max`.
    pub dt: Option<f64>,
    pub negative_samples: usize,
    pub positive_samples: usize,
    /// Rank-3 time kernels keep every `stride`-th sample.
    pub rank2_stride: usize,
    /// Damping for the Kramers–Kronig check; defaults to `0.05·ω_max`.
    pub kk_eta: Option<f64>,
}

impl Default for KernelGridConfig {
    fn default() -> Self {
        Self {
            dt: None,
            negative_samples: 8,
            positive_samples: 256,
            rank2_stride: 8,
            kk_eta: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MediumConfig {
    pub electric: CouplingConfig,
    pub magnetic: CouplingConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CouplingConfig {
    pub rank1: Option<Rank1Config>,
    pub rank2: Option<Rank2Config>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Rank1Config {
    IsotropicLorentzian { strength: f64, center: f64, width: f64 },
    AnisotropicDiagonal { axes: [Lorentzian; 3] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Rank2Config {
    LorentzianProduct {
        strength: f64,
        center: f64,
        width: f64,
        /// 27 entries, index `9i + 3j + k`.
        tensor: Vec<f64>,
        #[serde(default = "yes")]
        symmetrize: bool,
    },
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub enabled: bool,
    pub seed: u64,
    /// Omit the field-dependent memory term of the noise densities.
    pub drop_memory: bool,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            seed: 0,
            drop_memory: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    /// Integration and drive sampling step; defaults to `0.005/ω_max`.
    pub dt: Option<f64>,
    /// Lattice of the oracle runs, independent of the solver grid.
    pub k_counts: [usize; 3],
    /// Duration in periods of the drive.
    pub periods: f64,
    pub drives: usize,
    pub drive_frequency: f64,
    pub amplitude: f64,
    pub seed: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            dt: None,
            k_counts: [1, 1, 1],
            periods: 10.0,
            drives: 3,
            drive_frequency: 1.0,
            amplitude: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub time_fields: bool,
    pub spectra: bool,
    pub time_kernels: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            time_fields: true,
            spectra: true,
            time_kernels: true,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Canonical serialization, the input of [`RunConfig::hash`].
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical serialization, hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: String| Err(Error::Config(format!("{field}: {msg}")));
        if self.schema_version != SCHEMA_VERSION {
            return bad(
                "schema_version",
                format!("unsupported version {}, expected {SCHEMA_VERSION}", self.schema_version),
            );
        }
        let g = &self.grids;
        if !(g.omega_max.is_finite() && g.omega_max > 0.0) {
            return bad("grids.omega_max", format!("must be positive, got {}", g.omega_max));
        }
        if g.n_omega == 0 || g.n_omega > 100_000 {
            return bad("grids.n_omega", format!("must lie in 1..=100000, got {}", g.n_omega));
        }
        if g.k_counts.iter().any(|&c| c == 0 || c > 256) {
            return bad("grids.k_counts", format!("entries must lie in 1..=256, got {:?}", g.k_counts));
        }
        if g.k_counts.iter().product::<usize>() > 1 << 20 {
            return bad("grids.k_counts", "more than 2^20 nodes".into());
        }
        if g.k_extent.iter().any(|&e| !(e.is_finite() && e > 0.0)) {
            return bad("grids.k_extent", format!("entries must be positive, got {:?}", g.k_extent));
        }
        if g.time_oversample == 0 || g.time_oversample > 64 {
            return bad("grids.time_oversample", format!("must lie in 1..=64, got {}", g.time_oversample));
        }
        let k = &g.kernel;
        if let Some(dt) = k.dt {
            if !(dt.is_finite() && dt > 0.0) {
                return bad("grids.kernel.dt", format!("must be positive, got {dt}"));
            }
        }
        if let Some(eta) = k.kk_eta {
            if !(eta.is_finite() && eta > 0.0) {
                return bad("grids.kernel.kk_eta", format!("must be positive, got {eta}"));
            }
        }
        if k.positive_samples < 2 || k.positive_samples + k.negative_samples > 1 << 16 {
            return bad("grids.kernel", "positive_samples must be at least 2 and the total at most 65536".into());
        }
        if k.rank2_stride == 0 {
            return bad("grids.kernel.rank2_stride", "must be at least 1".into());
        }
        self.units
            .validate()
            .map_err(|e| Error::Config(format!("units: {e}")))?;
        for (label, c) in [("medium.electric", &self.medium.electric), ("medium.magnetic", &self.medium.magnetic)] {
            if let Some(Rank2Config::LorentzianProduct { tensor, .. }) = &c.rank2 {
                if tensor.len() != 27 {
                    return bad(&format!("{label}.rank2.tensor"), format!("needs 27 entries, got {}", tensor.len()));
                }
            }
            if c.rank2.is_some() && c.rank1.is_none() {
                return bad(&format!("{label}.rank2"), "requires a rank1 coupling".into());
            }
        }
        self.solver
            .validate()
            .map_err(|e| Error::Config(format!("solver: {e}")))?;
        let o = &self.oracle;
        if let Some(dt) = o.dt {
            if !(dt.is_finite() && dt > 0.0) {
                return bad("oracle.dt", format!("must be positive, got {dt}"));
            }
        }
        if o.k_counts.iter().any(|&c| c == 0) || o.k_counts.iter().product::<usize>() > 64 {
            return bad("oracle.k_counts", format!("entries must be positive with at most 64 nodes, got {:?}", o.k_counts));
        }
        if !(o.periods.is_finite() && o.periods > 0.0 && o.periods <= 1e4) {
            return bad("oracle.periods", format!("must lie in (0, 1e4], got {}", o.periods));
        }
        if !(o.drive_frequency.is_finite() && o.drive_frequency > 0.0) {
            return bad("oracle.drive_frequency", format!("must be positive, got {}", o.drive_frequency));
        }
        if !o.amplitude.is_finite() || o.drives > 1000 {
            return bad("oracle", "amplitude must be finite and drives at most 1000".into());
        }
        Ok(())
    }

    pub fn frequency_grid(&self) -> Result<Arc<FrequencyGrid>> {
        build_frequency_grid(self.grids.omega_max, self.grids.n_omega, self.grids.rule)
            .map(Arc::new)
            .map_err(|e| Error::Config(format!("grids: {e}")))
    }

    pub fn kgrid(&self) -> Result<Arc<KGrid>> {
        build_kgrid(self.grids.k_extent, self.grids.k_counts)
            .map(Arc::new)
            .map_err(|e| Error::Config(format!("grids: {e}")))
    }

    pub fn oracle_kgrid(&self) -> Result<Arc<KGrid>> {
        build_kgrid(self.grids.k_extent, self.oracle.k_counts)
            .map(Arc::new)
            .map_err(|e| Error::Config(format!("grids: {e}")))
    }

    pub fn eta(&self) -> f64 {
        self.solver.eta.unwrap_or(0.01 * self.grids.omega_max)
    }

    pub fn kernel_time_grid(&self) -> Result<TimeGrid> {
        let k = &self.grids.kernel;
        TimeGrid::uniform(
            k.dt.unwrap_or(0.05 / self.grids.omega_max),
            k.negative_samples,
            k.positive_samples,
        )
    }

    pub fn kk_eta(&self) -> f64 {
        self.grids.kernel.kk_eta.unwrap_or(0.05 * self.grids.omega_max)
    }

    pub fn oracle_dt(&self) -> f64 {
        self.oracle.dt.unwrap_or(0.005 / self.grids.omega_max)
    }

    pub fn medium(&self, omega: &Arc<FrequencyGrid>, kgrid: &Arc<KGrid>) -> Result<Medium> {
        let build = |kind: FieldKind, c: &CouplingConfig| -> Result<Couplings> {
            let rank1 = c
                .rank1
                .as_ref()
                .map(|r| {
                    let p = match r {
                        Rank1Config::IsotropicLorentzian { strength, center, width } => {
                            Parametrization1::IsotropicLorentzian(Lorentzian::new(*strength, *center, *width)?)
                        }
                        Rank1Config::AnisotropicDiagonal { axes } => {
                            for l in axes {
                                l.validate()?;
                            }
                            Parametrization1::AnisotropicDiagonal(*axes)
                        }
                    };
                    make_coupling1(kind, p, omega.clone(), kgrid.clone())
                })
                .transpose()?;
            let rank2 = c
                .rank2
                .as_ref()
                .map(|r| {
                    let Rank2Config::LorentzianProduct {
                        strength,
                        center,
                        width,
                        tensor,
                        symmetrize,
                    } = r;
                    let t: [f64; 27] = tensor
                        .as_slice()
                        .try_into()
                        .map_err(|_| Error::Config("rank2.tensor needs 27 entries".into()))?;
                    make_coupling2(
                        kind,
                        Parametrization2::LorentzianProduct {
                            lorentzian: Lorentzian::new(*strength, *center, *width)?,
                            tensor: t,
                        },
                        omega.clone(),
                        kgrid.clone(),
                        *symmetrize,
                    )
                })
                .transpose()?;
            Ok(Couplings { rank1, rank2 })
        };
        let wrap = |label: &'static str| {
            move |e: Error| match e {
                Error::Parameter(m) => Error::Config(format!("{label}: {m}")),
                other => other,
            }
        };
        Ok(Medium {
            electric: build(FieldKind::Electric, &self.medium.electric).map_err(wrap("medium.electric"))?,
            magnetic: build(FieldKind::Magnetic, &self.medium.magnetic).map_err(wrap("medium.magnetic"))?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
schema_version = 1
[grids]
omega_max = 4.0
n_omega = 8
k_extent = [1.0, 1.0, 1.0]
k_counts = [3, 3, 3]
"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = RunConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(c.grids.rule, QuadratureRule::Harmonic);
        assert_eq!(c.solver.tolerance, 1e-8);
        assert!((c.eta() - 0.04).abs() < 1e-15);
        assert!(c.noise.enabled);
        let m = c.medium(&c.frequency_grid().unwrap(), &c.kgrid().unwrap()).unwrap();
        assert!(m.is_linear());
    }

    #[test]
    fn canonical_form_round_trips_and_hash_is_stable() {
        let c = RunConfig::from_toml(MINIMAL).unwrap();
        let again = RunConfig::from_toml(&c.canonical()).unwrap();
        assert_eq!(c, again);
        assert_eq!(c.hash(), again.hash());
        assert_eq!(c.hash().len(), 64);
        let mut d = c.clone();
        d.noise.seed = 1;
        assert_ne!(c.hash(), d.hash());
    }

    #[test]
    fn errors_name_the_field() {
        let e = RunConfig::from_toml(&MINIMAL.replace("n_omega = 8", "n_omega = 0")).unwrap_err();
        assert!(e.to_string().contains("grids.n_omega"), "{e}");
        let e = RunConfig::from_toml(&format!("{MINIMAL}\n[solver]\ntolerance = -1.0\n")).unwrap_err();
        assert!(e.to_string().contains("solver"), "{e}");
        let e = RunConfig::from_toml(&format!("{MINIMAL}\nbogus = 1\n")).unwrap_err();
        assert!(e.to_string().contains("bogus"), "{e}");
        let e = RunConfig::from_toml("schema_version = 1\n[grids]\nomega_max = \"x\"").unwrap_err();
        assert!(e.to_string().contains("line"), "{e}");
    }

    #[test]
    fn medium_sections_parse() {
        let text = format!(
            "{MINIMAL}
[medium.electric.rank1]
type = \"isotropic-lorentzian\"
strength = 0.2
center = 2.0
width = 0.5
[medium.electric.rank2]
type = \"lorentzian-product\"
strength = 0.01
center = 2.0
width = 0.5
tensor = [{}]
[medium.magnetic.rank1]
type = \"anisotropic-diagonal\"
axes = [{{ strength = 0.1, center = 1.0, width = 0.3 }}, {{ strength = 0.2, center = 1.0, width = 0.3 }}, {{ strength = 0.3, center = 1.0, width = 0.3 }}]
",
            vec!["0.5"; 27].join(", ")
        );
        let c = RunConfig::from_toml(&text).unwrap();
        let m = c.medium(&c.frequency_grid().unwrap(), &c.kgrid().unwrap()).unwrap();
        assert!(m.electric.has_nonlinear());
        assert!(m.magnetic.rank1.is_some());
        let bad = text.replace("strength = 0.2", "strength = -0.2");
        let c = RunConfig::from_toml(&bad).unwrap();
        let e = c.medium(&c.frequency_grid().unwrap(), &c.kgrid().unwrap()).unwrap_err();
        assert!(e.to_string().contains("medium.electric"), "{e}");
    }
}
