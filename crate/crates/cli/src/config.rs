use std::path::{Path, PathBuf};

use serde::Deserialize;

use rsp_core::bounds::{tetra_state, TetrahedronState};
use rsp_core::qstate::{BlochVector, ComplexEntry, DensityMatrix, DensityMatrix2Q};
use rsp_core::rsp::{PlateRetardances, PrepSettings, ResourceSpec, TargetState};
use rsp_core::tomo::{axis_sweep_targets, DetectorModel};

use crate::CliError;

pub const AXIS_SWEEP: &str = "axis-sweep";

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default = "default_n0")]
    pub n0: f64,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub resource: ResourceConfig,
    pub detector: Option<DetectorModel>,
    #[serde(default)]
    pub plates: PlatesConfig,
    #[serde(default)]
    pub targets: TargetsConfig,
    pub bounds: Option<BoundsConfig>,
    pub distill: Option<DistillConfig>,
}

fn default_n0() -> f64 {
    1e4
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ResourceConfig {
    pub epsilon_deg: f64,
    pub rel_phase_deg: f64,
    pub white_noise: f64,
}

impl Default for ResourceConfig {
    fn default() -> Self {
        Self {
            epsilon_deg: 45.0,
            rel_phase_deg: 0.0,
            white_noise: 0.0,
        }
    }
}

impl ResourceConfig {
    pub fn spec(&self) -> ResourceSpec {
        ResourceSpec {
            epsilon: self.epsilon_deg.to_radians(),
            rel_phase: self.rel_phase_deg.to_radians(),
            white_noise: self.white_noise,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlateConfig {
    pub design_retardance_deg: Option<f64>,
    pub design_wavelength_nm: Option<f64>,
    pub operating_wavelength_nm: Option<f64>,
    pub measured_retardance_deg: Option<f64>,
}

impl PlateConfig {
    fn retardance(&self, name: &str, nominal_deg: f64) -> Result<f64, CliError> {
        let scaled = self.design_retardance_deg.is_some()
            || self.design_wavelength_nm.is_some()
            || self.operating_wavelength_nm.is_some();
        let degrees = match (self.measured_retardance_deg, scaled) {
            (Some(_), true) => {
                return Err(CliError::Input(format!(
                    "plates.{name}: give either measured_retardance_deg or the design/operating fields, not both"
                )))
            }
            (Some(measured), false) => measured,
            (None, _) => {
                let design = self.design_retardance_deg.unwrap_or(nominal_deg);
                match (self.design_wavelength_nm, self.operating_wavelength_nm) {
                    (Some(d), Some(o)) if d > 0.0 && o > 0.0 => design * d / o,
                    (None, None) => design,
                    _ => {
                        return Err(CliError::Input(format!(
                            "plates.{name}: design_wavelength_nm and operating_wavelength_nm must both be positive and given together"
                        )))
                    }
                }
            }
        };
        if !(degrees > 0.0 && degrees < 360.0) {
            return Err(CliError::Input(format!(
                "plates.{name}: retardance {degrees} deg is outside (0, 360)"
            )));
        }
        Ok(degrees.to_radians())
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlatesConfig {
    #[serde(default)]
    pub qwp: PlateConfig,
    #[serde(default)]
    pub hwp: PlateConfig,
}

impl PlatesConfig {
    pub fn retardances(&self) -> Result<PlateRetardances, CliError> {
        Ok(PlateRetardances {
            qwp: self.qwp.retardance("qwp", 90.0)?,
            hwp: self.hwp.retardance("hwp", 180.0)?,
        })
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetsConfig {
    pub preset: Option<String>,
    #[serde(default)]
    pub states: Vec<TargetEntry>,
}

/// One target, by angles or by Poincaré coordinates, with optional fixed
/// trigger settings.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetEntry {
    pub theta_deg: Option<f64>,
    pub phi_deg: Option<f64>,
    pub lambda: Option<f64>,
    pub bloch: Option<[f64; 3]>,
    pub settings: Option<SettingsEntry>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SettingsEntry {
    pub qwp_deg: f64,
    pub hwp_deg: f64,
    pub t_d: f64,
    pub t_a: f64,
}

impl SettingsEntry {
    pub fn settings(&self) -> PrepSettings {
        PrepSettings::from_controls(self.qwp_deg.to_radians(), self.hwp_deg.to_radians(), self.t_d, self.t_a)
    }
}

impl TargetEntry {
    fn target(&self, index: usize) -> Result<TargetState, CliError> {
        let context = |e: rsp_core::RspError| CliError::Input(format!("target {index}: {e}"));
        match (self.bloch, self.theta_deg, self.phi_deg) {
            (Some(s), None, None) if self.lambda.is_none() => {
                let s = BlochVector::new(s[0], s[1], s[2]).map_err(context)?;
                TargetState::from_bloch(&s).map_err(context)
            }
            (None, Some(theta), Some(phi)) => {
                TargetState::new(theta.to_radians(), phi.to_radians(), self.lambda.unwrap_or(0.0))
                    .map_err(context)
            }
            _ => Err(CliError::Input(format!(
                "target {index}: give either bloch = [s1, s2, s3] or theta_deg and phi_deg (with optional lambda)"
            ))),
        }
    }
}

/// A resolved target with its optional fixed settings.
#[derive(Debug, Clone, Copy)]
pub struct PlannedTarget {
    pub target: TargetState,
    pub settings: Option<PrepSettings>,
}

impl TargetsConfig {
    pub fn resolve(&self) -> Result<Vec<PlannedTarget>, CliError> {
        let mut planned = Vec::new();
        match self.preset.as_deref() {
            None => {}
            Some(AXIS_SWEEP) => planned.extend(axis_sweep_targets().into_iter().map(|target| PlannedTarget {
                target,
                settings: None,
            })),
            Some(other) => {
                return Err(CliError::Input(format!(
                    "targets.preset: unknown preset {other:?} (known: {AXIS_SWEEP:?})"
                )))
            }
        }
        for entry in &self.states {
            let index = planned.len();
            planned.push(PlannedTarget {
                target: entry.target(index)?,
                settings: entry.settings.map(|s| s.settings()),
            });
        }
        Ok(planned)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsConfig {
    pub tetra: Option<[f64; 3]>,
    pub matrix: Option<Vec<Vec<ComplexEntry>>>,
    pub samples: Option<usize>,
}

impl BoundsConfig {
    pub fn resource(&self) -> Result<DensityMatrix2Q, CliError> {
        match (&self.tetra, &self.matrix) {
            (Some(t), None) => TetrahedronState::new(t[0], t[1], t[2])
                .map(|t| tetra_state(&t))
                .map_err(|e| CliError::Input(format!("bounds.tetra: {e}"))),
            (None, Some(rows)) => {
                let rho = DensityMatrix::from_rows(rows)
                    .map_err(|e| CliError::Input(format!("bounds.matrix: {e}")))?;
                rho.ensure_normalized()
                    .map_err(|e| CliError::Input(format!("bounds.matrix: {e}")))?;
                Ok(rho)
            }
            _ => Err(CliError::Input(
                "bounds: give exactly one of tetra = [t1, t2, t3] or matrix".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistillConfig {
    pub p: f64,
}

/// Parsed config plus the raw text it came from.
pub struct LoadedConfig {
    pub config: RunConfig,
    pub text: String,
}

pub fn load(path: &Path) -> Result<LoadedConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    let config = parse(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    Ok(LoadedConfig { config, text })
}

pub fn parse(text: &str) -> Result<RunConfig, String> {
    let config: RunConfig = toml::from_str(text).map_err(|e| e.to_string())?;
    if !(config.n0 > 0.0) {
        return Err(format!("n0 must be positive, found {}", config.n0));
    }
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_uses_defaults() {
        let config = parse("seed = 3\n").unwrap();
        assert_eq!(config.n0, 1e4);
        let plates = config.plates.retardances().unwrap();
        assert_eq!(plates, PlateRetardances::ideal());
        assert!(config.targets.resolve().unwrap().is_empty());
    }

    #[test]
    fn seed_is_mandatory() {
        assert!(parse("n0 = 100.0\n").unwrap_err().contains("seed"));
    }

    #[test]
    fn unknown_keys_are_rejected_with_a_line_number() {
        let err = parse("seed = 1\n\n[resource]\nwhite_nose = 0.1\n").unwrap_err();
        assert!(err.contains("white_nose"), "{err}");
        assert!(err.contains("line 4"), "{err}");
    }

    #[test]
    fn wavelength_scaling_and_measured_values() {
        let config = parse(
            "seed = 1\n[plates.qwp]\ndesign_wavelength_nm = 702\noperating_wavelength_nm = 737\n[plates.hwp]\nmeasured_retardance_deg = 171.0\n",
        )
        .unwrap();
        let plates = config.plates.retardances().unwrap();
        assert!((plates.qwp - PlateRetardances::scaled(702.0, 737.0).qwp).abs() < 1e-12);
        assert!((plates.hwp - 171f64.to_radians()).abs() < 1e-12);

        let both = parse("seed = 1\n[plates.hwp]\nmeasured_retardance_deg = 171.0\ndesign_wavelength_nm = 702\n").unwrap();
        assert!(both.plates.retardances().is_err());
    }

    #[test]
    fn targets_from_preset_and_list() {
        let config = parse(
            "seed = 1\n[targets]\npreset = \"axis-sweep\"\n[[targets.states]]\nbloch = [0.0, 0.0, 0.5]\n[[targets.states]]\ntheta_deg = 30\nphi_deg = 90\nlambda = 0.2\n",
        )
        .unwrap();
        let planned = config.targets.resolve().unwrap();
        assert_eq!(planned.len(), 20);
        assert!((planned[18].target.bloch().s3 - 0.5).abs() < 1e-12);
        assert!((planned[19].target.lam - 0.2).abs() < 1e-15);

        let bad = parse("seed = 1\n[[targets.states]]\nbloch = [0, 0, 1]\ntheta_deg = 3\n").unwrap();
        assert!(bad.targets.resolve().is_err());
    }

    #[test]
    fn bounds_resource_choices() {
        let tetra = parse("seed = 1\n[bounds]\ntetra = [0.0, 0.0, 1.0]\n").unwrap();
        assert!(tetra.bounds.unwrap().resource().is_ok());
        let outside = parse("seed = 1\n[bounds]\ntetra = [1.0, 1.0, 1.0]\n").unwrap();
        let err = outside.bounds.unwrap().resource().unwrap_err().to_string();
        assert!(err.contains("eigenvalue"), "{err}");
        let neither = parse("seed = 1\n[bounds]\nsamples = 10\n").unwrap();
        assert!(neither.bounds.unwrap().resource().is_err());
    }
}
