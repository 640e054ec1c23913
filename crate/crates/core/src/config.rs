//! JSON run configuration. Frequencies are in Hz and angles in degrees; everything is
//! converted to rad/s and radians on load and re-validated.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::estimation::{FreeParameter, McmcSettings};
use crate::hybrid_chain::{ChainParams, SystemParams};
use crate::model_core::{hz_to_rad, rad_to_hz};
use crate::optomech_cavity::{occupancy_from_temperature, OptoMechParams};
use crate::pipeline::PipelineSettings;
use crate::spin_oscillator::{BroadbandSpin, CifarSign, SpinParams};

pub const SCHEMA: &str = "hybrid-epr/1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BroadbandConfig {
    pub linewidth_hz: f64,
    pub readout_rate_hz: f64,
    /// Added broadband noise in shot-noise units.
    pub added_noise_sn: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpinConfig {
    /// Negative for the negative-mass ensemble.
    pub omega_hz: f64,
    pub linewidth_hz: f64,
    pub readout_rate_hz: f64,
    pub zeta: f64,
    pub occupancy: f64,
    pub broadband: BroadbandConfig,
}

/// Thermal bath given either as an occupancy or as a temperature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Bath {
    Occupancy(f64),
    TemperatureK(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MechConfig {
    pub omega_hz: f64,
    pub linewidth_hz: f64,
    pub kappa_in_hz: f64,
    pub kappa_ex_hz: f64,
    pub detuning_hz: f64,
    pub coupling_hz: f64,
    pub bath: Bath,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainConfig {
    pub nu: f64,
    pub eta: f64,
    pub phi_deg: f64,
    pub vartheta_deg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridScale {
    Linear,
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub f_min_hz: f64,
    pub f_max_hz: f64,
    pub points: usize,
    pub scale: GridScale,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            f_min_hz: 1.0e6,
            f_max_hz: 1.8e6,
            points: 801,
            scale: GridScale::Linear,
        }
    }
}

impl GridConfig {
    pub fn frequencies_hz(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.f_min_hz];
        }
        let n = (self.points - 1) as f64;
        (0..self.points)
            .map(|k| {
                let f = k as f64 / n;
                match self.scale {
                    GridScale::Linear => self.f_min_hz + f * (self.f_max_hz - self.f_min_hz),
                    GridScale::Log => self.f_min_hz * (self.f_max_hz / self.f_min_hz).powf(f),
                }
            })
            .collect()
    }

    fn validate(&self) -> Result<()> {
        let ok = self.points >= 1
            && self.f_min_hz.is_finite()
            && self.f_max_hz >= self.f_min_hz
            && (self.scale == GridScale::Linear || self.f_min_hz > 0.0);
        if !ok {
            return Err(Error::Config(format!("invalid grid {self:?}")));
        }
        Ok(())
    }
}

/// Estimation settings: sampler, likelihood and the spectra to fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    #[serde(default)]
    pub sampler: McmcSettings,
    #[serde(default = "default_relative_error")]
    pub relative_error: f64,
    #[serde(default = "default_floor_sn")]
    pub floor_sn: f64,
    pub parameters: Vec<FreeParameter>,
    /// Extra spectra, each given as parameter overrides of the base system.
    #[serde(default)]
    pub extra_spectra: Vec<Vec<Override>>,
    #[serde(default = "default_posterior_draws")]
    pub posterior_draws: usize,
    /// Initial walker spread in prior standard deviations.
    #[serde(default = "default_init_scale")]
    pub init_scale: f64,
}

fn default_relative_error() -> f64 {
    0.08
}
fn default_floor_sn() -> f64 {
    0.1
}
fn default_posterior_draws() -> usize {
    1000
}
fn default_init_scale() -> f64 {
    0.1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Override {
    pub kind: crate::estimation::ParamKind,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CifarConfig {
    pub theta_in_deg: f64,
    pub sign: CifarSign,
}

impl Default for CifarConfig {
    fn default() -> Self {
        CifarConfig {
            theta_in_deg: 45.0,
            sign: CifarSign::Positive,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub spin: SpinConfig,
    pub mech: MechConfig,
    pub chain: ChainConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub wiener: PipelineSettings,
    #[serde(default)]
    pub mcmc: Option<FitConfig>,
    #[serde(default)]
    pub cifar: CifarConfig,
}

impl ConfigFile {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ConfigFile = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        ConfigFile::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.system().map(|_| ()).map_err(|e| Error::Config(e.to_string()))?;
        if let Some(fit) = &self.mcmc {
            fit.validate()?;
        }
        Ok(())
    }

    /// Model parameters in internal units.
    pub fn system(&self) -> Result<SystemParams> {
        let m = &self.mech;
        let omega0 = hz_to_rad(m.omega_hz);
        let occupancy = match m.bath {
            Bath::Occupancy(n) => n,
            Bath::TemperatureK(t) if t > 0.0 => occupancy_from_temperature(omega0, t),
            Bath::TemperatureK(t) => return Err(Error::invalid("mech.bath", format!("temperature {t} must be positive"))),
        };
        let s = &self.spin;
        let p = SystemParams {
            spin: SpinParams {
                omega: hz_to_rad(s.omega_hz),
                linewidth0: hz_to_rad(s.linewidth_hz),
                readout_rate: hz_to_rad(s.readout_rate_hz),
                zeta: s.zeta,
                occupancy: s.occupancy,
                broadband: BroadbandSpin {
                    linewidth: hz_to_rad(s.broadband.linewidth_hz),
                    readout_rate: hz_to_rad(s.broadband.readout_rate_hz),
                    added_noise_sn: s.broadband.added_noise_sn,
                },
            },
            mech: OptoMechParams {
                omega0,
                linewidth0: hz_to_rad(m.linewidth_hz),
                kappa_in: hz_to_rad(m.kappa_in_hz),
                kappa_ex: hz_to_rad(m.kappa_ex_hz),
                detuning: hz_to_rad(m.detuning_hz),
                coupling: hz_to_rad(m.coupling_hz),
                occupancy,
            },
            chain: ChainParams {
                nu: self.chain.nu,
                eta: self.chain.eta,
                phi: self.chain.phi_deg.to_radians(),
                vartheta: self.chain.vartheta_deg.to_radians(),
            },
        };
        p.validate()?;
        Ok(p)
    }

    /// Inverse of [`ConfigFile::system`], with default grid and settings.
    pub fn from_system(p: &SystemParams) -> Self {
        ConfigFile {
            spin: SpinConfig {
                omega_hz: rad_to_hz(p.spin.omega),
                linewidth_hz: rad_to_hz(p.spin.linewidth0),
                readout_rate_hz: rad_to_hz(p.spin.readout_rate),
                zeta: p.spin.zeta,
                occupancy: p.spin.occupancy,
                broadband: BroadbandConfig {
                    linewidth_hz: rad_to_hz(p.spin.broadband.linewidth),
                    readout_rate_hz: rad_to_hz(p.spin.broadband.readout_rate),
                    added_noise_sn: p.spin.broadband.added_noise_sn,
                },
            },
            mech: MechConfig {
                omega_hz: rad_to_hz(p.mech.omega0),
                linewidth_hz: rad_to_hz(p.mech.linewidth0),
                kappa_in_hz: rad_to_hz(p.mech.kappa_in),
                kappa_ex_hz: rad_to_hz(p.mech.kappa_ex),
                detuning_hz: rad_to_hz(p.mech.detuning),
                coupling_hz: rad_to_hz(p.mech.coupling),
                bath: Bath::Occupancy(p.mech.occupancy),
            },
            chain: ChainConfig {
                nu: p.chain.nu,
                eta: p.chain.eta,
                phi_deg: p.chain.phi.to_degrees(),
                vartheta_deg: p.chain.vartheta.to_degrees(),
            },
            grid: GridConfig::default(),
            wiener: PipelineSettings::default(),
            mcmc: None,
            cifar: CifarConfig::default(),
        }
    }

    /// SHA-256 of the canonical JSON form.
    pub fn params_hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    pub fn csv_header(&self) -> String {
        format!("# schema={SCHEMA} params_hash={}", self.params_hash())
    }
}

impl FitConfig {
    fn validate(&self) -> Result<()> {
        let spec = crate::estimation::LikelihoodSpec {
            relative_error: self.relative_error,
            floor_sn: self.floor_sn,
            parameters: self.parameters.clone(),
        };
        spec.validate(1 + self.extra_spectra.len()).map_err(|e| Error::Config(e.to_string()))?;
        if self.parameters.is_empty() {
            return Err(Error::Config("mcmc.parameters is empty".into()));
        }
        if !(self.init_scale > 0.0) {
            return Err(Error::Config("mcmc.init_scale must be positive".into()));
        }
        Ok(())
    }

    pub fn likelihood(&self) -> crate::estimation::LikelihoodSpec {
        crate::estimation::LikelihoodSpec {
            relative_error: self.relative_error,
            floor_sn: self.floor_sn,
            parameters: self.parameters.clone(),
        }
    }

    /// Base parameters of every fitted spectrum.
    pub fn bases(&self, base: &SystemParams) -> Vec<SystemParams> {
        std::iter::once(*base)
            .chain(self.extra_spectra.iter().map(|ovr| {
                let mut p = *base;
                for o in ovr {
                    o.kind.set(&mut p, o.value);
                }
                p
            }))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::{desk_hybrid, HybridPreset};

    #[test]
    fn round_trip_system() {
        let p = HybridPreset::resonant().build().unwrap();
        let cfg = ConfigFile::from_system(&p);
        let q = cfg.system().unwrap();
        assert!((q.spin.omega / p.spin.omega - 1.0).abs() < 1e-14);
        assert!((q.mech.coupling / p.mech.coupling - 1.0).abs() < 1e-14);
        assert!((q.chain.vartheta - p.chain.vartheta).abs() < 1e-15);
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        assert_eq!(ConfigFile::from_json(&text).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_rejected() {
        let cfg = ConfigFile::from_system(&desk_hybrid());
        let mut v = serde_json::to_value(&cfg).unwrap();
        v["spin"]["omega_S"] = serde_json::json!(1.0);
        let err = ConfigFile::from_json(&v.to_string()).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        let mut v = serde_json::to_value(&cfg).unwrap();
        v["extra"] = serde_json::json!({});
        assert!(ConfigFile::from_json(&v.to_string()).is_err());
    }

    #[test]
    fn invariants_rechecked() {
        let mut cfg = ConfigFile::from_system(&desk_hybrid());
        cfg.chain.eta = 1.5;
        let err = ConfigFile::from_json(&serde_json::to_string(&cfg).unwrap()).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn hash_tracks_content() {
        let a = ConfigFile::from_system(&desk_hybrid());
        let mut b = a.clone();
        assert_eq!(a.params_hash(), b.params_hash());
        b.chain.nu = 0.5;
        assert_ne!(a.params_hash(), b.params_hash());
        assert!(a.csv_header().starts_with("# schema=hybrid-epr/1 params_hash="));
    }

    #[test]
    fn temperature_bath() {
        let mut cfg = ConfigFile::from_system(&HybridPreset::resonant().build().unwrap());
        cfg.mech.bath = Bath::TemperatureK(11.4);
        let n = cfg.system().unwrap().mech.occupancy;
        assert!((n / 1.73e5 - 1.0).abs() < 0.01, "{n}");
    }

    #[test]
    fn grids() {
        let g = GridConfig {
            f_min_hz: 1.0,
            f_max_hz: 100.0,
            points: 3,
            scale: GridScale::Log,
        };
        let f = g.frequencies_hz();
        assert!((f[1] - 10.0).abs() < 1e-12);
    }
}
