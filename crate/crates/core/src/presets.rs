//! Named parameter sets used by the tests, the acceptance suite and the example config.

use std::f64::consts::PI;

use crate::error::Result;
use crate::hybrid_chain::{ChainParams, SystemParams};
use crate::model_core::hz_to_rad;
use crate::optomech_cavity::{effective_frequency, occupancy_from_temperature, OptoMechParams};
use crate::spin_oscillator::{BroadbandSpin, SpinParams};

/// Two oscillators read out in the quantum-nondemolition regime with matched rates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QndPreset {
    pub occupancy: f64,
    /// Quantum cooperativity `Γ/(γ(2n+1))` of each oscillator.
    pub cooperativity: f64,
    /// Oscillator frequency in units of the intrinsic linewidth.
    pub omega_over_linewidth: f64,
    pub eta: f64,
    /// Intrinsic linewidth in rad/s.
    pub linewidth: f64,
}

impl QndPreset {
    pub fn new(occupancy: f64, cooperativity: f64, omega_over_linewidth: f64, eta: f64) -> Self {
        QndPreset {
            occupancy,
            cooperativity,
            omega_over_linewidth,
            eta,
            linewidth: 1e3,
        }
    }

    pub fn readout_rate(&self) -> f64 {
        self.cooperativity * self.linewidth * (2.0 * self.occupancy + 1.0)
    }

    /// Negative-mass spin and a fast-cavity mechanical oscillator with cancelling backaction.
    pub fn pair(&self) -> SystemParams {
        let g = self.linewidth;
        let rate = self.readout_rate();
        let w = self.omega_over_linewidth * g;
        let kappa = 1000.0 * w;
        SystemParams {
            spin: SpinParams {
                omega: -w,
                linewidth0: g,
                readout_rate: rate,
                zeta: 0.0,
                occupancy: self.occupancy,
                broadband: BroadbandSpin::default(),
            },
            mech: OptoMechParams {
                // the free susceptibility peaks at √(ω0² − γ²/4); match it to |ω_S| as a Lorentzian
                omega0: (w * w + g * g / 4.0).sqrt(),
                linewidth0: g,
                kappa_in: kappa,
                kappa_ex: 0.0,
                detuning: 0.0,
                coupling: (rate * kappa * (1.0 + 4.0 * w * w / (kappa * kappa)) / 16.0).sqrt(),
                occupancy: self.occupancy,
            },
            chain: ChainParams {
                nu: 1.0,
                eta: self.eta,
                phi: PI,
                vartheta: 0.0,
            },
        }
    }

    /// Same light path with the spin left unread, so only the mechanics is measured.
    pub fn single(&self) -> SystemParams {
        let mut p = self.pair();
        p.spin.readout_rate = 0.0;
        p
    }
}

/// Laboratory-scale hybrid system: MHz membrane mode in a red-detuned cavity and a
/// negative-mass spin ensemble, with posterior-style loss and noise figures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HybridPreset {
    /// Spin frequency offset from the matched resonance, Hz.
    pub detuning_hz: f64,
}

impl HybridPreset {
    pub const DETUNED_HZ: f64 = 110e3;

    pub fn resonant() -> Self {
        HybridPreset { detuning_hz: 0.0 }
    }

    pub fn detuned() -> Self {
        HybridPreset {
            detuning_hz: Self::DETUNED_HZ,
        }
    }

    pub fn mech() -> OptoMechParams {
        OptoMechParams {
            omega0: hz_to_rad(1.37e6),
            linewidth0: hz_to_rad(2.1e-3),
            kappa_in: hz_to_rad(4.6e6),
            kappa_ex: hz_to_rad(0.4e6),
            detuning: -hz_to_rad(0.25e6),
            coupling: hz_to_rad(90e3),
            occupancy: occupancy_from_temperature(hz_to_rad(1.37e6), 11.4),
        }
    }

    pub fn spin() -> SpinParams {
        SpinParams {
            omega: -hz_to_rad(1.37e6),
            linewidth0: hz_to_rad(3.0e3),
            readout_rate: hz_to_rad(20.3e3),
            zeta: 0.03,
            occupancy: 0.81,
            broadband: BroadbandSpin {
                linewidth: hz_to_rad(1.0e6),
                readout_rate: hz_to_rad(5.0e3),
                added_noise_sn: 0.2,
            },
        }
    }

    pub fn build(&self) -> Result<SystemParams> {
        let mech = Self::mech();
        let matched = effective_frequency(&mech)?;
        let mut spin = Self::spin();
        spin.omega = -(matched + hz_to_rad(self.detuning_hz));
        Ok(SystemParams {
            spin,
            mech,
            chain: ChainParams {
                nu: 0.65,
                eta: 0.8,
                phi: PI,
                vartheta: 2f64.to_radians(),
            },
        })
    }
}

/// Small, fast hybrid system for estimation tests.
pub fn desk_hybrid() -> SystemParams {
    let w = hz_to_rad(100e3);
    let kappa = 1000.0 * w;
    let g = hz_to_rad(500.0);
    let rate = hz_to_rad(5e3);
    SystemParams {
        spin: SpinParams {
            omega: -w,
            linewidth0: g,
            readout_rate: rate,
            zeta: 0.0,
            occupancy: 0.5,
            broadband: BroadbandSpin::default(),
        },
        mech: OptoMechParams {
            omega0: (w * w + g * g / 4.0).sqrt(),
            linewidth0: g,
            kappa_in: kappa,
            kappa_ex: 0.0,
            detuning: 0.0,
            coupling: (rate * kappa * (1.0 + 4.0 * w * w / (kappa * kappa)) / 16.0).sqrt(),
            occupancy: 0.5,
        },
        chain: ChainParams {
            nu: 0.9,
            eta: 0.8,
            phi: PI,
            vartheta: 0.0,
        },
    }
}

/// Oscillators left uncoupled from the light: the photocurrent is pure shot noise.
pub fn decoupled() -> SystemParams {
    let mut p = desk_hybrid();
    p.spin.readout_rate = 0.0;
    p.mech.coupling = 0.0;
    p
}
