//! Collective spin oscillator: linear response, light input-output and CIFAR calibration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model_core::{
    c, check_finite, check_non_negative, check_positive, rotation_matrix, Mat2, Vec2, C64, I,
};

/// Broadband spin mode seen only as added measurement noise (and in CIFAR).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BroadbandSpin {
    /// FWHM linewidth γ_bb (rad/s).
    pub linewidth: f64,
    /// Readout rate Γ_S,bb (rad/s).
    pub readout_rate: f64,
    /// Flat added noise at resonance, shot-noise units.
    pub added_noise_sn: f64,
}

impl Default for BroadbandSpin {
    fn default() -> Self {
        BroadbandSpin {
            linewidth: 1.0,
            readout_rate: 0.0,
            added_noise_sn: 0.0,
        }
    }
}

/// Spin oscillator parameters; all rates in rad/s. Negative `omega` is the negative-mass case.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpinParams {
    pub omega: f64,
    pub linewidth0: f64,
    pub readout_rate: f64,
    pub zeta: f64,
    pub occupancy: f64,
    pub broadband: BroadbandSpin,
}

impl SpinParams {
    pub fn validate(&self) -> Result<()> {
        check_finite("spin.omega", self.omega)?;
        check_positive("spin.linewidth0", self.linewidth0)?;
        check_non_negative("spin.readout_rate", self.readout_rate)?;
        check_non_negative("spin.occupancy", self.occupancy)?;
        if !(self.zeta.abs() < 1.0) {
            return Err(Error::invalid("spin.zeta", format!("|{}| must be < 1", self.zeta)));
        }
        check_positive("spin.broadband.linewidth", self.broadband.linewidth)?;
        check_non_negative("spin.broadband.readout_rate", self.broadband.readout_rate)?;
        check_non_negative("spin.broadband.added_noise_sn", self.broadband.added_noise_sn)?;
        Ok(())
    }

    /// Dynamical broadening δγ_S = 2 ζ_S Γ_S.
    pub fn dynamical_broadening(&self) -> f64 {
        2.0 * self.zeta * self.readout_rate
    }

    /// Total linewidth γ_S = γ_S0 + δγ_S.
    pub fn linewidth(&self) -> f64 {
        self.linewidth0 + self.dynamical_broadening()
    }

    /// Same oscillator with a different readout rate and intrinsic linewidth (used by CIFAR).
    fn broadband_mode(&self) -> SpinParams {
        SpinParams {
            linewidth0: self.broadband.linewidth,
            readout_rate: self.broadband.readout_rate,
            ..*self
        }
    }
}

/// The `L` and `Z` blocks of the spin equations of motion at one frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinResponseBlocks {
    pub l: Mat2,
    pub z: Mat2,
}

pub fn coupling_matrix(zeta: f64) -> Mat2 {
    Mat2::real(0.0, -zeta, 1.0, 0.0)
}

/// The matrix inverted to obtain `L`.
pub fn inverse_response(omega: f64, p: &SpinParams) -> Mat2 {
    let diag = C64::new(p.linewidth0 / 2.0 + p.zeta * p.readout_rate, -omega);
    Mat2::new(diag, c(-p.omega), c(p.omega), diag)
}

pub fn spin_blocks(omega: f64, p: &SpinParams) -> Result<SpinResponseBlocks> {
    check_finite("omega", omega)?;
    if !(p.linewidth0 > 0.0) {
        return Err(Error::invalid("spin.linewidth0", "must be positive"));
    }
    let l = inverse_response(omega, p)
        .inverse()
        .ok_or_else(|| Error::NonFinite {
            context: "spin response inversion".into(),
        })?;
    Ok(SpinResponseBlocks {
        l,
        z: coupling_matrix(p.zeta),
    })
}

impl SpinResponseBlocks {
    /// Map from input light quadratures to `(X_S, P_S)`: `2√Γ L Z`.
    pub fn light_to_state(&self, readout_rate: f64) -> Mat2 {
        (self.l * self.z).scale_re(2.0 * readout_rate.sqrt())
    }

    /// Map from input light to output light: `1 + 2Γ Z L Z`.
    pub fn light_to_light(&self, readout_rate: f64) -> Mat2 {
        Mat2::IDENTITY + (self.z * self.l * self.z).scale_re(2.0 * readout_rate)
    }

    /// Map from thermal forces to output light: `√Γ Z L`.
    pub fn force_to_light(&self, readout_rate: f64) -> Mat2 {
        (self.z * self.l).scale_re(readout_rate.sqrt())
    }
}

pub fn spin_state_response(omega: f64, p: &SpinParams, x_in: Vec2, force: Vec2) -> Result<Vec2> {
    let b = spin_blocks(omega, p)?;
    let from_light = b.light_to_state(p.readout_rate).apply(x_in);
    let from_force = b.l.apply(force);
    Ok([from_light[0] + from_force[0], from_light[1] + from_force[1]])
}

pub fn spin_io(omega: f64, p: &SpinParams, x_in: Vec2, force: Vec2) -> Result<Vec2> {
    let b = spin_blocks(omega, p)?;
    let direct = b.light_to_light(p.readout_rate).apply(x_in);
    let from_force = b.force_to_light(p.readout_rate).apply(force);
    Ok([direct[0] + from_force[0], direct[1] + from_force[1]])
}

/// Scalar susceptibility `ω_S/(ω_S² − Ω² − iΩγ)` with γ = γ_S0 or γ_S.
pub fn chi_s(omega: f64, p: &SpinParams, include_broadening: bool) -> C64 {
    let gamma = if include_broadening {
        p.linewidth()
    } else {
        p.linewidth0
    };
    c(p.omega) / C64::new(p.omega * p.omega - omega * omega, -omega * gamma)
}

/// Single-mode response `X_S = χ_S [F + 2√Γ (X_in ± iζ P_in)]`, sign following `ω_S`.
pub fn simplified_state_response(omega: f64, p: &SpinParams, x_in: Vec2, force: C64) -> C64 {
    let sign = p.omega.signum();
    let drive = x_in[0] + I * (sign * p.zeta) * x_in[1];
    chi_s(omega, p, true) * (force + drive * (2.0 * p.readout_rate.sqrt()))
}

/// Single-mode output light `X_out = X_in + √Γ (±iζ, 1)ᵀ X_S`.
pub fn simplified_io(omega: f64, p: &SpinParams, x_in: Vec2, force: C64) -> Vec2 {
    let xs = simplified_state_response(omega, p, x_in, force);
    let sign = p.omega.signum();
    let root = p.readout_rate.sqrt();
    [
        x_in[0] + I * (sign * p.zeta * root) * xs,
        x_in[1] + xs * root,
    ]
}

/// Sign applied to ϑ_in in the CIFAR drive rotation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CifarSign {
    #[default]
    Positive,
    Negative,
}

impl CifarSign {
    pub fn factor(self) -> f64 {
        match self {
            CifarSign::Positive => 1.0,
            CifarSign::Negative => -1.0,
        }
    }
}

/// Detected phase-quadrature amplitude for a unit coherent drive `O_{±ϑ_in}(1, 0)ᵀ`,
/// through the narrowband oscillator plus the broadband mode.
pub fn cifar_response(omega_rf: f64, theta_in: f64, sign: CifarSign, p: &SpinParams) -> Result<C64> {
    let drive = rotation_matrix(sign.factor() * theta_in).col(0);
    let narrow = spin_blocks(omega_rf, p)?;
    let bb = p.broadband_mode();
    let broad = spin_blocks(omega_rf, &bb)?;
    let xs = narrow.light_to_state(p.readout_rate).apply(drive);
    let xbb = broad.light_to_state(bb.readout_rate).apply(drive);
    let z = narrow.z;
    let out_s = z.scale_re(p.readout_rate.sqrt()).apply(xs);
    let out_bb = z.scale_re(bb.readout_rate.sqrt()).apply(xbb);
    Ok(drive[1] + out_s[1] + out_bb[1])
}
