//! Linearized cavity optomechanics in reflection: exact response blocks, effective
//! mechanical susceptibility, input-output relations and calibration spectra.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model_core::{
    c, check_finite, check_non_negative, check_positive, rotation_matrix, Mat2, Vec2, C64, I,
    LIGHT_VACUUM_PSD,
};

const HBAR: f64 = 1.054_571_817e-34;
const K_BOLTZMANN: f64 = 1.380_649e-23;

/// Mechanical mode and cavity parameters; all rates in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptoMechParams {
    pub omega0: f64,
    pub linewidth0: f64,
    pub kappa_in: f64,
    pub kappa_ex: f64,
    /// Laser-cavity detuning Δ (negative is red).
    pub detuning: f64,
    /// Light-enhanced coupling g.
    pub coupling: f64,
    pub occupancy: f64,
}

impl OptoMechParams {
    pub fn validate(&self) -> Result<()> {
        check_positive("mech.omega0", self.omega0)?;
        check_positive("mech.linewidth0", self.linewidth0)?;
        check_positive("mech.kappa_in", self.kappa_in)?;
        check_non_negative("mech.kappa_ex", self.kappa_ex)?;
        check_finite("mech.detuning", self.detuning)?;
        check_non_negative("mech.coupling", self.coupling)?;
        check_non_negative("mech.occupancy", self.occupancy)?;
        Ok(())
    }

    pub fn kappa(&self) -> f64 {
        self.kappa_in + self.kappa_ex
    }

    /// Phase of the intracavity field relative to the input, `arctan(2Δ/κ)`.
    pub fn psi_in(&self) -> f64 {
        (2.0 * self.detuning / self.kappa()).atan()
    }

    /// Phase of the outgoing carrier relative to the cavity field, `arctan(2Δ/(κ_in−κ_ex))`.
    pub fn psi_out(&self) -> f64 {
        let diff = self.kappa_in - self.kappa_ex;
        if diff == 0.0 {
            return std::f64::consts::FRAC_PI_2 * self.detuning.signum();
        }
        (2.0 * self.detuning / diff).atan()
    }

    /// Mechanical quality factor ω_M0/γ_M0.
    pub fn quality_factor(&self) -> f64 {
        self.omega0 / self.linewidth0
    }

    fn inverse_chi_m00(&self, omega: C64) -> C64 {
        (c(self.omega0 * self.omega0) - omega * omega - I * omega * self.linewidth0) / self.omega0
    }

    /// `χ_M⁻¹ = χ_M00⁻¹ − C A⁻¹ B` continued to complex frequency, with its derivative.
    fn inverse_chi_m_with_derivative(&self, omega: C64) -> (C64, C64) {
        let k2 = c(self.kappa() / 2.0) - I * omega;
        let d = k2 * k2 + self.detuning * self.detuning;
        let spring = 8.0 * self.coupling * self.coupling * self.detuning;
        let value = self.inverse_chi_m00(omega) + spring / d;
        let d_prime = -2.0 * I * k2;
        let deriv = (-2.0 * omega - I * self.linewidth0) / self.omega0 - spring * d_prime / (d * d);
        (value, deriv)
    }
}

/// Thermal occupancy `1/(e^{ħω/k_BT} − 1)` for angular frequency ω (rad/s) and temperature T (K).
pub fn occupancy_from_temperature(omega: f64, temperature: f64) -> f64 {
    let x = HBAR * omega / (K_BOLTZMANN * temperature);
    1.0 / x.exp_m1()
}

/// Cavity and mechanical blocks at one frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CavityBlocks {
    pub a: Mat2,
    pub b: Vec2,
    pub c: Vec2,
    pub y: Mat2,
    pub y_inv: Mat2,
    pub chi_m00: C64,
    pub chi_m: C64,
}

pub fn chi_m00(omega: f64, p: &OptoMechParams) -> C64 {
    1.0 / p.inverse_chi_m00(c(omega))
}

pub fn cavity_blocks(omega: f64, p: &OptoMechParams) -> Result<CavityBlocks> {
    check_finite("omega", omega)?;
    let kappa = p.kappa();
    if !(kappa > 0.0) {
        return Err(Error::invalid("mech.kappa", "must be positive"));
    }
    let diag = C64::new(kappa / 2.0, -omega);
    let a = Mat2::new(diag, c(p.detuning), c(-p.detuning), diag);
    let b = [c(0.0), c(-2.0 * p.coupling)];
    let cc = [c(-4.0 * p.coupling), c(0.0)];
    let chi00 = chi_m00(omega, p);
    let bc = Mat2([[b[0] * cc[0], b[0] * cc[1]], [b[1] * cc[0], b[1] * cc[1]]]);
    let y = a - bc.scale(chi00);
    let singular = || Error::NonFinite {
        context: "cavity response inversion".into(),
    };
    let a_inv = a.inverse().ok_or_else(singular)?;
    let y_inv = y.inverse().ok_or_else(singular)?;
    let ca_b = {
        let row = a_inv.left_apply(cc);
        row[0] * b[0] + row[1] * b[1]
    };
    let chi_m = 1.0 / (1.0 / chi00 - ca_b);
    Ok(CavityBlocks {
        a,
        b,
        c: cc,
        y,
        y_inv,
        chi_m00: chi00,
        chi_m,
    })
}

/// Complex Lorentzian sideband amplitude `(κ/2)/(κ/2 − i(Ω+Δ))` and its phase.
pub fn lorentzian(omega: f64, p: &OptoMechParams) -> (C64, f64) {
    let half = p.kappa() / 2.0;
    let l = c(half) / C64::new(half, -(omega + p.detuning));
    (l, l.arg())
}

/// Complex pole of χ_M closest to the bare resonance: `ω_pole − iγ_M/2`.
pub fn mechanical_pole(p: &OptoMechParams) -> Result<C64> {
    let mut z = C64::new(p.omega0, -p.linewidth0 / 2.0);
    for _ in 0..200 {
        let (f, df) = p.inverse_chi_m_with_derivative(z);
        let step = f / df;
        z -= step;
        if !z.is_finite() {
            break;
        }
        if step.norm() <= 1e-14 * p.omega0 {
            return Ok(z);
        }
    }
    Err(Error::NonFinite {
        context: "mechanical pole search did not converge".into(),
    })
}

/// Effective linewidth γ_M including dynamical broadening.
pub fn effective_linewidth(p: &OptoMechParams) -> Result<f64> {
    Ok(-2.0 * mechanical_pole(p)?.im)
}

/// Spring-shifted frequency ω_M at the peak of |χ_M| on the real axis.
pub fn effective_frequency(p: &OptoMechParams) -> Result<f64> {
    let pole = mechanical_pole(p)?;
    let width = (-2.0 * pole.im).abs().max(p.linewidth0);
    let mag = |w: f64| cavity_blocks(w, p).map(|b| -b.chi_m.norm());
    let (lo, hi) = (pole.re - 5.0 * width, pole.re + 5.0 * width);
    golden_minimum(lo.max(0.0), hi, &mag)
}

pub(crate) fn golden_minimum(
    mut lo: f64,
    mut hi: f64,
    f: &dyn Fn(f64) -> Result<f64>,
) -> Result<f64> {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    for _ in 0..200 {
        if (hi - lo) <= 1e-13 * hi.abs().max(1e-300) {
            break;
        }
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = f(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = f(x2)?;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Mechanical readout rate Γ_M and sideband asymmetry ζ_M at the shifted resonance.
pub fn readout_and_asymmetry(p: &OptoMechParams) -> Result<(f64, f64)> {
    let w = effective_frequency(p)?;
    Ok(readout_and_asymmetry_at(p, w))
}

/// Γ_M and ζ_M with the Lorentzians evaluated at ±`omega`.
pub fn readout_and_asymmetry_at(p: &OptoMechParams, omega: f64) -> (f64, f64) {
    let up = lorentzian(omega, p).0.norm();
    let down = lorentzian(-omega, p).0.norm();
    let sum = up + down;
    let rate = 4.0 * p.coupling * p.coupling / p.kappa() * sum * sum;
    (rate, (up - down) / sum)
}

/// Linear maps from the cavity inputs to `X_M` and to the reflected field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CavityTransfer {
    pub mech_from_in: Vec2,
    pub mech_from_ex: Vec2,
    pub mech_from_force: C64,
    pub out_from_in: Mat2,
    pub out_from_ex: Mat2,
    pub out_from_force: Vec2,
}

pub fn cavity_transfer(omega: f64, p: &OptoMechParams) -> Result<CavityTransfer> {
    let blk = cavity_blocks(omega, p)?;
    let rot_in_t = rotation_matrix(p.psi_in()).transpose();
    let rot_out_t = rotation_matrix(p.psi_out()).transpose();
    let sq_in = p.kappa_in.sqrt();
    let sq_ex = p.kappa_ex.sqrt();
    // −χ_M00 C Y⁻¹ O_ψinᵀ as a row vector
    let row = (blk.y_inv * rot_in_t).left_apply(blk.c);
    let base = [-blk.chi_m00 * row[0], -blk.chi_m00 * row[1]];
    let out_from_in = rot_out_t * (blk.y_inv.scale_re(p.kappa_in) - Mat2::IDENTITY) * rot_in_t;
    let out_from_ex = (rot_out_t * blk.y_inv * rot_in_t).scale_re(sq_in * sq_ex);
    let yb = (rot_out_t * blk.y_inv).apply(blk.b);
    let out_from_force = [-yb[0] * blk.chi_m00 * sq_in, -yb[1] * blk.chi_m00 * sq_in];
    Ok(CavityTransfer {
        mech_from_in: [base[0] * sq_in, base[1] * sq_in],
        mech_from_ex: [base[0] * sq_ex, base[1] * sq_ex],
        mech_from_force: blk.chi_m,
        out_from_in,
        out_from_ex,
        out_from_force,
    })
}

fn dot(row: Vec2, v: Vec2) -> C64 {
    row[0] * v[0] + row[1] * v[1]
}

/// Mechanical position response and momentum `P_M = −iΩ X_M/ω_M0`.
pub fn mech_response(
    omega: f64,
    p: &OptoMechParams,
    x_in: Vec2,
    x_ex: Vec2,
    force: C64,
) -> Result<(C64, C64)> {
    let t = cavity_transfer(omega, p)?;
    let x = dot(t.mech_from_in, x_in) + dot(t.mech_from_ex, x_ex) + t.mech_from_force * force;
    Ok((x, momentum_from_position(omega, p.omega0, x)))
}

pub fn momentum_from_position(omega: f64, omega0: f64, x: C64) -> C64 {
    -I * (omega / omega0) * x
}

/// Reflected field quadratures.
pub fn cavity_io(omega: f64, p: &OptoMechParams, x_in: Vec2, x_ex: Vec2, force: C64) -> Result<Vec2> {
    let t = cavity_transfer(omega, p)?;
    let a = t.out_from_in.apply(x_in);
    let b = t.out_from_ex.apply(x_ex);
    Ok([
        a[0] + b[0] + t.out_from_force[0] * force,
        a[1] + b[1] + t.out_from_force[1] * force,
    ])
}

/// Reflected-quadrature PSD in shot-noise units for vacuum light and a thermal mechanical bath.
///
/// The detected quadrature is the phase component of `O_θ X_out`, so θ = 0 is the
/// phase quadrature and θ = π/2 the amplitude quadrature.
pub fn squeezing_spectrum(omega: f64, p: &OptoMechParams, homodyne_angle: f64) -> Result<f64> {
    let t = cavity_transfer(omega, p)?;
    let sel = rotation_matrix(homodyne_angle).row(1);
    let light_in = t.out_from_in.left_apply(sel);
    let light_ex = t.out_from_ex.left_apply(sel);
    let force = dot(sel, t.out_from_force);
    let light: f64 = light_in
        .iter()
        .chain(light_ex.iter())
        .map(|z| z.norm_sqr() * LIGHT_VACUUM_PSD)
        .sum();
    let thermal = force.norm_sqr() * 2.0 * p.linewidth0 * (p.occupancy + 0.5);
    Ok((light + thermal) / LIGHT_VACUUM_PSD)
}
