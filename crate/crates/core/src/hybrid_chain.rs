//! Cascaded spin → cavity → homodyne chain: transfer matrix, spectra and the unconditional
//! covariance of the two oscillators.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model_core::{
    c, check_finite, check_unit_interval, rotation_matrix, CovarianceMatrix4, InputChannel, Mat2,
    OutputChannel, C64, I, LIGHT_VACUUM_PSD,
};
use crate::optomech_cavity::{
    cavity_transfer, effective_frequency, mechanical_pole, readout_and_asymmetry_at, OptoMechParams,
};
use crate::quadrature::{geometric_breakpoints, integrate, real_line_segments, QuadratureOptions, Segment};
use crate::spin_oscillator::{chi_s, spin_blocks, SpinParams};

const BROADBAND_NU_MARGIN: f64 = 1e-6;

/// Link and detection parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainParams {
    /// Power transmission ν between the two systems.
    pub nu: f64,
    /// Detection efficiency η.
    pub eta: f64,
    /// Rotation φ applied to the field between the systems (rad).
    pub phi: f64,
    /// Homodyne phase ϑ, applied after all cavity rotations (rad).
    pub vartheta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub spin: SpinParams,
    pub mech: OptoMechParams,
    pub chain: ChainParams,
}

impl SystemParams {
    pub fn validate(&self) -> Result<()> {
        self.spin.validate()?;
        self.mech.validate()?;
        check_unit_interval("chain.nu", self.chain.nu)?;
        check_unit_interval("chain.eta", self.chain.eta)?;
        check_finite("chain.phi", self.chain.phi)?;
        check_finite("chain.vartheta", self.chain.vartheta)?;
        Ok(())
    }

    /// Every rate and frequency multiplied by `s`.
    pub fn rescaled(&self, s: f64) -> SystemParams {
        let mut p = *self;
        p.spin.omega *= s;
        p.spin.linewidth0 *= s;
        p.spin.readout_rate *= s;
        p.spin.broadband.linewidth *= s;
        p.spin.broadband.readout_rate *= s;
        p.mech.omega0 *= s;
        p.mech.linewidth0 *= s;
        p.mech.kappa_in *= s;
        p.mech.kappa_ex *= s;
        p.mech.detuning *= s;
        p.mech.coupling *= s;
        p
    }

    /// Largest oscillator frequency.
    pub fn max_oscillator_frequency(&self) -> f64 {
        self.spin.omega.abs().max(self.mech.omega0)
    }

    /// Broadband spin noise in PSD units (shot noise is 1/4).
    pub fn broadband_psd(&self) -> f64 {
        self.spin.broadband.added_noise_sn * LIGHT_VACUUM_PSD
    }

    /// Resonance centers (rad/s) and widths used to place integration breakpoints.
    pub fn features(&self) -> Vec<(f64, f64)> {
        let mut out = vec![
            (self.spin.omega.abs(), self.spin.linewidth0),
            (self.spin.omega.abs(), self.spin.linewidth().abs().max(self.spin.linewidth0)),
            (self.mech.omega0, self.mech.linewidth0),
            (self.mech.detuning.abs(), self.mech.kappa()),
        ];
        if let Ok(pole) = mechanical_pole(&self.mech) {
            if pole.re > 0.0 {
                out.push((pole.re, (-2.0 * pole.im).max(self.mech.linewidth0)));
            }
        }
        out
    }
}

/// 5×11 map from the input basis to the output basis at one frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferMatrix(pub [[C64; InputChannel::COUNT]; OutputChannel::COUNT]);

impl TransferMatrix {
    pub fn row(&self, out: OutputChannel) -> &[C64; InputChannel::COUNT] {
        &self.0[out.index()]
    }

    pub fn entry(&self, out: OutputChannel, input: InputChannel) -> C64 {
        self.0[out.index()][input.index()]
    }
}

fn put_block(row: &mut [C64; InputChannel::COUNT], first: InputChannel, coeffs: [C64; 2]) {
    row[first.index()] = coeffs[0];
    row[first.index() + 1] = coeffs[1];
}

pub fn build_transfer_matrix(omega: f64, p: &SystemParams) -> Result<TransferMatrix> {
    use InputChannel::*;
    let spin = spin_blocks(omega, &p.spin)?;
    let cav = cavity_transfer(omega, &p.mech)?;
    let rate_s = p.spin.readout_rate;
    let nu = p.chain.nu;
    let eta = p.chain.eta;
    let rot_phi = rotation_matrix(p.chain.phi);

    // Field entering the cavity, per input block.
    let link_light = (rot_phi * spin.light_to_light(rate_s)).scale_re(nu.sqrt());
    let link_force = (rot_phi * spin.force_to_light(rate_s)).scale_re(nu.sqrt());
    let link_loss = rot_phi.scale_re((1.0 - nu).sqrt());

    let mut u = [[c(0.0); InputChannel::COUNT]; OutputChannel::COUNT];

    let xm = &mut u[OutputChannel::MechX.index()];
    put_block(xm, SpinForceX, link_force.left_apply(cav.mech_from_in));
    xm[MechForce.index()] = cav.mech_from_force;
    put_block(xm, SpinLightX, link_light.left_apply(cav.mech_from_in));
    put_block(xm, LinkLossX, link_loss.left_apply(cav.mech_from_in));
    put_block(xm, CavityLossX, cav.mech_from_ex);

    let momentum = -I * (omega / p.mech.omega0);
    let xm_row = u[OutputChannel::MechX.index()];
    for (pm, x) in u[OutputChannel::MechP.index()].iter_mut().zip(xm_row.iter()) {
        *pm = momentum * x;
    }

    let state_light = spin.light_to_state(rate_s);
    for (q, out) in [OutputChannel::SpinX, OutputChannel::SpinP].into_iter().enumerate() {
        let row = &mut u[out.index()];
        put_block(row, SpinForceX, spin.l.row(q));
        put_block(row, SpinLightX, state_light.row(q));
    }

    let sel = rotation_matrix(p.chain.vartheta).row(1);
    let sel = [sel[0] * eta.sqrt(), sel[1] * eta.sqrt()];
    let through = |m: Mat2| (cav.out_from_in * m).left_apply(sel);
    let meas = &mut u[OutputChannel::Photocurrent.index()];
    put_block(meas, SpinForceX, through(link_force));
    meas[MechForce.index()] = sel[0] * cav.out_from_force[0] + sel[1] * cav.out_from_force[1];
    put_block(meas, SpinLightX, through(link_light));
    put_block(meas, LinkLossX, through(link_loss));
    put_block(meas, CavityLossX, cav.out_from_ex.left_apply(sel));
    meas[DetectionLossP.index()] = c((1.0 - eta).sqrt());

    Ok(TransferMatrix(u))
}

/// Photocurrent row in the limit Ω → ∞, where both oscillators and the cavity drop out.
pub fn asymptotic_measurement_row(p: &SystemParams) -> [C64; InputChannel::COUNT] {
    use InputChannel::*;
    let nu = p.chain.nu;
    let eta = p.chain.eta;
    let rot_phi = rotation_matrix(p.chain.phi);
    let cavity = (rotation_matrix(p.mech.psi_out()).transpose()
        * rotation_matrix(p.mech.psi_in()).transpose())
    .scale_re(-1.0);
    let sel = rotation_matrix(p.chain.vartheta).row(1);
    let sel = [sel[0] * eta.sqrt(), sel[1] * eta.sqrt()];
    let through = |m: Mat2| (cavity * m).left_apply(sel);
    let mut row = [c(0.0); InputChannel::COUNT];
    put_block(&mut row, SpinLightX, through(rot_phi.scale_re(nu.sqrt())));
    put_block(&mut row, LinkLossX, through(rot_phi.scale_re((1.0 - nu).sqrt())));
    row[DetectionLossP.index()] = c((1.0 - eta).sqrt());
    row
}

/// Diagonal of the input spectral matrix, with broadband spin noise on `P_Lν`.
pub fn input_psd_matrix(p: &SystemParams) -> Result<[f64; InputChannel::COUNT]> {
    let mut out = crate::model_core::vacuum_input_psd(
        p.spin.linewidth0,
        p.spin.occupancy,
        p.mech.linewidth0,
        p.mech.occupancy,
    );
    let bb = p.broadband_psd();
    if bb > 0.0 {
        let nu = p.chain.nu;
        if nu > 1.0 - BROADBAND_NU_MARGIN {
            return Err(Error::BroadbandInjectionSingular { nu });
        }
        out[InputChannel::LinkLossP.index()] += nu / (1.0 - nu) * bb;
    }
    Ok(out)
}

/// Hermitian 5×5 output cross-spectral matrix `S[a][b] = Σ_k U[a][k] S_k U[b][k]*`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossSpectrum(pub [[C64; OutputChannel::COUNT]; OutputChannel::COUNT]);

impl CrossSpectrum {
    pub fn from_transfer(u: &TransferMatrix, s_in: &[f64; InputChannel::COUNT]) -> Self {
        let mut s = [[c(0.0); OutputChannel::COUNT]; OutputChannel::COUNT];
        for a in 0..OutputChannel::COUNT {
            for b in a..OutputChannel::COUNT {
                let v: C64 = (0..InputChannel::COUNT)
                    .map(|k| u.0[a][k] * u.0[b][k].conj() * s_in[k])
                    .sum();
                s[a][b] = v;
                s[b][a] = v.conj();
            }
        }
        CrossSpectrum(s)
    }

    pub fn get(&self, a: OutputChannel, b: OutputChannel) -> C64 {
        self.0[a.index()][b.index()]
    }

    /// Photocurrent PSD.
    pub fn s_ii(&self) -> f64 {
        self.get(OutputChannel::Photocurrent, OutputChannel::Photocurrent).re
    }

    /// Cross spectra between the four oscillator quadratures and the photocurrent.
    pub fn s_qi(&self) -> [C64; 4] {
        let i = OutputChannel::Photocurrent.index();
        [self.0[0][i], self.0[1][i], self.0[2][i], self.0[3][i]]
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let m = nalgebra::Matrix5::from_fn(|r, k| self.0[r][k]);
        nalgebra::linalg::SymmetricEigen::new(m)
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn trace(&self) -> f64 {
        (0..OutputChannel::COUNT).map(|k| self.0[k][k].re).sum()
    }
}

pub fn output_cross_spectrum(omega: f64, p: &SystemParams) -> Result<CrossSpectrum> {
    let s_in = input_psd_matrix(p)?;
    let u = build_transfer_matrix(omega, p)?;
    Ok(CrossSpectrum::from_transfer(&u, &s_in))
}

/// White level of the photocurrent PSD at large |Ω|.
pub fn measurement_floor(p: &SystemParams) -> Result<f64> {
    let s_in = input_psd_matrix(p)?;
    Ok(asymptotic_measurement_row(p)
        .iter()
        .zip(s_in.iter())
        .map(|(u, s)| u.norm_sqr() * s)
        .sum())
}

/// Spectra evaluated on a frequency grid.
#[derive(Debug, Clone)]
pub struct SpectrumGrid {
    pub omega: Vec<f64>,
    pub spectra: Vec<CrossSpectrum>,
}

pub fn spectrum_grid(p: &SystemParams, omega: &[f64]) -> Result<SpectrumGrid> {
    let s_in = input_psd_matrix(p)?;
    let spectra = omega
        .iter()
        .map(|&w| build_transfer_matrix(w, p).map(|u| CrossSpectrum::from_transfer(&u, &s_in)))
        .collect::<Result<Vec<_>>>()?;
    Ok(SpectrumGrid {
        omega: omega.to_vec(),
        spectra,
    })
}

/// Photocurrent PSD split by noise origin; the groups sum to `total`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NoiseBudget {
    pub total: f64,
    pub shot: f64,
    pub broadband: f64,
    pub qba: f64,
    pub thermal_m: f64,
    pub thermal_s: f64,
}

pub fn noise_budget(omega: f64, p: &SystemParams) -> Result<NoiseBudget> {
    use InputChannel::*;
    let s_in = input_psd_matrix(p)?;
    let u = build_transfer_matrix(omega, p)?;
    let row = u.row(OutputChannel::Photocurrent);
    let power = |k: InputChannel, psd: f64| row[k.index()].norm_sqr() * psd;
    let total: f64 = InputChannel::ALL.iter().map(|&k| power(k, s_in[k.index()])).sum();
    let thermal_s = power(SpinForceX, s_in[0]) + power(SpinForceP, s_in[1]);
    let thermal_m = power(MechForce, s_in[2]);
    let broadband = power(LinkLossP, s_in[LinkLossP.index()] - LIGHT_VACUUM_PSD);
    let mut bare = *p;
    bare.spin.readout_rate = 0.0;
    bare.mech.coupling = 0.0;
    let u0 = build_transfer_matrix(omega, &bare)?;
    let shot: f64 = InputChannel::ALL
        .iter()
        .filter(|k| k.is_light())
        .map(|k| u0.entry(OutputChannel::Photocurrent, *k).norm_sqr() * LIGHT_VACUUM_PSD)
        .sum();
    Ok(NoiseBudget {
        total,
        shot,
        broadband,
        qba: total - shot - broadband - thermal_m - thermal_s,
        thermal_m,
        thermal_s,
    })
}

/// Segments covering the real line with breakpoints clustered at every resonance.
pub fn integration_segments(p: &SystemParams) -> Vec<Segment> {
    let features = p.features();
    let reach = 4.0
        * features
            .iter()
            .map(|(c, w)| c + w)
            .fold(p.max_oscillator_frequency(), f64::max);
    let mut pts = vec![0.0];
    for &(center, width) in &features {
        if width > 0.0 {
            pts.extend(geometric_breakpoints(center, width, -reach, reach));
            pts.extend(geometric_breakpoints(-center, width, -reach, reach));
        }
    }
    real_line_segments(&pts, reach)
}

/// Relative imaginary residue tolerated in the integrated covariance.
pub const IMAGINARY_RESIDUE_TOL: f64 = 1e-6;

/// `V_u = ∫ S_MS dΩ/2π` over the oscillator block.
pub fn unconditional_covariance(p: &SystemParams, opts: &QuadratureOptions) -> Result<CovarianceMatrix4> {
    let s_in = input_psd_matrix(p)?;
    let segments = integration_segments(p);
    let integrand = |w: f64, out: &mut [f64]| -> Result<()> {
        let u = build_transfer_matrix(w, p)?;
        for a in 0..4 {
            for b in 0..4 {
                let v: C64 = (0..InputChannel::COUNT)
                    .map(|k| u.0[a][k] * u.0[b][k].conj() * s_in[k])
                    .sum();
                out[4 * a + b] = v.re;
                out[16 + 4 * a + b] = v.im;
            }
        }
        Ok(())
    };
    let res = integrate(integrand, 32, &segments, opts)?;
    let scale = std::f64::consts::TAU;
    let mut v = CovarianceMatrix4::zeros();
    let mut imag = 0.0f64;
    for a in 0..4 {
        for b in 0..4 {
            v.0[(a, b)] = res.value[4 * a + b] / scale;
            imag = imag.max(res.value[16 + 4 * a + b].abs() / scale);
        }
    }
    if imag > IMAGINARY_RESIDUE_TOL * v.trace().abs() {
        return Err(Error::NonFinite {
            context: format!("imaginary residue {imag:e} in unconditional covariance"),
        });
    }
    Ok(v.symmetrized())
}

/// Reduced single-mode parameters of the main-text readout model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimplifiedParams {
    pub mech_omega0: f64,
    /// Spring-shifted ω_M.
    pub mech_omega: f64,
    pub mech_linewidth0: f64,
    pub mech_readout_rate: f64,
    pub mech_zeta: f64,
    pub mech_occupancy: f64,
    pub spin: SpinParams,
    pub nu: f64,
    pub eta: f64,
    /// Flat imprecision noise added to shot noise, PSD units.
    pub broadband_psd: f64,
}

impl SimplifiedParams {
    pub fn from_system(p: &SystemParams) -> Result<Self> {
        let w = effective_frequency(&p.mech)?;
        let (rate, zeta) = readout_and_asymmetry_at(&p.mech, w);
        Ok(SimplifiedParams {
            mech_omega0: p.mech.omega0,
            mech_omega: w,
            mech_linewidth0: p.mech.linewidth0,
            mech_readout_rate: rate,
            mech_zeta: zeta,
            mech_occupancy: p.mech.occupancy,
            spin: p.spin,
            nu: p.chain.nu,
            eta: p.chain.eta,
            broadband_psd: p.broadband_psd(),
        })
    }

    pub fn chi_m(&self, omega: f64, include_broadening: bool) -> C64 {
        let gamma = if include_broadening {
            self.mech_linewidth0 + 2.0 * self.mech_zeta * self.mech_readout_rate
        } else {
            self.mech_linewidth0
        };
        c(self.mech_omega0)
            / C64::new(self.mech_omega * self.mech_omega - omega * omega, -omega * gamma)
    }

    /// Cross-susceptibility `χ_MS⁻¹ = χ_M0⁻¹ − 2iζ_S Γ_M`.
    pub fn chi_ms(&self, omega: f64) -> C64 {
        1.0 / (1.0 / self.chi_m(omega, false) - I * (2.0 * self.spin.zeta * self.mech_readout_rate))
    }
}

/// Main-text readout composition at one frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimplifiedReadout {
    /// Joint back-action prefactor `(χ_S/χ_S0)Γ_Mχ_M + (χ_M/χ_M0)Γ_Sχ_S`.
    pub qba_coefficient: C64,
    /// Transfer from the spin-light amplitude input to the photocurrent.
    pub spin_light_transfer: C64,
    pub chi_ms: C64,
    pub s_ii: f64,
}

pub fn simplified_epr_readout(omega: f64, p: &SimplifiedParams) -> SimplifiedReadout {
    let chi_m = p.chi_m(omega, true);
    let chi_m0 = p.chi_m(omega, false);
    let chi_s_full = chi_s(omega, &p.spin, true);
    let chi_s0 = chi_s(omega, &p.spin, false);
    let rate_m = p.mech_readout_rate;
    let rate_s = p.spin.readout_rate;
    let qba = chi_s_full / chi_s0 * rate_m * chi_m + chi_m / chi_m0 * rate_s * chi_s_full;
    let chi_ms = p.chi_ms(omega);
    let (nu, eta) = (p.nu, p.eta);
    let vac = LIGHT_VACUUM_PSD;
    let thermal_m = 2.0 * p.mech_linewidth0 * (p.mech_occupancy + 0.5);
    let thermal_s = 2.0 * p.spin.linewidth0 * (p.spin.occupancy + 0.5);
    let s_ii = vac
        + eta * nu * p.broadband_psd
        + eta
            * (nu * 4.0 * qba.norm_sqr() * vac
                + rate_m * chi_m.norm_sqr() * thermal_m
                + 4.0 * (1.0 - nu) * rate_m * rate_m * chi_m.norm_sqr() * vac
                + (chi_m / chi_ms).norm_sqr() * nu * rate_s * chi_s_full.norm_sqr() * thermal_s);
    SimplifiedReadout {
        qba_coefficient: qba,
        spin_light_transfer: -2.0 * (eta * nu).sqrt() * qba,
        chi_ms,
        s_ii,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model_core::hz_to_rad;
    use crate::optomech_cavity::mech_response;
    use crate::spin_oscillator::{spin_io, spin_state_response, BroadbandSpin};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    pub(crate) fn demo() -> SystemParams {
        SystemParams {
            spin: SpinParams {
                omega: -hz_to_rad(1.37e6),
                linewidth0: hz_to_rad(3.0e3),
                readout_rate: hz_to_rad(20.3e3),
                zeta: 0.03,
                occupancy: 0.81,
                broadband: BroadbandSpin {
                    linewidth: hz_to_rad(1.0e6),
                    readout_rate: 0.0,
                    added_noise_sn: 0.2,
                },
            },
            mech: OptoMechParams {
                omega0: hz_to_rad(1.37e6),
                linewidth0: hz_to_rad(2.0),
                kappa_in: hz_to_rad(3.7e6),
                kappa_ex: hz_to_rad(0.3e6),
                detuning: -hz_to_rad(0.3e6),
                coupling: hz_to_rad(60e3),
                occupancy: 20.0,
            },
            chain: ChainParams {
                nu: 0.65,
                eta: 0.8,
                phi: PI,
                vartheta: 0.03,
            },
        }
    }

    fn decoupled() -> SystemParams {
        let mut p = demo();
        p.spin.readout_rate = 0.0;
        p.mech.coupling = 0.0;
        p.chain.nu = 1.0;
        p.chain.eta = 1.0;
        p.spin.broadband.added_noise_sn = 0.0;
        p.mech.detuning = 0.0;
        p.mech.kappa_ex = 0.0;
        p.chain.phi = 0.0;
        p.chain.vartheta = 0.0;
        p
    }

    #[test]
    fn decoupled_chain_passes_phase_quadrature() {
        let p = decoupled();
        for w in [1e3, 8.6e6, 3e7] {
            let u = build_transfer_matrix(w, &p).unwrap();
            let e = u.entry(OutputChannel::Photocurrent, InputChannel::SpinLightP);
            assert_relative_eq!(e.norm(), 1.0, epsilon = 1e-12);
            for out in OutputChannel::OSCILLATORS {
                for k in InputChannel::ALL.iter().filter(|k| k.is_light()) {
                    assert_eq!(u.entry(out, *k), c(0.0));
                }
            }
            let s = output_cross_spectrum(w, &p).unwrap();
            assert_relative_eq!(s.s_ii(), 0.25, epsilon = 1e-12);
        }
    }

    #[test]
    fn spin_rows_reproduce_spin_response() {
        let p = demo();
        let w = 8.5e6;
        let u = build_transfer_matrix(w, &p).unwrap();
        let x_in = [C64::new(0.3, 0.1), C64::new(-0.4, 0.2)];
        let f = [C64::new(1.1, 0.0), C64::new(0.0, -0.5)];
        let direct = spin_state_response(w, &p.spin, x_in, f).unwrap();
        for (q, out) in [OutputChannel::SpinX, OutputChannel::SpinP].into_iter().enumerate() {
            let r = u.row(out);
            let v = r[0] * f[0] + r[1] * f[1] + r[3] * x_in[0] + r[4] * x_in[1];
            assert!((v - direct[q]).norm() < 1e-12 * direct[q].norm());
        }
    }

    #[test]
    fn momentum_row_is_scaled_position_row() {
        let p = demo();
        let w = 8.7e6;
        let u = build_transfer_matrix(w, &p).unwrap();
        for k in 0..InputChannel::COUNT {
            let expect = -I * (w / p.mech.omega0) * u.0[0][k];
            assert!((u.0[1][k] - expect).norm() <= 1e-14 * expect.norm().max(1e-300));
        }
    }

    #[test]
    fn no_spin_reduces_to_optomechanics() {
        let mut p = demo();
        p.spin.readout_rate = 0.0;
        let w = 8.6e6;
        let u = build_transfer_matrix(w, &p).unwrap();
        let rot = rotation_matrix(p.chain.phi).scale_re(p.chain.nu.sqrt());
        for k in 0..2 {
            let e = rot.col(k);
            let (xm, _) = mech_response(w, &p.mech, e, [c(0.0), c(0.0)], c(0.0)).unwrap();
            let got = u.0[0][InputChannel::SpinLightX.index() + k];
            assert!((got - xm).norm() <= 1e-12 * xm.norm());
        }
    }

    #[test]
    fn mech_row_matches_composed_equations() {
        // Compose spin output, link rotation/loss and cavity response step by step.
        let p = demo();
        let w = 8.61e6;
        let u = build_transfer_matrix(w, &p).unwrap();
        let nu = p.chain.nu;
        for k in 0..2 {
            let mut x = [c(0.0), c(0.0)];
            x[k] = c(1.0);
            let s_out = spin_io(w, &p.spin, x, [c(0.0), c(0.0)]).unwrap();
            let o = rotation_matrix(p.chain.phi);
            let link = o.apply([s_out[0] * nu.sqrt(), s_out[1] * nu.sqrt()]);
            let (xm, _) = mech_response(w, &p.mech, link, [c(0.0), c(0.0)], c(0.0)).unwrap();
            let got = u.0[0][InputChannel::SpinLightX.index() + k];
            assert!((got - xm).norm() <= 1e-12 * xm.norm());
        }
    }

    #[test]
    fn input_psd_entries() {
        let mut p = demo();
        p.spin.occupancy = 0.0;
        p.mech.occupancy = 0.0;
        p.spin.broadband.added_noise_sn = 0.0;
        let s = input_psd_matrix(&p).unwrap();
        assert_relative_eq!(s[0], p.spin.linewidth0 / 2.0);
        assert_relative_eq!(s[2], p.mech.linewidth0);
        assert!(s[3..].iter().all(|&v| v == 0.25));
        let q = demo();
        let s = input_psd_matrix(&q).unwrap();
        let expect = 0.25 + 0.65 / 0.35 * 0.2 * 0.25;
        assert_relative_eq!(s[6], expect, max_relative = 1e-14);
        assert_relative_eq!(0.65 / 0.35, 1.857, max_relative = 1e-3);
        assert_relative_eq!(s[0], q.spin.linewidth0 * 1.31, max_relative = 1e-14);
    }

    #[test]
    fn broadband_through_lossless_link_is_rejected() {
        let mut p = demo();
        p.chain.nu = 1.0;
        assert!(matches!(input_psd_matrix(&p), Err(Error::BroadbandInjectionSingular { .. })));
    }

    #[test]
    fn floor_matches_high_frequency_spectrum() {
        let p = demo();
        let floor = measurement_floor(&p).unwrap();
        let s = output_cross_spectrum(1e13, &p).unwrap().s_ii();
        assert_relative_eq!(s, floor, max_relative = 1e-6);
        let theta = p.chain.vartheta - p.mech.psi_out() - p.mech.psi_in() + p.chain.phi + PI;
        let expect = 0.25 + p.chain.eta * p.chain.nu * p.broadband_psd() * theta.cos().powi(2);
        assert_relative_eq!(floor, expect, max_relative = 1e-12);
    }

    #[test]
    fn budget_sums_to_total() {
        let p = demo();
        for w in [8.0e6, 8.6e6, 8.61e6, 9e6] {
            let b = noise_budget(w, &p).unwrap();
            let s = output_cross_spectrum(w, &p).unwrap().s_ii();
            assert_relative_eq!(b.total, s, max_relative = 1e-12);
            let sum = b.shot + b.broadband + b.qba + b.thermal_m + b.thermal_s;
            assert!((sum - b.total).abs() <= 1e-9 * b.total);
            assert_relative_eq!(b.shot, 0.25, max_relative = 1e-12);
        }
    }

    #[test]
    fn decoupled_vacuum_covariance() {
        let mut p = decoupled();
        p.spin.occupancy = 0.0;
        p.mech.occupancy = 0.0;
        p.mech.omega0 = 1e6;
        p.mech.linewidth0 = 1e3;
        p.spin.omega = -1.2e6;
        p.spin.linewidth0 = 2e3;
        p.spin.zeta = 0.0;
        let v = unconditional_covariance(&p, &QuadratureOptions::default()).unwrap();
        let target = CovarianceMatrix4::vacuum();
        // finite linewidths give O(γ/ω) corrections to the vacuum variance
        assert!(v.max_abs_diff(&target) < 2e-3, "{:?}", v.rows());
    }

    #[test]
    fn meterless_chain_keeps_covariance() {
        let p = demo();
        let mut q = p;
        q.chain.eta = 0.0;
        let opts = QuadratureOptions::default();
        let a = unconditional_covariance(&p, &opts).unwrap();
        let b = unconditional_covariance(&q, &opts).unwrap();
        assert!(a.max_abs_diff(&b) <= 1e-9 * a.trace());
        let s = output_cross_spectrum(8.6e6, &q).unwrap();
        assert!(s.s_qi().iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn covariance_rescaling_invariance() {
        let p = demo();
        let opts = QuadratureOptions::default();
        let a = unconditional_covariance(&p, &opts).unwrap();
        let b = unconditional_covariance(&p.rescaled(10.0), &opts).unwrap();
        assert!(a.max_abs_diff(&b) <= 1e-8 * a.trace(), "{:e}", a.max_abs_diff(&b));
        let w = 8.6e6;
        let s1 = output_cross_spectrum(w, &p).unwrap().s_ii();
        let s2 = output_cross_spectrum(10.0 * w, &p.rescaled(10.0)).unwrap().s_ii();
        assert_relative_eq!(s1, s2, max_relative = 1e-10);
    }

    #[test]
    fn physical_covariance_above_vacuum() {
        let v = unconditional_covariance(&demo(), &QuadratureOptions::default()).unwrap();
        for k in 0..4 {
            assert!(v.get(k, k) >= 0.5 - 1e-9);
        }
        assert!(v.min_eigenvalue() > 0.0);
    }

    fn qnd_single(n: f64, cq: f64) -> SystemParams {
        // mechanics alone, bad-cavity QND readout, spin switched off
        let omega = 1.0e6;
        let gamma = 1.0e2;
        let rate = cq * gamma * (2.0 * n + 1.0);
        let kappa = 400.0 * omega;
        let mut p = demo();
        p.spin.readout_rate = 0.0;
        p.spin.broadband.added_noise_sn = 0.0;
        p.mech = OptoMechParams {
            omega0: omega,
            linewidth0: gamma,
            kappa_in: kappa,
            kappa_ex: 0.0,
            detuning: 0.0,
            coupling: (rate * kappa / 16.0).sqrt(),
            occupancy: n,
        };
        p.chain = ChainParams {
            nu: 1.0,
            eta: 1.0,
            phi: PI,
            vartheta: 0.0,
        };
        p
    }

    #[test]
    fn single_qnd_unconditional_variance() {
        let p = qnd_single(2.0, 1.0);
        let v = unconditional_covariance(&p, &QuadratureOptions::default()).unwrap();
        let sum = v.get(0, 0) + v.get(1, 1);
        // (1+2n)(1+C_q) = 10, up to O(Ω/κ) cavity filtering of the back-action
        assert!((sum / 10.0 - 1.0).abs() < 0.01, "{sum}");
    }

    #[test]
    fn spectrum_is_hermitian_psd_and_even() {
        let p = demo();
        for k in -200..=200 {
            let w = 8.6e6 + k as f64 * 2.0e3;
            let s = output_cross_spectrum(w, &p).unwrap();
            for a in 0..5 {
                for b in 0..5 {
                    assert!((s.0[a][b] - s.0[b][a].conj()).norm() <= 1e-12 * s.trace());
                }
            }
            assert!(s.min_eigenvalue() >= -1e-9 * s.trace());
            let m = output_cross_spectrum(-w, &p).unwrap();
            assert!((s.s_ii() - m.s_ii()).abs() <= 1e-9 * s.s_ii());
        }
    }

    fn matched_simplified(cancel: bool) -> SimplifiedParams {
        let w = hz_to_rad(1.0e6);
        let gamma = hz_to_rad(1.0e3);
        let rate = hz_to_rad(20e3);
        SimplifiedParams {
            mech_omega0: w,
            mech_omega: w,
            mech_linewidth0: gamma,
            mech_readout_rate: rate,
            mech_zeta: 0.0,
            mech_occupancy: 1.0,
            spin: SpinParams {
                omega: if cancel { -w } else { w },
                linewidth0: gamma,
                readout_rate: rate,
                zeta: 0.0,
                occupancy: 1.0,
                broadband: BroadbandSpin::default(),
            },
            nu: 1.0,
            eta: 1.0,
            broadband_psd: 0.0,
        }
    }

    #[test]
    fn simplified_qba_cancels_for_negative_mass() {
        let on = matched_simplified(true);
        let off = matched_simplified(false);
        for k in -500..=500 {
            let w = on.mech_omega + k as f64 * 1e2;
            let a = simplified_epr_readout(w, &on).spin_light_transfer.norm();
            let b = simplified_epr_readout(w, &off).spin_light_transfer.norm();
            assert!(a < 1e-10 * b, "k={k}: {a:e} vs {b:e}");
        }
    }

    #[test]
    fn simplified_single_oscillator_limit() {
        let mut p = matched_simplified(true);
        p.spin.readout_rate = 0.0;
        let w = p.mech_omega + 3e3;
        let r = simplified_epr_readout(w, &p);
        let expect = p.mech_readout_rate * p.chi_m(w, true);
        assert!((r.qba_coefficient - expect).norm() < 1e-14 * expect.norm());
    }

    #[test]
    fn full_and_simplified_readout_agree() {
        let w = hz_to_rad(1.0e6);
        let mut p = demo();
        p.spin.omega = -w;
        p.spin.linewidth0 = hz_to_rad(1.0e3);
        p.spin.readout_rate = hz_to_rad(5e3);
        p.spin.zeta = 0.0;
        p.spin.broadband.added_noise_sn = 0.0;
        let kappa = 200.0 * w;
        p.mech = OptoMechParams {
            omega0: w,
            linewidth0: hz_to_rad(1.0e3),
            kappa_in: kappa,
            kappa_ex: 0.0,
            detuning: 0.0,
            coupling: (hz_to_rad(4e3) * kappa / 16.0).sqrt(),
            occupancy: 3.0,
        };
        p.chain = ChainParams {
            nu: 1.0,
            eta: 1.0,
            phi: PI,
            vartheta: 0.0,
        };
        let sp = SimplifiedParams::from_system(&p).unwrap();
        let gm = sp.mech_linewidth0 + 2.0 * sp.mech_zeta * sp.mech_readout_rate;
        for k in -30..=30 {
            let om = sp.mech_omega + k as f64 * 0.1 * gm;
            let full = output_cross_spectrum(om, &p).unwrap().s_ii();
            let simple = simplified_epr_readout(om, &sp).s_ii;
            assert!((full / simple - 1.0).abs() < 0.05, "k={k}: {full} vs {simple}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn real_process_symmetry(w in 1e3f64..3e7, nu in 0.0f64..0.99, eta in 0.0f64..=1.0, phi in -4.0f64..4.0) {
            let mut p = demo();
            p.chain.nu = nu;
            p.chain.eta = eta;
            p.chain.phi = phi;
            let a = build_transfer_matrix(w, &p).unwrap();
            let b = build_transfer_matrix(-w, &p).unwrap();
            for r in 0..5 {
                for k in 0..11 {
                    prop_assert!((a.0[r][k].conj() - b.0[r][k]).norm() <= 1e-12 * a.0[r][k].norm().max(1e-300));
                }
            }
            let s = output_cross_spectrum(w, &p).unwrap();
            prop_assert!(s.min_eigenvalue() >= -1e-9 * s.trace());
        }
    }
}
