//! Finite-time Wiener filtering of the photocurrent: correlations from spectra, Levinson
//! recursion, conditional covariances and closed-form idealized limits.

use std::f64::consts::{PI, TAU};

use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hybrid_chain::{build_transfer_matrix, input_psd_matrix, measurement_floor, SystemParams};
use crate::model_core::{c, CovarianceMatrix4, InputChannel, OutputChannel, C64};
use crate::optomech_cavity::effective_linewidth;

/// Reflection coefficients this close to unit magnitude abort the recursion.
pub const REFLECTION_LIMIT: f64 = 1.0 - 1e-10;
/// Minimum ratio of the Nyquist frequency to the largest oscillator frequency.
pub const NYQUIST_FACTOR: f64 = 3.0;

/// Defaults used to pick the sampling lattice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WienerSettings {
    /// Samples per period of the fastest oscillator.
    pub samples_per_period: f64,
    pub max_taps: usize,
    pub max_fft_len: usize,
    /// Filter length in units of the slowest amplitude decay time.
    pub settle_decay_times: f64,
    /// Periodic-embedding length in units of the slowest amplitude decay time.
    pub embed_decay_times: f64,
    pub taps: Option<usize>,
    pub fft_len: Option<usize>,
}

impl Default for WienerSettings {
    fn default() -> Self {
        WienerSettings {
            samples_per_period: 8.0,
            max_taps: 8192,
            max_fft_len: 1 << 22,
            settle_decay_times: 20.0,
            embed_decay_times: 60.0,
            taps: None,
            fft_len: None,
        }
    }
}

/// Sampling lattice of the discrete filter problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Discretization {
    pub dt: f64,
    pub taps: usize,
    /// Length of the periodic frequency lattice used for correlations and synthesis.
    pub fft_len: usize,
}

impl Discretization {
    pub fn new(dt: f64, taps: usize, fft_len: usize) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::invalid("dt", "must be positive"));
        }
        if taps == 0 {
            return Err(Error::invalid("taps", "must be at least 1"));
        }
        if !fft_len.is_power_of_two() || fft_len < 2 * taps {
            return Err(Error::invalid("fft_len", format!("{fft_len} must be a power of two >= 2*taps")));
        }
        Ok(Discretization { dt, taps, fft_len })
    }

    /// Lattice with `dt = 2π/(samples_per_period·ω_max)` and lengths set by the slowest decay.
    pub fn auto(p: &SystemParams, s: &WienerSettings) -> Result<Self> {
        let dt = TAU / (s.samples_per_period * p.max_oscillator_frequency());
        let decay = slowest_linewidth(p)? / 2.0;
        let taps = s
            .taps
            .unwrap_or_else(|| ((s.settle_decay_times / (decay * dt)).ceil() as usize).clamp(16, s.max_taps));
        let fft_len = match s.fft_len {
            Some(m) => m,
            None => {
                let need = (s.embed_decay_times / (decay * dt)).ceil() as usize;
                need.max(4 * taps).next_power_of_two().min(s.max_fft_len.next_power_of_two())
            }
        };
        Discretization::new(dt, taps, fft_len.max((2 * taps).next_power_of_two()))
    }

    pub fn nyquist(&self) -> f64 {
        PI / self.dt
    }

    /// Angular frequency of lattice bin `m` in `[0, fft_len/2]`.
    pub fn frequency(&self, m: usize) -> f64 {
        TAU * m as f64 / (self.fft_len as f64 * self.dt)
    }

    pub fn check_nyquist(&self, p: &SystemParams) -> Result<()> {
        let required = NYQUIST_FACTOR * p.max_oscillator_frequency();
        if self.nyquist() < required {
            return Err(Error::Aliasing {
                nyquist: self.nyquist(),
                required,
            });
        }
        Ok(())
    }

    pub fn duration(&self) -> f64 {
        self.taps as f64 * self.dt
    }
}

/// Smallest effective linewidth among the two oscillators.
pub fn slowest_linewidth(p: &SystemParams) -> Result<f64> {
    let spin = p.spin.linewidth();
    let mech = effective_linewidth(&p.mech).unwrap_or(p.mech.linewidth0);
    let g = spin.min(mech);
    if !(g > 0.0) {
        return Err(Error::invalid("linewidth", format!("effective linewidth {g:e} is not positive")));
    }
    Ok(g)
}

/// Response of a sample that averages the photocurrent over the preceding step,
/// `(e^{iΩdt} − 1)/(iΩdt)`.
pub fn bin_average_response(omega: f64, dt: f64) -> C64 {
    let x = omega * dt / 2.0;
    let sinc = if x.abs() < 1e-8 { 1.0 - x * x / 6.0 } else { x.sin() / x };
    C64::from_polar(sinc, x)
}

/// Spectral matrix of the sampled process: oscillator quadratures at the sampling instants and
/// the photocurrent averaged over each step. The white floor stays white; aliases of the
/// colored part are neglected.
pub fn sampled_cross_spectrum(
    omega: f64,
    dt: f64,
    p: &SystemParams,
    s_in: &[f64; InputChannel::COUNT],
    floor: f64,
) -> Result<[[C64; OutputChannel::COUNT]; OutputChannel::COUNT]> {
    let u = build_transfer_matrix(omega, p)?;
    let h = bin_average_response(omega, dt);
    let meas = OutputChannel::Photocurrent.index();
    let mut out = [[c(0.0); OutputChannel::COUNT]; OutputChannel::COUNT];
    for a in 0..OutputChannel::COUNT {
        for b in a..OutputChannel::COUNT {
            let v: C64 = (0..InputChannel::COUNT)
                .map(|k| u.0[a][k] * u.0[b][k].conj() * s_in[k])
                .sum();
            out[a][b] = v;
        }
    }
    for a in 0..meas {
        out[a][meas] *= h.conj();
    }
    out[meas][meas] = c(h.norm_sqr() * (out[meas][meas].re - floor) + floor);
    for a in 0..OutputChannel::COUNT {
        out[a][a] = c(out[a][a].re);
        for b in 0..a {
            out[a][b] = out[b][a].conj();
        }
    }
    Ok(out)
}

/// Photocurrent spectra on the non-negative half of the periodic lattice.
#[derive(Debug, Clone)]
pub struct LatticeSpectra {
    pub disc: Discretization,
    /// White level removed from `s_ii` and restored as a zero-lag mass.
    pub floor: f64,
    /// Colored part of the sampled photocurrent spectrum at bins `0..=fft_len/2`.
    pub s_ii: Vec<f64>,
    /// Cross-spectra of the four quadratures with the sampled photocurrent.
    pub s_qi: Vec<[C64; 4]>,
    /// `(1/(M dt)) Σ_m S_MS(Ω_m)`, the lattice estimate of the oscillator covariance.
    pub lattice_covariance: CovarianceMatrix4,
}

pub fn lattice_spectra(p: &SystemParams, disc: &Discretization) -> Result<LatticeSpectra> {
    disc.check_nyquist(p)?;
    let s_in = input_psd_matrix(p)?;
    let floor = measurement_floor(p)?;
    let half = disc.fft_len / 2;
    let mut s_ii = Vec::with_capacity(half + 1);
    let mut s_qi = Vec::with_capacity(half + 1);
    let mut cov = [[0.0f64; 4]; 4];
    let meas = OutputChannel::Photocurrent.index();
    for m in 0..=half {
        let s = sampled_cross_spectrum(disc.frequency(m), disc.dt, p, &s_in, floor)?;
        let weight = if m == 0 || m == half { 1.0 } else { 2.0 };
        for a in 0..4 {
            for b in a..4 {
                cov[a][b] += weight * s[a][b].re;
            }
        }
        s_ii.push(s[meas][meas].re - floor);
        s_qi.push([s[0][meas], s[1][meas], s[2][meas], s[3][meas]]);
    }
    let norm = 1.0 / (disc.fft_len as f64 * disc.dt);
    for a in 0..4 {
        for b in a..4 {
            cov[a][b] *= norm;
            cov[b][a] = cov[a][b];
        }
    }
    Ok(LatticeSpectra {
        disc: *disc,
        floor,
        s_ii,
        s_qi,
        lattice_covariance: CovarianceMatrix4::from_rows(cov),
    })
}

/// Sampled correlations on lags `0..taps`: `C_ii(k dt)` including the white zero-lag mass and
/// `C_Qi(k dt) = E[Q(t) i(t − k dt)]`, where `i(t)` is the photocurrent averaged over `[t − dt, t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationSet {
    pub dt: f64,
    pub floor: f64,
    pub c_ii: Vec<f64>,
    pub c_qi: [Vec<f64>; 4],
}

/// Inverse transform of a Hermitian half spectrum to real lags `0..lags`.
fn half_spectrum_to_lags(half: &[C64], fft_len: usize, dt: f64, lags: usize) -> Vec<f64> {
    let mut buf = vec![c(0.0); fft_len];
    let nyq = fft_len / 2;
    for (m, v) in half.iter().enumerate() {
        if m == 0 || m == nyq {
            buf[m] = c(v.re);
        } else {
            buf[m] = *v;
            buf[fft_len - m] = v.conj();
        }
    }
    FftPlanner::new().plan_fft_forward(fft_len).process(&mut buf);
    let norm = 1.0 / (fft_len as f64 * dt);
    buf.iter().take(lags).map(|v| v.re * norm).collect()
}

pub fn correlations_from_psd(spectra: &LatticeSpectra) -> Result<CorrelationSet> {
    let disc = &spectra.disc;
    let half = disc.fft_len / 2 + 1;
    if spectra.s_ii.len() != half || spectra.s_qi.len() != half {
        return Err(Error::LengthMismatch {
            expected: half,
            got: spectra.s_ii.len().min(spectra.s_qi.len()),
        });
    }
    let ii: Vec<C64> = spectra.s_ii.iter().map(|&v| c(v)).collect();
    let mut c_ii = half_spectrum_to_lags(&ii, disc.fft_len, disc.dt, disc.taps);
    c_ii[0] += spectra.floor / disc.dt;
    let c_qi = std::array::from_fn(|a| {
        let col: Vec<C64> = spectra.s_qi.iter().map(|row| row[a]).collect();
        half_spectrum_to_lags(&col, disc.fft_len, disc.dt, disc.taps)
    });
    if c_ii.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "photocurrent correlation".into(),
        });
    }
    Ok(CorrelationSet {
        dt: disc.dt,
        floor: spectra.floor,
        c_ii,
        c_qi,
    })
}

/// Levinson recursion for the symmetric Toeplitz system with first row `r` and several
/// right-hand sides. `on_order(n, x)` sees the order-`n` solutions for every `n`.
pub fn levinson_solve<F>(r: &[f64], rhs: &[&[f64]], mut on_order: F) -> Result<Vec<Vec<f64>>>
where
    F: FnMut(usize, &[Vec<f64>]),
{
    let n = r.len();
    if let Some(b) = rhs.iter().find(|b| b.len() != n) {
        return Err(Error::LengthMismatch {
            expected: n,
            got: b.len(),
        });
    }
    if n == 0 {
        return Ok(vec![Vec::new(); rhs.len()]);
    }
    let r0 = r[0];
    if !(r0 > 0.0) {
        return Err(Error::IllConditioned {
            order: 0,
            reflection: f64::NAN,
        });
    }
    // unit-diagonal normalization
    let t: Vec<f64> = r.iter().map(|v| v / r0).collect();
    let mut xs: Vec<Vec<f64>> = rhs.iter().map(|b| vec![b[0] / r0]).collect();
    on_order(1, &xs);
    if n == 1 {
        return Ok(xs);
    }
    let mut y = vec![-t[1]];
    let mut alpha = -t[1];
    let mut beta = 1.0;
    let mut scratch = Vec::with_capacity(n);
    for k in 1..n {
        if alpha.abs() >= REFLECTION_LIMIT || !alpha.is_finite() {
            return Err(Error::IllConditioned {
                order: k,
                reflection: alpha,
            });
        }
        beta *= 1.0 - alpha * alpha;
        for (x, b) in xs.iter_mut().zip(rhs.iter()) {
            let dot: f64 = (0..k).map(|j| t[j + 1] * x[k - 1 - j]).sum();
            let mu = (b[k] / r0 - dot) / beta;
            for j in 0..k {
                x[j] += mu * y[k - 1 - j];
            }
            x.push(mu);
        }
        on_order(k + 1, &xs);
        if k + 1 < n {
            let dot: f64 = (0..k).map(|j| t[j + 1] * y[k - 1 - j]).sum();
            alpha = -(t[k + 1] + dot) / beta;
            scratch.clear();
            scratch.extend((0..k).map(|j| y[j] + alpha * y[k - 1 - j]));
            y.clear();
            y.extend_from_slice(&scratch);
            y.push(alpha);
        }
    }
    Ok(xs)
}

/// Causal filter `Q^c(t) = dt Σ_j K_j i(t − j dt)`; row `a` is the kernel for quadrature `a`,
/// tap `j` sits at `τ = −j dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeKernelSet {
    pub dt: f64,
    pub kernels: [Vec<f64>; 4],
}

impl TimeKernelSet {
    pub fn taps(&self) -> usize {
        self.kernels[0].len()
    }

    /// Kernel for an arbitrary linear combination `w·Q` of the quadratures.
    pub fn combined(&self, w: &[f64; 4]) -> Vec<f64> {
        (0..self.taps())
            .map(|j| (0..4).map(|a| w[a] * self.kernels[a][j]).sum())
            .collect()
    }
}

/// Result of a Wiener solve with the best-estimate covariance at each requested filter length.
#[derive(Debug, Clone)]
pub struct WienerSolution {
    pub kernel: TimeKernelSet,
    /// `(taps, V_be)` for each ladder entry, in increasing tap order.
    pub ladder: Vec<(usize, CovarianceMatrix4)>,
}

fn best_estimate(dt: f64, x: &[Vec<f64>], c_qi: &[Vec<f64>; 4]) -> CovarianceMatrix4 {
    let mut v = CovarianceMatrix4::zeros();
    let n = x[0].len();
    for a in 0..4 {
        for b in 0..4 {
            v.0[(a, b)] = dt * (0..n).map(|j| x[a][j] * c_qi[b][j]).sum::<f64>();
        }
    }
    v.symmetrized()
}

/// Solves the discretized Wiener–Hopf system `Σ_j dt C_ii((k−j)dt) K_j = C_Qi(k dt)`.
pub fn solve_wiener(corr: &CorrelationSet, ladder_taps: &[usize]) -> Result<WienerSolution> {
    let n = corr.c_ii.len();
    let dt = corr.dt;
    let r: Vec<f64> = corr.c_ii.iter().map(|v| v * dt).collect();
    let rhs: Vec<&[f64]> = corr.c_qi.iter().map(|v| v.as_slice()).collect();
    let mut wanted: Vec<usize> = ladder_taps.iter().copied().filter(|&k| k >= 1 && k <= n).collect();
    wanted.push(n);
    wanted.sort_unstable();
    wanted.dedup();
    let mut ladder = Vec::with_capacity(wanted.len());
    let truncated: [Vec<f64>; 4] = std::array::from_fn(|a| corr.c_qi[a].clone());
    let xs = levinson_solve(&r, &rhs, |order, x| {
        if wanted.binary_search(&order).is_ok() {
            ladder.push((order, best_estimate(dt, x, &truncated)));
        }
    })?;
    let kernels: [Vec<f64>; 4] = xs.try_into().map_err(|_| Error::LengthMismatch { expected: 4, got: 0 })?;
    Ok(WienerSolution {
        kernel: TimeKernelSet { dt, kernels },
        ladder,
    })
}

/// Largest residual of the discretized Wiener–Hopf system, by direct evaluation.
pub fn wiener_hopf_residual(corr: &CorrelationSet, k: &TimeKernelSet) -> f64 {
    let n = k.taps();
    let dt = corr.dt;
    let mut worst = 0.0f64;
    for a in 0..4 {
        for row in 0..n {
            let lhs: f64 = (0..n)
                .map(|j| dt * corr.c_ii[row.abs_diff(j)] * k.kernels[a][j])
                .sum();
            worst = worst.max((lhs - corr.c_qi[a][row]).abs());
        }
    }
    worst
}

/// Model mean-square error of an arbitrary kernel for one quadrature with variance `var`.
pub fn model_mse(var: f64, kernel: &[f64], corr: &CorrelationSet, quadrature: usize) -> f64 {
    let n = kernel.len();
    let dt = corr.dt;
    let cross: f64 = (0..n).map(|j| kernel[j] * corr.c_qi[quadrature][j]).sum::<f64>() * dt;
    let mut quad = 0.0;
    for j in 0..n {
        for k in 0..n {
            quad += kernel[j] * kernel[k] * corr.c_ii[j.abs_diff(k)];
        }
    }
    var - 2.0 * cross + quad * dt * dt
}

/// Best-estimate and conditional covariances at one conditioning time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionalState {
    pub time: f64,
    pub v_be: CovarianceMatrix4,
    pub v_c: CovarianceMatrix4,
}

pub const PSD_TOLERANCE: f64 = 1e-6;

pub fn conditional_covariance(v_u: &CovarianceMatrix4, v_be: &CovarianceMatrix4, time: f64) -> Result<ConditionalState> {
    let v_c = (*v_u - *v_be).symmetrized();
    let min = v_c.min_eigenvalue();
    if min < -PSD_TOLERANCE * v_c.trace().abs() {
        return Err(Error::NotPsd {
            min_eigenvalue: min,
            trace: v_c.trace(),
        });
    }
    Ok(ConditionalState {
        time,
        v_be: *v_be,
        v_c,
    })
}

/// `V_c(t)` on the ladder of a Wiener solution, preceded by the `t = 0` entry `V_c = V_u`.
pub fn conditional_ladder(v_u: &CovarianceMatrix4, sol: &WienerSolution) -> Result<Vec<ConditionalState>> {
    let dt = sol.kernel.dt;
    let mut out = vec![conditional_covariance(v_u, &CovarianceMatrix4::zeros(), 0.0)?];
    for (taps, v_be) in &sol.ladder {
        out.push(conditional_covariance(v_u, v_be, *taps as f64 * dt)?);
    }
    Ok(out)
}

/// Log-spaced ladder of tap counts ending at `taps`.
pub fn log_ladder(taps: usize, points: usize) -> Vec<usize> {
    if points == 0 || taps == 0 {
        return Vec::new();
    }
    let mut out: Vec<usize> = (1..=points)
        .map(|k| {
            let f = k as f64 / points as f64;
            ((taps as f64).powf(f)).round().max(1.0) as usize
        })
        .collect();
    out.dedup();
    out
}

/// Applies a causal kernel to a record: `out[t] = dt Σ_j K_j i[t−j]` for `t ≥ taps−1`,
/// returned for indices `taps−1 .. len`.
pub fn conditional_trajectory(record: &[f64], kernel: &[f64], dt: f64) -> Result<Vec<f64>> {
    let n = kernel.len();
    if record.len() < n || n == 0 {
        return Err(Error::RecordTooShort {
            len: record.len(),
            needed: n.max(1),
        });
    }
    let len = (record.len() + n).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(len);
    let inv = planner.plan_fft_inverse(len);
    let mut a: Vec<C64> = record.iter().map(|&v| c(v)).chain(std::iter::repeat(c(0.0))).take(len).collect();
    let mut b: Vec<C64> = kernel.iter().map(|&v| c(v)).chain(std::iter::repeat(c(0.0))).take(len).collect();
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (x, y) in a.iter_mut().zip(b.iter()) {
        *x *= y;
    }
    inv.process(&mut a);
    let scale = dt / len as f64;
    Ok(a[n - 1..record.len()].iter().map(|v| v.re * scale).collect())
}

/// Direct evaluation of the filter output at sample index `t` (needs `t ≥ taps−1`).
pub fn filter_at(record: &[f64], kernel: &[f64], dt: f64, t: usize) -> f64 {
    dt * kernel.iter().enumerate().map(|(j, k)| k * record[t - j]).sum::<f64>()
}

/// Peak-normalized frequency response `K(Ω) = dt Σ_j K_j e^{iΩ j dt}`.
pub fn filter_frequency_response(kernel: &[f64], dt: f64, omegas: &[f64]) -> Vec<C64> {
    let raw: Vec<C64> = omegas
        .iter()
        .map(|&w| {
            kernel
                .iter()
                .enumerate()
                .map(|(j, &k)| C64::from_polar(k * dt, w * j as f64 * dt))
                .sum()
        })
        .collect();
    let peak = raw.iter().fold(0.0f64, |m, v| m.max(v.norm()));
    if peak > 0.0 {
        raw.into_iter().map(|v| v / peak).collect()
    } else {
        raw
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClosedFormMode {
    Single,
    Epr,
}

/// Quantum cooperativity `Γ/(γ(2n+1))`.
pub fn cooperativity(readout_rate: f64, linewidth: f64, occupancy: f64) -> f64 {
    readout_rate / (linewidth * (2.0 * occupancy + 1.0))
}

/// Idealized rotating-wave, fast-readout conditional variances.
///
/// Single: `√(1/2η)·√(1 + (γ/Γ)V_u)` with `V_u = (1+2n)(1+C_q)`.
/// EPR: `√(γV_u/(2ηΓ))` with `V_u = 1+2n`.
pub fn closed_form_limits(mode: ClosedFormMode, eta: f64, readout_rate: f64, linewidth: f64, occupancy: f64) -> Result<f64> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::invalid("eta", "must lie in (0, 1]"));
    }
    if !(readout_rate > 0.0 && linewidth > 0.0 && occupancy >= 0.0) {
        return Err(Error::invalid("readout_rate", "rates must be positive and occupancy non-negative"));
    }
    let cq = cooperativity(readout_rate, linewidth, occupancy);
    let v_u = match mode {
        ClosedFormMode::Single => (1.0 + 2.0 * occupancy) * (1.0 + cq),
        ClosedFormMode::Epr => 1.0 + 2.0 * occupancy,
    };
    let fast = (8.0 * eta * v_u * readout_rate / linewidth).sqrt();
    if fast <= 3.0 {
        return Err(Error::RegimeViolation { fast_readout: fast });
    }
    Ok(match mode {
        ClosedFormMode::Single => (1.0 / (2.0 * eta)).sqrt() * (1.0 + linewidth / readout_rate * v_u).sqrt(),
        ClosedFormMode::Epr => (linewidth * v_u / (2.0 * eta * readout_rate)).sqrt(),
    })
}

/// Full pipeline output for one parameter set.
#[derive(Debug, Clone)]
pub struct ConditionalAnalysis {
    pub disc: Discretization,
    pub v_u: CovarianceMatrix4,
    pub lattice_v_u: CovarianceMatrix4,
    pub correlations: CorrelationSet,
    pub solution: WienerSolution,
    pub ladder: Vec<ConditionalState>,
}

impl ConditionalAnalysis {
    pub fn final_state(&self) -> &ConditionalState {
        self.ladder.last().expect("ladder always holds t = 0")
    }

    /// True if every diagonal entry of `V_c` is nonincreasing along the ladder.
    pub fn ladder_is_monotone(&self, slack: f64) -> bool {
        self.ladder.windows(2).all(|w| {
            (0..4).all(|k| w[1].v_c.get(k, k) <= w[0].v_c.get(k, k) + slack * w[0].v_c.get(k, k).abs())
        })
    }
}

/// Like [`analyze`], but also solves on the lattice with half the step and twice the taps and
/// combines the two best-estimate ladders as `(4 V_be(dt/2) − V_be(dt))/3`, cancelling the
/// leading `O(dt²)` sampling bias. Kernel and correlations are those of the fine lattice.
pub fn analyze_extrapolated(
    p: &SystemParams,
    disc: &Discretization,
    v_u: CovarianceMatrix4,
    ladder_points: usize,
) -> Result<ConditionalAnalysis> {
    let fine = Discretization::new(disc.dt / 2.0, 2 * disc.taps, 2 * disc.fft_len)?;
    let coarse_ladder = log_ladder(disc.taps, ladder_points);
    let fine_ladder: Vec<usize> = coarse_ladder.iter().map(|k| 2 * k).collect();
    let coarse_sol = solve_wiener(&correlations_from_psd(&lattice_spectra(p, disc)?)?, &coarse_ladder)?;
    let spectra = lattice_spectra(p, &fine)?;
    let correlations = correlations_from_psd(&spectra)?;
    let mut solution = solve_wiener(&correlations, &fine_ladder)?;
    for ((fine_taps, v_fine), (coarse_taps, v_coarse)) in solution.ladder.iter_mut().zip(&coarse_sol.ladder) {
        debug_assert_eq!(*fine_taps, 2 * coarse_taps);
        *v_fine = CovarianceMatrix4((v_fine.0 * 4.0 - v_coarse.0) / 3.0).symmetrized();
    }
    let ladder = conditional_ladder(&v_u, &solution)?;
    Ok(ConditionalAnalysis {
        disc: fine,
        v_u,
        lattice_v_u: spectra.lattice_covariance,
        correlations,
        solution,
        ladder,
    })
}

/// Model → lattice spectra → correlations → Levinson → `V_c(t)` ladder.
pub fn analyze(
    p: &SystemParams,
    disc: &Discretization,
    v_u: CovarianceMatrix4,
    ladder_points: usize,
) -> Result<ConditionalAnalysis> {
    let spectra = lattice_spectra(p, disc)?;
    let correlations = correlations_from_psd(&spectra)?;
    let solution = solve_wiener(&correlations, &log_ladder(disc.taps, ladder_points))?;
    let ladder = conditional_ladder(&v_u, &solution)?;
    Ok(ConditionalAnalysis {
        disc: *disc,
        v_u,
        lattice_v_u: spectra.lattice_covariance,
        correlations,
        solution,
        ladder,
    })
}
