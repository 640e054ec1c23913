//! Spectral parameter estimation: Welch periodograms, a heteroscedastic Gaussian likelihood
//! over several spectra, an affine-invariant ensemble sampler and posterior propagation.

use std::collections::HashSet;
use std::f64::consts::TAU;

use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hybrid_chain::{output_cross_spectrum, SystemParams};
use crate::model_core::{c, hz_to_rad, rad_to_hz, C64, LIGHT_VACUUM_PSD};

/// Averaged periodogram on bins `0..=segment_len/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct WelchEstimate {
    pub omega: Vec<f64>,
    pub psd: Vec<C64>,
    pub segments: usize,
    pub segment_len: usize,
}

impl WelchEstimate {
    /// Real part, the auto-spectrum when both inputs were the same record.
    pub fn auto(&self) -> Vec<f64> {
        self.psd.iter().map(|v| v.re).collect()
    }
}

fn hann(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| 0.5 * (1.0 - (TAU * n as f64 / len as f64).cos()))
        .collect()
}

/// Cross-spectrum `S_xy(Ω)` by Hann-windowed, 50 %-overlapped segments of power-of-two length.
pub fn welch_cross(x: &[f64], y: &[f64], dt: f64, segments: usize) -> Result<WelchEstimate> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    if segments < 2 {
        return Err(Error::invalid("segments", "need at least 2"));
    }
    let n = x.len();
    let max_len = 2 * n / (segments + 1);
    if max_len < 8 {
        return Err(Error::RecordTooShort {
            len: n,
            needed: 8 * (segments + 1) / 2,
        });
    }
    let len = 1usize << (usize::BITS - 1 - max_len.leading_zeros());
    let step = len / 2;
    let w = hann(len);
    let norm = dt / w.iter().map(|v| v * v).sum::<f64>();
    let fft = FftPlanner::new().plan_fft_inverse(len);
    let half = len / 2;
    let mut acc = vec![c(0.0); half + 1];
    let mut bx = vec![c(0.0); len];
    let mut by = vec![c(0.0); len];
    for s in 0..segments {
        let start = s * step;
        for k in 0..len {
            bx[k] = c(x[start + k] * w[k]);
            by[k] = c(y[start + k] * w[k]);
        }
        fft.process(&mut bx);
        fft.process(&mut by);
        for m in 0..=half {
            acc[m] += bx[m] * by[m].conj();
        }
    }
    let scale = norm / segments as f64;
    Ok(WelchEstimate {
        omega: (0..=half).map(|m| TAU * m as f64 / (len as f64 * dt)).collect(),
        psd: acc.into_iter().map(|v| v * scale).collect(),
        segments,
        segment_len: len,
    })
}

pub fn welch_psd(x: &[f64], dt: f64, segments: usize) -> Result<WelchEstimate> {
    welch_cross(x, x, dt, segments)
}

/// Free parameters the fit can vary; frequencies are in Hz, angles in rad.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    Nu,
    Eta,
    KappaInFraction,
    SpinReadoutRateHz,
    SpinOccupancy,
    SpinLinewidthHz,
    SpinZeta,
    BroadbandNoise,
    MechOccupancy,
    CouplingHz,
    DetuningHz,
    SpinOmegaHz,
    Phi,
    Vartheta,
}

impl ParamKind {
    /// Parses the snake_case name; `omega_s` is accepted for `spin_omega_hz`.
    pub fn from_name(name: &str) -> Result<Self> {
        let key = match name.to_ascii_lowercase().as_str() {
            "omega_s" => "spin_omega_hz".to_string(),
            other => other.to_string(),
        };
        serde_json::from_value(serde_json::Value::String(key))
            .map_err(|_| Error::Config(format!("unknown parameter '{name}'")))
    }

    pub fn get(self, p: &SystemParams) -> f64 {
        match self {
            ParamKind::Nu => p.chain.nu,
            ParamKind::Eta => p.chain.eta,
            ParamKind::KappaInFraction => p.mech.kappa_in / p.mech.kappa(),
            ParamKind::SpinReadoutRateHz => rad_to_hz(p.spin.readout_rate),
            ParamKind::SpinOccupancy => p.spin.occupancy,
            ParamKind::SpinLinewidthHz => rad_to_hz(p.spin.linewidth0),
            ParamKind::SpinZeta => p.spin.zeta,
            ParamKind::BroadbandNoise => p.spin.broadband.added_noise_sn,
            ParamKind::MechOccupancy => p.mech.occupancy,
            ParamKind::CouplingHz => rad_to_hz(p.mech.coupling),
            ParamKind::DetuningHz => rad_to_hz(p.mech.detuning),
            ParamKind::SpinOmegaHz => rad_to_hz(p.spin.omega),
            ParamKind::Phi => p.chain.phi,
            ParamKind::Vartheta => p.chain.vartheta,
        }
    }

    pub fn set(self, p: &mut SystemParams, v: f64) {
        match self {
            ParamKind::Nu => p.chain.nu = v,
            ParamKind::Eta => p.chain.eta = v,
            ParamKind::KappaInFraction => {
                let k = p.mech.kappa();
                p.mech.kappa_in = v * k;
                p.mech.kappa_ex = (1.0 - v) * k;
            }
            ParamKind::SpinReadoutRateHz => p.spin.readout_rate = hz_to_rad(v),
            ParamKind::SpinOccupancy => p.spin.occupancy = v,
            ParamKind::SpinLinewidthHz => p.spin.linewidth0 = hz_to_rad(v),
            ParamKind::SpinZeta => p.spin.zeta = v,
            ParamKind::BroadbandNoise => p.spin.broadband.added_noise_sn = v,
            ParamKind::MechOccupancy => p.mech.occupancy = v,
            ParamKind::CouplingHz => p.mech.coupling = hz_to_rad(v),
            ParamKind::DetuningHz => p.mech.detuning = hz_to_rad(v),
            ParamKind::SpinOmegaHz => p.spin.omega = hz_to_rad(v),
            ParamKind::Phi => p.chain.phi = v,
            ParamKind::Vartheta => p.chain.vartheta = v,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianPrior {
    pub mean: f64,
    pub sd: f64,
}

impl GaussianPrior {
    pub fn log_density(&self, x: f64) -> f64 {
        let z = (x - self.mean) / self.sd;
        -0.5 * z * z - self.sd.ln()
    }
}

/// Whether a parameter is common to every spectrum or belongs to one of them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamScope {
    Shared,
    Spectrum(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreeParameter {
    pub kind: ParamKind,
    pub scope: ParamScope,
    pub prior: GaussianPrior,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodSpec {
    /// Relative error of each spectral bin.
    pub relative_error: f64,
    /// Constant error added to each bin, shot-noise units.
    pub floor_sn: f64,
    pub parameters: Vec<FreeParameter>,
}

impl LikelihoodSpec {
    pub fn new(parameters: Vec<FreeParameter>) -> Self {
        LikelihoodSpec {
            relative_error: 0.08,
            floor_sn: 0.1,
            parameters,
        }
    }

    /// Checks positivity and that each `(kind, spectrum)` pair is set by at most one parameter.
    pub fn validate(&self, spectra: usize) -> Result<()> {
        if !(self.relative_error > 0.0) || !(self.floor_sn >= 0.0) {
            return Err(Error::invalid("likelihood", "relative_error must be > 0 and floor >= 0"));
        }
        let mut owned = HashSet::new();
        for fp in &self.parameters {
            if !(fp.prior.sd > 0.0) || !fp.prior.mean.is_finite() {
                return Err(Error::invalid("prior", format!("{:?} prior sd must be positive", fp.kind)));
            }
            let targets: Vec<usize> = match fp.scope {
                ParamScope::Shared => (0..spectra).collect(),
                ParamScope::Spectrum(k) if k < spectra => vec![k],
                ParamScope::Spectrum(k) => {
                    return Err(Error::invalid("scope", format!("spectrum index {k} out of range")));
                }
            };
            for t in targets {
                if !owned.insert((fp.kind, t)) {
                    return Err(Error::invalid("parameters", format!("{:?} set twice for spectrum {t}", fp.kind)));
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.parameters.len()
    }

    pub fn prior_means(&self) -> Vec<f64> {
        self.parameters.iter().map(|p| p.prior.mean).collect()
    }
}

/// Measured photocurrent spectrum in shot-noise units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedSpectrum {
    pub omega: Vec<f64>,
    pub psd_sn: Vec<f64>,
}

pub fn model_spectrum_sn(p: &SystemParams, omega: &[f64]) -> Result<Vec<f64>> {
    omega
        .iter()
        .map(|&w| output_cross_spectrum(w, p).map(|s| s.s_ii() / LIGHT_VACUUM_PSD))
        .collect()
}

/// Draws an observation around `model` from the bin error model.
pub fn noisy_observation(model_sn: &[f64], spec: &LikelihoodSpec, rng: &mut impl Rng) -> Vec<f64> {
    model_sn
        .iter()
        .map(|&m| {
            let z: f64 = StandardNormal.sample(rng);
            m + z * (spec.relative_error * m + spec.floor_sn)
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct FitProblem {
    pub spec: LikelihoodSpec,
    /// Parameters of each spectrum before the free parameters are applied.
    pub bases: Vec<SystemParams>,
    pub data: Vec<ObservedSpectrum>,
}

impl FitProblem {
    pub fn new(spec: LikelihoodSpec, bases: Vec<SystemParams>, data: Vec<ObservedSpectrum>) -> Result<Self> {
        if bases.len() != data.len() {
            return Err(Error::LengthMismatch {
                expected: bases.len(),
                got: data.len(),
            });
        }
        for d in &data {
            if d.omega.len() != d.psd_sn.len() {
                return Err(Error::LengthMismatch {
                    expected: d.omega.len(),
                    got: d.psd_sn.len(),
                });
            }
        }
        spec.validate(bases.len())?;
        Ok(FitProblem { spec, bases, data })
    }

    pub fn apply(&self, theta: &[f64]) -> Result<Vec<SystemParams>> {
        if theta.len() != self.spec.dim() {
            return Err(Error::LengthMismatch {
                expected: self.spec.dim(),
                got: theta.len(),
            });
        }
        let mut out = self.bases.clone();
        for (fp, &v) in self.spec.parameters.iter().zip(theta) {
            match fp.scope {
                ParamScope::Shared => out.iter_mut().for_each(|p| fp.kind.set(p, v)),
                ParamScope::Spectrum(k) => fp.kind.set(&mut out[k], v),
            }
        }
        for p in &out {
            p.validate()?;
        }
        Ok(out)
    }

    /// Gaussian data term `−½Σ r² − Σ ln σ` with `σ = rel·S_model + floor`.
    pub fn log_likelihood(&self, theta: &[f64]) -> Result<f64> {
        let params = self.apply(theta)?;
        let mut total = 0.0;
        for (p, d) in params.iter().zip(&self.data) {
            let model = model_spectrum_sn(p, &d.omega)?;
            total += gaussian_log_likelihood(&model, &d.psd_sn, &self.spec)?;
        }
        Ok(total)
    }

    pub fn log_prior(&self, theta: &[f64]) -> f64 {
        self.spec
            .parameters
            .iter()
            .zip(theta)
            .map(|(fp, &v)| fp.prior.log_density(v))
            .sum()
    }

    /// Log-posterior; parameter sets the model rejects map to −∞.
    pub fn log_posterior(&self, theta: &[f64]) -> f64 {
        match self.log_likelihood(theta) {
            Ok(l) if l.is_finite() => l + self.log_prior(theta),
            _ => f64::NEG_INFINITY,
        }
    }
}

pub fn gaussian_log_likelihood(model: &[f64], observed: &[f64], spec: &LikelihoodSpec) -> Result<f64> {
    if model.len() != observed.len() {
        return Err(Error::LengthMismatch {
            expected: model.len(),
            got: observed.len(),
        });
    }
    let mut total = 0.0;
    for (&m, &o) in model.iter().zip(observed) {
        if !(m > 0.0 && m.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("model spectrum value {m}"),
            });
        }
        let sigma = spec.relative_error * m + spec.floor_sn;
        let r = (o - m) / sigma;
        total += -0.5 * r * r - sigma.ln();
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McmcSettings {
    pub walkers: usize,
    pub burn_in: usize,
    pub steps: usize,
    /// Stretch-move scale `a`.
    pub stretch: f64,
    pub seed: u64,
}

impl Default for McmcSettings {
    fn default() -> Self {
        McmcSettings {
            walkers: 32,
            burn_in: 500,
            steps: 1000,
            stretch: 2.0,
            seed: 1,
        }
    }
}

/// Post-burn-in draws of every walker, in step-major order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PosteriorSample {
    pub dim: usize,
    pub walkers: usize,
    pub burn_in: usize,
    pub steps: usize,
    pub draws: Vec<Vec<f64>>,
    pub log_post: Vec<f64>,
    pub acceptance_fraction: f64,
}

impl PosteriorSample {
    pub fn column(&self, k: usize) -> impl Iterator<Item = f64> + '_ {
        self.draws.iter().map(move |d| d[k])
    }

    pub fn mean(&self) -> Vec<f64> {
        let n = self.draws.len() as f64;
        (0..self.dim).map(|k| self.column(k).sum::<f64>() / n).collect()
    }

    pub fn sd(&self) -> Vec<f64> {
        let m = self.mean();
        let n = self.draws.len() as f64;
        (0..self.dim)
            .map(|k| (self.column(k).map(|v| (v - m[k]).powi(2)).sum::<f64>() / (n - 1.0)).sqrt())
            .collect()
    }

    pub fn covariance(&self) -> Vec<Vec<f64>> {
        let m = self.mean();
        let n = self.draws.len() as f64;
        (0..self.dim)
            .map(|i| {
                (0..self.dim)
                    .map(|j| self.draws.iter().map(|d| (d[i] - m[i]) * (d[j] - m[j])).sum::<f64>() / (n - 1.0))
                    .collect()
            })
            .collect()
    }
}

fn ensemble_spread(ws: &[Vec<f64>]) -> f64 {
    let dim = ws[0].len();
    let n = ws.len() as f64;
    (0..dim)
        .map(|k| {
            let m = ws.iter().map(|w| w[k]).sum::<f64>() / n;
            (ws.iter().map(|w| (w[k] - m).powi(2)).sum::<f64>() / n).sqrt()
        })
        .fold(f64::INFINITY, f64::min)
}

/// Walkers drawn from independent Gaussians, `scale` times the given widths.
pub fn initial_ensemble(center: &[f64], widths: &[f64], walkers: usize, scale: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    (0..walkers)
        .map(|_| {
            center
                .iter()
                .zip(widths)
                .map(|(&m, &s)| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    m + scale * s * z
                })
                .collect()
        })
        .collect()
}

/// Affine-invariant ensemble sampler with stretch moves applied to alternating half-ensembles.
pub fn ensemble_mcmc<F>(log_post: F, initial: Vec<Vec<f64>>, s: &McmcSettings) -> Result<PosteriorSample>
where
    F: Fn(&[f64]) -> f64,
{
    let walkers = initial.len();
    let dim = initial.first().map_or(0, Vec::len);
    if dim == 0 || initial.iter().any(|w| w.len() != dim) {
        return Err(Error::invalid("initial", "walkers must share a nonzero dimension"));
    }
    if walkers < 2 * dim || !walkers.is_multiple_of(2) {
        return Err(Error::invalid("walkers", format!("{walkers} walkers: need an even count >= 2*dim = {}", 2 * dim)));
    }
    if !(s.stretch > 1.0) {
        return Err(Error::invalid("stretch", "must exceed 1"));
    }
    let spread = ensemble_spread(&initial);
    if spread < 1e-12 {
        return Err(Error::DegenerateEnsemble { spread });
    }
    let mut rng = ChaCha20Rng::seed_from_u64(s.seed);
    let mut pos = initial;
    let mut lp: Vec<f64> = pos.iter().map(|w| log_post(w)).collect();
    if lp.iter().all(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "log-posterior of every initial walker".into(),
        });
    }
    let half = walkers / 2;
    let a = s.stretch;
    let mut accepted = 0usize;
    let mut proposed = 0usize;
    let mut draws = Vec::with_capacity(s.steps * walkers);
    let mut log_post_out = Vec::with_capacity(s.steps * walkers);
    let mut proposal = vec![0.0; dim];
    for step in 0..s.burn_in + s.steps {
        for first in [0usize, half] {
            let other = if first == 0 { half } else { 0 };
            for k in first..first + half {
                let j = other + rng.gen_range(0..half);
                let u: f64 = rng.gen();
                let z = ((a - 1.0) * u + 1.0).powi(2) / a;
                for d in 0..dim {
                    proposal[d] = pos[j][d] + z * (pos[k][d] - pos[j][d]);
                }
                let lnew = log_post(&proposal);
                let log_ratio = (dim as f64 - 1.0) * z.ln() + lnew - lp[k];
                let r: f64 = rng.gen();
                let accept = lnew.is_finite() && (log_ratio >= 0.0 || r.ln() < log_ratio);
                if step >= s.burn_in {
                    proposed += 1;
                }
                if accept {
                    pos[k].copy_from_slice(&proposal);
                    lp[k] = lnew;
                    if step >= s.burn_in {
                        accepted += 1;
                    }
                }
            }
        }
        if step >= s.burn_in {
            draws.extend(pos.iter().cloned());
            log_post_out.extend_from_slice(&lp);
        }
    }
    let spread = ensemble_spread(&pos);
    if spread < 1e-12 {
        return Err(Error::DegenerateEnsemble { spread });
    }
    Ok(PosteriorSample {
        dim,
        walkers,
        burn_in: s.burn_in,
        steps: s.steps,
        draws,
        log_post: log_post_out,
        acceptance_fraction: if proposed > 0 { accepted as f64 / proposed as f64 } else { 0.0 },
    })
}

/// Distribution of a derived quantity over randomly chosen posterior draws.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DerivedSummary {
    pub values: Vec<f64>,
    pub mean: f64,
    pub sd: f64,
    pub failures: usize,
    /// Fraction of successful draws with value below 1.
    pub below_one: f64,
}

pub fn summarize(values: Vec<f64>, failures: usize) -> DerivedSummary {
    let n = values.len() as f64;
    let mean = if values.is_empty() { f64::NAN } else { values.iter().sum::<f64>() / n };
    let sd = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let below_one = if values.is_empty() {
        f64::NAN
    } else {
        values.iter().filter(|&&v| v < 1.0).count() as f64 / n
    };
    DerivedSummary {
        values,
        mean,
        sd,
        failures,
        below_one,
    }
}

/// Evaluates `f` on `n_draws` distinct random draws; failing draws are counted and skipped.
pub fn posterior_vc<F>(sample: &PosteriorSample, n_draws: usize, seed: u64, f: F) -> DerivedSummary
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let n = n_draws.min(sample.draws.len());
    let picks = sample_indices(&mut rng, sample.draws.len(), n);
    let mut values = Vec::with_capacity(n);
    let mut failures = 0;
    for idx in picks.iter() {
        match f(&sample.draws[idx]) {
            Ok(v) if v.is_finite() => values.push(v),
            _ => failures += 1,
        }
    }
    summarize(values, failures)
}
