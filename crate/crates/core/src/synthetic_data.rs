//! Exact stationary Gaussian records of the oscillator quadratures and the photocurrent,
//! drawn on a periodic frequency lattice from the model's transfer matrix.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use nalgebra::{linalg::SymmetricEigen, Matrix5};

use crate::hybrid_chain::{input_psd_matrix, measurement_floor, SystemParams};
use crate::model_core::{c, CovarianceMatrix4, OutputChannel, C64};
use crate::wiener_filter::{filter_at, sampled_cross_spectrum, Discretization, TimeKernelSet, NYQUIST_FACTOR};

/// Sampled channels sharing one time base.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeRecord {
    pub dt: f64,
    pub seed: u64,
    pub channels: Vec<OutputChannel>,
    pub samples: Vec<Vec<f64>>,
}

impl TimeRecord {
    pub fn len(&self) -> usize {
        self.samples.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channel(&self, ch: OutputChannel) -> Option<&[f64]> {
        self.channels
            .iter()
            .position(|&c| c == ch)
            .map(|k| self.samples[k].as_slice())
    }
}

/// Per-bin factor `L` with `L L† = S(Ω_m)` for the sampled process on the non-negative half
/// of a periodic lattice.
pub struct Synthesizer {
    dt: f64,
    period: usize,
    factors: Vec<[[C64; OutputChannel::COUNT]; OutputChannel::COUNT]>,
    min_eigenvalue: f64,
}

impl Synthesizer {
    pub fn new(p: &SystemParams, dt: f64, period: usize) -> Result<Self> {
        if !period.is_power_of_two() || period < 4 {
            return Err(Error::invalid("period", format!("{period} must be a power of two >= 4")));
        }
        let required = NYQUIST_FACTOR * p.max_oscillator_frequency();
        if std::f64::consts::PI / dt < required {
            return Err(Error::Aliasing {
                nyquist: std::f64::consts::PI / dt,
                required,
            });
        }
        let s_in = input_psd_matrix(p)?;
        let floor = measurement_floor(p)?;
        let mut min_eigenvalue = f64::INFINITY;
        let factors = (0..=period / 2)
            .map(|m| {
                let w = std::f64::consts::TAU * m as f64 / (period as f64 * dt);
                let s = sampled_cross_spectrum(w, dt, p, &s_in, floor)?;
                // the end bins carry real amplitudes, so they are factored as real matrices
                let (values, vectors): (Vec<f64>, Matrix5<C64>) = if m == 0 || m == period / 2 {
                    let eig = SymmetricEigen::new(Matrix5::from_fn(|r, k| s[r][k].re));
                    (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors.map(c))
                } else {
                    let eig = SymmetricEigen::new(Matrix5::from_fn(|r, k| s[r][k]));
                    (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors)
                };
                let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                let mut out = [[c(0.0); OutputChannel::COUNT]; OutputChannel::COUNT];
                for (k, &lambda) in values.iter().enumerate() {
                    if scale > 0.0 {
                        min_eigenvalue = min_eigenvalue.min(lambda / scale);
                    }
                    let amp = lambda.max(0.0).sqrt();
                    for (a, row) in out.iter_mut().enumerate() {
                        row[k] = vectors[(a, k)] * amp;
                    }
                }
                Ok(out)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Synthesizer {
            dt,
            period,
            factors,
            min_eigenvalue,
        })
    }

    /// Smallest eigenvalue of the per-bin spectral matrices relative to the largest, before clipping.
    pub fn min_relative_eigenvalue(&self) -> f64 {
        self.min_eigenvalue
    }

    pub fn for_discretization(p: &SystemParams, disc: &Discretization) -> Result<Self> {
        Synthesizer::new(p, disc.dt, disc.fft_len)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn period(&self) -> usize {
        self.period
    }

    /// One realization of all five outputs, keeping the first `len ≤ period/2` samples.
    pub fn realize(&self, seed: u64, len: usize) -> Result<TimeRecord> {
        if len > self.period / 2 {
            return Err(Error::invalid("len", format!("{len} exceeds half the period {}", self.period)));
        }
        let m_len = self.period;
        let half = m_len / 2;
        let scale = (m_len as f64 / self.dt).sqrt();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut spectra = vec![vec![c(0.0); m_len]; OutputChannel::COUNT];
        let mut xi = [c(0.0); OutputChannel::COUNT];
        for m in 0..=half {
            let real_bin = m == 0 || m == half;
            for x in xi.iter_mut() {
                *x = if real_bin {
                    c(StandardNormal.sample(&mut rng))
                } else {
                    let re: f64 = StandardNormal.sample(&mut rng);
                    let im: f64 = StandardNormal.sample(&mut rng);
                    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
                };
            }
            let w = &self.factors[m];
            for (a, spec) in spectra.iter_mut().enumerate() {
                let v: C64 = if real_bin {
                    c((0..OutputChannel::COUNT).map(|k| w[a][k].re * xi[k].re).sum::<f64>())
                } else {
                    (0..OutputChannel::COUNT).map(|k| w[a][k] * xi[k]).sum()
                };
                spec[m] = v * scale;
                if !real_bin {
                    spec[m_len - m] = (v * scale).conj();
                }
            }
        }
        let fft = FftPlanner::new().plan_fft_forward(m_len);
        let samples = spectra
            .into_iter()
            .map(|mut s| {
                fft.process(&mut s);
                s.iter().take(len).map(|v| v.re / m_len as f64).collect()
            })
            .collect();
        Ok(TimeRecord {
            dt: self.dt,
            seed,
            channels: OutputChannel::ALL.to_vec(),
            samples,
        })
    }
}

/// Record of at least `duration` seconds (rounded up to a power of two of samples),
/// synthesized on a lattice twice as long and truncated.
pub fn synthesize_joint(p: &SystemParams, duration: f64, dt: f64, seed: u64) -> Result<TimeRecord> {
    if !(duration > 0.0 && dt > 0.0) {
        return Err(Error::invalid("duration", "duration and dt must be positive"));
    }
    let len = ((duration / dt).ceil() as usize).max(2).next_power_of_two();
    Synthesizer::new(p, dt, 2 * len)?.realize(seed, len)
}

/// Remembers the time step used for each `(params hash, seed)` pair.
#[derive(Debug, Default)]
pub struct SeedRegistry {
    seen: HashMap<(String, u64), f64>,
}

impl SeedRegistry {
    /// Returns a warning when the same parameters and seed come back with a different `dt`.
    pub fn check(&mut self, params_hash: &str, seed: u64, dt: f64) -> Option<String> {
        match self.seen.insert((params_hash.to_string(), seed), dt) {
            Some(prev) if prev != dt => Some(format!(
                "seed {seed} reused for identical parameters with dt {dt:e} (previously {prev:e}); records are not comparable"
            )),
            _ => None,
        }
    }
}

/// Empirical covariance of the estimation residuals `Q − Q^c` over an ensemble.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalConditional {
    pub v_c: CovarianceMatrix4,
    /// Standard error of each entry from the spread of per-realization means.
    pub std_err: [[f64; 4]; 4],
    pub realizations: usize,
    pub samples: usize,
}

/// Filters `realizations` synthetic records (seeds `seed0 + r`) and accumulates residual
/// covariances at every `stride`-th sample once the kernel window is full.
pub fn ensemble_conditional_oracle(
    synth: &Synthesizer,
    kernel: &TimeKernelSet,
    realizations: usize,
    seed0: u64,
    stride: usize,
) -> Result<EmpiricalConditional> {
    let taps = kernel.taps();
    let len = synth.period() / 2;
    if taps > len {
        return Err(Error::RecordTooShort { len, needed: taps });
    }
    if realizations < 2 {
        return Err(Error::invalid("realizations", "need at least 2"));
    }
    let stride = stride.max(1);
    let mut per_real = Vec::with_capacity(realizations);
    let mut total = [[0.0f64; 4]; 4];
    let mut count = 0usize;
    for r in 0..realizations {
        let rec = synth.realize(seed0.wrapping_add(r as u64), len)?;
        let i = rec.channel(OutputChannel::Photocurrent).expect("photocurrent synthesized");
        let mut acc = [[0.0f64; 4]; 4];
        let mut n = 0usize;
        let mut t = taps - 1;
        while t < len {
            let resid: [f64; 4] = std::array::from_fn(|a| rec.samples[a][t] - filter_at(i, &kernel.kernels[a], kernel.dt, t));
            for a in 0..4 {
                for b in 0..4 {
                    acc[a][b] += resid[a] * resid[b];
                }
            }
            n += 1;
            t += stride;
        }
        for a in 0..4 {
            for b in 0..4 {
                total[a][b] += acc[a][b];
                acc[a][b] /= n as f64;
            }
        }
        count += n;
        per_real.push(acc);
    }
    let mean: [[f64; 4]; 4] = std::array::from_fn(|a| std::array::from_fn(|b| total[a][b] / count as f64));
    let std_err = std::array::from_fn(|a| {
        std::array::from_fn(|b| {
            let m: f64 = per_real.iter().map(|x| x[a][b]).sum::<f64>() / realizations as f64;
            let var: f64 = per_real.iter().map(|x| (x[a][b] - m).powi(2)).sum::<f64>() / (realizations - 1) as f64;
            (var / realizations as f64).sqrt()
        })
    });
    Ok(EmpiricalConditional {
        v_c: CovarianceMatrix4::from_rows(mean),
        std_err,
        realizations,
        samples: count,
    })
}

/// Sample covariance of the four oscillator channels.
pub fn sample_covariance(rec: &TimeRecord) -> CovarianceMatrix4 {
    let n = rec.len() as f64;
    let rows = std::array::from_fn(|a| {
        std::array::from_fn(|b| rec.samples[a].iter().zip(&rec.samples[b]).map(|(x, y)| x * y).sum::<f64>() / n)
    });
    CovarianceMatrix4::from_rows(rows)
}
