//! Command-line front end: loads a JSON config, runs one subcommand and writes plot-ready files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::config::{ConfigFile, FitConfig, Override};
use crate::epr_analysis::{demodulate_trajectory, minimize_epr, EprOptimum};
use crate::error::{Error, Result};
use crate::estimation::{
    ensemble_mcmc, initial_ensemble, model_spectrum_sn, noisy_observation, posterior_vc, DerivedSummary, FitProblem,
    FreeParameter, GaussianPrior, ObservedSpectrum, ParamKind, ParamScope, PosteriorSample,
};
use crate::hybrid_chain::{noise_budget, unconditional_covariance, SystemParams};
use crate::model_core::{hz_to_rad, rad_to_hz, CovarianceMatrix4, OutputChannel};
use crate::optomech_cavity::effective_frequency;
use crate::pipeline::{conditional_epr_variance, run_pipeline, PipelineSettings};
use crate::presets::{desk_hybrid, HybridPreset};
use crate::quadrature::QuadratureOptions;
use crate::spin_oscillator::cifar_response;
use crate::synthetic_data::Synthesizer;
use crate::wiener_filter::{analyze, conditional_trajectory, filter_frequency_response, Discretization};

#[derive(Debug, Parser)]
#[command(name = "hybrid-epr", version, about = "Hybrid spin-mechanics spectra, conditional variances and EPR analysis")]
pub struct Cli {
    /// JSON configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    /// Upper bound on worker threads; every subcommand currently runs on one.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
    /// Run the subcommand's consistency checks and exit with 4 if one fails.
    #[arg(long, global = true)]
    pub self_check: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PresetName {
    Resonant,
    Detuned,
    Desk,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Photocurrent PSD with its noise budget on the configured grid.
    Spectrum,
    /// Conditional covariance ladder, Wiener kernel and filter response.
    Condvar {
        #[arg(long = "t-ladder", default_value_t = 10)]
        t_ladder: usize,
    },
    /// Minimized conditional EPR variance as one parameter is stepped.
    Sweep {
        #[arg(long)]
        param: String,
        /// Comma-separated values; an empty list writes the header only.
        #[arg(long, value_delimiter = ',', num_args = 0.., allow_hyphen_values = true)]
        values: Vec<String>,
    },
    /// Synthetic record of the four quadratures and the photocurrent.
    Simulate {
        #[arg(long, default_value_t = 16384)]
        samples: usize,
    },
    /// Filtered estimates of a synthetic record in the oscillators' rotating frames; reports
    /// the scatter of the EPR-combination residual against the model value.
    Track {
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Posterior sampling of the configured parameters and of the conditional EPR variance.
    Fit {
        /// CSV with columns `spectrum,freq_hz,psd_sn`; synthetic data from the config when absent.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Spin calibration response to a coherent drive.
    Cifar {
        #[arg(long)]
        theta_in_deg: Option<f64>,
        /// Half-width of the scan in units of the spin readout rate.
        #[arg(long, default_value_t = 5.0)]
        span: f64,
        #[arg(long, default_value_t = 2001)]
        points: usize,
    },
    /// Writes a ready-made configuration.
    Init {
        #[arg(value_enum)]
        preset: PresetName,
    },
}

/// Parses arguments, runs and maps errors to exit codes.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    if cli.threads == 0 {
        return Err(Error::Config("--threads must be at least 1".into()));
    }
    fs::create_dir_all(&cli.out)?;
    if let Command::Init { preset } = &cli.command {
        return cmd_init(cli, *preset);
    }
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config is required".into()))?;
    let cfg = ConfigFile::load(path)?;
    match &cli.command {
        Command::Spectrum => cmd_spectrum(cli, &cfg),
        Command::Condvar { t_ladder } => cmd_condvar(cli, &cfg, *t_ladder),
        Command::Sweep { param, values } => cmd_sweep(cli, &cfg, param, &parse_values(values)?),
        Command::Simulate { samples } => cmd_simulate(cli, &cfg, *samples),
        Command::Track { samples } => cmd_track(cli, &cfg, *samples),
        Command::Fit { data } => cmd_fit(cli, &cfg, data.as_deref()),
        Command::Cifar {
            theta_in_deg,
            span,
            points,
        } => cmd_cifar(cli, &cfg, *theta_in_deg, *span, *points),
        Command::Init { .. } => unreachable!("handled above"),
    }
}

fn parse_values(raw: &[String]) -> Result<Vec<f64>> {
    raw.iter()
        .map(|v| v.trim())
        .filter(|v| !v.is_empty())
        .map(|v| v.parse().map_err(|_| Error::Config(format!("sweep value {v:?} is not a number"))))
        .collect()
}

fn write_file(dir: &Path, name: &str, body: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    fs::write(&path, body)?;
    Ok(path)
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf> {
    write_file(dir, name, &(serde_json::to_string_pretty(value)? + "\n"))
}

fn self_check(enabled: bool, ok: bool, what: impl FnOnce() -> String) -> Result<()> {
    if enabled && !ok {
        return Err(Error::SelfCheck(what()));
    }
    Ok(())
}

fn cmd_init(cli: &Cli, preset: PresetName) -> Result<()> {
    let p = match preset {
        PresetName::Resonant => HybridPreset::resonant().build()?,
        PresetName::Detuned => HybridPreset::detuned().build()?,
        PresetName::Desk => desk_hybrid(),
    };
    let mut cfg = ConfigFile::from_system(&p);
    if preset == PresetName::Desk {
        cfg.grid.f_min_hz = 90e3;
        cfg.grid.f_max_hz = 110e3;
        cfg.grid.points = 201;
        cfg.wiener.wiener.taps = Some(512);
        cfg.wiener.wiener.fft_len = Some(16384);
        cfg.mcmc = Some(desk_fit(&p));
    }
    let name = format!("{}.json", format!("{preset:?}").to_lowercase());
    let path = write_json(&cli.out, &name, &cfg)?;
    println!("{}", path.display());
    Ok(())
}

/// Six shared parameters with priors centred on the preset, fitted to the preset spectrum
/// and a copy with the spin moved 3 kHz further out.
fn desk_fit(p: &SystemParams) -> FitConfig {
    let priors = [
        (ParamKind::Nu, 0.05),
        (ParamKind::Eta, 0.05),
        (ParamKind::SpinReadoutRateHz, 500.0),
        (ParamKind::SpinOccupancy, 0.2),
        (ParamKind::MechOccupancy, 0.2),
        (ParamKind::SpinLinewidthHz, 100.0),
    ];
    FitConfig {
        sampler: Default::default(),
        relative_error: 0.08,
        floor_sn: 0.1,
        parameters: priors
            .iter()
            .map(|&(kind, sd)| FreeParameter {
                kind,
                scope: ParamScope::Shared,
                prior: GaussianPrior { mean: kind.get(p), sd },
            })
            .collect(),
        extra_spectra: vec![vec![Override {
            kind: ParamKind::SpinOmegaHz,
            value: ParamKind::SpinOmegaHz.get(p) - 3e3,
        }]],
        posterior_draws: 200,
        init_scale: 0.1,
    }
}

fn cmd_spectrum(cli: &Cli, cfg: &ConfigFile) -> Result<()> {
    let p = cfg.system()?;
    let mut csv = cfg.csv_header() + "\nfreq_hz,s_ii_total,shot,broadband,qba,thermal_m,thermal_s\n";
    let mut worst = 0.0f64;
    for f in cfg.grid.frequencies_hz() {
        let b = noise_budget(hz_to_rad(f), &p)?;
        let parts = b.shot + b.broadband + b.qba + b.thermal_m + b.thermal_s;
        worst = worst.max((parts - b.total).abs() / b.total.abs().max(1e-300));
        writeln!(
            csv,
            "{f},{},{},{},{},{},{}",
            b.total, b.shot, b.broadband, b.qba, b.thermal_m, b.thermal_s
        )
        .expect("string write");
    }
    let path = write_file(&cli.out, "spectrum.csv", &csv)?;
    println!("{}", path.display());
    self_check(cli.self_check, worst <= 1e-9, || format!("noise budget misses total by {worst:e}"))
}

#[derive(Serialize)]
struct LadderRow {
    time_s: f64,
    v_c_trace: f64,
    epr_variance: f64,
    v_c: CovarianceMatrix4,
    v_be: CovarianceMatrix4,
}

fn cmd_condvar(cli: &Cli, cfg: &ConfigFile, ladder_points: usize) -> Result<()> {
    let p = cfg.system()?;
    let settings = PipelineSettings {
        ladder_points,
        ..cfg.wiener
    };
    let report = run_pipeline(&p, &settings)?;
    let a = &report.analysis;
    let ladder: Vec<LadderRow> = a
        .ladder
        .iter()
        .map(|s| LadderRow {
            time_s: s.time,
            v_c_trace: s.v_c.trace(),
            epr_variance: minimize_epr(&s.v_c).variance,
            v_c: s.v_c,
            v_be: s.v_be,
        })
        .collect();
    let monotone = a.ladder_is_monotone(1e-9);
    let summary = json!({
        "schema": crate::config::SCHEMA,
        "params_hash": cfg.params_hash(),
        "discretization": a.disc,
        "v_u": a.v_u,
        "lattice_v_u": a.lattice_v_u,
        "unconditional_epr": report.unconditional_epr,
        "conditional_epr": report.conditional_epr,
        "monotone": monotone,
        "ladder": ladder,
    });
    write_json(&cli.out, "condvar.json", &summary)?;

    let mut csv = cfg.csv_header() + "\ntime_s,v_c_trace,epr_variance\n";
    for r in &ladder {
        writeln!(csv, "{},{},{}", r.time_s, r.v_c_trace, r.epr_variance).expect("string write");
    }
    write_file(&cli.out, "condvar.csv", &csv)?;

    let k = &a.solution.kernel;
    let mut csv = cfg.csv_header() + "\ntap,tau_s,k_xm,k_pm,k_xs,k_ps\n";
    for j in 0..k.taps() {
        writeln!(
            csv,
            "{j},{},{},{},{},{}",
            -(j as f64) * k.dt,
            k.kernels[0][j],
            k.kernels[1][j],
            k.kernels[2][j],
            k.kernels[3][j]
        )
        .expect("string write");
    }
    write_file(&cli.out, "kernel.csv", &csv)?;

    let freqs = cfg.grid.frequencies_hz();
    let omegas: Vec<f64> = freqs.iter().map(|&f| hz_to_rad(f)).collect();
    let responses: Vec<_> = (0..4).map(|q| filter_frequency_response(&k.kernels[q], k.dt, &omegas)).collect();
    let mut csv = cfg.csv_header() + "\nfreq_hz,mag_xm,phase_xm,mag_pm,phase_pm,mag_xs,phase_xs,mag_ps,phase_ps\n";
    for (m, f) in freqs.iter().enumerate() {
        let cols: Vec<String> = responses
            .iter()
            .map(|r| format!("{},{}", r[m].norm(), r[m].arg()))
            .collect();
        writeln!(csv, "{f},{}", cols.join(",")).expect("string write");
    }
    write_file(&cli.out, "filter_response.csv", &csv)?;

    println!(
        "{}",
        json!({"conditional_epr": report.conditional_epr.variance, "monotone": monotone})
    );
    let psd = a.ladder.iter().all(|s| s.v_c.min_eigenvalue() >= -1e-6 * s.v_c.trace());
    self_check(cli.self_check, monotone && psd, || {
        format!("ladder monotone={monotone}, positive semidefinite={psd}")
    })
}

fn cmd_sweep(cli: &Cli, cfg: &ConfigFile, param: &str, values: &[f64]) -> Result<()> {
    let kind = ParamKind::from_name(param)?;
    let base = cfg.system()?;
    let mut csv = cfg.csv_header() + "\nvalue,epr_variance,a,beta,conjugate_variance,unconditional_epr\n";
    for &v in values {
        let mut p = base;
        kind.set(&mut p, v);
        p.validate().map_err(|e| Error::Config(e.to_string()))?;
        let r = run_pipeline(&p, &cfg.wiener)?;
        let o: EprOptimum = r.conditional_epr;
        writeln!(
            csv,
            "{v},{},{},{},{},{}",
            o.variance, o.weights.a, o.weights.beta, o.conjugate_variance, r.unconditional_epr.variance
        )
        .expect("string write");
    }
    let path = write_file(&cli.out, "sweep.csv", &csv)?;
    println!("{}", path.display());
    Ok(())
}

fn record_csv(cfg: &ConfigFile, dt: f64, samples: &[Vec<f64>], len: usize) -> String {
    let mut csv = cfg.csv_header() + "\nt_s,x_m,p_m,x_s,p_s,i\n";
    for t in 0..len {
        write!(csv, "{}", t as f64 * dt).expect("string write");
        for ch in samples {
            write!(csv, ",{}", ch[t]).expect("string write");
        }
        csv.push('\n');
    }
    csv
}

fn cmd_simulate(cli: &Cli, cfg: &ConfigFile, samples: usize) -> Result<()> {
    let p = cfg.system()?;
    let disc = Discretization::auto(&p, &cfg.wiener.wiener)?;
    let period = (2 * samples.max(2)).next_power_of_two();
    let synth = Synthesizer::new(&p, disc.dt, period)?;
    let rec = synth.realize(cli.seed, samples)?;
    let csv = record_csv(cfg, rec.dt, &rec.samples, rec.len());
    let hash = hex::encode(Sha256::digest(csv.as_bytes()));
    let path = write_file(&cli.out, "simulate.csv", &csv)?;
    let i = rec.channel(OutputChannel::Photocurrent).expect("photocurrent synthesized");
    let var_i = i.iter().map(|v| v * v).sum::<f64>() / i.len().max(1) as f64;
    let floor_var = crate::hybrid_chain::measurement_floor(&p)? / rec.dt;
    println!(
        "{}",
        json!({"file": path.display().to_string(), "sha256": hash, "samples": rec.len(), "dt": rec.dt})
    );
    // the photocurrent is dominated by its white floor, so its variance is a tight statistic
    self_check(cli.self_check, var_i >= 0.9 * floor_var, || {
        format!("photocurrent variance {var_i:e} below white floor {floor_var:e}")
    })
}

fn cmd_track(cli: &Cli, cfg: &ConfigFile, samples: Option<usize>) -> Result<()> {
    let p = cfg.system()?;
    let v_u = unconditional_covariance(
        &p,
        &QuadratureOptions {
            rel_tol: cfg.wiener.rel_tol,
            ..Default::default()
        },
    )?;
    let disc = Discretization::auto(&p, &cfg.wiener.wiener)?;
    let analysis = analyze(&p, &disc, v_u, cfg.wiener.ladder_points)?;
    let kernel = &analysis.solution.kernel;
    let len = samples.unwrap_or((disc.fft_len / 2).max(1 << 16)).max(2 * kernel.taps());
    let synth = Synthesizer::new(&p, disc.dt, (2 * len).next_power_of_two())?;
    let rec = synth.realize(cli.seed, len)?;
    let i = rec.channel(OutputChannel::Photocurrent).expect("photocurrent synthesized");
    let estimates: Vec<Vec<f64>> = (0..4)
        .map(|q| conditional_trajectory(i, &kernel.kernels[q], disc.dt))
        .collect::<Result<_>>()?;
    let start = kernel.taps() - 1;
    let n = estimates[0].len();
    let model = minimize_epr(&analysis.final_state().v_c);
    let (ux, up) = (model.weights.u_x(), model.weights.u_p());
    let mut residual_epr = 0.0;
    for t in 0..n {
        let r: [f64; 4] = std::array::from_fn(|q| rec.samples[q][start + t] - estimates[q][t]);
        let x: f64 = (0..4).map(|q| ux[q] * r[q]).sum();
        let y: f64 = (0..4).map(|q| up[q] * r[q]).sum();
        residual_epr += x * x + y * y;
    }
    residual_epr /= n as f64;
    let model_epr = model.variance;
    let t0 = start as f64 * disc.dt;
    let w_m = effective_frequency(&p.mech)?;
    let (xm, pm) = demodulate_trajectory(&estimates[0], &estimates[1], disc.dt, w_m, t0)?;
    let (xs, ps) = demodulate_trajectory(&estimates[2], &estimates[3], disc.dt, p.spin.omega, t0)?;
    let mut csv = cfg.csv_header() + "\nt_s,x_m,p_m,x_s,p_s\n";
    for t in 0..n {
        writeln!(csv, "{},{},{},{},{}", t0 + t as f64 * disc.dt, xm[t], pm[t], xs[t], ps[t]).expect("string write");
    }
    write_file(&cli.out, "track.csv", &csv)?;
    let ratio = residual_epr / model_epr;
    let summary = json!({
        "schema": crate::config::SCHEMA,
        "params_hash": cfg.params_hash(),
        "samples": n,
        "dt": disc.dt,
        "weights": model.weights,
        "residual_epr_variance": residual_epr,
        "model_epr_variance": model_epr,
        "ratio": ratio,
    });
    write_json(&cli.out, "track.json", &summary)?;
    println!("{summary}");
    self_check(cli.self_check, (ratio - 1.0).abs() <= 0.1, || {
        format!("residual EPR scatter {residual_epr:.4} vs model {model_epr:.4}")
    })
}

fn read_spectra(path: &Path, count: usize) -> Result<Vec<ObservedSpectrum>> {
    let text = fs::read_to_string(path)?;
    let mut out = vec![
        ObservedSpectrum {
            omega: Vec::new(),
            psd_sn: Vec::new()
        };
        count
    ];
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("spectrum") {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        let bad = || Error::Config(format!("{}:{}: expected spectrum,freq_hz,psd_sn", path.display(), n + 1));
        if cols.len() != 3 {
            return Err(bad());
        }
        let k: usize = cols[0].parse().map_err(|_| bad())?;
        let f: f64 = cols[1].parse().map_err(|_| bad())?;
        let s: f64 = cols[2].parse().map_err(|_| bad())?;
        let spec = out.get_mut(k).ok_or_else(bad)?;
        spec.omega.push(hz_to_rad(f));
        spec.psd_sn.push(s);
    }
    Ok(out)
}

/// Builds the fit problem, with synthetic observations drawn at the config truth when no data is given.
pub fn fit_problem(cfg: &ConfigFile, fit: &FitConfig, data: Option<&Path>, seed: u64) -> Result<FitProblem> {
    let base = cfg.system()?;
    let bases = fit.bases(&base);
    let spec = fit.likelihood();
    let observed = match data {
        Some(path) => read_spectra(path, bases.len())?,
        None => {
            let omega: Vec<f64> = cfg.grid.frequencies_hz().into_iter().map(hz_to_rad).collect();
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            bases
                .iter()
                .map(|p| {
                    let model = model_spectrum_sn(p, &omega)?;
                    Ok(ObservedSpectrum {
                        omega: omega.clone(),
                        psd_sn: noisy_observation(&model, &spec, &mut rng),
                    })
                })
                .collect::<Result<_>>()?
        }
    };
    FitProblem::new(spec, bases, observed)
}

#[derive(Serialize)]
struct ParameterSummary {
    kind: ParamKind,
    scope: ParamScope,
    mean: f64,
    sd: f64,
    truth: Option<f64>,
}

fn truth_of(problem: &FitProblem, k: usize) -> f64 {
    let fp = &problem.spec.parameters[k];
    let idx = match fp.scope {
        ParamScope::Shared => 0,
        ParamScope::Spectrum(i) => i,
    };
    fp.kind.get(&problem.bases[idx])
}

fn histogram(values: &[f64], bins: usize) -> Vec<(f64, f64, usize)> {
    if values.is_empty() {
        return Vec::new();
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1e-12 };
    let mut counts = vec![0usize; bins];
    for v in values {
        let b = (((v - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(b, c)| (lo + b as f64 * width, lo + (b + 1) as f64 * width, c))
        .collect()
}

/// Posterior of the fit and of the conditional EPR variance of the first spectrum's system.
pub fn run_fit(
    problem: &FitProblem,
    fit: &FitConfig,
    settings: &PipelineSettings,
    seed: u64,
) -> Result<(PosteriorSample, DerivedSummary)> {
    let means = problem.spec.prior_means();
    let sds: Vec<f64> = problem.spec.parameters.iter().map(|p| p.prior.sd).collect();
    let init = initial_ensemble(&means, &sds, fit.sampler.walkers, fit.init_scale, seed);
    let sampler = crate::estimation::McmcSettings {
        seed: fit.sampler.seed.wrapping_add(seed),
        ..fit.sampler
    };
    let post = ensemble_mcmc(|t| problem.log_posterior(t), init, &sampler)?;
    let vc = posterior_vc(&post, fit.posterior_draws, seed, |theta| {
        let p: SystemParams = problem.apply(theta)?[0];
        conditional_epr_variance(&p, settings)
    });
    Ok((post, vc))
}

fn cmd_fit(cli: &Cli, cfg: &ConfigFile, data: Option<&Path>) -> Result<()> {
    let fit = cfg
        .mcmc
        .as_ref()
        .ok_or_else(|| Error::Config("the fit subcommand needs an mcmc section".into()))?;
    let problem = fit_problem(cfg, fit, data, cli.seed)?;
    let (post, vc) = run_fit(&problem, fit, &cfg.wiener, cli.seed)?;
    let mean = post.mean();
    let sd = post.sd();
    let synthetic = data.is_none();
    let params: Vec<ParameterSummary> = problem
        .spec
        .parameters
        .iter()
        .enumerate()
        .map(|(k, fp)| ParameterSummary {
            kind: fp.kind,
            scope: fp.scope,
            mean: mean[k],
            sd: sd[k],
            truth: synthetic.then(|| truth_of(&problem, k)),
        })
        .collect();
    let covered = params
        .iter()
        .filter(|s| s.truth.is_none_or(|t| (s.mean - t).abs() <= 2.0 * s.sd))
        .count();
    let summary = json!({
        "schema": crate::config::SCHEMA,
        "params_hash": cfg.params_hash(),
        "synthetic": synthetic,
        "acceptance_fraction": post.acceptance_fraction,
        "draws": post.draws.len(),
        "parameters": params,
        "v_c": {"mean": vc.mean, "sd": vc.sd, "p_below_one": vc.below_one, "failures": vc.failures, "evaluated": vc.values.len()},
    });
    write_json(&cli.out, "posterior_summary.json", &summary)?;

    // column-major little-endian f64: one column per parameter, then the log-posterior
    let mut bytes = Vec::with_capacity((post.dim + 1) * post.draws.len() * 8);
    for k in 0..post.dim {
        for v in post.column(k) {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    for v in &post.log_post {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(cli.out.join("chain.bin"), bytes)?;
    let mut columns: Vec<String> = problem
        .spec
        .parameters
        .iter()
        .map(|p| serde_json::to_value(p.kind).map(|v| v.as_str().unwrap_or_default().to_string()))
        .collect::<std::result::Result<_, _>>()?;
    columns.push("log_posterior".into());
    write_json(
        &cli.out,
        "chain.json",
        &json!({"layout": "column-major f64 little-endian", "rows": post.draws.len(), "columns": columns}),
    )?;

    let mut csv = cfg.csv_header() + "\nbin_lo,bin_hi,count\n";
    for (lo, hi, c) in histogram(&vc.values, 30) {
        writeln!(csv, "{lo},{hi},{c}").expect("string write");
    }
    write_file(&cli.out, "vc_histogram.csv", &csv)?;
    println!("{summary}");
    let frac = covered as f64 / params.len() as f64;
    self_check(cli.self_check, !synthetic || frac >= 0.9, || {
        format!("only {covered} of {} parameters within 2 sd of truth", params.len())
    })
}

fn dip(p: &crate::spin_oscillator::SpinParams, theta: f64, sign: crate::spin_oscillator::CifarSign, grid: &[f64]) -> Result<f64> {
    let mut best = (grid[0], f64::INFINITY);
    for &w in grid {
        let r = cifar_response(w, theta, sign, p)?.norm_sqr();
        if r < best.1 {
            best = (w, r);
        }
    }
    Ok(best.0)
}

fn cmd_cifar(cli: &Cli, cfg: &ConfigFile, theta_deg: Option<f64>, span: f64, points: usize) -> Result<()> {
    let p = cfg.system()?.spin;
    let theta = theta_deg.unwrap_or(cfg.cifar.theta_in_deg).to_radians();
    if points < 2 || !(span > 0.0) || !(p.readout_rate > 0.0) {
        return Err(Error::Config("cifar needs points >= 2, span > 0 and a nonzero spin readout rate".into()));
    }
    let center = p.omega.abs();
    let half = span * p.readout_rate;
    let grid: Vec<f64> = (0..points)
        .map(|k| center - half + 2.0 * half * k as f64 / (points - 1) as f64)
        .collect();
    let mut csv = cfg.csv_header() + "\nfreq_hz,r2,phase_rad\n";
    for &w in &grid {
        let r = cifar_response(w, theta, cfg.cifar.sign, &p)?;
        writeln!(csv, "{},{},{}", rad_to_hz(w), r.norm_sqr(), r.arg()).expect("string write");
    }
    let path = write_file(&cli.out, "cifar.csv", &csv)?;
    let sep = (dip(&p, theta, cfg.cifar.sign, &grid)? - dip(&p, -theta, cfg.cifar.sign, &grid)?).abs();
    // in the rotating-wave limit the dips of ±ϑ_in sit at ∓Γ cot ϑ_in from resonance
    let predicted = 2.0 * p.readout_rate * (theta.cos() / theta.sin()).abs();
    let ratio = sep / predicted;
    println!(
        "{}",
        json!({"file": path.display().to_string(), "dip_separation_hz": rad_to_hz(sep), "predicted_separation_hz": rad_to_hz(predicted), "separation_over_prediction": ratio})
    );
    self_check(cli.self_check, (ratio - 1.0).abs() <= 0.1, || {
        format!("dip separation is {ratio:.3} of the predicted 2Γ|cot ϑ_in|")
    })
}
