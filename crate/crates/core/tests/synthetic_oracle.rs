use std::f64::consts::PI;
use std::ops::Sub;

use hybrid_epr::estimation::welch_cross;
use hybrid_epr::model_core::{OutputChannel, C64};
use hybrid_epr::optomech_cavity::effective_frequency;
use hybrid_epr::presets::desk_hybrid;
use hybrid_epr::synthetic_data::Synthesizer;
use hybrid_epr::wiener_filter::sampled_cross_spectrum;
use hybrid_epr::hybrid_chain::{input_psd_matrix, measurement_floor};

const REALIZATIONS: u64 = 200;
const LEN: usize = 1 << 16;

/// Band-averaged Welch spectra over the ensemble, for `(x, y)` channel pairs.
fn ensemble_spectra(synth: &Synthesizer, pairs: &[(OutputChannel, OutputChannel)]) -> (Vec<f64>, Vec<Vec<C64>>) {
    let mut acc: Vec<Vec<C64>> = vec![Vec::new(); pairs.len()];
    let mut omega = Vec::new();
    for r in 0..REALIZATIONS {
        let rec = synth.realize(500 + r, LEN).unwrap();
        for (k, &(a, b)) in pairs.iter().enumerate() {
            let w = welch_cross(rec.channel(a).unwrap(), rec.channel(b).unwrap(), rec.dt, 4).unwrap();
            if acc[k].is_empty() {
                acc[k] = vec![C64::new(0.0, 0.0); w.psd.len()];
                omega = w.omega.clone();
            }
            for (s, v) in acc[k].iter_mut().zip(&w.psd) {
                *s += v / REALIZATIONS as f64;
            }
        }
    }
    (omega, acc)
}

#[test]
fn empirical_spectra_match_the_sampled_model() {
    let p = desk_hybrid();
    let dt = 2.0 * PI / (8.0 * p.max_oscillator_frequency());
    let synth = Synthesizer::new(&p, dt, 2 * LEN).unwrap();
    let (xm, pm, i) = (OutputChannel::MechX, OutputChannel::MechP, OutputChannel::Photocurrent);
    let (omega, est) = ensemble_spectra(&synth, &[(xm, i), (xm, xm), (pm, pm)]);
    let center = effective_frequency(&p.mech).unwrap();
    let band = 3.0 * p.mech.linewidth0;
    let s_in = input_psd_matrix(&p).unwrap();
    let floor = measurement_floor(&p).unwrap();
    // complex sums of the cross-spectrum over three sub-bands; the flanks carry little signal, so
    // their estimator noise at this ensemble size is a few percent
    let mut est_xi = [C64::new(0.0, 0.0); 3];
    let mut model_xi = [C64::new(0.0, 0.0); 3];
    let (mut err_mom, mut norm_mom) = (0.0, 0.0);
    for (m, &w) in omega.iter().enumerate() {
        let offset = w - center;
        if offset.abs() > band {
            continue;
        }
        let sub = (((offset + band) / (2.0 * band) * 3.0) as usize).min(2);
        let model = sampled_cross_spectrum(w, dt, &p, &s_in, floor).unwrap();
        est_xi[sub] += est[0][m];
        model_xi[sub] += model[xm.index()][i.index()];
        let ratio = (w / p.mech.omega0).powi(2);
        err_mom += (est[2][m].re - ratio * est[1][m].re).abs();
        norm_mom += est[2][m].re;
    }
    for k in 0..3 {
        let err = (est_xi[k] - model_xi[k]).norm() / model_xi[k].norm();
        assert!(err < 0.1, "sub-band {k}: cross-spectrum error {err}");
    }
    let err_xi: f64 = est_xi.iter().sum::<C64>().sub(model_xi.iter().sum::<C64>()).norm();
    let norm_xi = model_xi.iter().sum::<C64>().norm();
    assert!(norm_xi > 0.0);
    assert!(err_xi / norm_xi < 0.05, "cross-spectrum error {}", err_xi / norm_xi);
    assert!(err_mom / norm_mom < 0.02, "momentum relation error {}", err_mom / norm_mom);
}
