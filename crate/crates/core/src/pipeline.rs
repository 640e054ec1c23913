//! End-to-end evaluation: unconditional covariance, Wiener filtering and EPR optimization.

use serde::{Deserialize, Serialize};

use crate::epr_analysis::{minimize_epr, EprOptimum};
use crate::error::Result;
use crate::hybrid_chain::{unconditional_covariance, SystemParams};
use crate::model_core::CovarianceMatrix4;
use crate::quadrature::QuadratureOptions;
use crate::wiener_filter::{analyze, analyze_extrapolated, ConditionalAnalysis, Discretization, WienerSettings};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineSettings {
    pub wiener: WienerSettings,
    /// Relative tolerance of the `V_u` integral.
    pub rel_tol: f64,
    pub ladder_points: usize,
    /// Combine solves at `dt` and `dt/2` to cancel the leading sampling bias.
    pub extrapolate: bool,
}

impl Default for PipelineSettings {
    fn default() -> Self {
        PipelineSettings {
            wiener: WienerSettings::default(),
            rel_tol: 1e-9,
            ladder_points: 10,
            extrapolate: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineReport {
    pub analysis: ConditionalAnalysis,
    pub unconditional_epr: EprOptimum,
    pub conditional_epr: EprOptimum,
}

impl PipelineReport {
    pub fn v_u(&self) -> &CovarianceMatrix4 {
        &self.analysis.v_u
    }

    pub fn v_c(&self) -> &CovarianceMatrix4 {
        &self.analysis.final_state().v_c
    }
}

pub fn run_pipeline(p: &SystemParams, s: &PipelineSettings) -> Result<PipelineReport> {
    p.validate()?;
    let v_u = unconditional_covariance(
        p,
        &QuadratureOptions {
            rel_tol: s.rel_tol,
            ..Default::default()
        },
    )?;
    let disc = Discretization::auto(p, &s.wiener)?;
    disc.check_nyquist(p)?;
    let analysis = if s.extrapolate {
        analyze_extrapolated(p, &disc, v_u, s.ladder_points)?
    } else {
        analyze(p, &disc, v_u, s.ladder_points)?
    };
    let unconditional_epr = minimize_epr(&analysis.v_u);
    let conditional_epr = minimize_epr(&analysis.final_state().v_c);
    Ok(PipelineReport {
        analysis,
        unconditional_epr,
        conditional_epr,
    })
}

/// Minimized conditional EPR variance.
pub fn conditional_epr_variance(p: &SystemParams, s: &PipelineSettings) -> Result<f64> {
    Ok(run_pipeline(p, s)?.conditional_epr.variance)
}
