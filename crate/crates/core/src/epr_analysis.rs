//! EPR variables of the two oscillators, their variance, its minimization over the spin
//! weight and rotation, and rotating-frame output.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model_core::CovarianceMatrix4;

/// Upper end of the spin-weight search interval.
pub const A_MAX: f64 = 10.0;
const GRID_A: usize = 200;
const GRID_BETA: usize = 180;

/// Relative spin weight `a > 0` and spin rotation `β`.
///
/// `X_EPR = (X_M − a X′_S)/√(1+a²)`, `P_EPR = (P_M + a P′_S)/√(1+a²)` with
/// `X′_S = cosβ X_S + sinβ P_S`, `P′_S = −sinβ X_S + cosβ P_S`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EprWeights {
    pub a: f64,
    pub beta: f64,
}

impl EprWeights {
    pub fn new(a: f64, beta: f64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::invalid("a", "spin weight must be positive"));
        }
        if !beta.is_finite() {
            return Err(Error::invalid("beta", "must be finite"));
        }
        Ok(EprWeights { a, beta })
    }

    fn norm(&self) -> f64 {
        (1.0 + self.a * self.a).sqrt()
    }

    pub fn u_x(&self) -> [f64; 4] {
        let (s, c) = self.beta.sin_cos();
        let n = self.norm();
        [1.0 / n, 0.0, -self.a * c / n, -self.a * s / n]
    }

    pub fn u_p(&self) -> [f64; 4] {
        let (s, c) = self.beta.sin_cos();
        let n = self.norm();
        [0.0, 1.0 / n, -self.a * s / n, self.a * c / n]
    }

    /// Conjugate pair `X_M + a X′_S`, `P_M − a P′_S`, normalized.
    pub fn conjugate_u_x(&self) -> [f64; 4] {
        let u = self.u_x();
        [u[0], u[1], -u[2], -u[3]]
    }

    pub fn conjugate_u_p(&self) -> [f64; 4] {
        let u = self.u_p();
        [u[0], u[1], -u[2], -u[3]]
    }
}

fn quadratic(v: &CovarianceMatrix4, u: &[f64; 4]) -> f64 {
    let mut s = 0.0;
    for i in 0..4 {
        for j in 0..4 {
            s += u[i] * v.get(i, j) * u[j];
        }
    }
    s
}

/// `Var[X_EPR] + Var[P_EPR]`.
pub fn epr_variance(v: &CovarianceMatrix4, w: &EprWeights) -> f64 {
    quadratic(v, &w.u_x()) + quadratic(v, &w.u_p())
}

/// Variance sum of the conjugate pair, reported alongside the minimized one.
pub fn conjugate_epr_variance(v: &CovarianceMatrix4, w: &EprWeights) -> f64 {
    quadratic(v, &w.conjugate_u_x()) + quadratic(v, &w.conjugate_u_p())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EprOptimum {
    pub weights: EprWeights,
    pub variance: f64,
    pub conjugate_variance: f64,
}

fn wrap_angle(b: f64) -> f64 {
    let mut x = (b + PI).rem_euclid(2.0 * PI) - PI;
    if x <= -PI {
        x += 2.0 * PI;
    }
    x
}

/// Global minimum of `V_{a,β}` over `a ∈ (0, A_MAX]`, `β ∈ [−π, π)`: coarse grid then a
/// local quadratic refinement.
pub fn minimize_epr(v: &CovarianceMatrix4) -> EprOptimum {
    let eval = |a: f64, b: f64| epr_variance(v, &EprWeights { a, beta: b });
    let da = A_MAX / GRID_A as f64;
    let db = 2.0 * PI / GRID_BETA as f64;
    let mut best = (f64::INFINITY, 0usize, 0usize);
    for i in 1..=GRID_A {
        for j in 0..GRID_BETA {
            let a = i as f64 * da;
            let b = -PI + j as f64 * db;
            let val = eval(a, b);
            let tie_better = |bi: usize, bj: usize| {
                let bb = -PI + bj as f64 * db;
                i < bi || (i == bi && b.abs() < bb.abs())
            };
            if val < best.0 - 1e-14 * val.abs() || ((val - best.0).abs() <= 1e-14 * val.abs() && tie_better(best.1, best.2)) {
                best = (val, i, j);
            }
        }
    }
    let mut a = best.1 as f64 * da;
    let mut b = -PI + best.2 as f64 * db;
    let mut step_a = da;
    let mut step_b = db;
    // Newton steps on a local quadratic fit, with shrinking trust region
    for _ in 0..200 {
        let f0 = eval(a, b);
        let ha = step_a.max(1e-9);
        let hb = step_b.max(1e-9);
        let fa_p = eval((a + ha).min(A_MAX), b);
        let fa_m = eval((a - ha).max(1e-12), b);
        let fb_p = eval(a, b + hb);
        let fb_m = eval(a, b - hb);
        let fab = eval((a + ha).min(A_MAX), b + hb);
        let ga = (fa_p - fa_m) / (2.0 * ha);
        let gb = (fb_p - fb_m) / (2.0 * hb);
        let haa = (fa_p - 2.0 * f0 + fa_m) / (ha * ha);
        let hbb = (fb_p - 2.0 * f0 + fb_m) / (hb * hb);
        let hab = (fab - fa_p - fb_p + f0) / (ha * hb);
        let det = haa * hbb - hab * hab;
        let (mut sa, mut sb) = if haa > 0.0 && det > 0.0 {
            (-(hbb * ga - hab * gb) / det, -(haa * gb - hab * ga) / det)
        } else {
            (-ga.signum() * ha, -gb.signum() * hb)
        };
        sa = sa.clamp(-step_a, step_a);
        sb = sb.clamp(-step_b, step_b);
        let na = (a + sa).clamp(1e-12, A_MAX);
        let nb = b + sb;
        if eval(na, nb) < f0 {
            a = na;
            b = nb;
        } else {
            step_a *= 0.5;
            step_b *= 0.5;
        }
        if step_a < 1e-12 && step_b < 1e-12 {
            break;
        }
    }
    let weights = EprWeights { a, beta: wrap_angle(b) };
    EprOptimum {
        weights,
        variance: epr_variance(v, &weights),
        conjugate_variance: conjugate_epr_variance(v, &weights),
    }
}

/// Spin rotation that zeroes the `X_M–P′_S` and `P_M–X′_S` covariances, or minimizes their
/// squared sum when both cannot vanish. Returned in `(−π/2, π/2]`.
pub fn null_antidiagonal_rotation(v: &CovarianceMatrix4) -> f64 {
    // Cov(X_M, P′_S) = c V14 − s V13 ;  Cov(P_M, X′_S) = c V23 + s V24
    let (v13, v14, v23, v24) = (v.get(0, 2), v.get(0, 3), v.get(1, 2), v.get(1, 3));
    let m11 = v14 * v14 + v23 * v23;
    let m22 = v13 * v13 + v24 * v24;
    let m12 = -v14 * v13 + v23 * v24;
    if m11.abs() + m22.abs() + m12.abs() == 0.0 {
        return 0.0;
    }
    // eigenvector of the smaller eigenvalue of [[m11, m12], [m12, m22]]
    let theta = 0.5 * (2.0 * m12).atan2(m11 - m22);
    let (mut c, mut s) = ((theta + PI / 2.0).cos(), (theta + PI / 2.0).sin());
    if c < 0.0 || (c == 0.0 && s < 0.0) {
        c = -c;
        s = -s;
    }
    let beta = s.atan2(c);
    if beta <= -PI / 2.0 {
        beta + PI
    } else {
        beta
    }
}

/// Covariance in the spin-rotated basis `(X_M, P_M, X′_S, P′_S)`.
pub fn rotate_spin(v: &CovarianceMatrix4, beta: f64) -> CovarianceMatrix4 {
    let (s, c) = beta.sin_cos();
    let mut r = nalgebra::Matrix4::identity();
    r[(2, 2)] = c;
    r[(2, 3)] = s;
    r[(3, 2)] = -s;
    r[(3, 3)] = c;
    CovarianceMatrix4(r * v.0 * r.transpose())
}

/// Covariance of `(X_EPR, P_EPR, X′_EPR, P′_EPR)`.
pub fn epr_basis(v: &CovarianceMatrix4, w: &EprWeights) -> CovarianceMatrix4 {
    let rows = [w.u_x(), w.u_p(), w.conjugate_u_x(), w.conjugate_u_p()];
    let t = nalgebra::Matrix4::from_fn(|i, j| rows[i][j]);
    CovarianceMatrix4(t * v.0 * t.transpose())
}

/// Rotating-frame components `O_{ωt}·(X, P)` of a sampled 2-vector series.
pub fn demodulate_trajectory(x: &[f64], p: &[f64], dt: f64, omega: f64, t0: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if x.len() != p.len() {
        return Err(Error::LengthMismatch {
            expected: x.len(),
            got: p.len(),
        });
    }
    Ok(x.iter()
        .zip(p.iter())
        .enumerate()
        .map(|(k, (&xv, &pv))| {
            let (s, c) = (omega * (t0 + k as f64 * dt)).sin_cos();
            (c * xv - s * pv, s * xv + c * pv)
        })
        .unzip())
}
