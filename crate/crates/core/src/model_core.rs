//! Shared conventions for every other module.
//!
//! Fourier convention: `f(Ω) = ∫ f(t) e^{iΩt} dt`, so a time derivative becomes `-iΩ`.
//! Internal frequencies are angular (rad/s); configuration and file output use Hz.
//! Light quadratures have a symmetrized vacuum PSD of 1/4, oscillator quadratures a
//! vacuum variance of 1/2, which puts the two-mode separability threshold at exactly 1.

use std::f64::consts::TAU;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::Matrix4;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type Vec2 = [C64; 2];

pub const LIGHT_VACUUM_PSD: f64 = 0.25;
pub const OSCILLATOR_VACUUM_VARIANCE: f64 = 0.5;
pub const SEPARABILITY_THRESHOLD: f64 = 1.0;

pub fn hz_to_rad(f: f64) -> f64 {
    f * TAU
}

pub fn rad_to_hz(w: f64) -> f64 {
    w / TAU
}

pub(crate) const fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

pub(crate) const I: C64 = C64::new(0.0, 1.0);

/// 2×2 complex matrix acting on a quadrature pair `(X, P)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat2(pub [[C64; 2]; 2]);

impl Mat2 {
    pub const ZERO: Mat2 = Mat2([[c(0.0), c(0.0)], [c(0.0), c(0.0)]]);
    pub const IDENTITY: Mat2 = Mat2([[c(1.0), c(0.0)], [c(0.0), c(1.0)]]);

    pub fn new(a: C64, b: C64, cc: C64, d: C64) -> Self {
        Mat2([[a, b], [cc, d]])
    }

    pub fn real(a: f64, b: f64, cc: f64, d: f64) -> Self {
        Mat2([[c(a), c(b)], [c(cc), c(d)]])
    }

    pub fn diag(a: C64, d: C64) -> Self {
        Mat2([[a, c(0.0)], [c(0.0), d]])
    }

    pub fn get(&self, r: usize, col: usize) -> C64 {
        self.0[r][col]
    }

    pub fn det(&self) -> C64 {
        self.0[0][0] * self.0[1][1] - self.0[0][1] * self.0[1][0]
    }

    pub fn inverse(&self) -> Option<Mat2> {
        let det = self.det();
        if det.norm() == 0.0 || !det.is_finite() {
            return None;
        }
        let inv = 1.0 / det;
        let m = &self.0;
        Some(Mat2([
            [m[1][1] * inv, -m[0][1] * inv],
            [-m[1][0] * inv, m[0][0] * inv],
        ]))
    }

    pub fn transpose(&self) -> Mat2 {
        let m = &self.0;
        Mat2([[m[0][0], m[1][0]], [m[0][1], m[1][1]]])
    }

    pub fn scale(&self, s: C64) -> Mat2 {
        let m = &self.0;
        Mat2([[m[0][0] * s, m[0][1] * s], [m[1][0] * s, m[1][1] * s]])
    }

    pub fn scale_re(&self, s: f64) -> Mat2 {
        self.scale(c(s))
    }

    pub fn apply(&self, v: Vec2) -> Vec2 {
        let m = &self.0;
        [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
    }

    /// Row vector times matrix.
    pub fn left_apply(&self, row: Vec2) -> Vec2 {
        let m = &self.0;
        [row[0] * m[0][0] + row[1] * m[1][0], row[0] * m[0][1] + row[1] * m[1][1]]
    }

    pub fn row(&self, r: usize) -> Vec2 {
        self.0[r]
    }

    pub fn col(&self, k: usize) -> Vec2 {
        [self.0[0][k], self.0[1][k]]
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|z| z.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Mat2) -> f64 {
        self.0
            .iter()
            .flatten()
            .zip(other.0.iter().flatten())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

impl Mul for Mat2 {
    type Output = Mat2;
    fn mul(self, rhs: Mat2) -> Mat2 {
        let a = &self.0;
        let b = &rhs.0;
        let mut out = [[c(0.0); 2]; 2];
        for (r, row) in out.iter_mut().enumerate() {
            for (k, slot) in row.iter_mut().enumerate() {
                *slot = a[r][0] * b[0][k] + a[r][1] * b[1][k];
            }
        }
        Mat2(out)
    }
}

impl Add for Mat2 {
    type Output = Mat2;
    fn add(self, rhs: Mat2) -> Mat2 {
        let a = &self.0;
        let b = &rhs.0;
        Mat2([
            [a[0][0] + b[0][0], a[0][1] + b[0][1]],
            [a[1][0] + b[1][0], a[1][1] + b[1][1]],
        ])
    }
}

impl Sub for Mat2 {
    type Output = Mat2;
    fn sub(self, rhs: Mat2) -> Mat2 {
        self + (-rhs)
    }
}

impl Neg for Mat2 {
    type Output = Mat2;
    fn neg(self) -> Mat2 {
        self.scale_re(-1.0)
    }
}

/// Quadrature rotation `[[cos α, -sin α], [sin α, cos α]]`.
pub fn rotation_matrix(alpha: f64) -> Mat2 {
    let (s, co) = alpha.sin_cos();
    Mat2::real(co, -s, s, co)
}

/// Beam-splitter loss: `√ν·signal + √(1-ν)·vacuum`.
pub fn mix_loss(signal: Vec2, vacuum: Vec2, transmission: f64) -> Result<Vec2> {
    check_unit_interval("transmission", transmission)?;
    let t = transmission.sqrt();
    let r = (1.0 - transmission).sqrt();
    Ok([signal[0] * t + vacuum[0] * r, signal[1] * t + vacuum[1] * r])
}

pub(crate) fn check_unit_interval(name: &'static str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::invalid(name, format!("{v} outside [0, 1]")));
    }
    Ok(())
}

pub(crate) fn check_finite(name: &'static str, v: f64) -> Result<()> {
    if !v.is_finite() {
        return Err(Error::invalid(name, "not finite"));
    }
    Ok(())
}

pub(crate) fn check_positive(name: &'static str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::invalid(name, format!("{v} must be positive")));
    }
    Ok(())
}

pub(crate) fn check_non_negative(name: &'static str, v: f64) -> Result<()> {
    if !(v >= 0.0 && v.is_finite()) {
        return Err(Error::invalid(name, format!("{v} must be non-negative")));
    }
    Ok(())
}

/// Noise inputs of the chain, in the fixed order used by the transfer matrix columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InputChannel {
    SpinForceX,
    SpinForceP,
    MechForce,
    SpinLightX,
    SpinLightP,
    LinkLossX,
    LinkLossP,
    CavityLossX,
    CavityLossP,
    DetectionLossX,
    DetectionLossP,
}

impl InputChannel {
    pub const COUNT: usize = 11;
    pub const ALL: [InputChannel; 11] = [
        InputChannel::SpinForceX,
        InputChannel::SpinForceP,
        InputChannel::MechForce,
        InputChannel::SpinLightX,
        InputChannel::SpinLightP,
        InputChannel::LinkLossX,
        InputChannel::LinkLossP,
        InputChannel::CavityLossX,
        InputChannel::CavityLossP,
        InputChannel::DetectionLossX,
        InputChannel::DetectionLossP,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            InputChannel::SpinForceX => "F_S^X",
            InputChannel::SpinForceP => "F_S^P",
            InputChannel::MechForce => "F_M",
            InputChannel::SpinLightX => "X_LS^in",
            InputChannel::SpinLightP => "P_LS^in",
            InputChannel::LinkLossX => "X_Lnu",
            InputChannel::LinkLossP => "P_Lnu",
            InputChannel::CavityLossX => "X_Lex",
            InputChannel::CavityLossP => "P_Lex",
            InputChannel::DetectionLossX => "X_Leta",
            InputChannel::DetectionLossP => "P_Leta",
        }
    }

    pub fn is_light(self) -> bool {
        !matches!(
            self,
            InputChannel::SpinForceX | InputChannel::SpinForceP | InputChannel::MechForce
        )
    }
}

impl fmt::Display for InputChannel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Observables of the chain, in the fixed order used by the transfer matrix rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OutputChannel {
    MechX,
    MechP,
    SpinX,
    SpinP,
    Photocurrent,
}

impl OutputChannel {
    pub const COUNT: usize = 5;
    pub const ALL: [OutputChannel; 5] = [
        OutputChannel::MechX,
        OutputChannel::MechP,
        OutputChannel::SpinX,
        OutputChannel::SpinP,
        OutputChannel::Photocurrent,
    ];
    /// The four tracked oscillator quadratures.
    pub const OSCILLATORS: [OutputChannel; 4] = [
        OutputChannel::MechX,
        OutputChannel::MechP,
        OutputChannel::SpinX,
        OutputChannel::SpinP,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            OutputChannel::MechX => "X_M",
            OutputChannel::MechP => "P_M",
            OutputChannel::SpinX => "X_S",
            OutputChannel::SpinP => "P_S",
            OutputChannel::Photocurrent => "P_L^meas",
        }
    }
}

impl fmt::Display for OutputChannel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// A region of the frequency axis that received extra grid points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Refinement {
    pub center: f64,
    pub width: f64,
}

/// Ordered angular-frequency grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    points: Vec<f64>,
    refinements: Vec<Refinement>,
}

impl FrequencyGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.iter().any(|w| !w.is_finite()) {
            return Err(Error::invalid("grid", "non-finite frequency"));
        }
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("grid", "frequencies must be strictly increasing"));
        }
        Ok(FrequencyGrid {
            points,
            refinements: Vec::new(),
        })
    }

    pub fn uniform(start: f64, stop: f64, count: usize) -> Result<Self> {
        if count < 2 || !(stop > start) {
            return Err(Error::invalid("grid", "need count >= 2 and stop > start"));
        }
        let step = (stop - start) / (count - 1) as f64;
        Self::new((0..count).map(|k| start + step * k as f64).collect())
    }

    /// Uniform base grid plus dense points around each refinement center.
    pub fn refined(
        start: f64,
        stop: f64,
        count: usize,
        refinements: &[Refinement],
        per_width: usize,
    ) -> Result<Self> {
        let mut pts: Vec<f64> = Self::uniform(start, stop, count)?.points;
        for r in refinements {
            if !(r.width > 0.0) {
                return Err(Error::invalid("grid", "refinement width must be positive"));
            }
            let lo = (r.center - 5.0 * r.width).max(start);
            let hi = (r.center + 5.0 * r.width).min(stop);
            if hi > lo {
                let n = (10 * per_width).max(2);
                let step = (hi - lo) / n as f64;
                pts.extend((0..=n).map(|k| lo + step * k as f64));
            }
        }
        pts.sort_by(f64::total_cmp);
        pts.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs().max(1.0));
        let mut grid = Self::new(pts)?;
        grid.refinements = refinements.to_vec();
        Ok(grid)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn refinements(&self) -> &[Refinement] {
        &self.refinements
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        let n = self.points.len();
        (0..n).all(|k| (self.points[k] + self.points[n - 1 - k]).abs() <= tol)
    }
}

/// Real symmetric covariance of `(X_M, P_M, X_S, P_S)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovarianceMatrix4(pub Matrix4<f64>);

impl CovarianceMatrix4 {
    pub fn zeros() -> Self {
        CovarianceMatrix4(Matrix4::zeros())
    }

    pub fn vacuum() -> Self {
        CovarianceMatrix4(Matrix4::identity() * OSCILLATOR_VACUUM_VARIANCE)
    }

    pub fn from_rows(rows: [[f64; 4]; 4]) -> Self {
        CovarianceMatrix4(Matrix4::from_fn(|r, c| rows[r][c]))
    }

    pub fn rows(&self) -> [[f64; 4]; 4] {
        let mut out = [[0.0; 4]; 4];
        for (r, row) in out.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = self.0[(r, c)];
            }
        }
        out
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.0[(r, c)]
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn symmetrized(&self) -> Self {
        CovarianceMatrix4((self.0 + self.0.transpose()) * 0.5)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.symmetrized()
            .0
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        (self.0 - other.0).abs().max()
    }
}

impl Add for CovarianceMatrix4 {
    type Output = CovarianceMatrix4;
    fn add(self, rhs: Self) -> Self {
        CovarianceMatrix4(self.0 + rhs.0)
    }
}

impl Sub for CovarianceMatrix4 {
    type Output = CovarianceMatrix4;
    fn sub(self, rhs: Self) -> Self {
        CovarianceMatrix4(self.0 - rhs.0)
    }
}

impl Serialize for CovarianceMatrix4 {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for CovarianceMatrix4 {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        <[[f64; 4]; 4]>::deserialize(d).map(CovarianceMatrix4::from_rows)
    }
}

/// Per-channel symmetrized PSDs of the eleven inputs without broadband spin noise.
///
/// Spin forces carry `γ_S0 (n_S + 1/2)` each, the mechanical force `2 γ_M0 (n_M + 1/2)`,
/// every light port `1/4`.
pub fn vacuum_input_psd(
    spin_linewidth: f64,
    spin_occupancy: f64,
    mech_linewidth: f64,
    mech_occupancy: f64,
) -> [f64; InputChannel::COUNT] {
    let mut out = [LIGHT_VACUUM_PSD; InputChannel::COUNT];
    out[InputChannel::SpinForceX.index()] = spin_linewidth * (spin_occupancy + 0.5);
    out[InputChannel::SpinForceP.index()] = spin_linewidth * (spin_occupancy + 0.5);
    out[InputChannel::MechForce.index()] = 2.0 * mech_linewidth * (mech_occupancy + 0.5);
    out
}
