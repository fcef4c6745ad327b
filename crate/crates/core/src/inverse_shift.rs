//! The inverse-derivative estimator
//!
//! ```text
//! ĝ(t) = (1/(N h)) Σ_{i=1..N} H((m̂(i/N) − t)/h)
//! ```
//!
//! its antiderivative `Ĝ`, curve inversion, and the shift estimates
//! `d̃ = m̂₂⁻¹(m̂₁(0))`, `d̂`, `â = m̂₁(0)`, `b̂ = m̂₁(1 − d̂)` with the
//! integration window `[â + η, b̂ − η]`.

use crate::error::{Error, Result, Warning};
use crate::kernel::KernelId;
use crate::linalg::{interp, linspace, trapezoid_uniform};
use crate::quantile_fit::DebiasedFit;
use serde::{Deserialize, Serialize};

/// Nodes of every value-grid integral in this module.
pub const VALUE_GRID_NODES: usize = 2000;

/// Nodes of the cumulative table behind `Ĝ`.
const ANTIDERIVATIVE_NODES: usize = 4001;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GHat {
    pub h: f64,
    pub n_riemann: usize,
    pub kernel: KernelId,
    /// `m̂(0)`, the lower limit of `Ĝ`.
    pub m0: f64,
    /// `m̂(i/N)`, `i = 1..N`, sorted ascending.
    sorted: Vec<f64>,
    /// `Ĝ` support grid and the cumulative integral of `ĝ` from its left end.
    table_x: Vec<f64>,
    table_cum: Vec<f64>,
}

impl GHat {
    /// Build `ĝ` from a fitted curve; `m̂(i/N)` is interpolated from the grid.
    pub fn new(curve: &DebiasedFit, h: f64, kernel: KernelId, n_riemann: usize) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidInput(format!("smoothing bandwidth h must be positive, got {h}")));
        }
        if n_riemann == 0 {
            return Err(Error::InvalidInput("Riemann resolution N must be positive".into()));
        }
        let values: Vec<f64> = (1..=n_riemann).map(|i| curve.m_at(i as f64 / n_riemann as f64)).collect();
        Ok(Self::from_values(values, curve.m_at(0.0), h, kernel))
    }

    /// `ĝ` from the curve values `m̂(i/N)` directly.
    pub fn from_values(mut values: Vec<f64>, m0: f64, h: f64, kernel: KernelId) -> Self {
        let n_riemann = values.len();
        values.sort_by(f64::total_cmp);
        let mut g = GHat { h, n_riemann, kernel, m0, sorted: values, table_x: Vec::new(), table_cum: Vec::new() };
        let lo = g.sorted[0].min(m0) - h;
        let hi = g.sorted[n_riemann - 1].max(m0) + h;
        let xs = linspace(lo, hi, ANTIDERIVATIVE_NODES);
        let dx = xs[1] - xs[0];
        let mut cum = Vec::with_capacity(xs.len());
        let mut acc = 0.0;
        let mut prev = g.eval(xs[0]);
        cum.push(0.0);
        for &x in &xs[1..] {
            let v = g.eval(x);
            acc += 0.5 * dx * (prev + v);
            prev = v;
            cum.push(acc);
        }
        g.table_x = xs;
        g.table_cum = cum;
        g
    }

    pub fn range(&self) -> (f64, f64) {
        (self.sorted[0], self.sorted[self.n_riemann - 1])
    }

    /// `ĝ(t)`; zero outside `[min m̂ − h, max m̂ + h]`.
    pub fn eval(&self, t: f64) -> f64 {
        let lo = self.sorted.partition_point(|v| *v < t - self.h);
        let hi = self.sorted.partition_point(|v| *v <= t + self.h);
        let sum: f64 = self.sorted[lo..hi].iter().map(|m| self.kernel.eval((m - t) / self.h)).sum();
        sum / (self.n_riemann as f64 * self.h)
    }

    /// `Ĝ(t) = ∫_{m̂(0)}^t ĝ`, negative for `t < m̂(0)`.
    pub fn big_g(&self, t: f64) -> f64 {
        interp(&self.table_x, &self.table_cum, t) - interp(&self.table_x, &self.table_cum, self.m0)
    }
}

/// `inf{t : m̂(t) ≥ u}` with linear interpolation between grid points,
/// clamped to `[0, 1]`. A warning is returned when `u` lies outside the
/// range of `m̂`.
pub fn invert_monotone(curve: &DebiasedFit, u: f64, series: usize) -> (f64, Option<Warning>) {
    let m = &curve.m_hat;
    let grid = &curve.grid;
    let max = m.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = m.iter().copied().fold(f64::INFINITY, f64::min);
    if u > max {
        return (1.0, Some(Warning::OutOfRange { series, value: u, clamped_to: 1.0 }));
    }
    if u < min {
        return (0.0, Some(Warning::OutOfRange { series, value: u, clamped_to: 0.0 }));
    }
    let j = m.iter().position(|v| *v >= u).expect("u ≤ max m̂");
    if j == 0 {
        return (grid[0], None);
    }
    let (m0, m1) = (m[j - 1], m[j]);
    let w = if m1 > m0 { (u - m0) / (m1 - m0) } else { 1.0 };
    (grid[j - 1] + w * (grid[j] - grid[j - 1]), None)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftEstimate {
    pub d_tilde: f64,
    pub d_hat: f64,
    pub a_hat: f64,
    pub b_hat: f64,
    pub eta: f64,
    pub window: (f64, f64),
    pub warnings: Vec<Warning>,
}

impl ShiftEstimate {
    /// `ŵ(t)`, the indicator of the closed window.
    pub fn weight(&self, t: f64) -> bool {
        self.window.0 <= t && t <= self.window.1
    }

    pub fn window_len(&self) -> f64 {
        self.window.1 - self.window.0
    }
}

/// Default `η = 1/log(n₁ + n₂)`.
pub fn default_eta(n1: usize, n2: usize) -> f64 {
    1.0 / ((n1 + n2) as f64).ln()
}

pub fn estimate_shift(curve1: &DebiasedFit, curve2: &DebiasedFit, g1: &GHat, g2: &GHat, eta: f64) -> Result<ShiftEstimate> {
    if !(eta > 0.0) {
        return Err(Error::InvalidInput(format!("eta must be positive, got {eta}")));
    }
    let mut warnings = Vec::new();
    let a_hat = curve1.m_at(0.0);
    let (d_tilde, w) = invert_monotone(curve2, a_hat, 2);
    warnings.extend(w);
    let upper = curve1.m_at((1.0 - d_tilde).clamp(0.0, 1.0));
    if !(upper > a_hat) {
        return Err(Error::EmptyWindow { lo: a_hat + eta, hi: upper - eta });
    }
    let xs = linspace(a_hat, upper, VALUE_GRID_NODES);
    let diff: Vec<f64> = xs.iter().map(|u| g2.big_g(*u) - g1.big_g(*u)).collect();
    let d_hat = (trapezoid_uniform(&diff, xs[1] - xs[0]) / (upper - a_hat)).clamp(-1.0, 1.0);
    let b_hat = curve1.m_at((1.0 - d_hat).clamp(0.0, 1.0));
    let window = (a_hat + eta, b_hat - eta);
    if window.0 >= window.1 {
        return Err(Error::EmptyWindow { lo: window.0, hi: window.1 });
    }
    Ok(ShiftEstimate { d_tilde, d_hat, a_hat, b_hat, eta, window, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn exact(f: impl Fn(f64) -> f64, g: usize) -> DebiasedFit {
        let grid: Vec<f64> = (0..=g).map(|j| j as f64 / g as f64).collect();
        let m = grid.iter().map(|t| f(*t)).collect();
        DebiasedFit::from_curve(grid.clone(), m, vec![0.0; g + 1])
    }

    #[test]
    fn ghat_identity_curve() {
        let c = exact(|t| t, 1000);
        let g = GHat::new(&c, 0.1, KernelId::Epanechnikov, 1000).unwrap();
        assert!((g.eval(0.5) - 1.0).abs() < 0.01);
        assert_eq!(g.eval(1.0 + 0.2), 0.0);
        let c2 = exact(|t| 2.0 * t, 1000);
        let g2 = GHat::new(&c2, 0.1, KernelId::Epanechnikov, 1000).unwrap();
        assert!((g2.eval(1.0) - 0.5).abs() < 0.01);
    }

    #[test]
    fn antiderivative_orientation() {
        let c = exact(|t| t, 1000);
        let g = GHat::new(&c, 0.02, KernelId::Epanechnikov, 1000).unwrap();
        assert_eq!(g.big_g(0.0), 0.0);
        assert!((g.big_g(0.7) - 0.7).abs() < 0.02);
        assert!(g.big_g(-0.01) < 0.0);
    }

    #[test]
    fn inversion() {
        let c = exact(|t| t, 100);
        assert_abs_diff_eq!(invert_monotone(&c, 0.3, 1).0, 0.3, epsilon = 1e-12);
        let (t, w) = invert_monotone(&c, 1.5, 1);
        assert_eq!(t, 1.0);
        assert!(matches!(w, Some(Warning::OutOfRange { .. })));
        let sq = exact(|t| t * t, 200);
        assert!((invert_monotone(&sq, 0.25, 1).0 - 0.5).abs() < 1.0 / 200.0);
    }

    #[test]
    fn shift_of_exact_curves() {
        let c1 = exact(|t| t, 2000);
        let c2 = exact(|t| t - 0.1, 2000);
        let g1 = GHat::new(&c1, 0.05, KernelId::Epanechnikov, 2000).unwrap();
        let g2 = GHat::new(&c2, 0.05, KernelId::Epanechnikov, 2000).unwrap();
        let se = estimate_shift(&c1, &c2, &g1, &g2, 0.1).unwrap();
        assert!((se.d_tilde - 0.1).abs() < 0.01);
        assert!((se.d_hat - 0.1).abs() < 0.01);
        assert!(se.a_hat.abs() < 0.01);
        assert!((se.b_hat - 0.9).abs() < 0.01);
        assert!(se.weight(se.a_hat + se.eta));
        assert!(!se.weight(se.a_hat + se.eta / 2.0));
    }

    #[test]
    fn identical_curves_have_no_shift() {
        let c = exact(|t| t + 0.5 * t * t, 500);
        let g = GHat::new(&c, 0.05, KernelId::Epanechnikov, 500).unwrap();
        let se = estimate_shift(&c, &c, &g, &g, 0.1).unwrap();
        assert_eq!(se.d_hat, 0.0);
        assert_eq!(se.b_hat, c.m_at(1.0));
    }

    #[test]
    fn empty_window() {
        let c = exact(|t| 0.1 * t, 100);
        let g = GHat::new(&c, 0.05, KernelId::Epanechnikov, 100).unwrap();
        assert!(matches!(estimate_shift(&c, &c, &g, &g, 0.2), Err(Error::EmptyWindow { .. })));
    }
}
