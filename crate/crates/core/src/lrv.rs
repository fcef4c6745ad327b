//! Long-run covariance estimates behind the bootstrap scale `M̂_c(t)`.
//!
//! `Σ̂(t)` is a kernel density type estimate of `E[f(0|·) x xᵀ]`, `V̂(t)` a
//! kernel average of window sums `Ξ̂ᵢ = Σ_{|j|≤M} ψ_τ(ê_{i+j}) x_{i+j}`, and
//! `M̂_c = (cᵀΣ̂⁻¹ V̂ Σ̂⁻¹c)^{1/2}`. The dependent-series path stacks both
//! series' window sums into a joint `V̂` and returns a 2×2 matrix root.

use crate::check_loss::psi;
use crate::error::{Error, Result};
use crate::kernel::KernelId;
use crate::linalg::{condition_number_sym, interp, psd_sqrt, symmetrize};
use crate::quantile_fit::{LocalLinearFit, RegressionSample};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, Normal};

/// Largest condition number accepted for `Σ̂` before inversion.
pub const MAX_SIGMA_CONDITION: f64 = 1e10;

/// Residuals `ê_k(k/n) = y_k − x_kᵀθ̂(k/n)` at each observation's own time.
pub fn own_time_residuals(sample: &RegressionSample, fit: &LocalLinearFit) -> Vec<f64> {
    (0..sample.n())
        .map(|k| {
            let theta = fit.theta0_interp(sample.time(k));
            sample.y()[k] - dot(sample.row(k), &theta)
        })
        .collect()
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `Σ̂(t) = (1/(n b w)) Σᵢ φ(êᵢ/w) xᵢxᵢᵀ K((i/n − t)/b)` with each residual
/// taken at its own time, as in `Ξ̂`. Residuals from the fit frozen at `t`
/// carry the misfit `xᵢᵀ(θ(i/n) − θ(t))`, which flattens the density
/// estimate whenever `θ` moves quickly inside the window.
pub fn sigma_hat(sample: &RegressionSample, residuals: &[f64], w: f64, b: f64, kernel: KernelId, t: f64) -> DMatrix<f64> {
    let p = sample.p();
    let phi = Normal::standard();
    let mut s = DMatrix::zeros(p, p);
    for i in sample.window(t, b) {
        let k = kernel.eval((sample.time(i) - t) / b);
        if k == 0.0 {
            continue;
        }
        let x = sample.row(i);
        let c = k * phi.pdf(residuals[i] / w);
        for a in 0..p {
            for d in 0..p {
                s[(a, d)] += c * x[a] * x[d];
            }
        }
    }
    s / (sample.n() as f64 * b * w)
}

/// Window sums `Σ_{|j|≤M} sᵢ₊ⱼ xᵢ₊ⱼ` for every 1-based `i` in
/// `M+1..=n−M`; other positions are `None`.
pub fn window_sums(sample: &RegressionSample, scores: &[f64], m: usize) -> Vec<Option<DVector<f64>>> {
    let n = sample.n();
    let p = sample.p();
    let mut out = vec![None; n];
    if n < 2 * m + 1 {
        return out;
    }
    // running sum over the window, zero-based centre c = i − 1
    let mut acc = DVector::zeros(p);
    for k in 0..=2 * m {
        acc += DVector::from_column_slice(sample.row(k)) * scores[k];
    }
    out[m] = Some(acc.clone());
    for c in m + 1..n - m {
        acc += DVector::from_column_slice(sample.row(c + m)) * scores[c + m];
        acc -= DVector::from_column_slice(sample.row(c - m - 1)) * scores[c - m - 1];
        out[c] = Some(acc.clone());
    }
    out
}

/// Scores `τ − 1(ê ≤ 0)`.
pub fn quantile_scores(residuals: &[f64], tau: f64) -> Vec<f64> {
    residuals.iter().map(|e| psi(tau, *e)).collect()
}

/// `Ξ̂ᵢ` for 1-based `i`.
pub fn xi_hat(sample: &RegressionSample, residuals: &[f64], tau: f64, m: usize, i: usize) -> Result<DVector<f64>> {
    let n = sample.n();
    if i < m + 1 || i + m > n {
        return Err(Error::IndexOutOfWindow { index: i, half_width: m, n });
    }
    let mut acc = DVector::zeros(sample.p());
    for k in i - 1 - m..i + m {
        acc += DVector::from_column_slice(sample.row(k)) * psi(tau, residuals[k]);
    }
    Ok(acc)
}

/// `(1/(n b)) Σᵢ K((i/n − t)/b) ΞᵢΞᵢᵀ/(2M+1)`, symmetrized, over the
/// positions where a window sum exists.
pub fn smoothed_outer(
    times: impl Fn(usize) -> f64,
    sums: &[Option<DVector<f64>>],
    m: usize,
    n_norm: f64,
    b: f64,
    kernel: KernelId,
    t: f64,
) -> DMatrix<f64> {
    let dim = sums.iter().flatten().next().map_or(0, |v| v.len());
    let mut acc = DMatrix::zeros(dim, dim);
    for (i, xi) in sums.iter().enumerate() {
        let Some(xi) = xi else { continue };
        let k = kernel.eval((times(i) - t) / b);
        if k != 0.0 {
            acc += xi * xi.transpose() * k;
        }
    }
    let mut v = acc / (n_norm * b * (2 * m + 1) as f64);
    symmetrize(&mut v);
    v
}

pub fn v_hat(sample: &RegressionSample, residuals: &[f64], tau: f64, m: usize, b: f64, kernel: KernelId, t: f64) -> DMatrix<f64> {
    let sums = window_sums(sample, &quantile_scores(residuals, tau), m);
    smoothed_outer(|i| sample.time(i), &sums, m, sample.n() as f64, b, kernel, t)
}

fn checked_inverse(sigma: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
    let condition = condition_number_sym(sigma);
    if !(condition <= MAX_SIGMA_CONDITION) {
        return Err(Error::SingularSigma { t, condition });
    }
    sigma.clone().try_inverse().ok_or(Error::SingularSigma { t, condition })
}

/// `√(cᵀΣ̂⁻¹V̂Σ̂⁻¹c)`, with the quadratic form clipped at zero.
pub fn m_c_scalar(sigma: &DMatrix<f64>, v: &DMatrix<f64>, c: &[f64]) -> Result<f64> {
    m_c_scalar_at(sigma, v, c, f64::NAN)
}

fn m_c_scalar_at(sigma: &DMatrix<f64>, v: &DMatrix<f64>, c: &[f64], t: f64) -> Result<f64> {
    let inv = checked_inverse(sigma, t)?;
    let a = inv.transpose() * DVector::from_column_slice(c);
    Ok((a.transpose() * v * &a)[(0, 0)].max(0.0).sqrt())
}

/// Lower and upper end of the range where `V̂` is trusted.
pub fn trusted_range(b: f64, m: usize, n: usize) -> (f64, f64) {
    let pad = b + (m + 1) as f64 / n as f64;
    let (lo, hi) = (pad, 1.0 - pad);
    if lo > hi {
        (0.5, 0.5)
    } else {
        (lo, hi)
    }
}

/// Knots `t_lo`, interior grid points, `t_hi`.
fn knots(grid: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    let mut k = vec![lo];
    k.extend(grid.iter().copied().filter(|t| *t > lo && *t < hi));
    if hi > lo {
        k.push(hi);
    }
    k
}

/// `M̂_c` on a set of knots with constant extension outside `[t_lo, t_hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub knots: Vec<f64>,
    pub m_c: Vec<f64>,
    pub boundary: (f64, f64),
}

impl McEstimate {
    pub fn at(&self, t: f64) -> f64 {
        interp(&self.knots, &self.m_c, t)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        McEstimate { m_c: self.m_c.iter().map(|v| v * factor).collect(), ..self.clone() }
    }
}

/// Inputs shared by every `M̂_c` evaluation for one series.
#[derive(Debug, Clone, Copy)]
pub struct LrvSetup<'a> {
    pub sample: &'a RegressionSample,
    /// Undebiased fit at bandwidth `b`.
    pub fit: &'a LocalLinearFit,
    pub tau: f64,
    pub b: f64,
    pub m: usize,
    pub kernel: KernelId,
}

/// Precomputed residuals and `V̂` on the knots; only `Σ̂` depends on `w`.
#[derive(Debug, Clone)]
pub struct LrvTable {
    pub knots: Vec<f64>,
    pub boundary: (f64, f64),
    residuals: Vec<f64>,
    pub v: Vec<DMatrix<f64>>,
}

impl LrvTable {
    pub fn new(setup: &LrvSetup<'_>) -> Self {
        let sample = setup.sample;
        let boundary = trusted_range(setup.b, setup.m, sample.n());
        let knots = knots(&setup.fit.grid, boundary.0, boundary.1);
        let resid = own_time_residuals(sample, setup.fit);
        let sums = window_sums(sample, &quantile_scores(&resid, setup.tau), setup.m);
        let v = knots
            .iter()
            .map(|t| smoothed_outer(|i| sample.time(i), &sums, setup.m, sample.n() as f64, setup.b, setup.kernel, *t))
            .collect();
        LrvTable { knots, boundary, residuals: resid, v }
    }

    pub fn sigmas(&self, setup: &LrvSetup<'_>, w: f64) -> Vec<DMatrix<f64>> {
        self.knots
            .iter()
            .map(|t| sigma_hat(setup.sample, &self.residuals, w, setup.b, setup.kernel, *t))
            .collect()
    }

    pub fn m_c(&self, setup: &LrvSetup<'_>, w: f64, c: &[f64]) -> Result<McEstimate> {
        let sigmas = self.sigmas(setup, w);
        let m_c = self
            .knots
            .iter()
            .zip(sigmas.iter().zip(&self.v))
            .map(|(t, (s, v))| m_c_scalar_at(s, v, c, *t))
            .collect::<Result<Vec<_>>>()?;
        Ok(McEstimate { knots: self.knots.clone(), m_c, boundary: self.boundary })
    }
}

/// Full `M̂_c` curve for one series.
pub fn m_c_curve(setup: &LrvSetup<'_>, w: f64, c: &[f64]) -> Result<McEstimate> {
    LrvTable::new(setup).m_c(setup, w, c)
}

/// `⌊a/b⌋` for signed `a` and positive `b`.
fn floor_div(a: i64, b: i64) -> i64 {
    a.div_euclid(b)
}

/// Resampled window sum `Ξ̃_{i,s} = Σ_{|j|≤M} ψ(ê_{i+⌊j n_s/n₂⌋}) x_{i+⌊j n_s/n₂⌋}`
/// at 1-based centre `i`; `None` when the window leaves the series.
fn resampled_window(sample: &RegressionSample, scores: &[f64], m: usize, ns: usize, n2: usize, i: i64) -> Option<DVector<f64>> {
    let n = sample.n() as i64;
    let mut acc = DVector::zeros(sample.p());
    for j in -(m as i64)..=(m as i64) {
        let k = i + floor_div(j * ns as i64, n2 as i64);
        if k < 1 || k > n {
            return None;
        }
        let k = (k - 1) as usize;
        acc += DVector::from_column_slice(sample.row(k)) * scores[k];
    }
    Some(acc)
}

/// Stacked window sums `Ξ̃ᵢ = (Ξ̃_{⌊i n₁/n₂⌋,1}, Ξ̃_{i,2})` for `i = 1..n₂`.
pub fn joint_window_sums(
    s1: &RegressionSample,
    s2: &RegressionSample,
    resid1: &[f64],
    resid2: &[f64],
    tau: f64,
    m: usize,
) -> Result<Vec<Option<DVector<f64>>>> {
    let (n1, n2) = (s1.n(), s2.n());
    if n1 < n2 {
        return Err(Error::InvalidInput(format!("dependent path needs n1 >= n2, got {n1} < {n2}")));
    }
    let sc1 = quantile_scores(resid1, tau);
    let sc2 = quantile_scores(resid2, tau);
    let (p1, p2) = (s1.p(), s2.p());
    Ok((1..=n2 as i64)
        .map(|i| {
            let i1 = floor_div(i * n1 as i64, n2 as i64);
            let a = resampled_window(s1, &sc1, m, n1, n2, i1)?;
            let b = resampled_window(s2, &sc2, m, n2, n2, i)?;
            let mut v = DVector::zeros(p1 + p2);
            v.rows_mut(0, p1).copy_from(&a);
            v.rows_mut(p1, p2).copy_from(&b);
            Some(v)
        })
        .collect())
}

/// Joint `V̂(t) = (1/(n₂b₂)) Σᵢ K_{b₂}(i/n₂ − t) Ξ̃ᵢΞ̃ᵢᵀ/(2M+1)`.
#[allow(clippy::too_many_arguments)]
pub fn joint_v_hat(
    s1: &RegressionSample,
    s2: &RegressionSample,
    resid1: &[f64],
    resid2: &[f64],
    tau: f64,
    m: usize,
    b2: f64,
    kernel: KernelId,
    t: f64,
) -> Result<DMatrix<f64>> {
    let sums = joint_window_sums(s1, s2, resid1, resid2, tau, m)?;
    if sums.iter().all(Option::is_none) {
        return Err(Error::IndexOutOfWindow { index: 1, half_width: m, n: s2.n() });
    }
    Ok(smoothed_outer(|i| s2.time(i), &sums, m, s2.n() as f64, b2, kernel, t))
}

/// `(B V̂ Bᵀ)^{1/2}` with `B = blockdiag(c₁ᵀΣ̂₁⁻¹, c₂ᵀΣ̂₂⁻¹)`. Returns the
/// entries `(M₁₁, M₁₂, M₂₂)` and the number of clipped eigenvalues.
pub fn m_c_matrix(
    sigma1: &DMatrix<f64>,
    sigma2: &DMatrix<f64>,
    v_joint: &DMatrix<f64>,
    c1: &[f64],
    c2: &[f64],
) -> Result<([f64; 3], usize)> {
    m_c_matrix_at(sigma1, sigma2, v_joint, c1, c2, f64::NAN)
}

fn m_c_matrix_at(
    sigma1: &DMatrix<f64>,
    sigma2: &DMatrix<f64>,
    v_joint: &DMatrix<f64>,
    c1: &[f64],
    c2: &[f64],
    t: f64,
) -> Result<([f64; 3], usize)> {
    let (p1, p2) = (c1.len(), c2.len());
    let r1 = DVector::from_column_slice(c1).transpose() * checked_inverse(sigma1, t)?;
    let r2 = DVector::from_column_slice(c2).transpose() * checked_inverse(sigma2, t)?;
    let mut b = DMatrix::zeros(2, p1 + p2);
    b.view_mut((0, 0), (1, p1)).copy_from(&r1);
    b.view_mut((1, p1), (1, p2)).copy_from(&r2);
    let mut q = &b * v_joint * b.transpose();
    symmetrize(&mut q);
    let (root, clipped) = psd_sqrt(&q);
    Ok(([root[(0, 0)], 0.5 * (root[(0, 1)] + root[(1, 0)]), root[(1, 1)]], clipped))
}

/// The 2×2 scale matrix on knots, with constant extension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointMcEstimate {
    pub knots: Vec<f64>,
    /// `(M₁₁, M₁₂, M₂₂)` per knot.
    pub m_c_matrix: Vec<[f64; 3]>,
    pub boundary: (f64, f64),
    pub clipped: usize,
}

impl JointMcEstimate {
    /// Entry `(u, v)` (zero based) at `t`.
    pub fn entry(&self, u: usize, v: usize, t: f64) -> f64 {
        let idx = match (u.min(v), u.max(v)) {
            (0, 0) => 0,
            (0, 1) => 1,
            _ => 2,
        };
        let ys: Vec<f64> = self.m_c_matrix.iter().map(|m| m[idx]).collect();
        interp(&self.knots, &ys, t)
    }

    /// Curve of one entry as an `McEstimate`, for sharing the weight code.
    pub fn entry_curve(&self, u: usize, v: usize) -> McEstimate {
        let idx = match (u.min(v), u.max(v)) {
            (0, 0) => 0,
            (0, 1) => 1,
            _ => 2,
        };
        McEstimate {
            knots: self.knots.clone(),
            m_c: self.m_c_matrix.iter().map(|m| m[idx]).collect(),
            boundary: self.boundary,
        }
    }
}

/// Joint `M̂_c` matrix curve. The diagonal of `B V̂ Bᵀ` is taken from each
/// series' own scalar estimate (its bandwidth and trusted range), so the
/// matrix reduces to `diag(M̂_{c,1}, M̂_{c,2})` without cross dependence.
/// The cross term uses the stacked window sums on the common trusted range
/// and is extended as a constant outside it.
#[allow(clippy::too_many_arguments)]
pub fn joint_m_c_curve(
    setup1: &LrvSetup<'_>,
    setup2: &LrvSetup<'_>,
    w1: f64,
    w2: f64,
    m: usize,
    c1: &[f64],
    c2: &[f64],
    mc1: &McEstimate,
    mc2: &McEstimate,
) -> Result<JointMcEstimate> {
    let (s1, s2) = (setup1.sample, setup2.sample);
    let r1 = own_time_residuals(s1, setup1.fit);
    let r2 = own_time_residuals(s2, setup2.fit);
    let sums = joint_window_sums(s1, s2, &r1, &r2, setup1.tau, m)?;
    let pad = setup1.b.max(setup2.b) + (m + 1) as f64 / s2.n() as f64;
    let boundary = if pad < 1.0 - pad { (pad, 1.0 - pad) } else { (0.5, 0.5) };
    let cross_knots = knots(&setup2.fit.grid, boundary.0, boundary.1);
    let (p1, p2) = (c1.len(), c2.len());
    let mut cross = Vec::with_capacity(cross_knots.len());
    for &t in &cross_knots {
        let v = smoothed_outer(|i| s2.time(i), &sums, m, s2.n() as f64, setup2.b, setup2.kernel, t);
        let a = DVector::from_column_slice(c1).transpose() * checked_inverse(&sigma_hat(s1, &r1, w1, setup1.b, setup1.kernel, t), t)?;
        let b = DVector::from_column_slice(c2).transpose() * checked_inverse(&sigma_hat(s2, &r2, w2, setup2.b, setup2.kernel, t), t)?;
        cross.push((&a * v.view((0, p1), (p1, p2)) * b.transpose())[(0, 0)]);
    }
    let mut all: Vec<f64> = mc1.knots.iter().chain(&mc2.knots).chain(&cross_knots).copied().collect();
    all.sort_by(f64::total_cmp);
    all.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    let mut out = Vec::with_capacity(all.len());
    let mut clipped = 0;
    for &t in &all {
        let q12 = interp(&cross_knots, &cross, t);
        let q = DMatrix::from_row_slice(2, 2, &[mc1.at(t).powi(2), q12, q12, mc2.at(t).powi(2)]);
        let (root, k) = psd_sqrt(&q);
        clipped += k;
        out.push([root[(0, 0)], 0.5 * (root[(0, 1)] + root[(1, 0)]), root[(1, 1)]]);
    }
    let boundary = (mc1.boundary.0.min(mc2.boundary.0), mc1.boundary.1.max(mc2.boundary.1));
    Ok(JointMcEstimate { knots: all, m_c_matrix: out, boundary, clipped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn sample_with(y: Vec<f64>) -> RegressionSample {
        RegressionSample::intercept_only(y).unwrap()
    }

    #[test]
    fn xi_single_point_windows() {
        let s = RegressionSample::new(vec![0.0; 10], vec![2.0; 10], 1).unwrap();
        let mut resid = vec![1.0; 10];
        assert_abs_diff_eq!(xi_hat(&s, &resid, 0.5, 0, 3).unwrap()[0], 1.0);
        let s1 = sample_with(vec![0.0; 10]);
        resid[2] = -1.0;
        assert_abs_diff_eq!(xi_hat(&s1, &resid, 0.8, 0, 3).unwrap()[0], -0.2, epsilon = 1e-15);
        assert!(matches!(xi_hat(&s1, &resid, 0.5, 2, 2), Err(Error::IndexOutOfWindow { .. })));
        assert!(matches!(xi_hat(&s1, &resid, 0.5, 2, 9), Err(Error::IndexOutOfWindow { .. })));
    }

    #[test]
    fn running_window_sums_match_direct() {
        let y: Vec<f64> = (0..40).map(|i| ((i * 7919) % 13) as f64 - 6.0).collect();
        let x: Vec<f64> = (0..80).map(|k| 1.0 + (k % 5) as f64).collect();
        let s = RegressionSample::new(y.clone(), x, 2).unwrap();
        let sums = window_sums(&s, &quantile_scores(&y, 0.3), 3);
        for i in 1..=40 {
            match xi_hat(&s, &y, 0.3, 3, i) {
                Ok(direct) => {
                    let fast = sums[i - 1].as_ref().unwrap();
                    assert!((fast - direct).norm() < 1e-12);
                }
                Err(_) => assert!(sums[i - 1].is_none()),
            }
        }
    }

    #[test]
    fn scalar_m_c() {
        let s = DMatrix::from_element(1, 1, 0.4);
        let v = DMatrix::from_element(1, 1, 0.25);
        assert_abs_diff_eq!(m_c_scalar(&s, &v, &[1.0]).unwrap(), 1.25, epsilon = 1e-12);
        assert_eq!(m_c_scalar(&s, &v, &[0.0]).unwrap(), 0.0);
        let sing = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(m_c_scalar(&sing, &DMatrix::identity(2, 2), &[1.0, 1.0]), Err(Error::SingularSigma { .. })));
    }

    #[test]
    fn matrix_m_c_block_diagonal() {
        let s1 = DMatrix::from_element(1, 1, 0.5);
        let s2 = DMatrix::from_element(1, 1, 0.25);
        let v = DMatrix::from_row_slice(2, 2, &[0.25, 0.0, 0.0, 0.16]);
        let (m, clipped) = m_c_matrix(&s1, &s2, &v, &[1.0], &[1.0]).unwrap();
        assert_eq!(clipped, 0);
        assert_abs_diff_eq!(m[0], m_c_scalar(&s1, &DMatrix::from_element(1, 1, 0.25), &[1.0]).unwrap(), epsilon = 1e-12);
        assert_abs_diff_eq!(m[1], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m[2], 1.6, epsilon = 1e-12);
        let id = DMatrix::identity(2, 2);
        let (m, _) = m_c_matrix(&DMatrix::identity(1, 1), &DMatrix::identity(1, 1), &id, &[1.0], &[1.0]).unwrap();
        assert_abs_diff_eq!(m[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m[2], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn far_residuals_vanish() {
        let s = sample_with(vec![100.0; 50]);
        let fit = LocalLinearFit {
            grid: vec![0.0, 1.0],
            theta0: vec![0.0, 0.0],
            theta1: vec![0.0, 0.0],
            p: 1,
            bandwidth: 0.2,
        };
        let sig = sigma_hat(&s, &own_time_residuals(&s, &fit), 0.5, 0.2, KernelId::Epanechnikov, 0.5);
        assert!(sig[(0, 0)] <= 1e-20);
    }

    #[test]
    fn joint_sums_reduce_to_concatenation() {
        let y: Vec<f64> = (0..30).map(|i| (i as f64 * 0.7).sin()).collect();
        let z: Vec<f64> = (0..30).map(|i| (i as f64 * 0.3).cos()).collect();
        let s1 = sample_with(y.clone());
        let s2 = sample_with(z.clone());
        let joint = joint_window_sums(&s1, &s2, &y, &z, 0.5, 2).unwrap();
        let a = window_sums(&s1, &quantile_scores(&y, 0.5), 2);
        let b = window_sums(&s2, &quantile_scores(&z, 0.5), 2);
        for i in 0..30 {
            match (&joint[i], &a[i], &b[i]) {
                (Some(j), Some(u), Some(v)) => {
                    assert_eq!(j[0], u[0]);
                    assert_eq!(j[1], v[0]);
                }
                (None, _, _) => assert!(a[i].is_none() || b[i].is_none()),
                _ => panic!("joint window missing at {i}"),
            }
        }
    }

    #[test]
    fn trusted_range_collapses_to_midpoint() {
        assert_eq!(trusted_range(0.45, 5, 100), (0.5, 0.5));
        let (lo, hi) = trusted_range(0.2, 4, 100);
        assert_abs_diff_eq!(lo, 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(hi, 0.75, epsilon = 1e-15);
    }
}
