//! Local linear quantile regression on the rescaled time grid, jackknife
//! debiasing, and the scalar curves `m̂ = cᵀθ̃`, `m̂' = cᵀθ̃'`.

use crate::check_loss::{solve, CheckLossProblem, SolverOptions};
use crate::error::{Error, Result};
use crate::kernel::KernelId;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// One series: `yᵢ` observed with covariates `xᵢ` at time `i/n`, `i = 1..n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionSample {
    y: Vec<f64>,
    /// Row-major `n×p`.
    x: Vec<f64>,
    p: usize,
}

impl RegressionSample {
    pub const MIN_LEN: usize = 10;

    pub fn new(y: Vec<f64>, x: Vec<f64>, p: usize) -> Result<Self> {
        let n = y.len();
        if p == 0 {
            return Err(Error::InvalidInput("at least one covariate column is required".into()));
        }
        if n < Self::MIN_LEN {
            return Err(Error::InvalidInput(format!("need at least {} observations, got {n}", Self::MIN_LEN)));
        }
        if x.len() != n * p {
            return Err(Error::InvalidInput(format!("covariate matrix has {} entries, expected {}", x.len(), n * p)));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite response at row {}", i + 1)));
        }
        if let Some(k) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite covariate at row {}", k / p + 1)));
        }
        Ok(RegressionSample { y, x, p })
    }

    /// Sample with the all-ones design, i.e. plain quantile curves.
    pub fn intercept_only(y: Vec<f64>) -> Result<Self> {
        let n = y.len();
        Self::new(y, vec![1.0; n], 1)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    /// Covariates of row `i` (zero based, observed at `(i+1)/n`).
    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }

    #[inline]
    pub fn time(&self, i: usize) -> f64 {
        (i + 1) as f64 / self.n() as f64
    }

    /// Zero-based rows whose time lies in `[t − b, t + b]`.
    pub fn window(&self, t: f64, b: f64) -> std::ops::Range<usize> {
        let n = self.n() as f64;
        // the slack absorbs rounding in (t ± b)·n at exact window edges
        let lo = (((t - b) * n - 1e-9).ceil() - 1.0).max(0.0) as usize;
        let hi = ((t + b) * n + 1e-9).floor().clamp(0.0, n) as usize;
        lo.min(hi)..hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantileFitConfig {
    pub tau: f64,
    pub bandwidth: f64,
    pub kernel: KernelId,
    /// Number of grid intervals `G`; `None` means `G = n`.
    pub grid_size: Option<usize>,
    pub solver_tol: f64,
    pub solver_max_iter: usize,
}

impl QuantileFitConfig {
    pub fn new(tau: f64, bandwidth: f64) -> Self {
        QuantileFitConfig {
            tau,
            bandwidth,
            kernel: KernelId::default(),
            grid_size: None,
            solver_tol: 1e-8,
            solver_max_iter: 200,
        }
    }

    pub fn with_bandwidth(self, bandwidth: f64) -> Self {
        QuantileFitConfig { bandwidth, ..self }
    }

    pub fn validate(&self, sample: &RegressionSample) -> Result<()> {
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::InvalidInput(format!("tau must lie in (0, 1), got {}", self.tau)));
        }
        if !(self.bandwidth > 0.0 && self.bandwidth < 1.0) {
            return Err(Error::InvalidInput(format!("bandwidth must lie in (0, 1), got {}", self.bandwidth)));
        }
        if self.bandwidth * (sample.n() as f64) < 2.0 * sample.p() as f64 {
            return Err(Error::InvalidInput(format!(
                "bandwidth {} leaves fewer than {} points per window at n = {}",
                self.bandwidth,
                2 * sample.p(),
                sample.n()
            )));
        }
        if self.grid_size == Some(0) {
            return Err(Error::InvalidInput("grid size must be positive".into()));
        }
        Ok(())
    }

    fn solver(&self) -> SolverOptions {
        SolverOptions { tol: self.solver_tol, max_iter: self.solver_max_iter }
    }

    pub fn grid(&self, n: usize) -> Vec<f64> {
        let g = self.grid_size.unwrap_or(n);
        (0..=g).map(|j| j as f64 / g as f64).collect()
    }
}

/// `θ̂(t)` and `θ̂'(t)` on an evaluation grid, each `G×p` row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalLinearFit {
    pub grid: Vec<f64>,
    pub theta0: Vec<f64>,
    pub theta1: Vec<f64>,
    pub p: usize,
    pub bandwidth: f64,
}

impl LocalLinearFit {
    pub fn theta0_at(&self, j: usize) -> &[f64] {
        &self.theta0[j * self.p..(j + 1) * self.p]
    }

    pub fn theta1_at(&self, j: usize) -> &[f64] {
        &self.theta1[j * self.p..(j + 1) * self.p]
    }

    /// `θ̂(t)` linearly interpolated between grid points.
    pub fn theta0_interp(&self, t: f64) -> Vec<f64> {
        let (j, w) = bracket(&self.grid, t);
        let a = self.theta0_at(j);
        if w == 0.0 {
            return a.to_vec();
        }
        let b = self.theta0_at(j + 1);
        a.iter().zip(b).map(|(u, v)| u + w * (v - u)).collect()
    }
}

/// Index `j` and weight `w` with `t ≈ (1−w)·grid[j] + w·grid[j+1]`, clamped.
pub(crate) fn bracket(grid: &[f64], t: f64) -> (usize, f64) {
    let n = grid.len();
    if n == 1 || t <= grid[0] {
        return (0, 0.0);
    }
    if t >= grid[n - 1] {
        return (n - 1, 0.0);
    }
    let k = grid.partition_point(|v| *v <= t);
    let j = k - 1;
    (j, (t - grid[j]) / (grid[j + 1] - grid[j]))
}

/// Bias-corrected fit `θ̃ = 2θ̂^(b/√2) − θ̂^(b)` and the combined curves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DebiasedFit {
    pub grid: Vec<f64>,
    pub theta_tilde: Vec<f64>,
    pub theta_tilde_prime: Vec<f64>,
    pub m_hat: Vec<f64>,
    pub m_hat_prime: Vec<f64>,
    pub c: Vec<f64>,
    pub p: usize,
    pub bandwidth: f64,
    /// Whether `m̂` is strictly monotone on the grid.
    pub monotone: bool,
}

impl DebiasedFit {
    /// Curve built directly from values, e.g. an exact truth in tests.
    pub fn from_curve(grid: Vec<f64>, m_hat: Vec<f64>, m_hat_prime: Vec<f64>) -> Self {
        let monotone = strictly_monotone(&m_hat);
        DebiasedFit {
            theta_tilde: m_hat.clone(),
            theta_tilde_prime: m_hat_prime.clone(),
            grid,
            m_hat,
            m_hat_prime,
            c: vec![1.0],
            p: 1,
            bandwidth: f64::NAN,
            monotone,
        }
    }

    pub fn m_at(&self, t: f64) -> f64 {
        crate::linalg::interp(&self.grid, &self.m_hat, t)
    }

    pub fn m_prime_at(&self, t: f64) -> f64 {
        crate::linalg::interp(&self.grid, &self.m_hat_prime, t)
    }
}

fn strictly_monotone(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] > w[0]) || v.windows(2).all(|w| w[1] < w[0])
}

struct LocalProblem {
    z: Vec<f64>,
    y: Vec<f64>,
    w: Vec<f64>,
}

/// Stacked design `[x, x·(i/n − t)/b]` restricted to the kernel window.
/// The slope block is scaled by `1/b` to keep the normal matrix well
/// conditioned; the caller undoes the scaling.
fn local_problem(sample: &RegressionSample, kernel: KernelId, b: f64, t: f64) -> LocalProblem {
    let p = sample.p();
    let range = sample.window(t, b);
    let mut out = LocalProblem {
        z: Vec::with_capacity(range.len() * 2 * p),
        y: Vec::with_capacity(range.len()),
        w: Vec::with_capacity(range.len()),
    };
    for i in range {
        let u = (sample.time(i) - t) / b;
        let k = kernel.eval(u);
        if k <= 0.0 {
            continue;
        }
        let x = sample.row(i);
        out.z.extend_from_slice(x);
        out.z.extend(x.iter().map(|v| v * u));
        out.y.push(sample.y()[i]);
        out.w.push(k);
    }
    out
}

fn attach_t(e: Error, t: f64) -> Error {
    match e {
        Error::InsufficientSupport { count, needed, .. } => Error::InsufficientSupport { t, count, needed },
        Error::RankDeficient { condition, .. } => Error::RankDeficient { t, condition },
        Error::NoConvergence { iterations, gap, .. } => Error::NoConvergence { t, iterations, gap },
        other => other,
    }
}

/// Local linear quantile fit at `t`; returns `(θ̂(t), θ̂'(t))`.
pub fn local_quantile_fit(sample: &RegressionSample, cfg: &QuantileFitConfig, t: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    fit_at(sample, cfg, t, None).map(|(b0, b1, _)| (b0, b1))
}

/// Returns `(β₀, β₁, γ)` where `γ` is the raw solution in scaled coordinates.
fn fit_at(
    sample: &RegressionSample,
    cfg: &QuantileFitConfig,
    t: f64,
    warm: Option<&[f64]>,
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidInput(format!("evaluation time {t} outside [0, 1]")));
    }
    let p = sample.p();
    let b = cfg.bandwidth;
    let lp = local_problem(sample, cfg.kernel, b, t);
    if lp.y.len() < 2 * p {
        return Err(Error::InsufficientSupport { t, count: lp.y.len(), needed: 2 * p });
    }
    let problem = CheckLossProblem { z: &lp.z, y: &lp.y, w: &lp.w, q: 2 * p, tau: cfg.tau };
    let sol = solve(&problem, warm, cfg.solver()).map_err(|e| attach_t(e, t))?;
    let beta0 = sol.beta[..p].to_vec();
    let beta1 = sol.beta[p..].iter().map(|v| v / b).collect();
    Ok((beta0, beta1, sol.beta))
}

/// Grid points handled by one warm-started sweep.
const CHUNK: usize = 128;

/// `θ̂` and `θ̂'` at `t_j = j/G`, `j = 0..G`. Near the ends the kernel
/// window is one sided.
pub fn fit_curve_grid(sample: &RegressionSample, cfg: &QuantileFitConfig) -> Result<LocalLinearFit> {
    cfg.validate(sample)?;
    let grid = cfg.grid(sample.n());
    let p = sample.p();
    let b = cfg.bandwidth;
    let chunks: Vec<&[f64]> = grid.chunks(CHUNK).collect();
    let parts: Vec<Result<Vec<(Vec<f64>, Vec<f64>)>>> = chunks
        .par_iter()
        .map(|ts| {
            let mut out = Vec::with_capacity(ts.len());
            let mut prev: Option<(f64, Vec<f64>)> = None;
            for &t in ts.iter() {
                let warm = prev.as_ref().map(|(t0, g)| {
                    // move the local line to the new centre: β₀ += β₁·Δt
                    let mut g = g.clone();
                    for a in 0..p {
                        g[a] += g[p + a] * (t - t0) / b;
                    }
                    g
                });
                let (b0, b1, raw) = fit_at(sample, cfg, t, warm.as_deref())?;
                prev = Some((t, raw));
                out.push((b0, b1));
            }
            Ok(out)
        })
        .collect();
    let mut theta0 = Vec::with_capacity(grid.len() * p);
    let mut theta1 = Vec::with_capacity(grid.len() * p);
    for part in parts {
        for (b0, b1) in part? {
            theta0.extend(b0);
            theta1.extend(b1);
        }
    }
    Ok(LocalLinearFit { grid, theta0, theta1, p, bandwidth: b })
}

/// Jackknife combination of the fits at `b` and `b/√2`.
pub fn debias(fit_b: &LocalLinearFit, fit_b_sqrt2: &LocalLinearFit, c: &[f64]) -> Result<DebiasedFit> {
    if fit_b.grid != fit_b_sqrt2.grid || fit_b.p != fit_b_sqrt2.p || c.len() != fit_b.p {
        return Err(Error::GridMismatch);
    }
    let p = fit_b.p;
    let combine = |fine: &[f64], coarse: &[f64]| -> Vec<f64> {
        fine.iter().zip(coarse).map(|(f, g)| 2.0 * f - g).collect()
    };
    let theta_tilde = combine(&fit_b_sqrt2.theta0, &fit_b.theta0);
    let theta_tilde_prime = combine(&fit_b_sqrt2.theta1, &fit_b.theta1);
    let project = |m: &[f64]| -> Vec<f64> {
        m.chunks(p).map(|row| row.iter().zip(c).map(|(a, b)| a * b).sum()).collect()
    };
    let m_hat = project(&theta_tilde);
    let m_hat_prime = project(&theta_tilde_prime);
    Ok(DebiasedFit {
        grid: fit_b.grid.clone(),
        monotone: strictly_monotone(&m_hat),
        theta_tilde,
        theta_tilde_prime,
        m_hat,
        m_hat_prime,
        c: c.to_vec(),
        p,
        bandwidth: fit_b.bandwidth,
    })
}

/// Both fits and the debiased combination at bandwidth `cfg.bandwidth`.
pub fn fit_debiased(sample: &RegressionSample, cfg: &QuantileFitConfig, c: &[f64]) -> Result<(LocalLinearFit, DebiasedFit)> {
    let coarse = fit_curve_grid(sample, cfg)?;
    let fine = fit_curve_grid(sample, &cfg.with_bandwidth(cfg.bandwidth / std::f64::consts::SQRT_2))?;
    let debiased = debias(&coarse, &fine, c)?;
    Ok((coarse, debiased))
}
