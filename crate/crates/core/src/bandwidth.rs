//! Tuning parameters: GCV for the pilot mean-regression bandwidth, the
//! quantile correction factor `C`, the SIT/SCB bandwidth rules, the rules of
//! thumb for `h` and `M`, and minimum-volatility selection of `w`.

use crate::error::{Error, Result};
use crate::kernel::KernelId;
use crate::linalg::{condition_number_sym, trapezoid};
use crate::lrv::{smoothed_outer, window_sums, McEstimate};
use crate::quantile_fit::RegressionSample;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TestMode {
    #[default]
    Sit,
    Scb,
}

impl std::str::FromStr for TestMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sit" => Ok(TestMode::Sit),
            "scb" => Ok(TestMode::Scb),
            other => Err(format!("unknown test mode '{other}' (expected sit or scb)")),
        }
    }
}

impl TestMode {
    pub fn name(self) -> &'static str {
        match self {
            TestMode::Sit => "sit",
            TestMode::Scb => "scb",
        }
    }
}

/// `{0.06, 0.08, …, 0.40}`.
pub fn default_b_candidates() -> Vec<f64> {
    (3..=20).map(|k| k as f64 * 0.02).collect()
}

/// `{0.05, 0.075, …, 0.35}`, to be multiplied by the residual scale.
pub fn default_w_multipliers() -> Vec<f64> {
    (2..=14).map(|k| k as f64 * 0.025).collect()
}

/// Default volatility window.
pub const VOLATILITY_WINDOW: usize = 5;

/// `⌊n^{1/3}⌋` without floating-point surprises at perfect cubes.
pub fn integer_cbrt(n: usize) -> usize {
    let mut r = (n as f64).cbrt().round() as usize;
    while r > 0 && r * r * r > n {
        r -= 1;
    }
    while (r + 1) * (r + 1) * (r + 1) <= n {
        r += 1;
    }
    r
}

/// `h = n^{−1/3}`.
pub fn default_h(n: usize) -> f64 {
    (n as f64).powf(-1.0 / 3.0)
}

/// `M = ⌊n^{1/3}⌋`.
pub fn default_m(n: usize) -> usize {
    integer_cbrt(n)
}

/// Factor applied to `b° = 2·C·b_mean`: `n^{−1/45}` for SIT, 1 for SCB.
pub fn mode_multiplier(n: usize, mode: TestMode) -> f64 {
    match mode {
        TestMode::Sit => (n as f64).powf(-1.0 / 45.0),
        TestMode::Scb => 1.0,
    }
}

/// Kernel-weighted least squares on `[x, x·(i/n − t)/b]`.
/// Returns the coefficient vector (slope block in scaled units) and the
/// inverse normal matrix, or `None` when the design is singular.
fn mean_system(sample: &RegressionSample, b: f64, kernel: KernelId, t: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let p = sample.p();
    let q = 2 * p;
    let mut a = DMatrix::<f64>::zeros(q, q);
    let mut rhs = vec![0.0; q];
    let mut count = 0;
    let mut z = vec![0.0; q];
    for i in sample.window(t, b) {
        let u = (sample.time(i) - t) / b;
        let k = kernel.eval(u);
        if k <= 0.0 {
            continue;
        }
        count += 1;
        let x = sample.row(i);
        z[..p].copy_from_slice(x);
        for (d, v) in z[p..].iter_mut().zip(x) {
            *d = v * u;
        }
        for r in 0..q {
            rhs[r] += k * z[r] * sample.y()[i];
            for c in 0..q {
                a[(r, c)] += k * z[r] * z[c];
            }
        }
    }
    if count < 2 {
        return Err(Error::InsufficientSupport { t, count, needed: 2 });
    }
    let condition = condition_number_sym(&a);
    if !(condition <= crate::check_loss::MAX_CONDITION) {
        return Err(Error::RankDeficient { t, condition });
    }
    let inv = a.try_inverse().ok_or(Error::RankDeficient { t, condition })?;
    let beta: Vec<f64> = (0..q).map(|r| (0..q).map(|c| inv[(r, c)] * rhs[c]).sum()).collect();
    Ok((beta, inv.as_slice().to_vec()))
}

/// Local linear mean fit at `t`: `(β₀(t), β₁(t))`.
pub fn local_linear_mean_fit(sample: &RegressionSample, b: f64, kernel: KernelId, t: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let p = sample.p();
    let (beta, _) = mean_system(sample, b, kernel, t)?;
    Ok((beta[..p].to_vec(), beta[p..].iter().map(|v| v / b).collect()))
}

/// Fitted values `Ŷᵢ` and hat-matrix diagonal `Dᵢᵢ` at every observation.
pub fn mean_fit_values(sample: &RegressionSample, b: f64, kernel: KernelId) -> Result<(Vec<f64>, Vec<f64>)> {
    let p = sample.p();
    let q = 2 * p;
    let k0 = kernel.eval(0.0);
    let mut fitted = Vec::with_capacity(sample.n());
    let mut diag = Vec::with_capacity(sample.n());
    for i in 0..sample.n() {
        let (beta, inv) = mean_system(sample, b, kernel, sample.time(i))?;
        let x = sample.row(i);
        fitted.push(x.iter().zip(&beta[..p]).map(|(a, c)| a * c).sum());
        // the evaluation row is [xᵢ, 0] and carries kernel weight K(0)
        let mut d = 0.0;
        for r in 0..p {
            for c in 0..p {
                d += x[r] * inv[c * q + r] * x[c];
            }
        }
        diag.push(d * k0);
    }
    Ok((fitted, diag))
}

/// `GCV(b) = n⁻¹‖Ŷ − Y‖² / (1 − tr(D)/n)²`.
pub fn gcv_value(sample: &RegressionSample, b: f64, kernel: KernelId) -> Result<f64> {
    let n = sample.n() as f64;
    let (fitted, diag) = mean_fit_values(sample, b, kernel)?;
    let rss: f64 = fitted.iter().zip(sample.y()).map(|(f, y)| (f - y).powi(2)).sum();
    let tr: f64 = diag.iter().sum();
    Ok((rss / n) / (1.0 - tr / n).powi(2))
}

/// Minimiser of GCV over the candidates; ties go to the smaller bandwidth.
/// Candidates whose fit is degenerate are skipped.
pub fn gcv_select(sample: &RegressionSample, candidates: &[f64], kernel: KernelId) -> Result<f64> {
    let mut sorted = candidates.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut best: Option<(f64, f64)> = None;
    for b in sorted {
        let Ok(v) = gcv_value(sample, b, kernel) else { continue };
        if !v.is_finite() {
            continue;
        }
        if best.is_none_or(|(_, bv)| v < bv) {
            best = Some((b, v));
        }
    }
    best.map(|(b, _)| b).ok_or(Error::AllCandidatesInfeasible)
}

/// `C = (num/den)^{1/5}`.
pub fn correction_factor(numerator: f64, denominator: f64) -> Result<f64> {
    if !(numerator > 0.0 && denominator > 0.0 && numerator.is_finite() && denominator.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "correction factor needs positive integrals, got {numerator} / {denominator}"
        )));
    }
    Ok((numerator / denominator).powf(0.2))
}

/// `∫₀¹ f` for a curve given on knots with constant extension.
pub fn integrate_extended(knots: &[f64], values: &[f64]) -> f64 {
    let mut xs = Vec::with_capacity(knots.len() + 2);
    let mut ys = Vec::with_capacity(knots.len() + 2);
    xs.push(0.0);
    ys.push(values[0]);
    for (k, v) in knots.iter().zip(values) {
        if *k > 0.0 && *k < 1.0 {
            xs.push(*k);
            ys.push(*v);
        }
    }
    xs.push(1.0);
    ys.push(values[values.len() - 1]);
    trapezoid(&xs, &ys)
}

/// `∫₀¹ tr(Σ̃⁻¹Λ̃Σ̃⁻¹)` for the mean regression at bandwidth `b`, evaluated
/// on the given knots: `Σ̃(t)` is the kernel average of `xxᵀ` and `Λ̃(t)` the
/// window-sum long-run covariance of `x·(mean residual)`.
pub fn mean_trace_integral(sample: &RegressionSample, b: f64, m: usize, kernel: KernelId, knots: &[f64]) -> Result<f64> {
    let (fitted, _) = mean_fit_values(sample, b, kernel)?;
    let resid: Vec<f64> = sample.y().iter().zip(&fitted).map(|(y, f)| y - f).collect();
    let sums = window_sums(sample, &resid, m);
    let p = sample.p();
    let n = sample.n() as f64;
    let mut traces = Vec::with_capacity(knots.len());
    for &t in knots {
        let lambda = smoothed_outer(|i| sample.time(i), &sums, m, n, b, kernel, t);
        let mut sigma = DMatrix::<f64>::zeros(p, p);
        for i in sample.window(t, b) {
            let k = kernel.eval((sample.time(i) - t) / b);
            let x = sample.row(i);
            for r in 0..p {
                for c in 0..p {
                    sigma[(r, c)] += k * x[r] * x[c];
                }
            }
        }
        sigma /= n * b;
        let condition = condition_number_sym(&sigma);
        if !(condition <= crate::lrv::MAX_SIGMA_CONDITION) {
            return Err(Error::SingularSigma { t, condition });
        }
        let inv = sigma.try_inverse().ok_or(Error::SingularSigma { t, condition })?;
        traces.push((&inv * lambda * &inv).trace());
    }
    Ok(integrate_extended(knots, &traces))
}

/// Minimum-volatility choice among `k` candidate curves evaluated on a
/// common grid `xs`. For each run of `u` consecutive candidates the
/// pointwise spread `(1/(u−1)) Σ_v (M_v(t) − mean_v M_v(t))²` is integrated
/// over `xs`; the candidate `l′ + ⌊u/2⌋` of the calmest run is returned
/// with its index. Ties go to the smallest `l′`.
pub fn min_volatility(candidates: &[f64], curves: &[Vec<f64>], xs: &[f64], u: usize) -> Result<(f64, usize)> {
    let k = candidates.len();
    if u < 2 || k < u || curves.len() != k {
        return Err(Error::TooFewCandidates { count: k.min(curves.len()), window: u });
    }
    let mut best: Option<(usize, f64)> = None;
    for l in 0..=k - u {
        let run = &curves[l..l + u];
        let spread: Vec<f64> = (0..xs.len())
            .map(|j| {
                let mean = run.iter().map(|c| c[j]).sum::<f64>() / u as f64;
                run.iter().map(|c| (c[j] - mean).powi(2)).sum::<f64>() / (u - 1) as f64
            })
            .collect();
        let ise = if xs.len() > 1 { trapezoid(xs, &spread) } else { spread[0] };
        if best.is_none_or(|(_, b)| ise < b) {
            best = Some((l, ise));
        }
    }
    let idx = best.expect("k ≥ u").0 + u / 2;
    Ok((candidates[idx], idx))
}

/// Minimum-volatility `w` from `M̂_c` curves computed at each candidate.
pub fn min_volatility_w(candidates: &[f64], m_c_curves: &[McEstimate], u: usize) -> Result<(f64, usize)> {
    let Some(first) = m_c_curves.first() else {
        return Err(Error::TooFewCandidates { count: 0, window: u });
    };
    let xs = &first.knots;
    let curves: Vec<Vec<f64>> = m_c_curves.iter().map(|c| xs.iter().map(|t| c.at(*t)).collect()).collect();
    min_volatility(candidates, &curves, xs, u)
}

/// Robust residual scale `1.4826·MAD`, falling back to the standard
/// deviation and then to 1.
pub fn residual_scale(residuals: &[f64]) -> f64 {
    let median = |v: &mut Vec<f64>| -> f64 {
        v.sort_by(f64::total_cmp);
        let n = v.len();
        if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        }
    };
    let mut r = residuals.to_vec();
    let med = median(&mut r);
    let mut dev: Vec<f64> = residuals.iter().map(|e| (e - med).abs()).collect();
    let mad = 1.4826 * median(&mut dev);
    if mad > 0.0 && mad.is_finite() {
        return mad;
    }
    let n = residuals.len() as f64;
    let mean = residuals.iter().sum::<f64>() / n;
    let sd = (residuals.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n).sqrt();
    if sd > 0.0 && sd.is_finite() {
        sd
    } else {
        1.0
    }
}

/// Every tuning value used by one series. The data-driven fields are `None`
/// when the bandwidth was given explicitly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningSelection {
    pub b_mean: Option<f64>,
    pub c_factor: Option<f64>,
    pub b_sit: Option<f64>,
    pub b_scb: Option<f64>,
    /// Bandwidth actually used for the mode being run.
    pub b: f64,
    pub h: f64,
    pub m: usize,
    pub w: f64,
    pub b_candidates: Vec<f64>,
    pub w_candidates: Vec<f64>,
}

impl TuningSelection {
    /// Rules of thumb once `b_mean` and `C` are known.
    pub fn from_rules(n: usize, b_mean: f64, c_factor: f64, mode: TestMode) -> Self {
        let b_scb = 2.0 * c_factor * b_mean;
        let b_sit = b_scb * mode_multiplier(n, TestMode::Sit);
        TuningSelection {
            b_mean: Some(b_mean),
            c_factor: Some(c_factor),
            b_sit: Some(b_sit),
            b_scb: Some(b_scb),
            b: match mode {
                TestMode::Sit => b_sit,
                TestMode::Scb => b_scb,
            },
            ..Self::fixed(n, f64::NAN)
        }
    }

    /// An explicitly supplied bandwidth with rule-of-thumb `h` and `M`.
    pub fn fixed(n: usize, b: f64) -> Self {
        TuningSelection {
            b_mean: None,
            c_factor: None,
            b_sit: None,
            b_scb: None,
            b,
            h: default_h(n),
            m: default_m(n),
            w: 0.0,
            b_candidates: default_b_candidates(),
            w_candidates: Vec::new(),
        }
    }
}
