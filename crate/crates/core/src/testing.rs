//! The integrated squared test (SIT) and the simultaneous confidence band
//! (SCB) test, both calibrated by a multiplier bootstrap of the Gaussian
//! processes
//!
//! ```text
//! Z_s(t) = Σⱼ W_s(j, t)·V_{j,s}
//! W_s(j, t) = 1/(n b N h²) Σᵢ M_c(i/N)·H'((m̂(i/N) − t)/h)·K̄((j/n − i/N)/b)
//! ```
//!
//! plus the end-to-end pipeline that runs tuning, fitting, shift estimation
//! and the chosen bootstrap on a pair of series.

use crate::bandwidth::{
    correction_factor, default_b_candidates, default_h, default_m, default_w_multipliers, gcv_select,
    integrate_extended, mean_trace_integral, min_volatility_w, residual_scale, TestMode, TuningSelection,
    VOLATILITY_WINDOW,
};
use crate::error::{Error, Result, ResultExt, Warning};
use crate::inverse_shift::{default_eta, estimate_shift, GHat, ShiftEstimate, VALUE_GRID_NODES};
use crate::kernel::{KernelConstants, KernelId};
use crate::linalg::{linspace, trapezoid_uniform};
use crate::lrv::{joint_m_c_curve, own_time_residuals, JointMcEstimate, LrvSetup, LrvTable, McEstimate};
use crate::quantile_fit::{fit_curve_grid, fit_debiased, DebiasedFit, LocalLinearFit, QuantileFitConfig, RegressionSample};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Dependence {
    #[default]
    Independent,
    Dependent,
}

impl Dependence {
    pub fn name(self) -> &'static str {
        match self {
            Dependence::Independent => "independent",
            Dependence::Dependent => "dependent",
        }
    }
}

/// Smallest `|m̂'|` accepted inside the band variance.
pub const MIN_DERIVATIVE: f64 = 1e-6;

/// Nodes of the window grid used by the bootstrap replicates.
pub const WINDOW_NODES: usize = 1000;

/// Replicates drawn per batch when materialising `Z`.
const BATCH: usize = 128;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestConfig {
    /// Bootstrap replicates `Q`.
    pub q_boot: usize,
    /// Level of the band stored in SCB results.
    pub alpha: f64,
    pub kernel: KernelId,
    pub h_kernel: KernelId,
    pub b: [Option<f64>; 2],
    pub h: [Option<f64>; 2],
    pub w: Option<f64>,
    pub m: Option<usize>,
    pub eta: Option<f64>,
    pub grid_size: Option<usize>,
    pub n_riemann: Option<usize>,
    pub window_nodes: usize,
    pub b_candidates: Vec<f64>,
    pub w_multipliers: Vec<f64>,
    pub volatility_window: usize,
    /// Upper limit for data-driven bandwidths.
    pub max_bandwidth: f64,
}

impl Default for TestConfig {
    fn default() -> Self {
        TestConfig {
            q_boot: 500,
            alpha: 0.05,
            kernel: KernelId::Epanechnikov,
            h_kernel: KernelId::Epanechnikov,
            b: [None, None],
            h: [None, None],
            w: None,
            m: None,
            eta: None,
            grid_size: None,
            n_riemann: None,
            window_nodes: WINDOW_NODES,
            b_candidates: default_b_candidates(),
            w_multipliers: default_w_multipliers(),
            volatility_window: VOLATILITY_WINDOW,
            max_bandwidth: 0.5,
        }
    }
}

impl TestConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidInput(msg));
        if self.q_boot == 0 {
            return bad("the number of bootstrap replicates must be positive".into());
        }
        if !(0.0..1.0).contains(&self.alpha) {
            return bad(format!("alpha must lie in [0, 1), got {}", self.alpha));
        }
        for b in self.b.iter().flatten() {
            if !(*b > 0.0 && *b < 1.0) {
                return bad(format!("bandwidth override {b} outside (0, 1)"));
            }
        }
        for h in self.h.iter().flatten() {
            if !(*h > 0.0) {
                return bad(format!("smoothing bandwidth override {h} must be positive"));
            }
        }
        if let Some(w) = self.w {
            if !(w > 0.0) {
                return bad(format!("w override {w} must be positive"));
            }
        }
        if let Some(eta) = self.eta {
            if !(eta > 0.0) {
                return bad(format!("eta override {eta} must be positive"));
            }
        }
        if self.window_nodes < 2 {
            return bad("the window grid needs at least two nodes".into());
        }
        if self.b_candidates.is_empty() {
            return bad("no bandwidth candidates".into());
        }
        if !(self.max_bandwidth > 0.0 && self.max_bandwidth < 1.0) {
            return bad(format!("max bandwidth {} outside (0, 1)", self.max_bandwidth));
        }
        Ok(())
    }
}

/// Everything estimated for one series.
#[derive(Debug, Clone)]
pub struct SeriesFit {
    pub tuning: TuningSelection,
    /// Undebiased fit at the final bandwidth.
    pub fit: LocalLinearFit,
    pub curve: DebiasedFit,
    pub ghat: GHat,
    pub mc: McEstimate,
    pub n: usize,
    pub n_riemann: usize,
}

/// Pilot bandwidth and correction factor: GCV `b_mean`, a pilot quantile fit
/// at `b_mean`, `w` by minimum volatility with `c = 1`, then
/// `C = (∫M₁ / ∫tr M̃)^{1/5}`.
fn pilot_tuning(sample: &RegressionSample, tau: f64, m: usize, cfg: &TestConfig) -> Result<(f64, f64)> {
    let b_mean = gcv_select(sample, &cfg.b_candidates, cfg.kernel).stage("bandwidth/gcv_select")?;
    let qcfg = QuantileFitConfig { kernel: cfg.kernel, grid_size: cfg.grid_size, ..QuantileFitConfig::new(tau, b_mean) };
    let pilot = fit_curve_grid(sample, &qcfg).stage("quantile_fit/pilot")?;
    let setup = LrvSetup { sample, fit: &pilot, tau, b: b_mean, m, kernel: cfg.kernel };
    let ones = vec![1.0; sample.p()];
    let (_, mc) = select_w(&setup, &ones, cfg).stage("bandwidth/pilot_w")?;
    let numerator = integrate_extended(&mc.knots, &mc.m_c);
    let denominator =
        mean_trace_integral(sample, b_mean, m, cfg.kernel, &mc.knots).stage("bandwidth/correction_factor")?;
    let c = correction_factor(numerator, denominator).stage("bandwidth/correction_factor")?;
    Ok((b_mean, c))
}

/// `w` by minimum volatility over `multiplier × scale(residuals)`, or the
/// override; returns `w` and `M̂_c` at that `w`.
fn select_w(setup: &LrvSetup<'_>, c: &[f64], cfg: &TestConfig) -> Result<(f64, McEstimate)> {
    let table = LrvTable::new(setup);
    if let Some(w) = cfg.w {
        return Ok((w, table.m_c(setup, w, c)?));
    }
    let scale = residual_scale(&own_time_residuals(setup.sample, setup.fit));
    let candidates: Vec<f64> = cfg.w_multipliers.iter().map(|k| k * scale).collect();
    let curves = candidates.iter().map(|w| table.m_c(setup, *w, c)).collect::<Result<Vec<_>>>()?;
    let (w, idx) = min_volatility_w(&candidates, &curves, cfg.volatility_window)?;
    Ok((w, curves.into_iter().nth(idx).expect("selected index exists")))
}

/// Tuning, debiased fit, `ĝ` and `M̂_c` for one series.
pub fn estimate_series(
    sample: &RegressionSample,
    c: &[f64],
    tau: f64,
    mode: TestMode,
    cfg: &TestConfig,
    series: usize,
    warnings: &mut Vec<Warning>,
) -> Result<SeriesFit> {
    if c.len() != sample.p() {
        return Err(Error::InvalidInput(format!(
            "c{series} has {} entries but series {series} has {} covariates",
            c.len(),
            sample.p()
        )));
    }
    let n = sample.n();
    let m = cfg.m.unwrap_or_else(|| default_m(n));
    let mut tuning = match cfg.b[series - 1] {
        Some(b) => TuningSelection::fixed(n, b),
        None => {
            let (b_mean, c_factor) = pilot_tuning(sample, tau, m, cfg)?;
            TuningSelection::from_rules(n, b_mean, c_factor, mode)
        }
    };
    tuning.m = m;
    tuning.h = cfg.h[series - 1].unwrap_or_else(|| default_h(n));
    tuning.b_candidates = cfg.b_candidates.clone();
    if cfg.b[series - 1].is_none() && tuning.b > cfg.max_bandwidth {
        warnings.push(Warning::BandwidthClamped { series, requested: tuning.b, used: cfg.max_bandwidth });
        tuning.b = cfg.max_bandwidth;
    }
    let qcfg = QuantileFitConfig { kernel: cfg.kernel, grid_size: cfg.grid_size, ..QuantileFitConfig::new(tau, tuning.b) };
    let (fit, curve) = fit_debiased(sample, &qcfg, c).stage("quantile_fit/fit_debiased")?;
    if !curve.monotone {
        warnings.push(Warning::NonMonotone { series });
    }
    let setup = LrvSetup { sample, fit: &fit, tau, b: tuning.b, m, kernel: cfg.kernel };
    let (w, mc) = select_w(&setup, c, cfg).stage("lrv/m_c_curve")?;
    tuning.w = w;
    if cfg.w.is_none() {
        let scale = residual_scale(&own_time_residuals(sample, &fit));
        tuning.w_candidates = cfg.w_multipliers.iter().map(|k| k * scale).collect();
    }
    let n_riemann = cfg.n_riemann.unwrap_or(n);
    let ghat = GHat::new(&curve, tuning.h, cfg.h_kernel, n_riemann).stage("inverse_shift/ghat")?;
    Ok(SeriesFit { tuning, fit, curve, ghat, mc, n, n_riemann })
}

/// Geometry of one weight table.
#[derive(Debug, Clone, Copy)]
pub struct WeightSpec<'a> {
    pub curve: &'a DebiasedFit,
    pub mc: &'a McEstimate,
    pub n: usize,
    pub b: f64,
    pub h: f64,
    pub n_riemann: usize,
    pub kernel: KernelId,
    pub h_kernel: KernelId,
}

impl<'a> WeightSpec<'a> {
    pub fn of(fit: &'a SeriesFit, cfg: &TestConfig) -> Self {
        WeightSpec {
            curve: &fit.curve,
            mc: &fit.mc,
            n: fit.n,
            b: fit.tuning.b,
            h: fit.tuning.h,
            n_riemann: fit.n_riemann,
            kernel: cfg.kernel,
            h_kernel: cfg.h_kernel,
        }
    }

    pub fn with_mc(self, mc: &'a McEstimate) -> Self {
        WeightSpec { mc, ..self }
    }
}

/// `W(j, t)` for every `t` in `grid` (rows) and `j = 1..n` (columns).
/// The inner sum runs only over `i` with `|m̂(i/N) − t| ≤ h`.
pub fn z_weights(spec: &WeightSpec<'_>, grid: &[f64]) -> DMatrix<f64> {
    let WeightSpec { curve, mc, n, b, h, n_riemann, kernel, h_kernel } = *spec;
    let nr = n_riemann as f64;
    let mut pts: Vec<(f64, f64, f64)> = (1..=n_riemann)
        .map(|i| {
            let s = i as f64 / nr;
            (curve.m_at(s), mc.at(s), s)
        })
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let norm = 1.0 / (n as f64 * b * nr * h * h);
    let mut w = DMatrix::zeros(grid.len(), n);
    let nf = n as f64;
    for (r, &t) in grid.iter().enumerate() {
        let lo = pts.partition_point(|p| p.0 < t - h);
        let hi = pts.partition_point(|p| p.0 <= t + h);
        for &(m, mc_i, s) in &pts[lo..hi] {
            let a = mc_i * h_kernel.deriv((m - t) / h) * norm;
            if a == 0.0 {
                continue;
            }
            let j_lo = ((s - b) * nf).ceil().max(1.0) as usize;
            let j_hi = ((s + b) * nf).floor().min(nf) as usize;
            for j in j_lo..=j_hi {
                let kb = kernel.kbar((j as f64 / nf - s) / b);
                if kb != 0.0 {
                    w[(r, j - 1)] += a * kb;
                }
            }
        }
    }
    w
}

/// The linear map from iid normals to `Z₁(t) − Z₂(t)` on the window grid.
#[derive(Debug, Clone)]
pub struct BootstrapTables {
    pub grid: Vec<f64>,
    /// Rows: grid nodes; columns: multipliers.
    pub d: DMatrix<f64>,
}

impl BootstrapTables {
    /// Independent series: `[W₁, −W₂]` acting on `(V₁, V₂)`.
    pub fn independent(w1: &DMatrix<f64>, w2: &DMatrix<f64>, grid: Vec<f64>) -> Self {
        let (g, n1, n2) = (w1.nrows(), w1.ncols(), w2.ncols());
        let mut d = DMatrix::zeros(g, n1 + n2);
        d.view_mut((0, 0), (g, n1)).copy_from(w1);
        d.view_mut((0, n1), (g, n2)).copy_from(&(-w2));
        BootstrapTables { grid, d }
    }

    /// Dependent series: `Z₁ − Z₂ = Z₁₁ − Z₂₁ − Z₁₂ + Z₂₂`, where series 2's
    /// terms draw the multipliers `V_{⌊n₁j/n₂⌋,·}`.
    pub fn dependent(
        w11: &DMatrix<f64>,
        w12: &DMatrix<f64>,
        w21: &DMatrix<f64>,
        w22: &DMatrix<f64>,
        grid: Vec<f64>,
    ) -> Self {
        let (g, n1, n2) = (w11.nrows(), w11.ncols(), w21.ncols());
        let mut d = DMatrix::zeros(g, 2 * n1);
        d.view_mut((0, 0), (g, n1)).copy_from(w11);
        d.view_mut((0, n1), (g, n1)).copy_from(&(-w12));
        for j in 1..=n2 {
            let k = shared_index(j, n1, n2);
            for r in 0..g {
                d[(r, k - 1)] -= w21[(r, j - 1)];
                d[(r, n1 + k - 1)] += w22[(r, j - 1)];
            }
        }
        BootstrapTables { grid, d }
    }

    /// `Var(Z₁(t) − Z₂(t)) = Σⱼ D(t, j)²` per grid node.
    pub fn variance(&self) -> Vec<f64> {
        self.d.row_iter().map(|r| r.norm_squared()).collect()
    }

    /// `∫ Var(Z₁ − Z₂) ŵ`, the exact mean of the SIT replicates.
    pub fn expected_sit_mean(&self) -> f64 {
        trapezoid_uniform(&self.variance(), self.grid[1] - self.grid[0])
    }

    /// Calls `f` on batches of replicate columns `Z = D·V`. Replicate `q`
    /// draws its multipliers from ChaCha stream `q` of `seed`, so the first
    /// `Q` replicates do not depend on how many are drawn in total.
    pub fn for_each_batch(&self, q_total: usize, seed: u64, mut f: impl FnMut(&DMatrix<f64>)) {
        let cols = self.d.ncols();
        let mut start = 0;
        while start < q_total {
            let len = BATCH.min(q_total - start);
            let mut v = DMatrix::zeros(cols, len);
            for c in 0..len {
                let mut rng = ChaCha20Rng::seed_from_u64(seed);
                rng.set_stream((start + c) as u64);
                for r in 0..cols {
                    v[(r, c)] = StandardNormal.sample(&mut rng);
                }
            }
            f(&(&self.d * v));
            start += len;
        }
    }

    /// `∫ Z² ŵ` for each replicate.
    pub fn sit_replicates(&self, q_total: usize, seed: u64) -> Vec<f64> {
        let dx = self.grid[1] - self.grid[0];
        let mut out = Vec::with_capacity(q_total);
        self.for_each_batch(q_total, seed, |z| {
            for col in z.column_iter() {
                let sq: Vec<f64> = col.iter().map(|v| v * v).collect();
                out.push(trapezoid_uniform(&sq, dx));
            }
        });
        out
    }

    /// `sup_t |Z(t)|/√K̂₁(t)` for each replicate.
    pub fn scb_replicates(&self, q_total: usize, seed: u64, sd: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(q_total);
        self.for_each_batch(q_total, seed, |z| {
            for col in z.column_iter() {
                out.push(col.iter().zip(sd).map(|(v, s)| v.abs() / s).fold(0.0, f64::max));
            }
        });
        out
    }
}

/// `⌊n₁j/n₂⌋`, the series-1 index shared by series 2's `j`.
pub fn shared_index(j: usize, n1: usize, n2: usize) -> usize {
    (j * n1) / n2
}

/// Index `⌊Q(1 − α)⌋` of the critical order statistic (1-based; 0 means
/// every statistic exceeds it).
pub fn critical_rank(q: usize, alpha: f64) -> usize {
    ((q as f64) * (1.0 - alpha) + 1e-9).floor() as usize
}

/// `1 − Q*/Q` with `Q* = #{r : M_r ≤ stat}`.
pub fn bootstrap_p_value(boot: &[f64], stat: f64) -> f64 {
    let q_star = boot.iter().filter(|m| **m <= stat).count();
    1.0 - q_star as f64 / boot.len() as f64
}

/// Order statistic `M_(k)` (1-based); `None` for `k = 0`.
pub fn order_statistic(boot: &[f64], k: usize) -> Option<f64> {
    if k == 0 {
        return None;
    }
    let mut s = boot.to_vec();
    s.sort_by(f64::total_cmp);
    Some(s[k.min(s.len()) - 1])
}

/// `stat > M_(⌊Q(1−α)⌋)`; never rejects at `α = 0`.
pub fn bootstrap_rejects(boot: &[f64], stat: f64, alpha: f64) -> bool {
    if alpha <= 0.0 {
        return false;
    }
    match order_statistic(boot, critical_rank(boot.len(), alpha)) {
        Some(crit) => stat > crit,
        None => true,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SitResult {
    pub statistic: f64,
    pub boot: Vec<f64>,
    pub p_value: f64,
}

impl SitResult {
    pub fn rejects(&self, alpha: f64) -> bool {
        bootstrap_rejects(&self.boot, self.statistic, alpha)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScbResult {
    pub grid: Vec<f64>,
    pub center: Vec<f64>,
    pub k1_hat: Vec<f64>,
    /// `M̃` replicates.
    pub boot: Vec<f64>,
    /// `sup_t |ĝ₁ − ĝ₂|/√K̂₁`, the statistic dual to the band.
    pub statistic: f64,
    pub p_value: f64,
    pub alpha: f64,
    pub multiplier: f64,
    pub band_lo: Vec<f64>,
    pub band_hi: Vec<f64>,
    pub zero_inside: bool,
}

impl ScbResult {
    /// Multiplier `M̃_(⌊Q(1−α)⌋)`; infinite at `α = 0`, zero when the rank is 0.
    pub fn multiplier_at(&self, alpha: f64) -> f64 {
        if alpha <= 0.0 {
            return f64::INFINITY;
        }
        order_statistic(&self.boot, critical_rank(self.boot.len(), alpha)).unwrap_or(0.0)
    }

    pub fn band(&self, alpha: f64) -> (Vec<f64>, Vec<f64>) {
        let mult = self.multiplier_at(alpha);
        self.center
            .iter()
            .zip(&self.k1_hat)
            .map(|(c, k)| (c - mult * k.sqrt(), c + mult * k.sqrt()))
            .unzip()
    }

    /// Zero leaves the band somewhere.
    pub fn rejects(&self, alpha: f64) -> bool {
        let (lo, hi) = self.band(alpha);
        lo.iter().zip(&hi).any(|(l, h)| *l > 0.0 || *h < 0.0)
    }
}

/// Finite-sample ratios `c_{n,s}`, `c_{b,s}` relative to series 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesRatios {
    pub c_n: f64,
    pub c_b: f64,
    pub c_h: f64,
}

impl SeriesRatios {
    pub const ONE: SeriesRatios = SeriesRatios { c_n: 1.0, c_b: 1.0, c_h: 1.0 };
}

/// Plug-ins of one series for `K̂₁`.
#[derive(Debug, Clone, Copy)]
pub struct K1Terms<'a> {
    pub curve: &'a DebiasedFit,
    pub ghat: &'a GHat,
    pub mc: &'a McEstimate,
    pub ratios: SeriesRatios,
}

/// `K̂₁(t) = Σ_s M̂²(m̂⁻¹(t))·ĝ(t)² / (c_n c_b³ m̂'(m̂⁻¹(t))²) · ∫K̄'² · (∫H'x)²`
/// with `m̂⁻¹(t)` estimated by `Ĝ(t)` clamped to `[0, 1]`.
pub fn k1_hat(t: f64, terms: &[K1Terms<'_>], constants: &KernelConstants, h_constants: &KernelConstants) -> Result<f64> {
    let scale = constants.int_kbar_prime_sq * h_constants.int_hprime_x.powi(2);
    let mut acc = 0.0;
    for s in terms {
        let inv = s.ghat.big_g(t).clamp(0.0, 1.0);
        let deriv = s.curve.m_prime_at(inv);
        if !(deriv.abs() >= MIN_DERIVATIVE) {
            return Err(Error::FlatCurve { t: inv, derivative: deriv });
        }
        let g = s.ghat.eval(t);
        acc += s.mc.at(inv).powi(2) * g * g / (s.ratios.c_n * s.ratios.c_b.powi(3) * deriv * deriv);
    }
    Ok(acc * scale)
}

/// `∫(ĝ₁ − ĝ₂)²` over the window on a 2000-node grid.
pub fn sit_statistic(g1: &GHat, g2: &GHat, se: &ShiftEstimate) -> Result<f64> {
    sit_statistic_nodes(g1, g2, se, VALUE_GRID_NODES)
}

pub fn sit_statistic_nodes(g1: &GHat, g2: &GHat, se: &ShiftEstimate, nodes: usize) -> Result<f64> {
    let (lo, hi) = se.window;
    if !(lo < hi) {
        return Err(Error::EmptyWindow { lo, hi });
    }
    let xs = linspace(lo, hi, nodes);
    let sq: Vec<f64> = xs.iter().map(|t| (g1.eval(*t) - g2.eval(*t)).powi(2)).collect();
    Ok(trapezoid_uniform(&sq, xs[1] - xs[0]))
}

pub fn bootstrap_sit(tables: &BootstrapTables, statistic: f64, q: usize, seed: u64) -> SitResult {
    let boot = tables.sit_replicates(q, seed);
    let p_value = bootstrap_p_value(&boot, statistic);
    SitResult { statistic, boot, p_value }
}

pub fn bootstrap_scb(tables: &BootstrapTables, center: Vec<f64>, k1: Vec<f64>, q: usize, alpha: f64, seed: u64) -> ScbResult {
    let sd: Vec<f64> = k1.iter().map(|k| k.sqrt()).collect();
    let boot = tables.scb_replicates(q, seed, &sd);
    let statistic = center.iter().zip(&sd).map(|(c, s)| c.abs() / s).fold(0.0, f64::max);
    let p_value = bootstrap_p_value(&boot, statistic);
    let mut res = ScbResult {
        grid: tables.grid.clone(),
        center,
        k1_hat: k1,
        boot,
        statistic,
        p_value,
        alpha,
        multiplier: 0.0,
        band_lo: Vec::new(),
        band_hi: Vec::new(),
        zero_inside: true,
    };
    res.multiplier = res.multiplier_at(alpha);
    let (lo, hi) = res.band(alpha);
    res.zero_inside = lo.iter().zip(&hi).all(|(l, h)| *l <= 0.0 && 0.0 <= *h);
    res.band_lo = lo;
    res.band_hi = hi;
    res
}

/// Both series fitted and the shift estimated.
#[derive(Debug, Clone)]
pub struct PairEstimate {
    pub series: [SeriesFit; 2],
    pub shift: ShiftEstimate,
    pub warnings: Vec<Warning>,
}

pub fn estimate_pair(
    s1: &RegressionSample,
    s2: &RegressionSample,
    c1: &[f64],
    c2: &[f64],
    tau: f64,
    mode: TestMode,
    cfg: &TestConfig,
) -> Result<PairEstimate> {
    cfg.validate()?;
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::InvalidInput(format!("tau must lie in (0, 1), got {tau}")));
    }
    let mut warnings = Vec::new();
    let f1 = estimate_series(s1, c1, tau, mode, cfg, 1, &mut warnings).stage("series 1")?;
    let f2 = estimate_series(s2, c2, tau, mode, cfg, 2, &mut warnings).stage("series 2")?;
    let eta = cfg.eta.unwrap_or_else(|| default_eta(s1.n(), s2.n()));
    let mut shift = estimate_shift(&f1.curve, &f2.curve, &f1.ghat, &f2.ghat, eta).stage("inverse_shift/estimate_shift")?;
    warnings.append(&mut shift.warnings);
    Ok(PairEstimate { series: [f1, f2], shift, warnings })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub mode: TestMode,
    pub dependence: Dependence,
    pub tau: f64,
    pub seed: u64,
    pub tuning: [TuningSelection; 2],
    pub shift: ShiftEstimate,
    pub sit: Option<SitResult>,
    pub scb: Option<ScbResult>,
    pub psd_clipped: usize,
    pub warnings: Vec<Warning>,
}

impl TestOutcome {
    pub fn rejects(&self, alpha: f64) -> bool {
        match (&self.sit, &self.scb) {
            (Some(s), _) => s.rejects(alpha),
            (None, Some(s)) => s.rejects(alpha),
            _ => false,
        }
    }

    pub fn p_value(&self) -> f64 {
        match (&self.sit, &self.scb) {
            (Some(s), _) => s.p_value,
            (None, Some(s)) => s.p_value,
            _ => f64::NAN,
        }
    }
}

/// Weight tables and the joint scale for the chosen dependence structure.
pub fn bootstrap_tables(
    pair: &PairEstimate,
    s1: &RegressionSample,
    s2: &RegressionSample,
    c1: &[f64],
    c2: &[f64],
    tau: f64,
    dependence: Dependence,
    cfg: &TestConfig,
) -> Result<(BootstrapTables, Option<JointMcEstimate>)> {
    let grid = linspace(pair.shift.window.0, pair.shift.window.1, cfg.window_nodes);
    let [f1, f2] = &pair.series;
    let spec1 = WeightSpec::of(f1, cfg);
    let spec2 = WeightSpec::of(f2, cfg);
    match dependence {
        Dependence::Independent => {
            let w1 = z_weights(&spec1, &grid);
            let w2 = z_weights(&spec2, &grid);
            Ok((BootstrapTables::independent(&w1, &w2, grid), None))
        }
        Dependence::Dependent => {
            if s1.n() < s2.n() {
                return Err(Error::InvalidInput("the dependent path needs n1 >= n2; swap the series".into()));
            }
            let m = cfg.m.unwrap_or_else(|| default_m(s2.n()));
            let setup1 = LrvSetup { sample: s1, fit: &f1.fit, tau, b: f1.tuning.b, m: f1.tuning.m, kernel: cfg.kernel };
            let setup2 = LrvSetup { sample: s2, fit: &f2.fit, tau, b: f2.tuning.b, m: f2.tuning.m, kernel: cfg.kernel };
            let joint = joint_m_c_curve(&setup1, &setup2, f1.tuning.w, f2.tuning.w, m, c1, c2, &f1.mc, &f2.mc).stage("lrv/joint_m_c")?;
            let (m11, m12, m22) = (joint.entry_curve(0, 0), joint.entry_curve(0, 1), joint.entry_curve(1, 1));
            let w11 = z_weights(&spec1.with_mc(&m11), &grid);
            let w12 = z_weights(&spec1.with_mc(&m12), &grid);
            let w21 = z_weights(&spec2.with_mc(&m12), &grid);
            let w22 = z_weights(&spec2.with_mc(&m22), &grid);
            Ok((BootstrapTables::dependent(&w11, &w12, &w21, &w22, grid), Some(joint)))
        }
    }
}

/// `K̂₁` on a grid using both series' scalar scales.
pub fn k1_curve(pair: &PairEstimate, grid: &[f64], cfg: &TestConfig) -> Result<Vec<f64>> {
    let [f1, f2] = &pair.series;
    let ratios2 = SeriesRatios {
        c_n: f2.n as f64 / f1.n as f64,
        c_b: f2.tuning.b / f1.tuning.b,
        c_h: f2.tuning.h / f1.tuning.h,
    };
    let terms = [
        K1Terms { curve: &f1.curve, ghat: &f1.ghat, mc: &f1.mc, ratios: SeriesRatios::ONE },
        K1Terms { curve: &f2.curve, ghat: &f2.ghat, mc: &f2.mc, ratios: ratios2 },
    ];
    let kc = cfg.kernel.constants();
    let hc = cfg.h_kernel.constants();
    grid.iter().map(|t| k1_hat(*t, &terms, &kc, &hc)).collect()
}

/// The full pipeline on one pair of series.
#[allow(clippy::too_many_arguments)]
pub fn run_test(
    s1: &RegressionSample,
    s2: &RegressionSample,
    c1: &[f64],
    c2: &[f64],
    tau: f64,
    mode: TestMode,
    dependence: Dependence,
    cfg: &TestConfig,
    seed: u64,
) -> Result<TestOutcome> {
    let pair = estimate_pair(s1, s2, c1, c2, tau, mode, cfg)?;
    let (tables, joint) = bootstrap_tables(&pair, s1, s2, c1, c2, tau, dependence, cfg)?;
    let [f1, f2] = &pair.series;
    let (sit, scb) = match mode {
        TestMode::Sit => {
            let t = sit_statistic(&f1.ghat, &f2.ghat, &pair.shift).stage("testing/sit_statistic")?;
            (Some(bootstrap_sit(&tables, t, cfg.q_boot, seed)), None)
        }
        TestMode::Scb => {
            let center: Vec<f64> = tables.grid.iter().map(|t| f1.ghat.eval(*t) - f2.ghat.eval(*t)).collect();
            let k1 = k1_curve(&pair, &tables.grid, cfg).stage("testing/k1_hat")?;
            (None, Some(bootstrap_scb(&tables, center, k1, cfg.q_boot, cfg.alpha, seed)))
        }
    };
    let psd_clipped = joint.as_ref().map_or(0, |j| j.clipped);
    let mut warnings = pair.warnings.clone();
    if psd_clipped > 0 {
        warnings.push(Warning::PsdClipped { count: psd_clipped });
    }
    Ok(TestOutcome {
        mode,
        dependence,
        tau,
        seed,
        tuning: [f1.tuning.clone(), f2.tuning.clone()],
        shift: pair.shift.clone(),
        sit,
        scb,
        psd_clipped,
        warnings,
    })
}
