//! Locally stationary data generation for the two-sample designs and the
//! Monte Carlo size/power harness.
//!
//! Errors follow `eᵢ = 0.6(i/n − 0.3)²·eᵢ₋₁ + εᵢ` and covariates
//! `x_{ij} = 0.2(i/n − 0.3)²·x_{i−1,j} + ζ_{ij}` with `ζ ~ χ²_j/j`. Series 1
//! draws standard normal innovations, series 2 draws `t₅/√(5/3)`.

use crate::bandwidth::TestMode;
use crate::error::{Error, Result, Warning};
use crate::quantile_fit::RegressionSample;
use crate::testing::{run_test, Dependence, TestConfig, TestOutcome};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal, StudentT};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

/// Steps discarded before `i = 1`, run at `t = 1/n`.
pub const BURN_IN: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ExampleId {
    Ex1,
    Ex2,
    Ex3,
    Ex4,
    NM1,
    NM2,
}

impl ExampleId {
    pub const ALL: [ExampleId; 6] = [ExampleId::Ex1, ExampleId::Ex2, ExampleId::Ex3, ExampleId::Ex4, ExampleId::NM1, ExampleId::NM2];

    pub fn name(self) -> &'static str {
        match self {
            ExampleId::Ex1 => "ex1",
            ExampleId::Ex2 => "ex2",
            ExampleId::Ex3 => "ex3",
            ExampleId::Ex4 => "ex4",
            ExampleId::NM1 => "nm1",
            ExampleId::NM2 => "nm2",
        }
    }

    /// Whether the pair is shift invariant by construction.
    pub fn is_null(self) -> bool {
        matches!(self, ExampleId::Ex1 | ExampleId::Ex2 | ExampleId::NM1)
    }

    pub fn dim(self) -> usize {
        match self {
            ExampleId::Ex1 | ExampleId::Ex3 => 2,
            ExampleId::Ex2 | ExampleId::Ex4 => 3,
            ExampleId::NM1 | ExampleId::NM2 => 1,
        }
    }

    /// Coefficient curves `θ_j(t)` of one series. Arguments outside the
    /// domain of a logarithm return `None`.
    pub fn theta(self, series: usize, t: f64) -> Option<Vec<f64>> {
        use std::f64::consts::FRAC_PI_2;
        let log = |u: f64| if u > 0.0 { Some(u.ln()) } else { None };
        Some(match (self, series) {
            (ExampleId::Ex1, 1) | (ExampleId::Ex3, 1) => vec![t, log(t)?],
            (ExampleId::Ex1, _) => vec![t - 0.1, log(t - 0.1)?],
            (ExampleId::Ex3, _) => vec![t * t, log(t)?.powi(2)],
            (ExampleId::Ex2, 1) | (ExampleId::Ex4, 1) => vec![t * t, (FRAC_PI_2 * t).sin(), t.exp()],
            (ExampleId::Ex2, _) => {
                let u = t - 0.1;
                vec![u * u, (FRAC_PI_2 * u).sin(), u.exp()]
            }
            (ExampleId::Ex4, _) => vec![t.powi(3), (FRAC_PI_2 * t).cos(), log(t)?],
            (ExampleId::NM1, 1) | (ExampleId::NM2, 1) => vec![t * (0.5 - t) * (1.0 - t)],
            (ExampleId::NM1, _) => vec![(t - 0.1) * (0.6 - t) * (1.1 - t)],
            (ExampleId::NM2, _) => vec![t * (0.5 - t).powi(2) * (1.0 - t)],
        })
    }

    /// Smallest admissible time argument for series `series`, if any.
    fn domain_floor(self, series: usize) -> Option<f64> {
        match (self, series) {
            (ExampleId::Ex1, 2) => Some(0.1),
            _ => None,
        }
    }
}

impl std::str::FromStr for ExampleId {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        ExampleId::ALL
            .into_iter()
            .find(|e| e.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown example '{s}' (expected one of ex1..ex4, nm1, nm2)"))
    }
}

/// Marginal law of the error innovations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Innovation {
    StandardNormal,
    T5Standardized,
}

impl Innovation {
    pub fn for_series(series: usize) -> Self {
        if series == 1 {
            Innovation::StandardNormal
        } else {
            Innovation::T5Standardized
        }
    }

    fn draw<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            Innovation::StandardNormal => rng.sample(StandardNormal),
            Innovation::T5Standardized => {
                let t: f64 = StudentT::new(5.0).expect("valid dof").sample(rng);
                t / (5.0f64 / 3.0).sqrt()
            }
        }
    }
}

#[inline]
fn error_coefficient(t: f64) -> f64 {
    0.6 * (t - 0.3).powi(2)
}

#[inline]
fn covariate_coefficient(t: f64) -> f64 {
    0.2 * (t - 0.3).powi(2)
}

/// A reproducible stream for one purpose within one replicate.
pub fn substream(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Raw (uncentred) error series of length `n`.
pub fn gen_error_series<R: Rng + ?Sized>(n: usize, innovation: Innovation, rng: &mut R) -> Vec<f64> {
    let a0 = error_coefficient(1.0 / n as f64);
    let mut e = 0.0;
    for _ in 0..BURN_IN {
        e = a0 * e + innovation.draw(rng);
    }
    (1..=n)
        .map(|i| {
            e = error_coefficient(i as f64 / n as f64) * e + innovation.draw(rng);
            e
        })
        .collect()
}

/// Row-major `n×p` covariates; column `j` (1-based) uses `χ²_j/j` innovations.
pub fn gen_covariates<R: Rng + ?Sized>(n: usize, p: usize, rng: &mut R) -> Vec<f64> {
    let dists: Vec<ChiSquared<f64>> = (1..=p).map(|j| ChiSquared::new(j as f64).expect("positive dof")).collect();
    let mut state = vec![0.0; p];
    let a0 = covariate_coefficient(1.0 / n as f64);
    for _ in 0..BURN_IN {
        for (j, s) in state.iter_mut().enumerate() {
            *s = a0 * *s + dists[j].sample(rng) / (j + 1) as f64;
        }
    }
    let mut out = Vec::with_capacity(n * p);
    for i in 1..=n {
        let a = covariate_coefficient(i as f64 / n as f64);
        for (j, s) in state.iter_mut().enumerate() {
            *s = a * *s + dists[j].sample(rng) / (j + 1) as f64;
            out.push(*s);
        }
    }
    out
}

/// How an error series is built from the two innovation processes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorLaw {
    /// Weights on the normal-driven and the t₅-driven process.
    pub weights: (f64, f64),
}

impl ErrorLaw {
    pub fn independent(series: usize) -> Self {
        ErrorLaw { weights: if series == 1 { (1.0, 0.0) } else { (0.0, 1.0) } }
    }

    pub fn mixed(series: usize) -> Self {
        ErrorLaw { weights: if series == 1 { (0.8, 0.2) } else { (0.2, 0.8) } }
    }

    fn key(&self) -> (u64, u64) {
        (self.weights.0.to_bits(), self.weights.1.to_bits())
    }
}

/// Knots of the tabulated quantile oracle.
const ORACLE_KNOTS: usize = 21;
const ORACLE_DRAWS: usize = 100_000;
/// Terms of the stationary MA(∞) expansion; `0.294^30 < 1e-15`.
const ORACLE_TERMS: usize = 30;
const ORACLE_SEED: u64 = 0x5eed_0a11;

type OracleKey = ((u64, u64), u64);

fn oracle_cache() -> &'static Mutex<HashMap<OracleKey, Vec<f64>>> {
    static CACHE: OnceLock<Mutex<HashMap<OracleKey, Vec<f64>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Monte Carlo τ-quantiles of the stationary law at `t_k = k/20`. Draws
/// come in antithetic pairs so symmetric laws get an exactly symmetric table.
fn oracle_table(law: ErrorLaw, tau: f64) -> Vec<f64> {
    let key = (law.key(), tau.to_bits());
    if let Some(v) = oracle_cache().lock().expect("oracle cache").get(&key) {
        return v.clone();
    }
    let table: Vec<f64> = (0..ORACLE_KNOTS)
        .into_par_iter()
        .map(|k| {
            let t = k as f64 / (ORACLE_KNOTS - 1) as f64;
            let a = error_coefficient(t);
            let mut rng = substream(ORACLE_SEED, k as u64);
            let mut draws = Vec::with_capacity(ORACLE_DRAWS);
            for _ in 0..ORACLE_DRAWS / 2 {
                let mut e = 0.0;
                let mut pow = 1.0;
                for _ in 0..ORACLE_TERMS {
                    let z = law.weights.0 * Innovation::StandardNormal.draw(&mut rng)
                        + law.weights.1 * Innovation::T5Standardized.draw(&mut rng);
                    e += pow * z;
                    pow *= a;
                }
                draws.push(e);
                draws.push(-e);
            }
            draws.sort_by(f64::total_cmp);
            empirical_quantile(&draws, tau)
        })
        .collect();
    oracle_cache().lock().expect("oracle cache").insert(key, table.clone());
    table
}

/// Type-7 empirical quantile of sorted data.
fn empirical_quantile(sorted: &[f64], tau: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * tau;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Marginal τ-quantile of the error at time `t`. The pure normal law uses
/// `z_τ·σ(t)` with the stationary `σ² = 1/(1 − a(t)²)`; other laws use the
/// tabulated Monte Carlo oracle.
pub fn error_quantile(law: ErrorLaw, tau: f64, t: f64) -> f64 {
    if law.weights.1 == 0.0 {
        let a = error_coefficient(t);
        let z = Normal::standard().inverse_cdf(tau);
        return law.weights.0 * z / (1.0 - a * a).sqrt();
    }
    let table = oracle_table(law, tau);
    let knots: Vec<f64> = (0..ORACLE_KNOTS).map(|k| k as f64 / (ORACLE_KNOTS - 1) as f64).collect();
    crate::linalg::interp(&knots, &table, t)
}

/// `e_{i,τ} = eᵢ − Q_τ(eᵢ)`.
pub fn center_errors(e: &[f64], tau: f64, law: ErrorLaw) -> Vec<f64> {
    let n = e.len();
    e.iter()
        .enumerate()
        .map(|(i, v)| v - error_quantile(law, tau, (i + 1) as f64 / n as f64))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub example: ExampleId,
    pub n: usize,
    pub tau: f64,
    pub dependent_errors: bool,
    pub seed: u64,
}

/// One simulated pair.
#[derive(Debug, Clone)]
pub struct Design {
    pub sample1: RegressionSample,
    pub sample2: RegressionSample,
    pub c1: Vec<f64>,
    pub c2: Vec<f64>,
    pub warnings: Vec<Warning>,
}

/// True `m_s(t) = Σ_j θ_j(t)` (all-ones `c`), with the same domain clamp as
/// the generator.
pub fn true_curve(example: ExampleId, series: usize, n: usize, t: f64) -> Option<f64> {
    let arg = match example.domain_floor(series) {
        Some(f) if t <= f => f + 1.0 / n as f64,
        _ => t,
    };
    example.theta(series, arg).map(|v| v.iter().sum())
}

pub fn make_example(spec: &DgpSpec) -> Result<Design> {
    let DgpSpec { example, n, tau, dependent_errors, seed } = *spec;
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::InvalidInput(format!("tau must lie in (0, 1), got {tau}")));
    }
    let p = example.dim();
    let l1 = gen_error_series(n, Innovation::StandardNormal, &mut substream(seed, 1));
    let l2 = gen_error_series(n, Innovation::T5Standardized, &mut substream(seed, 2));
    let mut warnings = Vec::new();
    let mut samples = Vec::with_capacity(2);
    for series in 1..=2 {
        let law = if dependent_errors { ErrorLaw::mixed(series) } else { ErrorLaw::independent(series) };
        let raw: Vec<f64> = l1.iter().zip(&l2).map(|(a, b)| law.weights.0 * a + law.weights.1 * b).collect();
        let e = center_errors(&raw, tau, law);
        let x = gen_covariates(n, p, &mut substream(seed, 2 + series as u64));
        let mut clamped = 0;
        let mut y = Vec::with_capacity(n);
        for i in 1..=n {
            let t = i as f64 / n as f64;
            let arg = match example.domain_floor(series) {
                Some(f) if t <= f => {
                    clamped += 1;
                    f + 1.0 / n as f64
                }
                _ => t,
            };
            let theta = example
                .theta(series, arg)
                .ok_or_else(|| Error::DomainError(format!("{} series {series} at t = {arg}", example.name())))?;
            let row = &x[(i - 1) * p..i * p];
            y.push(theta.iter().zip(row).map(|(a, b)| a * b).sum::<f64>() + e[i - 1]);
        }
        if clamped > 0 {
            warnings.push(Warning::DomainClamped { series, rows: clamped });
        }
        samples.push(RegressionSample::new(y, x, p)?);
    }
    let sample2 = samples.pop().expect("two series");
    let sample1 = samples.pop().expect("two series");
    Ok(Design { sample1, sample2, c1: vec![1.0; p], c2: vec![1.0; p], warnings })
}

/// Seed of replicate `rep` derived from an experiment seed.
pub fn rep_seed(seed: u64, rep: usize) -> u64 {
    // splitmix64 finaliser on the pair
    let mut z = seed ^ (rep as u64).wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McExperiment {
    pub example: ExampleId,
    pub n: usize,
    pub tau: f64,
    pub dependent_errors: bool,
    pub seed: u64,
    pub reps: usize,
    pub alphas: Vec<f64>,
    pub mode: TestMode,
    pub dependence: Dependence,
    pub config: TestConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    pub alpha: f64,
    pub rate: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McResult {
    pub experiment: McExperiment,
    pub rates: Vec<RateEstimate>,
    pub valid: usize,
    pub failed: usize,
    pub mean_d_hat: f64,
    /// Failure messages keyed by their text, with counts.
    pub failures: Vec<(String, usize)>,
}

impl McResult {
    pub fn rate_at(&self, alpha: f64) -> Option<f64> {
        self.rates.iter().find(|r| r.alpha == alpha).map(|r| r.rate)
    }
}

/// Keeps the bootstrap streams apart from the data streams of a replicate.
const BOOTSTRAP_SALT: u64 = 0xb007_57a9_c0ff_ee11;

/// Runs one replicate: simulate, then test.
pub fn run_replicate(exp: &McExperiment, rep: usize) -> Result<TestOutcome> {
    let seed = rep_seed(exp.seed, rep);
    let spec = DgpSpec { example: exp.example, n: exp.n, tau: exp.tau, dependent_errors: exp.dependent_errors, seed };
    let design = make_example(&spec)?;
    let mut outcome = run_test(
        &design.sample1,
        &design.sample2,
        &design.c1,
        &design.c2,
        exp.tau,
        exp.mode,
        exp.dependence,
        &exp.config,
        seed ^ BOOTSTRAP_SALT,
    )?;
    outcome.warnings.extend(design.warnings);
    Ok(outcome)
}

/// Rejection rates over `reps` replicates. Failed replicates are counted
/// and excluded rather than aborting the experiment.
pub fn monte_carlo(exp: &McExperiment) -> Result<McResult> {
    if exp.reps == 0 {
        return Err(Error::InvalidInput("reps must be positive".into()));
    }
    if let Some(a) = exp.alphas.iter().find(|a| !(0.0..1.0).contains(*a)) {
        return Err(Error::InvalidInput(format!("alpha must lie in [0, 1), got {a}")));
    }
    let outcomes: Vec<Result<TestOutcome>> = (0..exp.reps).into_par_iter().map(|r| run_replicate(exp, r)).collect();
    let mut rejections = vec![0usize; exp.alphas.len()];
    let mut valid = 0;
    let mut d_sum = 0.0;
    let mut failures: Vec<(String, usize)> = Vec::new();
    for o in outcomes {
        match o {
            Ok(out) => {
                valid += 1;
                d_sum += out.shift.d_hat;
                for (k, a) in exp.alphas.iter().enumerate() {
                    if out.rejects(*a) {
                        rejections[k] += 1;
                    }
                }
            }
            Err(e) => {
                let msg = e.root().to_string();
                // drop the numeric detail so failures of one kind share a key
                let key = [" at t=", " [", " ("].iter().fold(msg.as_str(), |m, sep| m.split(sep).next().unwrap_or(m)).to_string();
                match failures.iter_mut().find(|(m, _)| *m == key) {
                    Some((_, c)) => *c += 1,
                    None => failures.push((key, 1)),
                }
            }
        }
    }
    let rates = exp
        .alphas
        .iter()
        .zip(&rejections)
        .map(|(a, r)| {
            let rate = if valid > 0 { *r as f64 / valid as f64 } else { f64::NAN };
            RateEstimate { alpha: *a, rate, stderr: (rate * (1.0 - rate) / valid.max(1) as f64).sqrt() }
        })
        .collect();
    Ok(McResult {
        experiment: exp.clone(),
        rates,
        valid,
        failed: exp.reps - valid,
        mean_d_hat: if valid > 0 { d_sum / valid as f64 } else { f64::NAN },
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn example_one_values() {
        let th = ExampleId::Ex1.theta(1, 0.5).unwrap();
        assert_eq!(th[0], 0.5);
        assert_abs_diff_eq!(th[1], -0.6931, epsilon = 1e-4);
        assert!(ExampleId::Ex1.theta(2, 0.05).is_none());
        // null design: m₂(t) = m₁(t − 0.1)
        for t in [0.2, 0.5, 0.9] {
            assert_abs_diff_eq!(
                true_curve(ExampleId::Ex1, 2, 100, t).unwrap(),
                true_curve(ExampleId::Ex1, 1, 100, t - 0.1).unwrap(),
                epsilon = 1e-14
            );
        }
    }

    #[test]
    fn seeded_generators_repeat() {
        let a = gen_error_series(50, Innovation::T5Standardized, &mut substream(3, 1));
        let b = gen_error_series(50, Innovation::T5Standardized, &mut substream(3, 1));
        assert_eq!(a, b);
        let x = gen_covariates(40, 3, &mut substream(3, 3));
        assert_eq!(x, gen_covariates(40, 3, &mut substream(3, 3)));
        assert_ne!(a, gen_error_series(50, Innovation::T5Standardized, &mut substream(3, 2)));
    }

    #[test]
    fn normal_centering_is_analytic() {
        let law = ErrorLaw::independent(1);
        assert_abs_diff_eq!(error_quantile(law, 0.8, 0.3), 0.8416, epsilon = 1e-4);
        for t in [0.0, 0.4, 1.0] {
            assert_eq!(error_quantile(law, 0.5, t), 0.0);
        }
    }

    #[test]
    fn symmetric_oracle_centres_medians() {
        for law in [ErrorLaw::independent(2), ErrorLaw::mixed(1)] {
            for t in [0.0, 0.37, 1.0] {
                assert!(error_quantile(law, 0.5, t).abs() <= 0.01);
            }
        }
    }

    #[test]
    fn ex1_design_flags_clamped_rows() {
        let d = make_example(&DgpSpec { example: ExampleId::Ex1, n: 100, tau: 0.5, dependent_errors: false, seed: 9 }).unwrap();
        assert_eq!(d.sample1.p(), 2);
        assert_eq!(d.warnings, vec![Warning::DomainClamped { series: 2, rows: 10 }]);
        let again = make_example(&DgpSpec { example: ExampleId::Ex1, n: 100, tau: 0.5, dependent_errors: false, seed: 9 }).unwrap();
        assert_eq!(d.sample1, again.sample1);
    }

    #[test]
    fn rep_seeds_differ() {
        let seeds: std::collections::HashSet<u64> = (0..1000).map(|r| rep_seed(42, r)).collect();
        assert_eq!(seeds.len(), 1000);
    }
}
