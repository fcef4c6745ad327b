//! Structured run reports and plot-data tables.

use crate::bandwidth::{TestMode, TuningSelection};
use crate::error::{Result, Warning};
use crate::io::table_csv;
use crate::simulate::McResult;
use crate::testing::{critical_rank, order_statistic, Dependence, ScbResult, SeriesFit, TestOutcome};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const SCHEMA_VERSION: u32 = 1;
pub const LIBRARY_VERSION: &str = env!("CARGO_PKG_VERSION");

/// SHA-256 of the JSON form of a configuration.
pub fn config_hash<T: Serialize>(config: &T) -> Result<String> {
    let bytes = serde_json::to_vec(config)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub alpha: f64,
    /// `None` when no finite critical value exists (`α = 0`).
    pub critical_value: Option<f64>,
    pub reject: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftSummary {
    pub d_tilde: f64,
    pub d_hat: f64,
    pub a_hat: f64,
    pub b_hat: f64,
    pub eta: f64,
    pub window_lo: f64,
    pub window_hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandSummary {
    pub alpha: f64,
    pub multiplier: f64,
    pub zero_inside: bool,
    /// File holding `(t, center, lo, hi)`, when written.
    pub band_csv: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub tau: f64,
    pub mode: TestMode,
    pub dependence: Dependence,
    pub statistic: f64,
    pub p_value: f64,
    pub boot_replicates: usize,
    pub decisions: Vec<Decision>,
    pub shift: ShiftSummary,
    pub tuning: [TuningSelection; 2],
    pub band: Option<BandSummary>,
    pub psd_clipped: usize,
    pub warnings: Vec<Warning>,
}

impl RunReport {
    pub fn from_outcome(outcome: &TestOutcome, alphas: &[f64]) -> Self {
        let (statistic, boot) = match (&outcome.sit, &outcome.scb) {
            (Some(s), _) => (s.statistic, &s.boot),
            (None, Some(s)) => (s.statistic, &s.boot),
            _ => unreachable!("an outcome carries one test result"),
        };
        let decisions = alphas
            .iter()
            .map(|a| Decision {
                alpha: *a,
                critical_value: if *a > 0.0 { order_statistic(boot, critical_rank(boot.len(), *a)) } else { None },
                reject: outcome.rejects(*a),
            })
            .collect();
        let se = &outcome.shift;
        RunReport {
            tau: outcome.tau,
            mode: outcome.mode,
            dependence: outcome.dependence,
            statistic,
            p_value: outcome.p_value(),
            boot_replicates: boot.len(),
            decisions,
            shift: ShiftSummary {
                d_tilde: se.d_tilde,
                d_hat: se.d_hat,
                a_hat: se.a_hat,
                b_hat: se.b_hat,
                eta: se.eta,
                window_lo: se.window.0,
                window_hi: se.window.1,
            },
            tuning: outcome.tuning.clone(),
            band: outcome.scb.as_ref().map(|s| BandSummary {
                alpha: s.alpha,
                multiplier: s.multiplier,
                zero_inside: s.zero_inside,
                band_csv: None,
            }),
            psd_clipped: outcome.psd_clipped,
            warnings: outcome.warnings.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub schema_version: u32,
    pub library_version: String,
    pub command: String,
    pub seed: u64,
    pub config_hash: String,
    pub runs: Vec<RunReport>,
}

impl TestReport {
    pub fn new(command: &str, seed: u64, config_hash: String, runs: Vec<RunReport>) -> Self {
        TestReport {
            schema_version: SCHEMA_VERSION,
            library_version: LIBRARY_VERSION.to_string(),
            command: command.to_string(),
            seed,
            config_hash,
            runs,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// `(t, center, lo, hi)` for the stored band.
pub fn band_csv(scb: &ScbResult) -> String {
    let header = ["t", "center", "lo", "hi"].map(String::from);
    let rows = (0..scb.grid.len()).map(|k| vec![scb.grid[k], scb.center[k], scb.band_lo[k], scb.band_hi[k]]);
    table_csv(&header, rows)
}

/// Plot data of one fitted series: `t, θ̃₁…θ̃ₚ, m̂` on the time grid and
/// `u, ĝ(u), Ĝ(u)` on a value grid of the same length.
pub fn curve_csv(fit: &SeriesFit) -> String {
    let curve = &fit.curve;
    let p = curve.p;
    let mut header = vec!["t".to_string()];
    header.extend((1..=p).map(|j| format!("theta{j}")));
    header.extend(["m_hat", "u", "g_hat", "big_g_hat"].map(String::from));
    let (lo, hi) = fit.ghat.range();
    let us = crate::linalg::linspace(lo - fit.ghat.h, hi + fit.ghat.h, curve.grid.len());
    let rows = curve.grid.iter().enumerate().map(|(j, t)| {
        let mut row = vec![*t];
        row.extend_from_slice(&curve.theta_tilde[j * p..(j + 1) * p]);
        row.push(curve.m_hat[j]);
        row.extend([us[j], fit.ghat.eval(us[j]), fit.ghat.big_g(us[j])]);
        row
    });
    table_csv(&header, rows)
}

/// `example, n, tau, alpha, mode, dependence, rate, stderr, valid, failed, mean_d_hat`.
pub fn mc_table_csv(results: &[McResult]) -> String {
    let mut out = String::from("example,n,tau,alpha,mode,dependence,rate,stderr,valid,failed,mean_d_hat\n");
    for r in results {
        let e = &r.experiment;
        for rate in &r.rates {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{}\n",
                e.example.name(),
                e.n,
                crate::io::fmt_f64(e.tau),
                crate::io::fmt_f64(rate.alpha),
                e.mode.name(),
                e.dependence.name(),
                crate::io::fmt_f64(rate.rate),
                crate::io::fmt_f64(rate.stderr),
                r.valid,
                r.failed,
                crate::io::fmt_f64(r.mean_d_hat),
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = config_hash(&(1, "x")).unwrap();
        assert_eq!(a, config_hash(&(1, "x")).unwrap());
        assert_ne!(a, config_hash(&(2, "x")).unwrap());
        assert_eq!(a.len(), 64);
    }

    #[test]
    fn band_table_layout() {
        let scb = ScbResult {
            grid: vec![0.0, 0.5],
            center: vec![0.1, -0.1],
            k1_hat: vec![1.0, 1.0],
            boot: vec![1.0],
            statistic: 0.1,
            p_value: 1.0,
            alpha: 0.05,
            multiplier: 1.0,
            band_lo: vec![-0.9, -1.1],
            band_hi: vec![1.1, 0.9],
            zero_inside: true,
        };
        assert_eq!(band_csv(&scb), "t,center,lo,hi\n0,0.1,-0.9,1.1\n0.5,-0.1,-1.1,0.9\n");
    }
}
