//! Weighted check-loss minimisation:
//!
//! ```text
//! minimise  Σᵢ wᵢ · ρ_τ(yᵢ − zᵢᵀβ)      over β ∈ ℝ^q
//! ```
//!
//! Cold starts run iteratively reweighted least squares on the smoothed
//! surrogate `√(r² + ε²)/2 + (τ − ½)r` with `ε` annealed over
//! `{1e-2, 1e-4, 1e-6}·scale(y)`. The iterate is then handed to an exact
//! edge-descent over the vertices of the linear program (each vertex
//! interpolates `q` observations), which stops only when the dual
//! multipliers of the basis lie in `[−wτ, w(1−τ)]`. Warm starts skip
//! straight to the edge descent.

use crate::error::{Error, Result};
use crate::linalg::{condition_number_sym, invert, solve_in_place};
use nalgebra::DMatrix;

/// `ρ_τ(r) = τ·r` for `r ≥ 0`, `(τ − 1)·r` otherwise.
#[inline]
pub fn check_loss(tau: f64, r: f64) -> f64 {
    if r >= 0.0 {
        tau * r
    } else {
        (tau - 1.0) * r
    }
}

/// Left derivative of `ρ_τ`: `τ − 1(r ≤ 0)`.
#[inline]
pub fn psi(tau: f64, r: f64) -> f64 {
    if r <= 0.0 {
        tau - 1.0
    } else {
        tau
    }
}

/// A weighted check-loss problem over `m` rows in `q` dimensions.
/// `z` is row-major `m×q`; all weights must be positive.
#[derive(Debug, Clone, Copy)]
pub struct CheckLossProblem<'a> {
    pub z: &'a [f64],
    pub y: &'a [f64],
    pub w: &'a [f64],
    pub q: usize,
    pub tau: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { tol: 1e-8, max_iter: 200 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub beta: Vec<f64>,
    pub objective: f64,
    /// IRLS iterations plus vertex pivots.
    pub iterations: usize,
}

/// Condition number above which the weighted normal matrix is singular.
pub const MAX_CONDITION: f64 = 1e10;

impl<'a> CheckLossProblem<'a> {
    pub fn rows(&self) -> usize {
        self.y.len()
    }

    #[inline]
    fn row(&self, i: usize) -> &[f64] {
        &self.z[i * self.q..(i + 1) * self.q]
    }

    #[inline]
    fn fitted(&self, i: usize, beta: &[f64]) -> f64 {
        self.row(i).iter().zip(beta).map(|(a, b)| a * b).sum()
    }

    pub fn objective(&self, beta: &[f64]) -> f64 {
        (0..self.rows())
            .map(|i| self.w[i] * check_loss(self.tau, self.y[i] - self.fitted(i, beta)))
            .sum()
    }

    /// Condition number of `Σ wᵢ zᵢ zᵢᵀ`.
    pub fn design_condition(&self) -> f64 {
        let q = self.q;
        let mut s = DMatrix::<f64>::zeros(q, q);
        for i in 0..self.rows() {
            let zi = self.row(i);
            for a in 0..q {
                for b in 0..q {
                    s[(a, b)] += self.w[i] * zi[a] * zi[b];
                }
            }
        }
        condition_number_sym(&s)
    }

    fn response_scale(&self) -> f64 {
        let m = self.rows() as f64;
        let mean = self.y.iter().sum::<f64>() / m;
        let sd = (self.y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m).sqrt();
        if sd > 0.0 && sd.is_finite() {
            sd
        } else {
            1.0 + mean.abs()
        }
    }
}

/// Full solve: rank check, then IRLS (cold) or the given start (warm),
/// then exact vertex descent.
pub fn solve(problem: &CheckLossProblem<'_>, warm: Option<&[f64]>, opts: SolverOptions) -> Result<Solution> {
    let q = problem.q;
    if problem.rows() < q {
        return Err(Error::InsufficientSupport { t: f64::NAN, count: problem.rows(), needed: q });
    }
    let condition = problem.design_condition();
    if !(condition <= MAX_CONDITION) {
        return Err(Error::RankDeficient { t: f64::NAN, condition });
    }
    let (start, irls_iter) = match warm {
        Some(b) if b.len() == q && b.iter().all(|v| v.is_finite()) => (b.to_vec(), 0),
        _ => irls(problem, None, opts)?,
    };
    let mut sol = vertex_descent(problem, &start, opts)?;
    sol.iterations += irls_iter;
    Ok(sol)
}

/// Annealed IRLS on the smoothed check loss. Returns the last iterate and
/// the number of reweighting steps taken.
pub fn irls(problem: &CheckLossProblem<'_>, start: Option<&[f64]>, opts: SolverOptions) -> Result<(Vec<f64>, usize)> {
    let q = problem.q;
    let m = problem.rows();
    let scale = problem.response_scale();
    let mut beta = match start {
        Some(b) => b.to_vec(),
        None => weighted_least_squares(problem, &vec![1.0; m])
            .ok_or(Error::RankDeficient { t: f64::NAN, condition: f64::INFINITY })?,
    };
    let mut total = 0;
    let mut a = vec![0.0; q * q];
    let mut rhs = vec![0.0; q];
    for eps in [1e-2 * scale, 1e-4 * scale, 1e-6 * scale] {
        for _ in 0..opts.max_iter {
            total += 1;
            a.iter_mut().for_each(|v| *v = 0.0);
            rhs.iter_mut().for_each(|v| *v = 0.0);
            for i in 0..m {
                let zi = problem.row(i);
                let r = problem.y[i] - problem.fitted(i, &beta);
                let s = (r * r + eps * eps).sqrt();
                let c = problem.w[i] / (2.0 * s);
                let lin = (problem.tau - 0.5) * problem.w[i];
                for p in 0..q {
                    rhs[p] += zi[p] * (c * problem.y[i] + lin);
                    for k in p..q {
                        a[p * q + k] += c * zi[p] * zi[k];
                    }
                }
            }
            for p in 0..q {
                for k in 0..p {
                    a[p * q + k] = a[k * q + p];
                }
            }
            let mut next = rhs.clone();
            if !solve_in_place(&mut a.clone(), &mut next, q) {
                break;
            }
            let change = next.iter().zip(&beta).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            let size = 1.0 + beta.iter().map(|v| v.abs()).fold(0.0, f64::max);
            beta = next;
            if change < opts.tol * size {
                break;
            }
        }
    }
    Ok((beta, total))
}

fn weighted_least_squares(problem: &CheckLossProblem<'_>, extra: &[f64]) -> Option<Vec<f64>> {
    let q = problem.q;
    let mut a = vec![0.0; q * q];
    let mut b = vec![0.0; q];
    for i in 0..problem.rows() {
        let zi = problem.row(i);
        let w = problem.w[i] * extra[i];
        for p in 0..q {
            b[p] += w * zi[p] * problem.y[i];
            for k in 0..q {
                a[p * q + k] += w * zi[p] * zi[k];
            }
        }
    }
    solve_in_place(&mut a, &mut b, q).then_some(b)
}

/// Choose `q` rows with the smallest residuals whose design rows are
/// linearly independent.
fn initial_basis(problem: &CheckLossProblem<'_>, beta: &[f64]) -> Option<Vec<usize>> {
    let q = problem.q;
    let mut order: Vec<usize> = (0..problem.rows()).collect();
    let resid: Vec<f64> = (0..problem.rows()).map(|i| (problem.y[i] - problem.fitted(i, beta)).abs()).collect();
    order.sort_by(|a, b| resid[*a].total_cmp(&resid[*b]).then(a.cmp(b)));
    let mut ortho: Vec<Vec<f64>> = Vec::with_capacity(q);
    let mut basis = Vec::with_capacity(q);
    for i in order {
        let zi = problem.row(i);
        let norm0 = zi.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm0 == 0.0 {
            continue;
        }
        let mut v: Vec<f64> = zi.to_vec();
        for e in &ortho {
            let d: f64 = v.iter().zip(e).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(e).for_each(|(a, b)| *a -= d * b);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 * norm0 {
            v.iter_mut().for_each(|x| *x /= norm);
            ortho.push(v);
            basis.push(i);
            if basis.len() == q {
                return Some(basis);
            }
        }
    }
    None
}

/// Exact descent along the edges of the check-loss polyhedron.
pub fn vertex_descent(problem: &CheckLossProblem<'_>, start: &[f64], opts: SolverOptions) -> Result<Solution> {
    let q = problem.q;
    let m = problem.rows();
    let tau = problem.tau;
    let mut basis = initial_basis(problem, start)
        .ok_or(Error::RankDeficient { t: f64::NAN, condition: f64::INFINITY })?;
    let y_scale = 1.0 + problem.y.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let zero_tol = 1e-12 * y_scale;
    let w_scale: f64 = (0..m)
        .map(|i| problem.w[i] * (1.0 + problem.row(i).iter().fold(0.0f64, |a, v| a.max(v.abs()))))
        .sum();
    let opt_tol = 1e-11 * w_scale;
    let cap = opts.max_iter.max(10 * m + 100);

    let mut in_basis = vec![false; m];
    let mut resid = vec![0.0; m];
    let mut zb = vec![0.0; q * q];
    let mut beta = vec![0.0; q];
    let mut crossings: Vec<(f64, usize, f64)> = Vec::with_capacity(m);
    let mut last_objective = f64::INFINITY;

    for iter in 0..cap {
        for (k, &i) in basis.iter().enumerate() {
            zb[k * q..(k + 1) * q].copy_from_slice(problem.row(i));
        }
        let zinv = invert(&zb, q).ok_or(Error::RankDeficient { t: f64::NAN, condition: f64::INFINITY })?;
        for (a, b) in beta.iter_mut().enumerate() {
            *b = (0..q).map(|k| zinv[a * q + k] * problem.y[basis[k]]).sum();
        }
        in_basis.iter_mut().for_each(|v| *v = false);
        for &i in &basis {
            in_basis[i] = true;
        }
        let mut gradient = vec![0.0; q];
        let mut degenerate = Vec::new();
        for i in 0..m {
            if in_basis[i] {
                resid[i] = 0.0;
                continue;
            }
            let r = problem.y[i] - problem.fitted(i, &beta);
            resid[i] = r;
            if r.abs() <= zero_tol {
                degenerate.push(i);
            } else {
                let c = problem.w[i] * psi(tau, r);
                for (g, z) in gradient.iter_mut().zip(problem.row(i)) {
                    *g += c * z;
                }
            }
        }
        // u = Z_B^{-T} G: the negated dual multipliers of the basis rows
        let u: Vec<f64> = (0..q).map(|k| (0..q).map(|a| zinv[a * q + k] * gradient[a]).sum()).collect();

        let mut best: Option<(f64, usize, f64)> = None;
        for k in 0..q {
            for sigma in [1.0, -1.0] {
                let mut slope = -sigma * u[k] + problem.w[basis[k]] * check_loss(tau, -sigma);
                for &i in &degenerate {
                    let a: f64 = (0..q).map(|c| problem.row(i)[c] * sigma * zinv[c * q + k]).sum();
                    slope += problem.w[i] * check_loss(tau, -a);
                }
                if best.map_or(true, |(s, _, _)| slope < s) {
                    best = Some((slope, k, sigma));
                }
            }
        }
        let (slope, k, sigma) = best.expect("q ≥ 1");
        let objective: f64 = (0..m).map(|i| problem.w[i] * check_loss(tau, resid[i])).sum();
        if slope >= -opt_tol {
            return Ok(Solution { beta, objective, iterations: iter });
        }
        if objective > last_objective + opt_tol {
            return Err(Error::NoConvergence { t: f64::NAN, iterations: iter, gap: objective - last_objective });
        }
        last_objective = objective;

        // ratio test along d = σ·Z_B^{-1} e_k
        let dir: Vec<f64> = (0..q).map(|c| sigma * zinv[c * q + k]).collect();
        crossings.clear();
        for i in 0..m {
            if in_basis[i] {
                continue;
            }
            let a: f64 = problem.row(i).iter().zip(&dir).map(|(x, d)| x * d).sum();
            if a == 0.0 || resid[i].abs() <= zero_tol {
                continue;
            }
            let step = resid[i] / a;
            if step > 0.0 {
                crossings.push((step, i, problem.w[i] * a.abs()));
            }
        }
        crossings.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut s = slope;
        let mut entering = None;
        for &(_, i, jump) in &crossings {
            s += jump;
            if s >= 0.0 {
                entering = Some(i);
                break;
            }
        }
        match entering {
            Some(i) => basis[k] = i,
            None => {
                return Err(Error::NoConvergence { t: f64::NAN, iterations: iter, gap: f64::INFINITY });
            }
        }
    }
    let objective = problem.objective(&beta);
    Err(Error::NoConvergence { t: f64::NAN, iterations: cap, gap: objective - last_objective.min(objective) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn loss_branches() {
        assert_eq!(check_loss(0.5, -3.0), 1.5);
        assert_eq!(check_loss(0.5, 3.0), 1.5);
        assert_abs_diff_eq!(check_loss(0.8, 1.0), 0.8);
        assert_abs_diff_eq!(check_loss(0.8, -1.0), 0.2, epsilon = 1e-15);
    }

    #[test]
    fn weighted_median_in_one_dimension() {
        let y = [1.0, 2.0, 3.0, 10.0, 11.0];
        let w = [1.0, 1.0, 1.0, 1.0, 5.0];
        let z = [1.0; 5];
        let p = CheckLossProblem { z: &z, y: &y, w: &w, q: 1, tau: 0.5 };
        let sol = solve(&p, None, SolverOptions::default()).unwrap();
        // weighted median: cumulative weight reaches half (4.5) at y = 11
        assert_abs_diff_eq!(sol.beta[0], 11.0, epsilon = 1e-9);
    }

    #[test]
    fn interpolates_noiseless_line() {
        let n = 30;
        let mut z = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let x = i as f64 / n as f64;
            z.extend_from_slice(&[1.0, x]);
            y.push(1.0 - 2.0 * x);
        }
        let w = vec![1.0; n];
        for tau in [0.2, 0.5, 0.9] {
            let p = CheckLossProblem { z: &z, y: &y, w: &w, q: 2, tau };
            let sol = solve(&p, None, SolverOptions::default()).unwrap();
            assert_abs_diff_eq!(sol.beta[0], 1.0, epsilon = 1e-9);
            assert_abs_diff_eq!(sol.beta[1], -2.0, epsilon = 1e-9);
            assert!(sol.objective < 1e-9);
        }
    }

    #[test]
    fn rank_deficient_design() {
        let z = [1.0, 2.0, 2.0, 4.0, 3.0, 6.0];
        let y = [1.0, 2.0, 3.0];
        let w = [1.0; 3];
        let p = CheckLossProblem { z: &z, y: &y, w: &w, q: 2, tau: 0.5 };
        assert!(matches!(solve(&p, None, SolverOptions::default()), Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn warm_and_cold_agree_on_objective() {
        let mut z = Vec::new();
        let mut y = Vec::new();
        let mut state = 7u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..60 {
            let x = next();
            z.extend_from_slice(&[1.0, x]);
            y.push(0.5 + x + (next() - 0.5));
        }
        let w: Vec<f64> = (0..60).map(|_| 0.1 + next()).collect();
        let p = CheckLossProblem { z: &z, y: &y, w: &w, q: 2, tau: 0.3 };
        let cold = solve(&p, None, SolverOptions::default()).unwrap();
        let warm = solve(&p, Some(&[5.0, -3.0]), SolverOptions::default()).unwrap();
        assert_abs_diff_eq!(cold.objective, warm.objective, epsilon = 1e-10);
    }
}
