//! Smoothing kernels, the jackknife-induced second-order kernel
//! `K̄(x) = 2√2·K(√2x) − K(x)`, and quadrature for the kernel functionals
//! that enter the band variance and the bandwidth correction factor.

use serde::{Deserialize, Serialize};
use std::f64::consts::SQRT_2;

/// A symmetric kernel supported on `[-1, 1]` with unit mass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum KernelId {
    #[default]
    Epanechnikov,
    Biweight,
}

impl KernelId {
    pub fn name(self) -> &'static str {
        match self {
            KernelId::Epanechnikov => "epanechnikov",
            KernelId::Biweight => "biweight",
        }
    }

    /// `K(x)`; zero outside `[-1, 1]`.
    #[inline]
    pub fn eval(self, x: f64) -> f64 {
        if !(-1.0..=1.0).contains(&x) {
            return 0.0;
        }
        let u = 1.0 - x * x;
        match self {
            KernelId::Epanechnikov => 0.75 * u,
            KernelId::Biweight => 0.9375 * u * u,
        }
    }

    /// `K'(x)`; zero outside `[-1, 1]`, one-sided at the edges.
    #[inline]
    pub fn deriv(self, x: f64) -> f64 {
        if !(-1.0..=1.0).contains(&x) {
            return 0.0;
        }
        match self {
            KernelId::Epanechnikov => -1.5 * x,
            KernelId::Biweight => -3.75 * x * (1.0 - x * x),
        }
    }

    /// Second-order kernel `K̄(x) = 2√2·K(√2x) − K(x)`.
    #[inline]
    pub fn kbar(self, x: f64) -> f64 {
        2.0 * SQRT_2 * self.eval(SQRT_2 * x) - self.eval(x)
    }

    /// `K̄'(x) = 4·K'(√2x) − K'(x)`.
    #[inline]
    pub fn kbar_prime(self, x: f64) -> f64 {
        4.0 * self.deriv(SQRT_2 * x) - self.deriv(x)
    }

    /// Integral of a kernel functional by piecewise composite Simpson.
    pub fn moment(self, functional: Functional) -> f64 {
        let f = |x: f64| match functional {
            Functional::Mass => self.eval(x),
            Functional::FirstMoment => x * self.eval(x),
            Functional::SecondMoment => x * x * self.eval(x),
            Functional::KbarMass => self.kbar(x),
            Functional::KbarFirstMoment => x * self.kbar(x),
            Functional::KbarSecondMoment => x * x * self.kbar(x),
            Functional::KbarPrimeSq => self.kbar_prime(x).powi(2),
            Functional::HPrimeX => x * self.deriv(x),
            Functional::KSq => self.eval(x).powi(2),
            Functional::KbarSq => self.kbar(x).powi(2),
        };
        integrate_kernel(f, QUADRATURE_INTERVALS)
    }

    /// The cached set of functionals used downstream.
    pub fn constants(self) -> KernelConstants {
        KernelConstants {
            int_kbar_prime_sq: self.moment(Functional::KbarPrimeSq),
            int_hprime_x: self.moment(Functional::HPrimeX),
            int_kbar_sq: self.moment(Functional::KbarSq),
            int_k_sq: self.moment(Functional::KSq),
        }
    }
}

impl std::str::FromStr for KernelId {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "epanechnikov" | "epa" => Ok(KernelId::Epanechnikov),
            "biweight" | "quartic" => Ok(KernelId::Biweight),
            other => Err(format!("unknown kernel '{other}'")),
        }
    }
}

/// Integrals over `[-1, 1]` that the pipeline needs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Functional {
    Mass,
    FirstMoment,
    SecondMoment,
    KbarMass,
    KbarFirstMoment,
    KbarSecondMoment,
    /// `∫ K̄'(x)² dx`
    KbarPrimeSq,
    /// `∫ H'(x)·x dx`, with the kernel playing the role of `H`.
    HPrimeX,
    KSq,
    KbarSq,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConstants {
    pub int_kbar_prime_sq: f64,
    pub int_hprime_x: f64,
    pub int_kbar_sq: f64,
    pub int_k_sq: f64,
}

/// Simpson intervals per smooth piece (so ≥ 2001 nodes per piece).
pub const QUADRATURE_INTERVALS: usize = 2000;

/// Composite Simpson over `[-1, -1/√2]`, `[-1/√2, 1/√2]`, `[1/√2, 1]`.
///
/// `K̄` and `K̄'` have kinks or jumps at `±1/√2` and `±1`; splitting there
/// keeps each piece smooth so Simpson converges at its full order. Piece
/// endpoints are evaluated as one-sided limits from inside the piece.
pub fn integrate_kernel<F: Fn(f64) -> f64>(f: F, intervals: usize) -> f64 {
    let r = 1.0 / SQRT_2;
    simpson(&f, -1.0, -r, intervals) + simpson(&f, -r, r, intervals) + simpson(&f, r, 1.0, intervals)
}

/// Composite Simpson rule with an even number of intervals; the endpoint
/// values are taken a relative `1e-12` inside `[a, b]`.
pub fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, intervals: usize) -> f64 {
    let n = if intervals % 2 == 0 { intervals } else { intervals + 1 };
    let h = (b - a) / n as f64;
    let nudge = 1e-12 * (b - a);
    let mut acc = f(a + nudge) + f(b - nudge);
    for k in 1..n {
        let x = a + k as f64 * h;
        acc += if k % 2 == 1 { 4.0 * f(x) } else { 2.0 * f(x) };
    }
    acc * h / 3.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    const KERNELS: [KernelId; 2] = [KernelId::Epanechnikov, KernelId::Biweight];

    #[test]
    fn epanechnikov_values() {
        let k = KernelId::Epanechnikov;
        assert_eq!(k.eval(0.0), 0.75);
        assert_eq!(k.eval(1.2), 0.0);
        assert_abs_diff_eq!(k.eval(0.5), 0.5625, epsilon = 1e-15);
    }

    #[test]
    fn kbar_values() {
        let k = KernelId::Epanechnikov;
        assert_abs_diff_eq!(k.kbar(0.0), 0.75 * (2.0 * SQRT_2 - 1.0), epsilon = 1e-14);
        assert_abs_diff_eq!(k.kbar(0.0), 1.37132, epsilon = 1e-5);
        assert_abs_diff_eq!(k.kbar(0.8), -0.27, epsilon = 1e-14);
        for x in [0.1, 0.33, 0.7, 0.9, 1.3] {
            assert_eq!(k.kbar(x), k.kbar(-x));
        }
    }

    #[test]
    fn kbar_prime_values() {
        let k = KernelId::Epanechnikov;
        assert_eq!(k.kbar_prime(0.0), 0.0);
        assert_eq!(k.kbar_prime(2.0), 0.0);
        // 4·(−1.5·√2·0.5) + 1.5·0.5
        assert_abs_diff_eq!(k.kbar_prime(0.5), 0.5 * (1.5 - 6.0 * SQRT_2), epsilon = 1e-14);
    }

    #[test]
    fn kbar_prime_matches_finite_differences() {
        let step = 1e-5;
        for k in KERNELS {
            for i in 0..100 {
                let x = -0.99 + 1.98 * (i as f64 + 0.5) / 100.0;
                // stay away from the derivative jumps of the Epanechnikov pieces
                if (x.abs() - 1.0 / SQRT_2).abs() < 2.0 * step {
                    continue;
                }
                let fd = (k.kbar(x + step) - k.kbar(x - step)) / (2.0 * step);
                assert_abs_diff_eq!(k.kbar_prime(x), fd, epsilon = 1e-5);
            }
        }
    }

    #[test]
    fn base_kernel_moments() {
        for k in KERNELS {
            assert_abs_diff_eq!(k.moment(Functional::Mass), 1.0, epsilon = 1e-6);
            assert_abs_diff_eq!(k.moment(Functional::FirstMoment), 0.0, epsilon = 1e-6);
            assert!(k.moment(Functional::SecondMoment) > 0.0);
        }
    }

    #[test]
    fn second_order_kernel_moments() {
        for k in KERNELS {
            assert_abs_diff_eq!(k.moment(Functional::KbarMass), 1.0, epsilon = 1e-6);
            assert_abs_diff_eq!(k.moment(Functional::KbarFirstMoment), 0.0, epsilon = 1e-6);
            assert_abs_diff_eq!(k.moment(Functional::KbarSecondMoment), 0.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn closed_form_constants() {
        let k = KernelId::Epanechnikov;
        // integration by parts: ∫H'(x)x dx = −∫H = −1
        assert_abs_diff_eq!(k.moment(Functional::HPrimeX), -1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(k.moment(Functional::KSq), 0.6, epsilon = 1e-9);
        // piecewise linear K̄' integrates exactly by hand
        let r = 1.0 / SQRT_2;
        let inner = (1.5 - 6.0 * SQRT_2).powi(2) * r.powi(3) / 3.0;
        let outer = 2.25 * (1.0 - r.powi(3)) / 3.0;
        assert_abs_diff_eq!(k.moment(Functional::KbarPrimeSq), 2.0 * (inner + outer), epsilon = 1e-9);
        let c = k.constants();
        assert!(c.int_kbar_prime_sq > 0.0 && c.int_k_sq > 0.0 && c.int_kbar_sq > 0.0);
    }

    #[test]
    fn quadrature_stable_under_refinement() {
        for k in KERNELS {
            for f in [Functional::KbarPrimeSq, Functional::KbarSq, Functional::Mass] {
                let coarse = integrate_kernel(|x| match f {
                    Functional::KbarPrimeSq => k.kbar_prime(x).powi(2),
                    Functional::KbarSq => k.kbar(x).powi(2),
                    _ => k.eval(x),
                }, QUADRATURE_INTERVALS);
                let fine = integrate_kernel(|x| match f {
                    Functional::KbarPrimeSq => k.kbar_prime(x).powi(2),
                    Functional::KbarSq => k.kbar(x).powi(2),
                    _ => k.eval(x),
                }, 2 * QUADRATURE_INTERVALS);
                assert!(((coarse - fine) / fine).abs() <= 1e-6);
            }
        }
    }
}
