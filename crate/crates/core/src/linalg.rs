//! Small dense helpers. Matrices here are at most a few dozen entries, so
//! everything works on row-major `Vec<f64>` and `nalgebra` is used only
//! where an eigendecomposition is needed.

use nalgebra::{DMatrix, SymmetricEigen};

/// Solve `a·x = b` in place by Gaussian elimination with partial pivoting.
/// `a` is `n×n` row-major and is destroyed. Returns `false` on a zero pivot.
pub fn solve_in_place(a: &mut [f64], b: &mut [f64], n: usize) -> bool {
    for col in 0..n {
        let mut piv = col;
        let mut best = a[col * n + col].abs();
        for row in col + 1..n {
            let v = a[row * n + col].abs();
            if v > best {
                best = v;
                piv = row;
            }
        }
        if best == 0.0 || !best.is_finite() {
            return false;
        }
        if piv != col {
            for k in 0..n {
                a.swap(col * n + k, piv * n + k);
            }
            b.swap(col, piv);
        }
        let d = a[col * n + col];
        for row in col + 1..n {
            let f = a[row * n + col] / d;
            if f != 0.0 {
                for k in col..n {
                    a[row * n + k] -= f * a[col * n + k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    for col in (0..n).rev() {
        let mut s = b[col];
        for k in col + 1..n {
            s -= a[col * n + k] * b[k];
        }
        b[col] = s / a[col * n + col];
    }
    true
}

/// Inverse of an `n×n` row-major matrix.
pub fn invert(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut out = vec![0.0; n * n];
    for j in 0..n {
        let mut m = a.to_vec();
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        if !solve_in_place(&mut m, &mut e, n) {
            return None;
        }
        for i in 0..n {
            out[i * n + j] = e[i];
        }
    }
    Some(out)
}

/// `max|λ| / min|λ|` of a symmetric matrix; infinite when singular.
pub fn condition_number_sym(a: &DMatrix<f64>) -> f64 {
    let eig = SymmetricEigen::new(a.clone());
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for v in eig.eigenvalues.iter() {
        lo = lo.min(v.abs());
        hi = hi.max(v.abs());
    }
    if lo == 0.0 || !lo.is_finite() || !hi.is_finite() {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// `(A + Aᵀ)/2`
pub fn symmetrize(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in i + 1..n {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
}

/// Clip negative eigenvalues of a symmetric matrix at zero. Returns the
/// clipped matrix and how many eigenvalues were negative.
pub fn clip_psd(a: &DMatrix<f64>) -> (DMatrix<f64>, usize) {
    let eig = SymmetricEigen::new(a.clone());
    let clipped = eig.eigenvalues.iter().filter(|v| **v < 0.0).count();
    if clipped == 0 {
        return (a.clone(), 0);
    }
    let vals = eig.eigenvalues.map(|v| v.max(0.0));
    let out = &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose();
    (out, clipped)
}

/// Symmetric PSD square root after clipping negative eigenvalues.
pub fn psd_sqrt(a: &DMatrix<f64>) -> (DMatrix<f64>, usize) {
    let eig = SymmetricEigen::new(a.clone());
    let clipped = eig.eigenvalues.iter().filter(|v| **v < 0.0).count();
    let vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    let mut out = &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose();
    symmetrize(&mut out);
    (out, clipped)
}

/// Trapezoid rule on a uniform grid of spacing `dx`.
pub fn trapezoid_uniform(values: &[f64], dx: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => dx * (values.iter().sum::<f64>() - 0.5 * (values[0] + values[n - 1])),
    }
}

/// Trapezoid rule on an arbitrary increasing grid.
pub fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
    xs.windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
        .sum()
}

/// `n` uniform nodes on `[lo, hi]` (both ends included).
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let step = (hi - lo) / (n - 1) as f64;
            (0..n).map(|k| if k == n - 1 { hi } else { lo + k as f64 * step }).collect()
        }
    }
}

/// Piecewise-linear interpolation of `ys` on increasing `xs`, clamped at the ends.
pub fn interp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[n - 1] {
        return ys[n - 1];
    }
    let k = xs.partition_point(|v| *v <= x);
    let (x0, x1) = (xs[k - 1], xs[k]);
    let w = (x - x0) / (x1 - x0);
    ys[k - 1] + w * (ys[k] - ys[k - 1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn solves_and_inverts() {
        let a = vec![4.0, 1.0, 2.0, 1.0, 3.0, 0.0, 2.0, 0.0, 5.0];
        let inv = invert(&a, 3).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let v: f64 = (0..3).map(|k| a[i * 3 + k] * inv[k * 3 + j]).sum();
                assert_abs_diff_eq!(v, if i == j { 1.0 } else { 0.0 }, epsilon = 1e-12);
            }
        }
        assert!(invert(&[1.0, 2.0, 2.0, 4.0], 2).is_none());
    }

    #[test]
    fn diagonal_sqrt() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 9.0]);
        let (r, clipped) = psd_sqrt(&m);
        assert_eq!(clipped, 0);
        assert_abs_diff_eq!(r[(0, 0)], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r[(1, 1)], 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r[(0, 1)], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn clipping_counts_negative_modes() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let (c, k) = clip_psd(&m);
        assert_eq!(k, 1);
        let eig = SymmetricEigen::new(c);
        assert!(eig.eigenvalues.iter().all(|v| *v > -1e-12));
    }

    #[test]
    fn trapezoid_constant() {
        let xs = linspace(0.2, 0.9, 2000);
        let ys = vec![1.0; 2000];
        assert_abs_diff_eq!(trapezoid(&xs, &ys), 0.7, epsilon = 1e-12);
        assert_abs_diff_eq!(trapezoid_uniform(&ys, xs[1] - xs[0]), 0.7, epsilon = 1e-12);
    }
}
