//! Small dense/banded linear algebra used by the quadrature builder, the
//! degenerate elliptic solve and the modulation Newton step.

use crate::error::Error;
use crate::Result;

/// Solves `A x = b` for a dense row-major `n x n` matrix by LU with partial
/// pivoting. `a` and `b` are consumed as scratch; the solution lands in `b`.
pub fn solve_dense(a: &mut [f64], b: &mut [f64]) -> Result<()> {
    let n = b.len();
    assert_eq!(a.len(), n * n);
    for col in 0..n {
        // pivot
        let mut piv = col;
        let mut max = a[col * n + col].abs();
        for row in col + 1..n {
            let v = a[row * n + col].abs();
            if v > max {
                max = v;
                piv = row;
            }
        }
        if max == 0.0 || !max.is_finite() {
            return Err(Error::numeric(format!(
                "singular matrix at column {col} (pivot {max:.3e})"
            )));
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
                for k in col + 1..n {
                    a[row * n + k] -= f * a[col * n + k];
                }
                b[row] -= f * b[col];
            }
            a[row * n + col] = 0.0;
        }
    }
    for row in (0..n).rev() {
        let mut s = b[row];
        for k in row + 1..n {
            s -= a[row * n + k] * b[k];
        }
        b[row] = s / a[row * n + row];
    }
    Ok(())
}

/// Thomas algorithm for a tridiagonal system. `sub[i]` couples row `i` to
/// `i-1` (`sub[0]` unused), `sup[i]` couples row `i` to `i+1` (last unused).
/// Stable for the diagonally dominant systems produced by the Numerov
/// discretization.
pub fn solve_tridiagonal(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &mut [f64]) -> Result<()> {
    let n = rhs.len();
    assert!(sub.len() == n && diag.len() == n && sup.len() == n);
    let mut c = vec![0.0; n];
    let mut denom = diag[0];
    if denom == 0.0 {
        return Err(Error::numeric("tridiagonal solve: zero leading pivot"));
    }
    c[0] = sup[0] / denom;
    rhs[0] /= denom;
    for i in 1..n {
        denom = diag[i] - sub[i] * c[i - 1];
        if denom == 0.0 || !denom.is_finite() {
            return Err(Error::numeric(format!(
                "tridiagonal solve: breakdown at row {i}"
            )));
        }
        c[i] = sup[i] / denom;
        rhs[i] = (rhs[i] - sub[i] * rhs[i - 1]) / denom;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= c[i] * rhs[i + 1];
    }
    Ok(())
}

/// Eigenvalues of a symmetric tridiagonal matrix by the implicit QL method
/// with Wilkinson shifts. `d` holds the diagonal (overwritten with the
/// eigenvalues, unsorted), `e` the subdiagonal (`e[0]` unused, destroyed).
pub fn symtri_eigenvalues(d: &mut [f64], e: &mut [f64]) -> Result<()> {
    let n = d.len();
    if n == 0 {
        return Ok(());
    }
    assert_eq!(e.len(), n);
    // shift the subdiagonal down for the classic indexing e[i] = T[i, i+1]
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 50 {
                return Err(Error::numeric("symtri_eigenvalues: too many QL iterations"));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c) = (1.0f64, 1.0f64);
            let mut p = 0.0f64;
            for i in (l..m).rev() {
                let mut f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                f = 0.0;
                let _ = f;
            }
            if r == 0.0 && m > l + 1 {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}

/// Value and first derivative of the cubic Lagrange interpolant through four
/// equally spaced samples `f` at `x0, x0+h, ..., x0+3h`, evaluated at `x`.
pub fn cubic_interp(x0: f64, h: f64, f: &[f64; 4], x: f64) -> (f64, f64) {
    // Work in the local variable t = (x - x0)/h to keep coefficients O(1).
    let t = (x - x0) / h;
    let mut val = 0.0;
    let mut der = 0.0;
    for j in 0..4 {
        let mut lj = 1.0;
        let mut dj = 0.0;
        for k in 0..4 {
            if k == j {
                continue;
            }
            let denom = (j as f64) - (k as f64);
            dj = dj * (t - k as f64) / denom + lj / denom;
            lj *= (t - k as f64) / denom;
        }
        val += f[j] * lj;
        der += f[j] * dj;
    }
    (val, der / h)
}

/// Least-squares straight line `y = a x + b`; returns `(a, b, rms_residual)`.
pub fn fit_line(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let sx: f64 = x.iter().sum();
    let sy: f64 = y.iter().sum();
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let denom = n * sxx - sx * sx;
    let a = (n * sxy - sx * sy) / denom;
    let b = (sy - a * sx) / n;
    let rms = (x
        .iter()
        .zip(y)
        .map(|(&xi, &yi)| {
            let r = yi - (a * xi + b);
            r * r
        })
        .sum::<f64>()
        / n)
        .sqrt();
    (a, b, rms)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_solve_roundtrip() {
        let a0 = [4.0, 1.0, -1.0, 2.0, 7.0, 1.0, 1.0, -3.0, 12.0];
        let x_true = [1.0, -2.0, 0.5];
        let mut b = [0.0; 3];
        for i in 0..3 {
            for j in 0..3 {
                b[i] += a0[i * 3 + j] * x_true[j];
            }
        }
        let mut a = a0;
        solve_dense(&mut a, &mut b).unwrap();
        for i in 0..3 {
            assert!((b[i] - x_true[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn dense_solve_detects_singular() {
        let mut a = [1.0, 2.0, 2.0, 4.0];
        let mut b = [1.0, 2.0];
        assert!(solve_dense(&mut a, &mut b).is_err());
    }

    #[test]
    fn tridiagonal_matches_dense() {
        let n = 6;
        let sub = vec![0.9; n];
        let diag = vec![3.0; n];
        let sup = vec![1.1; n];
        let mut rhs: Vec<f64> = (0..n).map(|i| (i as f64).sin() + 0.3).collect();
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            a[i * n + i] = diag[i];
            if i > 0 {
                a[i * n + i - 1] = sub[i];
            }
            if i + 1 < n {
                a[i * n + i + 1] = sup[i];
            }
        }
        let mut dense_rhs = rhs.clone();
        solve_dense(&mut a, &mut dense_rhs).unwrap();
        solve_tridiagonal(&sub, &diag, &sup, &mut rhs).unwrap();
        for i in 0..n {
            assert!((rhs[i] - dense_rhs[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn symtri_eigenvalues_toeplitz() {
        // Eigenvalues of the (-1, 2, -1) Toeplitz matrix are known in closed form.
        let n = 12;
        let mut d = vec![2.0; n];
        let mut e = vec![-1.0; n];
        symtri_eigenvalues(&mut d, &mut e).unwrap();
        d.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (k, lam) in d.iter().enumerate() {
            let expect = 2.0 - 2.0 * (std::f64::consts::PI * (k + 1) as f64 / (n + 1) as f64).cos();
            assert!((lam - expect).abs() < 1e-12, "k={k}: {lam} vs {expect}");
        }
    }

    #[test]
    fn cubic_interp_exact_on_cubics() {
        let f = |x: f64| 2.0 * x * x * x - x * x + 3.0 * x - 5.0;
        let fp = |x: f64| 6.0 * x * x - 2.0 * x + 3.0;
        let (x0, h) = (1.25, 0.3);
        let samples = [f(x0), f(x0 + h), f(x0 + 2.0 * h), f(x0 + 3.0 * h)];
        for &x in &[1.3, 1.5, 1.9, 2.1] {
            let (v, d) = cubic_interp(x0, h, &samples, x);
            assert!((v - f(x)).abs() < 1e-12);
            assert!((d - fp(x)).abs() < 1e-11);
        }
    }

    #[test]
    fn line_fit_recovers_exact_line() {
        let x: Vec<f64> = (0..20).map(|i| 0.1 * i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| -0.7 * v + 2.0).collect();
        let (a, b, rms) = fit_line(&x, &y);
        assert!((a + 0.7).abs() < 1e-12 && (b - 2.0).abs() < 1e-12 && rms < 1e-12);
    }
}
