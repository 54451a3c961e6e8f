//! Dense linear algebra kernels for small symmetric systems.
//!
//! Everything here operates on band-count-sized matrices (a few hundred rows
//! at most), where a cyclic Jacobi sweep or a Householder factorization is
//! plenty fast and fully deterministic. Eigenvalues come back sorted in
//! non-increasing order with a fixed sign convention on the vectors.

use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{Error, Result};

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Returns `(eigenvalues, eigenvectors)` with eigenvalues non-increasing and
/// eigenvectors as columns. Each vector is negated if its entry of largest
/// magnitude is negative, so results are deterministic across runs.
pub fn symmetric_eigen(a: ArrayView2<f64>) -> (Array1<f64>, Array2<f64>) {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "symmetric_eigen needs a square matrix");
    let mut m = a.to_owned();
    let mut v = Array2::<f64>::eye(n);

    let frob: f64 = m.iter().map(|x| x * x).sum::<f64>().sqrt();
    let tol = 1e-15 * frob.max(f64::MIN_POSITIVE);
    let max_sweeps = 64;

    for _ in 0..max_sweeps {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += m[[p, q]] * m[[p, q]];
            }
        }
        if (2.0 * off).sqrt() <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[[p, q]];
                if apq.abs() <= tol / (n as f64) {
                    continue;
                }
                let app = m[[p, p]];
                let aqq = m[[q, q]];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    -1.0 / (-theta + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                for i in 0..n {
                    let mip = m[[i, p]];
                    let miq = m[[i, q]];
                    m[[i, p]] = c * mip - s * miq;
                    m[[i, q]] = s * mip + c * miq;
                }
                for j in 0..n {
                    let mpj = m[[p, j]];
                    let mqj = m[[q, j]];
                    m[[p, j]] = c * mpj - s * mqj;
                    m[[q, j]] = s * mpj + c * mqj;
                }
                for i in 0..n {
                    let vip = v[[i, p]];
                    let viq = v[[i, q]];
                    v[[i, p]] = c * vip - s * viq;
                    v[[i, q]] = s * vip + c * viq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[[j, j]].partial_cmp(&m[[i, i]]).unwrap());

    let mut eigvals = Array1::<f64>::zeros(n);
    let mut eigvecs = Array2::<f64>::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        eigvals[dst] = m[[src, src]];
        // Sign convention: negate the vector if its entry of largest
        // magnitude is negative (first such entry on magnitude ties).
        let col = v.column(src);
        let mut best = 0usize;
        for (i, x) in col.iter().enumerate() {
            if x.abs() > col[best].abs() {
                best = i;
            }
        }
        let flip = col[best] < 0.0;
        for i in 0..n {
            eigvecs[[i, dst]] = if flip { -col[i] } else { col[i] };
        }
    }
    (eigvals, eigvecs)
}

/// Least-squares solution of an overdetermined `m x n` system (`m >= n`)
/// by Householder QR, plus the condition number of the system matrix
/// (ratio of extreme singular values, computed from `R`).
pub fn lstsq(a: ArrayView2<f64>, b: &[f64]) -> Result<(Vec<f64>, f64)> {
    let (m, n) = (a.nrows(), a.ncols());
    if b.len() != m {
        return Err(Error::DimMismatch(format!(
            "lstsq rhs length {} does not match {} rows",
            b.len(),
            m
        )));
    }
    if m < n {
        return Err(Error::Rank(format!(
            "lstsq system is {m} x {n}; needs m >= n"
        )));
    }

    let mut r = a.to_owned();
    let mut rhs = b.to_vec();

    for j in 0..n {
        // Householder vector for column j below the diagonal.
        let mut norm = 0.0;
        for i in j..m {
            norm += r[[i, j]] * r[[i, j]];
        }
        let norm = norm.sqrt();
        if norm == 0.0 {
            continue;
        }
        let alpha = if r[[j, j]] >= 0.0 { -norm } else { norm };
        let mut v = vec![0.0; m - j];
        v[0] = r[[j, j]] - alpha;
        for i in (j + 1)..m {
            v[i - j] = r[[i, j]];
        }
        let vtv: f64 = v.iter().map(|x| x * x).sum();
        if vtv == 0.0 {
            continue;
        }
        r[[j, j]] = alpha;
        for i in (j + 1)..m {
            r[[i, j]] = 0.0;
        }
        for col in (j + 1)..n {
            let mut dot = 0.0;
            for i in j..m {
                dot += v[i - j] * r[[i, col]];
            }
            let f = 2.0 * dot / vtv;
            for i in j..m {
                r[[i, col]] -= f * v[i - j];
            }
        }
        let mut dot = 0.0;
        for i in j..m {
            dot += v[i - j] * rhs[i];
        }
        let f = 2.0 * dot / vtv;
        for i in j..m {
            rhs[i] -= f * v[i - j];
        }
    }

    // Condition number via the singular values of R (Jacobi on R^T R).
    let mut rtr = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for k in 0..=i.min(j) {
                s += r[[k, i]] * r[[k, j]];
            }
            rtr[[i, j]] = s;
        }
    }
    let (vals, _) = symmetric_eigen(rtr.view());
    let smax = vals[0].max(0.0).sqrt();
    let smin = vals[n - 1].max(0.0).sqrt();
    let cond = if smin > 0.0 {
        smax / smin
    } else {
        f64::INFINITY
    };

    // Back substitution on the leading n x n of R.
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = rhs[i];
        for j in (i + 1)..n {
            s -= r[[i, j]] * x[j];
        }
        let d = r[[i, i]];
        if d == 0.0 {
            return Err(Error::Conditioning(format!(
                "singular least-squares system (zero pivot at {i})"
            )));
        }
        x[i] = s / d;
    }
    Ok((x, cond))
}

/// Solve `a x = b` for symmetric positive-definite `a` by Cholesky.
pub fn solve_spd(a: ArrayView2<f64>, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    if b.len() != n {
        return Err(Error::DimMismatch("solve_spd rhs length".into()));
    }
    let mut l = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                if s <= 0.0 {
                    return Err(Error::Conditioning(format!(
                        "matrix not positive definite (pivot {s:.3e} at {i})"
                    )));
                }
                l[[i, i]] = s.sqrt();
            } else {
                l[[i, j]] = s / l[[j, j]];
            }
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[[i, k]] * y[k];
        }
        y[i] = s / l[[i, i]];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[[k, i]] * x[k];
        }
        x[i] = s / l[[i, i]];
    }
    Ok(x)
}

/// Orthonormalize the columns of `a` in place by two passes of modified
/// Gram-Schmidt. Errors if a column is (numerically) dependent on earlier
/// ones.
pub fn orthonormalize_columns(a: &mut Array2<f64>) -> Result<()> {
    let (m, n) = (a.nrows(), a.ncols());
    if n > m {
        return Err(Error::Rank(format!(
            "cannot orthonormalize {n} columns in {m} dimensions"
        )));
    }
    for _pass in 0..2 {
        for j in 0..n {
            for i in 0..j {
                let mut dot = 0.0;
                for r in 0..m {
                    dot += a[[r, i]] * a[[r, j]];
                }
                for r in 0..m {
                    let prev = a[[r, i]];
                    a[[r, j]] -= dot * prev;
                }
            }
            let norm: f64 = (0..m).map(|r| a[[r, j]] * a[[r, j]]).sum::<f64>().sqrt();
            if norm < 1e-300 {
                return Err(Error::Rank(format!("column {j} is linearly dependent")));
            }
            for r in 0..m {
                a[[r, j]] /= norm;
            }
        }
    }
    Ok(())
}
