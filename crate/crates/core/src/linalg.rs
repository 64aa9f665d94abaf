//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Singular values sorted in ascending order.
pub(crate) fn singular_values_ascending(a: &DMatrix<f64>) -> Vec<f64> {
    let mut s: Vec<f64> = a.clone().singular_values().iter().copied().collect();
    s.sort_by(|x, y| x.partial_cmp(y).expect("finite singular values"));
    s
}

/// Real eigendecomposition `Q = B diag(d) B^{-1}` of a diagonalizable matrix
/// with real spectrum. Returns `(d, B, B^{-1})`.
pub(crate) fn real_eigen(
    q: &DMatrix<f64>,
    max_condition: f64,
) -> Result<(Vec<f64>, DMatrix<f64>, DMatrix<f64>)> {
    let m = q.nrows();
    let scale = q.abs().max().max(1.0);
    if q.iter().any(|v| !v.is_finite()) {
        return Err(Error::Eigen("non-finite matrix".into()));
    }
    let ev = q.clone().complex_eigenvalues();
    let mut reals = Vec::with_capacity(m);
    for z in ev.iter() {
        if z.im.abs() > 1e-10 * scale {
            return Err(Error::Eigen(format!(
                "complex eigenvalue {} + {}i",
                z.re, z.im
            )));
        }
        reals.push(z.re);
    }
    reals.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));

    // Cluster numerically repeated eigenvalues.
    let cluster_tol = 1e-8 * scale;
    let mut clusters: Vec<Vec<f64>> = Vec::new();
    for v in reals {
        match clusters.last_mut() {
            Some(c) if (v - c[c.len() - 1]).abs() <= cluster_tol => c.push(v),
            _ => clusters.push(vec![v]),
        }
    }

    let mut values = Vec::with_capacity(m);
    let mut b = DMatrix::zeros(m, m);
    let mut col = 0;
    for c in clusters {
        let lambda = c.iter().sum::<f64>() / c.len() as f64;
        let r = c.len();
        let shifted = q - DMatrix::identity(m, m) * lambda;
        let svd = shifted.svd(false, true);
        let v_t = svd.v_t.expect("requested right singular vectors");
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&i, &j| {
            svd.singular_values[i]
                .partial_cmp(&svd.singular_values[j])
                .expect("finite singular values")
        });
        let null_tol = 1e-7 * scale;
        if svd.singular_values[order[r - 1]] > null_tol {
            return Err(Error::Eigen(format!(
                "defective eigenvalue {lambda} (multiplicity {r})"
            )));
        }
        for &i in order.iter().take(r) {
            b.set_column(col, &v_t.row(i).transpose());
            values.push(if lambda.abs() <= cluster_tol {
                0.0
            } else {
                lambda
            });
            col += 1;
        }
    }

    let s = singular_values_ascending(&b);
    let cond = s[m - 1] / s[0];
    if !(cond <= max_condition) {
        return Err(Error::Eigen(format!(
            "eigenvector matrix condition number {cond:e}"
        )));
    }
    let b_inv = b
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Eigen("singular eigenvector matrix".into()))?;
    Ok((values, b, b_inv))
}

/// Row vector `v^T exp(Q)` for a small row-major matrix by truncated Taylor
/// series, with scaling for larger norms. `scratch` needs `2m` entries.
pub(crate) fn row_expm(v: &mut [f64], q: &[f64], m: usize, scratch: &mut [f64]) {
    let norm: f64 = (0..m)
        .map(|r| (0..m).map(|c| q[r * m + c].abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let steps = if norm > 0.5 {
        (norm / 0.5).ceil() as usize
    } else {
        1
    };
    let h = 1.0 / steps as f64;
    let (term, next) = scratch.split_at_mut(m);
    for _ in 0..steps {
        term.copy_from_slice(v);
        for j in 1..=18 {
            let w = h / j as f64;
            let mut mag = 0.0;
            for c in 0..m {
                let mut s = 0.0;
                for r in 0..m {
                    s += term[r] * q[r * m + c];
                }
                next[c] = s * w;
                mag += next[c].abs();
            }
            term[..m].copy_from_slice(&next[..m]);
            for c in 0..m {
                v[c] += next[c];
            }
            if mag <= 1e-17 {
                break;
            }
        }
    }
}

/// Solve `a x = b` by LU with partial pivoting.
pub(crate) fn lu_solve(a: DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    a.lu().solve(b)
}
