//! Action of the matrix exponential and related diagnostics.
//!
//! `exp(tA) F` is computed without forming `exp(tA)`: the interval is split
//! into `s` substeps and each substep applies a degree-`m` Taylor polynomial
//! of the (trace-shifted) matrix, with early termination once successive
//! terms drop below the tolerance. `(m, s)` minimise the matrix-product count
//! `m·s` subject to the truncation bound `Σ_{j>m} θ^j/j! ≤ tol·θ` with
//! `θ = t·α/s`, where `α` is `‖A‖₁` or the sharper `max(‖A^p‖₁^{1/p},
//! ‖A^{p+1}‖₁^{1/(p+1)})` for non-normal matrices.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{lu_solve, singular_values_ascending};

/// Highest Taylor degree considered.
const M_MAX: usize = 55;
/// Highest power used in the `‖A^p‖^{1/p}` estimates.
const P_MAX: usize = 8;
/// Tolerance used for the exponential actions inside [`sensitivity`].
pub const SENSITIVITY_TOL: f64 = 1e-14;

/// Strictly increasing, non-negative evaluation times.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    times: Vec<f64>,
}

impl TimeGrid {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::InvalidArgument("time grid is empty".into()));
        }
        if times.iter().any(|t| !t.is_finite()) || times[0] < 0.0 {
            return Err(Error::InvalidArgument(
                "grid times must be finite and >= 0".into(),
            ));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument(
                "grid times must be strictly increasing".into(),
            ));
        }
        Ok(TimeGrid { times })
    }

    pub fn single(t: f64) -> Result<Self> {
        Self::new(vec![t])
    }

    /// `n + 1` equispaced nodes on `[0, t]`.
    pub fn uniform(t: f64, n: usize) -> Result<Self> {
        Self::new((0..=n).map(|j| t * j as f64 / n as f64).collect())
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Parameters chosen for one grid step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub dt: f64,
    pub degree: usize,
    pub substeps: usize,
    /// Matrix-block products actually performed.
    pub products: usize,
}

#[derive(Debug, Clone)]
pub struct ExpmvResult {
    pub times: Vec<f64>,
    /// `exp(t_i A) F` for each grid time.
    pub values: Vec<DMatrix<f64>>,
    pub steps: Vec<StepInfo>,
    pub tol: f64,
}

/// `θ_m`: largest θ with `Σ_{j>m} θ^j/j! ≤ tol·θ`, for `m = 1..=M_MAX`.
fn theta_table(tol: f64) -> Vec<f64> {
    let rel_tail = |theta: f64, m: usize| -> f64 {
        // Σ_{j>m} θ^{j-1}/j!
        let mut term = 1.0;
        for j in 1..=m + 1 {
            term *= theta / j as f64;
        }
        term /= theta;
        let mut sum = 0.0f64;
        let mut j = m + 1;
        while term > 1e-30 * sum.max(f64::MIN_POSITIVE) && j < m + 400 {
            sum += term;
            j += 1;
            term *= theta / j as f64;
        }
        sum
    };
    (1..=M_MAX)
        .map(|m| {
            let (mut lo, mut hi) = (1e-20f64, 1e3f64);
            for _ in 0..200 {
                let mid = (lo * hi).sqrt();
                if rel_tail(mid, m) <= tol {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi / lo < 1.0 + 1e-12 {
                    break;
                }
            }
            lo
        })
        .collect()
}

fn norm1(a: &DMatrix<f64>) -> f64 {
    a.column_iter().map(|c| c.abs().sum()).fold(0.0, f64::max)
}

fn norm_inf(b: &DMatrix<f64>) -> f64 {
    b.row_iter().map(|r| r.abs().sum()).fold(0.0, f64::max)
}

/// A matrix prepared for repeated exponential actions.
pub struct Expmv {
    shifted: DMatrix<f64>,
    shift: f64,
    tol: f64,
    theta: Vec<f64>,
    norm: f64,
    // max(d_p, d_{p+1}) for p = 2..=P_MAX, computed on demand
    alpha: Option<Vec<f64>>,
}

impl Expmv {
    pub fn new(a: &DMatrix<f64>, tol: f64) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::DimensionMismatch {
                expected: a.nrows(),
                got: a.ncols(),
            });
        }
        if !(1e-15..=1e-6).contains(&tol) {
            return Err(Error::InvalidArgument(format!(
                "tolerance {tol:e} outside [1e-15, 1e-6]"
            )));
        }
        for c in 0..a.ncols() {
            for r in 0..a.nrows() {
                if !a[(r, c)].is_finite() {
                    return Err(Error::NonFinite { row: r, col: c });
                }
            }
        }
        let n = a.nrows();
        let mu = if n > 0 { a.trace() / n as f64 } else { 0.0 };
        let candidate = a - DMatrix::identity(n, n) * mu;
        let (shifted, shift) = if norm1(&candidate) < norm1(a) {
            (candidate, mu)
        } else {
            (a.clone(), 0.0)
        };
        let norm = norm1(&shifted);
        Ok(Expmv {
            shifted,
            shift,
            tol,
            theta: theta_table(tol),
            norm,
            alpha: None,
        })
    }

    fn alphas(&mut self) -> &[f64] {
        if self.alpha.is_none() {
            let mut d = [0.0; P_MAX + 2];
            let mut pow = self.shifted.clone();
            d[1] = self.norm;
            for p in 2..=P_MAX + 1 {
                pow = &pow * &self.shifted;
                d[p] = norm1(&pow).powf(1.0 / p as f64);
            }
            self.alpha = Some((2..=P_MAX).map(|p| d[p].max(d[p + 1])).collect());
        }
        self.alpha.as_deref().expect("just computed")
    }

    /// Choose Taylor degree and number of substeps for time `t`.
    fn plan(&mut self, t: f64) -> (usize, usize) {
        let tn = t * self.norm;
        if tn == 0.0 {
            return (0, 1);
        }
        let theta = self.theta.clone();
        let mut best = (usize::MAX, 0, 0);
        let mut consider = |m: usize, s: usize| {
            let cost = m.saturating_mul(s);
            if cost < best.0 {
                best = (cost, m, s);
            }
        };
        for (i, &th) in theta.iter().enumerate() {
            consider(i + 1, (tn / th).ceil().max(1.0) as usize);
        }
        // Sharper bounds only pay off for larger norms.
        if tn > 2.0 * theta[M_MAX - 1] {
            let alphas = self.alphas().to_vec();
            for (pi, &alpha) in alphas.iter().enumerate() {
                let p = pi + 2;
                let start = p * (p - 1) - 1;
                for m in start.max(1)..=M_MAX {
                    consider(m, (t * alpha / theta[m - 1]).ceil().max(1.0) as usize);
                }
            }
        }
        (best.1, best.2)
    }

    /// `exp(t A) B`.
    pub fn apply(&mut self, t: f64, b: &DMatrix<f64>) -> (DMatrix<f64>, StepInfo) {
        let (m, s) = self.plan(t);
        let mut f = b.clone();
        let mut products = 0;
        if m == 0 {
            if self.shift != 0.0 {
                f *= (t * self.shift).exp();
            }
            return (
                f,
                StepInfo {
                    dt: t,
                    degree: 0,
                    substeps: 1,
                    products,
                },
            );
        }
        let h = t / s as f64;
        let eta = (h * self.shift).exp();
        let mut term = b.clone();
        for _ in 0..s {
            let mut c1 = norm_inf(&term);
            for j in 1..=m {
                term = &self.shifted * &term * (h / j as f64);
                products += 1;
                let c2 = norm_inf(&term);
                f += &term;
                if c1 + c2 <= self.tol * norm_inf(&f) {
                    break;
                }
                c1 = c2;
            }
            f *= eta;
            term.copy_from(&f);
        }
        (
            f,
            StepInfo {
                dt: t,
                degree: m,
                substeps: s,
                products,
            },
        )
    }
}

/// `exp(t_i A) F` for every time of the grid, chaining from one grid time to
/// the next.
pub fn expmv_grid(
    a: &DMatrix<f64>,
    f: &DMatrix<f64>,
    grid: &TimeGrid,
    tol: f64,
) -> Result<ExpmvResult> {
    if f.nrows() != a.nrows() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            got: f.nrows(),
        });
    }
    let mut op = Expmv::new(a, tol)?;
    let mut values = Vec::with_capacity(grid.len());
    let mut steps = Vec::with_capacity(grid.len());
    let mut current = f.clone();
    let mut last = 0.0;
    for &t in grid.times() {
        let (next, info) = op.apply(t - last, &current);
        current = next;
        last = t;
        values.push(current.clone());
        steps.push(info);
    }
    Ok(ExpmvResult {
        times: grid.times().to_vec(),
        values,
        steps,
        tol,
    })
}

/// `∂/∂p exp(tA) f = ∫_0^t exp((t-s)A) (∂A/∂p) exp(sA) f ds`, by the
/// composite trapezoid rule on `quad_steps + 1` equispaced nodes.
pub fn sensitivity(
    a: &DMatrix<f64>,
    da: &DMatrix<f64>,
    f: &DVector<f64>,
    t: f64,
    quad_steps: usize,
) -> Result<DVector<f64>> {
    if quad_steps < 8 {
        return Err(Error::InvalidArgument(format!(
            "quad_steps must be >= 8, got {quad_steps}"
        )));
    }
    if !(t >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "time must be >= 0, got {t}"
        )));
    }
    if da.shape() != a.shape() || f.len() != a.nrows() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            got: f.len(),
        });
    }
    if t == 0.0 {
        return Ok(DVector::zeros(f.len()));
    }
    let n = quad_steps;
    let h = t / n as f64;
    let fm = DMatrix::from_column_slice(f.len(), 1, f.as_slice());
    let forward = expmv_grid(a, &fm, &TimeGrid::uniform(t, n)?, SENSITIVITY_TOL)?;
    let weight = |j: usize| if j == 0 || j == n { 0.5 * h } else { h };
    let mut op = Expmv::new(a, SENSITIVITY_TOL)?;
    let mut acc = da * &forward.values[0] * weight(0);
    for j in 1..=n {
        let (moved, _) = op.apply(h, &acc);
        acc = moved + da * &forward.values[j] * weight(j);
    }
    Ok(acc.column(0).into_owned())
}

/// Spectral norm of the resolvent `‖(λI - A)^{-1}‖₂ = 1/σ_min(λI - A)`.
/// A numerically singular shift is reported as `+∞`.
pub fn resolvent_norm(a: &DMatrix<f64>, lambda: f64) -> Result<f64> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            got: a.ncols(),
        });
    }
    if let Some(i) = a.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            row: i % a.nrows(),
            col: i / a.nrows(),
        });
    }
    let n = a.nrows();
    let m = DMatrix::identity(n, n) * lambda - a;
    let smin = singular_values_ascending(&m)[0];
    if smin < 1e-300 {
        return Ok(f64::INFINITY);
    }
    Ok(1.0 / smin)
}

/// Partial sum of the alternating resolvent series
///
/// ```text
/// λ Σ_{n=1}^{N} (-1)^{n-1} e^{nλt}/(n-1)! · (nλI - A)^{-1} f
/// ```
///
/// which tends to `exp(tA) f` as `λ → ∞`. Stops once a term is negligible
/// against the running sum; fails with a range error once `nλt > 700`.
pub fn phragmen_series(
    a: &DMatrix<f64>,
    f: &DVector<f64>,
    t: f64,
    lambda: f64,
    max_terms: usize,
) -> Result<DVector<f64>> {
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!("time must be > 0, got {t}")));
    }
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "lambda must be > 0, got {lambda}"
        )));
    }
    if f.len() != a.nrows() || !a.is_square() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            got: f.len(),
        });
    }
    let k = a.nrows();
    let mut sum = DVector::zeros(k);
    let mut log_fact = 0.0; // ln (n-1)!
    for n in 1..=max_terms {
        if n > 1 {
            log_fact += ((n - 1) as f64).ln();
        }
        let nl = n as f64 * lambda;
        if nl * t > 700.0 {
            return Err(Error::Range(format!(
                "e^(n λ t) overflows at n = {n} (n λ t = {:.1}) before convergence",
                nl * t
            )));
        }
        let shifted = DMatrix::identity(k, k) * nl - a;
        let r = lu_solve(shifted, f).ok_or(Error::SingularResolvent { lambda: nl })?;
        let sign = if n % 2 == 1 { 1.0 } else { -1.0 };
        let coef = sign * (lambda.ln() + nl * t - log_fact).exp();
        let term = r * coef;
        sum += &term;
        if term.norm() < 1e-16 * sum.norm() {
            break;
        }
    }
    Ok(sum)
}
