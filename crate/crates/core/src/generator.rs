//! Truncated matrix generators.
//!
//! Column `i` of `A_k` holds the basis coefficients of the generator applied
//! to the i-th basis function, so `A_k` acts on coefficient vectors from the
//! left: `g(t) = exp(t A_k) f`. Powers that fall outside the basis are either
//! dropped (finite section) or replaced by their Taylor truncation around an
//! expansion point.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::basis::{binomial, enumerate_basis, BasisLayout};
use crate::dual::{Dual, Scalar};
use crate::error::{Error, Result};

/// Row-sum tolerance for rating generator matrices.
pub const GENERATOR_ROW_TOL: f64 = 1e-12;

/// CIR short rate `dX = θ(μ - X)dt + σ√X dW`, killed at rate `X` when discounted.
#[derive(Debug, Clone, PartialEq)]
pub struct CirParams {
    pub theta: f64,
    pub mu: f64,
    pub sigma: f64,
    pub discounted: bool,
}

/// Black-Karasinski: OU log-rate `dX = θ(μ - X)dt + σ dW`, short rate `e^X`.
///
/// By default `e^x` is expanded exactly at the Taylor point. With
/// `series_center = Some(s)` it is instead expanded around `s` and truncated
/// at total degree `(k - 1) + guard` (guard defaults to `k`) before the
/// projection.
#[derive(Debug, Clone, PartialEq)]
pub struct BkParams {
    pub theta: f64,
    pub mu: f64,
    pub sigma: f64,
    pub discounted: bool,
    pub series_center: Option<f64>,
    pub series_guard: Option<usize>,
}

impl BkParams {
    pub fn new(theta: f64, mu: f64, sigma: f64) -> Self {
        BkParams {
            theta,
            mu,
            sigma,
            discounted: true,
            series_center: None,
            series_guard: None,
        }
    }
}

/// Rating migration driven by a multivariate CIR factor:
///
/// ```text
/// dY = K(μ - Y)dt + diag(σ_i √Y_i) dW,   Q(y) = Σ y_i Q_i
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct CreditParams {
    pub k: DMatrix<f64>,
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    pub q: Vec<DMatrix<f64>>,
}

impl CreditParams {
    pub fn n(&self) -> usize {
        self.mu.len()
    }

    pub fn m(&self) -> usize {
        self.q.first().map_or(0, |q| q.nrows())
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if n == 0 {
            return Err(Error::InvalidModel(
                "credit model needs at least one factor".into(),
            ));
        }
        if self.k.nrows() != n || self.k.ncols() != n {
            return Err(Error::InvalidModel(format!(
                "K must be {n}x{n}, got {}x{}",
                self.k.nrows(),
                self.k.ncols()
            )));
        }
        if self.sigma.len() != n {
            return Err(Error::InvalidModel(format!("sigma must have {n} entries")));
        }
        if self.q.len() != n {
            return Err(Error::InvalidModel(format!(
                "expected {n} Q matrices, got {}",
                self.q.len()
            )));
        }
        for i in 0..n {
            if !(self.k[(i, i)] >= 0.0) {
                return Err(Error::InvalidModel(format!(
                    "K[{i},{i}] must be non-negative"
                )));
            }
        }
        if self
            .k
            .iter()
            .chain(&self.mu)
            .chain(&self.sigma)
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidModel("non-finite credit parameter".into()));
        }
        if self.sigma.iter().any(|&s| s < 0.0) {
            return Err(Error::InvalidModel("sigma must be non-negative".into()));
        }
        let m = self.m();
        if m == 0 {
            return Err(Error::InvalidModel("rating count must be positive".into()));
        }
        for (idx, q) in self.q.iter().enumerate() {
            check_generator(idx, q, m)?;
        }
        Ok(())
    }
}

/// Check that `q` is an m×m generator matrix: zero row sums, non-negative
/// off-diagonal entries.
pub fn check_generator(index: usize, q: &DMatrix<f64>, m: usize) -> Result<()> {
    if q.nrows() != m || q.ncols() != m {
        return Err(Error::NotAGenerator {
            index,
            reason: format!("expected {m}x{m}, got {}x{}", q.nrows(), q.ncols()),
        });
    }
    for r in 0..m {
        let row = q.row(r);
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::NotAGenerator {
                index,
                reason: format!("row {r} not finite"),
            });
        }
        let sum: f64 = row.iter().sum();
        if sum.abs() > GENERATOR_ROW_TOL {
            return Err(Error::NotAGenerator {
                index,
                reason: format!("row {r} sums to {sum:e}"),
            });
        }
        if let Some(c) = (0..m).find(|&c| c != r && q[(r, c)] < 0.0) {
            return Err(Error::NotAGenerator {
                index,
                reason: format!("negative off-diagonal entry at ({r}, {c})"),
            });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    Cir(CirParams),
    Bk(BkParams),
    Credit(CreditParams),
}

impl ModelSpec {
    pub fn tag(&self) -> &'static str {
        match self {
            ModelSpec::Cir(_) => "cir",
            ModelSpec::Bk(_) => "bk",
            ModelSpec::Credit(_) => "credit",
        }
    }

    /// State dimension of the driving factor.
    pub fn dim(&self) -> usize {
        match self {
            ModelSpec::Credit(c) => c.n(),
            _ => 1,
        }
    }

    /// Long-run mean of the driving factor, the default Taylor point.
    pub fn mean(&self) -> Vec<f64> {
        match self {
            ModelSpec::Cir(p) => vec![p.mu],
            ModelSpec::Bk(p) => vec![p.mu],
            ModelSpec::Credit(c) => c.mu.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check = |theta: f64, mu: f64, sigma: f64| -> Result<()> {
            if ![theta, mu, sigma].iter().all(|v| v.is_finite()) {
                return Err(Error::InvalidModel("non-finite parameter".into()));
            }
            if theta < 0.0 || sigma < 0.0 {
                return Err(Error::InvalidModel(
                    "theta and sigma must be non-negative".into(),
                ));
            }
            Ok(())
        };
        match self {
            ModelSpec::Cir(p) => {
                check(p.theta, p.mu, p.sigma)?;
                if p.mu < 0.0 {
                    return Err(Error::InvalidModel("CIR mean must be non-negative".into()));
                }
                Ok(())
            }
            ModelSpec::Bk(p) => {
                check(p.theta, p.mu, p.sigma)?;
                if p.series_center.is_some_and(|s| !s.is_finite()) {
                    return Err(Error::InvalidModel("non-finite series center".into()));
                }
                Ok(())
            }
            ModelSpec::Credit(c) => c.validate(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExpansionPoint {
    /// The model's long-run mean (μ).
    ModelMean,
    At(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Projection {
    FiniteSection,
    Taylor(ExpansionPoint),
}

impl Projection {
    pub fn taylor_at_mean() -> Self {
        Projection::Taylor(ExpansionPoint::ModelMean)
    }

    fn resolve(&self, model: &ModelSpec) -> Result<Option<Vec<f64>>> {
        match self {
            Projection::FiniteSection => Ok(None),
            Projection::Taylor(ExpansionPoint::ModelMean) => Ok(Some(model.mean())),
            Projection::Taylor(ExpansionPoint::At(x0)) => {
                if x0.len() != model.dim() {
                    return Err(Error::DimensionMismatch {
                        expected: model.dim(),
                        got: x0.len(),
                    });
                }
                if x0.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidArgument("Taylor point must be finite".into()));
                }
                Ok(Some(x0.clone()))
            }
        }
    }
}

/// A projected matrix generator `A_k` together with its provenance.
///
/// Besides the monomial-basis matrix, the generator keeps its representation
/// in the basis shifted to the expansion point `c`, `(x - c)^α`. There the
/// Taylor projection is a plain truncation and the entries stay moderate, so
/// exponential actions should be computed with [`MatrixGenerator::centered`]
/// and evaluated with [`MatrixGenerator::basis_values`]. For the finite
/// section `c = 0` and both representations coincide.
#[derive(Debug, Clone)]
pub struct MatrixGenerator {
    a: DMatrix<f64>,
    centered: DMatrix<f64>,
    center: Vec<f64>,
    layout: Arc<BasisLayout>,
    model: ModelSpec,
    projection: Projection,
}

impl MatrixGenerator {
    /// Dispatch to the builder for the model family. `order` is k for the
    /// short-rate models and ℓ (monomial degrees) for the credit model.
    pub fn build(model: &ModelSpec, order: usize, projection: &Projection) -> Result<Self> {
        match model {
            ModelSpec::Cir(_) => build_cir(model, order, projection),
            ModelSpec::Bk(_) => build_bk(model, order, projection),
            ModelSpec::Credit(_) => build_credit(model, order, projection),
        }
    }

    fn assemble(
        centered: DMatrix<f64>,
        center: Vec<f64>,
        layout: BasisLayout,
        model: &ModelSpec,
        projection: &Projection,
    ) -> Self {
        let dim = layout.dim();
        let a = if center.iter().all(|&c| c == 0.0) {
            centered.clone()
        } else {
            let cols = to_monomial_basis(centered.as_slice(), &layout, &center);
            DMatrix::from_column_slice(dim, dim, &cols)
        };
        MatrixGenerator {
            a,
            centered,
            center,
            layout: Arc::new(layout),
            model: model.clone(),
            projection: projection.clone(),
        }
    }

    /// `A_k` in the monomial basis.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.a
    }

    /// `A_k` in the basis `(x - c)^α ⊗ e_r` centered at the expansion point.
    pub fn centered(&self) -> &DMatrix<f64> {
        &self.centered
    }

    /// Expansion point `c` (zero for the finite section).
    pub fn center(&self) -> &[f64] {
        &self.center
    }

    /// Centered basis functions evaluated at `point`, one entry per
    /// monomial (rating blocks are not expanded).
    pub fn basis_values(&self, point: &[f64]) -> Result<Vec<f64>> {
        if point.len() != self.layout.n() {
            return Err(Error::DimensionMismatch {
                expected: self.layout.n(),
                got: point.len(),
            });
        }
        let shifted: Vec<f64> = point.iter().zip(&self.center).map(|(x, c)| x - c).collect();
        Ok(self
            .layout
            .monomials()
            .iter()
            .map(|a| a.eval(&shifted))
            .collect())
    }

    /// `Σ_α g[(α, rating)] (x - c)^α` for a centered coefficient vector.
    pub fn evaluate_centered(&self, g: &[f64], point: &[f64], rating: usize) -> Result<f64> {
        let m = self.layout.m();
        if g.len() != self.layout.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.layout.dim(),
                got: g.len(),
            });
        }
        if rating >= m {
            return Err(Error::InvalidArgument(format!(
                "rating {rating} out of range 0..{m}"
            )));
        }
        let b = self.basis_values(point)?;
        Ok(b.iter()
            .enumerate()
            .map(|(i, v)| g[i * m + rating] * v)
            .sum())
    }

    pub fn layout(&self) -> &Arc<BasisLayout> {
        &self.layout
    }

    pub fn model(&self) -> &ModelSpec {
        &self.model
    }

    pub fn projection(&self) -> &Projection {
        &self.projection
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }
}

fn to_matrix<T: Scalar>(k: usize, cols: &[T], f: impl Fn(T) -> f64) -> DMatrix<f64> {
    DMatrix::from_iterator(k, k, cols.iter().map(|&v| f(v)))
}

/// `T Ã T^{-1}` for a column-major `Ã` in the centered basis, where `T`
/// maps centered coefficients to monomial ones:
/// `(y - c)^α = Σ_{β ≤ α} Π_i C(α_i, β_i) (-c_i)^{α_i - β_i} y^β`.
fn to_monomial_basis<T: Scalar>(centered: &[T], layout: &BasisLayout, c: &[T]) -> Vec<T> {
    let mons = layout.monomials();
    let nm = mons.len();
    let m = layout.m();
    let dim = layout.dim();
    // shift[β][α] = Π_i C(α_i, β_i) s_i^{α_i - β_i}
    let shift_matrix = |s: &[T]| -> Vec<Vec<(usize, T)>> {
        mons.iter()
            .map(|beta| {
                let mut row = Vec::new();
                for (ai, alpha) in mons.iter().enumerate() {
                    let (a, b) = (alpha.exponents(), beta.exponents());
                    if a.iter().zip(b).any(|(x, y)| y > x) {
                        continue;
                    }
                    let mut w = T::cst(1.0);
                    for i in 0..a.len() {
                        let d = (a[i] - b[i]) as i32;
                        w = w * T::cst(binomial(a[i] as usize, b[i] as usize)) * s[i].powi(d);
                    }
                    row.push((ai, w));
                }
                row
            })
            .collect()
    };
    let neg: Vec<T> = c.iter().map(|&v| -v).collect();
    let t = shift_matrix(&neg);
    let t_inv = shift_matrix(c);
    let zero = T::cst(0.0);
    // X = Ã (T^{-1} ⊗ I): column (δ, r) = Σ_α Ã[:, (α, r)] T^{-1}[α, δ]
    let mut x = vec![zero; dim * dim];
    for (alpha, row) in t_inv.iter().enumerate() {
        for &(delta, w) in row {
            for r in 0..m {
                let src = (alpha * m + r) * dim;
                let dst = (delta * m + r) * dim;
                for i in 0..dim {
                    let v = centered[src + i];
                    if !v.is_zero() {
                        x[dst + i] += v * w;
                    }
                }
            }
        }
    }
    // Y = (T ⊗ I) X: row (γ, s) = Σ_β T[γ, β] X[(β, s), :]
    let mut y = vec![zero; dim * dim];
    for (gamma, row) in t.iter().enumerate() {
        for &(beta, w) in row {
            for s in 0..m {
                let (src, dst) = (beta * m + s, gamma * m + s);
                for col in 0..dim {
                    let v = x[col * dim + src];
                    if !v.is_zero() {
                        y[col * dim + dst] += w * v;
                    }
                }
            }
        }
    }
    debug_assert_eq!(nm * m, dim);
    y
}

/// Column-major CIR generator in the basis `(x - c)^i`, truncated to `k`
/// terms. With `discounted = false` this is the univariate driving-factor
/// block of the credit model.
fn cir_columns<T: Scalar>(theta: T, mu: T, sigma: T, discounted: bool, k: usize, c: T) -> Vec<T> {
    let half_s2 = T::cst(0.5) * sigma * sigma;
    let drift0 = theta * (mu - c);
    let mut out = Vec::with_capacity(k * k);
    for i in 0..k {
        let fi = T::cst(i as f64);
        let mut col = vec![T::cst(0.0); k + 1];
        // θ(μ - x) ∂ with x = u + c
        col[i] += -(theta * fi);
        if i >= 1 {
            col[i - 1] += drift0 * fi;
        }
        // ½σ² x ∂²
        if i >= 2 {
            let d2 = half_s2 * fi * T::cst(i as f64 - 1.0);
            col[i - 1] += d2;
            col[i - 2] += d2 * c;
        }
        if discounted {
            col[i + 1] += T::cst(-1.0);
            col[i] += -c;
        }
        col.truncate(k);
        out.extend(col);
    }
    out
}

fn cir_params(model: &ModelSpec) -> Result<&CirParams> {
    match model {
        ModelSpec::Cir(p) => Ok(p),
        other => Err(Error::InvalidModel(format!(
            "expected a CIR model, got {}",
            other.tag()
        ))),
    }
}

fn bk_params(model: &ModelSpec) -> Result<&BkParams> {
    match model {
        ModelSpec::Bk(p) => Ok(p),
        other => Err(Error::InvalidModel(format!(
            "expected a BK model, got {}",
            other.tag()
        ))),
    }
}

fn credit_params(model: &ModelSpec) -> Result<&CreditParams> {
    match model {
        ModelSpec::Credit(p) => Ok(p),
        other => Err(Error::InvalidModel(format!(
            "expected a credit model, got {}",
            other.tag()
        ))),
    }
}

/// CIR bond-price generator on `(1, x, ..., x^{k-1})`.
pub fn build_cir(model: &ModelSpec, k: usize, projection: &Projection) -> Result<MatrixGenerator> {
    let p = cir_params(model)?;
    model.validate()?;
    if k < 2 {
        return Err(Error::InvalidArgument(format!(
            "CIR order must be >= 2, got {k}"
        )));
    }
    let c = projection.resolve(model)?.map_or(0.0, |v| v[0]);
    let cols = cir_columns(p.theta, p.mu, p.sigma, p.discounted, k, c);
    Ok(MatrixGenerator::assemble(
        to_matrix(k, &cols, |v| v),
        vec![c],
        enumerate_basis(1, k, 1)?,
        model,
        projection,
    ))
}

/// Driving-factor block `A^1` of the univariate credit model (no killing).
pub fn build_ay_univariate(kappa: f64, mu: f64, sigma: f64, k: usize) -> Result<DMatrix<f64>> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!(
            "order must be >= 2, got {k}"
        )));
    }
    let cols = cir_columns(kappa, mu, sigma, false, k, 0.0);
    Ok(to_matrix(k, &cols, |v| v))
}

/// Coefficients `e_j` of `e^x ≈ Σ_j e_j (x - c)^j` used for column `i`.
///
/// Without a series center the expansion is the exact Taylor series at `c`.
/// With center `s` the series `Σ_{n ≤ D - i} e^s (x - s)^n / n!` is
/// re-expanded at `c`: `e_j = e^s/j! Σ_{q ≤ D - i - j} (c - s)^q / q!`.
fn exp_coefficients(p: &BkParams, k: usize, i: usize, c: f64) -> Vec<f64> {
    let len = k - i;
    match p.series_center {
        None => {
            let mut out = Vec::with_capacity(len);
            let mut v = c.exp();
            for j in 0..len {
                if j > 0 {
                    v /= j as f64;
                }
                out.push(v);
            }
            out
        }
        Some(s) => {
            let total = k - 1 + p.series_guard.unwrap_or(k);
            let max_n = total.saturating_sub(i);
            let d = c - s;
            // partial[q] = Σ_{r ≤ q} d^r / r!
            let mut partial = Vec::with_capacity(max_n + 1);
            let (mut term, mut acc) = (1.0, 0.0);
            for r in 0..=max_n {
                if r > 0 {
                    term *= d / r as f64;
                }
                acc += term;
                partial.push(acc);
            }
            let mut out = Vec::with_capacity(len);
            let mut inv_fact = s.exp();
            for j in 0..len.min(max_n + 1) {
                if j > 0 {
                    inv_fact /= j as f64;
                }
                out.push(inv_fact * partial[max_n - j]);
            }
            out
        }
    }
}

/// Column-major BK generator in the basis `(x - c)^i`.
fn bk_matrix(p: &BkParams, k: usize, c: f64) -> DMatrix<f64> {
    let half_s2 = 0.5 * p.sigma * p.sigma;
    let drift0 = p.theta * (p.mu - c);
    let mut a = DMatrix::zeros(k, k);
    for i in 0..k {
        let fi = i as f64;
        a[(i, i)] -= p.theta * fi;
        if i >= 1 {
            a[(i - 1, i)] += drift0 * fi;
        }
        if i >= 2 {
            a[(i - 2, i)] += half_s2 * fi * (fi - 1.0);
        }
        if p.discounted {
            for (j, e) in exp_coefficients(p, k, i, c).into_iter().enumerate() {
                a[(i + j, i)] -= e;
            }
        }
    }
    a
}

/// Black-Karasinski generator. Requires a Taylor projection: the `e^x`
/// killing term overflows every column.
pub fn build_bk(model: &ModelSpec, k: usize, projection: &Projection) -> Result<MatrixGenerator> {
    let p = bk_params(model)?;
    model.validate()?;
    if k < 2 {
        return Err(Error::InvalidArgument(format!(
            "BK order must be >= 2, got {k}"
        )));
    }
    let c = match projection.resolve(model)? {
        Some(v) => v[0],
        None => {
            return Err(Error::InvalidArgument(
                "BK generator requires a Taylor projection".into(),
            ))
        }
    };
    Ok(MatrixGenerator::assemble(
        bk_matrix(p, k, c),
        vec![c],
        enumerate_basis(1, k, 1)?,
        model,
        projection,
    ))
}

/// Credit parameters lifted into a scalar type (for differentiation).
struct CreditScalars<T> {
    k: Vec<T>, // row-major n×n
    mu: Vec<T>,
    sigma: Vec<T>,
    q: Vec<Vec<T>>, // row-major m×m each
}

impl CreditScalars<f64> {
    fn from_params(p: &CreditParams) -> Self {
        let n = p.n();
        CreditScalars {
            k: (0..n * n).map(|i| p.k[(i / n, i % n)]).collect(),
            mu: p.mu.clone(),
            sigma: p.sigma.clone(),
            q: p.q
                .iter()
                .map(|q| {
                    let m = q.nrows();
                    (0..m * m).map(|i| q[(i / m, i % m)]).collect()
                })
                .collect(),
        }
    }

    fn lift(&self) -> CreditScalars<Dual> {
        let c = |v: &Vec<f64>| v.iter().map(|&x| Dual::cst(x)).collect::<Vec<_>>();
        CreditScalars {
            k: c(&self.k),
            mu: c(&self.mu),
            sigma: c(&self.sigma),
            q: self.q.iter().map(c).collect(),
        }
    }
}

/// Column-major credit generator `A^y + A^z` on the layout `(n, ℓ, m)` in
/// the basis `(y - c)^α ⊗ e_r`. Monomials of total degree `ℓ` produced by
/// the killing term are dropped, which is the multivariate Taylor
/// projection at `c`.
fn credit_columns<T: Scalar>(p: &CreditScalars<T>, layout: &BasisLayout, c: &[T]) -> Vec<T> {
    let n = layout.n();
    let m = layout.m();
    let ell = layout.max_order() as u32;
    let dim = layout.dim();
    let mut a = vec![T::cst(0.0); dim * dim];
    let mut add = |row: usize, col: usize, v: T| a[col * dim + row] += v;

    // K(μ - c)
    let k_mu: Vec<T> = (0..n)
        .map(|i| {
            (0..n).fold(T::cst(0.0), |acc, j| {
                acc + p.k[i * n + j] * (p.mu[j] - c[j])
            })
        })
        .collect();

    for (ai, alpha) in layout.monomials().iter().enumerate() {
        // A^y: drift K(μ - y)·∇ and diffusion ½σ_i² y_i ∂²_i, identity on ratings.
        for i in 0..n {
            let ei = alpha.exponents()[i];
            if ei == 0 {
                continue;
            }
            let fe = T::cst(ei as f64);
            let lower = alpha.lowered(i).expect("positive exponent");
            let li = layout
                .monomial_index(&lower)
                .expect("lower degree in basis");
            let d2 = T::cst(0.5) * p.sigma[i] * p.sigma[i] * fe * T::cst(ei as f64 - 1.0);
            for j in 0..n {
                let target = lower.raised(j);
                let tj = layout
                    .monomial_index(&target)
                    .expect("same degree in basis");
                let kij = p.k[i * n + j];
                for r in 0..m {
                    add(tj * m + r, ai * m + r, -(kij * fe));
                }
            }
            for r in 0..m {
                add(li * m + r, ai * m + r, fe * k_mu[i] + d2);
            }
            if ei >= 2 {
                let l2 = lower.lowered(i).expect("exponent >= 2");
                let l2i = layout.monomial_index(&l2).expect("lower degree in basis");
                for r in 0..m {
                    add(l2i * m + r, ai * m + r, d2 * c[i]);
                }
            }
        }

        // A^z: y_i z^T Q_i maps u^α e_r to Σ_s (Q_i)_{s r} (u^{α+e_i} + c_i u^α) e_s.
        for i in 0..n {
            let beta = alpha.raised(i);
            let mut targets = vec![(ai, c[i])];
            if beta.degree() < ell {
                targets.push((layout.monomial_index(&beta).expect("in basis"), T::cst(1.0)));
            }
            let q = &p.q[i];
            for (bi, w) in targets {
                if w.is_zero() {
                    continue;
                }
                for s in 0..m {
                    for r in 0..m {
                        let v = q[s * m + r];
                        if !v.is_zero() {
                            add(bi * m + s, ai * m + r, w * v);
                        }
                    }
                }
            }
        }
    }
    a
}

/// Rating-migration generator `A = A^y + A^z` with `ℓ` monomial degrees.
pub fn build_credit(
    model: &ModelSpec,
    ell: usize,
    projection: &Projection,
) -> Result<MatrixGenerator> {
    let p = credit_params(model)?;
    model.validate()?;
    if ell < 2 {
        return Err(Error::InvalidArgument(format!(
            "credit order must be >= 2, got {ell}"
        )));
    }
    let layout = enumerate_basis(p.n(), ell, p.m())?;
    let c = projection
        .resolve(model)?
        .unwrap_or_else(|| vec![0.0; p.n()]);
    let scalars = CreditScalars::from_params(p);
    let cols = credit_columns(&scalars, &layout, &c);
    Ok(MatrixGenerator::assemble(
        to_matrix(layout.dim(), &cols, |v| v),
        c,
        layout,
        model,
        projection,
    ))
}

/// Scalar model parameter identifiers (0-based indices).
///
/// Textual forms: `theta`, `mu`, `sigma`, `K[i,j]`, `mu[i]`, `sigma[i]`,
/// `Q[l][i,j]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamId {
    Theta,
    Mu,
    Sigma,
    K(usize, usize),
    CreditMu(usize),
    CreditSigma(usize),
    Q(usize, usize, usize),
}

impl fmt::Display for ParamId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamId::Theta => write!(f, "theta"),
            ParamId::Mu => write!(f, "mu"),
            ParamId::Sigma => write!(f, "sigma"),
            ParamId::K(i, j) => write!(f, "K[{i},{j}]"),
            ParamId::CreditMu(i) => write!(f, "mu[{i}]"),
            ParamId::CreditSigma(i) => write!(f, "sigma[{i}]"),
            ParamId::Q(l, i, j) => write!(f, "Q[{l}][{i},{j}]"),
        }
    }
}

impl FromStr for ParamId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::UnknownParameter(s.to_string());
        let idx = |body: &str| -> Result<Vec<usize>> {
            body.split(',')
                .map(|t| t.trim().parse::<usize>().map_err(|_| bad()))
                .collect()
        };
        let s = s.trim();
        match s {
            "theta" => return Ok(ParamId::Theta),
            "mu" => return Ok(ParamId::Mu),
            "sigma" => return Ok(ParamId::Sigma),
            _ => {}
        }
        let open = s.find('[').ok_or_else(bad)?;
        let (name, rest) = s.split_at(open);
        let groups: Vec<&str> = rest
            .split(']')
            .filter(|g| !g.is_empty())
            .map(|g| g.strip_prefix('[').ok_or_else(bad))
            .collect::<Result<_>>()?;
        match (name, groups.as_slice()) {
            ("K", [g]) => match idx(g)?.as_slice() {
                [i, j] => Ok(ParamId::K(*i, *j)),
                _ => Err(bad()),
            },
            ("mu", [g]) => match idx(g)?.as_slice() {
                [i] => Ok(ParamId::CreditMu(*i)),
                _ => Err(bad()),
            },
            ("sigma", [g]) => match idx(g)?.as_slice() {
                [i] => Ok(ParamId::CreditSigma(*i)),
                _ => Err(bad()),
            },
            ("Q", [l, g]) => match (idx(l)?.as_slice(), idx(g)?.as_slice()) {
                ([l], [i, j]) => Ok(ParamId::Q(*l, *i, *j)),
                _ => Err(bad()),
            },
            _ => Err(bad()),
        }
    }
}

/// Entrywise derivative `∂A_k/∂p` for a scalar model parameter.
///
/// CIR and credit generators are polynomial in their parameters and are
/// differentiated exactly (forward-mode). The BK generator uses a central
/// difference with step `max(1e-6, 1e-6 |p|)`. With a Taylor projection at
/// the model mean, the dependence of the expansion point on μ is included.
pub fn perturb_generator(
    model: &ModelSpec,
    param: ParamId,
    order: usize,
    projection: &Projection,
) -> Result<DMatrix<f64>> {
    perturb(model, param, order, projection, false)
}

/// Entrywise derivative of [`MatrixGenerator::centered`] with the expansion
/// point frozen at its value for the unperturbed model.
///
/// Pairs with the centered matrix in [`crate::sensitivity`]; this stays well
/// conditioned when the expansion point is far from zero.
pub fn perturb_generator_centered(
    model: &ModelSpec,
    param: ParamId,
    order: usize,
    projection: &Projection,
) -> Result<DMatrix<f64>> {
    perturb(model, param, order, projection, true)
}

fn perturb(
    model: &ModelSpec,
    param: ParamId,
    order: usize,
    projection: &Projection,
    centered: bool,
) -> Result<DMatrix<f64>> {
    // Validates the model and order as a side effect.
    MatrixGenerator::build(model, order, projection)?;
    let unknown = || Error::UnknownParameter(param.to_string());
    // a frozen center never follows μ
    let at_mean = !centered && matches!(projection, Projection::Taylor(ExpansionPoint::ModelMean));
    match model {
        ModelSpec::Cir(p) => {
            let var = |id: ParamId, v: f64| {
                if param == id {
                    Dual::var(v)
                } else {
                    Dual::cst(v)
                }
            };
            if !matches!(param, ParamId::Theta | ParamId::Mu | ParamId::Sigma) {
                return Err(unknown());
            }
            let theta = var(ParamId::Theta, p.theta);
            let mu = var(ParamId::Mu, p.mu);
            let sigma = var(ParamId::Sigma, p.sigma);
            let c = match projection.resolve(model)? {
                None => Dual::cst(0.0),
                Some(_) if at_mean => mu,
                Some(v) => Dual::cst(v[0]),
            };
            let layout = enumerate_basis(1, order, 1)?;
            let mut cols = cir_columns(theta, mu, sigma, p.discounted, order, c);
            if !centered {
                cols = to_monomial_basis(&cols, &layout, &[c]);
            }
            Ok(to_matrix(order, &cols, |d| d.d))
        }
        ModelSpec::Bk(p) => {
            let value = match param {
                ParamId::Theta => p.theta,
                ParamId::Mu => p.mu,
                ParamId::Sigma => p.sigma,
                _ => return Err(unknown()),
            };
            let h = (1e-6 * value.abs()).max(1e-6);
            let shifted = |delta: f64| {
                let mut q = p.clone();
                match param {
                    ParamId::Theta => q.theta += delta,
                    ParamId::Mu => q.mu += delta,
                    _ => q.sigma += delta,
                }
                let x0 = match (projection, at_mean) {
                    (_, true) => q.mu,
                    (Projection::Taylor(ExpansionPoint::ModelMean), false) => p.mu,
                    (Projection::Taylor(ExpansionPoint::At(v)), _) => v[0],
                    _ => unreachable!("BK build already rejected finite section"),
                };
                let g = MatrixGenerator::build(
                    &ModelSpec::Bk(q),
                    order,
                    &Projection::Taylor(ExpansionPoint::At(vec![x0])),
                )
                .expect("perturbed BK model stays valid");
                if centered {
                    g.centered
                } else {
                    g.a
                }
            };
            Ok((shifted(h) - shifted(-h)) / (2.0 * h))
        }
        ModelSpec::Credit(c) => {
            let n = c.n();
            let m = c.m();
            let base = CreditScalars::from_params(c);
            let mut lifted = base.lift();
            match param {
                ParamId::K(i, j) if i < n && j < n => lifted.k[i * n + j].d = 1.0,
                ParamId::CreditMu(i) if i < n => lifted.mu[i].d = 1.0,
                ParamId::CreditSigma(i) if i < n => lifted.sigma[i].d = 1.0,
                ParamId::Q(l, i, j) if l < n && i < m && j < m => lifted.q[l][i * m + j].d = 1.0,
                _ => return Err(unknown()),
            }
            let layout = enumerate_basis(n, order, m)?;
            let c: Vec<Dual> = match projection.resolve(model)? {
                None => vec![Dual::cst(0.0); n],
                Some(_) if at_mean => lifted.mu.clone(),
                Some(v) => v.into_iter().map(Dual::cst).collect(),
            };
            let mut cols = credit_columns(&lifted, &layout, &c);
            if !centered {
                cols = to_monomial_basis(&cols, &layout, &c);
            }
            Ok(to_matrix(layout.dim(), &cols, |d| d.d))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::taylor_coeffs;

    fn cir(theta: f64, mu: f64, sigma: f64, discounted: bool) -> ModelSpec {
        ModelSpec::Cir(CirParams {
            theta,
            mu,
            sigma,
            discounted,
        })
    }

    fn three_state_q() -> DMatrix<f64> {
        DMatrix::from_row_slice(3, 3, &[-0.11, 0.1, 0.01, 0.05, -0.15, 0.1, 0.0, 0.0, 0.0])
    }

    fn credit1(q: DMatrix<f64>, kappa: f64, mu: f64, sigma: f64) -> ModelSpec {
        ModelSpec::Credit(CreditParams {
            k: DMatrix::from_element(1, 1, kappa),
            mu: vec![mu],
            sigma: vec![sigma],
            q: vec![q],
        })
    }

    #[test]
    fn cir_finite_section_k3() {
        let (t, mu, s) = (0.3, 0.05, 0.2);
        let g = build_cir(&cir(t, mu, s, true), 3, &Projection::FiniteSection).unwrap();
        let want = DMatrix::from_row_slice(
            3,
            3,
            &[
                0.0,
                t * mu,
                0.0,
                -1.0,
                -t,
                2.0 * t * mu + s * s,
                0.0,
                -1.0,
                -2.0 * t,
            ],
        );
        assert!((g.matrix() - want).abs().max() < 1e-15);
    }

    #[test]
    fn cir_taylor_k3_last_column() {
        let (t, mu, s) = (0.3, 0.05, 0.2);
        let fs = build_cir(&cir(t, mu, s, true), 3, &Projection::FiniteSection).unwrap();
        let ty = build_cir(&cir(t, mu, s, true), 3, &Projection::taylor_at_mean()).unwrap();
        let diff = ty.matrix() - fs.matrix();
        let want = [-mu.powi(3), 3.0 * mu * mu, -3.0 * mu];
        for r in 0..3 {
            assert!((diff[(r, 2)] - want[r]).abs() < 1e-15);
            assert!(diff[(r, 0)].abs() < 1e-15);
            assert!(diff[(r, 1)].abs() < 1e-15);
        }
    }

    #[test]
    fn constant_process_is_zero() {
        let g = build_cir(&cir(0.0, 0.4, 0.0, false), 4, &Projection::FiniteSection).unwrap();
        assert_eq!(g.matrix().abs().max(), 0.0);
    }

    #[test]
    fn cir_rejects_small_order() {
        assert!(build_cir(&cir(0.1, 0.03, 0.05, true), 1, &Projection::FiniteSection).is_err());
    }

    #[test]
    fn undiscounted_first_column_zero() {
        let g = build_cir(&cir(0.2, 0.1, 0.3, false), 8, &Projection::taylor_at_mean()).unwrap();
        assert_eq!(g.matrix().column(0).abs().max(), 0.0);
    }

    #[test]
    fn ay_univariate_k3() {
        let (k, mu, s) = (0.8, 1.1, 0.5);
        let a = build_ay_univariate(k, mu, s, 3).unwrap();
        let want = DMatrix::from_row_slice(
            3,
            3,
            &[
                0.0,
                k * mu,
                0.0,
                0.0,
                -k,
                2.0 * k * mu + s * s,
                0.0,
                0.0,
                -2.0 * k,
            ],
        );
        assert!((a - want).abs().max() < 1e-15);
        assert_eq!(
            build_ay_univariate(0.0, 1.0, 0.0, 5).unwrap().abs().max(),
            0.0
        );
    }

    #[test]
    fn bk_requires_taylor() {
        let m = ModelSpec::Bk(BkParams::new(0.1, -3.5, 0.2));
        assert!(build_bk(&m, 5, &Projection::FiniteSection).is_err());
        assert!(build_bk(&m, 5, &Projection::taylor_at_mean()).is_ok());
    }

    #[test]
    fn bk_drift_matches_cir_drift() {
        // Without killing and diffusion, BK and CIR share the OU drift.
        let mut p = BkParams::new(0.3, 0.7, 0.0);
        p.discounted = false;
        let bk = build_bk(&ModelSpec::Bk(p), 6, &Projection::taylor_at_mean()).unwrap();
        let c = build_cir(&cir(0.3, 0.7, 0.0, false), 6, &Projection::FiniteSection).unwrap();
        assert!((bk.matrix() - c.matrix()).abs().max() < 1e-13 * c.matrix().abs().max());
    }

    #[test]
    fn bk_small_order_against_hand_expansion() {
        // k = 2, guard 0: e^x truncated at total degree 1, so column 0 gets
        // -(1 + x) and column 1 gets θμ - θx - x.
        let mut p = BkParams::new(0.2, 0.5, 0.3);
        p.series_center = Some(0.0);
        p.series_guard = Some(0);
        let g = build_bk(
            &ModelSpec::Bk(p),
            2,
            &Projection::Taylor(ExpansionPoint::At(vec![0.0])),
        )
        .unwrap();
        let want = DMatrix::from_row_slice(2, 2, &[-1.0, 0.2 * 0.5, -1.0, -1.2]);
        assert!((g.matrix() - want).abs().max() < 1e-15, "{}", g.matrix());
    }

    #[test]
    fn credit_l2_block_form() {
        let q = three_state_q();
        let mu = 0.9;
        let model = credit1(q.clone(), 0.0, mu, 0.0);
        let g = build_credit(&model, 2, &Projection::taylor_at_mean()).unwrap();
        let a = g.matrix();
        assert_eq!(a.nrows(), 6);
        let blk = |r: usize, c: usize| a.view((3 * r, 3 * c), (3, 3)).into_owned();
        assert!(blk(0, 0).abs().max() < 1e-15);
        assert!((blk(1, 0) - &q).abs().max() < 1e-15);
        assert!((blk(0, 1) + &q * (mu * mu)).abs().max() < 1e-15);
        assert!((blk(1, 1) - &q * (2.0 * mu)).abs().max() < 1e-15);
    }

    #[test]
    fn credit_rejects_bad_generator() {
        let mut q = three_state_q();
        q[(0, 0)] += 0.01;
        let err = build_credit(&credit1(q, 0.8, 1.0, 0.5), 3, &Projection::taylor_at_mean());
        assert!(matches!(err, Err(Error::NotAGenerator { .. })));
        let mut q = three_state_q();
        q[(1, 0)] = -0.05;
        q[(1, 1)] = -0.05;
        q[(1, 2)] = 0.1;
        let err = build_credit(&credit1(q, 0.8, 1.0, 0.5), 3, &Projection::taylor_at_mean());
        assert!(matches!(err, Err(Error::NotAGenerator { .. })));
    }

    #[test]
    fn credit_accepts_three_state_generator() {
        assert!(build_credit(
            &credit1(three_state_q(), 0.8, 1.0, 0.5),
            4,
            &Projection::taylor_at_mean()
        )
        .is_ok());
    }

    #[test]
    fn credit_degenerate_reduces_to_ay() {
        let model = credit1(DMatrix::zeros(1, 1), 0.8, 1.2, 0.4);
        let g = build_credit(&model, 7, &Projection::taylor_at_mean()).unwrap();
        let ay = build_ay_univariate(0.8, 1.2, 0.4, 7).unwrap();
        assert!((g.matrix() - &ay).abs().max() < 1e-13 * ay.abs().max());
    }

    #[test]
    fn credit_univariate_is_kron() {
        let q = three_state_q();
        let (kappa, mu, s, ell) = (0.8, 1.0, 0.5, 6);
        let g = build_credit(
            &credit1(q.clone(), kappa, mu, s),
            ell,
            &Projection::taylor_at_mean(),
        )
        .unwrap();
        let ay = build_ay_univariate(kappa, mu, s, ell)
            .unwrap()
            .kronecker(&DMatrix::<f64>::identity(3, 3));
        let mut shift = DMatrix::zeros(ell, ell);
        for i in 1..ell {
            shift[(i, i - 1)] = 1.0;
        }
        let p = taylor_coeffs(ell, mu);
        for (i, v) in p.into_iter().enumerate() {
            shift[(i, ell - 1)] = v;
        }
        let az = shift.kronecker(&q);
        assert!((g.matrix() - ay - az).abs().max() < 1e-13);
    }

    #[test]
    fn param_id_roundtrip() {
        for s in [
            "theta",
            "mu",
            "sigma",
            "K[0,1]",
            "mu[1]",
            "sigma[0]",
            "Q[1][0,2]",
        ] {
            let p: ParamId = s.parse().unwrap();
            assert_eq!(p.to_string(), s);
        }
        assert!("kappa".parse::<ParamId>().is_err());
        assert!("K[0]".parse::<ParamId>().is_err());
    }

    #[test]
    fn cir_sigma_derivative_at_zero() {
        let d = perturb_generator(
            &cir(0.1, 0.03, 0.0, true),
            ParamId::Sigma,
            6,
            &Projection::taylor_at_mean(),
        )
        .unwrap();
        assert_eq!(d.abs().max(), 0.0);
    }

    #[test]
    fn unknown_parameter_rejected() {
        let r = perturb_generator(
            &cir(0.1, 0.03, 0.05, true),
            ParamId::K(0, 0),
            6,
            &Projection::FiniteSection,
        );
        assert!(matches!(r, Err(Error::UnknownParameter(_))));
        let model = credit1(three_state_q(), 0.8, 1.0, 0.5);
        let r = perturb_generator(
            &model,
            ParamId::Q(1, 0, 0),
            4,
            &Projection::taylor_at_mean(),
        );
        assert!(matches!(r, Err(Error::UnknownParameter(_))));
    }
}
