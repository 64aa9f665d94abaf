//! Basis enumerations and coefficient-vector machinery.
//!
//! Functions are represented by coefficient vectors against an ordered basis
//! of monomials, optionally tensored with rating indicators `z = e_r`:
//!
//! ```text
//! b(y, z) = (z, y ⊗ z, y² ⊗ z, ...)
//! ```
//!
//! Ordering is graded (all degree-d monomials before degree d+1), within a
//! degree monomials are sorted by descending exponent tuples (so `y1` comes
//! before `y2`, `y1²` before `y1 y2`), and the rating index runs fastest.

use std::collections::HashMap;
use std::sync::Arc;

use crate::dual::Scalar;
use crate::error::{Error, Result};

/// Exponents of a multivariate monomial `y1^a1 ... yn^an`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(exponents: Vec<u32>) -> Self {
        MultiIndex(exponents)
    }

    pub fn zero(n: usize) -> Self {
        MultiIndex(vec![0; n])
    }

    pub fn exponents(&self) -> &[u32] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Total degree.
    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    /// `self + e_i`.
    pub fn raised(&self, i: usize) -> MultiIndex {
        let mut e = self.0.clone();
        e[i] += 1;
        MultiIndex(e)
    }

    /// `self - e_i`, or `None` when the exponent is already zero.
    pub fn lowered(&self, i: usize) -> Option<MultiIndex> {
        if self.0[i] == 0 {
            return None;
        }
        let mut e = self.0.clone();
        e[i] -= 1;
        Some(MultiIndex(e))
    }

    pub fn eval(&self, point: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(point)
            .map(|(&a, &y)| y.powi(a as i32))
            .product()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisKind {
    UnivariateMonomial,
    GradedMultivariate,
    MonomialKronRating,
}

/// Ordered enumeration of basis functions `y^α ⊗ e_r`.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisLayout {
    kind: BasisKind,
    n: usize,
    max_order: usize,
    m: usize,
    monomials: Vec<MultiIndex>,
    position: HashMap<MultiIndex, usize>,
}

impl BasisLayout {
    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    /// State dimension.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of monomial degrees ℓ (degrees `0..ℓ`).
    pub fn max_order(&self) -> usize {
        self.max_order
    }

    /// Number of ratings (1 without ratings).
    pub fn m(&self) -> usize {
        self.m
    }

    /// Total dimension k.
    pub fn dim(&self) -> usize {
        self.monomials.len() * self.m
    }

    /// Monomials in basis order (without the rating factor).
    pub fn monomials(&self) -> &[MultiIndex] {
        &self.monomials
    }

    /// Index of a monomial in [`Self::monomials`].
    pub fn monomial_index(&self, alpha: &MultiIndex) -> Option<usize> {
        self.position.get(alpha).copied()
    }

    /// Position of `(α, rating)` in the coefficient vector.
    pub fn position(&self, alpha: &MultiIndex, rating: usize) -> Option<usize> {
        if rating >= self.m {
            return None;
        }
        self.monomial_index(alpha).map(|i| i * self.m + rating)
    }

    /// `(monomial, rating)` pairs in coefficient order.
    pub fn ordering(&self) -> impl Iterator<Item = (&MultiIndex, usize)> + '_ {
        self.monomials
            .iter()
            .flat_map(move |a| (0..self.m).map(move |r| (a, r)))
    }
}

/// Closed-form dimension `Σ_{i<ℓ} C(n+i-1, n-1) · m`.
pub fn basis_dimension(n: usize, max_order: usize, m: usize) -> usize {
    (0..max_order)
        .map(|i| binomial(n + i - 1, n - 1) as usize)
        .sum::<usize>()
        * m
}

/// Enumerate the graded monomial basis of `n` variables with degrees
/// `0..max_order`, tensored with `m` rating indicators.
pub fn enumerate_basis(n: usize, max_order: usize, m: usize) -> Result<BasisLayout> {
    if n == 0 || max_order == 0 || m == 0 {
        return Err(Error::InvalidArgument(format!(
            "basis needs n, max order and rating count >= 1 (got n={n}, order={max_order}, m={m})"
        )));
    }
    let mut monomials = Vec::new();
    for d in 0..max_order as u32 {
        let mut level = Vec::new();
        compositions(n, d, &mut Vec::with_capacity(n), &mut level);
        level.sort_by(|a, b| b.cmp(a));
        monomials.extend(level);
    }
    let position = monomials
        .iter()
        .enumerate()
        .map(|(i, a)| (a.clone(), i))
        .collect();
    let kind = match (n, m) {
        (1, 1) => BasisKind::UnivariateMonomial,
        (_, 1) => BasisKind::GradedMultivariate,
        _ => BasisKind::MonomialKronRating,
    };
    Ok(BasisLayout {
        kind,
        n,
        max_order,
        m,
        monomials,
        position,
    })
}

fn compositions(n: usize, remaining: u32, prefix: &mut Vec<u32>, out: &mut Vec<MultiIndex>) {
    if prefix.len() == n - 1 {
        prefix.push(remaining);
        out.push(MultiIndex(prefix.clone()));
        prefix.pop();
        return;
    }
    for a in 0..=remaining {
        prefix.push(a);
        compositions(n, remaining - a, prefix, out);
        prefix.pop();
    }
}

pub(crate) fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut c = 1.0;
    for i in 0..k {
        c = c * (n - i) as f64 / (i + 1) as f64;
    }
    c.round()
}

/// Coefficients of a function against a [`BasisLayout`].
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientVector {
    coeffs: Vec<f64>,
    layout: Arc<BasisLayout>,
}

impl CoefficientVector {
    pub fn new(coeffs: Vec<f64>, layout: Arc<BasisLayout>) -> Result<Self> {
        if coeffs.len() != layout.dim() {
            return Err(Error::DimensionMismatch {
                expected: layout.dim(),
                got: coeffs.len(),
            });
        }
        Ok(CoefficientVector { coeffs, layout })
    }

    /// The i-th unit vector.
    pub fn unit(i: usize, layout: Arc<BasisLayout>) -> Self {
        let mut coeffs = vec![0.0; layout.dim()];
        coeffs[i] = 1.0;
        CoefficientVector { coeffs, layout }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn layout(&self) -> &Arc<BasisLayout> {
        &self.layout
    }
}

/// Degree-(k-1) Taylor truncation of `x^k` around `x0`:
/// `Σ coeffs[i] x^i = x^k - (x - x0)^k`.
#[derive(Debug, Clone, PartialEq)]
pub struct TaylorCoefficients {
    pub x0: f64,
    pub power: usize,
    pub coeffs: Vec<f64>,
}

impl TaylorCoefficients {
    pub fn eval(&self, x: f64) -> f64 {
        horner(&self.coeffs, x)
    }
}

pub fn taylor_overflow(k: usize, x0: f64) -> TaylorCoefficients {
    TaylorCoefficients {
        x0,
        power: k,
        coeffs: taylor_coeffs(k, x0),
    }
}

/// `coeffs[i] = -C(k, i) (-x0)^(k-i)` for `i < k`.
pub(crate) fn taylor_coeffs<T: Scalar>(k: usize, x0: T) -> Vec<T> {
    (0..k)
        .map(|i| T::cst(-binomial(k, i)) * (-x0).powi((k - i) as i32))
        .collect()
}

/// Close a dense univariate polynomial into the first `k` monomials by
/// replacing every power `j >= k` with its Taylor truncation at `x0`,
/// highest power first.
pub fn reduce_degree(poly: &[f64], k: usize, x0: f64) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(Error::InvalidArgument("reduce_degree needs k >= 1".into()));
    }
    let mut p = poly.to_vec();
    reduce_in_place(&mut p, k, x0);
    p.resize(k, 0.0);
    Ok(p)
}

pub(crate) fn reduce_in_place<T: Scalar>(p: &mut Vec<T>, k: usize, x0: T) {
    let mut j = p.len();
    while j > k {
        j -= 1;
        let c = p[j];
        if c.is_zero() {
            continue;
        }
        p[j] = T::cst(0.0);
        for (i, t) in taylor_coeffs(j, x0).into_iter().enumerate() {
            p[i] += c * t;
        }
    }
    p.truncate(k.min(p.len()));
}

pub(crate) fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

/// Evaluate `Σ f_i b_i(point, rating)`.
///
/// `rating` is a 0-based rating index; it must be given exactly when the
/// layout carries ratings (`m > 1`).
pub fn evaluate(f: &CoefficientVector, point: &[f64], rating: Option<usize>) -> Result<f64> {
    let layout = f.layout();
    if point.len() != layout.n() {
        return Err(Error::DimensionMismatch {
            expected: layout.n(),
            got: point.len(),
        });
    }
    let m = layout.m();
    let r = match (m, rating) {
        (1, None) | (1, Some(0)) => 0,
        (1, Some(r)) => return Err(Error::InvalidArgument(format!("rating {r} out of range"))),
        (_, None) => {
            return Err(Error::InvalidArgument(
                "rating index required for rating basis".into(),
            ))
        }
        (_, Some(r)) if r >= m => {
            return Err(Error::InvalidArgument(format!(
                "rating {r} out of range for m={m}"
            )))
        }
        (_, Some(r)) => r,
    };
    if layout.n() == 1 {
        let c: Vec<f64> = f.coeffs().iter().skip(r).step_by(m).copied().collect();
        return Ok(horner(&c, point[0]));
    }
    Ok(layout
        .monomials()
        .iter()
        .enumerate()
        .map(|(i, a)| f.coeffs()[i * m + r] * a.eval(point))
        .sum())
}
