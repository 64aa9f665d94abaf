//! Pointwise generator oracles and random test matrices shared by the suites.

#![allow(dead_code)]

use polymoment::*;
use rand::Rng;

/// Rating generator with an absorbing default state.
pub fn three_state_q() -> DMatrix<f64> {
    DMatrix::from_row_slice(3, 3, &[-0.11, 0.1, 0.01, 0.05, -0.15, 0.1, 0.0, 0.0, 0.0])
}

/// Upper-triangular pair with noncommutativity about 0.48.
pub fn triangular_pair() -> (DMatrix<f64>, DMatrix<f64>) {
    (
        DMatrix::from_row_slice(3, 3, &[-0.11, 0.1, 0.01, 0.0, -0.1, 0.1, 0.0, 0.0, 0.0]),
        DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 0.0, 0.05, -0.05, 0.0, 0.0, 0.0, 0.0]),
    )
}

/// Random matrix with entries in [-1, 1], shifted so every eigenvalue has
/// real part at most `-margin`.
pub fn random_stable<R: Rng>(rng: &mut R, n: usize, margin: f64) -> DMatrix<f64> {
    let r = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let abscissa = r
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::MIN, f64::max);
    r - DMatrix::identity(n, n) * (abscissa + margin)
}

/// Random rating generator: non-negative off-diagonal rates below `max_rate`,
/// last state absorbing.
pub fn random_rating_generator<R: Rng>(rng: &mut R, m: usize, max_rate: f64) -> DMatrix<f64> {
    let mut q = DMatrix::zeros(m, m);
    for i in 0..m - 1 {
        for j in 0..m {
            if i != j {
                q[(i, j)] = rng.random_range(0.0..max_rate);
            }
        }
        let s: f64 = q.row(i).sum();
        q[(i, i)] = -s;
    }
    q
}

/// `𝒜x^i` of the CIR bond generator evaluated pointwise.
pub fn cir_generator_at(theta: f64, mu: f64, sigma: f64, i: usize, x: f64) -> f64 {
    let fi = i as f64;
    let d1 = if i >= 1 {
        fi * x.powi(i as i32 - 1)
    } else {
        0.0
    };
    let d2 = if i >= 2 {
        fi * (fi - 1.0) * x.powi(i as i32 - 2)
    } else {
        0.0
    };
    theta * (mu - x) * d1 + 0.5 * sigma * sigma * x * d2 - x * x.powi(i as i32)
}

/// Apply the credit generator to `y^α 1{z = e_r}` at `(y, e_p)`.
pub fn credit_generator_at(p: &CreditParams, alpha: &[u32], r: usize, y: &[f64], pz: usize) -> f64 {
    let n = p.n();
    let mono = |e: &[u32]| {
        e.iter()
            .zip(y)
            .map(|(&k, &v)| v.powi(k as i32))
            .product::<f64>()
    };
    let mut out = 0.0;
    if pz == r {
        for i in 0..n {
            let ai = alpha[i] as f64;
            if alpha[i] == 0 {
                continue;
            }
            let mut lower = alpha.to_vec();
            lower[i] -= 1;
            let drift: f64 = (0..n).map(|j| p.k[(i, j)] * (p.mu[j] - y[j])).sum();
            out += drift * ai * mono(&lower);
            if alpha[i] >= 2 {
                let mut l2 = lower.clone();
                l2[i] -= 1;
                out += 0.5 * p.sigma[i] * p.sigma[i] * y[i] * ai * (ai - 1.0) * mono(&l2);
            }
        }
    }
    let q_entry: f64 = (0..n).map(|i| y[i] * p.q[i][(pz, r)]).sum();
    out + q_entry * mono(alpha)
}

pub fn monomials(x: f64, k: usize) -> DVector<f64> {
    DVector::from_fn(k, |i, _| x.powi(i as i32))
}
