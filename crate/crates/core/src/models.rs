//! Closed-form reference values.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::generator::{check_generator, CirParams};
use crate::linalg::real_eigen;

/// Largest accepted condition number of an eigenvector matrix.
pub const MAX_EIGEN_CONDITION: f64 = 1e12;
/// Largest commutator norm treated as commuting.
pub const COMMUTATOR_TOL: f64 = 1e-10;

/// Zero-coupon bond price `E[exp(-∫_0^τ X_s ds) | X_0 = x]` under
/// `dX = θ(μ - X)dt + σ√X dW`, i.e. `exp(A(τ) - B(τ)x)`.
///
/// With `γ = √(θ² + 2σ²)`:
///
/// ```text
/// B(τ) = 2(e^{γτ} - 1) / ((γ + θ)(e^{γτ} - 1) + 2γ)
/// A(τ) = (2θμ/σ²) ln(2γ e^{(γ+θ)τ/2} / ((γ + θ)(e^{γτ} - 1) + 2γ))
/// ```
///
/// `A` is evaluated in the overflow-free form
/// `(2θμ/σ²)[ln(1 + d) - ln(1 + d e^{-γτ}) - (γ - θ)τ/2]`, `d = (γ - θ)/(γ + θ)`.
/// At `σ = 0` the rate is deterministic.
pub fn cir_bond_price(theta: f64, mu: f64, sigma: f64, x: f64, tau: f64) -> f64 {
    if tau == 0.0 {
        return 1.0;
    }
    if sigma == 0.0 {
        let b = if theta == 0.0 {
            tau
        } else {
            -(-theta * tau).exp_m1() / theta
        };
        return (-mu * (tau - b) - b * x).exp();
    }
    let s2 = sigma * sigma;
    let gamma = (theta * theta + 2.0 * s2).sqrt();
    let gp = gamma + theta;
    // γ - θ without cancellation
    let gm = 2.0 * s2 / gp;
    let em1 = (gamma * tau).exp_m1();
    let b = if em1.is_finite() {
        2.0 * em1 / (gp * em1 + 2.0 * gamma)
    } else {
        2.0 / gp
    };
    let d = gm / gp;
    let decay = (-gamma * tau).exp();
    // ln(1 + d) - ln(1 + d e^{-γτ}) without cancellation
    let log_ratio = (-d * (-gamma * tau).exp_m1() / (1.0 + d * decay)).ln_1p();
    let a = 2.0 * theta * mu / s2 * (log_ratio - 0.5 * gm * tau);
    (a - b * x).exp()
}

/// Stationary mean and standard deviation of the Black-Karasinski short rate
/// `e^X`, `X` an OU process with mean `μ`, speed `θ` and volatility `σ`.
pub fn bk_moment_map(theta: f64, mu: f64, sigma: f64) -> Result<(f64, f64)> {
    if !(theta > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "theta must be > 0, got {theta}"
        )));
    }
    let v = sigma * sigma / (2.0 * theta);
    let mean = (mu + 0.5 * v).exp();
    let var = v.exp_m1() * (2.0 * mu + v).exp();
    Ok((mean, var.sqrt()))
}

/// Inverse of [`bk_moment_map`]: `(μ, σ)` from the stationary rate mean and
/// standard deviation.
pub fn bk_moment_map_inverse(mean: f64, sd: f64, theta: f64) -> Result<(f64, f64)> {
    if !(mean > 0.0) || !(sd > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "stationary mean and sd must be > 0, got ({mean}, {sd})"
        )));
    }
    if !(theta > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "theta must be > 0, got {theta}"
        )));
    }
    let s2 = 2.0 * theta * (sd * sd / (mean * mean)).ln_1p();
    let mu = mean.ln() - s2 / (4.0 * theta);
    Ok((mu, s2.sqrt()))
}

/// Rating migration probabilities over horizon `t` from factor state `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct MigrationMatrix {
    pub p: DMatrix<f64>,
    pub t: f64,
    pub y: Vec<f64>,
}

impl MigrationMatrix {
    pub fn row_sums(&self) -> Vec<f64> {
        self.p.row_iter().map(|r| r.sum()).collect()
    }

    /// Element-wise mean absolute difference.
    pub fn mean_abs_error(&self, other: &DMatrix<f64>) -> f64 {
        assert_eq!(
            self.p.shape(),
            other.shape(),
            "migration matrix shapes differ"
        );
        (&self.p - other).abs().mean()
    }
}

fn credit_factor(q: &DMatrix<f64>, cir: &CirParams, y: f64, t: f64) -> Result<DMatrix<f64>> {
    let m = q.nrows();
    check_generator(0, q, m)?;
    if !(y >= 0.0) || !(t >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need y >= 0 and t >= 0, got ({y}, {t})"
        )));
    }
    let (d, b, b_inv) = real_eigen(q, MAX_EIGEN_CONDITION)?;
    let phi: Vec<f64> = d
        .iter()
        .map(|&di| {
            if di > 0.0 {
                Err(Error::InvalidModel(format!("positive eigenvalue {di}")))
            } else if di == 0.0 {
                Ok(1.0)
            } else {
                // -d_i Y is again CIR with mean -d_i μ and volatility σ√(-d_i)
                let c = -di;
                Ok(cir_bond_price(
                    cir.theta,
                    c * cir.mu,
                    cir.sigma * c.sqrt(),
                    c * y,
                    t,
                ))
            }
        })
        .collect::<Result<_>>()?;
    Ok(&b * DMatrix::from_diagonal(&DVector::from_vec(phi)) * &b_inv)
}

/// `E_y[exp(∫_0^t Y_s ds · Q1)]` for a CIR factor `Y`, by diagonalising `Q1`.
pub fn credit_analytic_1d(
    q1: &DMatrix<f64>,
    cir: &CirParams,
    y: f64,
    t: f64,
) -> Result<MigrationMatrix> {
    let p = credit_factor(q1, cir, y, t)?;
    Ok(MigrationMatrix { p, t, y: vec![y] })
}

/// Product of the two univariate factors for independent CIR drivers and
/// commuting `Q1`, `Q2`.
pub fn credit_analytic_2d_commuting(
    q1: &DMatrix<f64>,
    q2: &DMatrix<f64>,
    cir1: &CirParams,
    cir2: &CirParams,
    y: [f64; 2],
    t: f64,
) -> Result<MigrationMatrix> {
    if q1.shape() != q2.shape() {
        return Err(Error::DimensionMismatch {
            expected: q1.nrows(),
            got: q2.nrows(),
        });
    }
    let comm = (q1 * q2 - q2 * q1).norm();
    if comm > COMMUTATOR_TOL {
        return Err(Error::NonCommuting(comm));
    }
    let p = credit_factor(q1, cir1, y[0], t)? * credit_factor(q2, cir2, y[1], t)?;
    Ok(MigrationMatrix {
        p,
        t,
        y: y.to_vec(),
    })
}

/// `‖Q1 Q2 - Q2 Q1‖_F / (√2 ‖Q1‖_F ‖Q2‖_F)`, a number in `[0, 1]`.
pub fn noncommutativity(q1: &DMatrix<f64>, q2: &DMatrix<f64>) -> Result<f64> {
    if q1.shape() != q2.shape() || !q1.is_square() {
        return Err(Error::DimensionMismatch {
            expected: q1.nrows(),
            got: q2.nrows(),
        });
    }
    let (n1, n2) = (q1.norm(), q2.norm());
    if n1 == 0.0 || n2 == 0.0 {
        return Err(Error::InvalidArgument(
            "noncommutativity of a zero matrix".into(),
        ));
    }
    Ok((q1 * q2 - q2 * q1).norm() / (std::f64::consts::SQRT_2 * n1 * n2))
}
