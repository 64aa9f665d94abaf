//! Monte Carlo references.
//!
//! Paths are simulated in fixed-size batches. Batch `b` draws from
//! `ChaCha8Rng::seed_from_u64(seed)` on stream `b`, and batch results are
//! reduced in batch order, so estimates do not depend on the thread count.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::generator::{BkParams, CirParams, CreditParams};
use crate::linalg::row_expm;

/// Paths per batch (per antithetic pair count when antithetic).
const BATCH: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub n_paths: usize,
    pub dt: f64,
    pub seed: u64,
    /// Pair each Gaussian path with its reflection. Ignored by the exact
    /// CIR sampler, which has no Gaussian driver.
    pub antithetic: bool,
}

impl SimConfig {
    pub fn new(n_paths: usize, dt: f64, seed: u64) -> Self {
        SimConfig {
            n_paths,
            dt,
            seed,
            antithetic: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_paths < 100 {
            return Err(Error::InvalidConfig(format!(
                "n_paths must be >= 100, got {}",
                self.n_paths
            )));
        }
        if !(self.dt > 0.0 && self.dt <= 0.25) {
            return Err(Error::InvalidConfig(format!(
                "dt must be in (0, 0.25], got {}",
                self.dt
            )));
        }
        Ok(())
    }

    /// Number of steps and the step actually used to reach `t`.
    fn steps(&self, t: f64) -> (usize, f64) {
        let n = (t / self.dt - 1e-9).ceil().max(1.0) as usize;
        (n, t / n as f64)
    }
}

/// Sample mean and standard error, scalar (1×1) or matrix shaped.
#[derive(Debug, Clone, PartialEq)]
pub struct McEstimate {
    pub value: DMatrix<f64>,
    pub std_error: DMatrix<f64>,
    pub n_paths: usize,
    pub dt: f64,
    pub seed: u64,
}

impl McEstimate {
    pub fn scalar(&self) -> f64 {
        self.value[(0, 0)]
    }

    pub fn scalar_se(&self) -> f64 {
        self.std_error[(0, 0)]
    }
}

/// Running sum, mean and centered second moment over independent sample
/// units. The mean and `m2` follow Welford's recurrence and merge pairwise;
/// the reported estimate is `sum / count`, exact for indicator counts.
#[derive(Clone)]
struct Moments {
    sum: Vec<f64>,
    mean: Vec<f64>,
    m2: Vec<f64>,
    count: usize,
}

impl Moments {
    fn new(len: usize) -> Self {
        Moments {
            sum: vec![0.0; len],
            mean: vec![0.0; len],
            m2: vec![0.0; len],
            count: 0,
        }
    }

    fn push(&mut self, x: &[f64]) {
        self.count += 1;
        let n = self.count as f64;
        for (i, &v) in x.iter().enumerate() {
            self.sum[i] += v;
            let d = v - self.mean[i];
            self.mean[i] += d / n;
            self.m2[i] += d * (v - self.mean[i]);
        }
    }

    fn merge(mut self, o: &Moments) -> Self {
        if o.count == 0 {
            return self;
        }
        let (na, nb) = (self.count as f64, o.count as f64);
        let n = na + nb;
        for i in 0..self.mean.len() {
            self.sum[i] += o.sum[i];
            let d = o.mean[i] - self.mean[i];
            self.mean[i] += d * nb / n;
            self.m2[i] += o.m2[i] + d * d * na * nb / n;
        }
        self.count += o.count;
        self
    }

    fn finish(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.count as f64;
        let se = self
            .m2
            .iter()
            .map(|&m2| (m2.max(0.0) / (n - 1.0) / n).sqrt())
            .collect();
        (self.sum.iter().map(|s| s / n).collect(), se)
    }
}

/// Run `units` sample units, `sim(rng, out)` filling one unit's values.
fn run_batches<F>(units: usize, len: usize, seed: u64, sim: F) -> Moments
where
    F: Fn(&mut ChaCha8Rng, &mut [f64]) + Sync,
{
    let n_batches = units.div_ceil(BATCH);
    let parts: Vec<Moments> = (0..n_batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64);
            let size = BATCH.min(units - b * BATCH);
            let mut m = Moments::new(len);
            let mut out = vec![0.0; len];
            for _ in 0..size {
                sim(&mut rng, &mut out);
                m.push(&out);
            }
            m
        })
        .collect();
    parts.iter().fold(Moments::new(len), |acc, p| acc.merge(p))
}

fn estimate(m: &Moments, rows: usize, cols: usize, cfg: &SimConfig) -> McEstimate {
    let (mean, se) = m.finish();
    McEstimate {
        value: DMatrix::from_row_slice(rows, cols, &mean),
        std_error: DMatrix::from_row_slice(rows, cols, &se),
        n_paths: cfg.n_paths,
        dt: cfg.dt,
        seed: cfg.seed,
    }
}

/// One exact CIR transition over `h`: a scaled non-central chi-square drawn
/// as a Poisson mixture of gammas.
struct CirStep {
    decay: f64,
    c: f64,
    half_df: f64,
    deterministic: bool,
    theta: f64,
    mu: f64,
    h: f64,
}

impl CirStep {
    fn new(theta: f64, mu: f64, sigma: f64, h: f64) -> Self {
        let decay = (-theta * h).exp();
        let c = if theta > 0.0 {
            sigma * sigma * -(-theta * h).exp_m1() / (4.0 * theta)
        } else {
            sigma * sigma * h / 4.0
        };
        let half_df = if sigma > 0.0 {
            2.0 * theta * mu / (sigma * sigma)
        } else {
            0.0
        };
        CirStep {
            decay,
            c,
            half_df,
            deterministic: sigma == 0.0,
            theta,
            mu,
            h,
        }
    }

    fn sample<R: Rng>(&self, x: f64, rng: &mut R) -> f64 {
        if self.deterministic {
            return self.mu + (x - self.mu) * (-self.theta * self.h).exp();
        }
        let lambda = x * self.decay / self.c;
        let df = 2.0 * self.half_df;
        if lambda > 1e12 {
            let z: f64 = rng.sample(StandardNormal);
            let v = df + lambda + (2.0 * (df + 2.0 * lambda)).sqrt() * z;
            return self.c * v.max(0.0);
        }
        let n = if lambda > 0.0 {
            Poisson::new(0.5 * lambda)
                .expect("positive Poisson rate")
                .sample(rng)
        } else {
            0.0
        };
        let shape = self.half_df + n;
        if shape <= 0.0 {
            return 0.0;
        }
        let g = Gamma::new(shape, 2.0)
            .expect("positive gamma shape")
            .sample(rng);
        self.c * g
    }
}

/// CIR zero-coupon bond `E[exp(-∫_0^τ X_s ds)]` with exact transitions and a
/// trapezoidal discount integral.
pub fn mc_cir_bond(model: &CirParams, x0: f64, tau: f64, cfg: &SimConfig) -> Result<McEstimate> {
    cfg.validate()?;
    if !(x0 >= 0.0) || !(tau >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need x0 >= 0 and tau >= 0, got ({x0}, {tau})"
        )));
    }
    if !(model.theta >= 0.0 && model.mu >= 0.0 && model.sigma >= 0.0) {
        return Err(Error::InvalidModel(
            "CIR parameters must be non-negative".into(),
        ));
    }
    if tau == 0.0 {
        let sure = Moments {
            sum: vec![cfg.n_paths as f64],
            mean: vec![1.0],
            m2: vec![0.0],
            count: cfg.n_paths,
        };
        return Ok(estimate(&sure, 1, 1, cfg));
    }
    let (n, h) = cfg.steps(tau);
    let step = CirStep::new(model.theta, model.mu, model.sigma, h);
    let m = run_batches(cfg.n_paths, 1, cfg.seed, |rng, out| {
        let mut x = x0;
        let mut integral = 0.0;
        for _ in 0..n {
            let next = step.sample(x, rng);
            integral += 0.5 * h * (x + next);
            x = next;
        }
        out[0] = (-integral).exp();
    });
    Ok(estimate(&m, 1, 1, cfg))
}

/// Black-Karasinski yield `-ln(E[exp(-∫_0^τ e^{X_s} ds)])/τ` with exact OU
/// steps; the standard error is carried through the logarithm by the delta
/// method. `x0` is the initial log-rate.
pub fn mc_bk_yield(model: &BkParams, x0: f64, tau: f64, cfg: &SimConfig) -> Result<McEstimate> {
    cfg.validate()?;
    if !(tau > 0.0) || !x0.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "need tau > 0 and finite x0, got ({x0}, {tau})"
        )));
    }
    if !(model.theta > 0.0 && model.sigma >= 0.0) {
        return Err(Error::InvalidModel(
            "BK needs theta > 0 and sigma >= 0".into(),
        ));
    }
    let (n, h) = cfg.steps(tau);
    let decay = (-model.theta * h).exp();
    let sd = model.sigma * (-(-2.0 * model.theta * h).exp_m1() / (2.0 * model.theta)).sqrt();
    let mu = model.mu;
    let path = |signs: f64, rng: &mut ChaCha8Rng, z_buf: Option<&mut Vec<f64>>| -> f64 {
        let mut x = x0;
        let mut r = x.exp();
        let mut integral = 0.0;
        let mut zs = z_buf;
        for j in 0..n {
            let z = match zs.as_deref_mut() {
                Some(buf) if signs < 0.0 => buf[j],
                Some(buf) => {
                    let z: f64 = rng.sample(StandardNormal);
                    buf[j] = z;
                    z
                }
                None => rng.sample(StandardNormal),
            };
            x = mu + (x - mu) * decay + sd * signs * z;
            let next = x.exp();
            integral += 0.5 * h * (r + next);
            r = next;
        }
        (-integral).exp()
    };
    let m = if cfg.antithetic {
        run_batches(cfg.n_paths.div_ceil(2), 1, cfg.seed, |rng, out| {
            let mut buf = vec![0.0; n];
            let a = path(1.0, rng, Some(&mut buf));
            let b = path(-1.0, rng, Some(&mut buf));
            out[0] = 0.5 * (a + b);
        })
    } else {
        run_batches(cfg.n_paths, 1, cfg.seed, |rng, out| {
            out[0] = path(1.0, rng, None);
        })
    };
    let (mean, se) = m.finish();
    let price = mean[0];
    let value = -price.ln() / tau;
    let std_error = se[0] / (price * tau);
    Ok(McEstimate {
        value: DMatrix::from_element(1, 1, value),
        std_error: DMatrix::from_element(1, 1, std_error),
        n_paths: cfg.n_paths,
        dt: cfg.dt,
        seed: cfg.seed,
    })
}

/// Migration frequencies of the rating chain driven by `Q(Y) = Σ Y_i Q_i`.
///
/// Each path simulates the factor `Y` by full-truncation Euler and carries
/// `m` rating chains, one per initial rating, that share the factor path.
/// A chain in rating `r` jumps with the probabilities of row `r` of
/// `exp(Q(Y⁺) dt)`. Entry `(i, j)` of the estimate is the frequency of
/// chains started in `i` ending in `j`.
pub fn mc_migration(
    model: &CreditParams,
    y0: &[f64],
    t: f64,
    cfg: &SimConfig,
) -> Result<McEstimate> {
    cfg.validate()?;
    model.validate()?;
    let n = model.n();
    let m = model.m();
    if y0.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: y0.len(),
        });
    }
    if y0.iter().any(|&v| !(v >= 0.0)) || !(t >= 0.0) {
        return Err(Error::InvalidArgument(
            "need y0 >= 0 componentwise and t >= 0".into(),
        ));
    }
    let zero_q = model.q.iter().all(|q| q.iter().all(|&v| v == 0.0));
    if t == 0.0 || zero_q {
        let id = DMatrix::<f64>::identity(m, m);
        return Ok(McEstimate {
            value: id,
            std_error: DMatrix::zeros(m, m),
            n_paths: cfg.n_paths,
            dt: cfg.dt,
            seed: cfg.seed,
        });
    }
    let (steps, h) = cfg.steps(t);
    let sqrt_h = h.sqrt();
    let k = &model.k;
    let k_mu: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|j| k[(i, j)] * model.mu[j]).sum())
        .collect();
    let q_flat: Vec<Vec<f64>> = model
        .q
        .iter()
        .map(|q| (0..m * m).map(|i| q[(i / m, i % m)] * h).collect())
        .collect();

    let path = |sign: f64, rng: &mut ChaCha8Rng, zs: &mut [f64], reuse: bool, out: &mut [f64]| {
        let mut y = y0.to_vec();
        let mut yp = vec![0.0; n];
        let mut ratings: Vec<usize> = (0..m).collect();
        let mut qh = vec![0.0; m * m];
        let mut row = vec![0.0; m];
        let mut scratch = vec![0.0; 2 * m];
        let mut rows: Vec<Option<Vec<f64>>> = vec![None; m];
        for s in 0..steps {
            for i in 0..n {
                yp[i] = y[i].max(0.0);
            }
            qh.iter_mut().for_each(|v| *v = 0.0);
            for (i, q) in q_flat.iter().enumerate() {
                if yp[i] > 0.0 {
                    for (dst, &v) in qh.iter_mut().zip(q) {
                        *dst += yp[i] * v;
                    }
                }
            }
            rows.iter_mut().for_each(|r| *r = None);
            for chain in 0..m {
                let r = ratings[chain];
                if rows[r].is_none() {
                    row.iter_mut().for_each(|v| *v = 0.0);
                    row[r] = 1.0;
                    row_expm(&mut row, &qh, m, &mut scratch);
                    rows[r] = Some(row.clone());
                }
                let probs = rows[r].as_ref().expect("row computed");
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut next = r;
                for (j, &p) in probs.iter().enumerate() {
                    acc += p.max(0.0);
                    if u < acc {
                        next = j;
                        break;
                    }
                }
                ratings[chain] = next;
            }
            for i in 0..n {
                let z = if reuse {
                    zs[s * n + i]
                } else {
                    let z: f64 = rng.sample(StandardNormal);
                    zs[s * n + i] = z;
                    z
                };
                let drift: f64 = k_mu[i] - (0..n).map(|j| k[(i, j)] * yp[j]).sum::<f64>();
                y[i] += drift * h + model.sigma[i] * yp[i].sqrt() * sqrt_h * sign * z;
            }
        }
        for (chain, &r) in ratings.iter().enumerate() {
            out[chain * m + r] += 1.0;
        }
    };

    let moments = if cfg.antithetic {
        run_batches(cfg.n_paths.div_ceil(2), m * m, cfg.seed, |rng, out| {
            out.iter_mut().for_each(|v| *v = 0.0);
            let mut zs = vec![0.0; steps * n];
            path(1.0, rng, &mut zs, false, out);
            path(-1.0, rng, &mut zs, true, out);
            out.iter_mut().for_each(|v| *v *= 0.5);
        })
    } else {
        run_batches(cfg.n_paths, m * m, cfg.seed, |rng, out| {
            out.iter_mut().for_each(|v| *v = 0.0);
            let mut zs = vec![0.0; steps * n];
            path(1.0, rng, &mut zs, false, out);
        })
    };
    Ok(estimate(&moments, m, m, cfg))
}
