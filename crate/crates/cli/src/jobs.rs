//! Job execution. Each job expands into (case, order, tenor) cells; cells
//! for different orders run in parallel and rows are assembled in order.

use std::time::Instant;

use polymoment::{
    credit_analytic_1d, credit_analytic_2d_commuting, mc_bk_yield, mc_cir_bond, mc_migration,
    perturb_generator_centered, resolvent_norm, sensitivity, BkParams, CirParams, CreditParams,
    DMatrix, DVector, Error, ExpansionPoint, MatrixGenerator, ModelSpec, ParamId, Projection,
    SimConfig, TimeGrid, COMMUTATOR_TOL,
};
use rayon::prelude::*;

use crate::config::{Case, ExperimentConfig, Job};

/// Where a reference value comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefKind {
    Analytic,
    MonteCarlo,
    FiniteDifference,
}

impl RefKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RefKind::Analytic => "analytic",
            RefKind::MonteCarlo => "monte-carlo",
            RefKind::FiniteDifference => "finite-difference",
        }
    }
}

/// One CSV line. `abs_error` is `|value - reference|` whenever a reference
/// is present.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub job: String,
    pub model: String,
    pub order: usize,
    pub tenor: f64,
    pub value: f64,
    pub reference: Option<f64>,
    pub ref_kind: Option<RefKind>,
    pub ref_se: Option<f64>,
    pub abs_error: Option<f64>,
    pub wall_ms: Option<f64>,
}

impl ResultRow {
    fn new(job: &str, model: String, order: usize, tenor: f64, value: f64) -> Self {
        ResultRow {
            job: job.to_string(),
            model,
            order,
            tenor,
            value,
            reference: None,
            ref_kind: None,
            ref_se: None,
            abs_error: None,
            wall_ms: None,
        }
    }

    fn against(mut self, reference: Option<&Reference>) -> Self {
        if let Some(r) = reference {
            self.reference = Some(r.value);
            self.ref_kind = Some(r.kind);
            self.ref_se = r.se;
            self.abs_error = Some((self.value - r.value).abs());
        }
        self
    }
}

#[derive(Debug, Clone, Copy)]
struct Reference {
    value: f64,
    kind: RefKind,
    se: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Fill `wall_ms`. Off by default so that output is reproducible.
    pub timing: bool,
}

/// A failed run, split by exit code.
#[derive(Debug, Clone, PartialEq)]
pub enum RunError {
    /// Input the library rejected at run time.
    Invalid(String),
    /// Singular resolvent, non-diagonalisable or non-commuting generators,
    /// non-finite results.
    Numerical(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Invalid(_) => 2,
            RunError::Numerical(_) => 3,
        }
    }
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Invalid(m) => write!(f, "invalid input: {m}"),
            RunError::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        if e.is_numerical() || matches!(e, Error::NonCommuting(_)) {
            RunError::Numerical(e.to_string())
        } else {
            RunError::Invalid(e.to_string())
        }
    }
}

type Result<T> = std::result::Result<T, RunError>;

/// Whether a closed-form migration matrix exists: one factor, or two
/// independent factors with commuting generators.
pub fn credit_analytic_available(p: &CreditParams) -> bool {
    match p.n() {
        1 => true,
        2 => {
            let diagonal_k = p.k[(0, 1)] == 0.0 && p.k[(1, 0)] == 0.0;
            let (q1, q2) = (&p.q[0], &p.q[1]);
            diagonal_k
                && q1.shape() == q2.shape()
                && (q1 * q2 - q2 * q1).norm() <= COMMUTATOR_TOL
        }
        _ => false,
    }
}

/// Execute a validated config. Rows are ordered by case, then order, then
/// tenor (or λ for stability scans).
pub fn run(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Vec<ResultRow>> {
    let mut rows = Vec::new();
    for case in &cfg.cases {
        let more = match (cfg.job, &case.model) {
            (Job::StabilityScan, _) => stability(cfg, case, opts)?,
            (Job::SensitivityCheck, _) => sensitivities(cfg, case, opts)?,
            (_, ModelSpec::Cir(p)) => cir_yields(cfg, case, p, opts)?,
            (_, ModelSpec::Bk(p)) => bk_yields(cfg, case, p, opts)?,
            (_, ModelSpec::Credit(p)) => migrations(cfg, case, p, opts)?,
        };
        rows.extend(more);
    }
    Ok(rows)
}

/// Evaluates `f` for every order in parallel, keeping order, and stamps
/// each cell's rows with its wall time when asked.
fn per_order<F>(orders: &[usize], opts: &RunOptions, f: F) -> Result<Vec<ResultRow>>
where
    F: Fn(usize) -> Result<Vec<ResultRow>> + Sync,
{
    let cells: Vec<Vec<ResultRow>> = orders
        .par_iter()
        .map(|&k| {
            let start = Instant::now();
            let mut rows = f(k)?;
            if opts.timing {
                let ms = start.elapsed().as_secs_f64() * 1e3;
                rows.iter_mut().for_each(|r| r.wall_ms = Some(ms));
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    Ok(cells.into_iter().flatten().collect())
}

fn grid(cfg: &ExperimentConfig) -> Result<TimeGrid> {
    Ok(TimeGrid::new(cfg.tenors.clone())?)
}

fn mc_config(cfg: &ExperimentConfig) -> Result<&SimConfig> {
    cfg.mc
        .as_ref()
        .ok_or_else(|| RunError::Invalid(format!("{} needs an mc section", cfg.job.name())))
}

fn approx_yields(cfg: &ExperimentConfig, case: &Case, k: usize) -> Result<Vec<f64>> {
    let g = MatrixGenerator::build(&case.model, k, &cfg.projection)?;
    Ok(g.bond_yields(case.x0[0], &grid(cfg)?, cfg.tol)?)
}

fn cir_yields(
    cfg: &ExperimentConfig,
    case: &Case,
    p: &CirParams,
    opts: &RunOptions,
) -> Result<Vec<ResultRow>> {
    let x = case.x0[0];
    let refs: Vec<Reference> = if cfg.job == Job::McBenchmark {
        let sim = mc_config(cfg)?;
        cfg.tenors
            .iter()
            .map(|&t| {
                let est = mc_cir_bond(p, x, t, sim)?;
                let (price, se) = (est.scalar(), est.scalar_se());
                Ok(Reference {
                    value: -price.ln() / t,
                    kind: RefKind::MonteCarlo,
                    // delta method for -ln(P)/t
                    se: Some(se / (price * t)),
                })
            })
            .collect::<Result<_>>()?
    } else {
        cfg.tenors
            .iter()
            .map(|&t| Reference {
                value: -polymoment::cir_bond_price(p.theta, p.mu, p.sigma, x, t).ln() / t,
                kind: RefKind::Analytic,
                se: None,
            })
            .collect()
    };
    per_order(&cfg.orders, opts, |k| {
        let ys = approx_yields(cfg, case, k)?;
        Ok(rows_for(cfg, &case.label, k, &ys, Some(&refs)))
    })
}

fn bk_yields(
    cfg: &ExperimentConfig,
    case: &Case,
    p: &BkParams,
    opts: &RunOptions,
) -> Result<Vec<ResultRow>> {
    let refs: Option<Vec<Reference>> = match &cfg.mc {
        None => None,
        Some(sim) => Some(
            cfg.tenors
                .iter()
                .map(|&t| {
                    let est = mc_bk_yield(p, case.x0[0], t, sim)?;
                    Ok(Reference {
                        value: est.scalar(),
                        kind: RefKind::MonteCarlo,
                        se: Some(est.scalar_se()),
                    })
                })
                .collect::<Result<_>>()?,
        ),
    };
    per_order(&cfg.orders, opts, |k| {
        let ys = approx_yields(cfg, case, k)?;
        Ok(rows_for(cfg, &case.label, k, &ys, refs.as_deref()))
    })
}

fn rows_for(
    cfg: &ExperimentConfig,
    label: &str,
    k: usize,
    values: &[f64],
    refs: Option<&[Reference]>,
) -> Vec<ResultRow> {
    cfg.tenors
        .iter()
        .zip(values)
        .enumerate()
        .map(|(i, (&t, &v))| {
            ResultRow::new(&cfg.id, label.to_string(), k, t, v).against(refs.map(|r| &r[i]))
        })
        .collect()
}

/// Reference migration matrices per tenor, with per-entry standard errors
/// for simulated references.
struct MigrationRef {
    kind: RefKind,
    p: Vec<DMatrix<f64>>,
    se: Option<Vec<DMatrix<f64>>>,
}

fn factor(p: &CreditParams, i: usize) -> CirParams {
    CirParams {
        theta: p.k[(i, i)],
        mu: p.mu[i],
        sigma: p.sigma[i],
        discounted: true,
    }
}

fn migration_reference(
    cfg: &ExperimentConfig,
    case: &Case,
    p: &CreditParams,
) -> Result<Option<MigrationRef>> {
    let y = &case.x0;
    if cfg.job != Job::McBenchmark && credit_analytic_available(p) {
        let p_ref = cfg
            .tenors
            .iter()
            .map(|&t| {
                let m = if p.n() == 1 {
                    credit_analytic_1d(&p.q[0], &factor(p, 0), y[0], t)?
                } else {
                    credit_analytic_2d_commuting(
                        &p.q[0],
                        &p.q[1],
                        &factor(p, 0),
                        &factor(p, 1),
                        [y[0], y[1]],
                        t,
                    )?
                };
                Ok(m.p)
            })
            .collect::<Result<_>>()?;
        return Ok(Some(MigrationRef {
            kind: RefKind::Analytic,
            p: p_ref,
            se: None,
        }));
    }
    let Some(sim) = &cfg.mc else {
        return Ok(None);
    };
    let (mut ps, mut ses) = (Vec::new(), Vec::new());
    for &t in &cfg.tenors {
        let est = mc_migration(p, y, t, sim)?;
        ps.push(est.value);
        ses.push(est.std_error);
    }
    Ok(Some(MigrationRef {
        kind: RefKind::MonteCarlo,
        p: ps,
        se: Some(ses),
    }))
}

/// Per cell: a `label/mae` row holding the element-wise mean absolute error
/// (as both value and abs_error, against a reference of 0), then one
/// `label/p[i,j]` row per entry unless the job is a convergence study.
fn migrations(
    cfg: &ExperimentConfig,
    case: &Case,
    p: &CreditParams,
    opts: &RunOptions,
) -> Result<Vec<ResultRow>> {
    let reference = migration_reference(cfg, case, p)?;
    let entries = cfg.job != Job::ConvergenceStudy;
    let m = p.m();
    per_order(&cfg.orders, opts, |l| {
        let g = MatrixGenerator::build(&case.model, l, &cfg.projection)?;
        let mats = g.migration_matrices(&case.x0, &grid(cfg)?, cfg.tol)?;
        let mut rows = Vec::new();
        for (ti, (mat, &t)) in mats.iter().zip(&cfg.tenors).enumerate() {
            if let Some(r) = &reference {
                let mae = mat.mean_abs_error(&r.p[ti]);
                rows.push(
                    ResultRow::new(&cfg.id, format!("{}/mae", case.label), l, t, mae).against(
                        Some(&Reference {
                            value: 0.0,
                            kind: r.kind,
                            se: None,
                        }),
                    ),
                );
            }
            if !entries {
                continue;
            }
            for i in 0..m {
                for j in 0..m {
                    let cell_ref = reference.as_ref().map(|r| Reference {
                        value: r.p[ti][(i, j)],
                        kind: r.kind,
                        se: r.se.as_ref().map(|s| s[ti][(i, j)]),
                    });
                    rows.push(
                        ResultRow::new(
                            &cfg.id,
                            format!("{}/p[{i},{j}]", case.label),
                            l,
                            t,
                            mat.p[(i, j)],
                        )
                        .against(cell_ref.as_ref()),
                    );
                }
            }
        }
        Ok(rows)
    })
}

/// Resolvent norms `‖(λI - A_k)^{-1}‖₂`; the tenor column carries λ.
fn stability(cfg: &ExperimentConfig, case: &Case, opts: &RunOptions) -> Result<Vec<ResultRow>> {
    per_order(&cfg.orders, opts, |k| {
        let g = MatrixGenerator::build(&case.model, k, &cfg.projection)?;
        cfg.lambdas
            .iter()
            .map(|&lambda| {
                let norm = resolvent_norm(g.matrix(), lambda)?;
                Ok(ResultRow::new(&cfg.id, case.label.clone(), k, lambda, norm))
            })
            .collect()
    })
}

fn with_param(model: &ModelSpec, param: ParamId, value: f64) -> ModelSpec {
    let mut m = model.clone();
    let slot = match (&mut m, param) {
        (ModelSpec::Cir(p), ParamId::Theta) => &mut p.theta,
        (ModelSpec::Cir(p), ParamId::Mu) => &mut p.mu,
        (ModelSpec::Cir(p), ParamId::Sigma) => &mut p.sigma,
        (ModelSpec::Bk(p), ParamId::Theta) => &mut p.theta,
        (ModelSpec::Bk(p), ParamId::Mu) => &mut p.mu,
        (ModelSpec::Bk(p), ParamId::Sigma) => &mut p.sigma,
        _ => unreachable!("validation restricts sensitivities to cir/bk scalars"),
    };
    *slot = value;
    m
}

fn param_value(model: &ModelSpec, param: ParamId) -> f64 {
    match (model, param) {
        (ModelSpec::Cir(p), ParamId::Theta) => p.theta,
        (ModelSpec::Cir(p), ParamId::Mu) => p.mu,
        (ModelSpec::Cir(p), ParamId::Sigma) => p.sigma,
        (ModelSpec::Bk(p), ParamId::Theta) => p.theta,
        (ModelSpec::Bk(p), ParamId::Mu) => p.mu,
        (ModelSpec::Bk(p), ParamId::Sigma) => p.sigma,
        _ => unreachable!("validation restricts sensitivities to cir/bk scalars"),
    }
}

/// `∂P/∂p` of the approximate bond price from the integral formula, against
/// a central difference of the approximate price. Both hold the expansion
/// point at its unperturbed value.
fn sensitivities(cfg: &ExperimentConfig, case: &Case, opts: &RunOptions) -> Result<Vec<ResultRow>> {
    let x = case.x0[0];
    let grid = grid(cfg)?;
    let mut rows = Vec::new();
    for &param in &cfg.params {
        let label = format!("{}/d_{param}", case.label);
        let base = param_value(&case.model, param);
        let h = 1e-5 * base.abs().max(1e-2);
        rows.extend(per_order(&cfg.orders, opts, |k| {
            let g = MatrixGenerator::build(&case.model, k, &cfg.projection)?;
            let frozen = match &cfg.projection {
                Projection::FiniteSection => Projection::FiniteSection,
                Projection::Taylor(_) => Projection::Taylor(ExpansionPoint::At(g.center().to_vec())),
            };
            let da = perturb_generator_centered(&case.model, param, k, &frozen)?;
            let b = DVector::from_vec(g.basis_values(&[x])?);
            let mut e0 = DVector::zeros(g.dim());
            e0[0] = 1.0;
            let price = |v: f64| -> Result<Vec<f64>> {
                let shifted = MatrixGenerator::build(&with_param(&case.model, param, v), k, &frozen)?;
                Ok(shifted.bond_prices(x, &grid, cfg.tol)?)
            };
            let (up, down) = (price(base + h)?, price(base - h)?);
            cfg.tenors
                .iter()
                .enumerate()
                .map(|(i, &t)| {
                    let d = sensitivity(g.centered(), &da, &e0, t, cfg.quad_steps)?.dot(&b);
                    let fd = Reference {
                        value: (up[i] - down[i]) / (2.0 * h),
                        kind: RefKind::FiniteDifference,
                        se: None,
                    };
                    Ok(ResultRow::new(&cfg.id, label.clone(), k, t, d).against(Some(&fd)))
                })
                .collect()
        })?);
    }
    Ok(rows)
}
