//! Experiment configuration: parsing and validation with field paths.

use polymoment::{
    bk_moment_map_inverse, BkParams, CirParams, CreditParams, DMatrix,
    ExpansionPoint, ModelSpec, ParamId, Projection, SimConfig,
};
use serde_json::{Map, Value};

/// Job kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Job {
    PriceCir,
    PriceBk,
    CreditMigrate,
    StabilityScan,
    ConvergenceStudy,
    McBenchmark,
    SensitivityCheck,
}

impl Job {
    const ALL: [(&'static str, Job); 7] = [
        ("PriceCir", Job::PriceCir),
        ("PriceBk", Job::PriceBk),
        ("CreditMigrate", Job::CreditMigrate),
        ("StabilityScan", Job::StabilityScan),
        ("ConvergenceStudy", Job::ConvergenceStudy),
        ("McBenchmark", Job::McBenchmark),
        ("SensitivityCheck", Job::SensitivityCheck),
    ];

    pub fn name(self) -> &'static str {
        Job::ALL.iter().find(|(_, j)| *j == self).map(|(n, _)| *n).unwrap()
    }

    fn parse(s: &str) -> Option<Job> {
        Job::ALL.iter().find(|(n, _)| *n == s).map(|(_, j)| *j)
    }
}

/// One model and starting state. The label is the CSV model tag.
#[derive(Debug, Clone)]
pub struct Case {
    pub label: String,
    pub model: ModelSpec,
    /// Initial state of the driving factor (log-rate for BK).
    pub x0: Vec<f64>,
}

/// A validated experiment.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub id: String,
    pub job: Job,
    /// Non-empty; all cases share one model type and dimension.
    pub cases: Vec<Case>,
    pub orders: Vec<usize>,
    pub tenors: Vec<f64>,
    pub projection: Projection,
    pub tol: f64,
    pub mc: Option<SimConfig>,
    pub lambdas: Vec<f64>,
    pub params: Vec<ParamId>,
    pub quad_steps: usize,
    pub output: Option<String>,
}

pub const DEFAULT_TOL: f64 = 1e-14;
pub const DEFAULT_QUAD_STEPS: usize = 4096;

/// Validation failure at a JSON path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

struct Checker {
    errors: Vec<ConfigError>,
}

impl Checker {
    fn err(&mut self, path: &str, message: impl Into<String>) {
        self.errors.push(ConfigError {
            path: path.to_string(),
            message: message.into(),
        });
    }

    fn object<'a>(&mut self, path: &str, v: &'a Value) -> Option<&'a Map<String, Value>> {
        let o = v.as_object();
        if o.is_none() {
            self.err(path, "expected an object");
        }
        o
    }

    fn known_fields(&mut self, path: &str, o: &Map<String, Value>, allowed: &[&str]) {
        for key in o.keys() {
            if !allowed.contains(&key.as_str()) {
                self.err(&join(path, key), "unknown field");
            }
        }
    }

    fn required<'a>(&mut self, path: &str, o: &'a Map<String, Value>, key: &str) -> Option<&'a Value> {
        let v = o.get(key);
        if v.is_none() {
            self.err(&join(path, key), "missing required field");
        }
        v
    }

    fn number(&mut self, path: &str, v: &Value) -> Option<f64> {
        match v.as_f64() {
            Some(x) if x.is_finite() => Some(x),
            _ => {
                self.err(path, "expected a finite number");
                None
            }
        }
    }

    fn req_number(&mut self, path: &str, o: &Map<String, Value>, key: &str) -> Option<f64> {
        let v = self.required(path, o, key)?;
        self.number(&join(path, key), v)
    }

    fn opt_number(&mut self, path: &str, o: &Map<String, Value>, key: &str) -> Option<Option<f64>> {
        match o.get(key) {
            None => Some(None),
            Some(v) => self.number(&join(path, key), v).map(Some),
        }
    }

    fn integer(&mut self, path: &str, v: &Value) -> Option<u64> {
        let n = v.as_u64();
        if n.is_none() {
            self.err(path, "expected a non-negative integer");
        }
        n
    }

    fn boolean(&mut self, path: &str, o: &Map<String, Value>, key: &str, default: bool) -> bool {
        match o.get(key) {
            None => default,
            Some(Value::Bool(b)) => *b,
            Some(_) => {
                self.err(&join(path, key), "expected a boolean");
                default
            }
        }
    }

    fn string<'a>(&mut self, path: &str, v: &'a Value) -> Option<&'a str> {
        let s = v.as_str();
        if s.is_none() {
            self.err(path, "expected a string");
        }
        s
    }

    fn array<'a>(&mut self, path: &str, v: &'a Value) -> Option<&'a Vec<Value>> {
        let a = v.as_array();
        if a.is_none() {
            self.err(path, "expected an array");
        }
        a
    }

    fn numbers(&mut self, path: &str, v: &Value) -> Option<Vec<f64>> {
        let a = self.array(path, v)?;
        let before = self.errors.len();
        let out: Vec<f64> = a
            .iter()
            .enumerate()
            .filter_map(|(i, x)| self.number(&index(path, i), x))
            .collect();
        (self.errors.len() == before).then_some(out)
    }

    /// Row-major nested array as an `r x c` matrix.
    fn matrix(&mut self, path: &str, v: &Value) -> Option<DMatrix<f64>> {
        let rows = self.array(path, v)?;
        if rows.is_empty() {
            self.err(path, "matrix must have at least one row");
            return None;
        }
        let before = self.errors.len();
        let parsed: Vec<Vec<f64>> = rows
            .iter()
            .enumerate()
            .filter_map(|(i, r)| self.numbers(&index(path, i), r))
            .collect();
        if self.errors.len() != before {
            return None;
        }
        let cols = parsed[0].len();
        for (i, r) in parsed.iter().enumerate() {
            if r.len() != cols {
                self.err(&index(path, i), format!("expected {cols} entries, got {}", r.len()));
                return None;
            }
        }
        Some(DMatrix::from_fn(parsed.len(), cols, |i, j| parsed[i][j]))
    }
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

fn index(path: &str, i: usize) -> String {
    format!("{path}[{i}]")
}

const TOP_FIELDS: &[&str] = &[
    "job", "id", "label", "model", "x0", "r0", "cases", "orders", "tenors", "projection", "tol", "mc", "lambdas",
    "params", "quad_steps", "output",
];

/// Parse and validate a JSON config, reporting every problem found.
pub fn validate_config(text: &str) -> Result<ExperimentConfig, Vec<ConfigError>> {
    let root: Value = serde_json::from_str(text).map_err(|e| {
        vec![ConfigError {
            path: "$".into(),
            message: format!("invalid JSON: {e}"),
        }]
    })?;
    let mut c = Checker { errors: Vec::new() };
    let Some(top) = c.object("$", &root) else {
        return Err(c.errors);
    };
    c.known_fields("", top, TOP_FIELDS);

    let job = c.required("", top, "job").and_then(|v| {
        let s = c.string("job", v)?;
        let j = Job::parse(s);
        if j.is_none() {
            let names: Vec<_> = Job::ALL.iter().map(|(n, _)| *n).collect();
            c.err("job", format!("unknown job `{s}`, expected one of {}", names.join(", ")));
        }
        j
    });
    let id = match top.get("id") {
        Some(v) => c.string("id", v).map(str::to_string),
        None => job.map(|j| j.name().to_string()),
    };
    let cases = parse_cases(&mut c, top);

    let orders = c.required("", top, "orders").and_then(|v| {
        let a = c.array("orders", v)?;
        let before = c.errors.len();
        let ks: Vec<usize> = a
            .iter()
            .enumerate()
            .filter_map(|(i, x)| c.integer(&index("orders", i), x).map(|k| k as usize))
            .collect();
        if c.errors.len() != before {
            return None;
        }
        if ks.is_empty() {
            c.err("orders", "must be non-empty");
        } else if ks.contains(&0) {
            c.err("orders", "orders must be >= 1");
        } else if ks.windows(2).any(|w| w[1] <= w[0]) {
            c.err("orders", "must be strictly increasing");
        }
        Some(ks)
    });

    let tenors = match top.get("tenors") {
        None if job == Some(Job::StabilityScan) => Some(Vec::new()),
        None => {
            c.err("tenors", "missing required field");
            None
        }
        Some(v) => c.numbers("tenors", v).inspect(|ts| {
            if ts.is_empty() {
                c.err("tenors", "must be non-empty");
            } else if ts.iter().any(|&t| t <= 0.0) {
                c.err("tenors", "tenors must be positive");
            } else if ts.windows(2).any(|w| w[1] <= w[0]) {
                c.err("tenors", "must be strictly increasing");
            }
        }),
    };

    let dim = cases.as_ref().map(|cs| cs[0].model.dim());

    let projection = match top.get("projection") {
        None => Some(Projection::taylor_at_mean()),
        Some(v) => parse_projection(&mut c, v, dim),
    };

    let tol = match c.opt_number("", top, "tol") {
        Some(Some(t)) if !(t > 0.0 && t < 1.0) => {
            c.err("tol", "must be in (0, 1)");
            None
        }
        Some(t) => Some(t.unwrap_or(DEFAULT_TOL)),
        None => None,
    };

    let mc = match top.get("mc") {
        None => Some(None),
        Some(v) => parse_mc(&mut c, v).map(Some),
    };

    let lambdas = match top.get("lambdas") {
        None => Some(Vec::new()),
        Some(v) => c.numbers("lambdas", v).inspect(|ls| {
            if ls.iter().any(|&l| l <= 0.0) {
                c.err("lambdas", "must be positive");
            }
        }),
    };

    let params = match top.get("params") {
        None => Some(Vec::new()),
        Some(v) => c.array("params", v).map(|a| {
            a.iter()
                .enumerate()
                .filter_map(|(i, p)| {
                    let path = index("params", i);
                    let s = c.string(&path, p)?;
                    match s.parse::<ParamId>() {
                        Ok(id) => Some(id),
                        Err(e) => {
                            c.err(&path, e.to_string());
                            None
                        }
                    }
                })
                .collect()
        }),
    };

    let quad_steps = match top.get("quad_steps") {
        None => Some(DEFAULT_QUAD_STEPS),
        Some(v) => c.integer("quad_steps", v).and_then(|q| {
            if q < 8 {
                c.err("quad_steps", "must be >= 8");
                None
            } else {
                Some(q as usize)
            }
        }),
    };

    let output = match top.get("output") {
        None => Some(None),
        Some(v) => c.string("output", v).map(|s| Some(s.to_string())),
    };

    if let (Some(job), Some(cases)) = (job, cases.as_ref()) {
        for case in cases {
            check_job(&mut c, job, &case.model, &mc, &lambdas, &params);
        }
        c.errors.dedup();
    }

    if !c.errors.is_empty() {
        return Err(c.errors);
    }
    Ok(ExperimentConfig {
        id: id.unwrap(),
        job: job.unwrap(),
        cases: cases.unwrap(),
        orders: orders.unwrap(),
        tenors: tenors.unwrap(),
        projection: projection.unwrap(),
        tol: tol.unwrap(),
        mc: mc.unwrap(),
        lambdas: lambdas.unwrap(),
        params: params.unwrap(),
        quad_steps: quad_steps.unwrap(),
        output: output.unwrap(),
    })
}

const CASE_FIELDS: &[&str] = &["label", "model", "x0", "r0"];

/// Either `cases` or a single top-level `model` with `x0`/`r0`.
fn parse_cases(c: &mut Checker, top: &Map<String, Value>) -> Option<Vec<Case>> {
    let Some(v) = top.get("cases") else {
        let model = c.required("", top, "model").and_then(|v| parse_model(c, "model", v));
        let x0 = parse_state(c, "", top, model.as_ref());
        let label = match top.get("label") {
            Some(v) => c.string("label", v).map(str::to_string),
            None => model.as_ref().map(|m| m.tag().to_string()),
        };
        let (label, model, x0) = (label?, model?, x0?);
        return Some(vec![Case { label, model, x0 }]);
    };

    for key in ["label", "model", "x0", "r0"] {
        if top.contains_key(key) {
            c.err(key, "not allowed together with cases; move it into each case");
        }
    }
    let items = c.array("cases", v)?;
    if items.is_empty() {
        c.err("cases", "must be non-empty");
        return None;
    }
    let before = c.errors.len();
    let mut cases = Vec::with_capacity(items.len());
    for (i, item) in items.iter().enumerate() {
        let path = index("cases", i);
        let Some(o) = c.object(&path, item) else {
            continue;
        };
        c.known_fields(&path, o, CASE_FIELDS);
        let model = c
            .required(&path, o, "model")
            .and_then(|v| parse_model(c, &join(&path, "model"), v));
        let x0 = parse_state(c, &path, o, model.as_ref());
        let label = match o.get("label") {
            Some(v) => c.string(&join(&path, "label"), v).map(str::to_string),
            None => model.as_ref().map(|m| format!("{}#{i}", m.tag())),
        };
        if let (Some(label), Some(model), Some(x0)) = (label, model, x0) {
            cases.push(Case { label, model, x0 });
        }
    }
    if c.errors.len() != before {
        return None;
    }
    let first = &cases[0].model;
    for (i, case) in cases.iter().enumerate().skip(1) {
        if case.model.tag() != first.tag() || case.model.dim() != first.dim() {
            c.err(
                &join(&index("cases", i), "model"),
                format!("all cases must share the model type and dimension of cases[0] ({}, n = {})", first.tag(), first.dim()),
            );
        }
        if cases[..i].iter().any(|p| p.label == case.label) {
            c.err(&join(&index("cases", i), "label"), format!("duplicate label `{}`", case.label));
        }
    }
    (c.errors.len() == before).then_some(cases)
}

fn parse_model(c: &mut Checker, mp: &str, v: &Value) -> Option<ModelSpec> {
    let o = c.object(mp, v)?;
    let kind = c.required(mp, o, "type").and_then(|t| c.string(&join(mp, "type"), t))?;
    match kind {
        "cir" => {
            c.known_fields(mp, o, &["type", "theta", "mu", "sigma", "discounted"]);
            let theta = c.req_number(mp, o, "theta");
            let mu = c.req_number(mp, o, "mu");
            let sigma = c.req_number(mp, o, "sigma");
            let discounted = c.boolean(mp, o, "discounted", true);
            let (theta, mu, sigma) = (theta?, mu?, sigma?);
            if theta < 0.0 {
                c.err(&join(mp, "theta"), "must be >= 0");
            }
            if mu < 0.0 {
                c.err(&join(mp, "mu"), "must be >= 0");
            }
            if sigma < 0.0 {
                c.err(&join(mp, "sigma"), "must be >= 0");
            }
            Some(ModelSpec::Cir(CirParams {
                theta,
                mu,
                sigma,
                discounted,
            }))
        }
        "bk" => {
            c.known_fields(
                mp,
                o,
                &[
                    "type",
                    "theta",
                    "mu",
                    "sigma",
                    "stationary_mean",
                    "stationary_sd",
                    "discounted",
                    "series_center",
                ],
            );
            let theta = c.req_number(mp, o, "theta")?;
            if theta <= 0.0 {
                c.err(&join(mp, "theta"), "must be > 0");
                return None;
            }
            let direct = o.contains_key("mu") || o.contains_key("sigma");
            let stationary = o.contains_key("stationary_mean") || o.contains_key("stationary_sd");
            let (mu, sigma) = match (direct, stationary) {
                (true, true) => {
                    c.err(mp, "give either mu/sigma or stationary_mean/stationary_sd, not both");
                    return None;
                }
                (false, true) => {
                    let mean = c.req_number(mp, o, "stationary_mean");
                    let sd = c.req_number(mp, o, "stationary_sd");
                    let (mean, sd) = (mean?, sd?);
                    match bk_moment_map_inverse(mean, sd, theta) {
                        Ok(p) => p,
                        Err(e) => {
                            c.err(mp, e.to_string());
                            return None;
                        }
                    }
                }
                _ => {
                    let mu = c.req_number(mp, o, "mu");
                    let sigma = c.req_number(mp, o, "sigma");
                    let (mu, sigma) = (mu?, sigma?);
                    if sigma < 0.0 {
                        c.err(&join(mp, "sigma"), "must be >= 0");
                    }
                    (mu, sigma)
                }
            };
            let mut p = BkParams::new(theta, mu, sigma);
            p.discounted = c.boolean(mp, o, "discounted", true);
            p.series_center = c.opt_number(mp, o, "series_center")?;
            Some(ModelSpec::Bk(p))
        }
        "credit" => {
            c.known_fields(mp, o, &["type", "k", "mu", "sigma", "q"]);
            let k = c.required(mp, o, "k").and_then(|v| c.matrix(&join(mp, "k"), v));
            let mu = c.required(mp, o, "mu").and_then(|v| c.numbers(&join(mp, "mu"), v));
            let sigma = c.required(mp, o, "sigma").and_then(|v| c.numbers(&join(mp, "sigma"), v));
            let q = c.required(mp, o, "q").and_then(|v| {
                let a = c.array(&join(mp, "q"), v)?;
                let before = c.errors.len();
                let qs: Vec<_> = a
                    .iter()
                    .enumerate()
                    .filter_map(|(i, m)| c.matrix(&index(&join(mp, "q"), i), m))
                    .collect();
                (c.errors.len() == before).then_some(qs)
            });
            let (k, mu, sigma, q) = (k?, mu?, sigma?, q?);
            let n = k.nrows();
            let before = c.errors.len();
            if !k.is_square() {
                c.err(&join(mp, "k"), "must be square");
            }
            for (name, len) in [(&join(mp, "mu"), mu.len()), (&join(mp, "sigma"), sigma.len()), (&join(mp, "q"), q.len())] {
                if len != n {
                    c.err(name, format!("expected {n} entries to match model.k, got {len}"));
                }
            }
            for i in 0..n.min(k.ncols()) {
                if k[(i, i)] < 0.0 {
                    c.err(&format!("{mp}.k[{i}][{i}]"), "diagonal must be >= 0");
                }
            }
            for (i, s) in sigma.iter().enumerate() {
                if *s < 0.0 {
                    c.err(&index(&join(mp, "sigma"), i), "must be >= 0");
                }
            }
            let m = q.first().map_or(0, |q0| q0.nrows());
            for (i, qi) in q.iter().enumerate() {
                check_rating_generator(c, &index(&join(mp, "q"), i), qi, m);
            }
            if c.errors.len() != before {
                return None;
            }
            let params = CreditParams { k, mu, sigma, q };
            if let Err(e) = params.validate() {
                c.err(mp, e.to_string());
                return None;
            }
            Some(ModelSpec::Credit(params))
        }
        other => {
            c.err(&join(mp, "type"), format!("unknown model `{other}`, expected cir, bk or credit"));
            None
        }
    }
}

/// Row-level generator checks so that messages name the offending row.
fn check_rating_generator(c: &mut Checker, path: &str, q: &DMatrix<f64>, m: usize) {
    if q.nrows() != m || q.ncols() != m {
        c.err(path, format!("expected {m}x{m}, got {}x{}", q.nrows(), q.ncols()));
        return;
    }
    for r in 0..m {
        let row_path = index(path, r);
        let sum: f64 = q.row(r).iter().sum();
        if sum.abs() > polymoment::GENERATOR_ROW_TOL {
            c.err(&row_path, format!("row sums to {sum}, expected 0"));
        }
        if let Some(col) = (0..m).find(|&j| j != r && q[(r, j)] < 0.0) {
            c.err(&index(&row_path, col), "off-diagonal rate must be >= 0");
        }
    }
}

fn parse_state(
    c: &mut Checker,
    path: &str,
    top: &Map<String, Value>,
    model: Option<&ModelSpec>,
) -> Option<Vec<f64>> {
    let model = model?;
    let (x0_path, r0_path) = (join(path, "x0"), join(path, "r0"));
    let dim = model.dim();
    let x0 = match (top.get("x0"), top.get("r0")) {
        (Some(_), Some(_)) => {
            c.err(&r0_path, "give either x0 or r0, not both");
            return None;
        }
        (None, Some(r)) => {
            if !matches!(model, ModelSpec::Bk(_)) {
                c.err(&r0_path, "only Black-Karasinski models take r0; use x0");
                return None;
            }
            let r = c.number(&r0_path, r)?;
            if r <= 0.0 {
                c.err(&r0_path, "must be > 0");
                return None;
            }
            vec![r.ln()]
        }
        (Some(v), None) => match v {
            Value::Array(_) => c.numbers(&x0_path, v)?,
            _ => vec![c.number(&x0_path, v)?],
        },
        (None, None) => {
            c.err(&x0_path, "missing required field");
            return None;
        }
    };
    if x0.len() != dim {
        c.err(&x0_path, format!("expected {dim} values, got {}", x0.len()));
        return None;
    }
    if !matches!(model, ModelSpec::Bk(_)) {
        for (i, v) in x0.iter().enumerate() {
            if *v < 0.0 {
                let path = if dim == 1 { x0_path.clone() } else { index(&x0_path, i) };
                c.err(&path, "state must be >= 0");
            }
        }
    }
    Some(x0)
}

fn parse_projection(c: &mut Checker, v: &Value, dim: Option<usize>) -> Option<Projection> {
    let o = c.object("projection", v)?;
    c.known_fields("projection", o, &["kind", "x0"]);
    let kind = c.required("projection", o, "kind").and_then(|k| c.string("projection.kind", k))?;
    match kind {
        "finite_section" => {
            if o.contains_key("x0") {
                c.err("projection.x0", "finite section takes no expansion point");
            }
            Some(Projection::FiniteSection)
        }
        "taylor" => match o.get("x0") {
            None => Some(Projection::taylor_at_mean()),
            Some(x) => {
                let pts = match x {
                    Value::Array(_) => c.numbers("projection.x0", x)?,
                    _ => vec![c.number("projection.x0", x)?],
                };
                if let Some(d) = dim {
                    if pts.len() != d {
                        c.err("projection.x0", format!("expected {d} values, got {}", pts.len()));
                        return None;
                    }
                }
                Some(Projection::Taylor(ExpansionPoint::At(pts)))
            }
        },
        other => {
            c.err("projection.kind", format!("unknown projection `{other}`, expected taylor or finite_section"));
            None
        }
    }
}

fn parse_mc(c: &mut Checker, v: &Value) -> Option<SimConfig> {
    let o = c.object("mc", v)?;
    c.known_fields("mc", o, &["n_paths", "dt", "seed", "antithetic"]);
    let n = c.required("mc", o, "n_paths").and_then(|x| c.integer("mc.n_paths", x));
    let dt = c.req_number("mc", o, "dt");
    let seed = match o.get("seed") {
        None => Some(0),
        Some(x) => c.integer("mc.seed", x),
    };
    let antithetic = c.boolean("mc", o, "antithetic", false);
    let (n, dt, seed) = (n?, dt?, seed?);
    let mut cfg = SimConfig::new(n as usize, dt, seed);
    cfg.antithetic = antithetic;
    if n < 100 {
        c.err("mc.n_paths", "must be >= 100");
    }
    if !(dt > 0.0 && dt <= 0.25) {
        c.err("mc.dt", "must be in (0, 0.25]");
    }
    Some(cfg)
}

fn check_job(
    c: &mut Checker,
    job: Job,
    model: &ModelSpec,
    mc: &Option<Option<SimConfig>>,
    lambdas: &Option<Vec<f64>>,
    params: &Option<Vec<ParamId>>,
) {
    let has_mc = matches!(mc, Some(Some(_)));
    let tag = model.tag();
    match job {
        Job::PriceCir if tag != "cir" => c.err("model.type", "PriceCir needs a cir model"),
        Job::PriceBk if tag != "bk" => c.err("model.type", "PriceBk needs a bk model"),
        Job::CreditMigrate if tag != "credit" => {
            c.err("model.type", "CreditMigrate needs a credit model")
        }
        Job::McBenchmark if !has_mc => c.err("mc", "McBenchmark needs an mc section"),
        Job::ConvergenceStudy => {
            let analytic = match model {
                ModelSpec::Cir(_) => true,
                ModelSpec::Credit(p) => crate::jobs::credit_analytic_available(p),
                ModelSpec::Bk(_) => false,
            };
            if !analytic && !has_mc {
                c.err("mc", "no closed form for this model; ConvergenceStudy needs an mc section");
            }
        }
        Job::StabilityScan => {
            if lambdas.as_ref().is_some_and(Vec::is_empty) {
                c.err("lambdas", "StabilityScan needs a non-empty list of lambdas");
            }
        }
        Job::SensitivityCheck => {
            if tag == "credit" {
                c.err("model.type", "SensitivityCheck supports cir and bk models");
            }
            if params.as_ref().is_some_and(Vec::is_empty) {
                c.err("params", "SensitivityCheck needs a non-empty list of params");
            }
            if let Some(ps) = params {
                for (i, p) in ps.iter().enumerate() {
                    if !matches!(p, ParamId::Theta | ParamId::Mu | ParamId::Sigma) {
                        c.err(&index("params", i), format!("`{p}` does not apply to a {tag} model"));
                    }
                }
            }
        }
        _ => {}
    }
    let discounted = match model {
        ModelSpec::Cir(p) => p.discounted,
        ModelSpec::Bk(p) => p.discounted,
        ModelSpec::Credit(_) => true,
    };
    if !discounted && job != Job::StabilityScan {
        c.err("model.discounted", format!("{} prices bonds and needs discounted = true", job.name()));
    }
}
