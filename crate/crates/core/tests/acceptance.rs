//! Acceptance criteria 1-9. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::*;
use polymoment::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-14;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn cir(theta: f64, mu: f64, sigma: f64) -> CirParams {
    CirParams {
        theta,
        mu,
        sigma,
        discounted: true,
    }
}

fn cir_yield(theta: f64, mu: f64, sigma: f64, x: f64, t: f64) -> f64 {
    -cir_bond_price(theta, mu, sigma, x, t).ln() / t
}

fn criterion_1() -> Outcome {
    let (theta, mu, sigma, x) = (0.1, 0.03, 0.05, 0.03);
    let tenors = [1.0, 2.0, 5.0, 10.0, 20.0];
    let grid = TimeGrid::new(tenors.to_vec()).unwrap();
    let max_err = |k: usize| {
        let model = ModelSpec::Cir(cir(theta, mu, sigma));
        let g = MatrixGenerator::build(&model, k, &Projection::taylor_at_mean()).unwrap();
        g.bond_yields(x, &grid, TOL)
            .unwrap()
            .iter()
            .zip(&tenors)
            .map(|(y, &t)| (y - cir_yield(theta, mu, sigma, x, t)).abs())
            .fold(0.0, f64::max)
    };
    let (e5, e30) = (max_err(5), max_err(30));
    let pass = e30 <= 1e-11 && e30 * 1e6 <= e5;
    outcome(
        pass,
        format!(
            "max yield error k=30 {e30:.2e} (<= 1e-11), k=5 {e5:.2e}, ratio {:.2e} (>= 1e6)",
            e5 / e30.max(f64::MIN_POSITIVE)
        ),
    )
}

fn criterion_2() -> Outcome {
    let theta = 0.02;
    let bk_case = |sd: f64, r0: f64, tau: f64, k: usize| {
        let (mu, sigma) = bk_moment_map_inverse(0.03, sd, theta).unwrap();
        let params = BkParams::new(theta, mu, sigma);
        let model = ModelSpec::Bk(params.clone());
        let g = MatrixGenerator::build(&model, k, &Projection::taylor_at_mean()).unwrap();
        let approx = g
            .bond_yields(r0.ln(), &TimeGrid::single(tau).unwrap(), TOL)
            .unwrap()[0];
        let mc = mc_bk_yield(
            &params,
            r0.ln(),
            tau,
            &SimConfig::new(1_000_000, 1.0 / 250.0, 2024),
        )
        .unwrap();
        (approx, mc)
    };
    let (a1, mc1) = bk_case(0.06, 0.01, 1.0, 20);
    let d1 = (a1 - mc1.scalar()).abs();
    let bound = (1e-4f64).max(3.0 * mc1.scalar_se());
    let (a2, mc2) = bk_case(0.12, 0.06, 20.0, 5);
    let d2 = (a2 - mc2.scalar()).abs() * 1e4;
    let pass = d1 <= bound && (60.0..=200.0).contains(&d2);
    outcome(
        pass,
        format!(
            "τ=1: k=20 {:.4}% vs MC {:.4}% ± {:.1e}, diff {:.2} bp (<= {:.2} bp); τ=20: k=5 {:.3}% vs MC {:.3}%, diff {:.1} bp (in [60, 200])",
            a1 * 100.0,
            mc1.scalar() * 100.0,
            mc1.scalar_se(),
            d1 * 1e4,
            bound * 1e4,
            a2 * 100.0,
            mc2.scalar() * 100.0,
            d2
        ),
    )
}

/// Strictly decreasing until errors reach `floor`, then staying below it.
fn decays_with_end_plateau(errs: &[f64], floor: f64) -> bool {
    match errs.iter().position(|&e| e <= floor) {
        Some(p) => {
            errs[..=p].windows(2).all(|w| w[1] < w[0]) && errs[p..].iter().all(|&e| e <= floor)
        }
        None => errs.windows(2).all(|w| w[1] < w[0]),
    }
}

fn criterion_3() -> Outcome {
    let params = CreditParams {
        k: DMatrix::from_element(1, 1, 0.8),
        mu: vec![1.0],
        sigma: vec![0.5],
        q: vec![three_state_q()],
    };
    let model = ModelSpec::Credit(params);
    let orders = [5, 10, 15, 20, 25];
    let mut pass = true;
    let mut detail = Vec::new();
    for t in [1.0, 5.0] {
        let exact = credit_analytic_1d(&three_state_q(), &cir(0.8, 1.0, 0.5), 1.0, t).unwrap();
        let errs: Vec<f64> = orders
            .iter()
            .map(|&l| {
                let g = MatrixGenerator::build(&model, l, &Projection::taylor_at_mean()).unwrap();
                let p = &g
                    .migration_matrices(&[1.0], &TimeGrid::single(t).unwrap(), TOL)
                    .unwrap()[0];
                exact.mean_abs_error(&p.p)
            })
            .collect();
        let ok = errs[4] <= 1e-10 && decays_with_end_plateau(&errs, 1e-14);
        pass &= ok;
        detail.push(format!(
            "t={t}: {}",
            errs.iter()
                .map(|e| format!("{e:.1e}"))
                .collect::<Vec<_>>()
                .join(" ")
        ));
    }
    outcome(
        pass,
        format!(
            "MAE over ℓ=5..25 {} (ℓ=25 <= 1e-10, decay to 1e-14 floor)",
            detail.join("; ")
        ),
    )
}

fn criterion_4() -> Outcome {
    let q1 = three_state_q();
    let q2 = DMatrix::from_row_slice(3, 3, &[-0.01, 0.0, 0.01, 0.0, -0.01, 0.01, 0.0, 0.0, 0.0]);
    let params = CreditParams {
        k: DMatrix::from_row_slice(2, 2, &[1.5, 0.0, 0.0, 1.5]),
        mu: vec![1.0, 1.0],
        sigma: vec![1.0, 1.0],
        q: vec![q1.clone(), q2.clone()],
    };
    let y = [1.2, 1.2];
    let g = MatrixGenerator::build(
        &ModelSpec::Credit(params),
        20,
        &Projection::taylor_at_mean(),
    )
    .unwrap();
    let p = &g
        .migration_matrices(&y, &TimeGrid::single(5.0).unwrap(), TOL)
        .unwrap()[0];
    let c = cir(1.5, 1.0, 1.0);
    let exact = credit_analytic_2d_commuting(&q1, &q2, &c, &c, y, 5.0).unwrap();
    let mae = exact.mean_abs_error(&p.p);
    outcome(
        mae <= 1e-8,
        format!("ℓ=20 MAE at t=5 {mae:.2e} (<= 1e-8), dimension {}", g.dim()),
    )
}

fn criterion_5() -> Outcome {
    let (q1, q2) = triangular_pair();
    let nc = noncommutativity(&q1, &q2).unwrap();
    let params = CreditParams {
        k: DMatrix::from_row_slice(2, 2, &[1.5, 0.4, 0.4, 1.5]),
        mu: vec![1.0, 1.0],
        sigma: vec![1.0, 1.0],
        q: vec![q1, q2],
    };
    let y = [1.2, 1.2];
    let g = MatrixGenerator::build(
        &ModelSpec::Credit(params.clone()),
        20,
        &Projection::taylor_at_mean(),
    )
    .unwrap();
    let approx = g
        .migration_matrices(&y, &TimeGrid::new(vec![1.0, 5.0]).unwrap(), TOL)
        .unwrap();
    let mut pass = (nc - 0.48).abs() <= 0.005;
    let mut detail = vec![format!("noncommutativity {nc:.4}")];
    for p in &approx {
        let mc = mc_migration(&params, &y, p.t, &SimConfig::new(100_000, 1.0 / 250.0, 99)).unwrap();
        let mut worst = 0.0f64;
        for i in 0..3 {
            for j in 0..3 {
                let diff = (p.p[(i, j)] - mc.value[(i, j)]).abs();
                // deterministic entries (absorbing row, impossible moves) carry SE 0
                let se = mc.std_error[(i, j)];
                pass &= diff <= 3.0 * se + 1e-12;
                if se > 0.0 {
                    worst = worst.max(diff / se);
                }
            }
        }
        detail.push(format!("t={}: max |diff|/SE {worst:.2} (<= 3)", p.t));
    }
    outcome(pass, detail.join("; "))
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst_exp = 0.0f64;
    let mut systems = 0;
    while systems < 100 {
        let v = DMatrix::from_fn(8, 8, |i, j| {
            let noise: f64 = rng.random_range(-0.5..0.5);
            if i == j {
                1.0 + noise
            } else {
                noise
            }
        });
        let Some(vi) = v.clone().try_inverse() else {
            continue;
        };
        let sv = v.singular_values();
        if sv.max() / sv.min() > 50.0 {
            continue;
        }
        let d = DVector::from_fn(8, |_, _| rng.random_range(-3.0..-0.05));
        let a = &v * DMatrix::from_diagonal(&d) * &vi;
        let f = DMatrix::from_fn(8, 1, |_, _| rng.random_range(-1.0..1.0));
        let grid = TimeGrid::new(vec![0.5, 2.0]).unwrap();
        let r = expmv_grid(&a, &f, &grid, 1e-15).unwrap();
        for (&t, got) in grid.times().iter().zip(&r.values) {
            let exact = &v * DMatrix::from_diagonal(&d.map(|x| (t * x).exp())) * &vi * &f;
            worst_exp = worst_exp.max((got - &exact).norm() / exact.norm());
        }
        systems += 1;
    }

    let mut worst_semi = 0.0f64;
    for _ in 0..20 {
        let a = random_stable(&mut rng, 12, 0.1);
        let f = DMatrix::from_fn(12, 1, |_, _| rng.random_range(-1.0..1.0));
        let (s, u) = (rng.random_range(0.1..2.0), rng.random_range(0.1..2.0));
        let whole = expmv_grid(&a, &f, &TimeGrid::single(s + u).unwrap(), 1e-15).unwrap();
        let half = expmv_grid(&a, &f, &TimeGrid::single(s).unwrap(), 1e-15).unwrap();
        let rest = expmv_grid(&a, &half.values[0], &TimeGrid::single(u).unwrap(), 1e-15).unwrap();
        worst_semi =
            worst_semi.max((&rest.values[0] - &whole.values[0]).norm() / whole.values[0].norm());
    }

    let (theta, mu, sigma, x, t, k) = (0.1, 0.03, 0.05, 0.03, 5.0, 15);
    let price = |th: f64, m: f64, s: f64| {
        let g = MatrixGenerator::build(
            &ModelSpec::Cir(cir(th, m, s)),
            k,
            &Projection::taylor_at_mean(),
        )
        .unwrap();
        g.bond_prices(x, &TimeGrid::single(t).unwrap(), TOL)
            .unwrap()[0]
    };
    let model = ModelSpec::Cir(cir(theta, mu, sigma));
    let proj = Projection::taylor_at_mean();
    let a = MatrixGenerator::build(&model, k, &proj)
        .unwrap()
        .into_matrix();
    let mut f = DVector::zeros(k);
    f[0] = 1.0;
    let b = monomials(x, k);
    let h = 1e-6;
    let mut worst_sens = 0.0f64;
    for param in [ParamId::Theta, ParamId::Mu, ParamId::Sigma] {
        let da = perturb_generator(&model, param, k, &proj).unwrap();
        let d = sensitivity(&a, &da, &f, t, 4096).unwrap().dot(&b);
        let fd = match param {
            ParamId::Theta => {
                (price(theta + h, mu, sigma) - price(theta - h, mu, sigma)) / (2.0 * h)
            }
            ParamId::Mu => (price(theta, mu + h, sigma) - price(theta, mu - h, sigma)) / (2.0 * h),
            _ => (price(theta, mu, sigma + h) - price(theta, mu, sigma - h)) / (2.0 * h),
        };
        worst_sens = worst_sens.max((d - fd).abs() / fd.abs());
    }
    let pass = worst_exp <= 1e-12 && worst_semi <= 1e-11 && worst_sens <= 1e-6;
    outcome(
        pass,
        format!("expmv vs eigendecomposition {worst_exp:.1e} (<= 1e-12, 100 systems); semigroup {worst_semi:.1e} (<= 1e-11); sensitivity vs FD {worst_sens:.1e} (<= 1e-6)"),
    )
}

fn criterion_7() -> Outcome {
    let model = ModelSpec::Cir(cir(0.1, 0.03, 0.05));
    let mats: Vec<_> = (5..=60)
        .map(|k| {
            MatrixGenerator::build(&model, k, &Projection::taylor_at_mean())
                .unwrap()
                .into_matrix()
        })
        .collect();
    let mut pass = true;
    let mut detail = Vec::new();
    for lambda in [1.0, 2.0, 5.0, 10.0] {
        let mut norms: Vec<f64> = mats
            .iter()
            .map(|a| resolvent_norm(a, lambda).unwrap())
            .collect();
        norms.sort_by(f64::total_cmp);
        let median = norms[norms.len() / 2];
        let ratio = norms[norms.len() - 1] / median;
        pass &= ratio <= 3.0;
        detail.push(format!("λ={lambda}: {ratio:.3}"));
    }
    outcome(
        pass,
        format!(
            "max/median resolvent norm over k=5..60 {} (<= 3)",
            detail.join(", ")
        ),
    )
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let a = random_stable(&mut rng, 4, 0.5);
    let f = DVector::from_fn(4, |_, _| rng.random_range(-1.0..1.0));
    let t = 0.05;
    let fm = DMatrix::from_column_slice(4, 1, f.as_slice());
    let exact = expmv_grid(&a, &fm, &TimeGrid::single(t).unwrap(), 1e-15)
        .unwrap()
        .values[0]
        .column(0)
        .into_owned();
    let errs: Vec<f64> = [10.0, 20.0, 40.0]
        .iter()
        .map(|&l| (phragmen_series(&a, &f, t, l, 400).unwrap() - &exact).norm())
        .collect();
    let pass = errs[1] < errs[0] && errs[2] < errs[1];
    outcome(
        pass,
        format!(
            "series error at λ=10,20,40: {:.2e} {:.2e} {:.2e} (decreasing)",
            errs[0], errs[1], errs[2]
        ),
    )
}

/// Seeded sweep over the module invariants; the full property suites live in
/// `tests/properties.rs`.
fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut failures = Vec::new();
    let mut check = |name: &str, ok: bool| {
        if !ok {
            failures.push(name.to_string());
        }
    };

    for (n, l, m) in [(1usize, 5usize, 1usize), (2, 4, 3), (3, 5, 2)] {
        let brute = (0..l.pow(n as u32))
            .filter(|code| {
                let (mut c, mut deg) = (*code, 0);
                for _ in 0..n {
                    deg += c % l;
                    c /= l;
                }
                deg < l
            })
            .count()
            * m;
        check(
            "basis dimension",
            enumerate_basis(n, l, m).unwrap().dim() == brute,
        );
    }
    let t = taylor_overflow(6, 2.0);
    let want = [-64.0, 192.0, -240.0, 160.0, -60.0, 12.0];
    check(
        "taylor overflow",
        t.coeffs.iter().zip(want).all(|(a, b)| *a == b),
    );
    check("reduce at x0", {
        let r = reduce_degree(&[1.0, -2.0, 0.0, 3.0, 1.0], 2, 1.0).unwrap();
        r[0] + r[1] == 3.0
    });

    for _ in 0..10 {
        let (theta, mu, sigma) = (
            rng.random_range(0.01..2.0),
            rng.random_range(0.0..0.2),
            rng.random_range(0.01..0.5),
        );
        let k = rng.random_range(3..25);
        let model = ModelSpec::Cir(CirParams {
            theta,
            mu,
            sigma,
            discounted: false,
        });
        let g = MatrixGenerator::build(&model, k, &Projection::taylor_at_mean()).unwrap();
        let mut e1 = DMatrix::zeros(k, 1);
        e1[(0, 0)] = 1.0;
        let r = expmv_grid(
            g.matrix(),
            &e1,
            &TimeGrid::single(rng.random_range(0.1..20.0)).unwrap(),
            TOL,
        )
        .unwrap();
        check(
            "undiscounted constants preserved",
            g.matrix().column(0).iter().all(|&v| v == 0.0) && (&r.values[0] - &e1).amax() <= 1e-13,
        );

        let fs = MatrixGenerator::build(
            &ModelSpec::Cir(cir(theta, mu, sigma)),
            k,
            &Projection::FiniteSection,
        )
        .unwrap();
        let ty = MatrixGenerator::build(
            &ModelSpec::Cir(cir(theta, mu, sigma)),
            k,
            &Projection::taylor_at_mean(),
        )
        .unwrap();
        check(
            "taylor vs finite section",
            (0..k - 1).all(|i| {
                (fs.matrix().column(i) - ty.matrix().column(i)).amax()
                    <= 1e-13 * fs.matrix().column(i).amax().max(1.0)
            }),
        );

        let q = random_rating_generator(&mut rng, 4, 0.3);
        let cp = cir(
            rng.random_range(0.2..2.0),
            rng.random_range(0.2..2.0),
            rng.random_range(0.1..1.0),
        );
        let params = CreditParams {
            k: DMatrix::from_element(1, 1, cp.theta),
            mu: vec![cp.mu],
            sigma: vec![cp.sigma],
            q: vec![q.clone()],
        };
        let g =
            MatrixGenerator::build(&ModelSpec::Credit(params), 8, &Projection::taylor_at_mean())
                .unwrap();
        let y = rng.random_range(0.0..2.0);
        let p = &g
            .migration_matrices(&[y], &TimeGrid::single(2.0).unwrap(), TOL)
            .unwrap()[0];
        check(
            "approximate migration rows sum to 1",
            p.row_sums().iter().all(|s| (s - 1.0).abs() <= 1e-10),
        );
        if let Ok(exact) = credit_analytic_1d(&q, &cp, y, 2.0) {
            check(
                "analytic rows sum to 1",
                exact.row_sums().iter().all(|s| (s - 1.0).abs() <= 1e-10),
            );
            let two =
                credit_analytic_2d_commuting(&q, &DMatrix::zeros(4, 4), &cp, &cp, [y, 0.5], 2.0)
                    .unwrap();
            check("2d with zero Q2 is 1d", (&two.p - &exact.p).amax() <= 1e-12);
        }

        let a = random_stable(&mut rng, 12, 0.1);
        let f1 = DMatrix::from_fn(12, 1, |_, _| rng.random_range(-1.0..1.0));
        let f2 = DMatrix::from_fn(12, 1, |_, _| rng.random_range(-1.0..1.0));
        let grid = TimeGrid::single(1.3).unwrap();
        let go = |f: &DMatrix<f64>| expmv_grid(&a, f, &grid, 1e-15).unwrap().values.remove(0);
        let lin = go(&(&f1 * 2.5 + &f2));
        let want = go(&f1) * 2.5 + go(&f2);
        check("expmv linear", (&lin - &want).norm() <= 1e-12 * want.norm());
        let lambda = rng.random_range(0.5..10.0);
        let smin = (DMatrix::identity(12, 12) * lambda - &a)
            .singular_values()
            .min();
        check(
            "resolvent times σ_min",
            (resolvent_norm(&a, lambda).unwrap() * smin - 1.0).abs() <= 1e-12,
        );

        let (m1, s1) = (rng.random_range(0.005..0.1), rng.random_range(0.005..0.1));
        let (bm, bs) = bk_moment_map_inverse(m1, s1, 0.05).unwrap();
        let (m2, s2) = bk_moment_map(0.05, bm, bs).unwrap();
        check(
            "BK moment map inverse",
            (m2 - m1).abs() <= 1e-12 && (s2 - s1).abs() <= 1e-12,
        );
        let q2 = random_rating_generator(&mut rng, 4, 0.3);
        let nc = noncommutativity(&q, &q2).unwrap();
        check(
            "noncommutativity scale invariant",
            (noncommutativity(&(&q * 3.0), &(&q2 * 0.2)).unwrap() - nc).abs() <= 1e-12
                && (0.0..=1.0).contains(&nc),
        );
    }

    let params = CreditParams {
        k: DMatrix::from_row_slice(2, 2, &[1.5, 0.4, 0.4, 1.5]),
        mu: vec![1.0, 1.0],
        sigma: vec![1.0, 1.0],
        q: vec![triangular_pair().0, triangular_pair().1],
    };
    let cfg = SimConfig::new(4_000, 0.02, 5);
    let est = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| mc_migration(&params, &[1.2, 1.2], 1.0, &cfg).unwrap())
    };
    let (one, two) = (est(1), est(2));
    check(
        "MC identical across thread counts",
        one.value
            .iter()
            .zip(two.value.iter())
            .all(|(a, b)| a.to_bits() == b.to_bits()),
    );
    let n = one.n_paths as f64;
    check(
        "MC migration rows sum to 1",
        one.value
            .row_iter()
            .all(|r| r.iter().map(|v| (v * n).round()).sum::<f64>() == n),
    );

    let pass = failures.is_empty();
    let detail = if pass {
        "all invariant checks hold".to_string()
    } else {
        format!("failed: {}", failures.join(", "))
    };
    outcome(pass, detail)
}

type Criterion = (u32, Duration, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        (1, Duration::from_secs(5), criterion_1),
        (2, Duration::from_secs(600), criterion_2),
        (3, Duration::from_secs(30), criterion_3),
        (4, Duration::from_secs(120), criterion_4),
        (5, Duration::from_secs(600), criterion_5),
        (6, Duration::MAX, criterion_6),
        (7, Duration::from_secs(60), criterion_7),
        (8, Duration::MAX, criterion_8),
        (9, Duration::MAX, criterion_9),
    ];
    let mut failed = 0;
    for (id, limit, run) in criteria {
        let start = Instant::now();
        let out = run();
        let elapsed = start.elapsed();
        let in_time = elapsed <= limit;
        let pass = out.pass && in_time;
        if !pass {
            failed += 1;
        }
        let budget = if limit == Duration::MAX {
            String::new()
        } else {
            format!(" / {:.0} s", limit.as_secs_f64())
        };
        println!(
            "{} criterion {id}: {} [{:.2} s{budget}]",
            if pass { "PASS" } else { "FAIL" },
            out.detail,
            elapsed.as_secs_f64()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
