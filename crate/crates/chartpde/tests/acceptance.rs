//! Acceptance gate: one test per criterion, each printing a single
//! `ACCEPTANCE n <name>: PASS|FAIL` line (visible with --nocapture).

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use chartpde::cli::{catalog_config, ScenarioConfig};
use chartpde::geometry::{self, test_charts, MetricChart, ScalarField};
use chartpde::solver::{self, InitialGuess, Problem};
use chartpde::stability::{self, Verdict};
use chartpde::verify::{self, Conclusion};
use chartpde::Expr;

fn criterion(n: usize, name: &str, pass: bool) {
    println!(
        "ACCEPTANCE {n} {name}: {}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "acceptance criterion {n} ({name}) failed");
}

fn annulus_config() -> ScenarioConfig {
    catalog_config("euclid-annulus-logr-robin").expect("catalog scenario")
}

fn square_config() -> ScenarioConfig {
    catalog_config("euclid-square-allencahn").expect("catalog scenario")
}

fn solve_scenario(cfg: &ScenarioConfig, n: usize) -> (Problem, ScalarField) {
    let chart = cfg.build_chart(n).expect("chart builds");
    let problem = cfg.build_problem(chart).expect("problem builds");
    let opts = cfg.solve_options(cfg.solve.seed);
    let sol = solver::solve_newton(&problem, &opts).expect("Newton converges");
    (problem, sol.u)
}

/// Least-squares slope of ln(err) against ln(h), h = 1/n.
fn fitted_order(pairs: &[(usize, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = pairs
        .iter()
        .map(|&(n, e)| ((1.0 / n as f64).ln(), e.max(1e-300).ln()))
        .collect();
    let k = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    (k * sxy - sx * sy) / (k * sxx - sx * sx)
}

#[test]
fn criterion_01_identity_convergence() {
    let resolutions = [16usize, 32, 64];

    let bochner = verify::convergence_study("bochner", &resolutions, |n| {
        let chart = Arc::new(test_charts::sphere_band(n, 0.6, 1.4));
        let e = Expr::parse("cos(th)", &["th", "ph"]).unwrap();
        let phi = ScalarField::from_expr(&chart, &e)?;
        verify::check_bochner(&phi)
    })
    .expect("bochner study");

    let cfg = annulus_config();
    let pz = verify::convergence_study("boundary-identity", &resolutions, |n| {
        let (problem, u) = solve_scenario(&cfg, n);
        verify::check_boundary_identity(&problem, &u)
    })
    .expect("pz study");
    let sss = verify::convergence_study("laplacian-split", &resolutions, |n| {
        let (problem, u) = solve_scenario(&cfg, n);
        verify::check_laplacian_split(&problem.faces, &u)
    })
    .expect("sss study");

    // Pz point oracles at n=128: outer circle lhs = rhs = -1/8, inner +1.
    let (problem, u) = solve_scenario(&cfg, 128);
    let fine = verify::check_boundary_identity(&problem, &u).expect("pz at 128");
    let sample = |label: &str| {
        fine.samples
            .iter()
            .find(|s| s.label == label)
            .unwrap_or_else(|| panic!("missing sample {label}"))
    };
    let outer = sample("axis0-high");
    let inner = sample("axis0-low");
    let oracles = (outer.lhs + 0.125).abs() <= 1e-3
        && (outer.rhs + 0.125).abs() <= 1e-3
        && (inner.lhs - 1.0).abs() <= 1e-3
        && (inner.rhs - 1.0).abs() <= 1e-3;

    criterion(
        1,
        "identity-convergence",
        bochner.pass && pz.pass && sss.pass && oracles,
    );
}

#[test]
fn criterion_02_stability_eigenvalues() {
    let chart = Arc::new(test_charts::euclidean_square(64));
    let f = Expr::parse("u - u^3", &["u"]).unwrap();
    let h = Expr::parse("0", &["u"]).unwrap();
    let problem = Problem::new(chart.clone(), f, h).expect("problem builds");

    let zero = ScalarField::constant(&chart, 0.0);
    let one = ScalarField::constant(&chart, 1.0);
    let s0 = stability::analyze(&problem, &zero, 7).expect("eigen at u=0");
    let s1 = stability::analyze(&problem, &one, 7).expect("eigen at u=1");

    criterion(
        2,
        "stability-eigenvalues",
        (s0.lambda_min + 1.0).abs() <= 0.05 && (s1.lambda_min - 2.0).abs() <= 0.05,
    );
}

#[test]
fn criterion_03_rigidity_reproduction() {
    let cfg = square_config();
    let chart = cfg.build_chart(cfg.chart.resolution).expect("chart builds");
    let problem = cfg.build_problem(chart).expect("problem builds");
    let mut ok = true;
    for run in 0..20u64 {
        let mut opts = cfg.solve_options(run);
        opts.initial = InitialGuess::Random { amplitude: 0.5 };
        let (outcome, _) = verify::classify(&problem, &opts).expect("classify");
        ok &= outcome.conclusion != Conclusion::Violation;
        if outcome.stability == Some(Verdict::Stable) {
            ok &= outcome.is_constant == Some(true);
        }
        if let (Some(c0), Some(c)) = (&outcome.cond0, &outcome.cond) {
            ok &= c0.pass && c.pass;
        }
    }
    criterion(3, "rigidity-reproduction", ok);
}

#[test]
fn criterion_04_hypothesis_failure_control() {
    let cfg = annulus_config();

    // manufactured-solution convergence to ln r
    let mut errs = Vec::new();
    for n in [16usize, 32, 64] {
        let (_, u) = solve_scenario(&cfg, n);
        let mut err = 0.0f64;
        for node in 0..u.chart.grid.len() {
            let r = u.chart.grid.coords(node)[0];
            err = err.max((u.values[node] - r.ln()).abs());
        }
        errs.push((n, err));
    }
    let order = fitted_order(&errs);

    let chart = cfg.build_chart(64).expect("chart builds");
    let problem = cfg.build_problem(chart).expect("problem builds");
    let opts = cfg.solve_options(cfg.solve.seed);
    let (outcome, _) = verify::classify(&problem, &opts).expect("classify");

    let cond = outcome.cond.as_ref().expect("cond evaluated");
    let cond0 = outcome.cond0.as_ref().expect("cond0 evaluated");
    let pass = order >= 1.7
        && outcome.lambda_min.expect("eigenvalue") >= -1e-6
        && outcome.stability == Some(Verdict::Stable)
        && cond0.pass
        && !cond.pass
        && (cond.value.expect("cond integral") - 98.96).abs() <= 0.5
        && outcome.conclusion == Conclusion::HypothesesNotMet;
    criterion(4, "hypothesis-failure-control", pass);
}

#[test]
fn criterion_05_poincare_gf() {
    let cfg = annulus_config();
    let (problem, u) = solve_scenario(&cfg, 96);
    let verdict = stability::analyze(&problem, &u, 0).expect("eigenanalysis").verdict;

    let one = ScalarField::constant(&u.chart, 1.0);
    let gf = verify::check_poincare_gf(&problem, &u, &one, verdict).expect("gf at phi=1");
    let lhs = gf.lhs.expect("lhs");
    let rhs = gf.rhs.expect("rhs");
    let mut ok = (lhs + 96.60).abs() <= 0.5 && rhs.abs() <= 1e-10 && gf.slack.expect("slack") > 0.0;

    for seed in 0..10u64 {
        let phi = verify::random_trig_field(&u.chart, 1000 + seed);
        let r = verify::check_poincare_gf(&problem, &u, &phi, verdict).expect("gf random phi");
        ok &= r.pass;
    }
    criterion(5, "poincare-gf", ok);
}

#[test]
fn criterion_06_stimas_property() {
    let charts: Vec<Arc<MetricChart>> = vec![
        Arc::new(test_charts::euclidean_square(32)),
        Arc::new(test_charts::annulus(32)),
        Arc::new(test_charts::sphere_band(32, 0.6, 1.4)),
        Arc::new(test_charts::flat_cylinder(32)),
        Arc::new(test_charts::sphere_band(32, 1.2, 2.0)),
    ];
    let mut ok = true;
    for (ci, chart) in charts.iter().enumerate() {
        for seed in 0..20u64 {
            let phi = verify::random_trig_field(chart, 100 * ci as u64 + seed);
            let r = verify::check_hessian_gradient(&phi).expect("stimas check");
            ok &= r.pass;
        }
    }

    // equality case: linear phi on the Euclidean box has H = 0 and
    // constant |grad phi|, both discretely exact
    let chart = Arc::new(test_charts::euclidean_square(32));
    let e = Expr::parse("x + 2*y", &["x", "y"]).unwrap();
    let phi = ScalarField::from_expr(&chart, &e).unwrap();
    let hsq = geometry::hessian_norm_sq(&geometry::hessian(&phi));
    let gn = geometry::grad_norm_sq(&phi).map(f64::sqrt);
    let ggn = geometry::grad_norm_sq(&gn);
    let defect = (0..chart.grid.len())
        .map(|i| (hsq.values[i] - ggn.values[i]).abs())
        .fold(0.0f64, f64::max);
    ok &= defect <= 1e-10;

    criterion(6, "stimas-property", ok);
}

#[test]
fn criterion_07_curvature_oracle() {
    let sphere = Arc::new(test_charts::sphere_band(64, 0.6, 1.4));
    let mut sphere_defect = 0.0f64;
    for node in 0..sphere.grid.len() {
        let ric = sphere.ricci(node).expect("ricci");
        let defect = (ric - sphere.g(node)).abs().max();
        sphere_defect = sphere_defect.max(defect);
    }

    let mut flat_defect = 0.0f64;
    for chart in [
        Arc::new(test_charts::euclidean_square(32)),
        Arc::new(test_charts::flat_cylinder(32)),
    ] {
        for node in 0..chart.grid.len() {
            let ric = chart.ricci(node).expect("ricci");
            flat_defect = flat_defect.max(ric.abs().max());
        }
    }

    criterion(
        7,
        "curvature-oracle",
        sphere_defect <= 1e-6 && flat_defect <= 1e-8,
    );
}

#[test]
fn criterion_08_remark_specialization() {
    let f = Expr::parse("u - u^3", &["u"]).unwrap();
    let r = verify::check_remark_specialization(&f, 0.5, 2, 11).expect("remark check");
    criterion(
        8,
        "remark-specialization",
        r.pass && r.residual_sup.expect("residual") <= 1e-12,
    );
}

#[test]
fn criterion_09_expression_layer() {
    let templates = [
        "sin(a*x) + cos(b*y)",
        "exp(x*y) - a",
        "log(x + a) * y^2",
        "sqrt(x^2 + y^2 + a)",
        "tanh(x) + a*atan(y)",
        "x^3 - b*x*y + y^3",
        "sin(x)*cos(y)*exp(a*x)",
        "1 / (x + y + b)",
        "x^y",
        "sinh(a*y) + cosh(b*x)",
    ];
    let vars = ["x", "y", "a", "b"];
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut ok = true;
    for template in templates {
        let e = Expr::parse(template, &vars).expect("template parses");
        for wrt in ["x", "y"] {
            let d = e.differentiate(wrt);
            for _ in 0..5 {
                let pt: Vec<f64> = (0..4).map(|_| rng.gen_range(0.3..1.4)).collect();
                let exact = d.eval(&pt).expect("derivative evaluates");
                let axis = if wrt == "x" { 0 } else { 1 };
                let fd_h = 1e-5;
                let mut hi = pt.clone();
                let mut lo = pt.clone();
                hi[axis] += fd_h;
                lo[axis] -= fd_h;
                let fd = (e.eval(&hi).unwrap() - e.eval(&lo).unwrap()) / (2.0 * fd_h);
                ok &= (exact - fd).abs() <= 1e-6 * exact.abs().max(1.0);
            }
        }
    }

    // malformed corpus: error offsets are exact byte positions
    let corpus = [
        ("1 + * 2", 4),
        ("(1 + 2", 6),
        ("sin(x", 5),
        ("x y", 2),
        ("1 +", 3),
        ("foo(1)", 0),
        ("x ^ ^ 2", 4),
        ("", 0),
        ("1.2.3", 0),
        ("2 * (x + )", 9),
    ];
    for (source, offset) in corpus {
        match Expr::parse(source, &["x", "y"]) {
            Ok(_) => ok = false,
            Err(e) => ok &= e.offset == offset,
        }
    }
    criterion(9, "expression-layer", ok);
}

#[test]
fn criterion_10_determinism() {
    let bin = env!("CARGO_BIN_EXE_chartpde");
    let run = |dir: &std::path::Path| {
        let status = std::process::Command::new(bin)
            .args([
                "classify",
                "--config",
                "sphere-band-robin-alpha",
                "--normalize-report",
                "--seed",
                "3",
                "--out",
            ])
            .arg(dir)
            .status()
            .expect("binary runs");
        assert!(status.success(), "classify run failed");
        std::fs::read(dir.join("report.json")).expect("report written")
    };
    let d1 = tempfile::tempdir().expect("tempdir");
    let d2 = tempfile::tempdir().expect("tempdir");
    let a = run(d1.path());
    let b = run(d2.path());
    criterion(10, "determinism", a == b);
}
