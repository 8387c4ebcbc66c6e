//! Scenario configs, run reports, and the command-line driver.
//!
//! A scenario is a JSON document naming a chart (coordinates, box, metric),
//! a problem (interior nonlinearity `f`, Robin law `h`), solver settings,
//! and a list of checks. Commands consume a scenario and emit a JSON report
//! plus CSV dumps into the output directory. Five built-in scenarios ship
//! embedded in the binary; `--config` accepts either a file path or a
//! built-in name.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::Expr;
use crate::geometry::{self, MetricChart, ScalarField};
use crate::solver::{self, InitialGuess, Problem, SolveOptions};
use crate::stability::{self, StabilityResult, Verdict};
use crate::verify::{self, CheckReport, ClassificationOutcome, Conclusion, VerifyError};

/// Minimum grid points per axis; coarser grids cannot separate the two
/// one-sided boundary stencils from each other.
pub const MIN_RESOLUTION: usize = 8;

const CATALOG: &[(&str, &str)] = &[
    (
        "euclid-square-allencahn",
        include_str!("../assets/catalog/euclid-square-allencahn.json"),
    ),
    (
        "euclid-annulus-logr-robin",
        include_str!("../assets/catalog/euclid-annulus-logr-robin.json"),
    ),
    (
        "sphere-band-allencahn",
        include_str!("../assets/catalog/sphere-band-allencahn.json"),
    ),
    (
        "cylinder-neumann",
        include_str!("../assets/catalog/cylinder-neumann.json"),
    ),
    (
        "sphere-band-robin-alpha",
        include_str!("../assets/catalog/sphere-band-robin-alpha.json"),
    ),
];

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config {path}: {message}")]
    Config { path: String, message: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Verify(#[from] VerifyError),
    #[error(transparent)]
    Solver(#[from] solver::SolverError),
    #[error(transparent)]
    Geometry(#[from] geometry::GeometryError),
}

// ---------------------------------------------------------------------------
// scenario configuration

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub chart: ChartConfig,
    pub problem: ProblemConfig,
    #[serde(default)]
    pub solve: SolveConfig,
    #[serde(default)]
    pub checks: ChecksConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChartConfig {
    pub coords: Vec<String>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub periodic: Vec<bool>,
    pub resolution: usize,
    /// upper triangle of g, row major: g11, g12, ..., g1m, g22, ...
    pub metric: Vec<String>,
    /// optional analytic ∂g, one row of the same layout per coordinate
    #[serde(default)]
    pub metric_derivs: Option<Vec<Vec<String>>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    /// interior nonlinearity, expression in `u`
    pub f: String,
    /// boundary Robin law, expression in `u`
    pub h: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolveConfig {
    pub initial: InitialConfig,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub seed: u64,
    /// number of independent solves for `classify`; seeds increment per run
    pub runs: usize,
}

impl Default for SolveConfig {
    fn default() -> SolveConfig {
        SolveConfig {
            initial: InitialConfig::Constant { value: 0.0 },
            max_iterations: 50,
            tolerance: 1e-9,
            seed: 0,
            runs: 1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialConfig {
    Constant { value: f64 },
    /// expression of the chart coordinates
    Expr { value: String },
    Random { amplitude: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChecksConfig {
    pub names: Vec<String>,
    pub resolutions: Vec<usize>,
    /// test field for bochner/pos, expression of the chart coordinates;
    /// defaults to the solved state
    pub phi: Option<String>,
}

impl Default for ChecksConfig {
    fn default() -> ChecksConfig {
        ChecksConfig {
            names: Vec::new(),
            resolutions: vec![16, 32, 64],
            phi: None,
        }
    }
}

impl ScenarioConfig {
    pub fn from_str(source: &str, origin: &str) -> Result<ScenarioConfig, CliError> {
        let cfg: ScenarioConfig =
            serde_json::from_str(source).map_err(|e| CliError::Config {
                path: origin.to_string(),
                message: e.to_string(),
            })?;
        cfg.validate(origin)?;
        Ok(cfg)
    }

    /// Resolve `--config`: an existing file path wins, then a catalog name.
    pub fn load(reference: &str) -> Result<ScenarioConfig, CliError> {
        if Path::new(reference).exists() {
            let source = fs::read_to_string(reference)?;
            return ScenarioConfig::from_str(&source, reference);
        }
        if let Some((_, source)) = CATALOG.iter().find(|(name, _)| *name == reference) {
            return ScenarioConfig::from_str(source, reference);
        }
        Err(CliError::Config {
            path: reference.to_string(),
            message: format!(
                "no such file, and no built-in scenario with that name (have: {})",
                catalog_names().join(", ")
            ),
        })
    }

    fn validate(&self, origin: &str) -> Result<(), CliError> {
        let err = |field: &str, message: String| CliError::Config {
            path: origin.to_string(),
            message: format!("{field}: {message}"),
        };
        let c = &self.chart;
        let m = c.coords.len();
        if m < 2 {
            return Err(err("chart.coords", "need at least 2 coordinates".into()));
        }
        for (field, len) in [
            ("chart.lo", c.lo.len()),
            ("chart.hi", c.hi.len()),
            ("chart.periodic", c.periodic.len()),
        ] {
            if len != m {
                return Err(err(field, format!("expected {m} entries, got {len}")));
            }
        }
        if c.resolution < MIN_RESOLUTION {
            return Err(err(
                "chart.resolution",
                format!("must be at least {MIN_RESOLUTION}"),
            ));
        }
        if c.periodic.iter().all(|&p| p) {
            return Err(err(
                "chart.periodic",
                "all axes periodic: a Robin problem requires a boundary".into(),
            ));
        }
        let ntri = m * (m + 1) / 2;
        if c.metric.len() != ntri {
            return Err(err(
                "chart.metric",
                format!("expected {ntri} components, got {}", c.metric.len()),
            ));
        }
        let vars: Vec<&str> = c.coords.iter().map(|s| s.as_str()).collect();
        for (i, source) in c.metric.iter().enumerate() {
            Expr::parse(source, &vars)
                .map_err(|e| err(&format!("chart.metric[{i}]"), format!("offset {}: {}", e.offset, e.message)))?;
        }
        if let Some(dg) = &c.metric_derivs {
            if dg.len() != m || dg.iter().any(|row| row.len() != ntri) {
                return Err(err(
                    "chart.metric_derivs",
                    format!("expected {m} rows of {ntri} components"),
                ));
            }
            for (a, row) in dg.iter().enumerate() {
                for (i, source) in row.iter().enumerate() {
                    Expr::parse(source, &vars).map_err(|e| {
                        err(
                            &format!("chart.metric_derivs[{a}][{i}]"),
                            format!("offset {}: {}", e.offset, e.message),
                        )
                    })?;
                }
            }
        }
        for (field, source) in [("problem.f", &self.problem.f), ("problem.h", &self.problem.h)] {
            Expr::parse(source, &["u"])
                .map_err(|e| err(field, format!("offset {}: {}", e.offset, e.message)))?;
        }
        if let InitialConfig::Expr { value } = &self.solve.initial {
            Expr::parse(value, &vars)
                .map_err(|e| err("solve.initial.value", format!("offset {}: {}", e.offset, e.message)))?;
        }
        if let Some(phi) = &self.checks.phi {
            Expr::parse(phi, &vars)
                .map_err(|e| err("checks.phi", format!("offset {}: {}", e.offset, e.message)))?;
        }
        if self.checks.resolutions.iter().any(|&n| n < MIN_RESOLUTION) {
            return Err(err(
                "checks.resolutions",
                format!("every level must be at least {MIN_RESOLUTION}"),
            ));
        }
        if self.solve.runs == 0 {
            return Err(err("solve.runs", "must be at least 1".into()));
        }
        Ok(())
    }

    /// Build the chart at a given per-axis resolution.
    pub fn build_chart(&self, resolution: usize) -> Result<Arc<MetricChart>, CliError> {
        let c = &self.chart;
        let vars: Vec<&str> = c.coords.iter().map(|s| s.as_str()).collect();
        let parse = |s: &String| Expr::parse(s, &vars).expect("validated at load");
        let metric: Vec<Expr> = c.metric.iter().map(parse).collect();
        let derivs = c
            .metric_derivs
            .as_ref()
            .map(|dg| dg.iter().map(|row| row.iter().map(parse).collect()).collect());
        let chart = MetricChart::new(
            c.coords.clone(),
            c.lo.clone(),
            c.hi.clone(),
            vec![resolution; c.coords.len()],
            c.periodic.clone(),
            metric,
            derivs,
        )?;
        Ok(Arc::new(chart))
    }

    pub fn build_problem(&self, chart: Arc<MetricChart>) -> Result<Problem, CliError> {
        let f = Expr::parse(&self.problem.f, &["u"]).expect("validated at load");
        let h = Expr::parse(&self.problem.h, &["u"]).expect("validated at load");
        Ok(Problem::new(chart, f, h)?)
    }

    pub fn solve_options(&self, seed: u64) -> SolveOptions {
        let vars: Vec<&str> = self.chart.coords.iter().map(|s| s.as_str()).collect();
        let initial = match &self.solve.initial {
            InitialConfig::Constant { value } => InitialGuess::Constant(*value),
            InitialConfig::Expr { value } => {
                InitialGuess::Expr(Expr::parse(value, &vars).expect("validated at load"))
            }
            InitialConfig::Random { amplitude } => InitialGuess::Random {
                amplitude: *amplitude,
            },
        };
        SolveOptions {
            max_iterations: self.solve.max_iterations,
            tolerance: self.solve.tolerance,
            initial,
            seed,
        }
    }
}

pub fn catalog_names() -> Vec<&'static str> {
    CATALOG.iter().map(|(name, _)| *name).collect()
}

pub fn catalog_config(name: &str) -> Option<ScenarioConfig> {
    CATALOG
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(n, source)| ScenarioConfig::from_str(source, n).expect("embedded catalog is valid"))
}

// ---------------------------------------------------------------------------
// run report

#[derive(Debug, Clone, Serialize)]
pub struct SolveSummary {
    pub iterations: usize,
    pub residual_norm: f64,
    pub u_min: f64,
    pub u_max: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilitySummary {
    pub lambda_min: f64,
    pub verdict: Verdict,
    pub epsilon: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct StageTiming {
    pub stage: String,
    pub ms: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub version: &'static str,
    pub command: String,
    pub scenario: String,
    pub seed: u64,
    pub config: ScenarioConfig,
    /// symbolic derivative of problem.f, echoed for the record
    pub f_prime: String,
    /// symbolic derivative of problem.h
    pub h_prime: String,
    pub solve: Option<SolveSummary>,
    pub stability: Option<StabilitySummary>,
    pub checks: Vec<CheckReport>,
    pub classifications: Vec<ClassificationOutcome>,
    pub errors: Vec<String>,
    pub pass: bool,
    /// wall-clock per stage; emptied by --normalize-report
    pub timings_ms: Vec<StageTiming>,
}

impl RunReport {
    fn new(command: &str, config: &ScenarioConfig, seed: u64) -> RunReport {
        let f = Expr::parse(&config.problem.f, &["u"]).expect("validated at load");
        let h = Expr::parse(&config.problem.h, &["u"]).expect("validated at load");
        RunReport {
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            scenario: config.name.clone(),
            seed,
            config: config.clone(),
            f_prime: f.differentiate("u").to_string(),
            h_prime: h.differentiate("u").to_string(),
            solve: None,
            stability: None,
            checks: Vec::new(),
            classifications: Vec::new(),
            errors: Vec::new(),
            pass: false,
            timings_ms: Vec::new(),
        }
    }
}

fn write_field_csv(path: &Path, field: &ScalarField) -> Result<(), CliError> {
    let m = field.chart.dim();
    let mut out = String::new();
    for i in 0..m {
        out.push_str(&format!("x{}", i + 1));
        out.push(',');
    }
    out.push_str("value\n");
    for node in 0..field.chart.grid.len() {
        for x in field.chart.grid.coords(node) {
            out.push_str(&format!("{x},"));
        }
        out.push_str(&format!("{}\n", field.values[node]));
    }
    fs::write(path, out)?;
    Ok(())
}

fn write_convergence_csv(path: &Path, report: &CheckReport) -> Result<(), CliError> {
    let mut out = String::from("h,residual\n");
    for level in &report.levels {
        out.push_str(&format!("{},{}\n", level.h, level.residual));
    }
    fs::write(path, out)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// command driver

#[derive(Parser, Debug)]
#[command(name = "chartpde", version, about = "Chart-based elliptic PDE solver and rigidity checker")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Solve the boundary value problem and dump the solution field
    Solve(RunArgs),
    /// Solve, then compute the smallest eigenvalue of the stability form
    Stability(RunArgs),
    /// Run every check named in the scenario
    Verify(RunArgs),
    /// Solve from the configured initial data and classify the outcome
    Classify(RunArgs),
    /// Convergence study for the identity checks named in the scenario
    Converge(RunArgs),
    /// List the built-in scenarios
    Catalog,
}

#[derive(Args, Debug)]
pub struct RunArgs {
    /// Path to a scenario JSON file, or the name of a built-in scenario
    #[arg(long)]
    pub config: String,
    /// Output directory for report.json and CSV dumps
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Override the scenario seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Drop timings so repeated runs produce byte-identical reports
    #[arg(long)]
    pub normalize_report: bool,
}

/// Entry point for the binary: parse, run, map errors to exit codes.
/// 0 = all requested checks passed, 1 = a check failed or a stage errored,
/// 2 = bad invocation or config.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run_command(&cli.command) {
        Ok(pass) => {
            if pass {
                0
            } else {
                1
            }
        }
        Err(e @ CliError::Config { .. }) => {
            eprintln!("error: {e}");
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

pub fn run_command(command: &Command) -> Result<bool, CliError> {
    match command {
        Command::Catalog => {
            for (name, source) in CATALOG {
                let cfg = ScenarioConfig::from_str(source, name)?;
                println!("{name}: {}", cfg.description);
            }
            Ok(true)
        }
        Command::Solve(args) => run_scenario("solve", args),
        Command::Stability(args) => run_scenario("stability", args),
        Command::Verify(args) => run_scenario("verify", args),
        Command::Classify(args) => run_scenario("classify", args),
        Command::Converge(args) => run_scenario("converge", args),
    }
}

struct Runner {
    config: ScenarioConfig,
    seed: u64,
    out: PathBuf,
    report: RunReport,
    /// lazily solved state at the base resolution, shared between checks
    solved: Option<(Arc<Problem>, ScalarField, StabilityResult)>,
    timer: Instant,
}

fn run_scenario(command: &str, args: &RunArgs) -> Result<bool, CliError> {
    let config = ScenarioConfig::load(&args.config)?;
    let seed = args.seed.unwrap_or(config.solve.seed);
    fs::create_dir_all(&args.out)?;
    let mut runner = Runner {
        report: RunReport::new(command, &config, seed),
        config,
        seed,
        out: args.out.clone(),
        solved: None,
        timer: Instant::now(),
    };
    let outcome = match command {
        "solve" => runner.cmd_solve(),
        "stability" => runner.cmd_stability(),
        "verify" => runner.cmd_checks(false),
        "converge" => runner.cmd_checks(true),
        "classify" => runner.cmd_classify(),
        _ => unreachable!("subcommand list is fixed"),
    };
    if let Err(e) = outcome {
        match e {
            CliError::Config { .. } | CliError::Io(_) => return Err(e),
            other => runner.report.errors.push(other.to_string()),
        }
    }
    runner.report.pass = runner.report.errors.is_empty()
        && runner.report.checks.iter().all(|c| c.pass)
        && runner
            .report
            .classifications
            .iter()
            .all(|c| c.conclusion != Conclusion::Violation);
    if args.normalize_report {
        runner.report.timings_ms.clear();
    }
    let json = serde_json::to_string_pretty(&runner.report).expect("report serializes");
    fs::write(runner.out.join("report.json"), json + "\n")?;
    println!(
        "{command} {}: {}",
        runner.report.scenario,
        if runner.report.pass { "pass" } else { "FAIL" }
    );
    Ok(runner.report.pass)
}

impl Runner {
    fn mark(&mut self, stage: &str) {
        let ms = self.timer.elapsed().as_millis() as u64;
        self.timer = Instant::now();
        self.report.timings_ms.push(StageTiming {
            stage: stage.to_string(),
            ms,
        });
    }

    /// Solve at the base resolution and run the eigenanalysis, once.
    fn ensure_solved(&mut self) -> Result<(), CliError> {
        if self.solved.is_some() {
            return Ok(());
        }
        let chart = self.config.build_chart(self.config.chart.resolution)?;
        let problem = Arc::new(self.config.build_problem(chart.clone())?);
        let opts = self.config.solve_options(self.seed);
        let sol = solver::solve_newton(&problem, &opts)?;
        self.mark("solve");
        let stab = stability::analyze(&problem, &sol.u, self.seed)?;
        self.mark("stability");
        let (lo, hi) = sol
            .u
            .values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        self.report.solve = Some(SolveSummary {
            iterations: sol.iterations,
            residual_norm: sol.residual_norm,
            u_min: lo,
            u_max: hi,
        });
        self.report.stability = Some(StabilitySummary {
            lambda_min: stab.lambda_min,
            verdict: stab.verdict,
            epsilon: stab.epsilon,
        });
        self.solved = Some((problem, sol.u, stab));
        Ok(())
    }

    fn cmd_solve(&mut self) -> Result<(), CliError> {
        self.ensure_solved()?;
        let (problem, u, _) = self.solved.as_ref().expect("just solved");
        write_field_csv(&self.out.join("solution.csv"), u)?;
        let residual = ScalarField {
            chart: u.chart.clone(),
            values: problem.residual(&u.values)?,
        };
        write_field_csv(&self.out.join("residual.csv"), &residual)?;
        Ok(())
    }

    fn cmd_stability(&mut self) -> Result<(), CliError> {
        self.ensure_solved()?;
        let (_, u, stab) = self.solved.as_ref().expect("just solved");
        write_field_csv(&self.out.join("solution.csv"), u)?;
        write_field_csv(&self.out.join("eigenfunction.csv"), &stab.eigenfunction)?;
        Ok(())
    }

    fn cmd_classify(&mut self) -> Result<(), CliError> {
        let chart = self.config.build_chart(self.config.chart.resolution)?;
        let problem = self.config.build_problem(chart.clone())?;
        let mut last_state: Option<ScalarField> = None;
        for run in 0..self.config.solve.runs {
            let opts = self.config.solve_options(self.seed + run as u64);
            let (outcome, state) = verify::classify(&problem, &opts)?;
            println!(
                "classify run {run}: {}",
                serde_json::to_string(&outcome.conclusion).expect("serializes")
            );
            self.report.classifications.push(outcome);
            if let Some(u) = state {
                last_state = Some(u);
            }
        }
        self.mark("classify");
        if let Some(u) = &last_state {
            write_field_csv(&self.out.join("solution.csv"), u)?;
        }
        Ok(())
    }

    /// Run the configured checks. With `converge_only`, restrict to the
    /// grid-refinement identity checks and always dump their level CSVs.
    fn cmd_checks(&mut self, converge_only: bool) -> Result<(), CliError> {
        let names: Vec<String> = self.config.checks.names.clone();
        if names.is_empty() {
            return Err(CliError::Config {
                path: self.config.name.clone(),
                message: "checks.names is empty; nothing to verify".into(),
            });
        }
        for name in names {
            let is_identity = matches!(name.as_str(), "bochner" | "pz" | "sss");
            if converge_only && !is_identity {
                continue;
            }
            let report = self.run_check(&name)?;
            println!(
                "check {}: {}",
                report.name,
                if report.pass { "pass" } else { "FAIL" }
            );
            if is_identity {
                write_convergence_csv(&self.out.join(format!("{name}.csv")), &report)?;
            }
            self.report.checks.push(report);
            self.mark(&name);
        }
        Ok(())
    }

    /// Test field for bochner/pos: the configured phi, else the solved state.
    fn phi_on(&self, chart: &Arc<MetricChart>) -> Result<ScalarField, CliError> {
        match &self.config.checks.phi {
            Some(source) => {
                let vars: Vec<&str> = self.config.chart.coords.iter().map(|s| s.as_str()).collect();
                let e = Expr::parse(source, &vars).expect("validated at load");
                Ok(ScalarField::from_expr(chart, &e).map_err(VerifyError::from)?)
            }
            None => Ok(verify::random_trig_field(chart, self.seed)),
        }
    }

    fn solve_at(&self, resolution: usize) -> Result<(Problem, ScalarField), CliError> {
        let chart = self.config.build_chart(resolution)?;
        let problem = self.config.build_problem(chart.clone())?;
        let opts = self.config.solve_options(self.seed);
        let sol = solver::solve_newton(&problem, &opts)?;
        Ok((problem, sol.u))
    }

    fn run_check(&mut self, name: &str) -> Result<CheckReport, CliError> {
        let resolutions = self.config.checks.resolutions.clone();
        match name {
            "bochner" => Ok(verify::convergence_study("bochner", &resolutions, |n| {
                let chart = self.config.build_chart(n).map_err(cli_to_verify)?;
                let phi = self.phi_on(&chart).map_err(cli_to_verify)?;
                verify::check_bochner(&phi)
            })?),
            "pz" => Ok(verify::convergence_study(
                "boundary-identity",
                &resolutions,
                |n| {
                    let (problem, u) = self.solve_at(n).map_err(cli_to_verify)?;
                    verify::check_boundary_identity(&problem, &u)
                },
            )?),
            "sss" => Ok(verify::convergence_study(
                "laplacian-split",
                &resolutions,
                |n| {
                    let (problem, u) = self.solve_at(n).map_err(cli_to_verify)?;
                    verify::check_laplacian_split(&problem.faces, &u)
                },
            )?),
            "pos" => {
                let chart = self.config.build_chart(self.config.chart.resolution)?;
                let phi = self.phi_on(&chart)?;
                Ok(verify::check_hessian_gradient(&phi)?)
            }
            "gf" | "gf3" => {
                self.ensure_solved()?;
                let (problem, u, stab) = self.solved.as_ref().expect("just solved");
                let one = ScalarField::constant(&u.chart, 1.0);
                if name == "gf" {
                    Ok(verify::check_poincare_gf(problem, u, &one, stab.verdict)?)
                } else {
                    Ok(verify::check_poincare_gf3(problem, u, &one, stab.verdict)?)
                }
            }
            "cond0" => {
                self.ensure_solved()?;
                let (problem, u, _) = self.solved.as_ref().expect("just solved");
                Ok(verify::check_cond0(problem, u)?)
            }
            "cond" => {
                self.ensure_solved()?;
                let (problem, u, _) = self.solved.as_ref().expect("just solved");
                Ok(verify::check_cond(problem, u)?)
            }
            "ricci" => {
                let chart = self.config.build_chart(self.config.chart.resolution)?;
                let (min_eig, identically_zero) = verify::check_ricci(&chart)?;
                let mut report = CheckReport::named("ricci");
                report.value = Some(min_eig);
                report.tolerance = Some(verify::RIC_EPS);
                report.pass = min_eig >= -verify::RIC_EPS;
                if identically_zero {
                    report.samples.push(crate::verify::Sample {
                        label: "identically-zero".into(),
                        lhs: 0.0,
                        rhs: 0.0,
                    });
                }
                Ok(report)
            }
            other => Err(CliError::Config {
                path: self.config.name.clone(),
                message: format!(
                    "unknown check '{other}' (known: bochner, pz, sss, pos, gf, gf3, cond0, cond, ricci)"
                ),
            }),
        }
    }
}

/// Convergence closures speak VerifyError; fold CLI-side failures in.
fn cli_to_verify(e: CliError) -> VerifyError {
    match e {
        CliError::Verify(v) => v,
        CliError::Solver(s) => VerifyError::Solver(s),
        CliError::Geometry(g) => VerifyError::Geometry(g),
        other => VerifyError::PreconditionFailed {
            check: "config".into(),
            reason: other.to_string(),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_entries_validate_and_build() {
        for name in catalog_names() {
            let cfg = catalog_config(name).expect("catalog entry loads");
            assert_eq!(cfg.name, name);
            let chart = cfg.build_chart(MIN_RESOLUTION).expect("chart builds");
            cfg.build_problem(chart).expect("problem builds");
        }
    }

    #[test]
    fn unknown_reference_lists_catalog() {
        let err = ScenarioConfig::load("no-such-scenario").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("no-such-scenario"));
        assert!(msg.contains("euclid-square-allencahn"));
    }

    #[test]
    fn validation_rejects_all_periodic() {
        let mut cfg = catalog_config("cylinder-neumann").unwrap();
        cfg.chart.periodic = vec![true, true];
        let err = cfg.validate("test").unwrap_err();
        assert!(err.to_string().contains("requires a boundary"));
    }

    #[test]
    fn validation_rejects_coarse_grid() {
        let mut cfg = catalog_config("cylinder-neumann").unwrap();
        cfg.chart.resolution = 4;
        let err = cfg.validate("test").unwrap_err();
        assert!(err.to_string().contains("chart.resolution"));
    }

    #[test]
    fn validation_reports_expression_offset() {
        let mut cfg = catalog_config("cylinder-neumann").unwrap();
        cfg.problem.f = "u + * u".into();
        let msg = cfg.validate("test").unwrap_err().to_string();
        assert!(msg.contains("problem.f"), "{msg}");
        assert!(msg.contains("offset 4"), "{msg}");
    }

    #[test]
    fn validation_rejects_wrong_metric_arity() {
        let mut cfg = catalog_config("cylinder-neumann").unwrap();
        cfg.chart.metric = vec!["1".into(), "0".into()];
        let msg = cfg.validate("test").unwrap_err().to_string();
        assert!(msg.contains("chart.metric"), "{msg}");
        assert!(msg.contains("expected 3"), "{msg}");
    }
}
