//! Damped Newton solver for the semilinear problem
//!   Δu + f(u) = 0 in the chart interior,
//!   ∂_ν u + h(u) = 0 on the boundary faces.
//!
//! The discrete system keeps one equation per grid node: interior nodes get
//! the Laplacian row, boundary nodes the Robin row built from the outward
//! conormal (corner nodes take the face of their lowest non-periodic axis).
//! The u-independent linear part is assembled once as a sparse matrix; each
//! Newton step only updates the nonlinear diagonal.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::boundary::{self, BoundaryFace};
use crate::disc::{self, Grid};
use crate::expr::{EvalError, Expr};
use crate::geometry::{self, GeometryError, MetricChart, ScalarField};
use crate::linalg::{BandedLu, Csr, LinalgError};

/// Smallest damping factor tried before declaring a stalled line search.
pub const MIN_DAMPING: f64 = 1.0 / 1024.0;

/// Diagonal regularization scale applied when the Jacobian factorization
/// reports a zero pivot (pure Neumann-like kernels).
pub const SINGULAR_SHIFT: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("problem needs a chart of dimension at least 2")]
    ChartDimension,
    #[error("nonlinearity must be a function of the single variable `u`")]
    BadNonlinearity,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("evaluating nonlinearity: {0}")]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("Newton did not converge: {residual:.3e} after {iterations} iterations")]
    NoConvergence { residual: f64, iterations: usize },
    #[error("line search stalled at residual {residual:.3e}")]
    LineSearchStalled { residual: f64 },
}

/// Node equation classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeRole {
    Interior,
    /// Robin node owned by (axis, high side).
    Robin { axis: usize, high: bool },
}

/// The semilinear Robin problem on a chart.
pub struct Problem {
    pub chart: Arc<MetricChart>,
    /// interior nonlinearity f(u)
    pub f: Expr,
    /// boundary nonlinearity h(u)
    pub h: Expr,
    pub faces: Vec<BoundaryFace>,
    roles: Vec<NodeRole>,
    /// u-independent linear part: Laplacian rows / conormal-derivative rows
    linear: Csr,
}

impl Problem {
    pub fn new(chart: Arc<MetricChart>, f: Expr, h: Expr) -> Result<Problem, SolverError> {
        if chart.dim() < 2 {
            return Err(SolverError::ChartDimension);
        }
        for e in [&f, &h] {
            if e.vars().len() != 1 {
                return Err(SolverError::BadNonlinearity);
            }
        }
        let faces = boundary::faces(&chart)?;
        let roles = classify_nodes(&chart.grid);
        let linear = assemble_linear_part(&chart, &roles);
        Ok(Problem {
            chart,
            f,
            h,
            faces,
            roles,
            linear,
        })
    }

    pub fn roles(&self) -> &[NodeRole] {
        &self.roles
    }

    pub fn linear_part(&self) -> &Csr {
        &self.linear
    }

    /// Strong residual F(u): Δu + f(u) at interior nodes, ∂_ν u + h(u) at
    /// Robin nodes, using the same discrete rows as the Newton solver.
    pub fn residual(&self, u: &[f64]) -> Result<Vec<f64>, SolverError> {
        let mut r = self.linear.apply(u);
        for (node, role) in self.roles.iter().enumerate() {
            let g = match role {
                NodeRole::Interior => &self.f,
                NodeRole::Robin { .. } => &self.h,
            };
            r[node] += g.eval(&[u[node]])?;
        }
        Ok(r)
    }

    /// Weak-form residual ∫ g(∇u,∇φ) − f(u)φ dV + ∫ h(u)φ dσ for one test
    /// function φ.
    pub fn weak_residual(&self, u: &ScalarField, phi: &ScalarField) -> Result<f64, SolverError> {
        let chart = &self.chart;
        let m = chart.dim();
        let gu = geometry::gradient(u);
        let gphi = geometry::gradient(phi);
        let mut inner = vec![0.0; chart.grid.len()];
        for node in 0..chart.grid.len() {
            let mut acc = 0.0;
            for i in 0..m {
                for j in 0..m {
                    acc += chart.g_comp(node, i, j) * gu.get(node, i) * gphi.get(node, j);
                }
            }
            let fu = self.f.eval(&[u.values[node]])?;
            inner[node] = acc - fu * phi.values[node];
        }
        let mut total = disc::volume_integral(&ScalarField {
            chart: chart.clone(),
            values: inner,
        });
        for face in &self.faces {
            let vals: Vec<f64> = (0..face.len())
                .map(|fnode| {
                    let node = face.bulk_node(fnode);
                    Ok(self.h.eval(&[u.values[node]])? * phi.values[node])
                })
                .collect::<Result<_, EvalError>>()?;
            total += face.surface_integral(&vals);
        }
        Ok(total)
    }
}

fn classify_nodes(grid: &Grid) -> Vec<NodeRole> {
    (0..grid.len())
        .map(|node| {
            for axis in 0..grid.dim() {
                if grid.periodic()[axis] {
                    continue;
                }
                let i = grid.axis_index(node, axis);
                if i == 0 {
                    return NodeRole::Robin { axis, high: false };
                }
                if i == grid.dims()[axis] - 1 {
                    return NodeRole::Robin { axis, high: true };
                }
            }
            NodeRole::Interior
        })
        .collect()
}

/// Laplacian row at a node: Σ_ij g^{ij} ∂²_ij − (Σ_ij g^{ij} Γ^k_ij) ∂_k,
/// with mixed second derivatives composed from nested first-derivative
/// stencils to match the field operators exactly.
pub fn laplacian_row(chart: &MetricChart, node: usize) -> Vec<(usize, f64)> {
    let grid = &chart.grid;
    let m = grid.dim();
    let mut row: Vec<(usize, f64)> = Vec::new();
    for i in 0..m {
        for j in 0..m {
            let gij = chart.ginv_comp(node, i, j);
            if gij == 0.0 {
                continue;
            }
            if i == j {
                for (q, a) in disc::deriv_row(grid, node, i, 2).entries() {
                    row.push((q, gij * a));
                }
            } else {
                // ∂_i(∂_j u); each ordered pair (i, j) carries ½ g^{ij}
                // twice across the symmetric sum
                for (q, a) in disc::deriv_row(grid, node, i, 1).entries() {
                    for (r, b) in disc::deriv_row(grid, q, j, 1).entries() {
                        row.push((r, gij * a * b));
                    }
                }
            }
        }
    }
    for k in 0..m {
        let mut c = 0.0;
        for i in 0..m {
            for j in 0..m {
                c += chart.ginv_comp(node, i, j) * chart.gamma(node, k, i, j);
            }
        }
        if c != 0.0 {
            for (q, a) in disc::deriv_row(grid, node, k, 1).entries() {
                row.push((q, -c * a));
            }
        }
    }
    merge_row(row)
}

/// Conormal derivative row ν^j ∂_j at a Robin node.
pub fn conormal_row(chart: &MetricChart, node: usize, axis: usize, high: bool) -> Vec<(usize, f64)> {
    let grid = &chart.grid;
    let m = grid.dim();
    let sign = if high { 1.0 } else { -1.0 };
    let scale = sign / chart.ginv_comp(node, axis, axis).sqrt();
    let mut row = Vec::new();
    for j in 0..m {
        let nu_j = scale * chart.ginv_comp(node, j, axis);
        if nu_j == 0.0 {
            continue;
        }
        for (q, a) in disc::deriv_row(grid, node, j, 1).entries() {
            row.push((q, nu_j * a));
        }
    }
    merge_row(row)
}

fn merge_row(mut row: Vec<(usize, f64)>) -> Vec<(usize, f64)> {
    row.sort_by_key(|&(c, _)| c);
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(row.len());
    for (c, v) in row {
        match out.last_mut() {
            Some(last) if last.0 == c => last.1 += v,
            _ => out.push((c, v)),
        }
    }
    out.retain(|&(_, v)| v != 0.0);
    out
}

fn assemble_linear_part(chart: &MetricChart, roles: &[NodeRole]) -> Csr {
    let n = chart.grid.len();
    let rows: Vec<Vec<(usize, f64)>> = disc::map_nodes(n, |node| match roles[node] {
        NodeRole::Interior => laplacian_row(chart, node),
        NodeRole::Robin { axis, high } => conormal_row(chart, node, axis, high),
    });
    let mut triplets = Vec::new();
    for (node, row) in rows.iter().enumerate() {
        for &(c, v) in row {
            triplets.push((node, c, v));
        }
    }
    Csr::from_triplets(n, n, triplets)
}

/// Starting point for the Newton iteration.
#[derive(Debug, Clone)]
pub enum InitialGuess {
    Constant(f64),
    /// expression of the chart coordinates
    Expr(Expr),
    Values(Vec<f64>),
    /// i.i.d. uniform in [−amplitude, amplitude], seeded
    Random { amplitude: f64 },
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub max_iterations: usize,
    /// convergence when sup|F(u)| drops below this
    pub tolerance: f64,
    pub initial: InitialGuess,
    pub seed: u64,
}

impl Default for SolveOptions {
    fn default() -> SolveOptions {
        SolveOptions {
            max_iterations: 50,
            tolerance: 1e-9,
            initial: InitialGuess::Constant(0.0),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub u: ScalarField,
    pub iterations: usize,
    pub residual_norm: f64,
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |a, &x| a.max(x.abs()))
}

fn initial_values(problem: &Problem, opts: &SolveOptions) -> Result<Vec<f64>, SolverError> {
    let n = problem.chart.grid.len();
    Ok(match &opts.initial {
        InitialGuess::Constant(c) => vec![*c; n],
        InitialGuess::Values(v) => {
            assert_eq!(v.len(), n, "initial guess length mismatch");
            v.clone()
        }
        InitialGuess::Expr(e) => (0..n)
            .map(|node| e.eval(&problem.chart.grid.coords(node)))
            .collect::<Result<_, _>>()?,
        InitialGuess::Random { amplitude } => {
            use rand::Rng;
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            (0..n).map(|_| rng.gen_range(-amplitude..=*amplitude)).collect()
        }
    })
}

/// Damped Newton iteration on the strong residual. The Jacobian is the
/// linear part plus the diagonal f'(u) / h'(u); it is factored banded, with
/// a small diagonal shift retry when the factorization hits a zero pivot.
pub fn solve_newton(problem: &Problem, opts: &SolveOptions) -> Result<Solution, SolverError> {
    let n = problem.chart.grid.len();
    let fp = problem.f.differentiate(problem.f.vars()[0].as_str());
    let hp = problem.h.differentiate(problem.h.vars()[0].as_str());

    let mut u = initial_values(problem, opts)?;
    let mut residual = problem.residual(&u)?;
    let mut rnorm = sup(&residual);
    for iter in 0..opts.max_iterations {
        if rnorm <= opts.tolerance {
            return Ok(Solution {
                u: ScalarField {
                    chart: problem.chart.clone(),
                    values: u,
                },
                iterations: iter,
                residual_norm: rnorm,
            });
        }
        // Jacobian = linear part + diagonal of the nonlinearity
        let mut diag = vec![0.0; n];
        for node in 0..n {
            let d = match problem.roles[node] {
                NodeRole::Interior => fp.eval(&[u[node]])?,
                NodeRole::Robin { .. } => hp.eval(&[u[node]])?,
            };
            diag[node] = d;
        }
        let delta = solve_jacobian(problem, &diag, &residual)?;

        // backtracking on the residual sup norm
        let mut t = 1.0;
        let mut accepted = None;
        while t >= MIN_DAMPING {
            let trial: Vec<f64> = (0..n).map(|i| u[i] + t * delta[i]).collect();
            let trial_res = problem.residual(&trial)?;
            let trial_norm = sup(&trial_res);
            if trial_norm <= (1.0 - 0.5 * t) * rnorm || trial_norm <= opts.tolerance {
                accepted = Some((trial, trial_res, trial_norm));
                break;
            }
            t *= 0.5;
        }
        match accepted {
            Some((nu, nr, nn)) => {
                u = nu;
                residual = nr;
                rnorm = nn;
            }
            None => return Err(SolverError::LineSearchStalled { residual: rnorm }),
        }
    }
    if rnorm <= opts.tolerance {
        Ok(Solution {
            u: ScalarField {
                chart: problem.chart.clone(),
                values: u,
            },
            iterations: opts.max_iterations,
            residual_norm: rnorm,
        })
    } else {
        Err(SolverError::NoConvergence {
            residual: rnorm,
            iterations: opts.max_iterations,
        })
    }
}

fn solve_jacobian(
    problem: &Problem,
    diag: &[f64],
    residual: &[f64],
) -> Result<Vec<f64>, SolverError> {
    let n = residual.len();
    let mut triplets = Vec::with_capacity(n);
    for (node, &d) in diag.iter().enumerate() {
        if d != 0.0 {
            triplets.push((node, node, d));
        }
    }
    let jac = {
        let extra = Csr::from_triplets(n, n, triplets);
        problem.linear.add(&extra)
    };
    let rhs: Vec<f64> = residual.iter().map(|&v| -v).collect();
    let mut lu = BandedLu::from_csr(&jac, 0.0, None);
    if lu.factor().is_ok() {
        return Ok(lu.solve(&rhs));
    }
    // kernel of the linearization (e.g. pure Neumann at a flat state):
    // shift the diagonal slightly and retry
    let shift = SINGULAR_SHIFT * (1.0 + jac.max_abs());
    let mut lu = BandedLu::from_csr(&jac, -shift, None);
    lu.factor()?;
    Ok(lu.solve(&rhs))
}
