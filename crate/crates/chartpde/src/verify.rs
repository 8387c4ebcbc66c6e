//! Numerical verification of the identities, inequalities and hypotheses
//! behind the rigidity result: the Bochner formula, the pointwise Hessian
//! bound, the boundary identity for Robin fields, the two stability
//! Poincaré inequalities, the boundary sign conditions, and the full
//! classification pipeline that ties them together.
//!
//! Inequality checks use a mask near critical points of |∇u| (where
//! |∇u| is not differentiable) and an h²-scaled slack tolerance so that
//! pure discretization error never produces a spurious failure.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::boundary::{self, BoundaryFace};
use crate::disc;
use crate::expr::{EvalError, Expr};
use crate::geometry::{self, GeometryError, MetricChart, ScalarField};
use crate::solver::{self, Problem, SolveOptions, SolverError};
use crate::stability::{self, Verdict};

/// Critical-point mask floor: nodes with |∇u| < factor · sup|∇u| are
/// excluded from terms involving ∇|∇u|.
pub const TAU_CRIT_FACTOR: f64 = 1e-6;

/// Resolution-aware part of the mask: |∇u| is also considered critical
/// below `C · h · |H_u|`, the scale at which finite differences of |∇u|
/// lose accuracy (derivatives of |∇u| blow up like |H|^k/|∇u|^{k−1}
/// toward a zero of ∇u).
pub const TAU_CRIT_CURVATURE: f64 = 2.0;

/// Robin precondition tolerance for the boundary identity.
pub const ROBIN_TOL: f64 = 1e-6;

/// Relative constancy threshold: (sup u − inf u) ≤ threshold · (1 + sup|u|).
pub const CONSTANCY_THRESHOLD: f64 = 1e-4;

/// Identity checks pass when the sup residual is below this (calibrated
/// for grids around 64²; convergence studies verify the order).
pub const IDENTITY_TOL: f64 = 1e-3;

/// Required convergence order for identity checks.
pub const IDENTITY_ORDER: f64 = 1.7;

/// Residuals below this count as discretely exact in convergence studies.
pub const EXACT_FLOOR: f64 = 1e-9;

/// Ricci semidefiniteness / vanishing tolerance.
pub const RIC_EPS: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("precondition for {check}: {reason}")]
    PreconditionFailed { check: String, reason: String },
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("expression evaluation: {0}")]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Level {
    pub h: f64,
    pub residual: f64,
}

/// Point probe of both sides of an identity, for oracle comparisons.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Sample {
    pub label: String,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub pass: bool,
    /// sup-norm of an identity residual
    pub residual_sup: Option<f64>,
    /// lhs/rhs/slack triple for inequality checks (slack = rhs − lhs)
    pub lhs: Option<f64>,
    pub rhs: Option<f64>,
    pub slack: Option<f64>,
    /// scalar verdict data (integral value, extremal eigenvalue, ...)
    pub value: Option<f64>,
    pub tolerance: Option<f64>,
    /// fraction of nodes excluded near critical points of |∇u|
    pub masked_fraction: Option<f64>,
    /// per-refinement-level residuals (filled by convergence studies)
    pub levels: Vec<Level>,
    /// least-squares order; present only when ≥ 3 levels ran
    pub order: Option<f64>,
    pub samples: Vec<Sample>,
}

impl CheckReport {
    /// Empty failing report; callers fill in the relevant fields.
    pub fn named(name: &str) -> CheckReport {
        CheckReport::new(name)
    }

    fn new(name: &str) -> CheckReport {
        CheckReport {
            name: name.to_string(),
            pass: false,
            residual_sup: None,
            lhs: None,
            rhs: None,
            slack: None,
            value: None,
            tolerance: None,
            masked_fraction: None,
            levels: Vec::new(),
            order: None,
            samples: Vec::new(),
        }
    }
}

/// Slack tolerance for inequality checks: discretization-error scaled,
/// C · h² · (1 + magnitude scale of the compared quantities).
pub fn eps_ineq(chart: &MetricChart, scale: f64) -> f64 {
    let h = chart
        .grid
        .spacing()
        .iter()
        .fold(0.0f64, |a, &s| a.max(s));
    10.0 * h * h * (1.0 + scale)
}

/// Nodes at least this many layers from a non-periodic face count as
/// interior for identity residuals (one-sided stencils lose an order of
/// locality right at the face).
const INTERIOR_MARGIN: usize = 3;

/// Bochner formula residual ½Δ|∇φ|² − |H_φ|² − ⟨∇Δφ,∇φ⟩ − Ric(∇φ,∇φ),
/// measured in the chart interior.
pub fn check_bochner(phi: &ScalarField) -> Result<CheckReport, VerifyError> {
    let chart = &phi.chart;
    let m = chart.dim();
    let gsq = geometry::grad_norm_sq(phi);
    let lhs = geometry::laplace_beltrami(&gsq);
    let h = geometry::hessian(phi);
    let hsq = geometry::hessian_norm_sq(&h);
    let lap = geometry::laplace_beltrami(phi);
    let glap = geometry::gradient(&lap);
    let gphi = geometry::gradient(phi);
    let rq = geometry::ricci_quadratic(phi)?;
    let mut worst = 0.0f64;
    for node in 0..chart.grid.len() {
        if chart.grid.face_distance(node) < INTERIOR_MARGIN {
            continue;
        }
        let mut inner = 0.0;
        for i in 0..m {
            for j in 0..m {
                inner += chart.g_comp(node, i, j) * glap.get(node, i) * gphi.get(node, j);
            }
        }
        let r = 0.5 * lhs.values[node] - hsq.values[node] - inner - rq.values[node];
        worst = worst.max(r.abs());
    }
    let mut report = CheckReport::new("bochner");
    report.residual_sup = Some(worst);
    report.tolerance = Some(IDENTITY_TOL);
    report.pass = worst <= IDENTITY_TOL;
    Ok(report)
}

fn h_max(chart: &MetricChart) -> f64 {
    chart.grid.spacing().iter().fold(0.0f64, |a, &s| a.max(s))
}

/// True when the node sits too close to a critical point of |∇φ| for
/// finite differences of |∇φ| to be trustworthy.
fn masked(chart: &MetricChart, gnorm: &[f64], hsq: &[f64], node: usize, gnorm_sup: f64) -> bool {
    let tau = (TAU_CRIT_FACTOR * gnorm_sup)
        .max(TAU_CRIT_CURVATURE * h_max(chart) * hsq[node].max(0.0).sqrt());
    gnorm[node] < tau
}

/// Pointwise Hessian bound |H_φ|² ≥ |∇|∇φ||², away from critical points
/// of |∇φ|. The slack tolerance is O(h)-scaled: the worst unmasked nodes
/// sit at the mask edge where the |∇|∇φ|| error is first order.
pub fn check_hessian_gradient(phi: &ScalarField) -> Result<CheckReport, VerifyError> {
    let chart = &phi.chart;
    let h = geometry::hessian(phi);
    let hsq = geometry::hessian_norm_sq(&h);
    let gsq = geometry::grad_norm_sq(phi);
    let gnorm = gsq.map(f64::sqrt);
    let ggn = geometry::grad_norm_sq(&gnorm);
    let gnorm_sup = gnorm.sup_norm();
    let mut min_diff = f64::INFINITY;
    let mut n_masked = 0usize;
    for node in 0..chart.grid.len() {
        if masked(chart, &gnorm.values, &hsq.values, node, gnorm_sup) {
            n_masked += 1;
            continue;
        }
        min_diff = min_diff.min(hsq.values[node] - ggn.values[node]);
    }
    let eps = 10.0 * h_max(chart) * (1.0 + hsq.sup_norm());
    let mut report = CheckReport::new("hessian-gradient");
    report.value = Some(if min_diff.is_finite() { min_diff } else { 0.0 });
    report.tolerance = Some(eps);
    report.masked_fraction = Some(n_masked as f64 / chart.grid.len() as f64);
    report.pass = !min_diff.is_finite() || min_diff >= -eps;
    Ok(report)
}

fn robin_residual_sup(problem: &Problem, w: &ScalarField) -> Result<f64, VerifyError> {
    let mut worst = 0.0f64;
    for face in &problem.faces {
        let dn = boundary::normal_derivative(w, face);
        for fnode in 0..face.len() {
            let hv = problem.h.eval(&[w.values[face.bulk_node(fnode)]])?;
            worst = worst.max((dn[fnode] + hv).abs());
        }
    }
    Ok(worst)
}

/// Boundary identity for Robin fields:
/// ½∂_ν|∇w|² = II(∇̃w,∇̃w) − h'(w)|∇̃w|² − h(w) H_w(ν,ν).
/// `w` must satisfy the discrete Robin condition; the identity holds only
/// on that class.
pub fn check_boundary_identity(
    problem: &Problem,
    w: &ScalarField,
) -> Result<CheckReport, VerifyError> {
    let robin = robin_residual_sup(problem, w)?;
    if robin > ROBIN_TOL {
        return Err(VerifyError::PreconditionFailed {
            check: "boundary-identity".into(),
            reason: format!("Robin residual {robin:.3e} exceeds {ROBIN_TOL:.0e}"),
        });
    }
    let hp = problem.h.differentiate(problem.h.vars()[0].as_str());
    // lhs ½∂_ν|∇w|² computed as the Hessian contraction H_w(∇w, ν);
    // differentiating the derived |∇w|² field once more would lose an
    // order at the one-sided boundary stencils
    let hess = geometry::hessian(w);
    let grad = geometry::gradient(w);
    let m = problem.chart.dim();
    let mut report = CheckReport::new("boundary-identity");
    let mut worst = 0.0f64;
    for face in &problem.faces {
        let ii = boundary::second_fundamental_form(face);
        let tg = boundary::tangential_gradient(w, face);
        let tgsq = boundary::tangential_grad_norm_sq(w, face);
        let hnn = boundary::hessian_normal_normal(w, face);
        let fm = face.chart.dim();
        for fnode in 0..face.len() {
            let node = face.bulk_node(fnode);
            let nu = face.conormal(fnode);
            let mut ii_tt = 0.0;
            for i in 0..fm {
                for j in 0..fm {
                    ii_tt += ii.get(fnode, i, j) * tg.get(fnode, i) * tg.get(fnode, j);
                }
            }
            let hv = problem.h.eval(&[w.values[node]])?;
            let hpv = hp.eval(&[w.values[node]])?;
            let mut lhs = 0.0;
            for i in 0..m {
                for j in 0..m {
                    lhs += hess.get(node, i, j) * nu[i] * grad.get(node, j);
                }
            }
            let rhs = ii_tt - hpv * tgsq.values[fnode] - hv * hnn[fnode];
            worst = worst.max((lhs - rhs).abs());
            if fnode == 0 {
                report.samples.push(Sample {
                    label: format!(
                        "axis{}-{}",
                        face.axis,
                        if face.high { "high" } else { "low" }
                    ),
                    lhs,
                    rhs,
                });
            }
        }
    }
    report.residual_sup = Some(worst);
    report.tolerance = Some(IDENTITY_TOL);
    report.pass = worst <= IDENTITY_TOL;
    Ok(report)
}

/// Boundary splitting of the Laplacian,
/// Δw = Δ̃w − (m−1) H ∂_ν w + H_w(ν,ν). On diagonal metrics the discrete
/// sides share their stencils, so correct sign and normalization
/// conventions leave a residual at the rounding floor rather than at
/// truncation scale.
pub fn check_laplacian_split(
    chart_faces: &[BoundaryFace],
    w: &ScalarField,
) -> Result<CheckReport, VerifyError> {
    let m = w.chart.dim();
    let bulk_lap = geometry::laplace_beltrami(w);
    let mut worst = 0.0f64;
    for face in chart_faces {
        let face_lap = boundary::boundary_laplacian(w, face);
        let dnu = boundary::normal_derivative(w, face);
        let hnn = boundary::hessian_normal_normal(w, face);
        let hmean = boundary::mean_curvature(face);
        for fnode in 0..face.len() {
            let node = face.bulk_node(fnode);
            let rhs = face_lap.values[fnode] - (m as f64 - 1.0) * hmean[fnode] * dnu[fnode]
                + hnn[fnode];
            worst = worst.max((bulk_lap.values[node] - rhs).abs());
        }
    }
    let mut report = CheckReport::new("laplacian-split");
    report.residual_sup = Some(worst);
    report.tolerance = Some(IDENTITY_TOL);
    report.pass = worst <= IDENTITY_TOL;
    Ok(report)
}

struct GradientData {
    gsq: ScalarField,
    hsq: ScalarField,
    /// |∇|∇u||², zeroed at masked nodes
    ggn_masked: Vec<f64>,
    masked_fraction: f64,
    rq: ScalarField,
}

fn gradient_data(u: &ScalarField) -> Result<GradientData, VerifyError> {
    let gsq = geometry::grad_norm_sq(u);
    let h = geometry::hessian(u);
    let hsq = geometry::hessian_norm_sq(&h);
    let gnorm = gsq.map(f64::sqrt);
    let ggn = geometry::grad_norm_sq(&gnorm);
    let gnorm_sup = gnorm.sup_norm();
    let mut n_masked = 0usize;
    let ggn_masked: Vec<f64> = (0..u.chart.grid.len())
        .map(|node| {
            if masked(&u.chart, &gnorm.values, &hsq.values, node, gnorm_sup) {
                n_masked += 1;
                0.0
            } else {
                ggn.values[node]
            }
        })
        .collect();
    let rq = geometry::ricci_quadratic(u)?;
    Ok(GradientData {
        gsq,
        hsq,
        ggn_masked,
        masked_fraction: n_masked as f64 / u.chart.grid.len() as f64,
        rq,
    })
}

fn require_stable(check: &str, verdict: Verdict) -> Result<(), VerifyError> {
    if verdict == Verdict::Unstable {
        return Err(VerifyError::PreconditionFailed {
            check: check.into(),
            reason: "inequality asserted only for stable solutions".into(),
        });
    }
    Ok(())
}

/// Stability Poincaré inequality (GF):
/// ∫(Ric(∇u,∇u)+|H_u|²−|∇|∇u||²)φ² dV − ∫(½∂_ν|∇u|² + h'(u)|∇u|²)φ² dσ
///   ≤ ∫|∇u|²|∇φ|² dV.
pub fn check_poincare_gf(
    problem: &Problem,
    u: &ScalarField,
    phi: &ScalarField,
    verdict: Verdict,
) -> Result<CheckReport, VerifyError> {
    require_stable("poincare-gf", verdict)?;
    let chart = &problem.chart;
    let data = gradient_data(u)?;
    let hp = problem.h.differentiate(problem.h.vars()[0].as_str());

    let vol_integrand: Vec<f64> = (0..chart.grid.len())
        .map(|node| {
            (data.rq.values[node] + data.hsq.values[node] - data.ggn_masked[node])
                * phi.values[node]
                * phi.values[node]
        })
        .collect();
    let mut lhs = disc::volume_integral(&ScalarField {
        chart: chart.clone(),
        values: vol_integrand,
    });
    for face in &problem.faces {
        let dn_gsq = boundary::normal_derivative(&data.gsq, face);
        let vals: Vec<f64> = (0..face.len())
            .map(|fnode| {
                let node = face.bulk_node(fnode);
                let hpv = hp.eval(&[u.values[node]])?;
                Ok((0.5 * dn_gsq[fnode] + hpv * data.gsq.values[node])
                    * phi.values[node]
                    * phi.values[node])
            })
            .collect::<Result<_, EvalError>>()?;
        lhs -= face.surface_integral(&vals);
    }
    let gphi_sq = geometry::grad_norm_sq(phi);
    let rhs_integrand: Vec<f64> = (0..chart.grid.len())
        .map(|node| data.gsq.values[node] * gphi_sq.values[node])
        .collect();
    let rhs = disc::volume_integral(&ScalarField {
        chart: chart.clone(),
        values: rhs_integrand,
    });

    let eps = eps_ineq(chart, lhs.abs().max(rhs.abs()));
    let mut report = CheckReport::new("poincare-gf");
    report.lhs = Some(lhs);
    report.rhs = Some(rhs);
    report.slack = Some(rhs - lhs);
    report.tolerance = Some(eps);
    report.masked_fraction = Some(data.masked_fraction);
    report.pass = rhs - lhs >= -eps;
    Ok(report)
}

/// Refined stability inequality (GF3) with the boundary terms expressed
/// through II, h, f and the mean curvature:
/// ∫(Ric+|H_u|²−|∇|∇u||²)φ² dV
///   − ∫(II(∇̃u,∇̃u) − h'|∇̃u|² + hf + (m−1)h²H + h'h²)φ² dσ
///   ≤ ∫|∇u|²|∇φ|² dV − ∫ h(u)⟨∇̃u, ∇̃φ²⟩ dσ.
pub fn check_poincare_gf3(
    problem: &Problem,
    u: &ScalarField,
    phi: &ScalarField,
    verdict: Verdict,
) -> Result<CheckReport, VerifyError> {
    require_stable("poincare-gf3", verdict)?;
    let chart = &problem.chart;
    let m = chart.dim();
    let data = gradient_data(u)?;
    let hp = problem.h.differentiate(problem.h.vars()[0].as_str());

    let vol_integrand: Vec<f64> = (0..chart.grid.len())
        .map(|node| {
            (data.rq.values[node] + data.hsq.values[node] - data.ggn_masked[node])
                * phi.values[node]
                * phi.values[node]
        })
        .collect();
    let mut lhs = disc::volume_integral(&ScalarField {
        chart: chart.clone(),
        values: vol_integrand,
    });
    let phi_sq = phi.map(|v| v * v);
    let mut rhs_boundary = 0.0;
    for face in &problem.faces {
        let ii = boundary::second_fundamental_form(face);
        let tg = boundary::tangential_gradient(u, face);
        let tgsq = boundary::tangential_grad_norm_sq(u, face);
        let hmean = boundary::mean_curvature(face);
        let tg_phi_sq = boundary::tangential_gradient(&phi_sq, face);
        let fm = face.chart.dim();
        let mut lhs_vals = Vec::with_capacity(face.len());
        let mut rhs_vals = Vec::with_capacity(face.len());
        for fnode in 0..face.len() {
            let node = face.bulk_node(fnode);
            let uv = u.values[node];
            let hv = problem.h.eval(&[uv])?;
            let hpv = hp.eval(&[uv])?;
            let fv = problem.f.eval(&[uv])?;
            let mut ii_tt = 0.0;
            let mut pairing = 0.0;
            for i in 0..fm {
                for j in 0..fm {
                    ii_tt += ii.get(fnode, i, j) * tg.get(fnode, i) * tg.get(fnode, j);
                    pairing +=
                        face.chart.g_comp(fnode, i, j) * tg.get(fnode, i) * tg_phi_sq.get(fnode, j);
                }
            }
            let integrand = ii_tt - hpv * tgsq.values[fnode]
                + hv * fv
                + (m as f64 - 1.0) * hv * hv * hmean[fnode]
                + hpv * hv * hv;
            lhs_vals.push(integrand * phi.values[node] * phi.values[node]);
            rhs_vals.push(hv * pairing);
        }
        lhs -= face.surface_integral(&lhs_vals);
        rhs_boundary += face.surface_integral(&rhs_vals);
    }
    let gphi_sq = geometry::grad_norm_sq(phi);
    let rhs_vol_integrand: Vec<f64> = (0..chart.grid.len())
        .map(|node| data.gsq.values[node] * gphi_sq.values[node])
        .collect();
    let rhs = disc::volume_integral(&ScalarField {
        chart: chart.clone(),
        values: rhs_vol_integrand,
    }) - rhs_boundary;

    let eps = eps_ineq(chart, lhs.abs().max(rhs.abs()));
    let mut report = CheckReport::new("poincare-gf3");
    report.lhs = Some(lhs);
    report.rhs = Some(rhs);
    report.slack = Some(rhs - lhs);
    report.tolerance = Some(eps);
    report.masked_fraction = Some(data.masked_fraction);
    report.pass = rhs - lhs >= -eps;
    Ok(report)
}

/// Boundary sign hypothesis (cond0): II − h'(u) g̃ nonpositive definite
/// on every face. Reports the largest eigenvalue over all face nodes.
pub fn check_cond0(problem: &Problem, u: &ScalarField) -> Result<CheckReport, VerifyError> {
    let hp = problem.h.differentiate(problem.h.vars()[0].as_str());
    let mut worst = f64::NEG_INFINITY;
    for face in &problem.faces {
        let ii = boundary::second_fundamental_form(face);
        let fm = face.chart.dim();
        for fnode in 0..face.len() {
            let node = face.bulk_node(fnode);
            let hpv = hp.eval(&[u.values[node]])?;
            let a = nalgebra::DMatrix::from_fn(fm, fm, |i, j| {
                ii.get(fnode, i, j) - hpv * face.chart.g_comp(fnode, i, j)
            });
            let max_eig = a
                .symmetric_eigen()
                .eigenvalues
                .iter()
                .cloned()
                .fold(f64::NEG_INFINITY, f64::max);
            worst = worst.max(max_eig);
        }
    }
    let eps = eps_ineq(&problem.chart, worst.abs());
    let mut report = CheckReport::new("cond0");
    report.value = Some(worst);
    report.tolerance = Some(eps);
    report.pass = worst <= eps;
    Ok(report)
}

/// Integral sign hypothesis (cond):
/// ∫ h(u)f(u) + (m−1)h(u)²H + h'(u)h(u)² dσ ≤ 0 (up to ε per unit of
/// boundary measure).
pub fn check_cond(problem: &Problem, u: &ScalarField) -> Result<CheckReport, VerifyError> {
    let m = problem.chart.dim();
    let hp = problem.h.differentiate(problem.h.vars()[0].as_str());
    let mut total = 0.0;
    let mut measure = 0.0;
    for face in &problem.faces {
        let hmean = boundary::mean_curvature(face);
        let vals: Vec<f64> = (0..face.len())
            .map(|fnode| {
                let uv = u.values[face.bulk_node(fnode)];
                let hv = problem.h.eval(&[uv])?;
                let hpv = hp.eval(&[uv])?;
                let fv = problem.f.eval(&[uv])?;
                Ok(hv * fv + (m as f64 - 1.0) * hv * hv * hmean[fnode] + hpv * hv * hv)
            })
            .collect::<Result<_, EvalError>>()?;
        total += face.surface_integral(&vals);
        measure += face.surface_integral(&vec![1.0; face.len()]);
    }
    let eps = RIC_EPS * measure;
    let mut report = CheckReport::new("cond");
    report.value = Some(total);
    report.tolerance = Some(eps);
    report.pass = total <= eps;
    Ok(report)
}

/// Pointwise Ricci lower bound over the chart; also detects Ric ≡ 0.
pub fn check_ricci(chart: &Arc<MetricChart>) -> Result<(f64, bool), VerifyError> {
    let ric = geometry::ricci_field(chart)?;
    let m = chart.dim();
    let mut min_eig = f64::INFINITY;
    let mut max_abs = 0.0f64;
    for node in 0..chart.grid.len() {
        let a = nalgebra::DMatrix::from_fn(m, m, |i, j| ric.get(node, i, j));
        max_abs = max_abs.max(a.abs().max());
        let eig = a.symmetric_eigen();
        min_eig = min_eig.min(
            eig.eigenvalues
                .iter()
                .cloned()
                .fold(f64::INFINITY, f64::min),
        );
    }
    Ok((min_eig, max_abs <= RIC_EPS))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Conclusion {
    TheoremAppliesAndHolds,
    HypothesesNotMet,
    Violation,
    NoSolution,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassificationOutcome {
    pub stability: Option<Verdict>,
    pub lambda_min: Option<f64>,
    pub cond0: Option<CheckReport>,
    pub cond: Option<CheckReport>,
    pub ric_min_eigenvalue: f64,
    pub ric_nonnegative: bool,
    pub ric_identically_zero: bool,
    /// relative variation (sup u − inf u)/(1 + sup|u|)
    pub constancy: Option<f64>,
    pub is_constant: Option<bool>,
    pub conclusion: Conclusion,
}

/// Full rigidity pipeline for one solve:
/// solve → stability → Ric ≥ 0 → cond0 → cond → constancy. The conclusion
/// is `Violation` only when every hypothesis holds and the solution is
/// still nonconstant — which must never happen.
pub fn classify(
    problem: &Problem,
    opts: &SolveOptions,
) -> Result<(ClassificationOutcome, Option<ScalarField>), VerifyError> {
    let (ric_min, ric_zero) = check_ricci(&problem.chart)?;
    let ric_nonneg = ric_min >= -RIC_EPS;
    let sol = match solver::solve_newton(problem, opts) {
        Ok(s) => s,
        Err(SolverError::NoConvergence { .. }) | Err(SolverError::LineSearchStalled { .. }) => {
            return Ok((
                ClassificationOutcome {
                    stability: None,
                    lambda_min: None,
                    cond0: None,
                    cond: None,
                    ric_min_eigenvalue: ric_min,
                    ric_nonnegative: ric_nonneg,
                    ric_identically_zero: ric_zero,
                    constancy: None,
                    is_constant: None,
                    conclusion: Conclusion::NoSolution,
                },
                None,
            ));
        }
        Err(e) => return Err(e.into()),
    };
    let stab = stability::analyze(problem, &sol.u, opts.seed)?;
    let cond0 = check_cond0(problem, &sol.u)?;
    let cond = check_cond(problem, &sol.u)?;

    let (lo, hi) = sol
        .u
        .values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let constancy = (hi - lo) / (1.0 + sol.u.sup_norm());
    let is_constant = constancy <= CONSTANCY_THRESHOLD;

    let hypotheses = stab.verdict != Verdict::Unstable && cond0.pass && cond.pass && ric_nonneg;
    let conclusion = if hypotheses {
        if is_constant {
            Conclusion::TheoremAppliesAndHolds
        } else {
            Conclusion::Violation
        }
    } else {
        Conclusion::HypothesesNotMet
    };
    Ok((
        ClassificationOutcome {
            stability: Some(stab.verdict),
            lambda_min: Some(stab.lambda_min),
            cond0: Some(cond0),
            cond: Some(cond),
            ric_min_eigenvalue: ric_min,
            ric_nonnegative: ric_nonneg,
            ric_identically_zero: ric_zero,
            constancy: Some(constancy),
            is_constant: Some(is_constant),
            conclusion,
        },
        Some(sol.u),
    ))
}

/// Least-squares convergence study: rerun a single-level check at each
/// resolution and fit log(residual) against log(h).
pub fn convergence_study(
    name: &str,
    resolutions: &[usize],
    run: impl Fn(usize) -> Result<CheckReport, VerifyError>,
) -> Result<CheckReport, VerifyError> {
    assert!(resolutions.len() >= 3, "need at least 3 resolutions");
    let mut levels = Vec::new();
    for &n in resolutions {
        let sub = run(n)?;
        let residual = sub
            .residual_sup
            .expect("convergence study needs a residual-style check");
        levels.push(Level {
            h: 1.0 / (n as f64),
            residual,
        });
    }
    // least-squares slope of log residual vs log h
    let pts: Vec<(f64, f64)> = levels
        .iter()
        .map(|l| (l.h.ln(), l.residual.max(1e-300).ln()))
        .collect();
    let k = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let order = (k * sxy - sx * sy) / (k * sxx - sx * sx);

    let finest = levels.last().unwrap().residual;
    let mut report = CheckReport::new(name);
    report.levels = levels;
    report.order = Some(order);
    report.residual_sup = Some(finest);
    report.tolerance = Some(IDENTITY_TOL);
    // a residual at the rounding floor on every level is stronger than
    // any truncation order, but yields a meaningless slope fit
    let at_floor = finest <= EXACT_FLOOR;
    report.pass = finest <= IDENTITY_TOL && (order >= IDENTITY_ORDER || at_floor);
    Ok(report)
}

/// Seeded random trigonometric test field: a short sum of separable
/// sine/cosine modes fitted to the chart box.
pub fn random_trig_field(chart: &Arc<MetricChart>, seed: u64) -> ScalarField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = chart.dim();
    let modes: Vec<(f64, Vec<(f64, f64, bool)>)> = (0..3)
        .map(|_| {
            let amp = rng.gen_range(-1.0..1.0);
            let factors = (0..m)
                .map(|k| {
                    let span = chart.grid.hi()[k] - chart.grid.lo()[k];
                    // periodic axes need integer wave numbers
                    let freq = if chart.grid.periodic()[k] {
                        rng.gen_range(1..=2) as f64 * 2.0 * std::f64::consts::PI / span
                    } else {
                        rng.gen_range(0.5..2.0) * std::f64::consts::PI / span
                    };
                    (freq, rng.gen_range(0.0..std::f64::consts::PI), rng.gen_bool(0.5))
                })
                .collect();
            (amp, factors)
        })
        .collect();
    ScalarField::from_fn(chart, |coords| {
        let mut total = 0.0;
        for (amp, factors) in &modes {
            let mut term = *amp;
            for (k, &(freq, phase, use_cos)) in factors.iter().enumerate() {
                let arg = freq * (coords[k] - chart.grid.lo()[k]) + phase;
                term *= if use_cos { arg.cos() } else { arg.sin() };
            }
            total += term;
        }
        total
    })
}

/// The Remark's specialization h(t) = αt: the cond integrand
/// h f + (m−1)h²H + h'h² must reduce to αuf(u) + (m−1)α²u²H + α³u².
/// Checked by expression substitution at random (u, H) pairs.
pub fn check_remark_specialization(
    f: &Expr,
    alpha: f64,
    m: usize,
    seed: u64,
) -> Result<CheckReport, VerifyError> {
    let h = Expr::parse(&format!("{alpha} * u"), &["u"]).expect("fixed form");
    let hp = h.differentiate("u");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let u = rng.gen_range(-2.0..2.0);
        let big_h = rng.gen_range(-2.0..2.0);
        let hv = h.eval(&[u])?;
        let hpv = hp.eval(&[u])?;
        let fv = f.eval(&[u])?;
        let general = hv * fv + (m as f64 - 1.0) * hv * hv * big_h + hpv * hv * hv;
        let specialized =
            alpha * u * fv + (m as f64 - 1.0) * alpha * alpha * u * u * big_h
                + alpha * alpha * alpha * u * u;
        worst = worst.max((general - specialized).abs());
    }
    let mut report = CheckReport::new("remark-specialization");
    report.residual_sup = Some(worst);
    report.tolerance = Some(1e-12);
    report.pass = worst <= 1e-12;
    Ok(report)
}
