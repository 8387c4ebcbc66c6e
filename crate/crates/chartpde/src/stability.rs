//! Stability analysis of a solved state: the quadratic form
//!   Q(φ) = ∫ |∇φ|² dV + ∫ h'(u) φ² dσ − ∫ f'(u) φ² dV
//! and its smallest eigenvalue relative to the volume mass form. A state
//! is stable when Q(φ) ≥ 0 over all test functions, i.e. λ_min ≥ 0 up to
//! a tolerance scaled by the nonlinearity derivatives.

use crate::disc::{self, SymmetricOperator};
use crate::geometry::ScalarField;
use crate::linalg::{self, LinalgError};
use crate::solver::{Problem, SolverError};

/// Matrices above this size use shift-inverted iteration instead of a
/// dense symmetric eigendecomposition.
pub const DENSE_EIGEN_THRESHOLD: usize = 1024;

/// Stability verdict tolerance: ε = `EPS_STAB_FACTOR` · (sup|f'| + sup|h'| + 1).
pub const EPS_STAB_FACTOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Stable,
    Marginal,
    Unstable,
}

#[derive(Debug, Clone)]
pub struct StabilityResult {
    pub lambda_min: f64,
    /// M-normalized eigenfunction of λ_min
    pub eigenfunction: ScalarField,
    pub verdict: Verdict,
    pub epsilon: f64,
}

/// Assembled pieces of the quadratic form at a state u.
pub struct StabilityForm {
    /// K₀ + B_{h'(u)} − M_{f'(u)}
    pub q: SymmetricOperator,
    /// volume mass matrix (diagonal)
    pub mass: SymmetricOperator,
    pub epsilon: f64,
}

/// Assemble Q and the mass form for the linearization at `u`.
pub fn assemble_form(problem: &Problem, u: &ScalarField) -> Result<StabilityForm, SolverError> {
    let chart = &problem.chart;
    let n = chart.grid.len();
    let fp = problem.f.differentiate(problem.f.vars()[0].as_str());
    let hp = problem.h.differentiate(problem.h.vars()[0].as_str());
    let fp_vals: Vec<f64> = u
        .values
        .iter()
        .map(|&v| fp.eval(&[v]))
        .collect::<Result<_, _>>()?;
    let hp_vals: Vec<f64> = u
        .values
        .iter()
        .map(|&v| hp.eval(&[v]))
        .collect::<Result<_, _>>()?;

    let stiffness = disc::assemble_stiffness(chart).map_err(crate::geometry::GeometryError::from)?;
    let volume_fp = disc::assemble_mass(chart, &fp_vals).map_err(crate::geometry::GeometryError::from)?;
    let boundary_hp = disc::assemble_boundary_mass(&problem.faces, n, &hp_vals)
        .map_err(crate::geometry::GeometryError::from)?;
    let q = SymmetricOperator::linear_combination(&[
        (1.0, &stiffness),
        (1.0, &boundary_hp),
        (-1.0, &volume_fp),
    ]);
    let ones = vec![1.0; n];
    let mass = disc::assemble_mass(chart, &ones).map_err(crate::geometry::GeometryError::from)?;

    let sup = |v: &[f64]| v.iter().fold(0.0f64, |a, &x| a.max(x.abs()));
    let epsilon = EPS_STAB_FACTOR * (sup(&fp_vals) + sup(&hp_vals) + 1.0);
    Ok(StabilityForm { q, mass, epsilon })
}

/// Q(φ) / ∫φ² dV for an explicit test function.
pub fn rayleigh(form: &StabilityForm, phi: &[f64]) -> f64 {
    form.q.quad_form(phi) / form.mass.quad_form(phi)
}

/// Smallest eigenvalue of Q φ = λ M φ and its verdict.
pub fn analyze(
    problem: &Problem,
    u: &ScalarField,
    seed: u64,
) -> Result<StabilityResult, SolverError> {
    let form = assemble_form(problem, u)?;
    let (lambda_min, phi) = lambda_min_of(&form, seed)?;
    let verdict = if lambda_min > form.epsilon {
        Verdict::Stable
    } else if lambda_min < -form.epsilon {
        Verdict::Unstable
    } else {
        Verdict::Marginal
    };
    Ok(StabilityResult {
        lambda_min,
        eigenfunction: ScalarField {
            chart: problem.chart.clone(),
            values: phi,
        },
        verdict,
        epsilon: form.epsilon,
    })
}

fn lambda_min_of(form: &StabilityForm, seed: u64) -> Result<(f64, Vec<f64>), LinalgError> {
    let m_diag = form.mass.diag();
    linalg::smallest_eigenpair(form.q.matrix(), &m_diag, DENSE_EIGEN_THRESHOLD, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;
    use crate::geometry::test_charts::*;
    use std::sync::Arc;

    fn e(src: &str) -> Expr {
        Expr::parse(src, &["u"]).unwrap()
    }

    #[test]
    fn allen_cahn_flat_states() {
        // f(u) = u − u³ with Neumann boundary: λ_min(u ≡ 0) = −1 with a
        // constant eigenfunction, λ_min(u ≡ 1) = 2
        let sq = Arc::new(euclidean_square(16));
        let p = Problem::new(sq.clone(), e("u - u^3"), e("0")).unwrap();

        let zero = ScalarField::constant(&sq, 0.0);
        let r = analyze(&p, &zero, 0).unwrap();
        assert!((r.lambda_min + 1.0).abs() < 1e-8, "{}", r.lambda_min);
        assert_eq!(r.verdict, Verdict::Unstable);
        let spread = r
            .eigenfunction
            .values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        assert!(spread.1 - spread.0 < 1e-6, "eigenfunction not constant");

        let one = ScalarField::constant(&sq, 1.0);
        let r = analyze(&p, &one, 0).unwrap();
        assert!((r.lambda_min - 2.0).abs() < 1e-8, "{}", r.lambda_min);
        assert_eq!(r.verdict, Verdict::Stable);
    }

    #[test]
    fn robin_damping_stabilizes() {
        // f = 0, h(u) = αu with α > 0: Q = K + αB is positive definite
        let sq = Arc::new(euclidean_square(16));
        let p = Problem::new(sq.clone(), e("0"), e("0.5 * u")).unwrap();
        let zero = ScalarField::constant(&sq, 0.0);
        let r = analyze(&p, &zero, 0).unwrap();
        assert!(r.lambda_min > 0.0);
        assert_eq!(r.verdict, Verdict::Stable);

        // α < 0 destabilizes
        let p = Problem::new(sq.clone(), e("0"), e("-0.5 * u")).unwrap();
        let r = analyze(&p, &zero, 0).unwrap();
        assert!(r.lambda_min < 0.0);
        assert_eq!(r.verdict, Verdict::Unstable);
    }

    #[test]
    fn neumann_laplacian_marginal() {
        // f = 0, h = 0: Q = K₀, λ_min = 0 on the constant
        let cyl = Arc::new(flat_cylinder(12));
        let p = Problem::new(cyl.clone(), e("0"), e("0")).unwrap();
        let zero = ScalarField::constant(&cyl, 0.3);
        let r = analyze(&p, &zero, 0).unwrap();
        assert!(r.lambda_min.abs() < r.epsilon, "{}", r.lambda_min);
        assert_eq!(r.verdict, Verdict::Marginal);
    }

    #[test]
    fn rayleigh_bounds_lambda_min() {
        let sq = Arc::new(euclidean_square(16));
        let p = Problem::new(sq.clone(), e("u - u^3"), e("0")).unwrap();
        let zero = ScalarField::constant(&sq, 0.0);
        let form = assemble_form(&p, &zero).unwrap();
        let r = analyze(&p, &zero, 0).unwrap();
        for phi in [
            ScalarField::from_fn(&sq, |c| (3.1 * c[0]).cos()),
            ScalarField::from_fn(&sq, |c| c[0] + c[1] * c[1]),
            ScalarField::constant(&sq, 2.0),
        ] {
            assert!(rayleigh(&form, &phi.values) >= r.lambda_min - 1e-10);
        }
        // the eigenfunction attains the minimum
        let at_min = rayleigh(&form, &r.eigenfunction.values);
        assert!((at_min - r.lambda_min).abs() < 1e-8);
    }

    #[test]
    fn q_matrix_symmetric_psd_structure() {
        let ann = Arc::new(annulus(16));
        let p = Problem::new(ann.clone(), e("u - u^3"), e("2 * u")).unwrap();
        let u = ScalarField::from_fn(&ann, |c| 0.3 * c[0].ln());
        let form = assemble_form(&p, &u).unwrap();
        assert!(form.q.symmetry_defect() < 1e-12 * form.q.max_abs());
        // h' ≥ 0 and −f' pieces only make Q more positive than K₀ − M_{f'}
        assert!(form.mass.is_diagonal());
    }

    #[test]
    fn iterative_path_matches_dense() {
        // force the shift-invert path by dropping the dense threshold
        let sq = Arc::new(euclidean_square(16));
        let p = Problem::new(sq.clone(), e("u - u^3"), e("0")).unwrap();
        let one = ScalarField::constant(&sq, 1.0);
        let form = assemble_form(&p, &one).unwrap();
        let m_diag = form.mass.diag();
        let (dense, _) = linalg::smallest_eigenpair(form.q.matrix(), &m_diag, 10_000, 0).unwrap();
        let (iter, _) = linalg::smallest_eigenpair(form.q.matrix(), &m_diag, 1, 0).unwrap();
        assert!((dense - iter).abs() < 1e-7, "{dense} vs {iter}");
    }
}
