//! Shared discretization layer: logically rectangular grids, second-order
//! finite-difference stencils (centered interior, one-sided at non-periodic
//! faces, wraparound at periodic ones), trapezoidal quadrature, and assembly
//! of the symmetric operators behind the stability quadratic form.

use thiserror::Error;

use crate::geometry::{MetricChart, ScalarField};
use crate::linalg::Csr;

#[derive(Debug, Error)]
pub enum DiscError {
    #[error("grid needs at least 8 nodes per coordinate, got {0}")]
    TooCoarse(usize),
    #[error("grid box is empty or inverted along axis {0}")]
    EmptyBox(usize),
    #[error("non-finite weight at node {node}")]
    NonFiniteWeight { node: usize },
}

/// Vertex-centered uniform grid over a parameter box, lexicographic node
/// order with the last coordinate fastest.
#[derive(Debug, Clone)]
pub struct Grid {
    dims: Vec<usize>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    periodic: Vec<bool>,
    spacing: Vec<f64>,
    strides: Vec<usize>,
    len: usize,
}

impl Grid {
    pub fn new(
        lo: Vec<f64>,
        hi: Vec<f64>,
        dims: Vec<usize>,
        periodic: Vec<bool>,
    ) -> Result<Grid, DiscError> {
        let m = dims.len();
        assert!(m == lo.len() && m == hi.len() && m == periodic.len());
        let mut spacing = Vec::with_capacity(m);
        for k in 0..m {
            if dims[k] < 8 {
                return Err(DiscError::TooCoarse(dims[k]));
            }
            if hi[k] <= lo[k] {
                return Err(DiscError::EmptyBox(k));
            }
            let denom = if periodic[k] { dims[k] } else { dims[k] - 1 } as f64;
            spacing.push((hi[k] - lo[k]) / denom);
        }
        let mut strides = vec![1usize; m];
        for k in (0..m.saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * dims[k + 1];
        }
        let len = dims.iter().product();
        Ok(Grid {
            dims,
            lo,
            hi,
            periodic,
            spacing,
            strides,
            len,
        })
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn periodic(&self) -> &[bool] {
        &self.periodic
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    #[inline]
    pub fn axis_index(&self, node: usize, axis: usize) -> usize {
        (node / self.strides[axis]) % self.dims[axis]
    }

    pub fn index(&self, multi: &[usize]) -> usize {
        multi
            .iter()
            .zip(&self.strides)
            .map(|(&i, &s)| i * s)
            .sum()
    }

    pub fn multi_index(&self, node: usize) -> Vec<usize> {
        (0..self.dim()).map(|k| self.axis_index(node, k)).collect()
    }

    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        self.lo[axis] + i as f64 * self.spacing[axis]
    }

    pub fn coords(&self, node: usize) -> Vec<f64> {
        (0..self.dim())
            .map(|k| self.coord(k, self.axis_index(node, k)))
            .collect()
    }

    /// Minimum node distance to any non-periodic face (usize::MAX when the
    /// grid is fully periodic).
    pub fn face_distance(&self, node: usize) -> usize {
        let mut d = usize::MAX;
        for k in 0..self.dim() {
            if !self.periodic[k] {
                let i = self.axis_index(node, k);
                d = d.min(i.min(self.dims[k] - 1 - i));
            }
        }
        d
    }

    /// True when the node lies on some non-periodic face.
    pub fn on_boundary(&self, node: usize) -> bool {
        self.face_distance(node) == 0
    }

    /// Trapezoidal quadrature weight of the node (coordinate measure only,
    /// metric volume factors are applied by the caller).
    pub fn quad_weight(&self, node: usize) -> f64 {
        let mut w = 1.0;
        for k in 0..self.dim() {
            let i = self.axis_index(node, k);
            let mut wk = self.spacing[k];
            if !self.periodic[k] && (i == 0 || i == self.dims[k] - 1) {
                wk *= 0.5;
            }
            w *= wk;
        }
        w
    }
}

/// A finite-difference stencil row: up to 4 (node, coefficient) pairs.
#[derive(Debug, Clone, Copy)]
pub struct StencilRow {
    pub nodes: [usize; 4],
    pub coeffs: [f64; 4],
    pub len: usize,
}

impl StencilRow {
    pub fn entries(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        (0..self.len).map(move |i| (self.nodes[i], self.coeffs[i]))
    }

    pub fn apply(&self, values: &[f64]) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.len {
            acc += self.coeffs[i] * values[self.nodes[i]];
        }
        acc
    }
}

/// Second-order stencil row for ∂ (order 1) or ∂² (order 2) along `axis`.
pub fn deriv_row(grid: &Grid, node: usize, axis: usize, order: usize) -> StencilRow {
    let n = grid.dims()[axis];
    let s = grid.strides()[axis];
    let h = grid.spacing()[axis];
    let i = grid.axis_index(node, axis);
    let base = node - i * s;
    let at = |j: usize| base + j * s;
    let periodic = grid.periodic()[axis];
    let mut row = StencilRow {
        nodes: [0; 4],
        coeffs: [0.0; 4],
        len: 0,
    };
    let push = |r: &mut StencilRow, j: usize, c: f64| {
        r.nodes[r.len] = at(j);
        r.coeffs[r.len] = c;
        r.len += 1;
    };
    match order {
        1 => {
            if periodic || (i > 0 && i < n - 1) {
                let im = if i == 0 { n - 1 } else { i - 1 };
                let ip = if i == n - 1 { 0 } else { i + 1 };
                push(&mut row, im, -0.5 / h);
                push(&mut row, ip, 0.5 / h);
            } else if i == 0 {
                push(&mut row, 0, -1.5 / h);
                push(&mut row, 1, 2.0 / h);
                push(&mut row, 2, -0.5 / h);
            } else {
                push(&mut row, n - 1, 1.5 / h);
                push(&mut row, n - 2, -2.0 / h);
                push(&mut row, n - 3, 0.5 / h);
            }
        }
        2 => {
            let h2 = h * h;
            if periodic || (i > 0 && i < n - 1) {
                let im = if i == 0 { n - 1 } else { i - 1 };
                let ip = if i == n - 1 { 0 } else { i + 1 };
                push(&mut row, im, 1.0 / h2);
                push(&mut row, i, -2.0 / h2);
                push(&mut row, ip, 1.0 / h2);
            } else if i == 0 {
                push(&mut row, 0, 2.0 / h2);
                push(&mut row, 1, -5.0 / h2);
                push(&mut row, 2, 4.0 / h2);
                push(&mut row, 3, -1.0 / h2);
            } else {
                push(&mut row, n - 1, 2.0 / h2);
                push(&mut row, n - 2, -5.0 / h2);
                push(&mut row, n - 3, 4.0 / h2);
                push(&mut row, n - 4, -1.0 / h2);
            }
        }
        _ => panic!("derivative order must be 1 or 2"),
    }
    row
}

/// Apply a coordinate partial derivative to raw node values.
pub fn partial_values(grid: &Grid, values: &[f64], axis: usize, order: usize) -> Vec<f64> {
    map_nodes(grid.len(), |node| {
        deriv_row(grid, node, axis, order).apply(values)
    })
}

/// ∂ or ∂² of a scalar field along one coordinate.
pub fn partial(field: &ScalarField, axis: usize, order: usize) -> ScalarField {
    ScalarField {
        chart: field.chart.clone(),
        values: partial_values(&field.chart.grid, &field.values, axis, order),
    }
}

/// Map over node indices, in parallel when the `parallel` feature is on.
/// Per-node outputs are written independently, so the result is
/// bit-identical to the sequential order.
#[cfg(feature = "parallel")]
pub fn map_nodes<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_nodes<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    map_nodes_seq(n, f)
}

/// Sequential reference path (also used by the benchmark suite).
pub fn map_nodes_seq<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    (0..n).map(f).collect()
}

/// Symmetric operator over grid nodes realizing one of the bilinear forms
/// of the stability quadratic form.
#[derive(Debug, Clone)]
pub struct SymmetricOperator {
    matrix: Csr,
    diagonal: bool,
}

impl SymmetricOperator {
    pub fn from_triplets(n: usize, triplets: Vec<(usize, usize, f64)>) -> SymmetricOperator {
        let diagonal = triplets.iter().all(|&(r, c, _)| r == c);
        SymmetricOperator {
            matrix: Csr::from_triplets(n, n, triplets),
            diagonal,
        }
    }

    pub fn n(&self) -> usize {
        self.matrix.n_rows
    }

    pub fn matrix(&self) -> &Csr {
        &self.matrix
    }

    pub fn is_diagonal(&self) -> bool {
        self.diagonal
    }

    pub fn quad_form(&self, x: &[f64]) -> f64 {
        self.matrix.quad_form(x)
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        self.matrix.matvec(x, y)
    }

    /// ‖A − Aᵀ‖_max; the type invariant bounds this by 1e-12·‖A‖_max.
    pub fn symmetry_defect(&self) -> f64 {
        self.matrix.symmetry_defect()
    }

    pub fn max_abs(&self) -> f64 {
        self.matrix.max_abs()
    }

    pub fn diag(&self) -> Vec<f64> {
        let n = self.n();
        let mut d = vec![0.0; n];
        for r in 0..n {
            for k in self.matrix.row_ptr[r]..self.matrix.row_ptr[r + 1] {
                if self.matrix.cols[k] == r {
                    d[r] += self.matrix.vals[k];
                }
            }
        }
        d
    }

    /// K + B - M style combination preserving symmetry.
    pub fn linear_combination(parts: &[(f64, &SymmetricOperator)]) -> SymmetricOperator {
        let n = parts[0].1.n();
        let mut t = Vec::new();
        for &(coef, op) in parts {
            let m = &op.matrix;
            for r in 0..n {
                for k in m.row_ptr[r]..m.row_ptr[r + 1] {
                    t.push((r, m.cols[k], coef * m.vals[k]));
                }
            }
        }
        SymmetricOperator::from_triplets(n, t)
    }
}

/// ∫_Ω field dV with trapezoidal product quadrature weighted by √|g|.
pub fn volume_integral(field: &ScalarField) -> f64 {
    let chart = &field.chart;
    let mut acc = 0.0;
    for node in 0..chart.grid.len() {
        acc += chart.grid.quad_weight(node) * chart.sqrt_det(node) * field.values[node];
    }
    acc
}

/// Stiffness operator: φᵀK₀φ ≈ ∫ |∇φ|² dV, assembled in variational form
/// K₀ = Σ_ij D_iᵀ diag(w √|g| g^{ij}) D_j. Positive semidefinite with
/// constants in the kernel because D_i annihilates constants exactly.
pub fn assemble_stiffness(chart: &MetricChart) -> Result<SymmetricOperator, DiscError> {
    let grid = &chart.grid;
    let m = grid.dim();
    let n = grid.len();
    let rows: Vec<Vec<(usize, usize, f64)>> = map_nodes(n, |node| {
        let wq = grid.quad_weight(node) * chart.sqrt_det(node);
        let ginv = chart.ginv(node);
        let mut local = Vec::with_capacity(m * m * 9);
        for i in 0..m {
            let ri = deriv_row(grid, node, i, 1);
            for j in 0..m {
                let c = wq * ginv[(i, j)];
                if c == 0.0 {
                    continue;
                }
                let rj = deriv_row(grid, node, j, 1);
                for (q, a) in ri.entries() {
                    for (r, b) in rj.entries() {
                        local.push((q, r, a * c * b));
                    }
                }
            }
        }
        local
    });
    let triplets: Vec<(usize, usize, f64)> = rows.into_iter().flatten().collect();
    Ok(SymmetricOperator::from_triplets(n, triplets))
}

/// Weighted volume mass: φᵀM_wφ ≈ ∫ w φ² dV. Diagonal.
pub fn assemble_mass(chart: &MetricChart, weight: &[f64]) -> Result<SymmetricOperator, DiscError> {
    let grid = &chart.grid;
    let mut t = Vec::with_capacity(grid.len());
    for node in 0..grid.len() {
        let w = weight[node];
        if !w.is_finite() {
            return Err(DiscError::NonFiniteWeight { node });
        }
        t.push((node, node, grid.quad_weight(node) * chart.sqrt_det(node) * w));
    }
    Ok(SymmetricOperator::from_triplets(grid.len(), t))
}

/// Diagonal boundary mass: φᵀB φ ≈ ∫_∂Ω w φ² dσ, summed over the given
/// faces with the induced area element. `weight` is indexed by bulk node.
pub fn assemble_boundary_mass(
    faces: &[crate::boundary::BoundaryFace],
    n_bulk: usize,
    weight: &[f64],
) -> Result<SymmetricOperator, DiscError> {
    let mut t = Vec::new();
    for face in faces {
        let fgrid = &face.chart.grid;
        for fnode in 0..face.len() {
            let node = face.bulk_node(fnode);
            let w = weight[node];
            if !w.is_finite() {
                return Err(DiscError::NonFiniteWeight { node });
            }
            t.push((
                node,
                node,
                fgrid.quad_weight(fnode) * face.chart.sqrt_det(fnode) * w,
            ));
        }
    }
    Ok(SymmetricOperator::from_triplets(n_bulk, t))
}
