//! Boundary geometry of a chart: coordinate faces, induced metric, outward
//! conormal, second fundamental form, mean curvature and the tangential
//! differential operators that appear in the boundary identities.
//!
//! Each non-periodic axis contributes two faces. A face carries its own
//! lower-dimensional [`MetricChart`], built by freezing the face coordinate
//! in the metric expressions, so every intrinsic operator applies to
//! restricted fields unchanged.

use std::sync::Arc;

use crate::geometry::{
    self, GeometryError, MetricChart, ScalarField, SymTensorField, VectorField,
};

/// One coordinate face of the chart boundary.
pub struct BoundaryFace {
    /// frozen axis in the bulk chart
    pub axis: usize,
    /// true at the high end of the axis; outward direction is +axis there
    pub high: bool,
    /// induced (m−1)-dimensional chart of the face
    pub chart: Arc<MetricChart>,
    bulk: Arc<MetricChart>,
    /// bulk node index per face node, in face node order
    bulk_nodes: Vec<usize>,
}

impl BoundaryFace {
    pub fn len(&self) -> usize {
        self.bulk_nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bulk_nodes.is_empty()
    }

    /// +1 at the high face, −1 at the low face.
    pub fn outward_sign(&self) -> f64 {
        if self.high {
            1.0
        } else {
            -1.0
        }
    }

    pub fn bulk_node(&self, face_node: usize) -> usize {
        self.bulk_nodes[face_node]
    }

    pub fn bulk_nodes(&self) -> &[usize] {
        &self.bulk_nodes
    }

    /// Frozen coordinate value of this face.
    pub fn coordinate(&self) -> f64 {
        if self.high {
            self.bulk.grid.hi()[self.axis]
        } else {
            self.bulk.grid.lo()[self.axis]
        }
    }

    /// Outward unit conormal ν^i = ±g^{ia}/√(g^{aa}) at a face node,
    /// expressed in bulk chart components.
    pub fn conormal(&self, face_node: usize) -> Vec<f64> {
        let m = self.bulk.dim();
        let a = self.axis;
        let node = self.bulk_nodes[face_node];
        let scale = self.outward_sign() / self.bulk.ginv_comp(node, a, a).sqrt();
        (0..m)
            .map(|i| scale * self.bulk.ginv_comp(node, i, a))
            .collect()
    }

    /// Restrict a bulk field to this face.
    pub fn restrict(&self, field: &ScalarField) -> ScalarField {
        ScalarField {
            chart: self.chart.clone(),
            values: self.bulk_nodes.iter().map(|&n| field.values[n]).collect(),
        }
    }

    /// ∫ v dσ with the induced area element √|g̃|.
    pub fn surface_integral(&self, values: &[f64]) -> f64 {
        assert_eq!(values.len(), self.len());
        let grid = &self.chart.grid;
        (0..self.len())
            .map(|i| grid.quad_weight(i) * self.chart.sqrt_det(i) * values[i])
            .sum()
    }
}

/// All boundary faces of a chart, ordered (axis, low, high). Periodic axes
/// contribute none.
pub fn faces(chart: &Arc<MetricChart>) -> Result<Vec<BoundaryFace>, GeometryError> {
    let mut out = Vec::new();
    for axis in 0..chart.dim() {
        if chart.grid.periodic()[axis] {
            continue;
        }
        out.push(build_face(chart, axis, false)?);
        out.push(build_face(chart, axis, true)?);
    }
    Ok(out)
}

fn build_face(
    chart: &Arc<MetricChart>,
    axis: usize,
    high: bool,
) -> Result<BoundaryFace, GeometryError> {
    let m = chart.dim();
    if m < 2 {
        return Err(GeometryError::BadSpec(
            "boundary faces need a chart of dimension at least 2".into(),
        ));
    }
    let grid = &chart.grid;
    let frozen_name = chart.coord_names()[axis].clone();
    let frozen_value = if high {
        grid.hi()[axis]
    } else {
        grid.lo()[axis]
    };

    let keep: Vec<usize> = (0..m).filter(|&k| k != axis).collect();
    let coords: Vec<String> = keep.iter().map(|&k| chart.coord_names()[k].clone()).collect();
    let lo: Vec<f64> = keep.iter().map(|&k| grid.lo()[k]).collect();
    let hi: Vec<f64> = keep.iter().map(|&k| grid.hi()[k]).collect();
    let dims: Vec<usize> = keep.iter().map(|&k| grid.dims()[k]).collect();
    let periodic: Vec<bool> = keep.iter().map(|&k| grid.periodic()[k]).collect();
    let coord_refs: Vec<&str> = coords.iter().map(|s| s.as_str()).collect();

    let freeze = |e: &crate::expr::Expr| -> Result<crate::expr::Expr, GeometryError> {
        let s = e.substitute(&frozen_name, frozen_value).to_string();
        crate::expr::Expr::parse(&s, &coord_refs).map_err(|err| {
            GeometryError::BadSpec(format!("face metric component `{s}`: {err}"))
        })
    };

    // induced metric: drop the frozen row and column
    let mut metric = Vec::new();
    for (p, &i) in keep.iter().enumerate() {
        for &j in &keep[p..] {
            metric.push(freeze(&chart.metric_exprs()[tri_idx(m, i, j)])?);
        }
    }
    let metric_derivs = match chart.metric_deriv_exprs() {
        Some(dg) => {
            let mut rows = Vec::new();
            for &d in &keep {
                let mut row = Vec::new();
                for (p, &i) in keep.iter().enumerate() {
                    for &j in &keep[p..] {
                        row.push(freeze(&dg[d][tri_idx(m, i, j)])?);
                    }
                }
                rows.push(row);
            }
            Some(rows)
        }
        None => None,
    };
    let face_chart = Arc::new(MetricChart::new(
        coords, lo, hi, dims, periodic, metric, metric_derivs,
    )?);

    let fixed_index = if high { grid.dims()[axis] - 1 } else { 0 };
    let mut bulk_nodes = Vec::with_capacity(face_chart.grid.len());
    for fnode in 0..face_chart.grid.len() {
        let fmi = face_chart.grid.multi_index(fnode);
        let mut mi = Vec::with_capacity(m);
        let mut it = fmi.iter();
        for k in 0..m {
            if k == axis {
                mi.push(fixed_index);
            } else {
                mi.push(*it.next().unwrap());
            }
        }
        bulk_nodes.push(grid.index(&mi));
    }

    Ok(BoundaryFace {
        axis,
        high,
        chart: face_chart,
        bulk: chart.clone(),
        bulk_nodes,
    })
}

#[inline]
fn tri_idx(m: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * m - i * (i + 1) / 2 + j
}

/// Outward normal derivative ∂_ν u = ν^j ∂_j u at the face nodes.
pub fn normal_derivative(field: &ScalarField, face: &BoundaryFace) -> Vec<f64> {
    let chart = &field.chart;
    let m = chart.dim();
    let partials: Vec<Vec<f64>> = (0..m)
        .map(|k| crate::disc::partial_values(&chart.grid, &field.values, k, 1))
        .collect();
    (0..face.len())
        .map(|fnode| {
            let nu = face.conormal(fnode);
            let node = face.bulk_node(fnode);
            let mut du = 0.0;
            for j in 0..m {
                du += nu[j] * partials[j][node];
            }
            du
        })
        .collect()
}

/// Tangential gradient of the restriction, in the induced metric of the
/// face chart.
pub fn tangential_gradient(field: &ScalarField, face: &BoundaryFace) -> VectorField {
    geometry::gradient(&face.restrict(field))
}

/// |∇̃u|² on the face.
pub fn tangential_grad_norm_sq(field: &ScalarField, face: &BoundaryFace) -> ScalarField {
    geometry::grad_norm_sq(&face.restrict(field))
}

/// Second fundamental form of the face with respect to the outward unit
/// conormal, II_ij = ±Γ^a_ij/√(g^{aa}), as a tensor field on the face
/// chart (tangential indices only).
pub fn second_fundamental_form(face: &BoundaryFace) -> SymTensorField {
    let m = face.bulk.dim();
    let fm = m - 1;
    let a = face.axis;
    let keep: Vec<usize> = (0..m).filter(|&k| k != a).collect();
    let mut comps = Vec::with_capacity(face.len() * fm * (fm + 1) / 2);
    for fnode in 0..face.len() {
        let node = face.bulk_node(fnode);
        let scale = face.outward_sign() / face.bulk.ginv_comp(node, a, a).sqrt();
        for (p, &i) in keep.iter().enumerate() {
            for &j in &keep[p..] {
                comps.push(scale * face.bulk.gamma(node, a, i, j));
            }
        }
    }
    SymTensorField {
        chart: face.chart.clone(),
        comps,
    }
}

/// Mean curvature H = (1/(m−1)) g̃^{ij} II_ij at the face nodes.
pub fn mean_curvature(face: &BoundaryFace) -> Vec<f64> {
    let fm = face.chart.dim();
    let ii = second_fundamental_form(face);
    (0..face.len())
        .map(|fnode| {
            let mut acc = 0.0;
            for i in 0..fm {
                for j in 0..fm {
                    acc += face.chart.ginv_comp(fnode, i, j) * ii.get(fnode, i, j);
                }
            }
            acc / fm as f64
        })
        .collect()
}

/// Laplace–Beltrami operator of the induced face metric applied to the
/// restriction of `field`.
pub fn boundary_laplacian(field: &ScalarField, face: &BoundaryFace) -> ScalarField {
    geometry::laplace_beltrami(&face.restrict(field))
}

/// Hessian of `field` contracted twice with the outward conormal,
/// H_u(ν, ν), at the face nodes.
pub fn hessian_normal_normal(field: &ScalarField, face: &BoundaryFace) -> Vec<f64> {
    let m = field.chart.dim();
    let h = geometry::hessian(field);
    (0..face.len())
        .map(|fnode| {
            let nu = face.conormal(fnode);
            let node = face.bulk_node(fnode);
            let mut acc = 0.0;
            for i in 0..m {
                for j in 0..m {
                    acc += nu[i] * nu[j] * h.get(node, i, j);
                }
            }
            acc
        })
        .collect()
}

/// Residual of the boundary splitting of the Laplacian,
/// Δu − (Δ̃u − (m−1) H ∂_ν u + H_u(ν,ν)), per face node.
pub fn laplacian_split_residual(field: &ScalarField, face: &BoundaryFace) -> Vec<f64> {
    let m = field.chart.dim();
    let bulk_lap = geometry::laplace_beltrami(field);
    let face_lap = boundary_laplacian(field, face);
    let dnu = normal_derivative(field, face);
    let hnn = hessian_normal_normal(field, face);
    let hmean = mean_curvature(face);
    (0..face.len())
        .map(|fnode| {
            let node = face.bulk_node(fnode);
            bulk_lap.values[node]
                - (face_lap.values[fnode] - (m as f64 - 1.0) * hmean[fnode] * dnu[fnode]
                    + hnn[fnode])
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::test_charts::*;
    use std::f64::consts::PI;

    #[test]
    fn face_layout_square() {
        let sq = Arc::new(euclidean_square(8));
        let fs = faces(&sq).unwrap();
        assert_eq!(fs.len(), 4);
        for f in &fs {
            assert_eq!(f.len(), 8);
            assert_eq!(f.chart.dim(), 1);
            for fnode in 0..f.len() {
                assert!(sq.grid.on_boundary(f.bulk_node(fnode)));
            }
        }
        // periodic axis contributes no faces
        let ann = Arc::new(annulus(8));
        assert_eq!(faces(&ann).unwrap().len(), 2);
    }

    #[test]
    fn conormal_and_normal_derivative() {
        let sq = Arc::new(euclidean_square(16));
        let fs = faces(&sq).unwrap();
        let u = ScalarField::from_fn(&sq, |c| c[0]);
        // axis 0 low: ν = −e_x, ∂νu = −1; axis 0 high: +1; axis 1: 0
        let d = normal_derivative(&u, &fs[0]);
        assert!(d.iter().all(|&v| (v + 1.0).abs() < 1e-9));
        let d = normal_derivative(&u, &fs[1]);
        assert!(d.iter().all(|&v| (v - 1.0).abs() < 1e-9));
        let d = normal_derivative(&u, &fs[2]);
        assert!(d.iter().all(|&v| v.abs() < 1e-9));

        // annulus, u = ln r: ∂νu = −1 inner, 1/2 outer
        let ann = Arc::new(annulus(64));
        let fs = faces(&ann).unwrap();
        let u = ScalarField::from_fn(&ann, |c| c[0].ln());
        let inner = normal_derivative(&u, &fs[0]);
        let outer = normal_derivative(&u, &fs[1]);
        for v in inner {
            assert!((v + 1.0).abs() < 2e-3, "{v}");
        }
        for v in outer {
            assert!((v - 0.5).abs() < 2e-3, "{v}");
        }
    }

    #[test]
    fn conormal_is_unit() {
        let sph = Arc::new(sphere_band(16, 0.6, 1.4));
        let fs = faces(&sph).unwrap();
        for f in &fs {
            for fnode in [0, 5] {
                let nu = f.conormal(fnode);
                let node = f.bulk_node(fnode);
                let mut norm = 0.0;
                for i in 0..2 {
                    for j in 0..2 {
                        norm += sph.g_comp(node, i, j) * nu[i] * nu[j];
                    }
                }
                assert!((norm - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn second_fundamental_form_annulus() {
        // outer circle r = 2: II_θθ = −r = −2, H = −1/2
        // inner circle r = 1: II_θθ = +r = 1, H = +1
        let ann = Arc::new(annulus(32));
        let fs = faces(&ann).unwrap();
        let ii_inner = second_fundamental_form(&fs[0]);
        let ii_outer = second_fundamental_form(&fs[1]);
        for fnode in 0..fs[0].len() {
            assert!((ii_inner.get(fnode, 0, 0) - 1.0).abs() < 1e-8);
            assert!((ii_outer.get(fnode, 0, 0) + 2.0).abs() < 1e-8);
        }
        let h_inner = mean_curvature(&fs[0]);
        let h_outer = mean_curvature(&fs[1]);
        for fnode in 0..fs[0].len() {
            assert!((h_inner[fnode] - 1.0).abs() < 1e-8);
            assert!((h_outer[fnode] + 0.5).abs() < 1e-8);
        }
        // flat faces of the square carry no curvature
        let sq = Arc::new(euclidean_square(8));
        for f in faces(&sq).unwrap() {
            let ii = second_fundamental_form(&f);
            assert!(ii.comps.iter().all(|&v| v.abs() < 1e-12));
            assert!(mean_curvature(&f).iter().all(|&v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn second_fundamental_form_sphere_band() {
        // cap boundary θ = θ0 with outward ν = −∂θ: II = cot(θ0) g̃.
        let (t0, t1) = (0.6f64, 1.4f64);
        let sph = Arc::new(sphere_band(32, t0, t1));
        let fs = faces(&sph).unwrap();
        let ii_low = second_fundamental_form(&fs[0]);
        let ii_high = second_fundamental_form(&fs[1]);
        for fnode in 0..fs[0].len() {
            let want_low = t0.cos() / t0.sin() * t0.sin().powi(2);
            let want_high = -t1.cos() / t1.sin() * t1.sin().powi(2);
            assert!((ii_low.get(fnode, 0, 0) - want_low).abs() < 1e-8);
            assert!((ii_high.get(fnode, 0, 0) - want_high).abs() < 1e-8);
        }
        let h_low = mean_curvature(&fs[0]);
        assert!((h_low[0] - t0.cos() / t0.sin()).abs() < 1e-8);
    }

    #[test]
    fn surface_integrals() {
        let ann = Arc::new(annulus(64));
        let fs = faces(&ann).unwrap();
        let ones = vec![1.0; fs[0].len()];
        assert!((fs[0].surface_integral(&ones) - 2.0 * PI).abs() < 1e-10);
        assert!((fs[1].surface_integral(&ones) - 4.0 * PI).abs() < 1e-10);

        let sph = Arc::new(sphere_band(64, 0.6, 1.4));
        let fs = faces(&sph).unwrap();
        let ones = vec![1.0; fs[0].len()];
        assert!((fs[0].surface_integral(&ones) - 2.0 * PI * 0.6f64.sin()).abs() < 1e-10);
        assert!((fs[1].surface_integral(&ones) - 2.0 * PI * 1.4f64.sin()).abs() < 1e-10);
    }

    #[test]
    fn tangential_gradient_and_boundary_laplacian() {
        let ann = Arc::new(annulus(32));
        let fs = faces(&ann).unwrap();
        // radial field has zero tangential gradient
        let u = ScalarField::from_fn(&ann, |c| c[0].ln());
        let g = tangential_grad_norm_sq(&u, &fs[1]);
        assert!(g.sup_norm() < 1e-12);
        assert!(boundary_laplacian(&u, &fs[1]).sup_norm() < 1e-9);

        // u = sin θ on the outer circle r = 2: |∇̃u|² = cos²θ/4,
        // Δ̃u = −sin θ/4
        let u = ScalarField::from_fn(&ann, |c| c[1].sin());
        let g = tangential_grad_norm_sq(&u, &fs[1]);
        let l = boundary_laplacian(&u, &fs[1]);
        let mut worst = 0.0f64;
        for fnode in 0..fs[1].len() {
            let th = fs[1].chart.grid.coords(fnode)[0];
            worst = worst.max((g.values[fnode] - th.cos().powi(2) / 4.0).abs());
            worst = worst.max((l.values[fnode] + th.sin() / 4.0).abs());
        }
        assert!(worst < 2e-2, "{worst}");
    }

    #[test]
    fn laplacian_split_identity() {
        // u = ln r on the annulus: Δu = 0, Δ̃u = 0, and the curvature
        // terms cancel: −(m−1)H ∂νu + H(ν,ν) = 0 on both circles.
        let ann = Arc::new(annulus(64));
        let fs = faces(&ann).unwrap();
        let u = ScalarField::from_fn(&ann, |c| c[0].ln());
        for f in &fs {
            let r = laplacian_split_residual(&u, f);
            for v in r {
                assert!(v.abs() < 5e-3, "{v}");
            }
        }
        // generic field on the sphere band: the splitting holds at the
        // discrete level too, since both sides share the same stencils
        // and Christoffel values on a diagonal metric
        let sph = Arc::new(sphere_band(32, 0.6, 1.4));
        let fs = faces(&sph).unwrap();
        let u = ScalarField::from_fn(&sph, |c| c[0].cos() * (1.0 + 0.3 * c[1].sin()));
        for f in &fs {
            for v in laplacian_split_residual(&u, f) {
                assert!(v.abs() < 1e-10, "{v}");
            }
        }
    }

    #[test]
    fn restriction_round_trip() {
        let sph = Arc::new(sphere_band(16, 0.6, 1.4));
        let fs = faces(&sph).unwrap();
        let u = ScalarField::from_fn(&sph, |c| c[0] + 10.0 * c[1]);
        let r = fs[1].restrict(&u);
        for fnode in 0..fs[1].len() {
            assert_eq!(r.values[fnode], u.values[fs[1].bulk_node(fnode)]);
        }
        assert_eq!(fs[1].coordinate(), 1.4);
        assert_eq!(fs[0].coordinate(), 0.6);
    }
}
