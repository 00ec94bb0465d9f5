//! Fields: coefficient vectors bound to a function space.
//!
//! All integrals use tensor Gauss rules from the mesh, defaulting to the
//! space's rule (`max degree + 3` points per direction); products of fields
//! from different spaces on the same mesh integrate with the larger default.
//! Integral accumulation is compensated and runs in fixed cell order, so
//! conservation diagnostics are deterministic.

use crate::error::{Error, Result};
use crate::geometry::{NeumaierSum, Vec3};
use crate::mesh::Mesh;
use crate::space::{FunctionSpace, SpaceSpec};
use std::sync::Arc;

#[derive(Debug, Clone)]
pub struct Field {
    pub space: Arc<FunctionSpace>,
    pub data: Vec<f64>,
}

/// Reference corners in the order `c0..c3` used by vertex evaluation.
pub const REF_CORNERS: [(f64, f64); 4] = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)];

impl Field {
    pub fn zeros(space: &Arc<FunctionSpace>) -> Self {
        Self { space: Arc::clone(space), data: vec![0.0; space.n_dofs] }
    }

    /// Nodal interpolation of a pointwise function; rejects non-finite
    /// values with the offending node's position in the error.
    pub fn interpolate(
        space: &Arc<FunctionSpace>,
        f: impl Fn(Vec3) -> f64,
    ) -> Result<Self> {
        let mut field = Self::zeros(space);
        for cell in 0..space.mesh.n_cells() {
            let dofs = space.cell_dofs(cell);
            for l in 0..space.nloc {
                let (xi, eta) = space.node_ref(l);
                let p = space.mesh.chart_point(cell, xi, eta);
                let v = f(p);
                if !v.is_finite() {
                    return Err(Error::NonFinite(format!(
                        "interpolated value {v} at node ({:.6e}, {:.6e}, {:.6e}) of cell {cell}",
                        p[0], p[1], p[2]
                    )));
                }
                field.data[dofs[l]] = v;
            }
        }
        Ok(field)
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.space.mesh
    }

    pub fn spec(&self) -> SpaceSpec {
        self.space.spec
    }

    /// Value at reference point `(xi, eta)` of `cell`.
    pub fn evaluate(&self, cell: usize, xi: f64, eta: f64) -> f64 {
        let table = self.space.basis_at(&[(xi, eta)]);
        let dofs = self.space.cell_dofs(cell);
        (0..self.space.nloc).map(|l| self.data[dofs[l]] * table.value(0, l)).sum()
    }

    /// Values at the four reference corners of `cell`, in corner order.
    pub fn evaluate_at_vertices(&self, cell: usize) -> [f64; 4] {
        let table = self.space.basis_at(&REF_CORNERS);
        let dofs = self.space.cell_dofs(cell);
        let mut out = [0.0; 4];
        for (corner, slot) in out.iter_mut().enumerate() {
            *slot = (0..self.space.nloc)
                .map(|l| self.data[dofs[l]] * table.value(corner, l))
                .sum();
        }
        out
    }

    /// Minimum and maximum over all cell-corner evaluations. For bilinear
    /// (and lower) cell restrictions this bounds the cellwise field range.
    pub fn vertex_range(&self) -> (f64, f64) {
        let table = self.space.basis_at(&REF_CORNERS);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for cell in 0..self.space.mesh.n_cells() {
            let dofs = self.space.cell_dofs(cell);
            for corner in 0..4 {
                let v: f64 = (0..self.space.nloc)
                    .map(|l| self.data[dofs[l]] * table.value(corner, l))
                    .sum();
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        (lo, hi)
    }

    /// Integral over the domain with `n_q` (default: space rule) points.
    pub fn integrate(&self, n_q: Option<usize>) -> Result<f64> {
        let n_q = n_q.unwrap_or_else(|| self.space.n_q_default());
        let table = self.space.basis_at(&FunctionSpace::quad_ref_points(n_q));
        let mut acc = NeumaierSum::new();
        for cell in 0..self.space.mesh.n_cells() {
            let dofs = self.space.cell_dofs(cell);
            for (q, qp) in self.space.mesh.cell_quadrature(cell, n_q)?.iter().enumerate() {
                let v: f64 =
                    (0..self.space.nloc).map(|l| self.data[dofs[l]] * table.value(q, l)).sum();
                acc.add(qp.weight * v);
            }
        }
        Ok(acc.value())
    }

    /// Integral of the pointwise product of two fields on the same mesh
    /// (spaces may differ). This is the "true" quadrature product used by
    /// tracer-mass diagnostics, not a product of nodal values.
    pub fn integrate_product(&self, other: &Field, n_q: Option<usize>) -> Result<f64> {
        if !Arc::ptr_eq(self.mesh(), other.mesh()) {
            return Err(Error::Mismatch(
                "integrate_product needs both fields on the same mesh".into(),
            ));
        }
        let n_q = n_q.unwrap_or_else(|| self.space.n_q_default().max(other.space.n_q_default()));
        let pts = FunctionSpace::quad_ref_points(n_q);
        let ta = self.space.basis_at(&pts);
        let tb = other.space.basis_at(&pts);
        let mut acc = NeumaierSum::new();
        for cell in 0..self.space.mesh.n_cells() {
            let da = self.space.cell_dofs(cell);
            let db = other.space.cell_dofs(cell);
            for (q, qp) in self.space.mesh.cell_quadrature(cell, n_q)?.iter().enumerate() {
                let va: f64 = (0..self.space.nloc).map(|l| self.data[da[l]] * ta.value(q, l)).sum();
                let vb: f64 =
                    (0..other.space.nloc).map(|l| other.data[db[l]] * tb.value(q, l)).sum();
                acc.add(qp.weight * va * vb);
            }
        }
        Ok(acc.value())
    }

    /// Domain mean `integral(q) / area`.
    pub fn global_mean(&self) -> Result<f64> {
        let n_q = self.space.n_q_default();
        Ok(self.integrate(None)? / self.space.mesh.total_area(n_q)?)
    }

    /// CSV dump `dof,x,y,z,value` in dof order.
    pub fn to_csv(&self) -> String {
        let pos = self.space.node_positions();
        let mut out = String::from("dof,x,y,z,value\n");
        for (i, p) in pos.iter().enumerate() {
            out.push_str(&format!(
                "{},{:.17e},{:.17e},{:.17e},{:.17e}\n",
                i, p[0], p[1], p[2], self.data[i]
            ));
        }
        out
    }
}

/// Dense per-cell mass matrices of `space` weighted by the `weight` field
/// (evaluated pointwise at quadrature): `M[a][b] = integral_cell(weight *
/// phi_a * phi_b)`. The weight may live in a different space on the same
/// mesh.
pub fn weighted_cell_mass_matrices(
    space: &FunctionSpace,
    weight: &Field,
    n_q: usize,
) -> Result<Vec<Vec<f64>>> {
    if !Arc::ptr_eq(&space.mesh, weight.mesh()) {
        return Err(Error::Mismatch("weight field lives on a different mesh".into()));
    }
    let pts = FunctionSpace::quad_ref_points(n_q);
    let table = space.basis_at(&pts);
    let wtable = weight.space.basis_at(&pts);
    let nloc = space.nloc;
    let mut out = Vec::with_capacity(space.mesh.n_cells());
    for cell in 0..space.mesh.n_cells() {
        let dofs = space.cell_dofs(cell);
        debug_assert_eq!(dofs.len(), nloc);
        let wdofs = weight.space.cell_dofs(cell);
        let mut m = vec![0.0; nloc * nloc];
        for (q, qp) in space.mesh.cell_quadrature(cell, n_q)?.iter().enumerate() {
            let wv: f64 = (0..weight.space.nloc)
                .map(|l| weight.data[wdofs[l]] * wtable.value(q, l))
                .sum();
            let scale = qp.weight * wv;
            for a in 0..nloc {
                let fa = scale * table.value(q, a);
                for b in a..nloc {
                    m[a * nloc + b] += fa * table.value(q, b);
                }
            }
        }
        for a in 0..nloc {
            for b in 0..a {
                m[a * nloc + b] = m[b * nloc + a];
            }
        }
        out.push(m);
    }
    Ok(out)
}

/// Applies the weighted mass operator of `space` to coefficients `coeffs`:
/// `out_i = integral(weight * q * phi_i)` with `q = sum_j coeffs_j phi_j`.
pub fn weighted_mass_apply(
    space: &FunctionSpace,
    weight: &Field,
    coeffs: &[f64],
    n_q: usize,
) -> Result<Vec<f64>> {
    if !Arc::ptr_eq(&space.mesh, weight.mesh()) {
        return Err(Error::Mismatch("weight field lives on a different mesh".into()));
    }
    assert_eq!(coeffs.len(), space.n_dofs, "coefficient vector size mismatch");
    let pts = FunctionSpace::quad_ref_points(n_q);
    let table = space.basis_at(&pts);
    let wtable = weight.space.basis_at(&pts);
    let mut out = vec![0.0; space.n_dofs];
    for cell in 0..space.mesh.n_cells() {
        let dofs = space.cell_dofs(cell);
        let wdofs = weight.space.cell_dofs(cell);
        for (q, qp) in space.mesh.cell_quadrature(cell, n_q)?.iter().enumerate() {
            let wv: f64 = (0..weight.space.nloc)
                .map(|l| weight.data[wdofs[l]] * wtable.value(q, l))
                .sum();
            let qv: f64 = (0..space.nloc).map(|l| coeffs[dofs[l]] * table.value(q, l)).sum();
            let scale = qp.weight * wv * qv;
            for a in 0..space.nloc {
                out[dofs[a]] += scale * table.value(q, a);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_cubed_sphere_mesh, build_slice_mesh};
    use crate::space::make_space;
    use approx::assert_abs_diff_eq;

    #[test]
    fn interpolation_is_nodal_exact() {
        let mesh = Arc::new(build_slice_mesh(3, 2, 300.0, 200.0).unwrap());
        let s = make_space(&mesh, SpaceSpec::density(1)).unwrap();
        let f = Field::interpolate(&s, |p| 2.0 * p[0] - 0.5 * p[1] + 3.0).unwrap();
        for cell in 0..mesh.n_cells() {
            for l in 0..s.nloc {
                let (xi, eta) = s.node_ref(l);
                let p = mesh.chart_point(cell, xi, eta);
                assert_abs_diff_eq!(
                    f.evaluate(cell, xi, eta),
                    2.0 * p[0] - 0.5 * p[1] + 3.0,
                    epsilon = 1e-10
                );
            }
        }
    }

    #[test]
    fn interpolate_rejects_non_finite() {
        let mesh = Arc::new(build_slice_mesh(2, 2, 1.0, 1.0).unwrap());
        let s = make_space(&mesh, SpaceSpec::density(0)).unwrap();
        let r = Field::interpolate(&s, |p| if p[0] > 0.4 { f64::NAN } else { 1.0 });
        assert!(r.is_err());
    }

    #[test]
    fn integrates_linear_fields_exactly_on_slice() {
        let (lx, hz) = (300.0, 200.0);
        let mesh = Arc::new(build_slice_mesh(3, 2, lx, hz).unwrap());
        let s = make_space(&mesh, SpaceSpec::density(1)).unwrap();
        let f = Field::interpolate(&s, |p| p[0]).unwrap();
        assert_abs_diff_eq!(
            f.integrate(None).unwrap(),
            lx * lx / 2.0 * hz,
            epsilon = 1e-6
        );
        let g = Field::interpolate(&s, |p| 1.5 * p[1] + 2.0).unwrap();
        assert_abs_diff_eq!(
            g.integrate(None).unwrap(),
            (1.5 * hz / 2.0 + 2.0) * lx * hz,
            epsilon = 1e-6
        );
    }

    #[test]
    fn integrates_constant_on_sphere_to_area() {
        let r = 2.5;
        let mesh = Arc::new(build_cubed_sphere_mesh(4, r).unwrap());
        let s = make_space(&mesh, SpaceSpec::density(0)).unwrap();
        let f = Field::interpolate(&s, |_| 3.0).unwrap();
        let area = mesh.total_area(s.n_q_default()).unwrap();
        assert_abs_diff_eq!(f.integrate(None).unwrap(), 3.0 * area, epsilon = 1e-10 * area);
        assert_abs_diff_eq!(f.global_mean().unwrap(), 3.0, epsilon = 1e-12);
    }

    #[test]
    fn product_integral_handles_mixed_spaces() {
        let (lx, hz) = (2.0, 1.0);
        let mesh = Arc::new(build_slice_mesh(4, 3, lx, hz).unwrap());
        let sa = make_space(&mesh, SpaceSpec::density(1)).unwrap();
        let sb = make_space(&mesh, SpaceSpec::staggered_tracer(0)).unwrap();
        // a = x-ish bilinear, b = z linear; product integral separable.
        let a = Field::interpolate(&sa, |p| p[0]).unwrap();
        let b = Field::interpolate(&sb, |p| p[1]).unwrap();
        let expect = (lx * lx / 2.0) * (hz * hz / 2.0);
        assert_abs_diff_eq!(a.integrate_product(&b, None).unwrap(), expect, epsilon = 1e-12);
        // Nodal-product would differ; the quadrature product must equal the
        // weighted mass application contracted with ones.
        let q = weighted_mass_apply(&sa.clone(), &b, &a.data, 4).unwrap();
        let total: f64 = q.iter().sum();
        assert_abs_diff_eq!(total, expect, epsilon = 1e-12);
    }

    #[test]
    fn weighted_mass_matches_apply() {
        let mesh = Arc::new(build_slice_mesh(3, 3, 5.0, 4.0).unwrap());
        let s = make_space(&mesh, SpaceSpec::density(1)).unwrap();
        let w = Field::interpolate(&s, |p| 1.0 + 0.3 * p[0] + 0.1 * p[1]).unwrap();
        let coeffs: Vec<f64> = (0..s.n_dofs).map(|i| (i as f64 * 0.37).sin()).collect();
        let mats = weighted_cell_mass_matrices(&s, &w, 4).unwrap();
        let applied = weighted_mass_apply(&s, &w, &coeffs, 4).unwrap();
        let mut expect = vec![0.0; s.n_dofs];
        for cell in 0..mesh.n_cells() {
            let dofs = s.cell_dofs(cell);
            for a in 0..s.nloc {
                for b in 0..s.nloc {
                    expect[dofs[a]] += mats[cell][a * s.nloc + b] * coeffs[dofs[b]];
                }
            }
        }
        for i in 0..s.n_dofs {
            assert_abs_diff_eq!(applied[i], expect[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn vertex_range_bounds_bilinear_field() {
        let mesh = Arc::new(build_slice_mesh(2, 2, 2.0, 2.0).unwrap());
        let s = make_space(&mesh, SpaceSpec::density(1)).unwrap();
        let f = Field::interpolate(&s, |p| p[0] - p[1]).unwrap();
        let (lo, hi) = f.vertex_range();
        assert_abs_diff_eq!(lo, -2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(hi, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn csv_dump_lists_every_dof() {
        let mesh = Arc::new(build_slice_mesh(2, 2, 1.0, 1.0).unwrap());
        let s = make_space(&mesh, SpaceSpec::density(0)).unwrap();
        let f = Field::interpolate(&s, |_| 7.0).unwrap();
        let csv = f.to_csv();
        assert_eq!(csv.lines().count(), 1 + s.n_dofs);
        assert!(csv.starts_with("dof,x,y,z,value"));
    }
}
