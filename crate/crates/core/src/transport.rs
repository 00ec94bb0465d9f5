//! Discontinuous-Galerkin transport: weak forms, upwind facet traces,
//! strong-stability-preserving RK3 stepping, and the coupled
//! density/tracer-mass stepper.
//!
//! Weak forms (test function `phi` from the transport space, all facet
//! quantities evaluated with the shared plus-side quadrature):
//! - conservative, for densities `q`:
//!   `M dq/dt = integral(q u . grad phi) - sum_facets integral((u . n+) [phi] q_up)`
//!   where `[phi] = phi+ - phi-` and `q_up` is the upwind-side value.
//!   Summing over the test basis telescopes every facet flux, so the total
//!   integral is conserved structurally;
//! - advective, for mixing ratios `m`, assembled in the flux-difference
//!   form obtained from the upwind weak form
//!   `integral(m div(phi u)) - sum_facets integral((u . n+) [phi] m_up)`
//!   by one exact integration by parts per cell:
//!   `M dm/dt = -integral(phi u . grad m)
//!              + sum_facets integral((u . n+) phi_down (m_up_side - m_down_side))`
//!   where only the downwind side receives a contribution. This is
//!   algebraically the same scheme, but constants are annihilated
//!   structurally (the gradient of a constant and the facet difference both
//!   vanish identically) instead of only up to the volume/facet quadrature
//!   mismatch.
//!
//! Wall facets carry no flux term; the experiment flows have vanishing
//! wall-normal velocity, making this exact.
//!
//! The coupled stepper advances a density and tracer mixing ratios together
//! in one fully discontinuous space. Per RK stage it updates the tracer-mass
//! vector `Q_i = integral(rho m phi_i)` with the conservative weak form
//! evaluated on the pointwise product `rho(x) m(x)` (upwind-side product at
//! facets), then extracts `m` by solving the block-diagonal density-weighted
//! mass system of the stage's new density, exactly, per cell. Summing `Q`
//! telescopes, so `integral(rho m)` is conserved to roundoff, and constant
//! `m` rides along exactly because the product form's weak residual is then
//! the density equation scaled by the constant.

use crate::error::{Error, Result};
use crate::field::{weighted_cell_mass_matrices, weighted_mass_apply, Field};
use crate::geometry::{dot, Vec3};
use crate::linalg::DenseChol;
use crate::mesh::{CellQuadPoint, FacetQuadPoint};
use crate::space::{BasisTable, FunctionSpace};
use std::sync::Arc;

/// A prescribed flow with analytic divergence.
pub trait FlowField {
    fn velocity(&self, p: Vec3, t: f64) -> Vec3;
    /// Divergence of the velocity at `p`; used by the advective form.
    fn divergence(&self, p: Vec3, t: f64) -> f64;
}

/// Upwind trace: the plus-side value when the plus-side normal velocity is
/// non-negative, the minus-side value otherwise.
pub fn upwind(un_plus: f64, value_plus: f64, value_minus: f64) -> f64 {
    if un_plus >= 0.0 {
        value_plus
    } else {
        value_minus
    }
}

/// Strong-stability-preserving RK3 (Shu-Osher form) on a plain state vector.
///
/// Stage states approximate the solution at `t + dt`, `t + dt/2`, `t + dt`;
/// the right-hand side is evaluated at `(q, t)`, `(q1, t + dt)`,
/// `(q2, t + dt/2)`. The hook runs after each stage and may modify the stage
/// state in place (limiters).
pub fn ssprk3_step(
    q: &[f64],
    t: f64,
    dt: f64,
    mut rhs: impl FnMut(&[f64], f64) -> Result<Vec<f64>>,
    mut stage_hook: impl FnMut(&mut [f64], usize) -> Result<()>,
) -> Result<Vec<f64>> {
    let n = q.len();
    let mut l = rhs(q, t)?;
    let mut q1: Vec<f64> = (0..n).map(|i| q[i] + dt * l[i]).collect();
    stage_hook(&mut q1, 1)?;
    l = rhs(&q1, t + dt)?;
    let mut q2: Vec<f64> =
        (0..n).map(|i| 0.75 * q[i] + 0.25 * (q1[i] + dt * l[i])).collect();
    stage_hook(&mut q2, 2)?;
    l = rhs(&q2, t + 0.5 * dt)?;
    let mut q3: Vec<f64> = (0..n)
        .map(|i| (1.0 / 3.0) * q[i] + (2.0 / 3.0) * (q2[i] + dt * l[i]))
        .collect();
    stage_hook(&mut q3, 3)?;
    Ok(q3)
}

/// Convex-combination coefficients `(a, b)` of the three Shu-Osher stages:
/// `next = a * initial + b * (current + dt * L(current))`, with the stage
/// right-hand-side times offsets from `t`.
const SSPRK3_STAGES: [(f64, f64, f64); 3] =
    [(0.0, 1.0, 0.0), (0.75, 0.25, 1.0), (1.0 / 3.0, 2.0 / 3.0, 0.5)];

/// Precomputed assembly context for transport in one fully discontinuous
/// space: cached cell/facet quadrature, basis tables and inverse-Gram
/// factors for directional gradients.
pub struct TransportOperator {
    pub space: Arc<FunctionSpace>,
    pub n_q_cell: usize,
    pub n_q_facet: usize,
    cell_qp: Vec<Vec<CellQuadPoint>>,
    /// Inverse Gram matrices (2x2, packed [g11, g12, g22] inverted) per cell
    /// per quadrature point, aligned with `cell_qp`.
    cell_inv_gram: Vec<Vec<[f64; 3]>>,
    cell_basis: BasisTable,
    facet_qp: Vec<Vec<FacetQuadPoint>>,
    facet_basis_plus: Vec<BasisTable>,
    facet_basis_minus: Vec<BasisTable>,
}

impl TransportOperator {
    /// Builds the operator for `space`, using the space's default quadrature
    /// for volumes and the same point count per facet edge.
    pub fn new(space: &Arc<FunctionSpace>) -> Result<Self> {
        if !space.fully_discontinuous() {
            return Err(Error::UnsupportedSpace(
                "transport requires a fully discontinuous space; continuous directions \
                 would need flux terms across shared dofs"
                    .into(),
            ));
        }
        let n_q_cell = space.n_q_default();
        let n_q_facet = n_q_cell;
        let mesh = &space.mesh;
        let mut cell_qp = Vec::with_capacity(mesh.n_cells());
        let mut cell_inv_gram = Vec::with_capacity(mesh.n_cells());
        for cell in 0..mesh.n_cells() {
            let qps = mesh.cell_quadrature(cell, n_q_cell)?;
            let grams = qps
                .iter()
                .map(|qp| {
                    let t1 = qp.tangents[0];
                    let t2 = qp.tangents[1];
                    let (g11, g12, g22) = (dot(t1, t1), dot(t1, t2), dot(t2, t2));
                    let det = g11 * g22 - g12 * g12;
                    [g22 / det, -g12 / det, g11 / det]
                })
                .collect();
            cell_qp.push(qps);
            cell_inv_gram.push(grams);
        }
        let cell_basis = space.basis_at(&FunctionSpace::quad_ref_points(n_q_cell));
        let mut facet_qp = Vec::with_capacity(mesh.interior_facets.len());
        let mut facet_basis_plus = Vec::with_capacity(mesh.interior_facets.len());
        let mut facet_basis_minus = Vec::with_capacity(mesh.interior_facets.len());
        for facet in &mesh.interior_facets {
            let qps = mesh.facet_quadrature(facet, n_q_facet)?;
            let plus_pts: Vec<(f64, f64)> = qps.iter().map(|q| q.ref_plus).collect();
            let minus_pts: Vec<(f64, f64)> = qps.iter().map(|q| q.ref_minus).collect();
            facet_basis_plus.push(space.basis_at(&plus_pts));
            facet_basis_minus.push(space.basis_at(&minus_pts));
            facet_qp.push(qps);
        }
        Ok(Self {
            space: Arc::clone(space),
            n_q_cell,
            n_q_facet,
            cell_qp,
            cell_inv_gram,
            cell_basis,
            facet_qp,
            facet_basis_plus,
            facet_basis_minus,
        })
    }

    /// Directional-gradient coefficients at one cached quadrature point:
    /// returns `(c_xi, c_eta)` with `u . grad(phi) = c_xi dphi/dxi + c_eta
    /// dphi/deta`.
    fn grad_coeffs(&self, cell: usize, q: usize, u: Vec3) -> (f64, f64) {
        let qp = &self.cell_qp[cell][q];
        let ig = &self.cell_inv_gram[cell][q];
        let g1 = dot(qp.tangents[0], u);
        let g2 = dot(qp.tangents[1], u);
        (ig[0] * g1 + ig[1] * g2, ig[1] * g1 + ig[2] * g2)
    }

    fn cell_value(&self, coeffs: &[f64], dofs: &[usize], q: usize) -> f64 {
        (0..self.space.nloc).map(|l| coeffs[dofs[l]] * self.cell_basis.value(q, l)).sum()
    }

    /// Weak right-hand side of the conservative form (before the inverse
    /// mass): `F_i = integral(q u . grad phi_i) - facet fluxes`.
    pub fn conservative_weak_rhs(
        &self,
        q: &[f64],
        flow: &dyn FlowField,
        t: f64,
    ) -> Vec<f64> {
        self.conservative_rhs_impl(q, None, flow, t)
    }

    /// Weak conservative right-hand side evaluated on the pointwise product
    /// `rho(x) m(x)`, with the upwind-side product at facets.
    pub fn coupled_weak_rhs(
        &self,
        rho: &[f64],
        m: &[f64],
        flow: &dyn FlowField,
        t: f64,
    ) -> Vec<f64> {
        self.conservative_rhs_impl(rho, Some(m), flow, t)
    }

    fn conservative_rhs_impl(
        &self,
        a: &[f64],
        b: Option<&[f64]>,
        flow: &dyn FlowField,
        t: f64,
    ) -> Vec<f64> {
        let space = &self.space;
        let nloc = space.nloc;
        let mut out = vec![0.0; space.n_dofs];
        for cell in 0..space.mesh.n_cells() {
            let dofs = space.cell_dofs(cell);
            for (q, qp) in self.cell_qp[cell].iter().enumerate() {
                let mut val = self.cell_value(a, dofs, q);
                if let Some(bc) = b {
                    val *= self.cell_value(bc, dofs, q);
                }
                let u = flow.velocity(qp.point, t);
                let (cx, ce) = self.grad_coeffs(cell, q, u);
                let scale = qp.weight * val;
                for i in 0..nloc {
                    let (dxi, deta) = self.cell_basis.grad(q, i);
                    out[dofs[i]] += scale * (cx * dxi + ce * deta);
                }
            }
        }
        for (f, facet) in space.mesh.interior_facets.iter().enumerate() {
            let pdofs = space.cell_dofs(facet.plus_cell);
            let mdofs = space.cell_dofs(facet.minus_cell);
            let tp = &self.facet_basis_plus[f];
            let tm = &self.facet_basis_minus[f];
            for (k, qp) in self.facet_qp[f].iter().enumerate() {
                let un = dot(flow.velocity(qp.point, t), qp.normal);
                let (dofs_up, tab_up) =
                    if un >= 0.0 { (pdofs, tp) } else { (mdofs, tm) };
                let mut val: f64 =
                    (0..nloc).map(|l| a[dofs_up[l]] * tab_up.value(k, l)).sum();
                if let Some(bc) = b {
                    let bv: f64 =
                        (0..nloc).map(|l| bc[dofs_up[l]] * tab_up.value(k, l)).sum();
                    val *= bv;
                }
                let common = qp.weight * un * val;
                for i in 0..nloc {
                    out[pdofs[i]] -= common * tp.value(k, i);
                    out[mdofs[i]] += common * tm.value(k, i);
                }
            }
        }
        out
    }

    /// Weak right-hand side of the advective form (before the inverse
    /// mass), in the flux-difference form: `-integral(phi_i u . grad m)`
    /// plus downwind-side facet corrections `(u . n+) phi_i (m_up - m_down)`.
    /// Constant fields give an identically zero contribution from both
    /// pieces.
    pub fn advective_weak_rhs(&self, m: &[f64], flow: &dyn FlowField, t: f64) -> Vec<f64> {
        let space = &self.space;
        let nloc = space.nloc;
        let mut out = vec![0.0; space.n_dofs];
        for cell in 0..space.mesh.n_cells() {
            let dofs = space.cell_dofs(cell);
            for (q, qp) in self.cell_qp[cell].iter().enumerate() {
                let u = flow.velocity(qp.point, t);
                let (cx, ce) = self.grad_coeffs(cell, q, u);
                let (mut dxi_m, mut deta_m) = (0.0, 0.0);
                for l in 0..nloc {
                    let (dxi, deta) = self.cell_basis.grad(q, l);
                    dxi_m += m[dofs[l]] * dxi;
                    deta_m += m[dofs[l]] * deta;
                }
                let scale = -qp.weight * (cx * dxi_m + ce * deta_m);
                for i in 0..nloc {
                    out[dofs[i]] += scale * self.cell_basis.value(q, i);
                }
            }
        }
        for (f, facet) in space.mesh.interior_facets.iter().enumerate() {
            let pdofs = space.cell_dofs(facet.plus_cell);
            let mdofs = space.cell_dofs(facet.minus_cell);
            let tp = &self.facet_basis_plus[f];
            let tm = &self.facet_basis_minus[f];
            for (k, qp) in self.facet_qp[f].iter().enumerate() {
                let un = dot(flow.velocity(qp.point, t), qp.normal);
                let m_plus: f64 = (0..nloc).map(|l| m[pdofs[l]] * tp.value(k, l)).sum();
                let m_minus: f64 = (0..nloc).map(|l| m[mdofs[l]] * tm.value(k, l)).sum();
                // Downwind side sees (upwind value - own value); upwind side
                // sees exactly zero, so it is skipped.
                let common = qp.weight * un * (m_plus - m_minus);
                if un >= 0.0 {
                    for i in 0..nloc {
                        out[mdofs[i]] += common * tm.value(k, i);
                    }
                } else {
                    for i in 0..nloc {
                        out[pdofs[i]] += common * tp.value(k, i);
                    }
                }
            }
        }
        out
    }

    /// Applies the inverse (unweighted) mass in place.
    pub fn apply_inverse_mass(&self, f: &mut [f64]) {
        let factors = self.space.mass_factors();
        for cell in 0..self.space.mesh.n_cells() {
            let dofs = self.space.cell_dofs(cell);
            let mut local: Vec<f64> = dofs.iter().map(|&d| f[d]).collect();
            factors[cell].solve_in_place(&mut local);
            for (l, &d) in dofs.iter().enumerate() {
                f[d] = local[l];
            }
        }
    }

    /// Solves the density-weighted mass system `M_rho x = rhs` per cell.
    pub fn solve_weighted_mass(&self, rho: &Field, rhs: &[f64]) -> Result<Vec<f64>> {
        let space = &self.space;
        let mats = weighted_cell_mass_matrices(space, rho, self.n_q_cell)?;
        let mut x = rhs.to_vec();
        for (cell, m) in mats.iter().enumerate() {
            let chol = DenseChol::factor(m, space.nloc).map_err(|e| {
                Error::Solver(format!("weighted mass factorisation in cell {cell}: {e}"))
            })?;
            let dofs = space.cell_dofs(cell);
            let mut local: Vec<f64> = dofs.iter().map(|&d| x[d]).collect();
            chol.solve_in_place(&mut local);
            for (l, &d) in dofs.iter().enumerate() {
                x[d] = local[l];
            }
        }
        Ok(x)
    }

    /// One SSPRK3 step of the conservative form for a density field, with
    /// an optional per-stage hook (limiting).
    pub fn step_conservative(
        &self,
        q: &mut Field,
        flow: &dyn FlowField,
        t: f64,
        dt: f64,
        mut stage_hook: impl FnMut(&mut [f64]) -> Result<()>,
    ) -> Result<()> {
        let data = ssprk3_step(
            &q.data,
            t,
            dt,
            |state, tau| {
                let mut f = self.conservative_weak_rhs(state, flow, tau);
                self.apply_inverse_mass(&mut f);
                Ok(f)
            },
            |state, _| stage_hook(state),
        )?;
        q.data = data;
        Ok(())
    }

    /// One SSPRK3 step of the advective form for a mixing-ratio field, with
    /// an optional per-stage hook (limiting).
    pub fn step_advective(
        &self,
        m: &mut Field,
        flow: &dyn FlowField,
        t: f64,
        dt: f64,
        mut stage_hook: impl FnMut(&mut [f64]) -> Result<()>,
    ) -> Result<()> {
        let data = ssprk3_step(
            &m.data,
            t,
            dt,
            |state, tau| {
                let mut f = self.advective_weak_rhs(state, flow, tau);
                self.apply_inverse_mass(&mut f);
                Ok(f)
            },
            |state, _| stage_hook(state),
        )?;
        m.data = data;
        Ok(())
    }

    /// One SSPRK3 step of the coupled system: the density advances with the
    /// conservative form; each tracer's mass vector advances with the
    /// product-form conservative weak rhs and is re-expressed against the
    /// stage's new density by an exact per-cell weighted solve. The hook
    /// runs after each stage extraction with the stage density, and may
    /// modify the tracer in place; tracer mass re-enters the next stage
    /// through the weighted mass application, so hooks preserving cellwise
    /// `integral(rho m)` preserve the global invariant.
    pub fn step_coupled(
        &self,
        rho: &mut Field,
        tracers: &mut [Field],
        flow: &dyn FlowField,
        t: f64,
        dt: f64,
        mut stage_hook: impl FnMut(usize, &mut Field, &Field) -> Result<()>,
    ) -> Result<()> {
        let space = &self.space;
        let rho0 = rho.clone();
        let m0: Vec<Vec<f64>> = tracers.iter().map(|f| f.data.clone()).collect();
        // Q at step start, per tracer.
        let q0: Vec<Vec<f64>> = tracers
            .iter()
            .map(|f| weighted_mass_apply(space, &rho0, &f.data, self.n_q_cell))
            .collect::<Result<_>>()?;

        let mut rho_cur = rho0.clone();
        let mut m_cur = m0.clone();
        for (stage, &(a, b, t_off)) in SSPRK3_STAGES.iter().enumerate() {
            let tau = t + t_off * dt;
            // Density update.
            let mut frho = self.conservative_weak_rhs(&rho_cur.data, flow, tau);
            self.apply_inverse_mass(&mut frho);
            let rho_next_data: Vec<f64> = (0..space.n_dofs)
                .map(|i| a * rho0.data[i] + b * (rho_cur.data[i] + dt * frho[i]))
                .collect();
            let rho_next = Field { space: Arc::clone(space), data: rho_next_data };
            // Tracer updates against the new density.
            for (ti, m) in m_cur.iter_mut().enumerate() {
                let g = self.coupled_weak_rhs(&rho_cur.data, m, flow, tau);
                let q_cur = if stage == 0 {
                    q0[ti].clone()
                } else {
                    weighted_mass_apply(space, &rho_cur, m, self.n_q_cell)?
                };
                let q_next: Vec<f64> = (0..space.n_dofs)
                    .map(|i| a * q0[ti][i] + b * (q_cur[i] + dt * g[i]))
                    .collect();
                let extracted = self.solve_weighted_mass(&rho_next, &q_next)?;
                let mut m_field = Field { space: Arc::clone(space), data: extracted };
                stage_hook(ti, &mut m_field, &rho_next)?;
                *m = m_field.data;
            }
            rho_cur = rho_next;
        }
        rho.data = rho_cur.data;
        for (t, m) in tracers.iter_mut().zip(m_cur) {
            t.data = m;
        }
        Ok(())
    }

    /// Relative residual of the weighted extraction system
    /// `M_rho m = Q`; the coupled stepper's per-stage extraction leaves this
    /// at roundoff because the solve is direct.
    pub fn extraction_residual(&self, rho: &Field, m: &Field, qvec: &[f64]) -> Result<f64> {
        let applied = weighted_mass_apply(&self.space, rho, &m.data, self.n_q_cell)?;
        let num: f64 = applied
            .iter()
            .zip(qvec)
            .map(|(a, q)| (a - q) * (a - q))
            .sum::<f64>()
            .sqrt();
        let den: f64 = qvec.iter().map(|q| q * q).sum::<f64>().sqrt();
        Ok(if den == 0.0 { num } else { num / den })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_slice_mesh;
    use crate::space::{make_space, SpaceSpec};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const LX: f64 = 2000.0;
    const HZ: f64 = 2000.0;

    /// Closed test flow on the slice: zero wall-normal velocity, nonzero
    /// divergence, analytic formulas.
    struct DivergentFlow;
    impl FlowField for DivergentFlow {
        fn velocity(&self, p: Vec3, _t: f64) -> Vec3 {
            let (x, z) = (p[0], p[1]);
            let u = 1.0 + 0.3 * (2.0 * std::f64::consts::PI * x / LX).sin()
                * (std::f64::consts::PI * z / HZ).cos();
            let w = 0.2 * (2.0 * std::f64::consts::PI * x / LX).cos()
                * (std::f64::consts::PI * z / HZ).sin();
            [u, w, 0.0]
        }
        fn divergence(&self, p: Vec3, _t: f64) -> f64 {
            let (x, z) = (p[0], p[1]);
            let k = 2.0 * std::f64::consts::PI / LX;
            let l = std::f64::consts::PI / HZ;
            0.3 * k * (k * x).cos() * (l * z).cos() + 0.2 * l * (k * x).cos() * (l * z).cos()
        }
    }

    /// Uniform horizontal flow: every quadrature in the weak forms is exact,
    /// so structural identities hold to roundoff.
    struct UniformFlow;
    impl FlowField for UniformFlow {
        fn velocity(&self, _p: Vec3, _t: f64) -> Vec3 {
            [1.5, 0.0, 0.0]
        }
        fn divergence(&self, _p: Vec3, _t: f64) -> f64 {
            0.0
        }
    }

    /// Divergence-free polynomial shear flow `u = (U(z), 0)` with quadratic
    /// `U`; all transport integrands stay within exact quadrature degree.
    struct ShearFlow;
    impl FlowField for ShearFlow {
        fn velocity(&self, p: Vec3, _t: f64) -> Vec3 {
            let z = p[1];
            [1.0 + 2.0 * z * (HZ - z) / (HZ * HZ), 0.0, 0.0]
        }
        fn divergence(&self, _p: Vec3, _t: f64) -> f64 {
            0.0
        }
    }

    /// Divergence-free closed test flow (streamfunction based).
    struct SolenoidalFlow;
    impl FlowField for SolenoidalFlow {
        fn velocity(&self, p: Vec3, _t: f64) -> Vec3 {
            let k = 2.0 * std::f64::consts::PI / LX;
            let l = std::f64::consts::PI / HZ;
            // psi = sin(kx) sin(lz): u = dpsi/dz, w = -dpsi/dx.
            [
                l * (k * p[0]).sin() * (l * p[1]).cos(),
                -k * (k * p[0]).cos() * (l * p[1]).sin(),
                0.0,
            ]
        }
        fn divergence(&self, _p: Vec3, _t: f64) -> f64 {
            0.0
        }
    }

    fn op(nx: usize, nz: usize, order: usize) -> (Arc<crate::mesh::Mesh>, TransportOperator) {
        let mesh = Arc::new(build_slice_mesh(nx, nz, LX, HZ).unwrap());
        let space = make_space(&mesh, SpaceSpec::density(order)).unwrap();
        let t = TransportOperator::new(&space).unwrap();
        (mesh, t)
    }

    #[test]
    fn upwind_picks_sides_and_keeps_constants() {
        assert_eq!(upwind(1.0, 3.0, 7.0), 3.0);
        assert_eq!(upwind(-1.0, 3.0, 7.0), 7.0);
        assert_eq!(upwind(0.0, 3.0, 7.0), 3.0);
        assert_eq!(upwind(-2.5, 4.0, 4.0), 4.0);
    }

    #[test]
    fn ssprk3_ode_value_is_pinned() {
        // q' = -q, dt = 0.1: one step gives the cubic Taylor value.
        let out = ssprk3_step(
            &[1.0],
            0.0,
            0.1,
            |q, _| Ok(vec![-q[0]]),
            |_, _| Ok(()),
        )
        .unwrap();
        assert_abs_diff_eq!(out[0], 0.904_833_333_333_333_3, epsilon = 1e-9);
    }

    #[test]
    fn ssprk3_stage_times_integrate_quadratics_exactly() {
        // q' = 3 t^2 depends on time only; a third-order scheme with correct
        // stage times reproduces q(dt) = dt^3 exactly.
        let dt = 0.37;
        let out = ssprk3_step(
            &[0.0],
            0.0,
            dt,
            |_, tau| Ok(vec![3.0 * tau * tau]),
            |_, _| Ok(()),
        )
        .unwrap();
        assert_abs_diff_eq!(out[0], dt * dt * dt, epsilon = 1e-14);
    }

    #[test]
    fn ssprk3_linear_step_is_cubic_matrix_polynomial() {
        // For q' = A q the step equals (I + A + A^2/2 + A^3/6) q with dt
        // folded into A. Random 5x5 system, fixed seed.
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 5;
        let a: Vec<f64> = (0..n * n).map(|_| rng.gen_range(-0.2..0.2)).collect();
        let q0: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let matvec = |m: &[f64], v: &[f64]| -> Vec<f64> {
            (0..n)
                .map(|i| (0..n).map(|j| m[i * n + j] * v[j]).sum())
                .collect()
        };
        let stepped = ssprk3_step(
            &q0,
            0.0,
            1.0,
            |q, _| Ok(matvec(&a, q)),
            |_, _| Ok(()),
        )
        .unwrap();
        let a1 = matvec(&a, &q0);
        let a2 = matvec(&a, &a1);
        let a3 = matvec(&a, &a2);
        for i in 0..n {
            let expect = q0[i] + a1[i] + a2[i] / 2.0 + a3[i] / 6.0;
            assert_abs_diff_eq!(stepped[i], expect, epsilon = 1e-13);
        }
    }

    #[test]
    fn conservative_weak_rhs_sums_to_zero() {
        // Summing F over all dofs telescopes facet fluxes and kills volume
        // terms by partition of unity: total mass rate is roundoff.
        let (_, top) = op(6, 5, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let q: Vec<f64> = (0..top.space.n_dofs).map(|_| rng.gen_range(0.5..1.5)).collect();
        let f = top.conservative_weak_rhs(&q, &DivergentFlow, 0.3);
        let total: f64 = f.iter().sum();
        // Scale: typical |F_i| entries.
        let scale: f64 = f.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1.0);
        assert!(
            total.abs() < 1e-12 * scale * top.space.n_dofs as f64,
            "mass rate {total:.3e} vs scale {scale:.3e}"
        );
    }

    #[test]
    fn advective_form_annihilates_constants() {
        for order in [0, 1] {
            let (_, top) = op(8, 8, order);
            let c = vec![0.02; top.space.n_dofs];
            let mut f = top.advective_weak_rhs(&c, &DivergentFlow, 0.1);
            top.apply_inverse_mass(&mut f);
            let max = f.iter().map(|v| v.abs()).fold(0.0, f64::max);
            assert!(max < 1e-13, "constant tendency {max:.3e} at order {order}");
        }
    }

    #[test]
    fn conservative_form_keeps_constants_in_solenoidal_flow() {
        let (_, top) = op(8, 8, 1);
        let c = vec![1.3; top.space.n_dofs];
        let mut f = top.conservative_weak_rhs(&c, &SolenoidalFlow, 0.0);
        top.apply_inverse_mass(&mut f);
        let max = f.iter().map(|v| v.abs()).fold(0.0, f64::max);
        assert!(max < 1e-13, "constant tendency {max:.3e}");
    }

    #[test]
    fn conservative_step_conserves_integral() {
        let (mesh, top) = op(6, 6, 1);
        let space = &top.space;
        let mut q = Field::interpolate(space, |p| {
            1.0 + 0.5 * (2.0 * std::f64::consts::PI * p[0] / LX).sin()
                + 2e-4 * p[1]
        })
        .unwrap();
        let before = q.integrate(None).unwrap();
        let mut t = 0.0;
        for _ in 0..20 {
            top.step_conservative(&mut q, &DivergentFlow, t, 5.0, |_| Ok(())).unwrap();
            t += 5.0;
        }
        let after = q.integrate(None).unwrap();
        assert_abs_diff_eq!(after, before, epsilon = 1e-11 * before.abs());
        assert!(mesh.n_cells() > 0);
    }

    #[test]
    fn coupled_step_conserves_tracer_mass_and_constants() {
        let (_, top) = op(6, 6, 1);
        let space = &top.space;
        let mut rho = Field::interpolate(space, |p| {
            1.0 + 0.4 * (2.0 * std::f64::consts::PI * p[0] / LX).cos()
                * (std::f64::consts::PI * p[1] / HZ).sin()
        })
        .unwrap();
        let m_bump = Field::interpolate(space, |p| {
            0.02 + 0.01 * (2.0 * std::f64::consts::PI * p[0] / LX).sin()
        })
        .unwrap();
        let m_const = Field::interpolate(space, |_| 0.02).unwrap();
        let mut tracers = vec![m_bump, m_const];
        let mass_before = tracers[0].integrate_product(&rho, None).unwrap();
        let rho_before = rho.integrate(None).unwrap();
        let mut t = 0.0;
        let dt = 4.0;
        for _ in 0..25 {
            top.step_coupled(&mut rho, &mut tracers, &DivergentFlow, t, dt, |_, _, _| Ok(()))
                .unwrap();
            t += dt;
        }
        let mass_after = tracers[0].integrate_product(&rho, None).unwrap();
        let rho_after = rho.integrate(None).unwrap();
        assert_abs_diff_eq!(mass_after, mass_before, epsilon = 1e-12 * mass_before.abs());
        assert_abs_diff_eq!(rho_after, rho_before, epsilon = 1e-12 * rho_before.abs());
        // The constant tracer stays constant through 25 coupled steps.
        for v in &tracers[1].data {
            assert_abs_diff_eq!(*v, 0.02, epsilon = 1e-13);
        }
    }

    #[test]
    fn coupled_reduces_to_conservative_with_unit_density() {
        // Uniform flow keeps rho = 1 to roundoff (all quadratures exact), so
        // the coupled tracer must follow the plain conservative evolution.
        let (_, top) = op(5, 5, 1);
        let space = &top.space;
        let init = |p: Vec3| 1.0 + 0.3 * (2.0 * std::f64::consts::PI * p[0] / LX).sin();
        let mut rho = Field::interpolate(space, |_| 1.0).unwrap();
        let mut tracers = vec![Field::interpolate(space, init).unwrap()];
        let mut q = Field::interpolate(space, init).unwrap();
        let mut t = 0.0;
        let dt = 3.0;
        for _ in 0..10 {
            top.step_coupled(&mut rho, &mut tracers, &UniformFlow, t, dt, |_, _, _| Ok(()))
                .unwrap();
            top.step_conservative(&mut q, &UniformFlow, t, dt, |_| Ok(())).unwrap();
            t += dt;
        }
        let diff = tracers[0]
            .data
            .iter()
            .zip(&q.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(diff < 1e-11, "coupled vs conservative max diff {diff:.3e}");
    }

    #[test]
    fn advective_matches_conservative_for_divergence_free_flow() {
        // With div u = 0 the two forms are related by one exact integration
        // by parts; for a polynomial velocity every quadrature is exact, so
        // the assembled tendencies agree to roundoff.
        for order in [0, 1] {
            let (_, top) = op(6, 5, order);
            let space = &top.space;
            let q = Field::interpolate(space, |p| {
                1.0 + 0.4 * (2.0 * std::f64::consts::PI * p[0] / LX).sin()
                    + 3e-4 * p[1]
            })
            .unwrap();
            let mut fa = top.advective_weak_rhs(&q.data, &ShearFlow, 0.0);
            let mut fc = top.conservative_weak_rhs(&q.data, &ShearFlow, 0.0);
            top.apply_inverse_mass(&mut fa);
            top.apply_inverse_mass(&mut fc);
            let scale = fc.iter().map(|v| v.abs()).fold(0.0, f64::max);
            let diff = fa
                .iter()
                .zip(&fc)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(
                diff < 1e-11 * scale.max(1e-3),
                "order {order}: tendency mismatch {diff:.3e} vs scale {scale:.3e}"
            );
        }
    }

    #[test]
    fn extraction_matches_nodal_division_for_cellwise_constant_density() {
        // With a density constant on each cell the weighted mass is the
        // plain mass scaled per cell, so extraction equals nodal division.
        let (mesh, top) = op(4, 4, 1);
        let space = &top.space;
        let s0 = make_space(&mesh, SpaceSpec::density(0)).unwrap();
        let rho0 = Field::interpolate(&s0, |p| 1.0 + 0.2 * (p[0] / LX)).unwrap();
        let rho = crate::remap::inject(&rho0, space).unwrap();
        let m = Field::interpolate(space, |p| 0.02 + 1e-5 * p[1]).unwrap();
        let qvec = weighted_mass_apply(space, &rho, &m.data, top.n_q_cell).unwrap();
        let extracted = top.solve_weighted_mass(&rho, &qvec).unwrap();
        // Residual of the weighted system is at roundoff.
        let mfield = Field { space: Arc::clone(space), data: extracted.clone() };
        let res = top.extraction_residual(&rho, &mfield, &qvec).unwrap();
        assert!(res < 1e-12, "extraction residual {res:.3e}");
        // And equals q-solved-unweighted divided by the cell density.
        let mut plain = qvec.clone();
        top.apply_inverse_mass(&mut plain);
        for cell in 0..mesh.n_cells() {
            let rc = rho0.data[s0.cell_dofs(cell)[0]];
            for &d in space.cell_dofs(cell) {
                assert_abs_diff_eq!(extracted[d], plain[d] / rc, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn stage_hook_runs_three_times_per_step() {
        let (_, top) = op(3, 3, 0);
        let space = &top.space;
        let mut rho = Field::interpolate(space, |_| 1.0).unwrap();
        let mut tracers = vec![Field::interpolate(space, |_| 0.5).unwrap()];
        let mut calls = 0;
        top.step_coupled(&mut rho, &mut tracers, &SolenoidalFlow, 0.0, 1.0, |_, _, _| {
            calls += 1;
            Ok(())
        })
        .unwrap();
        assert_eq!(calls, 3);
    }

    #[test]
    fn transport_rejects_continuous_spaces() {
        let mesh = Arc::new(build_slice_mesh(3, 3, LX, HZ).unwrap());
        let s = make_space(&mesh, SpaceSpec::staggered_tracer(0)).unwrap();
        assert!(TransportOperator::new(&s).is_err());
    }
}
