//! Mapping operators between function spaces on a shared mesh.
//!
//! Plain operators:
//! - [`galerkin_project`]: L2-orthogonal projection;
//! - [`recover_average`]: nodal averaging of incident-cell evaluations into a
//!   (typically continuous) space;
//! - [`inject`]: nodal evaluation into a fully discontinuous space;
//! - [`recovery`]: higher-order embedding `inject(avg) + inject(src -
//!   project(avg))`, which preserves integrals and constants.
//!
//! Density-weighted operators for mixing ratios, where conservation means
//! preserving `integral(rho * m)` under a change of companion density:
//! - [`conservative_project`] / [`consistent_conservative_project`];
//! - [`conservative_inject`] / [`consistent_conservative_inject`];
//! - [`conservative_recovery`].
//!
//! The `consistent_*` variants subtract the global mean of `m` before the
//! weighted solve and add it back after, so exactly constant mixing ratios
//! map to the same constant to machine precision; they conserve
//! `integral(rho * m)` exactly when source and target densities have equal
//! integrals (the orchestration guarantees this).
//!
//! Solver policy: mass systems of fully discontinuous targets are solved
//! per cell by dense Cholesky (exact). Targets with a continuous direction
//! assemble a global system solved by symmetric-Gauss-Seidel-preconditioned
//! CG at [`SolverPolicy::rtol`].
//! Operators promising exact conservation additionally run one iterative-
//! refinement pass, driving the residual to roundoff; plain projections do
//! not, and carry tolerance-level noise by design.

use crate::error::{Error, Result};
use crate::field::{weighted_cell_mass_matrices, Field};
use crate::linalg::{cg_sgs, CsrMatrix, DenseChol};
use crate::space::{same_space, FunctionSpace, SpaceSpec};
use crate::space::Family;
use serde::Serialize;
use std::sync::Arc;

/// Relative threshold (times the domain-mean density) below which nodal
/// division by the density is refused.
pub const DEFAULT_DENSITY_GUARD_REL: f64 = 1e-12;

/// Iterative-solver settings for global (continuous-target) mass systems.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SolverPolicy {
    /// Relative residual tolerance of the CG solve.
    pub rtol: f64,
    /// Iteration cap as `max_iter = max_iter_floor + 10 * n`.
    pub max_iter_floor: usize,
}

impl Default for SolverPolicy {
    fn default() -> Self {
        // Matches common PDE-framework iterative defaults; deliberately far
        // from machine precision. Conservation-contract operators refine.
        Self { rtol: 1e-8, max_iter_floor: 100 }
    }
}

impl SolverPolicy {
    pub fn tight() -> Self {
        Self { rtol: 1e-13, max_iter_floor: 100 }
    }

    fn max_iter(&self, n: usize) -> usize {
        self.max_iter_floor + 10 * n
    }
}

fn ensure_same_mesh(fields: &[&Field], target: &FunctionSpace, op: &str) -> Result<()> {
    for f in fields {
        if !Arc::ptr_eq(f.mesh(), &target.mesh) {
            return Err(Error::Mismatch(format!("{op}: operand meshes differ")));
        }
    }
    Ok(())
}

/// Right-hand side `rhs_i = integral((weight) * (src - shift) * phi_i)` on
/// the target space, with unit weight when `weight` is `None`.
fn projection_rhs(
    target: &FunctionSpace,
    src: &Field,
    weight: Option<&Field>,
    shift: f64,
    n_q: usize,
) -> Result<Vec<f64>> {
    let pts = FunctionSpace::quad_ref_points(n_q);
    let ttab = target.basis_at(&pts);
    let stab = src.space.basis_at(&pts);
    let wtab = weight.map(|w| w.space.basis_at(&pts));
    let mut rhs = vec![0.0; target.n_dofs];
    for cell in 0..target.mesh.n_cells() {
        let tdofs = target.cell_dofs(cell);
        let sdofs = src.space.cell_dofs(cell);
        for (q, qp) in target.mesh.cell_quadrature(cell, n_q)?.iter().enumerate() {
            let sval: f64 =
                (0..src.space.nloc).map(|l| src.data[sdofs[l]] * stab.value(q, l)).sum();
            let wval = match (&wtab, weight) {
                (Some(wt), Some(w)) => {
                    let wdofs = w.space.cell_dofs(cell);
                    (0..w.space.nloc).map(|l| w.data[wdofs[l]] * wt.value(q, l)).sum()
                }
                _ => 1.0,
            };
            let scale = qp.weight * wval * (sval - shift);
            for a in 0..target.nloc {
                rhs[tdofs[a]] += scale * ttab.value(q, a);
            }
        }
    }
    Ok(rhs)
}

/// Solves the (optionally weighted) mass system of `space` for the given
/// right-hand side. Fully discontinuous spaces use exact per-cell Cholesky;
/// others use SGS-preconditioned CG, with one iterative-refinement pass when
/// `refine`.
fn solve_mass(
    space: &Arc<FunctionSpace>,
    weight: Option<&Field>,
    rhs: &[f64],
    n_q: usize,
    policy: &SolverPolicy,
    refine: bool,
) -> Result<Vec<f64>> {
    if space.fully_discontinuous() {
        let mut x = rhs.to_vec();
        match weight {
            None if n_q == space.n_q_default() => {
                let factors = space.mass_factors();
                for cell in 0..space.mesh.n_cells() {
                    let dofs = space.cell_dofs(cell);
                    let mut local: Vec<f64> = dofs.iter().map(|&d| x[d]).collect();
                    factors[cell].solve_in_place(&mut local);
                    for (l, &d) in dofs.iter().enumerate() {
                        x[d] = local[l];
                    }
                }
            }
            _ => {
                let mats = match weight {
                    Some(w) => weighted_cell_mass_matrices(space, w, n_q)?,
                    None => space.cell_mass_matrices(n_q)?,
                };
                for (cell, m) in mats.iter().enumerate() {
                    let dofs = space.cell_dofs(cell);
                    let chol = DenseChol::factor(m, space.nloc).map_err(|e| {
                        Error::Solver(format!("cell {cell} mass factorisation: {e}"))
                    })?;
                    let mut local: Vec<f64> = dofs.iter().map(|&d| x[d]).collect();
                    chol.solve_in_place(&mut local);
                    for (l, &d) in dofs.iter().enumerate() {
                        x[d] = local[l];
                    }
                }
            }
        }
        Ok(x)
    } else {
        let csr = match weight {
            Some(w) => weighted_csr(space, w, n_q)?,
            None => space.mass_csr(n_q)?,
        };
        let max_iter = policy.max_iter(space.n_dofs);
        let out = cg_sgs(&csr, rhs, policy.rtol, max_iter)?;
        let mut x = out.x;
        if refine {
            let mut r = vec![0.0; space.n_dofs];
            csr.matvec(&x, &mut r);
            for i in 0..space.n_dofs {
                r[i] = rhs[i] - r[i];
            }
            let corr = cg_sgs(&csr, &r, policy.rtol, max_iter)?;
            for i in 0..space.n_dofs {
                x[i] += corr.x[i];
            }
        }
        Ok(x)
    }
}

fn weighted_csr(space: &FunctionSpace, weight: &Field, n_q: usize) -> Result<CsrMatrix> {
    let mats = weighted_cell_mass_matrices(space, weight, n_q)?;
    let nloc = space.nloc;
    let mut triplets = Vec::with_capacity(mats.len() * nloc * nloc);
    for (cell, m) in mats.iter().enumerate() {
        let dofs = space.cell_dofs(cell);
        for a in 0..nloc {
            for b in 0..nloc {
                triplets.push((dofs[a], dofs[b], m[a * nloc + b]));
            }
        }
    }
    Ok(CsrMatrix::from_triplets(space.n_dofs, &triplets))
}

fn joint_n_q(spaces: &[&FunctionSpace]) -> usize {
    spaces.iter().map(|s| s.n_q_default()).max().unwrap_or(4)
}

/// L2 Galerkin projection of `src` onto `target`.
pub fn galerkin_project(
    src: &Field,
    target: &Arc<FunctionSpace>,
    policy: &SolverPolicy,
) -> Result<Field> {
    ensure_same_mesh(&[src], target, "galerkin_project")?;
    let n_q = joint_n_q(&[&src.space, target]);
    let rhs = projection_rhs(target, src, None, 0.0, n_q)?;
    let data = solve_mass(target, None, &rhs, n_q, policy, false)?;
    Ok(Field { space: Arc::clone(target), data })
}

/// Density-weighted projection: finds `out` in `target` with
/// `integral(psi * rho_tgt * out) = integral(psi * rho_src * m)` for all
/// test functions `psi` in `target`. Conserves `integral(rho * m)` exactly
/// (to solver residual) since the constant 1 is in every target space.
pub fn conservative_project(
    m: &Field,
    rho_src: &Field,
    rho_tgt: &Field,
    target: &Arc<FunctionSpace>,
    policy: &SolverPolicy,
) -> Result<Field> {
    ensure_same_mesh(&[m, rho_src, rho_tgt], target, "conservative_project")?;
    let n_q = joint_n_q(&[&m.space, &rho_src.space, &rho_tgt.space, target]);
    let rhs = projection_rhs(target, m, Some(rho_src), 0.0, n_q)?;
    let data = solve_mass(target, Some(rho_tgt), &rhs, n_q, policy, true)?;
    Ok(Field { space: Arc::clone(target), data })
}

/// [`conservative_project`] with the global-mean shift: solves the weighted
/// system for `m - mean(m)` and adds the mean back, so constants are exact.
pub fn consistent_conservative_project(
    m: &Field,
    rho_src: &Field,
    rho_tgt: &Field,
    target: &Arc<FunctionSpace>,
    policy: &SolverPolicy,
) -> Result<Field> {
    ensure_same_mesh(&[m, rho_src, rho_tgt], target, "consistent_conservative_project")?;
    let n_q = joint_n_q(&[&m.space, &rho_src.space, &rho_tgt.space, target]);
    let mean = m.global_mean()?;
    let rhs = projection_rhs(target, m, Some(rho_src), mean, n_q)?;
    let mut data = solve_mass(target, Some(rho_tgt), &rhs, n_q, policy, true)?;
    for v in &mut data {
        *v += mean;
    }
    Ok(Field { space: Arc::clone(target), data })
}

/// Averaging-based recovery: each target node takes the arithmetic mean of
/// the evaluations of `src` from all cells incident to that node.
///
/// On slice meshes with a vertically-continuous target and a source whose
/// vertical part is discontinuous degree 0, wall rows are corrected by
/// linear extrapolation from the two nearest interior rows (requires
/// `nz >= 3`); interior averaging alone is biased at the walls because such
/// sources have no nodes there.
pub fn recover_average(src: &Field, target: &Arc<FunctionSpace>) -> Result<Field> {
    ensure_same_mesh(&[src], target, "recover_average")?;
    let mut sums = vec![0.0; target.n_dofs];
    let mut counts = vec![0u32; target.n_dofs];
    for cell in 0..target.mesh.n_cells() {
        let tdofs = target.cell_dofs(cell);
        for l in 0..target.nloc {
            let (xi, eta) = target.node_ref(l);
            sums[tdofs[l]] += src.evaluate(cell, xi, eta);
            counts[tdofs[l]] += 1;
        }
    }
    let mut data: Vec<f64> = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| s / f64::from(c.max(1)))
        .collect();

    let needs_wall_fix = target.mesh.slice.is_some()
        && target.spec.vertical.family == Family::Continuous
        && src.spec().vertical.family == Family::Discontinuous
        && src.spec().vertical.degree == 0;
    if needs_wall_fix {
        let (ax, az) = target.axes.as_ref().expect("slice space without axes");
        let zn = az.ndof;
        if target.mesh.slice.expect("slice mesh").nz < 3 {
            return Err(Error::InvalidMesh(
                "recovery wall extrapolation needs nz >= 3 to reach two interior rows".into(),
            ));
        }
        for xd in 0..ax.ndof {
            let d = |zd: usize| xd * zn + zd;
            data[d(0)] = 2.0 * data[d(1)] - data[d(2)];
            data[d(zn - 1)] = 2.0 * data[d(zn - 2)] - data[d(zn - 3)];
        }
    }
    Ok(Field { space: Arc::clone(target), data })
}

/// Nodal injection: evaluates `src` at every target node. The target must be
/// fully discontinuous so each node belongs to exactly one cell and the
/// evaluation is local.
pub fn inject(src: &Field, target: &Arc<FunctionSpace>) -> Result<Field> {
    ensure_same_mesh(&[src], target, "inject")?;
    if !target.fully_discontinuous() {
        return Err(Error::UnsupportedSpace(
            "injection target must be fully discontinuous; nodes shared between cells \
             would receive conflicting one-sided values"
                .into(),
        ));
    }
    let mut out = Field::zeros(target);
    for cell in 0..target.mesh.n_cells() {
        let tdofs = target.cell_dofs(cell);
        for l in 0..target.nloc {
            let (xi, eta) = target.node_ref(l);
            out.data[tdofs[l]] = src.evaluate(cell, xi, eta);
        }
    }
    Ok(out)
}

/// Density-weighted injection: per-cell solves of
/// `integral_cell(psi * rho_tgt * out) = integral_cell(psi * rho_src * m)`,
/// conserving the cellwise weighted integral exactly.
pub fn conservative_inject(
    m: &Field,
    rho_src: &Field,
    rho_tgt: &Field,
    target: &Arc<FunctionSpace>,
) -> Result<Field> {
    conservative_inject_impl(m, rho_src, rho_tgt, target, 0.0)
}

/// [`conservative_inject`] with the global-mean shift, exact on constants.
pub fn consistent_conservative_inject(
    m: &Field,
    rho_src: &Field,
    rho_tgt: &Field,
    target: &Arc<FunctionSpace>,
) -> Result<Field> {
    let mean = m.global_mean()?;
    conservative_inject_impl(m, rho_src, rho_tgt, target, mean)
}

fn conservative_inject_impl(
    m: &Field,
    rho_src: &Field,
    rho_tgt: &Field,
    target: &Arc<FunctionSpace>,
    shift: f64,
) -> Result<Field> {
    ensure_same_mesh(&[m, rho_src, rho_tgt], target, "conservative_inject")?;
    if !target.fully_discontinuous() {
        return Err(Error::UnsupportedSpace(
            "conservative injection target must be fully discontinuous".into(),
        ));
    }
    let n_q = joint_n_q(&[&m.space, &rho_src.space, &rho_tgt.space, target]);
    let rhs = projection_rhs(target, m, Some(rho_src), shift, n_q)?;
    // Per-cell weighted solves; `solve_mass` takes the block path for fully
    // discontinuous targets.
    let policy = SolverPolicy::default();
    let mut data = solve_mass(target, Some(rho_tgt), &rhs, n_q, &policy, false)?;
    if shift != 0.0 {
        for v in &mut data {
            *v += shift;
        }
    }
    Ok(Field { space: Arc::clone(target), data })
}

/// The continuous intermediate space used by the recovery operators:
/// bilinear, continuous in every direction the mesh connects.
pub fn recovery_intermediate_space(
    mesh: &Arc<crate::mesh::Mesh>,
) -> Result<Arc<FunctionSpace>> {
    crate::space::make_space(mesh, SpaceSpec::continuous_linear())
}

/// Higher-order recovery into a fully discontinuous `target`:
/// `inject(avg) + inject(src - project(avg))`, where `avg` is the averaging
/// recovery into the continuous intermediate space and the projection goes
/// back to the source space. Preserves integrals and maps constants to
/// constants exactly.
pub fn recovery(src: &Field, target: &Arc<FunctionSpace>, policy: &SolverPolicy) -> Result<Field> {
    let tilde = recovery_intermediate_space(&target.mesh)?;
    recovery_with(src, target, &tilde, policy)
}

/// [`recovery`] with a caller-provided intermediate space (avoids rebuilding
/// it every step inside time loops).
pub fn recovery_with(
    src: &Field,
    target: &Arc<FunctionSpace>,
    tilde: &Arc<FunctionSpace>,
    policy: &SolverPolicy,
) -> Result<Field> {
    ensure_same_mesh(&[src], target, "recovery")?;
    let avg = recover_average(src, tilde)?;
    let term1 = inject(&avg, target)?;
    let p = galerkin_project(&avg, &src.space, policy)?;
    let mut residual = src.clone();
    for (r, pv) in residual.data.iter_mut().zip(&p.data) {
        *r -= pv;
    }
    let term2 = inject(&residual, target)?;
    let mut out = term1;
    for (o, t) in out.data.iter_mut().zip(&term2.data) {
        *o += t;
    }
    Ok(out)
}

/// Density-weighted recovery for mixing ratios. With companion densities of
/// equal integral (`rho_rec` produced by [`recovery`] from `rho_orig`), the
/// output satisfies `integral(rho_rec * out) = integral(rho_orig * m)`
/// exactly and maps constant `m` to the same constant.
///
/// Internals use the consistent variants throughout: term 1 injects the
/// averaged `m` weighted by the averaged density; the companion projection
/// returns it to the source space weighted back to `rho_orig`; term 2
/// injects the remainder weighted by `rho_orig` directly. The global-mean
/// terms of the three consistent operators cancel in the conservation
/// budget.
pub fn conservative_recovery(
    m: &Field,
    rho_orig: &Field,
    rho_rec: &Field,
    target: &Arc<FunctionSpace>,
    policy: &SolverPolicy,
) -> Result<Field> {
    let tilde = recovery_intermediate_space(&target.mesh)?;
    conservative_recovery_with(m, rho_orig, rho_rec, target, &tilde, policy)
}

/// [`conservative_recovery`] with a caller-provided intermediate space.
pub fn conservative_recovery_with(
    m: &Field,
    rho_orig: &Field,
    rho_rec: &Field,
    target: &Arc<FunctionSpace>,
    tilde: &Arc<FunctionSpace>,
    policy: &SolverPolicy,
) -> Result<Field> {
    ensure_same_mesh(&[m, rho_orig, rho_rec], target, "conservative_recovery")?;
    let rho_tilde = recover_average(rho_orig, tilde)?;
    let avg = recover_average(m, tilde)?;
    let term1 = consistent_conservative_inject(&avg, &rho_tilde, rho_rec, target)?;
    let p = consistent_conservative_project(&avg, &rho_tilde, rho_orig, &m.space, policy)?;
    let mut residual = m.clone();
    for (r, pv) in residual.data.iter_mut().zip(&p.data) {
        *r -= pv;
    }
    let term2 = consistent_conservative_inject(&residual, rho_orig, rho_rec, target)?;
    let mut out = term1;
    for (o, t) in out.data.iter_mut().zip(&term2.data) {
        *o += t;
    }
    Ok(out)
}

/// Nodal division `m_i = q_i / rho_i` for fields in the same space, guarded
/// against densities below `guard_rel` times the domain-mean density.
pub fn identify_mixing_ratio(q: &Field, rho: &Field, guard_rel: f64) -> Result<Field> {
    if !same_space(&q.space, &rho.space) {
        return Err(Error::Mismatch(
            "identify_mixing_ratio needs tracer density and density in the same space".into(),
        ));
    }
    let eps = guard_rel * rho.global_mean()?.abs();
    let mut out = Field::zeros(&q.space);
    for i in 0..q.data.len() {
        let r = rho.data[i];
        if r.abs() <= eps {
            return Err(Error::DensityGuard(format!(
                "density {r:.3e} at dof {i} is within {eps:.3e} of zero; \
                 nodal division would amplify noise"
            )));
        }
        out.data[i] = q.data[i] / r;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Field;
    use crate::mesh::{build_cubed_sphere_mesh, build_slice_mesh, Mesh};
    use crate::space::make_space;
    use approx::assert_abs_diff_eq;

    fn slice(nx: usize, nz: usize) -> Arc<Mesh> {
        Arc::new(build_slice_mesh(nx, nz, 2000.0, 2000.0).unwrap())
    }

    fn max_abs_diff(a: &Field, b: &Field) -> f64 {
        a.data
            .iter()
            .zip(&b.data)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn galerkin_projection_to_cell_means() {
        // Projecting onto degree 0 gives cell means; for a field linear in
        // z the mean is the mid-height value.
        let mesh = slice(3, 3);
        let s1 = make_space(&mesh, SpaceSpec::density(1)).unwrap();
        let s0 = make_space(&mesh, SpaceSpec::density(0)).unwrap();
        let f = Field::interpolate(&s1, |p| 3.0 * p[1] + 1.0).unwrap();
        let p = galerkin_project(&f, &s0, &SolverPolicy::default()).unwrap();
        for cell in 0..mesh.n_cells() {
            let mid = mesh.chart_point(cell, 0.0, 0.0);
            assert_abs_diff_eq!(p.data[s0.cell_dofs(cell)[0]], 3.0 * mid[1] + 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn galerkin_projection_is_idempotent_on_same_space() {
        let mesh = slice(3, 2);
        let s = make_space(&mesh, SpaceSpec::density(1)).unwrap();
        let f = Field::interpolate(&s, |p| (p[0] * 0.003).sin() + 0.2 * p[1]).unwrap();
        let p = galerkin_project(&f, &s, &SolverPolicy::default()).unwrap();
        assert!(max_abs_diff(&f, &p) < 1e-10);
    }

    #[test]
    fn galerkin_projection_to_continuous_target_reproduces_members() {
        // A field linear in z lies in the vertically continuous target, so
        // projection must return (a CG approximation of) itself.
        let mesh = slice(3, 4);
        let s1 = make_space(&mesh, SpaceSpec::density(1)).unwrap();
        let st = make_space(&mesh, SpaceSpec::staggered_tracer(0)).unwrap();
        let f = Field::interpolate(&s1, |p| 0.25 + 1e-3 * p[1]).unwrap();
        let p = galerkin_project(&f, &st, &SolverPolicy::tight()).unwrap();
        let expect = Field::interpolate(&st, |p| 0.25 + 1e-3 * p[1]).unwrap();
        assert!(max_abs_diff(&expect, &p) < 1e-9);
    }

    #[test]
    fn conservative_projection_conserves_weighted_integral() {
        let mesh = slice(4, 4);
        let s1 = make_space(&mesh, SpaceSpec::density(1)).unwrap();
        let s0 = make_space(&mesh, SpaceSpec::density(0)).unwrap();
        let m = Field::interpolate(&s1, |p| 0.02 + 1e-4 * (p[0] * 0.006).cos()).unwrap();
        let rho_src = Field::interpolate(&s1, |p| 1.0 + 0.4 * (p[1] * 0.004).sin()).unwrap();
        let rho_tgt = galerkin_project(&rho_src, &s0, &SolverPolicy::default()).unwrap();
        let before = m.integrate_product(&rho_src, Some(6)).unwrap();
        for variant in [true, false] {
            let out = if variant {
                consistent_conservative_project(&m, &rho_src, &rho_tgt, &s0, &SolverPolicy::default())
                    .unwrap()
            } else {
                conservative_project(&m, &rho_src, &rho_tgt, &s0, &SolverPolicy::default()).unwrap()
            };
            let after = out.integrate_product(&rho_tgt, Some(6)).unwrap();
            assert_abs_diff_eq!(after, before, epsilon = 1e-12 * before.abs());
        }
    }

    #[test]
    fn consistent_projection_is_exact_on_constants() {
        // Even with rough companion densities and a continuous target, a
        // constant mixing ratio must come back bitwise-near-exact.
        let mesh = slice(4, 4);
        let s1 = make_space(&mesh, SpaceSpec::density(1)).unwrap();
        let st = make_space(&mesh, SpaceSpec::staggered_tracer(1)).unwrap();
        let m = Field::interpolate(&s1, |_| 0.02).unwrap();
        let rho_src = Field::interpolate(&s1, |p| 1.0 + 0.5 * (p[0] * 0.003).sin()).unwrap();
        let rho_tgt = Field::interpolate(&st, |p| 1.0 + 0.2 * (p[1] * 0.002).cos()).unwrap();
        let out =
            consistent_conservative_project(&m, &rho_src, &rho_tgt, &st, &SolverPolicy::default())
                .unwrap();
        for v in &out.data {
            assert_abs_diff_eq!(*v, 0.02, epsilon = 1e-14);
        }
    }

    #[test]
    fn recovery_average_restores_linear_profiles() {
        // Cell means of a z-linear field recover the exact nodal values,
        // including at the walls via extrapolation.
        let mesh = slice(3, 4);
        let s0 = make_space(&mesh, SpaceSpec::density(0)).unwrap();
        let tilde = recovery_intermediate_space(&mesh).unwrap();
        let f = Field::interpolate(&s0, |p| 2.0 + 0.003 * p[1]).unwrap();
        let r = recover_average(&f, &tilde).unwrap();
        let expect = Field::interpolate(&tilde, |p| 2.0 + 0.003 * p[1]).unwrap();
        assert!(max_abs_diff(&expect, &r) < 1e-10);
    }

    #[test]
    fn recovery_average_requires_three_rows_for_wall_fix() {
        let mesh = slice(3, 2);
        let s0 = make_space(&mesh, SpaceSpec::density(0)).unwrap();
        let tilde = recovery_intermediate_space(&mesh).unwrap();
        let f = Field::interpolate(&s0, |_| 1.0).unwrap();
        assert!(recover_average(&f, &tilde).is_err());
    }

    #[test]
    fn injection_reproduces_contained_functions() {
        let mesh = slice(3, 3);
        let s0 = make_space(&mesh, SpaceSpec::density(0)).unwrap();
        let s1 = make_space(&mesh, SpaceSpec::density(1)).unwrap();
        let f = Field::interpolate(&s0, |p| (p[0] / 500.0).floor()).unwrap();
        let injected = inject(&f, &s1).unwrap();
        for cell in 0..mesh.n_cells() {
            let v0 = f.data[s0.cell_dofs(cell)[0]];
            for &d in s1.cell_dofs(cell) {
                assert_abs_diff_eq!(injected.data[d], v0, epsilon = 1e-14);
            }
        }
        // Continuous targets are rejected.
        let st = make_space(&mesh, SpaceSpec::staggered_tracer(0)).unwrap();
        assert!(inject(&f, &st).is_err());
    }

    #[test]
    fn conservative_injection_conserves_per_cell_and_reduces_to_injection() {
        let mesh = slice(3, 3);
        let s0 = make_space(&mesh, SpaceSpec::density(0)).unwrap();
        let s1 = make_space(&mesh, SpaceSpec::density(1)).unwrap();
        let m = Field::interpolate(&s0, |p| 0.01 + 1e-5 * p[0]).unwrap();
        let rho0 = Field::interpolate(&s0, |p| 1.0 + 2e-4 * p[1]).unwrap();
        let rho1 = inject(&rho0, &s1).unwrap();
        let out = conservative_inject(&m, &rho0, &rho1, &s1).unwrap();
        // Per-cell conservation of the weighted integral.
        for cell in 0..mesh.n_cells() {
            let qps = mesh.cell_quadrature(cell, 5).unwrap();
            let mut before = 0.0;
            let mut after = 0.0;
            for qp in &qps {
                before += qp.weight
                    * m.evaluate(cell, qp.xi, qp.eta)
                    * rho0.evaluate(cell, qp.xi, qp.eta);
                after += qp.weight
                    * out.evaluate(cell, qp.xi, qp.eta)
                    * rho1.evaluate(cell, qp.xi, qp.eta);
            }
            assert_abs_diff_eq!(after, before, epsilon = 1e-10 * before.abs());
        }
        // With the same density on both sides (cellwise constant), weighted
        // injection coincides with plain injection.
        let plain = inject(&m, &s1).unwrap();
        assert!(max_abs_diff(&plain, &out) < 1e-12);
    }

    #[test]
    fn recovery_preserves_constants_and_integrals() {
        for mesh in [slice(3, 4), Arc::new(build_cubed_sphere_mesh(3, 100.0).unwrap())] {
            let s0 = make_space(&mesh, SpaceSpec::density(0)).unwrap();
            let s1 = make_space(&mesh, SpaceSpec::density(1)).unwrap();
            let c = Field::interpolate(&s0, |_| 0.7).unwrap();
            let rc = recovery(&c, &s1, &SolverPolicy::tight()).unwrap();
            for v in &rc.data {
                assert_abs_diff_eq!(*v, 0.7, epsilon = 1e-11);
            }
            let bumpy = Field::interpolate(&s0, |p| 1.0 + 0.3 * (p[0] * 0.01).sin()).unwrap();
            let rb = recovery(&bumpy, &s1, &SolverPolicy::tight()).unwrap();
            let i0 = bumpy.integrate(Some(6)).unwrap();
            let i1 = rb.integrate(Some(6)).unwrap();
            assert_abs_diff_eq!(i1, i0, epsilon = 1e-11 * i0.abs());
        }
    }

    #[test]
    fn conservative_recovery_conserves_and_is_consistent() {
        let mesh = slice(4, 4);
        let s0 = make_space(&mesh, SpaceSpec::density(0)).unwrap();
        let stheta = make_space(&mesh, SpaceSpec::staggered_tracer(0)).unwrap();
        let s1 = make_space(&mesh, SpaceSpec::density(1)).unwrap();
        let policy = SolverPolicy::tight();
        let rho0 = Field::interpolate(&s0, |p| 1.0 + 3e-4 * p[1] + 0.1 * (p[0] * 0.004).sin())
            .unwrap();
        let rho_rec = recovery(&rho0, &s1, &policy).unwrap();

        // Constant mixing ratio passes through exactly.
        let c = Field::interpolate(&stheta, |_| 0.02).unwrap();
        let rc = conservative_recovery(&c, &rho0, &rho_rec, &s1, &policy).unwrap();
        for v in &rc.data {
            assert_abs_diff_eq!(*v, 0.02, epsilon = 1e-12);
        }

        // Varying mixing ratio conserves the weighted integral.
        let m = Field::interpolate(&stheta, |p| 0.02 + 1e-4 * (p[1] * 0.005).cos()).unwrap();
        let rm = conservative_recovery(&m, &rho0, &rho_rec, &s1, &policy).unwrap();
        let before = m.integrate_product(&rho0, Some(6)).unwrap();
        let after = rm.integrate_product(&rho_rec, Some(6)).unwrap();
        assert_abs_diff_eq!(after, before, epsilon = 1e-11 * before.abs());
    }

    #[test]
    fn nodal_division_matches_example_and_guards() {
        let mesh = slice(2, 2);
        let s = make_space(&mesh, SpaceSpec::density(1)).unwrap();
        let rho = Field::interpolate(&s, |_| 2.0).unwrap();
        let q = Field::interpolate(&s, |_| 0.04).unwrap();
        let m = identify_mixing_ratio(&q, &rho, DEFAULT_DENSITY_GUARD_REL).unwrap();
        for v in &m.data {
            assert_abs_diff_eq!(*v, 0.02, epsilon = 1e-15);
        }
        let mut tiny = rho.clone();
        tiny.data[3] = 1e-15;
        assert!(identify_mixing_ratio(&q, &tiny, DEFAULT_DENSITY_GUARD_REL).is_err());
    }

    #[test]
    fn mismatched_meshes_are_rejected() {
        let mesh_a = slice(2, 2);
        let mesh_b = slice(2, 2);
        let sa = make_space(&mesh_a, SpaceSpec::density(0)).unwrap();
        let sb = make_space(&mesh_b, SpaceSpec::density(0)).unwrap();
        let f = Field::interpolate(&sa, |_| 1.0).unwrap();
        assert!(galerkin_project(&f, &sb, &SolverPolicy::default()).is_err());
    }
}
