//! Positivity limiters for order-1 nodal tracer fields.
//!
//! The mean-mixing-ratio (MMR) limiter removes negative vertex values from a
//! co-located order-1 mixing ratio by blending each offending cell toward
//! its mass-equivalent cell-mean value `mbar` (the constant whose
//! density-weighted cell integral matches the input's), choosing the
//! smallest blend that zeroes the minimum vertex. The blend is a convex
//! combination, so per-cell `integral(rho m)` is preserved structurally and
//! cells with no negative vertices keep their coefficients bitwise.
//!
//! Cells whose weighted mean is itself negative cannot be fixed by blending
//! toward the mean; they are counted and left unlimited (or the call aborts,
//! by option) rather than silently clipped, because silent clipping would
//! create tracer mass.
//!
//! A simplified positive-definite vertex limiter is provided as a baseline
//! for advective-form runs: it rescales deviations from the arithmetic node
//! mean, preserving that mean (not the density-weighted mass).

use crate::error::{Error, Result};
use crate::field::Field;
use crate::space::{make_space, FunctionSpace, SpaceSpec};
use std::sync::Arc;

/// Counters reported by one MMR limiter application.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MmrOutcome {
    /// Cells blended with a nonzero coefficient.
    pub limited_cells: usize,
    /// Cells with negative weighted mean, left unlimited.
    pub unfixable_cells: usize,
}

/// Counters reported by one baseline limiter application.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BaselineOutcome {
    /// Cells rescaled toward their mean.
    pub limited_cells: usize,
    /// Cells with negative mean, set to zero.
    pub clipped_cells: usize,
}

fn require_order1_dg(space: &FunctionSpace, what: &str) -> Result<()> {
    let spec = space.spec;
    let ok = space.fully_discontinuous()
        && spec.horizontal.degree == 1
        && spec.vertical.degree == 1;
    if !ok {
        return Err(Error::UnsupportedSpace(format!(
            "{what} requires an order-1 fully discontinuous nodal space, got {spec:?}"
        )));
    }
    Ok(())
}

/// Cell-mean mixing ratio: the piecewise-constant field `mbar` solving
/// `integral_cell(rho (mbar - shift)) = integral_cell(rho (m - shift))`
/// with `shift` the domain mean of `m`. The shift makes constants exact
/// (bitwise) while leaving the defining mass property `integral_cell(rho
/// mbar) = integral_cell(rho m)` untouched.
pub fn mean_mixing_ratio(m: &Field, rho: &Field) -> Result<Field> {
    require_order1_dg(&m.space, "mean_mixing_ratio")?;
    if !crate::space::same_space(&m.space, &rho.space) {
        return Err(Error::Mismatch(
            "mean_mixing_ratio needs m and rho in the same space".into(),
        ));
    }
    let shift = m.global_mean()?;
    let mean_space = make_space(&m.space.mesh, SpaceSpec::density(0))?;
    let mut out = Field::zeros(&mean_space);
    let (masses, weights) = cell_weighted_integrals(m, rho, shift)?;
    let scale = weights.iter().map(|w| w.abs()).sum::<f64>() / weights.len() as f64;
    for cell in 0..m.space.mesh.n_cells() {
        if weights[cell].abs() <= 1e-13 * scale {
            return Err(Error::DensityGuard(format!(
                "cell {cell} has near-zero density integral {:.3e} (mean scale {:.3e}); \
                 the weighted mean is singular there",
                weights[cell], scale
            )));
        }
        out.data[mean_space.cell_dofs(cell)[0]] = shift + masses[cell] / weights[cell];
    }
    Ok(out)
}

/// Per-cell `(integral(rho (m - shift)), integral(rho))` with the joint
/// default quadrature of the two spaces.
fn cell_weighted_integrals(
    m: &Field,
    rho: &Field,
    shift: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let space = &m.space;
    let n_q = space.n_q_default().max(rho.space.n_q_default());
    let table = space.basis_at(&FunctionSpace::quad_ref_points(n_q));
    let rtable = rho.space.basis_at(&FunctionSpace::quad_ref_points(n_q));
    let ncells = space.mesh.n_cells();
    let mut masses = vec![0.0; ncells];
    let mut weights = vec![0.0; ncells];
    for cell in 0..ncells {
        let dofs = space.cell_dofs(cell);
        let rdofs = rho.space.cell_dofs(cell);
        for (q, qp) in space.mesh.cell_quadrature(cell, n_q)?.iter().enumerate() {
            let mv: f64 = (0..space.nloc).map(|l| m.data[dofs[l]] * table.value(q, l)).sum();
            let rv: f64 = (0..rho.space.nloc)
                .map(|l| rho.data[rdofs[l]] * rtable.value(q, l))
                .sum();
            masses[cell] += qp.weight * rv * (mv - shift);
            weights[cell] += qp.weight * rv;
        }
    }
    Ok((masses, weights))
}

/// Blending coefficient for one cell from its vertex values and weighted
/// mean. Returns `(lambda, fixable)`: `lambda = 0` when no vertex is
/// negative, otherwise `(-m_min)/(mbar - m_min)` clamped to `[0, 1]`;
/// `fixable = false` (with `lambda = 0`) when the mean itself is negative.
pub fn blending_coefficient(vertex_values: &[f64], mbar: f64) -> (f64, bool) {
    let m_min = vertex_values.iter().copied().fold(f64::INFINITY, f64::min);
    if m_min >= 0.0 {
        return (0.0, true);
    }
    if mbar < 0.0 {
        return (0.0, false);
    }
    let lambda = (-m_min) / (mbar - m_min);
    (lambda.clamp(0.0, 1.0), true)
}

/// Convex blend `m* = (1 - lambda) m + lambda mbar` per cell, with the
/// piecewise-constant `mbar` broadcast to the cell's nodes. Cells with
/// `lambda = 0` are left bitwise unchanged.
pub fn blend(m: &mut Field, mbar: &Field, lambda: &[f64]) -> Result<()> {
    let ncells = m.space.mesh.n_cells();
    if mbar.space.n_dofs != ncells || lambda.len() != ncells {
        return Err(Error::Mismatch(format!(
            "blend expects one mean and one coefficient per cell: got {} means, {} \
             coefficients for {} cells",
            mbar.space.n_dofs,
            lambda.len(),
            ncells
        )));
    }
    for cell in 0..ncells {
        let lam = lambda[cell];
        if lam == 0.0 {
            continue;
        }
        let mb = mbar.data[mbar.space.cell_dofs(cell)[0]];
        for &d in m.space.cell_dofs(cell) {
            m.data[d] = (1.0 - lam) * m.data[d] + lam * mb;
        }
    }
    Ok(())
}

/// Applies the MMR limiter in place: weighted cell means, per-cell blending
/// coefficients from vertex minima, convex blend. Intended as the per-stage
/// hook of the coupled transport stepper. With `abort_on_unfixable` a cell
/// whose weighted mean is negative raises an error instead of being counted.
pub fn apply_mmr_limiter(
    m: &mut Field,
    rho: &Field,
    abort_on_unfixable: bool,
) -> Result<MmrOutcome> {
    let mbar = mean_mixing_ratio(m, rho)?;
    let ncells = m.space.mesh.n_cells();
    let mut lambda = vec![0.0; ncells];
    let mut outcome = MmrOutcome::default();
    for cell in 0..ncells {
        let dofs = m.space.cell_dofs(cell);
        let verts: Vec<f64> = dofs.iter().map(|&d| m.data[d]).collect();
        let mb = mbar.data[mbar.space.cell_dofs(cell)[0]];
        let (lam, fixable) = blending_coefficient(&verts, mb);
        if !fixable {
            if abort_on_unfixable {
                return Err(Error::DensityGuard(format!(
                    "cell {cell} has negative weighted mean {mb:.6e}; blending cannot \
                     restore positivity"
                )));
            }
            outcome.unfixable_cells += 1;
            continue;
        }
        if lam > 0.0 {
            outcome.limited_cells += 1;
            lambda[cell] = lam;
        }
    }
    blend(m, &mbar, &lambda)?;
    Ok(outcome)
}

/// Baseline positive-definite vertex limiter: per cell, rescales node
/// deviations from the arithmetic node mean by the largest factor in
/// `[0, 1]` keeping every node non-negative. Preserves the node mean, not
/// the weighted mass; cells with negative mean are set to zero and counted.
pub fn positive_definite_vertex_limiter(m: &mut Field) -> Result<BaselineOutcome> {
    require_order1_dg(&m.space, "positive_definite_vertex_limiter")?;
    let mut outcome = BaselineOutcome::default();
    for cell in 0..m.space.mesh.n_cells() {
        let dofs = m.space.cell_dofs(cell);
        let vals: Vec<f64> = dofs.iter().map(|&d| m.data[d]).collect();
        let minv = vals.iter().copied().fold(f64::INFINITY, f64::min);
        if minv >= 0.0 {
            continue;
        }
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        if mean < 0.0 {
            outcome.clipped_cells += 1;
            for &d in dofs {
                m.data[d] = 0.0;
            }
            continue;
        }
        let s = (mean / (mean - minv)).clamp(0.0, 1.0);
        outcome.limited_cells += 1;
        for &d in dofs {
            m.data[d] = mean + s * (m.data[d] - mean);
        }
    }
    Ok(outcome)
}

/// Convenience: the mean space used by the limiter for a given tracer
/// space's mesh (one value per cell).
pub fn mean_space_of(space: &FunctionSpace) -> Result<Arc<FunctionSpace>> {
    make_space(&space.mesh, SpaceSpec::density(0))
}
