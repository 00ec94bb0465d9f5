//! Run diagnostics: cell-mean tracer density, conservation-drift series,
//! L2 errors against a reference field, and convergence-slope fits.
//!
//! The conserved functional tracked here is the quadrature integral of the
//! pointwise product density × mixing ratio, with both fields in their
//! prognostic spaces (which may differ on staggered meshes). Its per-cell
//! means define the lowest-order tracer-density field whose drift the
//! experiment CSVs report.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::field::Field;
use crate::geometry::NeumaierSum;
use crate::space::{make_space, FunctionSpace, SpaceSpec};

/// Cell-mean tracer density plus the global tracer integral it represents.
pub struct TracerDensity {
    /// Per-cell means in the lowest-order fully discontinuous space.
    pub cell_means: Field,
    /// Global integral of density × mixing ratio.
    pub total: f64,
}

/// Computes the cell-mean tracer density field: per cell, the mean of
/// ρ(x)·m(x) under quadrature, i.e. the lowest-order field ρ_X solving
/// ∫ψρ_X = ∫ψρm for every cell indicator ψ. Inputs may live in different
/// spaces on the same mesh (staggered placements).
pub fn tracer_density_cellwise(
    rho: &Field,
    m: &Field,
    n_q: Option<usize>,
) -> Result<TracerDensity> {
    if !Arc::ptr_eq(rho.mesh(), m.mesh()) {
        return Err(Error::Mismatch(
            "tracer_density_cellwise needs both fields on the same mesh".into(),
        ));
    }
    let mesh = rho.mesh();
    let n_q = n_q.unwrap_or_else(|| rho.space.n_q_default().max(m.space.n_q_default()));
    let pts = FunctionSpace::quad_ref_points(n_q);
    let tr = rho.space.basis_at(&pts);
    let tm = m.space.basis_at(&pts);
    let mean_space = make_space(mesh, SpaceSpec::density(0))?;
    let mut cell_means = Field::zeros(&mean_space);
    let mut total = NeumaierSum::new();
    for cell in 0..mesh.n_cells() {
        let dr = rho.space.cell_dofs(cell);
        let dm = m.space.cell_dofs(cell);
        let mut mass = NeumaierSum::new();
        let mut area = NeumaierSum::new();
        for (q, qp) in mesh.cell_quadrature(cell, n_q)?.iter().enumerate() {
            let vr: f64 = (0..rho.space.nloc).map(|l| rho.data[dr[l]] * tr.value(q, l)).sum();
            let vm: f64 = (0..m.space.nloc).map(|l| m.data[dm[l]] * tm.value(q, l)).sum();
            mass.add(qp.weight * vr * vm);
            area.add(qp.weight);
        }
        let mass = mass.value();
        cell_means.data[mean_space.cell_dofs(cell)[0]] = mass / area.value();
        total.add(mass);
    }
    Ok(TracerDensity { cell_means, total: total.value() })
}

/// Relative drift |current − initial| / |initial|; falls back to the
/// absolute difference when the initial value is zero.
pub fn relative_drift(current: f64, initial: f64) -> f64 {
    let diff = (current - initial).abs();
    if initial == 0.0 {
        diff
    } else {
        diff / initial.abs()
    }
}

/// L2 norm of the difference of two fields on the same mesh,
/// √∫(a − b)², evaluated under shared quadrature.
pub fn l2_error(a: &Field, b: &Field, n_q: Option<usize>) -> Result<f64> {
    if !Arc::ptr_eq(a.mesh(), b.mesh()) {
        return Err(Error::Mismatch("l2_error needs both fields on the same mesh".into()));
    }
    let mesh = a.mesh();
    let n_q = n_q.unwrap_or_else(|| a.space.n_q_default().max(b.space.n_q_default()));
    let pts = FunctionSpace::quad_ref_points(n_q);
    let ta = a.space.basis_at(&pts);
    let tb = b.space.basis_at(&pts);
    let mut acc = NeumaierSum::new();
    for cell in 0..mesh.n_cells() {
        let da = a.space.cell_dofs(cell);
        let db = b.space.cell_dofs(cell);
        for (q, qp) in mesh.cell_quadrature(cell, n_q)?.iter().enumerate() {
            let va: f64 = (0..a.space.nloc).map(|l| a.data[da[l]] * ta.value(q, l)).sum();
            let vb: f64 = (0..b.space.nloc).map(|l| b.data[db[l]] * tb.value(q, l)).sum();
            let d = va - vb;
            acc.add(qp.weight * d * d);
        }
    }
    Ok(acc.value().max(0.0).sqrt())
}

/// Least-squares slope of log(error) against log(Δx) over a resolution
/// sweep. Needs at least two samples with positive lengths and errors.
pub fn log_log_slope(dx: &[f64], err: &[f64]) -> Result<f64> {
    if dx.len() != err.len() || dx.len() < 2 {
        return Err(Error::Config(format!(
            "slope fit needs >= 2 matched samples, got {} lengths and {} errors",
            dx.len(),
            err.len()
        )));
    }
    for (&h, &e) in dx.iter().zip(err) {
        if !(h > 0.0 && e > 0.0) {
            return Err(Error::Config(format!(
                "slope fit needs positive lengths and errors, got dx={h}, err={e}"
            )));
        }
    }
    let xs: Vec<f64> = dx.iter().map(|h| h.ln()).collect();
    let ys: Vec<f64> = err.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let xbar = xs.iter().sum::<f64>() / n;
    let ybar = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xbar) * (y - ybar)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - xbar) * (x - xbar)).sum();
    Ok(sxy / sxx)
}

/// Characteristic cell length of the cubed-sphere mesh: πR / (2·ne) for
/// ne cells along each panel edge.
pub fn sphere_cell_length(radius: f64, ne: usize) -> f64 {
    std::f64::consts::PI * radius / (2.0 * ne as f64)
}

/// One CSV row of the per-step diagnostics series.
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub step: usize,
    pub t: f64,
    pub integral_rho: f64,
    pub integral_rho_x: f64,
    pub delta_rho_x_rel: f64,
    pub m_min: f64,
    pub m_max: f64,
    pub limited_cells: usize,
    pub unfixable_cells: usize,
    /// L2 error against the run's reference field, when one exists.
    pub l2_error: Option<f64>,
}

impl StepRecord {
    pub fn finite(&self) -> bool {
        [self.t, self.integral_rho, self.integral_rho_x, self.delta_rho_x_rel, self.m_min, self.m_max]
            .iter()
            .all(|v| v.is_finite())
            && self.l2_error.map_or(true, f64::is_finite)
    }
}

/// Full diagnostics series of a run; one row per step plus the initial row.
#[derive(Debug, Clone, Default)]
pub struct DiagnosticsSeries {
    pub rows: Vec<StepRecord>,
}

/// Formats a float with 17 significant digits, enough to round-trip f64.
fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

impl DiagnosticsSeries {
    pub fn csv_header(with_l2: bool) -> String {
        let mut h = String::from(
            "step,t,integral_rho,integral_rhoX,delta_rhoX_rel,m_min,m_max,limited_cells,unfixable_cells",
        );
        if with_l2 {
            h.push_str(",l2_error");
        }
        h
    }

    pub fn to_csv(&self) -> String {
        let with_l2 = self.rows.iter().any(|r| r.l2_error.is_some());
        let mut out = Self::csv_header(with_l2);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}",
                r.step,
                fmt(r.t),
                fmt(r.integral_rho),
                fmt(r.integral_rho_x),
                fmt(r.delta_rho_x_rel),
                fmt(r.m_min),
                fmt(r.m_max),
                r.limited_cells,
                r.unfixable_cells
            ));
            if with_l2 {
                out.push(',');
                if let Some(e) = r.l2_error {
                    out.push_str(&fmt(e));
                }
            }
            out.push('\n');
        }
        out
    }

    /// Largest relative tracer drift over the series.
    pub fn max_delta(&self) -> f64 {
        self.rows.iter().map(|r| r.delta_rho_x_rel).fold(0.0, f64::max)
    }

    /// Mean relative tracer drift over the post-initial samples.
    pub fn mean_delta(&self) -> f64 {
        let tail = self.rows.get(1..).unwrap_or(&[]);
        if tail.is_empty() {
            return 0.0;
        }
        tail.iter().map(|r| r.delta_rho_x_rel).sum::<f64>() / tail.len() as f64
    }

    /// Smallest mixing-ratio value seen anywhere in the series.
    pub fn min_m(&self) -> f64 {
        self.rows.iter().map(|r| r.m_min).fold(f64::INFINITY, f64::min)
    }
}
