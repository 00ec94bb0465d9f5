//! Experiment driver: run configuration, the diagnostic time loop,
//! convergence sweeps, the quick property-check suite, and output files.
//!
//! A [`RunConfig`] carries exactly the knobs the CLI exposes (same key
//! names in JSON config files). [`run_case`] builds the mesh, scheme, flow
//! and initial fields for the chosen case, advances the configured number
//! of steps while recording one diagnostics row per step (plus the initial
//! row), applies the toy chemistry after each full transport step where the
//! case calls for it, and optionally writes `diagnostics.csv`, `run.json`,
//! the mesh dump and the final fields into an output directory.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::cases::{Case, HZ_SLICE_M, LX_SLICE_M};
use crate::chemistry::Chemistry;
use crate::diagnostics::{
    l2_error, log_log_slope, relative_drift, sphere_cell_length, tracer_density_cellwise,
    DiagnosticsSeries, StepRecord,
};
use crate::error::{Error, Result};
use crate::field::Field;
use crate::mesh::{build_cubed_sphere_mesh, build_slice_mesh, Mesh, MeshKind};
use crate::scheme::{Form, LimiterKind, Placement, Scheme, SchemeConfig, StepStats};
use crate::transport::ssprk3_step;
use crate::velocity::EARTH_RADIUS_M;

/// One run's configuration; field names double as CLI flag names and JSON
/// config keys.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub case: Case,
    pub placement: Placement,
    pub order: usize,
    pub form: Form,
    #[serde(default)]
    pub limiter: LimiterKind,
    /// Sphere resolution: cells per cubed-sphere panel edge.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ne: Option<usize>,
    /// Slice resolution: cells per direction.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nx: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none", alias = "out-dir")]
    pub out_dir: Option<PathBuf>,
}

/// Resolution, timestep and step count after applying case defaults.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResolvedRun {
    pub resolution: usize,
    pub dt: f64,
    pub steps: usize,
}

impl RunConfig {
    /// Baseline configuration for a case: conservative co-located order 1,
    /// no limiter, case defaults for everything else.
    pub fn for_case(case: Case) -> Self {
        Self {
            case,
            placement: Placement::CoLocated,
            order: 1,
            form: Form::Conservative,
            limiter: LimiterKind::None,
            ne: None,
            nx: None,
            dt: None,
            steps: None,
            out_dir: None,
        }
    }

    pub fn scheme_config(&self) -> SchemeConfig {
        SchemeConfig {
            placement: self.placement,
            order: self.order,
            form: self.form,
            limiter: self.limiter,
        }
    }

    /// Applies case defaults and validates the resolution flags against the
    /// case's mesh family.
    pub fn resolve(&self) -> Result<ResolvedRun> {
        let kind = self.case.mesh_kind();
        if kind == MeshKind::CubedSphere && self.nx.is_some() {
            return Err(Error::Config(format!(
                "case {} runs on the sphere; set --ne, not --nx",
                self.case
            )));
        }
        if kind == MeshKind::Slice && self.ne.is_some() {
            return Err(Error::Config(format!(
                "case {} runs on the slice; set --nx, not --ne",
                self.case
            )));
        }
        let resolution = self
            .ne
            .or(self.nx)
            .unwrap_or_else(|| self.case.default_resolution());
        if resolution < 2 {
            return Err(Error::Config(format!(
                "resolution must be at least 2 cells, got {resolution}"
            )));
        }
        let dt = self.dt.unwrap_or_else(|| self.case.default_dt(resolution));
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::Config(format!("timestep must be positive, got {dt}")));
        }
        let steps = self.steps.unwrap_or_else(|| self.case.default_steps(resolution));
        Ok(ResolvedRun { resolution, dt, steps })
    }

    pub fn build_mesh(&self, resolution: usize) -> Result<Arc<Mesh>> {
        let mesh = match self.case.mesh_kind() {
            MeshKind::CubedSphere => build_cubed_sphere_mesh(resolution, EARTH_RADIUS_M)?,
            MeshKind::Slice => {
                build_slice_mesh(resolution, resolution, LX_SLICE_M, HZ_SLICE_M)?
            }
        };
        Ok(Arc::new(mesh))
    }

    /// Parses a JSON config file with the same keys as the CLI flags.
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("config JSON: {e}")))
    }
}

/// Everything a completed run produced, with the files (if any) already on
/// disk.
pub struct RunArtifacts {
    pub config: RunConfig,
    pub resolved: ResolvedRun,
    pub series: DiagnosticsSeries,
    pub final_rho: Field,
    pub final_tracers: Vec<Field>,
    /// Final-time L2 error against the initial tracer (single-tracer cases).
    pub l2_final: Option<f64>,
    pub metadata: serde_json::Value,
}

/// Runs one case end to end. The diagnostics series always holds
/// `steps + 1` rows; a zero-step run is valid and records only the initial
/// state.
pub fn run_case(config: &RunConfig) -> Result<RunArtifacts> {
    let resolved = config.resolve()?;
    let mesh = config.build_mesh(resolved.resolution)?;
    let scheme = Scheme::new(&mesh, config.scheme_config())?;
    let flow = config.case.flow(&mesh)?;

    let density = config.case.density_profile();
    let mut rho = Field::interpolate(&scheme.density_space, |p| density(p))?;
    let (mut tracers, chemistry) = match config.case.tracer_profile() {
        Some(profile) => (
            vec![Field::interpolate(&scheme.tracer_space, |p| profile(p))?],
            None,
        ),
        None => {
            let params = config
                .case
                .chemistry_params()
                .expect("cases without a tracer profile define chemistry");
            let chem = Chemistry::for_space(&scheme.tracer_space, params);
            let (x, x2) = chem.equilibrium_fields();
            (vec![x, x2], Some(chem))
        }
    };
    let reference = if tracers.len() == 1 {
        Some(tracers[0].clone())
    } else {
        None
    };

    // Measure conserved functionals with the scheme's own quadrature so
    // the reported drift reflects the scheme, not a mismatched rule.
    let n_q = Some(scheme.diagnostic_n_q());
    let mut series = DiagnosticsSeries::default();
    let initial_mass = record_row(
        &mut series,
        0,
        0.0,
        &rho,
        &tracers,
        reference.as_ref(),
        StepStats::default(),
        None,
        n_q,
    )?;

    let mut t = 0.0;
    for step in 1..=resolved.steps {
        let stats = scheme
            .step(&mut rho, &mut tracers, flow.as_ref(), t, resolved.dt)
            .map_err(|e| {
                Error::Solver(format!("step {step} (t = {t:.6e} s) failed: {e}"))
            })?;
        t += resolved.dt;
        if let Some(chem) = &chemistry {
            let (x, rest) = tracers.split_first_mut().expect("chemistry runs two tracers");
            chem.step(x, &mut rest[0], resolved.dt).map_err(|e| {
                Error::Solver(format!("chemistry at step {step} failed: {e}"))
            })?;
        }
        record_row(
            &mut series,
            step,
            t,
            &rho,
            &tracers,
            reference.as_ref(),
            stats,
            Some(initial_mass),
            n_q,
        )?;
    }

    let l2_final = series.rows.last().and_then(|r| r.l2_error);
    let metadata = run_metadata(config, &resolved, &mesh, &scheme, &series);
    if let Some(dir) = &config.out_dir {
        write_outputs(dir, &series, &metadata, &rho, &tracers, &mesh)?;
    }
    Ok(RunArtifacts {
        config: config.clone(),
        resolved,
        series,
        final_rho: rho,
        final_tracers: tracers,
        l2_final,
        metadata,
    })
}

/// Appends one diagnostics row; returns the conserved tracer functional so
/// the first call seeds the drift reference. For the two-species chemistry
/// case the functional is ∫ρ(X + 2X₂), the total that the reaction
/// preserves; otherwise it is ∫ρm.
#[allow(clippy::too_many_arguments)]
fn record_row(
    series: &mut DiagnosticsSeries,
    step: usize,
    t: f64,
    rho: &Field,
    tracers: &[Field],
    reference: Option<&Field>,
    stats: StepStats,
    initial_mass: Option<f64>,
    n_q: Option<usize>,
) -> Result<f64> {
    let integral_rho = rho.integrate(n_q)?;
    let mass = conserved_tracer_mass(rho, tracers, n_q)?;
    let delta = initial_mass.map_or(0.0, |m0| relative_drift(mass, m0));
    let m_min = tracers
        .iter()
        .flat_map(|f| f.data.iter().copied())
        .fold(f64::INFINITY, f64::min);
    let m_max = tracers
        .iter()
        .flat_map(|f| f.data.iter().copied())
        .fold(f64::NEG_INFINITY, f64::max);
    let l2 = match reference {
        Some(r) => Some(l2_error(&tracers[0], r, None)?),
        None => None,
    };
    let row = StepRecord {
        step,
        t,
        integral_rho,
        integral_rho_x: mass,
        delta_rho_x_rel: delta,
        m_min,
        m_max,
        limited_cells: stats.limited_cells,
        unfixable_cells: stats.unfixable_cells,
        l2_error: l2,
    };
    if !row.finite() {
        return Err(Error::NonFinite(format!(
            "non-finite diagnostics at step {step} (t = {t:.6e} s): \
             integral_rho = {integral_rho:.6e}, integral_rhoX = {mass:.6e}, \
             m range [{m_min:.6e}, {m_max:.6e}]"
        )));
    }
    series.rows.push(row);
    Ok(mass)
}

/// The conserved tracer functional of a run's tracer set, quadratured at
/// `n_q` (None = the spaces' default rule).
pub fn conserved_tracer_mass(rho: &Field, tracers: &[Field], n_q: Option<usize>) -> Result<f64> {
    match tracers {
        [m] => Ok(tracer_density_cellwise(rho, m, n_q)?.total),
        [x, x2] => {
            let a = tracer_density_cellwise(rho, x, n_q)?.total;
            let b = tracer_density_cellwise(rho, x2, n_q)?.total;
            Ok(a + 2.0 * b)
        }
        other => Err(Error::Config(format!(
            "expected one or two tracers, got {}",
            other.len()
        ))),
    }
}

fn run_metadata(
    config: &RunConfig,
    resolved: &ResolvedRun,
    mesh: &Mesh,
    scheme: &Scheme,
    series: &DiagnosticsSeries,
) -> serde_json::Value {
    json!({
        "config": config,
        "resolved": resolved,
        "mesh": {
            "kind": mesh.kind,
            "cells": mesh.n_cells(),
            "domain": config.case.domain_summary(),
        },
        "solver": {
            "plain": scheme.plain_policy,
            "tight": scheme.tight_policy,
        },
        "density_guard": {
            // Relative floor under which nodal division by the density is
            // refused, and what happens when the limiter cannot repair a
            // cell conservatively.
            "epsilon_rho_relative": 1e-12,
            "on_unfixable_cell": if scheme.abort_on_unfixable { "abort" } else { "record" },
        },
        "version": version_string(),
        "rows": series.rows.len(),
    })
}

/// Package version plus the current git commit when available.
pub fn version_string() -> String {
    let git = std::process::Command::new("git")
        .args(["rev-parse", "--short", "HEAD"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "unknown".into());
    format!("{}+g{}", env!("CARGO_PKG_VERSION"), git)
}

fn write_outputs(
    dir: &Path,
    series: &DiagnosticsSeries,
    metadata: &serde_json::Value,
    rho: &Field,
    tracers: &[Field],
    mesh: &Mesh,
) -> Result<()> {
    let io = |e: std::io::Error| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("writing {}: {e}", dir.display()),
        ))
    };
    std::fs::create_dir_all(dir).map_err(io)?;
    std::fs::write(dir.join("diagnostics.csv"), series.to_csv()).map_err(io)?;
    let meta =
        serde_json::to_string_pretty(metadata).expect("metadata serializes") + "\n";
    std::fs::write(dir.join("run.json"), meta).map_err(io)?;
    std::fs::write(
        dir.join("mesh.json"),
        serde_json::to_string_pretty(&mesh.to_json()).expect("mesh serializes") + "\n",
    )
    .map_err(io)?;
    std::fs::write(dir.join("final_rho.csv"), rho.to_csv()).map_err(io)?;
    match tracers {
        [m] => std::fs::write(dir.join("final_m.csv"), m.to_csv()).map_err(io)?,
        [x, x2] => {
            std::fs::write(dir.join("final_x.csv"), x.to_csv()).map_err(io)?;
            std::fs::write(dir.join("final_x2.csv"), x2.to_csv()).map_err(io)?;
        }
        _ => {}
    }
    Ok(())
}

/// One resolution's error sample in a convergence sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    pub resolution: usize,
    pub dx: f64,
    pub l2_error: f64,
}

#[derive(Debug, Serialize)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
    pub slope: f64,
}

/// Runs the configured case at each resolution and fits the convergence
/// slope of the final-time L2 error against cell length. The case must
/// have a single tracer (so the return-flow reference is well defined).
pub fn sweep(base: &RunConfig, resolutions: &[usize]) -> Result<SweepResult> {
    if resolutions.len() < 2 {
        return Err(Error::Config(format!(
            "a convergence sweep needs at least two resolutions, got {resolutions:?}"
        )));
    }
    let kind = base.case.mesh_kind();
    let mut points = Vec::with_capacity(resolutions.len());
    for &r in resolutions {
        let mut cfg = base.clone();
        match kind {
            MeshKind::CubedSphere => cfg.ne = Some(r),
            MeshKind::Slice => cfg.nx = Some(r),
        }
        cfg.out_dir = base
            .out_dir
            .as_ref()
            .map(|d| d.join(format!("n{r}")));
        let run = run_case(&cfg)?;
        let err = run.l2_final.ok_or_else(|| {
            Error::Config(format!(
                "case {} records no L2 error; sweeps need a single-tracer case",
                base.case
            ))
        })?;
        let dx = match kind {
            MeshKind::CubedSphere => sphere_cell_length(EARTH_RADIUS_M, r),
            MeshKind::Slice => LX_SLICE_M / r as f64,
        };
        points.push(SweepPoint { resolution: r, dx, l2_error: err });
    }
    let dx: Vec<f64> = points.iter().map(|p| p.dx).collect();
    let err: Vec<f64> = points.iter().map(|p| p.l2_error).collect();
    let slope = log_log_slope(&dx, &err)?;
    let result = SweepResult { points, slope };
    if let Some(dir) = &base.out_dir {
        let io = |e: std::io::Error| {
            Error::Io(std::io::Error::new(
                e.kind(),
                format!("writing {}: {e}", dir.display()),
            ))
        };
        std::fs::create_dir_all(dir).map_err(io)?;
        let mut csv = String::from("resolution,dx,l2_error\n");
        for p in &result.points {
            csv.push_str(&format!("{},{:.16e},{:.16e}\n", p.resolution, p.dx, p.l2_error));
        }
        std::fs::write(dir.join("sweep.csv"), csv).map_err(io)?;
        std::fs::write(
            dir.join("sweep.json"),
            serde_json::to_string_pretty(&result).expect("sweep serializes") + "\n",
        )
        .map_err(io)?;
    }
    Ok(result)
}

/// Outcome of one quick property check.
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> CheckOutcome {
    CheckOutcome { name, passed, detail }
}

/// Fast self-contained property checks behind the `check` subcommand:
/// each exercises one structural guarantee at a tiny resolution and
/// reports a pass/fail line. Full-tolerance versions live in the test
/// suite; this is a field sanity screen that runs in seconds.
pub fn run_property_checks() -> Vec<CheckOutcome> {
    let mut out = Vec::new();
    out.push(check_ssprk3_scalar());
    out.push(check_upwind_sides());
    out.push(check_zero_velocity_identity());
    out.push(check_constant_ride());
    out.push(check_density_conservation());
    out.push(check_chemistry_invariance());
    out.push(check_mmr_limiter());
    out
}

fn check_ssprk3_scalar() -> CheckOutcome {
    // dq/dt = -q from 1.0 over dt = 0.1: the three-stage update equals the
    // third-order Taylor value of exp(-0.1).
    let expected = 1.0 - 0.1 + 0.01 / 2.0 - 0.001 / 6.0;
    let got = ssprk3_step(
        &[1.0],
        0.0,
        0.1,
        |q, _| Ok(vec![-q[0]]),
        |_, _| Ok(()),
    )
    .map(|v| v[0]);
    match got {
        Ok(v) => check(
            "ssprk3-scalar-ode",
            (v - expected).abs() <= 1e-7,
            format!("got {v:.10}, expected {expected:.10}"),
        ),
        Err(e) => check("ssprk3-scalar-ode", false, e.to_string()),
    }
}

fn check_upwind_sides() -> CheckOutcome {
    use crate::transport::upwind;
    let ok = upwind(0.5, 1.0, 2.0) == 1.0
        && upwind(-0.5, 1.0, 2.0) == 2.0
        && upwind(0.0, 3.0, 4.0) == 3.0;
    check("upwind-trace-sides", ok, "plus side for outflow, minus side for inflow".into())
}

fn tiny_slice_scheme(config: SchemeConfig) -> Result<(Arc<Mesh>, Scheme)> {
    let mesh = Arc::new(build_slice_mesh(6, 6, LX_SLICE_M, HZ_SLICE_M)?);
    let scheme = Scheme::new(&mesh, config)?;
    Ok((mesh, scheme))
}

fn check_zero_velocity_identity() -> CheckOutcome {
    let name = "zero-velocity-step-identity";
    let run = || -> Result<f64> {
        let (_, scheme) = tiny_slice_scheme(SchemeConfig {
            placement: Placement::Staggered,
            order: 1,
            form: Form::Conservative,
            limiter: LimiterKind::None,
        })?;
        let mut rho = Field::interpolate(&scheme.density_space, |p| {
            1.0 - 0.4 * p[1] / HZ_SLICE_M
        })?;
        let mut m = Field::interpolate(&scheme.tracer_space, |p| {
            0.02 + 0.01 * (std::f64::consts::PI * p[1] / HZ_SLICE_M).cos()
        })?;
        let m0 = m.clone();
        scheme.step(
            &mut rho,
            std::slice::from_mut(&mut m),
            &crate::velocity::ZeroFlow,
            0.0,
            5.0,
        )?;
        Ok(m
            .data
            .iter()
            .zip(&m0.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    };
    match run() {
        Ok(dev) => check(name, dev <= 1e-13, format!("max tracer change {dev:.3e}")),
        Err(e) => check(name, false, e.to_string()),
    }
}

fn consistency_probe(form: Form) -> Result<(f64, f64)> {
    let case = Case::A2Consistency;
    let config = RunConfig {
        placement: Placement::Staggered,
        order: 1,
        form,
        nx: Some(6),
        steps: Some(5),
        ..RunConfig::for_case(case)
    };
    let run = run_case(&config)?;
    let m = &run.final_tracers[0];
    let dev = m.data.iter().map(|v| (v - 0.02).abs()).fold(0.0, f64::max);
    let rho_drift = run.series.max_delta();
    Ok((dev, rho_drift))
}

fn check_constant_ride() -> CheckOutcome {
    let name = "constant-tracer-preserved";
    match consistency_probe(Form::Conservative) {
        Ok((dev, _)) => check(name, dev <= 1e-9, format!("max |m - 0.02| = {dev:.3e}")),
        Err(e) => check(name, false, e.to_string()),
    }
}

fn check_density_conservation() -> CheckOutcome {
    let name = "tracer-mass-conserved";
    match consistency_probe(Form::Conservative) {
        Ok((_, drift)) => {
            check(name, drift <= 1e-11, format!("max relative drift {drift:.3e}"))
        }
        Err(e) => check(name, false, e.to_string()),
    }
}

fn check_chemistry_invariance() -> CheckOutcome {
    let name = "chemistry-total-invariant";
    let run = || -> Result<f64> {
        let mesh = Arc::new(build_cubed_sphere_mesh(2, EARTH_RADIUS_M)?);
        let scheme = Scheme::new(
            &mesh,
            SchemeConfig {
                placement: Placement::CoLocated,
                order: 1,
                form: Form::Conservative,
                limiter: LimiterKind::None,
            },
        )?;
        let chem = Chemistry::for_space(
            &scheme.tracer_space,
            Case::A4Terminator.chemistry_params().expect("chemistry case"),
        );
        let (mut x, mut x2) = chem.equilibrium_fields();
        let total0: Vec<f64> =
            x.data.iter().zip(&x2.data).map(|(a, b)| a + 2.0 * b).collect();
        chem.step(&mut x, &mut x2, 900.0)?;
        Ok(x
            .data
            .iter()
            .zip(&x2.data)
            .zip(&total0)
            .map(|((a, b), t0)| (a + 2.0 * b - t0).abs())
            .fold(0.0, f64::max))
    };
    match run() {
        Ok(dev) => check(name, dev <= 1e-16, format!("max |X_T change| = {dev:.3e}")),
        Err(e) => check(name, false, e.to_string()),
    }
}

fn check_mmr_limiter() -> CheckOutcome {
    let name = "mmr-limiter-nonnegative-and-conservative";
    let run = || -> Result<(f64, f64)> {
        let (_, scheme) = tiny_slice_scheme(SchemeConfig {
            placement: Placement::CoLocated,
            order: 1,
            form: Form::Conservative,
            limiter: LimiterKind::Mmr,
        })?;
        let mut rho =
            Field::interpolate(&scheme.density_space, |p| 1.0 - 0.3 * p[1] / HZ_SLICE_M)?;
        let mut m = Field::interpolate(&scheme.tracer_space, |p| {
            let dx = (p[0] - 0.5 * LX_SLICE_M) / 150.0;
            let dz = (p[1] - 0.5 * HZ_SLICE_M) / 150.0;
            0.02 + (-(dx * dx + dz * dz)).exp()
        })?;
        let flow = Case::A2Consistency.flow(scheme.mesh.as_ref())?;
        let n_q = Some(scheme.diagnostic_n_q());
        let mass0 = conserved_tracer_mass(&rho, std::slice::from_ref(&m), n_q)?;
        let mut min_seen = f64::INFINITY;
        let mut t = 0.0;
        for _ in 0..4 {
            scheme.step(&mut rho, std::slice::from_mut(&mut m), flow.as_ref(), t, 5.0)?;
            t += 5.0;
            min_seen =
                min_seen.min(m.data.iter().copied().fold(f64::INFINITY, f64::min));
        }
        let mass = conserved_tracer_mass(&rho, std::slice::from_ref(&m), n_q)?;
        Ok((min_seen, relative_drift(mass, mass0)))
    };
    match run() {
        Ok((min_seen, drift)) => check(
            name,
            min_seen >= -1e-14 && drift <= 1e-11,
            format!("min m = {min_seen:.3e}, tracer-mass drift {drift:.3e}"),
        ),
        Err(e) => check(name, false, e.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_json_round_trips_with_cli_keys() {
        let text = r#"{
            "case": "A2-consistency",
            "placement": "staggered",
            "order": 1,
            "form": "advective",
            "limiter": "none",
            "nx": 12,
            "dt": 5.0,
            "steps": 3
        }"#;
        let cfg = RunConfig::from_json(text).unwrap();
        assert_eq!(cfg.case, Case::A2Consistency);
        assert_eq!(cfg.placement, Placement::Staggered);
        assert_eq!(cfg.form, Form::Advective);
        assert_eq!(cfg.limiter, LimiterKind::None);
        assert_eq!(cfg.nx, Some(12));
        let back = serde_json::to_value(&cfg).unwrap();
        assert_eq!(back["case"], "A2-consistency");
        assert_eq!(back["placement"], "staggered");
        assert_eq!(back["form"], "advective");
        assert!(back.get("ne").is_none(), "unset options must not serialize");
    }

    #[test]
    fn config_defaults_and_validation() {
        let cfg = RunConfig::from_json(r#"{
            "case": "A1-consistency",
            "placement": "co-located",
            "order": 1,
            "form": "conservative"
        }"#)
        .unwrap();
        assert_eq!(cfg.limiter, LimiterKind::None, "limiter defaults to none");
        let resolved = cfg.resolve().unwrap();
        assert_eq!(resolved.resolution, 8);
        assert!(resolved.dt > 0.0);

        let mut wrong = cfg.clone();
        wrong.nx = Some(40);
        assert!(wrong.resolve().is_err(), "sphere case must reject --nx");
        let mut bad_dt = cfg;
        bad_dt.dt = Some(-1.0);
        assert!(bad_dt.resolve().is_err());
    }

    #[test]
    fn zero_length_run_yields_one_row_and_valid_metadata() {
        let dir = std::env::temp_dir().join("dg_tracer_zero_len_test");
        let _ = std::fs::remove_dir_all(&dir);
        let config = RunConfig {
            nx: Some(6),
            steps: Some(0),
            out_dir: Some(dir.clone()),
            ..RunConfig::for_case(Case::A2Consistency)
        };
        let run = run_case(&config).unwrap();
        assert_eq!(run.series.rows.len(), 1, "zero steps still record the initial row");
        assert_eq!(run.series.rows[0].delta_rho_x_rel, 0.0);
        assert_eq!(run.metadata["rows"], 1);
        assert!(run.metadata["solver"]["tight"]["rtol"].as_f64().unwrap() <= 1e-12);
        let csv = std::fs::read_to_string(dir.join("diagnostics.csv")).unwrap();
        assert_eq!(csv.lines().count(), 2, "header plus one row");
        assert!(dir.join("run.json").exists());
        assert!(dir.join("mesh.json").exists());
        assert!(dir.join("final_m.csv").exists());
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn short_consistency_run_keeps_constant_and_mass() {
        let config = RunConfig {
            nx: Some(8),
            steps: Some(4),
            ..RunConfig::for_case(Case::A2Consistency)
        };
        let run = run_case(&config).unwrap();
        assert_eq!(run.series.rows.len(), 5);
        assert!(run.series.max_delta() <= 1e-11, "drift {}", run.series.max_delta());
        let m = &run.final_tracers[0];
        let dev = m.data.iter().map(|v| (v - 0.02).abs()).fold(0.0, f64::max);
        assert!(dev <= 1e-11, "constant deviation {dev:.3e}");
        // Row times advance by dt.
        let dt = run.resolved.dt;
        for (i, r) in run.series.rows.iter().enumerate() {
            assert_eq!(r.step, i);
            assert!((r.t - dt * i as f64).abs() <= 1e-12 * dt.max(1.0));
        }
    }

    #[test]
    fn chemistry_case_runs_two_species_and_preserves_total() {
        let config = RunConfig {
            ne: Some(2),
            dt: Some(900.0),
            steps: Some(3),
            ..RunConfig::for_case(Case::A4Terminator)
        };
        let run = run_case(&config).unwrap();
        assert_eq!(run.final_tracers.len(), 2);
        assert!(run.l2_final.is_none(), "two-species runs have no scalar reference");
        assert!(
            run.series.max_delta() <= 1e-11,
            "combined species total drifted {:.3e}",
            run.series.max_delta()
        );
    }

    #[test]
    fn sweep_fits_slope_on_tiny_resolutions() {
        // A full flow period brings the exact solution back to the initial
        // condition, so the recorded L2 error is purely numerical. dt = 25 s
        // keeps the Courant number under 0.3 at both resolutions.
        let base = RunConfig {
            dt: Some(25.0),
            steps: Some(80),
            ..RunConfig::for_case(Case::A2Convergence)
        };
        let result = sweep(&base, &[8, 16]).unwrap();
        assert_eq!(result.points.len(), 2);
        assert!(result.points[0].dx > result.points[1].dx);
        assert!(
            result.points[0].l2_error > result.points[1].l2_error,
            "coarser run should be less accurate: {:?}",
            result.points
        );
        assert!(
            result.slope > 0.5,
            "expected error reduction under refinement, slope {:.3} from {:?}",
            result.slope,
            result.points
        );
        assert!(sweep(&base, &[8]).is_err(), "single-point sweep rejected");
    }

    #[test]
    fn property_checks_all_pass() {
        for outcome in run_property_checks() {
            assert!(
                outcome.passed,
                "check {} failed: {}",
                outcome.name, outcome.detail
            );
        }
    }
}
