//! Step orchestration for the four space configurations.
//!
//! A [`Scheme`] owns the prognostic spaces (density, tracer), the fully
//! discontinuous transport space, and the operator sequence that maps
//! fields into the transport space, advances them one SSPRK3 step, and maps
//! them back. Fields start and end every step in their prognostic spaces.
//!
//! The four placement/order configurations use these sequences:
//!
//! * co-located order 1: density and tracer already live in the transport
//!   space; one coupled (or advective) step, no mapping.
//! * co-located order 0: recover both fields to the order-1 space,
//!   transport, project back.
//! * staggered order 1 (slice only): project the density and inject the
//!   tracer into the discontinuous enrichment of the tracer space,
//!   transport, project back.
//! * staggered order 0 (slice only): recover both fields from their
//!   lowest-order spaces to the order-1 density space, transport, project
//!   back.
//!
//! With [`Form::Conservative`] the tracer rides the coupled
//! density/tracer-mass stepper and every mixing-ratio map is the
//! mass-conserving, constant-preserving variant solved under the tight
//! policy. With [`Form::Advective`] the tracer is advanced by the advective
//! operator and mapped with plain projections under the default policy;
//! the density is still transported conservatively. The two policies are
//! deliberately distinct: the conservative pipeline's solves bound its
//! conservation and consistency guarantees, while the advective pipeline
//! reflects an ordinary iterative-solver configuration and its
//! tolerance-level constant drift on staggered meshes is expected,
//! observable behaviour.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::field::Field;
use crate::limiter::{apply_mmr_limiter, positive_definite_vertex_limiter};
use crate::mesh::{Mesh, MeshKind};
use crate::remap::{
    conservative_recovery_with, consistent_conservative_inject, consistent_conservative_project,
    galerkin_project, inject, recovery_intermediate_space, recovery_with, SolverPolicy,
};
use crate::space::{make_space, same_space, FunctionSpace, SpaceSpec};
use crate::transport::{FlowField, TransportOperator};

/// Where the tracer lives relative to the density.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Placement {
    /// Tracer shares the density's fully discontinuous space.
    CoLocated,
    /// Tracer is vertically staggered (continuous in z); slice meshes only.
    Staggered,
}

/// Which weak form advances the mixing ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Form {
    /// Coupled flux-form transport of the tracer mass; conserves the
    /// weighted tracer integral and preserves constants.
    Conservative,
    /// Advective-form transport of the mixing ratio itself; not
    /// conservative in the tracer mass.
    Advective,
}

/// Optional non-negativity limiter applied after each SSPRK3 stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LimiterKind {
    None,
    /// Mass-conserving mean-blend limiter (conservative, co-located runs).
    Mmr,
    /// Conservative vertex squash + clipping baseline (advective,
    /// co-located runs).
    Baseline,
}

impl std::fmt::Display for Placement {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Placement::CoLocated => "co-located",
            Placement::Staggered => "staggered",
        })
    }
}

impl std::str::FromStr for Placement {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "co-located" | "colocated" | "co_located" => Ok(Placement::CoLocated),
            "staggered" | "vertically-staggered" | "vertically_staggered" => {
                Ok(Placement::Staggered)
            }
            other => Err(Error::Config(format!(
                "unknown placement {other:?}; expected \"co-located\" or \"staggered\""
            ))),
        }
    }
}

impl std::fmt::Display for Form {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Form::Conservative => "conservative",
            Form::Advective => "advective",
        })
    }
}

impl std::str::FromStr for Form {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "conservative" | "conservative-tracer" | "conservative_tracer" => {
                Ok(Form::Conservative)
            }
            "advective" => Ok(Form::Advective),
            other => Err(Error::Config(format!(
                "unknown form {other:?}; expected \"conservative\" or \"advective\""
            ))),
        }
    }
}

impl std::fmt::Display for LimiterKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LimiterKind::None => "none",
            LimiterKind::Mmr => "mmr",
            LimiterKind::Baseline => "baseline",
        })
    }
}

impl std::str::FromStr for LimiterKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(LimiterKind::None),
            "mmr" => Ok(LimiterKind::Mmr),
            "baseline" => Ok(LimiterKind::Baseline),
            other => Err(Error::Config(format!(
                "unknown limiter {other:?}; expected \"none\", \"mmr\" or \"baseline\""
            ))),
        }
    }
}

impl Default for LimiterKind {
    fn default() -> Self {
        LimiterKind::None
    }
}

crate::impl_string_serde!(Placement);
crate::impl_string_serde!(Form);
crate::impl_string_serde!(LimiterKind);

/// Spatial discretisation choice for one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SchemeConfig {
    pub placement: Placement,
    /// Element order of the prognostic spaces, 0 or 1.
    pub order: usize,
    pub form: Form,
    pub limiter: LimiterKind,
}

impl SchemeConfig {
    /// Checks the configuration's internal invariants against a mesh.
    pub fn validate(&self, mesh: &Mesh) -> Result<()> {
        if self.order > 1 {
            return Err(Error::Config(format!(
                "element order must be 0 or 1, got {}",
                self.order
            )));
        }
        if self.placement == Placement::Staggered && mesh.kind != MeshKind::Slice {
            return Err(Error::Config(
                "staggered placement needs a slice mesh: the staggered tracer spaces are \
                 continuous in the vertical direction, which the sphere mesh does not carry"
                    .into(),
            ));
        }
        match self.limiter {
            LimiterKind::None => {}
            LimiterKind::Mmr => {
                if self.form != Form::Conservative || self.placement != Placement::CoLocated {
                    return Err(Error::Config(format!(
                        "the mmr limiter blends against a density-weighted cell mean and \
                         requires the conservative form with co-located placement; got \
                         form {} placement {}",
                        self.form, self.placement
                    )));
                }
            }
            LimiterKind::Baseline => {
                if self.form != Form::Advective || self.placement != Placement::CoLocated {
                    return Err(Error::Config(format!(
                        "the baseline vertex limiter applies to advective runs in the \
                         order-1 nodal transport space and requires co-located placement; \
                         got form {} placement {}",
                        self.form, self.placement
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Per-step limiter activity, accumulated over SSPRK3 stages and tracers.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepStats {
    /// Cells whose field was blended/squashed towards its cell mean.
    pub limited_cells: usize,
    /// Cells the limiter could not fix conservatively (negative cell mass
    /// under mmr; clipped cells under the baseline limiter).
    pub unfixable_cells: usize,
}

impl StepStats {
    fn absorb(&mut self, limited: usize, unfixable: usize) {
        self.limited_cells += limited;
        self.unfixable_cells += unfixable;
    }
}

/// One placement/order/form configuration bound to a mesh, with its spaces
/// and transport operator built once.
pub struct Scheme {
    pub config: SchemeConfig,
    pub mesh: Arc<Mesh>,
    /// Prognostic density space (fully discontinuous, order k).
    pub density_space: Arc<FunctionSpace>,
    /// Prognostic tracer space (same as density when co-located).
    pub tracer_space: Arc<FunctionSpace>,
    /// Fully discontinuous space in which both fields are advanced.
    pub transport_space: Arc<FunctionSpace>,
    /// Continuous intermediate of the averaging recovery (order-0 paths).
    tilde: Option<Arc<FunctionSpace>>,
    op: TransportOperator,
    /// Solver policy for the plain maps of the advective pipeline.
    pub plain_policy: SolverPolicy,
    /// Solver policy for every conservative/consistent mixing-ratio map.
    pub tight_policy: SolverPolicy,
    /// Abort the step when the mmr limiter meets a negative cell mass.
    pub abort_on_unfixable: bool,
}

impl Scheme {
    pub fn new(mesh: &Arc<Mesh>, config: SchemeConfig) -> Result<Self> {
        config.validate(mesh)?;
        let density_space = make_space(mesh, SpaceSpec::density(config.order))?;
        let tracer_space = match config.placement {
            Placement::CoLocated => Arc::clone(&density_space),
            Placement::Staggered => make_space(mesh, SpaceSpec::staggered_tracer(config.order))?,
        };
        let transport_space = match (config.placement, config.order) {
            (Placement::CoLocated, 1) => Arc::clone(&density_space),
            (Placement::Staggered, 1) => make_space(mesh, SpaceSpec::staggered_transport())?,
            (_, _) => make_space(mesh, SpaceSpec::density(1))?,
        };
        let tilde = if config.order == 0 {
            Some(recovery_intermediate_space(mesh)?)
        } else {
            None
        };
        let op = TransportOperator::new(&transport_space)?;
        Ok(Self {
            config,
            mesh: Arc::clone(mesh),
            density_space,
            tracer_space,
            transport_space,
            tilde,
            op,
            plain_policy: SolverPolicy::default(),
            tight_policy: SolverPolicy::tight(),
            abort_on_unfixable: false,
        })
    }

    /// True when the prognostic fields already live in the transport space
    /// (co-located order 1) and the step needs no mapping.
    fn direct(&self) -> bool {
        self.config.placement == Placement::CoLocated && self.config.order == 1
    }

    /// Quadrature order shared by every map and transport solve in this
    /// scheme. Conserved functionals must be measured with the same rule:
    /// on curved cells, different orders quadrate cell volumes differently,
    /// so a mismatched diagnostic reports spurious drift at the level of
    /// the quadrature difference rather than the scheme's actual roundoff.
    pub fn diagnostic_n_q(&self) -> usize {
        self.density_space
            .n_q_default()
            .max(self.tracer_space.n_q_default())
            .max(self.transport_space.n_q_default())
    }

    fn check_fields(&self, rho: &Field, tracers: &[Field]) -> Result<()> {
        if !same_space(&rho.space, &self.density_space) {
            return Err(Error::Mismatch(
                "density field is not in the scheme's density space".into(),
            ));
        }
        for (i, m) in tracers.iter().enumerate() {
            if !same_space(&m.space, &self.tracer_space) {
                return Err(Error::Mismatch(format!(
                    "tracer {i} is not in the scheme's tracer space"
                )));
            }
        }
        Ok(())
    }

    /// Advances the density and all tracers by one step of length `dt`
    /// starting at time `t`. Fields are received and returned in their
    /// prognostic spaces.
    pub fn step(
        &self,
        rho: &mut Field,
        tracers: &mut [Field],
        flow: &dyn FlowField,
        t: f64,
        dt: f64,
    ) -> Result<StepStats> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::Config(format!("step size must be positive, got {dt}")));
        }
        self.check_fields(rho, tracers)?;
        let mut stats = StepStats::default();
        match self.config.form {
            Form::Conservative => self.conservative_step(rho, tracers, flow, t, dt, &mut stats)?,
            Form::Advective => self.advective_step(rho, tracers, flow, t, dt, &mut stats)?,
        }
        Ok(stats)
    }

    fn conservative_step(
        &self,
        rho: &mut Field,
        tracers: &mut [Field],
        flow: &dyn FlowField,
        t: f64,
        dt: f64,
        stats: &mut StepStats,
    ) -> Result<()> {
        if self.direct() {
            return self.coupled_transport(rho, tracers, flow, t, dt, stats);
        }
        // Map in: density first, then each tracer weighted by the
        // (original, mapped) density pair.
        let mut rho_t = self.map_density_in(rho)?;
        let mut m_t: Vec<Field> = tracers
            .iter()
            .map(|m| self.map_tracer_in_conservative(m, rho, &rho_t))
            .collect::<Result<_>>()?;
        self.coupled_transport(&mut rho_t, &mut m_t, flow, t, dt, stats)?;
        // Map out: density first (exact per-cell projection), then each
        // tracer conservatively against the (transported, projected) pair.
        let rho_new = galerkin_project(&rho_t, &self.density_space, &self.tight_policy)?;
        for (m, mt) in tracers.iter_mut().zip(&m_t) {
            *m = consistent_conservative_project(
                mt,
                &rho_t,
                &rho_new,
                &self.tracer_space,
                &self.tight_policy,
            )?;
        }
        *rho = rho_new;
        Ok(())
    }

    fn advective_step(
        &self,
        rho: &mut Field,
        tracers: &mut [Field],
        flow: &dyn FlowField,
        t: f64,
        dt: f64,
        stats: &mut StepStats,
    ) -> Result<()> {
        if self.direct() {
            self.density_transport(rho, flow, t, dt, stats)?;
            for m in tracers.iter_mut() {
                self.advective_transport(m, flow, t, dt, stats)?;
            }
            return Ok(());
        }
        let mut rho_t = self.map_density_in(rho)?;
        self.density_transport(&mut rho_t, flow, t, dt, stats)?;
        for m in tracers.iter_mut() {
            let mut mt = self.map_tracer_in_advective(m)?;
            self.advective_transport(&mut mt, flow, t, dt, stats)?;
            *m = galerkin_project(&mt, &self.tracer_space, &self.plain_policy)?;
        }
        *rho = galerkin_project(&rho_t, &self.density_space, &self.tight_policy)?;
        Ok(())
    }

    fn map_density_in(&self, rho: &Field) -> Result<Field> {
        match (self.config.placement, self.config.order) {
            (Placement::Staggered, 1) => {
                galerkin_project(rho, &self.transport_space, &self.tight_policy)
            }
            // Order-0 paths (either placement): averaging recovery, which
            // preserves the integral and reproduces constants.
            (_, _) => recovery_with(
                rho,
                &self.transport_space,
                self.tilde.as_ref().expect("order-0 scheme carries the recovery intermediate"),
                &self.tight_policy,
            ),
        }
    }

    fn map_tracer_in_conservative(
        &self,
        m: &Field,
        rho_orig: &Field,
        rho_t: &Field,
    ) -> Result<Field> {
        match (self.config.placement, self.config.order) {
            (Placement::Staggered, 1) => {
                consistent_conservative_inject(m, rho_orig, rho_t, &self.transport_space)
            }
            (_, _) => conservative_recovery_with(
                m,
                rho_orig,
                rho_t,
                &self.transport_space,
                self.tilde.as_ref().expect("order-0 scheme carries the recovery intermediate"),
                &self.tight_policy,
            ),
        }
    }

    fn map_tracer_in_advective(&self, m: &Field) -> Result<Field> {
        match (self.config.placement, self.config.order) {
            (Placement::Staggered, 1) => inject(m, &self.transport_space),
            (_, _) => recovery_with(
                m,
                &self.transport_space,
                self.tilde.as_ref().expect("order-0 scheme carries the recovery intermediate"),
                &self.plain_policy,
            ),
        }
    }

    fn coupled_transport(
        &self,
        rho: &mut Field,
        tracers: &mut [Field],
        flow: &dyn FlowField,
        t: f64,
        dt: f64,
        stats: &mut StepStats,
    ) -> Result<()> {
        let limiter = self.config.limiter;
        let abort = self.abort_on_unfixable;
        self.op.step_coupled(rho, tracers, flow, t, dt, |_ti, m, rho_stage| {
            if limiter == LimiterKind::Mmr {
                let out = apply_mmr_limiter(m, rho_stage, abort)?;
                stats.absorb(out.limited_cells, out.unfixable_cells);
            }
            Ok(())
        })
    }

    fn density_transport(
        &self,
        rho: &mut Field,
        flow: &dyn FlowField,
        t: f64,
        dt: f64,
        stats: &mut StepStats,
    ) -> Result<()> {
        let space = Arc::clone(&self.transport_space);
        let limit = self.config.limiter == LimiterKind::Baseline;
        self.op.step_conservative(rho, flow, t, dt, |state| {
            if limit {
                limit_stage_baseline(&space, state, stats)?;
            }
            Ok(())
        })
    }

    fn advective_transport(
        &self,
        m: &mut Field,
        flow: &dyn FlowField,
        t: f64,
        dt: f64,
        stats: &mut StepStats,
    ) -> Result<()> {
        let space = Arc::clone(&self.transport_space);
        let limit = self.config.limiter == LimiterKind::Baseline;
        self.op.step_advective(m, flow, t, dt, |state| {
            if limit {
                limit_stage_baseline(&space, state, stats)?;
            }
            Ok(())
        })
    }
}

/// Applies the baseline vertex limiter to one stage state in place.
fn limit_stage_baseline(
    space: &Arc<FunctionSpace>,
    state: &mut [f64],
    stats: &mut StepStats,
) -> Result<()> {
    let mut f = Field { space: Arc::clone(space), data: state.to_vec() };
    let out = positive_definite_vertex_limiter(&mut f)?;
    stats.absorb(out.limited_cells, out.clipped_cells);
    state.copy_from_slice(&f.data);
    Ok(())
}
