//! Conservative and consistent tracer transport with discontinuous-Galerkin
//! spatial discretisations.
//!
//! The library advects a density `rho` and one or more tracer mixing ratios
//! `m` on two mesh families: a vertical slice of a periodic channel
//! (quadrilateral cells, periodic in x, rigid top and bottom) and a
//! cubed-sphere surface mesh. Two weak forms of the transport equation are
//! provided: a conservative form for densities and tracer densities, and an
//! advective form for mixing ratios. A family of inter-space mapping
//! operators (Galerkin projection, conservative projection, averaging-based
//! recovery, nodal injection, and density-weighted variants) lets mixed
//! placements run transport in a common space while keeping either exact
//! tracer-mass conservation or exact preservation of constant mixing ratios.
//!
//! Organisation:
//! - [`mesh`]: mesh construction, cell charts, facet topology and quadrature.
//! - [`quadrature`]: Gauss-Legendre rules used everywhere integrals appear.
//! - [`space`]: nodal tensor-product function spaces and their DOF maps.
//! - [`field`]: coefficient vectors bound to a space, interpolation and
//!   integration.
//! - [`linalg`]: per-cell dense Cholesky, CSR matrices and preconditioned CG.
//! - [`remap`]: the mapping operators between spaces.
//! - [`transport`]: weak-form assembly, upwind traces, SSPRK3 stepping, and
//!   the coupled density/tracer stepper.
//! - [`limiter`]: bound-preserving limiters for mixing ratios.
//! - [`chemistry`]: a two-species toy chemistry with an implicit solver.
//! - [`velocity`], [`cases`]: prescribed analytic velocities and initial
//!   conditions for the experiment suite.
//! - [`scheme`], [`diagnostics`], [`runner`]: placement/order orchestration,
//!   conservation and error diagnostics, and the file-writing experiment
//!   driver used by the CLI.

/// Implements `serde` string (de)serialization for a type via its
/// `Display`/`FromStr` pair, so config files and CLI flags share one
/// spelling of each enum value.
#[macro_export]
macro_rules! impl_string_serde {
    ($t:ty) => {
        impl serde::Serialize for $t {
            fn serialize<S: serde::Serializer>(
                &self,
                s: S,
            ) -> std::result::Result<S::Ok, S::Error> {
                s.serialize_str(&self.to_string())
            }
        }
        impl<'de> serde::Deserialize<'de> for $t {
            fn deserialize<D: serde::Deserializer<'de>>(
                d: D,
            ) -> std::result::Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

pub mod cases;
pub mod chemistry;
pub mod diagnostics;
pub mod error;
pub mod field;
pub mod geometry;
pub mod limiter;
pub mod linalg;
pub mod mesh;
pub mod quadrature;
pub mod remap;
pub mod runner;
pub mod scheme;
pub mod space;
pub mod transport;
pub mod velocity;

pub use error::{Error, Result};
