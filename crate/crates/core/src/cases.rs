//! Experiment case catalogue: stable CLI tags, domain constants, initial
//! profiles, prescribed flows, and desk-scale defaults.
//!
//! Six cases in three families:
//! - `A1-*`: sphere, divergent reversing flow; `convergence` transports a
//!   two-bump Gaussian mixing ratio through a smooth density, `consistency`
//!   transports a constant mixing ratio through a bumpy density.
//! - `A2-*`: periodic vertical slice, deformational reversing flow; same
//!   convergence/consistency split.
//! - `A3-slotted`: sphere, divergent flow, discontinuous slotted-cylinder
//!   mixing ratio for limiter stressing.
//! - `A4-terminator`: sphere, non-divergent flow plus mean rotation, two
//!   chemically coupled species initialised in photochemical equilibrium.
//!
//! All constants are frozen here and unit-tested against a table; the
//! reference-scale values (paper-scale resolutions) are kept only as
//! Courant anchors for the desk-scale defaults.

use crate::chemistry::ChemistryParams;
use crate::error::{Error, Result};
use crate::geometry::{lonlat, normalize, Vec3};
use crate::mesh::{Mesh, MeshKind};
use crate::transport::FlowField;
use crate::velocity::{
    SliceDeformationFlow, SphereDivergentFlow, SphereNonDivergentFlow, EARTH_RADIUS_M,
    TAU_SLICE_S, TAU_SPHERE_S,
};
use std::f64::consts::PI;

/// Slice domain length, metres.
pub const LX_SLICE_M: f64 = 2000.0;
/// Slice domain height, metres.
pub const HZ_SLICE_M: f64 = 2000.0;
/// Gaussian decay rate for the sphere bumps (unit-sphere chordal metric).
pub const SPHERE_GAUSS_B0: f64 = 5.0;
/// Gaussian length scale for the slice bumps: `2 Lx / 25`.
pub const SLICE_GAUSS_LC_M: f64 = 2.0 * LX_SLICE_M / 25.0;
/// Bump centers on the sphere: longitude `±pi/4` on the equator.
pub const SPHERE_CENTERS: [(f64, f64); 2] = [(-PI / 4.0, 0.0), (PI / 4.0, 0.0)];
/// Bump centers on the slice: `(3 Lx/8, Hz/2)` and `(5 Lx/8, Hz/2)`.
pub const SLICE_CENTERS: [(f64, f64); 2] = [
    (3.0 * LX_SLICE_M / 8.0, HZ_SLICE_M / 2.0),
    (5.0 * LX_SLICE_M / 8.0, HZ_SLICE_M / 2.0),
];
/// Background mixing ratio shared by all tracer profiles.
pub const M0: f64 = 0.02;

/// Courant anchors: reference resolution/timestep pairs whose ratio the
/// desk-scale defaults preserve.
const SPHERE_REF: (f64, f64) = (24.0, 450.0);
const TERMINATOR_REF: (f64, f64) = (8.0, 900.0);
/// Slice default timestep at desk scale, seconds.
const SLICE_DT_S: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Case {
    A1Convergence,
    A1Consistency,
    A2Convergence,
    A2Consistency,
    A3Slotted,
    A4Terminator,
}

pub const ALL_CASES: [Case; 6] = [
    Case::A1Convergence,
    Case::A1Consistency,
    Case::A2Convergence,
    Case::A2Consistency,
    Case::A3Slotted,
    Case::A4Terminator,
];

impl Case {
    /// Stable CLI/config tag.
    pub fn tag(&self) -> &'static str {
        match self {
            Case::A1Convergence => "A1-convergence",
            Case::A1Consistency => "A1-consistency",
            Case::A2Convergence => "A2-convergence",
            Case::A2Consistency => "A2-consistency",
            Case::A3Slotted => "A3-slotted",
            Case::A4Terminator => "A4-terminator",
        }
    }

    pub fn parse(s: &str) -> Result<Case> {
        ALL_CASES
            .iter()
            .copied()
            .find(|c| c.tag().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                let tags: Vec<&str> = ALL_CASES.iter().map(|c| c.tag()).collect();
                Error::Config(format!("unknown case '{s}'; expected one of {tags:?}"))
            })
    }

    /// Number of transported tracer fields (two species for the chemistry
    /// case, one mixing ratio otherwise).
    pub fn n_tracers(&self) -> usize {
        if self.uses_chemistry() {
            2
        } else {
            1
        }
    }

    pub fn mesh_kind(&self) -> MeshKind {
        match self {
            Case::A2Convergence | Case::A2Consistency => MeshKind::Slice,
            _ => MeshKind::CubedSphere,
        }
    }

    pub fn uses_chemistry(&self) -> bool {
        matches!(self, Case::A4Terminator)
    }

    /// Flow period; every case flow returns parcels to their start at this
    /// time (up to the deliberate mean drift on the sphere).
    pub fn period(&self) -> f64 {
        match self.mesh_kind() {
            MeshKind::CubedSphere => TAU_SPHERE_S,
            MeshKind::Slice => TAU_SLICE_S,
        }
    }

    /// Desk-scale default resolution: cells per panel edge (sphere) or per
    /// direction (slice).
    pub fn default_resolution(&self) -> usize {
        match self.mesh_kind() {
            MeshKind::CubedSphere => 8,
            MeshKind::Slice => 40,
        }
    }

    /// Desk-scale timestep at `resolution`, holding the Courant number of
    /// the reference-scale setup.
    pub fn default_dt(&self, resolution: usize) -> f64 {
        match self {
            Case::A4Terminator => TERMINATOR_REF.1 * TERMINATOR_REF.0 / resolution as f64,
            _ => match self.mesh_kind() {
                MeshKind::CubedSphere => SPHERE_REF.1 * SPHERE_REF.0 / resolution as f64,
                MeshKind::Slice => SLICE_DT_S,
            },
        }
    }

    /// Desk-scale default step count: a full flow period for the
    /// convergence cases (return-flow error needs the full loop), two days
    /// for the chemistry case, shorter diagnostic windows otherwise.
    pub fn default_steps(&self, resolution: usize) -> usize {
        let dt = self.default_dt(resolution);
        match self {
            Case::A1Convergence | Case::A2Convergence => {
                (self.period() / dt).round() as usize
            }
            Case::A4Terminator => (172_800.0 / dt).round() as usize,
            Case::A3Slotted => 200,
            _ => 100,
        }
    }

    /// The prescribed flow for this case, sized from the mesh geometry.
    pub fn flow(&self, mesh: &Mesh) -> Result<Box<dyn FlowField>> {
        match (self, mesh.kind) {
            (Case::A1Convergence | Case::A1Consistency | Case::A3Slotted, MeshKind::CubedSphere) => {
                let radius = mesh.sphere.as_ref().unwrap().radius;
                Ok(Box::new(SphereDivergentFlow::standard(radius)))
            }
            (Case::A4Terminator, MeshKind::CubedSphere) => {
                let radius = mesh.sphere.as_ref().unwrap().radius;
                Ok(Box::new(SphereNonDivergentFlow::standard(radius)))
            }
            (Case::A2Convergence | Case::A2Consistency, MeshKind::Slice) => {
                let p = mesh.slice.as_ref().unwrap();
                Ok(Box::new(SliceDeformationFlow::standard(p.lx, p.hz)))
            }
            _ => Err(Error::Config(format!(
                "case {} needs a {:?} mesh, got {:?}",
                self.tag(),
                self.mesh_kind(),
                mesh.kind
            ))),
        }
    }

    /// Pointwise initial density.
    pub fn density_profile(&self) -> Box<dyn Fn(Vec3) -> f64 + Send + Sync> {
        match self {
            // Smooth zonal profile.
            Case::A1Convergence | Case::A3Slotted => Box::new(|p| {
                let (_, lat) = lonlat(p);
                1.0 + 0.5 * lat.cos()
            }),
            // Background plus the two strong bumps.
            Case::A1Consistency | Case::A4Terminator => {
                Box::new(|p| 1.0 + sphere_bumps(p, 0.5))
            }
            // Linear stratification from 1 at the floor to 0.5 at the lid.
            Case::A2Convergence => Box::new(|p| 1.0 - 0.5 * p[1] / HZ_SLICE_M),
            Case::A2Consistency => Box::new(|p| 0.5 + slice_bumps(p[0], p[1], 0.5)),
        }
    }

    /// Pointwise initial mixing ratio; `None` for the chemistry case, whose
    /// species initialise from photochemical equilibrium instead.
    pub fn tracer_profile(&self) -> Option<Box<dyn Fn(Vec3) -> f64 + Send + Sync>> {
        match self {
            Case::A1Convergence => Some(Box::new(|p| M0 + sphere_bumps(p, 0.05))),
            Case::A1Consistency | Case::A2Consistency => Some(Box::new(|_| M0)),
            Case::A2Convergence => {
                Some(Box::new(|p| M0 + slice_bumps(p[0], p[1], 0.05)))
            }
            Case::A3Slotted => Some(Box::new(|p| slotted_cylinders(p))),
            Case::A4Terminator => None,
        }
    }

    /// Chemistry parameters for the species case.
    pub fn chemistry_params(&self) -> Option<ChemistryParams> {
        self.uses_chemistry().then(ChemistryParams::default)
    }

    /// Default sphere radius / slice dimensions used by the runner.
    pub fn domain_summary(&self) -> String {
        match self.mesh_kind() {
            MeshKind::CubedSphere => format!("sphere radius {EARTH_RADIUS_M} m"),
            MeshKind::Slice => {
                format!("periodic slice {LX_SLICE_M} m x {HZ_SLICE_M} m")
            }
        }
    }
}

impl std::fmt::Display for Case {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

impl std::str::FromStr for Case {
    type Err = Error;
    fn from_str(s: &str) -> Result<Case> {
        Case::parse(s)
    }
}

crate::impl_string_serde!(Case);

/// Sum of the two sphere Gaussians with amplitude `gmax`:
/// `gmax exp(-b0 |X - X_i|^2)` in unit-sphere Cartesian coordinates.
pub fn sphere_bumps(p: Vec3, gmax: f64) -> f64 {
    let hat = normalize(p);
    SPHERE_CENTERS
        .iter()
        .map(|&(lon, lat)| {
            let c = [lat.cos() * lon.cos(), lat.cos() * lon.sin(), lat.sin()];
            let d2 = (hat[0] - c[0]).powi(2)
                + (hat[1] - c[1]).powi(2)
                + (hat[2] - c[2]).powi(2);
            gmax * (-SPHERE_GAUSS_B0 * d2).exp()
        })
        .sum()
}

/// Sum of the two slice Gaussians with amplitude `f0`, using the periodic
/// shortest distance in `x`.
pub fn slice_bumps(x: f64, z: f64, f0: f64) -> f64 {
    SLICE_CENTERS
        .iter()
        .map(|&(xc, zc)| {
            let dx = (x - xc).abs();
            let dx = dx.min(LX_SLICE_M - dx);
            let l2 = dx * dx + (z - zc) * (z - zc);
            f0 * (-l2 / (SLICE_GAUSS_LC_M * SLICE_GAUSS_LC_M)).exp()
        })
        .sum()
}

/// Two slotted cylinders of great-arc radius 0.5 centred at longitude
/// `±pi/4` on the equator, each with a meridional slot of half-width 1/12
/// radians cut from one side. The branch conditions are kept exactly as
/// published, including the fourth branch that never fires (its longitude
/// test references the first center while its radius test references the
/// second, and the two disks are disjoint).
pub fn slotted_cylinders(p: Vec3) -> f64 {
    let (lon, lat) = lonlat(p);
    let (lon1, lat1) = SPHERE_CENTERS[0];
    let (lon2, _lat2) = SPHERE_CENTERS[1];
    let r1 = great_arc(lon, lat, lon1, lat1);
    let r2 = great_arc(lon, lat, lon2, _lat2);
    let in1 = r1 < 0.5;
    let in2 = r2 < 0.5;
    if in1 && (lon - lon1).abs() > 1.0 / 12.0 {
        return 1.0;
    }
    if in2 && (lon - lon2).abs() > 1.0 / 12.0 {
        return 1.0;
    }
    if in1 && (lon - lon1).abs() <= 1.0 / 12.0 && (lat - lat1) > -5.0 / 24.0 {
        return 1.0;
    }
    if in2 && (lon - lon1).abs() <= 1.0 / 12.0 && (lat - lat1) > 5.0 / 24.0 {
        return 1.0;
    }
    0.0
}

fn great_arc(lon: f64, lat: f64, lon_c: f64, lat_c: f64) -> f64 {
    (lat.sin() * lat_c.sin() + lat.cos() * lat_c.cos() * (lon - lon_c).cos())
        .clamp(-1.0, 1.0)
        .acos()
}
