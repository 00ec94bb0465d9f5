//! Prescribed analytic flows for the experiments: a divergent and a
//! non-divergent time-reversing flow on the sphere, and a deformational
//! flow on the periodic vertical slice. Each supplies the exact velocity
//! vector at a physical point and the closed-form divergence.
//!
//! Sphere flows are given as zonal/meridional components `(u, v)` in
//! longitude/latitude and converted to Cartesian tangent vectors; both
//! reverse their deformation over one period `tau` while a zonal mean flow
//! keeps errors from cancelling between the half-periods. The two sphere
//! flows use different rotated-longitude arguments, `lon - 2 pi radius
//! t/tau` (divergent) versus `lon - 2 pi t/tau` (non-divergent); the
//! dimensional first form is intentional here — it reproduces the published
//! experiment definitions verbatim, anomaly included.
//!
//! The slice flow is periodic in `x`, impermeable at the top and bottom
//! walls (`w` carries a `sin(pi z / Hz)` factor), and returns every parcel
//! to its start at `t = tau`.

use crate::geometry::{east_north, lonlat, Vec3};
use crate::transport::FlowField;
use std::f64::consts::PI;

/// Sphere radius used by the experiment cases, metres.
pub const EARTH_RADIUS_M: f64 = 6_371_220.0;
/// Flow period of both sphere cases, seconds (twelve days).
pub const TAU_SPHERE_S: f64 = 1_036_800.0;
/// Flow period of the slice case, seconds.
pub const TAU_SLICE_S: f64 = 2000.0;

/// Zero velocity; steps with it must leave fields unchanged.
pub struct ZeroFlow;

impl FlowField for ZeroFlow {
    fn velocity(&self, _p: Vec3, _t: f64) -> Vec3 {
        [0.0, 0.0, 0.0]
    }
    fn divergence(&self, _p: Vec3, _t: f64) -> f64 {
        0.0
    }
}

/// Divergent reversing flow on the sphere:
/// `u = 2 pi a cos(phi)/tau - k sin^2(lon'/2) sin(2 phi) cos^2(phi) cos(pi t/tau)`,
/// `v = (k/2) sin(lon') cos^3(phi) cos(pi t/tau)`, with `k = 5 a/tau` and
/// `lon' = lon - 2 pi a t/tau`.
#[derive(Debug, Clone, Copy)]
pub struct SphereDivergentFlow {
    pub radius: f64,
    pub tau: f64,
}

impl SphereDivergentFlow {
    pub fn standard(radius: f64) -> Self {
        Self { radius, tau: TAU_SPHERE_S }
    }

    fn components(&self, lon: f64, lat: f64, t: f64) -> (f64, f64) {
        let a = self.radius;
        let k = 5.0 * a / self.tau;
        let lp = lon - 2.0 * PI * a * t / self.tau;
        let c = (PI * t / self.tau).cos();
        let u = 2.0 * PI * a * lat.cos() / self.tau
            - k * (lp / 2.0).sin().powi(2) * (2.0 * lat).sin() * lat.cos().powi(2) * c;
        let v = 0.5 * k * lp.sin() * lat.cos().powi(3) * c;
        (u, v)
    }
}

impl FlowField for SphereDivergentFlow {
    fn velocity(&self, p: Vec3, t: f64) -> Vec3 {
        let (lon, lat) = lonlat(p);
        let (u, v) = self.components(lon, lat, t);
        let (e, n) = east_north(lon, lat);
        [
            u * e[0] + v * n[0],
            u * e[1] + v * n[1],
            u * e[2] + v * n[2],
        ]
    }

    /// `div u = -(3k/a) sin(lon') sin(phi) cos^2(phi) cos(pi t/tau)`; the
    /// mean-flow term is divergence-free.
    fn divergence(&self, p: Vec3, t: f64) -> f64 {
        let (lon, lat) = lonlat(p);
        let a = self.radius;
        let k = 5.0 * a / self.tau;
        let lp = lon - 2.0 * PI * a * t / self.tau;
        let c = (PI * t / self.tau).cos();
        -(3.0 * k / a) * lp.sin() * lat.sin() * lat.cos().powi(2) * c
    }
}

/// Non-divergent reversing flow on the sphere with a zonal mean flow:
/// `u = k sin^2(lon') sin(2 phi) cos(pi t/tau) + 2 pi a cos(phi)/tau`,
/// `v = k sin(2 lon') cos(phi) cos(pi t/tau)`, with `k = 10 a/tau` and
/// `lon' = lon - 2 pi t/tau`.
#[derive(Debug, Clone, Copy)]
pub struct SphereNonDivergentFlow {
    pub radius: f64,
    pub tau: f64,
}

impl SphereNonDivergentFlow {
    pub fn standard(radius: f64) -> Self {
        Self { radius, tau: TAU_SPHERE_S }
    }

    fn components(&self, lon: f64, lat: f64, t: f64) -> (f64, f64) {
        let a = self.radius;
        let k = 10.0 * a / self.tau;
        let lp = lon - 2.0 * PI * t / self.tau;
        let c = (PI * t / self.tau).cos();
        let u = k * lp.sin().powi(2) * (2.0 * lat).sin() * c
            + 2.0 * PI * a * lat.cos() / self.tau;
        let v = k * (2.0 * lp).sin() * lat.cos() * c;
        (u, v)
    }
}

impl FlowField for SphereNonDivergentFlow {
    fn velocity(&self, p: Vec3, t: f64) -> Vec3 {
        let (lon, lat) = lonlat(p);
        let (u, v) = self.components(lon, lat, t);
        let (e, n) = east_north(lon, lat);
        [
            u * e[0] + v * n[0],
            u * e[1] + v * n[1],
            u * e[2] + v * n[2],
        ]
    }

    /// Exactly zero: `du/dlon` cancels `d(v cos(phi))/dphi` pointwise.
    fn divergence(&self, _p: Vec3, _t: f64) -> f64 {
        0.0
    }
}

/// Deformational flow on the periodic slice:
/// `u = U - (W pi Lx / Hz) cos(pi t/tau) cos(2 pi x'/Lx) cos(pi z/Hz)`,
/// `w = 2 pi W cos(pi t/tau) sin(2 pi x'/Lx) sin(pi z/Hz)`, with
/// `U = Lx/tau`, `W = U/10`, `x' = x - U t`.
#[derive(Debug, Clone, Copy)]
pub struct SliceDeformationFlow {
    pub lx: f64,
    pub hz: f64,
    pub tau: f64,
}

impl SliceDeformationFlow {
    pub fn standard(lx: f64, hz: f64) -> Self {
        Self { lx, hz, tau: TAU_SLICE_S }
    }

    pub fn mean_speed(&self) -> f64 {
        self.lx / self.tau
    }
}

impl FlowField for SliceDeformationFlow {
    fn velocity(&self, p: Vec3, t: f64) -> Vec3 {
        let u_mean = self.lx / self.tau;
        let w_amp = u_mean / 10.0;
        let xp = p[0] - u_mean * t;
        let c = (PI * t / self.tau).cos();
        let kx = 2.0 * PI * xp / self.lx;
        let kz = PI * p[1] / self.hz;
        let u = u_mean - (w_amp * PI * self.lx / self.hz) * c * kx.cos() * kz.cos();
        let w = 2.0 * PI * w_amp * c * kx.sin() * kz.sin();
        [u, w, 0.0]
    }

    /// `div u = (4 pi^2 W / Hz) cos(pi t/tau) sin(2 pi x'/Lx) cos(pi z/Hz)`.
    fn divergence(&self, p: Vec3, t: f64) -> f64 {
        let u_mean = self.lx / self.tau;
        let w_amp = u_mean / 10.0;
        let xp = p[0] - u_mean * t;
        let c = (PI * t / self.tau).cos();
        (4.0 * PI * PI * w_amp / self.hz)
            * c
            * (2.0 * PI * xp / self.lx).sin()
            * (PI * p[1] / self.hz).cos()
    }
}
