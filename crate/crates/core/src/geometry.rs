//! Small fixed-size vector helpers used by mesh charts and velocity fields.
//!
//! Points and vectors are plain `[f64; 3]`; slice-mesh quantities live in the
//! x-z plane with the third component zero.

pub type Vec3 = [f64; 3];

pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

pub fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn normalize(a: Vec3) -> Vec3 {
    scale(a, 1.0 / norm(a))
}

/// Longitude in (-pi, pi] and latitude in [-pi/2, pi/2] of a Cartesian point.
pub fn lonlat(p: Vec3) -> (f64, f64) {
    let r = norm(p);
    let lat = (p[2] / r).asin();
    let lon = p[1].atan2(p[0]);
    (lon, lat)
}

/// Local east/north unit vectors at longitude `lon`, latitude `lat`; used to
/// turn zonal/meridional velocity components into Cartesian vectors.
pub fn east_north(lon: f64, lat: f64) -> (Vec3, Vec3) {
    let e = [-lon.sin(), lon.cos(), 0.0];
    let n = [
        -lat.sin() * lon.cos(),
        -lat.sin() * lon.sin(),
        lat.cos(),
    ];
    (e, n)
}

/// Compensated (Neumaier) summation; deterministic given a fixed iteration
/// order and immune to cancellation at the 1e-16 level the conservation
/// diagnostics require.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}
