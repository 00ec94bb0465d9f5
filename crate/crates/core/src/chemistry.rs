//! Terminator-toy chemistry: two species `X` and `X2` exchanging mass
//! through `X + X -> X2` (rate `k2 X^2`) and `X2 -> 2X` (rate `k1 X2`), so
//! the combined total `X_T = X + 2 X2` is pointwise invariant.
//!
//! The production rate `k1` peaks at one point of the sphere and is clamped
//! to zero on the far hemisphere (the "terminator" line `k1 = 0` separates
//! day from night). The tendency `f = k1 X2 - k2 X^2` is evaluated
//! implicitly: a backward-Euler-consistent scalar quadratic solved in closed
//! form, taking the root continuous with the explicit tendency as the step
//! vanishes. That root intrinsically satisfies
//! `-X/(2 dt) <= f <= X2/dt`, so the subsequent forward update
//! `X += 2 dt f`, `X2 -= dt f` keeps both species non-negative; the
//! additional published clamp `[-X/dt, 2 X2/dt]` is retained but is strictly
//! looser and never binds.

use crate::error::{Error, Result};
use crate::field::Field;
use crate::geometry::lonlat;
use crate::space::FunctionSpace;
use std::sync::Arc;

/// Dimer-formation rate; constant everywhere.
pub const K2: f64 = 1.0;

/// Reaction-center location and total mixing ratio for the terminator test.
#[derive(Debug, Clone, Copy)]
pub struct ChemistryParams {
    /// Longitude of the peak production rate, radians.
    pub lambda_c: f64,
    /// Latitude of the peak production rate, radians.
    pub phi_c: f64,
    /// Initial combined total `X + 2 X2`, dimensionless.
    pub x_total: f64,
}

impl Default for ChemistryParams {
    fn default() -> Self {
        Self {
            lambda_c: std::f64::consts::PI / 9.0,
            phi_c: -std::f64::consts::PI / 3.0,
            x_total: 4e-6,
        }
    }
}

/// Production rate `k1(lon, lat) = max(0, cos of great-circle angle to the
/// center)`: 1 at the center, 0 beyond 90 degrees.
pub fn reaction_rate_k1(params: &ChemistryParams, lon: f64, lat: f64) -> f64 {
    let c = lat.sin() * params.phi_c.sin()
        + lat.cos() * params.phi_c.cos() * (lon - params.lambda_c).cos();
    c.max(0.0)
}

/// Steady state of the two-species system at given rates and total:
/// `r = k1/(4 k2)`, `D = sqrt(r^2 + 2 r X_T)`, `X = D - r`,
/// `X2 = (X_T - X)/2`. The total `X + 2 X2` is reproduced to well below
/// 1e-18 absolute.
pub fn terminator_equilibrium(k1: f64, k2: f64, x_total: f64) -> (f64, f64) {
    let r = k1 / (4.0 * k2);
    let d = (r * r + 2.0 * r * x_total).sqrt();
    let x = d - r;
    let x2 = 0.5 * (x_total - x);
    (x, x2)
}

/// Implicit tendency: solves `f = k1 (X2 - dt f) - k2 (X + 2 dt f)^2` for
/// `f` in closed form, i.e. the quadratic
/// `4 k2 dt^2 f^2 + (1 + k1 dt + 4 k2 dt X) f - (k1 X2 - k2 X^2) = 0`,
/// choosing the root `-2c / (b + sqrt(b^2 - 4 a c))` that reduces to the
/// explicit `k1 X2 - k2 X^2` as `dt -> 0`. The discriminant is provably
/// positive for non-negative states; a negative value signals an
/// inadmissible input and errors out.
pub fn chemistry_tendency(x: f64, x2: f64, k1: f64, k2: f64, dt: f64) -> Result<f64> {
    let a = 4.0 * k2 * dt * dt;
    let b = 1.0 + k1 * dt + 4.0 * k2 * dt * x;
    let c = -(k1 * x2 - k2 * x * x);
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return Err(Error::NonFinite(format!(
            "chemistry quadratic has no real root: X={x:.6e}, X2={x2:.6e}, k1={k1:.6e}, \
             dt={dt:.3e}, discriminant={disc:.6e}; inputs must be non-negative"
        )));
    }
    let mut f = -2.0 * c / (b + disc.sqrt());
    // Published clamp; the implicit root already sits inside it.
    if f < 0.0 {
        f = f.max(-x / dt);
    } else {
        f = f.min(2.0 * x2 / dt);
    }
    Ok(f)
}

/// Nodal chemistry bound to one function space: caches `k1` at every dof
/// position (the rates are time-independent).
pub struct Chemistry {
    pub params: ChemistryParams,
    space: Arc<FunctionSpace>,
    k1_nodes: Vec<f64>,
}

impl Chemistry {
    pub fn for_space(space: &Arc<FunctionSpace>, params: ChemistryParams) -> Self {
        let k1_nodes = space
            .node_positions()
            .iter()
            .map(|&p| {
                let (lon, lat) = lonlat(p);
                reaction_rate_k1(&params, lon, lat)
            })
            .collect();
        Self { params, space: Arc::clone(space), k1_nodes }
    }

    pub fn k1_nodes(&self) -> &[f64] {
        &self.k1_nodes
    }

    /// Species fields in chemical equilibrium with the cached rates and the
    /// configured total.
    pub fn equilibrium_fields(&self) -> (Field, Field) {
        let mut x = Field::zeros(&self.space);
        let mut x2 = Field::zeros(&self.space);
        for (i, &k1) in self.k1_nodes.iter().enumerate() {
            let (xv, x2v) = terminator_equilibrium(k1, K2, self.params.x_total);
            x.data[i] = xv;
            x2.data[i] = x2v;
        }
        (x, x2)
    }

    /// One forward-Euler chemistry step at every node: `X += 2 dt f`,
    /// `X2 -= dt f` with the implicit tendency. The nodal total `X + 2 X2`
    /// is structurally unchanged.
    pub fn step(&self, x: &mut Field, x2: &mut Field, dt: f64) -> Result<()> {
        if !crate::space::same_space(&x.space, &self.space)
            || !crate::space::same_space(&x2.space, &self.space)
        {
            return Err(Error::Mismatch(
                "chemistry step received fields from a different space than the \
                 cached rates"
                    .into(),
            ));
        }
        if !(dt > 0.0) {
            return Err(Error::Config(format!("chemistry step needs dt > 0, got {dt}")));
        }
        for i in 0..self.space.n_dofs {
            let f = chemistry_tendency(x.data[i], x2.data[i], self.k1_nodes[i], K2, dt)?;
            x.data[i] += 2.0 * dt * f;
            x2.data[i] -= dt * f;
        }
        Ok(())
    }
}
