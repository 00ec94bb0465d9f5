//! Shared helpers for the integration suites: an independently derived
//! one-dimensional DG reference solver and a uniform horizontal flow.
//!
//! The 1D solver is written from the weak form by hand — dense per-cell
//! mass inverses, explicit upwind interface fluxes, explicit three-stage
//! Runge-Kutta — and shares no code with the library, so agreement with
//! the 2D operator is meaningful evidence rather than a tautology.

use dg_tracer::geometry::Vec3;
use dg_tracer::transport::FlowField;

/// Uniform horizontal velocity on a slice; divergence-free by construction.
pub struct UniformXFlow {
    pub u: f64,
}

impl FlowField for UniformXFlow {
    fn velocity(&self, _p: Vec3, _t: f64) -> Vec3 {
        [self.u, 0.0, 0.0]
    }

    fn divergence(&self, _p: Vec3, _t: f64) -> f64 {
        0.0
    }
}

/// Independent 1D periodic upwind-DG solver for `dq/dt + u dq/dx = 0` with
/// constant `u`, nodal elements of order 0 (cell means) or 1 (cell
/// endpoints).
pub struct OneDimDg {
    pub n: usize,
    pub h: f64,
    pub u: f64,
    pub order: usize,
    /// `q[cell][local node]`; one node for order 0, two for order 1.
    pub q: Vec<Vec<f64>>,
}

impl OneDimDg {
    pub fn new(n: usize, length: f64, u: f64, order: usize, ic: impl Fn(f64) -> f64) -> Self {
        assert!(order <= 1, "oracle supports orders 0 and 1, got {order}");
        let h = length / n as f64;
        let q = (0..n)
            .map(|i| {
                let x0 = i as f64 * h;
                match order {
                    0 => vec![ic(x0 + 0.5 * h)],
                    _ => vec![ic(x0), ic(x0 + h)],
                }
            })
            .collect();
        Self { n, h, u, order, q }
    }

    /// Weak-form time derivative of every coefficient.
    fn rhs(&self, q: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let n = self.n;
        let u = self.u;
        // Upwind interface value between cell `left` and cell `left+1`.
        let star = |left: usize| -> f64 {
            let right = (left + 1) % n;
            if u >= 0.0 {
                *q[left].last().unwrap()
            } else {
                q[right][0]
            }
        };
        (0..n)
            .map(|i| {
                let prev = (i + n - 1) % n;
                let flux_in = u * star(prev);
                let flux_out = u * star(i);
                match self.order {
                    0 => vec![(flux_in - flux_out) / self.h],
                    _ => {
                        // b_a = u ∫ q φ_a' dξ + boundary terms; then apply
                        // the exact inverse mass (1/h)·[[4,-2],[-2,4]].
                        let half = 0.5 * u * (q[i][0] + q[i][1]);
                        let b0 = -half + flux_in;
                        let b1 = half - flux_out;
                        vec![
                            (4.0 * b0 - 2.0 * b1) / self.h,
                            (-2.0 * b0 + 4.0 * b1) / self.h,
                        ]
                    }
                }
            })
            .collect()
    }

    /// One explicit three-stage strong-stability-preserving RK3 step,
    /// written out in Shu–Osher form.
    pub fn step(&mut self, dt: f64) {
        let axpy = |a: f64, x: &[Vec<f64>], b: f64, y: &[Vec<f64>], dt: f64, f: &[Vec<f64>]| {
            x.iter()
                .zip(y)
                .zip(f)
                .map(|((xc, yc), fc)| {
                    xc.iter()
                        .zip(yc)
                        .zip(fc)
                        .map(|((&xv, &yv), &fv)| a * xv + b * (yv + dt * fv))
                        .collect()
                })
                .collect::<Vec<Vec<f64>>>()
        };
        let q0 = self.q.clone();
        let f0 = self.rhs(&q0);
        let q1 = axpy(0.0, &q0, 1.0, &q0, dt, &f0);
        let f1 = self.rhs(&q1);
        let q2 = axpy(0.75, &q0, 0.25, &q1, dt, &f1);
        let f2 = self.rhs(&q2);
        self.q = axpy(1.0 / 3.0, &q0, 2.0 / 3.0, &q2, dt, &f2);
    }

    /// Value at 1D cell `i`, local node index `a`.
    pub fn value(&self, i: usize, a: usize) -> f64 {
        self.q[i][a]
    }

    /// Total integral of the 1D solution (not every test binary that
    /// includes this module uses it).
    #[allow(dead_code)]
    pub fn total_mass(&self) -> f64 {
        self.q
            .iter()
            .map(|c| match self.order {
                0 => self.h * c[0],
                _ => self.h * 0.5 * (c[0] + c[1]),
            })
            .sum()
    }
}
