//! Quadrilateral meshes, cell charts, facet topology and quadrature.
//!
//! Two mesh families are supported:
//! - a vertical slice: `nx` by `nz` rectangular cells, periodic in x, rigid
//!   (wall) top and bottom boundaries, lying in the x-z plane;
//! - a cubed sphere: six gnomonic panels of `ne` by `ne` curved cells tiling
//!   the sphere surface exactly (charts map through equiangular coordinates,
//!   so cell edges are great-circle arcs and cells tile without gaps).
//!
//! Reference-cell conventions used throughout the crate:
//! - reference cell is `[-1, 1]^2` with coordinates `(xi, eta)`;
//! - corners are numbered counterclockwise: `c0 = (-1,-1)`, `c1 = (1,-1)`,
//!   `c2 = (1,1)`, `c3 = (-1,1)`; `cell_vertices[cell]` lists the vertex ids
//!   at `c0..c3`;
//! - local edges: `0` bottom (`eta = -1`, traversed in `+xi`), `1` right
//!   (`xi = 1`, traversed in `+eta`), `2` top (`eta = 1`, `+xi`), `3` left
//!   (`xi = -1`, `+eta`).
//!
//! Interior facets store a `plus` and `minus` side; the plus side is the cell
//! encountered first in cell order and owns the facet geometry: quadrature
//! points, normals (oriented outward from the plus cell) and length weights
//! are all evaluated from the plus chart, and the minus side reuses them via
//! its own reference coordinates. Using one shared rule for both sides is
//! what makes the DG flux terms telescope exactly in the conservation checks.

mod slice;
mod sphere;

pub use slice::build_slice_mesh;
pub use sphere::build_cubed_sphere_mesh;

use crate::error::{Error, Result};
use crate::geometry::{add, cross, dot, norm, normalize, scale, Vec3};
use crate::quadrature::gauss_legendre;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MeshKind {
    Slice,
    CubedSphere,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SliceParams {
    pub nx: usize,
    pub nz: usize,
    /// Periodic channel length in x.
    pub lx: f64,
    /// Channel height in z.
    pub hz: f64,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SphereParams {
    /// Cells per panel edge; the mesh has `6 * ne^2` cells.
    pub ne: usize,
    pub radius: f64,
}

/// Per-cell chart parameters mapping the reference square to physical space.
#[derive(Debug, Clone, Copy, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CellChart {
    /// Axis-aligned rectangle in the x-z plane.
    Rect { x0: f64, z0: f64, dx: f64, dz: f64 },
    /// Equiangular gnomonic patch: `(alpha, beta) = (a0 + da*(xi+1)/2,
    /// b0 + db*(eta+1)/2)`, mapped to the sphere via the panel frame.
    Panel {
        panel: u8,
        a0: f64,
        b0: f64,
        da: f64,
        db: f64,
    },
}

/// Interior facet shared by two cells. `reversed` records whether the minus
/// side traverses the shared edge in the opposite parameter direction.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Facet {
    pub plus_cell: usize,
    pub plus_edge: u8,
    pub minus_cell: usize,
    pub minus_edge: u8,
    pub reversed: bool,
}

/// Wall facet of a slice mesh (top or bottom boundary).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BoundaryFacet {
    pub cell: usize,
    pub edge: u8,
}

/// One volume quadrature point: physical location, physical weight (summing
/// to the cell area over a cell), reference coordinates and the two chart
/// tangent columns `d(point)/d(xi)`, `d(point)/d(eta)` used for gradient
/// transforms.
#[derive(Debug, Clone, Copy)]
pub struct CellQuadPoint {
    pub point: Vec3,
    pub weight: f64,
    pub xi: f64,
    pub eta: f64,
    pub tangents: [Vec3; 2],
}

/// One facet quadrature point shared by both sides of an interior facet.
/// `normal` points outward from the plus cell.
#[derive(Debug, Clone, Copy)]
pub struct FacetQuadPoint {
    pub point: Vec3,
    pub normal: Vec3,
    pub weight: f64,
    pub ref_plus: (f64, f64),
    pub ref_minus: (f64, f64),
}

#[derive(Debug)]
pub struct Mesh {
    pub kind: MeshKind,
    pub slice: Option<SliceParams>,
    pub sphere: Option<SphereParams>,
    pub vertices: Vec<Vec3>,
    /// Vertex ids at reference corners `c0..c3`, per cell.
    pub cell_vertices: Vec<[usize; 4]>,
    pub charts: Vec<CellChart>,
    pub interior_facets: Vec<Facet>,
    pub boundary_facets: Vec<BoundaryFacet>,
}

/// Reference coordinates of a point on local `edge` at edge parameter
/// `s` in [-1, 1].
pub fn edge_ref_point(edge: u8, s: f64) -> (f64, f64) {
    match edge {
        0 => (s, -1.0),
        1 => (1.0, s),
        2 => (s, 1.0),
        3 => (-1.0, s),
        _ => unreachable!("edge index out of range"),
    }
}

/// Local corner indices (start, end) of `edge` in its traversal direction.
pub fn edge_corners(edge: u8) -> (usize, usize) {
    match edge {
        0 => (0, 1),
        1 => (1, 2),
        2 => (3, 2),
        3 => (0, 3),
        _ => unreachable!("edge index out of range"),
    }
}

/// Outward unit normal of `edge` in reference coordinates.
fn edge_ref_normal(edge: u8) -> (f64, f64) {
    match edge {
        0 => (0.0, -1.0),
        1 => (1.0, 0.0),
        2 => (0.0, 1.0),
        3 => (-1.0, 0.0),
        _ => unreachable!("edge index out of range"),
    }
}

/// True if the edge runs along `xi` (tangent is the first chart column).
fn edge_along_xi(edge: u8) -> bool {
    edge == 0 || edge == 2
}

impl Mesh {
    pub fn n_cells(&self) -> usize {
        self.charts.len()
    }

    /// Physical position of reference point `(xi, eta)` in `cell`.
    pub fn chart_point(&self, cell: usize, xi: f64, eta: f64) -> Vec3 {
        match self.charts[cell] {
            CellChart::Rect { x0, z0, dx, dz } => {
                [x0 + dx * (xi + 1.0) * 0.5, z0 + dz * (eta + 1.0) * 0.5, 0.0]
            }
            CellChart::Panel { panel, a0, b0, da, db } => {
                let alpha = a0 + da * (xi + 1.0) * 0.5;
                let beta = b0 + db * (eta + 1.0) * 0.5;
                let r = self.sphere.expect("panel chart on non-sphere mesh").radius;
                let (n, a1, a2) = sphere::panel_frame(panel);
                let c = add(add(n, scale(a1, alpha.tan())), scale(a2, beta.tan()));
                scale(normalize(c), r)
            }
        }
    }

    /// Chart tangent columns `[d(point)/d(xi), d(point)/d(eta)]` at `(xi, eta)`.
    pub fn chart_tangents(&self, cell: usize, xi: f64, eta: f64) -> [Vec3; 2] {
        match self.charts[cell] {
            CellChart::Rect { dx, dz, .. } => {
                [[dx * 0.5, 0.0, 0.0], [0.0, dz * 0.5, 0.0]]
            }
            CellChart::Panel { panel, a0, b0, da, db } => {
                let alpha = a0 + da * (xi + 1.0) * 0.5;
                let beta = b0 + db * (eta + 1.0) * 0.5;
                let r = self.sphere.expect("panel chart on non-sphere mesh").radius;
                let (n, a1, a2) = sphere::panel_frame(panel);
                let c = add(add(n, scale(a1, alpha.tan())), scale(a2, beta.tan()));
                let cn = norm(c);
                let chat = scale(c, 1.0 / cn);
                // d/dalpha of r*c/|c| is (r/|c|) (I - chat chat^T) dc/dalpha.
                let seca = 1.0 / alpha.cos();
                let secb = 1.0 / beta.cos();
                let dca = scale(a1, seca * seca);
                let dcb = scale(a2, secb * secb);
                let proj = |v: Vec3| sub_proj(v, chat);
                let ta = scale(proj(dca), r / cn * (da * 0.5));
                let tb = scale(proj(dcb), r / cn * (db * 0.5));
                [ta, tb]
            }
        }
    }

    /// Volume quadrature of `cell` with an `n_q`-point Gauss rule per
    /// direction. Weights are positive and sum to the cell area.
    pub fn cell_quadrature(&self, cell: usize, n_q: usize) -> Result<Vec<CellQuadPoint>> {
        if n_q == 0 {
            return Err(Error::InvalidMesh("quadrature point count must be >= 1".into()));
        }
        let rule = gauss_legendre(n_q);
        let mut out = Vec::with_capacity(n_q * n_q);
        for (je, &eta) in rule.points.iter().enumerate() {
            for (ji, &xi) in rule.points.iter().enumerate() {
                let tangents = self.chart_tangents(cell, xi, eta);
                let area = norm(cross(tangents[0], tangents[1]));
                out.push(CellQuadPoint {
                    point: self.chart_point(cell, xi, eta),
                    weight: rule.weights[ji] * rule.weights[je] * area,
                    xi,
                    eta,
                    tangents,
                });
            }
        }
        Ok(out)
    }

    /// Quadrature of interior facet `facet` with `n_q` points along the edge.
    /// Points, weights and normals are computed once from the plus side and
    /// shared by both sides; `ref_minus` accounts for opposite traversal when
    /// the facet is `reversed`.
    pub fn facet_quadrature(&self, facet: &Facet, n_q: usize) -> Result<Vec<FacetQuadPoint>> {
        if n_q == 0 {
            return Err(Error::InvalidMesh("quadrature point count must be >= 1".into()));
        }
        let rule = gauss_legendre(n_q);
        let mut out = Vec::with_capacity(n_q);
        for (k, &s) in rule.points.iter().enumerate() {
            let (xi, eta) = edge_ref_point(facet.plus_edge, s);
            let tangents = self.chart_tangents(facet.plus_cell, xi, eta);
            let t_edge = if edge_along_xi(facet.plus_edge) { tangents[0] } else { tangents[1] };
            let point = self.chart_point(facet.plus_cell, xi, eta);
            let normal = self.facet_normal(facet.plus_edge, point, &tangents);
            let s_minus = if facet.reversed { -s } else { s };
            out.push(FacetQuadPoint {
                point,
                normal,
                weight: rule.weights[k] * norm(t_edge),
                ref_plus: (xi, eta),
                ref_minus: edge_ref_point(facet.minus_edge, s_minus),
            });
        }
        Ok(out)
    }

    /// Quadrature of a wall facet; the normal points out of the domain.
    pub fn boundary_facet_quadrature(
        &self,
        bf: &BoundaryFacet,
        n_q: usize,
    ) -> Result<Vec<FacetQuadPoint>> {
        if n_q == 0 {
            return Err(Error::InvalidMesh("quadrature point count must be >= 1".into()));
        }
        let rule = gauss_legendre(n_q);
        let mut out = Vec::with_capacity(n_q);
        for (k, &s) in rule.points.iter().enumerate() {
            let (xi, eta) = edge_ref_point(bf.edge, s);
            let tangents = self.chart_tangents(bf.cell, xi, eta);
            let t_edge = if edge_along_xi(bf.edge) { tangents[0] } else { tangents[1] };
            let point = self.chart_point(bf.cell, xi, eta);
            let normal = self.facet_normal(bf.edge, point, &tangents);
            out.push(FacetQuadPoint {
                point,
                normal,
                weight: rule.weights[k] * norm(t_edge),
                ref_plus: (xi, eta),
                ref_minus: (xi, eta),
            });
        }
        Ok(out)
    }

    /// Unit normal of a facet at a point, outward from the owning cell's edge.
    /// Slice edges have exact axis normals; sphere normals are tangent to the
    /// sphere and orthogonal to the edge, sign-fixed by the pushed-forward
    /// outward reference normal.
    fn facet_normal(&self, edge: u8, point: Vec3, tangents: &[Vec3; 2]) -> Vec3 {
        match self.kind {
            MeshKind::Slice => match edge {
                0 => [0.0, -1.0, 0.0],
                1 => [1.0, 0.0, 0.0],
                2 => [0.0, 1.0, 0.0],
                3 => [-1.0, 0.0, 0.0],
                _ => unreachable!("edge index out of range"),
            },
            MeshKind::CubedSphere => {
                let t_edge = if edge_along_xi(edge) { tangents[0] } else { tangents[1] };
                let rhat = normalize(point);
                let mut n = normalize(cross(t_edge, rhat));
                let (nx, ne_) = edge_ref_normal(edge);
                let v_out = add(scale(tangents[0], nx), scale(tangents[1], ne_));
                if dot(n, v_out) < 0.0 {
                    n = scale(n, -1.0);
                }
                n
            }
        }
    }

    /// Total surface measure (sum of all cell quadrature weights).
    pub fn total_area(&self, n_q: usize) -> Result<f64> {
        let mut acc = crate::geometry::NeumaierSum::new();
        for cell in 0..self.n_cells() {
            for qp in self.cell_quadrature(cell, n_q)? {
                acc.add(qp.weight);
            }
        }
        Ok(acc.value())
    }

    /// Serialises the mesh topology and chart parameters to JSON.
    pub fn to_json(&self) -> serde_json::Value {
        #[derive(Serialize)]
        struct CellOut<'a> {
            vertices: &'a [usize; 4],
            chart: &'a CellChart,
        }
        let cells: Vec<CellOut> = self
            .cell_vertices
            .iter()
            .zip(&self.charts)
            .map(|(v, c)| CellOut { vertices: v, chart: c })
            .collect();
        serde_json::json!({
            "kind": self.kind,
            "slice": self.slice,
            "sphere": self.sphere,
            "n_vertices": self.vertices.len(),
            "n_cells": self.n_cells(),
            "n_interior_facets": self.interior_facets.len(),
            "n_boundary_facets": self.boundary_facets.len(),
            "vertices": self.vertices,
            "cells": cells,
            "interior_facets": self.interior_facets,
            "boundary_facets": self.boundary_facets,
        })
    }
}

/// `v - (v . chat) chat`.
fn sub_proj(v: Vec3, chat: Vec3) -> Vec3 {
    let d = dot(v, chat);
    [v[0] - d * chat[0], v[1] - d * chat[1], v[2] - d * chat[2]]
}

/// Builds interior and boundary facet lists from cell corner vertices.
/// Cells are visited in index order and edges in local order, so the plus
/// side of every interior facet is the first cell that touched it; this makes
/// facet ownership deterministic.
pub(crate) fn build_facets(
    cell_vertices: &[[usize; 4]],
) -> (Vec<Facet>, Vec<BoundaryFacet>) {
    use std::collections::HashMap;
    // Open edges: sorted vertex pair -> (cell, edge, traversal start vertex).
    let mut open: HashMap<(usize, usize), (usize, u8, usize)> = HashMap::new();
    let mut interior = Vec::new();
    for (cell, cv) in cell_vertices.iter().enumerate() {
        for edge in 0..4u8 {
            let (la, lb) = edge_corners(edge);
            let (va, vb) = (cv[la], cv[lb]);
            let key = (va.min(vb), va.max(vb));
            if let Some((pc, pe, p_start)) = open.remove(&key) {
                interior.push(Facet {
                    plus_cell: pc,
                    plus_edge: pe,
                    minus_cell: cell,
                    minus_edge: edge,
                    reversed: p_start != va,
                });
            } else {
                open.insert(key, (cell, edge, va));
            }
        }
    }
    let mut boundary: Vec<BoundaryFacet> = open
        .into_values()
        .map(|(cell, edge, _)| BoundaryFacet { cell, edge })
        .collect();
    boundary.sort_by_key(|b| (b.cell, b.edge));
    (interior, boundary)
}
