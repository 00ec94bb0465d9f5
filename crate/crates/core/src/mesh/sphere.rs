//! Cubed-sphere mesh builder.

use super::{build_facets, CellChart, Mesh, MeshKind, SphereParams};
use crate::error::{Error, Result};
use crate::geometry::{add, normalize, scale, Vec3};
use std::collections::HashMap;

/// Outward normal and in-panel axes `(n, a1, a2)` of each of the six panels.
///
/// Chart: a point with equiangular coordinates `(alpha, beta)` in
/// `[-pi/4, pi/4]^2` maps to `radius * normalize(n + tan(alpha) a1 +
/// tan(beta) a2)`. Frames are chosen so `a1 x a2 = n` on every panel, which
/// orients all cells outward.
///
/// | panel | n   | a1  | a2  |
/// |-------|-----|-----|-----|
/// | 0     | +x  | +y  | +z  |
/// | 1     | +y  | -x  | +z  |
/// | 2     | -x  | -y  | +z  |
/// | 3     | -y  | +x  | +z  |
/// | 4     | +z  | +x  | +y  |
/// | 5     | -z  | +x  | -y  |
pub fn panel_frame(panel: u8) -> (Vec3, Vec3, Vec3) {
    match panel {
        0 => ([1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]),
        1 => ([0.0, 1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, 1.0]),
        2 => ([-1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, 1.0]),
        3 => ([0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]),
        4 => ([0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]),
        5 => ([0.0, 0.0, -1.0], [1.0, 0.0, 0.0], [0.0, -1.0, 0.0]),
        _ => unreachable!("panel index out of range"),
    }
}

/// Builds an equiangular cubed-sphere surface mesh with `ne` cells per panel
/// edge (`6*ne^2` cells total) and the given radius.
///
/// Vertices shared between panels coincide analytically (gnomonic lattice
/// lines are great circles) and are deduplicated by quantised coordinates at
/// a relative tolerance of 1e-9, nine orders below the coarsest cell size.
pub fn build_cubed_sphere_mesh(ne: usize, radius: f64) -> Result<Mesh> {
    if ne < 1 {
        return Err(Error::InvalidMesh(format!("cubed sphere needs ne >= 1, got ne={ne}")));
    }
    if !(radius.is_finite() && radius > 0.0) {
        return Err(Error::InvalidMesh(format!(
            "cubed sphere needs positive finite radius, got {radius}"
        )));
    }
    let da = std::f64::consts::FRAC_PI_2 / ne as f64;
    let a_of = |k: usize| -std::f64::consts::FRAC_PI_4 + k as f64 * da;
    let quantum = radius * 1e-9;

    let mut vertices: Vec<Vec3> = Vec::new();
    let mut lookup: HashMap<(i64, i64, i64), usize> = HashMap::new();
    let mut intern = |p: Vec3, vertices: &mut Vec<Vec3>| -> usize {
        let key = (
            (p[0] / quantum).round() as i64,
            (p[1] / quantum).round() as i64,
            (p[2] / quantum).round() as i64,
        );
        *lookup.entry(key).or_insert_with(|| {
            vertices.push(p);
            vertices.len() - 1
        })
    };

    let point_at = |panel: u8, alpha: f64, beta: f64| -> Vec3 {
        let (n, a1, a2) = panel_frame(panel);
        let c = add(add(n, scale(a1, alpha.tan())), scale(a2, beta.tan()));
        scale(normalize(c), radius)
    };

    let mut cell_vertices = Vec::with_capacity(6 * ne * ne);
    let mut charts = Vec::with_capacity(6 * ne * ne);
    for panel in 0..6u8 {
        // Panel-local vertex grid, interned into the global list.
        let mut grid = vec![0usize; (ne + 1) * (ne + 1)];
        for ib in 0..=ne {
            for ia in 0..=ne {
                let p = point_at(panel, a_of(ia), a_of(ib));
                grid[ib * (ne + 1) + ia] = intern(p, &mut vertices);
            }
        }
        for ib in 0..ne {
            for ia in 0..ne {
                let g = |a: usize, b: usize| grid[b * (ne + 1) + a];
                cell_vertices.push([
                    g(ia, ib),
                    g(ia + 1, ib),
                    g(ia + 1, ib + 1),
                    g(ia, ib + 1),
                ]);
                charts.push(CellChart::Panel {
                    panel,
                    a0: a_of(ia),
                    b0: a_of(ib),
                    da,
                    db: da,
                });
            }
        }
    }
    let (interior_facets, boundary_facets) = build_facets(&cell_vertices);
    if !boundary_facets.is_empty() {
        return Err(Error::InvalidMesh(format!(
            "cubed sphere produced {} unmatched facets; vertex deduplication failed",
            boundary_facets.len()
        )));
    }
    Ok(Mesh {
        kind: MeshKind::CubedSphere,
        slice: None,
        sphere: Some(SphereParams { ne, radius }),
        vertices,
        cell_vertices,
        charts,
        interior_facets,
        boundary_facets,
    })
}
