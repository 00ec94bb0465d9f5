//! Vertical-slice mesh builder.

use super::{BoundaryFacet, CellChart, Facet, Mesh, MeshKind, SliceParams};
use crate::error::{Error, Result};

/// Builds an `nx` by `nz` rectangular-cell mesh of the channel
/// `[0, lx) x [0, hz]`, periodic in x with rigid top and bottom walls.
///
/// Layout conventions:
/// - vertex `(i, j)` at `(i*dx, j*dz)` has id `i*(nz+1) + j` for
///   `i in 0..nx`, `j in 0..=nz` (the periodic seam reuses column 0);
/// - cell `(i, j)` covers `[i*dx, (i+1)*dx] x [j*dz, (j+1)*dz]` and has id
///   `i*nz + j` (z-fastest, matching the DOF ordering of slice spaces).
///
/// `nx >= 2` is required so the periodic wrap never pairs a cell with itself.
pub fn build_slice_mesh(nx: usize, nz: usize, lx: f64, hz: f64) -> Result<Mesh> {
    if nx < 2 {
        return Err(Error::InvalidMesh(format!(
            "slice needs nx >= 2 for periodic wrap, got nx={nx}"
        )));
    }
    if nz < 1 {
        return Err(Error::InvalidMesh(format!("slice needs nz >= 1, got nz={nz}")));
    }
    if !(lx.is_finite() && hz.is_finite() && lx > 0.0 && hz > 0.0) {
        return Err(Error::InvalidMesh(format!(
            "slice needs positive finite extents, got lx={lx}, hz={hz}"
        )));
    }
    let dx = lx / nx as f64;
    let dz = hz / nz as f64;
    let vid = |i: usize, j: usize| (i % nx) * (nz + 1) + j;
    let mut vertices = Vec::with_capacity(nx * (nz + 1));
    for i in 0..nx {
        for j in 0..=nz {
            vertices.push([i as f64 * dx, j as f64 * dz, 0.0]);
        }
    }
    let mut cell_vertices = Vec::with_capacity(nx * nz);
    let mut charts = Vec::with_capacity(nx * nz);
    for i in 0..nx {
        for j in 0..nz {
            cell_vertices.push([vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)]);
            charts.push(CellChart::Rect {
                x0: i as f64 * dx,
                z0: j as f64 * dz,
                dx,
                dz,
            });
        }
    }
    // Facets are enumerated directly rather than through vertex-pair
    // matching: with nx = 2 the periodic wrap makes distinct edges share
    // both endpoints, which would defeat pair keying.
    let cid = |i: usize, j: usize| (i % nx) * nz + j;
    let mut interior_facets = Vec::with_capacity(nx * nz + nx * (nz - 1));
    for i in 0..nx {
        for j in 0..nz {
            // Vertical facet between cell (i, j) and its right neighbour;
            // the left cell owns the facet.
            interior_facets.push(Facet {
                plus_cell: cid(i, j),
                plus_edge: 1,
                minus_cell: cid(i + 1, j),
                minus_edge: 3,
                reversed: false,
            });
            if j + 1 < nz {
                // Horizontal facet between cell (i, j) and the cell above;
                // the lower cell owns the facet.
                interior_facets.push(Facet {
                    plus_cell: cid(i, j),
                    plus_edge: 2,
                    minus_cell: cid(i, j + 1),
                    minus_edge: 0,
                    reversed: false,
                });
            }
        }
    }
    let mut boundary_facets = Vec::with_capacity(2 * nx);
    for i in 0..nx {
        boundary_facets.push(BoundaryFacet { cell: cid(i, 0), edge: 0 });
        boundary_facets.push(BoundaryFacet { cell: cid(i, nz - 1), edge: 2 });
    }
    Ok(Mesh {
        kind: MeshKind::Slice,
        slice: Some(SliceParams { nx, nz, lx, hz }),
        sphere: None,
        vertices,
        cell_vertices,
        charts,
        interior_facets,
        boundary_facets,
    })
}
