//! Nodal tensor-product function spaces on slice and cubed-sphere meshes.
//!
//! A space is specified per reference axis by a family (discontinuous or
//! continuous Lagrange) and a polynomial degree; basis functions are tensor
//! products of equispaced-node 1D Lagrange polynomials on `[-1, 1]`.
//!
//! Supported combinations:
//! - slice: horizontal (periodic in x) discontinuous degree 0..2 or
//!   continuous degree 1..2; vertical discontinuous degree 0..2 or continuous
//!   degree 1..2;
//! - cubed sphere: both reference axes must carry the same family and degree;
//!   discontinuous degree 0..2 or continuous degree 1 (vertices).
//!
//! DOF conventions (deterministic, relied on by tests):
//! - local nodes are numbered x-fastest: `l = lv * (degree_h + 1) + lh`;
//! - slice global ids are `dof_h * ndof_v + dof_v` (z-fastest), with axis
//!   dofs numbered left-to-right / bottom-to-top and the periodic seam
//!   wrapping to 0;
//! - sphere discontinuous ids are `cell * nloc + l`; continuous degree-1 ids
//!   are mesh vertex ids.

use crate::error::{Error, Result};
use crate::linalg::{CsrMatrix, DenseChol};
use crate::mesh::{Mesh, MeshKind};
use crate::quadrature::gauss_legendre;
use serde::Serialize;
use std::sync::{Arc, OnceLock};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Discontinuous,
    Continuous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct AxisSpec {
    pub family: Family,
    pub degree: usize,
}

impl AxisSpec {
    pub fn discontinuous(degree: usize) -> Self {
        Self { family: Family::Discontinuous, degree }
    }

    pub fn continuous(degree: usize) -> Self {
        Self { family: Family::Continuous, degree }
    }
}

/// Tensor-product space specification; `horizontal` is the x (or first
/// panel) axis, `vertical` the z (or second panel) axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SpaceSpec {
    pub horizontal: AxisSpec,
    pub vertical: AxisSpec,
}

impl SpaceSpec {
    /// Fully discontinuous density space of the given order.
    pub fn density(order: usize) -> Self {
        Self {
            horizontal: AxisSpec::discontinuous(order),
            vertical: AxisSpec::discontinuous(order),
        }
    }

    /// Slice tracer space staggered in the vertical: discontinuous of the
    /// given order horizontally, continuous of order+1 vertically.
    pub fn staggered_tracer(order: usize) -> Self {
        Self {
            horizontal: AxisSpec::discontinuous(order),
            vertical: AxisSpec::continuous(order + 1),
        }
    }

    /// Fully discontinuous enrichment of the order-1 staggered tracer space,
    /// used as the transport space for staggered order-1 runs.
    pub fn staggered_transport() -> Self {
        Self {
            horizontal: AxisSpec::discontinuous(1),
            vertical: AxisSpec::discontinuous(2),
        }
    }

    /// Fully continuous bilinear space, the intermediate target of the
    /// averaging-based recovery operators.
    pub fn continuous_linear() -> Self {
        Self {
            horizontal: AxisSpec::continuous(1),
            vertical: AxisSpec::continuous(1),
        }
    }
}

/// 1D DOF layout along one slice axis.
#[derive(Debug, Clone)]
pub struct Axis {
    pub ncell: usize,
    pub spec: AxisSpec,
    pub periodic: bool,
    pub ndof: usize,
}

impl Axis {
    fn new(ncell: usize, spec: AxisSpec, periodic: bool) -> Self {
        let ndof = match spec.family {
            Family::Discontinuous => ncell * (spec.degree + 1),
            Family::Continuous => {
                if periodic {
                    ncell * spec.degree
                } else {
                    ncell * spec.degree + 1
                }
            }
        };
        Self { ncell, spec, periodic, ndof }
    }

    /// Global axis dof of local node `l` in cell `c`.
    pub fn dof(&self, c: usize, l: usize) -> usize {
        match self.spec.family {
            Family::Discontinuous => c * (self.spec.degree + 1) + l,
            Family::Continuous => {
                let d = c * self.spec.degree + l;
                if self.periodic {
                    d % self.ndof
                } else {
                    d
                }
            }
        }
    }
}

/// Basis values (and reference gradients) at a fixed list of reference
/// points, laid out `[point * nloc + local_node]`.
#[derive(Debug, Clone)]
pub struct BasisTable {
    pub nloc: usize,
    pub v: Vec<f64>,
    pub dxi: Vec<f64>,
    pub deta: Vec<f64>,
}

impl BasisTable {
    pub fn value(&self, point: usize, local: usize) -> f64 {
        self.v[point * self.nloc + local]
    }

    pub fn grad(&self, point: usize, local: usize) -> (f64, f64) {
        let k = point * self.nloc + local;
        (self.dxi[k], self.deta[k])
    }
}

/// Evaluates the 1D Lagrange basis on `nodes` at `x`; writes values and,
/// when given, derivatives.
pub fn lagrange_basis(nodes: &[f64], x: f64, vals: &mut [f64], mut derivs: Option<&mut [f64]>) {
    let n = nodes.len();
    for i in 0..n {
        let mut v = 1.0;
        for j in 0..n {
            if j != i {
                v *= (x - nodes[j]) / (nodes[i] - nodes[j]);
            }
        }
        vals[i] = v;
        if let Some(d) = derivs.as_deref_mut() {
            let mut acc = 0.0;
            for k in 0..n {
                if k != i {
                    let mut t = 1.0 / (nodes[i] - nodes[k]);
                    for j in 0..n {
                        if j != i && j != k {
                            t *= (x - nodes[j]) / (nodes[i] - nodes[j]);
                        }
                    }
                    acc += t;
                }
            }
            d[i] = acc;
        }
    }
}

fn equispaced_nodes(degree: usize) -> Vec<f64> {
    if degree == 0 {
        vec![0.0]
    } else {
        (0..=degree).map(|l| -1.0 + 2.0 * l as f64 / degree as f64).collect()
    }
}

#[derive(Debug)]
pub struct FunctionSpace {
    pub mesh: Arc<Mesh>,
    pub spec: SpaceSpec,
    pub n_dofs: usize,
    pub nloc: usize,
    pub nodes_h: Vec<f64>,
    pub nodes_v: Vec<f64>,
    /// Flattened `[cell * nloc + local] -> global dof`.
    cell_dofs: Vec<usize>,
    /// Slice meshes expose the per-axis layout (used by recovery's boundary
    /// treatment); `None` on the sphere.
    pub axes: Option<(Axis, Axis)>,
    mass_default: OnceLock<Arc<Vec<DenseChol>>>,
}

/// Builds a function space, validating the family/degree combination against
/// the mesh kind.
pub fn make_space(mesh: &Arc<Mesh>, spec: SpaceSpec) -> Result<Arc<FunctionSpace>> {
    let check_axis = |a: AxisSpec, what: &str| -> Result<()> {
        if a.degree > 2 {
            return Err(Error::UnsupportedSpace(format!(
                "{what} degree {} exceeds the supported maximum of 2",
                a.degree
            )));
        }
        if a.family == Family::Continuous && a.degree == 0 {
            return Err(Error::UnsupportedSpace(format!(
                "{what} cannot be continuous with degree 0"
            )));
        }
        Ok(())
    };
    check_axis(spec.horizontal, "horizontal axis")?;
    check_axis(spec.vertical, "vertical axis")?;

    let nh = spec.horizontal.degree + 1;
    let nv = spec.vertical.degree + 1;
    let nloc = nh * nv;
    let nodes_h = equispaced_nodes(spec.horizontal.degree);
    let nodes_v = equispaced_nodes(spec.vertical.degree);

    match mesh.kind {
        MeshKind::Slice => {
            let sp = mesh.slice.expect("slice mesh without parameters");
            let ax = Axis::new(sp.nx, spec.horizontal, true);
            let az = Axis::new(sp.nz, spec.vertical, false);
            let n_dofs = ax.ndof * az.ndof;
            let mut cell_dofs = vec![0usize; mesh.n_cells() * nloc];
            for i in 0..sp.nx {
                for j in 0..sp.nz {
                    let cell = i * sp.nz + j;
                    for lv in 0..nv {
                        for lh in 0..nh {
                            let l = lv * nh + lh;
                            cell_dofs[cell * nloc + l] = ax.dof(i, lh) * az.ndof + az.dof(j, lv);
                        }
                    }
                }
            }
            Ok(Arc::new(FunctionSpace {
                mesh: Arc::clone(mesh),
                spec,
                n_dofs,
                nloc,
                nodes_h,
                nodes_v,
                cell_dofs,
                axes: Some((ax, az)),
                mass_default: OnceLock::new(),
            }))
        }
        MeshKind::CubedSphere => {
            if spec.horizontal != spec.vertical {
                return Err(Error::UnsupportedSpace(format!(
                    "sphere spaces need identical family and degree on both reference axes, \
                     got {:?} and {:?}; vertically-staggered spaces are slice-only",
                    spec.horizontal, spec.vertical
                )));
            }
            let a = spec.horizontal;
            match a.family {
                Family::Discontinuous => {
                    let n_dofs = mesh.n_cells() * nloc;
                    let cell_dofs = (0..mesh.n_cells() * nloc).collect();
                    Ok(Arc::new(FunctionSpace {
                        mesh: Arc::clone(mesh),
                        spec,
                        n_dofs,
                        nloc,
                        nodes_h,
                        nodes_v,
                        cell_dofs,
                        axes: None,
                        mass_default: OnceLock::new(),
                    }))
                }
                Family::Continuous => {
                    if a.degree != 1 {
                        return Err(Error::UnsupportedSpace(format!(
                            "sphere continuous spaces support degree 1 only, got {}",
                            a.degree
                        )));
                    }
                    // Local numbering (x-fastest from corner c0) maps to the
                    // counterclockwise corner list as [c0, c1, c3, c2].
                    let mut cell_dofs = vec![0usize; mesh.n_cells() * 4];
                    for (cell, cv) in mesh.cell_vertices.iter().enumerate() {
                        cell_dofs[cell * 4] = cv[0];
                        cell_dofs[cell * 4 + 1] = cv[1];
                        cell_dofs[cell * 4 + 2] = cv[3];
                        cell_dofs[cell * 4 + 3] = cv[2];
                    }
                    Ok(Arc::new(FunctionSpace {
                        mesh: Arc::clone(mesh),
                        spec,
                        n_dofs: mesh.vertices.len(),
                        nloc,
                        nodes_h,
                        nodes_v,
                        cell_dofs,
                        axes: None,
                        mass_default: OnceLock::new(),
                    }))
                }
            }
        }
    }
}

impl FunctionSpace {
    pub fn cell_dofs(&self, cell: usize) -> &[usize] {
        &self.cell_dofs[cell * self.nloc..(cell + 1) * self.nloc]
    }

    pub fn fully_discontinuous(&self) -> bool {
        self.spec.horizontal.family == Family::Discontinuous
            && self.spec.vertical.family == Family::Discontinuous
    }

    /// Default quadrature points per direction: enough for exact unweighted
    /// mass matrices with margin for curved geometry and weight fields. The
    /// same rule is used for the matrix and right-hand side of every solve.
    pub fn n_q_default(&self) -> usize {
        self.spec.horizontal.degree.max(self.spec.vertical.degree) + 3
    }

    /// Reference coordinates of local node `l`.
    pub fn node_ref(&self, l: usize) -> (f64, f64) {
        let nh = self.nodes_h.len();
        (self.nodes_h[l % nh], self.nodes_v[l / nh])
    }

    /// Physical position of each global dof's node (continuous dofs are
    /// written once per incident cell with coinciding positions).
    pub fn node_positions(&self) -> Vec<crate::geometry::Vec3> {
        let mut out = vec![[0.0, 0.0, 0.0]; self.n_dofs];
        for cell in 0..self.mesh.n_cells() {
            for l in 0..self.nloc {
                let (xi, eta) = self.node_ref(l);
                out[self.cell_dofs(cell)[l]] = self.mesh.chart_point(cell, xi, eta);
            }
        }
        out
    }

    /// Basis values and reference gradients at the given reference points.
    pub fn basis_at(&self, pts: &[(f64, f64)]) -> BasisTable {
        let nh = self.nodes_h.len();
        let nv = self.nodes_v.len();
        let nloc = self.nloc;
        let mut table = BasisTable {
            nloc,
            v: Vec::with_capacity(pts.len() * nloc),
            dxi: Vec::with_capacity(pts.len() * nloc),
            deta: Vec::with_capacity(pts.len() * nloc),
        };
        let mut vh = vec![0.0; nh];
        let mut dh = vec![0.0; nh];
        let mut vv = vec![0.0; nv];
        let mut dv = vec![0.0; nv];
        for &(xi, eta) in pts {
            lagrange_basis(&self.nodes_h, xi, &mut vh, Some(&mut dh));
            lagrange_basis(&self.nodes_v, eta, &mut vv, Some(&mut dv));
            for lv in 0..nv {
                for lh in 0..nh {
                    table.v.push(vh[lh] * vv[lv]);
                    table.dxi.push(dh[lh] * vv[lv]);
                    table.deta.push(vh[lh] * dv[lv]);
                }
            }
        }
        table
    }

    /// Reference points of the tensor Gauss rule, in the same order as
    /// [`Mesh::cell_quadrature`] emits its points.
    pub fn quad_ref_points(n_q: usize) -> Vec<(f64, f64)> {
        let rule = gauss_legendre(n_q);
        let mut pts = Vec::with_capacity(n_q * n_q);
        for &eta in &rule.points {
            for &xi in &rule.points {
                pts.push((xi, eta));
            }
        }
        pts
    }

    /// Dense per-cell (unweighted) mass matrices, row-major `nloc x nloc`.
    pub fn cell_mass_matrices(&self, n_q: usize) -> Result<Vec<Vec<f64>>> {
        let table = self.basis_at(&Self::quad_ref_points(n_q));
        let nloc = self.nloc;
        let mut out = Vec::with_capacity(self.mesh.n_cells());
        for cell in 0..self.mesh.n_cells() {
            let qps = self.mesh.cell_quadrature(cell, n_q)?;
            let mut m = vec![0.0; nloc * nloc];
            for (q, qp) in qps.iter().enumerate() {
                for a in 0..nloc {
                    let wa = qp.weight * table.value(q, a);
                    for b in a..nloc {
                        m[a * nloc + b] += wa * table.value(q, b);
                    }
                }
            }
            for a in 0..nloc {
                for b in 0..a {
                    m[a * nloc + b] = m[b * nloc + a];
                }
            }
            out.push(m);
        }
        Ok(out)
    }

    /// Cached Cholesky factors of the per-cell mass matrices at the default
    /// quadrature. Only meaningful as a global mass inverse when the space is
    /// fully discontinuous; callers needing global continuous mass systems
    /// use [`FunctionSpace::mass_csr`].
    pub fn mass_factors(&self) -> Arc<Vec<DenseChol>> {
        self.mass_default
            .get_or_init(|| {
                let mats = self
                    .cell_mass_matrices(self.n_q_default())
                    .expect("default mass assembly cannot fail");
                let factors = mats
                    .iter()
                    .map(|m| DenseChol::factor(m, self.nloc).expect("mass matrix is SPD"))
                    .collect();
                Arc::new(factors)
            })
            .clone()
    }

    /// Global sparse mass matrix (any continuity).
    pub fn mass_csr(&self, n_q: usize) -> Result<CsrMatrix> {
        let mats = self.cell_mass_matrices(n_q)?;
        let nloc = self.nloc;
        let mut triplets = Vec::with_capacity(mats.len() * nloc * nloc);
        for (cell, m) in mats.iter().enumerate() {
            let dofs = self.cell_dofs(cell);
            for a in 0..nloc {
                for b in 0..nloc {
                    triplets.push((dofs[a], dofs[b], m[a * nloc + b]));
                }
            }
        }
        Ok(CsrMatrix::from_triplets(self.n_dofs, &triplets))
    }
}

/// True when two spaces are interchangeable: same mesh object and same
/// specification.
pub fn same_space(a: &FunctionSpace, b: &FunctionSpace) -> bool {
    Arc::ptr_eq(&a.mesh, &b.mesh) && a.spec == b.spec
}
