//! P1 finite element assembly of the weak Laplacian eigenproblem.
//!
//! For a mesh of a domain X the discrete system carries three symmetric
//! forms: the gradient form K (∫∇u·∇v), the mass form M (∫uv) and the
//! boundary mass B (∫_{∂X} uv, assembled edge-wise by the trapezoid rule,
//! hence diagonal). The effective form of the eigenproblem is K for Dirichlet
//! and Neumann and K − σB for Robin, matching the weak formulation table.
//! Dirichlet conditions are imposed by eliminating boundary dofs, keeping the
//! pencil symmetric definite. K and M use exact closed-form element integrals.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::geometry::{BoundaryCondition, Point2};
use crate::mesh::TriMesh;

/// Symmetric sparse matrix in CSR layout with both triangles stored.
///
/// Entries that cancel to exactly zero during assembly are dropped.
#[derive(Debug, Clone)]
pub struct SparseSymMatrix {
    dim: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseSymMatrix {
    /// Builds from unordered triplets, accumulating duplicates.
    pub fn from_triplets(dim: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_unstable_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0usize; dim + 1];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        let mut iter = triplets.into_iter().peekable();
        while let Some((i, j, mut v)) = iter.next() {
            while let Some(&(i2, j2, v2)) = iter.peek() {
                if i2 == i && j2 == j {
                    v += v2;
                    iter.next();
                } else {
                    break;
                }
            }
            if v != 0.0 {
                row_ptr[i + 1] += 1;
                col_idx.push(j);
                values.push(v);
            }
        }
        for i in 0..dim {
            row_ptr[i + 1] += row_ptr[i];
        }
        SparseSymMatrix { dim, row_ptr, col_idx, values }
    }

    pub fn zero(dim: usize) -> Self {
        SparseSymMatrix { dim, row_ptr: vec![0; dim + 1], col_idx: Vec::new(), values: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[range.clone()].iter().copied().zip(self.values[range].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[range.clone()].binary_search(&j) {
            Ok(k) => self.values[range.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.dim);
        assert_eq!(y.len(), self.dim);
        for i in 0..self.dim {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            y[i] = acc;
        }
    }

    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        let mut y = vec![0.0; self.dim];
        self.matvec(x, &mut y);
        x.iter().zip(&y).map(|(a, b)| a * b).sum()
    }

    /// Bilinear form xᵀ A y.
    pub fn bilinear_form(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut ay = vec![0.0; self.dim];
        self.matvec(y, &mut ay);
        x.iter().zip(&ay).map(|(a, b)| a * b).sum()
    }

    /// axpy-style combination: self + alpha * other (matching sparsity union).
    pub fn add_scaled(&self, other: &SparseSymMatrix, alpha: f64) -> SparseSymMatrix {
        assert_eq!(self.dim, other.dim);
        let mut triplets = Vec::with_capacity(self.nnz() + other.nnz());
        for i in 0..self.dim {
            for (j, v) in self.row(i) {
                triplets.push((i, j, v));
            }
            for (j, v) in other.row(i) {
                triplets.push((i, j, alpha * v));
            }
        }
        SparseSymMatrix::from_triplets(self.dim, triplets)
    }

    /// Exact symmetry check: entry (i, j) must equal entry (j, i) bitwise.
    pub fn is_symmetric(&self) -> bool {
        for i in 0..self.dim {
            for (j, v) in self.row(i) {
                if self.get(j, i) != v {
                    return false;
                }
            }
        }
        true
    }

    /// Coordinate-format text export: `row col value` per line, 17 significant
    /// digits.
    pub fn to_coo_text(&self) -> String {
        let mut out = format!("{} {} {}\n", self.dim, self.dim, self.nnz());
        for i in 0..self.dim {
            for (j, v) in self.row(i) {
                out.push_str(&format!("{} {} {:.16e}\n", i, j, v));
            }
        }
        out
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut dense = nalgebra::DMatrix::zeros(self.dim, self.dim);
        for i in 0..self.dim {
            for (j, v) in self.row(i) {
                dense[(i, j)] = v;
            }
        }
        dense
    }
}

/// Discrete eigenproblem data on the kept degrees of freedom.
#[derive(Debug, Clone)]
pub struct DiscreteSystem {
    pub k: SparseSymMatrix,
    pub m: SparseSymMatrix,
    pub b: SparseSymMatrix,
    /// Node index -> system dof (None for eliminated Dirichlet boundary nodes).
    pub dof_of_node: Vec<Option<usize>>,
    /// System dof -> node index.
    pub node_of_dof: Vec<usize>,
    pub bc: BoundaryCondition,
    pub sigma: f64,
}

impl DiscreteSystem {
    pub fn dim(&self) -> usize {
        self.k.dim()
    }

    /// Effective stiffness of the pencil: K (Dirichlet/Neumann) or K − σB.
    pub fn k_eff(&self) -> SparseSymMatrix {
        match self.bc {
            BoundaryCondition::Robin => self.k.add_scaled(&self.b, -self.sigma),
            _ => self.k.clone(),
        }
    }

    /// Expands a dof vector to a full node vector, zero at eliminated nodes.
    pub fn expand(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.dim());
        let mut full = vec![0.0; self.dof_of_node.len()];
        for (node, dof) in self.dof_of_node.iter().enumerate() {
            if let Some(d) = dof {
                full[node] = v[*d];
            }
        }
        full
    }
}

/// P1 element gradients: ∇φ_i = (b_i, c_i) / (2A).
fn element_gradients(p: [Point2; 3]) -> ([f64; 3], [f64; 3], f64) {
    let b = [p[1].y - p[2].y, p[2].y - p[0].y, p[0].y - p[1].y];
    let c = [p[2].x - p[1].x, p[0].x - p[2].x, p[1].x - p[0].x];
    let area = (p[1] - p[0]).cross(p[2] - p[0]) / 2.0;
    (b, c, area)
}

/// Assembles the discrete system for the given boundary condition.
pub fn assemble(mesh: &TriMesh, bc: BoundaryCondition, sigma: f64) -> Result<DiscreteSystem> {
    if bc == BoundaryCondition::Robin && sigma == 0.0 {
        return Err(Error::InvalidParameter(
            "Robin boundary condition requires a non-zero sigma".into(),
        ));
    }
    let n = mesh.num_nodes();
    let mut boundary_node = vec![false; n];
    for be in &mesh.boundary_edges {
        boundary_node[be.nodes[0]] = true;
        boundary_node[be.nodes[1]] = true;
    }
    let mut dof_of_node = vec![None; n];
    let mut node_of_dof = Vec::new();
    for node in 0..n {
        let eliminated = bc == BoundaryCondition::Dirichlet && boundary_node[node];
        if !eliminated {
            dof_of_node[node] = Some(node_of_dof.len());
            node_of_dof.push(node);
        }
    }
    let dim = node_of_dof.len();
    if dim == 0 {
        return Err(Error::InvalidParameter("no degrees of freedom left after elimination".into()));
    }

    let mut k_triplets = Vec::with_capacity(9 * mesh.num_triangles());
    let mut m_triplets = Vec::with_capacity(9 * mesh.num_triangles());
    for tri in &mesh.triangles {
        let p = [mesh.nodes[tri[0]], mesh.nodes[tri[1]], mesh.nodes[tri[2]]];
        let (b, c, area) = element_gradients(p);
        for i in 0..3 {
            let Some(di) = dof_of_node[tri[i]] else { continue };
            for j in 0..3 {
                let Some(dj) = dof_of_node[tri[j]] else { continue };
                let k_ij = (b[i] * b[j] + c[i] * c[j]) / (4.0 * area);
                let m_ij = area / 12.0 * if i == j { 2.0 } else { 1.0 };
                k_triplets.push((di, dj, k_ij));
                m_triplets.push((di, dj, m_ij));
            }
        }
    }
    // trapezoid-rule boundary mass: L/2 at each endpoint of a boundary edge
    let mut b_triplets = Vec::with_capacity(2 * mesh.boundary_edges.len());
    for be in &mesh.boundary_edges {
        let len = mesh.nodes[be.nodes[0]].dist(mesh.nodes[be.nodes[1]]);
        for &node in &be.nodes {
            if let Some(d) = dof_of_node[node] {
                b_triplets.push((d, d, len / 2.0));
            }
        }
    }

    Ok(DiscreteSystem {
        k: SparseSymMatrix::from_triplets(dim, k_triplets),
        m: SparseSymMatrix::from_triplets(dim, m_triplets),
        b: SparseSymMatrix::from_triplets(dim, b_triplets),
        dof_of_node,
        node_of_dof,
        bc,
        sigma,
    })
}

/// Exact derivative of (K_eff, M) under mesh motion with the given node
/// velocities, on the same dof numbering as `system`.
///
/// Used for first-order eigenvalue rates of the discrete pencil; entries are
/// closed-form derivatives of the P1 element integrals, no differencing.
pub fn assemble_motion_derivative(
    mesh: &TriMesh,
    velocities: &[Point2],
    system: &DiscreteSystem,
) -> Result<(SparseSymMatrix, SparseSymMatrix)> {
    if velocities.len() != mesh.num_nodes() {
        return Err(Error::InvalidParameter(
            "velocity vector length must match the node count".into(),
        ));
    }
    let dim = system.dim();
    let dof_of_node = &system.dof_of_node;
    let mut kdot_triplets = Vec::with_capacity(9 * mesh.num_triangles());
    let mut mdot_triplets = Vec::with_capacity(9 * mesh.num_triangles());
    for tri in &mesh.triangles {
        let p = [mesh.nodes[tri[0]], mesh.nodes[tri[1]], mesh.nodes[tri[2]]];
        let v = [velocities[tri[0]], velocities[tri[1]], velocities[tri[2]]];
        let (b, c, area) = element_gradients(p);
        let b_dot = [v[1].y - v[2].y, v[2].y - v[0].y, v[0].y - v[1].y];
        let c_dot = [v[2].x - v[1].x, v[0].x - v[2].x, v[1].x - v[0].x];
        let area_dot =
            ((v[1] - v[0]).cross(p[2] - p[0]) + (p[1] - p[0]).cross(v[2] - v[0])) / 2.0;
        for i in 0..3 {
            let Some(di) = dof_of_node[tri[i]] else { continue };
            for j in 0..3 {
                let Some(dj) = dof_of_node[tri[j]] else { continue };
                let k_ij = (b[i] * b[j] + c[i] * c[j]) / (4.0 * area);
                let kdot_ij = (b_dot[i] * b[j] + b[i] * b_dot[j] + c_dot[i] * c[j] + c[i] * c_dot[j])
                    / (4.0 * area)
                    - k_ij * area_dot / area;
                let mdot_ij = area_dot / 12.0 * if i == j { 2.0 } else { 1.0 };
                kdot_triplets.push((di, dj, kdot_ij));
                mdot_triplets.push((di, dj, mdot_ij));
            }
        }
    }
    let kdot = SparseSymMatrix::from_triplets(dim, kdot_triplets);
    let mdot = SparseSymMatrix::from_triplets(dim, mdot_triplets);
    // Robin boundary term: d/dt of the trapezoid boundary mass
    let kdot_eff = if system.bc == BoundaryCondition::Robin {
        let mut bdot_triplets = Vec::new();
        for be in &mesh.boundary_edges {
            let (a, bn) = (be.nodes[0], be.nodes[1]);
            let d = mesh.nodes[bn] - mesh.nodes[a];
            let len = d.norm();
            let len_dot = d.dot(velocities[bn] - velocities[a]) / len;
            for &node in &be.nodes {
                if let Some(dof) = dof_of_node[node] {
                    bdot_triplets.push((dof, dof, len_dot / 2.0));
                }
            }
        }
        let bdot = SparseSymMatrix::from_triplets(dim, bdot_triplets);
        kdot.add_scaled(&bdot, -system.sigma)
    } else {
        kdot
    };
    Ok((kdot_eff, mdot))
}

/// One boundary sample of a trace query: node, arclength on the parent edge,
/// and the system dof (None when eliminated by Dirichlet conditions).
#[derive(Debug, Clone, Copy)]
pub struct BoundaryDofSample {
    pub node: usize,
    pub s: f64,
    pub dof: Option<usize>,
}

/// Boundary nodes of one reference edge, ordered by arclength.
///
/// For Dirichlet systems the returned samples carry `dof: None`; the solution
/// is identically zero there.
pub fn boundary_trace_indices(
    mesh: &TriMesh,
    system: &DiscreteSystem,
    edge_id: usize,
) -> Result<Vec<BoundaryDofSample>> {
    let mut samples: BTreeMap<usize, f64> = BTreeMap::new();
    let mut found = false;
    for be in &mesh.boundary_edges {
        if be.edge == edge_id {
            found = true;
            samples.entry(be.nodes[0]).or_insert(be.s_start);
            samples.entry(be.nodes[1]).or_insert(be.s_end);
        }
    }
    if !found {
        return Err(Error::UnknownEdge(edge_id));
    }
    let mut out: Vec<BoundaryDofSample> = samples
        .into_iter()
        .map(|(node, s)| BoundaryDofSample { node, s, dof: system.dof_of_node[node] })
        .collect();
    out.sort_by(|a, b| a.s.partial_cmp(&b.s).unwrap());
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::PolygonalDomain;
    use crate::mesh::{refine, triangulate, BoundaryEdge};

    fn assert_close(actual: f64, expected: f64, tol: f64, what: &str) {
        assert!(
            (actual - expected).abs() <= tol,
            "{what}: got {actual}, expected {expected} (tol {tol})"
        );
    }

    /// Hand-built single right triangle {(0,0),(1,0),(0,1)} as a mesh.
    fn unit_right_triangle() -> TriMesh {
        TriMesh {
            nodes: vec![Point2::new(0.0, 0.0), Point2::new(1.0, 0.0), Point2::new(0.0, 1.0)],
            triangles: vec![[0, 1, 2]],
            boundary_edges: vec![
                BoundaryEdge { nodes: [0, 1], edge: 0, s_start: 0.0, s_end: 1.0 },
                BoundaryEdge { nodes: [1, 2], edge: 1, s_start: 0.0, s_end: 2f64.sqrt() },
                BoundaryEdge { nodes: [2, 0], edge: 2, s_start: 0.0, s_end: 1.0 },
            ],
            h: 2f64.sqrt(),
        }
    }

    #[test]
    fn element_stiffness_matches_exact_integrals() {
        // oracle: exact integration of P1 gradients on the unit right triangle
        // gives K = 1/2 · [[2,-1,-1],[-1,1,0],[-1,0,1]]
        let mesh = unit_right_triangle();
        let sys = assemble(&mesh, BoundaryCondition::Neumann, 0.0).unwrap();
        let expected = [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]];
        for i in 0..3 {
            for j in 0..3 {
                assert_close(sys.k.get(i, j), expected[i][j], 1e-15, "K entry");
            }
        }
        assert!(sys.k.is_symmetric());
    }

    #[test]
    fn element_mass_row_sums_are_third_of_area() {
        let mesh = unit_right_triangle();
        let sys = assemble(&mesh, BoundaryCondition::Neumann, 0.0).unwrap();
        for i in 0..3 {
            let row_sum: f64 = sys.m.row(i).map(|(_, v)| v).sum();
            assert_close(row_sum, 1.0 / 6.0, 1e-15, "mass row sum = area/3");
        }
    }

    #[test]
    fn neumann_stiffness_annihilates_constants() {
        let domain = PolygonalDomain::unit_square(BoundaryCondition::Neumann, 0.0);
        let mesh = triangulate(&domain, 0.2).unwrap();
        let sys = assemble(&mesh, BoundaryCondition::Neumann, 0.0).unwrap();
        let ones = vec![1.0; sys.dim()];
        let mut out = vec![0.0; sys.dim()];
        sys.k.matvec(&ones, &mut out);
        let scale: f64 = sys.k.row(0).map(|(_, v)| v.abs()).sum();
        for v in out {
            assert!(v.abs() <= 1e-10 * scale.max(1.0), "K·1 entry {v}");
        }
    }

    #[test]
    fn galerkin_identities_on_unstructured_mesh() {
        let domain = PolygonalDomain::unit_square(BoundaryCondition::Neumann, 0.0);
        let mesh = triangulate(&domain, 0.17).unwrap();
        let sys = assemble(&mesh, BoundaryCondition::Neumann, 0.0).unwrap();
        // u(x, y) = x has |∇u| = 1, so uᵀKu = area
        let ux: Vec<f64> = sys.node_of_dof.iter().map(|&n| mesh.nodes[n].x).collect();
        assert_close(sys.k.quadratic_form(&ux), 1.0, 1e-10, "uᵀKu for u = x");
        // u ≡ 1: uᵀMu = area, uᵀBu = perimeter
        let ones = vec![1.0; sys.dim()];
        assert_close(sys.m.quadratic_form(&ones), 1.0, 1e-10, "1ᵀM1 = area");
        assert_close(sys.b.quadratic_form(&ones), 4.0, 1e-10, "1ᵀB1 = perimeter");
    }

    #[test]
    fn dirichlet_eliminates_exactly_the_boundary_nodes() {
        let domain = PolygonalDomain::unit_square(BoundaryCondition::Dirichlet, 0.0);
        let mesh = triangulate(&domain, 0.3).unwrap();
        let sys = assemble(&mesh, BoundaryCondition::Dirichlet, 0.0).unwrap();
        let boundary: std::collections::BTreeSet<usize> =
            mesh.boundary_edges.iter().flat_map(|be| be.nodes).collect();
        assert_eq!(sys.dim() + boundary.len(), mesh.num_nodes());
        for node in &boundary {
            assert!(sys.dof_of_node[*node].is_none());
        }
        // expansion places zeros on the boundary
        let v = vec![1.0; sys.dim()];
        let full = sys.expand(&v);
        for node in &boundary {
            assert_eq!(full[*node], 0.0);
        }
    }

    #[test]
    fn robin_requires_nonzero_sigma_and_negative_sigma_is_coercive() {
        let domain = PolygonalDomain::unit_square(BoundaryCondition::Neumann, 0.0);
        let mesh = triangulate(&domain, 0.25).unwrap();
        assert!(matches!(
            assemble(&mesh, BoundaryCondition::Robin, 0.0),
            Err(Error::InvalidParameter(_))
        ));
        let sys = assemble(&mesh, BoundaryCondition::Robin, -2.0).unwrap();
        let k_eff = sys.k_eff();
        assert!(k_eff.is_symmetric());
        // coercivity sanity on a deterministic family of vectors
        let mut state = 0x9e3779b97f4a7c15u64;
        for _ in 0..10 {
            let x: Vec<f64> = (0..sys.dim())
                .map(|_| {
                    state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
                })
                .collect();
            assert!(k_eff.quadratic_form(&x) > 0.0, "K + |σ|B must be positive definite");
        }
    }

    #[test]
    fn boundary_trace_indices_structured_square() {
        let domain = PolygonalDomain::unit_square(BoundaryCondition::Neumann, 0.0);
        let mesh = triangulate(&domain, 0.25).unwrap();
        let sys = assemble(&mesh, BoundaryCondition::Neumann, 0.0).unwrap();
        let trace = boundary_trace_indices(&mesh, &sys, 0).unwrap();
        let s_values: Vec<f64> = trace.iter().map(|t| t.s).collect();
        assert_eq!(s_values.len(), 5, "expected 5 nodes on the bottom edge, got {s_values:?}");
        for (k, s) in s_values.iter().enumerate() {
            assert_close(*s, 0.25 * k as f64, 1e-12, "node arclength");
        }
        // unknown edge errors
        assert!(matches!(boundary_trace_indices(&mesh, &sys, 17), Err(Error::UnknownEdge(17))));
    }

    #[test]
    fn boundary_trace_indices_dirichlet_dofs_are_eliminated() {
        let domain = PolygonalDomain::unit_square(BoundaryCondition::Dirichlet, 0.0);
        let mesh = triangulate(&domain, 0.25).unwrap();
        let sys = assemble(&mesh, BoundaryCondition::Dirichlet, 0.0).unwrap();
        let trace = boundary_trace_indices(&mesh, &sys, 0).unwrap();
        assert!(!trace.is_empty());
        for sample in trace {
            assert!(sample.dof.is_none(), "Dirichlet boundary dof {:?} not eliminated", sample);
        }
    }

    #[test]
    fn motion_derivative_matches_finite_differences() {
        let domain = PolygonalDomain::rectangle(1.0, 1.0, BoundaryCondition::Robin, 1.5).unwrap();
        let mesh = triangulate(&domain, 0.3).unwrap();
        let sys = assemble(&mesh, BoundaryCondition::Robin, 1.5).unwrap();
        // deterministic smooth velocity field
        let velocities: Vec<Point2> = mesh
            .nodes
            .iter()
            .map(|p| Point2::new((p.x * 2.1).sin() * 0.3, (p.y * 1.7).cos() * 0.2))
            .collect();
        let (kdot_eff, mdot) = assemble_motion_derivative(&mesh, &velocities, &sys).unwrap();

        let eps = 1e-7;
        let moved = TriMesh {
            nodes: mesh
                .nodes
                .iter()
                .zip(&velocities)
                .map(|(p, v)| *p + *v * eps)
                .collect(),
            triangles: mesh.triangles.clone(),
            boundary_edges: mesh.boundary_edges.clone(),
            h: mesh.h,
        };
        let sys_eps = assemble(&moved, BoundaryCondition::Robin, 1.5).unwrap();
        let k0 = sys.k_eff();
        let k1 = sys_eps.k_eff();
        for i in 0..sys.dim() {
            for (j, v) in kdot_eff.row(i) {
                let fd = (k1.get(i, j) - k0.get(i, j)) / eps;
                assert_close(v, fd, 1e-5 * (1.0 + v.abs()), "K̇_eff entry");
            }
            for (j, v) in mdot.row(i) {
                let fd = (sys_eps.m.get(i, j) - sys.m.get(i, j)) / eps;
                assert_close(v, fd, 1e-5 * (1.0 + v.abs()), "Ṁ entry");
            }
        }
    }

    #[test]
    fn refined_mesh_keeps_mass_identities() {
        let domain = PolygonalDomain::unit_square(BoundaryCondition::Neumann, 0.0);
        let mesh = refine(&triangulate(&domain, 0.4).unwrap());
        let sys = assemble(&mesh, BoundaryCondition::Neumann, 0.0).unwrap();
        let ones = vec![1.0; sys.dim()];
        assert_close(sys.m.quadratic_form(&ones), 1.0, 1e-10, "area after refine");
        assert_close(sys.b.quadratic_form(&ones), 4.0, 1e-10, "perimeter after refine");
    }

    #[test]
    fn coo_export_round_trips_entries() {
        let mesh = unit_right_triangle();
        let sys = assemble(&mesh, BoundaryCondition::Neumann, 0.0).unwrap();
        let text = sys.k.to_coo_text();
        let mut lines = text.lines();
        let header: Vec<usize> =
            lines.next().unwrap().split_whitespace().map(|t| t.parse().unwrap()).collect();
        assert_eq!(header, vec![3, 3, sys.k.nnz()]);
        for line in lines {
            let mut it = line.split_whitespace();
            let i: usize = it.next().unwrap().parse().unwrap();
            let j: usize = it.next().unwrap().parse().unwrap();
            let v: f64 = it.next().unwrap().parse().unwrap();
            assert_close(v, sys.k.get(i, j), 1e-15, "COO entry");
        }
    }
}
