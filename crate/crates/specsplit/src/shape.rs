//! Boundary traces, discriminants and first-order eigenvalue rates under
//! boundary deformation.
//!
//! Two independent routes to the derivative of an eigenvalue along a bump
//! family are provided. [`hadamard_matrix`] evaluates the boundary integral
//!
//! ```text
//! λ̇ = ∫_{∂Ω} (|∇u|² − λu² + (∂_ν u)(H u − 2 ∂_ν u)) ν·ė₀ ds
//! ```
//!
//! from recovered traces of the discrete eigenfunctions (polarized to an
//! m×m symmetric matrix on a degenerate cluster; H vanishes identically on
//! the flat edges bumps live on). [`discrete_rate_matrix`] instead
//! differentiates the discrete pencil exactly under the mesh-motion family,
//! which is what finite-difference continuation converges to as t → 0. The
//! two agree up to the O(h) gradient-recovery error.
//!
//! The discriminant g = |∇u|² − c·u² with the boundary-condition constant
//! [`c_constant`] selects bump centers: where two cluster eigenfunctions have
//! different g, a bump there splits them. [`select_bump_center`] maximizes the
//! minimal pairwise separation of locally averaged discriminants.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::eigen::EigenPair;
use crate::error::{Error, Result};
use crate::fem::{assemble_motion_derivative, boundary_trace_indices, DiscreteSystem};
use crate::geometry::{BoundaryCondition, DeformationField, Point2};
use crate::mesh::TriMesh;

/// Relative threshold below which discriminant separations count as
/// numerically degenerate.
pub const DEGENERATE_SEPARATION_REL: f64 = 1e-8;

/// The boundary-condition constant of the discriminant: 0 for Dirichlet,
/// λ for Neumann, λ + 2σ² for Robin.
pub fn c_constant(bc: BoundaryCondition, lambda: f64, sigma: f64) -> f64 {
    match bc {
        BoundaryCondition::Dirichlet => 0.0,
        BoundaryCondition::Neumann => lambda,
        BoundaryCondition::Robin => lambda + 2.0 * sigma * sigma,
    }
}

/// One boundary sample of an eigenfunction trace.
#[derive(Debug, Clone, Copy)]
pub struct TraceSample {
    /// Arclength on the parent reference edge.
    pub s: f64,
    /// Eigenfunction value (0 at eliminated Dirichlet dofs).
    pub u: f64,
    /// Recovered normal derivative ∂u/∂ν.
    pub du_dnu: f64,
    /// Recovered |∇u|².
    pub grad_sq: f64,
    /// Recovered gradient, for polarized products.
    pub grad: Point2,
}

/// Eigenfunction data along one boundary edge, ordered by arclength.
#[derive(Debug, Clone)]
pub struct BoundaryTrace {
    pub edge: usize,
    pub samples: Vec<TraceSample>,
}

impl BoundaryTrace {
    /// Linear interpolation of (u, grad) at arclength s.
    fn interp(&self, s: f64) -> (f64, Point2) {
        let samples = &self.samples;
        if s <= samples[0].s {
            return (samples[0].u, samples[0].grad);
        }
        if s >= samples[samples.len() - 1].s {
            let last = &samples[samples.len() - 1];
            return (last.u, last.grad);
        }
        let idx = samples.partition_point(|smp| smp.s < s).max(1);
        let (a, b) = (&samples[idx - 1], &samples[idx]);
        let w = if b.s > a.s { (s - a.s) / (b.s - a.s) } else { 0.0 };
        (a.u + (b.u - a.u) * w, a.grad + (b.grad - a.grad) * w)
    }
}

/// Area-weighted recovery of nodal gradients from adjacent-triangle P1
/// gradients; O(h) accurate at the boundary.
fn recover_nodal_gradients(mesh: &TriMesh, full_u: &[f64]) -> Vec<Point2> {
    let n = mesh.num_nodes();
    let mut acc = vec![Point2::new(0.0, 0.0); n];
    let mut weight = vec![0.0f64; n];
    for tri in &mesh.triangles {
        let p = [mesh.nodes[tri[0]], mesh.nodes[tri[1]], mesh.nodes[tri[2]]];
        let area = (p[1] - p[0]).cross(p[2] - p[0]) / 2.0;
        let b = [p[1].y - p[2].y, p[2].y - p[0].y, p[0].y - p[1].y];
        let c = [p[2].x - p[1].x, p[0].x - p[2].x, p[1].x - p[0].x];
        let mut grad = Point2::new(0.0, 0.0);
        for i in 0..3 {
            grad = grad + Point2::new(b[i], c[i]) * (full_u[tri[i]] / (2.0 * area));
        }
        for &v in tri {
            acc[v] = acc[v] + grad * area;
            weight[v] += area;
        }
    }
    for i in 0..n {
        if weight[i] > 0.0 {
            acc[i] = acc[i] * (1.0 / weight[i]);
        }
    }
    acc
}

/// Trace of one eigenpair along a boundary edge: values, normal derivatives
/// and squared gradients, with gradients recovered by area-weighted averaging.
pub fn boundary_trace(
    mesh: &TriMesh,
    system: &DiscreteSystem,
    pair: &EigenPair,
    edge_id: usize,
) -> Result<BoundaryTrace> {
    let dofs = boundary_trace_indices(mesh, system, edge_id)?;
    let full = system.expand(&pair.vector);
    let gradients = recover_nodal_gradients(mesh, &full);

    // outward normal per node, averaged over its boundary sub-edges of this edge
    let mut normals: std::collections::BTreeMap<usize, Point2> = std::collections::BTreeMap::new();
    for be in &mesh.boundary_edges {
        if be.edge != edge_id {
            continue;
        }
        let d = (mesh.nodes[be.nodes[1]] - mesh.nodes[be.nodes[0]]).normalize();
        let nrm = d.rot_cw();
        for &node in &be.nodes {
            let entry = normals.entry(node).or_insert(Point2::new(0.0, 0.0));
            *entry = *entry + nrm;
        }
    }

    let samples = dofs
        .iter()
        .map(|sample| {
            let grad = gradients[sample.node];
            let nrm = normals
                .get(&sample.node)
                .copied()
                .unwrap_or(Point2::new(0.0, 0.0))
                .normalize();
            TraceSample {
                s: sample.s,
                u: full[sample.node],
                du_dnu: grad.dot(nrm),
                grad_sq: grad.dot(grad),
                grad,
            }
        })
        .collect();
    Ok(BoundaryTrace { edge: edge_id, samples })
}

/// The discriminant g(s) = |∇u|² − c·u² per trace sample.
pub fn discriminant(trace: &BoundaryTrace, c: f64) -> Vec<(f64, f64)> {
    trace.samples.iter().map(|smp| (smp.s, smp.grad_sq - c * smp.u * smp.u)).collect()
}

/// First-order rates of a cluster under a bump family, with the
/// finite-difference comparison column left for the continuation driver.
#[derive(Debug, Clone)]
pub struct HadamardReport {
    /// Zero-based spectrum indices of the cluster members.
    pub cluster_indices: Vec<usize>,
    /// Polarized boundary-integral derivative matrix in the given eigenbasis.
    pub derivative_matrix: DMatrix<f64>,
    /// Eigenvalues of the derivative matrix, ascending: the predicted branch
    /// rates dλ/dt at t = 0.
    pub predicted_rates: Vec<f64>,
    /// Finite-difference branch slopes, when a continuation was run.
    pub fd_rates: Vec<f64>,
    /// The discriminant constant used for reporting.
    pub c_used: f64,
    /// Always false: bumps are restricted to flat edges where H ≡ 0.
    pub curvature_term_included: bool,
}

/// Quadrature grid over the bump support: at least 33 points, denser than the
/// trace sampling.
fn support_grid(field: &DeformationField, trace_count: usize) -> Vec<f64> {
    let bump = field.bump();
    let (lo, hi) = (bump.s0 - bump.c, bump.s0 + bump.c);
    let n = (4 * trace_count + 1).max(33);
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn hadamard_matrix_with_velocity(
    traces: &[BoundaryTrace],
    lambda_bar: f64,
    c_used: f64,
    grid: &[f64],
    edge_normal: Point2,
    velocity: impl Fn(f64) -> f64,
) -> DMatrix<f64> {
    let m = traces.len();
    // mean curvature of the flat edge; kept in the integrand as written
    let mean_curvature = 0.0;
    let mut a = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let mut acc = 0.0;
            let mut prev: Option<(f64, f64)> = None;
            for &s in grid {
                let (u_i, grad_i) = traces[i].interp(s);
                let (u_j, grad_j) = traces[j].interp(s);
                let dn_i = grad_i.dot(edge_normal);
                let dn_j = grad_j.dot(edge_normal);
                let polarized = grad_i.dot(grad_j) - lambda_bar * u_i * u_j
                    + 0.5 * mean_curvature * (dn_i * u_j + dn_j * u_i)
                    - 2.0 * dn_i * dn_j;
                let value = polarized * velocity(s);
                if let Some((s_prev, v_prev)) = prev {
                    acc += 0.5 * (v_prev + value) * (s - s_prev);
                }
                prev = Some((s, value));
            }
            a[(i, j)] = acc;
            a[(j, i)] = acc;
        }
    }
    a
}

/// Polarized Hadamard derivative matrix of a degenerate cluster (or a single
/// eigenvalue for m = 1) under the bump family of `field`.
///
/// Entries are composite-trapezoid boundary integrals of the recovered trace
/// data against the normal velocity ν·ė₀ = ρ_c(s − s0) over the bump support.
pub fn hadamard_matrix(
    mesh: &TriMesh,
    system: &DiscreteSystem,
    cluster_indices: &[usize],
    pairs: &[&EigenPair],
    field: &DeformationField,
) -> Result<HadamardReport> {
    if pairs.is_empty() || pairs.len() != cluster_indices.len() {
        return Err(Error::InvalidParameter(
            "hadamard_matrix needs matching cluster indices and eigenpairs".into(),
        ));
    }
    let edge_id = field.bump().edge;
    let traces: Vec<BoundaryTrace> = pairs
        .iter()
        .map(|p| boundary_trace(mesh, system, p, edge_id))
        .collect::<Result<_>>()?;
    let lambda_bar = pairs.iter().map(|p| p.lambda).sum::<f64>() / pairs.len() as f64;
    let grid = support_grid(field, traces[0].samples.len());
    // flat edge: constant outward normal from any of its boundary sub-edges
    let edge_normal = mesh
        .boundary_edges
        .iter()
        .find(|be| be.edge == edge_id)
        .map(|be| (mesh.nodes[be.nodes[1]] - mesh.nodes[be.nodes[0]]).normalize().rot_cw())
        .ok_or(Error::UnknownEdge(edge_id))?;
    let a = hadamard_matrix_with_velocity(&traces, lambda_bar, c_constant(system.bc, lambda_bar, system.sigma), &grid, edge_normal, |s| {
        field.normal_velocity(s)
    });
    let eig = SymmetricEigen::new(a.clone());
    let mut rates: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    rates.sort_by(|x, y| x.partial_cmp(y).unwrap());
    Ok(HadamardReport {
        cluster_indices: cluster_indices.to_vec(),
        derivative_matrix: a,
        predicted_rates: rates,
        fd_rates: Vec::new(),
        c_used: c_constant(system.bc, lambda_bar, system.sigma),
        curvature_term_included: false,
    })
}

/// Exact first-order rate matrix of the discrete pencil under the mesh-motion
/// family of `field`: D_ij = u_iᵀ(K̇_eff − λ̄ Ṁ)u_j.
///
/// This is what finite-difference slopes of the moved-mesh eigenvalues
/// converge to as t → 0; it serves as the reference for first-order-in-t
/// convergence checks of the continuation, while [`hadamard_matrix`] carries
/// the continuum boundary-integral form.
pub fn discrete_rate_matrix(
    mesh: &TriMesh,
    system: &DiscreteSystem,
    pairs: &[&EigenPair],
    field: &DeformationField,
) -> Result<DMatrix<f64>> {
    if pairs.is_empty() {
        return Err(Error::InvalidParameter("discrete_rate_matrix needs eigenpairs".into()));
    }
    let velocities: Vec<Point2> =
        mesh.nodes.iter().map(|p| field.displacement(*p, 1.0)).collect();
    let (kdot_eff, mdot) = assemble_motion_derivative(mesh, &velocities, system)?;
    let lambda_bar = pairs.iter().map(|p| p.lambda).sum::<f64>() / pairs.len() as f64;
    let m = pairs.len();
    let mut d = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let v = kdot_eff.bilinear_form(&pairs[i].vector, &pairs[j].vector)
                - lambda_bar * mdot.bilinear_form(&pairs[i].vector, &pairs[j].vector);
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    Ok(d)
}

/// Sorted eigenvalues of the discrete rate matrix: branch rates of the moved
/// discrete eigenvalues at t = 0.
pub fn discrete_rates(
    mesh: &TriMesh,
    system: &DiscreteSystem,
    pairs: &[&EigenPair],
    field: &DeformationField,
) -> Result<Vec<f64>> {
    let d = discrete_rate_matrix(mesh, system, pairs, field)?;
    let eig = SymmetricEigen::new(d);
    let mut rates: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    rates.sort_by(|x, y| x.partial_cmp(y).unwrap());
    Ok(rates)
}

/// Picks a bump center where the cluster discriminants separate most.
///
/// The candidate set is the trace sample arclengths restricted so the bump
/// support stays inside the sampled range; the objective is the minimal
/// pairwise separation of the discriminants averaged over the support.
/// Deterministic tie-break: the smallest admissible s0.
pub fn select_bump_center(
    traces: &[BoundaryTrace],
    c: f64,
    bump_radius: f64,
    window: Option<(f64, f64)>,
) -> Result<f64> {
    if traces.len() < 2 {
        return Err(Error::InvalidParameter(
            "bump center selection needs at least two traces".into(),
        ));
    }
    if !(bump_radius > 0.0) {
        return Err(Error::InvalidParameter("bump radius must be positive".into()));
    }
    let discriminants: Vec<Vec<(f64, f64)>> =
        traces.iter().map(|trace| discriminant(trace, c)).collect();
    let g_scale = discriminants
        .iter()
        .flat_map(|g| g.iter().map(|(_, v)| v.abs()))
        .fold(0.0f64, f64::max);

    // admissible s0 range: the caller's window when given (already margined),
    // otherwise the sampled range shrunk so the support stays inside it
    let (s_lo, s_hi) = {
        let first = &traces[0].samples;
        let lo = first[0].s + bump_radius;
        let hi = first[first.len() - 1].s - bump_radius;
        match window {
            Some((w_lo, w_hi)) => (w_lo.max(first[0].s), w_hi.min(first[first.len() - 1].s)),
            None => (lo, hi),
        }
    };

    // local average of g over [s0 − r, s0 + r] by trapezoid on a fixed grid
    let averaged = |g: &[(f64, f64)], s0: f64| -> f64 {
        let n = 17;
        let mut acc = 0.0;
        let mut prev: Option<(f64, f64)> = None;
        for i in 0..n {
            let s = s0 - bump_radius + 2.0 * bump_radius * i as f64 / (n - 1) as f64;
            // linear interpolation within the sampled discriminant
            let idx = g.partition_point(|(gs, _)| *gs < s);
            let v = if idx == 0 {
                g[0].1
            } else if idx >= g.len() {
                g[g.len() - 1].1
            } else {
                let (s_a, v_a) = g[idx - 1];
                let (s_b, v_b) = g[idx];
                if s_b > s_a {
                    v_a + (v_b - v_a) * (s - s_a) / (s_b - s_a)
                } else {
                    v_a
                }
            };
            if let Some((sp, vp)) = prev {
                acc += 0.5 * (vp + v) * (s - sp);
            }
            prev = Some((s, v));
        }
        acc / (2.0 * bump_radius)
    };

    let mut best: Option<(f64, f64)> = None; // (separation, s0)
    for sample in &traces[0].samples {
        let s0 = sample.s;
        if s0 < s_lo - 1e-12 || s0 > s_hi + 1e-12 {
            continue;
        }
        let means: Vec<f64> = discriminants.iter().map(|g| averaged(g, s0)).collect();
        let mut separation = f64::INFINITY;
        for i in 0..means.len() {
            for j in (i + 1)..means.len() {
                separation = separation.min((means[i] - means[j]).abs());
            }
        }
        let improved = match best {
            None => true,
            Some((best_sep, _)) => separation > best_sep,
        };
        if improved {
            best = Some((separation, s0));
        }
    }
    let (separation, s0) = best.ok_or_else(|| {
        Error::InvalidParameter("no admissible bump center in the sampled range".into())
    })?;
    let threshold = DEGENERATE_SEPARATION_REL * g_scale;
    if separation <= threshold {
        return Err(Error::DegenerateDiscriminant { separation, threshold });
    }
    Ok(s0)
}

/// Eigenvalue tables of the moved-mesh family: one row of the lowest k
/// eigenvalues per requested amplitude.
pub fn continuation_lambdas(
    mesh: &TriMesh,
    bc: BoundaryCondition,
    sigma: f64,
    field: &DeformationField,
    amplitudes: &[f64],
    k: usize,
    tol: f64,
) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::with_capacity(amplitudes.len());
    for &t in amplitudes {
        let moved = crate::mesh::move_mesh(mesh, field, t)?;
        let system = crate::fem::assemble(&moved, bc, sigma)?;
        let spectrum = crate::eigen::solve_lowest(&system, k, tol)?;
        rows.push(spectrum.lambdas());
    }
    Ok(rows)
}
