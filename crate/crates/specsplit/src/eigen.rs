//! Generalized symmetric eigensolver for the discrete pencil K_eff u = λ M u.
//!
//! The algorithm is shift-invert Lanczos: factor K_eff − sM once per shift
//! with a banded LDLᵀ after reverse Cuthill-McKee reordering, run Lanczos on
//! (K_eff − sM)⁻¹M in the M-inner product with full reorthogonalization, lock
//! converged pairs and restart with fresh deterministic start vectors until
//! the requested count is reached. The LDLᵀ inertia (number of negative
//! pivots equals the number of pencil eigenvalues below the shift, by
//! Sylvester's law) certifies both that the shift sits below the spectrum and
//! that no eigenvalue was missed. A final Rayleigh-Ritz pass over the locked
//! span restores M-orthonormality to working precision, including inside
//! degenerate clusters.
//!
//! Everything is deterministic: start vectors come from a fixed splitmix64
//! stream, and vector signs are normalized so the largest-magnitude entry is
//! positive.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::fem::{DiscreteSystem, SparseSymMatrix};

/// Guard for relative quantities near the Neumann zero mode.
pub const LAMBDA_FLOOR: f64 = 1.0;

/// One converged eigenpair of the pencil.
#[derive(Debug, Clone)]
pub struct EigenPair {
    pub lambda: f64,
    /// Discrete eigenfunction over system dofs, M-normalized.
    pub vector: Vec<f64>,
    /// ‖(K_eff − λM)u‖ / (max(λ, 1)·‖Mu‖).
    pub residual: f64,
}

/// A maximal run of numerically coincident eigenvalues.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cluster {
    /// Zero-based index of the first member.
    pub start: usize,
    /// Multiplicity.
    pub len: usize,
    /// λ_last − λ_first within the cluster.
    pub width: f64,
    /// Relative gap to the previous cluster (∞ at the bottom).
    pub rel_gap_below: f64,
    /// Relative gap to the next cluster (∞ at the top).
    pub rel_gap_above: f64,
}

/// Sorted eigenpairs with cluster structure.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub pairs: Vec<EigenPair>,
    pub clusters: Vec<Cluster>,
    /// Tolerance used by the last clustering pass, if any.
    pub tau_cluster: Option<f64>,
}

impl Spectrum {
    pub fn k(&self) -> usize {
        self.pairs.len()
    }

    pub fn lambdas(&self) -> Vec<f64> {
        self.pairs.iter().map(|p| p.lambda).collect()
    }

    /// First cluster with multiplicity at least 2, if any.
    pub fn first_degenerate_cluster(&self) -> Option<Cluster> {
        self.clusters.iter().copied().find(|c| c.len >= 2)
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

fn random_vector(dim: usize, seed: u64) -> Vec<f64> {
    let mut state = seed;
    (0..dim).map(|_| (splitmix64(&mut state) >> 11) as f64 / (1u64 << 53) as f64 - 0.5).collect()
}

/// Reverse Cuthill-McKee ordering for bandwidth reduction; deterministic.
fn rcm_ordering(a: &SparseSymMatrix) -> Vec<usize> {
    let n = a.dim();
    let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for (j, _) in a.row(i) {
            if j != i {
                adjacency[i].push(j);
            }
        }
    }
    for neighbors in &mut adjacency {
        neighbors.sort_unstable();
        neighbors.dedup();
    }
    let degree: Vec<usize> = adjacency.iter().map(|v| v.len()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    while order.len() < n {
        // lowest-degree unvisited node starts the next component
        let start = (0..n)
            .filter(|&i| !visited[i])
            .min_by_key(|&i| (degree[i], i))
            .expect("unvisited node exists");
        visited[start] = true;
        let mut queue = std::collections::VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<usize> = adjacency[v].iter().copied().filter(|&w| !visited[w]).collect();
            next.sort_unstable_by_key(|&w| (degree[w], w));
            for w in next {
                visited[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

/// Symmetric band matrix in lower-band storage for LDLᵀ factorization.
struct BandLdl {
    dim: usize,
    bandwidth: usize,
    /// entry (i, j), 0 <= i - j <= bandwidth, at data[j * (bw + 1) + (i - j)]
    data: Vec<f64>,
    /// negative-pivot count (pencil eigenvalues below the shift)
    negative_pivots: usize,
}

impl BandLdl {
    /// Factors P(K_eff − shift·M)Pᵀ in the given ordering.
    fn factor(
        k_eff: &SparseSymMatrix,
        m: &SparseSymMatrix,
        shift: f64,
        perm: &[usize],
        inv_perm: &[usize],
    ) -> Result<BandLdl> {
        let n = k_eff.dim();
        let mut bandwidth = 0usize;
        for i in 0..n {
            for (j, _) in k_eff.row(i) {
                bandwidth = bandwidth.max(inv_perm[i].abs_diff(inv_perm[j]));
            }
            for (j, _) in m.row(i) {
                bandwidth = bandwidth.max(inv_perm[i].abs_diff(inv_perm[j]));
            }
        }
        let stride = bandwidth + 1;
        let mut data = vec![0.0; n * stride];
        for ip in 0..n {
            let i = perm[ip];
            for (j, v) in k_eff.row(i) {
                let jp = inv_perm[j];
                if ip >= jp {
                    data[jp * stride + (ip - jp)] += v;
                }
            }
            for (j, v) in m.row(i) {
                let jp = inv_perm[j];
                if ip >= jp {
                    data[jp * stride + (ip - jp)] -= shift * v;
                }
            }
        }
        // in-place banded LDLᵀ without pivoting
        let mut negative_pivots = 0usize;
        let mut scale = 0.0f64;
        for j in 0..n {
            scale = scale.max(data[j * stride].abs());
        }
        for j in 0..n {
            let d_j = data[j * stride];
            if !d_j.is_finite() || d_j.abs() <= 1e-14 * scale.max(1e-300) {
                return Err(Error::Solver(format!(
                    "LDLᵀ pivot {j} vanished (shift {shift} hits an eigenvalue)"
                )));
            }
            if d_j < 0.0 {
                negative_pivots += 1;
            }
            let reach = bandwidth.min(n - 1 - j);
            // L column j
            for i in 1..=reach {
                data[j * stride + i] /= d_j;
            }
            // trailing update: only rows within the band
            for c in 1..=reach {
                let l_cj = data[j * stride + c];
                if l_cj == 0.0 {
                    continue;
                }
                let col = j + c;
                for r in c..=reach {
                    data[col * stride + (r - c)] -= data[j * stride + r] * l_cj * d_j;
                }
            }
        }
        Ok(BandLdl { dim: n, bandwidth, data, negative_pivots })
    }

    /// Solves (K_eff − shift·M) x = b (in original ordering).
    fn solve(&self, b: &[f64], perm: &[usize]) -> Vec<f64> {
        let n = self.dim;
        let stride = self.bandwidth + 1;
        let mut y: Vec<f64> = (0..n).map(|ip| b[perm[ip]]).collect();
        // forward: L z = b
        for j in 0..n {
            let z_j = y[j];
            if z_j != 0.0 {
                let reach = self.bandwidth.min(n - 1 - j);
                for i in 1..=reach {
                    y[j + i] -= self.data[j * stride + i] * z_j;
                }
            }
        }
        // diagonal
        for j in 0..n {
            y[j] /= self.data[j * stride];
        }
        // backward: Lᵀ x = y
        for j in (0..n).rev() {
            let reach = self.bandwidth.min(n - 1 - j);
            let mut acc = y[j];
            for i in 1..=reach {
                acc -= self.data[j * stride + i] * y[j + i];
            }
            y[j] = acc;
        }
        let mut x = vec![0.0; n];
        for ip in 0..n {
            x[perm[ip]] = y[ip];
        }
        x
    }
}

/// Pencil eigenvalue count below `shift`, via LDLᵀ inertia.
fn inertia_below(
    k_eff: &SparseSymMatrix,
    m: &SparseSymMatrix,
    shift: f64,
    perm: &[usize],
    inv_perm: &[usize],
) -> Result<usize> {
    Ok(BandLdl::factor(k_eff, m, shift, perm, inv_perm)?.negative_pivots)
}

fn m_dot(m: &SparseSymMatrix, x: &[f64], y: &[f64]) -> f64 {
    m.bilinear_form(x, y)
}

fn sign_fix(v: &mut [f64]) {
    let mut best = 0usize;
    let mut best_abs = 0.0f64;
    for (i, &x) in v.iter().enumerate() {
        if x.abs() > best_abs {
            best_abs = x.abs();
            best = i;
        }
    }
    if v[best] < 0.0 {
        for x in v.iter_mut() {
            *x = -*x;
        }
    }
}

fn pencil_residual(k_eff: &SparseSymMatrix, m: &SparseSymMatrix, lambda: f64, u: &[f64]) -> f64 {
    let n = u.len();
    let mut ku = vec![0.0; n];
    let mut mu = vec![0.0; n];
    k_eff.matvec(u, &mut ku);
    m.matvec(u, &mut mu);
    let mut rnorm = 0.0;
    let mut munorm = 0.0;
    for i in 0..n {
        let r = ku[i] - lambda * mu[i];
        rnorm += r * r;
        munorm += mu[i] * mu[i];
    }
    rnorm.sqrt() / (lambda.abs().max(LAMBDA_FLOOR) * munorm.sqrt())
}

/// Solves for the lowest k eigenpairs of the effective pencil.
///
/// Residuals are at most `tol`; vectors are M-orthonormal and sign-fixed.
pub fn solve_lowest(system: &DiscreteSystem, k: usize, tol: f64) -> Result<Spectrum> {
    let n = system.dim();
    if k < 1 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    if 2 * k + 8 > n {
        return Err(Error::InvalidParameter(format!(
            "k = {k} is too large for a system with {n} degrees of freedom"
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance must be positive, got {tol}")));
    }
    let k_eff = system.k_eff();
    let m = &system.m;
    let perm = rcm_ordering(&k_eff);
    let mut inv_perm = vec![0usize; n];
    for (ip, &i) in perm.iter().enumerate() {
        inv_perm[i] = ip;
    }

    // problem scale, for shift heuristics
    let trace_k: f64 = (0..n).map(|i| k_eff.get(i, i)).sum();
    let trace_m: f64 = (0..n).map(|i| m.get(i, i)).sum();
    let lambda_scale = (trace_k / trace_m).abs().max(1.0);

    // Shift below the whole spectrum, certified by zero negative pivots.
    // Dirichlet and coercive Robin factor cleanly at 0; Neumann needs a small
    // negative shift for its zero mode, and Robin with sigma > 0 may need to
    // walk further down.
    let mut shift = match system.bc {
        crate::geometry::BoundaryCondition::Neumann => -0.01 * lambda_scale,
        crate::geometry::BoundaryCondition::Robin if system.sigma > 0.0 => -0.01 * lambda_scale,
        _ => 0.0,
    };
    let mut factor = None;
    let mut step = 0.05 * lambda_scale;
    for _ in 0..60 {
        match BandLdl::factor(&k_eff, m, shift, &perm, &inv_perm) {
            Ok(f) if f.negative_pivots == 0 => {
                factor = Some(f);
                break;
            }
            Ok(_) | Err(Error::Solver(_)) => {
                shift -= step;
                step *= 2.0;
            }
            Err(e) => return Err(e),
        }
    }
    let factor =
        factor.ok_or_else(|| Error::Solver("no shift below the spectrum found".into()))?;

    let op = |x: &[f64]| -> Vec<f64> {
        let mut mx = vec![0.0; n];
        m.matvec(x, &mut mx);
        factor.solve(&mx, &perm)
    };

    // Lanczos with locking and deterministic restarts.
    let mut locked: Vec<Vec<f64>> = Vec::new(); // M-orthonormal converged vectors
    let mut locked_lambda: Vec<f64> = Vec::new();
    let subspace = (3 * k + 24).min(n / 2);
    let mut target = k;
    let mut certified = false;
    let mut carry: Option<Vec<f64>> = None;
    'restarts: for restart in 0..200 {
        if locked.len() >= target {
            // Certify completeness: find a usable gap at or after index k,
            // and compare the locked count below the cut with the inertia.
            let mut order: Vec<usize> = (0..locked_lambda.len()).collect();
            order.sort_by(|&a, &b| locked_lambda[a].partial_cmp(&locked_lambda[b]).unwrap());
            let sorted: Vec<f64> = order.iter().map(|&i| locked_lambda[i]).collect();
            let mut cut = None;
            for j in k..sorted.len() {
                let gap = sorted[j] - sorted[j - 1];
                if gap > 1e-7 * sorted[j - 1].abs().max(LAMBDA_FLOOR) {
                    cut = Some(0.5 * (sorted[j - 1] + sorted[j]));
                    break;
                }
            }
            match cut {
                Some(cut_value) => {
                    let below = sorted.iter().filter(|&&l| l < cut_value).count();
                    let true_below = inertia_below(&k_eff, m, cut_value, &perm, &inv_perm)?;
                    if true_below == below {
                        certified = true;
                        break 'restarts;
                    }
                    // something was missed below the cut: keep searching
                }
                None => {
                    // trailing cluster reaches the end of the locked set;
                    // lock one more pair to expose a gap
                    target = locked.len() + 1;
                }
            }
        }

        // Start vector: the best unconverged Ritz vector from the previous
        // sweep when available (so successive sweeps keep polishing it),
        // otherwise a deterministic pseudo-random vector. Always made
        // M-orthogonal to the locked set.
        let mut v = carry
            .take()
            .unwrap_or_else(|| random_vector(n, 0x5eed_0001_u64.wrapping_add(restart as u64 * 0x9e37)));
        for w in &locked {
            let c = m_dot(m, &v, w);
            for i in 0..n {
                v[i] -= c * w[i];
            }
        }
        let norm = m_dot(m, &v, &v).sqrt();
        if norm <= 1e-12 {
            continue;
        }
        for x in v.iter_mut() {
            *x /= norm;
        }

        let mut basis: Vec<Vec<f64>> = vec![v];
        let mut alphas: Vec<f64> = Vec::new();
        let mut betas: Vec<f64> = Vec::new();
        for j in 0..subspace {
            let mut w = op(&basis[j]);
            alphas.push(m_dot(m, &w, &basis[j]));
            // full reorthogonalization against basis and locked vectors, twice
            for _ in 0..2 {
                for b in basis.iter() {
                    let c = m_dot(m, &w, b);
                    for i in 0..n {
                        w[i] -= c * b[i];
                    }
                }
                for b in locked.iter() {
                    let c = m_dot(m, &w, b);
                    for i in 0..n {
                        w[i] -= c * b[i];
                    }
                }
            }
            let beta = m_dot(m, &w, &w).sqrt();
            if beta <= 1e-13 || j + 1 == subspace {
                betas.push(beta);
                break;
            }
            betas.push(beta);
            for x in w.iter_mut() {
                *x /= beta;
            }
            basis.push(w);
        }

        // tridiagonal Ritz extraction
        let mdim = alphas.len();
        let mut t = DMatrix::zeros(mdim, mdim);
        for i in 0..mdim {
            t[(i, i)] = alphas[i];
            if i + 1 < mdim {
                t[(i, i + 1)] = betas[i];
                t[(i + 1, i)] = betas[i];
            }
        }
        let eig = SymmetricEigen::new(t);
        let mut ritz: Vec<(f64, usize)> =
            eig.eigenvalues.iter().copied().enumerate().map(|(i, v)| (v, i)).collect();
        // largest θ first: closest eigenvalues above the shift
        ritz.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        for (theta, col) in ritz {
            if theta <= 0.0 {
                break;
            }
            let lambda = shift + 1.0 / theta;
            let mut u = vec![0.0; n];
            for (bi, b) in basis.iter().enumerate() {
                let c = eig.eigenvectors[(bi, col)];
                for i in 0..n {
                    u[i] += c * b[i];
                }
            }
            // orthogonalize against locked; reject near-duplicates
            for w in &locked {
                let c = m_dot(m, &u, w);
                for i in 0..n {
                    u[i] -= c * w[i];
                }
            }
            let norm = m_dot(m, &u, &u).sqrt();
            if norm <= 0.1 {
                continue;
            }
            for x in u.iter_mut() {
                *x /= norm;
            }
            let res = pencil_residual(&k_eff, m, lambda, &u);
            if std::env::var_os("SPECSPLIT_EIG_DEBUG").is_some() {
                eprintln!("restart {restart}: θ={theta:.3e} λ={lambda:.6} res={res:.3e} locked={}", locked.len());
            }
            if res <= tol {
                locked.push(u);
                locked_lambda.push(lambda);
            } else if carry.is_none() {
                carry = Some(u);
            }
        }
        // an occasional fresh random start guards against cycling on a
        // stagnant Ritz vector
        if restart % 8 == 7 {
            carry = None;
        }
    }
    if !certified {
        return Err(Error::Solver(format!(
            "Lanczos did not certify the lowest {k} eigenvalues (locked {})",
            locked.len()
        )));
    }

    // Rayleigh-Ritz over the locked span: restores M-orthonormality to
    // working precision, including inside degenerate clusters.
    let kk = locked.len();
    let mut kp = DMatrix::zeros(kk, kk);
    let mut mp = DMatrix::zeros(kk, kk);
    for i in 0..kk {
        for j in 0..kk {
            kp[(i, j)] = k_eff.bilinear_form(&locked[i], &locked[j]);
            mp[(i, j)] = m_dot(m, &locked[i], &locked[j]);
        }
    }
    let chol = nalgebra::Cholesky::new(mp)
        .ok_or_else(|| Error::Solver("projected mass matrix lost definiteness".into()))?;
    let l_inv = chol.l().try_inverse().ok_or_else(|| Error::Solver("singular Cholesky factor".into()))?;
    let reduced = &l_inv * kp * l_inv.transpose();
    let reduced = (&reduced + reduced.transpose()) * 0.5;
    let eig = SymmetricEigen::new(reduced);
    let mut order: Vec<usize> = (0..kk).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());

    let coeff = l_inv.transpose() * &eig.eigenvectors; // columns: dense coefficients
    let mut pairs = Vec::with_capacity(k);
    for &col in order.iter().take(k) {
        let lambda = eig.eigenvalues[col];
        let mut u = vec![0.0; n];
        for (i, w) in locked.iter().enumerate() {
            let c = coeff[(i, col)];
            for d in 0..n {
                u[d] += c * w[d];
            }
        }
        let norm = m_dot(m, &u, &u).sqrt();
        for x in u.iter_mut() {
            *x /= norm;
        }
        sign_fix(&mut u);
        let residual = pencil_residual(&k_eff, m, lambda, &u);
        if residual > tol {
            return Err(Error::Solver(format!(
                "refined pair at λ = {lambda:.6e} has residual {residual:.3e} > tol {tol:.3e}"
            )));
        }
        pairs.push(EigenPair { lambda, vector: u, residual });
    }
    pairs.sort_by(|a, b| a.lambda.partial_cmp(&b.lambda).unwrap());

    let clusters = singleton_clusters(&pairs);
    Ok(Spectrum { pairs, clusters, tau_cluster: None })
}

fn singleton_clusters(pairs: &[EigenPair]) -> Vec<Cluster> {
    (0..pairs.len())
        .map(|i| {
            let below = if i == 0 {
                f64::INFINITY
            } else {
                (pairs[i].lambda - pairs[i - 1].lambda) / pairs[i - 1].lambda.abs().max(LAMBDA_FLOOR)
            };
            let above = if i + 1 == pairs.len() {
                f64::INFINITY
            } else {
                (pairs[i + 1].lambda - pairs[i].lambda) / pairs[i].lambda.abs().max(LAMBDA_FLOOR)
            };
            Cluster { start: i, len: 1, width: 0.0, rel_gap_below: below, rel_gap_above: above }
        })
        .collect()
}

/// Greedy left-to-right clustering: adjacent eigenvalues share a cluster iff
/// their relative gap is below `tau_cluster` (with floor 1 near λ = 0).
pub fn detect_clusters(spectrum: &Spectrum, tau_cluster: f64) -> Result<Spectrum> {
    if !(tau_cluster >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tau_cluster must be non-negative, got {tau_cluster}"
        )));
    }
    let lambdas = spectrum.lambdas();
    let mut clusters = Vec::new();
    let mut start = 0usize;
    for i in 0..lambdas.len() {
        let is_last = i + 1 == lambdas.len();
        let breaks = if is_last {
            true
        } else {
            let rel = (lambdas[i + 1] - lambdas[i]) / lambdas[i].abs().max(LAMBDA_FLOOR);
            rel >= tau_cluster
        };
        if breaks {
            let width = lambdas[i] - lambdas[start];
            let rel_gap_below = if start == 0 {
                f64::INFINITY
            } else {
                (lambdas[start] - lambdas[start - 1]) / lambdas[start - 1].abs().max(LAMBDA_FLOOR)
            };
            let rel_gap_above = if is_last {
                f64::INFINITY
            } else {
                (lambdas[i + 1] - lambdas[i]) / lambdas[i].abs().max(LAMBDA_FLOOR)
            };
            clusters.push(Cluster { start, len: i + 1 - start, width, rel_gap_below, rel_gap_above });
            start = i + 1;
        }
    }
    Ok(Spectrum {
        pairs: spectrum.pairs.clone(),
        clusters,
        tau_cluster: Some(tau_cluster),
    })
}

/// The gap quantity d_r: smallest positive spacing among the differences of
/// the first r + m eigenvalues (1-based r); spacings inside one cluster count
/// as zero, not positive.
pub fn gap_quantity(spectrum: &Spectrum, r: usize, m: usize) -> Result<f64> {
    if r < 1 || m < 1 {
        return Err(Error::InvalidParameter("cluster location needs r ≥ 1 and m ≥ 1".into()));
    }
    if spectrum.k() < r + m + 1 {
        return Err(Error::InvalidParameter(format!(
            "gap quantity needs at least r + m + 1 = {} pairs, spectrum holds {}",
            r + m + 1,
            spectrum.k()
        )));
    }
    let lambdas = spectrum.lambdas();
    let cluster_of = |i: usize| -> usize {
        spectrum
            .clusters
            .iter()
            .position(|c| i >= c.start && i < c.start + c.len)
            .unwrap_or(usize::MAX)
    };
    let mut d = f64::INFINITY;
    for j in 0..(r + m - 1) {
        // difference between 1-based λ_{j+2} and λ_{j+1}
        let same_cluster = cluster_of(j) == cluster_of(j + 1) && cluster_of(j) != usize::MAX;
        if same_cluster {
            continue; // counts as zero, not positive
        }
        let diff = lambdas[j + 1] - lambdas[j];
        if diff > 0.0 {
            d = d.min(diff);
        }
    }
    if !d.is_finite() {
        return Err(Error::InvalidParameter(
            "no positive spacing among the leading eigenvalues".into(),
        ));
    }
    Ok(d)
}

/// Dense reference solver (Cholesky reduction + symmetric EVD); for
/// cross-checks on small systems.
pub fn dense_reference(system: &DiscreteSystem, k: usize) -> Result<Vec<f64>> {
    let k_eff = system.k_eff().to_dense();
    let m = system.m.to_dense();
    let chol = nalgebra::Cholesky::new(m)
        .ok_or_else(|| Error::Solver("mass matrix is not positive definite".into()))?;
    let l_inv = chol
        .l()
        .try_inverse()
        .ok_or_else(|| Error::Solver("singular Cholesky factor".into()))?;
    let reduced = &l_inv * k_eff * l_inv.transpose();
    let reduced = (&reduced + reduced.transpose()) * 0.5;
    let eig = SymmetricEigen::new(reduced);
    let mut lambdas: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    lambdas.sort_by(|a, b| a.partial_cmp(b).unwrap());
    lambdas.truncate(k);
    Ok(lambdas)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::assemble;
    use crate::geometry::{BoundaryCondition, PolygonalDomain};
    use crate::mesh::triangulate;
    use std::f64::consts::PI;

    fn assert_rel(actual: f64, expected: f64, rel: f64, what: &str) {
        let err = (actual - expected).abs() / expected.abs().max(1e-300);
        assert!(err <= rel, "{what}: got {actual}, expected {expected} (rel err {err:.3e})");
    }

    fn square_spectrum(bc: BoundaryCondition, h: f64, k: usize) -> Spectrum {
        let domain = PolygonalDomain::unit_square(bc, 0.0);
        let mesh = triangulate(&domain, h).unwrap();
        let sys = assemble(&mesh, bc, 0.0).unwrap();
        solve_lowest(&sys, k, 1e-9).unwrap()
    }

    #[test]
    fn square_dirichlet_matches_separable_formula() {
        // oracle: λ_{mn} = π²(m² + n²)
        let spectrum = square_spectrum(BoundaryCondition::Dirichlet, 0.05, 4);
        let expected = [2.0, 5.0, 5.0, 8.0].map(|s| s * PI * PI);
        for (pair, exact) in spectrum.pairs.iter().zip(expected) {
            assert_rel(pair.lambda, exact, 0.025, "square Dirichlet eigenvalue");
            assert!(pair.residual <= 1e-9);
        }
        // discrete eigenvalues bound the exact ones from above (conforming P1)
        for (pair, exact) in spectrum.pairs.iter().zip(expected) {
            assert!(pair.lambda >= exact - 1e-6);
        }
    }

    #[test]
    fn lanczos_agrees_with_dense_reference() {
        let domain = PolygonalDomain::unit_square(BoundaryCondition::Dirichlet, 0.0);
        let mesh = triangulate(&domain, 0.18).unwrap();
        let sys = assemble(&mesh, BoundaryCondition::Dirichlet, 0.0).unwrap();
        let spectrum = solve_lowest(&sys, 6, 1e-10).unwrap();
        let dense = dense_reference(&sys, 6).unwrap();
        for (pair, exact) in spectrum.pairs.iter().zip(dense) {
            assert_rel(pair.lambda, exact, 1e-8, "Lanczos vs dense");
        }
    }

    #[test]
    fn neumann_zero_mode_is_constant() {
        let spectrum = square_spectrum(BoundaryCondition::Neumann, 0.15, 3);
        assert!(spectrum.pairs[0].lambda.abs() <= 1e-8, "λ₁ = {}", spectrum.pairs[0].lambda);
        let v = &spectrum.pairs[0].vector;
        // M-normalized constant on the unit square is ±1; sign fix makes it +1
        for x in v {
            assert!((x - 1.0).abs() <= 1e-6, "zero-mode entry {x}");
        }
        // second Neumann eigenvalue is π²
        assert_rel(spectrum.pairs[1].lambda, PI * PI, 0.03, "Neumann λ₂");
    }

    #[test]
    fn golden_ratio_rectangle_is_simple() {
        // oracle: λ = π²(m² + n²/φ²), all distinct because φ² is irrational
        let phi = (1.0 + 5.0f64.sqrt()) / 2.0;
        let domain =
            PolygonalDomain::rectangle(1.0, phi, BoundaryCondition::Dirichlet, 0.0).unwrap();
        let mesh = triangulate(&domain, 0.07).unwrap();
        let sys = assemble(&mesh, BoundaryCondition::Dirichlet, 0.0).unwrap();
        let spectrum = solve_lowest(&sys, 6, 1e-9).unwrap();
        let mut exact: Vec<f64> = Vec::new();
        for m in 1..=4 {
            for n in 1..=6 {
                exact.push(PI * PI * (m as f64 * m as f64 + (n as f64 * n as f64) / (phi * phi)));
            }
        }
        exact.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (pair, ex) in spectrum.pairs.iter().zip(&exact[..6]) {
            assert_rel(pair.lambda, *ex, 0.025, "golden rectangle eigenvalue");
        }
        // all simple at a strict tolerance
        let clustered = detect_clusters(&spectrum, 1e-4).unwrap();
        assert!(clustered.first_degenerate_cluster().is_none());
    }

    #[test]
    fn vectors_are_mass_orthonormal_and_deterministic() {
        let domain = PolygonalDomain::unit_square(BoundaryCondition::Dirichlet, 0.0);
        let mesh = triangulate(&domain, 0.12).unwrap();
        let sys = assemble(&mesh, BoundaryCondition::Dirichlet, 0.0).unwrap();
        let a = solve_lowest(&sys, 5, 1e-10).unwrap();
        for i in 0..a.k() {
            for j in 0..a.k() {
                let d = m_dot(&sys.m, &a.pairs[i].vector, &a.pairs[j].vector);
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!(
                    (d - expect).abs() <= if i == j { 1e-10 } else { 1e-8 },
                    "M-orthonormality failure at ({i}, {j}): {d}"
                );
            }
        }
        // bitwise determinism, including vector signs
        let b = solve_lowest(&sys, 5, 1e-10).unwrap();
        for (pa, pb) in a.pairs.iter().zip(&b.pairs) {
            assert_eq!(pa.lambda, pb.lambda);
            assert_eq!(pa.vector, pb.vector);
        }
    }

    #[test]
    fn robin_positive_sigma_exercises_shift_retry() {
        let domain = PolygonalDomain::rectangle(1.0, 1.0, BoundaryCondition::Robin, 1.0).unwrap();
        let mesh = triangulate(&domain, 0.14).unwrap();
        let sys = assemble(&mesh, BoundaryCondition::Robin, 1.0).unwrap();
        let spectrum = solve_lowest(&sys, 4, 1e-9).unwrap();
        let dense = dense_reference(&sys, 4).unwrap();
        assert!(spectrum.pairs[0].lambda < 0.0, "Robin σ>0 ground state should be negative");
        for (pair, exact) in spectrum.pairs.iter().zip(dense) {
            assert!((pair.lambda - exact).abs() <= 1e-7 * exact.abs().max(1.0));
        }
    }

    #[test]
    fn robin_negative_sigma_is_positive_definite() {
        let domain = PolygonalDomain::rectangle(1.0, 1.0, BoundaryCondition::Robin, -2.0).unwrap();
        let mesh = triangulate(&domain, 0.14).unwrap();
        let sys = assemble(&mesh, BoundaryCondition::Robin, -2.0).unwrap();
        let spectrum = solve_lowest(&sys, 3, 1e-9).unwrap();
        assert!(spectrum.pairs[0].lambda > 0.0);
        let dense = dense_reference(&sys, 3).unwrap();
        for (pair, exact) in spectrum.pairs.iter().zip(dense) {
            assert!((pair.lambda - exact).abs() <= 1e-7 * exact.abs().max(1.0));
        }
    }

    #[test]
    fn cluster_detection_square_pattern() {
        let spectrum = square_spectrum(BoundaryCondition::Dirichlet, 0.06, 4);
        // τ well above the discrete splitting of the 5π² pair and far below
        // the true relative gaps (~0.6)
        let clustered = detect_clusters(&spectrum, 0.02).unwrap();
        let sizes: Vec<(usize, usize)> =
            clustered.clusters.iter().map(|c| (c.start, c.len)).collect();
        assert_eq!(sizes, vec![(0, 1), (1, 2), (3, 1)]);
        // τ → 0: all singletons
        let singletons = detect_clusters(&spectrum, 0.0).unwrap();
        assert!(singletons.clusters.iter().all(|c| c.len == 1));
        // τ huge: one cluster
        let one = detect_clusters(&spectrum, 100.0).unwrap();
        assert_eq!(one.clusters.len(), 1);
        assert_eq!(one.clusters[0].len, 4);
    }

    #[test]
    fn gap_quantity_square_cluster() {
        let spectrum = square_spectrum(BoundaryCondition::Dirichlet, 0.06, 6);
        let clustered = detect_clusters(&spectrum, 0.02).unwrap();
        // d_2 with m = 2: min(λ₂−λ₁, λ₄−λ₃) = 3π² by the closed form
        let d = gap_quantity(&clustered, 2, 2).unwrap();
        assert_rel(d, 3.0 * PI * PI, 0.03, "gap quantity");
    }

    #[test]
    fn gap_quantity_synthetic_cases() {
        let make = |lambdas: &[f64]| -> Spectrum {
            let pairs: Vec<EigenPair> = lambdas
                .iter()
                .map(|&l| EigenPair { lambda: l, vector: vec![1.0], residual: 0.0 })
                .collect();
            let clusters = singleton_clusters(&pairs);
            Spectrum { pairs, clusters, tau_cluster: None }
        };
        // uniform gaps g → d = g
        let uniform = make(&[1.0, 3.0, 5.0, 7.0, 9.0, 11.0]);
        assert_eq!(gap_quantity(&uniform, 2, 2).unwrap(), 2.0);
        // insufficient pairs
        assert!(matches!(
            gap_quantity(&uniform, 4, 2),
            Err(Error::InvalidParameter(_))
        ));
    }
}
