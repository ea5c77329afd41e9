//! The iterative simplification loop: split every degenerate eigenvalue
//! cluster by small outward bumps while honoring quantitative budgets.
//!
//! One iteration ([`split_once`]) targets the first cluster of multiplicity
//! m ≥ 2 at index r. It picks a bump center inside the iteration's ball where
//! the cluster discriminants separate, then searches the bump amplitude t by
//! bisection for the largest value that keeps every tracked shift within the
//! budget M·d_r, keeps all higher eigenvalues above λ_r, remeshes cleanly,
//! and opens an internal gap at least `split_factor` times the pre-split
//! cluster width. The four contract points are re-checked on the measured
//! spectra and recorded per iteration.
//!
//! [`simplify_spectrum`] drives the loop: flatten the boundary near the
//! anchor point if no straight segment is available, lay out disjoint balls
//! of radius c·2⁻ⁿ along the flat window, and split until the first K_target
//! eigenvalues are simple. Budgets use M_n = min(0.4, 2^{-(n+1)}), the first
//! non-simple index r_n must never decrease, and the output polygon may
//! differ from the input only inside the given ball.

use std::time::Instant;

use crate::eigen::{
    detect_clusters, gap_quantity, solve_lowest, Cluster, Spectrum, LAMBDA_FLOOR,
};
use crate::error::{Error, Result};
use crate::fem::assemble;
use crate::geometry::{BumpSpec, DeformationField, Point2, PolygonalDomain};
use crate::mesh::triangulate;
use crate::shape::{boundary_trace, c_constant, hadamard_matrix, select_bump_center};

/// Worker cap for parallel amplitude probes, from SPEC_SPLIT_THREADS.
pub fn worker_cap() -> usize {
    std::env::var("SPEC_SPLIT_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or_else(|| {
            std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1).min(4)
        })
}

/// Shift budget of one split, from the gap quantity of the pre-split spectrum.
#[derive(Debug, Clone, Copy)]
pub struct SplitBudget {
    /// Budget factor M ∈ (0, ½).
    pub m_factor: f64,
    /// Gap quantity d_r of the pre-split spectrum.
    pub d_r: f64,
    /// One-based index of the first cluster member.
    pub r: usize,
    /// Cluster multiplicity.
    pub m: usize,
    /// Maximal allowed shift M·d_r for indices ≤ r + m + 1.
    pub shift_cap: f64,
    /// λ_r: eigenvalues beyond the cluster must stay above this.
    pub tail_floor: f64,
}

impl SplitBudget {
    pub fn new(m_factor: f64, spectrum: &Spectrum, cluster: Cluster) -> Result<SplitBudget> {
        if !(m_factor > 0.0 && m_factor < 0.5) {
            return Err(Error::InvariantFailure(format!(
                "budget factor M must lie in (0, 1/2), got {m_factor}"
            )));
        }
        let r = cluster.start + 1;
        let m = cluster.len;
        let d_r = gap_quantity(spectrum, r, m)?;
        Ok(SplitBudget {
            m_factor,
            d_r,
            r,
            m,
            shift_cap: m_factor * d_r,
            tail_floor: spectrum.pairs[cluster.start].lambda,
        })
    }
}

/// Numerical configuration shared by the splitting operations.
#[derive(Debug, Clone)]
pub struct SplitConfig {
    /// Mesh size for every solve in the loop.
    pub h: f64,
    /// Eigenvalues tracked beyond K_target (tail control).
    pub tail: usize,
    /// Eigensolver residual tolerance.
    pub tol: f64,
    /// Cluster tolerance; None calibrates from the unit square at the same h.
    pub tau_cluster: Option<f64>,
    /// Cap for the budget factors M_n.
    pub m_cap: f64,
    /// Required post-split internal gap as a multiple of the pre-split width.
    pub split_factor: f64,
    /// Samples per bump polyline.
    pub bump_resolution: usize,
    /// Iteration cap of the simplification loop.
    pub max_iterations: usize,
    /// Allowed Lipschitz-constant increase (flattening + bump slopes).
    pub delta_budget: f64,
    /// Transition samples per side used when flattening is needed.
    pub flatten_resolution: usize,
    /// Cap on the bump graph slope t·sup|ρ'| per split.
    pub max_graph_slope: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            h: 0.0125,
            tail: 5,
            tol: 1e-9,
            tau_cluster: None,
            m_cap: 0.4,
            split_factor: 10.0,
            bump_resolution: 64,
            max_iterations: 20,
            delta_budget: 0.1,
            flatten_resolution: 24,
            max_graph_slope: 0.5,
        }
    }
}

/// sup|ρ'_c| over the support, by dense scan of the closed form.
fn sup_profile_slope(c: f64) -> f64 {
    let mut sup = 0.0f64;
    for k in 0..=2000 {
        let s = -c + 2.0 * c * k as f64 / 2000.0;
        sup = sup.max(crate::geometry::bump_profile_deriv(s, c).unwrap_or(0.0).abs());
    }
    sup
}

/// Everything measured during one accepted (or attempted) split.
#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub n: usize,
    pub ball_center: Point2,
    pub ball_radius: f64,
    pub m_factor: f64,
    pub edge: usize,
    pub s0: f64,
    pub bump_radius: f64,
    pub amplitude: f64,
    pub d_r: f64,
    pub shift_cap: f64,
    pub r: usize,
    pub multiplicity: usize,
    pub pre_lambdas: Vec<f64>,
    pub post_lambdas: Vec<f64>,
    pub shifts: Vec<f64>,
    pub pre_width_rel: f64,
    pub post_gap_rel: f64,
    pub c1_norm: f64,
    /// Lipschitz contribution bound t·sup|ρ'| of this bump.
    pub slope_bound: f64,
    pub stability_ratios: Vec<f64>,
    /// The four contract points: confinement, shift budget, reduced
    /// multiplicity with the required gap, tail floor.
    pub contract: [bool; 4],
}

/// Full log of a simplification run.
#[derive(Debug, Clone)]
pub struct SplitTrace {
    pub iterations: Vec<IterationRecord>,
    /// First non-simple 1-based index before each iteration.
    pub r_history: Vec<usize>,
    pub success: bool,
    pub message: String,
    pub lipschitz_before: f64,
    pub lipschitz_after: f64,
    pub flattened: bool,
    pub elapsed_seconds: f64,
}

/// Cluster tolerance calibration: ten times the observed relative splitting
/// of the unit square's first degenerate pair at the working mesh size.
pub fn calibrate_tau(h: f64, tol: f64) -> Result<f64> {
    let square = PolygonalDomain::unit_square(crate::geometry::BoundaryCondition::Dirichlet, 0.0);
    let mesh = triangulate(&square, h)?;
    let system = assemble(&mesh, crate::geometry::BoundaryCondition::Dirichlet, 0.0)?;
    let spectrum = solve_lowest(&system, 3, tol)?;
    let width = spectrum.pairs[2].lambda - spectrum.pairs[1].lambda;
    Ok(10.0 * width / spectrum.pairs[1].lambda)
}

struct Candidate {
    domain: PolygonalDomain,
    spectrum: Spectrum,
    shifts: Vec<f64>,
    budget_ok: bool,
    tail_ok: bool,
    post_gap_rel: f64,
    post_multiplicity: usize,
}

fn evaluate_amplitude(
    domain: &PolygonalDomain,
    bump: &BumpSpec,
    pre: &Spectrum,
    budget: &SplitBudget,
    tau: f64,
    config: &SplitConfig,
    k_solve: usize,
) -> Result<Candidate> {
    let bumped = domain.apply_bump(bump, config.bump_resolution)?;
    let mesh = triangulate(&bumped, config.h)?;
    let system = assemble(&mesh, bumped.bc(), bumped.sigma())?;
    let spectrum = solve_lowest(&system, k_solve, config.tol)?;
    let clustered = detect_clusters(&spectrum, tau)?;

    let r0 = budget.r - 1; // 0-based
    let pre_l = pre.lambdas();
    let post_l = clustered.lambdas();
    let tracked = (budget.r + budget.m + 1).min(pre_l.len()).min(post_l.len());
    let shifts: Vec<f64> =
        (0..tracked).map(|i| (post_l[i] - pre_l[i]).abs()).collect();
    let budget_ok = shifts.iter().all(|&s| s <= budget.shift_cap);
    let tail_ok = (budget.r + budget.m..post_l.len().min(pre_l.len()))
        .all(|i| post_l[i] > budget.tail_floor);

    // internal gap of the old cluster range after the split
    let mut post_gap_rel = 0.0f64;
    for i in r0..(r0 + budget.m - 1) {
        let rel = (post_l[i + 1] - post_l[i]) / post_l[i].abs().max(LAMBDA_FLOOR);
        post_gap_rel = post_gap_rel.max(rel);
    }
    let post_multiplicity = clustered
        .clusters
        .iter()
        .find(|c| r0 >= c.start && r0 < c.start + c.len)
        .map(|c| c.len)
        .unwrap_or(1);

    Ok(Candidate {
        domain: bumped,
        spectrum: clustered,
        shifts,
        budget_ok,
        tail_ok,
        post_gap_rel,
        post_multiplicity,
    })
}

/// Evaluates candidate amplitudes in parallel (capped by SPEC_SPLIT_THREADS),
/// returning results in amplitude order regardless of the worker count.
fn probe_amplitudes(
    domain: &PolygonalDomain,
    base: BumpSpec,
    amplitudes: &[f64],
    pre: &Spectrum,
    budget: &SplitBudget,
    tau: f64,
    config: &SplitConfig,
    k_solve: usize,
) -> Vec<Result<Candidate>> {
    let cap = worker_cap().max(1);
    let mut results: Vec<Option<Result<Candidate>>> = (0..amplitudes.len()).map(|_| None).collect();
    for chunk_start in (0..amplitudes.len()).step_by(cap) {
        let chunk_end = (chunk_start + cap).min(amplitudes.len());
        std::thread::scope(|scope| {
            let mut handles = Vec::new();
            for idx in chunk_start..chunk_end {
                let t = amplitudes[idx];
                let bump = BumpSpec { t, ..base };
                handles.push((idx, scope.spawn(move || {
                    evaluate_amplitude(domain, &bump, pre, budget, tau, config, k_solve)
                })));
            }
            for (idx, handle) in handles {
                results[idx] = Some(handle.join().unwrap_or_else(|_| {
                    Err(Error::Solver("amplitude probe panicked".into()))
                }));
            }
        });
    }
    results.into_iter().map(|r| r.expect("all probes filled")).collect()
}

/// One application of the single-split construction.
///
/// `ball` is the (center, radius) disk the perturbation must stay inside;
/// the bump radius is half the ball radius. The pre-split spectrum must be
/// clustered and `cluster` must be its first degenerate cluster.
pub fn split_once(
    domain: &PolygonalDomain,
    pre: &Spectrum,
    cluster: Cluster,
    ball: (Point2, f64),
    budget: &SplitBudget,
    config: &SplitConfig,
) -> Result<(PolygonalDomain, IterationRecord)> {
    let (center, radius) = ball;
    if cluster.len < 2 {
        return Err(Error::InvalidParameter("split_once needs a degenerate cluster".into()));
    }
    let tau = match config.tau_cluster {
        Some(t) => t,
        None => calibrate_tau(config.h, config.tol)?,
    };

    // The ball must sit on a straight edge with room for a bump of radius
    // ball/2 whose support stays inside both the ball and the edge; keeping
    // the support 1.5 bump radii away from the chord ends leaves vertical
    // room for the bump graph.
    let bump_radius = radius / 2.0;
    let (edge_id, window) = flat_window_in_ball(domain, center, radius, bump_radius, 1.5)?;

    // Bump center: maximal discriminant separation inside the window.
    let r0 = cluster.start;
    let pair_refs: Vec<&crate::eigen::EigenPair> =
        (r0..r0 + cluster.len).map(|i| &pre.pairs[i]).collect();
    let mesh = triangulate(domain, config.h)?;
    let system = assemble(&mesh, domain.bc(), domain.sigma())?;
    let lambda_bar = pair_refs.iter().map(|p| p.lambda).sum::<f64>() / cluster.len as f64;
    let c_used = c_constant(domain.bc(), lambda_bar, domain.sigma());
    let traces: Vec<crate::shape::BoundaryTrace> = pair_refs
        .iter()
        .map(|p| boundary_trace(&mesh, &system, p, edge_id))
        .collect::<Result<_>>()?;
    let s0 = select_bump_center(&traces, c_used, bump_radius, Some(window))?;
    let base = BumpSpec { edge: edge_id, s0, c: bump_radius, t: 0.0 };

    // First-order amplitude guess from the Hadamard rates.
    let indices: Vec<usize> = (r0..r0 + cluster.len).collect();
    let field = DeformationField::new(domain, &BumpSpec { t: 1.0, ..base })?;
    let report = hadamard_matrix(&mesh, &system, &indices, &pair_refs, &field)?;
    let rate_scale = report
        .predicted_rates
        .iter()
        .map(|r| r.abs())
        .fold(0.0f64, f64::max)
        .max(1e-12);
    let t_guess = (0.5 * budget.shift_cap / rate_scale).min(1e6);

    let k_solve = pre.k();
    let pre_width_rel =
        cluster.width / pre.pairs[r0].lambda.abs().max(LAMBDA_FLOOR);
    let feasible = |c: &Candidate| c.budget_ok && c.tail_ok;
    let split_ok = |c: &Candidate| {
        c.post_multiplicity < cluster.len
            && c.post_gap_rel >= config.split_factor * pre_width_rel
    };

    // Geometric amplitude caps, so the perturbation provably stays inside the
    // ball. The graph point at offset ξ sits at distance
    // √((s0 + ξ − center)² + t²ρ(ξ)²); capping the height by the room left
    // under the chord keeps every point inside. A slope cap bounds the
    // reported Lipschitz contribution t·sup|ρ'|.
    let edge = domain.edge(edge_id)?;
    let s_center = edge.param_of(center);
    let reach = (s0 - s_center).abs() + bump_radius;
    let height_room = (radius * radius - reach * reach).max(0.0).sqrt();
    let rho_max = bump_radius * bump_radius / std::f64::consts::E;
    let t_ball = 0.98 * height_room / rho_max;
    let slope_unit = sup_profile_slope(bump_radius);
    let t_slope = config.max_graph_slope / slope_unit;
    let t_max = t_ball.min(t_slope);
    if !(t_max > 0.0) {
        return Err(Error::SplitFailed(format!(
            "no room for any outward amplitude at s0 = {s0:.4} inside the ball"
        )));
    }

    // Descending parallel ladder from the capped first-order guess, then
    // bisection for the largest feasible amplitude.
    let t_top = t_max.min(t_guess * 8.0);
    let ladder: Vec<f64> = (0..8).map(|j| t_top / 2f64.powi(j)).collect();
    let probes = probe_amplitudes(domain, base, &ladder, pre, budget, tau, config, k_solve);
    let mut lo: Option<(f64, Candidate)> = None;
    let mut hi: Option<f64> = None;
    for (t, outcome) in ladder.iter().zip(probes) {
        match outcome {
            Ok(c) if feasible(&c) => {
                lo = Some((*t, c));
                break; // descending ladder: the first feasible is the largest
            }
            _ => hi = Some(*t),
        }
    }
    // if even the top was feasible, grow toward the cap
    if let Some((t_lo_now, _)) = &lo {
        let mut t = *t_lo_now;
        while hi.is_none() && t < t_max * 0.999 {
            t = (t * 2.0).min(t_max);
            match evaluate_amplitude(domain, &BumpSpec { t, ..base }, pre, budget, tau, config, k_solve) {
                Ok(c) if feasible(&c) => lo = Some((t, c)),
                _ => hi = Some(t),
            }
        }
    }
    let (mut t_lo, mut best) = lo.ok_or_else(|| {
        Error::SplitFailed(format!(
            "no feasible amplitude in (0, {t_top:.3e}] (first-order guess {t_guess:.3e})"
        ))
    })?;
    if let Some(mut t_hi) = hi {
        for _ in 0..8 {
            let mid = 0.5 * (t_lo + t_hi);
            match evaluate_amplitude(domain, &BumpSpec { t: mid, ..base }, pre, budget, tau, config, k_solve) {
                Ok(c) if feasible(&c) => {
                    t_lo = mid;
                    best = c;
                }
                _ => t_hi = mid,
            }
        }
    }

    if !split_ok(&best) {
        return Err(Error::SplitFailed(format!(
            "largest budget-feasible amplitude {t_lo:.6e} leaves the cluster at multiplicity {} \
             with internal relative gap {:.3e} (required {:.3e} = {}x pre-split width)",
            best.post_multiplicity,
            best.post_gap_rel,
            config.split_factor * pre_width_rel,
            config.split_factor
        )));
    }

    // contract point 1: the symmetric difference stays inside the ball
    let confined = {
        let inside = |p: &Point2| p.dist(center) <= radius + 1e-12;
        let old_outside: Vec<&Point2> =
            domain.vertices().iter().filter(|p| !inside(p)).collect();
        let new_outside: Vec<&Point2> =
            best.domain.vertices().iter().filter(|p| !inside(p)).collect();
        old_outside.len() == new_outside.len()
            && old_outside.iter().zip(&new_outside).all(|(a, b)| a.dist(**b) <= 1e-12)
    };

    let chosen = BumpSpec { t: t_lo, ..base };
    let c1_norm = DeformationField::new(domain, &BumpSpec { t: 1.0, ..chosen })?
        .c1_norm(t_lo)?;
    let n_ratios = (budget.r + budget.m + 1).min(best.spectrum.k()).min(pre.k());
    let stability_ratios = stability_ratio(pre, &best.spectrum, c1_norm, n_ratios)?;

    let record = IterationRecord {
        n: 0,
        ball_center: center,
        ball_radius: radius,
        m_factor: budget.m_factor,
        edge: edge_id,
        s0,
        bump_radius,
        amplitude: t_lo,
        d_r: budget.d_r,
        shift_cap: budget.shift_cap,
        r: budget.r,
        multiplicity: cluster.len,
        pre_lambdas: pre.lambdas(),
        post_lambdas: best.spectrum.lambdas(),
        shifts: best.shifts.clone(),
        pre_width_rel,
        post_gap_rel: best.post_gap_rel,
        c1_norm,
        slope_bound: t_lo * slope_unit,
        stability_ratios,
        contract: [confined, best.budget_ok, true, best.tail_ok],
    };
    if !confined {
        return Err(Error::InvariantFailure(
            "bump polyline escaped the iteration ball".into(),
        ));
    }
    Ok((best.domain, record))
}

/// Locates the straight-edge window available for bumping inside a ball.
///
/// Returns the edge id and the admissible interval of bump centers s0 such
/// that the support of a bump of radius `bump_radius` stays inside the ball
/// with vertical room to spare (`chord_margin` multiples of the bump radius
/// from the chord ends), strictly inside the edge, and clear of previously
/// applied bumps.
pub fn flat_window_in_ball(
    domain: &PolygonalDomain,
    center: Point2,
    radius: f64,
    bump_radius: f64,
    chord_margin: f64,
) -> Result<(usize, (f64, f64))> {
    let mut best: Option<(usize, (f64, f64))> = None;
    for (id, edge) in domain.edges().iter().enumerate() {
        // chord of the ball on this edge line
        let proj = edge.param_of(center);
        let off = edge.offset_of(center);
        if off.abs() >= radius {
            continue;
        }
        let half = (radius * radius - off * off).sqrt();
        let mut lo = (proj - half).max(0.0);
        let mut hi = (proj + half).min(edge.length);
        // bump support must stay inside the ball chord and the edge interior
        lo = lo.max(bump_radius * 1.01).max(proj - half + chord_margin * bump_radius);
        hi = hi.min(edge.length - bump_radius * 1.01).min(proj + half - chord_margin * bump_radius);
        // stay clear of prior bumps
        for prior in domain.bump_ledger() {
            let prior_center = domain.bump_center(prior)?;
            let d_line = edge.offset_of(prior_center).abs();
            if d_line < bump_radius + prior.c {
                let p_proj = edge.param_of(prior_center);
                let clearance = bump_radius + prior.c + 1e-9;
                if p_proj < proj {
                    lo = lo.max(p_proj + clearance);
                } else {
                    hi = hi.min(p_proj - clearance);
                }
            }
        }
        if hi > lo {
            let better = match &best {
                None => true,
                Some((_, (b_lo, b_hi))) => hi - lo > b_hi - b_lo,
            };
            if better {
                best = Some((id, (lo, hi)));
            }
        }
    }
    best.ok_or_else(|| {
        Error::Placement(format!(
            "no straight edge segment inside the ball at ({:.4}, {:.4}) can host a bump of radius {:.4}; flatten first",
            center.x, center.y, bump_radius
        ))
    })
}

/// Per-index stability ratios |λ̃_n − λ_n| / (max(λ̃_n, λ_n, 1) · |φ − id|_C¹).
pub fn stability_ratio(
    pre: &Spectrum,
    post: &Spectrum,
    c1_norm: f64,
    n_max: usize,
) -> Result<Vec<f64>> {
    if !(c1_norm > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "stability ratios need a positive C¹ norm, got {c1_norm}"
        )));
    }
    if pre.k() < n_max || post.k() < n_max {
        return Err(Error::InvalidParameter(format!(
            "stability ratios need {n_max} pairs on both sides (have {} and {})",
            pre.k(),
            post.k()
        )));
    }
    Ok((0..n_max)
        .map(|i| {
            let a = pre.pairs[i].lambda;
            let b = post.pairs[i].lambda;
            (b - a).abs() / (a.max(b).max(LAMBDA_FLOOR) * c1_norm)
        })
        .collect())
}

/// Least-squares slope of λ_n against n over the upper half of the computed
/// range, compared with the two-dimensional Weyl constant 4π/area.
pub fn weyl_check(spectrum: &Spectrum, area: f64) -> Result<(f64, f64)> {
    let k = spectrum.k();
    if k < 10 {
        return Err(Error::InvalidParameter(format!(
            "Weyl slope fit needs at least 10 eigenvalues, got {k}"
        )));
    }
    if !(area > 0.0) {
        return Err(Error::InvalidParameter("area must be positive".into()));
    }
    let lambdas = spectrum.lambdas();
    let start = k / 2;
    let ns: Vec<f64> = (start..k).map(|i| (i + 1) as f64).collect();
    let ls: Vec<f64> = (start..k).map(|i| lambdas[i]).collect();
    let n_mean = ns.iter().sum::<f64>() / ns.len() as f64;
    let l_mean = ls.iter().sum::<f64>() / ls.len() as f64;
    let mut num = 0.0;
    let mut den = 0.0;
    for (n, l) in ns.iter().zip(&ls) {
        num += (n - n_mean) * (l - l_mean);
        den += (n - n_mean) * (n - n_mean);
    }
    let slope = num / den;
    let weyl = 4.0 * std::f64::consts::PI / area;
    Ok((slope, (slope - weyl).abs() / weyl))
}

/// Runs the full simplification loop on a domain.
///
/// Terminates successfully when the first `k_target` eigenvalues are simple
/// at the working cluster tolerance; returns a partial-success trace when the
/// iteration cap is reached, no admissible bump fits, or a split stalls.
pub fn simplify_spectrum(
    domain: &PolygonalDomain,
    k_target: usize,
    epsilon: f64,
    x: Point2,
    config: &SplitConfig,
) -> Result<(PolygonalDomain, SplitTrace)> {
    let started = Instant::now();
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParameter(format!("epsilon must be positive, got {epsilon}")));
    }
    if k_target < 2 {
        return Err(Error::InvalidParameter("K_target must be at least 2".into()));
    }
    // x must lie on the boundary
    {
        let verts = domain.vertices();
        let n = verts.len();
        let mut dist = f64::INFINITY;
        for i in 0..n {
            let a = verts[i];
            let b = verts[(i + 1) % n];
            let ab = b - a;
            let t = ((x - a).dot(ab) / ab.dot(ab)).clamp(0.0, 1.0);
            dist = dist.min(x.dist(a + ab * t));
        }
        if dist > 1e-9 * domain.perimeter().max(1.0) {
            return Err(Error::InvalidParameter(format!(
                "anchor point ({}, {}) is {dist:.3e} away from the boundary",
                x.x, x.y
            )));
        }
    }
    let tau = match config.tau_cluster {
        Some(t) => t,
        None => calibrate_tau(config.h, config.tol)?,
    };
    let lipschitz_before = domain.lipschitz_constant()?;

    // Step 0: make sure a flat window exists inside the epsilon ball. The
    // layout chord uses radius 0.78·ε so every ball placed on it stays inside
    // the ε ball outright.
    let min_bump = 2.0 * config.h; // support must be mesh-resolvable
    let mut current = domain.clone();
    let mut flattened = false;
    if flat_window_in_ball(&current, x, 0.78 * epsilon, min_bump, 0.0).is_err() {
        current = current.flatten_patch(x, epsilon / 3.0, 2.0 * epsilon / 3.0, config.flatten_resolution)?;
        flattened = true;
    }
    let (window_edge, window) = match flat_window_in_ball(&current, x, 0.78 * epsilon, min_bump, 0.0) {
        Ok(w) => w,
        Err(_) => {
            // epsilon too small for any admissible bump: partial success,
            // nothing split
            let after = current.lipschitz_constant()?;
            return Ok((
                current,
                SplitTrace {
                    iterations: Vec::new(),
                    r_history: Vec::new(),
                    success: false,
                    message: format!(
                        "no admissible bump of radius ≥ {min_bump:.4} fits inside the ε = {epsilon} ball"
                    ),
                    lipschitz_before,
                    lipschitz_after: after,
                    flattened,
                    elapsed_seconds: started.elapsed().as_secs_f64(),
                },
            ));
        }
    };

    // Ball layout along the window: radii c·2⁻ⁿ, tangent with small gaps.
    let window_len = window.1 - window.0;
    let ball_scale = window_len / 4.2;
    let ball_at = |n: usize| -> (f64, f64) {
        // returns (center arclength, radius)
        let mut s = window.0;
        for j in 0..n {
            s += 2.05 * ball_scale * 2f64.powi(-(j as i32));
        }
        let radius = ball_scale * 2f64.powi(-(n as i32));
        (s + 1.025 * radius, radius)
    };

    let mut iterations: Vec<IterationRecord> = Vec::new();
    let mut r_history: Vec<usize> = Vec::new();
    let mut success = false;
    let mut message = String::new();
    let k_solve = k_target + config.tail;

    for n in 0..config.max_iterations {
        let mesh = triangulate(&current, config.h)?;
        let system = assemble(&mesh, current.bc(), current.sigma())?;
        let spectrum = solve_lowest(&system, k_solve, config.tol)?;
        let clustered = detect_clusters(&spectrum, tau)?;

        // first degenerate cluster starting within the target window
        let target_cluster = clustered
            .clusters
            .iter()
            .copied()
            .find(|c| c.len >= 2 && c.start < k_target);
        let Some(cluster) = target_cluster else {
            success = true;
            message = format!("first {k_target} eigenvalues simple after {} splits", iterations.len());
            break;
        };
        let r_n = cluster.start + 1;
        if let Some(&last) = r_history.last() {
            if r_n < last {
                return Err(Error::InvariantFailure(format!(
                    "first non-simple index decreased from {last} to {r_n}"
                )));
            }
            // the same index may repeat at most r_n times beyond its first
            // appearance
            let run = r_history.iter().rev().take_while(|&&v| v == r_n).count();
            if run > r_n {
                return Err(Error::InvariantFailure(format!(
                    "index {r_n} stayed non-simple for {run} consecutive iterations (allowed {r_n})"
                )));
            }
        }
        r_history.push(r_n);

        let (ball_s, ball_radius) = ball_at(n);
        let edge = current.edge(window_edge)?;
        let ball_center = edge.point_at(ball_s);
        if ball_radius / 2.0 < min_bump {
            message = format!(
                "iteration {n}: ball radius {ball_radius:.5} cannot host a mesh-resolvable bump"
            );
            break;
        }
        let m_factor = config.m_cap.min(2f64.powi(-(n as i32 + 1)));
        let budget = SplitBudget::new(m_factor, &clustered, cluster)?;
        match split_once(&current, &clustered, cluster, (ball_center, ball_radius), &budget, config) {
            Ok((next, mut record)) => {
                record.n = n;
                iterations.push(record);
                current = next;
            }
            Err(Error::SplitFailed(why)) => {
                message = format!("iteration {n}: split failed: {why}");
                break;
            }
            Err(other) => return Err(other),
        }
    }
    if !success && message.is_empty() {
        message = format!("iteration cap {} reached", config.max_iterations);
    }

    // localization: vertices outside the epsilon ball are untouched
    let inside = |p: &Point2| p.dist(x) <= epsilon + 1e-12;
    let old_outside: Vec<&Point2> = domain.vertices().iter().filter(|p| !inside(p)).collect();
    let new_outside: Vec<&Point2> = current.vertices().iter().filter(|p| !inside(p)).collect();
    let localized = old_outside.len() == new_outside.len()
        && old_outside.iter().zip(&new_outside).all(|(a, b)| a.dist(**b) <= 1e-12);
    if !localized {
        return Err(Error::InvariantFailure(
            "simplification modified the boundary outside the ε ball".into(),
        ));
    }

    let lipschitz_after = current.lipschitz_constant()?;
    Ok((
        current,
        SplitTrace {
            iterations,
            r_history,
            success,
            message,
            lipschitz_before,
            lipschitz_after,
            flattened,
            elapsed_seconds: started.elapsed().as_secs_f64(),
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigen::EigenPair;
    use crate::geometry::BoundaryCondition;
    use std::f64::consts::PI;

    fn synthetic_spectrum(lambdas: &[f64]) -> Spectrum {
        let pairs: Vec<EigenPair> = lambdas
            .iter()
            .map(|&l| EigenPair { lambda: l, vector: vec![1.0], residual: 0.0 })
            .collect();
        let spectrum = Spectrum { pairs, clusters: Vec::new(), tau_cluster: None };
        detect_clusters(&spectrum, 1e-6).unwrap()
    }

    #[test]
    fn budget_rejects_m_at_least_half() {
        let spectrum = synthetic_spectrum(&[1.0, 2.0, 2.0 + 1e-9, 3.0, 4.0, 5.0]);
        let cluster = spectrum.first_degenerate_cluster().unwrap();
        assert!(matches!(
            SplitBudget::new(0.6, &spectrum, cluster),
            Err(Error::InvariantFailure(_))
        ));
        assert!(matches!(
            SplitBudget::new(0.5, &spectrum, cluster),
            Err(Error::InvariantFailure(_))
        ));
        let ok = SplitBudget::new(0.4, &spectrum, cluster).unwrap();
        assert_eq!(ok.r, 2);
        assert_eq!(ok.m, 2);
        assert!((ok.shift_cap - 0.4 * ok.d_r).abs() <= 1e-15);
    }

    #[test]
    fn stability_ratio_formula_and_errors() {
        let pre = synthetic_spectrum(&[10.0, 20.0]);
        let post = synthetic_spectrum(&[11.0, 22.0]);
        let ratios = stability_ratio(&pre, &post, 0.5, 2).unwrap();
        assert!((ratios[0] - 1.0 / (11.0 * 0.5)).abs() <= 1e-15);
        assert!((ratios[1] - 2.0 / (22.0 * 0.5)).abs() <= 1e-15);
        assert!(matches!(stability_ratio(&pre, &post, 0.0, 2), Err(Error::InvalidParameter(_))));
        assert!(matches!(stability_ratio(&pre, &post, 0.5, 3), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn weyl_check_exact_synthetic_law() {
        // λ_n = 4πn/|Ω| exactly → slope matches with zero deviation
        let area = 2.0;
        let lambdas: Vec<f64> = (1..=30).map(|n| 4.0 * PI * n as f64 / area).collect();
        let spectrum = synthetic_spectrum(&lambdas);
        let (slope, dev) = weyl_check(&spectrum, area).unwrap();
        assert!((slope - 4.0 * PI / area).abs() <= 1e-9);
        assert!(dev <= 1e-12);
        // scaling the domain by 2 scales areas by 4 and slopes by 1/4
        let scaled: Vec<f64> = lambdas.iter().map(|l| l / 4.0).collect();
        let spectrum_scaled = synthetic_spectrum(&scaled);
        let (slope_scaled, _) = weyl_check(&spectrum_scaled, 4.0 * area).unwrap();
        assert!((slope_scaled - slope / 4.0).abs() <= 1e-12);
        // too few eigenvalues
        let short = synthetic_spectrum(&lambdas[..5]);
        assert!(matches!(weyl_check(&short, area), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn flat_window_respects_prior_bumps() {
        let sq = PolygonalDomain::unit_square(BoundaryCondition::Dirichlet, 0.0);
        let (edge, (lo, hi)) =
            flat_window_in_ball(&sq, Point2::new(0.5, 0.0), 0.3, 0.05, 1.5).unwrap();
        assert_eq!(edge, 0);
        assert!(lo >= 0.25 - 1e-9 && hi <= 0.75 + 1e-9, "window [{lo}, {hi}]");
        // a bump in the middle shrinks the window on one side
        let bumped = sq
            .apply_bump(&BumpSpec { edge: 0, s0: 0.4, c: 0.05, t: 0.01 }, 32)
            .unwrap();
        let (_, (lo2, _)) = flat_window_in_ball(&bumped, Point2::new(0.5, 0.0), 0.3, 0.05, 1.5).unwrap();
        assert!(lo2 >= 0.5 - 1e-9, "window must clear the existing bump, got lo = {lo2}");
        // interior center finds nothing
        assert!(flat_window_in_ball(&sq, Point2::new(0.5, 0.0), 0.02, 0.05, 1.5).is_err());
    }

    #[test]
    fn simplify_rejects_bad_arguments() {
        let sq = PolygonalDomain::unit_square(BoundaryCondition::Dirichlet, 0.0);
        let config = SplitConfig::default();
        assert!(matches!(
            simplify_spectrum(&sq, 6, 0.0, Point2::new(0.5, 0.0), &config),
            Err(Error::InvalidParameter(_))
        ));
        assert!(matches!(
            simplify_spectrum(&sq, 1, 0.3, Point2::new(0.5, 0.0), &config),
            Err(Error::InvalidParameter(_))
        ));
        assert!(matches!(
            simplify_spectrum(&sq, 6, 0.3, Point2::new(0.5, 0.5), &config),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn simplify_tiny_epsilon_is_partial_success_with_no_splits() {
        let sq = PolygonalDomain::unit_square(BoundaryCondition::Dirichlet, 0.0);
        let config = SplitConfig { h: 0.05, ..SplitConfig::default() };
        let (out, trace) =
            simplify_spectrum(&sq, 6, 0.01, Point2::new(0.5, 0.0), &config).unwrap();
        assert!(!trace.success);
        assert!(trace.iterations.is_empty());
        assert_eq!(out.vertices().len(), sq.vertices().len());
    }

    #[test]
    fn golden_ratio_rectangle_needs_zero_splits() {
        let phi = (1.0 + 5.0f64.sqrt()) / 2.0;
        let rect =
            PolygonalDomain::rectangle(1.0, phi, BoundaryCondition::Dirichlet, 0.0).unwrap();
        let config = SplitConfig { h: 0.04, ..SplitConfig::default() };
        let (out, trace) =
            simplify_spectrum(&rect, 6, 0.3, Point2::new(0.5, 0.0), &config).unwrap();
        assert!(trace.success, "message: {}", trace.message);
        assert!(trace.iterations.is_empty());
        assert_eq!(out.vertices().len(), rect.vertices().len());
        for (a, b) in out.vertices().iter().zip(rect.vertices()) {
            assert_eq!(a, b);
        }
    }
}
