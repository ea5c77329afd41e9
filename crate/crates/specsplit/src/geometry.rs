//! Polygonal domains and localized boundary deformations.
//!
//! A [`PolygonalDomain`] is a simple, counter-clockwise polygon together with a
//! boundary-condition choice and a ledger of applied boundary bumps. Bumps use
//! the compactly supported profile [`bump_profile`] and are always directed
//! along the outward normal of a straight edge, so the deformed domain contains
//! the original one. The interior extension of a bump is available as a
//! [`DeformationField`], which exposes its displacement map, its exact normal
//! velocity on the boundary, and its C¹ norm. [`PolygonalDomain::flatten_patch`]
//! straightens the boundary near a point while leaving everything outside a
//! larger ball untouched.

use std::ops::{Add, Mul, Neg, Sub};

use crate::error::{Error, Result};

/// Absolute tolerance for "point lies on a line/segment" tests, relative to
/// the local length scale.
const GEOM_TOL: f64 = 1e-12;

/// A point (or vector) in the plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn dot(self, other: Point2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the cross product, positive when `other` is
    /// counter-clockwise from `self`.
    pub fn cross(self, other: Point2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn normalize(self) -> Point2 {
        let n = self.norm();
        Point2::new(self.x / n, self.y / n)
    }

    /// Rotation by -90°; maps a counter-clockwise boundary tangent to the
    /// outward normal.
    pub fn rot_cw(self) -> Point2 {
        Point2::new(self.y, -self.x)
    }

    pub fn dist(self, other: Point2) -> f64 {
        (self - other).norm()
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, rhs: Point2) -> Point2 {
        Point2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, rhs: Point2) -> Point2 {
        Point2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, rhs: f64) -> Point2 {
        Point2::new(self.x * rhs, self.y * rhs)
    }
}

impl Neg for Point2 {
    type Output = Point2;
    fn neg(self) -> Point2 {
        Point2::new(-self.x, -self.y)
    }
}

/// Homogeneous boundary condition imposed on the whole boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryCondition {
    Dirichlet,
    Neumann,
    Robin,
}

impl BoundaryCondition {
    pub fn as_str(self) -> &'static str {
        match self {
            BoundaryCondition::Dirichlet => "dirichlet",
            BoundaryCondition::Neumann => "neumann",
            BoundaryCondition::Robin => "robin",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "dirichlet" => Ok(BoundaryCondition::Dirichlet),
            "neumann" => Ok(BoundaryCondition::Neumann),
            "robin" => Ok(BoundaryCondition::Robin),
            other => Err(Error::InvalidParameter(format!(
                "unknown boundary condition '{other}' (expected dirichlet|neumann|robin)"
            ))),
        }
    }
}

/// The compactly supported bump profile `c² · exp(1/((s/c)² − 1))` on |s| < c.
///
/// The profile is C¹ across |s| = c and satisfies `max(sup|ρ|, sup|ρ'|) ≤ c`
/// for every c ≤ 1.
pub fn bump_profile(s: f64, c: f64) -> Result<f64> {
    if !(c > 0.0) {
        return Err(Error::InvalidParameter(format!("bump radius c must be positive, got {c}")));
    }
    let z = s / c;
    if z.abs() >= 1.0 {
        return Ok(0.0);
    }
    Ok(c * c * (1.0 / (z * z - 1.0)).exp())
}

/// Derivative of [`bump_profile`] with respect to the arclength offset.
pub fn bump_profile_deriv(s: f64, c: f64) -> Result<f64> {
    if !(c > 0.0) {
        return Err(Error::InvalidParameter(format!("bump radius c must be positive, got {c}")));
    }
    let z = s / c;
    let w = z * z - 1.0;
    if z.abs() >= 1.0 {
        return Ok(0.0);
    }
    // d/ds [exp(1/w)] = exp(1/w) · (−1/w²) · 2s/c²
    Ok(-(1.0 / w).exp() * 2.0 * s / (w * w))
}

/// Integral of the bump profile over its support.
///
/// Used by area bookkeeping: an outward bump of amplitude t adds exactly
/// `t · bump_profile_integral(c)` of area in the continuum limit.
pub fn bump_profile_integral(c: f64) -> Result<f64> {
    // ∫ρ_c = c³ ∫_{-1}^{1} exp(1/(σ²−1)) dσ; integrate the unit profile by
    // composite Simpson on a fine fixed grid (the integrand is smooth and
    // compactly supported, so this is accurate to near machine precision).
    if !(c > 0.0) {
        return Err(Error::InvalidParameter(format!("bump radius c must be positive, got {c}")));
    }
    let n = 4000; // even
    let h = 2.0 / n as f64;
    let unit = |z: f64| {
        let w = z * z - 1.0;
        if w >= 0.0 {
            0.0
        } else {
            (1.0 / w).exp()
        }
    };
    let mut acc = unit(-1.0) + unit(1.0);
    for i in 1..n {
        let z = -1.0 + i as f64 * h;
        acc += unit(z) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    Ok(c * c * c * acc * h / 3.0)
}

/// A single outward bump on a straight boundary edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BumpSpec {
    /// Id of the straight reference edge carrying the bump.
    pub edge: usize,
    /// Arclength coordinate of the bump center, measured from the edge start.
    pub s0: f64,
    /// Support radius of the profile.
    pub c: f64,
    /// Amplitude; the boundary point at arclength s moves by
    /// `t · ρ_c(s − s0)` along the outward normal. Outward only, so t ≥ 0.
    pub t: f64,
}

impl BumpSpec {
    fn validate(&self) -> Result<()> {
        if !(self.c > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "bump radius c must be positive, got {}",
                self.c
            )));
        }
        if !(self.t >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "bump amplitude t must be non-negative (outward only), got {}",
                self.t
            )));
        }
        Ok(())
    }
}

/// A straight reference edge of the base polygon.
#[derive(Debug, Clone, Copy)]
pub struct EdgeInfo {
    pub start: Point2,
    pub end: Point2,
    /// Unit direction from start to end.
    pub tangent: Point2,
    /// Unit outward normal.
    pub normal: Point2,
    pub length: f64,
}

impl EdgeInfo {
    fn new(start: Point2, end: Point2) -> Result<Self> {
        let length = start.dist(end);
        if length <= GEOM_TOL {
            return Err(Error::InvalidDomain(format!(
                "degenerate (zero-length) edge at ({}, {})",
                start.x, start.y
            )));
        }
        let tangent = (end - start) * (1.0 / length);
        Ok(EdgeInfo { start, end, tangent, normal: tangent.rot_cw(), length })
    }

    /// Point at arclength s from the edge start.
    pub fn point_at(&self, s: f64) -> Point2 {
        self.start + self.tangent * s
    }

    /// Arclength coordinate of the orthogonal projection of p onto the edge line.
    pub fn param_of(&self, p: Point2) -> f64 {
        (p - self.start).dot(self.tangent)
    }

    /// Signed distance of p from the edge line, positive on the outward side.
    pub fn offset_of(&self, p: Point2) -> f64 {
        (p - self.start).dot(self.normal)
    }
}

/// Maps one polyline segment of the current boundary back to its parent
/// reference edge and arclength interval there.
#[derive(Debug, Clone, Copy)]
pub struct SegRef {
    pub edge: usize,
    pub s_start: f64,
    pub s_end: f64,
}

/// A simple, counter-clockwise polygon with boundary condition and bump ledger.
///
/// `vertices` is the current boundary polyline (bump graphs are sampled into
/// it); `base_vertices` is the polygon before any bump was applied and is what
/// gets serialized, together with the ledger, so a domain file can be replayed
/// exactly.
#[derive(Debug, Clone)]
pub struct PolygonalDomain {
    base_vertices: Vec<Point2>,
    vertices: Vec<Point2>,
    seg_refs: Vec<SegRef>,
    edges: Vec<EdgeInfo>,
    bc: BoundaryCondition,
    sigma: f64,
    bump_ledger: Vec<BumpSpec>,
}

fn signed_area(vertices: &[Point2]) -> f64 {
    let n = vertices.len();
    let mut acc = 0.0;
    for i in 0..n {
        let a = vertices[i];
        let b = vertices[(i + 1) % n];
        acc += a.cross(b);
    }
    acc / 2.0
}

fn segments_properly_intersect(a: Point2, b: Point2, c: Point2, d: Point2) -> bool {
    let d1 = (b - a).cross(c - a);
    let d2 = (b - a).cross(d - a);
    let d3 = (d - c).cross(a - c);
    let d4 = (d - c).cross(b - c);
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

fn polyline_is_simple(vertices: &[Point2]) -> bool {
    let n = vertices.len();
    for i in 0..n {
        let (a, b) = (vertices[i], vertices[(i + 1) % n]);
        for j in (i + 1)..n {
            // skip segments sharing an endpoint
            if j == i || (j + 1) % n == i || (i + 1) % n == j {
                continue;
            }
            let (c, d) = (vertices[j], vertices[(j + 1) % n]);
            if segments_properly_intersect(a, b, c, d) {
                return false;
            }
        }
    }
    true
}

impl PolygonalDomain {
    /// Builds a domain from a counter-clockwise list of vertices.
    pub fn new(vertices: Vec<Point2>, bc: BoundaryCondition, sigma: f64) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::InvalidDomain(format!(
                "polygon needs at least 3 vertices, got {}",
                vertices.len()
            )));
        }
        if bc == BoundaryCondition::Robin && sigma == 0.0 {
            return Err(Error::InvalidParameter(
                "Robin boundary condition requires a non-zero sigma".into(),
            ));
        }
        let area = signed_area(&vertices);
        if !(area > 0.0) {
            return Err(Error::InvalidDomain(format!(
                "polygon must be counter-clockwise with positive area (signed area {area})"
            )));
        }
        if !polyline_is_simple(&vertices) {
            return Err(Error::InvalidDomain("polygon is self-intersecting".into()));
        }
        let n = vertices.len();
        let mut edges = Vec::with_capacity(n);
        let mut seg_refs = Vec::with_capacity(n);
        for i in 0..n {
            let edge = EdgeInfo::new(vertices[i], vertices[(i + 1) % n])?;
            seg_refs.push(SegRef { edge: i, s_start: 0.0, s_end: edge.length });
            edges.push(edge);
        }
        Ok(PolygonalDomain {
            base_vertices: vertices.clone(),
            vertices,
            seg_refs,
            edges,
            bc,
            sigma,
            bump_ledger: Vec::new(),
        })
    }

    pub fn unit_square(bc: BoundaryCondition, sigma: f64) -> Self {
        PolygonalDomain::new(
            vec![
                Point2::new(0.0, 0.0),
                Point2::new(1.0, 0.0),
                Point2::new(1.0, 1.0),
                Point2::new(0.0, 1.0),
            ],
            bc,
            sigma,
        )
        .expect("unit square is a valid polygon")
    }

    pub fn rectangle(width: f64, height: f64, bc: BoundaryCondition, sigma: f64) -> Result<Self> {
        PolygonalDomain::new(
            vec![
                Point2::new(0.0, 0.0),
                Point2::new(width, 0.0),
                Point2::new(width, height),
                Point2::new(0.0, height),
            ],
            bc,
            sigma,
        )
    }

    /// L-shaped domain [0,2]² minus the upper-right unit square; the reentrant
    /// corner sits at (1, 1).
    pub fn l_shape(bc: BoundaryCondition, sigma: f64) -> Self {
        PolygonalDomain::new(
            vec![
                Point2::new(0.0, 0.0),
                Point2::new(2.0, 0.0),
                Point2::new(2.0, 1.0),
                Point2::new(1.0, 1.0),
                Point2::new(1.0, 2.0),
                Point2::new(0.0, 2.0),
            ],
            bc,
            sigma,
        )
        .expect("L-shape is a valid polygon")
    }

    pub fn regular_polygon(sides: usize, radius: f64, bc: BoundaryCondition, sigma: f64) -> Result<Self> {
        if sides < 3 {
            return Err(Error::InvalidDomain("regular polygon needs at least 3 sides".into()));
        }
        let vertices = (0..sides)
            .map(|i| {
                let a = 2.0 * std::f64::consts::PI * i as f64 / sides as f64;
                Point2::new(radius * a.cos(), radius * a.sin())
            })
            .collect();
        PolygonalDomain::new(vertices, bc, sigma)
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn base_vertices(&self) -> &[Point2] {
        &self.base_vertices
    }

    pub fn seg_refs(&self) -> &[SegRef] {
        &self.seg_refs
    }

    pub fn edges(&self) -> &[EdgeInfo] {
        &self.edges
    }

    pub fn edge(&self, id: usize) -> Result<&EdgeInfo> {
        self.edges.get(id).ok_or(Error::UnknownEdge(id))
    }

    pub fn bc(&self) -> BoundaryCondition {
        self.bc
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn bump_ledger(&self) -> &[BumpSpec] {
        &self.bump_ledger
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.vertices)
    }

    pub fn perimeter(&self) -> f64 {
        let n = self.vertices.len();
        (0..n).map(|i| self.vertices[i].dist(self.vertices[(i + 1) % n])).sum()
    }

    /// Winding-number point-in-polygon test against the current polyline.
    pub fn contains(&self, p: Point2) -> bool {
        let n = self.vertices.len();
        let mut winding = 0i32;
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            if a.y <= p.y {
                if b.y > p.y && (b - a).cross(p - a) > 0.0 {
                    winding += 1;
                }
            } else if b.y <= p.y && (b - a).cross(p - a) < 0.0 {
                winding -= 1;
            }
        }
        winding != 0
    }

    /// Center of the support ball of a bump (on the reference edge line).
    pub fn bump_center(&self, bump: &BumpSpec) -> Result<Point2> {
        Ok(self.edge(bump.edge)?.point_at(bump.s0))
    }

    fn check_bump_placement(&self, bump: &BumpSpec) -> Result<()> {
        bump.validate()?;
        let edge = self.edge(bump.edge)?;
        if bump.s0 - bump.c <= GEOM_TOL || bump.s0 + bump.c >= edge.length - GEOM_TOL {
            return Err(Error::Placement(format!(
                "bump support [{:.6}, {:.6}] must lie strictly inside edge {} of length {:.6}",
                bump.s0 - bump.c,
                bump.s0 + bump.c,
                bump.edge,
                edge.length
            )));
        }
        let center = edge.point_at(bump.s0);
        for prior in &self.bump_ledger {
            let prior_center = self.bump_center(prior)?;
            let dist = center.dist(prior_center);
            if dist <= bump.c + prior.c {
                return Err(Error::Placement(format!(
                    "bump support ball at ({:.6}, {:.6}) overlaps an existing bump (centers {:.6} apart, radii {:.6} + {:.6})",
                    center.x, center.y, dist, bump.c, prior.c
                )));
            }
        }
        Ok(())
    }

    /// Applies an outward bump, replacing the straight support interval by a
    /// polyline sampling of the displaced graph with `resolution` points.
    ///
    /// With t = 0 the polyline is unchanged and only the ledger grows.
    pub fn apply_bump(&self, bump: &BumpSpec, resolution: usize) -> Result<PolygonalDomain> {
        if resolution < 3 {
            return Err(Error::InvalidParameter(format!(
                "bump resolution must be at least 3, got {resolution}"
            )));
        }
        self.check_bump_placement(bump)?;
        let mut result = self.clone();
        result.bump_ledger.push(*bump);
        if bump.t == 0.0 {
            return Ok(result);
        }

        let edge = self.edge(bump.edge)?;
        let (lo, hi) = (bump.s0 - bump.c, bump.s0 + bump.c);
        // The support must sit inside one still-straight polyline segment of
        // the parent edge. Ball disjointness guarantees this unless the caller
        // constructed the domain inconsistently.
        let seg_idx = (0..self.seg_refs.len())
            .find(|&i| {
                let seg = &self.seg_refs[i];
                seg.edge == bump.edge
                    && seg.s_start <= lo + GEOM_TOL
                    && seg.s_end >= hi - GEOM_TOL
                    && self.segment_is_straight(i, edge)
            })
            .ok_or_else(|| {
                Error::Placement(format!(
                    "no straight boundary segment of edge {} covers the bump support [{lo:.6}, {hi:.6}]",
                    bump.edge
                ))
            })?;

        let seg = self.seg_refs[seg_idx];
        let mut new_vertices = Vec::with_capacity(self.vertices.len() + resolution);
        let mut new_seg_refs = Vec::with_capacity(self.seg_refs.len() + resolution);
        for i in 0..self.vertices.len() {
            new_vertices.push(self.vertices[i]);
            if i == seg_idx {
                // sample points of the displaced graph, support endpoints included
                let mut params = Vec::with_capacity(resolution);
                for k in 0..resolution {
                    params.push(lo + (hi - lo) * k as f64 / (resolution - 1) as f64);
                }
                let mut prev_s = seg.s_start;
                for &s in &params {
                    if s > prev_s + GEOM_TOL {
                        new_seg_refs.push(SegRef { edge: bump.edge, s_start: prev_s, s_end: s });
                        let rho = bump_profile(s - bump.s0, bump.c)?;
                        new_vertices.push(edge.point_at(s) + edge.normal * (bump.t * rho));
                        prev_s = s;
                    }
                }
                new_seg_refs.push(SegRef { edge: bump.edge, s_start: prev_s, s_end: seg.s_end });
            } else {
                new_seg_refs.push(self.seg_refs[i]);
            }
        }
        result.vertices = new_vertices;
        result.seg_refs = new_seg_refs;

        if !polyline_is_simple(&result.vertices) {
            return Err(Error::InvalidDomain(
                "bump amplitude produced a self-intersecting boundary".into(),
            ));
        }
        debug_assert!(result.area() > self.area());
        Ok(result)
    }

    /// A polyline segment is straight iff both endpoints sit on the reference
    /// edge line.
    fn segment_is_straight(&self, idx: usize, edge: &EdgeInfo) -> bool {
        let a = self.vertices[idx];
        let b = self.vertices[(idx + 1) % self.vertices.len()];
        edge.offset_of(a).abs() <= 1e-9 * edge.length.max(1.0)
            && edge.offset_of(b).abs() <= 1e-9 * edge.length.max(1.0)
    }

    /// Largest local graph slope over the boundary vertices.
    ///
    /// At a vertex whose incident edges leave along unit directions d₁ and d₂
    /// with angle θ between them, the minimal Lipschitz constant of a graph
    /// representation of the two rays is tan((π − θ)/2); collinear vertices
    /// contribute zero.
    pub fn lipschitz_constant(&self) -> Result<f64> {
        let n = self.vertices.len();
        let mut best: f64 = 0.0;
        for i in 0..n {
            let v = self.vertices[i];
            let prev = self.vertices[(i + n - 1) % n];
            let next = self.vertices[(i + 1) % n];
            let l1 = v.dist(prev);
            let l2 = v.dist(next);
            if l1 <= GEOM_TOL || l2 <= GEOM_TOL {
                return Err(Error::InvalidDomain("degenerate edge at a boundary vertex".into()));
            }
            let d1 = (prev - v) * (1.0 / l1);
            let d2 = (next - v) * (1.0 / l2);
            let cos_theta = d1.dot(d2).clamp(-1.0, 1.0);
            let theta = cos_theta.acos();
            let slope = ((std::f64::consts::PI - theta) / 2.0).tan();
            best = best.max(slope);
        }
        Ok(best)
    }

    /// Replaces the boundary inside radius r around `center` by a straight
    /// segment in the local graph frame; the transition up to radius R samples
    /// the damped graph φ·η, and the boundary outside R is untouched.
    ///
    /// If the boundary is already straight inside radius r the domain is
    /// returned unchanged, which also makes the operation idempotent.
    pub fn flatten_patch(
        &self,
        center: Point2,
        r: f64,
        big_r: f64,
        resolution: usize,
    ) -> Result<PolygonalDomain> {
        if !(r > 0.0) || !(big_r > r) {
            return Err(Error::InvalidParameter(format!(
                "flatten radii must satisfy 0 < r < R, got r = {r}, R = {big_r}"
            )));
        }
        if resolution < 2 {
            return Err(Error::InvalidParameter("flatten resolution must be at least 2".into()));
        }
        if !self.bump_ledger.is_empty() {
            return Err(Error::Placement(
                "flatten_patch must be applied before any bump (non-empty ledger)".into(),
            ));
        }

        // Locate the center on the boundary polyline.
        let n = self.vertices.len();
        let scale = self.perimeter().max(1.0);
        let mut location = None; // (segment index, point)
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            let len = a.dist(b);
            let t = ((center - a).dot(b - a) / (len * len)).clamp(0.0, 1.0);
            let proj = a + (b - a) * t;
            if proj.dist(center) <= 1e-9 * scale {
                location = Some((i, proj));
                break;
            }
        }
        let (seg0, center) =
            location.ok_or_else(|| Error::InvalidParameter("flatten center must lie on the boundary".into()))?;

        // Walk forward and backward from the center to the exit points where
        // the boundary leaves the ball of radius R.
        let exit = |start_seg: usize, start_pt: Point2, forward: bool| -> Result<(usize, Point2, Vec<Point2>)> {
            let mut chain = Vec::new();
            let mut pt = start_pt;
            let mut seg = start_seg;
            for _ in 0..n {
                let next_vertex = if forward {
                    self.vertices[(seg + 1) % n]
                } else {
                    self.vertices[seg]
                };
                if next_vertex.dist(center) >= big_r {
                    // exit on this segment: solve |pt + u·(next - pt)| = R
                    let d = next_vertex - pt;
                    let f = pt - center;
                    let a2 = d.dot(d);
                    let b2 = 2.0 * f.dot(d);
                    let c2 = f.dot(f) - big_r * big_r;
                    let disc = (b2 * b2 - 4.0 * a2 * c2).max(0.0).sqrt();
                    let u = (-b2 + disc) / (2.0 * a2);
                    return Ok((seg, pt + d * u.clamp(0.0, 1.0), chain));
                }
                chain.push(next_vertex);
                pt = next_vertex;
                seg = if forward { (seg + 1) % n } else { (seg + n - 1) % n };
            }
            Err(Error::InvalidParameter(
                "flatten ball of radius R swallows the whole boundary".into(),
            ))
        };
        let (seg_fwd, p_plus, chain_fwd) = exit(seg0, center, true)?;
        let (seg_bwd, p_minus, chain_bwd) = exit(seg0, center, false)?;

        // Verify that no non-adjacent boundary part enters the ball.
        {
            let mut inside = vec![false; n];
            for (i, v) in self.vertices.iter().enumerate() {
                inside[i] = v.dist(center) < big_r;
            }
            let mut patch_members = std::collections::HashSet::new();
            for v in chain_fwd.iter().chain(chain_bwd.iter()) {
                for (i, w) in self.vertices.iter().enumerate() {
                    if w.dist(*v) <= GEOM_TOL {
                        patch_members.insert(i);
                    }
                }
            }
            for i in 0..n {
                if inside[i] && !patch_members.contains(&i) {
                    return Err(Error::Placement(
                        "flatten ball of radius R meets boundary parts other than the patch".into(),
                    ));
                }
            }
        }

        // Local graph frame at the center: axis along the walk direction.
        let u_in = {
            let a = self.vertices[seg0];
            if center.dist(a) > 1e-9 * scale {
                (center - a).normalize()
            } else {
                let prev = self.vertices[(seg0 + n - 1) % n];
                (center - prev).normalize()
            }
        };
        let u_out = {
            let b = self.vertices[(seg0 + 1) % n];
            if center.dist(b) > 1e-9 * scale {
                (b - center).normalize()
            } else {
                let next = self.vertices[(seg0 + 2) % n];
                (next - b).normalize()
            }
        };
        let axis_raw = u_in + u_out;
        if axis_raw.norm() <= GEOM_TOL {
            return Err(Error::InvalidDomain("boundary reverses direction at flatten center".into()));
        }
        let axis = axis_raw.normalize();
        let normal = axis.rot_cw();

        // Patch polyline through the center, backward chain reversed.
        let mut patch: Vec<Point2> = Vec::new();
        patch.push(p_minus);
        for v in chain_bwd.iter().rev() {
            patch.push(*v);
        }
        patch.push(center);
        patch.extend(chain_fwd.iter().copied());
        patch.push(p_plus);
        patch.dedup_by(|a, b| a.dist(*b) <= GEOM_TOL);

        // Graph coordinates; require strict monotonicity along the axis.
        let coords: Vec<(f64, f64)> = patch
            .iter()
            .map(|p| ((*p - center).dot(axis), (*p - center).dot(normal)))
            .collect();
        for pair in coords.windows(2) {
            if pair[1].0 <= pair[0].0 + GEOM_TOL {
                return Err(Error::InvalidDomain(
                    "boundary near the flatten center is not a graph over the local axis".into(),
                ));
            }
        }
        let (xi_minus, _) = coords[0];
        let (xi_plus, _) = coords[coords.len() - 1];
        if xi_minus >= -r || xi_plus <= r {
            return Err(Error::InvalidParameter(
                "flatten radius r reaches past the patch ends; decrease r or increase R".into(),
            ));
        }

        let phi = |xi: f64| -> f64 {
            // piecewise-linear interpolation of the original graph
            for pair in coords.windows(2) {
                let (x0, z0) = pair[0];
                let (x1, z1) = pair[1];
                if xi >= x0 - GEOM_TOL && xi <= x1 + GEOM_TOL {
                    let t = ((xi - x0) / (x1 - x0)).clamp(0.0, 1.0);
                    return z0 + (z1 - z0) * t;
                }
            }
            0.0
        };

        // Already flat inside radius r → unchanged (makes the op idempotent).
        let flat_tol = 1e-12 * scale;
        let already_flat = (0..=64).all(|k| {
            let xi = -r + 2.0 * r * k as f64 / 64.0;
            phi(xi).abs() <= flat_tol
        });
        if already_flat {
            return Ok(self.clone());
        }

        // New patch: ramp samples on each side, flat segment in between.
        let half = (resolution / 2).max(2);
        let mut new_patch = Vec::new();
        new_patch.push(p_minus);
        for k in 1..half {
            let xi = xi_minus + (-r - xi_minus) * k as f64 / half as f64;
            let eta = smooth_ramp((xi - xi_minus) / (-r - xi_minus));
            let damped = phi(xi) * (1.0 - eta);
            new_patch.push(center + axis * xi + normal * damped);
        }
        new_patch.push(center + axis * (-r));
        new_patch.push(center + axis * r);
        for k in 1..half {
            let xi = r + (xi_plus - r) * k as f64 / half as f64;
            let eta = smooth_ramp((xi - r) / (xi_plus - r));
            let damped = phi(xi) * eta;
            new_patch.push(center + axis * xi + normal * damped);
        }
        new_patch.push(p_plus);

        // Splice: walk the old polygon from p_plus around to p_minus, then the
        // new patch.
        let mut new_vertices: Vec<Point2> = Vec::new();
        new_vertices.extend(new_patch.iter().copied());
        let mut seg = seg_fwd;
        loop {
            let v = self.vertices[(seg + 1) % n];
            if seg == seg_bwd {
                break;
            }
            if v.dist(p_plus) > GEOM_TOL {
                new_vertices.push(v);
            }
            seg = (seg + 1) % n;
        }
        new_vertices.dedup_by(|a, b| a.dist(*b) <= GEOM_TOL);
        if new_vertices.last().map(|v| v.dist(new_vertices[0]) <= GEOM_TOL) == Some(true) {
            new_vertices.pop();
        }

        PolygonalDomain::new(new_vertices, self.bc, self.sigma)
    }
}

/// Quintic smoothstep: 0 at 0, 1 at 1, zero first and second derivatives at
/// both ends.
pub(crate) fn smooth_ramp(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * x * (10.0 + x * (-15.0 + 6.0 * x))
}

/// Derivative of [`smooth_ramp`].
pub(crate) fn smooth_ramp_deriv(x: f64) -> f64 {
    if !(0.0..=1.0).contains(&x) {
        return 0.0;
    }
    30.0 * x * x * (1.0 - x) * (1.0 - x)
}

/// One-parameter interior extension of a boundary bump.
///
/// The displacement at a point p with tangential offset ξ and distance ρ from
/// the bump center is `t · ρ_c(ξ) · η(ρ) · ν`, where η ≡ 1 up to radius c and
/// decays smoothly to 0 at radius c + cutoff_width. On the bump edge this
/// reduces to the exact normal motion `t · ρ_c(s − s0)`.
#[derive(Debug, Clone)]
pub struct DeformationField {
    bump: BumpSpec,
    cutoff_width: f64,
    origin: Point2,
    tangent: Point2,
    normal: Point2,
    c1_unit: f64,
}

impl DeformationField {
    /// Builds the field with the default cutoff width equal to the bump radius.
    pub fn new(domain: &PolygonalDomain, bump: &BumpSpec) -> Result<Self> {
        Self::with_cutoff_width(domain, bump, bump.c)
    }

    pub fn with_cutoff_width(
        domain: &PolygonalDomain,
        bump: &BumpSpec,
        cutoff_width: f64,
    ) -> Result<Self> {
        bump.validate()?;
        if !(cutoff_width > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "cutoff width must be positive, got {cutoff_width}"
            )));
        }
        domain.check_bump_placement(bump)?;
        let edge = domain.edge(bump.edge)?;
        let mut field = DeformationField {
            bump: *bump,
            cutoff_width,
            origin: edge.point_at(bump.s0),
            tangent: edge.tangent,
            normal: edge.normal,
            c1_unit: 0.0,
        };
        field.c1_unit = field.compute_c1_unit();
        Ok(field)
    }

    pub fn bump(&self) -> &BumpSpec {
        &self.bump
    }

    pub fn cutoff_width(&self) -> f64 {
        self.cutoff_width
    }

    pub fn support_center(&self) -> Point2 {
        self.origin
    }

    /// Radius outside of which the displacement vanishes identically.
    pub fn support_radius(&self) -> f64 {
        self.bump.c + self.cutoff_width
    }

    fn cutoff(&self, radius: f64) -> f64 {
        if radius <= self.bump.c {
            1.0
        } else {
            1.0 - smooth_ramp((radius - self.bump.c) / self.cutoff_width)
        }
    }

    fn cutoff_deriv(&self, radius: f64) -> f64 {
        if radius <= self.bump.c {
            0.0
        } else {
            -smooth_ramp_deriv((radius - self.bump.c) / self.cutoff_width) / self.cutoff_width
        }
    }

    /// Displacement vector at point p for amplitude t (linear in t).
    pub fn displacement(&self, p: Point2, t: f64) -> Point2 {
        let rel = p - self.origin;
        let xi = rel.dot(self.tangent);
        let radius = rel.norm();
        if xi.abs() >= self.bump.c || radius >= self.support_radius() {
            return Point2::new(0.0, 0.0);
        }
        let rho = bump_profile(xi, self.bump.c).expect("validated radius");
        self.normal * (t * rho * self.cutoff(radius))
    }

    /// Normal velocity ν·ė₀ at edge arclength s; equals the bump profile.
    pub fn normal_velocity(&self, s: f64) -> f64 {
        bump_profile(s - self.bump.s0, self.bump.c).expect("validated radius")
    }

    /// Pointwise |displacement| + operator norm of the displacement Jacobian,
    /// evaluated from the closed forms.
    fn pointwise_c1(&self, p: Point2) -> f64 {
        let rel = p - self.origin;
        let xi = rel.dot(self.tangent);
        let radius = rel.norm();
        if xi.abs() >= self.bump.c || radius >= self.support_radius() {
            return 0.0;
        }
        let rho = bump_profile(xi, self.bump.c).expect("validated radius");
        let rho_d = bump_profile_deriv(xi, self.bump.c).expect("validated radius");
        let eta = self.cutoff(radius);
        let eta_d = self.cutoff_deriv(radius);
        // ∇f for f(p) = ρ(ξ)·η(|p−origin|)
        let grad = if radius <= GEOM_TOL {
            self.tangent * (rho_d * eta)
        } else {
            self.tangent * (rho_d * eta) + rel * (rho * eta_d / radius)
        };
        rho * eta + grad.norm()
    }

    /// Exact C¹ norm of φ_t − id: the supremum over the plane of pointwise
    /// displacement magnitude plus Jacobian operator norm, which is linear in
    /// t because the displacement is.
    pub fn c1_norm(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::InvalidParameter(format!("amplitude t must be non-negative, got {t}")));
        }
        Ok(t * self.c1_unit)
    }

    fn compute_c1_unit(&self) -> f64 {
        let c = self.bump.c;
        // Inside radius c the cutoff is identically 1 and the pointwise value
        // reduces to the 1D function ρ(ξ) + |ρ'(ξ)|: scan and refine.
        let f1 = |xi: f64| {
            bump_profile(xi, c).unwrap() + bump_profile_deriv(xi, c).unwrap().abs()
        };
        let mut best = 0.0f64;
        let mut best_xi = 0.0;
        let n1 = 4001;
        for k in 0..n1 {
            let xi = -c + 2.0 * c * k as f64 / (n1 - 1) as f64;
            let v = f1(xi);
            if v > best {
                best = v;
                best_xi = xi;
            }
        }
        // golden-section polish around the best sample
        let mut lo = (best_xi - 2.0 * c / n1 as f64).max(-c);
        let mut hi = (best_xi + 2.0 * c / n1 as f64).min(c);
        let inv_phi = 0.618_033_988_749_894_9;
        for _ in 0..80 {
            let m1 = hi - (hi - lo) * inv_phi;
            let m2 = lo + (hi - lo) * inv_phi;
            if f1(m1) < f1(m2) {
                lo = m1;
            } else {
                hi = m2;
            }
        }
        best = best.max(f1((lo + hi) / 2.0));

        // Annulus where the cutoff decays: 2D scan in (ξ, ζ).
        let rmax = self.support_radius();
        let n2 = 401;
        for i in 0..n2 {
            let xi = -c + 2.0 * c * i as f64 / (n2 - 1) as f64;
            for j in 0..n2 {
                let zeta = -rmax + 2.0 * rmax * j as f64 / (n2 - 1) as f64;
                let p = self.origin + self.tangent * xi + self.normal * zeta;
                let v = self.pointwise_c1(p);
                if v > best {
                    best = v;
                }
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(actual: f64, expected: f64, tol: f64, what: &str) {
        assert!(
            (actual - expected).abs() <= tol,
            "{what}: got {actual}, expected {expected} (tol {tol})"
        );
    }

    #[test]
    fn bump_profile_matches_closed_form() {
        // c² e^{-1} at the center
        assert_close(bump_profile(0.0, 0.1).unwrap(), 0.0036787944117144233, 1e-18, "rho(0)");
        // zero at the support boundary
        assert_eq!(bump_profile(0.1, 0.1).unwrap(), 0.0);
        assert_eq!(bump_profile(-0.1, 0.1).unwrap(), 0.0);
        // direct substitution at half radius: 0.01·e^{-4/3}
        assert_close(bump_profile(0.05, 0.1).unwrap(), 0.0026359713811572678, 1e-18, "rho(c/2)");
        assert!(bump_profile(0.0, 0.0).is_err());
        assert!(bump_profile(0.0, -1.0).is_err());
    }

    #[test]
    fn bump_profile_is_even_nonnegative_compact() {
        let c = 0.3;
        for k in 0..=200 {
            let s = -2.0 * c + 4.0 * c * k as f64 / 200.0;
            let v = bump_profile(s, c).unwrap();
            assert!(v >= 0.0);
            assert_close(v, bump_profile(-s, c).unwrap(), 1e-18, "evenness");
            if s.abs() >= c {
                assert_eq!(v, 0.0);
            }
        }
    }

    #[test]
    fn bump_profile_c1_matching_at_support_boundary() {
        // central differences across |s| = c shrink at least linearly in h
        let c = 0.2;
        let mut prev = f64::INFINITY;
        for k in 1..=4 {
            let h = 0.1f64 * 0.5f64.powi(k);
            let fd = (bump_profile(c + h, c).unwrap() - bump_profile(c - h, c).unwrap()) / (2.0 * h);
            assert!(fd.abs() <= c * h / 0.1, "fd {fd} too large at h {h}");
            assert!(fd.abs() <= prev + 1e-18);
            prev = fd.abs();
        }
    }

    #[test]
    fn bump_profile_c1_seminorm_bound() {
        // max(sup|ρ|, sup|ρ'|) ≤ c for c ≤ 1
        for &c in &[0.05, 0.1, 0.3, 0.7, 1.0] {
            let mut sup_v = 0.0f64;
            let mut sup_d = 0.0f64;
            for k in 0..=2000 {
                let s = -c + 2.0 * c * k as f64 / 2000.0;
                sup_v = sup_v.max(bump_profile(s, c).unwrap());
                sup_d = sup_d.max(bump_profile_deriv(s, c).unwrap().abs());
            }
            assert!(sup_v.max(sup_d) <= c + 1e-12, "C¹ bound violated for c = {c}");
        }
    }

    #[test]
    fn bump_profile_deriv_matches_finite_differences() {
        let c = 0.4;
        for k in 1..40 {
            let s = -c + 2.0 * c * k as f64 / 40.0;
            let h = 1e-6;
            let fd = (bump_profile(s + h, c).unwrap() - bump_profile(s - h, c).unwrap()) / (2.0 * h);
            assert_close(bump_profile_deriv(s, c).unwrap(), fd, 1e-6, "derivative");
        }
    }

    #[test]
    fn unit_square_properties() {
        let sq = PolygonalDomain::unit_square(BoundaryCondition::Dirichlet, 0.0);
        assert_close(sq.area(), 1.0, 1e-15, "area");
        assert_close(sq.perimeter(), 4.0, 1e-15, "perimeter");
        assert_eq!(sq.edges().len(), 4);
        // outward normals: every edge midpoint nudged along the normal leaves
        // the polygon
        for edge in sq.edges() {
            let mid = edge.point_at(edge.length / 2.0);
            assert!(!sq.contains(mid + edge.normal * 1e-6));
            assert!(sq.contains(mid - edge.normal * 1e-6));
            assert_close(edge.normal.norm(), 1.0, 1e-15, "unit normal");
        }
    }

    #[test]
    fn rejects_bad_polygons() {
        // clockwise
        let cw = PolygonalDomain::new(
            vec![Point2::new(0.0, 0.0), Point2::new(0.0, 1.0), Point2::new(1.0, 1.0), Point2::new(1.0, 0.0)],
            BoundaryCondition::Dirichlet,
            0.0,
        );
        assert!(matches!(cw, Err(Error::InvalidDomain(_))));
        // bowtie
        let bow = PolygonalDomain::new(
            vec![Point2::new(0.0, 0.0), Point2::new(1.0, 1.0), Point2::new(1.0, 0.0), Point2::new(0.0, 1.0)],
            BoundaryCondition::Dirichlet,
            0.0,
        );
        assert!(matches!(bow, Err(Error::InvalidDomain(_))));
        // Robin with sigma = 0
        let robin = PolygonalDomain::new(
            vec![Point2::new(0.0, 0.0), Point2::new(1.0, 0.0), Point2::new(0.0, 1.0)],
            BoundaryCondition::Robin,
            0.0,
        );
        assert!(matches!(robin, Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn apply_bump_zero_amplitude_is_identity_with_ledger() {
        let sq = PolygonalDomain::unit_square(BoundaryCondition::Dirichlet, 0.0);
        let bump = BumpSpec { edge: 0, s0: 0.5, c: 0.1, t: 0.0 };
        let out = sq.apply_bump(&bump, 64).unwrap();
        assert_eq!(out.vertices().len(), sq.vertices().len());
        for (a, b) in out.vertices().iter().zip(sq.vertices()) {
            assert_eq!(a, b);
        }
        assert_eq!(out.bump_ledger().len(), 1);
    }

    #[test]
    fn apply_bump_area_matches_profile_integral() {
        let sq = PolygonalDomain::unit_square(BoundaryCondition::Dirichlet, 0.0);
        let bump = BumpSpec { edge: 0, s0: 0.5, c: 0.1, t: 1.0 };
        let expected = bump_profile_integral(0.1).unwrap();
        // polyline quadrature error is O(resolution⁻²)
        let mut errs = Vec::new();
        for &res in &[32usize, 64, 128] {
            let out = sq.apply_bump(&bump, res).unwrap();
            let gain = out.area() - 1.0;
            let err = (gain - expected).abs();
            let budget = 0.05 * expected * (32.0 / res as f64).powi(2);
            assert!(err <= budget, "area error {err:.3e} exceeds {budget:.3e} at resolution {res}");
            errs.push(err);
        }
        assert!(errs[2] < errs[0], "quadrature error did not shrink under refinement");
    }

    #[test]
    fn apply_bump_area_scales_linearly_in_t() {
        let sq = PolygonalDomain::unit_square(BoundaryCondition::Dirichlet, 0.0);
        let expected = bump_profile_integral(0.1).unwrap();
        let b1 = BumpSpec { edge: 2, s0: 0.4, c: 0.1, t: 0.5 };
        let out = sq.apply_bump(&b1, 128).unwrap();
        assert_close(out.area() - 1.0, 0.5 * expected, 1e-6, "area gain at t = 0.5");
    }

    #[test]
    fn apply_bump_rejects_bad_placements() {
        let sq = PolygonalDomain::unit_square(BoundaryCondition::Dirichlet, 0.0);
        // centered at a corner
        let corner = BumpSpec { edge: 0, s0: 0.0, c: 0.1, t: 1.0 };
        assert!(matches!(sq.apply_bump(&corner, 64), Err(Error::Placement(_))));
        // support reaching past the corner
        let overhang = BumpSpec { edge: 0, s0: 0.95, c: 0.1, t: 1.0 };
        assert!(matches!(sq.apply_bump(&overhang, 64), Err(Error::Placement(_))));
        // overlapping support balls
        let first = BumpSpec { edge: 0, s0: 0.5, c: 0.1, t: 0.1 };
        let second = BumpSpec { edge: 0, s0: 0.65, c: 0.1, t: 0.1 };
        let once = sq.apply_bump(&first, 64).unwrap();
        assert!(matches!(once.apply_bump(&second, 64), Err(Error::Placement(_))));
        // inward
        let inward = BumpSpec { edge: 0, s0: 0.5, c: 0.1, t: -0.5 };
        assert!(matches!(sq.apply_bump(&inward, 64), Err(Error::InvalidParameter(_))));
        // unknown edge
        let off = BumpSpec { edge: 9, s0: 0.5, c: 0.1, t: 0.5 };
        assert!(matches!(sq.apply_bump(&off, 64), Err(Error::UnknownEdge(9))));
    }

    #[test]
    fn disjoint_bumps_on_same_edge_are_allowed() {
        let sq = PolygonalDomain::unit_square(BoundaryCondition::Dirichlet, 0.0);
        let first = BumpSpec { edge: 0, s0: 0.3, c: 0.08, t: 0.2 };
        let second = BumpSpec { edge: 0, s0: 0.7, c: 0.08, t: 0.2 };
        let out = sq.apply_bump(&first, 64).unwrap().apply_bump(&second, 64).unwrap();
        assert_eq!(out.bump_ledger().len(), 2);
        let expected = 2.0 * 0.2 * bump_profile_integral(0.08).unwrap();
        assert_close(out.area() - 1.0, expected, 1e-6, "two-bump area gain");
    }

    #[test]
    fn deformation_c1_norm_properties() {
        // a 4x4 box so that support radii up to c = 1 fit on one edge
        let big = PolygonalDomain::rectangle(4.0, 4.0, BoundaryCondition::Dirichlet, 0.0).unwrap();
        for &c in &[0.05, 0.1, 0.25, 0.5, 1.0] {
            let bump = BumpSpec { edge: 0, s0: 2.0, c, t: 1.0 };
            let field = DeformationField::new(&big, &bump).unwrap();
            assert_eq!(field.c1_norm(0.0).unwrap(), 0.0);
            for &t in &[0.1, 0.5, 1.0] {
                let norm = field.c1_norm(t).unwrap();
                assert!(norm <= t * c + 1e-12, "c1 norm {norm} exceeds t·c = {}", t * c);
                assert!(norm > 0.0);
                // exact linearity in t
                assert_close(field.c1_norm(2.0 * t).unwrap() / norm, 2.0, 1e-12, "linearity");
            }
        }
    }

    #[test]
    fn deformation_zero_outside_support_ball_and_exact_on_edge() {
        let sq = PolygonalDomain::unit_square(BoundaryCondition::Dirichlet, 0.0);
        let bump = BumpSpec { edge: 0, s0: 0.5, c: 0.1, t: 0.7 };
        let field = DeformationField::new(&sq, &bump).unwrap();
        let center = field.support_center();
        assert_close(center.x, 0.5, 1e-15, "center x");
        assert_close(center.y, 0.0, 1e-15, "center y");
        // outside the ball of radius c + cutoff_width
        for k in 0..32 {
            let ang = 2.0 * std::f64::consts::PI * k as f64 / 32.0;
            let p = center + Point2::new(ang.cos(), ang.sin()) * (field.support_radius() + 1e-9);
            assert_eq!(field.displacement(p, 0.7).norm(), 0.0);
        }
        // on the edge: exact graph motion and exact normal velocity
        for k in 0..=20 {
            let s = 0.4 + 0.2 * k as f64 / 20.0;
            let p = Point2::new(s, 0.0);
            let d = field.displacement(p, 0.7);
            let rho = bump_profile(s - 0.5, 0.1).unwrap();
            assert_close(d.y, -0.7 * rho, 1e-15, "edge displacement along outward normal");
            assert_close(d.x, 0.0, 1e-15, "no tangential motion");
            assert_close(field.normal_velocity(s), rho, 1e-18, "normal velocity");
        }
    }

    #[test]
    fn lipschitz_constant_square_and_hexagon() {
        // oracle: brute-force over graph directions, minimizing the max slope
        // of the two rays incident to each vertex
        fn oracle(domain: &PolygonalDomain) -> f64 {
            let vs = domain.vertices();
            let n = vs.len();
            let mut worst = 0.0f64;
            for i in 0..n {
                let v = vs[i];
                let d1 = (vs[(i + n - 1) % n] - v).normalize();
                let d2 = (vs[(i + 1) % n] - v).normalize();
                let mut best = f64::INFINITY;
                for k in 0..200_000 {
                    let a = std::f64::consts::PI * k as f64 / 200_000.0;
                    let e = Point2::new(a.cos(), a.sin());
                    let nrm = e.rot_cw();
                    let (p1, p2) = (d1.dot(e), d2.dot(e));
                    if p1 * p2 >= 0.0 {
                        continue; // rays must project to opposite sides
                    }
                    let s1 = (d1.dot(nrm) / p1).abs();
                    let s2 = (d2.dot(nrm) / p2).abs();
                    best = best.min(s1.max(s2));
                }
                worst = worst.max(best);
            }
            worst
        }

        let sq = PolygonalDomain::unit_square(BoundaryCondition::Dirichlet, 0.0);
        assert_close(sq.lipschitz_constant().unwrap(), 1.0, 1e-12, "square slope");
        assert_close(oracle(&sq), 1.0, 1e-4, "square slope oracle");

        let hex = PolygonalDomain::regular_polygon(6, 1.0, BoundaryCondition::Dirichlet, 0.0).unwrap();
        let expected = (30.0f64).to_radians().tan(); // 0.5773502691896258
        assert_close(hex.lipschitz_constant().unwrap(), expected, 1e-12, "hexagon slope");
        assert_close(oracle(&hex), expected, 1e-4, "hexagon slope oracle");
    }

    #[test]
    fn lipschitz_constant_is_rotation_invariant() {
        let vs = vec![
            Point2::new(0.0, 0.0),
            Point2::new(2.0, 0.0),
            Point2::new(2.5, 1.2),
            Point2::new(0.7, 1.8),
        ];
        let domain = PolygonalDomain::new(vs.clone(), BoundaryCondition::Neumann, 0.0).unwrap();
        let theta: f64 = 0.7431;
        let rotated: Vec<Point2> = vs
            .iter()
            .map(|p| {
                Point2::new(
                    p.x * theta.cos() - p.y * theta.sin(),
                    p.x * theta.sin() + p.y * theta.cos(),
                )
            })
            .collect();
        let rotated = PolygonalDomain::new(rotated, BoundaryCondition::Neumann, 0.0).unwrap();
        assert_close(
            domain.lipschitz_constant().unwrap(),
            rotated.lipschitz_constant().unwrap(),
            1e-12,
            "isometry invariance",
        );
    }

    #[test]
    fn flatten_patch_requires_r_smaller_than_big_r() {
        let sq = PolygonalDomain::unit_square(BoundaryCondition::Dirichlet, 0.0);
        let err = sq.flatten_patch(Point2::new(0.5, 0.0), 0.1, 0.1, 16);
        assert!(matches!(err, Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn flatten_patch_noop_on_flat_boundary() {
        let sq = PolygonalDomain::unit_square(BoundaryCondition::Dirichlet, 0.0);
        let out = sq.flatten_patch(Point2::new(0.5, 0.0), 0.05, 0.2, 16).unwrap();
        assert_eq!(out.vertices().len(), sq.vertices().len());
        for (a, b) in out.vertices().iter().zip(sq.vertices()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn flatten_patch_straightens_reentrant_corner() {
        let l = PolygonalDomain::l_shape(BoundaryCondition::Dirichlet, 0.0);
        let corner = Point2::new(1.0, 1.0);
        let before = l.lipschitz_constant().unwrap();
        let out = l.flatten_patch(corner, 0.05, 0.2, 24).unwrap();
        // the corner vertex is gone
        for v in out.vertices() {
            assert!(v.dist(corner) > 1e-9, "corner vertex survived flattening");
        }
        // flatness: the boundary inside radius r is one straight chord, i.e.
        // the two vertices at distance r from the corner are adjacent
        let close: Vec<usize> = (0..out.vertices().len())
            .filter(|&i| out.vertices()[i].dist(corner) <= 0.05 + 1e-9)
            .collect();
        assert_eq!(close.len(), 2, "expected exactly the two chord endpoints near the corner");
        assert_eq!(close[1], close[0] + 1, "chord endpoints must be adjacent vertices");
        let after = out.lipschitz_constant().unwrap();
        assert!(
            (after - before).abs() <= 0.1 * before,
            "Lipschitz constant moved from {before} to {after}"
        );
        // area shrinks (the reentrant corner is cut towards the interior ...
        // or grows for convex corners); either way the change is confined
        assert!((out.area() - l.area()).abs() < 0.05);
        // untouched far boundary
        for v in l.vertices() {
            if v.dist(corner) > 0.2 + 1e-9 {
                assert!(
                    out.vertices().iter().any(|w| w.dist(*v) <= 1e-12),
                    "far vertex {v:?} was modified"
                );
            }
        }
    }

    #[test]
    fn flatten_patch_is_idempotent() {
        let l = PolygonalDomain::l_shape(BoundaryCondition::Dirichlet, 0.0);
        let corner = Point2::new(1.0, 1.0);
        let once = l.flatten_patch(corner, 0.05, 0.2, 24).unwrap();
        let twice = once.flatten_patch(corner, 0.05, 0.2, 24).unwrap();
        assert_eq!(once.vertices().len(), twice.vertices().len());
        for (a, b) in once.vertices().iter().zip(twice.vertices()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn flatten_patch_center_must_be_on_boundary() {
        let sq = PolygonalDomain::unit_square(BoundaryCondition::Dirichlet, 0.0);
        let err = sq.flatten_patch(Point2::new(0.5, 0.5), 0.05, 0.2, 16);
        assert!(matches!(err, Err(Error::InvalidParameter(_))));
    }
}
