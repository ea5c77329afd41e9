//! File formats: domain spec JSON, CSV exports, SVG rendering, atomic writes.
//!
//! The domain spec stores the base polygon, the boundary condition, sigma and
//! the bump ledger; parsing replays the ledger at the default resolution, so
//! parse → serialize round-trips are lossless (serde_json prints shortest
//! round-trip doubles, well within 17 significant digits).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::eigen::Spectrum;
use crate::error::{Error, Result};
use crate::geometry::{BoundaryCondition, BumpSpec, Point2, PolygonalDomain};
use crate::mesh::TriMesh;
use crate::shape::{BoundaryTrace, HadamardReport};
use crate::splitter::SplitTrace;

/// Samples per bump polyline used when replaying domain files.
pub const BUMP_RESOLUTION_DEFAULT: usize = 64;

#[derive(Debug, Serialize, Deserialize)]
struct DomainFile {
    vertices: Vec<[f64; 2]>,
    bc: String,
    sigma: f64,
    bumps: Vec<BumpFile>,
}

#[derive(Debug, Serialize, Deserialize)]
struct BumpFile {
    edge: usize,
    s0: f64,
    c: f64,
    t: f64,
}

/// Serializes base polygon, boundary condition and bump ledger.
pub fn domain_to_json(domain: &PolygonalDomain) -> Result<String> {
    let file = DomainFile {
        vertices: domain.base_vertices().iter().map(|p| [p.x, p.y]).collect(),
        bc: domain.bc().as_str().to_string(),
        sigma: domain.sigma(),
        bumps: domain
            .bump_ledger()
            .iter()
            .map(|b| BumpFile { edge: b.edge, s0: b.s0, c: b.c, t: b.t })
            .collect(),
    };
    Ok(serde_json::to_string_pretty(&file)?)
}

/// Parses a domain spec and replays its bump ledger.
pub fn domain_from_json(text: &str) -> Result<PolygonalDomain> {
    let file: DomainFile = serde_json::from_str(text)?;
    let vertices = file.vertices.iter().map(|[x, y]| Point2::new(*x, *y)).collect();
    let bc = BoundaryCondition::parse(&file.bc)?;
    let mut domain = PolygonalDomain::new(vertices, bc, file.sigma)?;
    for bump in &file.bumps {
        let spec = BumpSpec { edge: bump.edge, s0: bump.s0, c: bump.c, t: bump.t };
        domain = domain.apply_bump(&spec, BUMP_RESOLUTION_DEFAULT)?;
    }
    Ok(domain)
}

pub fn read_domain(path: &Path) -> Result<PolygonalDomain> {
    domain_from_json(&std::fs::read_to_string(path)?)
}

pub fn write_domain(path: &Path, domain: &PolygonalDomain) -> Result<()> {
    write_atomic(path, &domain_to_json(domain)?)
}

/// Writes through a temporary file in the same directory, then renames.
pub fn write_atomic(path: &Path, content: &str) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(
        ".{}.tmp-{}",
        path.file_name().and_then(|n| n.to_str()).unwrap_or("out"),
        std::process::id()
    ));
    std::fs::write(&tmp, content)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Spectrum CSV: index (1-based), lambda, residual, cluster id.
pub fn spectrum_to_csv(spectrum: &Spectrum) -> String {
    let mut out = String::from("index,lambda,residual,cluster_id\n");
    let cluster_of = |i: usize| -> usize {
        spectrum
            .clusters
            .iter()
            .position(|c| i >= c.start && i < c.start + c.len)
            .unwrap_or(0)
    };
    for (i, pair) in spectrum.pairs.iter().enumerate() {
        out.push_str(&format!(
            "{},{:.16e},{:.3e},{}\n",
            i + 1,
            pair.lambda,
            pair.residual,
            cluster_of(i)
        ));
    }
    out
}

/// Cluster report, one line per cluster.
pub fn cluster_report(spectrum: &Spectrum) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "clusters (tau = {})\n",
        spectrum.tau_cluster.map(|t| format!("{t:.3e}")).unwrap_or_else(|| "none".into())
    ));
    for (id, c) in spectrum.clusters.iter().enumerate() {
        out.push_str(&format!(
            "cluster {id}: indices {}..{} (m = {}), width {:.3e}, rel gaps below/above {:.3e}/{:.3e}\n",
            c.start + 1,
            c.start + c.len,
            c.len,
            c.width,
            c.rel_gap_below,
            c.rel_gap_above
        ));
    }
    out
}

/// Plot-ready discriminant CSV: s, then one g column per trace.
pub fn discriminant_csv(traces: &[BoundaryTrace], c: f64) -> String {
    let mut out = String::from("s");
    for i in 0..traces.len() {
        out.push_str(&format!(",g{}", i + 1));
    }
    out.push('\n');
    if traces.is_empty() {
        return out;
    }
    for (k, sample) in traces[0].samples.iter().enumerate() {
        out.push_str(&format!("{:.10e}", sample.s));
        for trace in traces {
            let smp = &trace.samples[k];
            out.push_str(&format!(",{:.10e}", smp.grad_sq - c * smp.u * smp.u));
        }
        out.push('\n');
    }
    out
}

#[derive(Serialize)]
struct HadamardFile<'a> {
    cluster_indices: &'a [usize],
    derivative_matrix: Vec<Vec<f64>>,
    predicted_rates: &'a [f64],
    fd_rates: &'a [f64],
    c_used: f64,
    curvature_term_included: bool,
}

/// Structured-text (JSON) export of a Hadamard report.
pub fn hadamard_report_json(report: &HadamardReport) -> Result<String> {
    let m = report.derivative_matrix.nrows();
    let matrix: Vec<Vec<f64>> = (0..m)
        .map(|i| (0..m).map(|j| report.derivative_matrix[(i, j)]).collect())
        .collect();
    Ok(serde_json::to_string_pretty(&HadamardFile {
        cluster_indices: &report.cluster_indices,
        derivative_matrix: matrix,
        predicted_rates: &report.predicted_rates,
        fd_rates: &report.fd_rates,
        c_used: report.c_used,
        curvature_term_included: report.curvature_term_included,
    })?)
}

/// Split trace CSV: one line per iteration.
pub fn split_trace_csv(trace: &SplitTrace) -> String {
    let mut out = String::from("iteration,r,m,t,s0,shift_max,ratio_max\n");
    for rec in &trace.iterations {
        let shift_max = rec.shifts.iter().copied().fold(0.0f64, f64::max);
        let ratio_max = rec.stability_ratios.iter().copied().fold(0.0f64, f64::max);
        out.push_str(&format!(
            "{},{},{},{:.10e},{:.10e},{:.6e},{:.6e}\n",
            rec.n, rec.r, rec.multiplicity, rec.amplitude, rec.s0, shift_max, ratio_max
        ));
    }
    out
}

/// Human-readable simplification report.
pub fn split_trace_report(trace: &SplitTrace) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "simplification {} after {} iterations ({:.1} s): {}\n",
        if trace.success { "succeeded" } else { "stopped" },
        trace.iterations.len(),
        trace.elapsed_seconds,
        trace.message
    ));
    out.push_str(&format!(
        "Lipschitz constant {:.6} -> {:.6} (flattened: {})\n",
        trace.lipschitz_before, trace.lipschitz_after, trace.flattened
    ));
    out.push_str(&format!("first non-simple index per iteration: {:?}\n", trace.r_history));
    for rec in &trace.iterations {
        out.push_str(&format!(
            "n={} ball=({:.4},{:.4}) R={:.4} M={:.3} | cluster r={} m={} d_r={:.4} cap={:.4}\n",
            rec.n,
            rec.ball_center.x,
            rec.ball_center.y,
            rec.ball_radius,
            rec.m_factor,
            rec.r,
            rec.multiplicity,
            rec.d_r,
            rec.shift_cap
        ));
        out.push_str(&format!(
            "    bump edge={} s0={:.5} c={:.5} t={:.5e} |phi-id|_C1={:.4e} slope bound={:.4e}\n",
            rec.edge, rec.s0, rec.bump_radius, rec.amplitude, rec.c1_norm, rec.slope_bound
        ));
        out.push_str(&format!(
            "    pre width (rel) {:.3e} -> post gap (rel) {:.3e}; contract points {:?}\n",
            rec.pre_width_rel, rec.post_gap_rel, rec.contract
        ));
    }
    out
}

// ---------------------------------------------------------------------------
// SVG rendering

fn viridis(t: f64) -> (u8, u8, u8) {
    // five-stop approximation of the viridis colormap
    const STOPS: [(f64, [f64; 3]); 5] = [
        (0.0, [68.0, 1.0, 84.0]),
        (0.25, [59.0, 82.0, 139.0]),
        (0.5, [33.0, 145.0, 140.0]),
        (0.75, [94.0, 201.0, 98.0]),
        (1.0, [253.0, 231.0, 37.0]),
    ];
    let t = t.clamp(0.0, 1.0);
    for w in STOPS.windows(2) {
        let (t0, c0) = w[0];
        let (t1, c1) = w[1];
        if t <= t1 {
            let f = if t1 > t0 { (t - t0) / (t1 - t0) } else { 0.0 };
            return (
                (c0[0] + (c1[0] - c0[0]) * f) as u8,
                (c0[1] + (c1[1] - c0[1]) * f) as u8,
                (c0[2] + (c1[2] - c0[2]) * f) as u8,
            );
        }
    }
    (253, 231, 37)
}

struct SvgFrame {
    min: Point2,
    scale: f64,
    width: f64,
    height: f64,
    pad: f64,
}

impl SvgFrame {
    fn fit(points: impl Iterator<Item = Point2>, target: f64) -> SvgFrame {
        let mut min = Point2::new(f64::INFINITY, f64::INFINITY);
        let mut max = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in points {
            min.x = min.x.min(p.x);
            min.y = min.y.min(p.y);
            max.x = max.x.max(p.x);
            max.y = max.y.max(p.y);
        }
        let span = (max.x - min.x).max(max.y - min.y).max(1e-12);
        let scale = target / span;
        SvgFrame {
            min,
            scale,
            width: (max.x - min.x) * scale,
            height: (max.y - min.y) * scale,
            pad: target * 0.04,
        }
    }

    fn map(&self, p: Point2) -> (f64, f64) {
        // y flips: SVG grows downward
        (
            self.pad + (p.x - self.min.x) * self.scale,
            self.pad + self.height - (p.y - self.min.y) * self.scale,
        )
    }

    fn header(&self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {:.1} {:.1}\">\n",
            self.width + 2.0 * self.pad,
            self.height + 2.0 * self.pad
        )
    }
}

fn polygon_path(frame: &SvgFrame, vertices: &[Point2]) -> String {
    let mut d = String::new();
    for (i, v) in vertices.iter().enumerate() {
        let (x, y) = frame.map(*v);
        d.push_str(&format!("{}{:.2},{:.2} ", if i == 0 { "M" } else { "L" }, x, y));
    }
    d.push('Z');
    d
}

/// Wireframe rendering of a triangulation.
pub fn mesh_svg(mesh: &TriMesh) -> String {
    let frame = SvgFrame::fit(mesh.nodes.iter().copied(), 800.0);
    let mut out = frame.header();
    out.push_str("<g stroke=\"#555\" stroke-width=\"0.6\" fill=\"none\">\n");
    for t in &mesh.triangles {
        out.push_str(&format!(
            "<path d=\"{}\"/>\n",
            polygon_path(&frame, &[mesh.nodes[t[0]], mesh.nodes[t[1]], mesh.nodes[t[2]]])
        ));
    }
    out.push_str("</g>\n");
    out.push_str("<g stroke=\"#c22\" stroke-width=\"1.4\" fill=\"none\">\n");
    for be in &mesh.boundary_edges {
        let (x0, y0) = frame.map(mesh.nodes[be.nodes[0]]);
        let (x1, y1) = frame.map(mesh.nodes[be.nodes[1]]);
        out.push_str(&format!("<path d=\"M{x0:.2},{y0:.2} L{x1:.2},{y1:.2}\"/>\n"));
    }
    out.push_str("</g>\n</svg>\n");
    out
}

/// Heatmap of a nodal field (one value per mesh node), triangles filled with
/// the mean of their vertex values.
pub fn eigenfunction_svg(mesh: &TriMesh, full_values: &[f64]) -> String {
    let frame = SvgFrame::fit(mesh.nodes.iter().copied(), 800.0);
    let lo = full_values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = full_values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = (hi - lo).max(1e-300);
    let mut out = frame.header();
    out.push_str("<g stroke=\"none\">\n");
    for t in &mesh.triangles {
        let mean = (full_values[t[0]] + full_values[t[1]] + full_values[t[2]]) / 3.0;
        let (r, g, b) = viridis((mean - lo) / span);
        out.push_str(&format!(
            "<path d=\"{}\" fill=\"rgb({r},{g},{b})\"/>\n",
            polygon_path(&frame, &[mesh.nodes[t[0]], mesh.nodes[t[1]], mesh.nodes[t[2]]])
        ));
    }
    out.push_str("</g>\n</svg>\n");
    out
}

/// Before/after boundary overlay, optionally with the perturbation ball.
pub fn domain_overlay_svg(
    before: &PolygonalDomain,
    after: &PolygonalDomain,
    ball: Option<(Point2, f64)>,
) -> String {
    let frame = SvgFrame::fit(
        before.vertices().iter().chain(after.vertices()).copied(),
        800.0,
    );
    let mut out = frame.header();
    if let Some((center, radius)) = ball {
        let (cx, cy) = frame.map(center);
        out.push_str(&format!(
            "<circle cx=\"{cx:.2}\" cy=\"{cy:.2}\" r=\"{:.2}\" fill=\"#eef\" stroke=\"#99c\" stroke-dasharray=\"6,4\"/>\n",
            radius * frame.scale
        ));
    }
    out.push_str(&format!(
        "<path d=\"{}\" fill=\"none\" stroke=\"#888\" stroke-width=\"1.2\"/>\n",
        polygon_path(&frame, before.vertices())
    ));
    out.push_str(&format!(
        "<path d=\"{}\" fill=\"none\" stroke=\"#c22\" stroke-width=\"1.6\"/>\n",
        polygon_path(&frame, after.vertices())
    ));
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BoundaryCondition;
    use proptest::prelude::*;

    #[test]
    fn domain_json_round_trip_is_lossless() {
        let sq = PolygonalDomain::unit_square(BoundaryCondition::Robin, -1.5)
            .apply_bump(&BumpSpec { edge: 0, s0: 0.312486517, c: 0.0712345678912345, t: 0.25 }, 64)
            .unwrap();
        let json = domain_to_json(&sq).unwrap();
        let parsed = domain_from_json(&json).unwrap();
        let json2 = domain_to_json(&parsed).unwrap();
        assert_eq!(json, json2, "parse -> serialize must be lossless");
        // replay reproduces the polygon bitwise
        assert_eq!(parsed.vertices().len(), sq.vertices().len());
        for (a, b) in parsed.vertices().iter().zip(sq.vertices()) {
            assert_eq!(a, b);
        }
        assert_eq!(parsed.bc(), BoundaryCondition::Robin);
        assert_eq!(parsed.sigma(), -1.5);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn json_round_trip_arbitrary_quads(
            w in 0.5f64..4.0,
            h in 0.5f64..4.0,
            skew in -0.4f64..0.4,
            sigma in -3.0f64..3.0,
        ) {
            let vertices = vec![
                Point2::new(0.0, 0.0),
                Point2::new(w, 0.0),
                Point2::new(w + skew, h),
                Point2::new(skew * 0.5, h),
            ];
            let bc = if sigma == 0.0 { BoundaryCondition::Neumann } else { BoundaryCondition::Robin };
            let domain = PolygonalDomain::new(vertices, bc, sigma).unwrap();
            let json = domain_to_json(&domain).unwrap();
            let parsed = domain_from_json(&json).unwrap();
            prop_assert_eq!(domain_to_json(&parsed).unwrap(), json);
            for (a, b) in parsed.vertices().iter().zip(domain.vertices()) {
                prop_assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn spectrum_csv_has_one_row_per_pair() {
        use crate::eigen::{detect_clusters, EigenPair, Spectrum};
        let pairs = vec![
            EigenPair { lambda: 1.0, vector: vec![1.0], residual: 1e-12 },
            EigenPair { lambda: 2.0, vector: vec![1.0], residual: 1e-12 },
        ];
        let spectrum = Spectrum { pairs, clusters: Vec::new(), tau_cluster: None };
        let clustered = detect_clusters(&spectrum, 0.01).unwrap();
        let csv = spectrum_to_csv(&clustered);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], "index,lambda,residual,cluster_id");
        assert!(lines[1].starts_with("1,"));
    }

    #[test]
    fn atomic_write_creates_parent_dirs() {
        let dir = std::env::temp_dir().join(format!("specsplit-io-test-{}", std::process::id()));
        let path = dir.join("nested/out.txt");
        write_atomic(&path, "payload").unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "payload");
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn svg_outputs_are_well_formed() {
        let sq = PolygonalDomain::unit_square(BoundaryCondition::Dirichlet, 0.0);
        let mesh = crate::mesh::triangulate(&sq, 0.3).unwrap();
        let svg = mesh_svg(&mesh);
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        let values = vec![0.5; mesh.num_nodes()];
        let heat = eigenfunction_svg(&mesh, &values);
        assert!(heat.contains("fill=\"rgb("));
        let overlay = domain_overlay_svg(&sq, &sq, Some((Point2::new(0.5, 0.0), 0.3)));
        assert!(overlay.contains("circle"));
    }
}
