use specsplit::geometry::*;
use specsplit::mesh::*;
use specsplit::fem::*;
use specsplit::eigen::*;
use specsplit::splitter::*;
use std::time::Instant;

fn main() {
    let t0 = Instant::now();
    let sq = PolygonalDomain::unit_square(BoundaryCondition::Dirichlet, 0.0);
    let config = SplitConfig::default();
    let tau = calibrate_tau(config.h, config.tol).unwrap();
    println!("tau calibrated = {tau:.6e}  ({:.2?})", t0.elapsed());

    let mesh = triangulate(&sq, config.h).unwrap();
    let sys = assemble(&mesh, BoundaryCondition::Dirichlet, 0.0).unwrap();
    let spec = solve_lowest(&sys, 11, 1e-9).unwrap();
    println!("lambdas: {:?}", spec.lambdas().iter().map(|l| format!("{:.3}", l)).collect::<Vec<_>>());
    let clustered = detect_clusters(&spec, tau).unwrap();
    for c in &clustered.clusters { if c.len > 1 { println!("cluster start={} len={} width={:.4e}", c.start, c.len, c.width); } }
    let cluster = clustered.first_degenerate_cluster().unwrap();
    let budget = SplitBudget::new(0.4, &clustered, cluster).unwrap();
    println!("budget: r={} m={} d_r={:.4} cap={:.4}", budget.r, budget.m, budget.d_r, budget.shift_cap);

    let t1 = Instant::now();
    match split_once(&sq, &clustered, cluster, (Point2::new(0.5, 0.0), 0.15), &budget, &config) {
        Ok((_dom, rec)) => {
            println!("split ok in {:.2?}: s0={:.4} c={:.4} t={:.4e}", t1.elapsed(), rec.s0, rec.bump_radius, rec.amplitude);
            println!("  pre  {:?}", rec.pre_lambdas.iter().take(7).map(|l| format!("{:.3}", l)).collect::<Vec<_>>());
            println!("  post {:?}", rec.post_lambdas.iter().take(7).map(|l| format!("{:.3}", l)).collect::<Vec<_>>());
            println!("  shifts {:?}", rec.shifts.iter().map(|s| format!("{:.3e}", s)).collect::<Vec<_>>());
            println!("  pre_width_rel={:.3e} post_gap_rel={:.3e} contract={:?}", rec.pre_width_rel, rec.post_gap_rel, rec.contract);
            println!("  c1={:.3e} ratios max={:.3}", rec.c1_norm, rec.stability_ratios.iter().fold(0.0f64, |a, &b| a.max(b)));
        }
        Err(e) => println!("split FAILED: {e}"),
    }

    let t2 = Instant::now();
    match simplify_spectrum(&sq, 6, 0.3, Point2::new(0.5, 0.0), &config) {
        Ok((_dom, trace)) => {
            println!("simplify: success={} iters={} msg='{}' time={:.2?}", trace.success, trace.iterations.len(), trace.message, t2.elapsed());
            println!("  r_history = {:?}", trace.r_history);
            println!("  lipschitz {:.4} -> {:.4}", trace.lipschitz_before, trace.lipschitz_after);
        }
        Err(e) => println!("simplify FAILED: {e}"),
    }
    println!("total {:.2?}", t0.elapsed());
}
