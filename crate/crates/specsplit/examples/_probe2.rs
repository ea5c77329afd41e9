use specsplit::geometry::*;
use specsplit::mesh::*;
use specsplit::fem::*;
use specsplit::eigen::*;
fn main() {
    let domain = PolygonalDomain::unit_square(BoundaryCondition::Dirichlet, 0.0);
    let mesh = triangulate(&domain, 0.05).unwrap();
    let sys = assemble(&mesh, BoundaryCondition::Dirichlet, 0.0).unwrap();
    println!("dim = {}", sys.dim());
    match solve_lowest(&sys, 4, 1e-9) {
        Ok(s) => println!("ok lambdas {:?}", s.lambdas()),
        Err(e) => println!("ERR {e}"),
    }
}
