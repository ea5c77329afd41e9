//! A 2D numerical laboratory for splitting Laplacian spectra into simple
//! eigenvalues by small, localized boundary bumps.
//!
//! The pipeline: describe a polygonal drum ([`geometry`]), triangulate it
//! ([`mesh`]), assemble the P1 stiffness/mass/boundary forms for Dirichlet,
//! Neumann or Robin conditions ([`fem`]), solve the generalized eigenproblem
//! with shift-invert Lanczos and detect degenerate clusters ([`eigen`]),
//! evaluate boundary discriminants and first-order eigenvalue rates under
//! boundary deformation ([`shape`]), and finally run the iterative
//! bump-placement loop that splits every degenerate cluster while respecting
//! quantitative shift budgets ([`splitter`]).
//!
//! Each major capability has a runnable example under `examples/`; the thin
//! `specsplit` binary exposes the same pipeline as subcommands
//! (`solve | hadamard | split | simplify | report`).

pub mod cli;
pub mod eigen;
pub mod error;
pub mod fem;
pub mod geometry;
pub mod io;
pub mod mesh;
pub mod shape;
pub mod splitter;

pub use error::{Error, Result};
pub use geometry::{
    bump_profile, bump_profile_integral, BoundaryCondition, BumpSpec, DeformationField,
    PolygonalDomain, Point2,
};
