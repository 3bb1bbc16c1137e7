//! Numerical laboratory for least-energy solutions of the Navier-boundary system
//! `-Delta u = v^{2/(N-2)}`, `-Delta v = u^p` on convex domains and for their
//! concentration as `p` grows.
//!
//! All numerical code is generic over the scalar type ([`Real`], implemented
//! for `f32` and `f64`); the `*64` aliases below fix the common double
//! precision choice.

pub mod analysis;
pub mod error;
pub mod geometry;
pub mod green;
pub mod leastenergy;
pub mod logpow;
mod ode;
pub mod operators;
pub mod radial;
pub mod real;

pub use error::{Error, Result};
pub use geometry::{boundary_facets, build_grid, integrate, BoundaryFacet, DomainKind, DomainSpec, Grid};
pub use operators::{
    apply_laplacian, normal_derivative, solve_dirichlet, solve_poisson, Field, LinearSolveOptions,
    Preconditioner,
};
pub use real::Real;

pub type DomainSpec64 = DomainSpec<f64>;
pub type Grid64 = Grid<f64>;
pub type Field64 = Field<f64>;
pub type BoundaryFacet64 = BoundaryFacet<f64>;
pub type EnergyReport64 = leastenergy::EnergyReport<f64>;
pub type RadialSolution64 = radial::RadialSolution<f64>;
pub type GreenBundle64 = green::GreenBundle<f64>;
pub type Constants64 = green::Constants<f64>;
pub type SolutionPair64 = leastenergy::SolutionPair<f64>;
pub type ConcentrationReport64 = analysis::ConcentrationReport<f64>;
pub type PohozaevReport64 = analysis::PohozaevReport<f64>;
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
