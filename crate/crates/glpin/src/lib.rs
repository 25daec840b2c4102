//! Numerical lab for the lower critical field of pinned three-dimensional
//! Ginzburg-Landau superconductors.
//!
//! The crate is organised bottom-up:
//!
//! - [`grid`]: staggered lattices, fields, discrete operators, domains and quadrature
//! - [`geometry`]: polygonal curves, parallel-transport frames, tubular coordinates
//! - [`pinning`]: the pinning modulus `rho` solving the Neumann Euler-Lagrange problem
//! - [`profile`]: the radial degree-one vortex profile and its core constant
//! - [`biotsavart`]: curve fields, exact phases and the corrected vorticity potentials
//! - [`meissner`]: the constrained Meissner state and its field `B0`
//! - [`construction`]: vortex test configurations
//! - [`energy`]: free energies, vorticity, splitting identity and scaling laws
//! - [`isoflux`]: the weighted isoflux ratio maximisation and `Hc1`
//! - [`pipeline`]: run configuration, sweeps, reports and the artifact manifest
//! - [`io`]: binary and text field formats
//!
//! Runnable walkthroughs live in `examples/`; the `glpin` binary wraps the pipeline.

pub mod ampere;
pub mod biotsavart;
pub mod construction;
pub mod energy;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod io;
pub mod isoflux;
pub mod linalg;
pub mod meissner;
pub mod pinning;
pub mod pipeline;
pub mod profile;

pub use error::{GlError, Result};
pub use grid::Vec3;
