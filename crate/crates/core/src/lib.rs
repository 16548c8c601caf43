//! Reconstruction of a one-dimensional wavefunction ψ(x,t) from its density
//! history |ψ|² and the potential V(x,t), via the Bohmian continuity and
//! Hamilton-Jacobi equations.
//!
//! - [`grid`]: uniform spacetime grids, fields, stencils, quadrature
//! - [`oracles`]: closed-form free-particle, coherent-state and breathing
//!   Gaussian solutions
//! - [`retrieval`]: the phase-retrieval pipeline and its diagnostics
//! - [`schrodinger`]: split-step propagator and Schrödinger residual
//! - [`calibration`]: fitting density-family parameters to a potential
//! - [`io`] and [`cli`]: field files, reports and the command line

pub mod calibration;
pub mod cli;
pub mod error;
pub mod grid;
pub mod io;
pub mod oracles;
pub mod potential;
pub mod retrieval;
pub mod schrodinger;

pub use error::{Error, Result};
pub use grid::{ComplexField, PhysicalConstants, ScalarField, SpacetimeGrid};
pub use retrieval::{retrieve, Retrieval, RetrievalOptions, RetrievalReport, Verdict};
