//! Relative-velocity lattice Boltzmann schemes with one conservation law.
//!
//! The crate covers four layers:
//!
//! * [`lattice`]: velocity sets, moment polynomials and the shifted moment
//!   matrix `M(ũ)` with entries `P_k(v_j − ũ)`.
//! * [`scheme`]: the collide/stream time step on a periodic grid.
//! * [`equivalent`]: the third-order equivalent equation on the density,
//!   built from conservation defaults and Hénon parameters.
//! * [`dispersion`]: an independent Fourier (von Neumann) check of every
//!   coefficient of the equivalent equation.
//!
//! [`experiments`] wires these together behind the `rvlbm` command line tool.

pub mod config;
pub mod dispersion;
pub mod equivalent;
pub mod error;
pub mod experiments;
pub mod json;
pub mod lattice;
pub mod multi_index;
pub mod operator;
pub mod scheme;
pub mod spectral;

pub use error::{Error, Result};
