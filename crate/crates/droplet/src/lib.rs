//! Grid-based simulator and verification harness for rate-independent
//! droplet evolution with contact-line pinning.
//!
//! A droplet is a nonnegative height profile over a domain outside a
//! compact obstacle, driven by a Dirichlet forcing F(t) on the obstacle
//! boundary. The state minimizes the energy J = ∫|∇u|² + |{u > 0}| locally
//! against a frictional dissipation distance μ₊|grown| + μ₋|shed|, which
//! pins the contact line whenever the squared boundary slope stays inside
//! [1−μ₋, 1+μ₊] and produces hysteresis loops under cyclic forcing.
//!
//! The crate provides:
//!
//! - [`geometry`]: grids, wet-region masks, exact set algebra, the
//!   dissipation distance and its sharp triangle identity;
//! - [`field`]: masked harmonic solves, Dirichlet energy, pressure, and
//!   boundary slope estimation;
//! - [`minmove`]: the minimizing-movements stepper with local search,
//!   bracketing sweeps, and an exhaustive oracle;
//! - [`radial`]: closed-form radial ground truth (ζ function, branch
//!   evolution, the admissible region);
//! - [`verify`]: certificates that a run behaves like an energy solution;
//! - [`scenario`]: JSON scenario configs, run orchestration, artifacts.

pub mod error;
pub mod field;
pub mod geometry;
pub mod minmove;
pub mod radial;
pub mod scenario;
pub mod verify;

pub use error::{Error, Result};
