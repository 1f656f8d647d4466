//! Numerical laboratory for bubble towers of the k-corotational wave maps
//! equation
//!
//! ```text
//!     u_tt = u_rr + u_r / r - k^2 sin(2u) / (2 r^2)
//! ```
//!
//! The crate is organised bottom-up:
//!
//! * [`profiles`]: harmonic map `Q`, multi-bubbles, interaction terms,
//!   orthogonality profiles.
//! * [`grid`] and [`ops`]: radial grids with `r dr` quadrature, discrete
//!   derivatives, the linearized operators and the norms built from them.
//! * [`functionals`]: energy, second-order energy, Morawetz functionals,
//!   nonlinear term, sampling probes.
//! * [`tower`]: constants of the construction, the formal modulation ODE,
//!   its linearization and the shooting driver.
//! * [`pde`]: method-of-lines solver for the radial equation.
//! * [`modulation`]: Newton-based modulation decomposition and tracking.
//! * [`io`]: WMS1 snapshots and CSV series.

pub mod error;
pub mod functionals;
pub mod grid;
pub mod io;
pub mod modulation;
pub mod ops;
pub mod pde;
pub mod profiles;
pub mod quad;
pub mod sampling;
pub mod tower;

pub use error::{LabError, Result};
pub use grid::{FieldPair, GridKind, RadialGrid, ScalarField};
pub use profiles::TowerConfig;
