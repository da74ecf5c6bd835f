//! Strong approximation of scalar SDEs whose drift may jump at finitely
//! many points while both coefficients grow superlinearly.
//!
//! The pieces:
//!
//! - [`sde_model`]: problem definitions with explicit breakpoint metadata
//!   and a sampled checker for the standing coercivity / piecewise
//!   monotonicity / polynomial-Lipschitz assumptions;
//! - [`transform`]: the increasing bijection that absorbs each drift jump
//!   into a quadratic kink, its derivatives, its numeric inverse, and the
//!   resulting continuous-coefficient equation;
//! - [`brownian`]: seeded Brownian increments on a dyadic reference grid,
//!   coarsenable so that every discretization level is driven by the same
//!   path;
//! - [`schemes`]: tamed Euler schemes (direct and transformed), piecewise
//!   linear interpolation, and the sign-change occupation statistic;
//! - [`analysis`]: Monte Carlo error moments against fine-grid, exact, or
//!   transformed references, with log-log rate fits;
//! - [`cli`]: the experiment runner behind the `tamedsde` binary.
//!
//! The time horizon is fixed to `[0, 1]` throughout.

pub mod analysis;
pub mod brownian;
pub mod cli;
pub mod error;
pub mod presets;
pub mod schemes;
pub mod sde_model;
pub mod transform;

pub use error::{Error, Result};
