//! Superiorized feasibility-seeking projection methods.
//!
//! A feasibility-seeking operator (sequential projections onto convex sets)
//! is interlaced with small target-reducing perturbations whose step sizes
//! form a summable sequence `c * alpha^l`. Two extensions are provided:
//! restarting the step-size sequence after windows of outer iterations, and
//! superiorizing independent subvectors of the image space of a split
//! feasibility problem.
//!
//! * [`convex_sets`]: sets and exact projections, including the graph of a
//!   linear map.
//! * [`schedules`]: step sizes with and without restarts.
//! * [`targets`]: target functions and nonascending directions (TV included).
//! * [`engines`]: the basic and superiorized iterations and their traces.
//! * [`split_problems`]: product-space operators for split problems.
//! * [`experiments`]: seeded reproductions of the numerical studies.

pub mod convex_sets;
pub mod engines;
pub mod error;
pub mod experiments;
pub mod par;
pub mod schedules;
pub mod split_problems;
pub mod targets;

pub use error::{Error, Result};
