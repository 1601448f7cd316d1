//! Essentially free Fuchsian groups with parabolic elements: boundary
//! coding, Patterson measure approximation, and extreme value statistics
//! of maximal cuspidal windings.
//!
//! The layers, bottom to top:
//!
//! - [`hyperbolic`]: Mobius transformations on the upper half-plane.
//! - [`group`]: group construction and the Markov interval structure.
//! - [`boundary`]: the coding map, block process and induced dynamics.
//! - [`patterson`]: orbit sums, the exponent of convergence, atomic
//!   approximation of the Patterson measure and the constant kappa by two
//!   independent routes.
//! - [`evt`]: Monte Carlo simulation of running maxima, Frechet fitting,
//!   dependence diagnostics, liminf and Khintchine trackers.
//! - [`gauss`]: the continued-fraction oracle where the limit laws have
//!   closed-form constants.
//! - [`cache`], [`table`]: file formats shared with the command line tool.

pub mod boundary;
pub mod cache;
pub mod evt;
pub mod gauss;
pub mod group;
pub mod hyperbolic;
pub mod patterson;
pub mod rng;
pub mod table;
