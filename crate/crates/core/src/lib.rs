//! Simulation kernels for the Burgers equation with random kick forcing.
//!
//! The model: at every integer time the velocity potential receives an
//! impulsive shot-noise kick and then transports freely for one unit of time.
//! Everything here is built around the discrete variational principle for
//! that system:
//!
//! - [`environment`] generates the marked-Poisson kick potential lazily and
//!   deterministically over unbounded space-time, with exact shear/shift
//!   relabelings.
//! - [`action`] evaluates kinetic and forcing actions of discrete paths and
//!   their Euler-Lagrange residuals.
//! - [`hopf_lax`] evolves potentials on grids by the kicked min-plus
//!   transform (linear-time lower envelope of parabolas) with backpointers.
//! - [`minimizers`] traces and refines action minimizers and approximates
//!   backward one-sided minimizers of prescribed slope.
//! - [`shape`] estimates the growth rate of optimal actions and checks its
//!   quadratic law, shear identities, and concentration tails.
//! - [`busemann`] estimates Busemann increments along pairing times,
//!   assembles the global solution, and tracks shocks.
//! - [`attraction`] classifies initial data by basin conditions and runs
//!   pullback-attraction experiments in the monotone-map metric.

pub mod action;
pub mod attraction;
pub mod bump;
pub mod busemann;
pub mod environment;
pub mod grid;
pub mod hopf_lax;
pub mod minimizers;
pub mod rng;
pub mod shape;
pub mod stats;

pub use action::{ActionParams, Path};
pub use bump::Bump;
pub use environment::{Environment, EnvironmentConfig, KappaDist, KickPoint, XiDist};
pub use grid::{GridPolicy, GridProfile, GridSpec};
pub use hopf_lax::{BackpointerStack, EvolveFlags, EvolveRun};
pub use minimizers::{MinimizerTrace, OneSidedField, OneSidedParams, RefineParams};
