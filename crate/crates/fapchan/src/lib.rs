//! First-arrival-position (FAP) densities for drift-diffusion channels with a
//! planar absorbing receiver, in two and three dimensions.
//!
//! A particle is released at height `distance` above the receiver plane and
//! undergoes Brownian motion with constant drift and diffusion scale
//! `sigma2`. The crate computes the closed-form density of the position at
//! which the particle first touches the plane, together with three
//! independent routes used to validate it:
//!
//! * a factorized time-marginal quadrature (first-passage time density times
//!   the tangential Gaussian marginal, integrated over time),
//! * a Monte Carlo particle simulation with Brownian-bridge absorption,
//! * a finite-difference solve of the stationary boundary value problem that
//!   the density represents.
//!
//! Modules: [`model`] holds channel parameters, [`specfun`] the modified
//! Bessel functions the 2D kernel needs, [`analytic`] the closed forms and
//! quadrature oracles, [`simulate`] the particle simulation, [`pde`] the
//! elliptic solver, [`stats`] quadrature and goodness-of-fit machinery, and
//! [`suites`] the validation suites wired into the CLI.

pub mod analytic;
pub mod error;
pub mod model;
pub mod pde;
pub mod simulate;
pub mod specfun;
pub mod stats;
pub mod suites;

pub use error::{Error, Result};
pub use model::ChannelParams;
