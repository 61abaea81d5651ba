//! Simulation and numerical analysis of the generalized N-urn Ehrenfest
//! model: balls perform independent rate-λ(x,y) walks between n boxes laid
//! out on (0, 1].
//!
//! The crate provides
//! - exact continuous-time simulation of the particle system with Poisson
//!   initial data ([`sim`]),
//! - solvers for the macroscopic density equation and the test-function
//!   semigroup, each certifying the other ([`hydro`]),
//! - the limiting Gaussian variance θ²(t, H) of the fluctuation field and
//!   its Monte Carlo validation ([`fluct`]),
//! - large-deviation rate functionals, the optimal control field of the
//!   tilted dynamics, and the exponential martingale Λ ([`ldp`]).
//!
//! All integrals use one quadrature convention (right-endpoint nodes j/m,
//! weight 1/m — see [`grid`]), matching the discrete sums of the particle
//! system so grid and particle quantities are directly comparable.

// `!(x > 0)` in domain checks also rejects NaN; the stencil loops index
// several arrays at matched positions.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod expm;
pub mod fluct;
pub mod grid;
pub mod hydro;
pub mod kernel;
pub mod ldp;
pub mod seed;
pub mod sim;
pub mod stats;

pub use error::{Error, Result};
pub use grid::{GridSpec, TestFunction};
pub use kernel::{DiscreteKernel, MarginalFn, RateKernel};
pub use sim::{BoxCounts, SimConfig, Simulator, Trajectory};
