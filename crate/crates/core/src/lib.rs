//! Safe reinforcement learning with sum-of-squares control barrier filters.
//!
//! The crate is organised bottom-up:
//!
//! - [`poly`]: sparse multivariate polynomials and Chebyshev interpolation.
//! - [`gp`]: Gaussian-process regression of residual dynamics with a
//!   polynomial surrogate of the posterior mean.
//! - [`sdp`]: a dense primal-dual interior-point solver for block-diagonal
//!   semidefinite programs, with an independent KKT checker.
//! - [`sos`]: compilation of sum-of-squares programs into SDPs.
//! - [`cbf`]: the two-step SOS barrier controller synthesis and a QP baseline.
//! - [`ddpg`]: actor-critic agent, replay buffer and prior-controller network.
//! - [`pendulum`]: the swing-up pendulum and its polynomial model.
//! - [`harness`]: experiment configuration, runner and CSV reports.

pub mod cbf;
pub mod ddpg;
pub mod gp;
pub mod harness;
pub mod pendulum;
pub mod poly;
pub mod sdp;
pub mod sos;
