//! Inverted pendulum with torque input and its polynomial model.
//!
//! `θ = 0` is upright. Gravity pushes the pole away from upright and the
//! torque has to hold it inside the safe range `|θ| ≤ 1`.

use rand::Rng;
use thiserror::Error;

use crate::cbf::{BarrierSpec, CbfError};
use crate::poly::{chebyshev_fit, ChebyshevFit, PolyDynamics, PolyError, Polynomial};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PendulumError {
    #[error("invalid pendulum parameters: {0}")]
    InvalidParams(String),
    #[error("non-finite state or action")]
    NonFinite,
    #[error("Chebyshev degree must be odd and at least 3, got {0}")]
    InvalidDegree(u32),
    #[error(transparent)]
    Poly(#[from] PolyError),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PendulumParams {
    pub mass: f64,
    pub gravity: f64,
    pub length: f64,
    /// Torque is clamped to `[-max_torque, max_torque]`.
    pub max_torque: f64,
    /// Angular velocity is clamped to `[-max_speed, max_speed]`.
    pub max_speed: f64,
    pub dt: f64,
}

impl Default for PendulumParams {
    fn default() -> Self {
        Self { mass: 1.0, gravity: 10.0, length: 1.0, max_torque: 15.0, max_speed: 60.0, dt: 0.05 }
    }
}

impl PendulumParams {
    pub fn with_mass_length(mass: f64, length: f64) -> Self {
        Self { mass, length, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), PendulumError> {
        let fields = [
            ("mass", self.mass),
            ("gravity", self.gravity),
            ("length", self.length),
            ("max_torque", self.max_torque),
            ("max_speed", self.max_speed),
            ("dt", self.dt),
        ];
        for (name, v) in fields {
            if !(v > 0.0 && v.is_finite()) {
                return Err(PendulumError::InvalidParams(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Angular acceleration per unit torque, `1 / (m l^2)`.
    pub fn torque_gain(&self) -> f64 {
        1.0 / (self.mass * self.length * self.length)
    }

    pub fn clamp_torque(&self, a: f64) -> f64 {
        a.clamp(-self.max_torque, self.max_torque)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PendulumState {
    pub theta: f64,
    pub theta_dot: f64,
}

impl PendulumState {
    pub fn new(theta: f64, theta_dot: f64) -> Self {
        Self { theta, theta_dot }
    }

    pub fn to_vec(self) -> Vec<f64> {
        vec![self.theta, self.theta_dot]
    }
}

/// One semi-implicit Euler step. Returns the next state and the reward
/// `-(θ'^2 + 0.1 θ̇'^2 + 0.001 a^2)` computed with the clamped torque.
pub fn step(state: PendulumState, action: f64, params: &PendulumParams) -> Result<(PendulumState, f64), PendulumError> {
    if !(state.theta.is_finite() && state.theta_dot.is_finite() && action.is_finite()) {
        return Err(PendulumError::NonFinite);
    }
    let a = params.clamp_torque(action);
    let acc = params.gravity / params.length * state.theta.sin() + a * params.torque_gain();
    let theta_dot = (state.theta_dot + params.dt * acc).clamp(-params.max_speed, params.max_speed);
    let theta = state.theta + params.dt * theta_dot;
    let reward = -(theta * theta + 0.1 * theta_dot * theta_dot + 0.001 * a * a);
    Ok((PendulumState { theta, theta_dot }, reward))
}

/// Box of initial states sampled uniformly by [`reset`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InitRange {
    pub theta: (f64, f64),
    pub theta_dot: (f64, f64),
}

impl Default for InitRange {
    fn default() -> Self {
        Self { theta: (-0.8, 0.8), theta_dot: (-1.0, 1.0) }
    }
}

pub fn reset<R: Rng + ?Sized>(rng: &mut R, range: &InitRange) -> PendulumState {
    let sample = |rng: &mut R, (lo, hi): (f64, f64)| if hi > lo { rng.random_range(lo..=hi) } else { lo };
    let theta = sample(rng, range.theta);
    let theta_dot = sample(rng, range.theta_dot);
    PendulumState { theta, theta_dot }
}

/// Domain of the sin surrogate.
pub const SIN_DOMAIN: (f64, f64) = (-3.0, 3.0);

/// Polynomial mirror of [`step`] with `sin` replaced by a Chebyshev
/// interpolant. Variables are `x0 = θ`, `x1 = θ̇`; the action enters through
/// both rows because of the semi-implicit update.
#[derive(Clone, Debug)]
pub struct NominalModel {
    pub params: PendulumParams,
    pub sin_fit: ChebyshevFit,
    pub dynamics: PolyDynamics,
}

pub fn nominal_polynomial_model(params: &PendulumParams, cheb_degree: u32) -> Result<NominalModel, PendulumError> {
    params.validate()?;
    if cheb_degree < 3 || cheb_degree % 2 == 0 {
        return Err(PendulumError::InvalidDegree(cheb_degree));
    }
    let sin_fit = chebyshev_fit(f64::sin, SIN_DOMAIN, cheb_degree)?;
    let dynamics = pendulum_dynamics(params, &sin_fit.poly)?;
    Ok(NominalModel { params: *params, sin_fit, dynamics })
}

impl NominalModel {
    /// The same model with the sin surrogate truncated to `degree`, as used
    /// inside the filter's SOS programs.
    pub fn truncated(&self, degree: u32) -> Result<PolyDynamics, PendulumError> {
        pendulum_dynamics(&self.params, &self.sin_fit.poly.truncate(degree))
    }

    /// As [`NominalModel::truncated`] with the torque gain `1 / (m l^2)`
    /// replaced by `gain`.
    pub fn truncated_with_gain(&self, degree: u32, gain: f64) -> Result<PolyDynamics, PendulumError> {
        pendulum_dynamics_with_gain(&self.params, &self.sin_fit.poly.truncate(degree), gain)
    }
}

/// Builds the discrete map for a given univariate sin surrogate `s(θ)`:
///
/// ```text
/// θ̇' = θ̇ + dt (g/l) s(θ) + dt a / (m l^2)
/// θ'  = θ + dt θ̇'
/// ```
pub fn pendulum_dynamics(params: &PendulumParams, sin_poly: &Polynomial) -> Result<PolyDynamics, PendulumError> {
    pendulum_dynamics_with_gain(params, sin_poly, params.torque_gain())
}

pub fn pendulum_dynamics_with_gain(
    params: &PendulumParams,
    sin_poly: &Polynomial,
    gain: f64,
) -> Result<PolyDynamics, PendulumError> {
    if !(gain > 0.0 && gain.is_finite()) {
        return Err(PendulumError::InvalidParams(format!("torque gain must be positive, got {gain}")));
    }
    let dt = params.dt;
    let s = sin_poly.embed(2, &[0]);
    let theta = Polynomial::var(2, 0);
    let theta_dot = Polynomial::var(2, 1);
    let vel = theta_dot.add(&s.scale(dt * params.gravity / params.length))?;
    let pos = theta.add(&vel.scale(dt))?;
    let input = vec![vec![Polynomial::constant(2, dt * dt * gain)], vec![Polynomial::constant(2, dt * gain)]];
    Ok(PolyDynamics::new(vec![pos, vel], input)?)
}

/// Default box the filter certificates range over.
pub const BARRIER_DOMAIN: [(f64, f64); 2] = [(-1.2, 1.2), (-8.0, 8.0)];

/// `h = 1 - θ^2` with unsafe regions `θ - 1 >= 0` and `-θ - 1 >= 0`.
pub fn pendulum_barrier(domain: &[(f64, f64)]) -> Result<BarrierSpec, CbfError> {
    let h = Polynomial::from_exps(2, &[(&[0, 0], 1.0), (&[2, 0], -1.0)]);
    let mu1 = Polynomial::from_exps(2, &[(&[1, 0], 1.0), (&[0, 0], -1.0)]);
    let mu2 = Polynomial::from_exps(2, &[(&[1, 0], -1.0), (&[0, 0], -1.0)]);
    BarrierSpec::new(h, vec![mu1, mu2], domain.to_vec())
}
