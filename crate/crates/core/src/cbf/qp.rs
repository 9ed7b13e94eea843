use crate::poly::{PolyDynamics, Polynomial};

use super::{CbfError, FilterResult, FilterStatus};

/// One-step linearized barrier filter.
///
/// Solves `min |u|^2` subject to
/// `h(s⁺(c)) + ∇h(s⁺(c)) G u >= (1 - eta) h(s)` and the action bounds, where
/// `s⁺(c)` is the model's next state under the unfiltered action `c`.
#[derive(Clone, Debug, PartialEq)]
pub struct QpConfig {
    pub eta: f64,
    pub action_bounds: Vec<(f64, f64)>,
}

impl Default for QpConfig {
    fn default() -> Self {
        Self { eta: 0.2, action_bounds: vec![(-15.0, 15.0)] }
    }
}

/// Gradients below this norm are treated as zero.
const GRAD_EPS: f64 = 1e-12;

pub fn qp_filter_action(
    h: &Polynomial,
    dynamics: &PolyDynamics,
    state: &[f64],
    offset: &[f64],
    cfg: &QpConfig,
) -> Result<FilterResult, CbfError> {
    if !(0.0..=1.0).contains(&cfg.eta) {
        return Err(CbfError::InvalidConfig("eta must lie in [0, 1]".into()));
    }
    let n = dynamics.state_dim();
    let m = dynamics.action_dim();
    if state.len() != n || offset.len() != m || cfg.action_bounds.len() != m || h.nvars() != n {
        return Err(CbfError::Dimension("state, action or barrier length".into()));
    }
    let next = dynamics.step(state, offset)?;
    let q = h.evaluate(&next)? - (1.0 - cfg.eta) * h.evaluate(state)?;
    let grad: Vec<f64> = (0..n).map(|i| h.partial_derivative(i).evaluate(&next)).collect::<Result<_, _>>()?;
    // g_k = ∇h · G[:, k]
    let mut g = vec![0.0; m];
    for (k, gk) in g.iter_mut().enumerate() {
        for i in 0..n {
            *gk += grad[i] * dynamics.input[i][k].evaluate(state)?;
        }
    }
    let gg: f64 = g.iter().map(|v| v * v).sum();
    let clamp =
        |u: &[f64]| -> Vec<f64> { u.iter().zip(&cfg.action_bounds).map(|(v, (lo, hi))| v.clamp(*lo, *hi)).collect() };

    let (total, status, reason) = if q >= 0.0 {
        (clamp(offset), FilterStatus::SosOk, None)
    } else if gg < GRAD_EPS {
        (clamp(offset), FilterStatus::FallbackSaturate, Some("barrier gradient vanishes along the input".to_string()))
    } else {
        // projection of 0 onto {u : q + g.u >= 0}
        let raw: Vec<f64> = offset.iter().zip(&g).map(|(c, gk)| c + gk * (-q) / gg).collect();
        let clamped = clamp(&raw);
        if clamped.iter().zip(&raw).all(|(a, b)| (a - b).abs() <= 1e-12) {
            (clamped, FilterStatus::SosOk, None)
        } else {
            // push every input as far as allowed in the direction that raises h
            let sat: Vec<f64> = g
                .iter()
                .zip(&cfg.action_bounds)
                .zip(offset)
                .map(|((gk, (lo, hi)), c)| {
                    if *gk > 0.0 {
                        *hi
                    } else if *gk < 0.0 {
                        *lo
                    } else {
                        c.clamp(*lo, *hi)
                    }
                })
                .collect();
            (sat, FilterStatus::FallbackSaturate, Some("linearized constraint exceeds action bounds".to_string()))
        }
    };
    Ok(FilterResult {
        a_cbf: total.iter().zip(offset).map(|(t, c)| t - c).collect(),
        total_action: total,
        status,
        reason,
        eps1: None,
        min_gram_eig: None,
        solve_time_s: 0.0,
        cached: false,
    })
}
