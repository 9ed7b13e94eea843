use nalgebra::{DMatrix, SymmetricEigen};

use crate::poly::{PolyDynamics, Polynomial};
use crate::sos::{DecisionId, Expr};

use super::CbfError;

/// Affine change of variables `s = center + half ∘ ξ` mapping `[-1, 1]^n`
/// onto a box.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalFrame {
    pub center: Vec<f64>,
    pub half: Vec<f64>,
}

impl LocalFrame {
    pub fn from_box(domain: &[(f64, f64)]) -> Self {
        Self {
            center: domain.iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect(),
            half: domain.iter().map(|(lo, hi)| 0.5 * (hi - lo)).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn to_local(&self, s: &[f64]) -> Vec<f64> {
        s.iter().zip(&self.center).zip(&self.half).map(|((v, c), w)| (v - c) / w).collect()
    }

    pub fn contains(&self, s: &[f64]) -> bool {
        self.to_local(s).iter().all(|v| v.abs() <= 1.0 + 1e-12)
    }

    /// Rewrites a polynomial over `s` as a polynomial over `ξ`.
    pub fn pull_back(&self, p: &Polynomial) -> Result<Polynomial, CbfError> {
        let n = self.dim();
        let images: Vec<Polynomial> =
            (0..n).map(|i| Polynomial::var(n, i).scale(self.half[i]).add_constant(self.center[i])).collect();
        Ok(p.compose(&images)?)
    }

    /// The dynamics with every polynomial pulled back to `ξ`. The outputs
    /// stay in original coordinates.
    pub fn pull_back_dynamics(&self, d: &PolyDynamics) -> Result<PolyDynamics, CbfError> {
        let drift = d.drift.iter().map(|p| self.pull_back(p)).collect::<Result<Vec<_>, _>>()?;
        let input = d
            .input
            .iter()
            .map(|row| row.iter().map(|p| self.pull_back(p)).collect::<Result<Vec<_>, _>>())
            .collect::<Result<Vec<_>, _>>()?;
        let residual = d.residual.iter().map(|p| self.pull_back(p)).collect::<Result<Vec<_>, _>>()?;
        Ok(PolyDynamics::new(drift, input)?.with_residual(residual)?)
    }

    /// `1 - ξ_i^2 >= 0` for every axis.
    pub fn box_constraints(&self) -> Vec<Polynomial> {
        let n = self.dim();
        (0..n).map(|i| Polynomial::var(n, i).pow(2).scale(-1.0).add_constant(1.0)).collect()
    }
}

/// `h(s⁺) - h(s)` for a fixed action, with `s⁺ = P(s) + G(s) a + m(s)`.
pub fn delta_h_constant(h: &Polynomial, dynamics: &PolyDynamics, action: &[f64]) -> Result<Polynomial, CbfError> {
    check_dims(h, dynamics, action.len())?;
    let next = next_state_polys(dynamics, action)?;
    Ok(h.compose(&next)?.sub(h)?)
}

fn next_state_polys(dynamics: &PolyDynamics, action: &[f64]) -> Result<Vec<Polynomial>, CbfError> {
    dynamics
        .drift
        .iter()
        .zip(&dynamics.input)
        .zip(&dynamics.residual)
        .map(|((p, row), r)| {
            let mut out = p.add(r)?;
            for (g, a) in row.iter().zip(action) {
                out = out.add(&g.scale(*a))?;
            }
            Ok(out)
        })
        .collect()
}

fn check_dims(h: &Polynomial, dynamics: &PolyDynamics, action_dim: usize) -> Result<(), CbfError> {
    if h.nvars() != dynamics.state_dim() {
        return Err(CbfError::Dimension(format!(
            "barrier has {} variables, dynamics {} states",
            h.nvars(),
            dynamics.state_dim()
        )));
    }
    if action_dim != dynamics.action_dim() {
        return Err(CbfError::Dimension(format!("expected {} actions, got {action_dim}", dynamics.action_dim())));
    }
    Ok(())
}

/// `Δh` with a symbolic action `u(ξ) = a(ξ) + c`, written as
///
/// ```text
/// Δh = affine + sum_e weight_e * w_e^2
/// ```
///
/// where `affine` and every `w_e` are affine in the coefficients of `a`.
/// Exact for barriers of degree at most two.
#[derive(Clone, Debug)]
pub struct SymbolicDeltaH {
    pub affine: Expr,
    pub squares: Vec<(f64, Expr)>,
}

impl SymbolicDeltaH {
    /// Evaluates `Δh` at `ξ` given values for the decision polynomials.
    pub fn evaluate(&self, xi: &[f64], decision: impl Fn(DecisionId) -> Polynomial) -> Result<f64, CbfError> {
        let eval = |e: &Expr| -> Result<f64, CbfError> {
            let p = e.evaluate(&decision, |_| 0.0)?;
            Ok(p.evaluate(xi)?)
        };
        let mut v = eval(&self.affine)?;
        for (wgt, w) in &self.squares {
            v += wgt * eval(w)?.powi(2);
        }
        Ok(v)
    }
}

/// Builds [`SymbolicDeltaH`] in local coordinates.
///
/// `h` is over original coordinates; `h_local` is its pull-back and
/// `dynamics` must already be pulled back. `decisions[k]` is the action
/// correction for input `k` and `offset[k]` the constant part of that input.
pub fn delta_h_symbolic(
    h: &Polynomial,
    h_local: &Polynomial,
    dynamics: &PolyDynamics,
    decisions: &[DecisionId],
    offset: &[f64],
) -> Result<SymbolicDeltaH, CbfError> {
    let n = dynamics.state_dim();
    check_dims(h, dynamics, decisions.len())?;
    if offset.len() != decisions.len() {
        return Err(CbfError::Dimension("offset length differs from action dimension".into()));
    }
    if h.degree() > 2 {
        return Err(CbfError::BarrierDegree(h.degree()));
    }
    // drift plus residual, in local coordinates
    let f = next_state_polys(dynamics, &vec![0.0; decisions.len()])?;

    let mut affine = Expr::fixed(h.compose(&f)?.sub(h_local)?);
    // first-order term  grad h(F) . G u
    for (k, (&d, &c)) in decisions.iter().zip(offset).enumerate() {
        let mut coef = Polynomial::zero(n);
        for i in 0..n {
            let dh = h.partial_derivative(i).compose(&f)?;
            coef = coef.add(&dh.mul(&dynamics.input[i][k])?)?;
        }
        let u = Expr::decision(n, d).add(&Expr::constant(n, c))?;
        affine = affine.add(&u.mul_poly(&coef)?)?;
    }

    // second-order term  1/2 (G u)' H (G u)  split along eigenvectors of H
    let hess = DMatrix::from_fn(n, n, |i, j| h.partial_derivative(i).partial_derivative(j).constant_term());
    let eig = SymmetricEigen::new(hess);
    let mut squares = Vec::new();
    for (e, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda.abs() < 1e-12 {
            continue;
        }
        let v = eig.eigenvectors.column(e);
        let mut w = Expr::zero(n);
        for (k, (&d, &c)) in decisions.iter().zip(offset).enumerate() {
            let mut vg = Polynomial::zero(n);
            for i in 0..n {
                vg = vg.add(&dynamics.input[i][k].scale(v[i]))?;
            }
            if vg.is_zero() {
                continue;
            }
            let u = Expr::decision(n, d).add(&Expr::constant(n, c))?;
            w = w.add(&u.mul_poly(&vg)?)?;
        }
        if w.is_fixed() && w.fixed_part().is_zero() {
            continue;
        }
        squares.push((0.5 * lambda, w));
    }
    Ok(SymbolicDeltaH { affine, squares })
}
