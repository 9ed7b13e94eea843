use super::{PolyError, Polynomial};

/// Discrete-time control-affine polynomial model
///
/// ```text
/// s⁺ = P(s) + G(s) a + m(s)
/// ```
///
/// with drift `P`, input matrix `G` (rows are state dimensions, columns are
/// action dimensions) and learned residual mean `m`.
#[derive(Clone, Debug, PartialEq)]
pub struct PolyDynamics {
    pub drift: Vec<Polynomial>,
    pub input: Vec<Vec<Polynomial>>,
    pub residual: Vec<Polynomial>,
}

impl PolyDynamics {
    pub fn new(drift: Vec<Polynomial>, input: Vec<Vec<Polynomial>>) -> Result<Self, PolyError> {
        let n = drift.len();
        let residual = vec![Polynomial::zero(n); n];
        let dynamics = Self { drift, input, residual };
        dynamics.check()?;
        Ok(dynamics)
    }

    pub fn with_residual(mut self, residual: Vec<Polynomial>) -> Result<Self, PolyError> {
        self.residual = residual;
        self.check()?;
        Ok(self)
    }

    fn check(&self) -> Result<(), PolyError> {
        let n = self.drift.len();
        let m = self.action_dim();
        if self.input.len() != n {
            return Err(PolyError::DimensionMismatch { expected: n, got: self.input.len() });
        }
        if self.residual.len() != n {
            return Err(PolyError::DimensionMismatch { expected: n, got: self.residual.len() });
        }
        for row in &self.input {
            if row.len() != m {
                return Err(PolyError::DimensionMismatch { expected: m, got: row.len() });
            }
        }
        let all = self.drift.iter().chain(self.input.iter().flatten()).chain(&self.residual);
        for p in all {
            if p.nvars() != n {
                return Err(PolyError::VarCountMismatch { left: n, right: p.nvars() });
            }
        }
        Ok(())
    }

    pub fn state_dim(&self) -> usize {
        self.drift.len()
    }

    pub fn action_dim(&self) -> usize {
        self.input.first().map_or(0, Vec::len)
    }

    /// `P(s) + G(s) a`, without the residual.
    pub fn nominal_step(&self, s: &[f64], a: &[f64]) -> Result<Vec<f64>, PolyError> {
        if a.len() != self.action_dim() {
            return Err(PolyError::DimensionMismatch { expected: self.action_dim(), got: a.len() });
        }
        self.drift
            .iter()
            .zip(&self.input)
            .map(|(p, row)| {
                let mut v = p.evaluate(s)?;
                for (g, ak) in row.iter().zip(a) {
                    v += g.evaluate(s)? * ak;
                }
                Ok(v)
            })
            .collect()
    }

    /// `P(s) + G(s) a + m(s)`.
    pub fn step(&self, s: &[f64], a: &[f64]) -> Result<Vec<f64>, PolyError> {
        let mut next = self.nominal_step(s, a)?;
        for (v, r) in next.iter_mut().zip(&self.residual) {
            *v += r.evaluate(s)?;
        }
        Ok(next)
    }

    /// Largest total degree over drift, input and residual.
    pub fn degree(&self) -> u32 {
        self.drift
            .iter()
            .chain(self.input.iter().flatten())
            .chain(&self.residual)
            .map(Polynomial::degree)
            .max()
            .unwrap_or(0)
    }
}
