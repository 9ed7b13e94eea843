use std::collections::BTreeMap;

use crate::poly::Polynomial;

use super::SosError;

/// Handle to a decision polynomial registered in a [`super::SosProgram`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DecisionId(pub(crate) usize);

/// Handle to a scalar decision variable registered in a [`super::SosProgram`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ScalarId(pub(crate) usize);

/// Polynomial expression affine in the decision variables:
///
/// ```text
/// fixed + sum_k d_k * g_k + sum_l s_l * h_l
/// ```
///
/// where `d_k` are decision polynomials, `s_l` scalar variables and `g_k`,
/// `h_l` fixed polynomials.
#[derive(Clone, Debug, PartialEq)]
pub struct Expr {
    nvars: usize,
    fixed: Polynomial,
    decisions: BTreeMap<DecisionId, Polynomial>,
    scalars: BTreeMap<ScalarId, Polynomial>,
}

impl Expr {
    pub fn zero(nvars: usize) -> Self {
        Self { nvars, fixed: Polynomial::zero(nvars), decisions: BTreeMap::new(), scalars: BTreeMap::new() }
    }

    pub fn fixed(p: Polynomial) -> Self {
        let mut e = Self::zero(p.nvars());
        e.fixed = p;
        e
    }

    pub fn constant(nvars: usize, c: f64) -> Self {
        Self::fixed(Polynomial::constant(nvars, c))
    }

    pub fn decision(nvars: usize, id: DecisionId) -> Self {
        let mut e = Self::zero(nvars);
        e.decisions.insert(id, Polynomial::constant(nvars, 1.0));
        e
    }

    pub fn scalar(nvars: usize, id: ScalarId) -> Self {
        let mut e = Self::zero(nvars);
        e.scalars.insert(id, Polynomial::constant(nvars, 1.0));
        e
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn fixed_part(&self) -> &Polynomial {
        &self.fixed
    }

    pub fn decision_terms(&self) -> impl Iterator<Item = (DecisionId, &Polynomial)> {
        self.decisions.iter().map(|(k, v)| (*k, v))
    }

    pub fn scalar_terms(&self) -> impl Iterator<Item = (ScalarId, &Polynomial)> {
        self.scalars.iter().map(|(k, v)| (*k, v))
    }

    /// True when no decision variable appears.
    pub fn is_fixed(&self) -> bool {
        self.decisions.is_empty() && self.scalars.is_empty()
    }

    fn check(&self, other: &Expr) -> Result<(), SosError> {
        if self.nvars != other.nvars {
            return Err(SosError::VarCountMismatch(self.nvars, other.nvars));
        }
        Ok(())
    }

    pub fn add(&self, other: &Expr) -> Result<Expr, SosError> {
        self.check(other)?;
        let mut out = self.clone();
        out.fixed = out.fixed.add(&other.fixed)?;
        for (k, v) in &other.decisions {
            merge(&mut out.decisions, *k, v)?;
        }
        for (k, v) in &other.scalars {
            merge(&mut out.scalars, *k, v)?;
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Expr) -> Result<Expr, SosError> {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, s: f64) -> Expr {
        Expr {
            nvars: self.nvars,
            fixed: self.fixed.scale(s),
            decisions: self.decisions.iter().map(|(k, v)| (*k, v.scale(s))).collect(),
            scalars: self.scalars.iter().map(|(k, v)| (*k, v.scale(s))).collect(),
        }
    }

    /// Multiplies every part by a fixed polynomial.
    pub fn mul_poly(&self, p: &Polynomial) -> Result<Expr, SosError> {
        if p.nvars() != self.nvars {
            return Err(SosError::VarCountMismatch(self.nvars, p.nvars()));
        }
        let mut out = Expr::zero(self.nvars);
        out.fixed = self.fixed.mul(p)?;
        for (k, v) in &self.decisions {
            out.decisions.insert(*k, v.mul(p)?);
        }
        for (k, v) in &self.scalars {
            out.scalars.insert(*k, v.mul(p)?);
        }
        out.prune();
        Ok(out)
    }

    /// Product of two expressions; fails unless one side is fixed, which
    /// keeps every program affine in its decision variables.
    pub fn mul(&self, other: &Expr) -> Result<Expr, SosError> {
        self.check(other)?;
        if other.is_fixed() {
            self.mul_poly(&other.fixed)
        } else if self.is_fixed() {
            other.mul_poly(&self.fixed)
        } else {
            Err(SosError::NotAffine)
        }
    }

    /// Upper bound on the total degree given the declared decision degrees.
    pub(crate) fn degree_bound(&self, decision_degree: impl Fn(DecisionId) -> u32) -> u32 {
        let mut d = self.fixed.degree();
        for (k, v) in &self.decisions {
            d = d.max(decision_degree(*k) + v.degree());
        }
        for v in self.scalars.values() {
            d = d.max(v.degree());
        }
        d
    }

    /// Substitutes values for every decision variable.
    pub fn evaluate(
        &self,
        decision: impl Fn(DecisionId) -> Polynomial,
        scalar: impl Fn(ScalarId) -> f64,
    ) -> Result<Polynomial, SosError> {
        let mut out = self.fixed.clone();
        for (k, v) in &self.decisions {
            out = out.add(&decision(*k).mul(v)?)?;
        }
        for (k, v) in &self.scalars {
            out = out.add(&v.scale(scalar(*k)))?;
        }
        Ok(out)
    }

    fn prune(&mut self) {
        self.decisions.retain(|_, v| !v.is_zero());
        self.scalars.retain(|_, v| !v.is_zero());
    }
}

fn merge<K: Ord + Copy>(map: &mut BTreeMap<K, Polynomial>, k: K, v: &Polynomial) -> Result<(), SosError> {
    let sum = match map.get(&k) {
        Some(cur) => cur.add(v)?,
        None => v.clone(),
    };
    if sum.is_zero() {
        map.remove(&k);
    } else {
        map.insert(k, sum);
    }
    Ok(())
}
