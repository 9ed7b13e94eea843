use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use super::{Monomial, PolyError};

/// Coefficients with magnitude at or below this are dropped on normalization.
pub const ZERO_TOL: f64 = 1e-12;

/// Sparse multivariate polynomial with real coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct Polynomial {
    nvars: usize,
    terms: BTreeMap<Monomial, f64>,
}

/// Ring operation selector for [`Polynomial::arith`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
}

impl Polynomial {
    pub fn zero(nvars: usize) -> Self {
        Self { nvars, terms: BTreeMap::new() }
    }

    pub fn constant(nvars: usize, c: f64) -> Self {
        Self::from_terms(nvars, [(Monomial::one(nvars), c)])
    }

    /// The coordinate polynomial `x_var`.
    pub fn var(nvars: usize, var: usize) -> Self {
        Self::from_terms(nvars, [(Monomial::var(nvars, var), 1.0)])
    }

    pub fn monomial(m: Monomial, c: f64) -> Self {
        let nvars = m.nvars();
        Self::from_terms(nvars, [(m, c)])
    }

    /// Builds a polynomial from (monomial, coefficient) pairs, summing repeats.
    ///
    /// Panics if a monomial's variable count differs from `nvars`.
    pub fn from_terms<I>(nvars: usize, terms: I) -> Self
    where
        I: IntoIterator<Item = (Monomial, f64)>,
    {
        let mut map = BTreeMap::new();
        for (m, c) in terms {
            assert_eq!(m.nvars(), nvars, "monomial variable count mismatch");
            *map.entry(m).or_insert(0.0) += c;
        }
        let mut p = Self { nvars, terms: map };
        p.normalize();
        p
    }

    /// Convenience constructor from exponent vectors.
    pub fn from_exps(nvars: usize, terms: &[(&[u32], f64)]) -> Self {
        Self::from_terms(nvars, terms.iter().map(|(e, c)| (Monomial::new(e.to_vec()), *c)))
    }

    fn normalize(&mut self) {
        self.terms.retain(|_, c| c.abs() > ZERO_TOL);
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Total degree; the zero polynomial reports 0.
    pub fn degree(&self) -> u32 {
        self.terms.keys().map(Monomial::degree).max().unwrap_or(0)
    }

    /// Highest exponent of `var` appearing in any term.
    pub fn degree_in(&self, var: usize) -> u32 {
        self.terms.keys().map(|m| m.exponents()[var]).max().unwrap_or(0)
    }

    pub fn coeff(&self, m: &Monomial) -> f64 {
        self.terms.get(m).copied().unwrap_or(0.0)
    }

    pub fn constant_term(&self) -> f64 {
        self.coeff(&Monomial::one(self.nvars))
    }

    /// Terms in graded-lex order.
    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, f64)> {
        self.terms.iter().map(|(m, &c)| (m, c))
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.terms.values().fold(0.0, |a, c| a.max(c.abs()))
    }

    fn check_same(&self, other: &Polynomial) -> Result<(), PolyError> {
        if self.nvars != other.nvars {
            return Err(PolyError::VarCountMismatch { left: self.nvars, right: other.nvars });
        }
        Ok(())
    }

    pub fn arith(&self, other: &Polynomial, op: ArithOp) -> Result<Polynomial, PolyError> {
        self.check_same(other)?;
        Ok(match op {
            ArithOp::Add => self.add_unchecked(other, 1.0),
            ArithOp::Sub => self.add_unchecked(other, -1.0),
            ArithOp::Mul => self.mul_unchecked(other),
        })
    }

    pub fn add(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        self.arith(other, ArithOp::Add)
    }

    pub fn sub(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        self.arith(other, ArithOp::Sub)
    }

    pub fn mul(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        self.arith(other, ArithOp::Mul)
    }

    pub fn scale(&self, s: f64) -> Polynomial {
        let mut p =
            Polynomial { nvars: self.nvars, terms: self.terms.iter().map(|(m, c)| (m.clone(), c * s)).collect() };
        p.normalize();
        p
    }

    pub fn add_constant(&self, c: f64) -> Polynomial {
        self.add_unchecked(&Polynomial::constant(self.nvars, c), 1.0)
    }

    fn add_unchecked(&self, other: &Polynomial, sign: f64) -> Polynomial {
        let mut terms = self.terms.clone();
        for (m, c) in &other.terms {
            *terms.entry(m.clone()).or_insert(0.0) += sign * c;
        }
        let mut p = Polynomial { nvars: self.nvars, terms };
        p.normalize();
        p
    }

    fn mul_unchecked(&self, other: &Polynomial) -> Polynomial {
        let mut terms: BTreeMap<Monomial, f64> = BTreeMap::new();
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                *terms.entry(ma.mul(mb)).or_insert(0.0) += ca * cb;
            }
        }
        let mut p = Polynomial { nvars: self.nvars, terms };
        p.normalize();
        p
    }

    pub fn pow(&self, e: u32) -> Polynomial {
        let mut out = Polynomial::constant(self.nvars, 1.0);
        for _ in 0..e {
            out = out.mul_unchecked(self);
        }
        out
    }

    pub fn evaluate(&self, point: &[f64]) -> Result<f64, PolyError> {
        if point.len() != self.nvars {
            return Err(PolyError::DimensionMismatch { expected: self.nvars, got: point.len() });
        }
        Ok(self.eval_unchecked(point))
    }

    /// Evaluation without the dimension check; `point` must have `nvars` entries.
    pub fn eval_unchecked(&self, point: &[f64]) -> f64 {
        self.terms.iter().map(|(m, c)| c * m.eval(point)).sum()
    }

    /// Replaces variables by polynomials over a common ambient variable set.
    ///
    /// Unbound variables `x_i` map to the ambient `x_i`, so they must satisfy
    /// `i < ambient nvars`. With no bindings the polynomial is returned as is.
    pub fn substitute(&self, bindings: &BTreeMap<usize, Polynomial>) -> Result<Polynomial, PolyError> {
        let Some(first) = bindings.values().next() else {
            return Ok(self.clone());
        };
        let ambient = first.nvars;
        for (&var, b) in bindings {
            if var >= self.nvars {
                return Err(PolyError::VariableOutOfRange { var, nvars: self.nvars });
            }
            if b.nvars != ambient {
                return Err(PolyError::VarCountMismatch { left: ambient, right: b.nvars });
            }
        }
        let images: Vec<Polynomial> = (0..self.nvars)
            .map(|i| match bindings.get(&i) {
                Some(b) => Ok(b.clone()),
                None if i < ambient => Ok(Polynomial::var(ambient, i)),
                None => Err(PolyError::VariableOutOfRange { var: i, nvars: ambient }),
            })
            .collect::<Result<_, _>>()?;
        self.compose(&images)
    }

    /// Full composition `p(images[0], images[1], ...)`.
    pub fn compose(&self, images: &[Polynomial]) -> Result<Polynomial, PolyError> {
        if images.len() != self.nvars {
            return Err(PolyError::DimensionMismatch { expected: self.nvars, got: images.len() });
        }
        let ambient = images.first().map(|p| p.nvars).unwrap_or(0);
        if let Some(bad) = images.iter().find(|p| p.nvars != ambient) {
            return Err(PolyError::VarCountMismatch { left: ambient, right: bad.nvars });
        }
        // cache powers per variable
        let mut powers: Vec<Vec<Polynomial>> =
            images.iter().map(|p| vec![Polynomial::constant(ambient, 1.0), p.clone()]).collect();
        for v in 0..self.nvars {
            let need = self.degree_in(v) as usize;
            while powers[v].len() <= need {
                let next = powers[v].last().unwrap().mul_unchecked(&images[v]);
                powers[v].push(next);
            }
        }
        let mut acc: BTreeMap<Monomial, f64> = BTreeMap::new();
        for (m, c) in &self.terms {
            let mut term = Polynomial::constant(ambient, *c);
            for (v, &e) in m.exponents().iter().enumerate() {
                if e > 0 {
                    term = term.mul_unchecked(&powers[v][e as usize]);
                }
            }
            for (tm, tc) in term.terms {
                *acc.entry(tm).or_insert(0.0) += tc;
            }
        }
        let mut p = Polynomial { nvars: ambient, terms: acc };
        p.normalize();
        Ok(p)
    }

    pub fn partial_derivative(&self, var: usize) -> Polynomial {
        let terms = self.terms.iter().filter_map(|(m, c)| {
            let e = m.exponents()[var];
            (e > 0).then(|| {
                let mut exps = m.exponents().to_vec();
                exps[var] -= 1;
                (Monomial::new(exps), c * e as f64)
            })
        });
        Polynomial::from_terms(self.nvars, terms)
    }

    /// Drops every term of total degree above `max_degree`.
    pub fn truncate(&self, max_degree: u32) -> Polynomial {
        Polynomial {
            nvars: self.nvars,
            terms: self.terms.iter().filter(|(m, _)| m.degree() <= max_degree).map(|(m, c)| (m.clone(), *c)).collect(),
        }
    }

    /// Re-embeds a polynomial into a larger variable set; variable `i` maps to `map[i]`.
    pub fn embed(&self, nvars: usize, map: &[usize]) -> Polynomial {
        let terms = self.terms.iter().map(|(m, c)| {
            let mut exps = vec![0u32; nvars];
            for (i, &e) in m.exponents().iter().enumerate() {
                exps[map[i]] += e;
            }
            (Monomial::new(exps), *c)
        });
        Polynomial::from_terms(nvars, terms)
    }

    /// Max absolute coefficient difference between two polynomials.
    pub fn max_coeff_diff(&self, other: &Polynomial) -> f64 {
        let mut worst: f64 = 0.0;
        for (m, c) in &self.terms {
            worst = worst.max((c - other.coeff(m)).abs());
        }
        for (m, c) in &other.terms {
            if !self.terms.contains_key(m) {
                worst = worst.max(c.abs());
            }
        }
        worst
    }

    /// Parses the textual form produced by `Display`.
    pub fn parse(text: &str, nvars: usize) -> Result<Polynomial, PolyError> {
        let text = text.trim();
        if text == "0" || text.is_empty() {
            return Ok(Polynomial::zero(nvars));
        }
        let mut terms = Vec::new();
        for raw in text.split(';') {
            let raw = raw.trim();
            let (coeff_txt, mono_txt) = match raw.split_once('*') {
                Some((c, m)) => (c.trim(), m.trim()),
                None => (raw, ""),
            };
            let coeff =
                f64::from_str(coeff_txt).map_err(|_| PolyError::Parse(format!("bad coefficient `{coeff_txt}`")))?;
            let mut exps = vec![0u32; nvars];
            for factor in mono_txt.split_whitespace() {
                let (v, e) = factor
                    .strip_prefix('x')
                    .and_then(|f| f.split_once('^'))
                    .ok_or_else(|| PolyError::Parse(format!("bad factor `{factor}`")))?;
                let v: usize = v.parse().map_err(|_| PolyError::Parse(format!("bad variable `{factor}`")))?;
                let e: u32 = e.parse().map_err(|_| PolyError::Parse(format!("bad exponent `{factor}`")))?;
                if v >= nvars {
                    return Err(PolyError::VariableOutOfRange { var: v, nvars });
                }
                exps[v] += e;
            }
            terms.push((Monomial::new(exps), coeff));
        }
        Ok(Polynomial::from_terms(nvars, terms))
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, (m, c)) in self.terms.iter().enumerate() {
            if i > 0 {
                write!(f, " ; ")?;
            }
            if m.is_one() {
                write!(f, "{c}")?;
            } else {
                write!(f, "{c} * {m}")?;
            }
        }
        Ok(())
    }
}
