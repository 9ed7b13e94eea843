use std::cmp::Ordering;
use std::fmt;

/// A monomial `x0^e0 x1^e1 ...` stored as its exponent vector.
///
/// Ordering is graded-lex: lower total degree first, then within a degree
/// larger exponents of earlier variables first (`1, x, y, x^2, xy, y^2`).
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Monomial {
    exps: Vec<u32>,
}

impl Monomial {
    pub fn new(exps: Vec<u32>) -> Self {
        Self { exps }
    }

    pub fn one(nvars: usize) -> Self {
        Self { exps: vec![0; nvars] }
    }

    /// The monomial `x_var`.
    pub fn var(nvars: usize, var: usize) -> Self {
        let mut exps = vec![0; nvars];
        exps[var] = 1;
        Self { exps }
    }

    pub fn nvars(&self) -> usize {
        self.exps.len()
    }

    pub fn exponents(&self) -> &[u32] {
        &self.exps
    }

    pub fn degree(&self) -> u32 {
        self.exps.iter().sum()
    }

    pub fn is_one(&self) -> bool {
        self.exps.iter().all(|&e| e == 0)
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        debug_assert_eq!(self.nvars(), other.nvars());
        Monomial { exps: self.exps.iter().zip(&other.exps).map(|(a, b)| a + b).collect() }
    }

    pub fn eval(&self, point: &[f64]) -> f64 {
        self.exps.iter().zip(point).filter(|(&e, _)| e > 0).map(|(&e, &x)| x.powi(e as i32)).product()
    }

    /// All monomials in `nvars` variables with total degree `<= max_degree`,
    /// in graded-lex order.
    pub fn all_up_to(nvars: usize, max_degree: u32) -> Vec<Monomial> {
        let mut out = Vec::new();
        for d in 0..=max_degree {
            out.extend(Self::all_of_degree(nvars, d));
        }
        out
    }

    /// All monomials of exactly total degree `degree`, in graded-lex order.
    pub fn all_of_degree(nvars: usize, degree: u32) -> Vec<Monomial> {
        let mut out = Vec::new();
        if nvars == 0 {
            if degree == 0 {
                out.push(Monomial::new(Vec::new()));
            }
            return out;
        }
        let mut exps = vec![0u32; nvars];
        fill(&mut exps, 0, degree, &mut out);
        out
    }
}

fn fill(exps: &mut [u32], idx: usize, remaining: u32, out: &mut Vec<Monomial>) {
    if idx == exps.len() - 1 {
        exps[idx] = remaining;
        out.push(Monomial::new(exps.to_vec()));
        return;
    }
    for e in (0..=remaining).rev() {
        exps[idx] = e;
        fill(exps, idx + 1, remaining - e, out);
    }
    exps[idx] = 0;
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree().cmp(&other.degree()).then_with(|| other.exps.cmp(&self.exps))
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (i, &e) in self.exps.iter().enumerate() {
            if e == 0 {
                continue;
            }
            if !first {
                write!(f, " ")?;
            }
            write!(f, "x{i}^{e}")?;
            first = false;
        }
        if first {
            write!(f, "1")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn graded_lex_order() {
        let basis = Monomial::all_up_to(2, 2);
        let shown: Vec<String> = basis.iter().map(|m| m.to_string()).collect();
        assert_eq!(shown, ["1", "x0^1", "x1^1", "x0^2", "x0^1 x1^1", "x1^2"]);
        let mut sorted = basis.clone();
        sorted.sort();
        assert_eq!(sorted, basis);
    }

    #[test]
    fn counts_match_binomials() {
        assert_eq!(Monomial::all_up_to(2, 3).len(), 10);
        assert_eq!(Monomial::all_up_to(3, 3).len(), 20);
        assert_eq!(Monomial::all_up_to(2, 4).len(), 15);
    }
}
