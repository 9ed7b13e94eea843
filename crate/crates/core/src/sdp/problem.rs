use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use super::SdpError;

/// One entry of a symmetric coefficient matrix, stored on the upper triangle.
///
/// An off-diagonal entry `(r, c, v)` stands for both `M[r][c]` and `M[c][r]`,
/// so its inner product with a symmetric `X` is `2 v X[r][c]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SymEntry {
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

impl SymEntry {
    pub fn new(row: usize, col: usize, value: f64) -> Self {
        let (row, col) = if row <= col { (row, col) } else { (col, row) };
        Self { row, col, value }
    }

    /// Contribution of this entry to `<M, X>`.
    pub fn inner(&self, x: &DMatrix<f64>) -> f64 {
        if self.row == self.col {
            self.value * x[(self.row, self.col)]
        } else {
            2.0 * self.value * x[(self.row, self.col)]
        }
    }
}

/// One linear equality `sum_j <A_ij, X_j> + sum_k F_ik x_k = b_i`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinearConstraint {
    /// `(block index, entry)` pairs over the PSD blocks.
    pub psd: Vec<(usize, SymEntry)>,
    /// `(free variable index, coefficient)` pairs.
    pub free: Vec<(usize, f64)>,
    pub rhs: f64,
}

impl LinearConstraint {
    pub fn with_rhs(rhs: f64) -> Self {
        Self { rhs, ..Self::default() }
    }

    pub fn add_psd(&mut self, block: usize, row: usize, col: usize, value: f64) {
        self.psd.push((block, SymEntry::new(row, col, value)));
    }

    pub fn add_free(&mut self, var: usize, value: f64) {
        self.free.push((var, value));
    }
}

/// Block-diagonal SDP in standard primal form:
///
/// ```text
/// minimize    sum_j <C_j, X_j> + f' x
/// subject to  sum_j <A_ij, X_j> + F_i x = b_i,   X_j PSD,   x free
/// ```
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SdpProblem {
    pub block_dims: Vec<usize>,
    pub free_dim: usize,
    pub objective_psd: Vec<(usize, SymEntry)>,
    pub objective_free: Vec<(usize, f64)>,
    pub constraints: Vec<LinearConstraint>,
}

impl SdpProblem {
    pub fn new(block_dims: Vec<usize>, free_dim: usize) -> Self {
        Self { block_dims, free_dim, ..Self::default() }
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn add_objective_psd(&mut self, block: usize, row: usize, col: usize, value: f64) {
        self.objective_psd.push((block, SymEntry::new(row, col, value)));
    }

    pub fn add_objective_free(&mut self, var: usize, value: f64) {
        self.objective_free.push((var, value));
    }

    pub fn validate(&self) -> Result<(), SdpError> {
        let check_entry = |block: usize, e: &SymEntry, what: &str| -> Result<(), SdpError> {
            let n = *self
                .block_dims
                .get(block)
                .ok_or_else(|| SdpError::InvalidProblem(format!("{what}: block {block} does not exist")))?;
            if e.row >= n || e.col >= n {
                return Err(SdpError::InvalidProblem(format!(
                    "{what}: entry ({}, {}) outside block {block} of size {n}",
                    e.row, e.col
                )));
            }
            if !e.value.is_finite() {
                return Err(SdpError::InvalidProblem(format!("{what}: non-finite entry")));
            }
            Ok(())
        };
        if self.block_dims.iter().any(|&n| n == 0) {
            return Err(SdpError::InvalidProblem("empty PSD block".into()));
        }
        for (b, e) in &self.objective_psd {
            check_entry(*b, e, "objective")?;
        }
        for &(k, v) in &self.objective_free {
            if k >= self.free_dim || !v.is_finite() {
                return Err(SdpError::InvalidProblem("objective: bad free entry".into()));
            }
        }
        for (i, c) in self.constraints.iter().enumerate() {
            let what = format!("constraint {i}");
            for (b, e) in &c.psd {
                check_entry(*b, e, &what)?;
            }
            for &(k, v) in &c.free {
                if k >= self.free_dim || !v.is_finite() {
                    return Err(SdpError::InvalidProblem(format!("{what}: bad free entry")));
                }
            }
            if !c.rhs.is_finite() {
                return Err(SdpError::InvalidProblem(format!("{what}: non-finite rhs")));
            }
        }
        Ok(())
    }

    /// Dense symmetric objective block `C_j`.
    pub fn objective_block(&self, block: usize) -> DMatrix<f64> {
        let n = self.block_dims[block];
        let mut c = DMatrix::zeros(n, n);
        for (b, e) in &self.objective_psd {
            if *b == block {
                accumulate(&mut c, e, 1.0);
            }
        }
        c
    }

    pub fn objective_free_vec(&self) -> DVector<f64> {
        let mut f = DVector::zeros(self.free_dim);
        for &(k, v) in &self.objective_free {
            f[k] += v;
        }
        f
    }

    pub fn rhs(&self) -> DVector<f64> {
        DVector::from_iterator(self.constraints.len(), self.constraints.iter().map(|c| c.rhs))
    }

    /// Sparse text dump: block sizes, free dimension, right-hand side, then one
    /// `constraint_index block row col value` line per coefficient (block 0 is
    /// the free block, PSD blocks are numbered from 1), then the objective.
    pub fn to_dump(&self) -> String {
        let mut s = String::from("# sosguard sdp dump v1\n");
        let _ = write!(s, "blocks");
        for n in &self.block_dims {
            let _ = write!(s, " {n}");
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "free {}", self.free_dim);
        let _ = write!(s, "rhs");
        for c in &self.constraints {
            let _ = write!(s, " {:e}", c.rhs);
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "entries");
        for (i, c) in self.constraints.iter().enumerate() {
            for (b, e) in &c.psd {
                let _ = writeln!(s, "{i} {} {} {} {:e}", b + 1, e.row, e.col, e.value);
            }
            for &(k, v) in &c.free {
                let _ = writeln!(s, "{i} 0 {k} {k} {v:e}");
            }
        }
        let _ = writeln!(s, "objective");
        for (b, e) in &self.objective_psd {
            let _ = writeln!(s, "{} {} {} {:e}", b + 1, e.row, e.col, e.value);
        }
        for &(k, v) in &self.objective_free {
            let _ = writeln!(s, "0 {k} {k} {v:e}");
        }
        s
    }

    pub fn from_dump(text: &str) -> Result<SdpProblem, SdpError> {
        let bad = |msg: &str, line: &str| SdpError::Parse(format!("{msg}: `{line}`"));
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));

        let parse_usize = |t: &str, line: &str| t.parse::<usize>().map_err(|_| bad("bad integer", line));
        let parse_f64 = |t: &str, line: &str| t.parse::<f64>().map_err(|_| bad("bad number", line));

        let line = lines.next().ok_or_else(|| SdpError::Parse("missing blocks line".into()))?;
        let mut toks = line.split_whitespace();
        if toks.next() != Some("blocks") {
            return Err(bad("expected `blocks`", line));
        }
        let block_dims = toks.map(|t| parse_usize(t, line)).collect::<Result<Vec<_>, _>>()?;

        let line = lines.next().ok_or_else(|| SdpError::Parse("missing free line".into()))?;
        let free_dim = match line.split_whitespace().collect::<Vec<_>>()[..] {
            ["free", n] => parse_usize(n, line)?,
            _ => return Err(bad("expected `free <n>`", line)),
        };

        let line = lines.next().ok_or_else(|| SdpError::Parse("missing rhs line".into()))?;
        let mut toks = line.split_whitespace();
        if toks.next() != Some("rhs") {
            return Err(bad("expected `rhs`", line));
        }
        let rhs = toks.map(|t| parse_f64(t, line)).collect::<Result<Vec<_>, _>>()?;

        let mut prob = SdpProblem::new(block_dims, free_dim);
        prob.constraints = rhs.into_iter().map(LinearConstraint::with_rhs).collect();

        let line = lines.next().ok_or_else(|| SdpError::Parse("missing entries line".into()))?;
        if line != "entries" {
            return Err(bad("expected `entries`", line));
        }
        let mut in_objective = false;
        for line in lines {
            if line == "objective" {
                in_objective = true;
                continue;
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            let (i, rest) = if in_objective {
                (None, &toks[..])
            } else {
                let (first, rest) = toks.split_first().ok_or_else(|| bad("empty entry", line))?;
                (Some(parse_usize(first, line)?), rest)
            };
            let [blk, row, col, val] = rest else {
                return Err(bad("expected `block row col value`", line));
            };
            let (blk, row, col, val) =
                (parse_usize(blk, line)?, parse_usize(row, line)?, parse_usize(col, line)?, parse_f64(val, line)?);
            match (i, blk) {
                (Some(i), 0) => prob
                    .constraints
                    .get_mut(i)
                    .ok_or_else(|| bad("constraint index out of range", line))?
                    .add_free(row, val),
                (Some(i), b) => prob
                    .constraints
                    .get_mut(i)
                    .ok_or_else(|| bad("constraint index out of range", line))?
                    .add_psd(b - 1, row, col, val),
                (None, 0) => prob.add_objective_free(row, val),
                (None, b) => prob.add_objective_psd(b - 1, row, col, val),
            }
        }
        prob.validate()?;
        Ok(prob)
    }
}

/// Adds `scale * M` to `target`, writing both triangles.
pub(crate) fn accumulate(target: &mut DMatrix<f64>, e: &SymEntry, scale: f64) {
    target[(e.row, e.col)] += scale * e.value;
    if e.row != e.col {
        target[(e.col, e.row)] += scale * e.value;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> SdpProblem {
        let mut p = SdpProblem::new(vec![2, 1], 1);
        let mut c = LinearConstraint::with_rhs(1.5);
        c.add_psd(0, 0, 1, 1.0);
        c.add_psd(1, 0, 0, -0.1);
        c.add_free(0, 2.0);
        p.constraints.push(c);
        p.add_objective_psd(0, 1, 1, 3.0);
        p.add_objective_free(0, -1.0);
        p
    }

    #[test]
    fn dump_round_trip() {
        let p = sample();
        let text = p.to_dump();
        assert!(text.contains("blocks 2 1"));
        assert!(text.contains("0 1 0 1 1e0"));
        assert_eq!(SdpProblem::from_dump(&text).unwrap(), p);
    }

    #[test]
    fn entries_stored_upper() {
        let e = SymEntry::new(3, 1, 2.0);
        assert_eq!((e.row, e.col), (1, 3));
    }

    #[test]
    fn validate_catches_out_of_range() {
        let mut p = sample();
        p.constraints[0].add_psd(1, 0, 1, 1.0);
        assert!(p.validate().is_err());
    }
}
