use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::poly::{Monomial, Polynomial};
use crate::sdp::{self, kkt, LinearConstraint, SdpProblem, SdpSolution, SdpStatus, SolverConfig};

use super::expr::{DecisionId, Expr, ScalarId};
use super::SosError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DecisionKind {
    /// Unconstrained coefficients.
    Free,
    /// Constrained to be a sum of squares through its own Gram block.
    Sos,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Parity {
    Even,
    Odd,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecisionPoly {
    pub name: String,
    pub nvars: usize,
    pub degree: u32,
    pub kind: DecisionKind,
    /// Variables in which the polynomial must be even or odd. Only free
    /// polynomials accept hints.
    pub parity: Vec<(usize, Parity)>,
}

impl DecisionPoly {
    pub fn free(name: &str, nvars: usize, degree: u32) -> Self {
        Self { name: name.to_string(), nvars, degree, kind: DecisionKind::Free, parity: Vec::new() }
    }

    pub fn sos(name: &str, nvars: usize, degree: u32) -> Self {
        Self { name: name.to_string(), nvars, degree, kind: DecisionKind::Sos, parity: Vec::new() }
    }

    pub fn with_parity(mut self, var: usize, parity: Parity) -> Self {
        self.parity.push((var, parity));
        self
    }

    /// Coefficient slots of a free polynomial, in graded-lex order.
    pub fn slots(&self) -> Vec<Monomial> {
        Monomial::all_up_to(self.nvars, self.degree)
            .into_iter()
            .filter(|m| {
                self.parity.iter().all(|&(v, p)| {
                    let e = m.exponents()[v];
                    match p {
                        Parity::Even => e % 2 == 0,
                        Parity::Odd => e % 2 == 1,
                    }
                })
            })
            .collect()
    }
}

/// Monomial vector `z(x)` of a Gram representation `z' Q z`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GramBasis {
    pub monomials: Vec<Monomial>,
}

impl GramBasis {
    pub fn len(&self) -> usize {
        self.monomials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monomials.is_empty()
    }

    /// `z' Q z` for a symmetric `Q` of matching size.
    pub fn quadratic_form(&self, q: &DMatrix<f64>) -> Polynomial {
        let n = self.len();
        let nvars = self.monomials.first().map_or(0, Monomial::nvars);
        let mut terms = Vec::with_capacity(n * n);
        for r in 0..n {
            for c in r..n {
                let w = if r == c { 1.0 } else { 2.0 };
                terms.push((self.monomials[r].mul(&self.monomials[c]), w * q[(r, c)]));
            }
        }
        Polynomial::from_terms(nvars, terms)
    }
}

/// All monomials of total degree up to `ceil(expr_degree / 2)`.
pub fn gram_basis(expr_degree: u32, nvars: usize) -> GramBasis {
    GramBasis { monomials: Monomial::all_up_to(nvars, expr_degree.div_ceil(2)) }
}

/// `expr - sum_j w_j^2` must be a sum of squares.
///
/// With no negated squares this is the plain condition `expr ∈ SOS`. Each
/// `w_j` must be affine in the decision variables; the squares are handled
/// with a Schur-complement block `[[Q, W], [W', I]]` so the program stays
/// linear.
#[derive(Clone, Debug, PartialEq)]
pub struct SosConstraint {
    pub name: String,
    pub expr: Expr,
    pub negated_squares: Vec<Expr>,
}

impl SosConstraint {
    pub fn new(name: &str, expr: Expr) -> Self {
        Self { name: name.to_string(), expr, negated_squares: Vec::new() }
    }

    pub fn minus_square(mut self, w: Expr) -> Self {
        self.negated_squares.push(w);
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Objective {
    Maximize(ScalarId),
    Minimize(ScalarId),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SosProgram {
    nvars: usize,
    decisions: Vec<DecisionPoly>,
    scalars: Vec<String>,
    constraints: Vec<SosConstraint>,
    /// `(t, c)`: `t >= ||coefficients of c||`.
    norm_epigraph: Option<(ScalarId, Vec<DecisionId>)>,
    bounds: Vec<(ScalarId, Option<f64>, Option<f64>)>,
    objective: Option<Objective>,
}

impl SosProgram {
    pub fn new(nvars: usize) -> Self {
        Self {
            nvars,
            decisions: Vec::new(),
            scalars: Vec::new(),
            constraints: Vec::new(),
            norm_epigraph: None,
            bounds: Vec::new(),
            objective: None,
        }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn add_decision(&mut self, d: DecisionPoly) -> Result<DecisionId, SosError> {
        if d.nvars != self.nvars {
            return Err(SosError::VarCountMismatch(self.nvars, d.nvars));
        }
        if d.kind == DecisionKind::Sos && (d.degree % 2 == 1 || !d.parity.is_empty()) {
            return Err(SosError::InvalidDecision(d.name));
        }
        if d.parity.iter().any(|&(v, _)| v >= self.nvars) {
            return Err(SosError::InvalidDecision(d.name));
        }
        self.decisions.push(d);
        Ok(DecisionId(self.decisions.len() - 1))
    }

    pub fn add_scalar(&mut self, name: &str) -> ScalarId {
        self.scalars.push(name.to_string());
        ScalarId(self.scalars.len() - 1)
    }

    /// Expression handle for a registered decision polynomial.
    pub fn d(&self, id: DecisionId) -> Expr {
        Expr::decision(self.nvars, id)
    }

    /// Expression handle for a registered scalar.
    pub fn s(&self, id: ScalarId) -> Expr {
        Expr::scalar(self.nvars, id)
    }

    pub fn decision(&self, id: DecisionId) -> &DecisionPoly {
        &self.decisions[id.0]
    }

    pub fn add_constraint(&mut self, c: SosConstraint) -> Result<(), SosError> {
        let nv = |e: &Expr| e.nvars() == self.nvars;
        if !nv(&c.expr) || !c.negated_squares.iter().all(nv) {
            return Err(SosError::VarCountMismatch(self.nvars, c.expr.nvars()));
        }
        let known = |e: &Expr| {
            e.decision_terms().all(|(id, _)| id.0 < self.decisions.len())
                && e.scalar_terms().all(|(id, _)| id.0 < self.scalars.len())
        };
        if !known(&c.expr) || !c.negated_squares.iter().all(known) {
            return Err(SosError::UnknownVariable(c.name));
        }
        self.constraints.push(c);
        Ok(())
    }

    /// Adds `t >= ||c||` over the stacked coefficient vectors of the free
    /// decision polynomials `polys`.
    pub fn set_norm_epigraph(&mut self, t: ScalarId, polys: &[DecisionId]) -> Result<(), SosError> {
        for c in polys {
            if self.decisions[c.0].kind != DecisionKind::Free {
                return Err(SosError::InvalidDecision(self.decisions[c.0].name.clone()));
            }
        }
        self.norm_epigraph = Some((t, polys.to_vec()));
        Ok(())
    }

    pub fn bound_scalar(&mut self, s: ScalarId, lower: Option<f64>, upper: Option<f64>) {
        self.bounds.push((s, lower, upper));
    }

    pub fn set_objective(&mut self, obj: Objective) {
        self.objective = Some(obj);
    }

    pub fn constraints(&self) -> &[SosConstraint] {
        &self.constraints
    }

    fn decision_degree(&self, id: DecisionId) -> u32 {
        self.decisions[id.0].degree
    }

    /// Compiles, solves and recovers in one call. A non-optimal solver
    /// status is reported in the result rather than as an error.
    pub fn solve(&self, cfg: &SolverConfig) -> Result<SosSolution, SosError> {
        let compiled = compile(self)?;
        let sol = sdp::solve(&compiled.problem, cfg)?;
        if sol.status != SdpStatus::Optimal {
            return Ok(SosSolution::empty(sol));
        }
        recover(self, &compiled, sol)
    }
}

#[derive(Clone, Debug)]
enum DecisionSlot {
    Free { offset: usize, slots: Vec<Monomial> },
    Sos { block: usize, basis: GramBasis },
}

#[derive(Clone, Debug)]
struct ConstraintBlock {
    block: usize,
    basis: GramBasis,
    negated: usize,
}

/// An SOS program lowered to an SDP, with the variable layout needed to read
/// the solution back.
#[derive(Clone, Debug)]
pub struct CompiledSos {
    pub problem: SdpProblem,
    scalar_offset: usize,
    decisions: Vec<DecisionSlot>,
    constraints: Vec<ConstraintBlock>,
}

/// Coefficient of one monomial as a linear function of the SDP variables.
#[derive(Default)]
struct Lin {
    constant: f64,
    free: BTreeMap<usize, f64>,
    psd: BTreeMap<(usize, usize, usize), f64>,
}

impl Lin {
    fn push_into(&self, con: &mut LinearConstraint, sign: f64) {
        for (&k, &v) in &self.free {
            con.add_free(k, sign * v);
        }
        for (&(b, r, c), &v) in &self.psd {
            con.add_psd(b, r, c, sign * v);
        }
    }
}

fn linearize(expr: &Expr, scalar_offset: usize, decisions: &[DecisionSlot]) -> BTreeMap<Monomial, Lin> {
    let mut out: BTreeMap<Monomial, Lin> = BTreeMap::new();
    for (m, c) in expr.fixed_part().terms() {
        out.entry(m.clone()).or_default().constant += c;
    }
    for (id, g) in expr.scalar_terms() {
        for (m, c) in g.terms() {
            *out.entry(m.clone()).or_default().free.entry(scalar_offset + id.0).or_insert(0.0) += c;
        }
    }
    for (id, g) in expr.decision_terms() {
        match &decisions[id.0] {
            DecisionSlot::Free { offset, slots } => {
                for (k, slot) in slots.iter().enumerate() {
                    for (m, c) in g.terms() {
                        *out.entry(slot.mul(m)).or_default().free.entry(offset + k).or_insert(0.0) += c;
                    }
                }
            }
            DecisionSlot::Sos { block, basis } => {
                let z = &basis.monomials;
                for r in 0..z.len() {
                    for col in r..z.len() {
                        let zz = z[r].mul(&z[col]);
                        for (m, c) in g.terms() {
                            *out.entry(zz.mul(m)).or_default().psd.entry((*block, r, col)).or_insert(0.0) += c;
                        }
                    }
                }
            }
        }
    }
    out
}

pub fn compile(prog: &SosProgram) -> Result<CompiledSos, SosError> {
    if prog.constraints.is_empty() {
        return Err(SosError::EmptyProgram);
    }
    let nvars = prog.nvars;
    let mut block_dims = Vec::new();
    let mut free_dim = 0;

    let scalar_offset = free_dim;
    free_dim += prog.scalars.len();

    let mut decisions = Vec::with_capacity(prog.decisions.len());
    for d in &prog.decisions {
        match d.kind {
            DecisionKind::Free => {
                let slots = d.slots();
                let offset = free_dim;
                free_dim += slots.len();
                decisions.push(DecisionSlot::Free { offset, slots });
            }
            DecisionKind::Sos => {
                let basis = gram_basis(d.degree, nvars);
                block_dims.push(basis.len());
                decisions.push(DecisionSlot::Sos { block: block_dims.len() - 1, basis });
            }
        }
    }

    let mut rows: Vec<LinearConstraint> = Vec::new();
    let mut cblocks = Vec::with_capacity(prog.constraints.len());
    for con in &prog.constraints {
        let deg = con.expr.degree_bound(|id| prog.decision_degree(id));
        if deg % 2 == 1 {
            return Err(SosError::OddDegree { constraint: con.name.clone(), degree: deg });
        }
        let neg_deg =
            con.negated_squares.iter().map(|w| w.degree_bound(|id| prog.decision_degree(id))).max().unwrap_or(0);
        let basis = gram_basis(deg.max(2 * neg_deg), nvars);
        let nz = basis.len();
        let k = con.negated_squares.len();
        block_dims.push(nz + k);
        let block = block_dims.len() - 1;

        // coefficient matching: z'Qz = expr
        let mut lin = linearize(&con.expr, scalar_offset, &decisions);
        let z = &basis.monomials;
        let mut products: BTreeMap<Monomial, Vec<(usize, usize)>> = BTreeMap::new();
        for r in 0..nz {
            for c in r..nz {
                products.entry(z[r].mul(&z[c])).or_default().push((r, c));
            }
        }
        for (m, pairs) in &products {
            let mut row = LinearConstraint::default();
            for &(r, c) in pairs {
                row.add_psd(block, r, c, 1.0);
            }
            if let Some(l) = lin.remove(m) {
                l.push_into(&mut row, -1.0);
                row.rhs = l.constant;
            }
            rows.push(row);
        }
        debug_assert!(lin.is_empty(), "expression monomial outside the Gram basis");

        // W columns carry the coefficients of the negated squares
        for (j, w) in con.negated_squares.iter().enumerate() {
            let mut wl = linearize(w, scalar_offset, &decisions);
            for (r, zr) in z.iter().enumerate() {
                let mut row = LinearConstraint::default();
                row.add_psd(block, r, nz + j, 0.5);
                if let Some(l) = wl.remove(zr) {
                    l.push_into(&mut row, -1.0);
                    row.rhs = l.constant;
                }
                rows.push(row);
            }
        }
        for i in 0..k {
            for j in i..k {
                let mut row = LinearConstraint::with_rhs(if i == j { 1.0 } else { 0.0 });
                row.add_psd(block, nz + i, nz + j, if i == j { 1.0 } else { 0.5 });
                rows.push(row);
            }
        }
        cblocks.push(ConstraintBlock { block, basis, negated: k });
    }

    if let Some((t, polys)) = &prog.norm_epigraph {
        // arrow block [[t I, c], [c', t]]  <=>  t >= ||c||
        let mut coeffs = Vec::new();
        for c in polys {
            let DecisionSlot::Free { offset, slots } = &decisions[c.0] else {
                return Err(SosError::InvalidDecision(prog.decisions[c.0].name.clone()));
            };
            coeffs.extend(*offset..*offset + slots.len());
        }
        let k = coeffs.len();
        block_dims.push(k + 1);
        let block = block_dims.len() - 1;
        for i in 0..=k {
            let mut row = LinearConstraint::default();
            row.add_psd(block, i, i, 1.0);
            row.add_free(scalar_offset + t.0, -1.0);
            rows.push(row);
        }
        for i in 0..k {
            for j in (i + 1)..k {
                let mut row = LinearConstraint::default();
                row.add_psd(block, i, j, 0.5);
                rows.push(row);
            }
        }
        for (i, &var) in coeffs.iter().enumerate() {
            let mut row = LinearConstraint::default();
            row.add_psd(block, i, k, 0.5);
            row.add_free(var, -1.0);
            rows.push(row);
        }
    }

    for &(s, lo, hi) in &prog.bounds {
        for (bound, sign) in [(lo, -1.0), (hi, 1.0)] {
            if let Some(v) = bound {
                // s - X = lo  or  s + X = hi
                block_dims.push(1);
                let mut row = LinearConstraint::with_rhs(v);
                row.add_free(scalar_offset + s.0, 1.0);
                row.add_psd(block_dims.len() - 1, 0, 0, sign);
                rows.push(row);
            }
        }
    }

    let mut problem = SdpProblem::new(block_dims, free_dim);
    problem.constraints = rows;
    match prog.objective {
        Some(Objective::Maximize(s)) => problem.add_objective_free(scalar_offset + s.0, -1.0),
        Some(Objective::Minimize(s)) => problem.add_objective_free(scalar_offset + s.0, 1.0),
        None => {}
    }
    problem.validate()?;
    Ok(CompiledSos { problem, scalar_offset, decisions, constraints: cblocks })
}

/// Decision values read back from an SDP solution.
#[derive(Clone, Debug)]
pub struct SosSolution {
    pub status: SdpStatus,
    pub scalars: BTreeMap<String, f64>,
    pub polys: BTreeMap<String, Polynomial>,
    /// Minimum Gram eigenvalue of every SOS decision polynomial.
    pub decision_min_eig: BTreeMap<String, f64>,
    /// Minimum eigenvalue of each constraint's Gram block.
    pub constraint_min_eig: Vec<f64>,
    /// Largest coefficient mismatch between each constraint's expression and
    /// its Gram representation.
    pub constraint_mismatch: Vec<f64>,
    pub constraint_grams: Vec<(GramBasis, DMatrix<f64>)>,
    /// Whether each constraint holds exactly once its coefficient mismatch is
    /// folded into the Gram matrix (see [`absorbs_mismatch`]).
    pub constraint_margin_ok: Vec<bool>,
    pub sdp: SdpSolution,
}

/// Coefficient-match tolerance for accepting a certificate.
pub const MATCH_TOL: f64 = 1e-6;
/// Gram eigenvalue tolerance for accepting a certificate.
pub const EIG_TOL: f64 = 1e-7;

impl SosSolution {
    fn empty(sdp: SdpSolution) -> Self {
        Self {
            status: sdp.status,
            scalars: BTreeMap::new(),
            polys: BTreeMap::new(),
            decision_min_eig: BTreeMap::new(),
            constraint_min_eig: Vec::new(),
            constraint_mismatch: Vec::new(),
            constraint_grams: Vec::new(),
            constraint_margin_ok: Vec::new(),
            sdp,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == SdpStatus::Optimal
    }

    /// Every SOS multiplier passes the eigenvalue check and every constraint
    /// either passes the coefficient-match and eigenvalue checks or has enough
    /// Gram margin to absorb its mismatch.
    pub fn certified(&self) -> bool {
        let constraints_ok = (0..self.constraint_mismatch.len()).all(|i| {
            (self.constraint_mismatch[i] <= MATCH_TOL && self.constraint_min_eig[i] >= -EIG_TOL)
                || self.constraint_margin_ok[i]
        });
        self.is_optimal() && constraints_ok && self.decision_min_eig.values().all(|&e| e >= -EIG_TOL)
    }

    pub fn scalar(&self, name: &str) -> Option<f64> {
        self.scalars.get(name).copied()
    }

    pub fn poly(&self, name: &str) -> Option<&Polynomial> {
        self.polys.get(name)
    }
}

pub fn recover(prog: &SosProgram, compiled: &CompiledSos, sol: SdpSolution) -> Result<SosSolution, SosError> {
    if sol.status != SdpStatus::Optimal {
        return Err(SosError::NotOptimal(sol.status));
    }
    let nvars = prog.nvars;
    let scalar_values: Vec<f64> = (0..prog.scalars.len()).map(|i| sol.x_free[compiled.scalar_offset + i]).collect();
    let mut poly_values = Vec::with_capacity(prog.decisions.len());
    let mut decision_min_eig = BTreeMap::new();
    for (d, slot) in prog.decisions.iter().zip(&compiled.decisions) {
        let p = match slot {
            DecisionSlot::Free { offset, slots } => Polynomial::from_terms(
                nvars,
                slots.iter().enumerate().map(|(k, m)| (m.clone(), sol.x_free[offset + k])),
            ),
            DecisionSlot::Sos { block, basis } => {
                let q = &sol.x[*block];
                decision_min_eig.insert(d.name.clone(), kkt::min_eigenvalue(q));
                basis.quadratic_form(q)
            }
        };
        poly_values.push(p);
    }

    let mut constraint_min_eig = Vec::new();
    let mut constraint_mismatch = Vec::new();
    let mut constraint_grams = Vec::new();
    let mut constraint_margin_ok = Vec::new();
    for (con, cb) in prog.constraints.iter().zip(&compiled.constraints) {
        let full = &sol.x[cb.block];
        let nz = cb.basis.len();
        let q = full.view((0, 0), (nz, nz)).into_owned();
        let value = con.expr.evaluate(|id| poly_values[id.0].clone(), |id| scalar_values[id.0])?;
        let mut mismatch = value.max_coeff_diff(&cb.basis.quadratic_form(&q));
        for (j, w) in con.negated_squares.iter().enumerate() {
            let wv = w.evaluate(|id| poly_values[id.0].clone(), |id| scalar_values[id.0])?;
            let col = Polynomial::from_terms(
                nvars,
                cb.basis.monomials.iter().enumerate().map(|(r, m)| (m.clone(), full[(r, nz + j)])),
            );
            mismatch = mismatch.max(wv.max_coeff_diff(&col));
            for i in 0..cb.negated {
                let target = if i == j { 1.0 } else { 0.0 };
                mismatch = mismatch.max((full[(nz + i, nz + j)] - target).abs());
            }
        }
        let squares = con
            .negated_squares
            .iter()
            .map(|w| w.evaluate(|id| poly_values[id.0].clone(), |id| scalar_values[id.0]))
            .collect::<Result<Vec<_>, _>>()?;
        constraint_margin_ok.push(absorbs_mismatch(&cb.basis, &q, &value, &squares));
        constraint_min_eig.push(kkt::min_eigenvalue(full));
        constraint_mismatch.push(mismatch);
        constraint_grams.push((cb.basis.clone(), q));
    }

    Ok(SosSolution {
        status: sol.status,
        scalars: prog.scalars.iter().cloned().zip(scalar_values).collect(),
        polys: prog.decisions.iter().map(|d| d.name.clone()).zip(poly_values).collect(),
        decision_min_eig,
        constraint_min_eig,
        constraint_mismatch,
        constraint_grams,
        constraint_margin_ok,
        sdp: sol,
    })
}

/// Exact check that `value - sum w_j^2` is SOS given an approximate Gram
/// matrix `q` of `value`.
///
/// With `W` the coefficients of the `w_j` on the basis `z`, the target is
/// `z'(q - W W')z + e` where `e = value - z'qz`. Every monomial of `e` is
/// some `z_i z_j`, so `e = z'Ez` with `|E_ij| <= max|e|` and
/// `||E|| <= n max|e|`. Hence `lambda_min(q - W W') >= n max|e|` proves the
/// claim without any tolerance.
pub fn absorbs_mismatch(basis: &GramBasis, q: &DMatrix<f64>, value: &Polynomial, squares: &[Polynomial]) -> bool {
    let n = basis.len();
    let index: BTreeMap<&Monomial, usize> = basis.monomials.iter().enumerate().map(|(i, m)| (m, i)).collect();
    let mut g = q.clone();
    for w in squares {
        let mut col = DVector::zeros(n);
        for (m, c) in w.terms() {
            match index.get(m) {
                Some(&i) => col[i] = c,
                None => return false,
            }
        }
        g -= &col * col.transpose();
    }
    let e = match value.sub(&basis.quadratic_form(q)) {
        Ok(e) => e,
        Err(_) => return false,
    };
    let products: std::collections::BTreeSet<Monomial> =
        basis.monomials.iter().flat_map(|a| basis.monomials.iter().map(move |b| a.mul(b))).collect();
    if e.terms().any(|(m, _)| !products.contains(m)) {
        return false;
    }
    kkt::min_eigenvalue(&g) >= n as f64 * e.max_abs_coeff()
}
