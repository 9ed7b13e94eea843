//! The two SOS programs behind the filter.
//!
//! Step 1 maximizes the margin `eps` over the multipliers and a feasible
//! correction; step 2 fixes the multipliers on `h` and on the unsafe regions
//! and looks for the correction with the smallest coefficient norm that keeps
//! a fraction of the margin. Both run in coordinates `ξ ∈ [-1, 1]^n` of the
//! certificate box.

use crate::poly::{PolyDynamics, Polynomial};
use crate::sdp::SdpStatus;
use crate::sos::{DecisionId, DecisionPoly, Expr, Objective, SosConstraint, SosProgram, SosSolution};

use super::delta::{delta_h_symbolic, LocalFrame};
use super::{BarrierSpec, CbfError, FilterConfig};

/// Margins at or above `-EPS_TOL` count as certified.
pub const EPS_TOL: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Degrees {
    pub a: u32,
    pub l: u32,
    pub m: u32,
}

impl Degrees {
    pub fn from_config(cfg: &FilterConfig) -> Self {
        Self { a: cfg.deg_a, l: cfg.deg_l, m: cfg.deg_m }
    }

    pub fn escalated(self, by: u32) -> Self {
        let even = by + by % 2;
        Self { a: self.a + by, l: self.l + even, m: self.m + even }
    }
}

/// Problem data pulled back to the certificate box.
#[derive(Clone, Debug)]
pub(crate) struct Prepared {
    pub frame: LocalFrame,
    pub h: Polynomial,
    pub h_local: Polynomial,
    pub mu_local: Vec<Polynomial>,
    pub boxes: Vec<Polynomial>,
    pub dynamics: PolyDynamics,
    pub offset: Vec<f64>,
}

pub(crate) fn prepare(
    spec: &BarrierSpec,
    dynamics: &PolyDynamics,
    offset: &[f64],
    frame: LocalFrame,
) -> Result<Prepared, CbfError> {
    if frame.dim() != dynamics.state_dim() || spec.h.nvars() != dynamics.state_dim() {
        return Err(CbfError::Dimension("barrier, dynamics and box disagree".into()));
    }
    if offset.len() != dynamics.action_dim() {
        return Err(CbfError::Dimension(format!("expected {} actions, got {}", dynamics.action_dim(), offset.len())));
    }
    Ok(Prepared {
        h_local: frame.pull_back(&spec.h)?,
        mu_local: spec.unsafe_regions.iter().map(|m| frame.pull_back(m)).collect::<Result<_, _>>()?,
        boxes: frame.box_constraints(),
        dynamics: frame.pull_back_dynamics(dynamics)?,
        h: spec.h.clone(),
        offset: offset.to_vec(),
        frame,
    })
}

#[derive(Clone, Debug)]
pub struct Step1Result {
    pub frame: LocalFrame,
    pub degrees: Degrees,
    pub status: SdpStatus,
    /// Maximized margin; `-inf` when the solve did not reach an optimum.
    pub eps1: f64,
    /// Multiplier on `h`, over `ξ`.
    pub l: Polynomial,
    /// Multipliers on the unsafe regions, over `ξ`.
    pub m: Vec<Polynomial>,
    /// Box multipliers of the safe-set constraint, over `ξ`.
    pub box_multipliers: Vec<Polynomial>,
    /// Correction found together with the multipliers, over `ξ`.
    pub a_feas: Vec<Polynomial>,
    /// Certificate checks passed (coefficient match, Gram eigenvalues).
    pub certified: bool,
    pub min_gram_eig: f64,
}

impl Step1Result {
    pub fn success(&self) -> bool {
        self.status == SdpStatus::Optimal && self.certified && self.eps1 >= -EPS_TOL
    }
}

#[derive(Clone, Debug)]
pub struct Step2Result {
    pub status: SdpStatus,
    /// Correction polynomial over `ξ`.
    pub a_star: Vec<Polynomial>,
    pub coeff_norm: f64,
    pub certified: bool,
    pub min_gram_eig: f64,
}

impl Step2Result {
    pub fn success(&self) -> bool {
        self.status == SdpStatus::Optimal && self.certified
    }
}

enum Stage<'a> {
    One,
    Two { l: &'a Polynomial, m: &'a [Polynomial], eps: f64 },
}

struct Built {
    prog: SosProgram,
    a: Vec<DecisionId>,
}

fn even_ceil(d: u32) -> u32 {
    d + d % 2
}

fn binomial(n: usize, k: usize) -> usize {
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

/// Adds `expr - sum_j sigma_j b_j - sum w^2 ∈ SOS` with SOS box multipliers
/// `sigma_j` whose degree brings the constraint to an even degree.
fn add_with_box(
    prog: &mut SosProgram,
    name: &str,
    mut expr: Expr,
    negated: Vec<Expr>,
    boxes: &[Polynomial],
    max_gram: usize,
) -> Result<Vec<DecisionId>, CbfError> {
    let n = prog.nvars();
    let degree_of = |p: &SosProgram, e: &Expr| e.degree_bound(|id| p.decision(id).degree);
    let mut d = degree_of(prog, &expr);
    for w in &negated {
        d = d.max(2 * degree_of(prog, w));
    }
    let target = even_ceil(d).max(2);
    let required = binomial(n + target as usize / 2, n) + negated.len();
    if required > max_gram {
        return Err(CbfError::DegreeOverflow { constraint: name.to_string(), required, limit: max_gram });
    }
    let mut ids = Vec::with_capacity(boxes.len());
    for (j, b) in boxes.iter().enumerate() {
        let sigma = prog.add_decision(DecisionPoly::sos(&format!("{name}_box{j}"), n, target - 2))?;
        expr = expr.sub(&prog.d(sigma).mul_poly(b)?)?;
        ids.push(sigma);
    }
    let mut con = SosConstraint::new(name, expr);
    for w in negated {
        con = con.minus_square(w);
    }
    prog.add_constraint(con)?;
    Ok(ids)
}

fn build(prep: &Prepared, cfg: &FilterConfig, deg: Degrees, stage: &Stage) -> Result<Built, CbfError> {
    let n = prep.frame.dim();
    let mut prog = SosProgram::new(n);
    let a: Vec<DecisionId> = (0..prep.offset.len())
        .map(|k| prog.add_decision(DecisionPoly::free(&format!("a{k}"), n, deg.a)))
        .collect::<Result<_, _>>()?;
    let dh = delta_h_symbolic(&prep.h, &prep.h_local, &prep.dynamics, &a, &prep.offset)?;

    // safe set: Δh + gamma h - L h - eps ∈ SOS on the box
    let mut safe = dh.affine.add(&Expr::fixed(prep.h_local.scale(cfg.decay)))?;
    match stage {
        Stage::One => {
            let l = prog.add_decision(DecisionPoly::sos("L", n, deg.l))?;
            let eps = prog.add_scalar("eps1");
            safe = safe.sub(&prog.d(l).mul_poly(&prep.h_local)?)?.sub(&prog.s(eps))?;
            prog.bound_scalar(eps, None, Some(cfg.eps_cap));
            prog.set_objective(Objective::Maximize(eps));
        }
        Stage::Two { l, eps, .. } => {
            safe = safe.sub(&Expr::fixed(l.mul(&prep.h_local)?))?.sub(&Expr::constant(n, *eps))?;
        }
    }
    let negated: Vec<Expr> = dh.squares.iter().filter(|(w, _)| *w < 0.0).map(|(w, e)| e.scale((-w).sqrt())).collect();
    add_with_box(&mut prog, "safe", safe, negated, &prep.boxes, cfg.max_gram)?;

    // unsafe regions: -Δh - sum M_i mu_i ∈ SOS on the box
    if !prep.mu_local.is_empty() {
        let mut unsafe_expr = dh.affine.scale(-1.0);
        match stage {
            Stage::One => {
                for (i, mu) in prep.mu_local.iter().enumerate() {
                    let m = prog.add_decision(DecisionPoly::sos(&format!("M{i}"), n, deg.m))?;
                    unsafe_expr = unsafe_expr.sub(&prog.d(m).mul_poly(mu)?)?;
                }
            }
            Stage::Two { m, .. } => {
                for (mi, mu) in m.iter().zip(&prep.mu_local) {
                    unsafe_expr = unsafe_expr.sub(&Expr::fixed(mi.mul(mu)?))?;
                }
            }
        }
        let negated: Vec<Expr> = dh.squares.iter().filter(|(w, _)| *w > 0.0).map(|(w, e)| e.scale(w.sqrt())).collect();
        add_with_box(&mut prog, "unsafe", unsafe_expr, negated, &prep.boxes, cfg.max_gram)?;
    }

    // lo <= c + a(ξ) <= hi on the box
    if cfg.bound_actions_in_sos {
        for (k, (&id, &c)) in a.iter().zip(&prep.offset).enumerate() {
            let (lo, hi) = cfg.action_bounds[k];
            let upper = Expr::constant(n, hi - c).sub(&prog.d(id))?;
            add_with_box(&mut prog, &format!("upper{k}"), upper, Vec::new(), &prep.boxes, cfg.max_gram)?;
            let lower = prog.d(id).add(&Expr::constant(n, c - lo))?;
            add_with_box(&mut prog, &format!("lower{k}"), lower, Vec::new(), &prep.boxes, cfg.max_gram)?;
        }
    }

    if let Stage::Two { .. } = stage {
        let t = prog.add_scalar("t");
        prog.set_norm_epigraph(t, &a)?;
        prog.set_objective(Objective::Minimize(t));
    }
    Ok(Built { prog, a })
}

fn min_eig(sol: &SosSolution) -> f64 {
    sol.constraint_min_eig.iter().chain(sol.decision_min_eig.values()).copied().fold(f64::INFINITY, f64::min)
}

fn poly_or_zero(sol: &SosSolution, name: &str, nvars: usize) -> Polynomial {
    sol.poly(name).cloned().unwrap_or_else(|| Polynomial::zero(nvars))
}

pub(crate) fn step1_prepared(prep: &Prepared, cfg: &FilterConfig, deg: Degrees) -> Result<Step1Result, CbfError> {
    let n = prep.frame.dim();
    let built = build(prep, cfg, deg, &Stage::One)?;
    let sol = built.prog.solve(&cfg.solver)?;
    let optimal = sol.is_optimal();
    let boxes = (0..prep.boxes.len()).map(|j| poly_or_zero(&sol, &format!("safe_box{j}"), n)).collect();
    Ok(Step1Result {
        frame: prep.frame.clone(),
        degrees: deg,
        status: sol.status,
        eps1: if optimal { sol.scalar("eps1").unwrap_or(f64::NEG_INFINITY) } else { f64::NEG_INFINITY },
        l: poly_or_zero(&sol, "L", n),
        m: (0..prep.mu_local.len()).map(|i| poly_or_zero(&sol, &format!("M{i}"), n)).collect(),
        box_multipliers: boxes,
        a_feas: (0..built.a.len()).map(|k| poly_or_zero(&sol, &format!("a{k}"), n)).collect(),
        certified: sol.certified(),
        min_gram_eig: if optimal { min_eig(&sol) } else { f64::NAN },
    })
}

pub(crate) fn step2_prepared(
    prep: &Prepared,
    cfg: &FilterConfig,
    step1: &Step1Result,
) -> Result<Step2Result, CbfError> {
    let n = prep.frame.dim();
    let eps = cfg.rho * step1.eps1;
    let stage = Stage::Two { l: &step1.l, m: &step1.m, eps };
    let built = build(prep, cfg, step1.degrees, &stage)?;
    let sol = built.prog.solve(&cfg.solver)?;
    let optimal = sol.is_optimal();
    let a_star: Vec<Polynomial> = (0..built.a.len()).map(|k| poly_or_zero(&sol, &format!("a{k}"), n)).collect();
    let coeff_norm = a_star.iter().flat_map(|p| p.terms().map(|(_, c)| c * c)).sum::<f64>().sqrt();
    Ok(Step2Result {
        status: sol.status,
        a_star,
        coeff_norm,
        certified: sol.certified(),
        min_gram_eig: if optimal { min_eig(&sol) } else { f64::NAN },
    })
}

/// Step 1 over the box `domain` (in original coordinates).
pub fn step1_multiplier_search(
    spec: &BarrierSpec,
    dynamics: &PolyDynamics,
    offset: &[f64],
    domain: &[(f64, f64)],
    cfg: &FilterConfig,
) -> Result<Step1Result, CbfError> {
    cfg.validate()?;
    let prep = prepare(spec, dynamics, offset, LocalFrame::from_box(domain))?;
    step1_prepared(&prep, cfg, Degrees::from_config(cfg))
}

/// Step 2 with the multipliers of a successful step 1.
pub fn step2_controller_search(
    spec: &BarrierSpec,
    dynamics: &PolyDynamics,
    offset: &[f64],
    step1: &Step1Result,
    cfg: &FilterConfig,
) -> Result<Step2Result, CbfError> {
    cfg.validate()?;
    let prep = prepare(spec, dynamics, offset, step1.frame.clone())?;
    step2_prepared(&prep, cfg, step1)
}

/// Evaluates correction polynomials (over `ξ`) at a state.
pub fn eval_correction(frame: &LocalFrame, a: &[Polynomial], s: &[f64]) -> Vec<f64> {
    let xi = frame.to_local(s);
    a.iter().map(|p| p.eval_unchecked(&xi)).collect()
}
