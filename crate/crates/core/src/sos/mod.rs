//! Sum-of-squares programs compiled to semidefinite programs.
//!
//! A program collects decision polynomials (free or SOS), scalar decision
//! variables and constraints of the form `expr - sum w_j^2 ∈ SOS`, where all
//! of `expr` and `w_j` are affine in the decision variables. [`compile`]
//! lowers it to an [`SdpProblem`](crate::sdp::SdpProblem) with one Gram block
//! per constraint and per SOS decision polynomial.

mod expr;
mod program;

pub use expr::{DecisionId, Expr, ScalarId};
pub use program::{
    absorbs_mismatch, compile, gram_basis, recover, CompiledSos, DecisionKind, DecisionPoly, GramBasis, Objective,
    Parity, SosConstraint, SosProgram, SosSolution, EIG_TOL, MATCH_TOL,
};

use nalgebra::DMatrix;
use thiserror::Error;

use crate::poly::{PolyError, Polynomial};
use crate::sdp::{SdpError, SdpStatus, SolverConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SosError {
    #[error("variable count mismatch: {0} vs {1}")]
    VarCountMismatch(usize, usize),
    #[error("product of two decision expressions is not affine")]
    NotAffine,
    #[error("constraint `{constraint}` has odd degree {degree}")]
    OddDegree { constraint: String, degree: u32 },
    #[error("program has no constraints")]
    EmptyProgram,
    #[error("invalid decision polynomial `{0}`")]
    InvalidDecision(String),
    #[error("constraint `{0}` references an unknown variable")]
    UnknownVariable(String),
    #[error("solver did not reach an optimal point: {0:?}")]
    NotOptimal(SdpStatus),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Sdp(#[from] SdpError),
}

/// Outcome of [`verify_sos`].
#[derive(Clone, Debug)]
pub enum SosVerdict {
    Certificate {
        basis: GramBasis,
        gram: DMatrix<f64>,
        /// Largest coefficient difference between `p` and `z' Q z`.
        mismatch: f64,
        min_eig: f64,
    },
    Infeasible,
}

impl SosVerdict {
    pub fn is_certificate(&self) -> bool {
        matches!(self, SosVerdict::Certificate { .. })
    }
}

/// Searches for a Gram certificate of `p ∈ SOS`.
///
/// A certificate is only returned if it reconstructs `p` to [`MATCH_TOL`]
/// with Gram eigenvalues above `-EIG_TOL`; a solver breakdown is an error,
/// distinct from a proof of infeasibility.
pub fn verify_sos(p: &Polynomial, cfg: &SolverConfig) -> Result<SosVerdict, SosError> {
    let mut prog = SosProgram::new(p.nvars());
    prog.add_constraint(SosConstraint::new("p", Expr::fixed(p.clone())))?;
    let sol = prog.solve(cfg)?;
    match sol.status {
        SdpStatus::Optimal => {
            let (basis, gram) = sol.constraint_grams[0].clone();
            let mismatch = sol.constraint_mismatch[0];
            let min_eig = sol.constraint_min_eig[0];
            if mismatch <= MATCH_TOL && min_eig >= -EIG_TOL {
                Ok(SosVerdict::Certificate { basis, gram, mismatch, min_eig })
            } else {
                Err(SosError::NotOptimal(SdpStatus::NumericalFailure))
            }
        }
        SdpStatus::Infeasible => Ok(SosVerdict::Infeasible),
        other => Err(SosError::NotOptimal(other)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sdp::SdpStatus;

    fn cfg() -> SolverConfig {
        SolverConfig::default()
    }

    #[test]
    fn basis_sizes() {
        assert_eq!(gram_basis(2, 1).len(), 2);
        assert_eq!(gram_basis(4, 2).len(), 6);
        assert_eq!(gram_basis(6, 2).len(), 10);
        let names: Vec<String> = gram_basis(4, 2).monomials.iter().map(|m| m.to_string()).collect();
        assert_eq!(names, ["1", "x0^1", "x1^1", "x0^2", "x0^1 x1^1", "x1^2"]);
    }

    #[test]
    fn square_is_certified() {
        let p = Polynomial::parse("1 ; -2 * x0^1 ; 1 * x0^2", 1).unwrap();
        let mut prog = SosProgram::new(1);
        prog.add_constraint(SosConstraint::new("p", Expr::fixed(p.clone()))).unwrap();
        let c = compile(&prog).unwrap();
        assert_eq!(c.problem.block_dims, vec![2]);
        assert_eq!(c.problem.rhs().as_slice(), &[1.0, -2.0, 1.0]);

        match verify_sos(&p, &cfg()).unwrap() {
            SosVerdict::Certificate { basis, gram, mismatch, .. } => {
                assert!(mismatch <= 1e-6);
                assert!(basis.quadratic_form(&gram).max_coeff_diff(&p) <= 1e-6);
            }
            SosVerdict::Infeasible => panic!("(x-1)^2 rejected"),
        }
    }

    #[test]
    fn negative_constant_is_infeasible() {
        let p = Polynomial::constant(1, -1.0);
        assert!(matches!(verify_sos(&p, &cfg()).unwrap(), SosVerdict::Infeasible));
    }

    #[test]
    fn motzkin_is_not_sos() {
        let p = Polynomial::parse("1 ; -3 * x0^2 x1^2 ; 1 * x0^4 x1^2 ; 1 * x0^2 x1^4", 2).unwrap();
        assert!(matches!(verify_sos(&p, &cfg()).unwrap(), SosVerdict::Infeasible));
    }

    #[test]
    fn epsilon_maximization() {
        let mut prog = SosProgram::new(1);
        let eps = prog.add_scalar("eps");
        let e = Expr::constant(1, 1.0).sub(&prog.s(eps)).unwrap();
        prog.add_constraint(SosConstraint::new("c", e)).unwrap();
        prog.set_objective(Objective::Maximize(eps));
        let sol = prog.solve(&cfg()).unwrap();
        assert!(sol.certified());
        assert!((sol.scalar("eps").unwrap() - 1.0).abs() <= 1e-6);
    }

    #[test]
    fn degree_four_two_vars_has_fifteen_equalities() {
        let p = Polynomial::parse("1 ; 1 * x0^4 ; 1 * x1^4", 2).unwrap();
        let mut prog = SosProgram::new(2);
        prog.add_constraint(SosConstraint::new("p", Expr::fixed(p))).unwrap();
        assert_eq!(compile(&prog).unwrap().problem.num_constraints(), 15);
    }

    #[test]
    fn odd_degree_rejected() {
        let p = Polynomial::var(1, 0).pow(3);
        let mut prog = SosProgram::new(1);
        prog.add_constraint(SosConstraint::new("p", Expr::fixed(p))).unwrap();
        assert!(matches!(compile(&prog), Err(SosError::OddDegree { degree: 3, .. })));
    }

    #[test]
    fn empty_program_rejected() {
        assert_eq!(compile(&SosProgram::new(1)).unwrap_err(), SosError::EmptyProgram);
    }

    #[test]
    fn sos_multiplier_on_interval() {
        // 1 - x^2 >= 0 on [-2, 2]? No. On the set 1 - x^2 >= 0 it holds, via
        // 1 - x^2 - lambda*(1 - x^2) with lambda = 1.
        let g = Polynomial::parse("1 ; -1 * x0^2", 1).unwrap();
        let mut prog = SosProgram::new(1);
        let l = prog.add_decision(DecisionPoly::sos("l", 1, 0)).unwrap();
        let e = Expr::fixed(g.clone()).sub(&prog.d(l).mul_poly(&g).unwrap()).unwrap();
        prog.add_constraint(SosConstraint::new("c", e)).unwrap();
        let sol = prog.solve(&cfg()).unwrap();
        assert!(sol.certified(), "{:?}", sol.status);
        assert!(sol.decision_min_eig["l"] >= -1e-7);
    }

    #[test]
    fn negated_square_block() {
        // 2 - x^2 - (x)^2 = 2 - 2x^2 is not SOS; 2 + x^2 - x^2 = 2 is.
        let mut prog = SosProgram::new(1);
        let x = Polynomial::var(1, 0);
        let e = Expr::fixed(x.pow(2).add_constant(2.0));
        prog.add_constraint(SosConstraint::new("ok", e).minus_square(Expr::fixed(x.clone()))).unwrap();
        let sol = prog.solve(&cfg()).unwrap();
        assert!(sol.certified());

        let mut prog = SosProgram::new(1);
        let e = Expr::fixed(Polynomial::constant(1, 2.0));
        prog.add_constraint(SosConstraint::new("bad", e).minus_square(Expr::fixed(x))).unwrap();
        let sol = prog.solve(&cfg()).unwrap();
        assert_eq!(sol.status, SdpStatus::Infeasible);
    }

    #[test]
    fn norm_epigraph_minimizes_coefficients() {
        // (c0 - 1) + (c1 - 1) x + (c2 - 1) x^2 SOS needs c0, c2 >= 1 and
        // (c1 - 1)^2 <= 4 (c0 - 1)(c2 - 1); the smallest ||c|| is sqrt(3) at c = 1.
        let mut prog = SosProgram::new(1);
        let c = prog.add_decision(DecisionPoly::free("c", 1, 2)).unwrap();
        let t = prog.add_scalar("t");
        let target = Polynomial::parse("1 ; 1 * x0^1 ; 1 * x0^2", 1).unwrap();
        let e = prog.d(c).sub(&Expr::fixed(target.clone())).unwrap();
        prog.add_constraint(SosConstraint::new("c", e)).unwrap();
        prog.set_norm_epigraph(t, &[c]).unwrap();
        prog.set_objective(Objective::Minimize(t));
        let sol = prog.solve(&cfg()).unwrap();
        assert!(sol.certified());
        assert!((sol.scalar("t").unwrap() - 3f64.sqrt()).abs() <= 1e-6);
        assert!(sol.poly("c").unwrap().max_coeff_diff(&target) <= 1e-3);
    }

    #[test]
    fn parity_hints_restrict_slots() {
        let d = DecisionPoly::free("a", 2, 3).with_parity(0, Parity::Odd);
        assert!(d.slots().iter().all(|m| m.exponents()[0] % 2 == 1));
        assert_eq!(d.slots().len(), 4);
    }

    #[test]
    fn compile_is_deterministic() {
        let p = Polynomial::parse("1 ; 1 * x0^4 ; -1 * x0^1 x1^1 ; 1 * x1^4", 2).unwrap();
        let build = || {
            let mut prog = SosProgram::new(2);
            let l = prog.add_decision(DecisionPoly::sos("l", 2, 2)).unwrap();
            let e = Expr::fixed(p.clone()).sub(&prog.d(l)).unwrap();
            prog.add_constraint(SosConstraint::new("c", e)).unwrap();
            compile(&prog).unwrap().problem
        };
        assert_eq!(build().to_dump(), build().to_dump());
    }

    #[test]
    fn mismatch_absorbed_only_with_margin() {
        use nalgebra::DMatrix;
        let basis = gram_basis(2, 1);
        let parse = |s: &str| Polynomial::parse(s, 1).unwrap();
        let eye = DMatrix::identity(2, 2);
        assert!(absorbs_mismatch(&basis, &eye, &parse("1 ; 1e-3 * x0^1 ; 1 * x0^2"), &[]));
        // x^2 + 1e-3 x dips below zero; a singular Gram cannot absorb the error
        let singular = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.0, 1.0]));
        assert!(!absorbs_mismatch(&basis, &singular, &parse("1e-3 * x0^1 ; 1 * x0^2"), &[]));
        let w = parse("0.5 * x0^1");
        assert!(absorbs_mismatch(&basis, &eye, &parse("1 ; 1 * x0^2"), std::slice::from_ref(&w)));
        assert!(!absorbs_mismatch(&basis, &eye, &parse("1 ; 1 * x0^2"), &[parse("1.1 * x0^1")]));
        assert!(!absorbs_mismatch(&basis, &eye, &parse("1 ; 1 * x0^2"), &[parse("0.1 * x0^3")]));
        assert!(!absorbs_mismatch(&basis, &eye, &parse("1 ; 1 * x0^2 ; 1e-9 * x0^3"), &[]));
    }
}
