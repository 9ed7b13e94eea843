//! Small dense block-diagonal semidefinite programs.
//!
//! [`solve`] runs a homogeneous self-dual interior-point method; every
//! returned point is re-checked by [`kkt`], which only reads the problem data.

pub mod kkt;
mod problem;
mod solver;

pub use kkt::KktResiduals;
pub use problem::{LinearConstraint, SdpProblem, SymEntry};
pub use solver::{solve, SdpSolution, SdpStatus, SolverConfig};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SdpError {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("invalid solver configuration")]
    InvalidConfig,
    #[error("dump parse error: {0}")]
    Parse(String),
}

#[cfg(test)]
mod tests {
    use super::*;

    /// min x  s.t.  [[x, 1], [1, x]] PSD, written with X = [[x, 1], [1, x]].
    fn two_by_two() -> SdpProblem {
        let mut p = SdpProblem::new(vec![2], 0);
        let mut c = LinearConstraint::with_rhs(0.0);
        c.add_psd(0, 0, 0, 1.0);
        c.add_psd(0, 1, 1, -1.0);
        p.constraints.push(c);
        let mut c = LinearConstraint::with_rhs(1.0);
        c.add_psd(0, 0, 1, 0.5);
        p.constraints.push(c);
        p.add_objective_psd(0, 0, 0, 1.0);
        p
    }

    fn trace_problem() -> SdpProblem {
        let mut p = SdpProblem::new(vec![2], 0);
        let mut c = LinearConstraint::with_rhs(2.0);
        c.add_psd(0, 0, 0, 1.0);
        p.constraints.push(c);
        p.add_objective_psd(0, 0, 0, 1.0);
        p.add_objective_psd(0, 1, 1, 1.0);
        p
    }

    #[test]
    fn determinant_example() {
        let sol = solve(&two_by_two(), &SolverConfig::default()).unwrap();
        assert_eq!(sol.status, SdpStatus::Optimal);
        assert!((sol.primal_objective() - 1.0).abs() <= 1e-6, "{}", sol.primal_objective());
        assert!(sol.residuals.within(1e-7));
    }

    #[test]
    fn forced_negative_is_infeasible() {
        let mut p = SdpProblem::new(vec![1], 0);
        let mut c = LinearConstraint::with_rhs(-1.0);
        c.add_psd(0, 0, 0, 1.0);
        p.constraints.push(c);
        let sol = solve(&p, &SolverConfig::default()).unwrap();
        assert_eq!(sol.status, SdpStatus::Infeasible);
        assert!(kkt::check_infeasibility_ray(&p, &sol.y, 1e-6));
    }

    #[test]
    fn trace_example() {
        let sol = solve(&trace_problem(), &SolverConfig::default()).unwrap();
        assert_eq!(sol.status, SdpStatus::Optimal);
        assert!((sol.primal_objective() - 2.0).abs() <= 1e-6);
        let x = &sol.x[0];
        assert!((x[(0, 0)] - 2.0).abs() <= 1e-6);
        assert!(x[(0, 1)].abs() <= 1e-5 && x[(1, 1)].abs() <= 1e-6);
    }

    #[test]
    fn free_variables_enter_newton_system() {
        // min t  s.t.  t - X11 = 0.5, X11 = 1  (t free)  ->  t = 1.5
        let mut p = SdpProblem::new(vec![1], 1);
        let mut c = LinearConstraint::with_rhs(0.5);
        c.add_free(0, 1.0);
        c.add_psd(0, 0, 0, -1.0);
        p.constraints.push(c);
        let mut c = LinearConstraint::with_rhs(1.0);
        c.add_psd(0, 0, 0, 1.0);
        p.constraints.push(c);
        p.add_objective_free(0, 1.0);
        let sol = solve(&p, &SolverConfig::default()).unwrap();
        assert_eq!(sol.status, SdpStatus::Optimal);
        assert!((sol.x_free[0] - 1.5).abs() <= 1e-6);
    }

    #[test]
    fn unbounded_below_is_dual_infeasible() {
        // min x1 - x2 over free x with x1 - x2 + X11 = 0 is bounded; drop the
        // PSD link instead: min -X11 with no constraint tying X11.
        let mut p = SdpProblem::new(vec![2], 0);
        let mut c = LinearConstraint::with_rhs(1.0);
        c.add_psd(0, 1, 1, 1.0);
        p.constraints.push(c);
        p.add_objective_psd(0, 0, 0, -1.0);
        let sol = solve(&p, &SolverConfig::default()).unwrap();
        assert_eq!(sol.status, SdpStatus::DualInfeasible);
    }

    #[test]
    fn repeated_solves_agree() {
        let p = two_by_two();
        let a = solve(&p, &SolverConfig::default()).unwrap();
        let b = solve(&p, &SolverConfig::default()).unwrap();
        assert_eq!(a.status, b.status);
        assert!((a.primal_objective() - b.primal_objective()).abs() <= 1e-9);
    }

    #[test]
    fn bad_config_rejected() {
        let cfg = SolverConfig { tolerance: 0.0, ..SolverConfig::default() };
        assert_eq!(solve(&trace_problem(), &cfg).unwrap_err(), SdpError::InvalidConfig);
    }
}
