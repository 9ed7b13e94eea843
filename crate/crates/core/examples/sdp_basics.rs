//! Three small semidefinite programs with known answers, solved by the
//! interior-point solver and checked with the independent KKT residuals.

use sosguard::sdp::{kkt, solve, LinearConstraint, SdpProblem, SolverConfig};

fn report(name: &str, p: &SdpProblem) -> Result<(), Box<dyn std::error::Error>> {
    let sol = solve(p, &SolverConfig::default())?;
    let r = kkt::residuals(p, &sol.x, &sol.x_free, &sol.y, &sol.s);
    println!(
        "{name}: {:?} after {} iterations, objective {:.9}, primal {:.1e}, dual {:.1e}, gap {:.1e}",
        sol.status, sol.iterations, r.primal_objective, r.primal_feas, r.dual_feas, r.duality_gap
    );
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // min x  s.t. [[x, 1], [1, x]] PSD  (answer 1)
    let mut p = SdpProblem::new(vec![2], 0);
    let mut c = LinearConstraint::with_rhs(0.0);
    c.add_psd(0, 0, 0, 1.0);
    c.add_psd(0, 1, 1, -1.0);
    p.constraints.push(c);
    let mut c = LinearConstraint::with_rhs(1.0);
    c.add_psd(0, 0, 1, 0.5);
    p.constraints.push(c);
    p.add_objective_psd(0, 0, 0, 1.0);
    report("determinant", &p)?;

    // X11 = -1 with X PSD has no solution
    let mut p = SdpProblem::new(vec![1], 0);
    let mut c = LinearConstraint::with_rhs(-1.0);
    c.add_psd(0, 0, 0, 1.0);
    p.constraints.push(c);
    let sol = solve(&p, &SolverConfig::default())?;
    println!(
        "negative diagonal: {:?}, Farkas ray valid: {}",
        sol.status,
        kkt::check_infeasibility_ray(&p, &sol.y, 1e-6)
    );

    // min trace X  s.t. X11 = 2  (answer 2 at diag(2, 0))
    let mut p = SdpProblem::new(vec![2], 0);
    let mut c = LinearConstraint::with_rhs(2.0);
    c.add_psd(0, 0, 0, 1.0);
    p.constraints.push(c);
    p.add_objective_psd(0, 0, 0, 1.0);
    p.add_objective_psd(0, 1, 1, 1.0);
    report("trace", &p)?;
    Ok(())
}
