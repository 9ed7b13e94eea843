//! Residual checks recomputed from the sparse problem data.
//!
//! Nothing here touches the solver's scaled iterates or factorizations; every
//! quantity is rebuilt from `SdpProblem` and the returned primal-dual point.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::problem::{accumulate, SdpProblem};

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct KktResiduals {
    /// `||A(X) + F x - b|| / (1 + ||b||)`
    pub primal_feas: f64,
    /// `||(A'y + S - C, F'y - f)|| / (1 + ||C|| + ||f||)`
    pub dual_feas: f64,
    /// `|pobj - dobj| / (1 + |pobj| + |dobj|)`
    pub duality_gap: f64,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub min_eig_x: f64,
    pub min_eig_s: f64,
}

impl KktResiduals {
    pub fn within(&self, tol: f64) -> bool {
        self.primal_feas <= tol
            && self.dual_feas <= tol
            && self.duality_gap <= tol
            && self.min_eig_x >= -tol
            && self.min_eig_s >= -tol
    }
}

/// `A(X) + F x` as a dense vector.
pub fn apply_constraints(prob: &SdpProblem, x: &[DMatrix<f64>], x_free: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(
        prob.constraints.len(),
        prob.constraints.iter().map(|c| {
            let psd: f64 = c.psd.iter().map(|(b, e)| e.inner(&x[*b])).sum();
            let free: f64 = c.free.iter().map(|&(k, v)| v * x_free[k]).sum();
            psd + free
        }),
    )
}

/// `sum_i y_i A_ij` for every block, and `F' y`.
pub fn adjoint(prob: &SdpProblem, y: &DVector<f64>) -> (Vec<DMatrix<f64>>, DVector<f64>) {
    let mut blocks: Vec<DMatrix<f64>> = prob.block_dims.iter().map(|&n| DMatrix::zeros(n, n)).collect();
    let mut free = DVector::zeros(prob.free_dim);
    for (i, c) in prob.constraints.iter().enumerate() {
        for (b, e) in &c.psd {
            accumulate(&mut blocks[*b], e, y[i]);
        }
        for &(k, v) in &c.free {
            free[k] += v * y[i];
        }
    }
    (blocks, free)
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    let sym = (m + m.transpose()) * 0.5;
    SymmetricEigen::new(sym).eigenvalues.min()
}

pub fn primal_objective(prob: &SdpProblem, x: &[DMatrix<f64>], x_free: &DVector<f64>) -> f64 {
    let psd: f64 = prob.objective_psd.iter().map(|(b, e)| e.inner(&x[*b])).sum();
    let free: f64 = prob.objective_free.iter().map(|&(k, v)| v * x_free[k]).sum();
    psd + free
}

pub fn residuals(
    prob: &SdpProblem,
    x: &[DMatrix<f64>],
    x_free: &DVector<f64>,
    y: &DVector<f64>,
    s: &[DMatrix<f64>],
) -> KktResiduals {
    let b = prob.rhs();
    let rp = apply_constraints(prob, x, x_free) - &b;

    let (aty, fty) = adjoint(prob, y);
    let mut dual_sq = 0.0;
    let mut c_sq = 0.0;
    for (j, (blk, sj)) in aty.iter().zip(s).enumerate() {
        let cj = prob.objective_block(j);
        c_sq += cj.norm_squared();
        dual_sq += (blk + sj - cj).norm_squared();
    }
    let f = prob.objective_free_vec();
    dual_sq += (fty - &f).norm_squared();

    let pobj = primal_objective(prob, x, x_free);
    let dobj = b.dot(y);

    KktResiduals {
        primal_feas: rp.norm() / (1.0 + b.norm()),
        dual_feas: dual_sq.sqrt() / (1.0 + c_sq.sqrt() + f.norm()),
        duality_gap: (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs()),
        primal_objective: pobj,
        dual_objective: dobj,
        min_eig_x: x.iter().map(min_eigenvalue).fold(f64::INFINITY, f64::min),
        min_eig_s: s.iter().map(min_eigenvalue).fold(f64::INFINITY, f64::min),
    }
}

/// Checks a primal infeasibility ray: `b'y = 1`, `-A'y` PSD, `F'y = 0`.
pub fn check_infeasibility_ray(prob: &SdpProblem, y: &DVector<f64>, tol: f64) -> bool {
    let by = prob.rhs().dot(y);
    if by <= 0.0 {
        return false;
    }
    let (aty, fty) = adjoint(prob, y);
    let scale = 1.0 / by;
    aty.iter().all(|m| min_eigenvalue(&(-m * scale)) >= -tol) && fty.amax() * scale <= tol
}

/// Checks a dual infeasibility ray: `A(X) + F x = 0`, `X` PSD, negative cost.
pub fn check_unboundedness_ray(prob: &SdpProblem, x: &[DMatrix<f64>], x_free: &DVector<f64>, tol: f64) -> bool {
    let cost = primal_objective(prob, x, x_free);
    if cost >= 0.0 {
        return false;
    }
    let scale = -1.0 / cost;
    let ax = apply_constraints(prob, x, x_free) * scale;
    ax.amax() <= tol && x.iter().all(|m| min_eigenvalue(&(m * scale)) >= -tol)
}
