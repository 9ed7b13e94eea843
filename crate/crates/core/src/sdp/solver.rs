//! Homogeneous self-dual primal-dual interior-point method.
//!
//! The embedding solves for `(X, x, y, S, tau, kappa)` with
//!
//! ```text
//! A(X) + F x - b tau = 0
//! A'y + S - C tau    = 0
//! F'y - f tau        = 0
//! <C,X> + f'x - b'y + kappa = 0
//! ```
//!
//! using Nesterov-Todd scaling and a Mehrotra predictor-corrector. The free
//! variables stay in the Newton system as the saddle block `[[M, F], [F', 0]]`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::kkt::{self, KktResiduals};
use super::problem::{accumulate, SdpProblem, SymEntry};
use super::SdpError;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverConfig {
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Fraction of the step to the cone boundary that is actually taken.
    pub step_fraction: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { tolerance: 1e-7, max_iterations: 100, step_fraction: 0.98 }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SdpError> {
        if !(self.tolerance > 0.0)
            || self.max_iterations == 0
            || !(self.step_fraction > 0.0 && self.step_fraction < 1.0)
        {
            return Err(SdpError::InvalidConfig);
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SdpStatus {
    Optimal,
    /// Primal infeasible; `y` holds a normalized Farkas ray with `b'y = 1`.
    Infeasible,
    /// Dual infeasible; `x`/`x_free` hold an improving primal ray.
    DualInfeasible,
    NumericalFailure,
}

#[derive(Clone, Debug)]
pub struct SdpSolution {
    pub status: SdpStatus,
    pub x: Vec<DMatrix<f64>>,
    pub x_free: DVector<f64>,
    pub y: DVector<f64>,
    pub s: Vec<DMatrix<f64>>,
    /// Recomputed by [`kkt::residuals`] on the returned point.
    pub residuals: KktResiduals,
    pub iterations: usize,
}

impl SdpSolution {
    pub fn primal_objective(&self) -> f64 {
        self.residuals.primal_objective
    }

    pub fn dual_objective(&self) -> f64 {
        self.residuals.dual_objective
    }
}

/// Iterations without improvement of the scaled residuals before giving up.
const STALL_ITERATIONS: usize = 8;

struct Snapshot {
    x: Vec<DMatrix<f64>>,
    xf: DVector<f64>,
    y: DVector<f64>,
    s: Vec<DMatrix<f64>>,
    tau: f64,
}

struct BlockData {
    n: usize,
    c: DMatrix<f64>,
    /// constraints touching this block with their entries
    cons: Vec<(usize, Vec<SymEntry>)>,
}

struct Scaling {
    r: DMatrix<f64>,
    lambda: DVector<f64>,
}

/// Per-block quantities in the scaled space for one Newton system.
struct ScaledBlock {
    scaling: Scaling,
    c_t: DMatrix<f64>,
    a_t: Vec<(usize, DMatrix<f64>)>,
}

struct Direction {
    dx_t: Vec<DMatrix<f64>>,
    ds_t: Vec<DMatrix<f64>>,
    ds: Vec<DMatrix<f64>>,
    dxf: DVector<f64>,
    dy: DVector<f64>,
    dtau: f64,
    dkappa: f64,
}

pub fn solve(prob: &SdpProblem, cfg: &SolverConfig) -> Result<SdpSolution, SdpError> {
    prob.validate()?;
    cfg.validate()?;
    Solver::new(prob).run(cfg)
}

struct Solver<'a> {
    prob: &'a SdpProblem,
    blocks: Vec<BlockData>,
    f_mat: DMatrix<f64>,
    f_obj: DVector<f64>,
    b: DVector<f64>,
    m: usize,
    nf: usize,
    nu: f64,
}

impl<'a> Solver<'a> {
    fn new(prob: &'a SdpProblem) -> Self {
        let m = prob.constraints.len();
        let nf = prob.free_dim;
        let mut blocks: Vec<BlockData> = prob
            .block_dims
            .iter()
            .enumerate()
            .map(|(j, &n)| BlockData { n, c: prob.objective_block(j), cons: Vec::new() })
            .collect();
        let mut f_mat = DMatrix::zeros(m, nf);
        for (i, con) in prob.constraints.iter().enumerate() {
            for (blk, e) in &con.psd {
                let list = &mut blocks[*blk].cons;
                match list.last_mut() {
                    Some((last, entries)) if *last == i => entries.push(*e),
                    _ => list.push((i, vec![*e])),
                }
            }
            for &(k, v) in &con.free {
                f_mat[(i, k)] += v;
            }
        }
        let nu = prob.block_dims.iter().sum::<usize>() as f64;
        Self { prob, blocks, f_mat, f_obj: prob.objective_free_vec(), b: prob.rhs(), m, nf, nu }
    }

    fn run(&self, cfg: &SolverConfig) -> Result<SdpSolution, SdpError> {
        let mut x: Vec<DMatrix<f64>> = self.blocks.iter().map(|b| DMatrix::identity(b.n, b.n)).collect();
        let mut s = x.clone();
        let mut xf = DVector::zeros(self.nf);
        let mut y = DVector::zeros(self.m);
        let mut tau = 1.0;
        let mut kappa = 1.0;

        let b_norm = self.b.norm();
        let c_norm = self.blocks.iter().map(|b| b.c.norm_squared()).sum::<f64>().sqrt() + self.f_obj.norm();
        let inner_tol = 0.5 * cfg.tolerance;
        // best iterate so far, used when progress stalls near the optimum
        let mut best: Option<(f64, usize, Snapshot)> = None;

        for iter in 0..cfg.max_iterations {
            // residuals of the embedding
            let ax = kkt::apply_constraints(self.prob, &x, &xf);
            let rp = &ax - &self.b * tau;
            let (aty, fty) = kkt::adjoint(self.prob, &y);
            let rd: Vec<DMatrix<f64>> =
                (0..self.blocks.len()).map(|j| &aty[j] + &s[j] - &self.blocks[j].c * tau).collect();
            let rf = &fty - &self.f_obj * tau;
            let cx = self.cost(&x, &xf);
            let by = self.b.dot(&y);
            let rg = cx - by + kappa;
            let xs: f64 = x.iter().zip(&s).map(|(a, b)| a.dot(b)).sum();
            let mu = (xs + tau * kappa) / (self.nu + 1.0);

            if !(mu.is_finite() && tau.is_finite() && kappa.is_finite()) {
                break;
            }

            // convergence
            let rd_norm = (rd.iter().map(|m| m.norm_squared()).sum::<f64>() + rf.norm_squared()).sqrt();
            let pres = rp.norm() / tau / (1.0 + b_norm);
            let dres = rd_norm / tau / (1.0 + c_norm);
            let pobj = cx / tau;
            let dobj = by / tau;
            let gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
            if pres <= inner_tol && dres <= inner_tol && gap <= inner_tol {
                let sol = self.finish(SdpStatus::Optimal, &x, &xf, &y, &s, tau, iter);
                if sol.residuals.within(cfg.tolerance) {
                    return Ok(sol);
                }
            }
            let score = pres.max(dres).max(gap);
            match &best {
                Some((b, at, _)) if score >= *b => {
                    if iter - at >= STALL_ITERATIONS {
                        break;
                    }
                }
                _ => {
                    best =
                        Some((score, iter, Snapshot { x: x.clone(), xf: xf.clone(), y: y.clone(), s: s.clone(), tau }))
                }
            }
            // infeasibility certificates
            let aty_s =
                (aty.iter().zip(&s).map(|(a, b)| (a + b).norm_squared()).sum::<f64>() + fty.norm_squared()).sqrt();
            if by > 0.0 && aty_s / by <= cfg.tolerance * (1.0 + c_norm).max(1.0) && tau / kappa < 1e-2 {
                let sol = self.finish_ray(SdpStatus::Infeasible, &x, &xf, &y, &s, by, iter);
                if kkt::check_infeasibility_ray(self.prob, &sol.y, cfg.tolerance.sqrt()) {
                    return Ok(sol);
                }
            }
            if cx < 0.0 && ax.norm() / (-cx) <= cfg.tolerance * (1.0 + b_norm).max(1.0) && tau / kappa < 1e-2 {
                let sol = self.finish_ray(SdpStatus::DualInfeasible, &x, &xf, &y, &s, -cx, iter);
                if kkt::check_unboundedness_ray(self.prob, &sol.x, &sol.x_free, cfg.tolerance.sqrt()) {
                    return Ok(sol);
                }
            }

            // scaling and Schur complement
            let scaled: Vec<ScaledBlock> = match self.scale_blocks(&x, &s) {
                Some(v) => v,
                None => break,
            };
            let (kmat, g) = self.schur(&scaled);
            let Some(lu) = Factored::new(kmat) else { break };

            let mut rhs_tau = DVector::zeros(self.m + self.nf);
            rhs_tau.rows_mut(0, self.m).copy_from(&(&g + &self.b));
            rhs_tau.rows_mut(self.m, self.nf).copy_from(&self.f_obj);
            let u_tau = lu.solve(&rhs_tau);

            // predictor
            let targets: Vec<DMatrix<f64>> = scaled
                .iter()
                .map(|sb| {
                    let l = &sb.scaling.lambda;
                    DMatrix::from_diagonal(&l.map(|v| -v * v))
                })
                .collect();
            let Some(aff) =
                self.direction(&scaled, &lu, &u_tau, &g, &rp, &rd, &rf, rg, 1.0, &targets, -tau * kappa, tau, kappa)
            else {
                break;
            };
            let alpha_aff = self.max_step(&scaled, &aff, tau, kappa).min(1.0);
            let sigma = (1.0 - alpha_aff).clamp(0.0, 1.0).powi(3);

            // corrector
            let targets: Vec<DMatrix<f64>> = scaled
                .iter()
                .enumerate()
                .map(|(j, sb)| {
                    let l = &sb.scaling.lambda;
                    let prod = &aff.dx_t[j] * &aff.ds_t[j];
                    let sym = (&prod + prod.transpose()) * 0.5;
                    let mut t = -sym;
                    for p in 0..l.len() {
                        t[(p, p)] += sigma * mu - l[p] * l[p];
                    }
                    t
                })
                .collect();
            let r6 = sigma * mu - tau * kappa - aff.dtau * aff.dkappa;
            let Some(dir) =
                self.direction(&scaled, &lu, &u_tau, &g, &rp, &rd, &rf, rg, 1.0 - sigma, &targets, r6, tau, kappa)
            else {
                break;
            };
            let alpha = (cfg.step_fraction * self.max_step(&scaled, &dir, tau, kappa)).min(1.0);

            for j in 0..self.blocks.len() {
                let r = &scaled[j].scaling.r;
                let dx = r * &dir.dx_t[j] * r.transpose();
                x[j] += dx * alpha;
                s[j] += &dir.ds[j] * alpha;
                symmetrize(&mut x[j]);
                symmetrize(&mut s[j]);
            }
            xf += &dir.dxf * alpha;
            y += &dir.dy * alpha;
            tau += alpha * dir.dtau;
            kappa += alpha * dir.dkappa;

            // rescale to keep the homogeneous iterate bounded
            let size = tau + kappa;
            if size > 1e8 || size < 1e-8 {
                let k = 1.0 / size;
                for j in 0..x.len() {
                    x[j] *= k;
                    s[j] *= k;
                }
                xf *= k;
                y *= k;
                tau *= k;
                kappa *= k;
            }
        }
        if let Some((_, at, b)) = best {
            let sol = self.finish(SdpStatus::Optimal, &b.x, &b.xf, &b.y, &b.s, b.tau, at);
            if sol.residuals.within(cfg.tolerance) {
                return Ok(sol);
            }
            return Ok(SdpSolution { status: SdpStatus::NumericalFailure, ..sol });
        }
        Ok(self.finish(SdpStatus::NumericalFailure, &x, &xf, &y, &s, tau.max(f64::MIN_POSITIVE), cfg.max_iterations))
    }

    fn cost(&self, x: &[DMatrix<f64>], xf: &DVector<f64>) -> f64 {
        self.blocks.iter().zip(x).map(|(b, xj)| b.c.dot(xj)).sum::<f64>() + self.f_obj.dot(xf)
    }

    fn finish(
        &self,
        status: SdpStatus,
        x: &[DMatrix<f64>],
        xf: &DVector<f64>,
        y: &DVector<f64>,
        s: &[DMatrix<f64>],
        tau: f64,
        iterations: usize,
    ) -> SdpSolution {
        let x: Vec<DMatrix<f64>> = x.iter().map(|m| m / tau).collect();
        let s: Vec<DMatrix<f64>> = s.iter().map(|m| m / tau).collect();
        let x_free = xf / tau;
        let y = y / tau;
        let residuals = kkt::residuals(self.prob, &x, &x_free, &y, &s);
        SdpSolution { status, x, x_free, y, s, residuals, iterations }
    }

    #[allow(clippy::too_many_arguments)]
    fn finish_ray(
        &self,
        status: SdpStatus,
        x: &[DMatrix<f64>],
        xf: &DVector<f64>,
        y: &DVector<f64>,
        s: &[DMatrix<f64>],
        norm: f64,
        iterations: usize,
    ) -> SdpSolution {
        let mut sol = self.finish(status, x, xf, y, s, norm, iterations);
        if status == SdpStatus::Infeasible {
            let (aty, _) = kkt::adjoint(self.prob, &sol.y);
            sol.s = aty.into_iter().map(|m| -m).collect();
        }
        sol
    }

    fn scale_blocks(&self, x: &[DMatrix<f64>], s: &[DMatrix<f64>]) -> Option<Vec<ScaledBlock>> {
        self.blocks
            .iter()
            .enumerate()
            .map(|(j, blk)| {
                let scaling = nt_scaling(&x[j], &s[j])?;
                let r = &scaling.r;
                let rt = r.transpose();
                let c_t = &rt * &blk.c * r;
                let a_t = blk
                    .cons
                    .iter()
                    .map(|(i, entries)| {
                        let mut at = DMatrix::zeros(blk.n, blk.n);
                        for e in entries {
                            let ri = r.row(e.row);
                            let rc = r.row(e.col);
                            if e.row == e.col {
                                at += ri.transpose() * ri * e.value;
                            } else {
                                let outer = ri.transpose() * rc * e.value;
                                at += &outer + outer.transpose();
                            }
                        }
                        (*i, at)
                    })
                    .collect();
                Some(ScaledBlock { scaling, c_t, a_t })
            })
            .collect()
    }

    fn schur(&self, scaled: &[ScaledBlock]) -> (DMatrix<f64>, DVector<f64>) {
        let dim = self.m + self.nf;
        let mut k = DMatrix::zeros(dim, dim);
        let mut g = DVector::zeros(self.m);
        for sb in scaled {
            for (p, (i, ai)) in sb.a_t.iter().enumerate() {
                g[*i] += ai.dot(&sb.c_t);
                for (j, aj) in sb.a_t.iter().skip(p) {
                    let v = ai.dot(aj);
                    k[(*i, *j)] += v;
                    if i != j {
                        k[(*j, *i)] += v;
                    }
                }
            }
        }
        for i in 0..self.m {
            for kf in 0..self.nf {
                let v = self.f_mat[(i, kf)];
                k[(i, self.m + kf)] = v;
                k[(self.m + kf, i)] = v;
            }
        }
        (k, g)
    }

    /// Solves the Newton system for residual weight `eta` and scaled
    /// complementarity targets `targets` (the right-hand side `T` of
    /// `Lambda o (dX~ + dS~) = T`).
    #[allow(clippy::too_many_arguments)]
    fn direction(
        &self,
        scaled: &[ScaledBlock],
        lu: &Factored,
        u_tau: &DVector<f64>,
        g: &DVector<f64>,
        rp: &DVector<f64>,
        rd: &[DMatrix<f64>],
        rf: &DVector<f64>,
        rg: f64,
        eta: f64,
        targets: &[DMatrix<f64>],
        r6: f64,
        tau: f64,
        kappa: f64,
    ) -> Option<Direction> {
        let nb = self.blocks.len();
        let mut d: Vec<DMatrix<f64>> = Vec::with_capacity(nb);
        let mut r2_t: Vec<DMatrix<f64>> = Vec::with_capacity(nb);
        let mut rhs = DVector::zeros(self.m + self.nf);
        // r1 = -eta rp
        rhs.rows_mut(0, self.m).copy_from(&(rp * (-eta)));
        rhs.rows_mut(self.m, self.nf).copy_from(&(rf * (-eta)));
        let mut c_dot_dr = 0.0;
        for (j, sb) in scaled.iter().enumerate() {
            let l = &sb.scaling.lambda;
            let n = l.len();
            let mut dj = DMatrix::zeros(n, n);
            for p in 0..n {
                for q in 0..n {
                    dj[(p, q)] = 2.0 * targets[j][(p, q)] / (l[p] + l[q]);
                }
            }
            let r = &sb.scaling.r;
            let r2t = r.transpose() * (&rd[j] * (-eta)) * r;
            let diff = &dj - &r2t;
            for (i, ai) in &sb.a_t {
                rhs[*i] -= ai.dot(&diff);
            }
            c_dot_dr += sb.c_t.dot(&diff);
            d.push(dj);
            r2_t.push(r2t);
        }
        let u_const = lu.solve(&rhs);

        let r4 = -eta * rg;
        let gm_b = g - &self.b;
        let u1 = u_const.rows(0, self.m);
        let v1 = u_const.rows(self.m, self.nf);
        let u2 = u_tau.rows(0, self.m);
        let v2 = u_tau.rows(self.m, self.nf);
        let c_t_sq: f64 = scaled.iter().map(|sb| sb.c_t.norm_squared()).sum();
        let coef = gm_b.dot(&u2) - c_t_sq + self.f_obj.dot(&v2) - kappa / tau;
        let rhs_tau = r4 - c_dot_dr - gm_b.dot(&u1) - self.f_obj.dot(&v1) - r6 / tau;
        if !(coef.is_finite() && coef.abs() > 0.0) {
            return None;
        }
        let dtau = rhs_tau / coef;
        let dy: DVector<f64> = &u1 + &u2 * dtau;
        let dxf: DVector<f64> = &v1 + &v2 * dtau;
        let dkappa = (r6 - kappa * dtau) / tau;

        let mut dx_t = Vec::with_capacity(nb);
        let mut ds_t = Vec::with_capacity(nb);
        let mut ds = Vec::with_capacity(nb);
        for (j, sb) in scaled.iter().enumerate() {
            let mut dst = &r2_t[j] + &sb.c_t * dtau;
            for (i, ai) in &sb.a_t {
                dst -= ai * dy[*i];
            }
            let dxt = &d[j] - &dst;
            // dS in the original space: -eta rd - A'dy + C dtau
            let mut dsj = &rd[j] * (-eta) + &self.blocks[j].c * dtau;
            for (i, entries) in &self.blocks[j].cons {
                for e in entries {
                    accumulate(&mut dsj, e, -dy[*i]);
                }
            }
            dx_t.push(dxt);
            ds_t.push(dst);
            ds.push(dsj);
        }
        if !dtau.is_finite() || dy.iter().any(|v| !v.is_finite()) {
            return None;
        }
        Some(Direction { dx_t, ds_t, ds, dxf, dy, dtau, dkappa })
    }

    fn max_step(&self, scaled: &[ScaledBlock], dir: &Direction, tau: f64, kappa: f64) -> f64 {
        let mut alpha = f64::INFINITY;
        for (j, sb) in scaled.iter().enumerate() {
            let inv_sqrt = sb.scaling.lambda.map(|v| 1.0 / v.sqrt());
            for dm in [&dir.dx_t[j], &dir.ds_t[j]] {
                let mut p = dm.clone();
                for r in 0..p.nrows() {
                    for c in 0..p.ncols() {
                        p[(r, c)] *= inv_sqrt[r] * inv_sqrt[c];
                    }
                }
                symmetrize(&mut p);
                let lo = SymmetricEigen::new(p).eigenvalues.min();
                if lo < 0.0 {
                    alpha = alpha.min(-1.0 / lo);
                }
            }
        }
        if dir.dtau < 0.0 {
            alpha = alpha.min(-tau / dir.dtau);
        }
        if dir.dkappa < 0.0 {
            alpha = alpha.min(-kappa / dir.dkappa);
        }
        alpha
    }
}

/// Nesterov-Todd scaling `R` with `R' S R = R^{-1} X R^{-T} = diag(lambda)`.
fn nt_scaling(x: &DMatrix<f64>, s: &DMatrix<f64>) -> Option<Scaling> {
    let lx = x.clone().cholesky()?.l();
    let ls = s.clone().cholesky()?.l();
    let svd = (ls.transpose() * &lx).svd(false, true);
    let v_t = svd.v_t?;
    let lambda = svd.singular_values;
    if lambda.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
        return None;
    }
    let mut r = lx * v_t.transpose();
    for (c, l) in lambda.iter().enumerate() {
        let k = 1.0 / l.sqrt();
        r.column_mut(c).scale_mut(k);
    }
    Some(Scaling { r, lambda })
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// LU factorization of a lightly regularized saddle matrix, with iterative
/// refinement against the unregularized one.
struct Factored {
    k: DMatrix<f64>,
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl Factored {
    fn new(k: DMatrix<f64>) -> Option<Self> {
        let n = k.nrows();
        let scale = (0..n).map(|i| k[(i, i)].abs()).fold(1.0, f64::max);
        let mut reg = k.clone();
        for i in 0..n {
            // positive on the Schur block, negative on the free block
            let sign = if k[(i, i)] > 0.0 { 1.0 } else { -1.0 };
            reg[(i, i)] += sign * 1e-13 * scale;
        }
        let lu = reg.lu();
        if n > 0 && !lu.is_invertible() {
            return None;
        }
        Some(Self { k, lu })
    }

    fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        if rhs.is_empty() {
            return rhs.clone();
        }
        let mut x = self.lu.solve(rhs).unwrap_or_else(|| DVector::zeros(rhs.len()));
        for _ in 0..3 {
            let r = rhs - &self.k * &x;
            if let Some(dx) = self.lu.solve(&r) {
                x += dx;
            }
        }
        x
    }
}
