//! Control barrier filters.
//!
//! [`SosFilter`] synthesizes a polynomial correction `a*(s)` by a two-step
//! SOS search over a box of states around the current one, then applies
//! `clamp(c + a*(s))` where `c` is the RL action plus the prior controller.
//! [`qp_filter_action`] is the linearized one-step QP baseline.

mod delta;
mod filter;
mod qp;
mod synth;

pub use delta::{delta_h_constant, delta_h_symbolic, LocalFrame, SymbolicDeltaH};
pub use filter::{filter_action, FilterCache, SosFilter};
pub use qp::{qp_filter_action, QpConfig};
pub use synth::{step1_multiplier_search, step2_controller_search, Degrees, Step1Result, Step2Result};

use thiserror::Error;

use crate::poly::{PolyError, Polynomial};
use crate::sdp::SolverConfig;
use crate::sos::SosError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CbfError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("symbolic actions need a barrier of degree at most 2, got {0}")]
    BarrierDegree(u32),
    #[error("constraint `{constraint}` needs a {required}x{required} Gram block, limit is {limit}")]
    DegreeOverflow { constraint: String, required: usize, limit: usize },
    #[error("safe set and unsafe region {0} overlap")]
    Overlap(usize),
    #[error("invalid filter configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Sos(#[from] SosError),
}

/// Safe set `{h >= 0}`, unsafe regions `{mu_i >= 0}` and the box of states
/// the certificates range over.
#[derive(Clone, Debug, PartialEq)]
pub struct BarrierSpec {
    pub h: Polynomial,
    pub unsafe_regions: Vec<Polynomial>,
    pub state_domain: Vec<(f64, f64)>,
}

/// Points per axis of the grid used to check that safe and unsafe sets are
/// disjoint.
pub const OVERLAP_GRID: usize = 101;

impl BarrierSpec {
    pub fn new(
        h: Polynomial,
        unsafe_regions: Vec<Polynomial>,
        state_domain: Vec<(f64, f64)>,
    ) -> Result<Self, CbfError> {
        let n = h.nvars();
        if state_domain.len() != n || unsafe_regions.iter().any(|m| m.nvars() != n) {
            return Err(CbfError::Dimension("barrier, unsafe regions and domain disagree".into()));
        }
        if state_domain.iter().any(|(lo, hi)| !(hi > lo)) {
            return Err(CbfError::InvalidConfig("empty state domain".into()));
        }
        let spec = Self { h, unsafe_regions, state_domain };
        spec.check_disjoint()?;
        Ok(spec)
    }

    fn check_disjoint(&self) -> Result<(), CbfError> {
        let n = self.state_domain.len();
        let per_axis = if n <= 2 { OVERLAP_GRID } else { 22 };
        let total = per_axis.pow(n as u32);
        let mut point = vec![0.0; n];
        for idx in 0..total {
            let mut rest = idx;
            for (i, &(lo, hi)) in self.state_domain.iter().enumerate() {
                let k = rest % per_axis;
                rest /= per_axis;
                point[i] = lo + (hi - lo) * k as f64 / (per_axis - 1) as f64;
            }
            if self.h.evaluate(&point)? > 1e-9 {
                for (r, mu) in self.unsafe_regions.iter().enumerate() {
                    if mu.evaluate(&point)? > 1e-9 {
                        return Err(CbfError::Overlap(r));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn is_safe(&self, s: &[f64]) -> Result<bool, CbfError> {
        Ok(self.h.evaluate(s)? >= 0.0)
    }

    pub fn in_domain(&self, s: &[f64]) -> bool {
        s.iter().zip(&self.state_domain).all(|(v, (lo, hi))| v >= lo && v <= hi)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FilterConfig {
    /// Degree of the correction polynomial `a*(s)`.
    pub deg_a: u32,
    /// Degree of the SOS multiplier on `h`.
    pub deg_l: u32,
    /// Degree of the SOS multipliers on the unsafe regions.
    pub deg_m: u32,
    /// Step 2 keeps `rho * eps1*` of step 1's margin.
    pub rho: f64,
    /// Decay rate `gamma` in `Δh + gamma h - L h - eps ∈ SOS`. Zero gives the
    /// plain `Δh - L h - eps` condition.
    pub decay: f64,
    pub action_bounds: Vec<(f64, f64)>,
    /// Also require `lo <= c + a*(s) <= hi` over the box inside the SOS
    /// program, not only after the solve.
    pub bound_actions_in_sos: bool,
    pub solver: SolverConfig,
    /// Steps between re-solves; cached solutions are reused in between.
    pub resolve_every: usize,
    /// Half-widths of the box around the current state that certificates
    /// range over. `None` uses the whole state domain.
    pub local_radius: Option<Vec<f64>>,
    /// Upper bound on `eps1` so step 1 stays bounded.
    pub eps_cap: f64,
    /// Largest Gram block the filter will build.
    pub max_gram: usize,
    /// Added to every multiplier degree on the single escalation attempt.
    pub escalation: u32,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            deg_a: 2,
            deg_l: 2,
            deg_m: 2,
            rho: 0.1,
            decay: 0.02,
            action_bounds: vec![(-15.0, 15.0)],
            bound_actions_in_sos: true,
            solver: SolverConfig { tolerance: 1e-6, ..SolverConfig::default() },
            resolve_every: 1,
            local_radius: Some(vec![0.1, 0.5]),
            eps_cap: 10.0,
            max_gram: 40,
            escalation: 2,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<(), CbfError> {
        let bad = |m: &str| Err(CbfError::InvalidConfig(m.into()));
        if !(0.0..1.0).contains(&self.rho) {
            return bad("rho must lie in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.decay) {
            return bad("decay must lie in [0, 1]");
        }
        if self.action_bounds.iter().any(|(lo, hi)| !(hi >= lo)) {
            return bad("action bounds must satisfy lo <= hi");
        }
        if self.resolve_every == 0 {
            return bad("resolve_every must be at least 1");
        }
        if let Some(r) = &self.local_radius {
            if r.iter().any(|v| !(*v > 0.0)) {
                return bad("local radius must be positive");
            }
        }
        if !(self.eps_cap > 0.0) {
            return bad("eps_cap must be positive");
        }
        self.solver.validate().map_err(|_| CbfError::InvalidConfig("solver".into()))
    }

    pub fn clamp(&self, u: &[f64]) -> Vec<f64> {
        u.iter().zip(&self.action_bounds).map(|(v, (lo, hi))| v.clamp(*lo, *hi)).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FilterStatus {
    SosOk,
    FallbackSaturate,
    Infeasible,
}

impl FilterStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            FilterStatus::SosOk => "sos_ok",
            FilterStatus::FallbackSaturate => "fallback_saturate",
            FilterStatus::Infeasible => "infeasible",
        }
    }
}

impl std::fmt::Display for FilterStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FilterResult {
    /// `total_action - (a_rl + a_prior)`.
    pub a_cbf: Vec<f64>,
    pub total_action: Vec<f64>,
    pub status: FilterStatus,
    pub reason: Option<String>,
    pub eps1: Option<f64>,
    pub min_gram_eig: Option<f64>,
    pub solve_time_s: f64,
    /// The correction came from a cached synthesis.
    pub cached: bool,
}

impl FilterResult {
    pub(crate) fn passthrough(offset: &[f64], cfg_bounds: &[(f64, f64)], status: FilterStatus, reason: String) -> Self {
        let total: Vec<f64> = offset.iter().zip(cfg_bounds).map(|(v, (lo, hi))| v.clamp(*lo, *hi)).collect();
        Self {
            a_cbf: total.iter().zip(offset).map(|(t, c)| t - c).collect(),
            total_action: total,
            status,
            reason: Some(reason),
            eps1: None,
            min_gram_eig: None,
            solve_time_s: 0.0,
            cached: false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::{PolyDynamics, Polynomial};
    use crate::sdp::SdpStatus;
    use crate::sos::{verify_sos, SosVerdict};

    fn one_var_h() -> Polynomial {
        Polynomial::parse("1 ; -1 * x0^2", 1).unwrap()
    }

    /// s⁺ = k s + a
    fn scalar_dyn(k: f64) -> PolyDynamics {
        PolyDynamics::new(vec![Polynomial::var(1, 0).scale(k)], vec![vec![Polynomial::constant(1, 1.0)]]).unwrap()
    }

    fn whole_domain_cfg() -> FilterConfig {
        FilterConfig { local_radius: None, action_bounds: vec![(-15.0, 15.0)], ..FilterConfig::default() }
    }

    fn spec_1d(h: Polynomial) -> BarrierSpec {
        BarrierSpec::new(h, vec![], vec![(-1.0, 1.0)]).unwrap()
    }

    #[test]
    fn identity_dynamics_give_zero_delta() {
        let h = Polynomial::parse("1 ; -1 * x0^2 ; -0.5 * x1^2 ; 1 * x0^1 x1^1", 2).unwrap();
        let d = PolyDynamics::new(
            vec![Polynomial::var(2, 0), Polynomial::var(2, 1)],
            vec![vec![Polynomial::zero(2)], vec![Polynomial::zero(2)]],
        )
        .unwrap();
        assert!(delta_h_constant(&h, &d, &[3.0]).unwrap().is_zero());
    }

    #[test]
    fn delta_matches_hand_expansion() {
        // Δh = -2 s a - a^2 for h = 1 - s^2, s⁺ = s + a
        let d = scalar_dyn(1.0);
        let a = 0.7;
        let got = delta_h_constant(&one_var_h(), &d, &[a]).unwrap();
        let want = Polynomial::parse("-0.49 ; -1.4 * x0^1", 1).unwrap();
        assert!(got.max_coeff_diff(&want) <= 1e-14);
    }

    #[test]
    fn constant_shift_is_substitution() {
        let h = Polynomial::parse("1 ; -1 * x0^2 ; 0.3 * x0^1 x1^1", 2).unwrap();
        let d = PolyDynamics::new(
            vec![Polynomial::var(2, 0), Polynomial::var(2, 1)],
            vec![vec![Polynomial::zero(2)], vec![Polynomial::zero(2)]],
        )
        .unwrap()
        .with_residual(vec![Polynomial::constant(2, 0.2), Polynomial::constant(2, -0.1)])
        .unwrap();
        let got = delta_h_constant(&h, &d, &[0.0]).unwrap();
        for &(x, y) in &[(0.0, 0.0), (0.5, -0.3), (-1.0, 2.0)] {
            let want = h.evaluate(&[x + 0.2, y - 0.1]).unwrap() - h.evaluate(&[x, y]).unwrap();
            assert!((got.evaluate(&[x, y]).unwrap() - want).abs() <= 1e-12);
        }
    }

    #[test]
    fn symbolic_delta_agrees_with_constant() {
        let h = Polynomial::parse("1 ; -1 * x0^2 ; -0.1 * x1^2", 2).unwrap();
        let d = crate::pendulum::pendulum_dynamics(
            &crate::pendulum::PendulumParams::default(),
            &Polynomial::parse("1 * x0^1 ; -0.16 * x0^3", 1).unwrap(),
        )
        .unwrap();
        let frame = LocalFrame::from_box(&[(-0.5, 0.7), (-2.0, 1.0)]);
        let mut prog = crate::sos::SosProgram::new(2);
        let id = prog.add_decision(crate::sos::DecisionPoly::free("a", 2, 0)).unwrap();
        let sym =
            delta_h_symbolic(&h, &frame.pull_back(&h).unwrap(), &frame.pull_back_dynamics(&d).unwrap(), &[id], &[1.5])
                .unwrap();
        let konst = delta_h_constant(&h, &d, &[1.5 - 0.4]).unwrap();
        for &(x, y) in &[(0.1, 0.2), (-0.5, -2.0), (0.7, 1.0)] {
            let xi = frame.to_local(&[x, y]);
            let v = sym.evaluate(&xi, |_| Polynomial::constant(2, -0.4)).unwrap();
            assert!((v - konst.evaluate(&[x, y]).unwrap()).abs() <= 1e-10);
        }
    }

    #[test]
    fn overlap_detected() {
        let h = one_var_h();
        let mu = Polynomial::parse("-0.5 ; 1 * x0^1", 1).unwrap();
        assert_eq!(BarrierSpec::new(h, vec![mu], vec![(-2.0, 2.0)]).unwrap_err(), CbfError::Overlap(0));
    }

    #[test]
    fn contraction_needs_no_control() {
        let spec = spec_1d(one_var_h());
        let cfg = whole_domain_cfg();
        let d = scalar_dyn(0.5);
        let s1 = step1_multiplier_search(&spec, &d, &[0.0], &[(-1.0, 1.0)], &cfg).unwrap();
        assert!(s1.success(), "{s1:?}");
        assert!(s1.eps1 > 0.0);
        let s2 = step2_controller_search(&spec, &d, &[0.0], &s1, &cfg).unwrap();
        assert!(s2.success());
        assert!(s2.coeff_norm <= 1e-6, "{}", s2.coeff_norm);
    }

    #[test]
    fn constant_barrier_has_zero_margin() {
        let spec = spec_1d(Polynomial::constant(1, 1.0));
        // the optimum sits exactly at zero, so solve tighter than the filter default
        let cfg = FilterConfig { decay: 0.0, solver: SolverConfig::default(), ..whole_domain_cfg() };
        let s1 = step1_multiplier_search(&spec, &scalar_dyn(0.5), &[0.0], &[(-1.0, 1.0)], &cfg).unwrap();
        assert!(s1.success(), "{s1:?}");
        assert!(s1.eps1.abs() <= 1e-6, "{}", s1.eps1);
        assert!(s1.l.max_abs_coeff() <= 1e-5);
    }

    #[test]
    fn expansion_needs_control() {
        // grid oracle: with a = 0, h(2s) - h(s) + 0.1 h(s) < 0 near |s| = 1
        let h = one_var_h();
        assert!(h.evaluate(&[2.0]).unwrap() - 0.9 * h.evaluate(&[1.0]).unwrap() < 0.0);
        let spec = spec_1d(h);
        let cfg = FilterConfig { decay: 0.1, ..whole_domain_cfg() };
        let d = scalar_dyn(2.0);
        let s1 = step1_multiplier_search(&spec, &d, &[0.0], &[(-1.0, 1.0)], &cfg).unwrap();
        assert!(s1.success(), "{s1:?}");
        let s2 = step2_controller_search(&spec, &d, &[0.0], &s1, &cfg).unwrap();
        assert!(s2.success());
        assert!(s2.coeff_norm > 0.1);
        // the correction keeps the model inside the safe set on a grid
        for i in 0..=40 {
            let s = -1.0 + 0.05 * i as f64;
            let a = s2.a_star[0].evaluate(&s1.frame.to_local(&[s])).unwrap();
            assert!(1.0 - (2.0 * s + a).powi(2) >= 0.9 * (1.0 - s * s) - 1e-6);
        }
    }

    #[test]
    fn margin_fraction_raises_control_norm() {
        let spec = spec_1d(one_var_h());
        let d = scalar_dyn(2.0);
        let mut norms = Vec::new();
        for rho in [0.0, 0.5] {
            let cfg = FilterConfig { rho, ..whole_domain_cfg() };
            let s1 = step1_multiplier_search(&spec, &d, &[0.0], &[(-1.0, 1.0)], &cfg).unwrap();
            let s2 = step2_controller_search(&spec, &d, &[0.0], &s1, &cfg).unwrap();
            assert!(s2.success());
            norms.push(s2.coeff_norm);
        }
        assert!(norms[1] >= norms[0] - 1e-6, "{norms:?}");
    }

    #[test]
    fn certificates_recheck_independently() {
        let h = one_var_h();
        let spec = BarrierSpec::new(
            h.clone(),
            vec![Polynomial::parse("-1 ; 1 * x0^1", 1).unwrap(), Polynomial::parse("-1 ; -1 * x0^1", 1).unwrap()],
            vec![(-1.5, 1.5)],
        )
        .unwrap();
        let cfg = whole_domain_cfg();
        let d = scalar_dyn(1.2);
        let s1 = step1_multiplier_search(&spec, &d, &[0.3], &[(-1.5, 1.5)], &cfg).unwrap();
        assert!(s1.success(), "{s1:?}");
        let solver = &cfg.solver;
        let certified = |p: &Polynomial| matches!(verify_sos(p, solver).unwrap(), SosVerdict::Certificate { .. });
        assert!(certified(&s1.l));
        for m in &s1.m {
            assert!(certified(m));
        }
        // Δh(a_feas) + γ h - L h - eps1 - Σ σ_j (1 - ξ_j^2), rebuilt from the polynomials
        let frame = &s1.frame;
        let h_loc = frame.pull_back(&h).unwrap();
        let d_loc = frame.pull_back_dynamics(&d).unwrap();
        let u = s1.a_feas[0].add_constant(0.3);
        let next = d_loc.drift[0].add(&d_loc.input[0][0].mul(&u).unwrap()).unwrap();
        let dh = h.compose(&[next]).unwrap().sub(&h_loc).unwrap();
        let mut margin = dh.add(&h_loc.scale(cfg.decay)).unwrap().sub(&s1.l.mul(&h_loc).unwrap()).unwrap();
        margin = margin.add_constant(-s1.eps1 + 1e-7);
        for (sigma, b) in s1.box_multipliers.iter().zip(frame.box_constraints()) {
            margin = margin.sub(&sigma.mul(&b).unwrap()).unwrap();
        }
        assert!(certified(&margin));
    }

    #[test]
    fn filter_reports_status_and_bounds() {
        let spec = BarrierSpec::new(one_var_h(), vec![], vec![(-1.0, 1.0)]).unwrap();
        let cfg = FilterConfig { action_bounds: vec![(-0.2, 0.2)], ..whole_domain_cfg() };
        // s⁺ = 2 s + a cannot be held near the edge with |a| <= 0.2
        let r = filter_action(&spec, &scalar_dyn(2.0), &[0.9], &[0.0], &cfg).unwrap();
        assert_ne!(r.status, FilterStatus::SosOk);
        assert!(r.reason.is_some());
        assert!(r.total_action[0].abs() <= 0.2);
        let out = filter_action(&spec, &scalar_dyn(2.0), &[3.0], &[7.0], &cfg).unwrap();
        assert_eq!(out.status, FilterStatus::FallbackSaturate);
        assert_eq!(out.total_action, vec![0.2]);
    }

    #[test]
    fn cache_reuses_solution() {
        let spec = spec_1d(one_var_h());
        let cfg = FilterConfig { resolve_every: 3, local_radius: Some(vec![0.3]), ..FilterConfig::default() };
        let mut f = SosFilter::new(spec, scalar_dyn(1.1), cfg).unwrap();
        let a = f.filter(0, &[0.2], &[0.0]).unwrap();
        let b = f.filter(0, &[0.25], &[0.001]).unwrap();
        let c = f.filter(0, &[0.25], &[0.5]).unwrap();
        let e = f.filter(1, &[0.25], &[0.5]).unwrap();
        assert!(!a.cached && b.cached && !c.cached && !e.cached);
    }

    #[test]
    fn qp_cases() {
        let h = one_var_h();
        let d = scalar_dyn(1.0);
        let cfg = QpConfig { eta: 0.2, action_bounds: vec![(-15.0, 15.0)] };
        // deep interior: slack
        let r = qp_filter_action(&h, &d, &[0.0], &[0.1], &cfg).unwrap();
        assert_eq!(r.status, FilterStatus::SosOk);
        assert_eq!(r.a_cbf, vec![0.0]);
        // binding: s = 0.9, c = 0.2 -> s⁺ = 1.1, q = 1 - 1.21 - 0.8*0.19, g = -2.2
        let r = qp_filter_action(&h, &d, &[0.9], &[0.2], &cfg).unwrap();
        let q = 1.0 - 1.21 - 0.8 * 0.19;
        let want = -q / -2.2;
        assert!((r.a_cbf[0] - want).abs() <= 1e-12);
        assert_eq!(r.status, FilterStatus::SosOk);
        // no input authority
        let flat = PolyDynamics::new(vec![Polynomial::var(1, 0).scale(2.0)], vec![vec![Polynomial::zero(1)]]).unwrap();
        let r = qp_filter_action(&h, &flat, &[0.9], &[0.0], &cfg).unwrap();
        assert_eq!(r.status, FilterStatus::FallbackSaturate);
        // bound too tight: saturate toward the safe side
        let tight = QpConfig { eta: 0.2, action_bounds: vec![(-0.01, 0.01)] };
        let r = qp_filter_action(&h, &d, &[0.9], &[0.2], &tight).unwrap();
        assert_eq!(r.status, FilterStatus::FallbackSaturate);
        assert_eq!(r.total_action, vec![-0.01]);
    }

    #[test]
    fn bad_config_rejected() {
        let cfg = FilterConfig { rho: 1.0, ..FilterConfig::default() };
        assert!(cfg.validate().is_err());
        let _ = SdpStatus::Optimal;
    }
}
