use std::time::Instant;

use crate::poly::{PolyDynamics, Polynomial};
use crate::sdp::SdpStatus;

use super::delta::LocalFrame;
use super::synth::{eval_correction, prepare, step1_prepared, step2_prepared, Degrees, Step1Result};
use super::{BarrierSpec, CbfError, FilterConfig, FilterResult, FilterStatus};

/// Slack allowed on `h` of the predicted next state before a certified
/// action is downgraded.
pub const POST_CHECK_TOL: f64 = 1e-6;

/// Offsets are compared after rounding to this grid.
pub const OFFSET_QUANTUM: f64 = 0.01;

/// Clamping by less than this is treated as solver round-off at the bound.
pub const SATURATION_TOL: f64 = 1e-6;

#[derive(Clone, Debug)]
struct CacheEntry {
    episode: u64,
    offset_key: Vec<i64>,
    offset: Vec<f64>,
    frame: LocalFrame,
    a: Vec<Polynomial>,
    status: FilterStatus,
    eps1: Option<f64>,
    min_gram_eig: Option<f64>,
    reason: Option<String>,
    age: usize,
}

/// Last synthesized correction, reused for up to `resolve_every` steps while
/// the state stays inside its box and the offset is unchanged.
#[derive(Clone, Debug, Default)]
pub struct FilterCache {
    entry: Option<CacheEntry>,
}

impl FilterCache {
    pub fn clear(&mut self) {
        self.entry = None;
    }

    fn lookup(&mut self, episode: u64, state: &[f64], offset: &[f64], resolve_every: usize) -> Option<&CacheEntry> {
        let key = offset_key(offset);
        let hit = match &self.entry {
            Some(e) => e.episode == episode && e.offset_key == key && e.age < resolve_every && e.frame.contains(state),
            None => false,
        };
        if hit {
            let e = self.entry.as_mut().unwrap();
            e.age += 1;
            Some(e)
        } else {
            None
        }
    }
}

fn offset_key(offset: &[f64]) -> Vec<i64> {
    offset.iter().map(|v| (v / OFFSET_QUANTUM).round() as i64).collect()
}

/// SOS safety filter around a fixed barrier and a learned model.
#[derive(Clone, Debug)]
pub struct SosFilter {
    pub spec: BarrierSpec,
    pub dynamics: PolyDynamics,
    pub cfg: FilterConfig,
    pub cache: FilterCache,
}

impl SosFilter {
    pub fn new(spec: BarrierSpec, dynamics: PolyDynamics, cfg: FilterConfig) -> Result<Self, CbfError> {
        cfg.validate()?;
        if spec.h.nvars() != dynamics.state_dim() || cfg.action_bounds.len() != dynamics.action_dim() {
            return Err(CbfError::Dimension("barrier, dynamics and action bounds disagree".into()));
        }
        Ok(Self { spec, dynamics, cfg, cache: FilterCache::default() })
    }

    /// Replaces the model (e.g. after a GP refit) and drops cached solutions.
    pub fn set_dynamics(&mut self, dynamics: PolyDynamics) {
        self.dynamics = dynamics;
        self.cache.clear();
    }

    /// Filtered action for `state` given `offset = a_rl + a_prior`.
    pub fn filter(&mut self, episode: u64, state: &[f64], offset: &[f64]) -> Result<FilterResult, CbfError> {
        let start = Instant::now();
        let resolve_every = self.cfg.resolve_every;
        if let Some(e) = self.cache.lookup(episode, state, offset, resolve_every).cloned() {
            let mut res = self.finish(state, &e.offset, offset, &e.frame, &e.a, e.status, e.reason.clone())?;
            res.eps1 = e.eps1;
            res.min_gram_eig = e.min_gram_eig;
            res.cached = true;
            res.solve_time_s = start.elapsed().as_secs_f64();
            return Ok(res);
        }
        let (mut res, correction) = synthesize(&self.spec, &self.dynamics, state, offset, &self.cfg)?;
        res.solve_time_s = start.elapsed().as_secs_f64();
        self.cache.entry = correction.map(|(frame, a)| CacheEntry {
            episode,
            offset_key: offset_key(offset),
            offset: offset.to_vec(),
            frame,
            a,
            status: res.status,
            eps1: res.eps1,
            min_gram_eig: res.min_gram_eig,
            reason: res.reason.clone(),
            age: 1,
        });
        Ok(res)
    }

    #[allow(clippy::too_many_arguments)]
    fn finish(
        &self,
        state: &[f64],
        cached_offset: &[f64],
        offset: &[f64],
        frame: &LocalFrame,
        a: &[Polynomial],
        status: FilterStatus,
        reason: Option<String>,
    ) -> Result<FilterResult, CbfError> {
        let corr = eval_correction(frame, a, state);
        let raw: Vec<f64> = cached_offset.iter().zip(&corr).map(|(c, v)| c + v).collect();
        apply(&self.spec, &self.dynamics, &self.cfg, state, offset, &raw, status, reason)
    }
}

type Correction = Option<(LocalFrame, Vec<Polynomial>)>;

/// Box of the certificate around `state`, clipped to the state domain.
pub(crate) fn local_box(spec: &BarrierSpec, cfg: &FilterConfig, state: &[f64]) -> Vec<(f64, f64)> {
    match &cfg.local_radius {
        None => spec.state_domain.clone(),
        Some(r) => spec
            .state_domain
            .iter()
            .zip(state)
            .zip(r)
            .map(|(((lo, hi), s), w)| {
                let a = (s - w).max(*lo);
                let b = (s + w).min(*hi);
                if b > a {
                    (a, b)
                } else {
                    (s - w, s + w)
                }
            })
            .collect(),
    }
}

fn step1_with_escalation(
    spec: &BarrierSpec,
    dynamics: &PolyDynamics,
    offset: &[f64],
    frame: LocalFrame,
    cfg: &FilterConfig,
) -> Result<Step1Result, CbfError> {
    let prep = prepare(spec, dynamics, offset, frame)?;
    let deg = Degrees::from_config(cfg);
    let first = step1_prepared(&prep, cfg, deg)?;
    if first.success() || cfg.escalation == 0 {
        return Ok(first);
    }
    match step1_prepared(&prep, cfg, deg.escalated(cfg.escalation)) {
        Ok(second) if second.success() || (second.eps1 > first.eps1) => Ok(second),
        Ok(_) | Err(CbfError::DegreeOverflow { .. }) => Ok(first),
        Err(e) => Err(e),
    }
}

/// Runs both synthesis steps at `state` without caching.
///
/// Status is `sos_ok` when step 1 certifies a nonnegative margin and the
/// resulting action needs no clamping, `fallback_saturate` when the action was
/// clamped to its bounds, and `infeasible` when no certificate was found. In
/// the last case the best-effort correction from step 1 is used if the
/// program solved, otherwise the clamped offset.
pub fn filter_action(
    spec: &BarrierSpec,
    dynamics: &PolyDynamics,
    state: &[f64],
    offset: &[f64],
    cfg: &FilterConfig,
) -> Result<FilterResult, CbfError> {
    Ok(synthesize(spec, dynamics, state, offset, cfg)?.0)
}

fn synthesize(
    spec: &BarrierSpec,
    dynamics: &PolyDynamics,
    state: &[f64],
    offset: &[f64],
    cfg: &FilterConfig,
) -> Result<(FilterResult, Correction), CbfError> {
    cfg.validate()?;
    if state.len() != dynamics.state_dim() || offset.len() != dynamics.action_dim() {
        return Err(CbfError::Dimension("state or action length".into()));
    }
    if !spec.in_domain(state) {
        let res = FilterResult::passthrough(
            offset,
            &cfg.action_bounds,
            FilterStatus::FallbackSaturate,
            "state outside domain".into(),
        );
        return Ok((res, None));
    }
    let frame = LocalFrame::from_box(&local_box(spec, cfg, state));
    let s1 = match step1_with_escalation(spec, dynamics, offset, frame.clone(), cfg) {
        Ok(s) => s,
        Err(CbfError::DegreeOverflow { constraint, required, limit }) => {
            let reason = format!("constraint {constraint} needs Gram size {required} > {limit}");
            let res = FilterResult::passthrough(offset, &cfg.action_bounds, FilterStatus::Infeasible, reason);
            return Ok((res, None));
        }
        Err(e) => return Err(e),
    };
    if s1.status != SdpStatus::Optimal {
        let reason = format!("step 1 solver status {:?}", s1.status);
        let res = FilterResult::passthrough(offset, &cfg.action_bounds, FilterStatus::Infeasible, reason);
        return Ok((res, None));
    }
    let (a, status, reason, min_eig) = if !s1.success() {
        let reason = if s1.certified {
            format!("negative margin eps1 = {:.3e}", s1.eps1)
        } else {
            "step 1 certificate failed verification".to_string()
        };
        (s1.a_feas.clone(), FilterStatus::Infeasible, Some(reason), s1.min_gram_eig)
    } else {
        let prep = prepare(spec, dynamics, offset, frame.clone())?;
        let s2 = step2_prepared(&prep, cfg, &s1)?;
        if s2.success() {
            (s2.a_star, FilterStatus::SosOk, None, s2.min_gram_eig.min(s1.min_gram_eig))
        } else {
            (
                s1.a_feas.clone(),
                FilterStatus::SosOk,
                Some(format!("step 2 status {:?}, kept step 1 action", s2.status)),
                s1.min_gram_eig,
            )
        }
    };
    let corr = eval_correction(&frame, &a, state);
    let raw: Vec<f64> = offset.iter().zip(&corr).map(|(c, v)| c + v).collect();
    let mut res = apply(spec, dynamics, cfg, state, offset, &raw, status, reason)?;
    res.eps1 = Some(s1.eps1);
    res.min_gram_eig = Some(min_eig);
    Ok((res, Some((frame, a))))
}

/// Clamps `raw`, runs the pointwise check on the model and assembles the
/// result relative to `offset`.
#[allow(clippy::too_many_arguments)]
fn apply(
    spec: &BarrierSpec,
    dynamics: &PolyDynamics,
    cfg: &FilterConfig,
    state: &[f64],
    offset: &[f64],
    raw: &[f64],
    mut status: FilterStatus,
    mut reason: Option<String>,
) -> Result<FilterResult, CbfError> {
    let total = cfg.clamp(raw);
    if total.iter().zip(raw).any(|(t, r)| (t - r).abs() > SATURATION_TOL) && status == FilterStatus::SosOk {
        status = FilterStatus::FallbackSaturate;
        reason = Some("action clamped to bounds".into());
    }
    if status == FilterStatus::SosOk {
        let h_now = spec.h.evaluate(state)?;
        let next = dynamics.step(state, &total)?;
        let h_next = spec.h.evaluate(&next)?;
        if h_now >= 0.0 && h_next < -POST_CHECK_TOL {
            status = FilterStatus::Infeasible;
            reason = Some(format!("model predicts h = {h_next:.3e} after the action"));
        }
    }
    Ok(FilterResult {
        a_cbf: total.iter().zip(offset).map(|(t, c)| t - c).collect(),
        total_action: total,
        status,
        reason,
        eps1: None,
        min_gram_eig: None,
        solve_time_s: 0.0,
        cached: false,
    })
}
