use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cbf::{qp_filter_action, BarrierSpec, FilterStatus, SosFilter};
use crate::ddpg::{Agent, PriorController, Transition};
use crate::gp::{self, polynomial_mean};
use crate::pendulum::{
    self, nominal_polynomial_model, pendulum_barrier, pendulum_dynamics_with_gain, NominalModel, PendulumParams,
    PendulumState,
};
use crate::poly::{PolyDynamics, Polynomial};

use super::report::{EPISODES_HEADER, EXTRACT_STEPS, SAFETY_HEADER, STEPS_HEADER, TIMING_HEADER};
use super::{Algorithm, ExperimentConfig, HarnessError};

/// Angle beyond which a step counts as a safety violation.
pub const THETA_LIMIT: f64 = 1.0;

#[derive(Clone, Debug, PartialEq)]
pub struct StepRow {
    pub t: usize,
    /// State after the step.
    pub theta: f64,
    pub theta_dot: f64,
    pub a_rl: f64,
    pub a_prior: f64,
    pub a_cbf: f64,
    pub a_total: f64,
    pub reward: f64,
    /// `none` when no filter runs.
    pub status: String,
    pub solve_time_s: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub max_abs_theta: f64,
    pub max_abs_thetadot: f64,
    pub accumulated_cost: f64,
    pub violations: usize,
    pub sos_ok: usize,
    pub fallback_saturate: usize,
    pub infeasible: usize,
    pub rows: Vec<StepRow>,
}

impl EpisodeRecord {
    fn new(episode: usize) -> Self {
        Self {
            episode,
            max_abs_theta: 0.0,
            max_abs_thetadot: 0.0,
            accumulated_cost: 0.0,
            violations: 0,
            sos_ok: 0,
            fallback_saturate: 0,
            infeasible: 0,
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: StepRow) {
        self.max_abs_theta = self.max_abs_theta.max(row.theta.abs());
        self.max_abs_thetadot = self.max_abs_thetadot.max(row.theta_dot.abs());
        self.accumulated_cost -= row.reward;
        if row.theta.abs() > THETA_LIMIT {
            self.violations += 1;
        }
        match row.status.as_str() {
            "sos_ok" => self.sos_ok += 1,
            "fallback_saturate" => self.fallback_saturate += 1,
            "infeasible" => self.infeasible += 1,
            _ => {}
        }
        self.rows.push(row);
    }

    pub fn non_ok(&self) -> usize {
        self.fallback_saturate + self.infeasible
    }
}

#[derive(Clone, Debug)]
pub struct SeedOutcome {
    pub seed: u64,
    pub dir: PathBuf,
    pub episodes: Vec<EpisodeRecord>,
    /// Set when the run stopped early.
    pub error: Option<String>,
}

impl SeedOutcome {
    pub fn violations(&self) -> usize {
        self.episodes.iter().map(|e| e.violations).sum()
    }

    pub fn steps(&self) -> usize {
        self.episodes.iter().map(|e| e.rows.len()).sum()
    }

    pub fn non_ok_steps(&self) -> usize {
        self.episodes.iter().map(|e| e.non_ok()).sum()
    }
}

struct Writers {
    episodes: BufWriter<File>,
    steps: BufWriter<File>,
    safety: BufWriter<File>,
    timing: BufWriter<File>,
}

impl Writers {
    fn create(dir: &Path) -> Result<Self, HarnessError> {
        fs::create_dir_all(dir)?;
        let open = |name: &str, header: &str| -> Result<BufWriter<File>, HarnessError> {
            let mut w = BufWriter::new(File::create(dir.join(name))?);
            writeln!(w, "{header}")?;
            Ok(w)
        };
        Ok(Self {
            episodes: open("episodes.csv", EPISODES_HEADER)?,
            steps: open("steps.csv", STEPS_HEADER)?,
            safety: open("safety.csv", SAFETY_HEADER)?,
            timing: open("timing.csv", TIMING_HEADER)?,
        })
    }

    fn episode(&mut self, e: &EpisodeRecord) -> Result<(), HarnessError> {
        writeln!(self.episodes, "{},{},{},{}", e.episode, e.max_abs_theta, e.max_abs_thetadot, e.accumulated_cost)?;
        writeln!(self.safety, "{},{},{},{},{}", e.episode, e.violations, e.sos_ok, e.fallback_saturate, e.infeasible)?;
        for r in &e.rows {
            writeln!(
                self.steps,
                "{},{},{},{},{},{},{},{},{},{}",
                e.episode, r.t, r.theta, r.theta_dot, r.a_rl, r.a_prior, r.a_cbf, r.a_total, r.reward, r.status
            )?;
            writeln!(self.timing, "{},{},{:.6}", e.episode, r.t, r.solve_time_s)?;
        }
        self.episodes.flush()?;
        self.steps.flush()?;
        self.safety.flush()?;
        self.timing.flush()?;
        Ok(())
    }
}

fn write_extract(path: &Path, e: &EpisodeRecord) -> Result<(), HarnessError> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{STEPS_HEADER}")?;
    for r in e.rows.iter().take(EXTRACT_STEPS) {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            e.episode, r.t, r.theta, r.theta_dot, r.a_rl, r.a_prior, r.a_cbf, r.a_total, r.reward, r.status
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Filter model: truncated nominal dynamics plus the GP residual mean.
struct ModelLearner {
    nominal: NominalModel,
    data: Vec<gp::Transition>,
}

impl ModelLearner {
    fn base(&self, cfg: &ExperimentConfig) -> Result<PolyDynamics, HarnessError> {
        let fit = if cfg.fit_base_model {
            fit_velocity_model(&self.data, cfg.nominal_params.dt, cfg.filter_sin_degree)
        } else {
            None
        };
        Ok(match fit {
            Some(f) => pendulum_dynamics_with_gain(&cfg.nominal_params, &f.gravity_poly(&cfg.nominal_params), f.gain)?,
            None => self.nominal.truncated(cfg.filter_sin_degree)?,
        })
    }

    fn refit(&self, cfg: &ExperimentConfig) -> Result<PolyDynamics, HarnessError> {
        let base = self.base(cfg)?;
        let subset = spread_subset(&self.data, &cfg.domain, cfg.gp_max_points);
        let sets = gp::residual_dataset(&subset, &base)?;
        let mut residual = Vec::with_capacity(sets.len());
        for set in &sets {
            let post = gp::fit(set, &cfg.kernel)?;
            residual.push(polynomial_mean(&post, &cfg.domain, cfg.gp_mean_degree)?.mean_poly);
        }
        Ok(base.with_residual(residual)?)
    }

    fn record(&mut self, cfg: &ExperimentConfig, s: &[f64], a: f64, next: &[f64]) {
        let inside = |x: &[f64]| x.iter().zip(&cfg.domain).all(|(v, (lo, hi))| v >= lo && v <= hi);
        if inside(s) {
            self.data.push(gp::Transition { state: s.to_vec(), action: vec![a], next_state: next.to_vec() });
        }
    }
}

/// Cells per state dimension when thinning the GP data.
const GP_GRID: usize = 24;

/// Keeps the newest transition in each grid cell of `domain`, then the
/// newest `max` of those, in their original order.
fn spread_subset(data: &[gp::Transition], domain: &[(f64, f64)], max: usize) -> Vec<gp::Transition> {
    let cell = |s: &[f64]| -> Vec<usize> {
        s.iter()
            .zip(domain)
            .map(|(v, (lo, hi))| (((v - lo) / (hi - lo) * GP_GRID as f64).floor().max(0.0) as usize).min(GP_GRID - 1))
            .collect()
    };
    let mut newest = std::collections::HashMap::new();
    for (i, t) in data.iter().enumerate() {
        newest.insert(cell(&t.state), i);
    }
    let mut keep: Vec<usize> = newest.into_values().collect();
    keep.sort_unstable();
    let start = keep.len().saturating_sub(max);
    keep[start..].iter().map(|&i| data[i].clone()).collect()
}

/// Least-squares fit of the velocity update,
/// `(θ̇' - θ̇) / dt ≈ k a + c0 + c1 θ + c3 θ^3 + ... + cv θ̇`,
/// with odd powers of θ up to the given degree.
#[derive(Clone, Debug, PartialEq)]
pub struct VelocityFit {
    pub gain: f64,
    /// Coefficients of θ, θ^3, ... in order.
    pub odd: Vec<f64>,
    pub offset: f64,
    pub velocity: f64,
}

impl VelocityFit {
    /// The odd part as a surrogate for `sin θ` in units of `g / l`.
    pub fn gravity_poly(&self, params: &PendulumParams) -> Polynomial {
        let scale = params.length / params.gravity;
        let terms: Vec<(Vec<u32>, f64)> =
            self.odd.iter().enumerate().map(|(i, c)| (vec![2 * i as u32 + 1], c * scale)).collect();
        let refs: Vec<(&[u32], f64)> = terms.iter().map(|(e, c)| (e.as_slice(), *c)).collect();
        Polynomial::from_exps(1, &refs)
    }
}

/// `None` when the data cannot pin the coefficients down or the gain comes
/// out non-positive.
pub fn fit_velocity_model(data: &[gp::Transition], dt: f64, degree: u32) -> Option<VelocityFit> {
    let odd = degree.div_ceil(2) as usize;
    let cols = odd + 3;
    if data.len() < 4 * cols {
        return None;
    }
    let x = DMatrix::from_fn(data.len(), cols, |i, j| {
        let s = &data[i].state;
        match j {
            0 => data[i].action[0],
            1 => 1.0,
            j if j == cols - 1 => s[1],
            j => s[0].powi(2 * (j as i32 - 2) + 1),
        }
    });
    let y = DVector::from_iterator(data.len(), data.iter().map(|t| (t.next_state[1] - t.state[1]) / dt));
    let svd = x.svd(true, true);
    let sv = &svd.singular_values;
    if sv.min() <= 1e-9 * sv.max() {
        return None;
    }
    let coef = svd.solve(&y, 1e-12).ok()?;
    let gain = coef[0];
    if !(gain > 0.0 && coef.iter().all(|c| c.is_finite())) {
        return None;
    }
    Some(VelocityFit { gain, odd: coef.as_slice()[2..cols - 1].to_vec(), offset: coef[1], velocity: coef[cols - 1] })
}

enum Shield {
    None,
    Qp(BarrierSpec),
    Sos(Box<SosFilter>),
}

/// Runs one seed and writes its CSVs under `<out>/seed_<seed>`. Errors after
/// the output directory exists are recorded in the outcome and in a
/// `PARTIAL` marker file.
pub fn run_seed(cfg: &ExperimentConfig, seed: u64) -> Result<SeedOutcome, HarnessError> {
    let dir = cfg.out.join(format!("seed_{seed}"));
    let mut writers = Writers::create(&dir)?;
    let _ = fs::remove_file(dir.join("PARTIAL"));
    let mut outcome = SeedOutcome { seed, dir: dir.clone(), episodes: Vec::new(), error: None };
    if let Err(e) = train(cfg, seed, &mut writers, &mut outcome) {
        let msg = e.to_string();
        fs::write(dir.join("PARTIAL"), format!("{msg}\n"))?;
        log::error!("seed {seed} stopped: {msg}");
        outcome.error = Some(msg);
    }
    if let (Some(first), Some(last)) = (outcome.episodes.first(), outcome.episodes.last()) {
        write_extract(&dir.join("first_episode.csv"), first)?;
        write_extract(&dir.join("last_episode.csv"), last)?;
    }
    Ok(outcome)
}

fn train(cfg: &ExperimentConfig, seed: u64, w: &mut Writers, outcome: &mut SeedOutcome) -> Result<(), HarnessError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = nominal_polynomial_model(&cfg.nominal_params, cfg.cheb_degree)?;
    let mut learner = ModelLearner { nominal: model, data: Vec::new() };
    let mut agent = Agent::new(2, cfg.agent.clone(), rng.random())?;
    let mut prior = PriorController::new(2, cfg.prior.clone(), rng.random())?;

    // random actions on the true system to seed the residual model
    for _ in 0..cfg.warmup_episodes {
        let mut s = pendulum::reset(&mut rng, &cfg.init);
        for _ in 0..cfg.steps {
            let a =
                if cfg.warmup_action > 0.0 { rng.random_range(-cfg.warmup_action..=cfg.warmup_action) } else { 0.0 };
            let (next, reward) = pendulum::step(s, a, &cfg.true_params)?;
            learner.record(cfg, &s.to_vec(), a, &next.to_vec());
            agent.remember(Transition {
                state: s.to_vec(),
                a_total: vec![a],
                a_rl: vec![a],
                a_prior: vec![0.0],
                a_cbf: vec![0.0],
                reward,
                next_state: next.to_vec(),
                done: false,
            });
            s = next;
            if s.theta.abs() > cfg.domain[0].1 {
                break;
            }
        }
    }

    let spec = pendulum_barrier(&cfg.domain)?;
    let mut dynamics = learner.refit(cfg)?;
    let mut shield = match cfg.algorithm {
        Algorithm::DdpgOnly => Shield::None,
        Algorithm::DdpgQp => Shield::Qp(spec),
        Algorithm::DdpgSosp => Shield::Sos(Box::new(SosFilter::new(spec, dynamics.clone(), cfg.filter.clone())?)),
    };
    let use_prior = cfg.algorithm != Algorithm::DdpgOnly;

    for ep in 0..cfg.episodes {
        let mut rec = EpisodeRecord::new(ep);
        let mut s: PendulumState = pendulum::reset(&mut rng, &cfg.init);
        for t in 0..cfg.steps {
            let sv = s.to_vec();
            let a_rl = agent.act(&sv, true)[0];
            let a_prior = if use_prior { prior.eval(&sv)[0] } else { 0.0 };
            let offset = [a_rl + a_prior];
            let (a_total, status, solve_time) = match &mut shield {
                Shield::None => (cfg.true_params.clamp_torque(offset[0]), "none".to_string(), 0.0),
                Shield::Qp(spec) => {
                    let start = std::time::Instant::now();
                    let r = qp_filter_action(&spec.h, &dynamics, &sv, &offset, &cfg.qp)?;
                    (r.total_action[0], r.status.as_str().to_string(), start.elapsed().as_secs_f64())
                }
                Shield::Sos(f) => {
                    let r = f.filter(ep as u64, &sv, &offset)?;
                    if r.status != FilterStatus::SosOk {
                        log::info!("episode {ep} step {t}: {} ({})", r.status, r.reason.as_deref().unwrap_or(""));
                    }
                    (r.total_action[0], r.status.as_str().to_string(), r.solve_time_s)
                }
            };
            let a_cbf = if matches!(shield, Shield::None) { 0.0 } else { a_total - offset[0] };
            let (next, reward) = pendulum::step(s, a_total, &cfg.true_params)?;
            let nv = next.to_vec();
            learner.record(cfg, &sv, a_total, &nv);
            agent.remember(Transition {
                state: sv.clone(),
                a_total: vec![a_total],
                a_rl: vec![a_rl],
                a_prior: vec![a_prior],
                a_cbf: vec![a_cbf],
                reward,
                next_state: nv,
                // the episode limit is a truncation, not a terminal state
                done: false,
            });
            agent.train_step()?;
            if use_prior {
                prior.push(sv, vec![a_prior + a_cbf]);
            }
            rec.push(StepRow {
                t,
                theta: next.theta,
                theta_dot: next.theta_dot,
                a_rl,
                a_prior,
                a_cbf,
                a_total,
                reward,
                status,
                solve_time_s: solve_time,
            });
            s = next;
        }
        agent.end_episode();
        if use_prior {
            prior.fit()?;
        }
        dynamics = learner.refit(cfg)?;
        if let Shield::Sos(f) = &mut shield {
            f.set_dynamics(dynamics.clone());
        }
        w.episode(&rec)?;
        log::info!(
            "seed {seed} episode {ep}: max|theta| {:.3}, cost {:.2}, non-ok {}",
            rec.max_abs_theta,
            rec.accumulated_cost,
            rec.non_ok()
        );
        outcome.episodes.push(rec);
    }
    Ok(())
}

/// Runs every seed on its own thread, then writes `summary.csv` and the
/// resolved configuration to the output directory.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<SeedOutcome>, HarnessError> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.out)?;
    fs::write(cfg.out.join("config.txt"), cfg.to_text())?;
    let results: Vec<Result<SeedOutcome, HarnessError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = cfg.seeds.iter().map(|&s| scope.spawn(move || run_seed(cfg, s))).collect();
        handles.into_iter().map(|h| h.join().expect("seed thread panicked")).collect()
    });
    let outcomes = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let per_seed: Vec<Vec<(usize, [f64; 3])>> = outcomes
        .iter()
        .map(|o| {
            o.episodes.iter().map(|e| (e.episode, [e.max_abs_theta, e.max_abs_thetadot, e.accumulated_cost])).collect()
        })
        .collect();
    super::write_summary(&cfg.out.join("summary.csv"), &per_seed)?;
    Ok(outcomes)
}
