use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use crate::cbf::{FilterConfig, QpConfig};
use crate::ddpg::{AgentConfig, PriorConfig};
use crate::gp::KernelConfig;
use crate::pendulum::{InitRange, PendulumParams, BARRIER_DOMAIN};

use super::HarnessError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Algorithm {
    DdpgOnly,
    DdpgQp,
    DdpgSosp,
}

impl Algorithm {
    pub fn as_str(&self) -> &'static str {
        match self {
            Algorithm::DdpgOnly => "ddpg-only",
            Algorithm::DdpgQp => "ddpg-qp",
            Algorithm::DdpgSosp => "ddpg-sosp",
        }
    }
}

impl FromStr for Algorithm {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "ddpg-only" => Ok(Algorithm::DdpgOnly),
            "ddpg-qp" => Ok(Algorithm::DdpgQp),
            "ddpg-sosp" => Ok(Algorithm::DdpgSosp),
            other => Err(HarnessError::Config(format!("unknown algorithm `{other}`"))),
        }
    }
}

/// Episodes for runs at the scale of the original experiment.
pub const FULL_SCALE_EPISODES: usize = 150;

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub algorithm: Algorithm,
    pub episodes: usize,
    pub steps: usize,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
    /// Random-action episodes on the true system that seed the GP data.
    pub warmup_episodes: usize,
    /// Half-width of the uniform warm-up actions.
    pub warmup_action: f64,
    /// Dynamics the agent acts on.
    pub true_params: PendulumParams,
    /// Dynamics the filter's polynomial model starts from.
    pub nominal_params: PendulumParams,
    pub init: InitRange,
    pub cheb_degree: u32,
    /// The sin surrogate inside the filter is truncated to this degree.
    pub filter_sin_degree: u32,
    pub agent: AgentConfig,
    pub prior: PriorConfig,
    pub filter: FilterConfig,
    pub qp: QpConfig,
    /// Box for the barrier certificates and the GP mean fit.
    pub domain: Vec<(f64, f64)>,
    pub kernel: KernelConfig,
    pub gp_mean_degree: u32,
    /// Cap on the transitions the GP is fit on.
    pub gp_max_points: usize,
    /// Replace the nominal gravity term and torque gain by a least-squares fit
    /// to the recorded transitions at every refit; the GP models what is left.
    pub fit_base_model: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let true_params = PendulumParams::default();
        let mut cfg = Self {
            algorithm: Algorithm::DdpgSosp,
            episodes: 30,
            steps: 200,
            seeds: vec![1, 2, 3],
            out: PathBuf::from("runs/out"),
            warmup_episodes: 3,
            warmup_action: 5.0,
            true_params,
            nominal_params: PendulumParams::with_mass_length(1.4, 1.4),
            init: InitRange::default(),
            cheb_degree: 9,
            filter_sin_degree: 5,
            agent: AgentConfig::default(),
            prior: PriorConfig::default(),
            filter: FilterConfig { local_radius: Some(vec![0.05, 0.2]), ..FilterConfig::default() },
            qp: QpConfig::default(),
            domain: BARRIER_DOMAIN.to_vec(),
            kernel: KernelConfig { lengthscales: vec![0.5, 2.0], signal_variance: 0.04, noise_variance: 1e-3 },
            gp_mean_degree: 3,
            gp_max_points: 400,
            fit_base_model: true,
        };
        cfg.sync_bounds();
        cfg
    }
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T, HarnessError> {
    v.trim().parse().map_err(|_| HarnessError::Config(format!("bad value `{v}` for `{key}`")))
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>, HarnessError> {
    v.split(',').filter(|s| !s.trim().is_empty()).map(|s| parse(key, s)).collect()
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    /// Reads `key = value` lines; `#` starts a comment. Unset keys keep their
    /// defaults.
    pub fn from_text(text: &str) -> Result<Self, HarnessError> {
        let mut cfg = Self::default();
        for (no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| HarnessError::Config(format!("line {}: expected `key = value`", no + 1)))?;
            cfg.set(k.trim(), v.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<(), HarnessError> {
        match key {
            "run.algorithm" => self.algorithm = v.parse()?,
            "run.episodes" => self.episodes = parse(key, v)?,
            "run.steps" => self.steps = parse(key, v)?,
            "run.seeds" => self.seeds = parse_list(key, v)?,
            "run.out" => self.out = PathBuf::from(v),
            "run.warmup_episodes" => self.warmup_episodes = parse(key, v)?,
            "run.warmup_action" => self.warmup_action = parse(key, v)?,
            "env.mass" => self.true_params.mass = parse(key, v)?,
            "env.length" => self.true_params.length = parse(key, v)?,
            "env.nominal_mass" => self.nominal_params.mass = parse(key, v)?,
            "env.nominal_length" => self.nominal_params.length = parse(key, v)?,
            "env.gravity" => {
                self.true_params.gravity = parse(key, v)?;
                self.nominal_params.gravity = self.true_params.gravity;
            }
            "env.dt" => {
                self.true_params.dt = parse(key, v)?;
                self.nominal_params.dt = self.true_params.dt;
            }
            "env.max_torque" => {
                self.true_params.max_torque = parse(key, v)?;
                self.nominal_params.max_torque = self.true_params.max_torque;
            }
            "env.max_speed" => {
                self.true_params.max_speed = parse(key, v)?;
                self.nominal_params.max_speed = self.true_params.max_speed;
            }
            "env.init_theta" => {
                let w: f64 = parse(key, v)?;
                self.init.theta = (-w, w);
            }
            "env.init_theta_dot" => {
                let w: f64 = parse(key, v)?;
                self.init.theta_dot = (-w, w);
            }
            "env.cheb_degree" => self.cheb_degree = parse(key, v)?,
            "env.filter_sin_degree" => self.filter_sin_degree = parse(key, v)?,
            "agent.gamma" => self.agent.gamma = parse(key, v)?,
            "agent.actor_lr" => self.agent.actor_lr = parse(key, v)?,
            "agent.critic_lr" => self.agent.critic_lr = parse(key, v)?,
            "agent.tau" => self.agent.tau = parse(key, v)?,
            "agent.replay_capacity" => self.agent.replay_capacity = parse(key, v)?,
            "agent.batch_size" => self.agent.batch_size = parse(key, v)?,
            "agent.hidden" => self.agent.hidden = parse_list(key, v)?,
            "agent.noise_sigma" => self.agent.noise_sigma = parse(key, v)?,
            "agent.noise_decay" => self.agent.noise_decay = parse(key, v)?,
            "agent.prior_hidden" => self.prior.hidden = parse_list(key, v)?,
            "agent.prior_lr" => self.prior.lr = parse(key, v)?,
            "agent.prior_steps" => self.prior.steps = parse(key, v)?,
            "agent.prior_batch_size" => self.prior.batch_size = parse(key, v)?,
            "agent.prior_history" => self.prior.history_cap = parse(key, v)?,
            "filter.deg_a" => self.filter.deg_a = parse(key, v)?,
            "filter.deg_l" => self.filter.deg_l = parse(key, v)?,
            "filter.deg_m" => self.filter.deg_m = parse(key, v)?,
            "filter.rho" => self.filter.rho = parse(key, v)?,
            "filter.decay" => self.filter.decay = parse(key, v)?,
            "filter.bound_actions_in_sos" => self.filter.bound_actions_in_sos = parse(key, v)?,
            "filter.resolve_every" => self.filter.resolve_every = parse(key, v)?,
            "filter.local_radius" => {
                let r: Vec<f64> = parse_list(key, v)?;
                self.filter.local_radius = if r.is_empty() { None } else { Some(r) };
            }
            "filter.eps_cap" => self.filter.eps_cap = parse(key, v)?,
            "filter.max_gram" => self.filter.max_gram = parse(key, v)?,
            "filter.escalation" => self.filter.escalation = parse(key, v)?,
            "filter.tolerance" => self.filter.solver.tolerance = parse(key, v)?,
            "filter.max_iterations" => self.filter.solver.max_iterations = parse(key, v)?,
            "filter.domain_theta" => {
                let w: f64 = parse(key, v)?;
                self.domain[0] = (-w, w);
            }
            "filter.domain_theta_dot" => {
                let w: f64 = parse(key, v)?;
                self.domain[1] = (-w, w);
            }
            "filter.qp_eta" => self.qp.eta = parse(key, v)?,
            "kernel.lengthscales" => self.kernel.lengthscales = parse_list(key, v)?,
            "kernel.signal_variance" => self.kernel.signal_variance = parse(key, v)?,
            "kernel.noise_variance" => self.kernel.noise_variance = parse(key, v)?,
            "kernel.mean_degree" => self.gp_mean_degree = parse(key, v)?,
            "kernel.max_points" => self.gp_max_points = parse(key, v)?,
            "env.fit_base_model" => self.fit_base_model = parse(key, v)?,
            _ => return Err(HarnessError::Config(format!("unknown key `{key}`"))),
        }
        self.sync_bounds();
        Ok(())
    }

    /// Every key with its current value, in a form [`Self::from_text`] reads.
    pub fn to_text(&self) -> String {
        let f = &self.filter;
        let radius = f.local_radius.as_deref().map(join).unwrap_or_default();
        let pairs: Vec<(&str, String)> = vec![
            ("run.algorithm", self.algorithm.as_str().into()),
            ("run.episodes", self.episodes.to_string()),
            ("run.steps", self.steps.to_string()),
            ("run.seeds", join(&self.seeds)),
            ("run.out", self.out.display().to_string()),
            ("run.warmup_episodes", self.warmup_episodes.to_string()),
            ("run.warmup_action", self.warmup_action.to_string()),
            ("env.mass", self.true_params.mass.to_string()),
            ("env.length", self.true_params.length.to_string()),
            ("env.nominal_mass", self.nominal_params.mass.to_string()),
            ("env.nominal_length", self.nominal_params.length.to_string()),
            ("env.gravity", self.true_params.gravity.to_string()),
            ("env.dt", self.true_params.dt.to_string()),
            ("env.max_torque", self.true_params.max_torque.to_string()),
            ("env.max_speed", self.true_params.max_speed.to_string()),
            ("env.init_theta", self.init.theta.1.to_string()),
            ("env.init_theta_dot", self.init.theta_dot.1.to_string()),
            ("env.cheb_degree", self.cheb_degree.to_string()),
            ("env.filter_sin_degree", self.filter_sin_degree.to_string()),
            ("env.fit_base_model", self.fit_base_model.to_string()),
            ("agent.gamma", self.agent.gamma.to_string()),
            ("agent.actor_lr", self.agent.actor_lr.to_string()),
            ("agent.critic_lr", self.agent.critic_lr.to_string()),
            ("agent.tau", self.agent.tau.to_string()),
            ("agent.replay_capacity", self.agent.replay_capacity.to_string()),
            ("agent.batch_size", self.agent.batch_size.to_string()),
            ("agent.hidden", join(&self.agent.hidden)),
            ("agent.noise_sigma", self.agent.noise_sigma.to_string()),
            ("agent.noise_decay", self.agent.noise_decay.to_string()),
            ("agent.prior_hidden", join(&self.prior.hidden)),
            ("agent.prior_lr", self.prior.lr.to_string()),
            ("agent.prior_steps", self.prior.steps.to_string()),
            ("agent.prior_batch_size", self.prior.batch_size.to_string()),
            ("agent.prior_history", self.prior.history_cap.to_string()),
            ("filter.deg_a", f.deg_a.to_string()),
            ("filter.deg_l", f.deg_l.to_string()),
            ("filter.deg_m", f.deg_m.to_string()),
            ("filter.rho", f.rho.to_string()),
            ("filter.decay", f.decay.to_string()),
            ("filter.bound_actions_in_sos", f.bound_actions_in_sos.to_string()),
            ("filter.resolve_every", f.resolve_every.to_string()),
            ("filter.local_radius", radius),
            ("filter.eps_cap", f.eps_cap.to_string()),
            ("filter.max_gram", f.max_gram.to_string()),
            ("filter.escalation", f.escalation.to_string()),
            ("filter.tolerance", f.solver.tolerance.to_string()),
            ("filter.max_iterations", f.solver.max_iterations.to_string()),
            ("filter.domain_theta", self.domain[0].1.to_string()),
            ("filter.domain_theta_dot", self.domain[1].1.to_string()),
            ("filter.qp_eta", self.qp.eta.to_string()),
            ("kernel.lengthscales", join(&self.kernel.lengthscales)),
            ("kernel.signal_variance", self.kernel.signal_variance.to_string()),
            ("kernel.noise_variance", self.kernel.noise_variance.to_string()),
            ("kernel.mean_degree", self.gp_mean_degree.to_string()),
            ("kernel.max_points", self.gp_max_points.to_string()),
        ];
        let mut out = String::new();
        for (k, v) in pairs {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    /// Every component shares the torque bounds of the environment.
    fn sync_bounds(&mut self) {
        let t = self.true_params.max_torque;
        let b = vec![(-t, t)];
        self.agent.action_bounds = b.clone();
        self.prior.action_bounds = b.clone();
        self.filter.action_bounds = b.clone();
        self.qp.action_bounds = b;
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Config(m.into()));
        if self.episodes == 0 || self.steps == 0 {
            return bad("episodes and steps must be at least 1");
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required");
        }
        if !(self.warmup_action >= 0.0) {
            return bad("warmup_action must be nonnegative");
        }
        if self.gp_max_points == 0 {
            return bad("kernel.max_points must be positive");
        }
        if self.kernel.lengthscales.len() != 2 {
            return bad("kernel.lengthscales needs one value per state dimension");
        }
        self.true_params.validate()?;
        self.nominal_params.validate()?;
        self.agent.validate()?;
        self.filter.validate()?;
        self.kernel.validate()?;
        Ok(())
    }
}
