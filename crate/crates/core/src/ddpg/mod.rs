//! Deterministic policy gradient agent and the prior controller network.
//!
//! The critic scores the executed action `a_total = clamp(a_rl + a_prior +
//! a_cbf)`. When the actor is updated the prior and filter contributions of
//! each sample are held fixed, so only `a_rl` moves.

mod checkpoint;
mod mlp;
mod noise;
mod prior;
mod replay;

pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_VERSION};
pub use mlp::{Adam, Grads, Layer, Mlp, MlpSpec, OutputMap, Trace};
pub use noise::OuNoise;
pub use prior::{PriorConfig, PriorController};
pub use replay::ReplayBuffer;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DdpgError {
    #[error("invalid agent configuration: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite values: {0}")]
    NonFinite(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub a_total: Vec<f64>,
    pub a_rl: Vec<f64>,
    pub a_prior: Vec<f64>,
    pub a_cbf: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AgentConfig {
    pub gamma: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    /// Target networks move `tau` of the way to the online ones per update.
    pub tau: f64,
    pub replay_capacity: usize,
    pub batch_size: usize,
    pub hidden: Vec<usize>,
    /// OU noise scale at the start of training, in action units.
    pub noise_sigma: f64,
    /// Multiplies the noise scale after every episode.
    pub noise_decay: f64,
    pub action_bounds: Vec<(f64, f64)>,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            actor_lr: 1e-4,
            critic_lr: 1e-3,
            tau: 0.005,
            replay_capacity: 100_000,
            batch_size: 64,
            hidden: vec![64, 64],
            noise_sigma: 1.5,
            noise_decay: 0.98,
            action_bounds: vec![(-15.0, 15.0)],
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<(), DdpgError> {
        let bad = |m: &str| Err(DdpgError::InvalidConfig(m.into()));
        if !(self.gamma >= 0.0 && self.gamma < 1.0) {
            return bad("gamma must lie in [0, 1)");
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("tau must lie in (0, 1]");
        }
        if !(self.actor_lr > 0.0 && self.critic_lr > 0.0) {
            return bad("learning rates must be positive");
        }
        if self.batch_size == 0 || self.replay_capacity < self.batch_size {
            return bad("replay capacity must hold at least one batch");
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden widths must be positive");
        }
        if !(self.noise_sigma >= 0.0) || !(self.noise_decay > 0.0 && self.noise_decay <= 1.0) {
            return bad("noise scale must be nonnegative and decay in (0, 1]");
        }
        if self.action_bounds.is_empty() || self.action_bounds.iter().any(|(lo, hi)| !(hi > lo)) {
            return bad("action bounds must satisfy lo < hi");
        }
        Ok(())
    }

    fn clamp(&self, a: &mut [f64]) {
        for (v, (lo, hi)) in a.iter_mut().zip(&self.action_bounds) {
            *v = v.clamp(*lo, *hi);
        }
    }
}

/// Losses from one update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UpdateStats {
    /// Mean squared Bellman error before the step.
    pub critic_loss: f64,
    /// Mean critic value of the actor's actions before the step.
    pub actor_objective: f64,
}

#[derive(Clone, Debug)]
pub struct Agent {
    pub cfg: AgentConfig,
    pub actor: Mlp,
    pub critic: Mlp,
    pub actor_target: Mlp,
    pub critic_target: Mlp,
    actor_opt: Adam,
    critic_opt: Adam,
    pub noise: OuNoise,
    pub replay: ReplayBuffer,
    rng: ChaCha8Rng,
}

impl Agent {
    pub fn new(state_dim: usize, cfg: AgentConfig, seed: u64) -> Result<Self, DdpgError> {
        cfg.validate()?;
        let m = cfg.action_bounds.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let widths = |inp: usize, out: usize| {
            let mut w = vec![inp];
            w.extend(&cfg.hidden);
            w.push(out);
            w
        };
        let actor_spec = MlpSpec::new(widths(state_dim, m), OutputMap::Squashed(cfg.action_bounds.clone()));
        let critic_spec = MlpSpec::new(widths(state_dim + m, 1), OutputMap::Linear);
        let actor = Mlp::new(actor_spec, &mut rng)?;
        let critic = Mlp::new(critic_spec, &mut rng)?;
        Ok(Self {
            actor_opt: Adam::new(cfg.actor_lr, &actor),
            critic_opt: Adam::new(cfg.critic_lr, &critic),
            actor_target: actor.clone(),
            critic_target: critic.clone(),
            actor,
            critic,
            noise: OuNoise::new(m, cfg.noise_sigma),
            replay: ReplayBuffer::new(cfg.replay_capacity),
            rng,
            cfg,
        })
    }

    pub fn act(&mut self, state: &[f64], explore: bool) -> Vec<f64> {
        let mut a = self.actor.forward(state);
        if explore {
            let n = self.noise.sample(&mut self.rng);
            a.iter_mut().zip(n).for_each(|(v, e)| *v += e);
        }
        self.cfg.clamp(&mut a);
        a
    }

    /// Resets the noise process and shrinks its scale for the next episode.
    pub fn end_episode(&mut self) {
        self.noise.reset();
        self.noise.sigma *= self.cfg.noise_decay;
    }

    pub fn remember(&mut self, t: Transition) {
        self.replay.push(t);
    }

    /// One update on a uniformly sampled batch, once the buffer holds one.
    pub fn train_step(&mut self) -> Result<Option<UpdateStats>, DdpgError> {
        if self.replay.len() < self.cfg.batch_size {
            return Ok(None);
        }
        let batch = self.replay.sample(self.cfg.batch_size, &mut self.rng);
        self.update(&batch).map(Some)
    }

    /// State followed by the action mapped from its bounds to `[-1, 1]`, so
    /// the critic's tanh units do not start saturated.
    fn critic_input(&self, state: &[f64], action: &[f64]) -> Vec<f64> {
        let scaled: Vec<f64> = action
            .iter()
            .zip(&self.cfg.action_bounds)
            .map(|(a, (lo, hi))| (a - 0.5 * (lo + hi)) / (0.5 * (hi - lo)))
            .collect();
        concat(state, &scaled)
    }

    pub fn q_value(&self, state: &[f64], action: &[f64]) -> f64 {
        self.critic.forward(&self.critic_input(state, action))[0]
    }

    pub fn update(&mut self, batch: &[Transition]) -> Result<UpdateStats, DdpgError> {
        if batch.is_empty() {
            return Err(DdpgError::Shape("empty batch".into()));
        }
        let nb = batch.len() as f64;

        // critic: regress Q(s, a_total) toward r + gamma Q'(s', mu'(s'))
        let mut cg = Grads::zeros_like(&self.critic);
        let mut critic_loss = 0.0;
        for t in batch {
            let y = if t.done || self.cfg.gamma == 0.0 {
                t.reward
            } else {
                let a_next = self.actor_target.forward(&t.next_state);
                t.reward + self.cfg.gamma * self.critic_target.forward(&self.critic_input(&t.next_state, &a_next))[0]
            };
            let tr = self.critic.forward_trace(&self.critic_input(&t.state, &t.a_total));
            let err = tr.output[0] - y;
            critic_loss += err * err / nb;
            let (g, _) = self.critic.backward(&tr, &[2.0 * err / nb]);
            cg.add_assign(&g);
        }

        // actor: ascend Q(s, mu(s) + a_prior + a_cbf) with the offsets fixed
        let mut ag = Grads::zeros_like(&self.actor);
        let mut actor_obj = 0.0;
        let sd = self.actor.input_dim();
        for t in batch {
            let at = self.actor.forward_trace(&t.state);
            let a: Vec<f64> = at.output.iter().zip(&t.a_prior).zip(&t.a_cbf).map(|((r, p), c)| r + p + c).collect();
            let ct = self.critic.forward_trace(&self.critic_input(&t.state, &a));
            actor_obj += ct.output[0] / nb;
            let (_, dx) = self.critic.backward(&ct, &[1.0]);
            let d_out: Vec<f64> =
                dx[sd..].iter().zip(&self.cfg.action_bounds).map(|(v, (lo, hi))| -v / (0.5 * (hi - lo)) / nb).collect();
            let (g, _) = self.actor.backward(&at, &d_out);
            ag.add_assign(&g);
        }
        if !critic_loss.is_finite() || !actor_obj.is_finite() {
            return Err(DdpgError::NonFinite(format!("critic loss {critic_loss}, actor objective {actor_obj}")));
        }
        self.critic_opt.step(&mut self.critic, &cg);
        self.actor_opt.step(&mut self.actor, &ag);
        self.critic_target.blend_from(&self.critic, self.cfg.tau);
        self.actor_target.blend_from(&self.actor, self.cfg.tau);
        for (name, net) in [("actor", &self.actor), ("critic", &self.critic)] {
            if !net.all_finite() {
                return Err(DdpgError::NonFinite(format!("{name} parameters after update")));
            }
        }
        Ok(UpdateStats { critic_loss, actor_objective: actor_obj })
    }

    /// Flat named parameter arrays for checkpointing.
    pub fn named_params(&self) -> Vec<(String, Vec<f64>)> {
        vec![
            ("actor".into(), self.actor.params()),
            ("critic".into(), self.critic.params()),
            ("actor_target".into(), self.actor_target.params()),
            ("critic_target".into(), self.critic_target.params()),
        ]
    }

    pub fn load_named_params(&mut self, arrays: &[(String, Vec<f64>)]) -> Result<(), DdpgError> {
        for (name, values) in arrays {
            let net = match name.as_str() {
                "actor" => &mut self.actor,
                "critic" => &mut self.critic,
                "actor_target" => &mut self.actor_target,
                "critic_target" => &mut self.critic_target,
                _ => continue,
            };
            net.set_params(values)?;
        }
        Ok(())
    }
}

fn concat(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(a.len() + b.len());
    v.extend_from_slice(a);
    v.extend_from_slice(b);
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn batch(seed: u64, n: usize) -> Vec<Transition> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let s = vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
                let a = vec![rng.random_range(-15.0..15.0)];
                Transition {
                    reward: -(s[0] * s[0] + 0.1 * s[1] * s[1]),
                    next_state: s.iter().map(|v| 0.9 * v).collect(),
                    state: s,
                    a_total: a.clone(),
                    a_rl: a,
                    a_prior: vec![0.0],
                    a_cbf: vec![0.0],
                    done: false,
                }
            })
            .collect()
    }

    #[test]
    fn zero_output_actor_acts_zero() {
        let mut agent = Agent::new(2, AgentConfig::default(), 1).unwrap();
        let n = agent.actor.layers.len();
        agent.actor.layers[n - 1].w.fill(0.0);
        agent.actor.layers[n - 1].b.fill(0.0);
        assert_eq!(agent.act(&[0.4, -0.2], false), vec![0.0]);
        assert_eq!(agent.act(&[-3.0, 2.0], false), vec![0.0]);
    }

    #[test]
    fn greedy_action_is_deterministic() {
        let mut agent = Agent::new(2, AgentConfig::default(), 2).unwrap();
        let a = agent.act(&[0.1, 0.2], false);
        assert_eq!(a, agent.act(&[0.1, 0.2], false));
        let explored = agent.act(&[0.1, 0.2], true);
        assert!(explored[0].abs() <= 15.0);
    }

    #[test]
    fn critic_overfits_one_batch() {
        let cfg = AgentConfig { gamma: 0.0, ..AgentConfig::default() };
        let mut agent = Agent::new(2, cfg, 3).unwrap();
        let b = batch(4, 64);
        let first = agent.update(&b).unwrap().critic_loss;
        let mut last = first;
        for _ in 0..49 {
            last = agent.update(&b).unwrap().critic_loss;
        }
        assert!(last <= 0.5 * first, "{first} -> {last}");
    }

    #[test]
    fn full_blend_copies_targets() {
        let cfg = AgentConfig { tau: 1.0, ..AgentConfig::default() };
        let mut agent = Agent::new(2, cfg, 5).unwrap();
        agent.update(&batch(6, 8)).unwrap();
        assert_eq!(agent.actor, agent.actor_target);
        assert_eq!(agent.critic, agent.critic_target);
    }

    #[test]
    fn same_seed_same_agent() {
        let mut a = Agent::new(2, AgentConfig::default(), 9).unwrap();
        let mut b = Agent::new(2, AgentConfig::default(), 9).unwrap();
        for _ in 0..70 {
            for t in batch(1, 1) {
                a.remember(t.clone());
                b.remember(t);
            }
        }
        assert_eq!(a.train_step().unwrap(), b.train_step().unwrap());
        assert_eq!(a.act(&[0.3, 0.3], true), b.act(&[0.3, 0.3], true));
    }

    #[test]
    fn config_validation() {
        assert!(AgentConfig { gamma: 1.0, ..AgentConfig::default() }.validate().is_err());
        assert!(AgentConfig { tau: 0.0, ..AgentConfig::default() }.validate().is_err());
        assert!(AgentConfig { batch_size: 10, replay_capacity: 5, ..AgentConfig::default() }.validate().is_err());
    }
}
