use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Adam, DdpgError, Grads, Mlp, MlpSpec, OutputMap};

#[derive(Clone, Debug, PartialEq)]
pub struct PriorConfig {
    pub hidden: Vec<usize>,
    pub lr: f64,
    /// Gradient steps per fit.
    pub steps: usize,
    pub batch_size: usize,
    /// Most recent pairs kept for fitting.
    pub history_cap: usize,
    pub action_bounds: Vec<(f64, f64)>,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            lr: 3e-3,
            steps: 200,
            batch_size: 128,
            history_cap: 5000,
            action_bounds: vec![(-15.0, 15.0)],
        }
    }
}

/// Network that absorbs past filter corrections so later episodes need
/// smaller ones. Trained on pairs `(s, a_prior(s) + a_cbf)` collected while
/// acting.
#[derive(Clone, Debug)]
pub struct PriorController {
    pub cfg: PriorConfig,
    pub net: Mlp,
    opt: Adam,
    history: VecDeque<(Vec<f64>, Vec<f64>)>,
    rng: ChaCha8Rng,
}

impl PriorController {
    pub fn new(state_dim: usize, cfg: PriorConfig, seed: u64) -> Result<Self, DdpgError> {
        if cfg.steps == 0 || cfg.batch_size == 0 || !(cfg.lr > 0.0) {
            return Err(DdpgError::InvalidConfig("prior fit needs positive steps, batch and rate".into()));
        }
        let mut widths = vec![state_dim];
        widths.extend(&cfg.hidden);
        widths.push(cfg.action_bounds.len());
        let mut spec = MlpSpec::new(widths, OutputMap::Squashed(cfg.action_bounds.clone()));
        spec.zero_last_layer = true;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = Mlp::new(spec, &mut rng)?;
        Ok(Self { opt: Adam::new(cfg.lr, &net), net, history: VecDeque::new(), rng, cfg })
    }

    pub fn eval(&self, state: &[f64]) -> Vec<f64> {
        self.net.forward(state)
    }

    pub fn push(&mut self, state: Vec<f64>, target: Vec<f64>) {
        if self.history.len() == self.cfg.history_cap {
            self.history.pop_front();
        }
        self.history.push_back((state, target));
    }

    pub fn history_len(&self) -> usize {
        self.history.len()
    }

    /// Mean squared error over the stored pairs.
    pub fn loss(&self) -> f64 {
        if self.history.is_empty() {
            return 0.0;
        }
        let total: f64 = self
            .history
            .iter()
            .map(|(s, t)| self.net.forward(s).iter().zip(t).map(|(o, y)| (o - y).powi(2)).sum::<f64>())
            .sum();
        total / self.history.len() as f64
    }

    /// Runs the configured number of minibatch steps. Returns the loss before
    /// and after, or `None` with no history.
    pub fn fit(&mut self) -> Result<Option<(f64, f64)>, DdpgError> {
        if self.history.is_empty() {
            return Ok(None);
        }
        let before = self.loss();
        let n = self.history.len();
        let bs = self.cfg.batch_size.min(n);
        for _ in 0..self.cfg.steps {
            let mut g = Grads::zeros_like(&self.net);
            for _ in 0..bs {
                let (s, y) = &self.history[self.rng.random_range(0..n)];
                let tr = self.net.forward_trace(s);
                let d: Vec<f64> = tr.output.iter().zip(y).map(|(o, t)| 2.0 * (o - t) / bs as f64).collect();
                g.add_assign(&self.net.backward(&tr, &d).0);
            }
            self.opt.step(&mut self.net, &g);
        }
        if !self.net.all_finite() {
            return Err(DdpgError::NonFinite("prior controller parameters".into()));
        }
        Ok(Some((before, self.loss())))
    }
}
