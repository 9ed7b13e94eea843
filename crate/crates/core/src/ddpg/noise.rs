use rand::Rng;
use rand_distr::StandardNormal;

/// Discrete Ornstein-Uhlenbeck process `x <- x - theta x + sigma N(0, I)`.
#[derive(Clone, Debug, PartialEq)]
pub struct OuNoise {
    pub theta: f64,
    pub sigma: f64,
    state: Vec<f64>,
}

impl OuNoise {
    pub const DEFAULT_THETA: f64 = 0.15;

    pub fn new(dim: usize, sigma: f64) -> Self {
        Self { theta: Self::DEFAULT_THETA, sigma, state: vec![0.0; dim] }
    }

    pub fn reset(&mut self) {
        self.state.iter_mut().for_each(|v| *v = 0.0);
    }

    pub fn sample<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Vec<f64> {
        for x in &mut self.state {
            let n: f64 = rng.sample(StandardNormal);
            *x += -self.theta * *x + self.sigma * n;
        }
        self.state.clone()
    }
}
