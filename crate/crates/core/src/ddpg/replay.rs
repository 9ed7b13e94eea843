use std::collections::VecDeque;

use rand::Rng;

use super::Transition;

/// FIFO replay memory with uniform sampling.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<Transition>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self { capacity: capacity.max(1), items: VecDeque::with_capacity(capacity.min(1 << 16)) }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
    }

    pub fn get(&self, i: usize) -> Option<&Transition> {
        self.items.get(i)
    }

    /// Indices drawn uniformly with replacement.
    pub fn sample_indices<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<usize> {
        if self.items.is_empty() {
            return Vec::new();
        }
        (0..n).map(|_| rng.random_range(0..self.items.len())).collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Transition> {
        self.sample_indices(n, rng).into_iter().map(|i| self.items[i].clone()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tr(r: f64) -> Transition {
        Transition {
            state: vec![0.0],
            a_total: vec![0.0],
            a_rl: vec![0.0],
            a_prior: vec![0.0],
            a_cbf: vec![0.0],
            reward: r,
            next_state: vec![0.0],
            done: false,
        }
    }

    #[test]
    fn evicts_oldest() {
        let mut b = ReplayBuffer::new(3);
        for i in 0..5 {
            b.push(tr(i as f64));
        }
        assert_eq!(b.len(), 3);
        assert_eq!(b.get(0).unwrap().reward, 2.0);
        assert_eq!(b.get(2).unwrap().reward, 4.0);
    }

    #[test]
    fn sampling_covers_indices() {
        let mut b = ReplayBuffer::new(100);
        for i in 0..100 {
            b.push(tr(i as f64));
        }
        let mut counts = [0usize; 100];
        for i in b.sample_indices(10_000, &mut ChaCha8Rng::seed_from_u64(9)) {
            counts[i] += 1;
        }
        // expectation 100 per index
        assert!(counts.iter().all(|&c| c > 20 && c < 500), "{counts:?}");
    }
}
