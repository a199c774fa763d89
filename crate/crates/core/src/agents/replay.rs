use crate::envs::Action;
use crate::error::{Error, Result};
use crate::rng::RngHandle;

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Action,
    pub reward: f64,
    pub next_state: Vec<f64>,
    /// True only for natural termination; cap truncation still bootstraps.
    pub done: bool,
}

/// Fixed-capacity FIFO ring with uniform sampling (with replacement).
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    /// Slot the next push overwrites once the ring is full.
    head: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            head: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.head] = t;
            self.head = (self.head + 1) % self.capacity;
        }
    }

    /// Transitions from oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        let (newer, older) = self.items.split_at(self.head);
        older.iter().chain(newer)
    }

    /// `batch_size` uniform draws with replacement.
    pub fn sample(&self, batch_size: usize, rng: &mut RngHandle) -> Result<Vec<&Transition>> {
        if self.items.is_empty() {
            return Err(Error::Contract("sampling from an empty replay buffer".into()));
        }
        Ok((0..batch_size)
            .map(|_| &self.items[rng.index(self.items.len())])
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(r: f64) -> Transition {
        Transition {
            state: vec![r],
            action: Action::Discrete(0),
            reward: r,
            next_state: vec![r],
            done: false,
        }
    }

    #[test]
    fn fifo_eviction() {
        let mut b = ReplayBuffer::new(2);
        b.push(t(1.0));
        b.push(t(2.0));
        b.push(t(3.0));
        let rewards: Vec<f64> = b.iter().map(|x| x.reward).collect();
        assert_eq!(rewards, vec![2.0, 3.0]);
        b.push(t(4.0));
        let rewards: Vec<f64> = b.iter().map(|x| x.reward).collect();
        assert_eq!(rewards, vec![3.0, 4.0]);
    }

    #[test]
    fn single_item_sampled_with_replacement() {
        let mut b = ReplayBuffer::new(4);
        b.push(t(1.0));
        let batch = b.sample(3, &mut RngHandle::new(0)).unwrap();
        assert_eq!(batch.len(), 3);
        assert!(batch.iter().all(|x| x.reward == 1.0));
    }

    #[test]
    fn empty_sample_is_contract_error() {
        let b = ReplayBuffer::new(4);
        assert!(matches!(b.sample(1, &mut RngHandle::new(0)), Err(Error::Contract(_))));
    }

    #[test]
    fn sampling_is_uniform() {
        let mut b = ReplayBuffer::new(10);
        for i in 0..10 {
            b.push(t(i as f64));
        }
        let mut rng = RngHandle::new(123);
        let mut counts = [0usize; 10];
        for _ in 0..10_000 {
            counts[b.sample(1, &mut rng).unwrap()[0].reward as usize] += 1;
        }
        // Binomial(10^4, 0.1): sigma = sqrt(10^4 * 0.1 * 0.9) = 30.
        for c in counts {
            assert!((c as f64 - 1000.0).abs() <= 90.0, "{counts:?}");
        }
    }
}
