//! Replay buffer with reward-over-threshold prioritization.
//!
//! Insert priority is the amount by which the transition's reward exceeds a
//! running mean of recently inserted rewards (floored at a small positive
//! constant). Sampling is proportional to priority, with replacement. At
//! capacity the lowest-priority record among the residents and the newcomer
//! is dropped, so the retained-set minimum priority never decreases.

use super::Transition;
use crate::{Error, Result};
use rand::Rng;
use std::collections::VecDeque;

const EPS_PRIORITY: f64 = 1e-3;
const THRESHOLD_WINDOW: usize = 256;

struct Stored {
    transition: Transition,
    priority: f64,
}

pub struct ReplayBuffer {
    capacity: usize,
    entries: Vec<Stored>,
    recent_rewards: VecDeque<f64>,
    recent_sum: f64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            entries: Vec::new(),
            recent_rewards: VecDeque::with_capacity(THRESHOLD_WINDOW),
            recent_sum: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Running mean of recently inserted rewards.
    pub fn reward_threshold(&self) -> f64 {
        if self.recent_rewards.is_empty() {
            0.0
        } else {
            self.recent_sum / self.recent_rewards.len() as f64
        }
    }

    pub fn min_priority(&self) -> Option<f64> {
        self.entries.iter().map(|s| s.priority).reduce(f64::min)
    }

    pub fn insert(&mut self, transition: Transition) {
        let priority = (transition.reward - self.reward_threshold()).max(EPS_PRIORITY);
        self.recent_sum += transition.reward;
        self.recent_rewards.push_back(transition.reward);
        if self.recent_rewards.len() > THRESHOLD_WINDOW {
            self.recent_sum -= self.recent_rewards.pop_front().unwrap();
        }
        self.insert_with_priority(transition, priority);
    }

    /// Inserts at an explicit priority (floored at the epsilon), applying
    /// the same eviction rule as [`insert`](Self::insert).
    pub fn insert_with_priority(&mut self, transition: Transition, priority: f64) {
        let priority = priority.max(EPS_PRIORITY);
        if self.entries.len() < self.capacity {
            self.entries.push(Stored {
                transition,
                priority,
            });
            return;
        }
        // Full: drop the overall lowest-priority record, newcomer included.
        let (min_idx, min_priority) = self
            .entries
            .iter()
            .enumerate()
            .map(|(i, s)| (i, s.priority))
            .fold((usize::MAX, f64::INFINITY), |acc, cur| {
                if cur.1 < acc.1 {
                    cur
                } else {
                    acc
                }
            });
        if priority <= min_priority {
            return;
        }
        self.entries[min_idx] = Stored {
            transition,
            priority,
        };
    }

    /// Draws `batch_size` records with probability proportional to priority,
    /// with replacement.
    pub fn sample(&self, batch_size: usize, rng: &mut impl Rng) -> Result<Vec<&Transition>> {
        if self.entries.is_empty() {
            return Err(Error::InvalidParameter(
                "cannot sample from an empty replay buffer".into(),
            ));
        }
        let mut prefix = Vec::with_capacity(self.entries.len());
        let mut total = 0.0;
        for s in &self.entries {
            total += s.priority;
            prefix.push(total);
        }
        let mut out = Vec::with_capacity(batch_size);
        for _ in 0..batch_size {
            let u = rng.random_range(0.0..total);
            let idx = prefix
                .partition_point(|&p| p <= u)
                .min(self.entries.len() - 1);
            out.push(&self.entries[idx].transition);
        }
        Ok(out)
    }
}
