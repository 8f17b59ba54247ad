//! Fixed-capacity replay buffer with FIFO eviction.

use crate::error::{Error, Result};
use crate::math::RngStream;

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
}

#[derive(Debug, Clone)]
pub struct ReplayBuffer<T> {
    items: Vec<T>,
    capacity: usize,
    /// Slot the next push overwrites once the buffer is full.
    head: usize,
}

impl<T> ReplayBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay buffer capacity must be positive");
        Self { items: Vec::with_capacity(capacity.min(1 << 16)), capacity, head: 0 }
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

    pub fn push(&mut self, item: T) {
        if self.items.len() < self.capacity {
            self.items.push(item);
        } else {
            self.items[self.head] = item;
            self.head = (self.head + 1) % self.capacity;
        }
    }

    /// Oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.items[self.head..].iter().chain(&self.items[..self.head])
    }

    /// `batch` uniform draws with replacement from the filled region.
    pub fn sample_indices(&self, batch: usize, rng: &mut RngStream) -> Result<Vec<usize>> {
        if self.items.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        Ok((0..batch).map(|_| rng.below(self.items.len())).collect())
    }

    pub fn sample(&self, batch: usize, rng: &mut RngStream) -> Result<Vec<&T>> {
        Ok(self.sample_indices(batch, rng)?.into_iter().map(|i| &self.items[i]).collect())
    }
}
