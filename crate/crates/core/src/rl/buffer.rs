//! Fixed-capacity ring buffer of transitions.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f32>,
    pub action: Vec<f32>,
    pub reward: f32,
    pub next_state: Vec<f32>,
    pub done: bool,
}

/// Column-major view of sampled transitions.
#[derive(Debug, Clone, Default)]
pub struct Batch {
    pub size: usize,
    pub states: Vec<f32>,
    pub actions: Vec<f32>,
    pub rewards: Vec<f32>,
    pub next_states: Vec<f32>,
    /// 1.0 where the transition ended an episode.
    pub dones: Vec<f32>,
}

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    state_dim: usize,
    action_dim: usize,
    states: Vec<f32>,
    actions: Vec<f32>,
    rewards: Vec<f32>,
    next_states: Vec<f32>,
    dones: Vec<f32>,
    len: usize,
    cursor: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, state_dim: usize, action_dim: usize) -> Self {
        assert!(capacity > 0, "replay buffer capacity must be positive");
        ReplayBuffer {
            capacity,
            state_dim,
            action_dim,
            states: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            next_states: Vec::new(),
            dones: Vec::new(),
            len: 0,
            cursor: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn push(&mut self, t: &Transition) -> Result<()> {
        self.push_parts(&t.state, &t.action, t.reward, &t.next_state, t.done)
    }

    pub fn push_parts(
        &mut self,
        state: &[f32],
        action: &[f32],
        reward: f32,
        next_state: &[f32],
        done: bool,
    ) -> Result<()> {
        if state.len() != self.state_dim
            || next_state.len() != self.state_dim
            || action.len() != self.action_dim
        {
            return Err(Error::contract(
                "transition shape does not match the buffer",
            ));
        }
        let (sd, ad) = (self.state_dim, self.action_dim);
        let done = if done { 1.0 } else { 0.0 };
        if self.len < self.capacity && self.cursor == self.len {
            self.states.extend_from_slice(state);
            self.actions.extend_from_slice(action);
            self.rewards.push(reward);
            self.next_states.extend_from_slice(next_state);
            self.dones.push(done);
        } else {
            let i = self.cursor;
            self.states[i * sd..(i + 1) * sd].copy_from_slice(state);
            self.actions[i * ad..(i + 1) * ad].copy_from_slice(action);
            self.rewards[i] = reward;
            self.next_states[i * sd..(i + 1) * sd].copy_from_slice(next_state);
            self.dones[i] = done;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
        self.len = (self.len + 1).min(self.capacity);
        Ok(())
    }

    /// `i`-th stored transition counting from the oldest.
    pub fn get(&self, i: usize) -> Option<Transition> {
        if i >= self.len {
            return None;
        }
        let slot = if self.len < self.capacity {
            i
        } else {
            (self.cursor + i) % self.capacity
        };
        Some(self.slot(slot))
    }

    fn slot(&self, i: usize) -> Transition {
        let (sd, ad) = (self.state_dim, self.action_dim);
        Transition {
            state: self.states[i * sd..(i + 1) * sd].to_vec(),
            action: self.actions[i * ad..(i + 1) * ad].to_vec(),
            reward: self.rewards[i],
            next_state: self.next_states[i * sd..(i + 1) * sd].to_vec(),
            done: self.dones[i] != 0.0,
        }
    }

    /// Uniform sample with replacement over the filled slots.
    pub fn sample<R: rand::Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Result<Batch> {
        if batch_size == 0 || self.len < batch_size {
            return Err(Error::contract(format!(
                "cannot sample {batch_size} transitions from {} stored",
                self.len
            )));
        }
        let (sd, ad) = (self.state_dim, self.action_dim);
        let mut b = Batch {
            size: batch_size,
            states: Vec::with_capacity(batch_size * sd),
            actions: Vec::with_capacity(batch_size * ad),
            rewards: Vec::with_capacity(batch_size),
            next_states: Vec::with_capacity(batch_size * sd),
            dones: Vec::with_capacity(batch_size),
        };
        for _ in 0..batch_size {
            let i = rng.random_range(0..self.len);
            b.states
                .extend_from_slice(&self.states[i * sd..(i + 1) * sd]);
            b.actions
                .extend_from_slice(&self.actions[i * ad..(i + 1) * ad]);
            b.rewards.push(self.rewards[i]);
            b.next_states
                .extend_from_slice(&self.next_states[i * sd..(i + 1) * sd]);
            b.dones.push(self.dones[i]);
        }
        Ok(b)
    }
}
