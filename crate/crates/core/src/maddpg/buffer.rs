use ndarray::{Array1, Array2};
use rand::Rng;

use crate::error::{Error, Result};

/// One joint step: every agent's observation, action and reward.
///
/// Actions are the exploration-perturbed actor outputs after clamping to
/// `[-1, 1]`, i.e. exactly what the environment was given.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub observations: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    pub next_observations: Vec<Vec<f64>>,
    pub done: bool,
}

/// A sampled minibatch with joint observations and actions concatenated
/// agent by agent along the columns.
#[derive(Clone, Debug)]
pub struct Batch {
    pub observations: Array2<f64>,
    pub actions: Array2<f64>,
    /// `B × N`
    pub rewards: Array2<f64>,
    pub next_observations: Array2<f64>,
    /// 1.0 for terminal transitions.
    pub done: Array1<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.rewards.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Fixed-capacity ring of transitions stored as flat rows.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    n_agents: usize,
    obs_dim: usize,
    action_dim: usize,
    row_width: usize,
    data: Vec<f64>,
    len: usize,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, n_agents: usize, obs_dim: usize, action_dim: usize) -> Self {
        let row_width = 2 * n_agents * obs_dim + n_agents * action_dim + n_agents + 1;
        Self {
            capacity,
            n_agents,
            obs_dim,
            action_dim,
            row_width,
            data: Vec::new(),
            len: 0,
            next: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    fn check(&self, t: &Transition) -> Result<()> {
        let n = self.n_agents;
        let shape_ok = t.observations.len() == n
            && t.next_observations.len() == n
            && t.actions.len() == n
            && t.rewards.len() == n
            && t.observations.iter().all(|o| o.len() == self.obs_dim)
            && t.next_observations.iter().all(|o| o.len() == self.obs_dim)
            && t.actions.iter().all(|a| a.len() == self.action_dim);
        if !shape_ok {
            return Err(Error::Dimension("transition does not match buffer layout".into()));
        }
        Ok(())
    }

    /// Appends a transition, overwriting the oldest one when full.
    pub fn push(&mut self, t: &Transition) -> Result<()> {
        self.check(t)?;
        if self.capacity == 0 {
            return Ok(());
        }
        let mut row = Vec::with_capacity(self.row_width);
        row.extend(t.observations.iter().flatten());
        row.extend(t.actions.iter().flatten());
        row.extend(&t.rewards);
        row.extend(t.next_observations.iter().flatten());
        row.push(if t.done { 1.0 } else { 0.0 });
        if self.len < self.capacity {
            self.data.extend_from_slice(&row);
            self.len += 1;
        } else {
            let start = self.next * self.row_width;
            self.data[start..start + self.row_width].copy_from_slice(&row);
        }
        self.next = (self.next + 1) % self.capacity;
        Ok(())
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.row_width..(i + 1) * self.row_width]
    }

    /// Stored transition at ring slot `i`.
    pub fn get(&self, i: usize) -> Option<Transition> {
        if i >= self.len {
            return None;
        }
        let row = self.row(i);
        let (n, d, a) = (self.n_agents, self.obs_dim, self.action_dim);
        let (obs, rest) = row.split_at(n * d);
        let (act, rest) = rest.split_at(n * a);
        let (rew, rest) = rest.split_at(n);
        let (next, done) = rest.split_at(n * d);
        Some(Transition {
            observations: obs.chunks(d).map(<[f64]>::to_vec).collect(),
            actions: act.chunks(a).map(<[f64]>::to_vec).collect(),
            rewards: rew.to_vec(),
            next_observations: next.chunks(d).map(<[f64]>::to_vec).collect(),
            done: done[0] != 0.0,
        })
    }

    /// Indices drawn uniformly without replacement.
    pub fn sample_indices<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Result<Vec<usize>> {
        if batch_size == 0 || batch_size > self.len {
            return Err(Error::Dimension(format!(
                "cannot draw {batch_size} distinct transitions from {}",
                self.len
            )));
        }
        Ok(rand::seq::index::sample(rng, self.len, batch_size).into_vec())
    }

    pub fn gather(&self, indices: &[usize]) -> Batch {
        let (n, d, a) = (self.n_agents, self.obs_dim, self.action_dim);
        let b = indices.len();
        let mut batch = Batch {
            observations: Array2::zeros((b, n * d)),
            actions: Array2::zeros((b, n * a)),
            rewards: Array2::zeros((b, n)),
            next_observations: Array2::zeros((b, n * d)),
            done: Array1::zeros(b),
        };
        for (r, &i) in indices.iter().enumerate() {
            let row = self.row(i);
            let (obs, rest) = row.split_at(n * d);
            let (act, rest) = rest.split_at(n * a);
            let (rew, rest) = rest.split_at(n);
            let (next, done) = rest.split_at(n * d);
            copy_row(&mut batch.observations, r, obs);
            copy_row(&mut batch.actions, r, act);
            copy_row(&mut batch.rewards, r, rew);
            copy_row(&mut batch.next_observations, r, next);
            batch.done[r] = done[0];
        }
        batch
    }

    pub fn sample<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Result<Batch> {
        let idx = self.sample_indices(batch_size, rng)?;
        Ok(self.gather(&idx))
    }
}

fn copy_row(dst: &mut Array2<f64>, r: usize, src: &[f64]) {
    dst.row_mut(r)
        .as_slice_mut()
        .expect("standard layout")
        .copy_from_slice(src);
}
