//! One constrained DQN learner per UAV.

use std::collections::VecDeque;

use rand::seq::index::sample;
use rand::Rng;

use crate::env::Observation;
use crate::error::{config_err, Error, Result};
use crate::lagrange::{pid_init, LagrangeState, PidGains};
use crate::neural::{AdamState, Matrix, NetHyper, QNetworkParams, Tape};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearnConfig {
    pub lr: f64,
    pub gamma: f64,
    pub beta: f64,
    pub batch_size: usize,
    pub replay_capacity: usize,
}

impl Default for LearnConfig {
    fn default() -> Self {
        Self { lr: 1e-3, gamma: 0.98, beta: 0.01, batch_size: 32, replay_capacity: 2000 }
    }
}

impl LearnConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(config_err(format!("learning.lr must be > 0, got {}", self.lr)));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(config_err(format!("learning.gamma must be in [0, 1], got {}", self.gamma)));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(config_err(format!("learning.beta must be in (0, 1], got {}", self.beta)));
        }
        if self.batch_size == 0 || self.replay_capacity < self.batch_size {
            return Err(config_err("learning.batch_size must be >= 1 and <= learning.replay_capacity"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Observation,
    pub action: usize,
    pub reward: f64,
    pub next_obs: Observation,
    pub cost: f64,
    pub terminal: bool,
}

/// Fixed-capacity FIFO of transitions.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayMemory {
    capacity: usize,
    items: VecDeque<Transition>,
}

impl ReplayMemory {
    pub fn new(capacity: usize) -> Self {
        Self { capacity, items: VecDeque::with_capacity(capacity) }
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
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
    }

    /// Oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    pub fn get(&self, i: usize) -> Option<&Transition> {
        self.items.get(i)
    }
}

/// `R` for terminal samples, else `R + gamma * max_next_q - lambda * c`.
pub fn td_target(reward: f64, cost: f64, terminal: bool, max_next_q: f64, gamma: f64, lambda: f64) -> f64 {
    if terminal {
        reward
    } else {
        reward + gamma * max_next_q - lambda * cost
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn stack(observations: &[&Observation]) -> Result<Matrix> {
    let n = observations[0].n_nodes();
    let cols = observations[0].nodes.cols();
    let mut data = Vec::with_capacity(observations.len() * n * cols);
    for o in observations {
        if o.nodes.shape() != (n, cols) {
            return Err(Error::Shape("observations in one batch differ in shape".into()));
        }
        data.extend_from_slice(o.nodes.as_slice());
    }
    Matrix::from_vec(observations.len() * n, cols, data)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    /// UAV id, also the agent's own node in every observation.
    pub id: usize,
    pub learn: LearnConfig,
    pub q: QNetworkParams,
    pub target: QNetworkParams,
    pub optimizer: AdamState,
    pub replay: ReplayMemory,
    pub lagrange: LagrangeState,
}

impl Agent {
    /// Fresh agent; the target network starts as a copy of the online one.
    pub fn new<R: Rng + ?Sized>(id: usize, hyper: NetHyper, learn: LearnConfig, gains: PidGains, rng: &mut R) -> Result<Self> {
        learn.validate()?;
        let q = QNetworkParams::init(hyper, rng)?;
        let optimizer = AdamState::new(&q.shapes());
        Ok(Self {
            id,
            learn,
            target: q.clone(),
            q,
            optimizer,
            replay: ReplayMemory::new(learn.replay_capacity),
            lagrange: pid_init(gains)?,
        })
    }

    pub fn action_count(&self) -> usize {
        self.q.hyper.action_count
    }

    pub fn q_values(&self, obs: &Observation) -> Result<Vec<f64>> {
        self.q.q_values(&obs.nodes, self.id)
    }

    /// Epsilon-greedy. With `epsilon == 0` no randomness is consumed.
    pub fn select_action<R: Rng + ?Sized>(&self, obs: &Observation, epsilon: f64, rng: &mut R) -> Result<usize> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(config_err(format!("epsilon must be in [0, 1], got {epsilon}")));
        }
        if epsilon > 0.0 && rng.random::<f64>() < epsilon {
            return Ok(rng.random_range(0..self.action_count()));
        }
        Ok(argmax(&self.q_values(obs)?))
    }

    pub fn remember(&mut self, t: Transition) {
        self.replay.push(t);
    }

    /// Targets for a batch, using the target network and the agent's current multiplier.
    pub fn td_targets(&self, batch: &[&Transition]) -> Result<Vec<f64>> {
        if batch.is_empty() {
            return Err(config_err("td_targets needs a non-empty batch"));
        }
        let next: Vec<&Observation> = batch.iter().map(|t| &t.next_obs).collect();
        let nodes = next[0].n_nodes();
        let q_next = self.target.q_values_batch(stack(&next)?, nodes, &vec![self.id; batch.len()])?;
        let lambda = self.lagrange.lambda;
        Ok(batch
            .iter()
            .enumerate()
            .map(|(r, t)| {
                let max_q = q_next.row(r).iter().copied().fold(f64::NEG_INFINITY, f64::max);
                td_target(t.reward, t.cost, t.terminal, max_q, self.learn.gamma, lambda)
            })
            .collect())
    }

    /// One gradient step on the given batch; returns the mean squared TD error.
    pub fn train_on(&mut self, batch: &[&Transition]) -> Result<f64> {
        let targets = self.td_targets(batch)?;
        let obs: Vec<&Observation> = batch.iter().map(|t| &t.obs).collect();
        let nodes = obs[0].n_nodes();
        let mut tape = Tape::new();
        let raw = tape.input(stack(&obs)?)?;
        let out = self.q.forward(&mut tape, raw, nodes, &vec![self.id; batch.len()])?;
        let taken = tape.pick_cols(out.q_values, batch.iter().map(|t| t.action).collect())?;
        let loss = tape.mse(taken, targets)?;
        let value = tape.value(loss).get(0, 0);
        let grads = tape.backward(loss, &self.q.shapes())?;
        self.optimizer.step(&mut self.q.tensors, &grads, self.learn.lr)?;
        Ok(value)
    }

    /// Samples a minibatch without replacement and trains on it.
    /// Returns `None` while the replay holds fewer than one batch.
    pub fn learn_step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<Option<f64>> {
        let b = self.learn.batch_size;
        if self.replay.len() < b {
            return Ok(None);
        }
        let picks = sample(rng, self.replay.len(), b).into_vec();
        let replay = std::mem::replace(&mut self.replay, ReplayMemory::new(0));
        let batch: Vec<&Transition> = picks.iter().map(|&i| &replay.items[i]).collect();
        let result = self.train_on(&batch);
        self.replay = replay;
        result.map(Some)
    }

    pub fn soft_update(&mut self) -> Result<()> {
        self.target.soft_update_from(&self.q, self.learn.beta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::NODE_FEATURES;
    use crate::neural::AttentionScale;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn hyper(actions: usize) -> NetHyper {
        NetHyper {
            in_features: NODE_FEATURES,
            feature_width: 8,
            heads: 8,
            head_hidden: 16,
            action_count: actions,
            attention_scale: AttentionScale::InvSqrt,
        }
    }

    fn obs(seed: u64) -> Observation {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..3 * NODE_FEATURES).map(|_| rng.random_range(-1.0..1.0)).collect();
        Observation { nodes: Matrix::from_vec(3, NODE_FEATURES, data).unwrap() }
    }

    fn transition(seed: u64, terminal: bool) -> Transition {
        Transition { obs: obs(seed), action: (seed % 2) as usize, reward: 1.0, next_obs: obs(seed + 100), cost: 0.4, terminal }
    }

    #[test]
    fn td_target_examples() {
        assert_eq!(td_target(2.0, 9.0, true, 5.0, 0.98, 3.0), 2.0);
        assert!((td_target(1.0, 0.4, false, 2.0, 0.98, 0.5) - 2.76).abs() < 1e-12);
        assert_eq!(td_target(1.0, 0.4, false, 2.0, 0.98, 0.0), 1.0 + 0.98 * 2.0);
    }

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(argmax(&[1.0, 1.0, 1.0]), 0);
        assert_eq!(argmax(&[0.0, 2.0, 2.0]), 1);
    }

    #[test]
    fn replay_evicts_oldest() {
        let mut m = ReplayMemory::new(3);
        for s in 0..5 {
            m.push(transition(s, false));
        }
        assert_eq!(m.len(), 3);
        assert_eq!(m.get(0).unwrap().obs, obs(2));
    }

    #[test]
    fn learn_step_waits_for_a_full_batch() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let learn = LearnConfig { batch_size: 4, ..Default::default() };
        let mut a = Agent::new(0, hyper(2), learn, PidGains::default(), &mut rng).unwrap();
        for s in 0..3 {
            a.remember(transition(s, false));
        }
        let before = a.q.clone();
        assert_eq!(a.learn_step(&mut rng).unwrap(), None);
        assert_eq!(a.q, before);
        a.remember(transition(3, true));
        assert!(a.learn_step(&mut rng).unwrap().is_some());
        assert_ne!(a.q, before);
    }

    #[test]
    fn single_sample_loss_is_squared_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut a = Agent::new(1, hyper(2), LearnConfig::default(), PidGains::default(), &mut rng).unwrap();
        let t = transition(7, false);
        let y = a.td_targets(&[&t]).unwrap()[0];
        let q = a.q_values(&t.obs).unwrap()[t.action];
        let loss = a.train_on(&[&t]).unwrap();
        assert!((loss - (y - q).powi(2)).abs() < 1e-12);
    }

    #[test]
    fn greedy_selection_is_pure() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = Agent::new(0, hyper(3), LearnConfig::default(), PidGains::default(), &mut rng).unwrap();
        let o = obs(1);
        let mut r1 = ChaCha8Rng::seed_from_u64(9);
        let r2 = r1.clone();
        let pick = a.select_action(&o, 0.0, &mut r1).unwrap();
        assert_eq!(pick, argmax(&a.q_values(&o).unwrap()));
        assert_eq!(r1, r2);
    }

    #[test]
    fn soft_update_tracks_online() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut a = Agent::new(0, hyper(2), LearnConfig::default(), PidGains::default(), &mut rng).unwrap();
        a.q.tensors[0].fill(1.0);
        a.target.tensors[0].fill(0.0);
        a.soft_update().unwrap();
        assert!(a.target.tensors[0].as_slice().iter().all(|&x| (x - 0.01).abs() < 1e-15));
    }
}
