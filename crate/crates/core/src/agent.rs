//! Deep contextual bandit with decaying epsilon-greedy exploration.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::environment::Context;
use crate::neuralnet::{Mlp, MlpCheckpoint, MlpConfig, Scratch};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExplorationSchedule {
    pub initial: f64,
    /// Multiplicative decay per episode.
    pub decay: f64,
    pub min: f64,
}

impl Default for ExplorationSchedule {
    fn default() -> Self {
        Self {
            initial: 1.0,
            decay: 0.9999,
            min: 0.01,
        }
    }
}

impl ExplorationSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.min && self.min <= self.initial && self.initial <= 1.0) {
            return Err(Error::InvalidConfig(
                "exploration: need 0 <= min <= initial <= 1".into(),
            ));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(Error::InvalidConfig(
                "exploration: decay must be in (0, 1]".into(),
            ));
        }
        Ok(())
    }

    /// max(min, epsilon * decay).
    pub fn decay_epsilon(&self, epsilon: f64) -> f64 {
        (epsilon * self.decay).max(self.min)
    }

    /// Closed form after `n` decays from the initial value.
    pub fn epsilon_after(&self, n: u64) -> f64 {
        (self.initial * self.decay.powf(n as f64)).max(self.min)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReplayConfig {
    /// When false the network trains online on each new experience only.
    pub enabled: bool,
    pub capacity: usize,
    pub batch_size: usize,
    /// Persist the buffer in agent checkpoints.
    pub persist: bool,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            capacity: 10_000,
            batch_size: 32,
            persist: false,
        }
    }
}

impl ReplayConfig {
    pub fn online() -> Self {
        Self {
            enabled: false,
            capacity: 1,
            batch_size: 1,
            persist: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.capacity == 0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig(
                "replay: capacity and batch_size must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Experience {
    pub context: Context,
    pub action: usize,
    /// Training target for the taken action.
    pub reward: f64,
}

/// Fixed-capacity ring buffer; the oldest experience is overwritten first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Experience>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            next: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, exp: Experience) {
        if self.items.len() < self.capacity {
            self.items.push(exp);
        } else {
            self.items[self.next] = exp;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    /// Oldest-first iteration.
    pub fn iter(&self) -> impl Iterator<Item = &Experience> {
        let split = if self.items.len() < self.capacity {
            0
        } else {
            self.next
        };
        self.items[split..].iter().chain(&self.items[..split])
    }

    fn get(&self, i: usize) -> &Experience {
        &self.items[i]
    }
}

/// Which AP the agent serves for, and which neighbors form its context.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentBinding {
    pub sap_index: usize,
    pub pap_indices: Vec<usize>,
    pub codebook_size: usize,
}

/// Epsilon-greedy choice: a uniform random beam with probability epsilon,
/// otherwise the argmax of the predictions (lowest index on ties).
pub fn select_action(
    net: &Mlp,
    x: &Context,
    epsilon: f64,
    rng: &mut dyn RngCore,
    scratch: &mut Scratch,
) -> Result<(usize, bool)> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::InvalidArgument(format!(
            "epsilon {epsilon} outside [0, 1]"
        )));
    }
    if rng.gen::<f64>() < epsilon {
        return Ok((rng.gen_range(0..net.outputs()), true));
    }
    Ok((argmax(net.predict(x, scratch)?), false))
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone)]
pub struct Agent {
    net: Mlp,
    schedule: ExplorationSchedule,
    epsilon: f64,
    replay: ReplayConfig,
    buffer: ReplayBuffer,
    rng: ChaCha8Rng,
    binding: AgentBinding,
    scratch: Scratch,
    grad: Vec<f64>,
}

impl Agent {
    pub fn new(
        net_config: MlpConfig,
        schedule: ExplorationSchedule,
        replay: ReplayConfig,
        binding: AgentBinding,
        seed: u64,
    ) -> Result<Self> {
        schedule.validate()?;
        replay.validate()?;
        if net_config.outputs != binding.codebook_size {
            return Err(Error::dimension(
                "agent outputs",
                binding.codebook_size,
                net_config.outputs,
            ));
        }
        Ok(Self {
            net: Mlp::new(net_config)?,
            epsilon: schedule.initial,
            schedule,
            buffer: ReplayBuffer::new(replay.capacity),
            replay,
            rng: ChaCha8Rng::seed_from_u64(seed),
            binding,
            scratch: Scratch::default(),
            grad: Vec::new(),
        })
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn set_epsilon(&mut self, epsilon: f64) {
        self.epsilon = epsilon;
    }

    pub fn schedule(&self) -> &ExplorationSchedule {
        &self.schedule
    }

    pub fn binding(&self) -> &AgentBinding {
        &self.binding
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn num_paps(&self) -> usize {
        self.binding.pap_indices.len()
    }

    /// Epsilon-greedy action at the current epsilon.
    pub fn select_action(&mut self, x: &Context) -> Result<(usize, bool)> {
        select_action(&self.net, x, self.epsilon, &mut self.rng, &mut self.scratch)
    }

    /// Greedy action; read-only.
    pub fn greedy_action(&self, x: &Context, scratch: &mut Scratch) -> Result<usize> {
        Ok(argmax(self.net.predict(x, scratch)?))
    }

    pub fn predict(&self, x: &Context) -> Result<Vec<f64>> {
        Ok(self.net.predict(x, &mut Scratch::default())?.to_vec())
    }

    /// Stores the experience and takes one gradient step on a uniformly
    /// sampled batch (or on the experience alone when replay is off).
    /// Returns the batch loss.
    pub fn observe(&mut self, exp: Experience) -> Result<f64> {
        if exp.action >= self.net.outputs() {
            return Err(Error::InvalidArgument(format!(
                "action {} out of range",
                exp.action
            )));
        }
        if !(exp.reward.is_finite() && exp.reward >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "reward {} must be finite and nonnegative",
                exp.reward
            )));
        }
        if !self.replay.enabled {
            let batch = [(&exp.context, exp.action, exp.reward)];
            return self.net.train_batch(
                &batch,
                Some(&mut self.rng),
                &mut self.scratch,
                &mut self.grad,
            );
        }
        self.buffer.push(exp);
        let n = self.replay.batch_size.min(self.buffer.len());
        let picks: Vec<usize> = (0..n)
            .map(|_| self.rng.gen_range(0..self.buffer.len()))
            .collect();
        let batch: Vec<(&Context, usize, f64)> = picks
            .iter()
            .map(|&i| {
                let e = self.buffer.get(i);
                (&e.context, e.action, e.reward)
            })
            .collect();
        self.net.train_batch(
            &batch,
            Some(&mut self.rng),
            &mut self.scratch,
            &mut self.grad,
        )
    }

    pub fn decay_epsilon(&mut self) {
        self.epsilon = self.schedule.decay_epsilon(self.epsilon);
    }

    pub fn checkpoint(&self) -> AgentCheckpoint {
        AgentCheckpoint {
            network: self.net.checkpoint(),
            epsilon: self.epsilon,
            schedule: self.schedule,
            replay: self.replay,
            rng: self.rng.clone(),
            binding: self.binding.clone(),
            buffer: self.replay.persist.then(|| self.buffer.clone()),
        }
    }

    pub fn from_checkpoint(ck: AgentCheckpoint) -> Result<Self> {
        let net = Mlp::from_checkpoint(ck.network)?;
        if net.outputs() != ck.binding.codebook_size {
            return Err(Error::Checkpoint(format!(
                "network has {} outputs but the agent is bound to {} beams",
                net.outputs(),
                ck.binding.codebook_size
            )));
        }
        let n = ck.binding.pap_indices.len();
        if net.config().location_inputs != 2 * n {
            return Err(Error::Checkpoint(format!(
                "network expects {} location inputs but the agent has {n} PAPs",
                net.config().location_inputs
            )));
        }
        let buffer = match ck.buffer {
            Some(b) if b.capacity() == ck.replay.capacity => b,
            Some(_) => {
                return Err(Error::Checkpoint(
                    "replay buffer capacity does not match configuration".into(),
                ))
            }
            None => ReplayBuffer::new(ck.replay.capacity),
        };
        Ok(Self {
            net,
            schedule: ck.schedule,
            epsilon: ck.epsilon,
            replay: ck.replay,
            buffer,
            rng: ck.rng,
            binding: ck.binding,
            scratch: Scratch::default(),
            grad: Vec::new(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentCheckpoint {
    pub network: MlpCheckpoint,
    pub epsilon: f64,
    pub schedule: ExplorationSchedule,
    pub replay: ReplayConfig,
    pub rng: ChaCha8Rng,
    pub binding: AgentBinding,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub buffer: Option<ReplayBuffer>,
}
