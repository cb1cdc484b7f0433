//! DQN search/refine training and the controllers it is compared against.
//!
//! Every controller is queried once per decision interval through
//! [`Controller::decide`]; learned controllers additionally own a
//! [`DqnAgent`] during training.

mod dqn;
mod env;
mod qnet;
mod rules;
mod train;

pub use dqn::{DqnAgent, StepLosses};
pub use env::{evaluate, observe, record_states, DecisionRow, Env, EpisodeRecord, ObsKind};
pub use qnet::{green_red_density, Mlp, QNetwork};
pub use rules::{
    act_fixed_time, act_max_pressure, phase_pressures, FixedTime, MaxPressure, Sotl, SotlParams,
};
pub use train::{
    ecolight_model, feature_ids, run_refine, run_search, train_ecolight, train_tinylight,
    train_tlrp, AlphaRow, EcoLight, EpisodeLog, GreedySubGraph, SearchOutcome, TrainedTinyLight,
};

use std::collections::VecDeque;
use std::sync::Arc;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::{self, NnError, OptimizerKind};
use crate::sim::{IntersectionId, SimError, Simulation};
use crate::supergraph::{SupergraphError, ALPHA_LAYERS, DEFAULT_KEEP};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Supergraph(#[from] SupergraphError),
    #[error("invalid hyperparameters: {0}")]
    HyperParams(String),
    #[error("cannot train on an empty batch")]
    EmptyBatch,
}

/// Per-input raw feature vectors of one intersection at one decision.
pub type State = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HyperParams {
    pub buffer_capacity: usize,
    pub batch_size: usize,
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub tau: f64,
    pub lr: f64,
    pub beta: f64,
    pub optimizer: OptimizerKind,
    pub search_episodes: usize,
    pub refine_episodes: usize,
    /// Simulated seconds per training episode.
    pub episode_s: u32,
    pub decision_interval_s: u32,
    /// Bound of the per-vehicle spawn-time noise applied each episode.
    pub jitter_s: u32,
    pub keep: [usize; ALPHA_LAYERS],
    /// Multiplier on rewards before they enter replay memory. Keeps Q-targets
    /// reachable within the update budget while leaving the TD term large
    /// enough to compete with `beta`·entropy in the α-step.
    pub reward_scale: f64,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            buffer_capacity: 100_000,
            batch_size: 32,
            gamma: 0.9,
            epsilon_start: 0.1,
            epsilon_end: 0.0,
            tau: 0.1,
            lr: 1e-3,
            beta: 16.0,
            optimizer: OptimizerKind::Adam,
            search_episodes: 30,
            refine_episodes: 10,
            episode_s: 600,
            decision_interval_s: 10,
            jitter_s: 60,
            keep: DEFAULT_KEEP,
            reward_scale: 0.005,
        }
    }
}

impl HyperParams {
    /// Every violated constraint, not just the first.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.batch_size == 0 {
            v.push("batch_size must be positive".to_string());
        }
        if self.buffer_capacity < self.batch_size {
            v.push(format!(
                "buffer_capacity ({}) must be at least batch_size ({})",
                self.buffer_capacity, self.batch_size
            ));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            v.push(format!("gamma must lie in (0, 1], got {}", self.gamma));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            v.push(format!("tau must lie in (0, 1], got {}", self.tau));
        }
        for (name, e) in [
            ("epsilon_start", self.epsilon_start),
            ("epsilon_end", self.epsilon_end),
        ] {
            if !(0.0..=0.1).contains(&e) {
                v.push(format!("{name} must lie in [0, 0.1], got {e}"));
            }
        }
        if self.epsilon_end > self.epsilon_start {
            v.push("epsilon_end must not exceed epsilon_start".to_string());
        }
        if !(self.lr > 0.0) {
            v.push(format!("lr must be positive, got {}", self.lr));
        }
        if !(self.beta >= 0.0) {
            v.push(format!("beta must be non-negative, got {}", self.beta));
        }
        if self.decision_interval_s == 0 || self.episode_s < self.decision_interval_s {
            v.push("episode_s must cover at least one positive decision interval".to_string());
        }
        if !(self.reward_scale > 0.0) {
            v.push(format!(
                "reward_scale must be positive, got {}",
                self.reward_scale
            ));
        }
        if self.keep.contains(&0) {
            v.push("keep entries must be positive".to_string());
        }
        v
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(AgentError::HyperParams(v.join("; ")))
        }
    }

    /// Linear decay from `epsilon_start` at episode 0 to `epsilon_end` at
    /// the last search episode.
    pub fn epsilon(&self, episode: usize) -> f64 {
        let last = self.search_episodes.saturating_sub(1);
        if last == 0 || episode >= last {
            return if episode >= last {
                self.epsilon_end
            } else {
                self.epsilon_start
            };
        }
        let frac = episode as f64 / last as f64;
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac
    }
}

/// ε-greedy: a uniform phase with probability ε, else argmax (ties low).
pub fn dqn_act<R: Rng>(q: &[f64], epsilon: f64, rng: &mut R) -> usize {
    if epsilon > 0.0 && rng.gen::<f64>() < epsilon {
        rng.gen_range(0..q.len())
    } else {
        nn::argmax(q)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Arc<State>,
    pub action: usize,
    pub reward: f64,
    pub next_state: Arc<State>,
    pub done: bool,
}

/// Fixed-capacity FIFO of transitions; the oldest entry is evicted first.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<Transition>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            items: VecDeque::with_capacity(capacity.min(4096)),
        }
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
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

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    /// `m` distinct transitions, uniformly; fewer if the buffer is smaller.
    pub fn sample<R: Rng>(&self, m: usize, rng: &mut R) -> Vec<&Transition> {
        let m = m.min(self.items.len());
        sample(rng, self.items.len(), m)
            .into_iter()
            .map(|i| &self.items[i])
            .collect()
    }
}

/// Anything that picks a phase for an intersection once per decision.
pub trait Controller {
    fn name(&self) -> &str;
    fn decide(
        &mut self,
        sim: &Simulation,
        intersection: IntersectionId,
    ) -> Result<usize, AgentError>;
}
