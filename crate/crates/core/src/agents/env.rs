use serde::{Deserialize, Serialize};

use super::{AgentError, Controller, State};
use crate::features::{extract, FeatureConfig, FeatureId};
use crate::sim::{IntersectionId, MetricsSummary, Scenario, Simulation};

/// What a learned controller observes.
#[derive(Debug, Clone, PartialEq)]
pub enum ObsKind {
    /// Raw values of the listed features, in order.
    Features(Vec<FeatureId>),
    /// Green-lane and red-lane occupancy as one 2-vector.
    GreenRed,
}

pub fn observe(
    sim: &Simulation,
    intersection: IntersectionId,
    kind: &ObsKind,
    cfg: &FeatureConfig,
) -> State {
    match kind {
        ObsKind::Features(ids) => ids
            .iter()
            .map(|&id| extract(id, sim, intersection, cfg).values)
            .collect(),
        ObsKind::GreenRed => vec![super::green_red_density(sim, intersection).to_vec()],
    }
}

/// A simulation advanced one decision interval at a time.
#[derive(Debug, Clone)]
pub struct Env {
    sim: Simulation,
    horizon_s: u32,
    interval_s: u32,
}

impl Env {
    pub fn new(scenario: &Scenario, horizon_s: u32, interval_s: u32) -> Self {
        Self {
            sim: Simulation::new(scenario),
            horizon_s,
            interval_s,
        }
    }

    pub fn sim(&self) -> &Simulation {
        &self.sim
    }

    pub fn num_intersections(&self) -> usize {
        self.sim.network().intersections.len()
    }

    pub fn done(&self) -> bool {
        self.sim.time() >= self.horizon_s
    }

    /// Holds `commands` for one interval (cut at the horizon) and returns
    /// each intersection's reward at the end of it.
    pub fn advance(&mut self, commands: &[usize]) -> Result<Vec<f64>, AgentError> {
        self.sim.mark_decision();
        let steps = self
            .interval_s
            .min(self.horizon_s.saturating_sub(self.sim.time()));
        for _ in 0..steps {
            self.sim.step(commands)?;
        }
        Ok((0..self.num_intersections())
            .map(|i| self.sim.intersection_reward(IntersectionId(i)))
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRow {
    pub t: u32,
    pub phases: Vec<usize>,
    pub rewards: Vec<f64>,
    /// Vehicles finished since the start of the run.
    pub cumulative_finished: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub rows: Vec<DecisionRow>,
    pub summary: MetricsSummary,
}

/// Runs `controller` on a fresh simulation of `scenario` up to `horizon_s`.
pub fn evaluate(
    scenario: &Scenario,
    controller: &mut dyn Controller,
    horizon_s: u32,
    interval_s: u32,
) -> Result<EpisodeRecord, AgentError> {
    let mut env = Env::new(scenario, horizon_s, interval_s);
    let mut rows = Vec::new();
    while !env.done() {
        let t = env.sim().time();
        let phases = (0..env.num_intersections())
            .map(|i| controller.decide(env.sim(), IntersectionId(i)))
            .collect::<Result<Vec<usize>, AgentError>>()?;
        let rewards = env.advance(&phases)?;
        rows.push(DecisionRow {
            t,
            phases,
            rewards,
            cumulative_finished: env.sim().raw_metrics().finished_count,
        });
    }
    Ok(EpisodeRecord {
        rows,
        summary: env.sim().metrics(),
    })
}

/// Runs `controller` and records what `intersection` observes under `kind`
/// at every decision point. Used to calibrate and test exported models.
pub fn record_states(
    scenario: &Scenario,
    controller: &mut dyn Controller,
    horizon_s: u32,
    interval_s: u32,
    intersection: IntersectionId,
    kind: &ObsKind,
    cfg: &FeatureConfig,
) -> Result<Vec<State>, AgentError> {
    let mut env = Env::new(scenario, horizon_s, interval_s);
    let mut states = Vec::new();
    while !env.done() {
        states.push(observe(env.sim(), intersection, kind, cfg));
        let phases = (0..env.num_intersections())
            .map(|i| controller.decide(env.sim(), IntersectionId(i)))
            .collect::<Result<Vec<usize>, AgentError>>()?;
        env.advance(&phases)?;
    }
    Ok(states)
}
