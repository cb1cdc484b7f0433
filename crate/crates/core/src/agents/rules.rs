use serde::{Deserialize, Serialize};

use super::{AgentError, Controller};
use crate::sim::{IntersectionId, Simulation};

/// `floor(t / cycle) mod P`.
pub fn act_fixed_time(t: u32, cycle_s: u32, num_phases: usize) -> usize {
    (t / cycle_s) as usize % num_phases
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedTime {
    pub cycle_s: u32,
}

impl Default for FixedTime {
    fn default() -> Self {
        Self { cycle_s: 30 }
    }
}

impl Controller for FixedTime {
    fn name(&self) -> &str {
        "FixedTime"
    }

    fn decide(
        &mut self,
        sim: &Simulation,
        intersection: IntersectionId,
    ) -> Result<usize, AgentError> {
        let p = sim.network().intersection(intersection).num_phases();
        Ok(act_fixed_time(sim.time(), self.cycle_s, p))
    }
}

/// Σ over each phase's links of `in − out` vehicle counts.
pub fn phase_pressures(sim: &Simulation, intersection: IntersectionId) -> Vec<i64> {
    sim.network()
        .intersection(intersection)
        .phases
        .iter()
        .map(|p| p.links.iter().map(|&l| sim.movement_pressure(l)).sum())
        .collect()
}

/// Phase with the largest pressure; ties go to the lowest index.
pub fn act_max_pressure(sim: &Simulation, intersection: IntersectionId) -> usize {
    let pressures = phase_pressures(sim, intersection);
    let mut best = 0;
    for (k, &p) in pressures.iter().enumerate() {
        if p > pressures[best] {
            best = k;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaxPressure;

impl Controller for MaxPressure {
    fn name(&self) -> &str {
        "MaxPressure"
    }

    fn decide(
        &mut self,
        sim: &Simulation,
        intersection: IntersectionId,
    ) -> Result<usize, AgentError> {
        Ok(act_max_pressure(sim, intersection))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SotlParams {
    /// Advance only if fewer than this many vehicles hold the green.
    pub green_threshold: usize,
    /// Advance only if more than this many vehicles wait at red.
    pub red_threshold: usize,
    pub min_green_s: u32,
}

impl Default for SotlParams {
    fn default() -> Self {
        Self {
            green_threshold: 4,
            red_threshold: 6,
            min_green_s: 10,
        }
    }
}

/// Self-organizing switching: moves to the next phase in cyclic order when
/// red-side demand exceeds its threshold, the green side is nearly empty and
/// the minimum green has elapsed.
#[derive(Debug, Clone, PartialEq)]
pub struct Sotl {
    pub params: SotlParams,
    /// Per intersection: last phase seen and the time it was first seen.
    seen: Vec<(usize, u32)>,
}

impl Sotl {
    pub fn new(params: SotlParams) -> Self {
        Self {
            params,
            seen: Vec::new(),
        }
    }

    /// `(vehicles on green incoming lanes, waiting vehicles on red incoming lanes)`.
    pub fn counts(sim: &Simulation, intersection: IntersectionId) -> (usize, usize) {
        let net = sim.network();
        let inter = net.intersection(intersection);
        let phase = &inter.phases[sim.signal(intersection).current_phase];
        let (mut green, mut red) = (0, 0);
        for &lane in &inter.in_lanes {
            if phase
                .links
                .iter()
                .any(|&l| net.links[l.index()].from == lane)
            {
                green += sim.lane_vehicle_count(lane);
            } else {
                red += sim.lane_waiting_count(lane);
            }
        }
        (green, red)
    }

    /// True when the rule says advance.
    pub fn should_advance(&self, green: usize, red: usize, green_elapsed_s: u32) -> bool {
        red > self.params.red_threshold
            && green < self.params.green_threshold
            && green_elapsed_s >= self.params.min_green_s
    }
}

impl Controller for Sotl {
    fn name(&self) -> &str {
        "SOTL"
    }

    fn decide(
        &mut self,
        sim: &Simulation,
        intersection: IntersectionId,
    ) -> Result<usize, AgentError> {
        let i = intersection.index();
        if self.seen.len() <= i {
            self.seen.resize(i + 1, (0, 0));
        }
        let signal = sim.signal(intersection);
        let current = signal.current_phase;
        if self.seen[i].0 != current {
            self.seen[i] = (current, sim.time());
        }
        if signal.in_yellow() {
            return Ok(signal.target_phase());
        }
        let (green, red) = Self::counts(sim, intersection);
        let elapsed = sim.time() - self.seen[i].1;
        let p = sim.network().intersection(intersection).num_phases();
        Ok(if self.should_advance(green, red, elapsed) {
            (current + 1) % p
        } else {
            current
        })
    }
}
