use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::{IntersectionSpec, LaneId, RoadId, RoadNetwork, RoadSpec};
use super::SimError;

pub const SCENARIO_SCHEMA_VERSION: u32 = 1;

/// On-disk scenario: road network plus timed vehicle demand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub version: u32,
    pub intersections: Vec<IntersectionSpec>,
    pub roads: Vec<RoadSpec>,
    #[serde(default)]
    pub flows: Vec<FlowSpec>,
}

/// A stream of vehicles sharing one route.
///
/// Either `interval` (with `start`/`end`) or an explicit `times` list is given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSpec {
    pub route: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end: Option<u32>,
    /// Seconds between consecutive spawns.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interval: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub times: Option<Vec<u32>>,
}

impl FlowSpec {
    pub fn periodic(route: &[&str], start: u32, end: u32, interval: f64) -> Self {
        Self {
            route: route.iter().map(|s| s.to_string()).collect(),
            start: Some(start),
            end: Some(end),
            interval: Some(interval),
            times: None,
        }
    }

    pub fn at_times(route: &[&str], times: Vec<u32>) -> Self {
        Self {
            route: route.iter().map(|s| s.to_string()).collect(),
            start: None,
            end: None,
            interval: None,
            times: Some(times),
        }
    }

    fn spawn_times(&self, flow: usize) -> Result<Vec<u32>, SimError> {
        match (&self.times, self.interval) {
            (Some(times), None) if self.start.is_none() && self.end.is_none() => Ok(times.clone()),
            (None, Some(interval)) => {
                let start = self.start.unwrap_or(0);
                let end = self.end.ok_or_else(|| {
                    SimError::Validation(format!("flow {flow}: periodic flow needs `end`"))
                })?;
                if !(interval.is_finite() && interval > 0.0) {
                    return Err(SimError::Validation(format!(
                        "flow {flow}: interval must be positive"
                    )));
                }
                let mut out = Vec::new();
                let mut k = 0u64;
                loop {
                    let t = start as f64 + k as f64 * interval;
                    if t >= end as f64 {
                        break;
                    }
                    out.push(t.floor() as u32);
                    k += 1;
                }
                Ok(out)
            }
            _ => Err(SimError::Validation(format!(
                "flow {flow}: give either `interval` with `start`/`end`, or `times`"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Route {
    pub roads: Vec<RoadId>,
    /// Lanes per route position from which the remainder of the route is drivable.
    pub viable_lanes: Vec<Vec<LaneId>>,
}

/// One vehicle to be released into the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Demand {
    pub spawn_time: u32,
    pub route: usize,
}

/// Validated network + routes + demand sorted by spawn time.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub network: Arc<RoadNetwork>,
    pub routes: Arc<Vec<Route>>,
    pub demand: Vec<Demand>,
}

impl Scenario {
    pub fn from_file(file: &ScenarioFile) -> Result<Self, SimError> {
        if file.version != SCENARIO_SCHEMA_VERSION {
            return Err(SimError::Validation(format!(
                "unsupported scenario version {} (expected {SCENARIO_SCHEMA_VERSION})",
                file.version
            )));
        }
        let network = RoadNetwork::from_specs(&file.intersections, &file.roads)?;
        let mut routes = Vec::with_capacity(file.flows.len());
        let mut demand = Vec::new();
        for (f, flow) in file.flows.iter().enumerate() {
            let roads = flow
                .route
                .iter()
                .map(|name| {
                    network.road_by_name(name).ok_or_else(|| {
                        SimError::Validation(format!(
                            "flow {f}: route references unknown road {name}"
                        ))
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            let viable_lanes = network
                .route_lanes(&roads)
                .map_err(|e| SimError::Validation(format!("flow {f}: {e}")))?;
            for t in flow.spawn_times(f)? {
                demand.push(Demand {
                    spawn_time: t,
                    route: f,
                });
            }
            routes.push(Route {
                roads,
                viable_lanes,
            });
        }
        demand.sort();
        Ok(Self {
            network: Arc::new(network),
            routes: Arc::new(routes),
            demand,
        })
    }

    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let file: ScenarioFile = serde_json::from_str(text).map_err(|e| SimError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        Self::from_file(&file)
    }

    /// Same network, demand shifted by [`jitter_flow`].
    pub fn jittered(&self, seed: u64, bound_s: u32) -> Self {
        Self {
            network: Arc::clone(&self.network),
            routes: Arc::clone(&self.routes),
            demand: jitter_flow(&self.demand, seed, bound_s),
        }
    }

    /// Demand released strictly before `horizon_s`.
    pub fn truncated(&self, horizon_s: u32) -> Self {
        Self {
            network: Arc::clone(&self.network),
            routes: Arc::clone(&self.routes),
            demand: self
                .demand
                .iter()
                .copied()
                .filter(|d| d.spawn_time < horizon_s)
                .collect(),
        }
    }
}

/// Reads and validates a scenario JSON file.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, SimError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| SimError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Scenario::from_json(&text)
}

/// Shifts every spawn time by a uniform integer in `[-bound_s, bound_s]`,
/// clamped at zero. The result is re-sorted by spawn time.
pub fn jitter_flow(demand: &[Demand], seed: u64, bound_s: u32) -> Vec<Demand> {
    if bound_s == 0 {
        return demand.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bound = bound_s as i64;
    let mut out: Vec<Demand> = demand
        .iter()
        .map(|d| {
            let shift = rng.gen_range(-bound..=bound);
            Demand {
                spawn_time: (d.spawn_time as i64 + shift).max(0) as u32,
                route: d.route,
            }
        })
        .collect();
    out.sort();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat(times: &[u32]) -> Vec<Demand> {
        times
            .iter()
            .map(|&t| Demand {
                spawn_time: t,
                route: 0,
            })
            .collect()
    }

    #[test]
    fn zero_bound_is_identity() {
        let d = flat(&[5, 10, 10, 300]);
        assert_eq!(jitter_flow(&d, 3, 0), d);
    }

    #[test]
    fn jitter_is_deterministic_per_seed() {
        let d = flat(&(0..200).map(|k| k * 7).collect::<Vec<_>>());
        assert_eq!(jitter_flow(&d, 42, 60), jitter_flow(&d, 42, 60));
        assert_ne!(jitter_flow(&d, 42, 60), jitter_flow(&d, 43, 60));
    }

    #[test]
    fn jitter_shift_distribution() {
        // Base time far from zero so clamping never applies.
        let base = 10_000u32;
        let d = flat(&vec![base; 1000]);
        let out = jitter_flow(&d, 7, 60);
        let shifts: Vec<i64> = out
            .iter()
            .map(|x| x.spawn_time as i64 - base as i64)
            .collect();
        assert!(shifts.iter().all(|s| (-60..=60).contains(s)));
        let mean = shifts.iter().sum::<i64>() as f64 / shifts.len() as f64;
        assert!(mean.abs() <= 5.0, "mean shift {mean}");
        // Histogram over 11 bins should not leave any bin empty at n=1000.
        let mut bins = [0usize; 11];
        for s in shifts {
            bins[((s + 60) * 11 / 121) as usize] += 1;
        }
        assert!(bins.iter().all(|&b| b > 40), "{bins:?}");
    }

    #[test]
    fn jitter_clamps_at_zero() {
        let d = flat(&[0; 100]);
        assert!(jitter_flow(&d, 1, 60).iter().all(|x| x.spawn_time <= 60));
    }

    #[test]
    fn periodic_flow_expands() {
        let f = FlowSpec::periodic(&["a"], 10, 20, 2.5);
        assert_eq!(f.spawn_times(0).unwrap(), vec![10, 12, 15, 17]);
        let bad = FlowSpec {
            times: Some(vec![1]),
            ..FlowSpec::periodic(&["a"], 0, 10, 1.0)
        };
        assert!(bad.spawn_times(0).is_err());
    }
}
