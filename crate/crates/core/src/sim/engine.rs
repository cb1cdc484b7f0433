//! Point-queue microsimulation with a 1 s clock.
//!
//! Each lane is a FIFO. A vehicle entering a lane is in transit for the lane's
//! free-flow time, then joins the stop-line queue. At a signal the head vehicle
//! crosses a green lane link if the link's service headway has elapsed and the
//! downstream lane has room. Vehicles leave the network at the end of the last
//! road of their route.

use std::collections::VecDeque;
use std::sync::Arc;

use super::network::{IntersectionId, LaneId, LinkId, RoadNetwork};
use super::scenario::{Demand, Route, Scenario};
use super::SimError;

/// Yellow interval inserted before every phase change (s).
pub const YELLOW_S: u8 = 3;
/// Minimum headway between two vehicles served by the same green link (s).
pub const SERVICE_INTERVAL_S: u32 = 2;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vehicle {
    pub id: usize,
    pub route: usize,
    /// Index into the route's road list.
    pub route_pos: usize,
    pub spawn_time: u32,
    /// `None` while waiting at the source or after finishing.
    pub lane: Option<LaneId>,
    pub entered_at: u32,
    /// Time at which the vehicle reaches the stop line of its lane.
    pub ready_at: u32,
    /// Start of the current stop; `None` while moving.
    pub waiting_since: Option<u32>,
    pub finished_at: Option<u32>,
}

impl Vehicle {
    pub fn is_waiting(&self) -> bool {
        self.waiting_since.is_some()
    }

    pub fn is_finished(&self) -> bool {
        self.finished_at.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignalState {
    pub current_phase: usize,
    pub pending_phase: Option<usize>,
    pub yellow_remaining: u8,
    pub phase_changed_last_step: bool,
}

impl SignalState {
    fn new() -> Self {
        Self {
            current_phase: 0,
            pending_phase: None,
            yellow_remaining: 0,
            phase_changed_last_step: false,
        }
    }

    pub fn in_yellow(&self) -> bool {
        self.yellow_remaining > 0
    }

    /// The phase the signal is showing or heading to.
    pub fn target_phase(&self) -> usize {
        self.pending_phase.unwrap_or(self.current_phase)
    }
}

/// Per-intersection counters reset at every agent decision.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IntervalCounters {
    pub vehicles_at_mark: usize,
    /// Σ travel time (s) of vehicles that left the intersection's lanes.
    pub departed_travel_time: u64,
    pub departed: u64,
    pub phase_changed: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Metrics {
    pub spawned: u64,
    pub finished_count: u64,
    /// Σ over finished vehicles of (arrive − spawn), s.
    pub sum_travel_time: u64,
    pub elapsed_s: u32,
    pub finished_per_step: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsSummary {
    /// s/veh over finished vehicles; `None` when nothing finished.
    pub avg_travel_time: Option<f64>,
    /// Finished vehicles per minute of simulated time.
    pub throughput: f64,
}

impl Metrics {
    pub fn summary(&self) -> MetricsSummary {
        let avg_travel_time = (self.finished_count > 0)
            .then(|| self.sum_travel_time as f64 / self.finished_count as f64);
        let throughput = if self.elapsed_s == 0 {
            0.0
        } else {
            self.finished_count as f64 / (self.elapsed_s as f64 / 60.0)
        };
        MetricsSummary {
            avg_travel_time,
            throughput,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Simulation {
    network: Arc<RoadNetwork>,
    routes: Arc<Vec<Route>>,
    demand: Vec<Demand>,
    next_demand: usize,
    t: u32,
    vehicles: Vec<Vehicle>,
    lane_queues: Vec<VecDeque<usize>>,
    source_queues: Vec<VecDeque<usize>>,
    signals: Vec<SignalState>,
    link_free_at: Vec<u32>,
    /// `[intersection][phase][local link]`.
    phase_masks: Vec<Vec<Vec<bool>>>,
    link_local: Vec<usize>,
    metrics: Metrics,
    intervals: Vec<IntervalCounters>,
}

impl Simulation {
    pub fn new(scenario: &Scenario) -> Self {
        let network = Arc::clone(&scenario.network);
        let mut link_local = vec![0; network.links.len()];
        let mut phase_masks = Vec::with_capacity(network.intersections.len());
        for inter in &network.intersections {
            for (local, link) in inter.links.iter().enumerate() {
                link_local[link.0] = local;
            }
            let masks = inter
                .phases
                .iter()
                .map(|phase| {
                    let mut mask = vec![false; inter.links.len()];
                    for link in &phase.links {
                        mask[link_local[link.0]] = true;
                    }
                    mask
                })
                .collect();
            phase_masks.push(masks);
        }
        Self {
            lane_queues: vec![VecDeque::new(); network.lanes.len()],
            source_queues: vec![VecDeque::new(); network.roads.len()],
            signals: vec![SignalState::new(); network.intersections.len()],
            link_free_at: vec![0; network.links.len()],
            intervals: vec![IntervalCounters::default(); network.intersections.len()],
            phase_masks,
            link_local,
            routes: Arc::clone(&scenario.routes),
            demand: scenario.demand.clone(),
            next_demand: 0,
            t: 0,
            vehicles: Vec::new(),
            metrics: Metrics::default(),
            network,
        }
    }

    pub fn network(&self) -> &RoadNetwork {
        &self.network
    }

    pub fn network_arc(&self) -> &Arc<RoadNetwork> {
        &self.network
    }

    pub fn routes(&self) -> &[Route] {
        &self.routes
    }

    /// Current clock (s). Step `k` advances the clock from `k` to `k + 1`.
    pub fn time(&self) -> u32 {
        self.t
    }

    pub fn vehicles(&self) -> &[Vehicle] {
        &self.vehicles
    }

    pub fn vehicle(&self, id: usize) -> &Vehicle {
        &self.vehicles[id]
    }

    pub fn signal(&self, intersection: IntersectionId) -> &SignalState {
        &self.signals[intersection.0]
    }

    pub fn signals(&self) -> &[SignalState] {
        &self.signals
    }

    pub fn interval(&self, intersection: IntersectionId) -> &IntervalCounters {
        &self.intervals[intersection.0]
    }

    pub fn raw_metrics(&self) -> &Metrics {
        &self.metrics
    }

    pub fn metrics(&self) -> MetricsSummary {
        self.metrics.summary()
    }

    /// No vehicle pending, on the network or still to be released.
    pub fn is_drained(&self) -> bool {
        self.next_demand == self.demand.len() && self.metrics.finished_count == self.metrics.spawned
    }

    // -- views used by features and controllers -----------------------------

    pub fn lane_queue(&self, lane: LaneId) -> &VecDeque<usize> {
        &self.lane_queues[lane.0]
    }

    pub fn lane_vehicles(&self, lane: LaneId) -> impl Iterator<Item = &Vehicle> + '_ {
        self.lane_queues[lane.0].iter().map(|&v| &self.vehicles[v])
    }

    pub fn lane_vehicle_count(&self, lane: LaneId) -> usize {
        self.lane_queues[lane.0].len()
    }

    pub fn lane_waiting_count(&self, lane: LaneId) -> usize {
        self.lane_vehicles(lane).filter(|v| v.is_waiting()).count()
    }

    /// Seconds since the vehicle's last stop began; 0 while moving.
    pub fn waiting_time(&self, vehicle: &Vehicle) -> u32 {
        vehicle
            .waiting_since
            .map_or(0, |s| self.t.saturating_sub(s))
    }

    pub fn lane_waiting_time(&self, lane: LaneId) -> u64 {
        self.lane_vehicles(lane)
            .map(|v| self.waiting_time(v) as u64)
            .sum()
    }

    /// Estimated delay against free flow: each queued vehicle costs one
    /// service headway.
    pub fn lane_delay(&self, lane: LaneId) -> f64 {
        (self.lane_waiting_count(lane) as u32 * SERVICE_INTERVAL_S) as f64
    }

    /// Distance (m) from the lane start. Vehicles in transit move linearly;
    /// queued vehicles stack back from the stop line.
    pub fn vehicle_offset(&self, lane: LaneId, queue_index: usize) -> f64 {
        let length = self.network.road_length(lane);
        let v = &self.vehicles[self.lane_queues[lane.0][queue_index]];
        if v.ready_at <= self.t {
            let back = super::network::VEHICLE_SPACING_M * (queue_index as f64 + 0.5);
            (length - back).max(0.0)
        } else {
            let span = (v.ready_at - v.entered_at).max(1) as f64;
            length * (self.t - v.entered_at) as f64 / span
        }
    }

    /// Road the vehicle drives onto after its current one, if any.
    pub fn next_road(&self, vehicle: &Vehicle) -> Option<super::network::RoadId> {
        self.routes[vehicle.route]
            .roads
            .get(vehicle.route_pos + 1)
            .copied()
    }

    fn on_link<'a>(&'a self, link: LinkId) -> impl Iterator<Item = &'a Vehicle> + 'a {
        let l = *self.network.link(link);
        let to_road = self.network.lane_road(l.to);
        self.lane_vehicles(l.from)
            .filter(move |v| self.next_road(v) == Some(to_road))
    }

    /// Vehicles on the link's incoming lane that are headed for its outgoing road.
    pub fn link_vehicle_count(&self, link: LinkId) -> usize {
        self.on_link(link).count()
    }

    pub fn link_waiting_count(&self, link: LinkId) -> usize {
        self.on_link(link).filter(|v| v.is_waiting()).count()
    }

    pub fn link_waiting_time(&self, link: LinkId) -> u64 {
        self.on_link(link)
            .map(|v| self.waiting_time(v) as u64)
            .sum()
    }

    pub fn intersection_vehicle_count(&self, intersection: IntersectionId) -> usize {
        self.network
            .intersection(intersection)
            .lanes()
            .map(|l| self.lane_vehicle_count(l))
            .sum()
    }

    pub fn is_green(&self, link: LinkId) -> bool {
        let i = self.network.link(link).intersection.0;
        let sig = &self.signals[i];
        !sig.in_yellow() && self.phase_masks[i][sig.current_phase][self.link_local[link.0]]
    }

    /// Vehicles on the incoming lane minus vehicles on the outgoing lane.
    pub fn movement_pressure(&self, link: LinkId) -> i64 {
        let l = self.network.link(link);
        self.lane_vehicle_count(l.from) as i64 - self.lane_vehicle_count(l.to) as i64
    }

    /// Negative absolute intersection pressure.
    pub fn intersection_reward(&self, intersection: IntersectionId) -> f64 {
        let total: i64 = self
            .network
            .intersection(intersection)
            .links
            .iter()
            .map(|&l| self.movement_pressure(l))
            .sum();
        -(total.abs() as f64)
    }

    /// Resets the per-interval counters of every intersection.
    pub fn mark_decision(&mut self) {
        for i in 0..self.intervals.len() {
            let count = self.intersection_vehicle_count(IntersectionId(i));
            self.intervals[i] = IntervalCounters {
                vehicles_at_mark: count,
                ..IntervalCounters::default()
            };
        }
    }

    // -- staging -------------------------------------------------------------

    /// Places a vehicle directly on `lane` at route position `route_pos`.
    /// A `waiting` vehicle sits at the stop line; otherwise it just entered.
    /// Intended for building test fixtures and warm starts.
    pub fn insert_vehicle(
        &mut self,
        route: usize,
        route_pos: usize,
        lane: LaneId,
        waiting: bool,
    ) -> Result<usize, SimError> {
        let r = self
            .routes
            .get(route)
            .ok_or_else(|| SimError::Validation(format!("unknown route {route}")))?;
        if r.roads.get(route_pos) != Some(&self.network.lane_road(lane)) {
            return Err(SimError::Validation(format!(
                "lane {lane} is not on road {route_pos} of route {route}"
            )));
        }
        let cap = self.network.lane(lane).capacity;
        if self.lane_queues[lane.0].len() >= cap {
            return Err(SimError::Validation(format!("lane {lane} is full")));
        }
        let id = self.vehicles.len();
        let traversal = self.network.lane(lane).traversal_s;
        self.vehicles.push(Vehicle {
            id,
            route,
            route_pos,
            spawn_time: self.t,
            lane: Some(lane),
            entered_at: self.t,
            ready_at: if waiting { self.t } else { self.t + traversal },
            waiting_since: waiting.then_some(self.t),
            finished_at: None,
        });
        self.lane_queues[lane.0].push_back(id);
        self.metrics.spawned += 1;
        Ok(id)
    }

    /// Sets a signal phase immediately, without yellow. Fixture helper.
    pub fn force_phase(&mut self, intersection: IntersectionId, phase: usize) {
        let sig = &mut self.signals[intersection.0];
        sig.current_phase = phase;
        sig.pending_phase = None;
        sig.yellow_remaining = 0;
    }

    // -- dynamics ------------------------------------------------------------

    /// Advances the clock by one second under the given per-intersection phase
    /// commands. Commands received during yellow are ignored.
    pub fn step(&mut self, commands: &[usize]) -> Result<(), SimError> {
        let network = Arc::clone(&self.network);
        if commands.len() != network.intersections.len() {
            return Err(SimError::CommandCount {
                expected: network.intersections.len(),
                got: commands.len(),
            });
        }
        for (i, (&cmd, inter)) in commands.iter().zip(&network.intersections).enumerate() {
            if cmd >= inter.num_phases() {
                return Err(SimError::InvalidPhase {
                    intersection: i,
                    phase: cmd,
                    num_phases: inter.num_phases(),
                });
            }
        }

        for (i, &cmd) in commands.iter().enumerate() {
            let sig = &mut self.signals[i];
            sig.phase_changed_last_step = false;
            if !sig.in_yellow() && cmd != sig.current_phase {
                sig.pending_phase = Some(cmd);
                sig.yellow_remaining = YELLOW_S;
                sig.phase_changed_last_step = true;
                self.intervals[i].phase_changed = true;
            }
        }

        let t = self.t;
        let mut finished_now = 0u32;

        // Exits at the end of each vehicle's final road.
        for lane in 0..network.lanes.len() {
            while let Some(&v) = self.lane_queues[lane].front() {
                let veh = &self.vehicles[v];
                let last = self.routes[veh.route].roads.len() - 1;
                if veh.ready_at > t || veh.route_pos != last {
                    break;
                }
                self.lane_queues[lane].pop_front();
                self.record_departure(LaneId(lane), None, v);
                let veh = &mut self.vehicles[v];
                veh.lane = None;
                veh.waiting_since = None;
                veh.finished_at = Some(t);
                self.metrics.finished_count += 1;
                self.metrics.sum_travel_time += (t - veh.spawn_time) as u64;
                finished_now += 1;
            }
        }

        // Signalized crossings: at most one per incoming lane per step.
        for lane in 0..network.lanes.len() {
            let Some(&v) = self.lane_queues[lane].front() else {
                continue;
            };
            if self.vehicles[v].ready_at > t {
                continue;
            }
            if let Some(link) = self.pick_link(LaneId(lane), v) {
                let to = network.link(link).to;
                self.lane_queues[lane].pop_front();
                self.record_departure(LaneId(lane), Some(to), v);
                self.link_free_at[link.0] = t + SERVICE_INTERVAL_S;
                self.enter_lane(v, to);
            }
        }

        // Releases into per-road source queues, then admission.
        while let Some(d) = self.demand.get(self.next_demand).copied() {
            if d.spawn_time > t {
                break;
            }
            self.next_demand += 1;
            let id = self.vehicles.len();
            let first = self.routes[d.route].roads[0];
            self.vehicles.push(Vehicle {
                id,
                route: d.route,
                route_pos: 0,
                spawn_time: d.spawn_time,
                lane: None,
                entered_at: t,
                ready_at: t,
                waiting_since: None,
                finished_at: None,
            });
            self.source_queues[first.0].push_back(id);
            self.metrics.spawned += 1;
        }
        for road in 0..self.source_queues.len() {
            while let Some(&v) = self.source_queues[road].front() {
                let route = &self.routes[self.vehicles[v].route];
                let best = route.viable_lanes[0]
                    .iter()
                    .copied()
                    .filter(|&l| self.lane_queues[l.0].len() < network.lane(l).capacity)
                    .min_by_key(|&l| (self.lane_queues[l.0].len(), l));
                match best {
                    Some(lane) => {
                        self.source_queues[road].pop_front();
                        self.enter_lane(v, lane);
                    }
                    None => break,
                }
            }
        }

        for queue in &self.lane_queues {
            for &v in queue {
                let veh = &mut self.vehicles[v];
                if veh.ready_at <= t {
                    veh.waiting_since.get_or_insert(t);
                } else {
                    veh.waiting_since = None;
                }
            }
        }

        for sig in &mut self.signals {
            if sig.yellow_remaining > 0 {
                sig.yellow_remaining -= 1;
                if sig.yellow_remaining == 0 {
                    if let Some(p) = sig.pending_phase.take() {
                        sig.current_phase = p;
                    }
                }
            }
        }

        self.metrics.finished_per_step.push(finished_now);
        self.t += 1;
        self.metrics.elapsed_s = self.t;
        Ok(())
    }

    fn pick_link(&self, lane: LaneId, v: usize) -> Option<LinkId> {
        let veh = &self.vehicles[v];
        let route = &self.routes[veh.route];
        let next_pos = veh.route_pos + 1;
        let next_road = *route.roads.get(next_pos)?;
        let viable = &route.viable_lanes[next_pos];
        self.network
            .links_from(lane)
            .iter()
            .copied()
            .filter(|&link| {
                let to = self.network.link(link).to;
                self.network.lane_road(to) == next_road
                    && viable.contains(&to)
                    && self.is_green(link)
                    && self.link_free_at[link.0] <= self.t
                    && self.lane_queues[to.0].len() < self.network.lane(to).capacity
            })
            .min_by_key(|&link| (self.lane_queues[self.network.link(link).to.0].len(), link))
    }

    fn enter_lane(&mut self, v: usize, lane: LaneId) {
        let traversal = self.network.lane(lane).traversal_s;
        let t = self.t;
        let veh = &mut self.vehicles[v];
        if veh.lane.is_some() {
            veh.route_pos += 1;
        }
        veh.lane = Some(lane);
        veh.entered_at = t;
        veh.ready_at = t + traversal;
        veh.waiting_since = None;
        self.lane_queues[lane.0].push_back(v);
    }

    fn record_departure(&mut self, from: LaneId, to: Option<LaneId>, v: usize) {
        let tt = (self.t - self.vehicles[v].spawn_time) as u64;
        for &i in self.network.lane_owners(from) {
            let still_inside = to.is_some_and(|l| self.network.lane_owners(l).contains(&i));
            if !still_inside {
                self.intervals[i.0].departed_travel_time += tt;
                self.intervals[i.0].departed += 1;
            }
        }
    }

    /// Vehicles released but not yet admitted onto their first lane.
    pub fn source_queue_len(&self) -> usize {
        self.source_queues.iter().map(VecDeque::len).sum()
    }

    pub fn vehicles_on_lanes(&self) -> usize {
        self.lane_queues.iter().map(VecDeque::len).sum()
    }
}
