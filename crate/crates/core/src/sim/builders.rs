//! Programmatic scenario generators for grids of standard 4-way intersections.
//!
//! Every approach road carries three lanes: lane 0 turns left, lane 1 goes
//! straight and lane 2 turns right. Each incoming lane links to all three lanes
//! of its target road, giving 12 incoming lanes, 12 outgoing lanes and 36 lane
//! links per intersection. Driving is on the right.

use super::network::{lane_name, IntersectionSpec, LaneLinkSpec, RoadSpec};
use super::scenario::{FlowSpec, ScenarioFile, SCENARIO_SCHEMA_VERSION};

const LANES_PER_ROAD: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dir {
    N,
    E,
    S,
    W,
}

impl Dir {
    pub const ALL: [Dir; 4] = [Dir::N, Dir::E, Dir::S, Dir::W];

    fn offset(self) -> (i32, i32) {
        match self {
            Dir::N => (0, 1),
            Dir::E => (1, 0),
            Dir::S => (0, -1),
            Dir::W => (-1, 0),
        }
    }

    fn opposite(self) -> Dir {
        match self {
            Dir::N => Dir::S,
            Dir::E => Dir::W,
            Dir::S => Dir::N,
            Dir::W => Dir::E,
        }
    }

    /// Exit side for a vehicle arriving from `self` and making `turn`.
    pub fn exit(self, turn: Turn) -> Dir {
        match turn {
            Turn::Through => self.opposite(),
            // Arriving from the north means heading south; left is east.
            Turn::Left => match self {
                Dir::N => Dir::E,
                Dir::E => Dir::S,
                Dir::S => Dir::W,
                Dir::W => Dir::N,
            },
            Turn::Right => match self {
                Dir::N => Dir::W,
                Dir::E => Dir::N,
                Dir::S => Dir::E,
                Dir::W => Dir::S,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Turn {
    Left,
    Through,
    Right,
}

impl Turn {
    pub const ALL: [Turn; 3] = [Turn::Left, Turn::Through, Turn::Right];

    fn lane(self) -> usize {
        match self {
            Turn::Left => 0,
            Turn::Through => 1,
            Turn::Right => 2,
        }
    }
}

/// A movement is identified by its approach side and turn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Movement(pub Dir, pub Turn);

impl Movement {
    fn conflicts(self, other: Movement) -> bool {
        let (Movement(a, ta), Movement(b, tb)) = (self, other);
        if a == b || ta == Turn::Right || tb == Turn::Right {
            return false;
        }
        if a.opposite() == b {
            // Protected lefts run together; a left crosses the opposing through.
            return ta != tb;
        }
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhasePlan {
    /// NS through, EW through, NS left, EW left.
    Four,
    /// The four above, then single-approach through+left for N, E, S, W,
    /// then a right-turn-only phase.
    Nine,
}

impl PhasePlan {
    fn phases(self) -> Vec<Vec<Movement>> {
        use Dir::*;
        use Turn::*;
        let mut out = vec![
            vec![Movement(N, Through), Movement(S, Through)],
            vec![Movement(E, Through), Movement(W, Through)],
            vec![Movement(N, Left), Movement(S, Left)],
            vec![Movement(E, Left), Movement(W, Left)],
        ];
        if self == PhasePlan::Nine {
            for d in Dir::ALL {
                out.push(vec![Movement(d, Through), Movement(d, Left)]);
            }
            out.push(vec![]);
        }
        // Right turns are permitted in every phase.
        for phase in &mut out {
            phase.extend(Dir::ALL.iter().map(|&d| Movement(d, Right)));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct GridBuilder {
    pub cols: i32,
    pub rows: i32,
    /// Distance between adjacent nodes (m); also the length of every road.
    pub spacing_m: f64,
    pub max_speed: f64,
    pub phase_plan: PhasePlan,
}

impl Default for GridBuilder {
    fn default() -> Self {
        Self {
            cols: 1,
            rows: 1,
            spacing_m: 300.0,
            max_speed: 11.0,
            phase_plan: PhasePlan::Four,
        }
    }
}

impl GridBuilder {
    pub fn single(phase_plan: PhasePlan) -> Self {
        Self {
            phase_plan,
            ..Self::default()
        }
    }

    fn is_signal(&self, c: i32, r: i32) -> bool {
        (0..self.cols).contains(&c) && (0..self.rows).contains(&r)
    }

    fn node_name(&self, c: i32, r: i32) -> String {
        if self.is_signal(c, r) {
            format!("I_{c}_{r}")
        } else {
            format!("B_{c}_{r}")
        }
    }

    /// Name of the road from node `(c, r)` towards its neighbour on side `dir`.
    pub fn road(&self, c: i32, r: i32, dir: Dir) -> String {
        let (dc, dr) = dir.offset();
        format!(
            "{}-{}",
            self.node_name(c, r),
            self.node_name(c + dc, r + dr)
        )
    }

    /// Road entering intersection `(c, r)` from side `dir`.
    pub fn incoming(&self, c: i32, r: i32, dir: Dir) -> String {
        let (dc, dr) = dir.offset();
        self.road(c + dc, r + dr, dir.opposite())
    }

    /// Route through a single intersection `(c, r)`.
    pub fn movement_route(&self, c: i32, r: i32, m: Movement) -> Vec<String> {
        vec![self.incoming(c, r, m.0), self.road(c, r, m.0.exit(m.1))]
    }

    pub fn build(&self, flows: Vec<FlowSpec>) -> ScenarioFile {
        let mut intersections = Vec::new();
        let mut roads = Vec::new();
        let phases = self.phase_plan.phases();

        for r in -1..=self.rows {
            for c in -1..=self.cols {
                let is_signal = self.is_signal(c, r);
                let touches = Dir::ALL.iter().any(|d| {
                    let (dc, dr) = d.offset();
                    self.is_signal(c + dc, r + dr)
                });
                if !is_signal && !touches {
                    continue;
                }
                let point = [c as f64 * self.spacing_m, r as f64 * self.spacing_m];
                if !is_signal {
                    intersections.push(IntersectionSpec {
                        id: self.node_name(c, r),
                        point,
                        is_virtual: true,
                        lane_links: vec![],
                        phases: vec![],
                        conflicts: vec![],
                    });
                    continue;
                }
                let mut lane_links = Vec::new();
                let mut movements = Vec::new();
                for d in Dir::ALL {
                    let incoming = self.incoming(c, r, d);
                    for turn in Turn::ALL {
                        let out = self.road(c, r, d.exit(turn));
                        for k in 0..LANES_PER_ROAD {
                            lane_links.push(LaneLinkSpec {
                                from: lane_name(&incoming, turn.lane()),
                                to: lane_name(&out, k),
                            });
                            movements.push(Movement(d, turn));
                        }
                    }
                }
                let mut conflicts = Vec::new();
                for a in 0..movements.len() {
                    for b in a + 1..movements.len() {
                        if movements[a].conflicts(movements[b]) {
                            conflicts.push([a, b]);
                        }
                    }
                }
                let phase_links = phases
                    .iter()
                    .map(|ms| {
                        (0..movements.len())
                            .filter(|&k| ms.contains(&movements[k]))
                            .collect()
                    })
                    .collect();
                intersections.push(IntersectionSpec {
                    id: self.node_name(c, r),
                    point,
                    is_virtual: false,
                    lane_links,
                    phases: phase_links,
                    conflicts,
                });
                for d in Dir::ALL {
                    let (dc, dr) = d.offset();
                    roads.push(RoadSpec {
                        id: self.road(c, r, d),
                        from: self.node_name(c, r),
                        to: self.node_name(c + dc, r + dr),
                        length: self.spacing_m,
                        max_speed: self.max_speed,
                        lanes: LANES_PER_ROAD,
                    });
                    if !self.is_signal(c + dc, r + dr) {
                        roads.push(RoadSpec {
                            id: self.road(c + dc, r + dr, d.opposite()),
                            from: self.node_name(c + dc, r + dr),
                            to: self.node_name(c, r),
                            length: self.spacing_m,
                            max_speed: self.max_speed,
                            lanes: LANES_PER_ROAD,
                        });
                    }
                }
            }
        }

        ScenarioFile {
            version: SCENARIO_SCHEMA_VERSION,
            intersections,
            roads,
            flows,
        }
    }
}

/// Per-movement arrival rates (veh/s) for one intersection.
pub type MovementRates = Vec<(Movement, f64)>;

/// Single intersection with periodic flows for each movement, `horizon_s` long.
pub fn single_intersection(plan: PhasePlan, rates: &MovementRates, horizon_s: u32) -> ScenarioFile {
    let grid = GridBuilder::single(plan);
    let flows = rates
        .iter()
        .filter(|(_, rate)| *rate > 0.0)
        .map(|&(m, rate)| {
            let route = grid.movement_route(0, 0, m);
            let route: Vec<&str> = route.iter().map(String::as_str).collect();
            FlowSpec::periodic(&route, 0, horizon_s, 1.0 / rate)
        })
        .collect();
    grid.build(flows)
}

/// The asymmetric, congested single intersection used for the desk-scale
/// comparisons: a dominant north-south corridor with light cross traffic.
pub fn desk_congested(horizon_s: u32) -> ScenarioFile {
    use Dir::*;
    use Turn::*;
    let rates = vec![
        (Movement(N, Through), 0.34),
        (Movement(S, Through), 0.28),
        (Movement(E, Through), 0.09),
        (Movement(W, Through), 0.07),
        (Movement(N, Left), 0.07),
        (Movement(S, Left), 0.05),
        (Movement(E, Left), 0.03),
        (Movement(W, Left), 0.03),
        (Movement(N, Right), 0.05),
        (Movement(S, Right), 0.05),
        (Movement(E, Right), 0.03),
        (Movement(W, Right), 0.03),
    ];
    single_intersection(PhasePlan::Four, &rates, horizon_s)
}

/// A Jinan-sized intersection: 12 incoming / 12 outgoing lanes, 36 lane
/// links and 9 phases, with light uniform demand.
pub fn jinan_like(horizon_s: u32) -> ScenarioFile {
    let rates = Dir::ALL
        .iter()
        .flat_map(|&d| Turn::ALL.iter().map(move |&t| (Movement(d, t), 0.02)))
        .collect();
    single_intersection(PhasePlan::Nine, &rates, horizon_s)
}
