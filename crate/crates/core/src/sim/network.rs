//! Road network: validated intersections, roads, lanes, lane links and phase tables.
//!
//! The on-disk form is a single JSON document in the spirit of CityFlow's
//! roadnet + flow files (see [`ScenarioFile`](super::scenario::ScenarioFile)).
//! Everything here is the validated, index-based form the engine runs on.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::SimError;

/// Average road space taken by one queued vehicle (m).
pub const VEHICLE_SPACING_M: f64 = 7.5;

macro_rules! index_type {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        pub struct $name(pub usize);

        impl $name {
            #[inline]
            pub fn index(self) -> usize {
                self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }
    };
}

index_type!(
    /// Index of a lane in [`RoadNetwork::lanes`].
    LaneId
);
index_type!(
    /// Index of a road in [`RoadNetwork::roads`].
    RoadId
);
index_type!(
    /// Index of a signalized intersection in [`RoadNetwork::intersections`].
    IntersectionId
);
index_type!(
    /// Index of a lane link in [`RoadNetwork::links`].
    LinkId
);

/// A 2D point in metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn lerp(self, other: Point, frac: f64) -> Point {
        Point::new(
            self.x + (other.x - self.x) * frac,
            self.y + (other.y - self.y) * frac,
        )
    }
}

/// Where a road starts or ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Endpoint {
    Signal(IntersectionId),
    /// A virtual node at the edge of the network, indexed into `RoadNetwork::boundary_nodes`.
    Boundary(usize),
}

#[derive(Debug, Clone)]
pub struct Lane {
    pub road: RoadId,
    /// Position within the road (0 = innermost).
    pub index: usize,
    pub capacity: usize,
    /// Free-flow traversal time in whole seconds (at least 1).
    pub traversal_s: u32,
}

#[derive(Debug, Clone)]
pub struct Road {
    pub id: String,
    pub from: Endpoint,
    pub to: Endpoint,
    pub start: Point,
    pub end: Point,
    pub length: f64,
    pub max_speed: f64,
    pub lanes: Vec<LaneId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LaneLink {
    pub from: LaneId,
    pub to: LaneId,
    pub intersection: IntersectionId,
}

/// A conflict-free set of lane links that receive green together.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Phase {
    /// Global link ids, sorted ascending.
    pub links: Vec<LinkId>,
}

#[derive(Debug, Clone)]
pub struct Intersection {
    pub id: String,
    pub point: Point,
    pub in_roads: Vec<RoadId>,
    pub out_roads: Vec<RoadId>,
    /// Incoming lanes ordered by road then lane index.
    pub in_lanes: Vec<LaneId>,
    /// Outgoing lanes ordered by road then lane index.
    pub out_lanes: Vec<LaneId>,
    /// Global link ids in declaration order; position = local link index.
    pub links: Vec<LinkId>,
    pub phases: Vec<Phase>,
}

impl Intersection {
    pub fn num_phases(&self) -> usize {
        self.phases.len()
    }

    /// All lanes touching the intersection: incoming first, then outgoing.
    pub fn lanes(&self) -> impl Iterator<Item = LaneId> + '_ {
        self.in_lanes.iter().chain(self.out_lanes.iter()).copied()
    }

    pub fn num_lanes(&self) -> usize {
        self.in_lanes.len() + self.out_lanes.len()
    }
}

#[derive(Debug, Clone)]
pub struct BoundaryNode {
    pub id: String,
    pub point: Point,
}

/// Validated network. Constructed through [`RoadNetwork::from_specs`].
#[derive(Debug, Clone)]
pub struct RoadNetwork {
    pub intersections: Vec<Intersection>,
    pub boundary_nodes: Vec<BoundaryNode>,
    pub roads: Vec<Road>,
    pub lanes: Vec<Lane>,
    pub links: Vec<LaneLink>,
    links_from_lane: Vec<Vec<LinkId>>,
    /// Roads reachable from each lane through one lane link.
    next_roads: Vec<BTreeSet<RoadId>>,
    /// Intersections for which a lane is an incoming or outgoing lane.
    lane_owners: Vec<Vec<IntersectionId>>,
    road_index: HashMap<String, RoadId>,
}

// ---------------------------------------------------------------------------
// JSON schema
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntersectionSpec {
    pub id: String,
    /// `[x, y]` in metres.
    pub point: [f64; 2],
    /// Boundary nodes are virtual: they carry no signal, links or phases.
    #[serde(default, rename = "virtual")]
    pub is_virtual: bool,
    #[serde(default)]
    pub lane_links: Vec<LaneLinkSpec>,
    /// Each phase lists indices into `lane_links`.
    #[serde(default)]
    pub phases: Vec<Vec<usize>>,
    /// Pairs of `lane_links` indices that may never be green together.
    #[serde(default)]
    pub conflicts: Vec<[usize; 2]>,
}

/// Lane references use CityFlow naming: `<road id>_<lane index>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaneLinkSpec {
    pub from: String,
    pub to: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoadSpec {
    pub id: String,
    pub from: String,
    pub to: String,
    /// Metres.
    pub length: f64,
    /// Metres per second.
    pub max_speed: f64,
    pub lanes: usize,
}

pub fn lane_name(road: &str, index: usize) -> String {
    format!("{road}_{index}")
}

fn invalid(msg: impl Into<String>) -> SimError {
    SimError::Validation(msg.into())
}

impl RoadNetwork {
    pub fn from_specs(
        intersections: &[IntersectionSpec],
        roads: &[RoadSpec],
    ) -> Result<Self, SimError> {
        // Nodes.
        let mut node_index: HashMap<&str, Endpoint> = HashMap::new();
        let mut signals = Vec::new();
        let mut boundary_nodes = Vec::new();
        let mut signal_specs = Vec::new();
        for spec in intersections {
            let point = Point::new(spec.point[0], spec.point[1]);
            let endpoint = if spec.is_virtual {
                if !spec.lane_links.is_empty() || !spec.phases.is_empty() {
                    return Err(invalid(format!(
                        "virtual intersection {} must not declare lane links or phases",
                        spec.id
                    )));
                }
                boundary_nodes.push(BoundaryNode {
                    id: spec.id.clone(),
                    point,
                });
                Endpoint::Boundary(boundary_nodes.len() - 1)
            } else {
                signals.push(Intersection {
                    id: spec.id.clone(),
                    point,
                    in_roads: Vec::new(),
                    out_roads: Vec::new(),
                    in_lanes: Vec::new(),
                    out_lanes: Vec::new(),
                    links: Vec::new(),
                    phases: Vec::new(),
                });
                signal_specs.push(spec);
                Endpoint::Signal(IntersectionId(signals.len() - 1))
            };
            if node_index.insert(spec.id.as_str(), endpoint).is_some() {
                return Err(invalid(format!("duplicate intersection id {}", spec.id)));
            }
        }

        let node_point = |e: Endpoint| match e {
            Endpoint::Signal(i) => signals[i.0].point,
            Endpoint::Boundary(b) => boundary_nodes[b].point,
        };

        // Roads and lanes.
        let mut out_roads = Vec::new();
        let mut lanes = Vec::new();
        let mut road_index = HashMap::new();
        let mut lane_index: HashMap<String, LaneId> = HashMap::new();
        for spec in roads {
            let from = *node_index.get(spec.from.as_str()).ok_or_else(|| {
                invalid(format!(
                    "road {} starts at unknown intersection {}",
                    spec.id, spec.from
                ))
            })?;
            let to = *node_index.get(spec.to.as_str()).ok_or_else(|| {
                invalid(format!(
                    "road {} ends at unknown intersection {}",
                    spec.id, spec.to
                ))
            })?;
            if !(spec.length.is_finite() && spec.length > 0.0) {
                return Err(invalid(format!(
                    "road {} must have positive length",
                    spec.id
                )));
            }
            if !(spec.max_speed.is_finite() && spec.max_speed > 0.0) {
                return Err(invalid(format!(
                    "road {} must have positive max_speed",
                    spec.id
                )));
            }
            if spec.lanes == 0 {
                return Err(invalid(format!(
                    "road {} must have at least one lane",
                    spec.id
                )));
            }
            let road_id = RoadId(out_roads.len());
            if road_index.insert(spec.id.clone(), road_id).is_some() {
                return Err(invalid(format!("duplicate road id {}", spec.id)));
            }
            let capacity = (spec.length / VEHICLE_SPACING_M).ceil() as usize;
            let traversal_s = ((spec.length / spec.max_speed).ceil() as u32).max(1);
            let mut lane_ids = Vec::with_capacity(spec.lanes);
            for index in 0..spec.lanes {
                let id = LaneId(lanes.len());
                lanes.push(Lane {
                    road: road_id,
                    index,
                    capacity: capacity.max(1),
                    traversal_s,
                });
                lane_index.insert(lane_name(&spec.id, index), id);
                lane_ids.push(id);
            }
            out_roads.push(Road {
                id: spec.id.clone(),
                from,
                to,
                start: node_point(from),
                end: node_point(to),
                length: spec.length,
                max_speed: spec.max_speed,
                lanes: lane_ids,
            });
        }
        let roads = out_roads;

        for (r, road) in roads.iter().enumerate() {
            if let Endpoint::Signal(i) = road.to {
                signals[i.0].in_roads.push(RoadId(r));
                signals[i.0].in_lanes.extend(road.lanes.iter().copied());
            }
            if let Endpoint::Signal(i) = road.from {
                signals[i.0].out_roads.push(RoadId(r));
                signals[i.0].out_lanes.extend(road.lanes.iter().copied());
            }
        }

        // Lane links and phases.
        let mut links = Vec::new();
        for (i, spec) in signal_specs.iter().enumerate() {
            let iid = IntersectionId(i);
            for (k, link) in spec.lane_links.iter().enumerate() {
                let from = *lane_index.get(&link.from).ok_or_else(|| {
                    invalid(format!(
                        "lane link {k} of intersection {} references missing lane {}",
                        spec.id, link.from
                    ))
                })?;
                let to = *lane_index.get(&link.to).ok_or_else(|| {
                    invalid(format!(
                        "lane link {k} of intersection {} references missing lane {}",
                        spec.id, link.to
                    ))
                })?;
                if roads[lanes[from.0].road.0].to != Endpoint::Signal(iid) {
                    return Err(invalid(format!(
                        "lane link {k} of intersection {}: lane {} is not an incoming lane",
                        spec.id, link.from
                    )));
                }
                if roads[lanes[to.0].road.0].from != Endpoint::Signal(iid) {
                    return Err(invalid(format!(
                        "lane link {k} of intersection {}: lane {} is not an outgoing lane",
                        spec.id, link.to
                    )));
                }
                signals[i].links.push(LinkId(links.len()));
                links.push(LaneLink {
                    from,
                    to,
                    intersection: iid,
                });
            }

            let n_local = spec.lane_links.len();
            let mut conflict = vec![false; n_local * n_local];
            for &[a, b] in &spec.conflicts {
                if a >= n_local || b >= n_local {
                    return Err(invalid(format!(
                        "conflict pair [{a}, {b}] of intersection {} references a missing lane link",
                        spec.id
                    )));
                }
                conflict[a * n_local + b] = true;
                conflict[b * n_local + a] = true;
            }

            if spec.phases.len() < 2 {
                return Err(invalid(format!(
                    "intersection {} needs at least 2 phases, found {}",
                    spec.id,
                    spec.phases.len()
                )));
            }
            for (p, phase) in spec.phases.iter().enumerate() {
                let mut members = BTreeSet::new();
                for &local in phase {
                    if local >= n_local {
                        return Err(invalid(format!(
                            "phase {p} of intersection {} references missing lane link {local}",
                            spec.id
                        )));
                    }
                    members.insert(local);
                }
                let members: Vec<usize> = members.into_iter().collect();
                for (x, &a) in members.iter().enumerate() {
                    for &b in &members[x + 1..] {
                        if conflict[a * n_local + b] {
                            return Err(invalid(format!(
                                "phase {p} of intersection {} contains conflicting lane links {a} and {b}",
                                spec.id
                            )));
                        }
                    }
                }
                let global = members.iter().map(|&l| signals[i].links[l]).collect();
                signals[i].phases.push(Phase { links: global });
            }
        }

        let mut links_from_lane = vec![Vec::new(); lanes.len()];
        let mut next_roads = vec![BTreeSet::new(); lanes.len()];
        for (l, link) in links.iter().enumerate() {
            links_from_lane[link.from.0].push(LinkId(l));
            next_roads[link.from.0].insert(lanes[link.to.0].road);
        }
        let mut lane_owners = vec![Vec::new(); lanes.len()];
        for (i, inter) in signals.iter().enumerate() {
            for lane in inter.lanes() {
                if !lane_owners[lane.0].contains(&IntersectionId(i)) {
                    lane_owners[lane.0].push(IntersectionId(i));
                }
            }
        }

        Ok(Self {
            intersections: signals,
            boundary_nodes,
            roads,
            lanes,
            links,
            links_from_lane,
            next_roads,
            lane_owners,
            road_index,
        })
    }

    pub fn road_by_name(&self, name: &str) -> Option<RoadId> {
        self.road_index.get(name).copied()
    }

    pub fn lane(&self, id: LaneId) -> &Lane {
        &self.lanes[id.0]
    }

    pub fn road(&self, id: RoadId) -> &Road {
        &self.roads[id.0]
    }

    pub fn link(&self, id: LinkId) -> &LaneLink {
        &self.links[id.0]
    }

    pub fn intersection(&self, id: IntersectionId) -> &Intersection {
        &self.intersections[id.0]
    }

    pub fn lane_road(&self, lane: LaneId) -> RoadId {
        self.lanes[lane.0].road
    }

    pub fn links_from(&self, lane: LaneId) -> &[LinkId] {
        &self.links_from_lane[lane.0]
    }

    /// Whether some lane link leads from `lane` onto `road`.
    pub fn lane_reaches(&self, lane: LaneId, road: RoadId) -> bool {
        self.next_roads[lane.0].contains(&road)
    }

    pub fn lane_owners(&self, lane: LaneId) -> &[IntersectionId] {
        &self.lane_owners[lane.0]
    }

    pub fn road_length(&self, lane: LaneId) -> f64 {
        self.roads[self.lanes[lane.0].road.0].length
    }

    /// Checks that a road sequence is drivable: consecutive roads meet at a
    /// common intersection and a chain of lane links exists along the route.
    ///
    /// Returns, for each route position, the lanes from which the rest of the
    /// route can still be completed.
    pub fn route_lanes(&self, route: &[RoadId]) -> Result<Vec<Vec<LaneId>>, SimError> {
        let name = |r: &RoadId| self.roads[r.0].id.clone();
        if route.is_empty() {
            return Err(invalid("route must contain at least one road"));
        }
        for pair in route.windows(2) {
            let (a, b) = (&self.roads[pair[0].0], &self.roads[pair[1].0]);
            if a.to != b.from || !matches!(a.to, Endpoint::Signal(_)) {
                return Err(invalid(format!(
                    "route is not connected end-to-end: {} does not lead into {}",
                    name(&pair[0]),
                    name(&pair[1])
                )));
            }
        }
        // Lane-level reachability, walking backwards from the last road.
        let mut reachable: Vec<LaneId> = self.roads[route[route.len() - 1].0].lanes.clone();
        let mut viable = vec![reachable.clone()];
        for w in (0..route.len() - 1).rev() {
            let road = &self.roads[route[w].0];
            let next: Vec<LaneId> = road
                .lanes
                .iter()
                .copied()
                .filter(|&l| {
                    self.links_from(l)
                        .iter()
                        .any(|k| reachable.contains(&self.links[k.0].to))
                })
                .collect();
            if next.is_empty() {
                return Err(invalid(format!(
                    "route has no lane link from {} to {}",
                    name(&route[w]),
                    name(&route[w + 1])
                )));
            }
            viable.push(next.clone());
            reachable = next;
        }
        viable.reverse();
        Ok(viable)
    }
}
