//! The 37 candidate features, computed per intersection from a simulator view.
//!
//! Lane-scale features enumerate the intersection's lanes as incoming lanes
//! followed by outgoing lanes. Pressure features (F11, F25, F30, F36) use the
//! outgoing-minus-incoming sign, the opposite of the control convention in
//! [`Simulation::movement_pressure`].

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::{IntersectionId, LaneId, LinkId, Point, Simulation};

pub const NUM_FEATURES: usize = 37;

/// Normalizer for elapsed-time features (s).
pub const TIME_SCALE_S: f64 = 300.0;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("unknown feature id {0}; expected 1..=37")]
    UnknownFeature(usize),
    #[error("writing feature dump: {0}")]
    Csv(#[from] csv::Error),
}

/// One-based feature identifier, `F1`..`F37`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureId(u8);

impl FeatureId {
    pub fn new(n: usize) -> Result<Self, FeatureError> {
        if (1..=NUM_FEATURES).contains(&n) {
            Ok(Self(n as u8))
        } else {
            Err(FeatureError::UnknownFeature(n))
        }
    }

    pub fn number(self) -> usize {
        self.0 as usize
    }

    /// Position in the catalog, `0..37`.
    pub fn index(self) -> usize {
        self.0 as usize - 1
    }

    pub fn all() -> impl Iterator<Item = FeatureId> {
        (1..=NUM_FEATURES as u8).map(FeatureId)
    }
}

impl fmt::Display for FeatureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "F{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Lane,
    InLane,
    OutLane,
    InRoad,
    Phase,
    Intersection,
    LaneLink,
}

/// What a feature's values measure; decides its input normalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Unit {
    Vehicles,
    Seconds,
    Indicator,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Stat {
    Count,
    Waiting,
    WaitTime,
    Delay,
    Segments,
    Pressure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Lanes(Scale, Stat),
    Road(Stat),
    Phase(Stat),
    Inter(Stat),
    Image,
    CurrentPhase,
    PhaseChanged,
    PassedVehicles,
    DepartedTravelTime,
    LinkPressure,
    LinkCount,
}

const TABLE: [(&str, Kind); NUM_FEATURES] = {
    use Kind::*;
    use Scale::{InLane, Lane, OutLane};
    use Stat::*;
    [
        ("lane_2_num_vehicle", Lanes(Lane, Count)),
        ("lane_2_num_waiting_vehicle", Lanes(Lane, Waiting)),
        ("lane_2_sum_waiting_time", Lanes(Lane, WaitTime)),
        ("lane_2_delay", Lanes(Lane, Delay)),
        ("lane_2_num_vehicle_seg_by_k", Lanes(Lane, Segments)),
        ("inlane_2_num_vehicle", Lanes(InLane, Count)),
        ("inlane_2_num_waiting_vehicle", Lanes(InLane, Waiting)),
        ("inlane_2_sum_waiting_time", Lanes(InLane, WaitTime)),
        ("inlane_2_delay", Lanes(InLane, Delay)),
        ("inlane_2_num_vehicle_seg_by_k", Lanes(InLane, Segments)),
        ("inlane_2_pressure", Lanes(InLane, Pressure)),
        ("outlane_2_num_vehicle", Lanes(OutLane, Count)),
        ("outlane_2_num_waiting_vehicle", Lanes(OutLane, Waiting)),
        ("outlane_2_sum_waiting_time", Lanes(OutLane, WaitTime)),
        ("outlane_2_delay", Lanes(OutLane, Delay)),
        ("outlane_2_num_vehicle_seg_by_k", Lanes(OutLane, Segments)),
        ("inroad_2_num_vehicle", Road(Count)),
        ("inroad_2_num_waiting_vehicle", Road(Waiting)),
        ("inroad_2_sum_waiting_time", Road(WaitTime)),
        ("inroad_2_delay", Road(Delay)),
        ("phase_2_num_vehicle", Phase(Count)),
        ("phase_2_num_waiting_vehicle", Phase(Waiting)),
        ("phase_2_sum_waiting_time", Phase(WaitTime)),
        ("phase_2_delay", Phase(Delay)),
        ("phase_2_pressure", Phase(Pressure)),
        ("inter_2_num_vehicle", Inter(Count)),
        ("inter_2_num_waiting_vehicle", Inter(Waiting)),
        ("inter_2_sum_waiting_time", Inter(WaitTime)),
        ("inter_2_delay", Inter(Delay)),
        ("inter_2_pressure", Inter(Pressure)),
        ("inter_2_vehicle_position_image", Image),
        ("inter_2_current_phase", CurrentPhase),
        ("inter_2_phase_has_changed", PhaseChanged),
        (
            "inter_2_num_passed_vehicle_since_last_action",
            PassedVehicles,
        ),
        (
            "inter_2_sum_travel_time_since_last_action",
            DepartedTravelTime,
        ),
        ("lanelink_2_pressure", LinkPressure),
        ("lanelink_2_num_vehicle", LinkCount),
    ]
};

/// Free parameters of the feature definitions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureConfig {
    /// Segments per lane for F5, F10 and F16.
    pub segments: usize,
    /// Side length (cells) of the F31 occupancy image.
    pub image_cells: usize,
    /// Half-width (m) of the square box around the intersection covered by F31.
    pub image_half_extent_m: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            segments: 3,
            image_cells: 8,
            image_half_extent_m: 150.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSpec {
    pub id: FeatureId,
    pub name: &'static str,
    pub scale: Scale,
    pub unit: Unit,
    pub dim: usize,
}

impl FeatureSpec {
    /// Multiplier applied to raw values before they enter a network:
    /// counts over a lane's capacity, times over [`TIME_SCALE_S`].
    pub fn normalizer(&self, lane_capacity: usize) -> f64 {
        match self.unit {
            Unit::Vehicles => 1.0 / lane_capacity.max(1) as f64,
            Unit::Seconds => 1.0 / TIME_SCALE_S,
            Unit::Indicator => 1.0,
        }
    }
}

/// The ordered list of all 37 features with their dimensions at one intersection.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureCatalog {
    pub entries: Vec<FeatureSpec>,
    /// Largest lane capacity at the intersection; the count normalizer.
    pub lane_capacity: usize,
}

impl FeatureCatalog {
    pub fn dims(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.dim).collect()
    }

    pub fn get(&self, id: FeatureId) -> &FeatureSpec {
        &self.entries[id.index()]
    }

    pub fn normalizers(&self) -> Vec<f64> {
        self.entries
            .iter()
            .map(|e| e.normalizer(self.lane_capacity))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub id: FeatureId,
    pub intersection: IntersectionId,
    pub t: u32,
    pub values: Vec<f64>,
}

fn unit_of(kind: Kind) -> Unit {
    match kind {
        Kind::Lanes(_, s) | Kind::Road(s) | Kind::Phase(s) | Kind::Inter(s) => match s {
            Stat::WaitTime | Stat::Delay => Unit::Seconds,
            _ => Unit::Vehicles,
        },
        Kind::Image | Kind::PassedVehicles | Kind::LinkPressure | Kind::LinkCount => Unit::Vehicles,
        Kind::DepartedTravelTime => Unit::Seconds,
        Kind::CurrentPhase | Kind::PhaseChanged => Unit::Indicator,
    }
}

fn scale_of(kind: Kind) -> Scale {
    match kind {
        Kind::Lanes(s, _) => s,
        Kind::Road(_) => Scale::InRoad,
        Kind::Phase(_) => Scale::Phase,
        Kind::LinkPressure | Kind::LinkCount => Scale::LaneLink,
        _ => Scale::Intersection,
    }
}

pub fn catalog(
    sim: &Simulation,
    intersection: IntersectionId,
    cfg: &FeatureConfig,
) -> FeatureCatalog {
    let net = sim.network();
    let inter = net.intersection(intersection);
    let entries = FeatureId::all()
        .zip(TABLE)
        .map(|(id, (name, kind))| {
            let per_lane = |scale: Scale| match scale {
                Scale::Lane => inter.num_lanes(),
                Scale::InLane => inter.in_lanes.len(),
                Scale::OutLane => inter.out_lanes.len(),
                _ => unreachable!("lane kinds only carry lane scales"),
            };
            let dim = match kind {
                Kind::Lanes(scale, Stat::Segments) => per_lane(scale) * cfg.segments,
                Kind::Lanes(scale, _) => per_lane(scale),
                Kind::Road(_) => inter.in_roads.len(),
                Kind::Phase(_) | Kind::CurrentPhase => inter.num_phases(),
                Kind::Image => cfg.image_cells * cfg.image_cells,
                Kind::LinkPressure | Kind::LinkCount => inter.links.len(),
                _ => 1,
            };
            FeatureSpec {
                id,
                name,
                scale: scale_of(kind),
                unit: unit_of(kind),
                dim,
            }
        })
        .collect();
    let lane_capacity = inter
        .lanes()
        .map(|l| net.lane(l).capacity)
        .max()
        .unwrap_or(1);
    FeatureCatalog {
        entries,
        lane_capacity,
    }
}

/// Per-lane or per-link statistic, before any aggregation.
struct View<'a> {
    sim: &'a Simulation,
    intersection: IntersectionId,
}

impl View<'_> {
    fn lane(&self, lane: LaneId, stat: Stat) -> f64 {
        let sim = self.sim;
        match stat {
            Stat::Count => sim.lane_vehicle_count(lane) as f64,
            Stat::Waiting => sim.lane_waiting_count(lane) as f64,
            Stat::WaitTime => sim.lane_waiting_time(lane) as f64,
            Stat::Delay => sim.lane_delay(lane),
            Stat::Pressure => {
                // Summed over the links leaving this lane, outgoing minus incoming.
                sim.network()
                    .links_from(lane)
                    .iter()
                    .filter(|&&l| sim.network().link(l).intersection == self.intersection)
                    .map(|&l| -sim.movement_pressure(l) as f64)
                    .sum()
            }
            Stat::Segments => unreachable!("segment counts expand to K values"),
        }
    }

    fn segments(&self, lane: LaneId, k: usize) -> Vec<f64> {
        let mut out = vec![0.0; k];
        let length = self.sim.network().road_length(lane);
        for q in 0..self.sim.lane_vehicle_count(lane) {
            let frac = self.sim.vehicle_offset(lane, q) / length;
            let seg = ((frac * k as f64) as usize).min(k - 1);
            out[seg] += 1.0;
        }
        out
    }

    fn link(&self, link: LinkId, stat: Stat) -> f64 {
        let sim = self.sim;
        match stat {
            Stat::Count => sim.link_vehicle_count(link) as f64,
            Stat::Waiting => sim.link_waiting_count(link) as f64,
            Stat::WaitTime => sim.link_waiting_time(link) as f64,
            Stat::Pressure => -sim.movement_pressure(link) as f64,
            Stat::Delay | Stat::Segments => unreachable!("not a link statistic"),
        }
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Computes one feature at the intersection.
pub fn extract(
    id: FeatureId,
    sim: &Simulation,
    intersection: IntersectionId,
    cfg: &FeatureConfig,
) -> FeatureVector {
    let net = sim.network();
    let inter = net.intersection(intersection);
    let view = View { sim, intersection };
    let lanes = |scale: Scale| -> Vec<LaneId> {
        match scale {
            Scale::Lane => inter.lanes().collect(),
            Scale::InLane => inter.in_lanes.clone(),
            Scale::OutLane => inter.out_lanes.clone(),
            _ => unreachable!(),
        }
    };
    let values = match TABLE[id.index()].1 {
        Kind::Lanes(scale, Stat::Segments) => lanes(scale)
            .into_iter()
            .flat_map(|l| view.segments(l, cfg.segments))
            .collect(),
        Kind::Lanes(scale, stat) => lanes(scale)
            .into_iter()
            .map(|l| view.lane(l, stat))
            .collect(),
        Kind::Road(stat) => inter
            .in_roads
            .iter()
            .map(|&r| {
                let road_lanes = net.road(r).lanes.iter();
                if stat == Stat::Delay {
                    mean(road_lanes.map(|&l| view.lane(l, stat)))
                } else {
                    road_lanes.map(|&l| view.lane(l, stat)).sum()
                }
            })
            .collect(),
        Kind::Phase(Stat::Delay) => inter
            .phases
            .iter()
            .map(|p| {
                let mut from: Vec<LaneId> = p.links.iter().map(|&l| net.link(l).from).collect();
                from.sort();
                from.dedup();
                mean(from.into_iter().map(|l| view.lane(l, Stat::Delay)))
            })
            .collect(),
        Kind::Phase(stat) => inter
            .phases
            .iter()
            .map(|p| p.links.iter().map(|&l| view.link(l, stat)).sum())
            .collect(),
        Kind::Inter(Stat::Delay) => vec![mean(inter.lanes().map(|l| view.lane(l, Stat::Delay)))],
        Kind::Inter(Stat::Pressure) => {
            vec![inter
                .links
                .iter()
                .map(|&l| view.link(l, Stat::Pressure))
                .sum()]
        }
        Kind::Inter(stat) => vec![inter.lanes().map(|l| view.lane(l, stat)).sum()],
        Kind::Image => occupancy_image(sim, intersection, cfg),
        Kind::CurrentPhase => {
            let mut v = vec![0.0; inter.num_phases()];
            v[sim.signal(intersection).current_phase] = 1.0;
            v
        }
        Kind::PhaseChanged => vec![f64::from(u8::from(
            sim.interval(intersection).phase_changed,
        ))],
        Kind::PassedVehicles => {
            let now = sim.intersection_vehicle_count(intersection) as f64;
            vec![now - sim.interval(intersection).vehicles_at_mark as f64]
        }
        Kind::DepartedTravelTime => vec![sim.interval(intersection).departed_travel_time as f64],
        Kind::LinkPressure => inter
            .links
            .iter()
            .map(|&l| view.link(l, Stat::Pressure))
            .collect(),
        Kind::LinkCount => inter
            .links
            .iter()
            .map(|&l| view.link(l, Stat::Count))
            .collect(),
    };
    FeatureVector {
        id,
        intersection,
        t: sim.time(),
        values,
    }
}

/// Vehicle counts on a square grid centred on the intersection, row-major with
/// row 0 at the north edge. Vehicles outside the box are ignored.
fn occupancy_image(
    sim: &Simulation,
    intersection: IntersectionId,
    cfg: &FeatureConfig,
) -> Vec<f64> {
    let net = sim.network();
    let inter = net.intersection(intersection);
    let n = cfg.image_cells;
    let half = cfg.image_half_extent_m;
    let mut img = vec![0.0; n * n];
    for lane in inter.lanes() {
        let road = net.road(net.lane_road(lane));
        for q in 0..sim.lane_vehicle_count(lane) {
            let p: Point = road
                .start
                .lerp(road.end, sim.vehicle_offset(lane, q) / road.length);
            let u = (p.x - (inter.point.x - half)) / (2.0 * half);
            let w = ((inter.point.y + half) - p.y) / (2.0 * half);
            if !(0.0..=1.0).contains(&u) || !(0.0..=1.0).contains(&w) {
                continue;
            }
            let col = ((u * n as f64) as usize).min(n - 1);
            let row = ((w * n as f64) as usize).min(n - 1);
            img[row * n + col] += 1.0;
        }
    }
    img
}

/// All 37 features in catalog order.
pub fn extract_all(
    sim: &Simulation,
    intersection: IntersectionId,
    cfg: &FeatureConfig,
) -> Vec<FeatureVector> {
    FeatureId::all()
        .map(|id| extract(id, sim, intersection, cfg))
        .collect()
}

/// Writes feature vectors as CSV rows `t,intersection,feature_id,index,value`.
pub fn write_feature_dump<W: Write>(
    out: W,
    features: &[FeatureVector],
) -> Result<(), FeatureError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "intersection", "feature_id", "index", "value"])?;
    for f in features {
        for (k, v) in f.values.iter().enumerate() {
            w.write_record([
                f.t.to_string(),
                f.intersection.0.to_string(),
                f.id.to_string(),
                k.to_string(),
                v.to_string(),
            ])?;
        }
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::builders;
    use crate::sim::Scenario;

    fn jinan() -> Simulation {
        Simulation::new(&Scenario::from_file(&builders::jinan_like(600)).unwrap())
    }

    #[test]
    fn ids_are_one_based() {
        assert!(FeatureId::new(0).is_err());
        assert!(FeatureId::new(38).is_err());
        assert_eq!(FeatureId::new(37).unwrap().index(), 36);
        assert_eq!(FeatureId::new(5).unwrap().to_string(), "F5");
    }

    #[test]
    fn jinan_catalog_dims() {
        let sim = jinan();
        let cat = catalog(&sim, IntersectionId(0), &FeatureConfig::default());
        let dim = |n| cat.get(FeatureId::new(n).unwrap()).dim;
        assert_eq!(cat.entries.len(), 37);
        assert_eq!(dim(1), 24);
        assert_eq!(dim(5), 72);
        assert_eq!(dim(11), 12);
        assert_eq!(dim(21), 9);
        assert_eq!(dim(26), 1);
        assert_eq!(dim(31), 64);
        assert_eq!(dim(32), 9);
        assert_eq!(dim(36), 36);
        assert!(cat.entries.iter().all(|e| e.dim > 0));
    }

    #[test]
    fn empty_intersection() {
        let sim = jinan();
        let cfg = FeatureConfig::default();
        let all = extract_all(&sim, IntersectionId(0), &cfg);
        for f in &all {
            match f.id.number() {
                32 => assert_eq!(f.values.iter().sum::<f64>(), 1.0),
                _ => assert!(f.values.iter().all(|&v| v == 0.0), "{}", f.id),
            }
        }
    }

    #[test]
    fn dump_has_one_row_per_value() {
        let sim = jinan();
        let f = extract(
            FeatureId::new(21).unwrap(),
            &sim,
            IntersectionId(0),
            &FeatureConfig::default(),
        );
        let mut buf = Vec::new();
        write_feature_dump(&mut buf, &[f]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 10);
        assert!(text.lines().nth(1).unwrap().starts_with("0,0,F21,0,"));
    }
}
