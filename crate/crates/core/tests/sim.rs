use std::collections::{HashMap, HashSet, VecDeque};

use proptest::prelude::*;
use tinylight::sim::builders::{self, Dir, GridBuilder, Movement, PhasePlan, Turn};
use tinylight::sim::network::{IntersectionSpec, LaneLinkSpec, RoadSpec};
use tinylight::sim::{
    load_scenario, Endpoint, FlowSpec, IntersectionId, LaneId, Metrics, Scenario, ScenarioFile,
    SimError, Simulation,
};

fn scenario(file: &ScenarioFile) -> Scenario {
    Scenario::from_file(file).expect("valid scenario")
}

/// One incoming and one outgoing single-lane road joined by a single link.
/// Phase 0 serves the link, phase 1 serves nothing.
fn single_link_file(flows: Vec<FlowSpec>) -> ScenarioFile {
    let node = |id: &str, x: f64, v: bool| IntersectionSpec {
        id: id.into(),
        point: [x, 0.0],
        is_virtual: v,
        lane_links: vec![],
        phases: vec![],
        conflicts: vec![],
    };
    let mut signal = node("X", 0.0, false);
    signal.lane_links = vec![LaneLinkSpec {
        from: "in_0".into(),
        to: "out_0".into(),
    }];
    signal.phases = vec![vec![0], vec![]];
    let road = |id: &str, from: &str, to: &str| RoadSpec {
        id: id.into(),
        from: from.into(),
        to: to.into(),
        length: 300.0,
        max_speed: 10.0,
        lanes: 1,
    };
    ScenarioFile {
        version: 1,
        intersections: vec![node("A", -300.0, true), signal, node("B", 300.0, true)],
        roads: vec![road("in", "A", "X"), road("out", "X", "B")],
        flows,
    }
}

#[test]
fn jinan_fixture_loads_with_published_meta() {
    let path = concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../../scenarios/jinan_like.json"
    );
    let s = load_scenario(path).unwrap();
    let inter = &s.network.intersections[0];
    assert_eq!(s.network.intersections.len(), 1);
    assert_eq!(inter.in_lanes.len(), 12);
    assert_eq!(inter.out_lanes.len(), 12);
    assert_eq!(inter.num_phases(), 9);
    assert_eq!(inter.links.len(), 36);
}

#[test]
fn committed_scenarios_match_builders() {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios");
    let check = |name: &str, file: ScenarioFile| {
        let text = std::fs::read_to_string(format!("{dir}/{name}")).unwrap();
        let on_disk: ScenarioFile = serde_json::from_str(&text).unwrap();
        assert_eq!(
            on_disk, file,
            "{name} is stale; regenerate with `tinylight scenarios`"
        );
    };
    check("jinan_like.json", builders::jinan_like(3600));
    check("desk_congested.json", builders::desk_congested(3600));
}

#[test]
fn missing_lane_in_link_is_rejected() {
    let mut file = single_link_file(vec![]);
    file.intersections[1].lane_links[0].to = "out_7".into();
    match Scenario::from_file(&file) {
        Err(SimError::Validation(msg)) => assert!(msg.contains("missing lane out_7"), "{msg}"),
        other => panic!("expected validation error, got {other:?}"),
    }
}

#[test]
fn conflicting_phase_is_rejected() {
    let mut file = builders::jinan_like(60);
    // Link 0 is a northern left turn, link 12 starts the eastern left turn.
    file.intersections
        .iter_mut()
        .find(|i| !i.is_virtual)
        .unwrap()
        .phases[0]
        .extend([0, 12]);
    let err = Scenario::from_file(&file).unwrap_err().to_string();
    assert!(err.contains("conflicting lane links"), "{err}");
}

#[test]
fn parse_errors_carry_position() {
    let err = Scenario::from_json("{\n  \"version\": 1,\n  \"roads\": [,]\n}").unwrap_err();
    match err {
        SimError::Parse { line, .. } => assert_eq!(line, 3),
        other => panic!("{other:?}"),
    }
    let err = Scenario::from_json(r#"{"version":1,"intersections":[],"roads":[],"bogus":1}"#)
        .unwrap_err();
    assert!(err.to_string().contains("bogus"));
}

#[test]
fn disconnected_route_is_rejected() {
    let g = GridBuilder::single(PhasePlan::Four);
    let route = [g.incoming(0, 0, Dir::N), g.incoming(0, 0, Dir::S)];
    let route: Vec<&str> = route.iter().map(String::as_str).collect();
    let file = g.build(vec![FlowSpec::at_times(&route, vec![0])]);
    assert!(matches!(
        Scenario::from_file(&file),
        Err(SimError::Validation(_))
    ));
}

#[test]
fn grid_route_crosses_both_intersections() {
    let g = GridBuilder {
        cols: 2,
        ..GridBuilder::single(PhasePlan::Four)
    };
    let route = [g.incoming(0, 0, Dir::W),
        g.road(0, 0, Dir::E),
        g.road(1, 0, Dir::E)];
    let names: Vec<&str> = route.iter().map(String::as_str).collect();
    let s = scenario(&g.build(vec![FlowSpec::at_times(&names, vec![0])]));
    let net = &s.network;
    assert_eq!(net.intersections.len(), 2);

    // Oracle: breadth-first search over the road graph induced by lane links.
    let start = net.road_by_name(&route[0]).unwrap();
    let goal = net.road_by_name(&route[2]).unwrap();
    let mut next: HashMap<usize, HashSet<usize>> = HashMap::new();
    for link in &net.links {
        next.entry(net.lanes[link.from.0].road.0)
            .or_default()
            .insert(net.lanes[link.to.0].road.0);
    }
    let mut seen = HashSet::from([start.0]);
    let mut queue = VecDeque::from([start.0]);
    while let Some(r) = queue.pop_front() {
        for &n in next.get(&r).into_iter().flatten() {
            if seen.insert(n) {
                queue.push_back(n);
            }
        }
    }
    assert!(seen.contains(&goal.0));

    let crossed: HashSet<_> = s.routes[0]
        .roads
        .iter()
        .filter_map(|&r| match net.roads[r.0].to {
            Endpoint::Signal(i) => Some(i),
            Endpoint::Boundary(_) => None,
        })
        .collect();
    assert_eq!(
        crossed,
        HashSet::from([IntersectionId(0), IntersectionId(1)])
    );
}

#[test]
fn empty_network_only_advances_clock() {
    let s = scenario(&single_link_file(vec![]));
    let mut sim = Simulation::new(&s);
    for cmd in [0, 1, 0, 0] {
        sim.step(&[cmd]).unwrap();
    }
    assert_eq!(sim.time(), 4);
    assert!(sim.vehicles().is_empty());
    assert_eq!(sim.raw_metrics().finished_count, 0);
}

#[test]
fn invalid_commands_are_errors() {
    let s = scenario(&single_link_file(vec![]));
    let mut sim = Simulation::new(&s);
    assert!(matches!(
        sim.step(&[2]),
        Err(SimError::InvalidPhase { phase: 2, .. })
    ));
    assert!(matches!(sim.step(&[]), Err(SimError::CommandCount { .. })));
}

#[test]
fn waiting_vehicle_on_green_link_advances() {
    let s = scenario(&single_link_file(vec![FlowSpec::at_times(
        &["in", "out"],
        vec![],
    )]));
    let mut sim = Simulation::new(&s);
    let v = sim.insert_vehicle(0, 0, LaneId(0), true).unwrap();
    sim.step(&[0]).unwrap();
    assert_eq!(sim.vehicle(v).lane, Some(LaneId(1)));
    assert!(!sim.vehicle(v).is_waiting());
}

/// Vehicles a single green link can discharge from a standing queue in `green_s`.
fn drain_oracle(queue: usize, green_s: u32, headway: u32) -> usize {
    queue.min(green_s.div_ceil(headway) as usize)
}

#[test]
fn standing_queue_drains_at_saturation_rate() {
    for queue in [10usize, 15] {
        let s = scenario(&single_link_file(vec![FlowSpec::at_times(
            &["in", "out"],
            vec![],
        )]));
        let mut sim = Simulation::new(&s);
        for _ in 0..queue {
            sim.insert_vehicle(0, 0, LaneId(0), true).unwrap();
        }
        for _ in 0..20 {
            sim.step(&[0]).unwrap();
        }
        let served = queue - sim.lane_vehicle_count(LaneId(0));
        assert_eq!(served, drain_oracle(queue, 20, 2));
    }
    assert_eq!(drain_oracle(10, 20, 2), 10);
}

#[test]
fn movement_pressure_counts() {
    let s = scenario(&single_link_file(vec![FlowSpec::at_times(
        &["in", "out"],
        vec![],
    )]));
    let mut sim = Simulation::new(&s);
    let link = s.network.intersections[0].links[0];
    assert_eq!(sim.movement_pressure(link), 0);
    for _ in 0..5 {
        sim.insert_vehicle(0, 0, LaneId(0), true).unwrap();
    }
    for _ in 0..2 {
        sim.insert_vehicle(0, 1, LaneId(1), false).unwrap();
    }
    assert_eq!(sim.movement_pressure(link), 3);
}

fn desk_sim(seed: u64, warmup: u32) -> Simulation {
    let s = scenario(&builders::desk_congested(600));
    let mut sim = Simulation::new(&s.jittered(seed, 60));
    for t in 0..warmup {
        sim.step(&[((t / 17) % 4) as usize]).unwrap();
    }
    sim
}

#[test]
fn pressure_and_reward_match_vehicle_tally() {
    for seed in 0..5 {
        let sim = desk_sim(seed, 150 + seed as u32 * 40);
        let net = sim.network();
        let mut per_lane = vec![0i64; net.lanes.len()];
        for v in sim.vehicles() {
            if let Some(l) = v.lane {
                per_lane[l.0] += 1;
            }
        }
        let mut total = 0;
        for (k, link) in net.links.iter().enumerate() {
            let p = per_lane[link.from.0] - per_lane[link.to.0];
            assert_eq!(sim.movement_pressure(tinylight::sim::LinkId(k)), p);
            total += p;
        }
        assert_eq!(
            sim.intersection_reward(IntersectionId(0)),
            -(total.abs() as f64)
        );
    }
}

#[test]
fn reward_with_one_vehicle_per_incoming_lane() {
    let file = builders::jinan_like(10);
    let s = scenario(&file);
    let mut sim = Simulation::new(&s);
    assert_eq!(sim.intersection_reward(IntersectionId(0)), 0.0);
    let inter = s.network.intersections[0].clone();
    for &lane in &inter.in_lanes {
        let road = s.network.lane_road(lane);
        let route = s
            .routes
            .iter()
            .position(|r| r.roads[0] == road && r.viable_lanes[0].contains(&lane))
            .unwrap();
        sim.insert_vehicle(route, 0, lane, true).unwrap();
    }
    // Every link sees +1, and there are 36 of them.
    assert_eq!(sim.intersection_reward(IntersectionId(0)), -36.0);
}

#[test]
fn mixed_sign_pressures_sum_before_abs() {
    let s = scenario(&builders::jinan_like(10));
    let mut sim = Simulation::new(&s);
    let net = s.network.clone();
    let g = GridBuilder::single(PhasePlan::Nine);
    let route_of = |m: Movement| {
        let names = g.movement_route(0, 0, m);
        s.routes
            .iter()
            .position(|r| {
                r.roads[0] == net.road_by_name(&names[0]).unwrap()
                    && r.roads[1] == net.road_by_name(&names[1]).unwrap()
            })
            .unwrap()
    };
    // Two vehicles on each lane of the road exiting west: each of the nine
    // links feeding those lanes gets -2. One vehicle on the northern through lane
    // adds +1 on its three links.
    let west_out = net.road_by_name(&g.road(0, 0, Dir::W)).unwrap();
    let r_west = route_of(Movement(Dir::N, Turn::Right));
    for &lane in &net.roads[west_out.0].lanes {
        for _ in 0..2 {
            sim.insert_vehicle(r_west, 1, lane, false).unwrap();
        }
    }
    let r_through = route_of(Movement(Dir::N, Turn::Through));
    let n_in = net.road_by_name(&g.incoming(0, 0, Dir::N)).unwrap();
    sim.insert_vehicle(r_through, 0, net.roads[n_in.0].lanes[1], true)
        .unwrap();

    let brute: i64 = net
        .links
        .iter()
        .map(|l| sim.lane_vehicle_count(l.from) as i64 - sim.lane_vehicle_count(l.to) as i64)
        .sum();
    assert_eq!(brute, (3 - 3 * 3 * 2)); // 3 links at +1; 9 links into west road at -2
    assert_eq!(brute, -15);
    assert_eq!(sim.intersection_reward(IntersectionId(0)), -15.0);
}

#[test]
fn metrics_arithmetic() {
    let m = Metrics {
        spawned: 2,
        finished_count: 2,
        sum_travel_time: 300,
        elapsed_s: 600,
        finished_per_step: vec![],
    };
    let s = m.summary();
    assert_eq!(s.avg_travel_time, Some(150.0));
    assert!((s.throughput - 0.2).abs() < 1e-12);

    let none = Metrics::default().summary();
    assert_eq!(none.avg_travel_time, None);
    assert_eq!(none.throughput, 0.0);
}

#[test]
fn uncongested_travel_time_is_free_flow() {
    let g = GridBuilder::single(PhasePlan::Four);
    let route = g.movement_route(0, 0, Movement(Dir::N, Turn::Through));
    let names: Vec<&str> = route.iter().map(String::as_str).collect();
    let s = scenario(&g.build(vec![FlowSpec::periodic(&names, 0, 600, 20.0)]));
    // Free-flow oracle: each 300 m road at 11 m/s takes ceil(27.3) = 28 s.
    let free_flow: f64 = s.routes[0]
        .roads
        .iter()
        .map(|r| {
            let road = &s.network.roads[r.0];
            (road.length / road.max_speed).ceil()
        })
        .sum();
    let mut sim = Simulation::new(&s);
    for _ in 0..700 {
        sim.step(&[0]).unwrap();
    }
    let m = sim.metrics();
    assert_eq!(sim.raw_metrics().finished_count, 30);
    assert!((m.avg_travel_time.unwrap() - free_flow).abs() <= 1.0);
}

#[test]
fn yellow_precedes_every_change() {
    let s = scenario(&builders::desk_congested(300));
    let mut sim = Simulation::new(&s);
    let i0 = IntersectionId(0);
    for _ in 0..50 {
        sim.step(&[0]).unwrap();
        assert!(!sim.signal(i0).in_yellow());
    }
    let pos_before: Vec<_> = sim.vehicles().iter().map(|v| v.route_pos).collect();
    for k in 0..3 {
        sim.step(&[2]).unwrap();
        // The switch lands at the end of the third yellow second.
        let expected = if k < 2 { 0 } else { 2 };
        assert_eq!(sim.signal(i0).current_phase, expected, "yellow second {k}");
        if k < 2 {
            // A different command mid-yellow is ignored.
            assert_eq!(sim.signal(i0).target_phase(), 2);
        }
    }
    // Nobody crossed the stop line during yellow.
    for (v, &pos) in pos_before.iter().enumerate() {
        assert_eq!(sim.vehicle(v).route_pos, pos);
    }
    sim.step(&[2]).unwrap();
    assert!(!sim.signal(i0).in_yellow());
}

fn run_invariants(commands: &[usize], seed: u64) -> Result<(), TestCaseError> {
    let s = scenario(&builders::desk_congested(400)).jittered(seed, 60);
    let mut sim = Simulation::new(&s);
    let net = s.network.clone();
    let mut last_finished = 0;
    let mut last_tt = 0;
    let mut yellow_run = 0u8;
    let mut prev_phase = 0;
    for &cmd in commands {
        sim.step(&[cmd]).unwrap();
        let m = sim.raw_metrics();
        prop_assert_eq!(
            m.spawned as usize,
            sim.vehicles_on_lanes() + sim.source_queue_len() + m.finished_count as usize
        );
        prop_assert!(m.finished_count >= last_finished && m.sum_travel_time >= last_tt);
        last_finished = m.finished_count;
        last_tt = m.sum_travel_time;
        for (l, lane) in net.lanes.iter().enumerate() {
            prop_assert!(sim.lane_vehicle_count(LaneId(l)) <= lane.capacity);
        }
        let sig = sim.signal(IntersectionId(0));
        let switched = sig.current_phase != prev_phase;
        if sig.in_yellow() || switched {
            yellow_run += 1;
        }
        if switched {
            prop_assert_eq!(
                yellow_run,
                3,
                "phase switched after {} yellow s",
                yellow_run
            );
            yellow_run = 0;
        }
        prev_phase = sig.current_phase;
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn simulator_invariants(commands in proptest::collection::vec(0usize..4, 50..300), seed in 0u64..1000) {
        run_invariants(&commands, seed)?;
    }

    #[test]
    fn identical_inputs_give_identical_trajectories(commands in proptest::collection::vec(0usize..4, 20..200), seed in 0u64..1000) {
        let s = scenario(&builders::desk_congested(300)).jittered(seed, 60);
        let mut a = Simulation::new(&s);
        let mut b = Simulation::new(&s);
        for &c in &commands {
            a.step(&[c]).unwrap();
            b.step(&[c]).unwrap();
            prop_assert_eq!(a.vehicles(), b.vehicles());
            prop_assert_eq!(a.signals(), b.signals());
        }
    }
}
