use std::sync::OnceLock;

use tinylight::agents::*;
use tinylight::codegen::*;
use tinylight::features::FeatureConfig;
use tinylight::sim::{builders, IntersectionId, Scenario};
use tinylight::supergraph::SubGraph;

struct Fixture {
    sub: SubGraph,
    calibration: Vec<State>,
    held_out: Vec<State>,
}

fn desk(horizon: u32) -> Scenario {
    Scenario::from_file(&builders::desk_congested(horizon)).unwrap()
}

fn record(sub: &SubGraph, scenario: &Scenario, controller: &mut dyn Controller) -> Vec<State> {
    let kind = ObsKind::Features(feature_ids(&sub.inputs));
    record_states(
        scenario,
        controller,
        3600,
        10,
        IntersectionId(0),
        &kind,
        &FeatureConfig::default(),
    )
    .unwrap()
}

/// A briefly trained sub-graph with states recorded on separate demand draws.
fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let cfg = FeatureConfig::default();
        let hp = HyperParams {
            search_episodes: 6,
            refine_episodes: 2,
            ..Default::default()
        };
        let trained = train_tinylight(&desk(600), &hp, &cfg, 5).unwrap();
        let sub = trained.subgraphs[0].clone();
        let sc = desk(3600);
        let calibration = record(
            &sub,
            &sc.jittered(100, 60),
            &mut trained.controller(cfg),
        );
        let mut held_out = record(
            &sub,
            &sc.jittered(200, 60),
            &mut trained.controller(cfg),
        );
        held_out.extend(record(&sub, &sc.jittered(201, 60), &mut MaxPressure));
        held_out.extend(record(
            &sub,
            &sc.jittered(202, 60),
            &mut FixedTime::default(),
        ));
        Fixture {
            sub,
            calibration,
            held_out,
        }
    })
}

fn opts(precision: Precision) -> CodegenOptions {
    CodegenOptions {
        precision,
        ..Default::default()
    }
}

fn float_vectors(sub: &SubGraph, states: &[State], count: usize, seed: u64) -> TestVectorSet {
    emit_test_vectors(
        Reference::Float(sub),
        count,
        seed,
        InputSource::Recorded(states),
    )
    .unwrap()
}

#[test]
fn float32_build_matches_the_reference() {
    let f = fixture();
    let c = emit_c(&f.sub, &opts(Precision::Float32), None).unwrap();
    assert!(!c.source.contains("#include"));
    let vectors = float_vectors(&f.sub, &f.held_out, 1000, 1);
    let r = run_harness(&c.source, &vectors, 1e-5).unwrap();
    assert_eq!(r.vectors, 1000);
    assert_eq!(r.argmax_mismatches, 0);
    assert!(r.max_abs_diff <= 1e-5, "{r:?}");
    assert!(r.pass);
}

#[test]
fn q15_build_is_bit_exact_and_keeps_the_argmax() {
    let f = fixture();
    let model = quantize_q15(&f.sub, &f.calibration).unwrap();
    let c = emit_c(&f.sub, &opts(Precision::Q15), Some(&model)).unwrap();
    let vectors = emit_test_vectors(
        Reference::Q15(&model),
        1000,
        2,
        InputSource::Recorded(&f.held_out),
    )
    .unwrap();
    let r = run_harness(&c.source, &vectors, 0.0).unwrap();
    assert_eq!((r.max_abs_diff, r.argmax_mismatches), (0.0, 0), "{r:?}");

    let float = float_vectors(&f.sub, &f.held_out, 1000, 2);
    let agree = float
        .vectors
        .iter()
        .filter(|v| {
            let q = model.dequantize(&model.forward(&v.inputs));
            let best = (0..q.len()).fold(0, |b, k| if q[k] > q[b] { k } else { b });
            best == v.argmax
        })
        .count();
    assert!(agree >= 990, "argmax agreement {agree}/1000");
}

#[test]
fn q15_dequantized_values_track_the_float_model() {
    let f = fixture();
    let model = quantize_q15(&f.sub, &f.calibration).unwrap();
    let float = float_vectors(&f.sub, &f.held_out, 300, 3);
    let span = float
        .vectors
        .iter()
        .flat_map(|v| &v.expected)
        .fold(0.0f64, |m, q| m.max(q.abs()));
    for v in &float.vectors {
        let q = model.dequantize(&model.forward(&v.inputs));
        for (a, b) in q.iter().zip(&v.expected) {
            assert!((a - b).abs() <= 0.02 * span, "{a} vs {b}, span {span}");
        }
    }
}

#[test]
fn corrupted_weight_fails_the_harness() {
    let f = fixture();
    let vectors = float_vectors(&f.sub, &f.held_out, 200, 4);
    let mut bad = f.sub.clone();
    // One first-layer weight on an input that actually varies.
    let w = bad.edges1[0][0].weight;
    let col = bad.store.get(w).cols;
    let row = (0..bad.input_dims[0])
        .find(|&k| f.held_out.iter().any(|s| s[0][k] != 0.0))
        .unwrap();
    bad.store.get_mut(w).data[row * col] += 0.5;
    let c = emit_c(&bad, &opts(Precision::Float32), None).unwrap();
    let r = run_harness(&c.source, &vectors, 1e-5).unwrap();
    assert!(!r.pass);
    assert!(r.max_abs_diff > 1e-3);
}

#[test]
fn zero_weights_give_a_bias_only_output() {
    let f = fixture();
    let mut sub = f.sub.clone();
    let weights: Vec<_> = sub
        .edges1
        .iter()
        .flatten()
        .chain(sub.edges2.iter().flatten())
        .chain(&sub.head)
        .map(|l| l.weight)
        .collect();
    for w in weights {
        sub.store.get_mut(w).data.iter_mut().for_each(|v| *v = 0.0);
    }
    let vectors = float_vectors(&sub, &f.held_out, 50, 5);
    let first = &vectors.vectors[0].expected;
    assert!(vectors.vectors.iter().all(|v| &v.expected == first));
    let c = emit_c(&sub, &opts(Precision::Float32), None).unwrap();
    assert!(run_harness(&c.source, &vectors, 1e-6).unwrap().pass);
}

#[test]
fn emission_is_deterministic() {
    let f = fixture();
    let a = emit_c(&f.sub, &opts(Precision::Float32), None).unwrap();
    let b = emit_c(&f.sub, &opts(Precision::Float32), None).unwrap();
    assert_eq!(a.source, b.source);
    let va = float_vectors(&f.sub, &f.held_out, 100, 9).to_text();
    assert_eq!(va, float_vectors(&f.sub, &f.held_out, 100, 9).to_text());
    assert_ne!(va, float_vectors(&f.sub, &f.held_out, 100, 10).to_text());
    let ma = quantize_q15(&f.sub, &f.calibration).unwrap();
    let mb = quantize_q15(&f.sub, &f.calibration).unwrap();
    assert_eq!(ma, mb);
}

#[test]
fn empty_vector_set_is_header_only_and_passes() {
    let f = fixture();
    let vectors = float_vectors(&f.sub, &f.held_out, 0, 1);
    assert_eq!(vectors.to_text().lines().count(), 5);
    let c = emit_c(&f.sub, &opts(Precision::Float32), None).unwrap();
    let r = run_harness(&c.source, &vectors, 1e-5).unwrap();
    assert_eq!(r.vectors, 0);
    assert!(r.pass);
}

#[test]
fn uniform_inputs_also_match() {
    let f = fixture();
    let ranges = vec![(0.0, 20.0); f.sub.input_dims.iter().sum()];
    let vectors = emit_test_vectors(
        Reference::Float(&f.sub),
        200,
        6,
        InputSource::Uniform(&ranges),
    )
    .unwrap();
    let c = emit_c(&f.sub, &opts(Precision::Float32), None).unwrap();
    assert!(run_harness(&c.source, &vectors, 1e-4).unwrap().pass);
}

#[test]
fn q15_halves_static_data_and_fits_the_budget() {
    let f = fixture();
    let model = quantize_q15(&f.sub, &f.calibration).unwrap();
    let fp32 = footprint(&f.sub, Precision::Float32);
    let q15 = footprint(&f.sub, Precision::Q15);
    assert_eq!(model.num_constants(), fp32.constants);
    assert_eq!(q15.static_bytes * 2, fp32.static_bytes);
    assert_eq!(q15.work_bytes * 2, fp32.work_bytes);
    assert!(fp32.within_limits() && q15.within_limits());
}

#[test]
fn misuse_is_rejected() {
    let f = fixture();
    assert!(matches!(
        quantize_q15(&f.sub, &f.calibration[..10]),
        Err(CodegenError::Calibration {
            needed: 100,
            got: 10
        })
    ));
    assert!(matches!(
        emit_c(&f.sub, &opts(Precision::Q15), None),
        Err(CodegenError::MissingQuantization)
    ));
    let vectors = float_vectors(&f.sub, &f.held_out, 5, 1);
    let model = quantize_q15(&f.sub, &f.calibration).unwrap();
    let c = emit_c(&f.sub, &opts(Precision::Q15), Some(&model)).unwrap();
    assert!(matches!(
        run_harness(&c.source, &vectors, 0.0),
        Err(HarnessError::Run(_))
    ));
    let broken = c.source.replace("int32_t q[", "int32_t *q[");
    assert!(matches!(
        run_harness(&broken, &vectors, 0.0),
        Err(HarnessError::Compile(_))
    ));
}

#[test]
fn custom_prefix_compiles() {
    let f = fixture();
    let o = CodegenOptions {
        prefix: "junction7".into(),
        emit_argmax: false,
        ..opts(Precision::Float32)
    };
    let c = emit_c(&f.sub, &o, None).unwrap();
    assert!(c.source.contains("void junction7_forward("));
    assert!(!c.source.contains("_argmax"));
    let vectors = float_vectors(&f.sub, &f.held_out, 20, 1);
    assert!(run_harness(&c.source, &vectors, 1e-5).unwrap().pass);
}
