mod common;

use common::{max_fd_error, random_batch, random_small, Composite};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tinylight::nn::{relu, Linear, Optimizer, OptimizerKind, ParamStore};
use tinylight::supergraph::{random_path, SuperGraph, SuperGraphSpec, ALPHA_LAYERS};

fn set_logits(sg: &mut SuperGraph, logits: [Vec<f64>; ALPHA_LAYERS]) {
    for (id, z) in sg.logits.into_iter().zip(logits) {
        sg.store.get_mut(id).data = z;
    }
}

fn apply(store: &ParamStore, l: Linear, x: &[f64]) -> Vec<f64> {
    let w = store.get(l.weight);
    let b = store.get(l.bias);
    (0..l.fan_out)
        .map(|o| {
            b.data[o]
                + (0..l.fan_in)
                    .map(|i| x[i] * w.data[i * l.fan_out + o])
                    .sum::<f64>()
        })
        .collect()
}

fn random_state(sg: &SuperGraph, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    sg.spec
        .input_dims
        .iter()
        .map(|&d| (0..d).map(|_| rng.gen_range(-3.0..3.0)).collect())
        .collect()
}

fn scaled(sg: &SuperGraph, raw: &[Vec<f64>]) -> Vec<Vec<f64>> {
    raw.iter()
        .zip(&sg.input_scale)
        .map(|(x, s)| x.iter().map(|v| v * s).collect())
        .collect()
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

#[test]
fn one_hot_alpha_is_a_plain_mlp() {
    let mut sg = random_small(1);
    // Large logit gaps make softmax one-hot to machine precision.
    set_logits(
        &mut sg,
        [
            vec![-800.0, 0.0, -800.0],
            vec![0.0, -800.0],
            vec![-800.0, 0.0],
        ],
    );
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let raw = random_state(&sg, &mut rng);
    let x = &scaled(&sg, &raw)[1];
    let h1 = relu(&apply(&sg.store, sg.edges1[1][0], x));
    let h2 = relu(&apply(&sg.store, sg.edges2[0][1], &h1));
    let q = apply(&sg.store, sg.head[1], &h2);
    assert!(close(&sg.q_values(&raw).unwrap(), &q, 1e-12));
}

#[test]
fn zero_theta_gives_alpha_weighted_head_bias() {
    let mut sg = random_small(3);
    let head_biases: Vec<Vec<f64>> = sg
        .head
        .iter()
        .map(|l| sg.store.get(l.bias).data.clone())
        .collect();
    let ids: Vec<_> = sg.theta_ids().collect();
    for id in ids {
        if !sg.head.iter().any(|l| l.bias == id) {
            sg.store.get_mut(id).data.iter_mut().for_each(|v| *v = 0.0);
        }
    }
    let alpha3 = sg.alphas()[2].clone();
    let expected: Vec<f64> = (0..sg.spec.outputs)
        .map(|o| alpha3.iter().zip(&head_biases).map(|(a, b)| a * b[o]).sum())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..5 {
        let raw = random_state(&sg, &mut rng);
        assert!(close(&sg.q_values(&raw).unwrap(), &expected, 1e-12));
    }
}

#[test]
fn forward_matches_expanded_double_sum() {
    let sg = random_small(5);
    let alphas = sg.alphas();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..20 {
        let raw = random_state(&sg, &mut rng);
        let x = scaled(&sg, &raw);
        // Expand every (input, block1, block2) path explicitly.
        let mut q = vec![0.0; sg.spec.outputs];
        for k in 0..sg.spec.hidden2_dims.len() {
            let mut h2 = vec![0.0; sg.spec.hidden2_dims[k]];
            for j in 0..sg.spec.hidden1_dims.len() {
                let mut h1 = vec![0.0; sg.spec.hidden1_dims[j]];
                for i in 0..sg.spec.input_dims.len() {
                    let y = relu(&apply(&sg.store, sg.edges1[i][j], &x[i]));
                    for (acc, v) in h1.iter_mut().zip(y) {
                        *acc += alphas[0][i] * v;
                    }
                }
                let y = relu(&apply(&sg.store, sg.edges2[j][k], &h1));
                for (acc, v) in h2.iter_mut().zip(y) {
                    *acc += alphas[1][j] * v;
                }
            }
            let y = apply(&sg.store, sg.head[k], &h2);
            for (acc, v) in q.iter_mut().zip(y) {
                *acc += alphas[2][k] * v;
            }
        }
        assert!(close(&sg.q_values(&raw).unwrap(), &q, 1e-10));
    }
}

#[test]
fn input_count_and_dim_errors() {
    let sg = random_small(7);
    assert!(sg.q_values(&[vec![0.0; 3]]).is_err());
    assert!(sg
        .q_values(&[vec![0.0; 3], vec![0.0; 3], vec![0.0; 4]])
        .is_err());
}

#[test]
fn unique_path_for_one_hot_alpha() {
    let mut sg = random_small(8);
    set_logits(
        &mut sg,
        [vec![0.0, 0.0, 50.0], vec![50.0, 0.0], vec![0.0, 50.0]],
    );
    let (sub, _) = sg.extract([1, 1, 1]).unwrap();
    assert_eq!(
        (sub.inputs.clone(), sub.hidden1.clone(), sub.hidden2.clone()),
        (vec![2], vec![0], vec![1])
    );
}

#[test]
fn extraction_matches_sort_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for seed in 0..200 {
        let mut sg = random_small(seed);
        let logits = [3, 2, 2].map(|n| {
            (0..n)
                .map(|_| rng.gen_range(-2.0..2.0))
                .collect::<Vec<f64>>()
        });
        set_logits(&mut sg, logits);
        let alphas = sg.alphas();
        let (sub, _) = sg.extract([2, 1, 1]).unwrap();
        // Oracle: stable sort by descending weight keeps lower indices first on ties.
        let mut order: Vec<usize> = (0..3).collect();
        order.sort_by(|&a, &b| alphas[0][b].partial_cmp(&alphas[0][a]).unwrap());
        let mut top2 = order[..2].to_vec();
        top2.sort();
        assert_eq!(sub.inputs, top2);
        let best = |a: &[f64]| if a[1] > a[0] { 1 } else { 0 };
        assert_eq!(sub.hidden1, vec![best(&alphas[1])]);
        assert_eq!(sub.hidden2, vec![best(&alphas[2])]);
    }
}

#[test]
fn extracted_forward_matches_restricted_alpha() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for seed in 0..50 {
        let sg = random_small(100 + seed);
        for keep in [[1, 1, 1], [2, 1, 1], [3, 2, 2]] {
            let (sub, manifest) = sg.extract(keep).unwrap();
            let mut restricted: [Vec<f64>; ALPHA_LAYERS] =
                [0, 1, 2].map(|l| vec![0.0; sg.spec.layer_sizes()[l]]);
            let kept = [&manifest.inputs, &manifest.hidden1, &manifest.hidden2];
            for l in 0..ALPHA_LAYERS {
                for (&i, &w) in kept[l].iter().zip(&manifest.weights[l]) {
                    restricted[l][i] = w;
                }
            }
            let raw = random_state(&sg, &mut rng);
            let expected = sg.q_values_with_alpha(&raw, &restricted).unwrap();
            let picked: Vec<&[f64]> = sub.select(&raw).into_iter().map(Vec::as_slice).collect();
            assert!(close(&sub.q_values(&picked).unwrap(), &expected, 1e-9));
        }
    }
}

#[test]
fn extraction_from_uniform_alpha_is_complete() {
    let sg = random_small(11);
    assert!(sg.extract([4, 1, 1]).is_err());
    let (full, _) = sg.extract([3, 2, 2]).unwrap();
    // Keeping everything is the super-graph itself.
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let raw = random_state(&sg, &mut rng);
    let refs: Vec<&[f64]> = raw.iter().map(Vec::as_slice).collect();
    assert!(close(
        &full.q_values(&refs).unwrap(),
        &sg.q_values(&raw).unwrap(),
        1e-9
    ));
}

#[test]
fn theta_and_alpha_partials_match_finite_differences() {
    for seed in 0..5 {
        let sg = random_small(seed);
        let b = random_batch(&sg, 4, seed);
        let theta = |id| !sg.is_alpha(id);
        let alpha = |id| sg.is_alpha(id);
        assert!(max_fd_error(&sg, &b, Composite::Td, 16.0, &theta) <= 1e-4);
        assert!(max_fd_error(&sg, &b, Composite::Td, 16.0, &alpha) <= 1e-4);
        assert!(max_fd_error(&sg, &b, Composite::Entropy, 16.0, &alpha) <= 1e-4);
        assert!(max_fd_error(&sg, &b, Composite::Combined, 16.0, &alpha) <= 1e-4);
        assert!(max_fd_error(&sg, &b, Composite::Combined, 16.0, &theta) <= 1e-4);
    }
}

#[test]
fn entropy_descent_sharpens_alpha() {
    let mut sg = random_small(13);
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let logits = [3, 2, 2].map(|n| {
        (0..n)
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect::<Vec<f64>>()
    });
    set_logits(&mut sg, logits);
    let theta_before: Vec<_> = sg.theta_ids().map(|id| sg.store.get(id).clone()).collect();
    let mut opt = Optimizer::new(OptimizerKind::Adam, 1e-2);
    let mut last = f64::INFINITY;
    for _ in 0..2000 {
        let h = sg.entropy_step(&mut opt).unwrap();
        assert!(h <= last + 1e-9);
        last = h;
    }
    for a in sg.alphas() {
        assert!(a.iter().cloned().fold(0.0, f64::max) >= 0.99);
    }
    let theta_after: Vec<_> = sg.theta_ids().map(|id| sg.store.get(id).clone()).collect();
    assert_eq!(theta_before, theta_after);
}

#[test]
fn random_path_frequencies() {
    let spec = SuperGraphSpec::with_inputs(vec![2; 37], 9);
    let scale = vec![1.0; 37];
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let mut counts = [0usize; 5];
    let n = 10_000;
    for _ in 0..n {
        let p = random_path(&spec, &scale, [2, 1, 1], &mut rng).unwrap();
        counts[p.hidden1[0]] += 1;
    }
    for c in counts {
        let f = c as f64 / n as f64;
        assert!((f - 0.2).abs() <= 0.02, "frequency {f}");
    }
    let single = SuperGraphSpec {
        input_dims: vec![4],
        hidden1_dims: vec![3],
        hidden2_dims: vec![2],
        outputs: 2,
    };
    let p = random_path(&single, &[1.0], [1, 1, 1], &mut rng).unwrap();
    assert_eq!(
        (p.inputs, p.hidden1, p.hidden2),
        (vec![0], vec![0], vec![0])
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn alpha_is_a_distribution(z in prop::collection::vec(-30.0f64..30.0, 3)) {
        let mut sg = random_small(16);
        set_logits(&mut sg, [z.clone(), z[..2].to_vec(), z[1..].to_vec()]);
        for a in sg.alphas() {
            prop_assert!(a.iter().all(|&v| v >= 0.0));
            prop_assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn every_extraction_is_a_connected_path(
        z1 in prop::collection::vec(-5.0f64..5.0, 3),
        z2 in prop::collection::vec(-5.0f64..5.0, 2),
        z3 in prop::collection::vec(-5.0f64..5.0, 2),
        k1 in 1usize..=3,
    ) {
        let mut sg = random_small(17);
        set_logits(&mut sg, [z1, z2, z3]);
        let (sub, _) = sg.extract([k1, 1, 1]).unwrap();
        prop_assert_eq!(sub.edges1.len(), k1);
        for (i, row) in sub.edges1.iter().enumerate() {
            for (j, l) in row.iter().enumerate() {
                prop_assert_eq!((l.fan_in, l.fan_out), (sub.input_dims[i], sub.hidden1_dims[j]));
            }
        }
        prop_assert_eq!(sub.edges2[0][0].fan_out, sub.hidden2_dims[0]);
        prop_assert_eq!(sub.head[0].fan_in, sub.hidden2_dims[0]);
        prop_assert_eq!(sub.head[0].fan_out, sub.outputs);
    }

    #[test]
    fn optimizer_steps_keep_alpha_normalized(seed in 0u64..1000) {
        let mut sg = random_small(seed);
        let mut opt = Optimizer::new(OptimizerKind::Adam, 0.5);
        for _ in 0..5 {
            sg.entropy_step(&mut opt).unwrap();
            for a in sg.alphas() {
                prop_assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
    }
}
