use proptest::prelude::*;

use pathsgd_core::dense::DenseRnn;
use pathsgd_core::graph::RnnLayout;
use pathsgd_core::invariance::{self, NodeScaling};
use pathsgd_core::tasks::gen_addition;
use pathsgd_core::verify::{kink_margin, max_rel_diff, output_deviation, update_invariance_gap};
use pathsgd_core::{compute, pathnorm, rng, Activation, Example, KappaMode, Readout, RnnSpec, SharedWeightNet, Target};

fn spec_strategy() -> impl Strategy<Value = RnnSpec> {
    (1usize..=2, prop::collection::vec(1usize..=3, 1..=2), 1usize..=2, 1usize..=4, any::<bool>(), any::<bool>()).prop_map(
        |(input, hidden, output, length, bias, final_step)| {
            let readout = if final_step { Readout::FinalStep } else { Readout::EveryStep };
            RnnSpec::new(input, &hidden, output, length).with_bias(bias).with_readout(readout)
        },
    )
}

fn values(n: usize, half: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-half..half, n)
}

/// A spec with parameters in `[-0.5, 0.5]`.
fn rnn_instance() -> impl Strategy<Value = (RnnSpec, Vec<f64>)> {
    spec_strategy().prop_flat_map(|spec| {
        let m = RnnLayout::new(&spec).num_params();
        (Just(spec), values(m, 0.5))
    })
}

/// Adds a batch of two regression examples and a node scaling.
fn rnn_with_batch() -> impl Strategy<Value = (RnnSpec, Vec<f64>, Vec<Example>, NodeScaling)> {
    rnn_instance().prop_flat_map(|(spec, p)| {
        let n_in = spec.input_dim * spec.length;
        let n_out = spec.output_dim * spec.output_times().count();
        let example = (values(n_in, 1.0), values(n_out, 1.0)).prop_map(move |(input, v)| Example {
            input,
            target: Target::Values { outputs: (0..n_out).collect(), values: v },
        });
        let alpha = spec.hidden_dims.iter().map(|&h| prop::collection::vec(-1.5f64..1.5, h)).collect::<Vec<_>>();
        let spec2 = spec.clone();
        let scaling = alpha.prop_map(move |logs| {
            let a = logs.into_iter().map(|l| l.into_iter().map(f64::exp).collect()).collect();
            NodeScaling::new(&spec2, a).unwrap()
        });
        (Just(spec), Just(p), prop::collection::vec(example, 2), scaling)
    })
}

fn feedforward_instance() -> impl Strategy<Value = (SharedWeightNet, Vec<f64>)> {
    prop::collection::vec(1usize..=3, 2..=4).prop_flat_map(|dims| {
        let net = SharedWeightNet::build_feedforward(&dims).unwrap();
        let m = net.num_params();
        (Just(net), values(m, 1.0))
    })
}

fn net(spec: &RnnSpec) -> SharedWeightNet {
    SharedWeightNet::build_rnn(spec).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gamma_recursion_matches_enumeration((spec, p) in rnn_instance()) {
        let n = net(&spec);
        let a = pathnorm::gamma_recursive(&n, &p);
        let b = pathnorm::gamma_bruteforce(&n, &p).unwrap();
        prop_assert!(max_rel_diff(&[a], &[b], 1e-300) < 1e-10);
    }

    #[test]
    fn gamma_recursion_matches_enumeration_feedforward((n, p) in feedforward_instance()) {
        let a = pathnorm::gamma_recursive(&n, &p);
        let b = pathnorm::gamma_bruteforce(&n, &p).unwrap();
        prop_assert!(max_rel_diff(&[a], &[b], 1e-300) < 1e-10);
    }

    #[test]
    fn kappa1_matches_enumeration((spec, p) in rnn_instance()) {
        let n = net(&spec);
        let fast = pathnorm::kappa1(&n, &p).unwrap();
        let graph = pathnorm::SquaredNet::new(&n, &p).unwrap().kappa1(&n);
        let paths = pathnorm::kappa1_bruteforce(&n, &p).unwrap();
        prop_assert!(max_rel_diff(&fast, &paths, 1e-300) < 1e-10);
        prop_assert!(max_rel_diff(&graph, &paths, 1e-300) < 1e-10);
    }

    #[test]
    fn kappa2_matrix_form_matches_enumeration((spec, p) in rnn_instance()) {
        let n = net(&spec);
        let fast = pathnorm::kappa2_rnn(&n, &p).unwrap();
        let paths = pathnorm::kappa2_bruteforce(&n, &p).unwrap();
        prop_assert!(max_rel_diff(&fast, &paths, 1e-300) < 1e-10);
    }

    #[test]
    fn kappa_terms_sum_to_half_the_second_derivative((spec, p) in rnn_instance()) {
        let n = net(&spec);
        let k = pathnorm::kappa(&n, &p, KappaMode::K1PlusK2).unwrap().total();
        let fd = pathnorm::kappa_fd(&n, &p, pathnorm::KAPPA_FD_STEP);
        let gamma = pathnorm::gamma_recursive(&n, &p);
        prop_assert!(max_rel_diff(&k, &fd, 1e-2 * gamma) < 1e-4);
    }

    #[test]
    fn kappa_from_spec_matches_graph((spec, p) in rnn_instance()) {
        let n = net(&spec);
        let a = pathnorm::kappa_rnn(&spec, &p, KappaMode::K1PlusK2).unwrap();
        let b = pathnorm::SquaredNet::new(&n, &p).unwrap().kappa1(&n);
        prop_assert!(max_rel_diff(&a.k1, &b, 1e-300) < 1e-12);
    }

    #[test]
    fn kappa2_vanishes_without_sharing((n, p) in feedforward_instance()) {
        prop_assert!(pathnorm::kappa2_bruteforce(&n, &p).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn kappa_transforms_covariantly((spec, p, _batch, alpha) in rnn_with_batch()) {
        let n = net(&spec);
        let q = invariance::apply_rescaling(&spec, &p, &alpha).unwrap();
        let mult = invariance::edge_multipliers(&n, &alpha.node_factors(&n).unwrap());
        let kp = pathnorm::kappa(&n, &p, KappaMode::K1PlusK2).unwrap();
        let kq = pathnorm::kappa(&n, &q, KappaMode::K1PlusK2).unwrap();
        for i in 0..n.num_params() {
            let e = n.edges_for_param(i).unwrap()[0];
            let f = 1.0 / (mult[e] * mult[e]);
            prop_assert!(max_rel_diff(&[kq.k1[i]], &[kp.k1[i] * f], 1e-300) < 1e-10);
            prop_assert!(max_rel_diff(&[kq.k2[i]], &[kp.k2[i] * f], 1e-300) < 1e-10);
        }
    }

    #[test]
    fn rescaling_preserves_the_function((spec, p, batch, alpha) in rnn_with_batch()) {
        let n = net(&spec);
        let q = invariance::apply_rescaling(&spec, &p, &alpha).unwrap();
        let inputs: Vec<Vec<f64>> = batch.iter().map(|e| e.input.clone()).collect();
        prop_assert!(output_deviation(&n, &p, &q, &inputs).unwrap() < 1e-10);
        prop_assert!(invariance::is_feasible(&n, &invariance::edge_multipliers(&n, &alpha.node_factors(&n).unwrap())));
    }

    #[test]
    fn path_sgd_updates_commute_with_rescaling((spec, p, batch, alpha) in rnn_with_batch()) {
        let n = net(&spec);
        prop_assume!(kink_margin(&n, &p, &batch).unwrap() > 1e-3);
        let probe: Vec<Vec<f64>> = batch.iter().map(|e| e.input.iter().map(|x| 0.5 - x).collect()).collect();
        for mode in [KappaMode::K1, KappaMode::K1PlusK2] {
            let gap = update_invariance_gap(&spec, &p, &alpha, &batch, &probe, 0.01, Some(mode)).unwrap();
            prop_assert!(gap < 1e-8, "{mode:?}: {gap}");
        }
    }

    #[test]
    fn scalings_compose_and_invert((spec, p, _batch, a) in rnn_with_batch(), seed in any::<u64>()) {
        let b = invariance::random_rescaling(&spec, &mut rng::stream(seed, rng::MISC, 0), 1.0).unwrap();
        let twice = invariance::apply_rescaling(&spec, &invariance::apply_rescaling(&spec, &p, &a).unwrap(), &b).unwrap();
        let once = invariance::apply_rescaling(&spec, &p, &a.compose(&b)).unwrap();
        prop_assert!(max_rel_diff(&twice, &once, 1e-12) < 1e-12);
        let back = invariance::apply_rescaling(&spec, &invariance::apply_rescaling(&spec, &p, &a).unwrap(), &a.inverse()).unwrap();
        prop_assert!(max_rel_diff(&back, &p, 1e-12) < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences((spec, p, batch, _a) in rnn_with_batch()) {
        let n = net(&spec);
        prop_assume!(kink_margin(&n, &p, &batch).unwrap() > 1e-3);
        let g = compute::grad(&n, &p, &batch, Activation::Relu).unwrap();
        let fd = compute::finite_diff_grad(&n, &p, &batch, Activation::Relu, 1e-6).unwrap();
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let diff: Vec<f64> = g.iter().zip(&fd).map(|(a, b)| a - b).collect();
        prop_assert!(norm(&diff) <= 1e-5 * norm(&g).max(norm(&fd)).max(1e-12));
    }

    #[test]
    fn dense_engine_matches_graph((spec, p, batch, _a) in rnn_with_batch()) {
        let n = net(&spec);
        let dense = DenseRnn::new(&n).unwrap();
        let (la, ga) = compute::loss_and_grad(&n, &p, &batch, Activation::Relu).unwrap();
        let (lb, gb) = dense.loss_and_grad(&p, &batch, Activation::Relu).unwrap();
        prop_assert!(max_rel_diff(&[la], &[lb], 1e-12) < 1e-12);
        prop_assert!(max_rel_diff(&ga, &gb, 1e-12) < 1e-10);
    }

    #[test]
    fn unrolled_sizes_follow_the_spec(spec in spec_strategy()) {
        let n = net(&spec);
        let t = spec.length;
        let bias = usize::from(spec.bias);
        let d = spec.depth();
        let mut edges = 0;
        let mut params = 0;
        for l in 1..d {
            let (h, below) = (spec.width(l), spec.width(l - 1));
            edges += t * h * below + (t - 1) * h * h + bias * t * h;
            params += h * below + if t >= 2 { h * h } else { 0 } + bias * h;
        }
        let o = spec.output_dim;
        let top = spec.width(d - 1);
        edges += spec.output_times().count() * (top * o + bias * o);
        params += top * o + bias * o;
        prop_assert_eq!(n.num_edges(), edges);
        prop_assert_eq!(n.num_params(), params);
        prop_assert_eq!(n.input_nodes().len(), spec.input_dim * t);
        prop_assert!(n.validate().is_ok());
    }

    #[test]
    fn addition_generator_is_seeded_and_consistent(seed in any::<u64>(), length in 2usize..60) {
        let a = gen_addition(length, 16, &mut rng::stream(seed, rng::TRAIN_DATA, 0)).unwrap();
        let b = gen_addition(length, 16, &mut rng::stream(seed, rng::TRAIN_DATA, 0)).unwrap();
        prop_assert_eq!(&a, &b);
        for ex in &a {
            prop_assert!(ex.is_consistent());
            let first = ex.mask.iter().position(|&m| m == 1).unwrap();
            let last = ex.mask.iter().rposition(|&m| m == 1).unwrap();
            prop_assert!(first < length / 2 && last >= length / 2);
        }
    }
}
