//! Seeded property suites over small random networks.
//!
//! Every property compares a fast computation with an independent one (path
//! enumeration, finite differences, a rescaled copy of the network) and
//! reports the worst residual over all instances.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::compute::{self, Activation, Example, Target};
use crate::error::Result;
use crate::graph::{Readout, RnnSpec, SharedWeightNet};
use crate::invariance::{self, NodeScaling};
use crate::math;
use crate::optim::{self, KappaMode};
use crate::pathnorm;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Level {
    #[default]
    Quick,
    Full,
}

/// Deliberate errors used to check that the suite can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Faults {
    /// Doubles the closed-form curvature before it is compared.
    pub kappa_times_two: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VerifyOptions {
    pub level: Level,
    pub seed: u64,
    pub faults: Faults,
}

impl VerifyOptions {
    pub fn new(level: Level, seed: u64) -> Self {
        Self { level, seed, faults: Faults::default() }
    }

    fn instances(&self) -> usize {
        match self.level {
            Level::Quick => 20,
            Level::Full => 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropertyReport {
    pub name: &'static str,
    pub instances: usize,
    /// Largest residual seen; for lower-bound properties, the smallest.
    pub worst: f64,
    pub tolerance: f64,
    /// Residuals must stay above `tolerance` instead of below it.
    pub lower_bound: bool,
    pub passed: bool,
}

impl PropertyReport {
    fn upper(name: &'static str, instances: usize, worst: f64, tolerance: f64) -> Self {
        Self { name, instances, worst, tolerance, lower_bound: false, passed: worst < tolerance }
    }
}

/// `|a - b| / max(|a|, |b|, floor)`, maximized over coordinates.
pub fn max_rel_diff(a: &[f64], b: &[f64], floor: f64) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = (x - y).abs();
            if d == 0.0 {
                0.0
            } else {
                d / x.abs().max(y.abs()).max(floor)
            }
        })
        .fold(0.0, f64::max)
}

/// A small random RNN: 1-2 inputs, 1-2 hidden layers of 1-3 units,
/// 1-2 outputs, `1 <= T <= 4`.
pub fn random_small_rnn(rng: &mut ChaCha8Rng) -> RnnSpec {
    let layers = rng.gen_range(1..=2);
    let hidden: Vec<usize> = (0..layers).map(|_| rng.gen_range(1..=3)).collect();
    let readout = if rng.gen_bool(0.5) { Readout::EveryStep } else { Readout::FinalStep };
    RnnSpec::new(rng.gen_range(1..=2), &hidden, rng.gen_range(1..=2), rng.gen_range(1..=4))
        .with_bias(rng.gen_bool(0.5))
        .with_readout(readout)
}

/// A small random fully connected net with 2-4 layers of 1-3 units.
pub fn random_small_feedforward(rng: &mut ChaCha8Rng) -> Result<SharedWeightNet> {
    let depth = rng.gen_range(2..=4);
    let dims: Vec<usize> = (0..depth).map(|_| rng.gen_range(1..=3)).collect();
    SharedWeightNet::build_feedforward(&dims)
}

pub fn uniform_vec(rng: &mut ChaCha8Rng, n: usize, half_width: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-half_width..=half_width)).collect()
}

/// A random regression batch for `net`.
pub fn random_batch(net: &SharedWeightNet, rng: &mut ChaCha8Rng, size: usize) -> Vec<Example> {
    let n_in = net.input_nodes().len();
    let n_out = net.output_nodes().len();
    (0..size)
        .map(|_| Example {
            input: uniform_vec(rng, n_in, 1.0),
            target: Target::Values { outputs: (0..n_out).collect(), values: uniform_vec(rng, n_out, 1.0) },
        })
        .collect()
}

/// Smallest `|pre-activation|` of an internal node over a batch.
pub fn kink_margin(net: &SharedWeightNet, p: &[f64], batch: &[Example]) -> Result<f64> {
    let mut margin = f64::INFINITY;
    for ex in batch {
        let (_, trace) = compute::forward(net, p, &ex.input, Activation::Relu)?;
        margin = margin.min(trace.min_abs_internal_pre(net));
    }
    Ok(margin)
}

/// Post-update parameters under Path-SGD, or plain SGD when `mode` is `None`.
pub fn updated(net: &SharedWeightNet, p: &[f64], batch: &[Example], lr: f64, mode: Option<KappaMode>) -> Result<Vec<f64>> {
    let g = compute::grad(net, p, batch, Activation::Relu)?;
    match mode {
        Some(mode) => optim::path_sgd_step(net, p, &g, lr, mode, 1e-8),
        None => optim::sgd_step(p, &g, lr),
    }
}

/// Largest output difference between two parameter vectors over `inputs`.
pub fn output_deviation(net: &SharedWeightNet, p: &[f64], q: &[f64], inputs: &[Vec<f64>]) -> Result<f64> {
    let mut worst = 0.0f64;
    for x in inputs {
        let (a, _) = compute::forward(net, p, x, Activation::Relu)?;
        let (b, _) = compute::forward(net, q, x, Activation::Relu)?;
        for (u, v) in a.iter().zip(&b) {
            worst = worst.max((u - v).abs());
        }
    }
    Ok(worst)
}

/// Post-update output deviation between `p` and its rescaling under `alpha`.
pub fn update_invariance_gap(
    spec: &RnnSpec,
    p: &[f64],
    alpha: &NodeScaling,
    batch: &[Example],
    probe: &[Vec<f64>],
    lr: f64,
    mode: Option<KappaMode>,
) -> Result<f64> {
    let net = SharedWeightNet::build_rnn(spec)?;
    let q = invariance::apply_rescaling(spec, p, alpha)?;
    let p_next = updated(&net, p, batch, lr, mode)?;
    let q_next = updated(&net, &q, batch, lr, mode)?;
    output_deviation(&net, &p_next, &q_next, probe)
}

/// The instance behind the plain-SGD negative control.
pub fn pinned_negative_control() -> (RnnSpec, Vec<f64>, NodeScaling, Vec<Example>, Vec<Vec<f64>>) {
    let spec = RnnSpec::single_layer(1, 2, 1, 3);
    let p = vec![0.8, 0.5, 0.3, -0.2, 0.1, 0.4, 0.7, -0.6];
    let alpha = NodeScaling::new(&spec, vec![vec![4.0, 0.25]]).expect("valid scaling");
    let batch = vec![
        Example { input: vec![1.0, 0.5, 0.25], target: Target::Values { outputs: vec![0, 1, 2], values: vec![1.0, -1.0, 0.5] } },
        Example { input: vec![0.3, 0.9, 0.6], target: Target::Values { outputs: vec![0, 1, 2], values: vec![0.0, 0.5, 1.0] } },
    ];
    let probe = vec![vec![1.0, 1.0, 1.0], vec![0.5, 0.2, 0.9]];
    (spec, p, alpha, batch, probe)
}

fn scaled(mut v: Vec<f64>, faults: Faults) -> Vec<f64> {
    if faults.kappa_times_two {
        v.iter_mut().for_each(|x| *x *= 2.0);
    }
    v
}

/// A kink-free RNN instance with parameters uniform in `[-0.5, 0.5]`.
fn rnn_instance(rng: &mut ChaCha8Rng) -> Result<(RnnSpec, SharedWeightNet, Vec<f64>, Vec<Example>)> {
    loop {
        let spec = random_small_rnn(rng);
        let net = SharedWeightNet::build_rnn(&spec)?;
        let p = uniform_vec(rng, net.num_params(), 0.5);
        let batch = random_batch(&net, rng, 3);
        if kink_margin(&net, &p, &batch)? > 1e-3 {
            return Ok((spec, net, p, batch));
        }
    }
}

pub fn run(options: VerifyOptions) -> Result<Vec<PropertyReport>> {
    let n = options.instances();
    let faults = options.faults;
    let mut rng = rng::stream(options.seed, rng::MISC, 0);
    let mut reports = Vec::new();

    let mut worst = 0.0f64;
    for k in 0..n {
        let (net, p) = if k % 2 == 0 {
            let (_, net, p, _) = rnn_instance(&mut rng)?;
            (net, p)
        } else {
            let net = random_small_feedforward(&mut rng)?;
            let p = uniform_vec(&mut rng, net.num_params(), 1.0);
            (net, p)
        };
        let a = pathnorm::gamma_recursive(&net, &p);
        let b = pathnorm::gamma_bruteforce(&net, &p)?;
        worst = worst.max(max_rel_diff(&[a], &[b], 1e-300));
    }
    reports.push(PropertyReport::upper("gamma recursion vs path enumeration", n, worst, 1e-10));

    let mut worst = 0.0f64;
    for _ in 0..n {
        let (_, net, p, batch) = rnn_instance(&mut rng)?;
        let g = compute::grad(&net, &p, &batch, Activation::Relu)?;
        let fd = compute::finite_diff_grad(&net, &p, &batch, Activation::Relu, 1e-6)?;
        let diff: Vec<f64> = g.iter().zip(&fd).map(|(a, b)| a - b).collect();
        let scale = math::norm2(&g).max(math::norm2(&fd)).max(1e-12);
        worst = worst.max(math::norm2(&diff) / scale);
    }
    reports.push(PropertyReport::upper("gradient vs finite differences", n, worst, 1e-5));

    let (mut w_k1, mut w_dec, mut w_sq, mut w_cov) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..n {
        let (spec, net, p, _) = rnn_instance(&mut rng)?;
        let k1 = scaled(pathnorm::kappa1(&net, &p)?, faults);
        let k2 = scaled(pathnorm::kappa2_rnn(&net, &p)?, faults);
        let k1_paths = pathnorm::kappa1_bruteforce(&net, &p)?;
        w_k1 = w_k1.max(max_rel_diff(&k1, &k1_paths, 1e-300));

        let gamma = pathnorm::gamma_recursive(&net, &p);
        let k2_paths = pathnorm::kappa2_bruteforce(&net, &p)?;
        let total: Vec<f64> = k1.iter().zip(&k2_paths).map(|(a, b)| a + b).collect();
        let fd = pathnorm::kappa_fd(&net, &p, pathnorm::KAPPA_FD_STEP);
        w_dec = w_dec.max(max_rel_diff(&total, &fd, 1e-2 * gamma));

        let sq = pathnorm::SquaredNet::new(&net, &p)?;
        w_sq = w_sq.max(max_rel_diff(&[sq.g(&net)], &[gamma], 1e-300));

        let alpha = invariance::random_rescaling(&spec, &mut rng, 1.0)?;
        let q = invariance::apply_rescaling(&spec, &p, &alpha)?;
        let beta = alpha.node_factors(&net)?;
        let mult = invariance::edge_multipliers(&net, &beta);
        let mut expected1 = vec![0.0; net.num_params()];
        let mut expected2 = vec![0.0; net.num_params()];
        for i in 0..net.num_params() {
            let Some(&e) = net.edges_for_param(i)?.first() else { continue };
            let f = 1.0 / (mult[e] * mult[e]);
            expected1[i] = k1[i] * f;
            expected2[i] = k2[i] * f;
        }
        let kq = pathnorm::kappa(&net, &q, KappaMode::K1PlusK2)?;
        w_cov = w_cov
            .max(max_rel_diff(&kq.k1, &expected1, 1e-300))
            .max(max_rel_diff(&kq.k2, &expected2, 1e-300));
    }
    reports.push(PropertyReport::upper("kappa1 vs path enumeration", n, w_k1, 1e-10));
    reports.push(PropertyReport::upper("kappa1 + kappa2 vs finite differences", n, w_dec, 1e-4));
    reports.push(PropertyReport::upper("squared network output equals gamma", n, w_sq, 1e-12));
    reports.push(PropertyReport::upper("kappa covariance under rescaling", n, w_cov, 1e-10));

    let mut worst = 0.0f64;
    for _ in 0..n {
        let net = random_small_feedforward(&mut rng)?;
        let p = uniform_vec(&mut rng, net.num_params(), 1.0);
        let k2 = pathnorm::kappa2_bruteforce(&net, &p)?;
        worst = worst.max(k2.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    }
    reports.push(PropertyReport::upper("kappa2 vanishes without sharing", n, worst, f64::MIN_POSITIVE));

    let mut worst = 0.0f64;
    for _ in 0..n {
        let (spec, net, p, batch) = rnn_instance(&mut rng)?;
        let alpha = invariance::random_rescaling(&spec, &mut rng, 2.0)?;
        let q = invariance::apply_rescaling(&spec, &p, &alpha)?;
        let inputs: Vec<Vec<f64>> = batch.iter().map(|e| e.input.clone()).collect();
        worst = worst.max(output_deviation(&net, &p, &q, &inputs)?);
    }
    reports.push(PropertyReport::upper("function invariance under rescaling", n, worst, 1e-10));

    let mut worst = 0.0f64;
    for _ in 0..n {
        let (spec, net, p, batch) = rnn_instance(&mut rng)?;
        let alpha = invariance::random_rescaling(&spec, &mut rng, 1.0)?;
        let probe: Vec<Vec<f64>> = random_batch(&net, &mut rng, 3).into_iter().map(|e| e.input).collect();
        for mode in [KappaMode::K1, KappaMode::K1PlusK2] {
            worst = worst.max(update_invariance_gap(&spec, &p, &alpha, &batch, &probe, 0.01, Some(mode))?);
        }
    }
    reports.push(PropertyReport::upper("Path-SGD update invariance", n, worst, 1e-8));

    let mut all_feasible = true;
    for _ in 0..n {
        let (spec, net, _, _) = rnn_instance(&mut rng)?;
        let alpha = invariance::random_rescaling(&spec, &mut rng, 1.0)?;
        let beta = alpha.node_factors(&net)?;
        all_feasible &= invariance::is_feasible(&net, &invariance::edge_multipliers(&net, &beta));
    }
    let gap = if all_feasible { 0.0 } else { 1.0 };
    reports.push(PropertyReport::upper("rescalings are feasible", n, gap, 0.5));

    if options.level == Level::Full {
        let mut worst = 0.0f64;
        for _ in 0..n {
            let (_, net, p, _) = rnn_instance(&mut rng)?;
            let fast = scaled(pathnorm::kappa2_rnn(&net, &p)?, faults);
            let paths = pathnorm::kappa2_bruteforce(&net, &p)?;
            worst = worst.max(max_rel_diff(&fast, &paths, 1e-300));
        }
        reports.push(PropertyReport::upper("kappa2 matrix form vs path enumeration", n, worst, 1e-10));

        let (spec, p, alpha, batch, probe) = pinned_negative_control();
        let gap = update_invariance_gap(&spec, &p, &alpha, &batch, &probe, 0.1, None)?;
        reports.push(PropertyReport {
            name: "plain SGD is not rescaling invariant",
            instances: 1,
            worst: gap,
            tolerance: 1e-3,
            lower_bound: true,
            passed: gap > 1e-3,
        });
    }
    Ok(reports)
}
