//! Forward evaluation and reverse-mode gradients on a [`SharedWeightNet`].
//!
//! Gradients with respect to a shared parameter are the sum of the
//! gradients of every edge that reads it. Batch losses and gradients are
//! means over the batch, reduced in batch order.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::Deref;

use crate::error::{Error, Result};
use crate::graph::{NodeKind, SharedWeightNet};
use crate::math;

/// The free parameters of a network. Every entry is finite.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().all(|v| v.is_finite()) {
            Ok(Self(values))
        } else {
            Err(Error::NonFinite("parameter vector"))
        }
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for ParamVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Hidden-unit nonlinearity. Output nodes are always linear.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Relu,
    /// Baseline only; the path geometry assumes ReLU.
    Tanh,
}

impl Activation {
    #[inline]
    pub fn apply(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => pre.max(0.0),
            Activation::Tanh => math::tanh(pre),
        }
    }

    /// Derivative given the pre-activation and the activation output. The
    /// ReLU subgradient at exactly 0 is 0.
    #[inline]
    pub fn derivative(self, pre: f64, out: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - out * out,
        }
    }
}

/// Per-node values from one forward pass, indexed by node id.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationTrace {
    pub pre: Vec<f64>,
    pub out: Vec<f64>,
}

impl ActivationTrace {
    /// Whether an internal node's pre-activation is strictly positive.
    pub fn active(&self, node: usize) -> bool {
        self.pre[node] > 0.0
    }

    /// Smallest `|pre|` over internal nodes; used to stay clear of ReLU kinks.
    pub fn min_abs_internal_pre(&self, net: &SharedWeightNet) -> f64 {
        net.nodes()
            .iter()
            .enumerate()
            .filter(|(_, n)| n.kind == NodeKind::Internal)
            .map(|(v, _)| self.pre[v].abs())
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Mse,
    SoftmaxXent,
}

/// Supervision for one example, addressed by position in the output vector.
#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    /// Squared error on selected outputs, averaged over them.
    Values { outputs: Vec<usize>, values: Vec<f64> },
    /// Softmax cross-entropy on groups of `width` consecutive outputs; each
    /// group is `(first output index, class)`. Averaged over groups.
    Classes { width: usize, groups: Vec<(usize, usize)> },
}

impl Target {
    pub fn kind(&self) -> LossKind {
        match self {
            Target::Values { .. } => LossKind::Mse,
            Target::Classes { .. } => LossKind::SoftmaxXent,
        }
    }

    /// Mean squared error against a single output.
    pub fn scalar(output: usize, value: f64) -> Self {
        Target::Values { outputs: vec![output], values: vec![value] }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub input: Vec<f64>,
    pub target: Target,
}

/// Evaluates the network on one input vector.
pub fn forward(
    net: &SharedWeightNet,
    p: &[f64],
    x: &[f64],
    activation: Activation,
) -> Result<(Vec<f64>, ActivationTrace)> {
    check_params(net, p)?;
    let trace = forward_unchecked(net, p, x, activation)?;
    let outputs = net.output_nodes().iter().map(|&v| trace.out[v]).collect();
    Ok((outputs, trace))
}

pub(crate) fn check_params(net: &SharedWeightNet, p: &[f64]) -> Result<()> {
    if p.len() != net.num_params() {
        return Err(Error::DimensionMismatch {
            what: "parameter vector",
            expected: net.num_params(),
            actual: p.len(),
        });
    }
    Ok(())
}

pub(crate) fn forward_unchecked(
    net: &SharedWeightNet,
    p: &[f64],
    x: &[f64],
    activation: Activation,
) -> Result<ActivationTrace> {
    let inputs = net.input_nodes();
    if x.len() != inputs.len() {
        return Err(Error::DimensionMismatch { what: "input", expected: inputs.len(), actual: x.len() });
    }
    let n = net.num_nodes();
    let mut pre = vec![0.0; n];
    let mut out = vec![0.0; n];
    for (&v, &xv) in inputs.iter().zip(x) {
        pre[v] = xv;
        out[v] = xv;
    }
    let edges = net.edges();
    let params = net.param_of_edge();
    for (v, node) in net.nodes().iter().enumerate() {
        match node.kind {
            NodeKind::Input => {}
            NodeKind::Bias => {
                pre[v] = 1.0;
                out[v] = 1.0;
            }
            NodeKind::Internal | NodeKind::Output => {
                let z: f64 = net.incoming(v).iter().map(|&e| p[params[e]] * out[edges[e].src]).sum();
                pre[v] = z;
                out[v] = if node.kind == NodeKind::Internal { activation.apply(z) } else { z };
            }
        }
    }
    Ok(ActivationTrace { pre, out })
}

fn check_target(outputs: &[f64], target: &Target) -> Result<()> {
    match target {
        Target::Values { outputs: idx, values } => {
            if idx.len() != values.len() || idx.is_empty() {
                return Err(Error::DimensionMismatch {
                    what: "regression target",
                    expected: idx.len(),
                    actual: values.len(),
                });
            }
            if let Some(&bad) = idx.iter().find(|&&i| i >= outputs.len()) {
                return Err(Error::DimensionMismatch {
                    what: "target output index",
                    expected: outputs.len(),
                    actual: bad + 1,
                });
            }
        }
        Target::Classes { width, groups } => {
            if groups.is_empty() || *width == 0 {
                return Err(Error::DimensionMismatch { what: "class target", expected: 1, actual: 0 });
            }
            for &(start, class) in groups {
                if start + width > outputs.len() {
                    return Err(Error::DimensionMismatch {
                        what: "class group",
                        expected: outputs.len(),
                        actual: start + width,
                    });
                }
                if class >= *width {
                    return Err(Error::ClassOutOfRange { class, classes: *width });
                }
            }
        }
    }
    Ok(())
}

/// Loss of one example: mean squared error or mean softmax cross-entropy (nats).
pub fn loss(outputs: &[f64], target: &Target) -> Result<f64> {
    check_target(outputs, target)?;
    Ok(loss_unchecked(outputs, target, None))
}

/// Loss plus its gradient with respect to `outputs`, added into `d_outputs`
/// after multiplying by `scale`.
pub fn loss_with_grad(outputs: &[f64], target: &Target, scale: f64, d_outputs: &mut [f64]) -> Result<f64> {
    check_target(outputs, target)?;
    Ok(loss_unchecked(outputs, target, Some((scale, d_outputs))))
}

fn loss_unchecked(outputs: &[f64], target: &Target, mut grad: Option<(f64, &mut [f64])>) -> f64 {
    match target {
        Target::Values { outputs: idx, values } => {
            let n = idx.len() as f64;
            let mut total = 0.0;
            for (&i, &t) in idx.iter().zip(values) {
                let r = outputs[i] - t;
                total += r * r;
                if let Some((scale, d)) = grad.as_mut() {
                    d[i] += *scale * 2.0 * r / n;
                }
            }
            total / n
        }
        Target::Classes { width, groups } => {
            let n = groups.len() as f64;
            let mut total = 0.0;
            for &(start, class) in groups {
                let z = &outputs[start..start + width];
                let lse = math::log_sum_exp(z);
                total += lse - z[class];
                if let Some((scale, d)) = grad.as_mut() {
                    for (k, &zk) in z.iter().enumerate() {
                        let prob = math::exp(zk - lse);
                        let ind = if k == class { 1.0 } else { 0.0 };
                        d[start + k] += *scale * (prob - ind) / n;
                    }
                }
            }
            total / n
        }
    }
}

/// Mean loss over a batch.
pub fn batch_loss(net: &SharedWeightNet, p: &[f64], batch: &[Example], activation: Activation) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    check_params(net, p)?;
    let mut total = 0.0;
    for ex in batch {
        let trace = forward_unchecked(net, p, &ex.input, activation)?;
        let outputs: Vec<f64> = net.output_nodes().iter().map(|&v| trace.out[v]).collect();
        total += loss(&outputs, &ex.target)?;
    }
    Ok(total / batch.len() as f64)
}

/// Mean batch loss and its exact gradient with respect to `p`.
pub fn loss_and_grad(
    net: &SharedWeightNet,
    p: &[f64],
    batch: &[Example],
    activation: Activation,
) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    check_params(net, p)?;
    let scale = 1.0 / batch.len() as f64;
    let mut grad = vec![0.0; net.num_params()];
    let mut d_out = vec![0.0; net.num_nodes()];
    let mut total = 0.0;
    let edges = net.edges();
    let params = net.param_of_edge();
    for ex in batch {
        let trace = forward_unchecked(net, p, &ex.input, activation)?;
        let outputs: Vec<f64> = net.output_nodes().iter().map(|&v| trace.out[v]).collect();
        let mut d_outputs = vec![0.0; outputs.len()];
        total += loss_with_grad(&outputs, &ex.target, scale, &mut d_outputs)?;

        d_out.iter_mut().for_each(|d| *d = 0.0);
        for (&v, &d) in net.output_nodes().iter().zip(&d_outputs) {
            d_out[v] = d;
        }
        for (v, node) in net.nodes().iter().enumerate().rev() {
            let d_pre = match node.kind {
                NodeKind::Input | NodeKind::Bias => continue,
                NodeKind::Output => d_out[v],
                NodeKind::Internal => d_out[v] * activation.derivative(trace.pre[v], trace.out[v]),
            };
            if d_pre == 0.0 {
                continue;
            }
            for &e in net.incoming(v) {
                let src = edges[e].src;
                grad[params[e]] += d_pre * trace.out[src];
                d_out[src] += d_pre * p[params[e]];
            }
        }
    }
    Ok((total * scale, grad))
}

/// Gradient of the mean batch loss.
pub fn grad(net: &SharedWeightNet, p: &[f64], batch: &[Example], activation: Activation) -> Result<Vec<f64>> {
    loss_and_grad(net, p, batch, activation).map(|(_, g)| g)
}

/// Central finite-difference gradient of the mean batch loss; `2m` loss evaluations.
pub fn finite_diff_grad(
    net: &SharedWeightNet,
    p: &[f64],
    batch: &[Example],
    activation: Activation,
    step: f64,
) -> Result<Vec<f64>> {
    let mut probe = p.to_vec();
    let mut out = Vec::with_capacity(p.len());
    for i in 0..p.len() {
        probe[i] = p[i] + step;
        let plus = batch_loss(net, &probe, batch, activation)?;
        probe[i] = p[i] - step;
        let minus = batch_loss(net, &probe, batch, activation)?;
        probe[i] = p[i];
        out.push((plus - minus) / (2.0 * step));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::RnnSpec;

    fn unit_rnn(t: usize) -> SharedWeightNet {
        SharedWeightNet::build_rnn(&RnnSpec::single_layer(1, 1, 1, t)).unwrap()
    }

    #[test]
    fn hand_unrolled_forward() {
        let net = unit_rnn(2);
        let (y, trace) = forward(&net, &[1.0, 1.0, 1.0], &[0.5, 0.25], Activation::Relu).unwrap();
        assert_eq!(y, vec![0.5, 0.75]);
        let h2 = net.rnn().unwrap().nodes.hidden(1, 2, 0);
        assert!(trace.active(h2));
        assert_eq!(trace.out[h2], 0.75);
    }

    #[test]
    fn relu_clips_negative_inputs() {
        let net = unit_rnn(2);
        let (y, _) = forward(&net, &[1.0, 1.0, 1.0], &[-1.0, -1.0], Activation::Relu).unwrap();
        assert_eq!(y, vec![0.0, 0.0]);
    }

    #[test]
    fn zero_params_give_zero_outputs() {
        let net = SharedWeightNet::build_rnn(&RnnSpec::new(2, &[3, 2], 2, 3).with_bias(true)).unwrap();
        let p = vec![0.0; net.num_params()];
        let x = vec![0.3; net.input_nodes().len()];
        let (y, _) = forward(&net, &p, &x, Activation::Relu).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
        let target = Target::Values { outputs: (0..y.len()).collect(), values: vec![0.0; y.len()] };
        let batch = [Example { input: x, target }];
        let (l, g) = loss_and_grad(&net, &p, &batch, Activation::Relu).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn forward_dimension_errors() {
        let net = unit_rnn(2);
        assert!(matches!(
            forward(&net, &[1.0, 1.0, 1.0], &[0.5], Activation::Relu),
            Err(Error::DimensionMismatch { what: "input", .. })
        ));
        assert!(matches!(
            forward(&net, &[1.0, 1.0], &[0.5, 0.5], Activation::Relu),
            Err(Error::DimensionMismatch { what: "parameter vector", .. })
        ));
    }

    #[test]
    fn loss_values() {
        assert_eq!(loss(&[0.75], &Target::scalar(0, 0.75)).unwrap(), 0.0);
        assert_eq!(loss(&[1.0], &Target::scalar(0, 0.0)).unwrap(), 1.0);
        let xent = Target::Classes { width: 2, groups: vec![(0, 0)] };
        assert!((loss(&[0.0, 0.0], &xent).unwrap() - core::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn loss_errors() {
        let bad_class = Target::Classes { width: 2, groups: vec![(0, 2)] };
        assert_eq!(loss(&[0.0, 0.0], &bad_class), Err(Error::ClassOutOfRange { class: 2, classes: 2 }));
        assert!(loss(&[0.0], &Target::scalar(1, 0.0)).is_err());
        let short = Target::Classes { width: 3, groups: vec![(0, 0)] };
        assert!(loss(&[0.0, 0.0], &short).is_err());
    }

    #[test]
    fn zero_loss_zero_gradient() {
        let net = unit_rnn(2);
        let batch = [Example {
            input: vec![0.5, 0.25],
            target: Target::Values { outputs: vec![0, 1], values: vec![0.5, 0.75] },
        }];
        let g = grad(&net, &[1.0, 1.0, 1.0], &batch, Activation::Relu).unwrap();
        assert_eq!(g, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn single_edge_gradient() {
        let net = SharedWeightNet::build_feedforward(&[1, 1]).unwrap();
        let batch = [Example { input: vec![1.0], target: Target::scalar(0, 0.0) }];
        assert_eq!(grad(&net, &[1.0], &batch, Activation::Relu).unwrap(), vec![2.0]);
        assert_eq!(grad(&net, &[1.0], &[], Activation::Relu), Err(Error::EmptyBatch));
    }

    #[test]
    fn tanh_gradient_matches_finite_differences() {
        let net = SharedWeightNet::build_rnn(&RnnSpec::single_layer(2, 2, 1, 3).with_bias(true)).unwrap();
        let p: Vec<f64> = (0..net.num_params()).map(|i| ((i * 7 % 11) as f64 - 5.0) / 10.0).collect();
        let batch = [Example {
            input: vec![0.3, -0.2, 0.5, 0.1, -0.4, 0.9],
            target: Target::Values { outputs: vec![0, 2], values: vec![0.2, -0.1] },
        }];
        let g = grad(&net, &p, &batch, Activation::Tanh).unwrap();
        let fd = finite_diff_grad(&net, &p, &batch, Activation::Tanh, 1e-6).unwrap();
        for (a, b) in g.iter().zip(&fd) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn param_vector_rejects_nan() {
        assert!(ParamVector::new(vec![1.0, f64::NAN]).is_err());
        assert_eq!(ParamVector::zeros(2).as_slice(), &[0.0, 0.0]);
    }
}
