//! Dense evaluation of unrolled RNNs.
//!
//! Computes exactly what [`compute`](crate::compute) computes on the graph
//! produced by [`SharedWeightNet::build_rnn`], but with row-major
//! matrix-vector products instead of per-edge gathers. Training uses this
//! path; the graph engine stays the reference.

use alloc::vec;
use alloc::vec::Vec;

use crate::compute::{self, Activation, Example};
use crate::error::{Error, Result};
use crate::graph::{MatrixSlot, RnnInfo, RnnLayout, RnnSpec, SharedWeightNet};

#[derive(Debug, Clone, Copy)]
pub struct DenseRnn<'a> {
    spec: &'a RnnSpec,
    layout: &'a RnnLayout,
}

#[inline]
fn matvec_add(p: &[f64], w: MatrixSlot, v: &[f64], z: &mut [f64]) {
    let m = &p[w.range()];
    for (j, zj) in z.iter_mut().enumerate() {
        let row = &m[j * w.cols..(j + 1) * w.cols];
        *zj += row.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// `g[j, k] += dz[j] * v[k]`
#[inline]
fn outer_add(g: &mut [f64], w: MatrixSlot, dz: &[f64], v: &[f64]) {
    let g = &mut g[w.range()];
    for (j, &d) in dz.iter().enumerate() {
        if d == 0.0 {
            continue;
        }
        for (gk, &vk) in g[j * w.cols..(j + 1) * w.cols].iter_mut().zip(v) {
            *gk += d * vk;
        }
    }
}

/// `out[k] += sum_j W[j, k] * dz[j]`
#[inline]
fn matvec_t_add(p: &[f64], w: MatrixSlot, dz: &[f64], out: &mut [f64]) {
    let m = &p[w.range()];
    for (j, &d) in dz.iter().enumerate() {
        if d == 0.0 {
            continue;
        }
        for (ok, &wk) in out.iter_mut().zip(&m[j * w.cols..(j + 1) * w.cols]) {
            *ok += d * wk;
        }
    }
}

struct Trace {
    /// `pre[l - 1]`, `out[l - 1]`: `T x H_l`, time-major.
    pre: Vec<Vec<f64>>,
    out: Vec<Vec<f64>>,
    outputs: Vec<f64>,
}

impl<'a> DenseRnn<'a> {
    pub fn new(net: &'a SharedWeightNet) -> Result<Self> {
        net.rnn().map(Self::from_info).ok_or(Error::NotRnn)
    }

    pub fn from_info(info: &'a RnnInfo) -> Self {
        Self { spec: &info.spec, layout: &info.layout }
    }

    pub fn num_inputs(&self) -> usize {
        self.spec.length * self.spec.input_dim
    }

    pub fn num_outputs(&self) -> usize {
        self.spec.output_times().count() * self.spec.output_dim
    }

    fn check(&self, p: &[f64], x: &[f64]) -> Result<()> {
        if p.len() != self.layout.num_params() {
            return Err(Error::DimensionMismatch {
                what: "parameter vector",
                expected: self.layout.num_params(),
                actual: p.len(),
            });
        }
        if x.len() != self.num_inputs() {
            return Err(Error::DimensionMismatch { what: "input", expected: self.num_inputs(), actual: x.len() });
        }
        Ok(())
    }

    fn run(&self, p: &[f64], x: &[f64], activation: Activation) -> Trace {
        let spec = self.spec;
        let d = spec.depth();
        let big_t = spec.length;
        let mut pre: Vec<Vec<f64>> = (1..d).map(|l| vec![0.0; big_t * spec.width(l)]).collect();
        let mut out: Vec<Vec<f64>> = pre.clone();
        let mut outputs = Vec::with_capacity(self.num_outputs());
        let out_times = spec.output_times();
        for t in 0..big_t {
            for l in 1..d {
                let h = spec.width(l);
                let slots = self.layout.layer(l);
                let mut z = vec![0.0; h];
                if l == 1 {
                    matvec_add(p, slots.w_in, &x[t * spec.input_dim..(t + 1) * spec.input_dim], &mut z);
                } else {
                    let hb = spec.width(l - 1);
                    matvec_add(p, slots.w_in, &out[l - 2][t * hb..(t + 1) * hb], &mut z);
                }
                if let (Some(rec), true) = (slots.w_rec, t > 0) {
                    matvec_add(p, rec, &out[l - 1][(t - 1) * h..t * h], &mut z);
                }
                if let Some(b) = slots.bias {
                    z.iter_mut().zip(&p[b..b + h]).for_each(|(zj, bj)| *zj += bj);
                }
                for (j, &zj) in z.iter().enumerate() {
                    pre[l - 1][t * h + j] = zj;
                    out[l - 1][t * h + j] = activation.apply(zj);
                }
            }
            if out_times.contains(&(t + 1)) {
                let h = spec.width(d - 1);
                let mut y = vec![0.0; spec.output_dim];
                matvec_add(p, self.layout.w_out, &out[d - 2][t * h..(t + 1) * h], &mut y);
                if let Some(b) = self.layout.b_out {
                    y.iter_mut().zip(&p[b..b + spec.output_dim]).for_each(|(yj, bj)| *yj += bj);
                }
                outputs.extend_from_slice(&y);
            }
        }
        Trace { pre, out, outputs }
    }

    /// Outputs in the same order as the graph's output nodes.
    pub fn forward(&self, p: &[f64], x: &[f64], activation: Activation) -> Result<Vec<f64>> {
        self.check(p, x)?;
        Ok(self.run(p, x, activation).outputs)
    }

    /// Mean loss over a batch.
    pub fn batch_loss(&self, p: &[f64], batch: &[Example], activation: Activation) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let mut total = 0.0;
        for ex in batch {
            let y = self.forward(p, &ex.input, activation)?;
            total += compute::loss(&y, &ex.target)?;
        }
        Ok(total / batch.len() as f64)
    }

    /// Mean batch loss and gradient (backpropagation through time).
    pub fn loss_and_grad(&self, p: &[f64], batch: &[Example], activation: Activation) -> Result<(f64, Vec<f64>)> {
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let spec = self.spec;
        let d = spec.depth();
        let big_t = spec.length;
        let scale = 1.0 / batch.len() as f64;
        let mut grad = vec![0.0; self.layout.num_params()];
        let mut total = 0.0;
        let out_times = spec.output_times();
        let first_out = *out_times.start();
        let mut dh: Vec<Vec<f64>> = (1..d).map(|l| vec![0.0; big_t * spec.width(l)]).collect();

        for ex in batch {
            self.check(p, &ex.input)?;
            let trace = self.run(p, &ex.input, activation);
            let mut dy = vec![0.0; trace.outputs.len()];
            total += compute::loss_with_grad(&trace.outputs, &ex.target, scale, &mut dy)?;
            dh.iter_mut().for_each(|v| v.iter_mut().for_each(|x| *x = 0.0));

            for t in (0..big_t).rev() {
                if out_times.contains(&(t + 1)) {
                    let h = spec.width(d - 1);
                    let k = t + 1 - first_out;
                    let dyt = &dy[k * spec.output_dim..(k + 1) * spec.output_dim];
                    let below = &trace.out[d - 2][t * h..(t + 1) * h];
                    outer_add(&mut grad, self.layout.w_out, dyt, below);
                    if let Some(b) = self.layout.b_out {
                        grad[b..b + spec.output_dim].iter_mut().zip(dyt).for_each(|(g, v)| *g += v);
                    }
                    matvec_t_add(p, self.layout.w_out, dyt, &mut dh[d - 2][t * h..(t + 1) * h]);
                }
                for l in (1..d).rev() {
                    let h = spec.width(l);
                    let slots = self.layout.layer(l);
                    let dz: Vec<f64> = (0..h)
                        .map(|j| {
                            let i = t * h + j;
                            dh[l - 1][i] * activation.derivative(trace.pre[l - 1][i], trace.out[l - 1][i])
                        })
                        .collect();
                    if l == 1 {
                        let xt = &ex.input[t * spec.input_dim..(t + 1) * spec.input_dim];
                        outer_add(&mut grad, slots.w_in, &dz, xt);
                    } else {
                        let hb = spec.width(l - 1);
                        outer_add(&mut grad, slots.w_in, &dz, &trace.out[l - 2][t * hb..(t + 1) * hb]);
                        matvec_t_add(p, slots.w_in, &dz, &mut dh[l - 2][t * hb..(t + 1) * hb]);
                    }
                    if let (Some(rec), true) = (slots.w_rec, t > 0) {
                        outer_add(&mut grad, rec, &dz, &trace.out[l - 1][(t - 1) * h..t * h]);
                        matvec_t_add(p, rec, &dz, &mut dh[l - 1][(t - 1) * h..t * h]);
                    }
                    if let Some(b) = slots.bias {
                        grad[b..b + h].iter_mut().zip(&dz).for_each(|(g, v)| *g += v);
                    }
                }
            }
        }
        Ok((total * scale, grad))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compute::Target;
    use crate::graph::Readout;

    fn lcg(seed: &mut u64) -> f64 {
        *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((*seed >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    }

    fn check_against_graph(spec: RnnSpec, activation: Activation) {
        let net = SharedWeightNet::build_rnn(&spec).unwrap();
        let dense = DenseRnn::new(&net).unwrap();
        let mut s = 42;
        let p: Vec<f64> = (0..net.num_params()).map(|_| lcg(&mut s)).collect();
        let n_out = net.output_nodes().len();
        let batch: Vec<Example> = (0..3)
            .map(|_| Example {
                input: (0..net.input_nodes().len()).map(|_| lcg(&mut s)).collect(),
                target: Target::Values { outputs: (0..n_out).collect(), values: (0..n_out).map(|_| lcg(&mut s)).collect() },
            })
            .collect();
        for ex in &batch {
            let (y_graph, _) = compute::forward(&net, &p, &ex.input, activation).unwrap();
            let y_dense = dense.forward(&p, &ex.input, activation).unwrap();
            for (a, b) in y_graph.iter().zip(&y_dense) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        let (l1, g1) = compute::loss_and_grad(&net, &p, &batch, activation).unwrap();
        let (l2, g2) = dense.loss_and_grad(&p, &batch, activation).unwrap();
        assert!((l1 - l2).abs() < 1e-12);
        for (a, b) in g1.iter().zip(&g2) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn matches_graph_engine() {
        check_against_graph(RnnSpec::single_layer(2, 3, 2, 4), Activation::Relu);
        check_against_graph(RnnSpec::new(2, &[3, 2], 2, 3).with_bias(true), Activation::Relu);
        check_against_graph(
            RnnSpec::new(3, &[2, 4], 1, 5).with_bias(true).with_readout(Readout::FinalStep),
            Activation::Tanh,
        );
        check_against_graph(RnnSpec::single_layer(1, 2, 1, 1), Activation::Relu);
    }

    #[test]
    fn rejects_non_rnn() {
        let net = SharedWeightNet::build_feedforward(&[2, 2]).unwrap();
        assert!(matches!(DenseRnn::new(&net), Err(Error::NotRnn)));
    }
}
