//! The path regularizer and its per-parameter curvature.
//!
//! `gamma2(p)` is the sum over all input-to-output paths of the product of
//! squared edge weights. Path-SGD preconditions each coordinate with
//! `kappa_i = 1/2 * d^2 gamma2 / dp_i^2`, which splits into
//!
//! * `k1`: for every edge `e` reading `p_i`, the paths through `e` with the
//!   factor for `e` itself removed, and
//! * `k2`: paths crossing two distinct edges that both read `p_i`.
//!
//! For a path that crosses `c` edges of `E_i` the second derivative is
//! `c (2c - 1) p_i^(2c-2) R`. The `k1` sum contributes `c p_i^(2c-2) R`, so
//! `k2` must contribute `2 c (c - 1) p_i^(2c-2) R`: twice the sum over ordered
//! pairs `(e1, e2)`, or four times the sum over pairs ordered along the path.
//! Everything in this module is normalized to that convention and checked
//! against the finite-difference definition ([`kappa_fd`]).
//!
//! `k1` and `k2` are computed from the squared network `p~_i = p_i^2`
//! evaluated on the all-ones input: node values there are path sums from the
//! sources and `dg/dh_v` are path sums to the outputs.

use alloc::vec;
use alloc::vec::Vec;

use crate::compute::{self, Activation};
use crate::error::{Error, Result};
use crate::graph::{MatrixSlot, NodeKind, RnnLayout, RnnSpec, SharedWeightNet};
use crate::math;
use crate::optim::KappaMode;

/// Largest number of paths the brute-force oracles will enumerate.
pub const PATH_LIMIT: u64 = 1_000_000;

/// Default relative step for [`kappa_fd`].
pub const KAPPA_FD_STEP: f64 = 1e-4;

/// `kappa = k1 + k2`, both elementwise nonnegative.
#[derive(Debug, Clone, PartialEq)]
pub struct KappaVector {
    pub k1: Vec<f64>,
    pub k2: Vec<f64>,
}

impl KappaVector {
    pub fn total(&self) -> Vec<f64> {
        self.k1.iter().zip(&self.k2).map(|(a, b)| a + b).collect()
    }

    /// The preconditioner used by an update in the given mode.
    pub fn for_mode(&self, mode: KappaMode) -> Vec<f64> {
        match mode {
            KappaMode::K1 => self.k1.clone(),
            KappaMode::K1PlusK2 => self.total(),
        }
    }

    pub fn ratio(&self) -> Result<f64> {
        let denom = math::norm2(&self.k1);
        if denom == 0.0 {
            return Err(Error::ZeroDenominator);
        }
        Ok(math::norm2(&self.k2) / denom)
    }
}

/// `gamma2` by the node recursion `g_v = sum_{u->v} g_u w^2`, with `g = 1`
/// at input and bias nodes.
pub fn gamma_recursive(net: &SharedWeightNet, p: &[f64]) -> f64 {
    let edges = net.edges();
    let params = net.param_of_edge();
    let mut g = vec![0.0; net.num_nodes()];
    let mut total = 0.0;
    for (v, node) in net.nodes().iter().enumerate() {
        g[v] = match node.kind {
            NodeKind::Input | NodeKind::Bias => 1.0,
            _ => net
                .incoming(v)
                .iter()
                .map(|&e| {
                    let w = p[params[e]];
                    g[edges[e].src] * w * w
                })
                .sum(),
        };
        if node.kind == NodeKind::Output {
            total += g[v];
        }
    }
    total
}

/// Number of source-to-output paths (saturating in `f64`).
pub fn count_paths(net: &SharedWeightNet) -> f64 {
    let edges = net.edges();
    let mut count = vec![0.0f64; net.num_nodes()];
    let mut total = 0.0;
    for (v, node) in net.nodes().iter().enumerate() {
        count[v] = match node.kind {
            NodeKind::Input | NodeKind::Bias => 1.0,
            _ => net.incoming(v).iter().map(|&e| count[edges[e].src]).sum(),
        };
        if node.kind == NodeKind::Output {
            total += count[v];
        }
    }
    total
}

/// Calls `visit` with the edge ids of every source-to-output path.
/// Fails up front when there are more than `limit` paths.
pub fn for_each_path(net: &SharedWeightNet, limit: u64, mut visit: impl FnMut(&[usize])) -> Result<()> {
    if count_paths(net) > limit as f64 {
        return Err(Error::PathLimit { limit });
    }
    let n = net.num_nodes();
    let mut outgoing: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (id, e) in net.edges().iter().enumerate() {
        outgoing[e.src].push(id);
    }
    let nodes = net.nodes();
    let mut path = Vec::new();
    // (node, index of the next outgoing edge to try)
    let mut stack: Vec<(usize, usize)> = Vec::new();
    for source in (0..n).filter(|&v| matches!(nodes[v].kind, NodeKind::Input | NodeKind::Bias)) {
        stack.push((source, 0));
        while let Some(top) = stack.last_mut() {
            let (v, next) = *top;
            if next == 0 && nodes[v].kind == NodeKind::Output {
                visit(&path);
            }
            if let Some(&e) = outgoing[v].get(next) {
                top.1 += 1;
                path.push(e);
                stack.push((net.edges()[e].dst, 0));
            } else {
                stack.pop();
                if !stack.is_empty() {
                    path.pop();
                }
            }
        }
    }
    Ok(())
}

/// `gamma2` by explicit path enumeration.
pub fn gamma_bruteforce(net: &SharedWeightNet, p: &[f64]) -> Result<f64> {
    let params = net.param_of_edge();
    let mut total = 0.0;
    for_each_path(net, PATH_LIMIT, |path| {
        total += path.iter().map(|&e| p[params[e]] * p[params[e]]).product::<f64>();
    })?;
    Ok(total)
}

/// Half the central second difference of [`gamma_recursive`] per coordinate,
/// with step `rel_step * max(|p_i|, 1)`.
pub fn kappa_fd(net: &SharedWeightNet, p: &[f64], rel_step: f64) -> Vec<f64> {
    let base = gamma_recursive(net, p);
    let mut probe = p.to_vec();
    (0..p.len())
        .map(|i| {
            let h = rel_step * p[i].abs().max(1.0);
            probe[i] = p[i] + h;
            let plus = gamma_recursive(net, &probe);
            probe[i] = p[i] - h;
            let minus = gamma_recursive(net, &probe);
            probe[i] = p[i];
            0.5 * (plus - 2.0 * base + minus) / (h * h)
        })
        .collect()
}

/// The network with squared weights, evaluated on the all-ones input.
///
/// The ReLU stays in place; with nonnegative weights and inputs every
/// pre-activation is nonnegative so it never clips. The backward pass uses
/// slope 1 throughout so that `dg_dh` stays the path sum to the outputs
/// even at nodes whose value is exactly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SquaredNet {
    pub squared: Vec<f64>,
    /// `h_v(p~)`, the path sum from the sources to `v`.
    pub h: Vec<f64>,
    /// `dg(1)/dh_v(p~)`, the path sum from `v` to the outputs.
    pub dg_dh: Vec<f64>,
}

impl SquaredNet {
    pub fn new(net: &SharedWeightNet, p: &[f64]) -> Result<Self> {
        compute::check_params(net, p)?;
        let squared: Vec<f64> = p.iter().map(|v| v * v).collect();
        let ones = vec![1.0; net.input_nodes().len()];
        let h = compute::forward_unchecked(net, &squared, &ones, Activation::Relu)?.out;
        let edges = net.edges();
        let params = net.param_of_edge();
        let mut dg_dh = vec![0.0; net.num_nodes()];
        for (v, node) in net.nodes().iter().enumerate().rev() {
            if node.kind == NodeKind::Output {
                dg_dh[v] = 1.0;
            }
            let dv = dg_dh[v];
            for &e in net.incoming(v) {
                dg_dh[edges[e].src] += squared[params[e]] * dv;
            }
        }
        Ok(Self { squared, h, dg_dh })
    }

    /// `g(1)`, the summed outputs; equals `gamma2`.
    pub fn g(&self, net: &SharedWeightNet) -> f64 {
        net.output_nodes().iter().map(|&v| self.h[v]).sum()
    }

    /// `k1 = grad_{p~} g(1)`.
    pub fn kappa1(&self, net: &SharedWeightNet) -> Vec<f64> {
        let edges = net.edges();
        let mut k1 = vec![0.0; net.num_params()];
        for (e, &i) in net.param_of_edge().iter().enumerate() {
            k1[i] += self.h[edges[e].src] * self.dg_dh[edges[e].dst];
        }
        k1
    }
}

/// First curvature term via one forward and one backward pass of the
/// squared network, in matrix form for RNNs.
pub fn kappa1(net: &SharedWeightNet, p: &[f64]) -> Result<Vec<f64>> {
    match net.rnn() {
        Some(info) => Ok(RnnSquared::new(&info.spec, p)?.kappa1(&info.spec)),
        None => Ok(SquaredNet::new(net, p)?.kappa1(net)),
    }
}

/// First curvature term by enumerating, for every edge, the paths through it.
pub fn kappa1_bruteforce(net: &SharedWeightNet, p: &[f64]) -> Result<Vec<f64>> {
    compute::check_params(net, p)?;
    let params = net.param_of_edge();
    let mut k1 = vec![0.0; net.num_params()];
    for_each_path(net, PATH_LIMIT, |path| {
        for (a, &ea) in path.iter().enumerate() {
            let rest: f64 = path
                .iter()
                .enumerate()
                .filter(|&(c, _)| c != a)
                .map(|(_, &e)| p[params[e]] * p[params[e]])
                .product();
            k1[params[ea]] += rest;
        }
    })?;
    Ok(k1)
}

/// Second curvature term by enumerating ordered pairs of distinct edges
/// sharing a parameter on each path: `2 p_i^2 * prod(other squared weights)`.
pub fn kappa2_bruteforce(net: &SharedWeightNet, p: &[f64]) -> Result<Vec<f64>> {
    compute::check_params(net, p)?;
    let params = net.param_of_edge();
    let mut k2 = vec![0.0; net.num_params()];
    for_each_path(net, PATH_LIMIT, |path| {
        for (a, &ea) in path.iter().enumerate() {
            let i = params[ea];
            for (b, &eb) in path.iter().enumerate() {
                if a == b || params[eb] != i {
                    continue;
                }
                let rest: f64 = path
                    .iter()
                    .enumerate()
                    .filter(|&(c, _)| c != a && c != b)
                    .map(|(_, &e)| p[params[e]] * p[params[e]])
                    .product();
                k2[i] += 2.0 * p[i] * p[i] * rest;
            }
        }
    })?;
    Ok(k2)
}

/// The squared network of an unrolled RNN in matrix form: per hidden layer,
/// `h[(t - 1) * H + j]` and `dg[(t - 1) * H + j]` are the path sums from the
/// sources to unit `j` at step `t` and from there to the outputs.
///
/// Costs `O(H * n_in + T * H^2)` per layer instead of a pass over the
/// unrolled graph.
#[derive(Debug, Clone, PartialEq)]
pub struct RnnSquared {
    pub squared: Vec<f64>,
    pub h: Vec<Vec<f64>>,
    pub dg: Vec<Vec<f64>>,
}

impl RnnSquared {
    pub fn new(spec: &RnnSpec, p: &[f64]) -> Result<Self> {
        spec.validate()?;
        let layout = RnnLayout::new(spec);
        if p.len() != layout.num_params() {
            return Err(Error::DimensionMismatch {
                what: "parameter vector",
                expected: layout.num_params(),
                actual: p.len(),
            });
        }
        let squared: Vec<f64> = p.iter().map(|v| v * v).collect();
        let d = spec.depth();
        let big_t = spec.length;
        let top = d - 1;

        // The all-ones input makes the first layer's input term a row sum.
        let w_in1 = layout.layer(1).w_in;
        let row_sums: Vec<f64> = (0..w_in1.rows)
            .map(|j| squared[w_in1.index(j, 0)..w_in1.index(j, 0) + w_in1.cols].iter().sum())
            .collect();
        let w_out = layout.w_out;
        let col_sums: Vec<f64> =
            (0..w_out.cols).map(|k| (0..w_out.rows).map(|j| squared[w_out.index(j, k)]).sum()).collect();

        let mut h: Vec<Vec<f64>> = (1..d).map(|l| vec![0.0; big_t * spec.width(l)]).collect();
        for t in 0..big_t {
            for l in 1..d {
                let width = spec.width(l);
                let slots = layout.layer(l);
                let (below, rest) = h.split_at_mut(l - 1);
                let cur = &mut rest[0];
                for j in 0..width {
                    let mut z = slots.bias.map_or(0.0, |b| squared[b + j]);
                    if l == 1 {
                        z += row_sums[j];
                    } else {
                        let hb = spec.width(l - 1);
                        let prev = &below[l - 2][t * hb..(t + 1) * hb];
                        let row = &squared[slots.w_in.index(j, 0)..slots.w_in.index(j, 0) + hb];
                        z += row.iter().zip(prev).map(|(a, b)| a * b).sum::<f64>();
                    }
                    if let (Some(rec), true) = (slots.w_rec, t > 0) {
                        let prev = &cur[(t - 1) * width..t * width];
                        let row = &squared[rec.index(j, 0)..rec.index(j, 0) + width];
                        z += row.iter().zip(prev).map(|(a, b)| a * b).sum::<f64>();
                    }
                    cur[t * width + j] = z;
                }
            }
        }

        let out_times = spec.output_times();
        let mut dg: Vec<Vec<f64>> = (1..d).map(|l| vec![0.0; big_t * spec.width(l)]).collect();
        for t in (0..big_t).rev() {
            for l in (1..d).rev() {
                let width = spec.width(l);
                let (lower, upper) = dg.split_at_mut(l);
                let cur = &mut lower[l - 1];
                if l == top {
                    if out_times.contains(&(t + 1)) {
                        for k in 0..width {
                            cur[t * width + k] += col_sums[k];
                        }
                    }
                } else {
                    let above = layout.layer(l + 1).w_in;
                    let wa = spec.width(l + 1);
                    let next = &upper[0][t * wa..(t + 1) * wa];
                    for (j, &dj) in next.iter().enumerate() {
                        if dj == 0.0 {
                            continue;
                        }
                        for k in 0..width {
                            cur[t * width + k] += squared[above.index(j, k)] * dj;
                        }
                    }
                }
                if let (Some(rec), true) = (layout.layer(l).w_rec, t + 1 < big_t) {
                    let (head, tail) = cur.split_at_mut((t + 1) * width);
                    let dst = &mut head[t * width..];
                    for (j, &dj) in tail[..width].iter().enumerate() {
                        if dj == 0.0 {
                            continue;
                        }
                        for k in 0..width {
                            dst[k] += squared[rec.index(j, k)] * dj;
                        }
                    }
                }
            }
        }
        Ok(Self { squared, h, dg })
    }

    /// `gamma2`, the summed outputs of the squared network.
    pub fn gamma(&self, spec: &RnnSpec) -> f64 {
        let layout = RnnLayout::new(spec);
        let top = spec.depth() - 1;
        let width = spec.width(top);
        let mut total = 0.0;
        for t in spec.output_times() {
            let ht = &self.h[top - 1][(t - 1) * width..t * width];
            for j in 0..layout.w_out.rows {
                let row = &self.squared[layout.w_out.index(j, 0)..layout.w_out.index(j, 0) + width];
                total += row.iter().zip(ht).map(|(a, b)| a * b).sum::<f64>();
                total += layout.b_out.map_or(0.0, |b| self.squared[b + j]);
            }
        }
        total
    }

    pub fn kappa1(&self, spec: &RnnSpec) -> Vec<f64> {
        let layout = RnnLayout::new(spec);
        let d = spec.depth();
        let big_t = spec.length;
        let mut k1 = vec![0.0; layout.num_params()];
        for l in 1..d {
            let width = spec.width(l);
            let slots = layout.layer(l);
            let dg = &self.dg[l - 1];
            let total_dg: Vec<f64> = (0..width).map(|j| (0..big_t).map(|t| dg[t * width + j]).sum()).collect();
            if l == 1 {
                for j in 0..width {
                    let start = slots.w_in.index(j, 0);
                    k1[start..start + slots.w_in.cols].iter_mut().for_each(|v| *v = total_dg[j]);
                }
            } else {
                let hb = spec.width(l - 1);
                outer_sum(&mut k1, slots.w_in, dg, width, &self.h[l - 2], hb, 0..big_t, 0);
            }
            if let Some(rec) = slots.w_rec {
                outer_sum(&mut k1, rec, dg, width, &self.h[l - 1], width, 1..big_t, 1);
            }
            if let Some(b) = slots.bias {
                k1[b..b + width].copy_from_slice(&total_dg);
            }
        }
        let top = d - 1;
        let width = spec.width(top);
        let h = &self.h[top - 1];
        let times = spec.output_times();
        for k in 0..width {
            let s: f64 = times.clone().map(|t| h[(t - 1) * width + k]).sum();
            for j in 0..layout.w_out.rows {
                k1[layout.w_out.index(j, k)] = s;
            }
        }
        if let Some(b) = layout.b_out {
            let count = times.count() as f64;
            k1[b..b + spec.output_dim].iter_mut().for_each(|v| *v = count);
        }
        k1
    }

    /// Second curvature term in matrix form.
    ///
    /// Only recurrent weights can appear twice on one path. For layer `l` with
    /// squared recurrent matrix `R` (`R[j, k]` is the edge `k -> j`), a pair of
    /// edges `h_s[k] -> h_{s+1}[j]` and `h_{s+n+1}[k] -> h_{s+n+2}[j]` is joined
    /// by `(R^n)[k, j]` paths, giving
    ///
    /// `k2[j, k] = 4 R[j, k] sum_{n=0}^{T-3} (R^n)[k, j] sum_{s=1}^{T-2-n} dg_{s+n+2}[j] h_s[k]`.
    ///
    /// Cost is `O(T H^3 + T^2 H^2)` per layer.
    pub fn kappa2(&self, spec: &RnnSpec) -> Vec<f64> {
        let layout = RnnLayout::new(spec);
        let big_t = spec.length;
        let mut k2 = vec![0.0; layout.num_params()];
        if big_t < 3 {
            return k2;
        }
        for layer in 1..spec.depth() {
            let Some(rec) = layout.layer(layer).w_rec else { continue };
            let h = rec.rows;
            let r = &self.squared[rec.range()];
            let values = &self.h[layer - 1];
            let sens = &self.dg[layer - 1];

            let mut power = vec![0.0; h * h];
            for j in 0..h {
                power[j * h + j] = 1.0;
            }
            let mut acc = vec![0.0; h * h];
            let mut pairs = vec![0.0; h * h];
            for n in 0..=big_t - 3 {
                pairs.iter_mut().for_each(|x| *x = 0.0);
                for s in 1..=big_t - 2 - n {
                    // dg at step s + n + 2, h at step s
                    let d = &sens[(s + n + 1) * h..(s + n + 2) * h];
                    let v = &values[(s - 1) * h..s * h];
                    for j in 0..h {
                        if d[j] == 0.0 {
                            continue;
                        }
                        for k in 0..h {
                            pairs[j * h + k] += d[j] * v[k];
                        }
                    }
                }
                for j in 0..h {
                    for k in 0..h {
                        acc[j * h + k] += power[k * h + j] * pairs[j * h + k];
                    }
                }
                if n < big_t - 3 {
                    power = matmul(r, &power, h);
                }
            }
            for j in 0..h {
                for k in 0..h {
                    k2[rec.index(j, k)] = 4.0 * r[j * h + k] * acc[j * h + k];
                }
            }
        }
        k2
    }
}

/// `k[slot(j, k)] += sum_t dg_t[j] * h_{t - lag}[k]` over `times`.
#[allow(clippy::too_many_arguments)]
fn outer_sum(
    k1: &mut [f64],
    slot: MatrixSlot,
    dg: &[f64],
    rows: usize,
    h: &[f64],
    cols: usize,
    times: core::ops::Range<usize>,
    lag: usize,
) {
    for t in times {
        let d = &dg[t * rows..(t + 1) * rows];
        let v = &h[(t - lag) * cols..(t - lag + 1) * cols];
        for j in 0..rows {
            if d[j] == 0.0 {
                continue;
            }
            let start = slot.index(j, 0);
            for (dst, &vk) in k1[start..start + cols].iter_mut().zip(v) {
                *dst += d[j] * vk;
            }
        }
    }
}

/// Both curvature terms of an RNN from its spec alone, never building the graph.
pub fn kappa_rnn(spec: &RnnSpec, p: &[f64], mode: KappaMode) -> Result<KappaVector> {
    let sq = RnnSquared::new(spec, p)?;
    let k1 = sq.kappa1(spec);
    let k2 = match mode {
        KappaMode::K1 => vec![0.0; k1.len()],
        KappaMode::K1PlusK2 => sq.kappa2(spec),
    };
    Ok(KappaVector { k1, k2 })
}

/// Second curvature term of an unrolled RNN; see [`RnnSquared::kappa2`].
pub fn kappa2_rnn(net: &SharedWeightNet, p: &[f64]) -> Result<Vec<f64>> {
    let info = net.rnn().ok_or(Error::NotRnn)?;
    Ok(RnnSquared::new(&info.spec, p)?.kappa2(&info.spec))
}

fn matmul(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut c = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..n {
                c[i * n + j] += aik * b[k * n + j];
            }
        }
    }
    c
}

/// Second curvature term: matrix form for RNNs, exactly zero without
/// sharing, brute force otherwise.
pub fn kappa2(net: &SharedWeightNet, p: &[f64]) -> Result<Vec<f64>> {
    if net.rnn().is_some() {
        kappa2_rnn(net, p)
    } else if net.is_one_to_one() {
        compute::check_params(net, p)?;
        Ok(vec![0.0; net.num_params()])
    } else {
        kappa2_bruteforce(net, p)
    }
}

/// Both curvature terms. In [`KappaMode::K1`] the second term is left at zero.
pub fn kappa(net: &SharedWeightNet, p: &[f64], mode: KappaMode) -> Result<KappaVector> {
    if let Some(info) = net.rnn() {
        return kappa_rnn(&info.spec, p, mode);
    }
    let k1 = kappa1(net, p)?;
    let k2 = match mode {
        KappaMode::K1 => vec![0.0; k1.len()],
        KappaMode::K1PlusK2 => kappa2(net, p)?,
    };
    Ok(KappaVector { k1, k2 })
}

/// `||k2||_2 / ||k1||_2`.
pub fn kappa_ratio(net: &SharedWeightNet, p: &[f64]) -> Result<f64> {
    kappa(net, p, KappaMode::K1PlusK2)?.ratio()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::RnnSpec;

    fn unit_rnn(t: usize) -> SharedWeightNet {
        SharedWeightNet::build_rnn(&RnnSpec::single_layer(1, 1, 1, t)).unwrap()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * x.abs().max(y.abs()).max(1e-300))
    }

    #[test]
    fn gamma_of_unit_rnns() {
        assert_eq!(gamma_recursive(&unit_rnn(2), &[1.0; 3]), 3.0);
        assert_eq!(gamma_bruteforce(&unit_rnn(2), &[1.0; 3]).unwrap(), 3.0);
        assert_eq!(gamma_recursive(&unit_rnn(3), &[1.0; 3]), 6.0);
        assert_eq!(gamma_bruteforce(&unit_rnn(3), &[1.0; 3]).unwrap(), 6.0);
        assert_eq!(gamma_recursive(&unit_rnn(3), &[0.0; 3]), 0.0);
        assert_eq!(count_paths(&unit_rnn(3)), 6.0);
    }

    #[test]
    fn kappa_fd_hand_values() {
        assert!(close(&kappa_fd(&unit_rnn(2), &[1.0; 3], KAPPA_FD_STEP), &[3.0, 1.0, 3.0], 1e-6));
        let k = kappa_fd(&unit_rnn(3), &[1.0; 3], KAPPA_FD_STEP);
        assert!((k[1] - 8.0).abs() < 1e-5);
        let ff = SharedWeightNet::build_feedforward(&[1, 1]).unwrap();
        for w in [0.1, 1.0, -3.0] {
            assert!((kappa_fd(&ff, &[w], KAPPA_FD_STEP)[0] - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn kappa1_hand_values() {
        assert_eq!(kappa1(&unit_rnn(2), &[1.0; 3]).unwrap(), vec![3.0, 1.0, 3.0]);
        assert_eq!(kappa1(&unit_rnn(3), &[1.0; 3]).unwrap()[1], 4.0);
    }

    #[test]
    fn kappa2_hand_values() {
        assert_eq!(kappa2_bruteforce(&unit_rnn(3), &[1.0; 3]).unwrap(), vec![0.0, 4.0, 0.0]);
        assert_eq!(kappa2_rnn(&unit_rnn(3), &[1.0; 3]).unwrap(), vec![0.0, 4.0, 0.0]);
        assert_eq!(kappa2_bruteforce(&unit_rnn(2), &[1.0; 3]).unwrap(), vec![0.0; 3]);
        assert_eq!(kappa2_rnn(&unit_rnn(2), &[1.0; 3]).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn ratio_for_t3_unit_rnn() {
        // Each of the 6 paths crosses one input and one output edge.
        let k1 = kappa1(&unit_rnn(3), &[1.0; 3]).unwrap();
        assert_eq!(k1, vec![6.0, 4.0, 6.0]);
        let r = kappa_ratio(&unit_rnn(3), &[1.0; 3]).unwrap();
        assert!((r - 4.0 / libm::sqrt(88.0)).abs() < 1e-15);
    }

    #[test]
    fn feedforward_ratio_is_zero() {
        let net = SharedWeightNet::build_feedforward(&[2, 3, 2]).unwrap();
        let p: Vec<f64> = (0..net.num_params()).map(|i| 0.1 + i as f64 * 0.05).collect();
        assert_eq!(kappa_ratio(&net, &p).unwrap(), 0.0);
    }

    #[test]
    fn zero_kappa1_ratio_errors() {
        let net = unit_rnn(3);
        assert_eq!(kappa_ratio(&net, &[0.0; 3]), Err(Error::ZeroDenominator));
    }

    #[test]
    fn squared_net_output_is_gamma() {
        let net = SharedWeightNet::build_rnn(&RnnSpec::new(2, &[2, 2], 1, 3).with_bias(true)).unwrap();
        let p: Vec<f64> = (0..net.num_params()).map(|i| ((i * 5 % 7) as f64 - 3.0) / 4.0).collect();
        let sq = SquaredNet::new(&net, &p).unwrap();
        assert_eq!(sq.g(&net), gamma_recursive(&net, &p));
        assert!(sq.h.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn path_guard() {
        let net = SharedWeightNet::build_feedforward(&[100, 100, 100, 2]).unwrap();
        let p = vec![0.1; net.num_params()];
        assert_eq!(gamma_bruteforce(&net, &p), Err(Error::PathLimit { limit: PATH_LIMIT }));
    }

    #[test]
    fn matrix_form_matches_graph_pass() {
        for spec in [
            RnnSpec::new(3, &[2, 3], 2, 4).with_bias(true),
            RnnSpec::new(1, &[3], 2, 1),
            RnnSpec::new(2, &[2, 1, 2], 1, 3).with_readout(crate::Readout::FinalStep),
        ] {
            let net = SharedWeightNet::build_rnn(&spec).unwrap();
            let p: Vec<f64> = (0..net.num_params()).map(|i| ((i * 7 % 11) as f64 - 5.0) / 6.0).collect();
            let dense = RnnSquared::new(&spec, &p).unwrap();
            let graph = SquaredNet::new(&net, &p).unwrap();
            assert!(close(&dense.kappa1(&spec), &graph.kappa1(&net), 1e-13));
            assert!((dense.gamma(&spec) - graph.g(&net)).abs() < 1e-12 * graph.g(&net));
            let info = net.rnn().unwrap();
            for l in 1..spec.depth() {
                for t in 1..=spec.length {
                    for (j, &v) in info.nodes.hidden_at(l, t).iter().enumerate() {
                        let w = spec.width(l);
                        assert!((dense.h[l - 1][(t - 1) * w + j] - graph.h[v]).abs() < 1e-12);
                        assert!((dense.dg[l - 1][(t - 1) * w + j] - graph.dg_dh[v]).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn kappa2_rnn_needs_rnn() {
        let net = SharedWeightNet::build_feedforward(&[2, 2]).unwrap();
        assert_eq!(kappa2_rnn(&net, &[0.0; 4]), Err(Error::NotRnn));
    }
}
