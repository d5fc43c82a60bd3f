//! Node-wise rescalings of RNN hidden units.
//!
//! Multiplying every edge into hidden unit `(i, j)` by `alpha[i][j] > 0` and
//! every edge out of it by `1 / alpha[i][j]` leaves a ReLU network's function
//! unchanged. In an unrolled RNN the factor must be the same at every time
//! step, otherwise copies of a shared weight would be scaled differently.

use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{NodeKind, RnnLayout, RnnSpec, SharedWeightNet};
use crate::math;

/// Positive factors `alpha[i - 1][j]` for every hidden unit `j` of hidden layer `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeScaling {
    alpha: Vec<Vec<f64>>,
}

impl NodeScaling {
    pub fn new(spec: &RnnSpec, alpha: Vec<Vec<f64>>) -> Result<Self> {
        if alpha.len() != spec.hidden_dims.len() {
            return Err(Error::DimensionMismatch {
                what: "scaling layers",
                expected: spec.hidden_dims.len(),
                actual: alpha.len(),
            });
        }
        for (l, (row, &h)) in alpha.iter().zip(&spec.hidden_dims).enumerate() {
            if row.len() != h {
                return Err(Error::DimensionMismatch { what: "scaling units", expected: h, actual: row.len() });
            }
            if let Some(unit) = row.iter().position(|&a| !(a > 0.0 && a.is_finite())) {
                return Err(Error::NonPositiveScale { layer: l + 1, unit });
            }
        }
        Ok(Self { alpha })
    }

    pub fn identity(spec: &RnnSpec) -> Self {
        Self { alpha: spec.hidden_dims.iter().map(|&h| alloc::vec![1.0; h]).collect() }
    }

    /// Factor for hidden layer `layer` (1-based), unit `unit`.
    pub fn get(&self, layer: usize, unit: usize) -> f64 {
        self.alpha[layer - 1][unit]
    }

    pub fn layers(&self) -> &[Vec<f64>] {
        &self.alpha
    }

    /// Elementwise product: applying `self` then `other`.
    pub fn compose(&self, other: &NodeScaling) -> NodeScaling {
        let alpha = self
            .alpha
            .iter()
            .zip(&other.alpha)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x * y).collect())
            .collect();
        NodeScaling { alpha }
    }

    pub fn inverse(&self) -> NodeScaling {
        NodeScaling { alpha: self.alpha.iter().map(|r| r.iter().map(|a| 1.0 / a).collect()).collect() }
    }

    /// Per-node factors `beta_v`: `alpha` on hidden nodes at every time
    /// step, 1 on input, output and bias nodes.
    pub fn node_factors(&self, net: &SharedWeightNet) -> Result<Vec<f64>> {
        let info = net.rnn().ok_or(Error::NotRnn)?;
        check_shape(&info.spec, self)?;
        Ok(net
            .nodes()
            .iter()
            .map(|n| match (n.kind, n.coord) {
                (NodeKind::Internal, Some(c)) => self.get(c.layer, c.unit),
                _ => 1.0,
            })
            .collect())
    }
}

fn check_shape(spec: &RnnSpec, alpha: &NodeScaling) -> Result<()> {
    let ok = alpha.alpha.len() == spec.hidden_dims.len()
        && alpha.alpha.iter().zip(&spec.hidden_dims).all(|(r, &h)| r.len() == h);
    if ok {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what: "scaling shape",
            expected: spec.hidden_dims.iter().sum(),
            actual: alpha.alpha.iter().map(Vec::len).sum(),
        })
    }
}

/// Rescales RNN parameters:
///
/// * `W_in^1[j, k] *= a^1_j`, `W_in^i[j, k] *= a^i_j / a^{i-1}_k` for `i > 1`
/// * `W_rec^i[j, k] *= a^i_j / a^i_k`
/// * `W_out[j, k] /= a^{d-1}_k`
/// * hidden biases scale with their unit; output biases are unchanged.
pub fn apply_rescaling(spec: &RnnSpec, p: &[f64], alpha: &NodeScaling) -> Result<Vec<f64>> {
    spec.validate()?;
    check_shape(spec, alpha)?;
    let layout = RnnLayout::new(spec);
    if p.len() != layout.num_params() {
        return Err(Error::DimensionMismatch {
            what: "parameter vector",
            expected: layout.num_params(),
            actual: p.len(),
        });
    }
    let mut out = p.to_vec();
    let d = spec.depth();
    for layer in 1..d {
        let slots = layout.layer(layer);
        let w_in = slots.w_in;
        for j in 0..w_in.rows {
            let aj = alpha.get(layer, j);
            for k in 0..w_in.cols {
                let factor = if layer == 1 { aj } else { aj / alpha.get(layer - 1, k) };
                out[w_in.index(j, k)] *= factor;
            }
            if let Some(rec) = slots.w_rec {
                for k in 0..rec.cols {
                    out[rec.index(j, k)] *= aj / alpha.get(layer, k);
                }
            }
            if let Some(b) = slots.bias {
                out[b + j] *= aj;
            }
        }
    }
    let w_out = layout.w_out;
    for j in 0..w_out.rows {
        for k in 0..w_out.cols {
            out[w_out.index(j, k)] *= 1.0 / alpha.get(d - 1, k);
        }
    }
    Ok(out)
}

/// Each factor is `exp(u)` with `u` uniform in `[-log_range, log_range]`.
pub fn random_rescaling<R: Rng + ?Sized>(spec: &RnnSpec, rng: &mut R, log_range: f64) -> Result<NodeScaling> {
    if !(log_range >= 0.0 && log_range.is_finite()) {
        return Err(Error::InvalidConfig("log_range must be a nonnegative finite number".into()));
    }
    let alpha = spec
        .hidden_dims
        .iter()
        .map(|&h| (0..h).map(|_| math::exp(rng.gen_range(-log_range..=log_range))).collect())
        .collect();
    Ok(NodeScaling { alpha })
}

/// Edge multipliers `beta_v / beta_u` of a per-node scaling.
pub fn edge_multipliers(net: &SharedWeightNet, beta: &[f64]) -> Vec<f64> {
    net.edges().iter().map(|e| beta[e.dst] / beta[e.src]).collect()
}

/// Whether an edge-level scaling keeps every group of shared weights equal:
/// all multipliers within one `E_i` agree to a relative `1e-12`.
pub fn is_feasible(net: &SharedWeightNet, multipliers: &[f64]) -> bool {
    if multipliers.len() != net.num_edges() {
        return false;
    }
    (0..net.num_params()).all(|i| {
        let group = net.edges_for_param(i).unwrap_or(&[]);
        let Some(&first) = group.first() else { return true };
        let reference = multipliers[first];
        group.iter().all(|&e| {
            let m = multipliers[e];
            (m - reference).abs() <= 1e-12 * m.abs().max(reference.abs())
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compute::{forward, Activation};
    use crate::rng;

    #[test]
    fn identity_scaling_is_identity() {
        let spec = RnnSpec::new(2, &[3, 2], 2, 3).with_bias(true);
        let p: Vec<f64> = (0..RnnLayout::new(&spec).num_params()).map(|i| i as f64 * 0.1 - 1.0).collect();
        assert_eq!(apply_rescaling(&spec, &p, &NodeScaling::identity(&spec)).unwrap(), p);
    }

    #[test]
    fn single_unit_hand_value() {
        let spec = RnnSpec::single_layer(1, 1, 1, 2);
        let alpha = NodeScaling::new(&spec, alloc::vec![alloc::vec![2.0]]).unwrap();
        assert_eq!(apply_rescaling(&spec, &[1.0, 1.0, 1.0], &alpha).unwrap(), alloc::vec![2.0, 1.0, 0.5]);
    }

    #[test]
    fn two_layer_two_unit_network_keeps_its_function() {
        // Two hidden layers of two units, factors (a, b) and (c, d).
        let spec = RnnSpec::new(2, &[2, 2], 2, 4);
        let net = SharedWeightNet::build_rnn(&spec).unwrap();
        let alpha = NodeScaling::new(&spec, alloc::vec![alloc::vec![0.5, 3.0], alloc::vec![7.0, 0.2]]).unwrap();
        let p: Vec<f64> = (0..net.num_params()).map(|i| ((i * 13 % 17) as f64 - 8.0) / 9.0).collect();
        let q = apply_rescaling(&spec, &p, &alpha).unwrap();
        let x: Vec<f64> = (0..8).map(|i| (i as f64 * 0.37).sin()).collect();
        let (y, _) = forward(&net, &p, &x, Activation::Relu).unwrap();
        let (z, _) = forward(&net, &q, &x, Activation::Relu).unwrap();
        for (a, b) in y.iter().zip(&z) {
            assert!((a - b).abs() < 1e-12);
        }
        let layout = &net.rnn().unwrap().layout;
        let w_in2 = layout.layer(2).w_in;
        assert!((q[w_in2.index(0, 1)] - p[w_in2.index(0, 1)] * 7.0 / 3.0).abs() < 1e-15);
        assert!((q[layout.w_out.index(1, 1)] - p[layout.w_out.index(1, 1)] / 0.2).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_factors() {
        let spec = RnnSpec::single_layer(1, 2, 1, 2);
        assert_eq!(
            NodeScaling::new(&spec, alloc::vec![alloc::vec![1.0, 0.0]]),
            Err(Error::NonPositiveScale { layer: 1, unit: 1 })
        );
        assert!(NodeScaling::new(&spec, alloc::vec![alloc::vec![1.0]]).is_err());
        let wrong = NodeScaling::identity(&RnnSpec::single_layer(1, 3, 1, 2));
        assert!(apply_rescaling(&spec, &[0.0; 8], &wrong).is_err());
    }

    #[test]
    fn random_rescaling_ranges() {
        let spec = RnnSpec::new(1, &[4, 3], 1, 2);
        let mut r = rng::stream(7, rng::MISC, 0);
        assert_eq!(random_rescaling(&spec, &mut r, 0.0).unwrap(), NodeScaling::identity(&spec));
        let s = random_rescaling(&spec, &mut r, core::f64::consts::LN_10).unwrap();
        assert!(s.layers().iter().flatten().all(|&a| (0.1 - 1e-12..=10.0 + 1e-12).contains(&a)));
        let again = random_rescaling(&spec, &mut rng::stream(9, rng::MISC, 0), 1.0).unwrap();
        let twice = random_rescaling(&spec, &mut rng::stream(9, rng::MISC, 0), 1.0).unwrap();
        assert_eq!(again, twice);
        assert!(random_rescaling(&spec, &mut r, -1.0).is_err());
    }

    #[test]
    fn feasibility() {
        let spec = RnnSpec::single_layer(1, 1, 1, 2);
        let net = SharedWeightNet::build_rnn(&spec).unwrap();
        let alpha = NodeScaling::new(&spec, alloc::vec![alloc::vec![3.0]]).unwrap();
        let beta = alpha.node_factors(&net).unwrap();
        assert!(is_feasible(&net, &edge_multipliers(&net, &beta)));

        // Scale only the t = 1 copy of the hidden unit.
        let mut untied = alloc::vec![1.0; net.num_nodes()];
        untied[net.rnn().unwrap().nodes.hidden(1, 1, 0)] = 3.0;
        assert!(!is_feasible(&net, &edge_multipliers(&net, &untied)));

        let ff = SharedWeightNet::build_feedforward(&[2, 3, 2]).unwrap();
        let mut beta = alloc::vec![1.0; ff.num_nodes()];
        for (v, n) in ff.nodes().iter().enumerate() {
            if n.kind == NodeKind::Internal {
                beta[v] = 1.5 + v as f64;
            }
        }
        assert!(is_feasible(&ff, &edge_multipliers(&ff, &beta)));
    }
}
