//! Parameter initialization.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{ParamRole, RnnLayout, SharedWeightNet};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// Independent uniform draws; recurrent matrices may use their own range.
    Uniform { recurrent: (f64, f64), other: (f64, f64) },
    /// Identity recurrent matrices, uniform everything else.
    IdentityRecurrent { other: (f64, f64) },
}

impl Init {
    /// The same uniform range everywhere.
    pub fn uniform(low: f64, high: f64) -> Self {
        Init::Uniform { recurrent: (low, high), other: (low, high) }
    }

    /// Identity recurrence with `[-0.01, 0.01]` elsewhere.
    pub fn irnn() -> Self {
        Init::IdentityRecurrent { other: (-0.01, 0.01) }
    }
}

fn draw<R: Rng + ?Sized>(rng: &mut R, (low, high): (f64, f64)) -> f64 {
    if low == high {
        low
    } else {
        rng.gen_range(low..high)
    }
}

fn check(init: Init) -> Result<[(f64, f64); 2]> {
    let ranges = match init {
        Init::Uniform { recurrent, other } => [recurrent, other],
        Init::IdentityRecurrent { other } => [other, other],
    };
    for (low, high) in ranges {
        if !(low <= high && low.is_finite() && high.is_finite()) {
            return Err(Error::InvalidConfig("initialization range must satisfy low <= high".into()));
        }
    }
    Ok(ranges)
}

/// Draws initial parameters in parameter-index order. Biases start at 0.
/// Nets without an RNN layout treat every parameter as non-recurrent.
pub fn init_params<R: Rng + ?Sized>(net: &SharedWeightNet, init: Init, rng: &mut R) -> Result<Vec<f64>> {
    if let Some(info) = net.rnn() {
        return init_rnn(&info.layout, init, rng);
    }
    let other = check(init)?[1];
    Ok((0..net.num_params()).map(|_| draw(rng, other)).collect())
}

/// [`init_params`] for an RNN layout, without building the unrolled graph.
pub fn init_rnn<R: Rng + ?Sized>(layout: &RnnLayout, init: Init, rng: &mut R) -> Result<Vec<f64>> {
    let [_, other] = check(init)?;
    let mut p = vec![0.0; layout.num_params()];
    for (i, v) in p.iter_mut().enumerate() {
        *v = match (layout.role(i), init) {
            (Some(ParamRole::Recurrent { row, col, .. }), Init::IdentityRecurrent { .. }) => {
                if row == col {
                    1.0
                } else {
                    0.0
                }
            }
            (Some(ParamRole::Recurrent { .. }), Init::Uniform { recurrent, .. }) => draw(rng, recurrent),
            (Some(ParamRole::HiddenBias { .. } | ParamRole::OutputBias { .. }), _) => 0.0,
            _ => draw(rng, other),
        };
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::RnnSpec;
    use crate::rng;

    #[test]
    fn irnn_layout() {
        let net = SharedWeightNet::build_rnn(&RnnSpec::single_layer(2, 3, 1, 4).with_bias(true)).unwrap();
        let p = init_params(&net, Init::irnn(), &mut rng::stream(1, rng::INIT, 0)).unwrap();
        let layout = &net.rnn().unwrap().layout;
        let rec = layout.layer(1).w_rec.unwrap();
        for j in 0..3 {
            for k in 0..3 {
                assert_eq!(p[rec.index(j, k)], if j == k { 1.0 } else { 0.0 });
            }
        }
        assert!(p[layout.w_out.range()].iter().all(|v| v.abs() <= 0.01));
        assert_eq!(p[layout.layer(1).bias.unwrap()], 0.0);
    }

    #[test]
    fn uniform_ranges_respected() {
        let net = SharedWeightNet::build_rnn(&RnnSpec::single_layer(3, 5, 2, 3)).unwrap();
        let init = Init::Uniform { recurrent: (-0.01, 0.01), other: (-0.2, 0.2) };
        let p = init_params(&net, init, &mut rng::stream(2, rng::INIT, 0)).unwrap();
        let rec = net.rnn().unwrap().layout.layer(1).w_rec.unwrap();
        assert!(p[rec.range()].iter().all(|v| v.abs() <= 0.01));
        assert!(p.iter().all(|v| v.abs() <= 0.2));
        assert!(init_params(&net, Init::uniform(1.0, -1.0), &mut rng::stream(2, rng::INIT, 0)).is_err());
    }
}
