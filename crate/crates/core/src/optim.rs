//! Parameter updates: SGD, Adam, Path-SGD and Path-Adam.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::graph::SharedWeightNet;
use crate::math;
use crate::pathnorm;

/// Which curvature terms feed the path preconditioner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KappaMode {
    #[default]
    K1,
    K1PlusK2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OptimizerKind {
    Sgd,
    Adam,
    #[default]
    PathSgd,
    PathAdam,
}

impl OptimizerKind {
    pub fn uses_kappa(self) -> bool {
        matches!(self, OptimizerKind::PathSgd | OptimizerKind::PathAdam)
    }

    pub fn uses_moments(self) -> bool {
        matches!(self, OptimizerKind::Adam | OptimizerKind::PathAdam)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub kappa_mode: KappaMode,
    /// Lower bound applied to `kappa` before dividing.
    pub eps_floor: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_adam: f64,
    /// Recompute `kappa` every this many steps.
    pub kappa_every: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::PathSgd,
            lr: 1e-3,
            kappa_mode: KappaMode::K1,
            eps_floor: 1e-8,
            beta1: 0.9,
            beta2: 0.999,
            eps_adam: 1e-8,
            kappa_every: 1,
        }
    }
}

impl OptimizerConfig {
    pub fn new(kind: OptimizerKind, lr: f64) -> Self {
        Self { kind, lr, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidConfig("learning rate must be positive".into()));
        }
        if !(self.eps_floor > 0.0) {
            return Err(Error::InvalidConfig("kappa floor must be positive".into()));
        }
        if self.kappa_every == 0 {
            return Err(Error::InvalidConfig("kappa_every must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps_adam > 0.0) {
            return Err(Error::InvalidConfig("Adam hyper-parameters out of range".into()));
        }
        Ok(())
    }
}

fn check_finite(v: &[f64], what: &'static str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

fn check_len(expected: usize, actual: usize, what: &'static str) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { what, expected, actual })
    }
}

/// `p - lr * g`
pub fn sgd_step(p: &[f64], g: &[f64], lr: f64) -> Result<Vec<f64>> {
    check_len(p.len(), g.len(), "gradient")?;
    check_finite(g, "gradient")?;
    Ok(p.iter().zip(g).map(|(pi, gi)| pi - lr * gi).collect())
}

/// `g_i / max(kappa_i, eps)`
pub fn precondition(g: &[f64], kappa: &[f64], eps_floor: f64) -> Result<Vec<f64>> {
    check_len(g.len(), kappa.len(), "kappa")?;
    check_finite(g, "gradient")?;
    check_finite(kappa, "kappa")?;
    Ok(g.iter().zip(kappa).map(|(gi, ki)| gi / ki.max(eps_floor)).collect())
}

/// `p_i - lr / max(kappa_i, eps) * g_i` with a given `kappa`.
pub fn preconditioned_step(p: &[f64], g: &[f64], kappa: &[f64], lr: f64, eps_floor: f64) -> Result<Vec<f64>> {
    check_len(p.len(), g.len(), "gradient")?;
    check_len(p.len(), kappa.len(), "kappa")?;
    check_finite(g, "gradient")?;
    check_finite(kappa, "kappa")?;
    Ok(p.iter()
        .zip(g)
        .zip(kappa)
        .map(|((pi, gi), ki)| pi - (lr / ki.max(eps_floor)) * gi)
        .collect())
}

/// One Path-SGD update; `kappa` is evaluated at `p` itself.
pub fn path_sgd_step(
    net: &SharedWeightNet,
    p: &[f64],
    g: &[f64],
    lr: f64,
    mode: KappaMode,
    eps_floor: f64,
) -> Result<Vec<f64>> {
    let kappa = pathnorm::kappa(net, p, mode)?.for_mode(mode);
    preconditioned_step(p, g, &kappa, lr, eps_floor)
}

/// Adam moments.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self { m: vec![0.0; len], v: vec![0.0; len], t: 0 }
    }
}

/// Bias-corrected Adam step on an arbitrary direction vector.
pub fn adam_step(p: &[f64], direction: &[f64], state: &AdamState, config: &OptimizerConfig) -> Result<(Vec<f64>, AdamState)> {
    check_len(p.len(), direction.len(), "gradient")?;
    check_len(p.len(), state.m.len(), "first moment")?;
    check_len(p.len(), state.v.len(), "second moment")?;
    check_finite(direction, "gradient")?;
    let t = state.t + 1;
    let (b1, b2) = (config.beta1, config.beta2);
    let c1 = 1.0 - libm::pow(b1, t as f64);
    let c2 = 1.0 - libm::pow(b2, t as f64);
    let mut m = state.m.clone();
    let mut v = state.v.clone();
    let mut out = Vec::with_capacity(p.len());
    for i in 0..p.len() {
        let g = direction[i];
        m[i] = b1 * m[i] + (1.0 - b1) * g;
        v[i] = b2 * v[i] + (1.0 - b2) * g * g;
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        out.push(p[i] - config.lr * m_hat / (math::sqrt(v_hat) + config.eps_adam));
    }
    Ok((out, AdamState { m, v, t }))
}

/// Adam driven by the path-preconditioned gradient `g / max(kappa, eps)`.
pub fn path_adam_step(
    net: &SharedWeightNet,
    p: &[f64],
    g: &[f64],
    state: &AdamState,
    config: &OptimizerConfig,
) -> Result<(Vec<f64>, AdamState)> {
    let kappa = pathnorm::kappa(net, p, config.kappa_mode)?.for_mode(config.kappa_mode);
    let direction = precondition(g, &kappa, config.eps_floor)?;
    adam_step(p, &direction, state, config)
}

/// Mutable optimizer state carried across training steps.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub config: OptimizerConfig,
    pub adam: Option<AdamState>,
    /// The preconditioner from the last recomputation, when `kappa_every > 1`.
    pub cached_kappa: Option<Vec<f64>>,
    pub steps: u64,
}

impl OptimizerState {
    pub fn new(config: OptimizerConfig, num_params: usize) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            adam: config.kind.uses_moments().then(|| AdamState::new(num_params)),
            cached_kappa: None,
            steps: 0,
        })
    }

    /// The preconditioner for the next step, recomputed from `p` when due.
    pub fn current_kappa(&mut self, net: &SharedWeightNet, p: &[f64]) -> Result<Vec<f64>> {
        let due = self.steps % self.config.kappa_every as u64 == 0;
        match (&self.cached_kappa, due) {
            (Some(k), false) => Ok(k.clone()),
            _ => {
                let mode = self.config.kappa_mode;
                let k = pathnorm::kappa(net, p, mode)?.for_mode(mode);
                if self.config.kappa_every > 1 {
                    self.cached_kappa = Some(k.clone());
                }
                Ok(k)
            }
        }
    }

    /// Applies one update in place.
    pub fn step(&mut self, net: &SharedWeightNet, p: &mut Vec<f64>, g: &[f64]) -> Result<()> {
        let cfg = self.config;
        let next = match cfg.kind {
            OptimizerKind::Sgd => sgd_step(p, g, cfg.lr)?,
            OptimizerKind::PathSgd => {
                let kappa = self.current_kappa(net, p)?;
                preconditioned_step(p, g, &kappa, cfg.lr, cfg.eps_floor)?
            }
            OptimizerKind::Adam | OptimizerKind::PathAdam => {
                let direction = if cfg.kind == OptimizerKind::PathAdam {
                    let kappa = self.current_kappa(net, p)?;
                    precondition(g, &kappa, cfg.eps_floor)?
                } else {
                    g.to_vec()
                };
                let state = self.adam.get_or_insert_with(|| AdamState::new(p.len()));
                let (next, updated) = adam_step(p, &direction, state, &cfg)?;
                *state = updated;
                next
            }
        };
        *p = next;
        self.steps += 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::RnnSpec;

    #[test]
    fn sgd_examples() {
        assert_eq!(sgd_step(&[1.0, 1.0], &[1.0, -1.0], 0.1).unwrap(), vec![0.9, 1.1]);
        assert_eq!(sgd_step(&[0.3, -2.0], &[0.0, 0.0], 0.1).unwrap(), vec![0.3, -2.0]);
        assert_eq!(sgd_step(&[0.3, -2.0], &[5.0, 1.0], 0.0).unwrap(), vec![0.3, -2.0]);
        assert_eq!(sgd_step(&[0.3], &[f64::NAN], 0.1), Err(Error::NonFinite("gradient")));
    }

    #[test]
    fn unit_kappa_is_sgd_bit_for_bit() {
        let p = [0.123456789, -1.5, 3.25e-3];
        let g = [0.7, 1e-9, -42.0];
        let a = sgd_step(&p, &g, 0.037).unwrap();
        let b = preconditioned_step(&p, &g, &[1.0; 3], 0.037, 1e-8).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn path_sgd_on_unit_rnn() {
        let net = crate::SharedWeightNet::build_rnn(&RnnSpec::single_layer(1, 1, 1, 2)).unwrap();
        let next = path_sgd_step(&net, &[1.0; 3], &[0.3, 0.1, 0.3], 1.0, KappaMode::K1, 1e-8).unwrap();
        assert!(next.iter().all(|&v| (v - 0.9).abs() < 1e-15), "{next:?}");
        let same = path_sgd_step(&net, &[1.0; 3], &[0.0; 3], 1.0, KappaMode::K1PlusK2, 1e-8).unwrap();
        assert_eq!(same, vec![1.0; 3]);
    }

    #[test]
    fn kappa_floor_applies() {
        let next = preconditioned_step(&[1.0], &[1e-9], &[0.0], 1.0, 1e-8).unwrap();
        assert!((next[0] - 0.9).abs() < 1e-12);
        assert!(preconditioned_step(&[1.0], &[1.0], &[f64::INFINITY], 1.0, 1e-8).is_err());
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let cfg = OptimizerConfig::new(OptimizerKind::Adam, 0.01);
        let (p, state) = adam_step(&[1.0, 1.0, 1.0], &[0.5, -2.0, 1e-3], &AdamState::new(3), &cfg).unwrap();
        assert_eq!(state.t, 1);
        for (pi, sign) in p.iter().zip([-1.0, 1.0, -1.0]) {
            assert!((pi - (1.0 + sign * 0.01)).abs() < 1e-6, "{pi}");
        }
    }

    #[test]
    fn adam_two_steps_closed_form() {
        let cfg = OptimizerConfig::new(OptimizerKind::Adam, 0.1);
        let g = 0.4;
        let (p1, s1) = adam_step(&[0.0], &[g], &AdamState::new(1), &cfg).unwrap();
        let (p2, _) = adam_step(&p1, &[g], &s1, &cfg).unwrap();
        // Constant g: m_t = (1 - b1^t) g and v_t = (1 - b2^t) g^2, so each
        // bias-corrected step is lr * g / (|g| + eps).
        let step = 0.1 * g / (g + 1e-8);
        assert!((p2[0] - (-2.0 * step)).abs() < 1e-12);
    }

    #[test]
    fn path_adam_with_unit_kappa_is_adam() {
        // Single-edge net: kappa = 1 for any weight.
        let net = SharedWeightNet::build_feedforward(&[1, 1]).unwrap();
        let cfg = OptimizerConfig::new(OptimizerKind::PathAdam, 0.05);
        let (a, sa) = path_adam_step(&net, &[0.7], &[0.3], &AdamState::new(1), &cfg).unwrap();
        let (b, sb) = adam_step(&[0.7], &[0.3], &AdamState::new(1), &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(sa, sb);
    }

    #[test]
    fn kappa_every_caches() {
        let net = SharedWeightNet::build_rnn(&RnnSpec::single_layer(1, 1, 1, 3)).unwrap();
        let cfg = OptimizerConfig { kappa_every: 2, ..OptimizerConfig::new(OptimizerKind::PathSgd, 0.1) };
        let mut state = OptimizerState::new(cfg, 3).unwrap();
        let mut p = vec![1.0; 3];
        state.step(&net, &mut p, &[0.1, 0.1, 0.1]).unwrap();
        let cached = state.cached_kappa.clone().unwrap();
        assert_eq!(cached, vec![6.0, 4.0, 6.0]);
        assert_eq!(state.current_kappa(&net, &p).unwrap(), cached);
        state.step(&net, &mut p, &[0.0; 3]).unwrap();
        assert_ne!(state.current_kappa(&net, &p).unwrap(), cached);
    }

    #[test]
    fn config_validation() {
        assert!(OptimizerConfig::new(OptimizerKind::Sgd, 0.0).validate().is_err());
        let bad = OptimizerConfig { eps_floor: 0.0, ..OptimizerConfig::default() };
        assert!(bad.validate().is_err());
        assert!(OptimizerConfig::default().validate().is_ok());
    }
}
