//! Checkpoint files.
//!
//! A checkpoint is line-oriented text: a `pathsgd-checkpoint <version>`
//! line, `key value` header lines describing the network and optimizer,
//! then `params` followed by `m` values one per line. Optional `adam <t>`
//! (first then second moments, `2m` lines) and `cached_kappa` (`m` lines)
//! blocks follow, and the file ends with `end`. Every float is written with
//! 17 significant digits, which reads back to the identical `f64`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use pathsgd_core::optim::AdamState;
use pathsgd_core::{KappaMode, OptimizerConfig, OptimizerState, Readout, RnnSpec, SharedWeightNet};

use crate::config::OptimizerName;
use crate::error::CliError;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NetShape {
    Rnn(RnnSpec),
    Feedforward(Vec<usize>),
}

impl NetShape {
    pub fn build(&self) -> Result<SharedWeightNet, CliError> {
        Ok(match self {
            NetShape::Rnn(spec) => SharedWeightNet::build_rnn(spec)?,
            NetShape::Feedforward(dims) => SharedWeightNet::build_feedforward(dims)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub shape: NetShape,
    pub seed: u64,
    /// Number of completed training steps.
    pub step: u64,
    pub params: Vec<f64>,
    pub optimizer: OptimizerState,
}

fn list(v: &[usize]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn float(x: f64) -> String {
    format!("{x:.16e}")
}

impl Checkpoint {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let cfg = &self.optimizer.config;
        let _ = writeln!(s, "pathsgd-checkpoint {FORMAT_VERSION}");
        let _ = writeln!(s, "m {}", self.params.len());
        match &self.shape {
            NetShape::Rnn(spec) => {
                let _ = writeln!(s, "net rnn");
                let _ = writeln!(s, "input_dim {}", spec.input_dim);
                let _ = writeln!(s, "hidden {}", list(&spec.hidden_dims));
                let _ = writeln!(s, "output_dim {}", spec.output_dim);
                let _ = writeln!(s, "length {}", spec.length);
                let _ = writeln!(s, "bias {}", spec.bias);
                let readout = match spec.readout {
                    Readout::EveryStep => "every",
                    Readout::FinalStep => "final",
                };
                let _ = writeln!(s, "readout {readout}");
            }
            NetShape::Feedforward(dims) => {
                let _ = writeln!(s, "net feedforward");
                let _ = writeln!(s, "layers {}", list(dims));
            }
        }
        let _ = writeln!(s, "optimizer {}", OptimizerName::from_kind(cfg.kind).as_str());
        let _ = writeln!(s, "lr {}", float(cfg.lr));
        let mode = match cfg.kappa_mode {
            KappaMode::K1 => "k1",
            KappaMode::K1PlusK2 => "k1_plus_k2",
        };
        let _ = writeln!(s, "kappa_mode {mode}");
        let _ = writeln!(s, "eps_floor {}", float(cfg.eps_floor));
        let _ = writeln!(s, "beta1 {}", float(cfg.beta1));
        let _ = writeln!(s, "beta2 {}", float(cfg.beta2));
        let _ = writeln!(s, "eps_adam {}", float(cfg.eps_adam));
        let _ = writeln!(s, "kappa_every {}", cfg.kappa_every);
        let _ = writeln!(s, "seed {}", self.seed);
        let _ = writeln!(s, "step {}", self.step);
        let _ = writeln!(s, "optimizer_steps {}", self.optimizer.steps);
        let block = |s: &mut String, v: &[f64]| {
            for x in v {
                let _ = writeln!(s, "{}", float(*x));
            }
        };
        let _ = writeln!(s, "params");
        block(&mut s, &self.params);
        if let Some(adam) = &self.optimizer.adam {
            let _ = writeln!(s, "adam {}", adam.t);
            block(&mut s, &adam.m);
            block(&mut s, &adam.v);
        }
        if let Some(k) = &self.optimizer.cached_kappa {
            let _ = writeln!(s, "cached_kappa");
            block(&mut s, k);
        }
        let _ = writeln!(s, "end");
        s
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        fs::write(path, self.to_text()).map_err(|e| CliError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self, CliError> {
        Reader { lines: text.lines().enumerate().peekable(), path, last: 0 }.checkpoint()
    }
}

struct Reader<'a, I: Iterator<Item = (usize, &'a str)>> {
    lines: std::iter::Peekable<I>,
    path: &'a Path,
    last: usize,
}

impl<'a, I: Iterator<Item = (usize, &'a str)>> Reader<'a, I> {
    fn err(&self, msg: impl Into<String>) -> CliError {
        CliError::format(self.path, self.last + 1, msg)
    }

    fn line(&mut self) -> Result<&'a str, CliError> {
        match self.lines.next() {
            Some((i, l)) => {
                self.last = i;
                Ok(l.trim())
            }
            None => Err(self.err("unexpected end of file")),
        }
    }

    fn field(&mut self, key: &str) -> Result<&'a str, CliError> {
        let line = self.line()?;
        match line.split_once(' ') {
            Some((k, v)) if k == key => Ok(v.trim()),
            _ => Err(self.err(format!("expected `{key} <value>`, found `{line}`"))),
        }
    }

    fn parsed<T: std::str::FromStr>(&mut self, key: &str) -> Result<T, CliError> {
        let v = self.field(key)?;
        v.parse().map_err(|_| self.err(format!("bad value for {key}: `{v}`")))
    }

    fn usizes(&mut self, key: &str) -> Result<Vec<usize>, CliError> {
        let v = self.field(key)?;
        if v.is_empty() {
            return Ok(Vec::new());
        }
        v.split(',')
            .map(|x| x.trim().parse().map_err(|_| self.err(format!("bad list for {key}: `{v}`"))))
            .collect()
    }

    fn floats(&mut self, n: usize) -> Result<Vec<f64>, CliError> {
        (0..n)
            .map(|_| {
                let l = self.line()?;
                l.parse::<f64>().map_err(|_| self.err(format!("bad number `{l}`")))
            })
            .collect()
    }

    fn checkpoint(mut self) -> Result<Checkpoint, CliError> {
        let version: u32 = self.parsed("pathsgd-checkpoint")?;
        if version != FORMAT_VERSION {
            return Err(self.err(format!("unsupported checkpoint version {version}")));
        }
        let m: usize = self.parsed("m")?;
        let shape = match self.field("net")? {
            "rnn" => {
                let input_dim = self.parsed("input_dim")?;
                let hidden = self.usizes("hidden")?;
                let output_dim = self.parsed("output_dim")?;
                let length = self.parsed("length")?;
                let bias = self.parsed("bias")?;
                let readout = match self.field("readout")? {
                    "every" => Readout::EveryStep,
                    "final" => Readout::FinalStep,
                    other => return Err(self.err(format!("unknown readout `{other}`"))),
                };
                NetShape::Rnn(RnnSpec::new(input_dim, &hidden, output_dim, length).with_bias(bias).with_readout(readout))
            }
            "feedforward" => NetShape::Feedforward(self.usizes("layers")?),
            other => return Err(self.err(format!("unknown net kind `{other}`"))),
        };
        let kind = match self.field("optimizer")? {
            "sgd" => OptimizerName::Sgd,
            "adam" => OptimizerName::Adam,
            "path_sgd" => OptimizerName::PathSgd,
            "path_adam" => OptimizerName::PathAdam,
            other => return Err(self.err(format!("unknown optimizer `{other}`"))),
        }
        .kind();
        let lr = self.parsed("lr")?;
        let kappa_mode = match self.field("kappa_mode")? {
            "k1" => KappaMode::K1,
            "k1_plus_k2" => KappaMode::K1PlusK2,
            other => return Err(self.err(format!("unknown kappa mode `{other}`"))),
        };
        let config = OptimizerConfig {
            kind,
            lr,
            kappa_mode,
            eps_floor: self.parsed("eps_floor")?,
            beta1: self.parsed("beta1")?,
            beta2: self.parsed("beta2")?,
            eps_adam: self.parsed("eps_adam")?,
            kappa_every: self.parsed("kappa_every")?,
        };
        let seed = self.parsed("seed")?;
        let step = self.parsed("step")?;
        let opt_steps = self.parsed("optimizer_steps")?;
        if self.line()? != "params" {
            return Err(self.err("expected `params`"));
        }
        let params = self.floats(m)?;
        let mut optimizer = OptimizerState::new(config, m)?;
        optimizer.steps = opt_steps;
        optimizer.adam = None;
        loop {
            let line = self.line()?;
            match line.split_once(' ').unwrap_or((line, "")) {
                ("adam", t) => {
                    let t = t.parse().map_err(|_| self.err("bad adam step count"))?;
                    let m_vec = self.floats(m)?;
                    let v_vec = self.floats(m)?;
                    optimizer.adam = Some(AdamState { m: m_vec, v: v_vec, t });
                }
                ("cached_kappa", "") => optimizer.cached_kappa = Some(self.floats(m)?),
                ("end", "") => break,
                _ => return Err(self.err(format!("unexpected `{line}`"))),
            }
        }
        if kind.uses_moments() && optimizer.adam.is_none() {
            return Err(self.err("missing adam block"));
        }
        Ok(Checkpoint { shape, seed, step, params, optimizer })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use pathsgd_core::OptimizerKind;

    fn sample() -> Checkpoint {
        let spec = RnnSpec::new(2, &[3, 2], 1, 4).with_bias(true).with_readout(Readout::FinalStep);
        let mut cfg = OptimizerConfig::new(OptimizerKind::PathAdam, 1e-3);
        cfg.kappa_every = 3;
        let mut optimizer = OptimizerState::new(cfg, 5).unwrap();
        optimizer.adam = Some(AdamState { m: vec![0.1, -1e-300, 3.0, 0.0, 1.0 / 3.0], v: vec![1e-17; 5], t: 9 });
        optimizer.cached_kappa = Some(vec![std::f64::consts::PI; 5]);
        optimizer.steps = 9;
        Checkpoint {
            shape: NetShape::Rnn(spec),
            seed: 42,
            step: 9,
            params: vec![0.1 + 0.2, -2.5e-8, f64::MIN_POSITIVE, 1e300, -0.0],
            optimizer,
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let ck = sample();
        let back = Checkpoint::parse(&ck.to_text(), Path::new("x")).unwrap();
        assert_eq!(back, ck);
        for (a, b) in back.params.iter().zip(&ck.params) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn feedforward_shape_round_trip() {
        let mut ck = sample();
        ck.shape = NetShape::Feedforward(vec![1, 4, 1]);
        ck.optimizer = OptimizerState::new(OptimizerConfig::new(OptimizerKind::Sgd, 0.1), 5).unwrap();
        assert_eq!(Checkpoint::parse(&ck.to_text(), Path::new("x")).unwrap(), ck);
    }

    #[test]
    fn truncated_file_is_rejected() {
        let text = sample().to_text();
        let cut = &text[..text.len() / 2];
        assert!(matches!(Checkpoint::parse(cut, Path::new("x")), Err(CliError::Format { .. })));
    }
}
