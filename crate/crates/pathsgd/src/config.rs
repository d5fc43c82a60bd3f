//! Run configuration.
//!
//! A config file is a flat TOML table: one `key = value` per line, `#`
//! comments, strings quoted, lists in brackets. Unknown keys are errors.
//! Values are layered: defaults, then the file, then the `PATHSGD_OUT_DIR`
//! environment variable (for `out_dir` only), then command-line overrides.
//!
//! ```text
//! task = "addition"
//! length = 40
//! hidden = [32]
//! optimizer = "path_sgd"
//! lr = 1e-3
//! steps = 20000
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use pathsgd_core::init::Init;
use pathsgd_core::tasks::{AdditionTask, CharLmCorpus, CharLmTask, LinRegTask, SeqClassTask, Task};
use pathsgd_core::train::TrainConfig;
use pathsgd_core::{Activation, KappaMode, OptimizerConfig, OptimizerKind, RnnSpec, SharedWeightNet};

use crate::error::CliError;

pub const OUT_DIR_ENV: &str = "PATHSGD_OUT_DIR";

/// Text used when a character-level task names no corpus file.
pub const BUNDLED_CORPUS: &str = include_str!("../data/de_finibus_1.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Addition,
    Seqclass,
    Charlm,
    Linreg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerName {
    Sgd,
    Adam,
    PathSgd,
    PathAdam,
}

impl OptimizerName {
    pub fn kind(self) -> OptimizerKind {
        match self {
            OptimizerName::Sgd => OptimizerKind::Sgd,
            OptimizerName::Adam => OptimizerKind::Adam,
            OptimizerName::PathSgd => OptimizerKind::PathSgd,
            OptimizerName::PathAdam => OptimizerKind::PathAdam,
        }
    }

    pub fn from_kind(kind: OptimizerKind) -> Self {
        match kind {
            OptimizerKind::Sgd => OptimizerName::Sgd,
            OptimizerKind::Adam => OptimizerName::Adam,
            OptimizerKind::PathSgd => OptimizerName::PathSgd,
            OptimizerKind::PathAdam => OptimizerName::PathAdam,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            OptimizerName::Sgd => "sgd",
            OptimizerName::Adam => "adam",
            OptimizerName::PathSgd => "path_sgd",
            OptimizerName::PathAdam => "path_adam",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KappaModeName {
    K1,
    K1PlusK2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationName {
    Relu,
    Tanh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitName {
    /// `U[-init_range, init_range]`, recurrent matrices `U[-recurrent_range, recurrent_range]`.
    Uniform,
    /// Identity recurrent matrices.
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub task: TaskKind,
    /// Sequence length `T` (unroll length for `charlm`).
    pub length: usize,
    pub hidden: Vec<usize>,
    pub bias: bool,
    pub activation: ActivationName,
    /// Text file for `charlm`; the bundled corpus when absent.
    pub corpus: Option<PathBuf>,
    /// Train/valid/test fractions of the corpus.
    pub split: [f64; 3],
    pub per_class: usize,
    pub test_fraction: f64,
    pub n_eval: usize,
    pub n_test: usize,
    pub slope: f64,

    pub optimizer: OptimizerName,
    pub lr: f64,
    pub kappa_mode: KappaModeName,
    pub eps_floor: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_adam: f64,
    pub kappa_every: usize,

    pub init: InitName,
    pub init_range: f64,
    pub recurrent_range: f64,

    pub batch_size: usize,
    pub steps: u64,
    pub eval_interval: u64,
    /// Write a checkpoint every this many steps; 0 writes only the final one.
    pub checkpoint_interval: u64,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub target_metric: Option<f64>,
    pub divergence_threshold: f64,
    pub record_kappa_ratio: bool,
    /// Fill the `wall_ms` column; off by default so metrics are byte-reproducible.
    pub record_wall_time: bool,
    /// Write `kappa.csv` with both curvature terms at every evaluation.
    pub export_kappa: bool,
    /// Continue from this checkpoint.
    pub resume: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            task: TaskKind::Addition,
            length: 40,
            hidden: vec![32],
            bias: true,
            activation: ActivationName::Relu,
            corpus: None,
            split: [0.8, 0.1, 0.1],
            per_class: 40,
            test_fraction: 0.2,
            n_eval: 500,
            n_test: 1000,
            slope: 2.0,
            optimizer: OptimizerName::PathSgd,
            lr: 1e-3,
            kappa_mode: KappaModeName::K1,
            eps_floor: 1e-8,
            beta1: 0.9,
            beta2: 0.999,
            eps_adam: 1e-8,
            kappa_every: 1,
            init: InitName::Uniform,
            init_range: 0.01,
            recurrent_range: 0.01,
            batch_size: 32,
            steps: 1000,
            eval_interval: 100,
            checkpoint_interval: 0,
            seed: 0,
            out_dir: PathBuf::from("runs/default"),
            target_metric: None,
            divergence_threshold: 1e6,
            record_kappa_ratio: false,
            record_wall_time: false,
            export_kappa: false,
            resume: None,
        }
    }
}

/// Everything a training run needs, built from a [`RunConfig`].
pub struct Experiment {
    pub task: Box<dyn Task>,
    pub net: SharedWeightNet,
    pub train: TrainConfig,
    pub init: Init,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.message().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("flat config always serializes")
    }

    /// Applies one `key=value` override. The value is read as a TOML value
    /// and falls back to a plain string, so `task=charlm` and
    /// `hidden=[64]` both work.
    pub fn set(&mut self, assignment: &str) -> Result<(), CliError> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("expected key=value, got `{assignment}`")))?;
        let key = key.trim();
        let value = value.trim();
        let parsed: toml::Value = match toml::from_str::<toml::Table>(&format!("v = {value}")) {
            Ok(mut t) => t.remove("v").expect("key present"),
            Err(_) => toml::Value::String(value.to_string()),
        };
        let mut table = toml::Table::try_from(&*self).expect("flat config always serializes");
        table.insert(key.to_string(), parsed);
        *self = table.try_into().map_err(|e: toml::de::Error| CliError::Config(format!("{key}: {}", e.message())))?;
        Ok(())
    }

    /// Takes `out_dir` from the environment when set.
    pub fn apply_env(&mut self) {
        if let Some(dir) = std::env::var_os(OUT_DIR_ENV) {
            if !dir.is_empty() {
                self.out_dir = PathBuf::from(dir);
            }
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: &str| Err(CliError::Config(msg.to_string()));
        if self.task != TaskKind::Linreg {
            if self.hidden.is_empty() || self.hidden.contains(&0) {
                return bad("hidden must list at least one positive width");
            }
            if self.length < 1 || (self.task == TaskKind::Addition && self.length < 2) {
                return bad("length too small for this task");
            }
        }
        if !(self.init_range >= 0.0 && self.recurrent_range >= 0.0) {
            return bad("initialization ranges must be nonnegative");
        }
        if self.steps > 0 && self.eval_interval == 0 {
            return bad("eval_interval must be positive");
        }
        for path in [&self.corpus, &self.resume].into_iter().flatten() {
            if !path.exists() {
                return Err(CliError::Config(format!("{} does not exist", path.display())));
            }
        }
        self.train_config().validate()?;
        Ok(())
    }

    pub fn optimizer_config(&self) -> OptimizerConfig {
        OptimizerConfig {
            kind: self.optimizer.kind(),
            lr: self.lr,
            kappa_mode: match self.kappa_mode {
                KappaModeName::K1 => KappaMode::K1,
                KappaModeName::K1PlusK2 => KappaMode::K1PlusK2,
            },
            eps_floor: self.eps_floor,
            beta1: self.beta1,
            beta2: self.beta2,
            eps_adam: self.eps_adam,
            kappa_every: self.kappa_every,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            optimizer: self.optimizer_config(),
            activation: match self.activation {
                ActivationName::Relu => Activation::Relu,
                ActivationName::Tanh => Activation::Tanh,
            },
            batch_size: self.batch_size,
            steps: self.steps,
            eval_interval: self.eval_interval.max(1),
            seed: self.seed,
            divergence_threshold: self.divergence_threshold,
            target_metric: self.target_metric,
            record_kappa_ratio: self.record_kappa_ratio,
        }
    }

    pub fn init_scheme(&self) -> Init {
        let other = (-self.init_range, self.init_range);
        match self.init {
            InitName::Uniform => Init::Uniform { recurrent: (-self.recurrent_range, self.recurrent_range), other },
            InitName::Identity => Init::IdentityRecurrent { other },
        }
    }

    pub fn build_task(&self) -> Result<Box<dyn Task>, CliError> {
        Ok(match self.task {
            TaskKind::Addition => Box::new(AdditionTask::new(self.length, self.n_eval, self.n_test, self.seed)?),
            TaskKind::Seqclass => Box::new(SeqClassTask::new(self.per_class, self.test_fraction, self.seed)?),
            TaskKind::Linreg => Box::new(LinRegTask::new(self.slope, self.n_test, self.seed)),
            TaskKind::Charlm => {
                let text = match &self.corpus {
                    Some(path) => fs::read_to_string(path).map_err(|e| CliError::io(path, e))?,
                    None => BUNDLED_CORPUS.to_string(),
                };
                let [a, b, c] = self.split;
                let corpus = CharLmCorpus::from_text(&text, (a, b, c), self.length)?;
                Box::new(CharLmTask::new(corpus, self.n_eval, self.seed))
            }
        })
    }

    /// The recurrent architecture, or `None` for the feedforward regression task.
    pub fn rnn_spec(&self, task: &dyn Task) -> Option<RnnSpec> {
        task.rnn_spec(&self.hidden, self.bias)
    }

    pub fn build(&self) -> Result<Experiment, CliError> {
        self.validate()?;
        let task = self.build_task()?;
        let net = match self.rnn_spec(task.as_ref()) {
            Some(spec) => SharedWeightNet::build_rnn(&spec)?,
            None => {
                let mut dims = vec![task.input_len()];
                dims.extend(&self.hidden);
                dims.push(task.output_len());
                SharedWeightNet::build_feedforward(&dims)?
            }
        };
        Ok(Experiment { task, net, train: self.train_config(), init: self.init_scheme() })
    }
}
