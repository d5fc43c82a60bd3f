//! The training loop.
//!
//! Each step draws a minibatch from `rng::stream(seed, TRAIN_BATCH, step)`,
//! so a run restarted from a checkpoint at step `s` sees exactly the batches
//! the uninterrupted run would have seen.

use alloc::vec::Vec;

use crate::compute::{self, Activation, Example};
use crate::dense::DenseRnn;
use crate::error::{Error, Result};
use crate::graph::SharedWeightNet;
use crate::optim::{OptimizerConfig, OptimizerState};
use crate::pathnorm;
use crate::rng;
use crate::tasks::Task;

/// Forward and gradient evaluation, dense when the net is an unrolled RNN.
#[derive(Debug, Clone, Copy)]
pub enum Engine<'a> {
    Graph(&'a SharedWeightNet),
    Dense(DenseRnn<'a>),
}

impl<'a> Engine<'a> {
    pub fn for_net(net: &'a SharedWeightNet) -> Self {
        match DenseRnn::new(net) {
            Ok(d) => Engine::Dense(d),
            Err(_) => Engine::Graph(net),
        }
    }

    pub fn outputs(&self, p: &[f64], x: &[f64], activation: Activation) -> Result<Vec<f64>> {
        match self {
            Engine::Graph(net) => compute::forward(net, p, x, activation).map(|(y, _)| y),
            Engine::Dense(d) => d.forward(p, x, activation),
        }
    }

    pub fn loss_and_grad(&self, p: &[f64], batch: &[Example], activation: Activation) -> Result<(f64, Vec<f64>)> {
        match self {
            Engine::Graph(net) => compute::loss_and_grad(net, p, batch, activation),
            Engine::Dense(d) => d.loss_and_grad(p, batch, activation),
        }
    }

    /// Mean loss and task metric over a fixed set of examples.
    pub fn evaluate(&self, p: &[f64], examples: &[Example], task: &dyn Task, activation: Activation) -> Result<(f64, f64)> {
        if examples.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let mut outputs = Vec::with_capacity(examples.len());
        let mut total = 0.0;
        for ex in examples {
            let y = self.outputs(p, &ex.input, activation)?;
            total += compute::loss(&y, &ex.target)?;
            outputs.push(y);
        }
        let targets: Vec<_> = examples.iter().map(|e| e.target.clone()).collect();
        let metric = task.metric().evaluate(&outputs, &targets)?;
        Ok((total / examples.len() as f64, metric))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub optimizer: OptimizerConfig,
    pub activation: Activation,
    pub batch_size: usize,
    pub steps: u64,
    pub eval_interval: u64,
    pub seed: u64,
    /// Training stops as diverged when a loss is non-finite or above this.
    pub divergence_threshold: f64,
    /// Stop as converged once the test metric is at or below this.
    pub target_metric: Option<f64>,
    pub record_kappa_ratio: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            optimizer: OptimizerConfig::default(),
            activation: Activation::Relu,
            batch_size: 32,
            steps: 1000,
            eval_interval: 100,
            seed: 0,
            divergence_threshold: 1e6,
            target_metric: None,
            record_kappa_ratio: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.optimizer.validate()?;
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch size must be positive".into()));
        }
        if self.eval_interval == 0 {
            return Err(Error::InvalidConfig("eval interval must be positive".into()));
        }
        if !(self.divergence_threshold > 0.0) {
            return Err(Error::InvalidConfig("divergence threshold must be positive".into()));
        }
        Ok(())
    }
}

/// One row of the metrics history.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricRow {
    pub step: u64,
    pub train_loss: f64,
    pub train_metric: f64,
    pub test_metric: f64,
    pub kappa_ratio: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Converged,
    BudgetExhausted,
    Diverged,
}

impl RunStatus {
    pub fn name(self) -> &'static str {
        match self {
            RunStatus::Converged => "converged",
            RunStatus::BudgetExhausted => "budget_exhausted",
            RunStatus::Diverged => "diverged",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub status: RunStatus,
    pub history: Vec<MetricRow>,
    pub params: Vec<f64>,
    pub steps_done: u64,
}

/// A training run that can be stepped, inspected and resumed.
pub struct Trainer<'a> {
    net: &'a SharedWeightNet,
    engine: Engine<'a>,
    task: &'a dyn Task,
    config: TrainConfig,
    params: Vec<f64>,
    optimizer: OptimizerState,
    step: u64,
}

impl<'a> Trainer<'a> {
    pub fn new(net: &'a SharedWeightNet, task: &'a dyn Task, config: TrainConfig, params: Vec<f64>) -> Result<Self> {
        let optimizer = OptimizerState::new(config.optimizer, net.num_params())?;
        Self::resume(net, task, config, params, optimizer, 0)
    }

    /// Continues from saved parameters and optimizer state at `step`.
    pub fn resume(
        net: &'a SharedWeightNet,
        task: &'a dyn Task,
        config: TrainConfig,
        params: Vec<f64>,
        optimizer: OptimizerState,
        step: u64,
    ) -> Result<Self> {
        config.validate()?;
        let engine = Engine::for_net(net);
        let (inputs, outputs) = match engine {
            Engine::Dense(d) => (d.num_inputs(), d.num_outputs()),
            Engine::Graph(n) => (n.input_nodes().len(), n.output_nodes().len()),
        };
        if inputs != task.input_len() {
            return Err(Error::DimensionMismatch { what: "task inputs", expected: inputs, actual: task.input_len() });
        }
        if outputs != task.output_len() {
            return Err(Error::DimensionMismatch { what: "task outputs", expected: outputs, actual: task.output_len() });
        }
        if params.len() != net.num_params() {
            return Err(Error::DimensionMismatch {
                what: "parameter vector",
                expected: net.num_params(),
                actual: params.len(),
            });
        }
        if params.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("parameters"));
        }
        Ok(Self { net, engine, task, config, params, optimizer, step })
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn optimizer(&self) -> &OptimizerState {
        &self.optimizer
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    /// The minibatch used by step `step`.
    pub fn batch_for(&self, step: u64) -> Vec<Example> {
        self.task.sample_batch(&mut rng::stream(self.config.seed, rng::TRAIN_BATCH, step), self.config.batch_size)
    }

    pub fn evaluate(&self) -> Result<MetricRow> {
        let act = self.config.activation;
        let (train_loss, train_metric) = self.engine.evaluate(&self.params, self.task.train_eval(), self.task, act)?;
        let (_, test_metric) = self.engine.evaluate(&self.params, self.task.test(), self.task, act)?;
        let kappa_ratio = if self.config.record_kappa_ratio {
            pathnorm::kappa_ratio(self.net, &self.params).ok()
        } else {
            None
        };
        Ok(MetricRow { step: self.step, train_loss, train_metric, test_metric, kappa_ratio })
    }

    fn diverged(&self, loss: f64) -> bool {
        !loss.is_finite() || loss > self.config.divergence_threshold
    }

    /// One update. Returns the minibatch loss, or `None` when the loss or the
    /// new parameters diverged; parameters are left untouched in that case.
    pub fn step_once(&mut self) -> Result<Option<f64>> {
        let batch = self.batch_for(self.step);
        let (loss, g) = self.engine.loss_and_grad(&self.params, &batch, self.config.activation)?;
        if self.diverged(loss) || g.iter().any(|v| !v.is_finite()) {
            return Ok(None);
        }
        let mut next = self.params.clone();
        let mut optimizer = self.optimizer.clone();
        optimizer.step(self.net, &mut next, &g)?;
        if next.iter().any(|v| !v.is_finite()) {
            return Ok(None);
        }
        self.params = next;
        self.optimizer = optimizer;
        self.step += 1;
        Ok(Some(loss))
    }

    /// Runs until the step budget, convergence or divergence. `observer` sees
    /// every recorded row together with the trainer state at that point.
    /// A fresh run records the initial row at step 0; a resumed one does not.
    pub fn run(mut self, observer: &mut dyn FnMut(&MetricRow, &Trainer<'_>)) -> Result<TrainOutcome> {
        let mut history = Vec::new();
        let mut record = |t: &Trainer<'_>, history: &mut Vec<MetricRow>| -> Result<(bool, bool)> {
            let row = t.evaluate()?;
            if t.diverged(row.train_loss) || !row.test_metric.is_finite() {
                return Ok((true, false));
            }
            history.push(row);
            observer(&row, t);
            let converged = t.config.target_metric.is_some_and(|target| row.test_metric <= target);
            Ok((false, converged))
        };
        let status = 'run: {
            if self.step == 0 {
                match record(&self, &mut history)? {
                    (true, _) => break 'run RunStatus::Diverged,
                    (_, true) => break 'run RunStatus::Converged,
                    _ => {}
                }
            }
            while self.step < self.config.steps {
                if self.step_once()?.is_none() {
                    break 'run RunStatus::Diverged;
                }
                if self.step % self.config.eval_interval == 0 || self.step == self.config.steps {
                    match record(&self, &mut history)? {
                        (true, _) => break 'run RunStatus::Diverged,
                        (_, true) => break 'run RunStatus::Converged,
                        _ => {}
                    }
                }
            }
            RunStatus::BudgetExhausted
        };
        Ok(TrainOutcome { status, history, steps_done: self.step, params: self.params })
    }
}

/// Trains from `params` and returns the history and final parameters.
pub fn train_loop(net: &SharedWeightNet, task: &dyn Task, config: TrainConfig, params: Vec<f64>) -> Result<TrainOutcome> {
    Trainer::new(net, task, config, params)?.run(&mut |_, _| {})
}
