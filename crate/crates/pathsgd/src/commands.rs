//! The subcommands, callable from tests without spawning a process.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use pathsgd_core::init::{init_params, init_rnn, Init};
use pathsgd_core::pathnorm::{self, RnnSquared};
use pathsgd_core::train::{MetricRow, RunStatus, Trainer};
use pathsgd_core::verify::{self, Faults, Level, PropertyReport, VerifyOptions};
use pathsgd_core::graph::RnnLayout;
use pathsgd_core::{rng, KappaMode, RnnSpec, SharedWeightNet};

use crate::checkpoint::{Checkpoint, NetShape};
use crate::config::RunConfig;
use crate::error::CliError;
use crate::metrics::{self, MetricsWriter};

pub const METRICS_FILE: &str = "metrics.csv";
pub const KAPPA_FILE: &str = "kappa.csv";
pub const FINAL_CHECKPOINT: &str = "checkpoint_final.txt";

pub fn checkpoint_path(out_dir: &Path, step: u64) -> PathBuf {
    out_dir.join(format!("checkpoint_{step:08}.txt"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub status: RunStatus,
    pub steps_done: u64,
    pub last: Option<MetricRow>,
    pub out_dir: PathBuf,
}

/// Trains as configured, writing `metrics.csv`, checkpoints and optionally
/// `kappa.csv` into the output directory.
pub fn cmd_train(config: &RunConfig, log: &mut dyn Write) -> Result<TrainSummary, CliError> {
    let exp = config.build()?;
    let shape = match exp.net.rnn() {
        Some(info) => NetShape::Rnn(info.spec.clone()),
        None => {
            let mut dims = vec![exp.task.input_len()];
            dims.extend(&config.hidden);
            dims.push(exp.task.output_len());
            NetShape::Feedforward(dims)
        }
    };
    let out_dir = config.out_dir.clone();
    fs::create_dir_all(&out_dir).map_err(|e| CliError::io(&out_dir, e))?;
    let metrics_path = out_dir.join(METRICS_FILE);
    let kappa_path = out_dir.join(KAPPA_FILE);

    let trainer = match &config.resume {
        Some(path) => {
            let ck = Checkpoint::load(path)?;
            if ck.shape != shape {
                return Err(CliError::Config(format!("{} was written for a different network", path.display())));
            }
            if ck.seed != config.seed {
                return Err(CliError::Config(format!("{} was written with seed {}", path.display(), ck.seed)));
            }
            if ck.optimizer.config != exp.train.optimizer {
                return Err(CliError::Config(format!("{} was written with different optimizer settings", path.display())));
            }
            Trainer::resume(&exp.net, exp.task.as_ref(), exp.train, ck.params, ck.optimizer, ck.step)?
        }
        None => {
            let p = init_params(&exp.net, exp.init, &mut rng::stream(config.seed, rng::INIT, 0))?;
            Trainer::new(&exp.net, exp.task.as_ref(), exp.train, p)?
        }
    };
    let start_step = trainer.step_count();
    let mut writer = if start_step > 0 {
        MetricsWriter::resume(&metrics_path, start_step, exp.train.eval_interval)?
    } else {
        if config.export_kappa && kappa_path.exists() {
            fs::remove_file(&kappa_path).map_err(|e| CliError::io(&kappa_path, e))?;
        }
        MetricsWriter::create(&metrics_path)?
    };

    let started = Instant::now();
    let snapshot = |t: &Trainer<'_>| Checkpoint {
        shape: shape.clone(),
        seed: config.seed,
        step: t.step_count(),
        params: t.params().to_vec(),
        optimizer: t.optimizer().clone(),
    };
    let mut failure: Option<CliError> = None;
    let mut last_checkpoint: Option<Checkpoint> = None;
    let net = &exp.net;
    let mut observer = |row: &MetricRow, t: &Trainer<'_>| {
        if failure.is_some() {
            return;
        }
        let wall = if config.record_wall_time { started.elapsed().as_millis() } else { 0 };
        let mut result = writer.write(row, wall);
        if result.is_ok() && config.export_kappa {
            result = export_kappa(net, t.params(), row.step, &kappa_path);
        }
        let s = t.step_count();
        if result.is_ok() && config.checkpoint_interval > 0 && s > 0 && s % config.checkpoint_interval == 0 {
            result = snapshot(t).save(&checkpoint_path(&out_dir, s));
        }
        last_checkpoint = Some(snapshot(t));
        let _ = writeln!(
            log,
            "step {:>7}  train_loss {:.6}  train_metric {:.6}  test_metric {:.6}",
            row.step, row.train_loss, row.train_metric, row.test_metric
        );
        if let Err(e) = result {
            failure = Some(e);
        }
    };
    let outcome = trainer.run(&mut observer)?;
    if let Some(e) = failure {
        return Err(e);
    }
    // Every run ends on an evaluation except a diverged one, which keeps the
    // last healthy evaluated state.
    if let Some(ck) = last_checkpoint {
        ck.save(&out_dir.join(FINAL_CHECKPOINT))?;
    }
    let _ = writeln!(log, "status {} after {} steps", outcome.status.name(), outcome.steps_done);
    Ok(TrainSummary { status: outcome.status, steps_done: outcome.steps_done, last: outcome.history.last().copied(), out_dir })
}

fn export_kappa(net: &SharedWeightNet, p: &[f64], step: u64, path: &Path) -> Result<(), CliError> {
    let kappa = pathnorm::kappa(net, p, KappaMode::K1PlusK2)?;
    let gamma2 = pathnorm::gamma_recursive(net, p);
    metrics::append_kappa(path, step, gamma2, &kappa)
}

/// Runs the property suites and prints one line per property.
pub fn cmd_verify(level: Level, seed: u64, faults: Faults, out: &mut dyn Write) -> Result<bool, CliError> {
    let options = VerifyOptions { level, seed, faults };
    let started = Instant::now();
    let reports = verify::run(options)?;
    for r in &reports {
        let _ = writeln!(out, "{}", report_line(r));
    }
    let passed = reports.iter().all(|r| r.passed);
    let _ = writeln!(
        out,
        "{} properties, {} failed, {:.2}s",
        reports.len(),
        reports.iter().filter(|r| !r.passed).count(),
        started.elapsed().as_secs_f64()
    );
    Ok(passed)
}

pub fn report_line(r: &PropertyReport) -> String {
    let rel = if r.lower_bound { ">" } else { "<" };
    format!(
        "{}  {:<48} instances {:>3}  worst {:.3e} (need {rel} {:.1e})",
        if r.passed { "PASS" } else { "FAIL" },
        r.name,
        r.instances,
        r.worst,
        r.tolerance
    )
}

/// Largest parameter count the ratio study will allocate.
pub const RATIO_PARAM_LIMIT: usize = 50_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct RatioCell {
    pub hidden: usize,
    pub length: usize,
    pub ratios: Vec<f64>,
    /// Largest relative gap between the matrix formula and path enumeration.
    pub bruteforce_gap: Option<f64>,
}

impl RatioCell {
    pub fn mean(&self) -> f64 {
        self.ratios.iter().sum::<f64>() / self.ratios.len() as f64
    }

    /// Sample standard deviation (0 for a single seed).
    pub fn sd(&self) -> f64 {
        let n = self.ratios.len();
        if n < 2 {
            return 0.0;
        }
        let m = self.mean();
        (self.ratios.iter().map(|r| (r - m) * (r - m)).sum::<f64>() / (n - 1) as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatioStudy {
    pub hidden: Vec<usize>,
    pub lengths: Vec<usize>,
    /// Width of the input and of the output layer.
    pub io: usize,
    pub init_range: f64,
    pub seeds: u64,
    pub seed: u64,
    pub check_bruteforce: bool,
}

/// `||k2|| / ||k1||` for single-layer RNNs over a grid of widths and lengths.
/// Seed `s` of a cell draws its parameters from `rng::stream(seed + s, INIT, 0)`.
pub fn kappa_ratio_study(study: &RatioStudy) -> Result<Vec<RatioCell>, CliError> {
    if study.seeds == 0 {
        return Err(CliError::Config("need at least one seed".into()));
    }
    let mut cells = Vec::new();
    for &h in &study.hidden {
        for &t in &study.lengths {
            let spec = RnnSpec::single_layer(study.io, h, study.io, t);
            spec.validate()?;
            let layout = RnnLayout::new(&spec);
            if layout.num_params() > RATIO_PARAM_LIMIT {
                return Err(CliError::Config(format!(
                    "H={h} with io={} needs {} parameters, above the limit of {RATIO_PARAM_LIMIT}",
                    study.io,
                    layout.num_params()
                )));
            }
            let mut ratios = Vec::new();
            let mut gap: Option<f64> = None;
            for s in 0..study.seeds {
                let init = Init::uniform(-study.init_range, study.init_range);
                let p = init_rnn(&layout, init, &mut rng::stream(study.seed + s, rng::INIT, 0))?;
                let sq = RnnSquared::new(&spec, &p)?;
                let k1 = sq.kappa1(&spec);
                let k2 = sq.kappa2(&spec);
                let kv = pathsgd_core::KappaVector { k1, k2 };
                ratios.push(kv.ratio()?);
                if study.check_bruteforce {
                    let net = SharedWeightNet::build_rnn(&spec)?;
                    let brute = pathnorm::kappa2_bruteforce(&net, &p)?;
                    let g = verify::max_rel_diff(&kv.k2, &brute, 1e-300);
                    gap = Some(gap.map_or(g, |x: f64| x.max(g)));
                }
            }
            cells.push(RatioCell { hidden: h, length: t, ratios, bruteforce_gap: gap });
        }
    }
    Ok(cells)
}

pub const RATIO_CSV_HEADER: [&str; 7] = ["hidden", "length", "seeds", "mean_ratio", "sd_ratio", "mean_pair_sum_ratio", "bruteforce_gap"];

/// `pair_sum` divides by 4, i.e. counts each pair of shared edges on a path once.
pub fn print_ratio_table(cells: &[RatioCell], out: &mut dyn Write) {
    let _ = writeln!(out, "{:>6} {:>6} {:>12} {:>12} {:>12} {:>12}", "H", "T", "mean", "sd", "pair_sum", "brute_gap");
    for c in cells {
        let gap = c.bruteforce_gap.map(|g| format!("{g:.2e}")).unwrap_or_else(|| "-".into());
        let _ = writeln!(
            out,
            "{:>6} {:>6} {:>12.4e} {:>12.4e} {:>12.4e} {:>12}",
            c.hidden,
            c.length,
            c.mean(),
            c.sd(),
            c.mean() / 4.0,
            gap
        );
    }
}

pub fn write_ratio_csv(cells: &[RatioCell], path: &Path) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(RATIO_CSV_HEADER)?;
    for c in cells {
        w.write_record([
            c.hidden.to_string(),
            c.length.to_string(),
            c.ratios.len().to_string(),
            c.mean().to_string(),
            c.sd().to_string(),
            (c.mean() / 4.0).to_string(),
            c.bruteforce_gap.map(|g| g.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}
