//! Text formats for generated datasets.
//!
//! Every file starts with one `# key=value ...` comment line naming the task
//! and its parameters. Records follow, one per line, fields separated by
//! single spaces:
//!
//! * addition: `target i j v_1 ... v_T`, where `i < j` are the zero-based
//!   marked positions;
//! * seqclass: `label p_1 ... p_64`, pixels in row-major order;
//! * linreg: `x y`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use pathsgd_core::tasks::{self, AdditionExample, SeqClassExample};
use pathsgd_core::rng;
use rand::Rng;

use crate::error::CliError;

pub fn format_addition(length: usize, seed: u64, data: &[AdditionExample]) -> String {
    let mut s = format!("# task=addition length={length} n={} seed={seed}\n", data.len());
    for ex in data {
        let marked: Vec<usize> = (0..ex.mask.len()).filter(|&t| ex.mask[t] == 1).collect();
        let _ = write!(s, "{}", ex.target);
        for t in marked {
            let _ = write!(s, " {t}");
        }
        for v in &ex.values {
            let _ = write!(s, " {v}");
        }
        s.push('\n');
    }
    s
}

pub fn parse_addition(text: &str, path: &Path) -> Result<Vec<AdditionExample>, CliError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let bad = |msg: &str| CliError::format(path, i + 1, msg);
        let nums: Vec<f64> = line
            .split_whitespace()
            .map(|f| f.parse::<f64>().map_err(|_| bad("bad number")))
            .collect::<Result<_, _>>()?;
        if nums.len() < 5 {
            return Err(bad("too few fields"));
        }
        let values = nums[3..].to_vec();
        let mut mask = vec![0u8; values.len()];
        for &m in &nums[1..3] {
            let t = m as usize;
            if m.fract() != 0.0 || m < 0.0 || t >= values.len() {
                return Err(bad("marked position out of range"));
            }
            mask[t] = 1;
        }
        out.push(AdditionExample { values, mask, target: nums[0] });
    }
    Ok(out)
}

pub fn format_seqclass(per_class: usize, seed: u64, data: &[SeqClassExample]) -> String {
    let mut s = format!("# task=seqclass per_class={per_class} n={} seed={seed}\n", data.len());
    for ex in data {
        let _ = write!(s, "{}", ex.label);
        for p in &ex.pixels {
            let _ = write!(s, " {p}");
        }
        s.push('\n');
    }
    s
}

pub fn format_linreg(slope: f64, seed: u64, xs: &[f64]) -> String {
    let mut s = format!("# task=linreg slope={slope} n={} seed={seed}\n", xs.len());
    for x in xs {
        let _ = writeln!(s, "{x} {}", slope * x);
    }
    s
}

/// Generates and writes a dataset; returns the number of records.
pub fn generate(task: &str, length: usize, n: usize, seed: u64, slope: f64, out: &Path) -> Result<usize, CliError> {
    let mut r = rng::stream(seed, rng::TRAIN_DATA, 0);
    let text = match task {
        "addition" => {
            let data = tasks::gen_addition(length, n, &mut r)?;
            format_addition(length, seed, &data)
        }
        "seqclass" => {
            let per_class = n.div_ceil(tasks::DIGIT_CLASSES);
            let images = tasks::synthetic_digits(per_class, &mut r);
            let (data, _) = tasks::gen_seq_class(&images, 0.0, &mut r)?;
            format_seqclass(per_class, seed, &data[..n.min(data.len())])
        }
        "linreg" => {
            let xs: Vec<f64> = (0..n).map(|_| r.gen_range(-1.0..=1.0)).collect();
            format_linreg(slope, seed, &xs)
        }
        other => return Err(CliError::Config(format!("no generator for task `{other}`"))),
    };
    fs::write(out, text).map_err(|e| CliError::io(out, e))?;
    Ok(n)
}

/// Reads an addition file and checks every record's target.
pub fn check_addition_file(path: &Path) -> Result<Vec<AdditionExample>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let data = parse_addition(&text, path)?;
    match data.iter().position(|e| !e.is_consistent()) {
        Some(i) => Err(CliError::format(path, i + 2, "target is not the sum of the marked values")),
        None => Ok(data),
    }
}
