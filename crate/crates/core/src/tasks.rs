//! Synthetic tasks, datasets and metrics.
//!
//! Inputs of sequence tasks are laid out time-major: step `t` occupies
//! `x[t * input_dim..(t + 1) * input_dim]`, matching the input node order of
//! [`SharedWeightNet::build_rnn`](crate::SharedWeightNet::build_rnn).

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::LN_2;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::compute::{Example, Target};
use crate::error::{Error, Result};
use crate::graph::{Readout, RnnSpec};
use crate::math;
use crate::rng;

/// One instance of the addition problem.
#[derive(Debug, Clone, PartialEq)]
pub struct AdditionExample {
    pub values: Vec<f64>,
    pub mask: Vec<u8>,
    pub target: f64,
}

impl AdditionExample {
    /// `(value_t, mask_t)` per step; the target sits on the single output.
    pub fn to_example(&self) -> Example {
        let input = self.values.iter().zip(&self.mask).flat_map(|(&v, &m)| [v, f64::from(m)]).collect();
        Example { input, target: Target::scalar(0, self.target) }
    }

    /// Whether the mask has exactly two ones and the target is their sum.
    pub fn is_consistent(&self) -> bool {
        let marked: Vec<f64> = self.values.iter().zip(&self.mask).filter(|(_, &m)| m == 1).map(|(&v, _)| v).collect();
        self.mask.iter().all(|&m| m <= 1)
            && self.values.len() == self.mask.len()
            && self.values.iter().all(|v| (0.0..=1.0).contains(v))
            && marked.len() == 2
            && marked[0] + marked[1] == self.target
    }
}

/// Values uniform in `[0, 1)`; one marker uniform in `[0, T/2)` and one in `[T/2, T)`.
pub fn gen_addition<R: Rng + ?Sized>(length: usize, n: usize, rng: &mut R) -> Result<Vec<AdditionExample>> {
    if length < 2 {
        return Err(Error::InvalidSpec("the addition problem needs T >= 2".into()));
    }
    let half = length / 2;
    Ok((0..n)
        .map(|_| {
            let values: Vec<f64> = (0..length).map(|_| rng.gen::<f64>()).collect();
            let first = rng.gen_range(0..half);
            let second = rng.gen_range(half..length);
            let mut mask = vec![0u8; length];
            mask[first] = 1;
            mask[second] = 1;
            let target = values[first] + values[second];
            AdditionExample { values, mask, target }
        })
        .collect())
}

/// A single-channel image, pixels row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f64>,
    pub label: usize,
}

/// One flattened image.
#[derive(Debug, Clone, PartialEq)]
pub struct SeqClassExample {
    pub pixels: Vec<f64>,
    pub label: usize,
}

impl SeqClassExample {
    /// One pixel per step; logits over `classes` at the last step.
    pub fn to_example(&self, classes: usize) -> Example {
        Example { input: self.pixels.clone(), target: Target::Classes { width: classes, groups: vec![(0, self.label)] } }
    }
}

pub const DIGIT_CLASSES: usize = 10;

const GLYPHS: [[&str; 7]; DIGIT_CLASSES] = [
    ["01110", "10001", "10011", "10101", "11001", "10001", "01110"],
    ["00100", "01100", "00100", "00100", "00100", "00100", "01110"],
    ["01110", "10001", "00001", "00010", "00100", "01000", "11111"],
    ["11111", "00010", "00100", "00010", "00001", "10001", "01110"],
    ["00010", "00110", "01010", "10010", "11111", "00010", "00010"],
    ["11111", "10000", "11110", "00001", "00001", "10001", "01110"],
    ["00110", "01000", "10000", "11110", "10001", "10001", "01110"],
    ["11111", "00001", "00010", "00100", "01000", "01000", "01000"],
    ["01110", "10001", "10001", "01110", "10001", "10001", "01110"],
    ["01110", "10001", "10001", "01111", "00001", "00010", "01100"],
];

/// Noisy 8x8 renderings of 5x7 digit glyphs at a random offset.
pub fn synthetic_digits<R: Rng + ?Sized>(per_class: usize, rng: &mut R) -> Vec<Image> {
    let mut images = Vec::with_capacity(per_class * DIGIT_CLASSES);
    for _ in 0..per_class {
        for (label, glyph) in GLYPHS.iter().enumerate() {
            let dx = rng.gen_range(0..=3);
            let dy = rng.gen_range(0..=1);
            let mut pixels = vec![0.0; 64];
            for (r, px) in pixels.iter_mut().enumerate() {
                let (y, x) = (r / 8, r % 8);
                let on = y >= dy
                    && x >= dx
                    && y - dy < 7
                    && x - dx < 5
                    && glyph[y - dy].as_bytes()[x - dx] == b'1';
                *px = if on { rng.gen_range(0.7..1.0) } else { rng.gen_range(0.0..0.15) };
            }
            images.push(Image { width: 8, height: 8, pixels, label });
        }
    }
    images
}

/// Flattens images row-major and splits each class by `test_fraction`
/// (rounded down), so both splits keep the label distribution.
pub fn gen_seq_class<R: Rng + ?Sized>(
    images: &[Image],
    test_fraction: f64,
    rng: &mut R,
) -> Result<(Vec<SeqClassExample>, Vec<SeqClassExample>)> {
    let Some(first) = images.first() else {
        return Err(Error::InvalidSpec("no images".into()));
    };
    if first.width != first.height || first.width == 0 {
        return Err(Error::InvalidSpec("images must be square".into()));
    }
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(Error::InvalidConfig("test fraction must be in [0, 1)".into()));
    }
    for img in images {
        if img.width != first.width || img.height != first.height {
            return Err(Error::InvalidSpec("inconsistent image sizes".into()));
        }
        if img.pixels.len() != img.width * img.height {
            return Err(Error::DimensionMismatch {
                what: "image pixels",
                expected: img.width * img.height,
                actual: img.pixels.len(),
            });
        }
    }
    let classes = images.iter().map(|i| i.label).max().unwrap_or(0) + 1;
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in 0..classes {
        let mut idx: Vec<usize> = (0..images.len()).filter(|&i| images[i].label == class).collect();
        idx.shuffle(rng);
        let n_test = (idx.len() as f64 * test_fraction) as usize;
        for (pos, &i) in idx.iter().enumerate() {
            let ex = SeqClassExample { pixels: images[i].pixels.clone(), label: class };
            if pos < n_test {
                test.push(ex);
            } else {
                train.push(ex);
            }
        }
    }
    Ok((train, test))
}

/// A character corpus split into contiguous train, validation and test streams.
#[derive(Debug, Clone, PartialEq)]
pub struct CharLmCorpus {
    pub alphabet: Vec<char>,
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
    pub unroll: usize,
}

impl CharLmCorpus {
    /// Split sizes are `floor(n * f)` for train and validation; the test
    /// split takes the rest. The alphabet is the sorted set of all characters.
    pub fn from_text(text: &str, fractions: (f64, f64, f64), unroll: usize) -> Result<Self> {
        let chars: Vec<char> = text.chars().collect();
        if chars.is_empty() {
            return Err(Error::InvalidSpec("empty corpus".into()));
        }
        if unroll == 0 {
            return Err(Error::InvalidSpec("unroll length must be positive".into()));
        }
        let (a, b, c) = fractions;
        if !(a > 0.0 && b >= 0.0 && c > 0.0 && (a + b + c - 1.0).abs() < 1e-9) {
            return Err(Error::InvalidConfig("split fractions must be positive and sum to 1".into()));
        }
        let alphabet: Vec<char> = chars.iter().copied().collect::<BTreeSet<char>>().into_iter().collect();
        let ids: Vec<usize> = chars.iter().map(|ch| alphabet.binary_search(ch).unwrap_or(0)).collect();
        let n = ids.len();
        let n_train = (n as f64 * a) as usize;
        let n_valid = (n as f64 * b) as usize;
        let corpus = Self {
            alphabet,
            train: ids[..n_train].to_vec(),
            valid: ids[n_train..n_train + n_valid].to_vec(),
            test: ids[n_train + n_valid..].to_vec(),
            unroll,
        };
        if corpus.train.len() <= unroll || corpus.test.len() <= unroll {
            return Err(Error::InvalidSpec("corpus too short for the unroll length".into()));
        }
        Ok(corpus)
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet.len()
    }

    /// One-hot inputs for `stream[start..start + T]`, next-character targets at every step.
    pub fn window(&self, stream: &[usize], start: usize) -> Example {
        let v = self.alphabet_size();
        let t = self.unroll;
        let mut input = vec![0.0; t * v];
        let mut groups = Vec::with_capacity(t);
        for s in 0..t {
            input[s * v + stream[start + s]] = 1.0;
            groups.push((s * v, stream[start + s + 1]));
        }
        Example { input, target: Target::Classes { width: v, groups } }
    }

    /// Non-overlapping windows covering `stream`.
    pub fn tiled_windows(&self, stream: &[usize]) -> Vec<Example> {
        let t = self.unroll;
        if stream.len() <= t {
            return Vec::new();
        }
        (0..(stream.len() - 1) / t).map(|w| self.window(stream, w * t)).collect()
    }

    /// A window starting uniformly at random in `stream`.
    pub fn random_window<R: Rng + ?Sized>(&self, stream: &[usize], rng: &mut R) -> Example {
        self.window(stream, rng.gen_range(0..stream.len() - self.unroll))
    }
}

/// How predictions are scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Mse,
    ErrorRate,
    Bpc,
}

impl Metric {
    pub fn evaluate(self, outputs: &[Vec<f64>], targets: &[Target]) -> Result<f64> {
        match self {
            Metric::Mse => metric_mse(outputs, targets),
            Metric::ErrorRate => metric_error_rate(outputs, targets),
            Metric::Bpc => metric_bpc(outputs, targets),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::Mse => "mse",
            Metric::ErrorRate => "error_rate",
            Metric::Bpc => "bpc",
        }
    }
}

fn check_pairs(outputs: &[Vec<f64>], targets: &[Target]) -> Result<()> {
    if outputs.len() != targets.len() {
        return Err(Error::DimensionMismatch { what: "targets", expected: outputs.len(), actual: targets.len() });
    }
    if outputs.is_empty() {
        return Err(Error::EmptyBatch);
    }
    Ok(())
}

/// Mean squared error over every supervised value.
pub fn metric_mse(outputs: &[Vec<f64>], targets: &[Target]) -> Result<f64> {
    check_pairs(outputs, targets)?;
    let (mut total, mut count) = (0.0, 0usize);
    for (y, t) in outputs.iter().zip(targets) {
        let Target::Values { outputs: idx, values } = t else {
            return Err(Error::InvalidSpec("mse needs value targets".into()));
        };
        for (&i, &v) in idx.iter().zip(values) {
            let yi = *y.get(i).ok_or(Error::DimensionMismatch { what: "outputs", expected: i + 1, actual: y.len() })?;
            total += (yi - v) * (yi - v);
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::EmptyBatch);
    }
    Ok(total / count as f64)
}

fn for_each_group(
    outputs: &[Vec<f64>],
    targets: &[Target],
    mut f: impl FnMut(&[f64], usize),
) -> Result<usize> {
    check_pairs(outputs, targets)?;
    let mut count = 0;
    for (y, t) in outputs.iter().zip(targets) {
        let Target::Classes { width, groups } = t else {
            return Err(Error::InvalidSpec("classification metrics need class targets".into()));
        };
        for &(start, class) in groups {
            if start + width > y.len() {
                return Err(Error::DimensionMismatch { what: "outputs", expected: start + width, actual: y.len() });
            }
            if class >= *width {
                return Err(Error::ClassOutOfRange { class, classes: *width });
            }
            f(&y[start..start + width], class);
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::EmptyBatch);
    }
    Ok(count)
}

/// Fraction of groups whose argmax (first maximum on ties) is not the label.
pub fn metric_error_rate(outputs: &[Vec<f64>], targets: &[Target]) -> Result<f64> {
    let mut wrong = 0usize;
    let count = for_each_group(outputs, targets, |z, class| {
        let mut best = 0;
        for (k, &v) in z.iter().enumerate() {
            if v > z[best] {
                best = k;
            }
        }
        if best != class {
            wrong += 1;
        }
    })?;
    Ok(wrong as f64 / count as f64)
}

/// Mean of `-log2 softmax(z)[label]` over groups.
pub fn metric_bpc(outputs: &[Vec<f64>], targets: &[Target]) -> Result<f64> {
    let mut total = 0.0;
    let count = for_each_group(outputs, targets, |z, class| {
        total += math::log_sum_exp(z) - z[class];
    })?;
    Ok(total / count as f64 / LN_2)
}

/// A supervised problem with a training sampler and fixed evaluation sets.
pub trait Task {
    fn name(&self) -> &str;
    /// Length of one input vector.
    fn input_len(&self) -> usize;
    /// Number of outputs the network must produce.
    fn output_len(&self) -> usize;
    fn metric(&self) -> Metric;
    /// A training minibatch drawn from `rng`.
    fn sample_batch(&self, rng: &mut ChaCha8Rng, batch_size: usize) -> Vec<Example>;
    /// Fixed training examples used for reporting.
    fn train_eval(&self) -> &[Example];
    fn test(&self) -> &[Example];
    /// The recurrent architecture this task expects, for given hidden sizes.
    fn rnn_spec(&self, hidden: &[usize], bias: bool) -> Option<RnnSpec>;
}

/// The addition problem with freshly sampled training sequences.
#[derive(Debug, Clone)]
pub struct AdditionTask {
    pub length: usize,
    train_eval: Vec<Example>,
    test: Vec<Example>,
}

impl AdditionTask {
    pub fn new(length: usize, n_eval: usize, n_test: usize, seed: u64) -> Result<Self> {
        let to_ex = |v: Vec<AdditionExample>| v.iter().map(AdditionExample::to_example).collect();
        let test = to_ex(gen_addition(length, n_test, &mut rng::stream(seed, rng::TEST_DATA, 0))?);
        let train_eval = to_ex(gen_addition(length, n_eval, &mut rng::stream(seed, rng::TRAIN_EVAL_DATA, 0))?);
        Ok(Self { length, train_eval, test })
    }
}

impl Task for AdditionTask {
    fn name(&self) -> &str {
        "addition"
    }
    fn input_len(&self) -> usize {
        2 * self.length
    }
    fn output_len(&self) -> usize {
        1
    }
    fn metric(&self) -> Metric {
        Metric::Mse
    }
    fn sample_batch(&self, rng: &mut ChaCha8Rng, batch_size: usize) -> Vec<Example> {
        gen_addition(self.length, batch_size, rng)
            .map(|v| v.iter().map(AdditionExample::to_example).collect())
            .unwrap_or_default()
    }
    fn train_eval(&self) -> &[Example] {
        &self.train_eval
    }
    fn test(&self) -> &[Example] {
        &self.test
    }
    fn rnn_spec(&self, hidden: &[usize], bias: bool) -> Option<RnnSpec> {
        Some(RnnSpec::new(2, hidden, 1, self.length).with_bias(bias).with_readout(Readout::FinalStep))
    }
}

/// Sequential classification of synthetic 8x8 digits, one pixel per step.
#[derive(Debug, Clone)]
pub struct SeqClassTask {
    train: Vec<Example>,
    train_eval: Vec<Example>,
    test: Vec<Example>,
}

impl SeqClassTask {
    pub fn new(per_class: usize, test_fraction: f64, seed: u64) -> Result<Self> {
        let mut r = rng::stream(seed, rng::TRAIN_DATA, 0);
        let images = synthetic_digits(per_class, &mut r);
        let (train, test) = gen_seq_class(&images, test_fraction, &mut r)?;
        if train.is_empty() || test.is_empty() {
            return Err(Error::InvalidConfig("both splits must be nonempty".into()));
        }
        let train: Vec<Example> = train.iter().map(|e| e.to_example(DIGIT_CLASSES)).collect();
        let test = test.iter().map(|e| e.to_example(DIGIT_CLASSES)).collect();
        Ok(Self { train_eval: train.clone(), train, test })
    }
}

impl Task for SeqClassTask {
    fn name(&self) -> &str {
        "seqclass"
    }
    fn input_len(&self) -> usize {
        64
    }
    fn output_len(&self) -> usize {
        DIGIT_CLASSES
    }
    fn metric(&self) -> Metric {
        Metric::ErrorRate
    }
    fn sample_batch(&self, rng: &mut ChaCha8Rng, batch_size: usize) -> Vec<Example> {
        (0..batch_size).map(|_| self.train[rng.gen_range(0..self.train.len())].clone()).collect()
    }
    fn train_eval(&self) -> &[Example] {
        &self.train_eval
    }
    fn test(&self) -> &[Example] {
        &self.test
    }
    fn rnn_spec(&self, hidden: &[usize], bias: bool) -> Option<RnnSpec> {
        Some(RnnSpec::new(1, hidden, DIGIT_CLASSES, 64).with_bias(bias).with_readout(Readout::FinalStep))
    }
}

/// Next-character prediction on random training windows.
#[derive(Debug, Clone)]
pub struct CharLmTask {
    pub corpus: CharLmCorpus,
    train_eval: Vec<Example>,
    test: Vec<Example>,
}

impl CharLmTask {
    /// Reports on `n_eval` random training windows and on the tiled test split.
    pub fn new(corpus: CharLmCorpus, n_eval: usize, seed: u64) -> Self {
        let mut r = rng::stream(seed, rng::TRAIN_EVAL_DATA, 0);
        let train_eval = (0..n_eval).map(|_| corpus.random_window(&corpus.train, &mut r)).collect();
        let test = corpus.tiled_windows(&corpus.test);
        Self { corpus, train_eval, test }
    }
}

impl Task for CharLmTask {
    fn name(&self) -> &str {
        "charlm"
    }
    fn input_len(&self) -> usize {
        self.corpus.unroll * self.corpus.alphabet_size()
    }
    fn output_len(&self) -> usize {
        self.input_len()
    }
    fn metric(&self) -> Metric {
        Metric::Bpc
    }
    fn sample_batch(&self, rng: &mut ChaCha8Rng, batch_size: usize) -> Vec<Example> {
        (0..batch_size).map(|_| self.corpus.random_window(&self.corpus.train, rng)).collect()
    }
    fn train_eval(&self) -> &[Example] {
        &self.train_eval
    }
    fn test(&self) -> &[Example] {
        &self.test
    }
    fn rnn_spec(&self, hidden: &[usize], bias: bool) -> Option<RnnSpec> {
        let v = self.corpus.alphabet_size();
        Some(RnnSpec::new(v, hidden, v, self.corpus.unroll).with_bias(bias))
    }
}

/// `y = slope * x` with `x` uniform in `[-1, 1]`, for a single-edge network.
#[derive(Debug, Clone)]
pub struct LinRegTask {
    pub slope: f64,
    train: Vec<Example>,
    test: Vec<Example>,
}

impl LinRegTask {
    pub fn new(slope: f64, n: usize, seed: u64) -> Self {
        let make = |r: &mut ChaCha8Rng| -> Vec<Example> {
            (0..n)
                .map(|_| {
                    let x: f64 = r.gen_range(-1.0..=1.0);
                    Example { input: vec![x], target: Target::scalar(0, slope * x) }
                })
                .collect()
        };
        let train = make(&mut rng::stream(seed, rng::TRAIN_DATA, 0));
        let test = make(&mut rng::stream(seed, rng::TEST_DATA, 0));
        Self { slope, train, test }
    }
}

impl Task for LinRegTask {
    fn name(&self) -> &str {
        "linreg"
    }
    fn input_len(&self) -> usize {
        1
    }
    fn output_len(&self) -> usize {
        1
    }
    fn metric(&self) -> Metric {
        Metric::Mse
    }
    fn sample_batch(&self, rng: &mut ChaCha8Rng, batch_size: usize) -> Vec<Example> {
        (0..batch_size).map(|_| self.train[rng.gen_range(0..self.train.len())].clone()).collect()
    }
    fn train_eval(&self) -> &[Example] {
        &self.train
    }
    fn test(&self) -> &[Example] {
        &self.test
    }
    fn rnn_spec(&self, _hidden: &[usize], _bias: bool) -> Option<RnnSpec> {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::String;

    #[test]
    fn addition_examples_are_consistent_and_seeded() {
        let data = gen_addition(10, 200, &mut rng::stream(1, rng::TRAIN_DATA, 0)).unwrap();
        assert_eq!(data.len(), 200);
        for ex in &data {
            assert!(ex.is_consistent());
            let first = ex.mask.iter().position(|&m| m == 1).unwrap();
            let last = ex.mask.iter().rposition(|&m| m == 1).unwrap();
            assert!(first < 5 && last >= 5);
        }
        assert_eq!(data, gen_addition(10, 200, &mut rng::stream(1, rng::TRAIN_DATA, 0)).unwrap());
        assert!(gen_addition(1, 1, &mut rng::stream(1, rng::TRAIN_DATA, 0)).is_err());
        let two = gen_addition(2, 5, &mut rng::stream(2, rng::TRAIN_DATA, 0)).unwrap();
        assert!(two.iter().all(|e| e.mask == vec![1, 1]));
    }

    #[test]
    fn addition_input_layout() {
        let ex = AdditionExample { values: vec![0.25, 0.5, 0.75], mask: vec![1, 0, 1], target: 1.0 };
        assert_eq!(ex.to_example().input, vec![0.25, 1.0, 0.5, 0.0, 0.75, 1.0]);
        assert!(ex.is_consistent());
    }

    #[test]
    fn constant_one_predictor_has_variance_level_mse() {
        let data = gen_addition(20, 200_000, &mut rng::stream(3, rng::TRAIN_DATA, 0)).unwrap();
        let outputs: Vec<Vec<f64>> = data.iter().map(|_| vec![1.0]).collect();
        let targets: Vec<Target> = data.iter().map(|e| Target::scalar(0, e.target)).collect();
        let mse = metric_mse(&outputs, &targets).unwrap();
        assert!((mse - 1.0 / 6.0).abs() < 3e-3, "{mse}");
    }

    #[test]
    fn seq_class_flattening_and_split() {
        let img = Image { width: 2, height: 2, pixels: vec![1.0, 2.0, 3.0, 4.0], label: 0 };
        let (train, test) = gen_seq_class(&[img.clone()], 0.0, &mut rng::stream(0, 0, 0)).unwrap();
        assert_eq!(train[0].pixels, vec![1.0, 2.0, 3.0, 4.0]);
        assert!(test.is_empty());

        let images = synthetic_digits(20, &mut rng::stream(4, rng::TRAIN_DATA, 0));
        assert!(images.iter().all(|i| i.pixels.len() == 64));
        let (train, test) = gen_seq_class(&images, 0.25, &mut rng::stream(4, rng::TRAIN_DATA, 1)).unwrap();
        for c in 0..DIGIT_CLASSES {
            assert_eq!(train.iter().filter(|e| e.label == c).count(), 15);
            assert_eq!(test.iter().filter(|e| e.label == c).count(), 5);
        }

        let odd = Image { width: 3, height: 3, pixels: vec![0.0; 9], label: 1 };
        assert!(gen_seq_class(&[img.clone(), odd], 0.5, &mut rng::stream(0, 0, 0)).is_err());
        let rect = Image { width: 2, height: 1, pixels: vec![0.0; 2], label: 0 };
        assert!(gen_seq_class(&[rect], 0.5, &mut rng::stream(0, 0, 0)).is_err());
    }

    #[test]
    fn corpus_splits() {
        let text: String = (0..1000).map(|i| if i % 3 == 0 { 'a' } else { 'b' }).collect();
        let c = CharLmCorpus::from_text(&text, (0.8, 0.1, 0.1), 10).unwrap();
        assert_eq!((c.train.len(), c.valid.len(), c.test.len()), (800, 100, 100));
        assert_eq!(c.alphabet, vec!['a', 'b']);
        assert_eq!(c.tiled_windows(&c.test).len(), 9);
        assert!(CharLmCorpus::from_text("", (0.8, 0.1, 0.1), 10).is_err());
        assert!(CharLmCorpus::from_text("abc", (0.8, 0.1, 0.1), 10).is_err());
    }

    #[test]
    fn corpus_window_targets_are_next_characters() {
        let c = CharLmCorpus::from_text("abcabcabcabcabcabcabcabcabcabc", (0.6, 0.0, 0.4), 3).unwrap();
        let ex = c.window(&c.train, 1);
        assert_eq!(ex.input, vec![0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0]);
        assert_eq!(ex.target, Target::Classes { width: 3, groups: vec![(0, 2), (3, 0), (6, 1)] });
    }

    #[test]
    fn metric_examples() {
        let targets = vec![Target::Classes { width: 4, groups: vec![(0, 1), (4, 3)] }];
        let uniform = vec![vec![0.5; 8]];
        assert!((metric_bpc(&uniform, &targets).unwrap() - 2.0).abs() < 1e-12);
        let wrong = vec![vec![9.0, 0.0, 0.0, 0.0, 9.0, 0.0, 0.0, 0.0]];
        assert_eq!(metric_error_rate(&wrong, &targets).unwrap(), 1.0);
        let right = vec![vec![0.0, 50.0, 0.0, 0.0, 0.0, 0.0, 0.0, 50.0]];
        assert_eq!(metric_error_rate(&right, &targets).unwrap(), 0.0);
        assert!(metric_bpc(&right, &targets).unwrap() < 1e-20);
        assert_eq!(metric_mse(&[vec![2.0]], &[Target::scalar(0, 2.0)]).unwrap(), 0.0);
        assert!(metric_mse(&[vec![2.0]], &targets).is_err());
        assert!(metric_bpc(&[vec![0.0; 3]], &targets).is_err());
        assert!(metric_mse(&[], &[Target::scalar(0, 1.0)]).is_err());
    }
}
