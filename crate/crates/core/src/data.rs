//! Sparse example parsing and synthetic data generation.
//!
//! The text format is the usual sparse one: a label followed by
//! `index:value` terms, whitespace separated, indices 1-based in the file
//! and 0-based in memory:
//!
//! ```text
//! 1 3:1 7:1
//! -1 5:0.371
//! ```
//!
//! Labels may be `0`, `1`, `-1`, or `+1` (float spellings accepted);
//! negative and zero both mean the negative class. Feature values are
//! binarized by default: any nonzero value counts as an active feature,
//! which matches the unit gradient bound the trainer assumes. The original
//! values survive in [`ParsedLine::terms`] for raw-value prediction paths.
//!
//! Readers accept plain or gzip-compressed input, detected by magic bytes
//! rather than file extension. Malformed lines surface as per-line errors
//! with 1-based line and byte-column positions; the stream keeps going so
//! callers choose between skip-and-report and fail-fast.

use crate::error::{Error, ParseErrorKind, Result};
use crate::logistic::sigmoid;
use crate::rng::{self, Rng};
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader};
use std::path::Path;

/// One example with binary features: the sorted, deduplicated indices where
/// the feature vector is 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparseExample {
    pub label: bool,
    indices: Vec<u64>,
}

impl SparseExample {
    /// Build from indices in any order; sorts and deduplicates.
    pub fn new(label: bool, mut indices: Vec<u64>) -> Self {
        indices.sort_unstable();
        indices.dedup();
        SparseExample { label, indices }
    }

    /// Build from indices already strictly increasing.
    pub fn from_sorted(label: bool, indices: Vec<u64>) -> Self {
        debug_assert!(indices.windows(2).all(|w| w[0] < w[1]));
        SparseExample { label, indices }
    }

    pub fn indices(&self) -> &[u64] {
        &self.indices
    }

    /// Number of active features.
    pub fn arity(&self) -> usize {
        self.indices.len()
    }
}

/// A parsed line: the binarized example plus everything needed to recover
/// or audit the original.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedLine {
    pub label: bool,
    /// Surviving terms with their original values, sorted by index.
    pub terms: Vec<(u64, f64)>,
    /// The input had out-of-order or duplicate indices and was normalized.
    pub normalized: bool,
    /// Terms dropped because their value was exactly zero.
    pub dropped_zeros: usize,
}

impl ParsedLine {
    /// The binarized view: every surviving term becomes an active feature.
    pub fn to_example(&self) -> SparseExample {
        SparseExample::from_sorted(self.label, self.terms.iter().map(|&(i, _)| i).collect())
    }
}

fn column_of(line: &str, token: &str) -> usize {
    // Tokens are slices of `line`, so pointer arithmetic gives the offset.
    token.as_ptr() as usize - line.as_ptr() as usize + 1
}

/// Parse one line of the sparse text format.
pub fn parse_libsvm_line(line: &str) -> Result<ParsedLine> {
    let mut tokens = line.split_ascii_whitespace();
    let label_token = tokens.next().ok_or(Error::Parse {
        column: 1,
        kind: ParseErrorKind::EmptyLine,
    })?;
    let label = match label_token.parse::<f64>() {
        Ok(1.0) => true,
        Ok(v) if v == 0.0 || v == -1.0 => false,
        _ => {
            return Err(Error::Parse {
                column: column_of(line, label_token),
                kind: ParseErrorKind::BadLabel(label_token.to_string()),
            })
        }
    };

    let mut terms: Vec<(u64, f64)> = Vec::new();
    let mut dropped_zeros = 0usize;
    let mut normalized = false;
    for token in tokens {
        let column = column_of(line, token);
        let (index_part, value_part) = token.split_once(':').ok_or_else(|| Error::Parse {
            column,
            kind: ParseErrorKind::BadTerm(token.to_string()),
        })?;
        let file_index: u64 = index_part.parse().map_err(|_| Error::Parse {
            column,
            kind: ParseErrorKind::BadIndex(index_part.to_string()),
        })?;
        if file_index == 0 {
            return Err(Error::Parse {
                column,
                kind: ParseErrorKind::BadIndex(index_part.to_string()),
            });
        }
        let value: f64 = value_part.parse().map_err(|_| Error::Parse {
            column: column + index_part.len() + 1,
            kind: ParseErrorKind::BadValue(value_part.to_string()),
        })?;
        if !value.is_finite() {
            return Err(Error::Parse {
                column: column + index_part.len() + 1,
                kind: ParseErrorKind::BadValue(value_part.to_string()),
            });
        }
        if value == 0.0 {
            dropped_zeros += 1;
            continue;
        }
        let index = file_index - 1;
        if let Some(&(last, _)) = terms.last() {
            if last >= index {
                normalized = true;
            }
        }
        terms.push((index, value));
    }
    if normalized {
        // Sort by index, keep the first occurrence of each duplicate.
        terms.sort_by_key(|&(i, _)| i);
        terms.dedup_by_key(|&mut (i, _)| i);
    }
    Ok(ParsedLine {
        label,
        terms,
        normalized,
        dropped_zeros,
    })
}

/// Render an example back into the text format (1-based indices, label
/// `1` or `0`).
pub fn format_libsvm(example: &SparseExample) -> String {
    let mut out = String::from(if example.label { "1" } else { "0" });
    for &i in example.indices() {
        out.push_str(&format!(" {}:1", i + 1));
    }
    out
}

/// A successfully parsed line with its position in the stream.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedRecord {
    /// 1-based line number in the input.
    pub line_number: u64,
    pub line: ParsedLine,
}

/// A failed line with its position. `error` is [`Error::Parse`] for bad
/// content and [`Error::Io`] for stream failures (the latter are fatal).
#[derive(Debug)]
pub struct ReadError {
    pub line_number: u64,
    pub error: Error,
}

impl std::fmt::Display for ReadError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}: {}", self.line_number, self.error)
    }
}

/// Streaming reader over the text format. Blank (or whitespace-only) lines
/// are skipped; CRLF endings are accepted.
pub struct ExampleReader<R: BufRead> {
    input: R,
    line_number: u64,
    buf: String,
}

impl<R: BufRead> ExampleReader<R> {
    pub fn new(input: R) -> Self {
        ExampleReader {
            input,
            line_number: 0,
            buf: String::new(),
        }
    }
}

impl<R: BufRead> Iterator for ExampleReader<R> {
    type Item = std::result::Result<ParsedRecord, ReadError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.buf.clear();
            self.line_number += 1;
            match self.input.read_line(&mut self.buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => {
                    return Some(Err(ReadError {
                        line_number: self.line_number,
                        error: e.into(),
                    }))
                }
            }
            let line = self.buf.trim_end_matches(['\n', '\r']);
            if line.trim_start().is_empty() {
                continue;
            }
            let line_number = self.line_number;
            return Some(match parse_libsvm_line(line) {
                Ok(parsed) => Ok(ParsedRecord {
                    line_number,
                    line: parsed,
                }),
                Err(error) => Err(ReadError { line_number, error }),
            });
        }
    }
}

const GZIP_MAGIC: [u8; 2] = [0x1f, 0x8b];

/// Wrap a reader with gzip decompression when the stream starts with the
/// gzip magic bytes, pass it through untouched otherwise.
pub fn maybe_gunzip<R: BufRead + 'static>(mut input: R) -> Result<Box<dyn BufRead>> {
    let head = input.fill_buf()?;
    if head.len() >= 2 && head[..2] == GZIP_MAGIC {
        Ok(Box::new(BufReader::new(flate2::bufread::MultiGzDecoder::new(
            input,
        ))))
    } else {
        Ok(Box::new(input))
    }
}

/// Open a file of examples, transparently decompressing gzip.
pub fn open_examples(path: &Path) -> Result<ExampleReader<Box<dyn BufRead>>> {
    let file = std::fs::File::open(path)?;
    Ok(ExampleReader::new(maybe_gunzip(BufReader::new(file))?))
}

/// Read everything, failing on the first bad line.
pub fn read_all<R: BufRead>(reader: ExampleReader<R>) -> Result<Vec<SparseExample>> {
    let mut out = Vec::new();
    for record in reader {
        match record {
            Ok(r) => out.push(r.line.to_example()),
            Err(e) => return Err(e.error),
        }
    }
    Ok(out)
}

/// Recipe for a synthetic sparse binary classification stream.
///
/// Feature indices follow a power law: index `i` is drawn with probability
/// proportional to `(i + 1)^-exponent`, so low indices are hot and the tail
/// is long, the shape that makes per-coordinate learning rates matter.
/// Labels are sampled from a planted logistic model whose nonzero weights
/// sit on the `true_support` hottest indices, uniform in
/// `[-weight_scale, weight_scale]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    /// Total number of feature indices.
    pub dimension: u64,
    /// Number of examples the stream yields.
    pub examples: u64,
    /// Power-law exponent for index popularity (0 = uniform).
    pub exponent: f64,
    /// Index draws per example, before deduplication.
    pub features_per_example: u32,
    /// Number of leading indices carrying nonzero planted weight.
    pub true_support: u64,
    /// Planted weights are uniform in `[-weight_scale, weight_scale]`.
    pub weight_scale: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dimension == 0 || self.dimension > 1 << 32 {
            return Err(Error::param(
                "dimension",
                format!("{} not in [1, 2^32]", self.dimension),
            ));
        }
        if self.features_per_example == 0 {
            return Err(Error::param("features_per_example", "must be at least 1"));
        }
        if self.true_support > self.dimension {
            return Err(Error::param(
                "true_support",
                format!("{} exceeds dimension {}", self.true_support, self.dimension),
            ));
        }
        if !(self.exponent.is_finite() && self.exponent >= 0.0) {
            return Err(Error::param(
                "exponent",
                format!("{} is not a finite non-negative number", self.exponent),
            ));
        }
        if !(self.weight_scale.is_finite() && self.weight_scale >= 0.0) {
            return Err(Error::param(
                "weight_scale",
                format!("{} is not a finite non-negative number", self.weight_scale),
            ));
        }
        Ok(())
    }
}

/// Inverse-CDF sampler over `0..dimension` with `P(i) ~ (i + 1)^-exponent`.
pub struct PowerLawSampler {
    cumulative: Vec<f64>,
    total: f64,
}

impl PowerLawSampler {
    pub fn new(dimension: u64, exponent: f64) -> Result<Self> {
        if dimension == 0 || dimension > 1 << 32 {
            return Err(Error::param(
                "dimension",
                format!("{dimension} not in [1, 2^32]"),
            ));
        }
        if !(exponent.is_finite() && exponent >= 0.0) {
            return Err(Error::param("exponent", format!("{exponent} is invalid")));
        }
        let mut cumulative = Vec::with_capacity(dimension as usize);
        let mut acc = 0.0f64;
        for i in 0..dimension {
            acc += ((i + 1) as f64).powf(-exponent);
            cumulative.push(acc);
        }
        Ok(PowerLawSampler {
            total: acc,
            cumulative,
        })
    }

    /// Probability of drawing index `i`.
    pub fn probability(&self, i: u64) -> f64 {
        let i = i as usize;
        let prev = if i == 0 { 0.0 } else { self.cumulative[i - 1] };
        (self.cumulative[i] - prev) / self.total
    }

    pub fn sample(&self, rng: &mut Rng) -> u64 {
        let u = rng.random::<f64>() * self.total;
        self.cumulative.partition_point(|&c| c <= u) as u64
    }
}

/// The synthetic stream: deterministic in the spec's seed, including the
/// planted model.
pub struct SynthStream {
    spec: SynthSpec,
    sampler: PowerLawSampler,
    weights: Vec<f64>,
    rng: Rng,
    produced: u64,
}

impl SynthStream {
    pub fn new(spec: SynthSpec) -> Result<Self> {
        spec.validate()?;
        let sampler = PowerLawSampler::new(spec.dimension, spec.exponent)?;
        // Weights come from their own stream so the example sequence is a
        // pure function of (seed, position), whatever the support size.
        let mut wrng = rng::derive(spec.seed, rng::label_seed(0, "synth-weights"));
        let weights = (0..spec.true_support)
            .map(|_| (wrng.random::<f64>() * 2.0 - 1.0) * spec.weight_scale)
            .collect();
        let rng = rng::derive(spec.seed, rng::label_seed(0, "synth-examples"));
        Ok(SynthStream {
            spec,
            sampler,
            weights,
            rng,
            produced: 0,
        })
    }

    /// The planted model's nonzero weights, indexed 0..true_support.
    pub fn true_weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn spec(&self) -> &SynthSpec {
        &self.spec
    }
}

impl Iterator for SynthStream {
    type Item = SparseExample;

    fn next(&mut self) -> Option<Self::Item> {
        if self.produced == self.spec.examples {
            return None;
        }
        self.produced += 1;
        // Fixed draw count per example keeps the stream prefix-stable:
        // the first N examples do not depend on how long the stream is.
        let mut indices: Vec<u64> = (0..self.spec.features_per_example)
            .map(|_| self.sampler.sample(&mut self.rng))
            .collect();
        indices.sort_unstable();
        indices.dedup();
        let z: f64 = indices
            .iter()
            .filter(|&&i| i < self.spec.true_support)
            .map(|&i| self.weights[i as usize])
            .sum();
        let label = self.rng.random::<f64>() < sigmoid(z);
        Some(SparseExample::from_sorted(label, indices))
    }
}
