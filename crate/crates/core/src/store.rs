//! Model snapshots: serialization, prediction-time quantization, and
//! memory accounting.
//!
//! # File format (version 1)
//!
//! Little-endian throughout. One 96-byte header, then densely packed
//! entries sorted by strictly increasing coordinate index:
//!
//! ```text
//! offset size field
//! 0      8    magic "GRIDLRN\0"
//! 8      2    format version (u16) = 1
//! 10     1    payload kind: 0 float32, 1 adaptive, 2 grid
//! 11     1    counter kind: 0 none, 1 exact32, 2 morris8
//! 12     1    grid integer bits n
//! 13     1    grid fractional bits m (grid payload only, else 0)
//! 14     2    reserved, must be 0
//! 16     8    counter base (f64; must be bit-zero unless morris8)
//! 24     8    feasible radius r (f64)
//! 32     8    step scale alpha (f64)
//! 40     8    rounding ratio gamma (f64)
//! 48     8    training seed (u64)
//! 56     32   configuration digest (zeros when untracked)
//! 88     8    entry count (u64)
//! 96     ...  entries
//! ```
//!
//! Entry layouts (plus 0, 4, or 1 trailing counter bytes per the counter
//! kind):
//!
//! - float32: index u64, weight f32
//! - adaptive: index u64, weight f64, grid exponent i16
//!   (`i16::MIN` marks an exact unrounded weight)
//! - grid: index u64, raw coefficient i32
//!
//! Decoding is strict: wrong magic, unknown versions or kinds, non-zero
//! reserved bytes, non-finite numbers, out-of-range raws, unsorted indices,
//! level-zero counters, and trailing bytes are all errors that name the
//! byte offset. Strictness buys a guarantee the fuzzer leans on: any bytes
//! that decode are re-encoded identically.

use crate::data::SparseExample;
use crate::error::{Error, Result};
use crate::fixed_point::{pow2, GridSpec};
use crate::logistic::sigmoid;
use crate::rng::Rng;
use std::collections::BTreeMap;
use std::path::Path;

pub const MAGIC: &[u8; 8] = b"GRIDLRN\0";
pub const FORMAT_VERSION: u16 = 1;

/// Marks an adaptive entry holding an exact (never rounded) weight.
pub const EXACT_EXP: i16 = i16::MIN;

/// What kind of per-coordinate counter a model carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CounterKind {
    None,
    Exact,
    Morris,
}

impl CounterKind {
    fn code(self) -> u8 {
        match self {
            CounterKind::None => 0,
            CounterKind::Exact => 1,
            CounterKind::Morris => 2,
        }
    }

    fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(CounterKind::None),
            1 => Some(CounterKind::Exact),
            2 => Some(CounterKind::Morris),
            _ => None,
        }
    }

    /// Extra bytes per entry.
    fn cell_bytes(self) -> usize {
        match self {
            CounterKind::None => 0,
            CounterKind::Exact => 4,
            CounterKind::Morris => 1,
        }
    }

    /// Extra bits per coordinate in the memory ledger.
    pub fn cell_bits(self) -> u32 {
        match self {
            CounterKind::None => 0,
            CounterKind::Exact => 32,
            CounterKind::Morris => 8,
        }
    }
}

/// One entry's counter state; the variant must match the model's
/// [`CounterKind`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CounterCell {
    None,
    Exact(u32),
    Morris(u8),
}

impl CounterCell {
    fn kind(self) -> CounterKind {
        match self {
            CounterCell::None => CounterKind::None,
            CounterCell::Exact(_) => CounterKind::Exact,
            CounterCell::Morris(_) => CounterKind::Morris,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelMeta {
    pub counter: CounterKind,
    /// Probabilistic counter base; 0 unless `counter` is morris.
    pub base: f64,
    pub r: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub seed: u64,
    /// Fingerprint of the producing configuration; all zeros when the
    /// producer did not track one.
    pub config_digest: [u8; 32],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FloatEntry {
    pub index: u64,
    pub weight: f32,
    pub count: CounterCell,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveEntry {
    pub index: u64,
    pub weight: f64,
    /// The weight sits on the grid `2^grid_exp * Z`, or is exact when this
    /// is [`EXACT_EXP`].
    pub grid_exp: i16,
    pub count: CounterCell,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridEntry {
    pub index: u64,
    pub raw: i32,
    pub count: CounterCell,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelPayload {
    Float32(Vec<FloatEntry>),
    Adaptive {
        /// Integer bits backing the per-coordinate bit accounting.
        int_bits: u8,
        entries: Vec<AdaptiveEntry>,
    },
    Grid {
        spec: GridSpec,
        entries: Vec<GridEntry>,
    },
}

impl ModelPayload {
    fn kind_code(&self) -> u8 {
        match self {
            ModelPayload::Float32(_) => 0,
            ModelPayload::Adaptive { .. } => 1,
            ModelPayload::Grid { .. } => 2,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            ModelPayload::Float32(_) => "float32",
            ModelPayload::Adaptive { .. } => "adaptive",
            ModelPayload::Grid { .. } => "grid",
        }
    }

    pub fn len(&self) -> usize {
        match self {
            ModelPayload::Float32(e) => e.len(),
            ModelPayload::Adaptive { entries, .. } => entries.len(),
            ModelPayload::Grid { entries, .. } => entries.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoredModel {
    pub meta: ModelMeta,
    pub payload: ModelPayload,
}

const HEADER_BYTES: usize = 96;

fn entry_bytes(payload_kind: u8, counter: CounterKind) -> usize {
    let body = match payload_kind {
        0 => 12,
        1 => 18,
        2 => 12,
        _ => unreachable!("validated payload kind"),
    };
    body + counter.cell_bytes()
}

struct Writer {
    out: Vec<u8>,
}

impl Writer {
    fn u8(&mut self, v: u8) {
        self.out.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.out.extend_from_slice(&v.to_le_bytes());
    }
    fn i16(&mut self, v: i16) {
        self.out.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.out.extend_from_slice(&v.to_le_bytes());
    }
    fn i32(&mut self, v: i32) {
        self.out.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.out.extend_from_slice(&v.to_le_bytes());
    }
    fn f32(&mut self, v: f32) {
        self.out.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.out.extend_from_slice(&v.to_le_bytes());
    }
    fn cell(&mut self, c: CounterCell) {
        match c {
            CounterCell::None => {}
            CounterCell::Exact(n) => self.u32(n),
            CounterCell::Morris(l) => self.u8(l),
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::format(
                self.pos,
                format!(
                    "need {n} more byte(s), found {}; data is truncated",
                    self.bytes.len() - self.pos
                ),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn i16(&mut self) -> Result<i16> {
        Ok(i16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn i32(&mut self) -> Result<i32> {
        Ok(i32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn cell(&mut self, kind: CounterKind) -> Result<CounterCell> {
        Ok(match kind {
            CounterKind::None => CounterCell::None,
            CounterKind::Exact => CounterCell::Exact(self.u32()?),
            CounterKind::Morris => {
                let at = self.pos;
                let level = self.u8()?;
                if level == 0 {
                    return Err(Error::format(at, "counter level 0 is invalid".to_string()));
                }
                CounterCell::Morris(level)
            }
        })
    }
}

impl StoredModel {
    /// Serialize to the version-1 byte format. Validates the same
    /// invariants decoding enforces, so anything serialized decodes back
    /// to an equal model.
    pub fn serialize(&self) -> Result<Vec<u8>> {
        self.validate()?;
        let mut w = Writer {
            out: Vec::with_capacity(
                HEADER_BYTES
                    + self.payload.len()
                        * entry_bytes(self.payload.kind_code(), self.meta.counter),
            ),
        };
        w.out.extend_from_slice(MAGIC);
        w.u16(FORMAT_VERSION);
        w.u8(self.payload.kind_code());
        w.u8(self.meta.counter.code());
        let (int_bits, frac_bits) = match &self.payload {
            ModelPayload::Float32(_) => (0, 0),
            ModelPayload::Adaptive { int_bits, .. } => (*int_bits, 0),
            ModelPayload::Grid { spec, .. } => (spec.int_bits(), spec.frac_bits()),
        };
        w.u8(int_bits);
        w.u8(frac_bits);
        w.u16(0); // reserved
        w.f64(self.meta.base);
        w.f64(self.meta.r);
        w.f64(self.meta.alpha);
        w.f64(self.meta.gamma);
        w.u64(self.meta.seed);
        w.out.extend_from_slice(&self.meta.config_digest);
        w.u64(self.payload.len() as u64);
        match &self.payload {
            ModelPayload::Float32(entries) => {
                for e in entries {
                    w.u64(e.index);
                    w.f32(e.weight);
                    w.cell(e.count);
                }
            }
            ModelPayload::Adaptive { entries, .. } => {
                for e in entries {
                    w.u64(e.index);
                    w.f64(e.weight);
                    w.i16(e.grid_exp);
                    w.cell(e.count);
                }
            }
            ModelPayload::Grid { entries, .. } => {
                for e in entries {
                    w.u64(e.index);
                    w.i32(e.raw);
                    w.cell(e.count);
                }
            }
        }
        Ok(w.out)
    }

    /// Decode the version-1 byte format, strictly.
    pub fn deserialize(bytes: &[u8]) -> Result<StoredModel> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(8)?;
        if magic != MAGIC {
            return Err(Error::format(0, "bad magic; not a model file".to_string()));
        }
        let version = r.u16()?;
        if version != FORMAT_VERSION {
            return Err(Error::Version {
                found: version,
                supported: FORMAT_VERSION,
            });
        }
        let payload_kind = r.u8()?;
        if payload_kind > 2 {
            return Err(Error::format(
                10,
                format!("unknown payload kind {payload_kind}"),
            ));
        }
        let counter = CounterKind::from_code(r.u8()?)
            .ok_or_else(|| Error::format(11, "unknown counter kind".to_string()))?;
        let int_bits = r.u8()?;
        let frac_bits = r.u8()?;
        if r.u16()? != 0 {
            return Err(Error::format(14, "reserved bytes must be zero".to_string()));
        }
        let base = r.f64()?;
        match counter {
            CounterKind::Morris => {
                if !(base.is_finite() && base > 1.0) {
                    return Err(Error::format(16, format!("counter base {base} invalid")));
                }
            }
            _ => {
                if base.to_bits() != 0 {
                    return Err(Error::format(
                        16,
                        "counter base must be zero without a probabilistic counter".to_string(),
                    ));
                }
            }
        }
        let radius = r.f64()?;
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::format(24, format!("radius {radius} invalid")));
        }
        let alpha = r.f64()?;
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::format(32, format!("alpha {alpha} invalid")));
        }
        let gamma = r.f64()?;
        if !(gamma.is_finite() && gamma >= 0.0) {
            return Err(Error::format(40, format!("gamma {gamma} invalid")));
        }
        let seed = r.u64()?;
        let mut config_digest = [0u8; 32];
        config_digest.copy_from_slice(r.take(32)?);
        let count = r.u64()?;

        let per_entry = entry_bytes(payload_kind, counter);
        let remaining = bytes.len() - r.pos;
        let expected = (count as usize)
            .checked_mul(per_entry)
            .ok_or_else(|| Error::format(88, format!("entry count {count} overflows")))?;
        if remaining != expected {
            return Err(Error::format(
                88,
                format!(
                    "entry count {count} implies {expected} payload byte(s), found {remaining}"
                ),
            ));
        }

        let meta = ModelMeta {
            counter,
            base,
            r: radius,
            alpha,
            gamma,
            seed,
            config_digest,
        };

        let mut prev_index: Option<u64> = None;
        let mut check_order = |at: usize, index: u64| -> Result<()> {
            if let Some(prev) = prev_index {
                if index <= prev {
                    return Err(Error::format(
                        at,
                        format!("index {index} after {prev}; entries must strictly increase"),
                    ));
                }
            }
            prev_index = Some(index);
            Ok(())
        };

        let payload = match payload_kind {
            0 => {
                if int_bits != 0 || frac_bits != 0 {
                    return Err(Error::format(
                        12,
                        "grid bits must be zero for float32 payloads".to_string(),
                    ));
                }
                let mut entries = Vec::with_capacity(count as usize);
                for _ in 0..count {
                    let at = r.pos;
                    let index = r.u64()?;
                    check_order(at, index)?;
                    let w_at = r.pos;
                    let weight = r.f32()?;
                    if !weight.is_finite() {
                        return Err(Error::format(w_at, "non-finite weight".to_string()));
                    }
                    let count = r.cell(counter)?;
                    entries.push(FloatEntry {
                        index,
                        weight,
                        count,
                    });
                }
                ModelPayload::Float32(entries)
            }
            1 => {
                if frac_bits != 0 {
                    return Err(Error::format(
                        13,
                        "fractional bits must be zero for adaptive payloads".to_string(),
                    ));
                }
                let mut entries = Vec::with_capacity(count as usize);
                for _ in 0..count {
                    let at = r.pos;
                    let index = r.u64()?;
                    check_order(at, index)?;
                    let w_at = r.pos;
                    let weight = r.f64()?;
                    if !weight.is_finite() {
                        return Err(Error::format(w_at, "non-finite weight".to_string()));
                    }
                    let e_at = r.pos;
                    let grid_exp = r.i16()?;
                    if grid_exp != EXACT_EXP {
                        if !(-62..=62).contains(&i32::from(grid_exp)) {
                            return Err(Error::format(
                                e_at,
                                format!("grid exponent {grid_exp} out of range"),
                            ));
                        }
                        let q = weight / pow2(i32::from(grid_exp));
                        if q != q.trunc() || q.abs() > 9.007_199_254_740_992e15 {
                            return Err(Error::format(
                                w_at,
                                format!("weight {weight} is not on its declared 2^{grid_exp} grid"),
                            ));
                        }
                    }
                    let count = r.cell(counter)?;
                    entries.push(AdaptiveEntry {
                        index,
                        weight,
                        grid_exp,
                        count,
                    });
                }
                ModelPayload::Adaptive { int_bits, entries }
            }
            2 => {
                let total = u32::from(int_bits) + u32::from(frac_bits);
                if total + 1 > 32 {
                    return Err(Error::format(
                        12,
                        format!("grid needs {} bits; raws are stored in 32", total + 1),
                    ));
                }
                let spec = GridSpec::new(int_bits, frac_bits)
                    .map_err(|e| Error::format(12, e.to_string()))?;
                let mut entries = Vec::with_capacity(count as usize);
                for _ in 0..count {
                    let at = r.pos;
                    let index = r.u64()?;
                    check_order(at, index)?;
                    let raw_at = r.pos;
                    let raw = r.i32()?;
                    if i64::from(raw).abs() > spec.max_raw() {
                        return Err(Error::format(
                            raw_at,
                            format!(
                                "raw {raw} outside Q{int_bits}.{frac_bits} range +-{}",
                                spec.max_raw()
                            ),
                        ));
                    }
                    let count = r.cell(counter)?;
                    entries.push(GridEntry { index, raw, count });
                }
                ModelPayload::Grid { spec, entries }
            }
            _ => unreachable!(),
        };

        debug_assert_eq!(r.pos, bytes.len());
        Ok(StoredModel { meta, payload })
    }

    /// The invariants the byte format enforces, checked on the in-memory
    /// form before encoding.
    fn validate(&self) -> Result<()> {
        match self.meta.counter {
            CounterKind::Morris => {
                if !(self.meta.base.is_finite() && self.meta.base > 1.0) {
                    return Err(Error::param("base", "must exceed 1"));
                }
            }
            _ => {
                if self.meta.base.to_bits() != 0 {
                    return Err(Error::param("base", "must be zero without morris counters"));
                }
            }
        }
        if !(self.meta.r.is_finite() && self.meta.r > 0.0) {
            return Err(Error::param("r", "must be positive and finite"));
        }
        if !(self.meta.alpha.is_finite() && self.meta.alpha > 0.0) {
            return Err(Error::param("alpha", "must be positive and finite"));
        }
        if !(self.meta.gamma.is_finite() && self.meta.gamma >= 0.0) {
            return Err(Error::param("gamma", "must be non-negative and finite"));
        }

        let mut prev: Option<u64> = None;
        let mut order = |index: u64| -> Result<()> {
            if let Some(p) = prev {
                if index <= p {
                    return Err(Error::param("entries", "indices must strictly increase"));
                }
            }
            prev = Some(index);
            Ok(())
        };
        let check_cell = |cell: CounterCell| -> Result<()> {
            if cell.kind() != self.meta.counter {
                return Err(Error::param("entries", "counter cell kind mismatch"));
            }
            if let CounterCell::Morris(0) = cell {
                return Err(Error::param("entries", "counter level 0 is invalid"));
            }
            Ok(())
        };
        match &self.payload {
            ModelPayload::Float32(entries) => {
                for e in entries {
                    order(e.index)?;
                    if !e.weight.is_finite() {
                        return Err(Error::NonFinite { context: "weight" });
                    }
                    check_cell(e.count)?;
                }
            }
            ModelPayload::Adaptive { entries, .. } => {
                for e in entries {
                    order(e.index)?;
                    if !e.weight.is_finite() {
                        return Err(Error::NonFinite { context: "weight" });
                    }
                    if e.grid_exp != EXACT_EXP {
                        if !(-62..=62).contains(&i32::from(e.grid_exp)) {
                            return Err(Error::param("entries", "grid exponent out of range"));
                        }
                        let q = e.weight / pow2(i32::from(e.grid_exp));
                        if q != q.trunc() {
                            return Err(Error::OffGrid {
                                value: e.weight,
                                resolution: pow2(i32::from(e.grid_exp)),
                            });
                        }
                    }
                    check_cell(e.count)?;
                }
            }
            ModelPayload::Grid { spec, entries } => {
                if spec.total_bits() > 32 {
                    return Err(Error::param("spec", "grid raws must fit 32 bits"));
                }
                for e in entries {
                    order(e.index)?;
                    if i64::from(e.raw).abs() > spec.max_raw() {
                        return Err(Error::OutOfRange {
                            value: f64::from(e.raw) * spec.resolution(),
                            limit: spec.max_value(),
                        });
                    }
                    check_cell(e.count)?;
                }
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        Ok(std::fs::write(path, self.serialize()?)?)
    }

    pub fn load(path: &Path) -> Result<StoredModel> {
        StoredModel::deserialize(&std::fs::read(path)?)
    }

    /// Decoded (index, weight) pairs in index order.
    pub fn weights(&self) -> Vec<(u64, f64)> {
        match &self.payload {
            ModelPayload::Float32(entries) => entries
                .iter()
                .map(|e| (e.index, f64::from(e.weight)))
                .collect(),
            ModelPayload::Adaptive { entries, .. } => {
                entries.iter().map(|e| (e.index, e.weight)).collect()
            }
            ModelPayload::Grid { spec, entries } => entries
                .iter()
                .map(|e| (e.index, f64::from(e.raw) * spec.resolution()))
                .collect(),
        }
    }

    /// Weight of one coordinate, 0 if absent. Binary search; entries are
    /// sorted by construction.
    pub fn weight_at(&self, index: u64) -> f64 {
        match &self.payload {
            ModelPayload::Float32(entries) => entries
                .binary_search_by_key(&index, |e| e.index)
                .map_or(0.0, |i| f64::from(entries[i].weight)),
            ModelPayload::Adaptive { entries, .. } => entries
                .binary_search_by_key(&index, |e| e.index)
                .map_or(0.0, |i| entries[i].weight),
            ModelPayload::Grid { spec, entries } => entries
                .binary_search_by_key(&index, |e| e.index)
                .map_or(0.0, |i| f64::from(entries[i].raw) * spec.resolution()),
        }
    }

    pub fn logit(&self, example: &SparseExample) -> f64 {
        example.indices().iter().map(|&i| self.weight_at(i)).sum()
    }

    pub fn predict(&self, example: &SparseExample) -> f64 {
        sigmoid(self.logit(example))
    }
}

/// Re-round a model onto a (typically coarser) grid for prediction-only
/// serving. Counters are dropped; zero weights are kept so the coordinate
/// set, and with it the bits-per-coordinate account, is unchanged. Fails
/// with the full list of offending coordinates if any weight exceeds the
/// target range.
pub fn quantize_for_prediction(
    model: &StoredModel,
    spec: GridSpec,
    rng: &mut Rng,
) -> Result<StoredModel> {
    if spec.total_bits() > 32 {
        return Err(Error::param("spec", "grid raws must fit 32 bits"));
    }
    let weights = model.weights();
    let limit = spec.max_value();
    let offenders: Vec<u64> = weights
        .iter()
        .filter(|(_, w)| w.abs() > limit)
        .map(|(i, _)| *i)
        .collect();
    if !offenders.is_empty() {
        let count = offenders.len();
        return Err(Error::QuantizeRange {
            limit,
            count,
            indices: offenders.into_iter().take(8).collect(),
        });
    }
    let entries = weights
        .into_iter()
        .map(|(index, w)| {
            let v = spec.round_value(w, rng)?;
            Ok(GridEntry {
                index,
                raw: i32::try_from(v.raw()).expect("32-bit grid raw"),
                count: CounterCell::None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(StoredModel {
        meta: ModelMeta {
            counter: CounterKind::None,
            base: 0.0,
            config_digest: [0; 32],
            ..model.meta
        },
        payload: ModelPayload::Grid { spec, entries },
    })
}

/// Distribution of stored grid coefficients, the input to entropy-style
/// size estimates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelHistogram {
    counts: BTreeMap<i32, u64>,
    total: u64,
}

impl ModelHistogram {
    /// Histogram of raw coefficients; grid payloads only, since value
    /// frequencies are meaningful when the alphabet is finite.
    pub fn from_model(model: &StoredModel) -> Result<ModelHistogram> {
        match &model.payload {
            ModelPayload::Grid { entries, .. } => {
                if entries.is_empty() {
                    return Err(Error::param("model", "histogram needs at least one entry"));
                }
                let mut counts = BTreeMap::new();
                for e in entries {
                    *counts.entry(e.raw).or_insert(0u64) += 1;
                }
                Ok(ModelHistogram {
                    counts,
                    total: entries.len() as u64,
                })
            }
            _ => Err(Error::param(
                "model",
                "histogram requires a grid payload; quantize first",
            )),
        }
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn count_of(&self, raw: i32) -> u64 {
        self.counts.get(&raw).copied().unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (i32, u64)> + '_ {
        self.counts.iter().map(|(&r, &c)| (r, c))
    }

    /// Empirical entropy in bits per stored value: what an ideal entropy
    /// coder would spend on the coefficient stream. Never exceeds the grid
    /// width `K`, and drops far below it when mass concentrates near zero.
    pub fn optimal_bits_per_value(&self) -> f64 {
        let total = self.total as f64;
        self.counts
            .values()
            .map(|&c| {
                let p = c as f64 / total;
                -p * p.log2()
            })
            .sum()
    }
}

/// The bits-per-coordinate ledger for one model.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryReport {
    pub coordinates: u64,
    /// Bits spent on the coefficient itself (averaged for adaptive grids).
    pub coefficient_bits: f64,
    /// Bits spent on the per-coordinate counter.
    pub counter_bits: u32,
    /// Total bits per coordinate.
    pub bits_per_coordinate: f64,
    pub total_bits: u64,
    /// Human-readable layout, e.g. `q2.13 grid + 8-bit counter`.
    pub layout: String,
}

/// Account for a model's per-coordinate storage cost.
///
/// Float coefficients cost 32 bits, a `Qn.m` grid costs `n + m + 1`, and
/// adaptive entries cost `n + m_i + 1` each (64 for exact, never-rounded
/// weights). Counter cells add 0, 32, or 8 bits.
pub fn memory_report(model: &StoredModel) -> MemoryReport {
    let counter_bits = model.meta.counter.cell_bits();
    let counter_name = match model.meta.counter {
        CounterKind::None => "no counter",
        CounterKind::Exact => "32-bit exact count",
        CounterKind::Morris => "8-bit counter",
    };
    let (coefficient_bits, layout) = match &model.payload {
        ModelPayload::Float32(_) => (32.0, format!("float32 + {counter_name}")),
        ModelPayload::Adaptive { int_bits, entries } => {
            let avg = if entries.is_empty() {
                0.0
            } else {
                let total: f64 = entries
                    .iter()
                    .map(|e| {
                        if e.grid_exp == EXACT_EXP {
                            64.0
                        } else {
                            // n - grid_exp + 1, at least one bit.
                            (f64::from(*int_bits) - f64::from(e.grid_exp) + 1.0).max(1.0)
                        }
                    })
                    .sum();
                total / entries.len() as f64
            };
            (avg, format!("adaptive grid + {counter_name}"))
        }
        ModelPayload::Grid { spec, .. } => (
            f64::from(spec.total_bits()),
            format!(
                "q{}.{} grid + {counter_name}",
                spec.int_bits(),
                spec.frac_bits()
            ),
        ),
    };
    let coordinates = model.payload.len() as u64;
    let bits_per_coordinate = coefficient_bits + f64::from(counter_bits);
    MemoryReport {
        coordinates,
        coefficient_bits,
        counter_bits,
        bits_per_coordinate,
        total_bits: (bits_per_coordinate * coordinates as f64).ceil() as u64,
        layout,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;

    fn meta(counter: CounterKind, base: f64) -> ModelMeta {
        ModelMeta {
            counter,
            base,
            r: 1.0,
            alpha: 0.5,
            gamma: 1.0,
            seed: 9,
            config_digest: [7; 32],
        }
    }

    fn grid_model() -> StoredModel {
        let spec = GridSpec::new(2, 13).unwrap();
        StoredModel {
            meta: meta(CounterKind::Morris, 1.1),
            payload: ModelPayload::Grid {
                spec,
                entries: vec![
                    GridEntry {
                        index: 0,
                        raw: -16384,
                        count: CounterCell::Morris(12),
                    },
                    GridEntry {
                        index: 5,
                        raw: 0,
                        count: CounterCell::Morris(1),
                    },
                    GridEntry {
                        index: 1000,
                        raw: 24576,
                        count: CounterCell::Morris(255),
                    },
                ],
            },
        }
    }

    #[test]
    fn round_trips_every_payload_kind() {
        let models = [
            StoredModel {
                meta: meta(CounterKind::None, 0.0),
                payload: ModelPayload::Float32(vec![]),
            },
            StoredModel {
                meta: meta(CounterKind::Exact, 0.0),
                payload: ModelPayload::Float32(vec![
                    FloatEntry {
                        index: 3,
                        weight: -0.25,
                        count: CounterCell::Exact(17),
                    },
                    FloatEntry {
                        index: 9,
                        weight: 0.125,
                        count: CounterCell::Exact(1),
                    },
                ]),
            },
            StoredModel {
                meta: meta(CounterKind::Exact, 0.0),
                payload: ModelPayload::Adaptive {
                    int_bits: 1,
                    entries: vec![
                        AdaptiveEntry {
                            index: 2,
                            weight: -0.375,
                            grid_exp: -3,
                            count: CounterCell::Exact(4),
                        },
                        AdaptiveEntry {
                            index: 70_000,
                            weight: 0.123456789,
                            grid_exp: EXACT_EXP,
                            count: CounterCell::Exact(2),
                        },
                    ],
                },
            },
            grid_model(),
        ];
        for model in models {
            let bytes = model.serialize().unwrap();
            let back = StoredModel::deserialize(&bytes).unwrap();
            assert_eq!(back, model);
            // Canonical: re-encoding accepted bytes is the identity.
            assert_eq!(back.serialize().unwrap(), bytes);
        }
    }

    #[test]
    fn large_model_round_trip() {
        let entries: Vec<GridEntry> = (0u32..1000)
            .map(|i| GridEntry {
                index: u64::from(i) * 7 + 1,
                raw: (i % 200) as i32 - 100,
                count: CounterCell::Morris((i % 254 + 1) as u8),
            })
            .collect();
        let model = StoredModel {
            meta: meta(CounterKind::Morris, 1.1),
            payload: ModelPayload::Grid {
                spec: GridSpec::new(2, 7).unwrap(),
                entries,
            },
        };
        let bytes = model.serialize().unwrap();
        assert_eq!(bytes.len(), 96 + 1000 * 13);
        assert_eq!(StoredModel::deserialize(&bytes).unwrap(), model);
    }

    #[test]
    fn corrupt_streams_are_rejected_with_offsets() {
        let good = grid_model().serialize().unwrap();

        // Flip the magic.
        let mut bad = good.clone();
        bad[0] ^= 0xff;
        assert!(matches!(
            StoredModel::deserialize(&bad),
            Err(Error::Format { offset: 0, .. })
        ));

        // Unknown version.
        let mut bad = good.clone();
        bad[8] = 9;
        assert!(matches!(
            StoredModel::deserialize(&bad),
            Err(Error::Version { found: 9, .. })
        ));

        // Unknown payload kind.
        let mut bad = good.clone();
        bad[10] = 3;
        assert!(matches!(
            StoredModel::deserialize(&bad),
            Err(Error::Format { offset: 10, .. })
        ));

        // Reserved bytes must be zero.
        let mut bad = good.clone();
        bad[14] = 1;
        assert!(matches!(
            StoredModel::deserialize(&bad),
            Err(Error::Format { offset: 14, .. })
        ));

        // Truncations at every length fail cleanly.
        for cut in 0..good.len() {
            assert!(
                StoredModel::deserialize(&good[..cut]).is_err(),
                "prefix of {cut} bytes decoded"
            );
        }

        // Trailing garbage is an error, not ignored.
        let mut bad = good.clone();
        bad.push(0);
        assert!(StoredModel::deserialize(&bad).is_err());

        // Out-of-range raw: entry raws live at 96 + 8.
        let mut bad = good.clone();
        bad[104..108].copy_from_slice(&40_000i32.to_le_bytes());
        assert!(matches!(
            StoredModel::deserialize(&bad),
            Err(Error::Format { offset: 104, .. })
        ));

        // Counter level zero.
        let mut bad = good.clone();
        bad[108] = 0;
        assert!(matches!(
            StoredModel::deserialize(&bad),
            Err(Error::Format { offset: 108, .. })
        ));

        // Unsorted indices: overwrite the second entry's index with the
        // first entry's.
        let mut bad = good;
        let first = bad[96..104].to_vec();
        bad[109..117].copy_from_slice(&first);
        assert!(StoredModel::deserialize(&bad).is_err());
    }

    #[test]
    fn serialize_rejects_inconsistent_models() {
        // Cell kind mismatch.
        let model = StoredModel {
            meta: meta(CounterKind::Exact, 0.0),
            payload: ModelPayload::Float32(vec![FloatEntry {
                index: 0,
                weight: 1.0,
                count: CounterCell::Morris(3),
            }]),
        };
        assert!(model.serialize().is_err());

        // Off-grid adaptive weight.
        let model = StoredModel {
            meta: meta(CounterKind::None, 0.0),
            payload: ModelPayload::Adaptive {
                int_bits: 1,
                entries: vec![AdaptiveEntry {
                    index: 0,
                    weight: 0.3,
                    grid_exp: -2,
                    count: CounterCell::None,
                }],
            },
        };
        assert!(model.serialize().is_err());

        // Unsorted entries.
        let spec = GridSpec::new(2, 2).unwrap();
        let model = StoredModel {
            meta: meta(CounterKind::None, 0.0),
            payload: ModelPayload::Grid {
                spec,
                entries: vec![
                    GridEntry { index: 5, raw: 0, count: CounterCell::None },
                    GridEntry { index: 5, raw: 1, count: CounterCell::None },
                ],
            },
        };
        assert!(model.serialize().is_err());
    }

    #[test]
    fn prediction_reads_the_decoded_weights() {
        let model = grid_model();
        let eps = 0.0001220703125;
        assert_eq!(model.weight_at(0), -16384.0 * eps);
        assert_eq!(model.weight_at(5), 0.0);
        assert_eq!(model.weight_at(12345), 0.0);
        let ex = SparseExample::from_sorted(true, vec![0, 5]);
        assert_eq!(model.logit(&ex), -2.0);
        assert!((model.predict(&ex) - sigmoid(-2.0)).abs() < 1e-15);
    }

    #[test]
    fn quantize_keeps_coordinates_and_drops_counters() {
        let model = grid_model();
        let target = GridSpec::new(2, 3).unwrap();
        let mut rng = rng::from_seed(8);
        let q = quantize_for_prediction(&model, target, &mut rng).unwrap();
        assert_eq!(q.payload.len(), model.payload.len());
        assert_eq!(q.meta.counter, CounterKind::None);
        assert_eq!(q.meta.base, 0.0);
        match &q.payload {
            ModelPayload::Grid { spec, entries } => {
                assert_eq!(*spec, target);
                // Zero weights stay stored.
                assert_eq!(entries[1].index, 5);
                assert_eq!(entries[1].raw, 0);
            }
            other => panic!("unexpected payload {}", other.kind_name()),
        }
    }

    #[test]
    fn quantize_to_the_same_grid_is_identity_on_weights() {
        let model = grid_model();
        let spec = GridSpec::new(2, 13).unwrap();
        let mut rng = rng::from_seed(3);
        let q = quantize_for_prediction(&model, spec, &mut rng).unwrap();
        assert_eq!(q.weights(), model.weights());
    }

    #[test]
    fn quantize_range_failures_list_offenders() {
        let model = StoredModel {
            meta: meta(CounterKind::None, 0.0),
            payload: ModelPayload::Float32(vec![
                FloatEntry { index: 1, weight: 0.5, count: CounterCell::None },
                FloatEntry { index: 4, weight: 3.0, count: CounterCell::None },
                FloatEntry { index: 6, weight: -2.5, count: CounterCell::None },
            ]),
        };
        // Q1.2 tops out at 1.75.
        let target = GridSpec::new(1, 2).unwrap();
        let mut rng = rng::from_seed(0);
        match quantize_for_prediction(&model, target, &mut rng) {
            Err(Error::QuantizeRange { count, indices, .. }) => {
                assert_eq!(count, 2);
                assert_eq!(indices, vec![4, 6]);
            }
            other => panic!("expected range failure, got {other:?}"),
        }
    }

    #[test]
    fn quantization_of_rounded_weights_is_unbiased() {
        // One weight at 0.3 on the unit grid: mean over seeds ~ 0.3.
        let model = StoredModel {
            meta: meta(CounterKind::None, 0.0),
            payload: ModelPayload::Float32(vec![FloatEntry {
                index: 0,
                weight: 0.3,
                count: CounterCell::None,
            }]),
        };
        let target = GridSpec::new(1, 0).unwrap();
        let n = 100_000;
        let mut sum = 0.0;
        let mut rng = rng::from_seed(2);
        for _ in 0..n {
            let q = quantize_for_prediction(&model, target, &mut rng).unwrap();
            sum += q.weight_at(0);
        }
        let mean = sum / f64::from(n);
        let tol = 3.0 * (0.21f64 / f64::from(n)).sqrt();
        assert!((mean - 0.3).abs() < tol, "mean {mean}");
    }

    #[test]
    fn histogram_and_entropy() {
        let spec = GridSpec::new(1, 1).unwrap();
        let entries = [0, 0, 1, -1]
            .iter()
            .enumerate()
            .map(|(i, &raw)| GridEntry {
                index: i as u64,
                raw,
                count: CounterCell::None,
            })
            .collect();
        let model = StoredModel {
            meta: meta(CounterKind::None, 0.0),
            payload: ModelPayload::Grid { spec, entries },
        };
        let h = ModelHistogram::from_model(&model).unwrap();
        assert_eq!(h.total(), 4);
        assert_eq!(h.count_of(0), 2);
        assert_eq!(h.count_of(1), 1);
        // (2/4) log 2 + (1/4) log 4 + (1/4) log 4 = 0.5 + 0.5 + 0.5.
        assert_eq!(h.optimal_bits_per_value(), 1.5);

        // A one-value model needs zero bits.
        let model = StoredModel {
            meta: meta(CounterKind::None, 0.0),
            payload: ModelPayload::Grid {
                spec,
                entries: vec![GridEntry { index: 0, raw: 1, count: CounterCell::None }],
            },
        };
        assert_eq!(
            ModelHistogram::from_model(&model)
                .unwrap()
                .optimal_bits_per_value(),
            0.0
        );

        // Non-grid payloads are refused.
        let model = StoredModel {
            meta: meta(CounterKind::None, 0.0),
            payload: ModelPayload::Float32(vec![]),
        };
        assert!(ModelHistogram::from_model(&model).is_err());
    }

    #[test]
    fn memory_ledger_rows() {
        // float32 control: 32 bits.
        let m = StoredModel {
            meta: meta(CounterKind::None, 0.0),
            payload: ModelPayload::Float32(vec![FloatEntry {
                index: 0,
                weight: 0.0,
                count: CounterCell::None,
            }]),
        };
        assert_eq!(memory_report(&m).bits_per_coordinate, 32.0);

        // float32 + exact count: 64 bits.
        let m = StoredModel {
            meta: meta(CounterKind::Exact, 0.0),
            payload: ModelPayload::Float32(vec![FloatEntry {
                index: 0,
                weight: 0.0,
                count: CounterCell::Exact(5),
            }]),
        };
        assert_eq!(memory_report(&m).bits_per_coordinate, 64.0);

        // float32 + morris: 40 bits.
        let m = StoredModel {
            meta: meta(CounterKind::Morris, 1.1),
            payload: ModelPayload::Float32(vec![FloatEntry {
                index: 0,
                weight: 0.0,
                count: CounterCell::Morris(3),
            }]),
        };
        assert_eq!(memory_report(&m).bits_per_coordinate, 40.0);

        // q2.13 + morris: 16 + 8 = 24 bits.
        let report = memory_report(&grid_model());
        assert_eq!(report.bits_per_coordinate, 24.0);
        assert_eq!(report.coordinates, 3);
        assert_eq!(report.total_bits, 72);
        assert!(report.layout.contains("q2.13"));

        // Prediction-only q2.5 grid: 8 bits flat.
        let spec = GridSpec::new(2, 5).unwrap();
        let m = StoredModel {
            meta: meta(CounterKind::None, 0.0),
            payload: ModelPayload::Grid {
                spec,
                entries: vec![GridEntry { index: 2, raw: 3, count: CounterCell::None }],
            },
        };
        assert_eq!(memory_report(&m).bits_per_coordinate, 8.0);

        // Adaptive: n = 1, exponents -3 and -5 cost 5 and 7 bits; exact
        // entries cost 64.
        let m = StoredModel {
            meta: meta(CounterKind::None, 0.0),
            payload: ModelPayload::Adaptive {
                int_bits: 1,
                entries: vec![
                    AdaptiveEntry { index: 0, weight: 0.125, grid_exp: -3, count: CounterCell::None },
                    AdaptiveEntry { index: 1, weight: 0.03125, grid_exp: -5, count: CounterCell::None },
                ],
            },
        };
        assert_eq!(memory_report(&m).bits_per_coordinate, 6.0);
    }

    proptest! {
        #[test]
        fn entropy_never_exceeds_grid_width(
            raws in proptest::collection::vec(-128i32..=127, 1..200)
        ) {
            let spec = GridSpec::new(4, 3).unwrap();
            let entries = raws
                .iter()
                .enumerate()
                .map(|(i, &raw)| GridEntry {
                    index: i as u64,
                    raw,
                    count: CounterCell::None,
                })
                .collect();
            let model = StoredModel {
                meta: meta(CounterKind::None, 0.0),
                payload: ModelPayload::Grid { spec, entries },
            };
            let bits = ModelHistogram::from_model(&model)
                .unwrap()
                .optimal_bits_per_value();
            prop_assert!(bits >= 0.0);
            prop_assert!(bits <= f64::from(spec.total_bits()));
        }

        #[test]
        fn random_mutations_never_panic_and_rejections_are_clean(
            seed_flip in 0usize..135,
            value in any::<u8>(),
        ) {
            let mut bytes = grid_model().serialize().unwrap();
            if seed_flip < bytes.len() {
                bytes[seed_flip] = value;
            }
            if let Ok(model) = StoredModel::deserialize(&bytes) {
                // Anything accepted re-encodes to the same bytes.
                prop_assert_eq!(model.serialize().unwrap(), bytes);
            }
        }
    }
}
