//! Online gradient descent with gridded coefficients.
//!
//! The training loop is plain per-coordinate OGD on the logistic loss, with
//! two twists that buy the memory savings:
//!
//! 1. After each projected gradient step the new coefficient is written
//!    back through unbiased randomized rounding onto a grid of resolution
//!    `eps_t <= gamma * eta_t`. Coarse storage, unbiased updates.
//! 2. The per-coordinate step sizes `eta = alpha / sqrt(n_i)` can draw
//!    `n_i` from an 8-bit probabilistic counter instead of an exact count.
//!
//! Coordinates with zero gradient are untouched: not stepped, not counted,
//! not re-rounded. Only the coordinates active in the current example move,
//! which is what makes a single pass over sparse data cheap.
//!
//! Three precision modes:
//!
//! - `Float32Control`: classic f32 weights, no rounding. The baseline the
//!   memory ledger compares against.
//! - `Fixed`: one `Qn.m` grid for the whole run, 16-bit packed
//!   coefficients. The learning rate is floored at `eps / gamma` so the
//!   rounding noise assumption `eps <= gamma * eta` stays true forever.
//! - `Adaptive`: per-coordinate grids that start coarse and refine as the
//!   step size decays, `eps` always the largest power of two at or below
//!   `gamma * eta` (capped at `R` so the projection range stays on-grid,
//!   and at `max_frac_bits` so storage is bounded; the rate is floored at
//!   the cap like in fixed mode). A coordinate's grid only ever refines,
//!   so every stored value stays exactly representable.

use crate::data::SparseExample;
use crate::error::{Error, Result};
use crate::fixed_point::{self, GridSpec};
use crate::logistic::sigmoid;
use crate::rng::{self, Rng};
use crate::store::{
    AdaptiveEntry, CounterCell, CounterKind, FloatEntry, GridEntry, ModelMeta, ModelPayload,
    StoredModel,
};
use crate::table::PackedTable;
use crate::counting::{IncrementOutcome, MorrisCounter};
use std::collections::HashMap;

/// How coefficients are stored during training.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PrecisionMode {
    /// 32-bit float weights, no rounding.
    Float32Control,
    /// One fixed `Qn.m` grid; coefficients packed into 16 bits.
    Fixed { int_bits: u8, frac_bits: u8 },
    /// Per-coordinate power-of-two grids tracking `gamma * eta`.
    Adaptive { max_frac_bits: u8 },
}

/// Where per-coordinate counts come from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CounterMode {
    /// No per-coordinate state: one global rate `alpha / sqrt(t)` over
    /// example rounds.
    None,
    /// Exact 32-bit counts of nonzero-gradient rounds.
    Exact,
    /// 8-bit probabilistic counters; the rate uses the unbiased estimate.
    Morris { base: f64 },
}

/// Step-size scale. The presets come from optimizing the regret bound for
/// feasible radius `R`, gradient bound `G`, and rounding ratio `gamma`:
/// the tighter per-coordinate argument gives `sqrt(2) R / sqrt(G^2 +
/// gamma^2)`, the conservative one drops the `sqrt(2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlphaSetting {
    Fixed(f64),
    /// `sqrt(2) * R / sqrt(G^2 + gamma^2)`
    PresetSqrt2,
    /// `R / sqrt(G^2 + gamma^2)`
    PresetUnit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Feasible radius: weights are projected into `[-R, R]`. Must be a
    /// power of two so `R` sits on every grid the trainer touches.
    pub r: f64,
    pub alpha: AlphaSetting,
    /// Rounding-noise-to-step-size ratio: grids satisfy
    /// `eps <= gamma * eta`. Zero disables rounding (adaptive mode only).
    pub gamma: f64,
    /// Bound `G` on per-coordinate loss gradients. Logistic loss on binary
    /// features has `G = 1`; larger observed gradients are clipped and
    /// counted.
    pub gradient_bound: f64,
    pub precision: PrecisionMode,
    pub counter: CounterMode,
    /// Project onto `[-R, R]` each step. On by default; switching it off
    /// voids the regret analysis but is useful for probing.
    pub project: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            r: 1.0,
            alpha: AlphaSetting::PresetSqrt2,
            gamma: 1.0,
            gradient_bound: 1.0,
            precision: PrecisionMode::Float32Control,
            counter: CounterMode::None,
            project: true,
            seed: 0,
        }
    }
}

/// Smallest `n` such that the `Qn.m` range `[-(2^n - eps), 2^n - eps]`
/// covers `[-r, r]` for a power-of-two `r`: one more bit than `log2(r)`,
/// never negative.
pub fn int_bits_for(r: f64) -> u8 {
    let j = fixed_point::pow2_floor_exp(r);
    u8::try_from((j + 1).max(0)).expect("radius exponent fits u8")
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !fixed_point::is_power_of_two(self.r) {
            return Err(Error::param(
                "r",
                format!("{} must be a positive power of two", self.r),
            ));
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(Error::param("gamma", format!("{} is invalid", self.gamma)));
        }
        if !(self.gradient_bound.is_finite() && self.gradient_bound > 0.0) {
            return Err(Error::param(
                "gradient_bound",
                format!("{} is not positive", self.gradient_bound),
            ));
        }
        if let AlphaSetting::Fixed(a) = self.alpha {
            if !(a.is_finite() && a > 0.0) {
                return Err(Error::param("alpha", format!("{a} is not positive")));
            }
        }
        if let CounterMode::Morris { base } = self.counter {
            if !(base.is_finite() && base > 1.0) {
                return Err(Error::param("base", format!("{base} must exceed 1")));
            }
        }
        match self.precision {
            PrecisionMode::Float32Control => {}
            PrecisionMode::Fixed {
                int_bits,
                frac_bits,
            } => {
                let total = u32::from(int_bits) + u32::from(frac_bits) + 1;
                if total > 16 {
                    return Err(Error::param(
                        "precision",
                        format!("fixed Q{int_bits}.{frac_bits} needs {total} bits; the packed store holds 16"),
                    ));
                }
                let spec = GridSpec::new(int_bits, frac_bits)?;
                if self.r > spec.max_value() {
                    return Err(Error::param(
                        "r",
                        format!(
                            "radius {} exceeds the Q{int_bits}.{frac_bits} range {}",
                            self.r,
                            spec.max_value()
                        ),
                    ));
                }
                if self.r < spec.resolution() {
                    return Err(Error::param(
                        "r",
                        format!(
                            "radius {} is below the Q{int_bits}.{frac_bits} resolution {}; the projection boundary must be a grid point",
                            self.r,
                            spec.resolution()
                        ),
                    ));
                }
                if self.gamma == 0.0 {
                    return Err(Error::param(
                        "gamma",
                        "fixed-grid training requires gamma > 0; rounding noise cannot be turned off on a grid",
                    ));
                }
            }
            PrecisionMode::Adaptive { max_frac_bits } => {
                let n = u32::from(int_bits_for(self.r));
                if n + u32::from(max_frac_bits) > 53 {
                    return Err(Error::param(
                        "max_frac_bits",
                        format!(
                            "{max_frac_bits} plus {n} integer bits exceeds the exact-decode limit of 53"
                        ),
                    ));
                }
            }
        }
        Ok(())
    }

    /// The step-size scale actually used.
    pub fn resolved_alpha(&self) -> f64 {
        let g = self.gradient_bound;
        let denom = (g * g + self.gamma * self.gamma).sqrt();
        match self.alpha {
            AlphaSetting::Fixed(a) => a,
            AlphaSetting::PresetSqrt2 => std::f64::consts::SQRT_2 * self.r / denom,
            AlphaSetting::PresetUnit => self.r / denom,
        }
    }
}

/// Clamp onto the feasible interval `[-r, r]`.
pub fn project(value: f64, r: f64) -> f64 {
    value.clamp(-r, r)
}

/// What drives one coordinate's learning rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EffectiveCount {
    /// Global round number (counterless mode).
    Rounds(u64),
    /// Exact per-coordinate count, already incremented for this round.
    Exact(u64),
    /// Unbiased estimate from a probabilistic counter; the rate divides by
    /// `estimate + 1` so a fresh counter yields `alpha` exactly.
    Estimated(f64),
}

/// `alpha / sqrt(n)` with `n` as counted or estimated.
pub fn learning_rate(count: EffectiveCount, alpha: f64) -> f64 {
    let denom = match count {
        EffectiveCount::Rounds(t) => {
            debug_assert!(t >= 1, "rates are computed after counting the round");
            t as f64
        }
        EffectiveCount::Exact(n) => {
            debug_assert!(n >= 1, "rates are computed after counting the round");
            n as f64
        }
        EffectiveCount::Estimated(tau) => tau + 1.0,
    };
    alpha / denom.sqrt()
}

/// Resolution and (possibly floored) rate for one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepPrecision {
    /// Grid resolution for this write; 0 means no rounding.
    pub eps: f64,
    /// The learning rate, floored to keep `eps <= gamma * eta` whenever a
    /// cap forces `eps` above the schedule.
    pub eta: f64,
    /// `eps = 2^grid_exp` when rounding is active.
    pub grid_exp: Option<i32>,
}

/// Pick the write resolution for a step with rate `eta`.
///
/// Adaptive mode wants the coarsest power of two at or below
/// `gamma * eta`, then applies three guards: never coarser than `r` (so
/// the projection boundary stays on-grid), never finer than
/// `2^-max_frac_bits` (bounded storage; the rate is floored to match), and
/// never coarser than the grid this coordinate used before (`prev_exp`),
/// so refinement is one-way and old values stay representable.
pub fn precision_schedule(
    eta: f64,
    precision: &PrecisionMode,
    gamma: f64,
    r: f64,
    prev_exp: Option<i32>,
) -> StepPrecision {
    match *precision {
        PrecisionMode::Float32Control => StepPrecision {
            eps: 0.0,
            eta,
            grid_exp: None,
        },
        PrecisionMode::Fixed { frac_bits, .. } => {
            let exp = -i32::from(frac_bits);
            let eps = fixed_point::pow2(exp);
            StepPrecision {
                eps,
                eta: eta.max(eps / gamma),
                grid_exp: Some(exp),
            }
        }
        PrecisionMode::Adaptive { max_frac_bits } => {
            if gamma == 0.0 {
                return StepPrecision {
                    eps: 0.0,
                    eta,
                    grid_exp: None,
                };
            }
            let target = gamma * eta;
            debug_assert!(target.is_finite() && target > 0.0);
            let mut exp = fixed_point::pow2_floor_exp(target);
            exp = exp.min(fixed_point::pow2_floor_exp(r));
            exp = exp.max(-i32::from(max_frac_bits));
            if let Some(prev) = prev_exp {
                exp = exp.min(prev);
            }
            let eps = fixed_point::pow2(exp);
            StepPrecision {
                eps,
                eta: eta.max(eps / gamma),
                grid_exp: Some(exp),
            }
        }
    }
}

/// One projected, rounded gradient step on a single coordinate:
/// `random_round(project(weight - eta * gradient), eps)`, with `eps = 0`
/// meaning an exact write.
pub fn coordinate_step(
    weight: f64,
    gradient: f64,
    eta: f64,
    eps: f64,
    r: f64,
    rng: &mut Rng,
) -> Result<f64> {
    let target = project(weight - eta * gradient, r);
    if eps == 0.0 {
        Ok(target)
    } else {
        fixed_point::random_round(target, eps, rng)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TrainStats {
    pub examples: u64,
    /// Coordinate updates performed (nonzero-gradient touches).
    pub updates: u64,
    /// Gradients that exceeded `gradient_bound` and were clipped.
    pub clipped_gradients: u64,
    /// Increment attempts on saturated probabilistic counters.
    pub saturated_counters: u64,
    /// Unprojected steps clamped at the grid's representable edge.
    pub range_clamps: u64,
}

#[derive(Debug, Clone, Copy)]
struct FloatSlot {
    weight: f32,
    count: u32,
}

#[derive(Debug, Clone, Copy)]
struct AdaptiveSlot {
    weight: f64,
    grid_exp: Option<i32>,
    count: u32,
}

enum CoordStore {
    Float(HashMap<u64, FloatSlot>),
    Adaptive(HashMap<u64, AdaptiveSlot>),
    FixedPlain(PackedTable<()>),
    FixedExact(PackedTable<u32>),
    FixedMorris(PackedTable<u8>),
}

/// The online learner. Feed examples through [`Trainer::train_step`],
/// which predicts first and learns second, so streaming the training set
/// through it doubles as progressive validation.
pub struct Trainer {
    cfg: TrainConfig,
    alpha: f64,
    grid: Option<GridSpec>,
    store: CoordStore,
    rng: Rng,
    rounds: u64,
    stats: TrainStats,
}

impl Trainer {
    pub fn new(cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let grid = match cfg.precision {
            PrecisionMode::Fixed {
                int_bits,
                frac_bits,
            } => Some(GridSpec::new(int_bits, frac_bits)?),
            _ => None,
        };
        let store = match (cfg.precision, cfg.counter) {
            (PrecisionMode::Float32Control, _) => CoordStore::Float(HashMap::new()),
            (PrecisionMode::Adaptive { .. }, _) => CoordStore::Adaptive(HashMap::new()),
            (PrecisionMode::Fixed { .. }, CounterMode::None) => {
                CoordStore::FixedPlain(PackedTable::new())
            }
            (PrecisionMode::Fixed { .. }, CounterMode::Exact) => {
                CoordStore::FixedExact(PackedTable::new())
            }
            (PrecisionMode::Fixed { .. }, CounterMode::Morris { .. }) => {
                CoordStore::FixedMorris(PackedTable::new())
            }
        };
        let alpha = cfg.resolved_alpha();
        let rng = rng::derive(cfg.seed, rng::label_seed(0, "train"));
        Ok(Trainer {
            cfg,
            alpha,
            grid,
            store,
            rng,
            rounds: 0,
            stats: TrainStats::default(),
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn stats(&self) -> TrainStats {
        self.stats
    }

    pub fn rounds(&self) -> u64 {
        self.rounds
    }

    /// Number of coordinates holding state.
    pub fn coordinate_count(&self) -> usize {
        match &self.store {
            CoordStore::Float(m) => m.len(),
            CoordStore::Adaptive(m) => m.len(),
            CoordStore::FixedPlain(t) => t.len(),
            CoordStore::FixedExact(t) => t.len(),
            CoordStore::FixedMorris(t) => t.len(),
        }
    }

    /// Current weight of a coordinate (0 when never touched).
    pub fn weight(&self, index: u64) -> f64 {
        match &self.store {
            CoordStore::Float(m) => m.get(&index).map_or(0.0, |s| f64::from(s.weight)),
            CoordStore::Adaptive(m) => m.get(&index).map_or(0.0, |s| s.weight),
            CoordStore::FixedPlain(t) => self.decode_fixed(t.get(index).map(|(c, ())| c)),
            CoordStore::FixedExact(t) => self.decode_fixed(t.get(index).map(|(c, _)| c)),
            CoordStore::FixedMorris(t) => self.decode_fixed(t.get(index).map(|(c, _)| c)),
        }
    }

    fn decode_fixed(&self, raw: Option<i16>) -> f64 {
        let spec = self.grid.expect("fixed store implies a grid");
        raw.map_or(0.0, |r| f64::from(r) * spec.resolution())
    }

    /// The model's logit for an example.
    pub fn logit(&self, example: &SparseExample) -> f64 {
        example.indices().iter().map(|&i| self.weight(i)).sum()
    }

    /// Predicted probability of the positive class.
    pub fn predict(&self, example: &SparseExample) -> f64 {
        sigmoid(self.logit(example))
    }

    /// Exact per-coordinate counts, available in `CounterMode::Exact`.
    pub fn exact_counts(&self) -> Option<Vec<(u64, u64)>> {
        match &self.store {
            CoordStore::Float(m) if self.cfg.counter == CounterMode::Exact => {
                let mut v: Vec<_> = m.iter().map(|(&i, s)| (i, u64::from(s.count))).collect();
                v.sort_unstable();
                Some(v)
            }
            CoordStore::Adaptive(m) if self.cfg.counter == CounterMode::Exact => {
                let mut v: Vec<_> = m.iter().map(|(&i, s)| (i, u64::from(s.count))).collect();
                v.sort_unstable();
                Some(v)
            }
            CoordStore::FixedExact(t) => {
                let mut v: Vec<_> = t.iter().map(|(i, _, n)| (i, u64::from(n))).collect();
                v.sort_unstable();
                Some(v)
            }
            _ => None,
        }
    }

    /// Predict on the current model, then update it on the example.
    /// Returns the pre-update prediction.
    pub fn train_step(&mut self, example: &SparseExample) -> Result<f64> {
        self.rounds += 1;
        self.stats.examples += 1;
        let p = self.predict(example);
        if example.indices().is_empty() {
            return Ok(p);
        }

        // Binary features: one shared gradient magnitude per example.
        let y = if example.label { 1.0 } else { 0.0 };
        let mut g = p - y;
        if g == 0.0 {
            return Ok(p);
        }
        if g.abs() > self.cfg.gradient_bound {
            g = g.signum() * self.cfg.gradient_bound;
            self.stats.clipped_gradients += 1;
        }

        for k in 0..example.indices().len() {
            let index = example.indices()[k];
            self.update_coordinate(index, g)?;
            self.stats.updates += 1;
        }
        Ok(p)
    }

    fn update_coordinate(&mut self, index: u64, g: f64) -> Result<()> {
        let cfg = self.cfg.clone();
        let alpha = self.alpha;
        let rounds = self.rounds;

        // Count first, then rate: the very first touch uses n = 1.
        match &mut self.store {
            CoordStore::Float(map) => {
                let slot = map.entry(index).or_insert(FloatSlot {
                    weight: 0.0,
                    count: initial_count(&cfg.counter),
                });
                let count = advance_count(
                    &mut slot.count,
                    &cfg.counter,
                    rounds,
                    &mut self.rng,
                    &mut self.stats.saturated_counters,
                );
                let eta = learning_rate(count, alpha);
                let sp = precision_schedule(eta, &cfg.precision, cfg.gamma, cfg.r, None);
                debug_assert_eq!(sp.eps, 0.0);
                let target = f64::from(slot.weight) - sp.eta * g;
                let projected = if cfg.project {
                    project(target, cfg.r)
                } else {
                    target
                };
                slot.weight = projected as f32;
            }
            CoordStore::Adaptive(map) => {
                let slot = map.entry(index).or_insert(AdaptiveSlot {
                    weight: 0.0,
                    grid_exp: None,
                    count: initial_count(&cfg.counter),
                });
                let count = advance_count(
                    &mut slot.count,
                    &cfg.counter,
                    rounds,
                    &mut self.rng,
                    &mut self.stats.saturated_counters,
                );
                let eta = learning_rate(count, alpha);
                let sp = precision_schedule(eta, &cfg.precision, cfg.gamma, cfg.r, slot.grid_exp);
                slot.grid_exp = sp.grid_exp;
                let target = slot.weight - sp.eta * g;
                let projected = if cfg.project {
                    project(target, cfg.r)
                } else {
                    target
                };
                slot.weight = if sp.eps == 0.0 {
                    projected
                } else {
                    fixed_point::random_round(projected, sp.eps, &mut self.rng)?
                };
            }
            CoordStore::FixedPlain(table) => {
                let (coeff, ()) = table.entry(index, 0, ());
                let mut raw = *coeff;
                Self::fixed_update(
                    &mut raw,
                    EffectiveCount::Rounds(rounds),
                    g,
                    &cfg,
                    alpha,
                    self.grid.expect("fixed mode has a grid"),
                    &mut self.rng,
                    &mut self.stats.range_clamps,
                )?;
                *table.entry(index, 0, ()).0 = raw;
            }
            CoordStore::FixedExact(table) => {
                let (coeff, count) = table.entry(index, 0, 0);
                *count = count.saturating_add(1);
                let n = u64::from(*count);
                let mut raw = *coeff;
                Self::fixed_update(
                    &mut raw,
                    EffectiveCount::Exact(n),
                    g,
                    &cfg,
                    alpha,
                    self.grid.expect("fixed mode has a grid"),
                    &mut self.rng,
                    &mut self.stats.range_clamps,
                )?;
                *table.entry(index, 0, 0).0 = raw;
            }
            CoordStore::FixedMorris(table) => {
                let base = match cfg.counter {
                    CounterMode::Morris { base } => base,
                    _ => unreachable!("morris store implies morris counter"),
                };
                let (coeff, level) = table.entry(index, 0, 1);
                let mut counter = MorrisCounter::from_level(*level);
                if counter.increment(base, &mut self.rng) == IncrementOutcome::Saturated {
                    self.stats.saturated_counters += 1;
                }
                *level = counter.level();
                let estimate = counter.estimate(base);
                let mut raw = *coeff;
                Self::fixed_update(
                    &mut raw,
                    EffectiveCount::Estimated(estimate),
                    g,
                    &cfg,
                    alpha,
                    self.grid.expect("fixed mode has a grid"),
                    &mut self.rng,
                    &mut self.stats.range_clamps,
                )?;
                *table.entry(index, 0, 1).0 = raw;
            }
        }
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn fixed_update(
        raw: &mut i16,
        count: EffectiveCount,
        g: f64,
        cfg: &TrainConfig,
        alpha: f64,
        grid: GridSpec,
        rng: &mut Rng,
        range_clamps: &mut u64,
    ) -> Result<()> {
        let eta = learning_rate(count, alpha);
        let sp = precision_schedule(eta, &cfg.precision, cfg.gamma, cfg.r, None);
        let weight = f64::from(*raw) * grid.resolution();
        let target = weight - sp.eta * g;
        let projected = if cfg.project {
            project(target, cfg.r)
        } else {
            // Unprojected fixed mode still cannot leave the grid's range.
            let limit = grid.max_value();
            let clamped = target.clamp(-limit, limit);
            if clamped != target {
                *range_clamps += 1;
            }
            clamped
        };
        let rounded = grid.round_value(projected, rng)?;
        *raw = i16::try_from(rounded.raw()).expect("16-bit grid raws fit i16");
        Ok(())
    }

    /// Snapshot the model for storage. Entries come out sorted by index;
    /// zero weights are kept because their counters are real state.
    pub fn export_model(&self) -> StoredModel {
        let counter_kind = match self.cfg.counter {
            CounterMode::None => CounterKind::None,
            CounterMode::Exact => CounterKind::Exact,
            CounterMode::Morris { .. } => CounterKind::Morris,
        };
        let base = match self.cfg.counter {
            CounterMode::Morris { base } => base,
            _ => 0.0,
        };
        let meta = ModelMeta {
            counter: counter_kind,
            base,
            r: self.cfg.r,
            alpha: self.alpha,
            gamma: self.cfg.gamma,
            seed: self.cfg.seed,
            config_digest: [0; 32],
        };

        let cell = |count: u32| -> CounterCell {
            match self.cfg.counter {
                CounterMode::None => CounterCell::None,
                CounterMode::Exact => CounterCell::Exact(count),
                CounterMode::Morris { .. } => {
                    CounterCell::Morris(u8::try_from(count.min(255)).expect("level fits u8"))
                }
            }
        };

        let payload = match &self.store {
            CoordStore::Float(map) => {
                let mut entries: Vec<FloatEntry> = map
                    .iter()
                    .map(|(&index, slot)| FloatEntry {
                        index,
                        weight: slot.weight,
                        count: cell(slot.count),
                    })
                    .collect();
                entries.sort_unstable_by_key(|e| e.index);
                ModelPayload::Float32(entries)
            }
            CoordStore::Adaptive(map) => {
                let int_bits = int_bits_for(self.cfg.r);
                let mut entries: Vec<AdaptiveEntry> = map
                    .iter()
                    .map(|(&index, slot)| AdaptiveEntry {
                        index,
                        weight: slot.weight,
                        grid_exp: slot.grid_exp.map_or(crate::store::EXACT_EXP, |e| {
                            i16::try_from(e).expect("grid exponents are small")
                        }),
                        count: cell(slot.count),
                    })
                    .collect();
                entries.sort_unstable_by_key(|e| e.index);
                ModelPayload::Adaptive {
                    int_bits,
                    entries,
                }
            }
            CoordStore::FixedPlain(table) => {
                self.grid_payload(table.iter().map(|(i, c, ())| (i, c, CounterCell::None)))
            }
            CoordStore::FixedExact(table) => self.grid_payload(
                table
                    .iter()
                    .map(|(i, c, n)| (i, c, CounterCell::Exact(n))),
            ),
            CoordStore::FixedMorris(table) => self.grid_payload(
                table
                    .iter()
                    .map(|(i, c, l)| (i, c, CounterCell::Morris(l))),
            ),
        };
        StoredModel { meta, payload }
    }

    fn grid_payload(
        &self,
        entries: impl Iterator<Item = (u64, i16, CounterCell)>,
    ) -> ModelPayload {
        let spec = self.grid.expect("fixed store implies a grid");
        let mut out: Vec<GridEntry> = entries
            .map(|(index, raw, count)| GridEntry {
                index,
                raw: i32::from(raw),
                count,
            })
            .collect();
        out.sort_unstable_by_key(|e| e.index);
        ModelPayload::Grid { spec, entries: out }
    }
}

fn initial_count(counter: &CounterMode) -> u32 {
    match counter {
        CounterMode::Morris { .. } => 1,
        _ => 0,
    }
}

/// Advance a coordinate's count cell and return what the rate should use.
fn advance_count(
    cell: &mut u32,
    counter: &CounterMode,
    rounds: u64,
    rng: &mut Rng,
    saturated: &mut u64,
) -> EffectiveCount {
    match counter {
        CounterMode::None => EffectiveCount::Rounds(rounds),
        CounterMode::Exact => {
            *cell = cell.saturating_add(1);
            EffectiveCount::Exact(u64::from(*cell))
        }
        CounterMode::Morris { base } => {
            let mut c = MorrisCounter::from_level(u8::try_from((*cell).min(255)).unwrap());
            if c.increment(*base, rng) == IncrementOutcome::Saturated {
                *saturated += 1;
            }
            *cell = u32::from(c.level());
            EffectiveCount::Estimated(c.estimate(*base))
        }
    }
}

/// A single-coordinate learner with the same update rule, for regret
/// experiments against an adversarial gradient sequence.
#[derive(Debug, Clone)]
pub struct Ogd1d {
    pub alpha: f64,
    pub gamma: f64,
    pub r: f64,
    counter: Ogd1dCounter,
    max_frac_bits: u8,
    weight: f64,
    rounds: u64,
    morris: MorrisCounter,
    grid_exp: Option<i32>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ogd1dCounter {
    /// Exact round count: `eta_t = alpha / sqrt(t)`.
    Rounds,
    /// Probabilistic count drives the rate.
    Morris { base: f64 },
}

impl Ogd1d {
    pub fn new(
        alpha: f64,
        gamma: f64,
        r: f64,
        counter: Ogd1dCounter,
        max_frac_bits: u8,
    ) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::param("alpha", format!("{alpha} is not positive")));
        }
        if !(gamma.is_finite() && gamma >= 0.0) {
            return Err(Error::param("gamma", format!("{gamma} is invalid")));
        }
        if !fixed_point::is_power_of_two(r) {
            return Err(Error::param(
                "r",
                format!("{r} must be a positive power of two"),
            ));
        }
        if let Ogd1dCounter::Morris { base } = counter {
            if !(base.is_finite() && base > 1.0) {
                return Err(Error::param("base", format!("{base} must exceed 1")));
            }
        }
        Ok(Ogd1d {
            alpha,
            gamma,
            r,
            counter,
            max_frac_bits,
            weight: 0.0,
            rounds: 0,
            morris: MorrisCounter::new(),
            grid_exp: None,
        })
    }

    /// The point played this round.
    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn rounds(&self) -> u64 {
        self.rounds
    }

    /// See the round's gradient and update. Zero gradients leave the state
    /// untouched apart from the round number.
    pub fn observe(&mut self, gradient: f64, rng: &mut Rng) -> Result<()> {
        self.rounds += 1;
        if gradient == 0.0 {
            return Ok(());
        }
        let count = match self.counter {
            Ogd1dCounter::Rounds => EffectiveCount::Rounds(self.rounds),
            Ogd1dCounter::Morris { base } => {
                self.morris.increment(base, rng);
                EffectiveCount::Estimated(self.morris.estimate(base))
            }
        };
        let eta = learning_rate(count, self.alpha);
        let sp = precision_schedule(
            eta,
            &PrecisionMode::Adaptive {
                max_frac_bits: self.max_frac_bits,
            },
            self.gamma,
            self.r,
            self.grid_exp,
        );
        self.grid_exp = sp.grid_exp;
        self.weight = coordinate_step(self.weight, gradient, sp.eta, sp.eps, self.r, rng)?;
        Ok(())
    }
}
