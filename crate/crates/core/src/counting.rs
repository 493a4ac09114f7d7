//! Approximate event counting in eight bits.
//!
//! A probabilistic counter keeps a small level `C` instead of the true count
//! `t`. Each `increment` bumps the level with probability `base^-C`, so the
//! level grows like `log_base(t)` and one byte covers astronomically many
//! events. The estimator
//!
//! ```text
//! tau(C) = (base^C - base) / (base - 1)
//! ```
//!
//! is unbiased: after `t` increments, `E[tau(C)] = t` exactly, for any
//! `base > 1`. Smaller bases track `t` more tightly at the cost of higher
//! levels; `base = 1.1` keeps the relative noise low enough to drive
//! per-coordinate learning rates while still fitting in a byte.
//!
//! [`confidence_thresholds`] gives two-sided deviation thresholds for the
//! estimate after `t` of `horizon` total increments: the estimate drops
//! below `t / (base * c * ln(horizon)) - 1` with probability at most
//! `horizon^-(c-1)`, and exceeds
//! `e * t / (base - 1) * base^(sqrt(2 c log_base(horizon)) + 2)` with
//! probability at most `horizon^-c`. Logs are natural.

use crate::error::{Error, Result};
use crate::rng::Rng;
use rand::Rng as _;

/// Level value at which the counter stops moving.
pub const SATURATION_LEVEL: u8 = u8::MAX;

/// What an [`MorrisCounter::increment`] call did.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IncrementOutcome {
    /// The probabilistic coin came up tails; the level is unchanged.
    Unchanged,
    /// The level went up by one.
    Incremented,
    /// The level is pinned at [`SATURATION_LEVEL`]; the event was dropped.
    /// Callers that care should count these: a saturated counter
    /// underestimates from here on.
    Saturated,
}

/// An eight-bit probabilistic counter. Fresh counters start at level 1,
/// which estimates zero events.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MorrisCounter {
    level: u8,
}

impl Default for MorrisCounter {
    fn default() -> Self {
        Self::new()
    }
}

impl MorrisCounter {
    pub fn new() -> Self {
        MorrisCounter { level: 1 }
    }

    /// Rebuild from a stored level byte. Level 0 is not produced by this
    /// type; it is mapped to a fresh counter so foreign bytes stay usable.
    pub fn from_level(level: u8) -> Self {
        MorrisCounter {
            level: level.max(1),
        }
    }

    pub fn level(&self) -> u8 {
        self.level
    }

    /// Record one event: with probability `base^-level` the level rises.
    pub fn increment(&mut self, base: f64, rng: &mut Rng) -> IncrementOutcome {
        debug_assert!(base > 1.0, "counter base must exceed 1");
        if self.level == SATURATION_LEVEL {
            return IncrementOutcome::Saturated;
        }
        if rng.random::<f64>() < increment_probability(self.level, base) {
            self.level += 1;
            IncrementOutcome::Incremented
        } else {
            IncrementOutcome::Unchanged
        }
    }

    /// Unbiased estimate of the number of increments so far.
    pub fn estimate(&self, base: f64) -> f64 {
        debug_assert!(base > 1.0, "counter base must exceed 1");
        (base.powi(i32::from(self.level)) - base) / (base - 1.0)
    }
}

/// Probability that a counter at `level` advances on the next increment.
pub fn increment_probability(level: u8, base: f64) -> f64 {
    base.powi(-i32::from(level))
}

/// Two-sided deviation thresholds for the estimate after `t` of `horizon`
/// increments, at confidence parameter `c`.
///
/// Returns `(lower, upper)`: the estimate falls below `lower` with
/// probability at most `horizon^-(c-1)` and above `upper` with probability
/// at most `horizon^-c`. `horizon >= 2` so the logarithms are positive.
pub fn confidence_thresholds(t: u64, horizon: u64, c: f64, base: f64) -> Result<(f64, f64)> {
    if horizon < 2 {
        return Err(Error::param("horizon", format!("{horizon} < 2")));
    }
    if t > horizon {
        return Err(Error::param(
            "t",
            format!("{t} exceeds the horizon {horizon}"),
        ));
    }
    if !(c.is_finite() && c > 0.0) {
        return Err(Error::param("c", format!("{c} is not positive")));
    }
    if !(base.is_finite() && base > 1.0) {
        return Err(Error::param("base", format!("{base} must exceed 1")));
    }
    let t = t as f64;
    let ln_horizon = (horizon as f64).ln();
    let lower = t / (base * c * ln_horizon) - 1.0;
    let log_base_horizon = ln_horizon / base.ln();
    let exponent = (2.0 * c * log_base_horizon).sqrt() + 2.0;
    let upper = std::f64::consts::E * t / (base - 1.0) * base.powf(exponent);
    Ok((lower, upper))
}
