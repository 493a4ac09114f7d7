//! Fixed-point coefficient grids and unbiased randomized rounding.
//!
//! A `Qn.m` grid stores signed values with `n` integer bits, `m` fractional
//! bits, and one sign bit, so a coefficient costs `K = n + m + 1` bits. The
//! grid points are the integer multiples of the resolution `eps = 2^-m`
//! inside the symmetric range `[-(2^n - eps), 2^n - eps]`.
//!
//! Writing a real number onto such a grid uses *randomized* rounding: round
//! up with probability proportional to the distance from the lower neighbor,
//! down otherwise. The result is a random variable whose expectation is the
//! original number, which is what lets a learner keep coefficients on a very
//! coarse grid without biasing its updates.

use crate::error::{Error, Result};
use crate::rng::Rng;
use rand::Rng as _;

const EXP_BIAS: i32 = 1023;
const MANTISSA_MASK: u64 = (1u64 << 52) - 1;

/// 2^e as an exact f64. `e` must be in the normal range [-1022, 1023].
pub fn pow2(e: i32) -> f64 {
    assert!(
        (-1022..=1023).contains(&e),
        "pow2 exponent {e} outside normal f64 range"
    );
    f64::from_bits(((EXP_BIAS + e) as u64) << 52)
}

/// True when `x` is exactly a (normal, positive) power of two.
pub fn is_power_of_two(x: f64) -> bool {
    if !(x.is_finite() && x > 0.0) {
        return false;
    }
    let bits = x.to_bits();
    let exp_field = (bits >> 52) & 0x7ff;
    exp_field != 0 && bits & MANTISSA_MASK == 0
}

/// Largest `j` with `2^j <= x`, for finite `x > 0`, read straight off the
/// f64 exponent field so boundary cases cannot be spoiled by a lossy log.
/// Subnormal inputs report a floor of -1075, below every usable grid.
pub fn pow2_floor_exp(x: f64) -> i32 {
    debug_assert!(x.is_finite() && x > 0.0, "pow2_floor_exp needs x > 0");
    let exp_field = ((x.to_bits() >> 52) & 0x7ff) as i32;
    if exp_field == 0 {
        -1075
    } else {
        exp_field - EXP_BIAS
    }
}

/// Grid resolution `eps = 2^-m` for `m` fractional bits.
///
/// Accepts the full standalone range `m <= 62`; negative `m` gives a grid
/// coarser than the integers (`m = -2` spaces points 4 apart).
pub fn grid_resolution(m: i32) -> Result<f64> {
    if !(-62..=62).contains(&m) {
        return Err(Error::param("m", format!("{m} not in [-62, 62]")));
    }
    Ok(pow2(-m))
}

/// A signed `Qn.m` fixed-point format: `n` integer bits, `m` fractional
/// bits, one sign bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridSpec {
    int_bits: u8,
    frac_bits: u8,
}

impl GridSpec {
    /// `n + m <= 53` keeps every raw count inside f64's exact-integer range,
    /// so decode never rounds.
    pub fn new(int_bits: u8, frac_bits: u8) -> Result<Self> {
        let total = u32::from(int_bits) + u32::from(frac_bits);
        if total > 53 {
            return Err(Error::param(
                "int_bits + frac_bits",
                format!("{total} exceeds 53, the exact-decode limit"),
            ));
        }
        Ok(GridSpec {
            int_bits,
            frac_bits,
        })
    }

    pub fn int_bits(&self) -> u8 {
        self.int_bits
    }

    pub fn frac_bits(&self) -> u8 {
        self.frac_bits
    }

    /// Bits per stored coefficient, sign included.
    pub fn total_bits(&self) -> u32 {
        u32::from(self.int_bits) + u32::from(self.frac_bits) + 1
    }

    /// Grid spacing `2^-m`.
    pub fn resolution(&self) -> f64 {
        pow2(-i32::from(self.frac_bits))
    }

    /// Largest raw magnitude: `2^(n+m) - 1`.
    pub fn max_raw(&self) -> i64 {
        (1i64 << (u32::from(self.int_bits) + u32::from(self.frac_bits))) - 1
    }

    /// Largest representable value: `2^n - 2^-m`.
    pub fn max_value(&self) -> f64 {
        self.max_raw() as f64 * self.resolution()
    }

    /// Put `value` on this grid, failing rather than silently rounding.
    pub fn encode(&self, value: f64) -> Result<GridValue> {
        if !value.is_finite() {
            return Err(Error::NonFinite { context: "encode" });
        }
        let eps = self.resolution();
        let q = value / eps;
        if q.abs() > self.max_raw() as f64 {
            return Err(Error::OutOfRange {
                value,
                limit: self.max_value(),
            });
        }
        if q != q.trunc() {
            return Err(Error::OffGrid {
                value,
                resolution: eps,
            });
        }
        Ok(GridValue {
            raw: q as i64,
            spec: *self,
        })
    }

    /// Randomly round `value` onto this grid and encode the result.
    ///
    /// Works raw-integer-first so the stored point is exact by construction.
    /// Fails with `OutOfRange` when `|value|` exceeds the grid maximum; any
    /// in-range value rounds to an in-range neighbor.
    pub fn round_value(&self, value: f64, rng: &mut Rng) -> Result<GridValue> {
        if !value.is_finite() {
            return Err(Error::NonFinite {
                context: "round_value",
            });
        }
        if value.abs() > self.max_value() {
            return Err(Error::OutOfRange {
                value,
                limit: self.max_value(),
            });
        }
        let eps = self.resolution();
        let q = value / eps;
        let floor = q.floor();
        let raw = if floor == q {
            floor as i64
        } else {
            let p_up = q - floor;
            if rng.random::<f64>() < p_up {
                floor as i64 + 1
            } else {
                floor as i64
            }
        };
        // |value| <= max_value guarantees floor and floor+1 both fit.
        debug_assert!(raw.abs() <= self.max_raw());
        Ok(GridValue { raw, spec: *self })
    }
}

/// One value pinned to a grid: the integer multiple plus its format.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridValue {
    raw: i64,
    spec: GridSpec,
}

impl GridValue {
    pub fn from_raw(raw: i64, spec: GridSpec) -> Result<Self> {
        if raw.abs() > spec.max_raw() {
            return Err(Error::OutOfRange {
                value: raw as f64 * spec.resolution(),
                limit: spec.max_value(),
            });
        }
        Ok(GridValue { raw, spec })
    }

    pub fn raw(&self) -> i64 {
        self.raw
    }

    pub fn spec(&self) -> GridSpec {
        self.spec
    }

    /// The real value, exactly. `raw` fits in 53 bits and the resolution is
    /// a power of two, so this multiplication is lossless.
    pub fn value(&self) -> f64 {
        self.raw as f64 * self.spec.resolution()
    }
}

/// Unbiased randomized rounding of `beta` onto the grid `eps * Z`.
///
/// Returns the lower neighbor `a = eps * floor(beta/eps)` or the upper
/// neighbor `b = a + eps`, choosing `b` with probability `(beta - a) / eps`,
/// so the expectation is `beta` itself. A value already on the grid comes
/// back unchanged without consuming randomness.
///
/// `eps` may be any positive finite spacing, though only power-of-two
/// spacings guarantee the arithmetic here is exact.
pub fn random_round(beta: f64, eps: f64, rng: &mut Rng) -> Result<f64> {
    if !beta.is_finite() {
        return Err(Error::NonFinite {
            context: "random_round",
        });
    }
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::param("eps", format!("{eps} is not positive")));
    }
    let q = beta / eps;
    if !q.is_finite() {
        return Err(Error::NonFinite {
            context: "random_round quotient",
        });
    }
    let floor = q.floor();
    if floor == q {
        return Ok(beta);
    }
    let a = eps * floor;
    let b = eps * (floor + 1.0);
    let p_up = ((beta - a) / eps).clamp(0.0, 1.0);
    Ok(if rng.random::<f64>() < p_up { b } else { a })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;

    #[test]
    fn pow2_matches_reference() {
        assert_eq!(pow2(0), 1.0);
        assert_eq!(pow2(3), 8.0);
        assert_eq!(pow2(-13), 0.0001220703125);
        assert_eq!(pow2(-62), 2.0f64.powi(-62));
        assert_eq!(pow2(62), 2.0f64.powi(62));
    }

    #[test]
    fn resolution_examples() {
        assert_eq!(grid_resolution(0).unwrap(), 1.0);
        assert_eq!(grid_resolution(13).unwrap(), 0.0001220703125);
        assert_eq!(grid_resolution(7).unwrap(), 0.0078125);
        assert_eq!(grid_resolution(-2).unwrap(), 4.0);
        assert!(grid_resolution(63).is_err());
        assert!(grid_resolution(-63).is_err());
    }

    #[test]
    fn power_of_two_detection() {
        for x in [1.0, 2.0, 0.5, 0.25, 1024.0, pow2(-62)] {
            assert!(is_power_of_two(x), "{x}");
        }
        for x in [0.0, -2.0, 3.0, 0.3, f64::NAN, f64::INFINITY, 1.5] {
            assert!(!is_power_of_two(x), "{x}");
        }
    }

    #[test]
    fn floor_exponent_hits_boundaries() {
        assert_eq!(pow2_floor_exp(1.0), 0);
        assert_eq!(pow2_floor_exp(0.25), -2);
        assert_eq!(pow2_floor_exp(0.3), -2);
        assert_eq!(pow2_floor_exp(0.2499999), -3);
        assert_eq!(pow2_floor_exp(7.9), 2);
        assert_eq!(pow2_floor_exp(8.0), 3);
    }

    #[test]
    fn spec_bit_accounting() {
        let q2_13 = GridSpec::new(2, 13).unwrap();
        assert_eq!(q2_13.total_bits(), 16);
        assert_eq!(q2_13.resolution(), 0.0001220703125);
        assert_eq!(q2_13.max_raw(), 32767);
        assert_eq!(q2_13.max_value(), 4.0 - 0.0001220703125);
        assert!(GridSpec::new(30, 30).is_err());
    }

    #[test]
    fn encode_examples() {
        let q2_2 = GridSpec::new(2, 2).unwrap();
        assert_eq!(q2_2.encode(0.75).unwrap().raw(), 3);
        assert_eq!(q2_2.encode(-3.75).unwrap().raw(), -15);
        assert_eq!(q2_2.encode(0.0).unwrap().raw(), 0);

        let q2_13 = GridSpec::new(2, 13).unwrap();
        assert_eq!(q2_13.encode(-2.0).unwrap().raw(), -16384);

        assert!(matches!(q2_2.encode(0.3), Err(Error::OffGrid { .. })));
        assert!(matches!(q2_2.encode(4.0), Err(Error::OutOfRange { .. })));
        assert!(matches!(
            q2_2.encode(f64::NAN),
            Err(Error::NonFinite { .. })
        ));
    }

    #[test]
    fn decode_is_exact() {
        let q2_13 = GridSpec::new(2, 13).unwrap();
        for raw in [-32767i64, -16384, -1, 0, 1, 8192, 32767] {
            let v = GridValue::from_raw(raw, q2_13).unwrap();
            assert_eq!(v.value(), raw as f64 * 0.0001220703125);
            assert_eq!(q2_13.encode(v.value()).unwrap().raw(), raw);
        }
        assert!(GridValue::from_raw(32768, q2_13).is_err());
    }

    #[test]
    fn on_grid_value_never_moves() {
        let mut rng = rng::from_seed(11);
        for _ in 0..200 {
            assert_eq!(random_round(0.5, 0.25, &mut rng).unwrap(), 0.5);
            assert_eq!(random_round(-1.25, 0.25, &mut rng).unwrap(), -1.25);
            assert_eq!(random_round(0.0, 0.125, &mut rng).unwrap(), 0.0);
        }
    }

    #[test]
    fn rounding_frequencies_match_distances() {
        // 0.3 on the unit grid: up to 1.0 w.p. 0.3, down to 0.0 w.p. 0.7.
        let mut rng = rng::from_seed(42);
        let n = 100_000;
        let mut ups = 0u32;
        for _ in 0..n {
            let r = random_round(0.3, 1.0, &mut rng).unwrap();
            assert!(r == 0.0 || r == 1.0, "left the neighbor pair: {r}");
            if r == 1.0 {
                ups += 1;
            }
        }
        let freq = f64::from(ups) / f64::from(n);
        // 4 sigma of a Bernoulli(0.3) mean over 1e5 draws.
        let tol = 4.0 * (0.3f64 * 0.7 / f64::from(n)).sqrt();
        assert!((freq - 0.3).abs() < tol, "freq {freq}");
    }

    #[test]
    fn negative_value_rounds_between_its_neighbors() {
        // -0.3 on the quarter grid sits between -0.5 and -0.25, and is 80%
        // of the way toward -0.25.
        let mut rng = rng::from_seed(43);
        let n = 100_000;
        let mut highs = 0u32;
        for _ in 0..n {
            let r = random_round(-0.3, 0.25, &mut rng).unwrap();
            assert!(r == -0.5 || r == -0.25, "left the neighbor pair: {r}");
            if r == -0.25 {
                highs += 1;
            }
        }
        let freq = f64::from(highs) / f64::from(n);
        let tol = 4.0 * (0.8f64 * 0.2 / f64::from(n)).sqrt();
        assert!((freq - 0.8).abs() < tol, "freq {freq}");
    }

    #[test]
    fn rounding_is_unbiased_at_fixed_seed() {
        let mut rng = rng::from_seed(1234);
        let beta = 0.3;
        let n = 100_000u32;
        let mut sum = 0.0;
        for _ in 0..n {
            sum += random_round(beta, 1.0, &mut rng).unwrap();
        }
        let mean = sum / f64::from(n);
        // Variance of one draw is p(1-p) = 0.21; allow 3 sigma.
        let tol = 3.0 * (0.21f64 / f64::from(n)).sqrt();
        assert!((mean - beta).abs() < tol, "mean {mean}");
    }

    #[test]
    fn round_value_produces_exact_neighbors() {
        let spec = GridSpec::new(2, 3).unwrap();
        let mut rng = rng::from_seed(5);
        for _ in 0..500 {
            let v = spec.round_value(0.3, &mut rng).unwrap();
            assert!(v.raw() == 2 || v.raw() == 3);
        }
        // q2.3 tops out at 4 - 1/8 = 3.875.
        assert_eq!(spec.round_value(3.875, &mut rng).unwrap().raw(), 31);
        assert!(matches!(
            spec.round_value(3.9, &mut rng),
            Err(Error::OutOfRange { .. })
        ));
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut rng = rng::from_seed(0);
        assert!(random_round(f64::NAN, 0.25, &mut rng).is_err());
        assert!(random_round(f64::INFINITY, 0.25, &mut rng).is_err());
        assert!(random_round(0.3, 0.0, &mut rng).is_err());
        assert!(random_round(0.3, -1.0, &mut rng).is_err());
        assert!(random_round(0.3, f64::NAN, &mut rng).is_err());
        // Quotient overflow is caught rather than wrapped.
        assert!(random_round(1e300, pow2(-62) * 1e-10, &mut rng).is_err());
    }

    proptest! {
        #[test]
        fn perturbation_stays_below_one_step(
            beta in -1000.0f64..1000.0,
            mexp in -8i32..30,
            seed in any::<u64>(),
        ) {
            let eps = pow2(-mexp);
            let mut rng = rng::from_seed(seed);
            let r = random_round(beta, eps, &mut rng).unwrap();
            prop_assert!((r - beta).abs() < eps, "beta {beta} eps {eps} r {r}");
        }

        #[test]
        fn result_is_on_the_grid(
            beta in -4.0f64..4.0,
            mexp in 0i32..20,
            seed in any::<u64>(),
        ) {
            let eps = pow2(-mexp);
            let mut rng = rng::from_seed(seed);
            let r = random_round(beta, eps, &mut rng).unwrap();
            let q = r / eps;
            prop_assert_eq!(q, q.trunc());
        }

        #[test]
        fn coarse_grids_nest_in_fine_grids(
            raw in -1000i64..1000,
            coarse in 0u8..10,
            extra in 0u8..6,
        ) {
            // Any point of the 2^-m grid is a point of every 2^-m' grid
            // with m' >= m.
            let coarse_spec = GridSpec::new(12, coarse).unwrap();
            let fine_spec = GridSpec::new(12, coarse + extra).unwrap();
            let v = GridValue::from_raw(raw, coarse_spec).unwrap().value();
            let fine = fine_spec.encode(v).unwrap();
            prop_assert_eq!(fine.value(), v);
        }

        #[test]
        fn encode_decode_round_trip(raw in -32767i64..=32767) {
            let spec = GridSpec::new(2, 13).unwrap();
            let v = GridValue::from_raw(raw, spec).unwrap();
            prop_assert_eq!(spec.encode(v.value()).unwrap().raw(), raw);
        }
    }
}
