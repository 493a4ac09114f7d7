//! Logistic probabilities, losses, and rounding-error bounds.
//!
//! The label model is `P(y = 1 | x) = sigmoid(beta . x)` with the log loss
//! `-y ln(p) - (1 - y) ln(1 - p)`, natural log. Everything is computed in
//! logit space through `softplus` so huge magnitudes neither overflow nor
//! collapse to `ln(0)`.
//!
//! For binary features each loss gradient coordinate is `(p - y) x_i`, which
//! lies in `[-1, 1]`; that unit bound is what the training defaults assume.
//!
//! [`error_bounds`] quantifies what rounding coefficients to a grid does to
//! a single prediction's loss. With `delta = |beta.x - beta_hat.x|`:
//! the loss increases by at most `delta` (additive) and by a factor of at
//! most `e^delta - 1` (relative), and a priori `delta <= eps * k` when `k`
//! active binary features were each perturbed by less than `eps`. Under
//! unbiased rounding the *expected* relative increase is at most
//! `2 sqrt(2 pi k) * exp(eps^2 k / 2) * eps`, which stays modest even for
//! very coarse grids.

use crate::error::{Error, Result};

/// `1 / (1 + e^-z)`, saturating cleanly at the ends.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow for large `z`.
pub fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Log loss of predicting logit `z` against `label`.
///
/// Equal to `softplus(z) - y z` with `y` in {0, 1}; always finite and
/// non-negative.
pub fn loss_from_logit(z: f64, label: bool) -> f64 {
    if label {
        softplus(-z)
    } else {
        softplus(z)
    }
}

/// Log loss charged against a reported probability of the positive
/// class. Infinite when a wrong prediction was reported with certainty;
/// that is the honest price, not an error.
pub fn loss_from_probability(p: f64, label: bool) -> f64 {
    if label {
        -p.ln()
    } else {
        -(-p).ln_1p()
    }
}

/// Dot product of a weight lookup with a binary feature vector.
pub fn binary_logit(weight: impl Fn(u64) -> f64, indices: &[u64]) -> f64 {
    indices.iter().map(|&i| weight(i)).sum()
}

/// Dot product with explicit feature values, for raw (non-binarized) data.
pub fn weighted_logit(weight: impl Fn(u64) -> f64, terms: &[(u64, f64)]) -> f64 {
    terms.iter().map(|&(i, v)| weight(i) * v).sum()
}

/// Everything [`error_bounds`] knows about one (example, rounding) pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBounds {
    /// Realized logit perturbation `|z - z_rounded|`.
    pub delta: f64,
    /// Worst-case additive loss increase for this perturbation: `delta`.
    pub additive_bound: f64,
    /// Worst-case relative loss increase: `e^delta - 1`.
    pub relative_bound: f64,
    /// A priori perturbation limit before rounding happened: `eps * k`.
    pub apriori_delta: f64,
    /// Expected relative increase under unbiased rounding of `k` binary
    /// features at resolution `eps`; independent of this realization.
    pub expected_relative_bound: f64,
    /// Actual loss change, `loss(z_rounded) - loss(z)`. May be negative:
    /// rounding can get lucky.
    pub realized_additive: f64,
    /// Actual relative loss change. `None` when the exact loss is zero,
    /// where relative error is undefined.
    pub realized_relative: Option<f64>,
}

/// Expected relative loss increase from unbiased rounding: the bound
/// `2 sqrt(2 pi k) * exp(eps^2 k / 2) * eps` for `k` active binary features
/// on a grid of resolution `eps`.
pub fn expected_relative_error_bound(eps: f64, k: u64) -> Result<f64> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::param("eps", format!("{eps} is not positive")));
    }
    let k = k as f64;
    Ok(2.0 * (2.0 * std::f64::consts::PI * k).sqrt() * (eps * eps * k / 2.0).exp() * eps)
}

/// Compare the loss at the exact logit `z` with the loss at the rounded
/// logit `z_rounded`, and attach the deterministic and expected bounds.
///
/// `eps` is the grid resolution the coefficients were rounded to and `k`
/// the number of active features; both feed the a priori bounds only. The
/// feature vector is assumed binary, which is what makes `eps * k` cap the
/// logit perturbation.
pub fn error_bounds(z: f64, z_rounded: f64, label: bool, eps: f64, k: u64) -> Result<LossBounds> {
    if !(z.is_finite() && z_rounded.is_finite()) {
        return Err(Error::NonFinite {
            context: "error_bounds",
        });
    }
    let delta = (z - z_rounded).abs();
    let exact_loss = loss_from_logit(z, label);
    let rounded_loss = loss_from_logit(z_rounded, label);
    let realized_additive = rounded_loss - exact_loss;
    let realized_relative = if exact_loss > 0.0 {
        Some(realized_additive / exact_loss)
    } else {
        None
    };
    Ok(LossBounds {
        delta,
        additive_bound: delta,
        relative_bound: delta.exp_m1(),
        apriori_delta: eps * k as f64,
        expected_relative_bound: expected_relative_error_bound(eps, k)?,
        realized_additive,
        realized_relative,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sigmoid_reference_points() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(3f64.ln()) - 0.75).abs() < 1e-15);
        assert!((sigmoid(-(3f64.ln())) - 0.25).abs() < 1e-15);
        assert!(sigmoid(40.0) > 0.999_999_999);
        assert!(sigmoid(40.0) < 1.0 + 1e-15);
        assert!(sigmoid(-40.0) > 0.0);
        assert!(sigmoid(-40.0) < 1e-9);
        assert!(sigmoid(800.0).is_finite());
        assert!(sigmoid(-800.0).is_finite());
    }

    #[test]
    fn loss_reference_points() {
        let ln2 = std::f64::consts::LN_2;
        assert!((loss_from_logit(0.0, true) - ln2).abs() < 1e-15);
        assert!((loss_from_logit(0.0, false) - ln2).abs() < 1e-15);
        // p = 0.75: loss is -ln(0.75) when right, -ln(0.25) when wrong.
        let z = 3f64.ln();
        assert!((loss_from_logit(z, true) - 0.287_682_072_451_780_9).abs() < 1e-15);
        assert!((loss_from_logit(z, false) - 1.386_294_361_119_890_6).abs() < 1e-15);
        // Extreme logits stay finite and behave like |z| on the wrong side.
        assert!((loss_from_logit(-800.0, true) - 800.0).abs() < 1e-9);
        assert_eq!(loss_from_logit(800.0, true), 0.0);
    }

    #[test]
    fn logit_helpers_sum_active_weights() {
        let w = |i: u64| [0.5, -1.0, 0.25][i as usize];
        assert_eq!(binary_logit(w, &[0, 2]), 0.75);
        assert_eq!(binary_logit(w, &[]), 0.0);
        assert_eq!(weighted_logit(w, &[(0, 2.0), (1, 0.5)]), 0.5);
    }

    #[test]
    fn probability_loss_agrees_with_logit_loss() {
        let ln2 = std::f64::consts::LN_2;
        assert!((loss_from_probability(0.5, true) - ln2).abs() < 1e-15);
        assert!((loss_from_probability(0.5, false) - ln2).abs() < 1e-15);
        for &z in &[-5.0, -0.3, 0.0, 1.7, 9.0] {
            for &label in &[true, false] {
                let via_p = loss_from_probability(sigmoid(z), label);
                let direct = loss_from_logit(z, label);
                assert!((via_p - direct).abs() < 1e-12 * (1.0 + direct));
            }
        }
        assert_eq!(loss_from_probability(0.0, true), f64::INFINITY);
        assert_eq!(loss_from_probability(1.0, true), 0.0);
    }

    #[test]
    fn identical_logits_give_zero_bounds() {
        let b = error_bounds(0.7, 0.7, true, 0.25, 3).unwrap();
        assert_eq!(b.delta, 0.0);
        assert_eq!(b.additive_bound, 0.0);
        assert_eq!(b.relative_bound, 0.0);
        assert_eq!(b.realized_additive, 0.0);
        assert_eq!(b.realized_relative, Some(0.0));
        assert_eq!(b.apriori_delta, 0.75);
    }

    #[test]
    fn relative_bound_doubles_at_delta_ln2() {
        let ln2 = std::f64::consts::LN_2;
        let b = error_bounds(0.0, ln2, false, 1.0, 1).unwrap();
        assert!((b.relative_bound - 1.0).abs() < 1e-12);
    }

    #[test]
    fn expected_relative_bound_reference_value() {
        // eps = 2^-7, k = 100. Recomputed in log space as an independent
        // route to the same quantity.
        let eps = 0.0078125;
        let v = expected_relative_error_bound(eps, 100).unwrap();
        let log_form = (2f64.ln()
            + 0.5 * (2.0 * std::f64::consts::PI * 100.0).ln()
            + eps * eps * 100.0 / 2.0
            + eps.ln())
        .exp();
        assert!((v - log_form).abs() < 1e-12 * log_form);
        assert!((v - 0.3929).abs() < 2e-4, "{v}");
    }

    #[test]
    fn rejects_non_finite_logits() {
        assert!(error_bounds(f64::NAN, 0.0, true, 0.25, 1).is_err());
        assert!(error_bounds(0.0, f64::INFINITY, true, 0.25, 1).is_err());
        assert!(expected_relative_error_bound(0.0, 5).is_err());
    }

    proptest! {
        #[test]
        fn sigmoid_symmetry(z in -500.0f64..500.0) {
            prop_assert!((sigmoid(z) + sigmoid(-z) - 1.0).abs() < 1e-12);
        }

        #[test]
        fn loss_is_nonnegative_and_finite(z in -1e6f64..1e6, label in any::<bool>()) {
            let l = loss_from_logit(z, label);
            prop_assert!(l.is_finite());
            prop_assert!(l >= 0.0);
        }

        #[test]
        fn gradient_magnitude_never_exceeds_one(
            z in -50.0f64..50.0,
            label in any::<bool>(),
        ) {
            // d loss / d z = sigmoid(z) - y, checked against a central
            // difference; with binary features this is the per-coordinate
            // gradient, so its magnitude bounds the default G.
            let h = 1e-6;
            let num = (loss_from_logit(z + h, label) - loss_from_logit(z - h, label)) / (2.0 * h);
            let analytic = sigmoid(z) - if label { 1.0 } else { 0.0 };
            prop_assert!((num - analytic).abs() < 1e-4);
            prop_assert!(analytic.abs() <= 1.0);
        }

        #[test]
        fn additive_bound_holds_pointwise(
            z in -20.0f64..20.0,
            dz in -3.0f64..3.0,
            label in any::<bool>(),
        ) {
            // Loss is 1-Lipschitz in the logit, so the realized change can
            // never exceed delta (tiny float slack).
            let b = error_bounds(z, z + dz, label, 1.0, 1).unwrap();
            prop_assert!(b.realized_additive <= b.additive_bound + 1e-12);
        }
    }
}
