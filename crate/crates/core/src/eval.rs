//! Evaluation: progressive validation, ranking quality, regret bounds and
//! their measurement, and a batch comparator for regret experiments on
//! real logistic losses.

use crate::data::SparseExample;
use crate::error::{Error, Result};
use crate::logistic::{loss_from_logit, loss_from_probability, sigmoid};
use crate::rng::{self, Rng};
use crate::train::{Ogd1d, Trainer};
use rand::Rng as _;
use std::io;

/// Anything that can run the online protocol: predict on an example,
/// then learn from it.
pub trait ProgressiveLearner {
    /// Process one example. Returns the probability assigned to the
    /// positive class by the model as it stood BEFORE this example's
    /// update; progressive validation charges loss against exactly that
    /// number.
    fn step(&mut self, example: &SparseExample) -> Result<f64>;
}

impl ProgressiveLearner for Trainer {
    fn step(&mut self, example: &SparseExample) -> Result<f64> {
        self.train_step(example)
    }
}

/// Outcome of one progressive pass over a stream.
#[derive(Debug, Clone, PartialEq)]
pub struct ProgressiveReport {
    pub examples: u64,
    pub positives: u64,
    /// Sum of per-example log losses (natural log).
    pub total_loss: f64,
    pub mean_loss: f64,
    /// Ranking quality of the pre-update predictions; `None` when the
    /// stream holds a single class.
    pub auc: Option<f64>,
    /// Fraction of examples where the pre-update prediction took the
    /// correct side of 1/2 (exactly 1/2 counts as a negative prediction).
    pub accuracy: f64,
}

/// One pass of predict-then-update over the stream, in order. Each
/// example is scored by the model before it trains on it, so the mean
/// loss is an honest estimate of held-out loss without a held-out set.
pub fn progressive_validate<L: ProgressiveLearner>(
    learner: &mut L,
    examples: &[SparseExample],
) -> Result<ProgressiveReport> {
    let mut scored: Vec<(f64, bool)> = Vec::with_capacity(examples.len());
    let mut total_loss = 0.0;
    let mut positives = 0u64;
    let mut correct = 0u64;
    for example in examples {
        let p = learner.step(example)?;
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::param(
                "learner",
                format!("probability {p} is outside [0, 1]"),
            ));
        }
        total_loss += loss_from_probability(p, example.label);
        positives += u64::from(example.label);
        correct += u64::from((p > 0.5) == example.label);
        scored.push((p, example.label));
    }
    let n = examples.len() as u64;
    Ok(ProgressiveReport {
        examples: n,
        positives,
        total_loss,
        mean_loss: if n == 0 { 0.0 } else { total_loss / n as f64 },
        auc: auc(&scored),
        accuracy: if n == 0 { 0.0 } else { correct as f64 / n as f64 },
    })
}

/// Area under the ROC curve by rank sum, with midranks for tied scores:
/// the probability a random positive outscores a random negative, ties
/// counting half. `None` when either class is absent.
pub fn auc(scored: &[(f64, bool)]) -> Option<f64> {
    let positives = scored.iter().filter(|(_, label)| *label).count();
    let negatives = scored.len() - positives;
    if positives == 0 || negatives == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&a, &b| scored[a].0.total_cmp(&scored[b].0));

    // Sum the (1-based) midranks of the positives.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scored[order[j]].0 == scored[order[i]].0 {
            j += 1;
        }
        // Ranks i+1 ..= j share the midrank.
        let midrank = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            if scored[k].1 {
                rank_sum += midrank;
            }
        }
        i = j;
    }
    let p = positives as f64;
    let u = rank_sum - p * (p + 1.0) / 2.0;
    Some(u / (p * negatives as f64))
}

/// Relative increase of the AUC loss `1 - auc`, in percent, of a
/// candidate against a baseline. Negative when the candidate ranks
/// better. A perfect baseline leaves nothing to lose relative to: any
/// degradation is reported as infinite.
pub fn auc_loss_relative(baseline_auc: f64, candidate_auc: f64) -> f64 {
    let baseline_loss = 1.0 - baseline_auc;
    if baseline_loss <= 0.0 {
        return if candidate_auc >= baseline_auc {
            0.0
        } else {
            f64::INFINITY
        };
    }
    (baseline_auc - candidate_auc) / baseline_loss * 100.0
}

/// Expected-regret guarantee for projected gradient steps with unbiased
/// rounding at resolution `gamma * eta_t`, against the best fixed point
/// of the radius-`r` interval over `t` rounds:
///
/// ```text
/// (2r)^2 / (2 eta_final) + (g^2 + gamma^2) / 2 * eta_sum + gamma r sqrt(t)
/// ```
///
/// `eta_final` is the last step size and `eta_sum` the sum of all step
/// sizes actually used.
pub fn rounded_ogd_regret_bound(
    r: f64,
    g: f64,
    gamma: f64,
    eta_final: f64,
    eta_sum: f64,
    t: u64,
) -> f64 {
    let diameter = 2.0 * r;
    diameter * diameter / (2.0 * eta_final)
        + (g * g + gamma * gamma) / 2.0 * eta_sum
        + gamma * r * (t as f64).sqrt()
}

/// Expected-regret guarantee for the per-coordinate schedule
/// `eta = alpha / sqrt(n_i)` with the scale preset
/// `alpha = sqrt(2) r / sqrt(g^2 + gamma^2)`, where `n_i` counts the
/// nonzero gradients coordinate `i` received:
///
/// ```text
/// sum_i [ 2 r sqrt(2 n_i (g^2 + gamma^2)) + gamma r sqrt(n_i) ]
/// ```
pub fn per_coordinate_regret_bound(r: f64, g: f64, gamma: f64, counts: &[u64]) -> f64 {
    counts
        .iter()
        .map(|&n| {
            let n = n as f64;
            2.0 * r * (2.0 * n * (g * g + gamma * gamma)).sqrt() + gamma * r * n.sqrt()
        })
        .sum()
}

/// Concentration factors `(k1, k2)` for an 8-bit probabilistic count
/// over a horizon of `t` rounds: with probability at least
/// `1 - 2 t^-(c-1)`, every intermediate estimate `n~` of a true count
/// `n` satisfies `k1 n - 1 <= n~ <= k2 n`.
///
/// `k1 = 1 / (base c ln t)` and
/// `k2 = e base^(sqrt(2 c log_base t) + 2) / (base - 1)`.
pub fn approx_count_factors(base: f64, c: f64, t: u64) -> Result<(f64, f64)> {
    if !(base.is_finite() && base > 1.0) {
        return Err(Error::param("base", format!("{base} must exceed 1")));
    }
    if !(c.is_finite() && c > 1.0) {
        return Err(Error::param("c", format!("{c} must exceed 1")));
    }
    if t < 2 {
        return Err(Error::param("t", "horizon must be at least 2"));
    }
    let t = t as f64;
    let k1 = 1.0 / (base * c * t.ln());
    let k2 = std::f64::consts::E / (base - 1.0)
        * base.powf((2.0 * c * t.ln() / base.ln()).sqrt() + 2.0);
    Ok((k1, k2))
}

/// Expected-regret guarantee when the step size is driven by an 8-bit
/// probabilistic count whose estimates stay within the
/// [`approx_count_factors`] envelope:
///
/// ```text
/// 2 r^2 sqrt(k2 t + 1) / alpha
///   + (g^2 + gamma^2) alpha sqrt(t) / sqrt(k1)
///   + gamma r sqrt(t) + 4 r g sqrt(t)
/// ```
///
/// The last term prices the (at most `2 t^-(c-1)` likely) failure of the
/// envelope at worst-case per-round regret.
pub fn approx_count_regret_bound(
    r: f64,
    g: f64,
    gamma: f64,
    alpha: f64,
    k1: f64,
    k2: f64,
    t: u64,
) -> f64 {
    let t = t as f64;
    2.0 * r * r * (k2 * t + 1.0).sqrt() / alpha
        + (g * g + gamma * gamma) * alpha * t.sqrt() / k1.sqrt()
        + gamma * r * t.sqrt()
        + 4.0 * r * g * t.sqrt()
}

/// An adversary for linear-loss regret runs: `t` independent uniform
/// `+-1` gradients, deterministic in the seed and prefix-stable.
pub fn random_sign_gradients(t: u64, seed: u64) -> Vec<f64> {
    let mut rng = rng::derive(seed, rng::label_seed(0, "sign-gradients"));
    (0..t)
        .map(|_| if rng.random::<f64>() < 0.5 { -1.0 } else { 1.0 })
        .collect()
}

/// Result of one linear-loss regret run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegretMeasurement {
    /// Sum of `g_t * x_t` where `x_t` is the point played before seeing
    /// `g_t`.
    pub learner_loss: f64,
    /// Loss of the best fixed point in hindsight, `-r |sum g_t|`.
    pub comparator_loss: f64,
    pub regret: f64,
}

/// Play a single-coordinate learner against a gradient sequence under
/// linear losses `f_t(x) = g_t x` and compare to the best fixed point
/// of `[-r, r]` in hindsight.
pub fn measure_regret(
    learner: &mut Ogd1d,
    gradients: &[f64],
    rng: &mut Rng,
) -> Result<RegretMeasurement> {
    let mut learner_loss = 0.0;
    let mut gradient_sum = 0.0;
    for &g in gradients {
        learner_loss += g * learner.weight();
        learner.observe(g, rng)?;
        gradient_sum += g;
    }
    let comparator_loss = -learner.r * gradient_sum.abs();
    Ok(RegretMeasurement {
        learner_loss,
        comparator_loss,
        regret: learner_loss - comparator_loss,
    })
}

/// The best fixed weight vector in hindsight for a logistic stream,
/// constrained to the box `[-r, r]` per coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparatorSolution {
    /// Optimal weights, sorted by coordinate index. Coordinates never
    /// active in the stream are zero and omitted.
    pub weights: Vec<(u64, f64)>,
    /// Total logistic loss of those weights over the stream.
    pub total_loss: f64,
    pub iterations: u64,
    /// Final gradient-mapping norm (unit reference step).
    pub residual: f64,
}

impl ComparatorSolution {
    pub fn weight_at(&self, index: u64) -> f64 {
        self.weights
            .binary_search_by_key(&index, |&(i, _)| i)
            .map_or(0.0, |k| self.weights[k].1)
    }
}

/// Minimize the total logistic loss over the box `[-r, r]^d` by projected
/// gradient descent with a spectral step and backtracking. The problem is
/// smooth and convex, so the gradient-mapping residual certifies the
/// minimizer; iteration stops once it falls under `tolerance`.
pub fn logistic_comparator(
    examples: &[SparseExample],
    r: f64,
    tolerance: f64,
) -> Result<ComparatorSolution> {
    if !(r.is_finite() && r > 0.0) {
        return Err(Error::param("r", format!("{r} is not positive")));
    }
    if !(tolerance.is_finite() && tolerance > 0.0) {
        return Err(Error::param(
            "tolerance",
            format!("{tolerance} is not positive"),
        ));
    }

    // Dense index space for the coordinates that actually occur.
    let mut index_list: Vec<u64> = examples
        .iter()
        .flat_map(|e| e.indices().iter().copied())
        .collect();
    index_list.sort_unstable();
    index_list.dedup();
    let dense: std::collections::HashMap<u64, usize> = index_list
        .iter()
        .enumerate()
        .map(|(k, &i)| (i, k))
        .collect();
    let rows: Vec<(bool, Vec<usize>)> = examples
        .iter()
        .map(|e| {
            (
                e.label,
                e.indices().iter().map(|i| dense[i]).collect(),
            )
        })
        .collect();
    let d = index_list.len();

    let objective_and_gradient = |w: &[f64], grad: &mut [f64]| -> f64 {
        grad.fill(0.0);
        let mut loss = 0.0;
        for (label, cols) in &rows {
            let z: f64 = cols.iter().map(|&k| w[k]).sum();
            loss += loss_from_logit(z, *label);
            let y = if *label { 1.0 } else { 0.0 };
            let slope = sigmoid(z) - y;
            for &k in cols {
                grad[k] += slope;
            }
        }
        loss
    };
    let project = |w: &mut [f64]| {
        for v in w.iter_mut() {
            *v = v.clamp(-r, r);
        }
    };
    // Gradient-mapping norm at unit step: a scale-free stationarity
    // measure that vanishes exactly at box-constrained minimizers.
    let residual_of = |w: &[f64], grad: &[f64]| -> f64 {
        let mut s = 0.0;
        for k in 0..w.len() {
            let moved = (w[k] - grad[k]).clamp(-r, r);
            let delta = w[k] - moved;
            s += delta * delta;
        }
        s.sqrt()
    };

    let mut w = vec![0.0f64; d];
    let mut grad = vec![0.0f64; d];
    let mut loss = objective_and_gradient(&w, &mut grad);
    let mut step = 1.0;
    let max_iterations = 100_000u64;

    for iteration in 0..max_iterations {
        let residual = residual_of(&w, &grad);
        if residual <= tolerance {
            let weights = index_list
                .iter()
                .zip(&w)
                .map(|(&i, &v)| (i, v))
                .collect();
            return Ok(ComparatorSolution {
                weights,
                total_loss: loss,
                iterations: iteration,
                residual,
            });
        }

        // Backtracking on the projected step: accept when the quadratic
        // model at the current step length upper-bounds the objective.
        let mut next = vec![0.0f64; d];
        let mut next_grad = vec![0.0f64; d];
        loop {
            for k in 0..d {
                next[k] = w[k] - step * grad[k];
            }
            project(&mut next);
            let next_loss = objective_and_gradient(&next, &mut next_grad);
            let mut linear = 0.0;
            let mut quadratic = 0.0;
            for k in 0..d {
                let delta = next[k] - w[k];
                linear += grad[k] * delta;
                quadratic += delta * delta;
            }
            if next_loss <= loss + linear + quadratic / (2.0 * step) + 1e-12 {
                // Spectral (secant) step for the next round.
                let mut sy = 0.0;
                let mut ss = 0.0;
                for k in 0..d {
                    let s_k = next[k] - w[k];
                    let y_k = next_grad[k] - grad[k];
                    sy += s_k * y_k;
                    ss += s_k * s_k;
                }
                std::mem::swap(&mut w, &mut next);
                std::mem::swap(&mut grad, &mut next_grad);
                loss = next_loss;
                step = if sy > 0.0 {
                    (ss / sy).clamp(1e-12, 1e12)
                } else {
                    step * 2.0
                };
                break;
            }
            step *= 0.5;
            if step < 1e-18 {
                return Err(Error::NoConvergence {
                    residual,
                    iterations: iteration,
                    tolerance,
                });
            }
        }
    }

    let residual = residual_of(&w, &grad);
    Err(Error::NoConvergence {
        residual,
        iterations: max_iterations,
        tolerance,
    })
}

/// The comment line opening every CSV this crate writes: readers key on
/// it to reject files from other versions of the schema.
pub fn csv_header(kind: &str) -> String {
    format!("# gridlearn {kind} v1")
}

/// Write a versioned CSV: the [`csv_header`] comment line, a column
/// line, then the rows. Fields must not contain commas, quotes, or line
/// breaks; everything this crate emits is numeric or an identifier.
pub fn write_csv<W: io::Write>(
    out: &mut W,
    kind: &str,
    columns: &[&str],
    rows: &[Vec<String>],
) -> io::Result<()> {
    writeln!(out, "{}", csv_header(kind))?;
    writeln!(out, "{}", columns.join(","))?;
    for row in rows {
        debug_assert_eq!(row.len(), columns.len());
        debug_assert!(row
            .iter()
            .all(|f| !f.contains(',') && !f.contains('"') && !f.contains('\n')));
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::train::{AlphaSetting, CounterMode, Ogd1dCounter, PrecisionMode, TrainConfig};

    #[test]
    fn auc_oracle_cases() {
        // Perfect separation.
        let s = [(0.1, false), (0.2, false), (0.8, true), (0.9, true)];
        assert_eq!(auc(&s), Some(1.0));
        // Perfectly wrong.
        let s = [(0.9, false), (0.1, true)];
        assert_eq!(auc(&s), Some(0.0));
        // One tied pair out of two: (0.5 vs 0.5) counts half,
        // (0.5 vs 0.1) counts one, so 1.5 / 2.
        let s = [(0.5, true), (0.5, false), (0.1, false)];
        assert_eq!(auc(&s), Some(0.75));
        // Three-way tie across classes.
        let s = [(0.5, true), (0.5, true), (0.5, false), (0.5, false)];
        assert_eq!(auc(&s), Some(0.5));
        // Mixed: pos {0.8, 0.5}, neg {0.5, 0.2}: pairs 1 + 1 + 0.5 + 1.
        let s = [(0.8, true), (0.5, true), (0.5, false), (0.2, false)];
        assert_eq!(auc(&s), Some(0.875));
        // Single class.
        assert_eq!(auc(&[(0.5, true)]), None);
        assert_eq!(auc(&[]), None);
    }

    #[test]
    fn auc_matches_pair_counting_on_random_data() {
        let mut rng = rng::from_seed(5);
        for _ in 0..20 {
            let scored: Vec<(f64, bool)> = (0..50)
                .map(|_| {
                    // Coarse scores force plenty of ties.
                    let s = (rng.random::<f64>() * 8.0).floor() / 8.0;
                    (s, rng.random::<f64>() < 0.4)
                })
                .collect();
            let Some(fast) = auc(&scored) else { continue };
            let mut wins = 0.0;
            let mut pairs = 0.0;
            for &(sp, lp) in &scored {
                if !lp {
                    continue;
                }
                for &(sn, ln_) in &scored {
                    if ln_ {
                        continue;
                    }
                    pairs += 1.0;
                    if sp > sn {
                        wins += 1.0;
                    } else if sp == sn {
                        wins += 0.5;
                    }
                }
            }
            assert!((fast - wins / pairs).abs() < 1e-12);
        }
    }

    #[test]
    fn auc_loss_relative_examples() {
        // Baseline loss 0.10, candidate loss 0.12: 20% worse.
        assert!((auc_loss_relative(0.90, 0.88) - 20.0).abs() < 1e-9);
        // Candidate better: negative.
        assert!(auc_loss_relative(0.90, 0.95) < 0.0);
        assert_eq!(auc_loss_relative(1.0, 1.0), 0.0);
        assert_eq!(auc_loss_relative(1.0, 0.99), f64::INFINITY);
    }

    #[test]
    fn per_coordinate_bound_hand_example() {
        // r = 1, g = 1, gamma = 1, counts {4, 9}:
        // 2 sqrt(2 * 4 * 2) + 2 = 10 and 2 sqrt(2 * 9 * 2) + 3 = 15.
        let b = per_coordinate_regret_bound(1.0, 1.0, 1.0, &[4, 9]);
        assert!((b - 25.0).abs() < 1e-12);
        assert_eq!(per_coordinate_regret_bound(1.0, 1.0, 1.0, &[]), 0.0);
    }

    #[test]
    fn rounded_bound_hand_example() {
        // r = g = 1, gamma = 0, eta_t = 1/sqrt(t), t = 4.
        let eta_sum = 1.0 + 0.5f64.sqrt() + 1.0 / 3.0f64.sqrt() + 0.5;
        let b = rounded_ogd_regret_bound(1.0, 1.0, 0.0, 0.5, eta_sum, 4);
        assert!((b - 5.392228525188087).abs() < 1e-12);
        // The gamma term adds gamma * r * sqrt(t) plus the gamma^2 share
        // of the step-size term.
        let b2 = rounded_ogd_regret_bound(1.0, 1.0, 1.0, 0.5, eta_sum, 4);
        assert!((b2 - (b + eta_sum / 2.0 + 2.0)).abs() < 1e-12);
    }

    #[test]
    fn count_factors_match_the_counter_thresholds() {
        let (base, c, t) = (1.08, 2.5, 100_000u64);
        let (k1, k2) = approx_count_factors(base, c, t).unwrap();
        for n in [1u64, 57, 4096] {
            let (lo, hi) =
                crate::counting::confidence_thresholds(n, t, c, base).unwrap();
            assert!((lo - (k1 * n as f64 - 1.0)).abs() < 1e-9 * (1.0 + lo.abs()));
            assert!((hi - k2 * n as f64).abs() < 1e-9 * hi);
        }
        assert!(approx_count_factors(1.0, 2.5, t).is_err());
        assert!(approx_count_factors(1.08, 1.0, t).is_err());
        assert!(approx_count_factors(1.08, 2.5, 1).is_err());
    }

    #[test]
    fn sign_gradients_are_deterministic_and_prefix_stable() {
        let a = random_sign_gradients(100, 3);
        let b = random_sign_gradients(100, 3);
        assert_eq!(a, b);
        let long = random_sign_gradients(200, 3);
        assert_eq!(&long[..100], &a[..]);
        assert!(a.iter().all(|&g| g == 1.0 || g == -1.0));
        assert_ne!(a, random_sign_gradients(100, 4));
    }

    #[test]
    fn measured_regret_stays_under_the_rounded_bound() {
        let (t, alpha, gamma, r) = (2000u64, 1.0, 1.0, 1.0);
        let gradients = random_sign_gradients(t, 11);
        let mut learner = Ogd1d::new(alpha, gamma, r, Ogd1dCounter::Rounds, 40).unwrap();
        let mut rng = rng::from_seed(12);
        let m = measure_regret(&mut learner, &gradients, &mut rng).unwrap();
        let eta_sum: f64 = (1..=t).map(|k| alpha / (k as f64).sqrt()).sum();
        let bound =
            rounded_ogd_regret_bound(r, 1.0, gamma, alpha / (t as f64).sqrt(), eta_sum, t);
        assert!(m.comparator_loss <= 0.0);
        assert!(
            m.regret <= bound,
            "regret {} exceeded bound {bound}",
            m.regret
        );
        // The guarantee is not vacuous at this scale.
        assert!(m.regret > 0.0);
    }

    #[test]
    fn comparator_interior_solution_is_the_closed_form() {
        // One feature, three positives and one negative: the minimizer of
        // 3 softplus(-b) + softplus(b) is b = ln 3.
        let examples = vec![
            SparseExample::from_sorted(true, vec![7]),
            SparseExample::from_sorted(true, vec![7]),
            SparseExample::from_sorted(true, vec![7]),
            SparseExample::from_sorted(false, vec![7]),
        ];
        let sol = logistic_comparator(&examples, 2.0, 1e-10).unwrap();
        let b = 3.0f64.ln();
        assert!((sol.weight_at(7) - b).abs() < 1e-8, "{:?}", sol.weights);
        let expected = 3.0 * loss_from_logit(b, true) + loss_from_logit(b, false);
        assert!((sol.total_loss - expected).abs() < 1e-10);
        assert!(sol.residual <= 1e-10);
    }

    #[test]
    fn comparator_respects_the_box()
    {
        // Same data but radius 1/2 < ln 3: the solution pins to the wall.
        let examples = vec![
            SparseExample::from_sorted(true, vec![3]),
            SparseExample::from_sorted(true, vec![3]),
            SparseExample::from_sorted(true, vec![3]),
            SparseExample::from_sorted(false, vec![3]),
        ];
        let sol = logistic_comparator(&examples, 0.5, 1e-10).unwrap();
        assert!((sol.weight_at(3) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn comparator_handles_multiple_coordinates() {
        // Coordinate 1 is always-on (bias); coordinate 2 marks positives,
        // coordinate 3 marks negatives.
        let mut examples = Vec::new();
        for _ in 0..30 {
            examples.push(SparseExample::from_sorted(true, vec![1, 2]));
            examples.push(SparseExample::from_sorted(false, vec![1, 3]));
        }
        let sol = logistic_comparator(&examples, 1.0, 1e-8).unwrap();
        assert!(sol.weight_at(2) > 0.5);
        assert!(sol.weight_at(3) < -0.5);
        // Symmetric classes leave the bias near zero.
        assert!(sol.weight_at(1).abs() < 1e-6);
        // Untouched coordinates read as zero.
        assert_eq!(sol.weight_at(99), 0.0);
    }

    /// Remembers the label of every distinct index set it has seen and
    /// replays it with certainty; a fresh index set gets 1/2.
    struct Memorizer {
        seen: std::collections::HashMap<Vec<u64>, bool>,
    }

    impl ProgressiveLearner for Memorizer {
        fn step(&mut self, example: &SparseExample) -> Result<f64> {
            let key = example.indices().to_vec();
            let p = match self.seen.get(&key) {
                Some(&label) => {
                    if label {
                        1.0
                    } else {
                        0.0
                    }
                }
                None => 0.5,
            };
            self.seen.insert(key, example.label);
            Ok(p)
        }
    }

    #[test]
    fn progressive_loss_is_charged_on_the_pre_update_prediction() {
        // First visit to each index set costs ln 2, repeats cost 0:
        // the harness charges the prediction made before learning.
        let examples = vec![
            SparseExample::from_sorted(true, vec![1]),
            SparseExample::from_sorted(false, vec![2]),
            SparseExample::from_sorted(true, vec![1]),
            SparseExample::from_sorted(false, vec![2]),
        ];
        let mut learner = Memorizer {
            seen: std::collections::HashMap::new(),
        };
        let report = progressive_validate(&mut learner, &examples).unwrap();
        assert_eq!(report.examples, 4);
        assert_eq!(report.positives, 2);
        assert!((report.total_loss - 2.0 * std::f64::consts::LN_2).abs() < 1e-15);
        assert!((report.mean_loss - std::f64::consts::LN_2 / 2.0).abs() < 1e-15);
        // The two repeats score 1.0/0.0 and split correctly; the two cold
        // predictions at exactly 1/2 count as negative calls.
        assert_eq!(report.accuracy, 0.75);
    }

    #[test]
    fn trainer_plugs_into_progressive_validation() {
        let cfg = TrainConfig {
            r: 1.0,
            alpha: AlphaSetting::PresetSqrt2,
            gamma: 1.0,
            gradient_bound: 1.0,
            precision: PrecisionMode::Fixed {
                int_bits: 1,
                frac_bits: 7,
            },
            counter: CounterMode::Exact,
            project: true,
            seed: 21,
        };
        let examples: Vec<SparseExample> = (0..400)
            .map(|i| SparseExample::from_sorted(i % 2 == 0, vec![i % 2, 9]))
            .collect();
        let mut trainer = Trainer::new(cfg).unwrap();
        let report = progressive_validate(&mut trainer, &examples).unwrap();
        // The stream is separable, so the learner beats coin flipping.
        assert!(report.mean_loss < std::f64::consts::LN_2);
        assert!(report.auc.unwrap() > 0.9);
    }

    #[test]
    fn csv_output_is_versioned_and_stable() {
        let mut out = Vec::new();
        write_csv(
            &mut out,
            "metrics",
            &["metric", "value"],
            &[
                vec!["examples".into(), "100".into()],
                vec!["mean_loss".into(), "0.25".into()],
            ],
        )
        .unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(
            text,
            "# gridlearn metrics v1\nmetric,value\nexamples,100\nmean_loss,0.25\n"
        );
        assert_eq!(csv_header("sweep"), "# gridlearn sweep v1");
    }
}
