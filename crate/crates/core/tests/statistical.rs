//! Statistical envelope runs complementing the deterministic unit
//! suites: measured regret against the probabilistic-count guarantee,
//! and the measured cost of rounding against its additive budget.

use gridlearn::eval::{
    approx_count_factors, approx_count_regret_bound, measure_regret, random_sign_gradients,
};
use gridlearn::rng;
use gridlearn::train::{Ogd1d, Ogd1dCounter};

#[test]
fn morris_rate_regret_stays_under_envelope() {
    let t = 10_000u64;
    let seeds = 100u64;
    let (r, g, gamma) = (1.0f64, 1.0f64, 1.0f64);
    let base = 1.1;
    let alpha = 2.0f64.sqrt() * r / (g * g + gamma * gamma).sqrt();

    let (k1, k2) = approx_count_factors(base, 2.5, t).unwrap();
    let bound = approx_count_regret_bound(r, g, gamma, alpha, k1, k2, t);

    let mut total = 0.0;
    for seed in 0..seeds {
        let gradients = random_sign_gradients(t, seed);
        let mut learner =
            Ogd1d::new(alpha, gamma, r, Ogd1dCounter::Morris { base }, 40).unwrap();
        let mut noise = rng::derive(seed, rng::label_seed(2, "morris-regret"));
        total += measure_regret(&mut learner, &gradients, &mut noise)
            .unwrap()
            .regret;
    }
    let mean = total / seeds as f64;
    assert!(
        mean <= bound,
        "mean regret {mean:.1} exceeds the probabilistic-count envelope {bound:.1}"
    );
    // The envelope prices a worst-case counter excursion; the typical run
    // should sit far inside it, not hug it.
    assert!(
        mean <= 0.25 * bound,
        "mean regret {mean:.1} is implausibly close to the envelope {bound:.1}"
    );
}

#[test]
fn rounding_overhead_within_additive_budget() {
    // Same step-size schedule with and without rounding, on identical
    // gradient sequences. The regret budgets differ by exactly
    // gamma^2/2 * eta_sum + gamma r sqrt(t); the measured mean gap must
    // stay under that plus Monte Carlo slack.
    let t = 10_000u64;
    let seeds = 200u64;
    let (r, alpha, gamma) = (1.0f64, 1.0f64, 1.0f64);
    let eta_sum: f64 = (1..=t).map(|k| alpha / (k as f64).sqrt()).sum();
    let budget = gamma * gamma / 2.0 * eta_sum + gamma * r * (t as f64).sqrt();

    let mut gaps = Vec::with_capacity(seeds as usize);
    for seed in 0..seeds {
        let gradients = random_sign_gradients(t, seed);
        let mut exact = Ogd1d::new(alpha, 0.0, r, Ogd1dCounter::Rounds, 40).unwrap();
        let mut rounded = Ogd1d::new(alpha, gamma, r, Ogd1dCounter::Rounds, 40).unwrap();
        let mut noise_a = rng::derive(seed, rng::label_seed(3, "gap-exact"));
        let mut noise_b = rng::derive(seed, rng::label_seed(3, "gap-rounded"));
        let exact_regret = measure_regret(&mut exact, &gradients, &mut noise_a)
            .unwrap()
            .regret;
        let rounded_regret = measure_regret(&mut rounded, &gradients, &mut noise_b)
            .unwrap()
            .regret;
        gaps.push(rounded_regret - exact_regret);
    }
    let n = gaps.len() as f64;
    let mean = gaps.iter().sum::<f64>() / n;
    let var = gaps.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    let slack = 3.0 * (var / n).sqrt();
    assert!(
        mean <= budget + slack,
        "rounding overhead {mean:.1} exceeds its budget {budget:.1} (+{slack:.1} slack)"
    );
}
