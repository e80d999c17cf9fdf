//! Cross-checks against independent reference implementations.

use coinvest::baselines::{correlation_p_value, ln_gamma, regularized_incomplete_beta, student_t_two_sided};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::function::beta::beta_reg;
use statrs::function::gamma::ln_gamma as statrs_ln_gamma;

#[test]
fn incomplete_beta_matches_statrs() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..2000 {
        let a = rng.gen_range(0.05..60.0);
        let b = rng.gen_range(0.05..60.0);
        let x = rng.gen_range(0.0..=1.0);
        let got = regularized_incomplete_beta(x, a, b);
        let want = beta_reg(a, b, x);
        assert!((got - want).abs() < 1e-10, "I_{x}({a}, {b}): {got} vs {want}");
    }
}

#[test]
fn ln_gamma_matches_statrs() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..500 {
        let x = rng.gen_range(0.01..200.0);
        let (got, want) = (ln_gamma(x), statrs_ln_gamma(x));
        assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0), "{x}");
    }
}

#[test]
fn t_tail_matches_statrs() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..500 {
        let df = rng.gen_range(1.0..300.0);
        let t: f64 = rng.gen_range(-8.0..8.0);
        let dist = StudentsT::new(0.0, 1.0, df).unwrap();
        let want = 2.0 * dist.sf(t.abs());
        assert!((student_t_two_sided(t, df) - want).abs() < 1e-10, "t={t} df={df}");
    }
}

#[test]
fn correlation_p_value_reference_point() {
    // n = 10, r = 0.9: t = 0.9 * sqrt(8 / 0.19), two-sided tail with 8 df.
    let t = 0.9 * (8.0f64 / 0.19).sqrt();
    let want = 2.0 * StudentsT::new(0.0, 1.0, 8.0).unwrap().sf(t);
    let got = correlation_p_value(0.9, 10);
    assert!((got - want).abs() < 1e-10);
    assert!((got - 0.000386).abs() < 1e-5);
}
