use proptest::prelude::*;
use semiperc_core::amp::{measure_overlap, run_amp};
use semiperc_core::replica::{free_energy, generalization_error, rhs_single, solve_fixed_point, SolverConfig};
use semiperc_core::specfun::{h_tail, h_tail_inv};
use semiperc_core::{AmpConfig, AmpState, Dataset, Integrator, LearningSetup, OrderParams};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn single_map_stays_in_unit_interval(
        q in 0.0f64..0.999,
        h in 0.0f64..0.5,
        alpha in 0.0f64..10.0,
        beta in 0.0f64..500.0,
    ) {
        let s = LearningSetup::bayes(h, alpha, beta).unwrap();
        let t = rhs_single(q, &s, &Integrator::default()).unwrap();
        prop_assert!((0.0..1.0).contains(&t), "{t}");
    }

    #[test]
    fn free_energy_is_finite(q in 0.0f64..0.99, h in 0.0f64..0.5, alpha in 0.0f64..5.0, beta in 0.0f64..100.0) {
        let s = LearningSetup::bayes(h, alpha, beta).unwrap();
        let f = free_energy(&OrderParams::nishimori(q).unwrap(), &s, &Integrator::default()).unwrap();
        prop_assert!(f.is_finite());
    }

    #[test]
    fn error_decreases_with_overlap(a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(generalization_error(hi).unwrap() <= generalization_error(lo).unwrap());
    }

    #[test]
    fn tail_inverse_round_trips(x in -30.0f64..30.0) {
        let p = h_tail(x);
        prop_assume!(p > 0.0 && p < 1.0 - 1e-12);
        let back = h_tail_inv(p).unwrap();
        prop_assert!((h_tail(back) - p).abs() <= 1e-12 * p.max(1e-300), "{x} {back}");
    }

    #[test]
    fn generated_data_respect_margin(n in 2usize..40, g in 0.0f64..1.5, l in 0usize..20, u in 0usize..20, seed: u64) {
        let d = Dataset::generate(n, g, l, u, seed).unwrap();
        prop_assert_eq!(d.margin_violations(), 0);
        for (mu, &y) in d.labels().iter().enumerate() {
            prop_assert!(f64::from(y) * d.teacher().field(d.labeled().row(mu)) > g);
        }
    }

    #[test]
    fn amp_is_deterministic(seed in 0u64..1000) {
        let d = Dataset::generate(12, 0.1, 12, 24, seed).unwrap();
        let cfg = AmpConfig { max_iter: 15, ..AmpConfig::consistent() };
        let run = || run_amp(&d, 0.1, &cfg, AmpState::random(12, 36, 1e-2, seed).unwrap()).unwrap();
        let (a, b) = (run(), run());
        prop_assert_eq!(a.w_hat, b.w_hat);
        prop_assert!(a.q_emp.abs() <= 1.0);
    }
}

#[test]
fn warm_and_cold_starts_bracket_the_window() {
    let integ = Integrator::default();
    let s = LearningSetup::bayes(0.05, 1.0, 150.0).unwrap();
    let cfg = SolverConfig::default();
    let low = solve_fixed_point(&s, 1e-3, &integ, &cfg).unwrap();
    let high = solve_fixed_point(&s, 0.999, &integ, &cfg).unwrap();
    assert!(high.params.q - low.params.q > 0.1, "{low:?} {high:?}");
}

#[test]
fn amp_overlap_matches_teacher_alignment() {
    let d = Dataset::generate(40, 0.05, 160, 400, 5).unwrap();
    let r = run_amp(&d, 0.05, &AmpConfig { max_iter: 200, ..AmpConfig::consistent() }, AmpState::random(40, 560, 1e-2, 5).unwrap())
        .unwrap();
    assert_eq!(measure_overlap(&r.w_hat, d.teacher()).unwrap(), r.q_emp);
    assert!(r.q_emp > 0.8, "{}", r.q_emp);
}
