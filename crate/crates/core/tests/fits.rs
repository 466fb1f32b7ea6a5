use proptest::prelude::*;
use spsim::analysis::{blinking_model, fit_blinking_points, fit_pn};

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn pn_recovers_exact_power_law(p in 0.05f64..1.0, s in 0.01f64..1.0, slots in 1e5f64..1e8, n0 in 1usize..4, len in 1usize..6) {
        let q = p * s;
        let rates: Vec<(usize, f64)> = (n0..n0 + len).map(|n| (n, slots * q.powi(n as i32))).collect();
        let fit = fit_pn(&rates, slots, s).unwrap();
        prop_assert!(rel(fit.p, p) < 1e-6);
        prop_assert!(rel(fit.q, q) < 1e-6);
        prop_assert!(fit.residual < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn blinking_recovers_noise_free_model(q in 0.1f64..0.95, t_on in 0.5e-6f64..20e-6) {
        let tc = t_on * (1.0 - q);
        let tau: Vec<f64> = (1..=300).map(|i| i as f64 * 10.0 * tc / 300.0).collect();
        let y: Vec<f64> = tau.iter().map(|&t| blinking_model(t, q, t_on)).collect();
        let fit = fit_blinking_points(&tau, &y).unwrap();
        prop_assert!(rel(fit.q, q) < 1e-6, "q {} vs {}", fit.q, q);
        prop_assert!(rel(fit.t_on.unwrap(), t_on) < 1e-6);
        prop_assert!(rel(fit.correlation_time.unwrap(), tc) < 1e-6);
    }
}

#[test]
fn published_rates_give_p_in_range() {
    let fit = fit_pn(&[(3, 1494.4), (4, 54.2), (5, 2.1), (6, 0.1)], 6.4e6, 0.1).unwrap();
    assert!((0.40..=0.55).contains(&fit.p), "p = {}", fit.p);
}
