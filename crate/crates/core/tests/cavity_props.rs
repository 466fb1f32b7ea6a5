use proptest::prelude::*;
use spsim::cavity::{
    beta_from_purcell, brightness, eta_out_from_reflectance, purcell_from_lifetimes, quality_factor,
    quality_factor_from_wavelength, RootBranch,
};

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn reflectance_roots_invert(eta in 0.0f64..=1.0) {
        let r = (1.0 - 2.0 * eta).powi(2);
        let branch = if eta >= 0.5 { RootBranch::High } else { RootBranch::Low };
        let back = eta_out_from_reflectance(r, branch).unwrap();
        prop_assert!((back - eta).abs() < 1e-12);
        let other = eta_out_from_reflectance(r, match branch { RootBranch::High => RootBranch::Low, RootBranch::Low => RootBranch::High }).unwrap();
        prop_assert!((back + other - 1.0).abs() < 1e-12);
    }

    #[test]
    fn beta_satisfies_its_definition(f in 1e-3f64..1e4) {
        let beta = beta_from_purcell(f).unwrap();
        prop_assert!(beta > 0.0 && beta < 1.0);
        prop_assert!(rel(beta * (f + 1.0), f) < 1e-12);
    }

    #[test]
    fn purcell_is_lifetime_ratio(tau_c in 1e-12f64..1e-9, k in 1.0f64..100.0) {
        prop_assert!(rel(purcell_from_lifetimes(tau_c * k, tau_c).unwrap(), k) < 1e-12);
    }

    #[test]
    fn brightness_is_symmetric(a in 0.0f64..=1.0, b in 0.0f64..=1.0, c in 0.0f64..=1.0) {
        let x = brightness(a, b, c).unwrap();
        for y in [brightness(b, c, a), brightness(c, a, b), brightness(b, a, c)] {
            prop_assert!((y.unwrap() - x).abs() <= 1e-15);
        }
        prop_assert!(x <= a.min(b).min(c) + 1e-15);
    }

    #[test]
    fn quality_is_scale_invariant(e in 0.1f64..10.0, de in 1e-6f64..1e-2, k in 1e-3f64..1e3) {
        let q = quality_factor(e, de).unwrap();
        prop_assert!(rel(quality_factor(e * k, de * k).unwrap(), q) < 1e-12);
        prop_assert!(rel(quality_factor_from_wavelength(e * k, de * k).unwrap(), q) < 1e-12);
    }
}

#[test]
fn domain_errors_name_the_argument() {
    let msg = eta_out_from_reflectance(1.5, RootBranch::High).unwrap_err().to_string();
    assert!(msg.contains("r_min") || msg.contains("reflectance"), "{msg}");
    assert!(beta_from_purcell(-1.0).is_err());
    assert!(brightness(1.1, 0.5, 0.5).is_err());
    assert!(quality_factor(1.0, 0.0).is_err());
}
