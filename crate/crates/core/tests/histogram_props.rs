use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spsim::analysis::{g2_histogram, g2_histogram_brute, g2_histogram_par};

fn sorted(max_len: usize, span: u64) -> impl Strategy<Value = Vec<u64>> {
    prop::collection::vec(0..span, 0..max_len).prop_map(|mut v| {
        v.sort_unstable();
        v
    })
}

fn random_stream(rng: &mut ChaCha8Rng, n: usize, span: u64) -> Vec<u64> {
    let mut v: Vec<u64> = (0..n).map(|_| rng.random_range(0..span)).collect();
    v.sort_unstable();
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sweep_matches_brute_force(
        a in sorted(800, 2_000_000),
        b in sorted(800, 2_000_000),
        bin_ps in 1u64..5000,
        max_ps in 1u64..200_000,
    ) {
        let (w, m) = (bin_ps as f64 * 1e-12, max_ps as f64 * 1e-12);
        let fast = g2_histogram(&a, &b, w, m).unwrap();
        let slow = g2_histogram_brute(&a, &b, w, m).unwrap();
        prop_assert_eq!(fast, slow);
    }

    #[test]
    fn swapping_inputs_mirrors_histogram(
        a in sorted(500, 1_000_000),
        b in sorted(500, 1_000_000),
        bin_ps in 1u64..3000,
        max_ps in 1u64..100_000,
    ) {
        let (w, m) = (bin_ps as f64 * 1e-12, max_ps as f64 * 1e-12);
        let ab = g2_histogram(&a, &b, w, m).unwrap();
        let ba = g2_histogram(&b, &a, w, m).unwrap();
        let mut rev = ba.counts.clone();
        rev.reverse();
        prop_assert_eq!(ab.counts, rev);
    }

    #[test]
    fn parallel_is_bit_identical(a in sorted(1500, 5_000_000), b in sorted(1500, 5_000_000), threads in 1usize..=8) {
        let serial = g2_histogram(&a, &b, 100e-12, 60e-9).unwrap();
        let par = g2_histogram_par(&a, &b, 100e-12, 60e-9, threads).unwrap();
        prop_assert_eq!(par, serial);
    }
}

#[test]
fn ten_thousand_tags_against_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a = random_stream(&mut rng, 10_000, 121_000_000);
    let b = random_stream(&mut rng, 10_000, 121_000_000);
    let fast = g2_histogram(&a, &b, 100e-12, 80e-9).unwrap();
    assert_eq!(fast, g2_histogram_brute(&a, &b, 100e-12, 80e-9).unwrap());
    assert!(fast.total() > 0);
}

#[test]
fn parallel_threads_one_to_eight() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let a = random_stream(&mut rng, 200_000, 2_420_000_000);
    let b = random_stream(&mut rng, 200_000, 2_420_000_000);
    let serial = g2_histogram(&a, &b, 1e-9, 300e-9).unwrap();
    for threads in 1..=8 {
        assert_eq!(g2_histogram_par(&a, &b, 1e-9, 300e-9, threads).unwrap(), serial, "threads = {threads}");
    }
}
