use spsim::analysis::CoincidenceMode;
use spsim::demux::DemuxConfig;
use spsim::pipeline::{expected_nfold, explicit_nfold, lazy_nfold, LazyRun};
use spsim::source::SourceConfig;

fn boosted() -> SourceConfig {
    SourceConfig { in_fiber_prob: 0.5, q_on: 0.8, t_on: 2e-6, ..Default::default() }
}

/// Counts agree with the closed form within 5 sigma of Poisson noise.
fn assert_matches(label: &str, counts: &[(usize, u64)], expected_rates: &[(usize, f64)], time: f64) {
    for (&(n, got), &(m, rate)) in counts.iter().zip(expected_rates) {
        assert_eq!(n, m);
        let mean = rate * time;
        if mean < 20.0 {
            continue;
        }
        let z = (got as f64 - mean) / mean.sqrt();
        assert!(z.abs() < 5.0, "{label} n={n}: {got} vs {mean:.1} (z = {z:.2})");
    }
}

#[test]
fn lazy_and_explicit_agree_with_closed_form() {
    let src = boosted();
    let dmx = DemuxConfig::default();
    let expected = expected_nfold(&src, &dmx).unwrap();
    let rates: Vec<(usize, f64)> = expected.rows.iter().map(|r| (r.n, r.detection_rate_hz)).collect();

    let n_pulses = 51 * 150_000;
    let explicit = explicit_nfold(&src, &dmx, n_pulses, CoincidenceMode::FirstN).unwrap();
    let ex_counts: Vec<(usize, u64)> = explicit.rows.iter().map(|r| (r.n, r.event_count)).collect();
    assert_matches("explicit", &ex_counts, &rates, explicit.integration_time);

    let lazy = lazy_nfold(&src, &dmx, &LazyRun { n_pulses: 51 * 2_000_000, segments: 8, seed: 21 }).unwrap();
    let lz_counts: Vec<(usize, u64)> = lazy.table.rows.iter().map(|r| (r.n, r.event_count)).collect();
    assert_matches("lazy", &lz_counts, &rates, lazy.table.integration_time);
    assert!(lz_counts.iter().filter(|c| c.1 >= 20).count() >= 4);
}

#[test]
fn lazy_handles_jitter_and_dark_counts() {
    let src = boosted();
    let dmx = DemuxConfig { detector_jitter_sigma: 50e-12, dark_count_rate: 2e4, ..Default::default() };
    let explicit = explicit_nfold(&src, &dmx, 51 * 150_000, CoincidenceMode::FirstN).unwrap();
    let lazy = lazy_nfold(&src, &dmx, &LazyRun { n_pulses: 51 * 1_500_000, segments: 4, seed: 2 }).unwrap();
    for (e, l) in explicit.rows.iter().zip(&lazy.table.rows) {
        let (a, b) = (e.event_count as f64, l.event_count as f64 / 10.0);
        if a < 30.0 {
            continue;
        }
        let sigma = (a + b / 10.0).sqrt();
        assert!((a - b).abs() < 5.0 * sigma, "n={}: explicit {a} vs lazy/10 {b}", e.n);
    }
}

#[test]
fn coincidence_rows_nest() {
    let src = boosted();
    let dmx = DemuxConfig::default();
    let first = explicit_nfold(&src, &dmx, 51 * 40_000, CoincidenceMode::FirstN).unwrap();
    let any = explicit_nfold(&src, &dmx, 51 * 40_000, CoincidenceMode::AnyN).unwrap();
    for w in first.rows.windows(2) {
        assert!(w[1].event_count <= w[0].event_count);
    }
    for w in any.rows.windows(2) {
        assert!(w[1].event_count <= w[0].event_count);
    }
    for (f, a) in first.rows.iter().zip(&any.rows) {
        assert!(a.event_count >= f.event_count);
    }
    assert_eq!(first.rows.last().unwrap().event_count, any.rows.last().unwrap().event_count);
}

#[test]
fn lazy_is_thread_independent() {
    let src = boosted();
    let dmx = DemuxConfig::default();
    let run = LazyRun { n_pulses: 51 * 100_000, segments: 6, seed: 4 };
    let pool = |t| rayon::ThreadPoolBuilder::new().num_threads(t).build().unwrap();
    let one = pool(1).install(|| lazy_nfold(&src, &dmx, &run).unwrap());
    for t in 2..=4 {
        assert_eq!(pool(t).install(|| lazy_nfold(&src, &dmx, &run).unwrap()), one);
    }
}
