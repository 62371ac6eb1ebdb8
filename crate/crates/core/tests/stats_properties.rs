use ioncavity::detector::{Click, ClickStream, Detector};
use ioncavity::stats::{apply_analysis_dead_time, cross_correlate, normalize_g2, pulse_shape};
use proptest::prelude::*;

fn times() -> impl Strategy<Value = Vec<u64>> {
    proptest::collection::vec(0u64..50_000_000, 0..120).prop_map(|mut v| {
        v.sort_unstable();
        v
    })
}

fn stream(a: &[u64], b: &[u64]) -> ClickStream {
    let mut ev: Vec<Click> = a
        .iter()
        .map(|&t| Click { time_ps: t, detector: Detector::A, origin: None })
        .chain(b.iter().map(|&t| Click { time_ps: t, detector: Detector::B, origin: None }))
        .collect();
    ev.sort_by_key(|c| (c.time_ps, c.detector.index()));
    ClickStream::new(ev)
}

proptest! {
    #[test]
    fn cross_correlation_is_antisymmetric(a in times(), b in times(), bin in 1u64..5000, excl in 0.0f64..30.0) {
        let bin_us = bin as f64 * 1e-3;
        let ab = cross_correlate(&a, &b, bin_us, 20.0, 125.0, excl).unwrap();
        let ba = cross_correlate(&b, &a, bin_us, 20.0, 125.0, excl).unwrap();
        prop_assert_eq!(ab.admitted_pairs, ba.admitted_pairs);
        let n = ab.counts.len();
        for k in 0..n {
            prop_assert_eq!(ab.counts[k], ba.counts[n - 1 - k]);
        }
    }

    #[test]
    fn every_pair_in_range_is_counted_once(a in times(), b in times()) {
        let h = cross_correlate(&a, &b, 1.0, 10.0, 125.0, 0.0).unwrap();
        let range_ps = 10_000_000i64;
        let brute = a.iter()
            .flat_map(|&x| b.iter().map(move |&y| y as i64 - x as i64))
            .filter(|tau| tau.abs() <= range_ps)
            .count() as u64;
        prop_assert_eq!(h.admitted_pairs, brute);
        prop_assert_eq!(h.counts.iter().sum::<f64>() as u64, brute);
    }

    #[test]
    fn g2_is_invariant_under_exposure_scaling(a in times(), b in times(), c in 1.0f64..1000.0) {
        let h = cross_correlate(&a, &b, 1.0, 10.0, 125.0, 10.0).unwrap();
        let mut scaled = h.clone();
        scaled.counts.iter_mut().for_each(|x| *x *= c);
        scaled.variance.iter_mut().for_each(|x| *x *= c * c);
        let g = normalize_g2(&h, 50.0, 70.0, 2.0).unwrap();
        let gs = normalize_g2(&scaled, 50.0, 70.0, 2.0 * c).unwrap();
        for (x, y) in g.counts.iter().zip(&gs.counts) {
            prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
        }
    }

    #[test]
    fn pulse_area_counts_admitted_clicks(a in times(), b in times(), n_trials in 1u64..200) {
        let s = stream(&a, &b);
        let period_us = 414.5;
        let p = pulse_shape(&s, n_trials, period_us, 120.0, 0.5).unwrap();
        let period_ps = 414_500_000u64;
        let admitted = s.events.iter()
            .filter(|c| c.time_ps / period_ps < n_trials && c.time_ps % period_ps < 120_000_000)
            .count();
        prop_assert!((p.area() * n_trials as f64 - admitted as f64).abs() < 1e-9);
        prop_assert_eq!(p.counts.iter().sum::<u64>() as usize, admitted);
    }

    #[test]
    fn analysis_dead_time_is_idempotent(a in times(), b in times(), dead in 0.0f64..5.0) {
        let s = stream(&a, &b);
        let once = apply_analysis_dead_time(&s, dead);
        prop_assert_eq!(apply_analysis_dead_time(&once, dead), once);
    }
}
