use std::collections::BTreeMap;

use divmon_core::{
    attribute_suspect, bin_scores, js_divergence, kl_divergence, moving_average, BinningSpec,
    DivergenceKind, DivergenceReading, DivergenceValue, Magnitude, Metric, MonitorConfig,
    MonitorState, Operand, PredictionEvent, ScoreDistribution, Span, Suspect, Timestamp,
    WindowAccumulator, WindowSpec,
};
use proptest::prelude::*;
use twofloat::TwoFloat;

fn dist_from_weights(weights: &[f64]) -> ScoreDistribution {
    let total: f64 = weights.iter().sum();
    let mass: Vec<f64> = weights.iter().map(|w| w / total).collect();
    ScoreDistribution::from_mass(BinningSpec::unit(weights.len()).unwrap(), mass, 1).unwrap()
}

// Double-double evaluation of sum p log2(p / q); None when some p > 0 meets q = 0.
fn oracle_kl(p: &[f64], q: &[f64]) -> Option<f64> {
    let ln2 = TwoFloat::from(2.0).ln();
    let mut acc = TwoFloat::from(0.0);
    for (&a, &b) in p.iter().zip(q) {
        if a == 0.0 {
            continue;
        }
        if b == 0.0 {
            return None;
        }
        let ratio = TwoFloat::from(a) / TwoFloat::from(b);
        acc += TwoFloat::from(a) * ratio.ln() / ln2;
    }
    Some(acc.hi() + acc.lo())
}

fn oracle_js(p: &[f64], q: &[f64]) -> f64 {
    let ln2 = TwoFloat::from(2.0).ln();
    let mut acc = TwoFloat::from(0.0);
    for (&a, &b) in p.iter().zip(q) {
        let m = (TwoFloat::from(a) + TwoFloat::from(b)) / 2.0;
        for x in [a, b] {
            if x > 0.0 {
                acc += TwoFloat::from(x) * (TwoFloat::from(x) / m).ln() / ln2 / 2.0;
            }
        }
    }
    acc.hi() + acc.lo()
}

fn weights(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![1 => Just(0.0), 6 => 0.001f64..1.0], n)
        .prop_filter("non-empty support", |w| w.iter().any(|&x| x > 0.0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn js_is_symmetric_bounded_and_matches_oracle(a in weights(10), b in weights(10)) {
        let p = dist_from_weights(&a);
        let q = dist_from_weights(&b);
        let pq = js_divergence(&p, &q).unwrap().bits();
        let qp = js_divergence(&q, &p).unwrap().bits();
        prop_assert!((pq - qp).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&pq));
        prop_assert!((pq - oracle_js(p.mass(), q.mass())).abs() < 1e-10);
        prop_assert_eq!(js_divergence(&p, &p).unwrap().bits(), 0.0);
    }

    #[test]
    fn kl_is_nonnegative_and_matches_oracle(a in weights(10), b in weights(10)) {
        let p = dist_from_weights(&a);
        let q = dist_from_weights(&b);
        let v = kl_divergence(&p, &q, None).unwrap();
        match oracle_kl(p.mass(), q.mass()) {
            Some(expected) => {
                prop_assert!(v.bits() >= 0.0);
                prop_assert!((v.bits() - expected).abs() < 1e-10, "{} vs {}", v.bits(), expected);
            }
            None => prop_assert!(v.is_infinite()),
        }
        prop_assert_eq!(kl_divergence(&p, &p, None).unwrap().bits(), 0.0);
    }

    #[test]
    fn js_zero_only_for_equal_distributions(a in weights(6), b in weights(6)) {
        let p = dist_from_weights(&a);
        let q = dist_from_weights(&b);
        let v = js_divergence(&p, &q).unwrap().bits();
        let max_gap = p.mass().iter().zip(q.mass()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        if max_gap > 1e-6 {
            prop_assert!(v > 0.0);
        }
    }

    #[test]
    fn moving_average_stays_normalized(
        hist in prop::collection::vec(weights(10), 1..8),
        k in 1usize..10,
    ) {
        let history: Vec<_> = hist.iter().map(|w| dist_from_weights(w)).collect();
        let avg = moving_average(&history, k).unwrap();
        let sum: f64 = avg.mass().iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-12);
        // Independent mean over the last k vectors.
        let take = k.min(history.len());
        for bin in 0..10 {
            let expected: f64 = history[history.len() - take..].iter().map(|d| d.mass()[bin]).sum::<f64>() / take as f64;
            prop_assert!((avg.mass()[bin] - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn every_timestamp_maps_to_exactly_one_window(t in 0i64..10_000_000, dur in 1i64..100_000) {
        let spec = WindowSpec::new(Span(dur), Timestamp(0), 1).unwrap();
        let w = divmon_core::assign_window(Timestamp(t), &spec).unwrap();
        prop_assert!(w.contains(Timestamp(t)));
        if w.index > 0 {
            prop_assert!(!spec.window(w.index - 1).unwrap().contains(Timestamp(t)));
        }
        prop_assert!(!spec.window(w.index + 1).unwrap().contains(Timestamp(t)));
    }

    #[test]
    fn attribution_matches_brute_force(values in prop::collection::vec(0.0f64..0.6, 6), threshold in 0.05f64..0.5) {
        let models = ["M0", "M1", "M2", "M3"];
        let mut readings = Vec::new();
        let mut i = 0;
        for a in 0..4 {
            for b in a + 1..4 {
                readings.push(reading(models[a], models[b], values[i]));
                i += 1;
            }
        }
        let got = attribute_suspect(&readings, threshold).unwrap();
        let any_exceeding = readings.iter().any(|r| r.bits() > threshold);
        let candidates: Vec<&str> = models
            .iter()
            .copied()
            .filter(|m| {
                let in_every_exceeding = readings.iter().filter(|r| r.bits() > threshold).all(|r| r.involves(m));
                let others_below = readings.iter().filter(|r| !r.involves(m)).all(|r| r.bits() <= threshold);
                in_every_exceeding && others_below
            })
            .collect();
        let expected = match (any_exceeding, candidates.as_slice()) {
            (true, [m]) => Suspect::Model((*m).to_string()),
            _ => Suspect::Inconclusive,
        };
        prop_assert_eq!(got, expected);
    }

    #[test]
    fn parallel_partials_equal_serial(
        scores in prop::collection::vec((0usize..3, 0.0f64..=1.0, 0i64..86_400_000, 0usize..4), 0..300),
    ) {
        let spec = WindowSpec::new(Span::DAY, Timestamp(0), 1).unwrap();
        let window = spec.window(0).unwrap();
        let binning = BinningSpec::default();
        let models = ["AI1", "AI2", "AI3"];
        let mut serial = WindowAccumulator::new(window.clone(), binning);
        let mut partials: Vec<_> = (0..4).map(|_| WindowAccumulator::new(window.clone(), binning)).collect();
        for (i, &(m, s, t, part)) in scores.iter().enumerate() {
            let e = PredictionEvent {
                study_id: i.to_string(),
                timestamp: Timestamp(t),
                model_id: models[m].into(),
                class_label: "c".into(),
                score: s,
            };
            serial.accumulate(&e).unwrap();
            partials[part].accumulate(&e).unwrap();
        }
        // Merge in reverse to exercise commutativity.
        let mut merged = WindowAccumulator::new(window, binning);
        for p in partials.iter().rev() {
            merged.merge(p).unwrap();
        }
        prop_assert_eq!(&merged, &serial);
        let a = merged.close(&spec).unwrap();
        let b = serial.close(&spec).unwrap();
        prop_assert_eq!(a, b);
    }
}

fn reading(a: &str, b: &str, v: f64) -> DivergenceReading {
    let window = WindowSpec::new(Span::DAY, Timestamp(0), 1)
        .unwrap()
        .window(0)
        .unwrap();
    DivergenceReading {
        metric: Metric::Predictive,
        model_a: a.into(),
        model_b: Operand::Model(b.into()),
        window,
        value: DivergenceValue {
            kind: DivergenceKind::Js,
            magnitude: Magnitude::Finite(v),
            smoothed: false,
        },
        kl: None,
        reference: None,
    }
}

#[test]
fn smoothing_approaches_unsmoothed_monotonically() {
    let p = dist_from_weights(&[3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0, 5.0, 3.0]);
    let q = dist_from_weights(&[2.0, 7.0, 1.0, 8.0, 2.0, 8.0, 1.0, 8.0, 2.0, 8.0]);
    let exact = kl_divergence(&p, &q, None).unwrap().bits();
    let mut last = f64::INFINITY;
    for eps in [1e-3, 1e-6, 1e-9] {
        let gap = (kl_divergence(&p, &q, Some(eps)).unwrap().bits() - exact).abs();
        assert!(gap < last, "eps {eps}: gap {gap} not below {last}");
        last = gap;
    }
    assert!(last < 1e-6, "{last}");
}

#[test]
fn conservation_on_random_stream() {
    use proptest::test_runner::TestRunner;
    let mut runner = TestRunner::deterministic();
    let strategy =
        prop::collection::vec((0usize..3, 0.0f64..=1.0, 0i64..(5 * 86_400_000)), 1..2_000);
    runner
        .run(&strategy, |events| {
            let mut config = MonitorConfig::new("AI1", ["AI2", "AI3"]);
            config.window = WindowSpec::new(Span::DAY, Timestamp(0), 1).unwrap();
            let mut sorted = events.clone();
            sorted.sort_by_key(|e| e.2);
            let mut state = MonitorState::new(config.clone()).unwrap();
            let mut expected: BTreeMap<(u64, String), u64> = BTreeMap::new();
            let models = ["AI1", "AI2", "AI3"];
            let mut closed_checked = 0;
            for (i, (m, s, t)) in sorted.iter().enumerate() {
                let e = PredictionEvent {
                    study_id: i.to_string(),
                    timestamp: Timestamp(*t),
                    model_id: models[*m].into(),
                    class_label: "c".into(),
                    score: *s,
                };
                let before = state
                    .classes()
                    .get("c")
                    .and_then(|c| c.open_window().cloned());
                let report = state.ingest(&e).unwrap();
                if !report.evaluations.is_empty() {
                    let closed = before.expect("rollover implies an open window");
                    for (model, hist) in closed.histograms() {
                        prop_assert_eq!(
                            hist.total(),
                            expected[&(closed.window().index, model.clone())]
                        );
                    }
                    closed_checked += 1;
                }
                *expected
                    .entry(((*t / 86_400_000) as u64, models[*m].into()))
                    .or_default() += 1;
            }
            prop_assert_eq!(state.diagnostics().accepted, sorted.len() as u64);
            let open = state.classes()["c"].open_window().unwrap();
            for (model, hist) in open.histograms() {
                prop_assert_eq!(
                    hist.total(),
                    expected[&(open.window().index, model.clone())]
                );
            }
            let distinct_windows = expected
                .keys()
                .map(|k| k.0)
                .collect::<std::collections::BTreeSet<_>>()
                .len();
            prop_assert_eq!(closed_checked + 1, distinct_windows);
            let evals = state.finish().unwrap();
            prop_assert_eq!(evals.len(), 1);
            Ok(())
        })
        .unwrap();
}

#[test]
fn binning_counts_match_manual_count() {
    let scores: Vec<f64> = (0..=1000).map(|i| i as f64 / 1000.0).collect();
    let h = bin_scores(&scores, BinningSpec::default()).unwrap();
    assert_eq!(h.total(), 1001);
    assert_eq!(h.counts().iter().sum::<u64>(), 1001);
    // Bins 0..8 hold 100 scores each; the last also gets the upper edge.
    assert_eq!(h.counts()[9], 101);
}
