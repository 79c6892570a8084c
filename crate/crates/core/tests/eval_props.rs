use std::collections::BTreeMap;

use num_rational::Rational64;
use proptest::prelude::*;
use sactline::eval::{note_micro, timeline_f1, NoteLevelMetrics, TimelineMetrics};
use sactline::timeline::{aggregate, NormalizedTriplet, PatientTimeline};
use sactline::timenorm::NormalizedTime;
use sactline::{Relation, SactTriplet, Scalar};

type Rows = Vec<(usize, usize, usize)>;

const S: [&str; 4] = ["taxol", "ac", "fec", "tamoxifen"];
const T: [&str; 3] = ["2012", "2012-05", "2012-05-01"];

fn rows() -> impl Strategy<Value = Rows> {
    prop::collection::vec((0..4usize, 0..3usize, 0..3usize), 0..6)
}

fn timeline(p: &str, rows: &Rows) -> PatientTimeline {
    aggregate(
        p,
        rows.iter().map(|&(s, r, t)| {
            NormalizedTriplet::new(S[s], Relation::ALL[r], NormalizedTime::parse(T[t]).unwrap())
        }),
    )
}

fn triplets(rows: &Rows) -> Vec<SactTriplet> {
    rows.iter()
        .map(|&(s, r, t)| SactTriplet::new(S[s], Relation::ALL[r], T[t]).unwrap())
        .collect()
}

fn instance() -> impl Strategy<Value = Vec<(Rows, Rows)>> {
    prop::collection::vec((rows(), rows()), 1..6)
}

fn scores<T: Scalar>(inst: &[(Rows, Rows)], order: &[usize]) -> TimelineMetrics<T> {
    let ids: Vec<String> = (0..inst.len()).map(|i| format!("p{i}")).collect();
    let pred: Vec<_> = order
        .iter()
        .map(|&i| timeline(&ids[i], &inst[i].0))
        .collect();
    let gold: Vec<_> = order
        .iter()
        .map(|&i| timeline(&ids[i], &inst[i].1))
        .collect();
    timeline_f1(&pred, &gold, &ids).unwrap()
}

fn between<T: Scalar>(x: T) -> bool {
    x >= T::zero() && x <= T::one()
}

proptest! {
    #[test]
    fn timeline_metric_laws(
        (inst, order) in instance().prop_flat_map(|inst| {
            let order = Just((0..inst.len()).collect::<Vec<_>>()).prop_shuffle();
            (Just(inst), order)
        })
    ) {
        let a: TimelineMetrics<f64> = scores(&inst, &(0..inst.len()).collect::<Vec<_>>());
        let b: TimelineMetrics<f64> = scores(&inst, &order);
        prop_assert_eq!(&a, &b);
        prop_assert!(between(a.type_a_f1) && between(a.type_b_f1) && between(a.official));
        prop_assert!(a.type_b_patients <= a.type_a_patients);
        if inst.iter().all(|(_, g)| !g.is_empty()) {
            prop_assert_eq!(a.type_a_f1, a.type_b_f1);
        }

        let exact: TimelineMetrics<Rational64> = scores(&inst, &order);
        prop_assert!((exact.official.to_f64() - a.official).abs() < 1e-12);
        let single: TimelineMetrics<f32> = scores(&inst, &order);
        prop_assert!((f64::from(single.official) - a.official).abs() < 1e-5);
    }

    #[test]
    fn note_metric_laws(inst in instance()) {
        let map = |pick: fn(&(Rows, Rows)) -> &Rows| {
            inst.iter()
                .enumerate()
                .map(|(i, x)| (format!("p/n{i}"), triplets(pick(x))))
                .collect::<BTreeMap<_, _>>()
        };
        let m: NoteLevelMetrics<f64> = note_micro(&map(|x| &x.0), &map(|x| &x.1));
        prop_assert!(between(m.precision) && between(m.recall) && between(m.f1));
        if m.precision > 0.0 && m.recall > 0.0 {
            prop_assert!(m.f1 >= m.precision.min(m.recall) - 1e-12);
            prop_assert!(m.f1 <= m.precision.max(m.recall) + 1e-12);
        }
        let perfect: NoteLevelMetrics<f64> = note_micro(&map(|x| &x.1), &map(|x| &x.1));
        prop_assert_eq!(perfect.false_positives + perfect.false_negatives, 0);
    }
}
