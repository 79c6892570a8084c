use proptest::prelude::*;
use sactline::extraction::{
    ensemble_concat, postprocess_triplets, NoteExtraction, Strategy as Kind,
};
use sactline::{Relation, SactTriplet};

fn relation() -> impl Strategy<Value = Relation> {
    prop::sample::select(Relation::ALL.to_vec())
}

fn triplet() -> impl Strategy<Value = SactTriplet> {
    let sact = prop::collection::vec(
        prop_oneof![
            Just("adjuvant"),
            Just("neoadjuvant"),
            Just("chemo"),
            Just("CHEMOtherapy"),
            Just("taxol"),
            Just("/"),
            Just("AC"),
            Just("x/y"),
        ],
        1..5,
    );
    let time = prop::collection::vec(
        prop_oneof![
            Just("about"),
            Just("In"),
            Just("around"),
            Just("2012"),
            Just("March"),
            Just("today")
        ],
        1..4,
    );
    (sact, relation(), time).prop_filter_map("valid triplet", |(s, r, t)| {
        SactTriplet::new(s.join(" "), r, t.join(" ")).ok()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn postprocess_is_idempotent(input in prop::collection::vec(triplet(), 0..5)) {
        let once = postprocess_triplets(&input);
        prop_assert_eq!(postprocess_triplets(&once), once);
    }

    #[test]
    fn slash_split_counts_components(
        parts in prop::collection::vec("[A-Za-z]{1,8}", 1..5),
        rel in relation(),
    ) {
        let t = SactTriplet::new(parts.join("/"), rel, "2012").unwrap();
        let out = postprocess_triplets(&[t]);
        prop_assert_eq!(out.len(), parts.len());
        for (o, p) in out.iter().zip(&parts) {
            prop_assert_eq!(o.sact(), p.as_str());
            prop_assert_eq!(o.relation(), rel);
            prop_assert_eq!(o.time_raw(), "2012");
        }
    }

    #[test]
    fn ensemble_length_is_sum(sizes in prop::collection::vec(0usize..5, 0..4)) {
        let parts: Vec<NoteExtraction> = sizes
            .iter()
            .map(|&n| {
                let mut e = NoteExtraction::empty("p", "n", Kind::SftModel);
                e.triplets = (0..n)
                    .map(|i| SactTriplet::new(format!("d{i}"), Relation::Contains, "today").unwrap())
                    .collect();
                e
            })
            .collect();
        let out = ensemble_concat("p", "n", &parts).unwrap();
        prop_assert_eq!(out.triplets.len(), sizes.iter().sum::<usize>());
    }
}
