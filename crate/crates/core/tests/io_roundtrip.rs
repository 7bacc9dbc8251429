use proptest::prelude::*;
use retest::io::{read_labels, read_predictions, write_labels, write_predictions, Format};
use retest::severity::softmax;
use retest::{LabeledExample, ModelFamily, ModelKind, PredictionRecord};

fn arb_kind() -> impl Strategy<Value = ModelKind> {
    prop_oneof![
        Just(ModelKind::binary()),
        (2usize..6).prop_map(|k| ModelKind::new(ModelFamily::MultiClass, k).unwrap()),
        (2usize..6).prop_map(|k| ModelKind::new(ModelFamily::Ordinal, k).unwrap()),
        (2usize..6).prop_map(|k| ModelKind::new(ModelFamily::Regression, k).unwrap()),
    ]
}

fn arb_record(kind: ModelKind) -> impl Strategy<Value = PredictionRecord> {
    let n = kind.output_len();
    (
        "[a-z][a-z0-9_]{0,6}",
        "img[0-9]{1,2}",
        prop::option::of(0u32..100),
        prop::collection::vec(-1e6f64..1e6, n),
        prop::collection::vec(0.0f64..=1.0, n),
        any::<bool>(),
    )
        .prop_map(move |(pid, iid, mc, raw, unit, prob)| {
            let (outputs, is_probability) = match kind.family() {
                ModelFamily::Binary | ModelFamily::Ordinal => (unit, false),
                ModelFamily::MultiClass if prob => (softmax(&raw).unwrap(), true),
                ModelFamily::MultiClass => (raw, false),
                ModelFamily::Regression => (raw, false),
            };
            PredictionRecord {
                patient_id: pid,
                image_id: iid,
                mc_sample: mc,
                outputs,
                kind,
                is_probability,
            }
        })
}

fn arb_records() -> impl Strategy<Value = Vec<PredictionRecord>> {
    arb_kind().prop_flat_map(|k| prop::collection::vec(arb_record(k), 1..20))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn predictions_round_trip(records in arb_records()) {
        let dir = tempfile::tempdir().unwrap();
        for (format, name) in [(Format::Csv, "p.csv"), (Format::Jsonl, "p.jsonl")] {
            let path = dir.path().join(name);
            write_predictions(&path, &records, format).unwrap();
            let back = read_predictions(&path, format).unwrap();
            prop_assert_eq!(&back, &records);
        }
    }

    #[test]
    fn labels_round_trip(
        labels in prop::collection::btree_map(("[a-z]{1,4}", "[a-z0-9]{1,3}"), 0usize..10, 0..30)
    ) {
        let labels: Vec<LabeledExample> = labels
            .into_iter()
            .map(|((patient_id, image_id), true_class)| LabeledExample { patient_id, image_id, true_class })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("l.csv");
        write_labels(&path, &labels).unwrap();
        prop_assert_eq!(read_labels(&path).unwrap(), labels);
    }
}

#[test]
fn format_from_extension() {
    use std::path::Path;
    assert_eq!(
        Format::resolve(None, Path::new("a.csv")).unwrap(),
        Format::Csv
    );
    assert_eq!(
        Format::resolve(None, Path::new("a.jsonl")).unwrap(),
        Format::Jsonl
    );
    assert!(Format::resolve(None, Path::new("a.txt")).is_err());
    assert_eq!(
        Format::resolve(Some(Format::Jsonl), Path::new("a.txt")).unwrap(),
        Format::Jsonl
    );
}
