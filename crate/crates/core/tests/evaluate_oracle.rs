mod common;

use std::collections::BTreeMap;

use common::{accuracy_replicates, f, fixture, fixture_path, floats, loa_replicates, percentile};
use retest::evaluate::{evaluate_records, EvalSettings};
use retest::io::{read_labels, read_predictions, Format};
use retest::repeatability::NormalityVerdict;

const TOL: f64 = 1e-9;

fn close(got: f64, want: f64, what: &str) {
    assert!((got - want).abs() <= TOL, "{what}: {got} vs {want}");
}

fn check(name: &str) {
    let expected = fixture(&format!("eval_{name}_expected.json"));
    let records = read_predictions(
        &fixture_path(&format!("eval_{name}_predictions.csv")),
        Format::Csv,
    )
    .unwrap();
    let labels = read_labels(&fixture_path(&format!("eval_{name}_labels.csv"))).unwrap();
    let settings = EvalSettings {
        bootstrap_iterations: 200,
        seed: 11,
        ..EvalSettings::default()
    };
    let ev = evaluate_records(&records, &labels, &settings).unwrap();
    let r = &ev.report;

    for (key, got) in [
        ("n_patients", r.n_patients),
        ("n_paired_patients", r.n_paired_patients),
        ("n_images", r.n_images),
        (
            "skipped_single_image_patients",
            r.skipped_single_image_patients,
        ),
        ("clamped_scores", r.clamped_scores),
        ("mc_aggregated_images", r.mc_aggregated_images),
    ] {
        assert_eq!(got as u64, expected[key].as_u64().unwrap(), "{name} {key}");
    }
    close(r.loa.lower, f(&expected, "loa_lower"), "loa_lower");
    close(r.loa.upper, f(&expected, "loa_upper"), "loa_upper");
    close(r.loa.width, f(&expected, "loa_width"), "loa_width");
    close(
        r.loa.width_fraction,
        f(&expected, "loa_width_fraction"),
        "width_fraction",
    );
    close(r.accuracy, f(&expected, "accuracy"), "accuracy");

    let diffs = floats(&expected["differences"]);
    let means = floats(&expected["pair_means"]);
    assert_eq!(ev.differences.len(), diffs.len());
    for ((d, want), m) in ev.differences.iter().zip(&diffs).zip(&means) {
        close(d.difference, *want, "difference");
        close(d.pair_mean, *m, "pair_mean");
    }

    let normal = expected["normal"].as_bool().unwrap();
    assert_eq!(r.normality.verdict == NormalityVerdict::Normal, normal);
    assert!((r.normality.w.unwrap() - f(&expected, "shapiro_w")).abs() <= 1e-3);
    assert!((r.normality.p_value.unwrap() - f(&expected, "shapiro_p")).abs() <= 5e-3);
    match &r.loa_parametric {
        Some(p) => {
            assert!(normal);
            close(
                p.lower,
                f(&expected, "parametric_lower"),
                "parametric_lower",
            );
            close(
                p.upper,
                f(&expected, "parametric_upper"),
                "parametric_upper",
            );
        }
        None => assert!(!normal),
    }

    // bootstrap intervals against a straight-line resampler
    let range = r.loa.range_max;
    let loa_reps = loa_replicates(&diffs, range, 200, 11);
    assert_eq!(r.loa_ci.replicates.len(), loa_reps.len());
    for (a, b) in r.loa_ci.replicates.iter().zip(&loa_reps) {
        close(*a, *b, "loa replicate");
    }
    close(r.loa_ci.ci_low, percentile(&loa_reps, 2.5), "loa ci_low");
    close(r.loa_ci.ci_high, percentile(&loa_reps, 97.5), "loa ci_high");

    let mut units: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for (im, l) in ev.images.iter().zip(sorted_labels(&labels)) {
        assert_eq!((im.patient_id.as_str(), im.image_id.as_str()), (l.0, l.1));
        let u = units.entry(l.0).or_default();
        u.0 += usize::from(im.predicted_class == l.2);
        u.1 += 1;
    }
    let units: Vec<(usize, usize)> = units.into_values().collect();
    let acc_reps = accuracy_replicates(&units, 200, 11);
    for (a, b) in r.accuracy_ci.replicates.iter().zip(&acc_reps) {
        close(*a, *b, "accuracy replicate");
    }
    close(
        r.accuracy_ci.ci_low,
        percentile(&acc_reps, 2.5),
        "accuracy ci_low",
    );
    close(
        r.accuracy_ci.ci_high,
        percentile(&acc_reps, 97.5),
        "accuracy ci_high",
    );
}

fn sorted_labels(labels: &[retest::LabeledExample]) -> Vec<(&str, &str, usize)> {
    let mut v: Vec<_> = labels
        .iter()
        .map(|l| (l.patient_id.as_str(), l.image_id.as_str(), l.true_class))
        .collect();
    v.sort();
    v
}

#[test]
fn multiclass_mc_fixture_matches_oracle() {
    check("multiclass");
}

#[test]
fn regression_fixture_matches_oracle() {
    check("regression");
}

#[test]
fn bootstrap_is_independent_of_thread_count() {
    let records = read_predictions(
        &fixture_path("eval_multiclass_predictions.csv"),
        Format::Csv,
    )
    .unwrap();
    let labels = read_labels(&fixture_path("eval_multiclass_labels.csv")).unwrap();
    let settings = EvalSettings::default();
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| {
                evaluate_records(&records, &labels, &settings)
                    .unwrap()
                    .report
            })
    };
    let one = run(1);
    assert_eq!(one, run(4));
    assert_eq!(one.to_json().unwrap(), run(3).to_json().unwrap());
}
