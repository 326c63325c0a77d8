use std::fs;
use std::path::Path;

use gpsr::data::{load_cohort_csv, lvcf_sequence, CohortFiles, ObservationSet, ObservationSpec, RawEvent, Split, SplitFiles, TaskConfig};
use gpsr::Error;

fn observations() -> ObservationSet {
    ObservationSet::new(vec![
        ObservationSpec::new("hr", 3, 60.0, 100.0).unwrap(),
        ObservationSpec::new("lactate", 2, 0.5, 2.0).unwrap(),
    ])
    .unwrap()
}

fn task(holdout: f64) -> TaskConfig {
    TaskConfig {
        id: "csv".into(),
        interval: 1.0,
        horizon: 2.0,
        holdout,
    }
}

fn write_split(dir: &Path, name: &str, events: &str, labels: &str, admissions: Option<&str>) -> SplitFiles {
    let e = dir.join(format!("{name}_events.csv"));
    let l = dir.join(format!("{name}_labels.csv"));
    fs::write(&e, format!("admission_id,observation_id,time_hours,value\n{events}")).unwrap();
    fs::write(&l, format!("admission_id,event_time_hours\n{labels}")).unwrap();
    let a = admissions.map(|rows| {
        let p = dir.join(format!("{name}_admissions.csv"));
        fs::write(&p, format!("admission_id,duration_hours\n{rows}")).unwrap();
        p
    });
    SplitFiles {
        events: e,
        labels: l,
        admissions: a,
    }
}

fn files(dir: &Path, train: (&str, &str), valid: (&str, &str), test: (&str, &str)) -> CohortFiles {
    CohortFiles {
        train: write_split(dir, "train", train.0, train.1, None),
        valid: write_split(dir, "valid", valid.0, valid.1, None),
        test: write_split(dir, "test", test.0, test.1, None),
    }
}

#[test]
fn empty_labels_give_zero_prior() {
    let dir = tempfile::tempdir().unwrap();
    let f = files(
        dir.path(),
        ("a,hr,1,80\na,hr,4,120\n", ""),
        ("b,lactate,3,3.0\n", ""),
        ("c,hr,2,50\n", ""),
    );
    let c = load_cohort_csv(&f, &observations(), &task(0.0)).unwrap();
    for split in Split::ALL {
        let s = c.stats(split);
        assert_eq!(s.positives, 0);
        assert_eq!(s.prior, 0.0);
    }
    assert_eq!(c.train[0].steps.len(), 4);
}

#[test]
fn single_admission_matches_lvcf() {
    let dir = tempfile::tempdir().unwrap();
    let f = files(dir.path(), ("a,hr,2,40\na,hr,5,90\n", ""), ("b,hr,1,80\n", ""), ("c,hr,1,80\n", ""));
    let c = load_cohort_csv(&f, &observations(), &task(0.0)).unwrap();
    let raw = vec![
        RawEvent {
            observation: "hr".into(),
            time: 2.0,
            value: 40.0,
        },
        RawEvent {
            observation: "hr".into(),
            time: 5.0,
            value: 90.0,
        },
    ];
    let times = [1.0, 2.0, 3.0, 4.0, 5.0];
    let expected = lvcf_sequence(&raw, &observations(), &times, 2.0).unwrap();
    let seq = &c.train[0];
    assert_eq!(seq.steps.iter().map(|s| s.time).collect::<Vec<_>>(), times);
    for (k, step) in seq.steps.iter().enumerate() {
        assert_eq!(step.input, expected.inputs[k]);
        assert_eq!(step.gpsr, expected.gpsr[k]);
    }
    // abnormal-low seen at t=2, carried to t=4; GPSR at t=1 sees t<=3.
    assert_eq!(seq.steps[0].input, vec![0.0, 0.0, 0.0, 0.0, 0.0]);
    assert_eq!(seq.steps[1].input, vec![0.0, 1.0, 0.0, 0.0, 0.0]);
    assert_eq!(seq.steps[0].gpsr, vec![1, 0]);
    assert_eq!(seq.steps[2].gpsr, vec![0, 0]);
}

#[test]
fn labels_look_ahead_and_holdout_masks() {
    let dir = tempfile::tempdir().unwrap();
    let mut f = files(dir.path(), ("", "a,5\n"), ("b,hr,1,80\n", "b,1.5\n"), ("c,hr,1,80\n", ""));
    f.train = write_split(dir.path(), "train", "", "a,5\n", Some("a,9\n"));
    let c = load_cohort_csv(&f, &observations(), &task(2.0)).unwrap();
    let a = &c.train[0];
    let summary: Vec<(f64, bool, bool)> = a.steps.iter().map(|s| (s.time, s.label, s.valid)).collect();
    assert_eq!(
        summary,
        vec![
            (1.0, false, true),
            (2.0, false, true),
            (3.0, true, true),
            (4.0, true, true),
            (5.0, false, true),
            (6.0, false, false),
            (7.0, false, false),
            (8.0, false, true),
            (9.0, false, true),
        ]
    );
    let s = c.stats(Split::Train);
    assert_eq!((s.positives, s.negatives), (2, 5));
    assert_eq!(s.prior, 2.0 / 7.0);
}

#[test]
fn malformed_row_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let f = files(
        dir.path(),
        ("a,hr,1,80\na,hr,oops,80\n", ""),
        ("b,hr,1,80\n", ""),
        ("c,hr,1,80\n", ""),
    );
    match load_cohort_csv(&f, &observations(), &task(0.0)) {
        Err(Error::Malformed { line, path, .. }) => {
            assert_eq!(line, 3);
            assert!(path.ends_with("train_events.csv"));
        }
        other => panic!("expected a malformed-row error, got {other:?}"),
    }
    let f = files(dir.path(), ("a,hr,-1,80\n", ""), ("b,hr,1,80\n", ""), ("c,hr,1,80\n", ""));
    assert!(matches!(
        load_cohort_csv(&f, &observations(), &task(0.0)),
        Err(Error::Malformed { line: 2, .. })
    ));
}

#[test]
fn overlapping_admissions_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let f = files(dir.path(), ("a,hr,1,80\n", ""), ("a,hr,1,80\n", ""), ("c,hr,1,80\n", ""));
    let err = load_cohort_csv(&f, &observations(), &task(0.0)).unwrap_err();
    assert!(err.to_string().contains("more than one split"), "{err}");
}

#[test]
fn unknown_observation_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let f = files(dir.path(), ("a,spo2,1,80\n", ""), ("b,hr,1,80\n", ""), ("c,hr,1,80\n", ""));
    let err = load_cohort_csv(&f, &observations(), &task(0.0)).unwrap_err();
    assert!(err.to_string().contains("spo2"), "{err}");
}

#[test]
fn stats_block_and_reencoding_are_stable() {
    let dir = tempfile::tempdir().unwrap();
    let f = files(
        dir.path(),
        ("a,hr,1,80\na,lactate,2,4\nd,hr,3,130\n", "a,2.5\n"),
        ("b,hr,1,80\nb,hr,6,80\n", "b,4\n"),
        ("c,hr,1,80\nc,hr,3,20\n", ""),
    );
    let first = load_cohort_csv(&f, &observations(), &task(0.0)).unwrap();
    let second = load_cohort_csv(&f, &observations(), &task(0.0)).unwrap();
    assert_eq!(first, second);
    let csv = first.stats_csv();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("split,adms,pos,neg,prior"));
    assert!(lines.next().unwrap().starts_with("train,2,"));
    for split in Split::ALL {
        let s = first.stats(split);
        let total = s.positives + s.negatives;
        assert_eq!(s.prior, if total == 0 { 0.0 } else { s.positives as f64 / total as f64 });
    }
    // Archive round trip keeps the sequences bit-identical.
    let arch = dir.path().join("archive");
    first.save(&arch).unwrap();
    assert_eq!(gpsr::data::Cohort::load(&arch).unwrap(), first);
}
