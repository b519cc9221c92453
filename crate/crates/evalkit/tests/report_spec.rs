//! Evaluation report artifact: lossless JSON round-trips and TSV export.

use evalkit::{ClassEval, EvalReport, FaithfulnessCurve, NdbSummary, PrdcResult};

fn sample_curve() -> FaithfulnessCurve {
    FaithfulnessCurve {
        per_class: vec![
            ClassEval {
                class: 0,
                frequency: 900,
                band: "Many".into(),
                n_generated: 8,
                n_correct: 7,
                accuracy: 7.0 / 8.0,
            },
            ClassEval {
                class: 1,
                frequency: 10,
                band: "Few".into(),
                n_generated: 8,
                n_correct: 1,
                accuracy: 0.125,
            },
        ],
        many_mean: Some(7.0 / 8.0),
        med_mean: None,
        few_mean: Some(0.125),
        tail_quartile_mean: 0.125,
        hi_threshold: 500,
        lo_threshold: 50,
    }
}

fn sample_report() -> EvalReport {
    let mut report = EvalReport {
        config_hash: "deadbeef".into(),
        ..EvalReport::default()
    };
    for arm in ["baseline", "optimized"] {
        report.curves.insert(arm.into(), sample_curve());
        // deliberately awkward floats: must survive the round trip bit-exactly
        report.fid.insert(arm.into(), 0.1 + 0.2);
        report.prdc.insert(
            arm.into(),
            PrdcResult {
                precision: 0.3,
                recall: 1e-17,
                density: 1.25,
                coverage: 0.5,
                k: 5,
            },
        );
        report.ndb.insert(arm.into(), NdbSummary { ndb: 7, n_bins: 20 });
        report.augmentation_accuracy.insert(arm.into(), 2.0 / 3.0);
    }
    report.timings_secs.insert("train_ae".into(), 12.5);
    report.extras.insert("spearman_baseline".into(), 0.75);
    report
}

#[test]
fn json_round_trip_is_lossless() {
    let report = sample_report();
    let back = EvalReport::from_json(&report.to_json()).unwrap();
    assert_eq!(back, report);
    assert_eq!(
        back.fid["baseline"].to_bits(),
        (0.1f64 + 0.2).to_bits(),
        "floats must round-trip bit-exactly"
    );
    assert_eq!(back.curves["optimized"].med_mean, None);
}

#[test]
fn default_report_round_trips() {
    let report = EvalReport::default();
    assert_eq!(EvalReport::from_json(&report.to_json()).unwrap(), report);
}

#[test]
fn save_and_load_through_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    let report = sample_report();
    report.save(&path).unwrap();
    assert_eq!(EvalReport::load(&path).unwrap(), report);
}

#[test]
fn load_rejects_malformed_json() {
    assert!(EvalReport::from_json("{not json").is_err());
    let dir = tempfile::tempdir().unwrap();
    assert!(EvalReport::load(&dir.path().join("missing.json")).is_err());
}

#[test]
fn metrics_tsv_lists_every_scalar() {
    let tsv = sample_report().metrics_tsv();
    let lines: Vec<&str> = tsv.lines().collect();
    // header + 2 fid + 2·4 prdc + 2 ndb + 2 accuracy + 1 timing + 1 extra
    assert_eq!(lines.len(), 17);
    assert_eq!(lines[0], "arm\tmetric\tvalue");
    assert!(lines.contains(&"baseline\tfid\t0.30000000000000004"));
    assert!(lines.contains(&"optimized\tndb\t7"));
    assert!(lines.contains(&"timing\ttrain_ae\t12.5"));
    assert!(lines.contains(&"extra\tspearman_baseline\t0.75"));
}
