mod common;

use std::path::{Path, PathBuf};

use proptest::prelude::*;

use vna::config::{Modality, NoiseItem, NoiseSpec};
use vna::evaluation::*;
use vna::feature_noise::read_features;

use common::write_feature_clip;

/// `n` feature instances, alternating positive and negative labels.
fn feature_dataset(dir: &Path, n: usize) -> Dataset {
    let instances = (0..n)
        .map(|i| {
            let path = write_feature_clip(&dir.join(format!("f{i}.vnaf")), 40, 3, "visual", i as f32);
            Instance {
                id: format!("s{i:03}"),
                label: Some(if i % 2 == 0 { 1.0 } else { -1.0 }),
                split: Some("test".into()),
                media: None,
                features: vec![path],
                transcript: None,
            }
        })
        .collect();
    Dataset { instances }
}

fn label_of(id: &str) -> f64 {
    let i: usize = id[1..].parse().unwrap();
    if i % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

fn sweep(plan: &SweepPlan, ds: &Dataset, predictor: &dyn Predictor, work: &Path) -> RobustnessReport {
    run_sweep(plan, ds, predictor, &SweepOptions::new(work)).unwrap()
}

/// Weighted F1 written from set definitions, independent of the library's
/// confusion-matrix arithmetic.
fn oracle_weighted_f1(truth: &[bool], pred: &[bool]) -> f64 {
    let n = truth.len() as f64;
    let mut total = 0.0;
    for class in [false, true] {
        let actual: Vec<usize> = (0..truth.len()).filter(|&i| truth[i] == class).collect();
        let predicted: Vec<usize> = (0..pred.len()).filter(|&i| pred[i] == class).collect();
        let hits = actual.iter().filter(|i| predicted.contains(i)).count() as f64;
        let f = if actual.is_empty() && predicted.is_empty() {
            0.0
        } else {
            // F1 = 2·TP / (|actual| + |predicted|)
            2.0 * hits / (actual.len() + predicted.len()) as f64
        };
        total += f * actual.len() as f64 / n;
    }
    total
}

#[test]
fn command_predictor_reads_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let ds = feature_dataset(dir.path(), 6);
    // predicts 0.5 − sigma for every id listed in the manifest
    let script = r#"grep -o '"id": "[^"]*"' "$0" | awk -F'"' -v s="$2" 'BEGIN { print "id,prediction" } { print $4 "," (0.5 - s) }' > "$1""#;
    let spec = PredictorSpec {
        name: "threshold".into(),
        label_type: LabelType::Regression,
        stateless: true,
        source: PredictorSource::Command {
            command: ["sh", "-c", script, "{manifest}", "{output}", "{sigma}"].map(String::from).to_vec(),
        },
    };
    let predictor = spec.build().unwrap();
    let mut plan = SweepPlan::preset("R-Drop").unwrap();
    plan.seed = 5;
    let report = sweep(&plan, &ds, predictor.as_ref(), &dir.path().join("work"));
    assert_eq!(report.levels.len(), 10);
    assert_eq!(report.records.len(), 60);
    for r in &report.records {
        assert!((r.prediction - (0.5 - r.sigma)).abs() < 1e-5, "{r:?}");
    }
    for l in &report.levels {
        // one sign for everyone: half the alternating labels are right
        assert_eq!(l.acc2, 0.5, "sigma {}", l.sigma);
        assert_eq!(l.n, 6);
    }
    let manifest = level_dir(&dir.path().join("work"), 0, 0).join("manifest.json");
    let text = std::fs::read_to_string(manifest).unwrap();
    assert!(text.contains("\"kind\": \"random_drop\""));
    // the noised features exist and have lost timesteps
    let noised = level_dir(&dir.path().join("work"), 9, 0).join("s000.f0.vnaf");
    assert!(read_features(&noised).unwrap().valid_fraction() < 0.5);
}

#[test]
fn command_failures_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let ds = feature_dataset(dir.path(), 2);
    let plan = SweepPlan::preset("S-Drop").unwrap();
    let failing = PredictorSpec {
        name: "broken".into(),
        label_type: LabelType::Regression,
        stateless: false,
        source: PredictorSource::Command {
            command: vec!["sh".into(), "-c".into(), "echo nope >&2; exit 3".into()],
        },
    };
    let p = failing.build().unwrap();
    let err = run_sweep(&plan, &ds, p.as_ref(), &SweepOptions::new(dir.path().join("w"))).unwrap_err();
    match err {
        EvalError::PredictorFailure { predictor, reason } => {
            assert_eq!(predictor, "broken");
            assert!(reason.contains("nope"), "{reason}");
        }
        other => panic!("{other:?}"),
    }
    let partial = FnPredictor::new("partial", |_: &PredictionRequest| Ok(vec![("s000".to_string(), 1.0)]));
    let err = run_sweep(&plan, &ds, &partial, &SweepOptions::new(dir.path().join("w2"))).unwrap_err();
    assert!(err.to_string().contains("s001"), "{err}");
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn precomputed_predictions_by_level() {
    let dir = tempfile::tempdir().unwrap();
    let ds = feature_dataset(dir.path(), 4);
    let csv_path = dir.path().join("pred.csv");
    let mut csv = String::from("id,sigma,prediction\n");
    for inst in &ds.instances {
        let y = inst.label.unwrap();
        csv += &format!("{},0.2,{}\n{},0.4,{}\n", inst.id, y, inst.id, -y);
    }
    std::fs::write(&csv_path, csv).unwrap();
    let spec = PredictorSpec {
        name: "table".into(),
        label_type: LabelType::Regression,
        stateless: true,
        source: PredictorSource::Precomputed { path: csv_path },
    };
    let p = spec.build().unwrap();
    let mut plan = SweepPlan::preset("R-Drop").unwrap();
    plan.points = Some(vec![0.2, 0.4]);
    let r = sweep(&plan, &ds, p.as_ref(), &dir.path().join("w"));
    assert_eq!(r.curve(), vec![(0.2, 1.0, 1.0), (0.4, 0.0, 0.0)]);
    assert_eq!(r.air_acc2, 0.5);
    assert_eq!(r.air_acc2_area, 0.5);
}

#[test]
fn repeats_average_independent_draws() {
    let dir = tempfile::tempdir().unwrap();
    let ds = feature_dataset(dir.path(), 3);
    let mut plan = SweepPlan::preset("R-Drop").unwrap();
    plan.repeats = 3;
    plan.points = Some(vec![0.5]);
    // positive exactly when the instance kept most of its timesteps
    let p = FnPredictor::new("valid", |req: &PredictionRequest| {
        Ok(req
            .instances
            .iter()
            .map(|i| (i.id.clone(), read_features(&i.features[0]).unwrap().valid_fraction() - 0.5))
            .collect())
    });
    let r = sweep(&plan, &ds, &p, &dir.path().join("w"));
    assert_eq!(r.levels[0].n, 9);
    assert_eq!(r.records.len(), 9);
    let seeds: std::collections::HashSet<u64> = (0..3).map(|rep| instance_seed(plan.seed, 0.5, "s000", rep)).collect();
    assert_eq!(seeds.len(), 3);
    let again = sweep(&plan, &ds, &p, &dir.path().join("w2"));
    assert_eq!(again.levels, r.levels);
}

#[test]
fn curves_export_and_import() {
    let dir = tempfile::tempdir().unwrap();
    let ds = feature_dataset(dir.path(), 4);
    let plan = SweepPlan::preset("R-Drop").unwrap();
    let truthful = FnPredictor::new("oracle", |req: &PredictionRequest| {
        Ok(req.instances.iter().map(|i| (i.id.clone(), label_of(&i.id))).collect())
    });
    let fading = FnPredictor::new("fading, \"v2\"", |req: &PredictionRequest| {
        let flip = req.sigma > 0.5;
        Ok(req
            .instances
            .iter()
            .map(|i| (i.id.clone(), if flip { -label_of(&i.id) } else { label_of(&i.id) }))
            .collect())
    });
    let reports = vec![
        sweep(&plan, &ds, &truthful, &dir.path().join("a")),
        sweep(&plan, &ds, &fading, &dir.path().join("b")),
    ];

    let csv = render_curves(&reports, CurveFormat::Csv);
    let back = import_curves_csv(&csv).unwrap();
    assert_eq!(back.len(), 2);
    for ((name, rows), r) in back.iter().zip(&reports) {
        assert_eq!(name, &r.predictor);
        assert_eq!(rows, &r.curve());
    }
    let single = import_curves_csv(&render_curves(&reports[..1], CurveFormat::Csv)).unwrap();
    assert_eq!(single, vec![("oracle".to_string(), reports[0].curve())]);

    let json = render_curves(&reports, CurveFormat::Json);
    let series: Vec<CurveSeries> = serde_json::from_str(&json).unwrap();
    assert_eq!(series[1].name, "fading, \"v2\"");
    assert_eq!(series[0].air_acc2, 1.0);

    let svg = render_curves(&reports, CurveFormat::Svg);
    assert!(svg.starts_with("<svg"));
    assert_eq!(svg.matches(r#"class="series""#).count(), 2);
    assert!(svg.contains("fading, &quot;v2&quot;"));
    assert!(svg.contains("Missing Rate"));

    let path = dir.path().join("curves.svg");
    export_curves(&reports, CurveFormat::Svg, &path).unwrap();
    assert_eq!(std::fs::read_to_string(path).unwrap(), svg);
    assert!(import_curves_csv("sigma,acc2\n0.1,0.5\n").is_err());
}

#[test]
fn reports_round_trip_through_json() {
    let dir = tempfile::tempdir().unwrap();
    let ds = feature_dataset(dir.path(), 2);
    let mut plan = SweepPlan::preset("S-Drop").unwrap();
    plan.denoiser = Some("median".into());
    let p = FnPredictor::new("one", |req: &PredictionRequest| Ok(req.instances.iter().map(|i| (i.id.clone(), 1.0)).collect()));
    let r = sweep(&plan, &ds, &p, &dir.path().join("w"));
    let path = dir.path().join("report.json");
    r.save(&path).unwrap();
    assert_eq!(RobustnessReport::load(&path).unwrap(), r);
    assert_eq!(CurveSeries::from(&r).name, "one+median");
}

#[test]
fn augmentation_writes_labelled_copies() {
    let dir = tempfile::tempdir().unwrap();
    let mut ds = feature_dataset(dir.path(), 3);
    let tr = dir.path().join("t.json");
    std::fs::write(&tr, r#"{"language":"en","words":[{"token":"a"},{"token":"b"},{"token":"c"},{"token":"d"}]}"#).unwrap();
    ds.instances[0].transcript = Some(tr);
    let spec = NoiseSpec::new(8)
        .with_item(NoiseItem::new(Modality::Feature, "random_drop", 0.0, 40.0, 0.5))
        .with_item(NoiseItem::new(Modality::Text, "replace", 0.0, 4.0, 1.0).with_param("unit", "index"));
    ds.instances[1].features.clear();
    let err = augment(&ds, &spec, 2, &dir.path().join("bad"), &MaterializeOptions::default()).unwrap_err();
    assert!(matches!(err, EvalError::MissingPayload { .. }), "{err}");

    let ds = Dataset {
        instances: vec![ds.instances[0].clone()],
    };
    let out_dir = dir.path().join("aug");
    let aug = augment(&ds, &spec, 2, &out_dir, &MaterializeOptions::default()).unwrap();
    assert_eq!(aug.instances.len(), 2);
    assert_eq!(aug.instances[0].id, "s000-aug0");
    assert!(aug.instances.iter().all(|i| i.label == Some(1.0) && i.split.as_deref() == Some("test")));
    let a = read_features(&aug.instances[0].features[0]).unwrap();
    let b = read_features(&aug.instances[1].features[0]).unwrap();
    assert_ne!(a.mask(), b.mask(), "copies draw independent noise");
    let t = std::fs::read_to_string(aug.instances[0].transcript.as_ref().unwrap()).unwrap();
    assert_eq!(t.matches("[UNK]").count(), 4);
    assert_eq!(Dataset::load(&out_dir.join("manifest.json")).unwrap(), aug);
}

#[test]
fn dataset_manifests() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ds.json");
    std::fs::write(&path, r#"{"instances": [{"id": "a", "label": 0.5, "features": ["x.vnaf"]}]}"#).unwrap();
    let ds = Dataset::load(&path).unwrap();
    assert_eq!(ds.instances[0].features[0], dir.path().join("x.vnaf"));

    std::fs::write(&path, r#"{"instances": [{"id": "a"}]}"#).unwrap();
    assert!(matches!(Dataset::load(&path), Err(EvalError::MissingLabel(id)) if id == "a"));
    std::fs::write(&path, r#"{"instances": [{"id": "a", "label": 1}, {"id": "a", "label": 0}]}"#).unwrap();
    assert!(matches!(Dataset::load(&path), Err(EvalError::Dataset { .. })));
    std::fs::write(&path, "[").unwrap();
    assert_eq!(Dataset::load(&path).unwrap_err().exit_code(), 2);
    assert!(matches!(Dataset::load(&PathBuf::from("/nonexistent/ds.json")), Err(EvalError::Io { .. })));
}

fn records(pairs: &[(f64, f64)]) -> Vec<PredictionRecord> {
    pairs
        .iter()
        .enumerate()
        .map(|(i, &(label, prediction))| PredictionRecord {
            id: i.to_string(),
            label,
            prediction,
            sigma: 0.0,
            repeat: 0,
        })
        .collect()
}

proptest! {
    #[test]
    fn metrics_match_independent_oracle(pairs in proptest::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 1..80)) {
        let m = acc2_f1(&records(&pairs), LabelType::Regression).unwrap();
        let truth: Vec<bool> = pairs.iter().map(|p| p.0 >= 0.0).collect();
        let pred: Vec<bool> = pairs.iter().map(|p| p.1 >= 0.0).collect();
        let correct = truth.iter().zip(&pred).filter(|(a, b)| a == b).count();
        prop_assert_eq!(m.acc2, correct as f64 / pairs.len() as f64);
        prop_assert!((m.f1 - oracle_weighted_f1(&truth, &pred)).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&m.f1));
    }

    #[test]
    fn binary_labels_threshold_at_half(pairs in proptest::collection::vec((0u8..2, 0.0f64..1.0), 1..50)) {
        let as_f: Vec<(f64, f64)> = pairs.iter().map(|&(l, p)| (l as f64, p)).collect();
        let m = acc2_f1(&records(&as_f), LabelType::Binary).unwrap();
        let correct = pairs.iter().filter(|&&(l, p)| (l == 1) == (p >= 0.5)).count();
        prop_assert_eq!(m.acc2, correct as f64 / pairs.len() as f64);
    }

    #[test]
    fn air_is_the_mean_over_interior_points(min in -10.0f64..10.0, len in 0.01f64..100.0, vals in proptest::collection::vec(0.0f64..=1.0, 10)) {
        let iv = Interval::new(min, min + len, len / 10.0);
        let pts = default_points(&iv).unwrap();
        prop_assert_eq!(pts.len(), 10);
        for (k, p) in pts.iter().enumerate() {
            prop_assert!(*p > iv.min && *p < iv.max);
            let expect = min + (k + 1) as f64 * len / 11.0;
            prop_assert!((p - expect).abs() <= 1e-12 * expect.abs().max(1.0));
        }
        let curve: Vec<(f64, f64)> = pts.iter().copied().zip(vals.iter().copied()).collect();
        let mean = vals.iter().sum::<f64>() / 10.0;
        let a = air(&curve, &pts, &iv, true).unwrap();
        prop_assert!((a - mean).abs() < 1e-12);
        prop_assert!((air(&curve, &pts, &iv, false).unwrap() - mean * len).abs() < 1e-9 * len.max(1.0));
        let flat: Vec<(f64, f64)> = pts.iter().map(|&p| (p, vals[0])).collect();
        prop_assert_eq!(air(&flat, &pts, &iv, true).unwrap(), vals[0]);
    }
}
