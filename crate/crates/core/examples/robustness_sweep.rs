//! Sweep a feature-drop imperfection over its default levels, score a toy
//! predictor, and export the robustness curves as CSV and SVG.
//!
//!     cargo run --example robustness_sweep

mod support;

use vna::evaluation::*;
use vna::feature_noise::{read_features, write_features, FeatureSeq};

fn main() {
    let dir = support::scratch("robustness_sweep");

    // 40 instances whose features carry their label's sign
    let instances = (0..40)
        .map(|i| {
            let label = if i % 2 == 0 { 1.0 } else { -1.0 };
            let path = dir.join(format!("inst{i:02}.vnaf"));
            let values = vec![label as f32; 100 * 4];
            write_features(&path, &FeatureSeq::new(values, 100, 4, "visual").unwrap(), None).unwrap();
            Instance {
                id: format!("inst{i:02}"),
                label: Some(label),
                split: None,
                media: None,
                features: vec![path],
                transcript: None,
            }
        })
        .collect();
    let dataset = Dataset { instances };

    // reads the sign of the surviving features; guesses positive when
    // fewer than a third survive
    let reader = FnPredictor::new("feature-sign", |req: &PredictionRequest| {
        Ok(req
            .instances
            .iter()
            .map(|inst| {
                let fs = read_features(&inst.features[0]).unwrap();
                let sum: f32 = fs.values().iter().sum();
                let guess = if fs.valid_fraction() < 1.0 / 3.0 { 1.0 } else { sum as f64 };
                (inst.id.clone(), guess)
            })
            .collect())
    });
    let blind = FnPredictor::new("always-positive", |req: &PredictionRequest| {
        Ok(req.instances.iter().map(|i| (i.id.clone(), 1.0)).collect())
    });

    let mut reports = Vec::new();
    for preset in ["R-Drop", "S-Drop"] {
        let mut plan = SweepPlan::preset(preset).unwrap();
        plan.seed = 7;
        for predictor in [&reader as &dyn Predictor, &blind] {
            let work = dir.join(format!("work-{preset}-{}", predictor.name()));
            let report = run_sweep(&plan, &dataset, predictor, &SweepOptions::new(work)).unwrap();
            println!("{preset:<7} {:<16} AIR acc2 {:.3}  f1 {:.3}", report.predictor, report.air_acc2, report.air_f1);
            for l in &report.levels {
                println!("        sigma {:.3}  acc2 {:.3}  f1 {:.3}", l.sigma, l.acc2, l.f1);
            }
            reports.push(report);
        }
    }

    let r_drop = &reports[..2];
    export_curves(r_drop, CurveFormat::Csv, &dir.join("r_drop.csv")).unwrap();
    export_curves(r_drop, CurveFormat::Svg, &dir.join("r_drop.svg")).unwrap();
    export_curves(&reports[2..], CurveFormat::Svg, &dir.join("s_drop.svg")).unwrap();
    println!("curves in {}", dir.display());
}
