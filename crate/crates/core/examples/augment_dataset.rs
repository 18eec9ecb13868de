//! Write noised, labelled copies of a dataset for training-time
//! augmentation.
//!
//!     cargo run --example augment_dataset

mod support;

use vna::config::{Modality, NoiseItem, NoiseSpec};
use vna::evaluation::{augment, Dataset, Instance, MaterializeOptions};
use vna::feature_noise::{write_features, FeatureSeq};

fn main() {
    let dir = support::scratch("augment_dataset");
    let instances = (0..3)
        .map(|i| {
            let feats = dir.join(format!("clip{i}.vnaf"));
            write_features(&feats, &FeatureSeq::new(vec![1.0; 50 * 2], 50, 2, "acoustic").unwrap(), None).unwrap();
            let transcript = dir.join(format!("clip{i}.json"));
            std::fs::write(&transcript, r#"{"language":"en","words":[{"token":"not"},{"token":"bad"},{"token":"at"},{"token":"all"}]}"#).unwrap();
            Instance {
                id: format!("clip{i}"),
                label: Some(i as f64 - 1.0),
                split: Some("train".into()),
                media: None,
                features: vec![feats],
                transcript: Some(transcript),
            }
        })
        .collect();
    let dataset = Dataset { instances };

    // feature items without a clip use one second per timestep
    let spec = NoiseSpec::new(99)
        .with_item(NoiseItem::new(Modality::Feature, "random_drop", 0.0, 50.0, 0.3))
        .with_item(NoiseItem::new(Modality::Text, "erase", 0.0, 4.0, 0.5).with_param("unit", "index"));
    let out = augment(&dataset, &spec, 2, &dir.join("augmented"), &MaterializeOptions::default()).unwrap();
    for inst in &out.instances {
        let text = std::fs::read_to_string(inst.transcript.as_ref().unwrap()).unwrap();
        let t = vna::text_noise::Transcript::from_json(&text).unwrap();
        let fs = vna::feature_noise::read_features(&inst.features[0]).unwrap();
        println!(
            "{:<12} label {:>4}  valid {:.2}  text `{}`",
            inst.id,
            inst.label.unwrap(),
            fs.valid_fraction(),
            t.tokens().join(" ")
        );
    }
    println!("manifest: {}", dir.join("augmented/manifest.json").display());
}
