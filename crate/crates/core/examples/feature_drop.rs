//! Random and structural dropping of pre-extracted feature timesteps, and
//! the on-disk feature container.
//!
//!     cargo run --example feature_drop

mod support;

use vna::feature_noise::*;

fn mask_line(fs: &FeatureSeq) -> String {
    fs.mask().iter().map(|&m| if m { '#' } else { '.' }).collect()
}

fn main() {
    let (t, d) = (60, 8);
    let values: Vec<f32> = (0..t * d).map(|i| (i as f32 * 0.1).sin()).collect();
    let fs = FeatureSeq::new(values, t, d, "acoustic").unwrap();

    println!("{:<18} {}", "clean", mask_line(&fs));
    for rate in [0.1, 0.3, 0.6] {
        let r = random_drop(&fs, rate, 5);
        println!("{:<18} {}  valid {:.2}", format!("random {rate}"), mask_line(&r), r.valid_fraction());
    }
    for rate in [0.1, 0.3, 0.6] {
        let s = structural_drop(&fs, rate, 5);
        println!("{:<18} {}  block {}", format!("structural {rate}"), mask_line(&s), block_len(rate, t));
    }
    let ranged = structural_drop_range(&fs, 20..40, 0.5, 5).unwrap();
    println!("{:<18} {}", "structural 20..40", mask_line(&ranged));

    let dir = support::scratch("feature_drop");
    let path = dir.join("acoustic.vnaf");
    write_features(&path, &random_drop(&fs, 0.3, 1), Some(serde_json::json!({"extractor": "example"}))).unwrap();
    let back = read_features(&path).unwrap();
    println!("round trip: {} x {} ({}), sidecar {}", back.timesteps(), back.dims(), back.modality, sidecar_path(&path).display());
}
