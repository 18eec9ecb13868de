//! Generate a random noise spec from high-level per-modality parameters and
//! show that the same seed always yields the same spec.
//!
//!     cargo run --example random_config

use vna::config::{generate_random, validate, RandomSpecParams};
use vna::MediaMeta;

fn main() {
    let params = RandomSpecParams {
        v_noise_list: vec!["gblur".into(), "blank".into(), "impulse".into()],
        v_noise_num: 2,
        v_noise_ratio: 0.8,
        v_noise_intensity: 0.5,
        a_noise_list: vec!["reverb".into(), "color_pink".into()],
        a_noise_num: 1,
        a_noise_ratio: 1.0,
        a_noise_intensity: 0.3,
        t_noise_list: vec!["erase".into()],
        t_noise_num: 1,
        t_noise_ratio: 0.5,
        t_noise_intensity: 0.2,
        seed: 2024,
        ..Default::default()
    };
    // a 10 s clip at 25 fps with 16 kHz mono audio
    let meta = MediaMeta::audio_video(10.0, 25.0, 640, 480, 16_000, 1);

    let spec = generate_random(&params, &meta).expect("parameters are feasible");
    println!("{}", spec.to_json_pretty());

    let again = generate_random(&params, &meta).unwrap();
    assert_eq!(spec, again, "generation is deterministic");

    let validated = validate(&spec, &meta).expect("generated specs validate");
    for item in &validated.items {
        println!(
            "{:>6} {:<12} [{:6.3}, {:6.3}) s  intensity {:.2}  seed {:016x}",
            item.modality().to_string(),
            item.kind.name(),
            item.start_s,
            item.end_s,
            item.intensity,
            item.seed
        );
    }
}
