//! Acceptance suite: one check per required behaviour, each with its
//! tolerance and runtime budget. Prints a PASS/FAIL line per criterion and
//! exits non-zero if any fails.

mod common;

use std::collections::HashMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use vna::audio_noise::{make_reverb_ir, reverb, synthesize_color, PcmBuffer, VELVET_DENSITY};
use vna::config::{generate_random, Modality, NoiseColor, NoiseItem, NoiseKind, NoiseSpec, ReverbStyle};
use vna::evaluation::{
    self, default_points, indicator_scale, CurveFormat, Dataset, FnPredictor, Instance, Interval, LabelType,
    PredictionRequest, SweepOptions, SweepPlan,
};
use vna::feature_noise::{block_len, random_drop, read_features, structural_drop, FeatureSeq};
use vna::media_io::{container, inject_spec, InjectOptions, MediaMeta, OutputQuality};
use vna::rng::SeededRng;
use vna::video_noise::{additive_gaussian, average_blur, gaussian_blur, impulse, Frame, FrameSeq};
use vna::RandomSpecParams;

use common::*;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn color_spectra() -> Outcome {
    let fs = 16_000.0;
    let len = 30 * 16_000;
    let mut notes = Vec::new();
    for (i, color) in NoiseColor::ALL.into_iter().enumerate() {
        let x = synthesize_color(color, len, fs as u32, 1000 + i as u64);
        match color.beta() {
            Some(beta) => {
                let slope = spectral_slope_db_per_decade(&x, fs, 100.0, 4000.0);
                let nominal = -10.0 * beta;
                notes.push(format!("{color:?} {slope:+.2} dB/dec"));
                ensure!(
                    (slope - nominal).abs() <= 1.5,
                    "{color:?}: slope {slope:.3} dB/decade, nominal {nominal}"
                );
            }
            None => {
                let impulses = x.iter().filter(|v| **v != 0.0).count() as f64;
                let density = impulses / 30.0;
                notes.push(format!("velvet {density:.1}/s"));
                ensure!(
                    (density - VELVET_DENSITY).abs() <= 0.02 * VELVET_DENSITY,
                    "velvet density {density}/s vs {VELVET_DENSITY}"
                );
            }
        }
    }
    Ok(notes.join(", "))
}

fn reverb_ir() -> Outcome {
    let fs = 16_000;
    let mut notes = Vec::new();
    for (style, nominal) in [(ReverbStyle::Hall, 1.5), (ReverbStyle::Room, 0.4)] {
        let ir = make_reverb_ir(style, fs, 42);
        let rt60 = fit_rt60(&ir.taps, fs as f64);
        notes.push(format!("{style:?} RT60 {rt60:.3} s"));
        ensure!((rt60 - nominal).abs() <= 0.05 * nominal, "{style:?}: fitted RT60 {rt60} vs {nominal}");

        let mut x = vec![0.0f32; 2 * fs as usize];
        x[0] = 1.0;
        let buf = PcmBuffer::mono(x.clone(), fs);
        let out = reverb(&buf, 0.0, 2.0, 1.0, style, 42).map_err(|e| e.to_string())?;
        let dry: Vec<f64> = x.iter().map(|&v| v as f64).collect();
        let oracle = direct_convolution(&dry, &ir.taps);
        let err = out
            .channel(0)
            .iter()
            .zip(&oracle)
            .map(|(a, b)| (*a as f64 - b).abs())
            .fold(0.0, f64::max);
        notes.push(format!("{style:?} max err {err:.1e}"));
        ensure!(err <= 1e-5, "{style:?}: reverb differs from direct convolution by {err}");
    }
    Ok(notes.join(", "))
}

fn blur_oracle() -> Outcome {
    let (w, h) = (41u32, 41u32);
    let mut delta = Frame::filled(w, h, [0, 0, 0]);
    delta.set_pixel(20, 20, [255, 255, 255]);
    let seq = FrameSeq::new(vec![delta], 1.0).map_err(|e| e.to_string())?;
    // σ = 2 pixels
    let blurred = gaussian_blur(&seq, 0.0, 1.0, 0.2);
    let oracle = gaussian_delta_response(w as usize, h as usize, 20, 20, 2.0, 255.0);
    let mut worst = 0.0f64;
    for y in 0..h {
        for x in 0..w {
            let expect = oracle[(y * w + x) as usize];
            for c in blurred.frames[0].pixel(x, y) {
                worst = worst.max((c as f64 - expect).abs());
            }
        }
    }
    ensure!(worst <= 1.0, "max pixel error {worst} against the 2-D kernel");

    for rgb in [[0, 0, 0], [17, 130, 250], [255, 255, 255]] {
        let flat = FrameSeq::new(vec![Frame::filled(64, 48, rgb)], 1.0).map_err(|e| e.to_string())?;
        for intensity in [0.1, 0.5, 1.0] {
            ensure!(gaussian_blur(&flat, 0.0, 1.0, intensity) == flat, "gaussian blur moved a constant frame {rgb:?}");
            ensure!(average_blur(&flat, 0.0, 1.0, intensity) == flat, "average blur moved a constant frame {rgb:?}");
        }
    }
    Ok(format!("max delta-response error {worst:.3}"))
}

fn pixel_noise_statistics() -> Outcome {
    let gray = FrameSeq::new(vec![Frame::filled(640, 480, [128, 128, 128])], 1.0).map_err(|e| e.to_string())?;
    let total = 640.0 * 480.0;

    let intensity = 100.0 / indicator_scale(NoiseKind::Impulse);
    let hit = impulse(&gray, 0.0, 1.0, intensity, 9);
    let corrupted = hit.frames[0]
        .pixels()
        .chunks_exact(3)
        .filter(|p| p != &[128, 128, 128])
        .count() as f64
        / total;
    ensure!((corrupted - 0.10).abs() <= 0.005, "corrupted fraction {corrupted} at strength 100");

    let mut notes = vec![format!("impulse fraction {corrupted:.4}")];
    for intensity in [0.25, 0.5] {
        let noisy = additive_gaussian(&gray, 0.0, 1.0, intensity, 11);
        let px = noisy.frames[0].pixels();
        let n = px.len() as f64;
        let mean = px.iter().map(|&v| v as f64).sum::<f64>() / n;
        let std = (px.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n).sqrt();
        let nominal = 51.0 * intensity;
        notes.push(format!("std {std:.2} vs {nominal:.2}"));
        ensure!((std - nominal).abs() <= 0.05 * nominal, "additive std {std} vs {nominal}");
    }
    Ok(notes.join(", "))
}

fn determinism_spec() -> NoiseSpec {
    NoiseSpec::new(20240521)
        .with_item(NoiseItem::new(Modality::Video, "gblur", 0.0, 3.0, 0.3))
        .with_item(NoiseItem::new(Modality::Video, "add_gauss", 2.0, 6.0, 0.4))
        .with_item(NoiseItem::new(Modality::Video, "impulse", 5.0, 9.0, 0.5))
        .with_item(NoiseItem::new(Modality::Video, "occlude", 8.0, 10.0, 0.2))
        .with_item(NoiseItem::new(Modality::Audio, "color_pink", 0.0, 5.0, 0.1))
        .with_item(NoiseItem::new(Modality::Audio, "reverb_room", 4.0, 10.0, 0.5))
        .with_item(NoiseItem::new(Modality::Audio, "color_velvet", 7.0, 9.0, 0.2))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let input = dir.path().join("clip.vnar");
    write_synthetic(&input, 10.0, 25.0, 320, 240, 5);
    let spec = determinism_spec();
    let mut opts = InjectOptions::new(native_transcoder());
    opts.quality = OutputQuality::Lossless;
    let a = inject_spec(&input, &dir.path().join("a.vnar"), &spec, &opts).map_err(|e| e.to_string())?;
    let b = inject_spec(&input, &dir.path().join("b.vnar"), &spec, &opts).map_err(|e| e.to_string())?;
    ensure!(a.video_sha256.is_some() && a.audio_sha256.is_some(), "missing stream digests");
    ensure!(a.video_sha256 == b.video_sha256, "video streams differ");
    ensure!(a.audio_sha256 == b.audio_sha256, "audio streams differ");
    let fa = std::fs::read(dir.path().join("a.vnar")).map_err(|e| e.to_string())?;
    let fb = std::fs::read(dir.path().join("b.vnar")).map_err(|e| e.to_string())?;
    ensure!(fa == fb, "output files differ");

    let params = RandomSpecParams {
        v_noise_list: vec!["gblur".into(), "blank".into(), "impulse".into()],
        v_noise_num: 3,
        v_noise_ratio: 0.6,
        v_noise_intensity: 0.5,
        a_noise_list: vec!["reverb".into(), "color_white".into()],
        a_noise_num: 2,
        a_noise_ratio: 0.5,
        a_noise_intensity: 0.3,
        seed: 99,
        ..RandomSpecParams::default()
    };
    let meta = MediaMeta::audio_video(10.0, 25.0, 320, 240, 16_000, 1);
    let s1 = generate_random(&params, &meta).map_err(|e| e.to_string())?.to_json();
    let s2 = generate_random(&params, &meta).map_err(|e| e.to_string())?.to_json();
    ensure!(s1 == s2, "generate_random is not stable within a run");

    // across processes
    let run = || {
        Command::new(vna_bin())
            .args(["gen-config", "--v-noise", "gblur,blank,impulse", "--v-num", "3", "--v-ratio", "0.6"])
            .args(["--a-noise", "reverb,color_white", "--a-num", "2", "--a-ratio", "0.5", "--seed", "99"])
            .args(["--duration", "10", "--width", "320", "--height", "240"])
            .output()
            .map(|o| o.stdout)
    };
    let (p1, p2) = (run().map_err(|e| e.to_string())?, run().map_err(|e| e.to_string())?);
    ensure!(!p1.is_empty() && p1 == p2, "gen-config output differs between processes");
    Ok(format!(
        "{} frames, video {}…",
        a.frames,
        &a.video_sha256.as_deref().unwrap_or("")[..12]
    ))
}

fn random_config_reproduction() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let input = dir.path().join("clip.vnar");
    write_synthetic(&input, 10.0, 25.0, 160, 120, 3);
    let spec_path = dir.path().join("spec.json");
    let output = dir.path().join("noisy.vnar");

    let gen = Command::new(vna_bin())
        .args(["gen-config", "--mode", "random_full"])
        .args(["--v-noise", "gblur,blank", "--v-num", "2", "--v-ratio", "0.8", "--v-intensity", "0.5"])
        .args(["--a-noise", "reverb", "--a-num", "1", "--a-ratio", "1.0", "--a-intensity", "0.3"])
        .args(["--seed", "2024", "--in"])
        .arg(&input)
        .arg("--out")
        .arg(&spec_path)
        .output()
        .map_err(|e| e.to_string())?;
    ensure!(gen.status.success(), "gen-config failed: {}", String::from_utf8_lossy(&gen.stderr));
    let inj = Command::new(vna_bin())
        .arg("inject")
        .arg("--in")
        .arg(&input)
        .arg("--out")
        .arg(&output)
        .arg("--config")
        .arg(&spec_path)
        .arg("--lossless")
        .output()
        .map_err(|e| e.to_string())?;
    ensure!(inj.status.success(), "inject failed: {}", String::from_utf8_lossy(&inj.stderr));

    let (dry_v, dry_a) = container::read_clip(&input).map_err(|e| e.to_string())?;
    let (wet_v, wet_a) = container::read_clip(&output).map_err(|e| e.to_string())?;
    let (dry_v, wet_v) = (dry_v.ok_or("no dry video")?, wet_v.ok_or("no noisy video")?);
    let (dry_a, wet_a) = (dry_a.ok_or("no dry audio")?, wet_a.ok_or("no noisy audio")?);

    let window = (0.02 * dry_a.sample_rate() as f64) as usize;
    let windows: Vec<bool> = dry_a
        .channel(0)
        .chunks(window)
        .zip(wet_a.channel(0).chunks(window))
        .map(|(d, w)| d != w)
        .collect();
    let audio_cover = windows.iter().filter(|c| **c).count() as f64 / windows.len() as f64;

    ensure!(dry_v.len() == wet_v.len(), "frame count changed");
    let changed = dry_v.frames.iter().zip(&wet_v.frames).filter(|(d, w)| d != w).count();
    let expected = 0.8 * dry_v.len() as f64;
    ensure!(audio_cover == 1.0, "audio modified over {:.1}% of 20 ms windows", audio_cover * 100.0);
    ensure!(
        (changed as f64 - expected).abs() <= 1.0,
        "{changed} of {} frames modified, expected {expected} ± 1",
        dry_v.len()
    );
    Ok(format!("audio 100% of windows, video {changed}/{} frames", dry_v.len()))
}

/// A dataset of `n` instances sharing one tiny feature file.
fn feature_dataset(dir: &Path, n: usize) -> Dataset {
    let feat = write_feature_clip(&dir.join("shared.vnaf"), 10, 1, "audio", 0.0);
    Dataset {
        instances: (0..n)
            .map(|i| Instance {
                id: format!("i{i:03}"),
                label: Some(if i % 2 == 0 { 1.0 } else { -1.0 }),
                split: None,
                media: None,
                features: vec![feat.clone()],
                transcript: None,
            })
            .collect(),
    }
}

fn index_of(id: &str) -> usize {
    id[1..].parse().expect("numeric id")
}

fn sign_of(i: usize) -> f64 {
    if i % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

fn air_correctness() -> Outcome {
    let pts = default_points(&Interval::new(0.0, 11.0, 1.0)).map_err(|e| e.to_string())?;
    ensure!(pts == (1..=10).map(|k| k as f64).collect::<Vec<_>>(), "default points {pts:?}");

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let n = 110;
    let dataset = feature_dataset(dir.path(), n);
    let mut plan = SweepPlan::new("random_drop", "Missing Rate", Interval::new(0.0, 1.0, 0.1));
    plan.seed = 1;

    // correct on exactly round((1 - σ)·n) instances
    let linear = FnPredictor::new("linear", move |req: &PredictionRequest| {
        let correct = ((1.0 - req.sigma) * n as f64).round() as usize;
        Ok(req
            .instances
            .iter()
            .map(|inst| {
                let i = index_of(&inst.id);
                (inst.id.clone(), if i < correct { sign_of(i) } else { -sign_of(i) })
            })
            .collect())
    });
    let report = evaluation::run_sweep(&plan, &dataset, &linear, &SweepOptions::new(dir.path().join("lin")))
        .map_err(|e| e.to_string())?;
    let points = default_points(&plan.interval).map_err(|e| e.to_string())?;
    let closed_form = points.iter().map(|s| 1.0 - s).sum::<f64>() / points.len() as f64;
    ensure!(
        (report.air_acc2 - closed_form).abs() <= 1e-9,
        "AIR {} vs closed form {closed_form}",
        report.air_acc2
    );

    let constant = FnPredictor::new("constant", move |req: &PredictionRequest| {
        Ok(req
            .instances
            .iter()
            .map(|inst| {
                let i = index_of(&inst.id);
                (inst.id.clone(), if i < 77 { sign_of(i) } else { -sign_of(i) })
            })
            .collect())
    });
    let flat = evaluation::run_sweep(&plan, &dataset, &constant, &SweepOptions::new(dir.path().join("const")))
        .map_err(|e| e.to_string())?;
    let c = 77.0 / 110.0;
    ensure!(flat.levels.iter().all(|l| l.acc2 == c), "constant predictor levels vary");
    ensure!(flat.air_acc2 == c, "constant AIR {} != {c}", flat.air_acc2);
    Ok(format!("AIR {:.12} (closed form {closed_form:.12}), constant {}", report.air_acc2, flat.air_acc2))
}

fn feature_drops() -> Outcome {
    let mut rng = SeededRng::new(7);
    for case in 0..1000 {
        let t = 1 + rng.below(400) as usize;
        let d = 1 + rng.below(16) as usize;
        let rate = rng.uniform();
        let seed = rng.next_u64();
        let values: Vec<f32> = (0..t * d).map(|_| 0.5 + rng.uniform() as f32).collect();
        let fs = FeatureSeq::new(values, t, d, "vision").map_err(|e| e.to_string())?;
        let dropped = if case % 2 == 0 {
            random_drop(&fs, rate, seed)
        } else {
            structural_drop(&fs, rate, seed)
        };
        let bytes = dropped.to_bytes();
        let back = FeatureSeq::from_bytes(&bytes, "vision")?;
        for step in 0..t {
            let zero = dropped.row(step).iter().all(|v| *v == 0.0);
            let masked = !dropped.mask()[step];
            let stored = !back.mask()[step] && back.row(step).iter().all(|v| *v == 0.0);
            ensure!(
                zero == masked && masked == stored,
                "case {case}: step {step} zero={zero} masked={masked} stored={stored}"
            );
        }
        if case % 2 == 1 {
            let runs: Vec<(usize, usize)> = runs_of_false(dropped.mask());
            let want = if rate >= 1.0 { t } else { (rate * t as f64).round() as usize };
            ensure!(want == block_len(rate, t), "case {case}: block length rule");
            if want == 0 {
                ensure!(runs.is_empty(), "case {case}: drop at rate {rate}");
            } else {
                ensure!(
                    runs.len() == 1 && runs[0].1 - runs[0].0 == want,
                    "case {case}: runs {runs:?}, want one of length {want} (T={t}, rate={rate})"
                );
            }
        }
    }
    Ok("1000 sequences".into())
}

fn runs_of_false(mask: &[bool]) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut start = None;
    for (i, &m) in mask.iter().chain(std::iter::once(&true)).enumerate() {
        match (m, start) {
            (false, None) => start = Some(i),
            (true, Some(s)) => {
                runs.push((s, i));
                start = None;
            }
            _ => {}
        }
    }
    runs
}

fn sweep_end_to_end() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let n = 20;
    let timesteps = 2000;
    let mut instances = Vec::new();
    let mut thresholds = HashMap::new();
    for i in 0..n {
        let id = format!("i{i:03}");
        let path = write_feature_clip(&dir.path().join(format!("{id}.vnaf")), timesteps, 4, "audio", i as f32);
        thresholds.insert(id.clone(), (i as f64 + 0.5) / n as f64);
        instances.push(Instance {
            id,
            label: Some(sign_of(i)),
            split: None,
            media: None,
            features: vec![path],
            transcript: None,
        });
    }
    let dataset = Dataset { instances };
    let manifest = dir.path().join("manifest.json");
    dataset.save(&manifest).map_err(|e| e.to_string())?;
    let dataset = Dataset::load(&manifest).map_err(|e| e.to_string())?;

    // right while enough of the sequence survives, wrong afterwards
    let stub = FnPredictor::new("survival", move |req: &PredictionRequest| {
        req.instances
            .iter()
            .map(|inst| {
                let fs = read_features(&inst.features[0]).map_err(|e| evaluation::EvalError::PredictorFailure {
                    predictor: "survival".into(),
                    reason: e.to_string(),
                })?;
                let label = sign_of(index_of(&inst.id));
                let ok = fs.valid_fraction() >= thresholds[&inst.id];
                Ok((inst.id.clone(), if ok { label } else { -label }))
            })
            .collect()
    })
    .with_label_type(LabelType::Regression);

    let mut plan = SweepPlan::preset("R-Drop").ok_or("no R-Drop preset")?;
    plan.dataset = manifest;
    plan.seed = 11;
    let report = evaluation::run_sweep(&plan, &dataset, &stub, &SweepOptions::new(dir.path().join("work")))
        .map_err(|e| e.to_string())?;

    let csv = dir.path().join("curve.csv");
    evaluation::export_curves(std::slice::from_ref(&report), CurveFormat::Csv, &csv).map_err(|e| e.to_string())?;
    let text = std::fs::read_to_string(&csv).map_err(|e| e.to_string())?;
    let series = evaluation::import_curves_csv(&text).map_err(|e| e.to_string())?;
    ensure!(series.len() == 1, "{} series in export", series.len());
    ensure!(series[0].1 == report.curve(), "CSV round trip changed the curve");

    let acc: Vec<f64> = report.levels.iter().map(|l| l.acc2).collect();
    ensure!(acc.windows(2).all(|w| w[1] <= w[0]), "Acc-2 curve not monotone: {acc:?}");
    ensure!(acc[0] > acc[acc.len() - 1], "curve is flat: {acc:?}");
    let shown: Vec<String> = acc.iter().map(|a| format!("{a:.2}")).collect();
    Ok(format!("acc2 [{}], AIR {:.4}", shown.join(" "), report.air_acc2))
}

struct Criterion {
    name: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

fn main() {
    let criteria = [
        Criterion { name: "color-noise spectra", budget: Duration::from_secs(10), run: color_spectra },
        Criterion { name: "reverb impulse response", budget: Duration::from_secs(5), run: reverb_ir },
        Criterion { name: "blur oracle", budget: Duration::from_secs(5), run: blur_oracle },
        Criterion { name: "impulse/additive noise statistics", budget: Duration::from_secs(5), run: pixel_noise_statistics },
        Criterion { name: "determinism", budget: Duration::from_secs(60), run: determinism },
        Criterion { name: "random config + inject reproduction", budget: Duration::from_secs(60), run: random_config_reproduction },
        Criterion { name: "AIR correctness", budget: Duration::from_secs(30), run: air_correctness },
        Criterion { name: "feature drops", budget: Duration::from_secs(10), run: feature_drops },
        Criterion { name: "sweep end-to-end", budget: Duration::from_secs(300), run: sweep_end_to_end },
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for c in &criteria {
        if !filter.is_empty() && !filter.iter().any(|f| c.name.contains(f.as_str())) {
            continue;
        }
        let started = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let elapsed = started.elapsed();
        let result = match result {
            Ok(note) if elapsed > c.budget => Err(format!("{note}; took {elapsed:.1?}, budget {:?}", c.budget)),
            other => other,
        };
        match result {
            Ok(note) => println!("PASS  {:<36} {:>8.2?}  {note}", c.name, elapsed),
            Err(why) => {
                failed += 1;
                println!("FAIL  {:<36} {:>8.2?}  {why}", c.name, elapsed);
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
