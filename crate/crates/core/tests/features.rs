use proptest::prelude::*;

use vna::feature_noise::*;

fn ramp(t: usize, d: usize) -> FeatureSeq {
    FeatureSeq::new((0..t * d).map(|i| 1.0 + i as f32).collect(), t, d, "visual").unwrap()
}

fn dropped(fs: &FeatureSeq) -> Vec<usize> {
    (0..fs.timesteps()).filter(|&t| !fs.mask()[t]).collect()
}

/// Dropped rows are zero and masked; kept rows are untouched.
fn check_drop_contract(before: &FeatureSeq, after: &FeatureSeq) -> Result<(), TestCaseError> {
    prop_assert_eq!(after.timesteps(), before.timesteps());
    prop_assert_eq!(after.dims(), before.dims());
    for t in 0..before.timesteps() {
        if after.mask()[t] {
            prop_assert!(before.mask()[t]);
            prop_assert_eq!(after.row(t), before.row(t));
        } else {
            prop_assert!(after.row(t).iter().all(|&v| v == 0.0));
        }
    }
    Ok(())
}

#[test]
fn random_drop_rate_over_many_seeds() {
    let fs = ramp(10_000, 1);
    for seed in 0..5 {
        let n = dropped(&random_drop(&fs, 0.4, seed)).len();
        assert!((3850..=4150).contains(&n), "seed {seed}: dropped {n}");
    }
}

#[test]
fn structural_drop_on_ten_steps() {
    let fs = ramp(10, 4);
    for seed in 0..20 {
        let d = dropped(&structural_drop(&fs, 0.3, seed));
        assert_eq!(d.len(), 3);
        assert_eq!(d[2] - d[0], 2, "block must be contiguous");
    }
}

#[test]
fn files_round_trip_with_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("acoustic.vnaf");
    let fs = random_drop(&ramp(64, 7), 0.25, 3);
    write_features(&path, &fs, Some(serde_json::json!({"extractor": "test"}))).unwrap();
    assert!(sidecar_path(&path).exists());
    let back = read_features(&path).unwrap();
    assert_eq!(back, fs);

    std::fs::write(&path, b"VNAF\x09\x00\x00\x00").unwrap();
    assert!(matches!(read_features(&path), Err(FeatureError::Format { .. })));
    assert!(matches!(read_features(&dir.path().join("none.vnaf")), Err(FeatureError::Io { .. })));
}

#[test]
fn shape_mismatch_is_rejected() {
    assert!(matches!(FeatureSeq::new(vec![0.0; 5], 2, 3, "text"), Err(FeatureError::Invalid(_))));
    assert!(ramp(3, 2).with_mask(vec![true]).is_err());
}

proptest! {
    #[test]
    fn random_drop_contract(t in 1usize..300, d in 1usize..6, rate in 0.0f64..=1.0, seed in any::<u64>()) {
        let fs = ramp(t, d);
        let out = random_drop(&fs, rate, seed);
        check_drop_contract(&fs, &out)?;
        prop_assert_eq!(&out, &random_drop(&fs, rate, seed));
        prop_assert!((out.valid_fraction() - (t - dropped(&out).len()) as f64 / t as f64).abs() < 1e-12);
    }

    #[test]
    fn structural_drop_is_one_block(t in 1usize..300, d in 1usize..6, rate in 0.0f64..=1.0, seed in any::<u64>()) {
        let fs = ramp(t, d);
        let out = structural_drop(&fs, rate, seed);
        check_drop_contract(&fs, &out)?;
        let gone = dropped(&out);
        prop_assert_eq!(gone.len(), block_len(rate, t));
        prop_assert!(gone.windows(2).all(|w| w[1] == w[0] + 1));
    }

    #[test]
    fn ranged_drops_stay_in_range(t in 2usize..200, a in 0usize..200, len in 0usize..200, rate in 0.0f64..=1.0, seed in any::<u64>()) {
        let fs = ramp(t, 2);
        let start = a.min(t);
        let end = (start + len).min(t);
        for out in [
            random_drop_range(&fs, start..end, rate, seed).unwrap(),
            structural_drop_range(&fs, start..end, rate, seed).unwrap(),
        ] {
            check_drop_contract(&fs, &out)?;
            prop_assert!(dropped(&out).iter().all(|i| (start..end).contains(i)));
        }
    }

    #[test]
    fn bytes_round_trip(t in 0usize..50, d in 1usize..5, rate in 0.0f64..=1.0, seed in any::<u64>()) {
        let fs = random_drop(&ramp(t, d), rate, seed);
        let back = FeatureSeq::from_bytes(&fs.to_bytes(), "visual").unwrap();
        prop_assert_eq!(back, fs);
    }

    #[test]
    fn dropping_twice_only_removes_more(t in 1usize..200, seed in any::<u64>()) {
        let once = random_drop(&ramp(t, 3), 0.3, seed);
        let twice = structural_drop(&once, 0.3, seed ^ 1);
        check_drop_contract(&once, &twice)?;
    }
}
