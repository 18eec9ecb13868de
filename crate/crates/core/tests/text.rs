use proptest::prelude::*;

use vna::text_noise::*;

fn timed(n: usize) -> Transcript {
    Transcript::new(
        "en",
        (0..n).map(|i| Word::timed(format!("w{i}"), i as f64 * 0.3, i as f64 * 0.3 + 0.25)).collect(),
    )
}

/// True when `sub` can be obtained from `full` by deleting words.
fn is_subsequence(sub: &[Word], full: &[Word]) -> bool {
    let mut it = full.iter();
    sub.iter().all(|w| it.any(|f| f == w))
}

#[test]
fn erasure_count_is_binomial() {
    let t = Transcript::from_tokens("en", &vec!["word"; 1000].join(" "));
    for seed in 0..5 {
        let kept = erase_words(&t, 0..1000, 0.3, seed).unwrap().len();
        let removed = 1000 - kept;
        assert!((255..=345).contains(&removed), "seed {seed}: removed {removed}");
    }
}

#[test]
fn replacement_without_lexicon_uses_unknown_token() {
    let t = timed(40);
    let out = replace_words(&t, 0..40, 1.0, 2, None).unwrap();
    assert_eq!(out.len(), 40);
    assert!(out.tokens().iter().all(|w| *w == UNKNOWN_TOKEN));
    let empty: Vec<String> = Vec::new();
    assert!(matches!(replace_words(&t, 0..40, 0.5, 2, Some(&empty)), Err(TextError::EmptyLexicon)));
    assert!(matches!(replace_words(&t, 30..41, 0.5, 2, None), Err(TextError::RangeOutOfBounds { .. })));
}

#[test]
fn asr_transcripts_load_with_or_without_times() {
    let dir = tempfile::tempdir().unwrap();
    let ok = dir.path().join("asr.json");
    std::fs::write(&ok, r#"{"language": "en", "words": [{"token": "helo"}, {"token": "world", "start_s": 0.5, "end_s": 0.9}]}"#).unwrap();
    let t = load_asr_variant(&ok).unwrap();
    assert_eq!(t.tokens(), vec!["helo", "world"]);
    assert!(matches!(t.words_in_time(0.0, 1.0), Err(TextError::MissingWordTimes { index: 0 })));

    let overlapping = dir.path().join("bad.json");
    std::fs::write(&overlapping, r#"{"words": [{"token": "a", "start_s": 0.0, "end_s": 1.0}, {"token": "b", "start_s": 0.5, "end_s": 1.5}]}"#).unwrap();
    assert!(matches!(load_asr_variant(&overlapping), Err(TextError::BadTiming { index: 1, .. })));

    let malformed = dir.path().join("broken.json");
    std::fs::write(&malformed, "{\"words\": [{\"tok\": 1}]}").unwrap();
    assert!(matches!(load_asr_variant(&malformed), Err(TextError::Parse(_))));
    assert!(matches!(load_asr_variant(&dir.path().join("missing.json")), Err(TextError::Io { .. })));
}

#[test]
fn time_ranges_select_intersecting_words() {
    let t = timed(10);
    // words occupy [0.3i, 0.3i + 0.25)
    assert_eq!(t.words_in_time(0.0, 0.3).unwrap(), 0..1);
    assert_eq!(t.words_in_time(0.26, 0.6).unwrap(), 1..2);
    assert_eq!(t.words_in_time(0.5, 1.0).unwrap(), 1..4);
    assert_eq!(t.words_in_time(5.0, 6.0).unwrap(), 0..0);
}

#[test]
fn transcript_json_round_trip() {
    let t = timed(5);
    assert_eq!(Transcript::from_json(&t.to_json_pretty()).unwrap(), t);
}

proptest! {
    #[test]
    fn erasure_keeps_order_and_out_of_range_words(n in 1usize..200, a in 0usize..200, len in 0usize..200, p in 0.0f64..=1.0, seed in any::<u64>()) {
        let t = timed(n);
        let start = a.min(n);
        let end = (start + len).min(n);
        let out = erase_words(&t, start..end, p, seed).unwrap();
        prop_assert!(is_subsequence(&out.words, &t.words));
        prop_assert_eq!(&out.words[..start], &t.words[..start]);
        let tail = n - end;
        prop_assert_eq!(&out.words[out.len() - tail..], &t.words[end..]);
        prop_assert_eq!(out, erase_words(&t, start..end, p, seed).unwrap());
    }

    #[test]
    fn replacement_preserves_length_timing_and_codomain(n in 1usize..200, p in 0.0f64..=1.0, seed in any::<u64>(), lex_len in 1usize..5) {
        let t = timed(n);
        let lexicon: Vec<String> = (0..lex_len).map(|i| format!("lex{i}")).collect();
        let out = replace_words(&t, 0..n, p, seed, Some(&lexicon)).unwrap();
        prop_assert_eq!(out.len(), n);
        for (a, b) in t.words.iter().zip(&out.words) {
            prop_assert_eq!((a.start_s, a.end_s), (b.start_s, b.end_s));
            prop_assert!(a.token == b.token || lexicon.contains(&b.token));
        }
    }

    #[test]
    fn endpoint_intensities(n in 0usize..100, seed in any::<u64>()) {
        let t = timed(n);
        prop_assert_eq!(&erase_words(&t, 0..n, 0.0, seed).unwrap(), &t);
        prop_assert!(erase_words(&t, 0..n, 1.0, seed).unwrap().is_empty());
        prop_assert_eq!(&replace_words(&t, 0..n, 0.0, seed, None).unwrap(), &t);
    }
}
