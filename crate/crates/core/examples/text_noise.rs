//! Erase and replace words in a time-aligned transcript, and load an
//! externally produced ASR transcript.
//!
//!     cargo run --example text_noise

mod support;

use vna::text_noise::*;

fn main() {
    let words = "the movie was surprisingly good and the acting felt honest throughout";
    let t = Transcript::new(
        "en",
        words
            .split(' ')
            .enumerate()
            .map(|(i, w)| Word::timed(w, i as f64 * 0.4, i as f64 * 0.4 + 0.35))
            .collect(),
    );
    println!("original : {}", t.tokens().join(" "));

    let erased = erase_words(&t, 0..t.len(), 0.3, 11).unwrap();
    println!("erase 0.3: {}", erased.tokens().join(" "));

    let unk = replace_words(&t, 0..t.len(), 0.4, 11, None).unwrap();
    println!("unk 0.4  : {}", unk.tokens().join(" "));

    let lexicon: Vec<String> = ["bad", "boring", "fine", "weird"].map(String::from).to_vec();
    let swapped = replace_words(&t, 0..t.len(), 0.4, 11, Some(&lexicon)).unwrap();
    println!("lex 0.4  : {}", swapped.tokens().join(" "));

    // only the words spoken during 1.0–2.0 s
    let range = t.words_in_time(1.0, 2.0).unwrap();
    let local = erase_words(&t, range.clone(), 1.0, 0).unwrap();
    println!("erase {range:?}: {}", local.tokens().join(" "));

    // recognizer output, where some words lack timing
    let dir = support::scratch("text_noise");
    let asr = dir.join("asr.json");
    std::fs::write(&asr, r#"{"language":"en","words":[{"token":"the"},{"token":"moovie","start_s":0.4,"end_s":0.8},{"token":"was"},{"token":"good"}]}"#).unwrap();
    let recognized = load_asr_variant(&asr).unwrap();
    println!("asr      : {}", recognized.tokens().join(" "));
}
