//! Shared fixtures for the integration tests.
#![allow(dead_code)]

use std::path::Path;

use mood_manifold::corpus::Document;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FILLER: [&str; 12] = [
    "today", "the", "a", "really", "just", "work", "home", "friends", "so", "and", "my", "it",
];

/// Documents whose label shows through in a few cue words per mood, mixed
/// with shared filler so that classes overlap.
pub fn text_documents(labels: &[&str], per_label: usize, seed: u64) -> Vec<Document> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut docs = Vec::new();
    for i in 0..per_label {
        for (k, label) in labels.iter().enumerate() {
            let cues: Vec<String> = (0..3).map(|c| format!("{label}{c}")).collect();
            let len = rng.random_range(6..12);
            let words: Vec<String> = (0..len)
                .map(|_| {
                    if rng.random_bool(0.35) {
                        cues.choose(&mut rng).unwrap().clone()
                    } else {
                        FILLER.choose(&mut rng).unwrap().to_string()
                    }
                })
                .collect();
            docs.push(Document {
                id: format!("d{i:04}-{k:02}"),
                text: words.join(" "),
                label: label.to_string(),
            });
        }
    }
    docs
}

pub fn write_jsonl<T: serde::Serialize>(path: &Path, items: &[T]) {
    let mut s = String::new();
    for it in items {
        s.push_str(&serde_json::to_string(it).unwrap());
        s.push('\n');
    }
    std::fs::write(path, s).unwrap();
}

pub fn uniform(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Runs the command line in-process and returns (exit code, stdout, stderr).
pub fn moodmf(args: &[&str]) -> (i32, String, String) {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let argv = std::iter::once("moodmf").chain(args.iter().copied());
    let code = mood_manifold::cli::run(argv, &mut out, &mut err);
    (
        code,
        String::from_utf8(out).unwrap(),
        String::from_utf8(err).unwrap(),
    )
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}
