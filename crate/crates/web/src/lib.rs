//! Browser bindings for the demo page in `www/`.
//!
//! Each export has a plain Rust counterpart returning the library's own
//! `Result`, so the logic is testable natively.

use wasm_bindgen::prelude::*;

use mood_manifold::corpus::{self, AnyCorpus};
use mood_manifold::eval::{self, MethodSpec, TrialConfig};
use mood_manifold::features::{SparseVector, VocabularyConfig};
use mood_manifold::pipeline::{self, Featurizer, PipelineConfig};
use mood_manifold::projection::LambdaChoice;
use mood_manifold::{plot, synth, Error, Result};

/// Samples per class in the synthetic demos.
const PER_CLASS: usize = 120;
const SYNTH_DIM: usize = 60;

fn synthetic_corpus(classes: usize, separation: f64, noise_std: f64, seed: u32) -> Result<AnyCorpus> {
    if !(3..=32).contains(&classes) {
        return Err(Error::Validation("choose between 3 and 32 classes".into()));
    }
    let mut spec = synth::well_separated_spec(classes, 3.min(classes - 1), SYNTH_DIM, separation, seed.into())?;
    spec.noise_std = noise_std;
    let sample = synth::sample(&spec, PER_CLASS * classes)?;
    Ok(AnyCorpus::Numeric(sample.to_corpus()?))
}

fn fit_and_plot(data: &AnyCorpus, cfg: &PipelineConfig, flip_x: bool, flip_y: bool) -> Result<String> {
    let featurizer = Featurizer::fit(data, cfg)?;
    let xs: Vec<SparseVector> = featurizer.transform(data)?;
    let model = pipeline::fit_manifold(&xs, &data.labels(), cfg)?;
    if model.embedding.dim() < 2 {
        return Err(Error::Validation("need at least three labels to draw two dimensions".into()));
    }
    plot::emit_scatter_svg(&model.embedding, (0, 1), flip_x, flip_y)
}

/// Label scatter for a synthetic corpus.
pub fn synthetic_scatter_svg(classes: usize, separation: f64, seed: u32, flip_x: bool, flip_y: bool) -> Result<String> {
    let data = synthetic_corpus(classes, separation, 0.5, seed)?;
    let cfg = PipelineConfig {
        manifold_dim: Some(2),
        ..PipelineConfig::default()
    };
    fit_and_plot(&data, &cfg, flip_x, flip_y)
}

/// Label scatter for a JSON Lines corpus of `{"id","text","label"}`.
pub fn corpus_scatter_svg(jsonl: &str, min_df: usize, flip_x: bool, flip_y: bool) -> Result<String> {
    let data = AnyCorpus::Text(corpus::parse_corpus(jsonl)?);
    let cfg = PipelineConfig {
        vocabulary: VocabularyConfig {
            min_df: min_df.max(1),
            ..VocabularyConfig::default()
        },
        manifold_dim: Some(2),
        ..PipelineConfig::default()
    };
    fit_and_plot(&data, &cfg, flip_x, flip_y)
}

/// Original-space versus manifold table over repeated splits of a
/// synthetic corpus.
pub fn comparison_table(classes: usize, separation: f64, noise_std: f64, trials: usize, seed: u32) -> Result<String> {
    if !(2..=20).contains(&trials) {
        return Err(Error::Validation("choose between 2 and 20 trials".into()));
    }
    let data = synthetic_corpus(classes, separation, noise_std, seed)?;
    let methods = ["lda-diag", "lda-spher", "qda-full", "logreg"]
        .iter()
        .flat_map(|c| [format!("{c}@original"), format!("{c}@manifold")])
        .map(|m| m.parse::<MethodSpec>())
        .collect::<Result<Vec<_>>>()?;
    let cfg = TrialConfig {
        pipeline: PipelineConfig {
            manifold_dim: Some(3.min(classes - 1)),
            lambda: LambdaChoice::Fixed(10.0 * SYNTH_DIM as f64),
            ..PipelineConfig::default()
        },
        methods,
        ..TrialConfig::default()
    };
    let summaries = eval::run_trials(&data, &cfg, trials, u64::from(seed) * 1000)?;
    Ok(eval::emit_table(&summaries))
}

fn js(e: Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen(js_name = syntheticScatter)]
pub fn synthetic_scatter(classes: usize, separation: f64, seed: u32, flip_x: bool, flip_y: bool) -> Result<String, JsError> {
    synthetic_scatter_svg(classes, separation, seed, flip_x, flip_y).map_err(js)
}

#[wasm_bindgen(js_name = corpusScatter)]
pub fn corpus_scatter(jsonl: &str, min_df: usize, flip_x: bool, flip_y: bool) -> Result<String, JsError> {
    corpus_scatter_svg(jsonl, min_df, flip_x, flip_y).map_err(js)
}

#[wasm_bindgen(js_name = compareSpaces)]
pub fn compare_spaces(classes: usize, separation: f64, noise_std: f64, trials: usize, seed: u32) -> Result<String, JsError> {
    comparison_table(classes, separation, noise_std, trials, seed).map_err(js)
}
