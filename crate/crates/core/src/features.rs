//! Bag-of-words features: tokenizer, vocabulary and sparse count vectors.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Document};
use crate::error::{Error, Result};

pub const VOCABULARY_VERSION: u32 = 1;

/// Lowercases, splits on runs of non-alphanumeric characters and drops
/// tokens shorter than two characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| t.chars().nth(1).is_some())
        .map(str::to_lowercase)
        .collect()
}

/// Tokens plus all contiguous n-grams up to `order`, joined by a space.
pub fn terms(text: &str, order: usize) -> Vec<String> {
    let unigrams = tokenize(text);
    let mut out = unigrams.clone();
    for n in 2..=order {
        out.extend(unigrams.windows(n).map(|w| w.join(" ")));
    }
    out
}

/// Anything that can be read as a feature row.
pub trait FeatureRow {
    fn dim(&self) -> usize;

    /// Visits every stored entry; dense rows visit zeros too.
    fn for_each_entry(&self, f: impl FnMut(usize, f64));

    fn dot(&self, w: &[f64]) -> f64 {
        let mut s = 0.0;
        self.for_each_entry(|i, v| s += v * w[i]);
        s
    }

    /// `out += a · self`
    fn add_scaled_to(&self, a: f64, out: &mut [f64]) {
        self.for_each_entry(|i, v| out[i] += a * v);
    }

    fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.add_scaled_to(1.0, &mut out);
        out
    }

    fn squared_norm(&self) -> f64 {
        let mut s = 0.0;
        self.for_each_entry(|_, v| s += v * v);
        s
    }
}

impl FeatureRow for [f64] {
    fn dim(&self) -> usize {
        self.len()
    }

    fn for_each_entry(&self, mut f: impl FnMut(usize, f64)) {
        for (i, &v) in self.iter().enumerate() {
            f(i, v);
        }
    }

    fn dot(&self, w: &[f64]) -> f64 {
        crate::linalg::dot(self, w)
    }
}

impl FeatureRow for Vec<f64> {
    fn dim(&self) -> usize {
        self.len()
    }

    fn for_each_entry(&self, f: impl FnMut(usize, f64)) {
        self.as_slice().for_each_entry(f)
    }

    fn dot(&self, w: &[f64]) -> f64 {
        crate::linalg::dot(self, w)
    }
}

/// Sparse vector with strictly increasing indices and no stored zeros.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    dim: usize,
    entries: Vec<(usize, f64)>,
}

impl SparseVector {
    pub fn new(dim: usize, entries: Vec<(usize, f64)>) -> Result<Self> {
        let mut prev = None;
        for &(i, v) in &entries {
            if i >= dim {
                return Err(Error::validation(format!(
                    "sparse index {i} out of range for dimension {dim}"
                )));
            }
            if prev.is_some_and(|p| p >= i) {
                return Err(Error::validation("sparse indices must be strictly increasing"));
            }
            if v == 0.0 {
                return Err(Error::validation("sparse vectors must not store zeros"));
            }
            prev = Some(i);
        }
        Ok(SparseVector { dim, entries })
    }

    pub fn zeros(dim: usize) -> Self {
        SparseVector {
            dim,
            entries: Vec::new(),
        }
    }

    pub fn from_dense(x: &[f64]) -> Self {
        SparseVector {
            dim: x.len(),
            entries: x
                .iter()
                .enumerate()
                .filter(|(_, &v)| v != 0.0)
                .map(|(i, &v)| (i, v))
                .collect(),
        }
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn norm(&self) -> f64 {
        self.squared_norm().sqrt()
    }
}

impl FeatureRow for SparseVector {
    fn dim(&self) -> usize {
        self.dim
    }

    fn for_each_entry(&self, mut f: impl FnMut(usize, f64)) {
        for &(i, v) in &self.entries {
            f(i, v);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    Counts,
    #[default]
    L2Normalized,
}

impl std::str::FromStr for Weighting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "counts" => Ok(Weighting::Counts),
            "l2" | "l2_normalized" => Ok(Weighting::L2Normalized),
            other => Err(Error::validation(format!("unknown weighting {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VocabularyConfig {
    pub min_df: usize,
    pub max_features: usize,
    pub ngram: usize,
}

impl Default for VocabularyConfig {
    fn default() -> Self {
        VocabularyConfig {
            min_df: 5,
            max_features: 50_000,
            ngram: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "VocabularyFile", into = "VocabularyFile")]
pub struct Vocabulary {
    tokens: Vec<String>,
    doc_freq: Vec<usize>,
    ngram: usize,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabularyFile {
    version: u32,
    #[serde(default = "one")]
    ngram: usize,
    tokens: Vec<String>,
    doc_freq: Vec<usize>,
}

fn one() -> usize {
    1
}

impl TryFrom<VocabularyFile> for Vocabulary {
    type Error = Error;

    fn try_from(f: VocabularyFile) -> Result<Self> {
        if f.version != VOCABULARY_VERSION {
            return Err(Error::validation(format!(
                "unsupported vocabulary version {}",
                f.version
            )));
        }
        Vocabulary::from_parts(f.tokens, f.doc_freq, f.ngram)
    }
}

impl From<Vocabulary> for VocabularyFile {
    fn from(v: Vocabulary) -> Self {
        VocabularyFile {
            version: VOCABULARY_VERSION,
            ngram: v.ngram,
            tokens: v.tokens,
            doc_freq: v.doc_freq,
        }
    }
}

impl Vocabulary {
    pub fn from_parts(tokens: Vec<String>, doc_freq: Vec<usize>, ngram: usize) -> Result<Self> {
        if tokens.len() != doc_freq.len() {
            return Err(Error::validation("tokens and doc_freq differ in length"));
        }
        if ngram == 0 {
            return Err(Error::validation("n-gram order must be at least 1"));
        }
        let index: HashMap<String, usize> = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        if index.len() != tokens.len() {
            return Err(Error::validation("vocabulary tokens are not distinct"));
        }
        Ok(Vocabulary {
            tokens,
            doc_freq,
            ngram,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn doc_freq(&self) -> &[usize] {
        &self.doc_freq
    }

    pub fn ngram(&self) -> usize {
        self.ngram
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }
}

pub fn build_vocabulary(corpus: &Corpus, config: &VocabularyConfig) -> Result<Vocabulary> {
    build_vocabulary_from_texts(corpus.documents().iter().map(|d| d.text.as_str()), config)
}

pub fn build_vocabulary_from_texts<'a>(
    texts: impl IntoIterator<Item = &'a str>,
    config: &VocabularyConfig,
) -> Result<Vocabulary> {
    if config.min_df == 0 || config.max_features == 0 {
        return Err(Error::validation("min_df and max_features must be positive"));
    }
    let mut df: BTreeMap<String, usize> = BTreeMap::new();
    let mut n_docs = 0usize;
    for text in texts {
        n_docs += 1;
        let distinct: HashSet<String> = terms(text, config.ngram.max(1)).into_iter().collect();
        for t in distinct {
            *df.entry(t).or_default() += 1;
        }
    }
    if n_docs == 0 {
        return Err(Error::validation("cannot build a vocabulary from an empty corpus"));
    }
    let mut kept: Vec<(String, usize)> = df.into_iter().filter(|(_, c)| *c >= config.min_df).collect();
    // stable sort over lexicographic input keeps ties lexicographic
    kept.sort_by(|a, b| b.1.cmp(&a.1));
    kept.truncate(config.max_features);
    if kept.is_empty() {
        return Err(Error::validation(format!(
            "no token appears in at least {} documents",
            config.min_df
        )));
    }
    let (tokens, doc_freq) = kept.into_iter().unzip();
    Vocabulary::from_parts(tokens, doc_freq, config.ngram.max(1))
}

pub fn vectorize_text(text: &str, vocab: &Vocabulary, weighting: Weighting) -> SparseVector {
    let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
    for t in terms(text, vocab.ngram) {
        if let Some(i) = vocab.index_of(&t) {
            *counts.entry(i).or_default() += 1.0;
        }
    }
    let mut entries: Vec<(usize, f64)> = counts.into_iter().collect();
    if weighting == Weighting::L2Normalized && !entries.is_empty() {
        let norm = entries.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
        for e in &mut entries {
            e.1 /= norm;
        }
    }
    SparseVector {
        dim: vocab.len(),
        entries,
    }
}

pub fn vectorize(doc: &Document, vocab: &Vocabulary, weighting: Weighting) -> SparseVector {
    vectorize_text(&doc.text, vocab, weighting)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn corpus_of(texts: &[&str]) -> Corpus {
        Corpus::new(
            texts
                .iter()
                .enumerate()
                .map(|(i, t)| Document {
                    id: i.to_string(),
                    text: t.to_string(),
                    label: "l".into(),
                })
                .collect(),
        )
        .unwrap()
    }

    fn cfg(min_df: usize, max_features: usize) -> VocabularyConfig {
        VocabularyConfig {
            min_df,
            max_features,
            ngram: 1,
        }
    }

    #[test]
    fn tokenizer_rules() {
        assert_eq!(
            tokenize("So TIRED!! really tired."),
            ["so", "tired", "really", "tired"]
        );
        assert!(tokenize("").is_empty());
        assert!(tokenize("a-b c").is_empty());
        assert_eq!(tokenize("naïve café ok"), ["naïve", "café", "ok"]);
    }

    #[test]
    fn bigrams() {
        assert_eq!(terms("red blue sky", 2), ["red", "blue", "sky", "red blue", "blue sky"]);
    }

    #[test]
    fn vocabulary_min_df() {
        let c = corpus_of(&["red red blue", "blue sky"]);
        let v = build_vocabulary(&c, &cfg(2, 100)).unwrap();
        assert_eq!(v.tokens(), ["blue"]);
        assert_eq!(v.doc_freq(), [2]);
    }

    #[test]
    fn vocabulary_truncation_ties_lexicographic() {
        let c = corpus_of(&["red red blue", "blue sky"]);
        let v = build_vocabulary(&c, &cfg(1, 2)).unwrap();
        assert_eq!(v.tokens(), ["blue", "red"]);
        assert_eq!(v.doc_freq(), [2, 1]);
    }

    #[test]
    fn vocabulary_empty_is_error() {
        let c = corpus_of(&["red red blue", "blue sky"]);
        assert!(build_vocabulary(&c, &cfg(3, 10)).is_err());
    }

    #[test]
    fn vectorize_counts_and_l2() {
        let vocab = Vocabulary::from_parts(vec!["happy".into(), "sad".into()], vec![1, 1], 1).unwrap();
        let v = vectorize_text("happy happy sad", &vocab, Weighting::Counts);
        assert_eq!(v.entries(), [(0, 2.0), (1, 1.0)]);

        let v = vectorize_text("happy happy sad", &vocab, Weighting::L2Normalized);
        let s5 = 5f64.sqrt();
        assert!((v.entries()[0].1 - 2.0 / s5).abs() < 1e-15);
        assert!((v.entries()[1].1 - 1.0 / s5).abs() < 1e-15);

        let v = vectorize_text("unseen words only", &vocab, Weighting::L2Normalized);
        assert_eq!(v.nnz(), 0);
        assert_eq!(v.dim(), 2);
    }

    #[test]
    fn vocabulary_json_round_trip() {
        let c = corpus_of(&["red red blue", "blue sky"]);
        let v = build_vocabulary(&c, &cfg(1, 10)).unwrap();
        let json = serde_json::to_string(&v).unwrap();
        assert!(json.contains("\"version\":1"));
        let back: Vocabulary = serde_json::from_str(&json).unwrap();
        assert_eq!(back, v);
    }

    #[test]
    fn sparse_vector_validation() {
        assert!(SparseVector::new(3, vec![(0, 1.0), (2, 2.0)]).is_ok());
        assert!(SparseVector::new(3, vec![(2, 1.0), (0, 2.0)]).is_err());
        assert!(SparseVector::new(3, vec![(3, 1.0)]).is_err());
        assert!(SparseVector::new(3, vec![(1, 0.0)]).is_err());
    }

    proptest! {
        #[test]
        fn l2_vectors_have_unit_norm(words in prop::collection::vec("[a-e]{2,3}", 1..30)) {
            let text = words.join(" ");
            let c = corpus_of(&[text.as_str()]);
            let v = build_vocabulary(&c, &cfg(1, 1000)).unwrap();
            let x = vectorize_text(&text, &v, Weighting::L2Normalized);
            prop_assert!((x.norm() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn vocabulary_ignores_document_order(mut texts in prop::collection::vec("[a-d ]{0,12}", 1..8)) {
            let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
            let a = build_vocabulary(&corpus_of(&refs), &cfg(1, 5));
            texts.reverse();
            let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
            let b = build_vocabulary(&corpus_of(&refs), &cfg(1, 5));
            prop_assert_eq!(a.ok(), b.ok());
        }
    }
}
