//! Labeled document collections: JSON Lines loading, label filtering,
//! polarity relabeling and stratified splits.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Moods that make up the positive side of the binary polarity task.
pub const POLARITY_POSITIVE: [&str; 3] = ["cheerful", "happy", "amused"];
/// Moods that make up the negative side of the binary polarity task.
pub const POLARITY_NEGATIVE: [&str; 4] = ["sad", "annoyed", "depressed", "confused"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    pub label: String,
}

/// An ordered, validated collection of documents.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    documents: Vec<Document>,
    label_vocab: Vec<(String, usize)>,
}

/// Labels with their counts, descending by count with lexicographic ties.
pub fn label_counts<'a, I>(labels: I) -> Vec<(String, usize)>
where
    I: IntoIterator<Item = &'a str>,
{
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for l in labels {
        *counts.entry(l).or_default() += 1;
    }
    let mut vocab: Vec<(String, usize)> = counts
        .into_iter()
        .map(|(l, c)| (l.to_owned(), c))
        .collect();
    // BTreeMap iteration is already lexicographic; a stable sort keeps it for ties.
    vocab.sort_by(|a, b| b.1.cmp(&a.1));
    vocab
}

impl Corpus {
    pub fn new(documents: Vec<Document>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(documents.len());
        for (i, d) in documents.iter().enumerate() {
            if d.id.is_empty() {
                return Err(Error::validation(format!("document {i} has an empty id")));
            }
            if d.label.is_empty() {
                return Err(Error::validation(format!(
                    "document {:?} has an empty label",
                    d.id
                )));
            }
            if !seen.insert(d.id.as_str()) {
                return Err(Error::validation(format!("duplicate document id {:?}", d.id)));
            }
        }
        let label_vocab = label_counts(documents.iter().map(|d| d.label.as_str()));
        Ok(Corpus {
            documents,
            label_vocab,
        })
    }

    // Subsets of a valid corpus are valid; skip the id checks.
    fn from_valid(documents: Vec<Document>) -> Self {
        let label_vocab = label_counts(documents.iter().map(|d| d.label.as_str()));
        Corpus {
            documents,
            label_vocab,
        }
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn label_vocab(&self) -> &[(String, usize)] {
        &self.label_vocab
    }

    /// Distinct labels in vocabulary order.
    pub fn label_names(&self) -> Vec<String> {
        self.label_vocab.iter().map(|(l, _)| l.clone()).collect()
    }

    pub fn labels(&self) -> Vec<String> {
        self.documents.iter().map(|d| d.label.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    /// Keeps documents whose label is among the `k` most frequent.
    pub fn filter_top_labels(&self, k: usize) -> Result<Corpus> {
        if k == 0 {
            return Err(Error::validation("k must be at least 1"));
        }
        if k >= self.label_vocab.len() {
            return Ok(self.clone());
        }
        let keep: HashSet<&str> = self.label_vocab[..k]
            .iter()
            .map(|(l, _)| l.as_str())
            .collect();
        let docs = self
            .documents
            .iter()
            .filter(|d| keep.contains(d.label.as_str()))
            .cloned()
            .collect();
        Ok(Corpus::from_valid(docs))
    }

    /// Relabels documents as `"pos"` / `"neg"` and drops everything else.
    pub fn map_to_binary<S: AsRef<str>>(&self, positive: &[S], negative: &[S]) -> Result<Corpus> {
        let pos: HashSet<&str> = positive.iter().map(AsRef::as_ref).collect();
        let neg: HashSet<&str> = negative.iter().map(AsRef::as_ref).collect();
        if let Some(both) = pos.intersection(&neg).min() {
            return Err(Error::validation(format!(
                "label {both:?} is in both the positive and negative sets"
            )));
        }
        let docs = self
            .documents
            .iter()
            .filter_map(|d| {
                let label = if pos.contains(d.label.as_str()) {
                    "pos"
                } else if neg.contains(d.label.as_str()) {
                    "neg"
                } else {
                    return None;
                };
                Some(Document {
                    label: label.to_owned(),
                    ..d.clone()
                })
            })
            .collect();
        Ok(Corpus::from_valid(docs))
    }

    /// Stratified train/test split; see [`stratified_split`].
    pub fn split(&self, test_fraction: f64, seed: u64) -> Result<(Corpus, Corpus)> {
        let labels: Vec<&str> = self.documents.iter().map(|d| d.label.as_str()).collect();
        let (train_idx, test_idx) = stratified_split(&labels, test_fraction, seed)?;
        let pick = |idx: &[usize]| {
            Corpus::from_valid(idx.iter().map(|&i| self.documents[i].clone()).collect())
        };
        Ok((pick(&train_idx), pick(&test_idx)))
    }

    pub fn subset(&self, indices: &[usize]) -> Corpus {
        Corpus::from_valid(indices.iter().map(|&i| self.documents[i].clone()).collect())
    }

    pub fn write_jsonl(&self, mut out: impl Write) -> std::io::Result<()> {
        for d in &self.documents {
            serde_json::to_writer(&mut out, d)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Number of test items drawn from a class of size `n`.
pub fn test_count(n: usize, test_fraction: f64) -> usize {
    // The epsilon absorbs products such as 0.7 * 10 = 7.000000000000001.
    ((test_fraction * n as f64) - 1e-9).ceil().max(0.0) as usize
}

/// Splits item indices per label: `⌈test_fraction·n_label⌉` of each label go
/// to the test side, chosen by a seeded shuffle. Both index lists come back
/// in ascending order.
pub fn stratified_split<S: AsRef<str>>(
    labels: &[S],
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::validation(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let vocab = label_counts(labels.iter().map(AsRef::as_ref));
    if let Some((label, _)) = vocab.iter().find(|(_, c)| *c < 2) {
        return Err(Error::validation(format!(
            "label {label:?} has a single document; splitting needs at least 2 per label"
        )));
    }
    let mut groups: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, l) in labels.iter().enumerate() {
        groups.entry(l.as_ref()).or_default().push(i);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::with_capacity(labels.len());
    let mut test = Vec::new();
    for (label, n) in &vocab {
        let members = groups.get_mut(label.as_str()).expect("label present");
        members.shuffle(&mut rng);
        let k = test_count(*n, test_fraction);
        test.extend_from_slice(&members[..k]);
        train.extend_from_slice(&members[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

fn open_lines(path: &Path) -> Result<impl Iterator<Item = (usize, std::io::Result<String>)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(BufReader::new(file)
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l)))
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(&text)
}

/// Parses JSON Lines text of documents; blank lines are skipped.
pub fn parse_corpus(text: &str) -> Result<Corpus> {
    let mut docs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let doc: Document = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        docs.push(doc);
    }
    Corpus::new(docs)
}

/// A labeled record whose features are already numeric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericRecord {
    pub id: String,
    pub label: String,
    pub x: Vec<f64>,
}

/// Numeric counterpart of [`Corpus`], as written by the synthetic generator.
#[derive(Debug, Clone, PartialEq)]
pub struct NumericCorpus {
    records: Vec<NumericRecord>,
    dim: usize,
}

impl NumericCorpus {
    pub fn new(records: Vec<NumericRecord>) -> Result<Self> {
        let dim = records.first().map_or(0, |r| r.x.len());
        let mut seen = HashSet::with_capacity(records.len());
        for r in &records {
            if r.id.is_empty() || r.label.is_empty() {
                return Err(Error::validation("numeric record with empty id or label"));
            }
            if !seen.insert(r.id.as_str()) {
                return Err(Error::validation(format!("duplicate record id {:?}", r.id)));
            }
            if r.x.len() != dim {
                return Err(Error::validation(format!(
                    "record {:?} has {} features, expected {dim}",
                    r.id,
                    r.x.len()
                )));
            }
            if r.x.iter().any(|v| !v.is_finite()) {
                return Err(Error::validation(format!(
                    "record {:?} has a non-finite feature",
                    r.id
                )));
            }
        }
        Ok(NumericCorpus { records, dim })
    }

    pub fn records(&self) -> &[NumericRecord] {
        &self.records
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn labels(&self) -> Vec<String> {
        self.records.iter().map(|r| r.label.clone()).collect()
    }

    pub fn label_vocab(&self) -> Vec<(String, usize)> {
        label_counts(self.records.iter().map(|r| r.label.as_str()))
    }
}

pub fn load_numeric_corpus(path: impl AsRef<Path>) -> Result<NumericCorpus> {
    let path = path.as_ref();
    let mut records = Vec::new();
    for (line_no, line) in open_lines(path)? {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: NumericRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        records.push(rec);
    }
    NumericCorpus::new(records)
}

/// Either kind of labeled input.
#[derive(Debug, Clone)]
pub enum AnyCorpus {
    Text(Corpus),
    Numeric(NumericCorpus),
}

impl AnyCorpus {
    pub fn labels(&self) -> Vec<String> {
        match self {
            AnyCorpus::Text(c) => c.labels(),
            AnyCorpus::Numeric(c) => c.labels(),
        }
    }

    pub fn ids(&self) -> Vec<String> {
        match self {
            AnyCorpus::Text(c) => c.documents().iter().map(|d| d.id.clone()).collect(),
            AnyCorpus::Numeric(c) => c.records().iter().map(|r| r.id.clone()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            AnyCorpus::Text(c) => c.len(),
            AnyCorpus::Numeric(c) => c.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn label_vocab(&self) -> Vec<(String, usize)> {
        match self {
            AnyCorpus::Text(c) => c.label_vocab().to_vec(),
            AnyCorpus::Numeric(c) => c.label_vocab(),
        }
    }

    pub fn subset(&self, indices: &[usize]) -> AnyCorpus {
        match self {
            AnyCorpus::Text(c) => AnyCorpus::Text(c.subset(indices)),
            AnyCorpus::Numeric(c) => AnyCorpus::Numeric(NumericCorpus {
                records: indices.iter().map(|&i| c.records[i].clone()).collect(),
                dim: c.dim,
            }),
        }
    }
}

/// Loads a JSON Lines file of either text documents or numeric records,
/// deciding by whether the first record carries an `"x"` field.
pub fn load_any(path: impl AsRef<Path>) -> Result<AnyCorpus> {
    let path = path.as_ref();
    let mut numeric = false;
    for (line_no, line) in open_lines(path)? {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let v: serde_json::Value = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        numeric = v.get("x").is_some() && v.get("text").is_none();
        break;
    }
    if numeric {
        load_numeric_corpus(path).map(AnyCorpus::Numeric)
    } else {
        load_corpus(path).map(AnyCorpus::Text)
    }
}
