//! End-to-end fitting: features → centroids → label embedding → projection.

use serde::{Deserialize, Serialize};

use crate::corpus::AnyCorpus;
use crate::error::{Error, Result};
use crate::features::{self, SparseVector, Vocabulary, VocabularyConfig, Weighting};
use crate::manifold::{self, EmbeddingMethod, ManifoldEmbedding};
use crate::projection::{self, LambdaChoice, ProjectionModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub vocabulary: VocabularyConfig,
    pub weighting: Weighting,
    /// `None` means `min(10, C−1)`.
    pub manifold_dim: Option<usize>,
    pub embedding: EmbeddingMethod,
    pub lambda: LambdaChoice,
    pub intercept: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            vocabulary: VocabularyConfig::default(),
            weighting: Weighting::default(),
            manifold_dim: None,
            embedding: EmbeddingMethod::default(),
            lambda: LambdaChoice::Auto,
            intercept: true,
        }
    }
}

/// Turns corpus records into feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub enum Featurizer {
    Text {
        vocabulary: Vocabulary,
        weighting: Weighting,
    },
    Numeric {
        dim: usize,
    },
}

impl Featurizer {
    pub fn fit(train: &AnyCorpus, cfg: &PipelineConfig) -> Result<Self> {
        match train {
            AnyCorpus::Text(c) => Ok(Featurizer::Text {
                vocabulary: features::build_vocabulary(c, &cfg.vocabulary)?,
                weighting: cfg.weighting,
            }),
            AnyCorpus::Numeric(c) => {
                if c.dim() == 0 {
                    return Err(Error::validation("numeric records have no features"));
                }
                Ok(Featurizer::Numeric { dim: c.dim() })
            }
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Featurizer::Text { vocabulary, .. } => vocabulary.len(),
            Featurizer::Numeric { dim } => *dim,
        }
    }

    pub fn transform(&self, data: &AnyCorpus) -> Result<Vec<SparseVector>> {
        match (self, data) {
            (Featurizer::Text { vocabulary, weighting }, AnyCorpus::Text(c)) => Ok(c
                .documents()
                .iter()
                .map(|d| features::vectorize(d, vocabulary, *weighting))
                .collect()),
            (Featurizer::Numeric { dim }, AnyCorpus::Numeric(c)) => {
                if c.dim() != *dim && !c.is_empty() {
                    return Err(Error::validation(format!(
                        "records have {} features, model expects {dim}",
                        c.dim()
                    )));
                }
                Ok(c.records().iter().map(|r| SparseVector::from_dense(&r.x)).collect())
            }
            (Featurizer::Text { .. }, AnyCorpus::Numeric(_)) => {
                Err(Error::validation("model expects text documents, got numeric records"))
            }
            (Featurizer::Numeric { .. }, AnyCorpus::Text(_)) => {
                Err(Error::validation("model expects numeric records, got text documents"))
            }
        }
    }
}

/// Label embedding plus the projection into it.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldModel {
    pub embedding: ManifoldEmbedding,
    pub projection: ProjectionModel,
}

impl ManifoldModel {
    pub fn embed_all(&self, xs: &[SparseVector]) -> Result<Vec<Vec<f64>>> {
        self.projection.embed_all(xs)
    }
}

pub fn fit_manifold<S: AsRef<str>>(xs: &[SparseVector], labels: &[S], cfg: &PipelineConfig) -> Result<ManifoldModel> {
    let centroids = manifold::class_centroids(xs, labels)?;
    let c = centroids.len();
    if c < 2 {
        return Err(Error::validation("the manifold needs at least two labels"));
    }
    let l = cfg.manifold_dim.unwrap_or_else(|| manifold::default_dim(c));
    let embedding = manifold::embed_labels(&centroids, l, cfg.embedding)?;
    let targets = projection::regression_targets(labels, &embedding)?;
    let projection = projection::fit_projection_with(xs, &targets, cfg.lambda, cfg.intercept)?;
    Ok(ManifoldModel {
        embedding,
        projection,
    })
}
