//! Label embeddings: class centroids in feature space, their pairwise
//! distances, and classical MDS / linear-kernel PCA coordinates.
//!
//! The coordinates of label `y` estimate the mean manifold position of
//! documents carrying that label. They are identified only up to an
//! orthogonal transform, so each eigenvector is normalized to make its
//! largest-magnitude entry positive; this keeps fitted models reproducible.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::label_counts;
use crate::error::{Error, Result};
use crate::features::FeatureRow;
use crate::linalg::{self, Mat};

pub const EMBEDDING_VERSION: u32 = 1;

/// Eigenvalues below this fraction of the largest one are rounding noise.
const EIGEN_NOISE_RATIO: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct CentroidSet {
    labels: Vec<String>,
    centroids: Vec<Vec<f64>>,
}

impl CentroidSet {
    pub fn new(labels: Vec<String>, centroids: Vec<Vec<f64>>) -> Result<Self> {
        if labels.len() != centroids.len() {
            return Err(Error::validation("labels and centroids differ in length"));
        }
        if labels.is_empty() {
            return Err(Error::validation("centroid set is empty"));
        }
        let d = centroids[0].len();
        if centroids.iter().any(|c| c.len() != d) {
            return Err(Error::validation("centroids differ in dimension"));
        }
        Ok(CentroidSet { labels, centroids })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn centroids(&self) -> &[Vec<f64>] {
        &self.centroids
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.centroids[0].len()
    }
}

/// Per-label arithmetic means, labels ordered by descending frequency.
pub fn class_centroids<R, S>(vectors: &[R], labels: &[S]) -> Result<CentroidSet>
where
    R: FeatureRow,
    S: AsRef<str>,
{
    if vectors.is_empty() {
        return Err(Error::validation("cannot compute centroids of no vectors"));
    }
    if vectors.len() != labels.len() {
        return Err(Error::validation(format!(
            "{} vectors but {} labels",
            vectors.len(),
            labels.len()
        )));
    }
    let dim = vectors[0].dim();
    if vectors.iter().any(|v| v.dim() != dim) {
        return Err(Error::validation("vectors differ in dimension"));
    }
    let vocab = label_counts(labels.iter().map(AsRef::as_ref));
    let slot: HashMap<&str, usize> = vocab
        .iter()
        .enumerate()
        .map(|(i, (l, _))| (l.as_str(), i))
        .collect();
    let mut sums = vec![vec![0.0; dim]; vocab.len()];
    for (v, l) in vectors.iter().zip(labels) {
        v.add_scaled_to(1.0, &mut sums[slot[l.as_ref()]]);
    }
    for (sum, (_, n)) in sums.iter_mut().zip(&vocab) {
        let inv = 1.0 / *n as f64;
        sum.iter_mut().for_each(|x| *x *= inv);
    }
    CentroidSet::new(vocab.into_iter().map(|(l, _)| l).collect(), sums)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    labels: Vec<String>,
    d: Mat,
}

impl DistanceMatrix {
    pub fn new(labels: Vec<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let n = labels.len();
        if rows.len() != n || rows.iter().any(|r| r.len() != n) {
            return Err(Error::validation("distance matrix must be C×C"));
        }
        let d = Mat::from_rows(rows);
        for i in 0..n {
            if d[(i, i)] != 0.0 {
                return Err(Error::validation("distance matrix diagonal must be zero"));
            }
            for j in 0..n {
                let v = d[(i, j)];
                if !(v >= 0.0) || !v.is_finite() {
                    return Err(Error::validation("distances must be finite and non-negative"));
                }
                if v != d[(j, i)] {
                    return Err(Error::validation("distance matrix must be symmetric"));
                }
            }
        }
        Ok(DistanceMatrix { labels, d })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[(i, j)]
    }
}

pub fn pairwise_distances(cs: &CentroidSet) -> DistanceMatrix {
    let n = cs.len();
    let mut d = Mat::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = linalg::euclidean(&cs.centroids[i], &cs.centroids[j]);
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    DistanceMatrix {
        labels: cs.labels.clone(),
        d,
    }
}

/// Label coordinates on the manifold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EmbeddingFile", into = "EmbeddingFile")]
pub struct ManifoldEmbedding {
    labels: Vec<String>,
    mu: Vec<Vec<f64>>,
    eigenvalues: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct EmbeddingFile {
    version: u32,
    l: usize,
    labels: Vec<String>,
    eigenvalues: Vec<f64>,
    mu: Vec<Vec<f64>>,
}

impl TryFrom<EmbeddingFile> for ManifoldEmbedding {
    type Error = Error;

    fn try_from(f: EmbeddingFile) -> Result<Self> {
        if f.version != EMBEDDING_VERSION {
            return Err(Error::validation(format!(
                "unsupported embedding version {}",
                f.version
            )));
        }
        if f.eigenvalues.len() != f.l {
            return Err(Error::validation("embedding eigenvalue count differs from l"));
        }
        ManifoldEmbedding::new(f.labels, f.mu, f.eigenvalues)
    }
}

impl From<ManifoldEmbedding> for EmbeddingFile {
    fn from(e: ManifoldEmbedding) -> Self {
        EmbeddingFile {
            version: EMBEDDING_VERSION,
            l: e.eigenvalues.len(),
            labels: e.labels,
            eigenvalues: e.eigenvalues,
            mu: e.mu,
        }
    }
}

impl ManifoldEmbedding {
    /// Builds an embedding from explicit coordinates. Eigenvalues may be
    /// empty only if every coordinate vector is too; otherwise their count
    /// fixes `l`.
    pub fn new(labels: Vec<String>, mu: Vec<Vec<f64>>, eigenvalues: Vec<f64>) -> Result<Self> {
        if labels.len() != mu.len() {
            return Err(Error::validation("labels and coordinates differ in length"));
        }
        let l = eigenvalues.len();
        if mu.iter().any(|m| m.len() != l) {
            return Err(Error::validation("coordinate vectors must have length l"));
        }
        Ok(ManifoldEmbedding {
            labels,
            mu,
            eigenvalues,
        })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Coordinates, one row per label.
    pub fn mu(&self) -> &[Vec<f64>] {
        &self.mu
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Manifold dimension.
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn position(&self, label: &str) -> Option<&[f64]> {
        self.labels
            .iter()
            .position(|l| l == label)
            .map(|i| self.mu[i].as_slice())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingMethod {
    #[default]
    Mds,
    KernelPca,
}

impl std::str::FromStr for EmbeddingMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mds" => Ok(EmbeddingMethod::Mds),
            "kpca" | "kernel_pca" => Ok(EmbeddingMethod::KernelPca),
            other => Err(Error::validation(format!("unknown embedding method {other:?}"))),
        }
    }
}

pub fn embed_labels(cs: &CentroidSet, l: usize, method: EmbeddingMethod) -> Result<ManifoldEmbedding> {
    match method {
        EmbeddingMethod::Mds => classical_mds(&pairwise_distances(cs), l),
        EmbeddingMethod::KernelPca => kernel_pca_linear(cs, l),
    }
}

/// Default manifold dimension for `c` labels.
pub fn default_dim(c: usize) -> usize {
    10.min(c.saturating_sub(1)).max(1)
}

fn check_dim(c: usize, l: usize) -> Result<()> {
    if c < 2 {
        return Err(Error::validation("embedding needs at least two labels"));
    }
    if l == 0 || l > c - 1 {
        return Err(Error::validation(format!(
            "manifold dimension must lie in 1..={}, got {l}",
            c - 1
        )));
    }
    Ok(())
}

/// `J A J` with `J = I − 11ᵀ/n`.
fn double_center(a: &Mat) -> Mat {
    let n = a.rows();
    let row_means: Vec<f64> = (0..n).map(|i| a.row(i).iter().sum::<f64>() / n as f64).collect();
    let col_means: Vec<f64> = (0..n)
        .map(|j| (0..n).map(|i| a[(i, j)]).sum::<f64>() / n as f64)
        .collect();
    let grand = row_means.iter().sum::<f64>() / n as f64;
    let mut out = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            out[(i, j)] = a[(i, j)] - row_means[i] - col_means[j] + grand;
        }
    }
    // exact symmetry so the eigensolver sees the same matrix from either side
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (out[(i, j)] + out[(j, i)]);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

/// The classical-MDS inner-product matrix `B = −½ J D⁽²⁾ J`.
pub fn mds_inner_products(d: &DistanceMatrix) -> Mat {
    let n = d.len();
    let mut sq = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            sq[(i, j)] = -0.5 * d.d[(i, j)] * d.d[(i, j)];
        }
    }
    double_center(&sq)
}

fn coordinates_from(b: &Mat, labels: Vec<String>, l: usize) -> ManifoldEmbedding {
    let n = b.rows();
    let eig = linalg::symmetric_eigen(b);
    let scale = eig.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = EIGEN_NOISE_RATIO * scale;

    let mut mu = vec![vec![0.0; l]; n];
    let mut eigenvalues = Vec::with_capacity(l);
    for k in 0..l {
        let lambda = if eig.values[k] > floor { eig.values[k] } else { 0.0 };
        eigenvalues.push(lambda);
        if lambda == 0.0 {
            continue;
        }
        let mut v = eig.vectors.column(k);
        // near-ties go to the earliest label so both embedding routes agree
        let largest = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let pivot = v
            .iter()
            .position(|x| x.abs() >= largest * (1.0 - 1e-9))
            .unwrap_or(0);
        if v[pivot] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        let s = lambda.sqrt();
        for (row, vi) in mu.iter_mut().zip(&v) {
            row[k] = vi * s;
        }
    }
    ManifoldEmbedding {
        labels,
        mu,
        eigenvalues,
    }
}

/// Classical (Torgerson) MDS into `l` dimensions.
pub fn classical_mds(d: &DistanceMatrix, l: usize) -> Result<ManifoldEmbedding> {
    check_dim(d.len(), l)?;
    let b = mds_inner_products(d);
    Ok(coordinates_from(&b, d.labels.clone(), l))
}

/// Kernel PCA with the linear kernel on the centroids themselves.
pub fn kernel_pca_linear(cs: &CentroidSet, l: usize) -> Result<ManifoldEmbedding> {
    check_dim(cs.len(), l)?;
    let n = cs.len();
    let mut gram = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = linalg::dot(&cs.centroids[i], &cs.centroids[j]);
            gram[(i, j)] = v;
            gram[(j, i)] = v;
        }
    }
    let centered = double_center(&gram);
    Ok(coordinates_from(&centered, cs.labels.clone(), l))
}
