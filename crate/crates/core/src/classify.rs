//! Classifiers from coordinates to labels: Gaussian discriminant analysis
//! (shared or per-class covariance, each full, diagonal or spherical) and
//! multinomial logistic regression.
//!
//! Both work on any [`FeatureRow`], so the same code runs on manifold
//! coordinates and on raw bag-of-words vectors. Ties in predicted scores
//! resolve to the earliest label, and labels are ordered by descending
//! training frequency with lexicographic ties.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::label_counts;
use crate::error::{Error, Result};
use crate::features::FeatureRow;
use crate::linalg::{Cholesky, Mat};

pub const CLASSIFIER_VERSION: u32 = 1;

/// Above this dimension diagonal/spherical scores are evaluated through a
/// sparse-friendly expansion instead of the direct sum over coordinates.
const EXPANDED_SCORE_DIM: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiscriminantKind {
    Lda,
    Qda,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovarianceType {
    Full,
    Diagonal,
    Spherical,
}

impl DiscriminantKind {
    pub fn name(self) -> &'static str {
        match self {
            DiscriminantKind::Lda => "LDA",
            DiscriminantKind::Qda => "QDA",
        }
    }
}

impl CovarianceType {
    pub const ALL: [CovarianceType; 3] = [
        CovarianceType::Full,
        CovarianceType::Diagonal,
        CovarianceType::Spherical,
    ];

    pub fn short_name(self) -> &'static str {
        match self {
            CovarianceType::Full => "full",
            CovarianceType::Diagonal => "diag.",
            CovarianceType::Spherical => "spher.",
        }
    }
}

/// A fitted covariance matrix in one of the three shapes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Covariance {
    Full(Vec<Vec<f64>>),
    Diagonal(Vec<f64>),
    Spherical { dim: usize, variance: f64 },
}

impl Covariance {
    pub fn dim(&self) -> usize {
        match self {
            Covariance::Full(m) => m.len(),
            Covariance::Diagonal(v) => v.len(),
            Covariance::Spherical { dim, .. } => *dim,
        }
    }

    /// Dense p×p form.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        match self {
            Covariance::Full(m) => m.clone(),
            Covariance::Diagonal(v) => (0..v.len())
                .map(|i| {
                    let mut row = vec![0.0; v.len()];
                    row[i] = v[i];
                    row
                })
                .collect(),
            Covariance::Spherical { dim, variance } => (0..*dim)
                .map(|i| {
                    let mut row = vec![0.0; *dim];
                    row[i] = *variance;
                    row
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone)]
enum Precision {
    Full { chol: Cholesky, log_det: f64 },
    // inverse variances, log det, Σ μ²/v for the expanded form
    Diagonal { inv: Vec<f64>, log_det: f64, mean_term: f64 },
}

impl Precision {
    fn log_det(&self) -> f64 {
        match self {
            Precision::Full { log_det, .. } | Precision::Diagonal { log_det, .. } => *log_det,
        }
    }
}

fn prepare(cov: &Covariance, mean: &[f64], what: &str) -> Result<Precision> {
    let diag = |v: Vec<f64>| -> Result<Precision> {
        if let Some(j) = v.iter().position(|x| !(*x > 0.0) || !x.is_finite()) {
            return Err(Error::SingularCovariance(format!(
                "{what}: variance of coordinate {j} is {}",
                v[j]
            )));
        }
        let inv: Vec<f64> = v.iter().map(|x| 1.0 / x).collect();
        let log_det = v.iter().map(|x| x.ln()).sum();
        let mean_term = mean.iter().zip(&inv).map(|(m, i)| m * m * i).sum();
        Ok(Precision::Diagonal {
            inv,
            log_det,
            mean_term,
        })
    };
    match cov {
        Covariance::Full(rows) => {
            let m = Mat::from_rows(rows);
            let chol = Cholesky::new(&m).map_err(|e| {
                Error::SingularCovariance(format!(
                    "{what}: Cholesky pivot {} is {:.3e}",
                    e.pivot_index, e.pivot
                ))
            })?;
            let log_det = chol.log_det();
            Ok(Precision::Full { chol, log_det })
        }
        Covariance::Diagonal(v) => diag(v.clone()),
        Covariance::Spherical { dim, variance } => diag(vec![*variance; *dim]),
    }
}

/// Gaussian class-conditional model with class priors.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "GaussianFile", into = "GaussianFile")]
pub struct GaussianClassifier {
    labels: Vec<String>,
    means: Vec<Vec<f64>>,
    kind: DiscriminantKind,
    cov_type: CovarianceType,
    /// One entry for LDA, one per class for QDA.
    covariances: Vec<Covariance>,
    priors: Vec<f64>,
    reg_epsilon: f64,
    precisions: Vec<Precision>,
}

#[derive(Serialize, Deserialize)]
struct GaussianFile {
    version: u32,
    kind: DiscriminantKind,
    covariance: CovarianceType,
    dim: usize,
    reg_epsilon: f64,
    labels: Vec<String>,
    priors: Vec<f64>,
    means: Vec<Vec<f64>>,
    covariances: Vec<Covariance>,
}

impl TryFrom<GaussianFile> for GaussianClassifier {
    type Error = Error;

    fn try_from(f: GaussianFile) -> Result<Self> {
        if f.version != CLASSIFIER_VERSION {
            return Err(Error::validation(format!(
                "unsupported classifier version {}",
                f.version
            )));
        }
        let c = f.labels.len();
        let n_cov = match f.kind {
            DiscriminantKind::Lda => 1,
            DiscriminantKind::Qda => c,
        };
        if f.priors.len() != c
            || f.means.len() != c
            || f.means.iter().any(|m| m.len() != f.dim)
            || f.covariances.len() != n_cov
            || f.covariances.iter().any(|s| s.dim() != f.dim)
        {
            return Err(Error::validation("Gaussian classifier shapes are inconsistent"));
        }
        GaussianClassifier::assemble(
            f.labels,
            f.means,
            f.kind,
            f.covariance,
            f.covariances,
            f.priors,
            f.reg_epsilon,
        )
    }
}

impl From<GaussianClassifier> for GaussianFile {
    fn from(m: GaussianClassifier) -> Self {
        GaussianFile {
            version: CLASSIFIER_VERSION,
            kind: m.kind,
            covariance: m.cov_type,
            dim: m.dim(),
            reg_epsilon: m.reg_epsilon,
            labels: m.labels,
            priors: m.priors,
            means: m.means,
            covariances: m.covariances,
        }
    }
}

impl PartialEq for GaussianClassifier {
    fn eq(&self, other: &Self) -> bool {
        self.labels == other.labels
            && self.means == other.means
            && self.kind == other.kind
            && self.cov_type == other.cov_type
            && self.covariances == other.covariances
            && self.priors == other.priors
            && self.reg_epsilon == other.reg_epsilon
    }
}

impl GaussianClassifier {
    fn assemble(
        labels: Vec<String>,
        means: Vec<Vec<f64>>,
        kind: DiscriminantKind,
        cov_type: CovarianceType,
        covariances: Vec<Covariance>,
        priors: Vec<f64>,
        reg_epsilon: f64,
    ) -> Result<Self> {
        let precisions = covariances
            .iter()
            .enumerate()
            .map(|(i, cov)| {
                let (mean, what) = match kind {
                    DiscriminantKind::Lda => (&means[0], "pooled covariance".to_string()),
                    DiscriminantKind::Qda => (&means[i], format!("covariance of class {:?}", labels[i])),
                };
                prepare(cov, mean, &what)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut model = GaussianClassifier {
            labels,
            means,
            kind,
            cov_type,
            covariances,
            priors,
            reg_epsilon,
            precisions,
        };
        // LDA shares one matrix, but the expanded diagonal score needs a
        // mean term per class.
        if kind == DiscriminantKind::Lda {
            if let Precision::Diagonal { inv, log_det, .. } = &model.precisions[0] {
                let (inv, log_det) = (inv.clone(), *log_det);
                model.precisions = model
                    .means
                    .iter()
                    .map(|m| Precision::Diagonal {
                        mean_term: m.iter().zip(&inv).map(|(a, i)| a * a * i).sum(),
                        inv: inv.clone(),
                        log_det,
                    })
                    .collect();
            }
        }
        Ok(model)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    pub fn priors(&self) -> &[f64] {
        &self.priors
    }

    pub fn kind(&self) -> DiscriminantKind {
        self.kind
    }

    pub fn covariance_type(&self) -> CovarianceType {
        self.cov_type
    }

    pub fn reg_epsilon(&self) -> f64 {
        self.reg_epsilon
    }

    /// Covariance used for class `c`.
    pub fn covariance(&self, c: usize) -> &Covariance {
        match self.kind {
            DiscriminantKind::Lda => &self.covariances[0],
            DiscriminantKind::Qda => &self.covariances[c],
        }
    }

    pub fn dim(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    fn precision(&self, c: usize) -> &Precision {
        if self.precisions.len() == 1 {
            &self.precisions[0]
        } else {
            &self.precisions[c]
        }
    }

    /// `log p(y) − ½ log|Σ_y| − ½ (z−μ_y)ᵀ Σ_y⁻¹ (z−μ_y)` for every class.
    pub fn log_posteriors<R: FeatureRow + ?Sized>(&self, z: &R) -> Result<Vec<f64>> {
        if z.dim() != self.dim() {
            return Err(Error::validation(format!(
                "input has dimension {}, classifier expects {}",
                z.dim(),
                self.dim()
            )));
        }
        let p = self.dim();
        let mut dense: Option<Vec<f64>> = None;
        let mut scores = Vec::with_capacity(self.labels.len());
        for c in 0..self.labels.len() {
            let mean = &self.means[c];
            let prec = self.precision(c);
            let maha = match prec {
                Precision::Full { chol, .. } => {
                    let x = dense.get_or_insert_with(|| z.to_dense());
                    let diff: Vec<f64> = x.iter().zip(mean).map(|(a, b)| a - b).collect();
                    let y = chol.forward_solve(&diff);
                    y.iter().map(|v| v * v).sum::<f64>()
                }
                Precision::Diagonal { inv, mean_term, .. } if p > EXPANDED_SCORE_DIM => {
                    let mut s = *mean_term;
                    z.for_each_entry(|j, v| {
                        if v != 0.0 {
                            s += inv[j] * v * (v - 2.0 * mean[j]);
                        }
                    });
                    s
                }
                Precision::Diagonal { inv, .. } => {
                    let x = dense.get_or_insert_with(|| z.to_dense());
                    x.iter()
                        .zip(mean)
                        .zip(inv)
                        .map(|((a, m), i)| (a - m) * (a - m) * i)
                        .sum::<f64>()
                }
            };
            scores.push(self.priors[c].ln() - 0.5 * prec.log_det() - 0.5 * maha);
        }
        Ok(scores)
    }

    /// Most probable label and the per-class scores.
    pub fn predict<R: FeatureRow + ?Sized>(&self, z: &R) -> Result<(&str, Vec<f64>)> {
        let scores = self.log_posteriors(z)?;
        let best = argmax(&scores);
        Ok((self.labels[best].as_str(), scores))
    }

    pub fn predict_index<R: FeatureRow + ?Sized>(&self, z: &R) -> Result<usize> {
        Ok(argmax(&self.log_posteriors(z)?))
    }
}

/// First index of the maximum.
pub fn argmax(xs: &[f64]) -> usize {
    xs.iter()
        .enumerate()
        .fold(0, |best, (i, &v)| if v > xs[best] { i } else { best })
}

fn group_by_label<S: AsRef<str>>(y: &[S]) -> (Vec<String>, Vec<usize>, Vec<usize>) {
    let vocab = label_counts(y.iter().map(AsRef::as_ref));
    let slot: HashMap<&str, usize> = vocab
        .iter()
        .enumerate()
        .map(|(i, (l, _))| (l.as_str(), i))
        .collect();
    let idx = y.iter().map(|l| slot[l.as_ref()]).collect();
    let (labels, counts) = vocab.into_iter().unzip();
    (labels, counts, idx)
}

/// Fits class means, frequency priors and maximum-likelihood covariances
/// (scatter divided by n). `reg_epsilon` is added to every variance.
pub fn fit_gaussian<R: FeatureRow, S: AsRef<str>>(
    zs: &[R],
    y: &[S],
    kind: DiscriminantKind,
    cov_type: CovarianceType,
    reg_epsilon: f64,
) -> Result<GaussianClassifier> {
    if zs.len() != y.len() {
        return Err(Error::validation(format!("{} inputs but {} labels", zs.len(), y.len())));
    }
    if zs.is_empty() {
        return Err(Error::validation("cannot fit a classifier to no data"));
    }
    if !(reg_epsilon >= 0.0) || !reg_epsilon.is_finite() {
        return Err(Error::validation("reg_epsilon must be finite and non-negative"));
    }
    let p = zs[0].dim();
    if zs.iter().any(|z| z.dim() != p) {
        return Err(Error::validation("inputs differ in dimension"));
    }
    let (labels, counts, idx) = group_by_label(y);
    if let Some(c) = counts.iter().position(|&n| n < 2) {
        return Err(Error::validation(format!(
            "class {:?} has fewer than 2 samples",
            labels[c]
        )));
    }
    let n = zs.len();
    let n_classes = labels.len();

    if cov_type == CovarianceType::Full && reg_epsilon == 0.0 {
        match kind {
            DiscriminantKind::Qda => {
                if let Some(c) = counts.iter().position(|&m| m <= p) {
                    return Err(Error::SingularCovariance(format!(
                        "class {:?} has {} samples in {p} dimensions",
                        labels[c], counts[c]
                    )));
                }
            }
            DiscriminantKind::Lda => {
                if n <= p {
                    return Err(Error::SingularCovariance(format!(
                        "{n} samples in {p} dimensions"
                    )));
                }
            }
        }
    }

    let mut means = vec![vec![0.0; p]; n_classes];
    for (z, &c) in zs.iter().zip(&idx) {
        z.add_scaled_to(1.0, &mut means[c]);
    }
    for (m, &cnt) in means.iter_mut().zip(&counts) {
        m.iter_mut().for_each(|v| *v /= cnt as f64);
    }
    let priors: Vec<f64> = counts.iter().map(|&c| c as f64 / n as f64).collect();

    // Per-class scatter, either full or its diagonal.
    let scatters: Vec<Covariance> = match cov_type {
        CovarianceType::Full => {
            let mut s = vec![Mat::zeros(p, p); n_classes];
            for (z, &c) in zs.iter().zip(&idx) {
                let diff: Vec<f64> = z.to_dense().iter().zip(&means[c]).map(|(a, b)| a - b).collect();
                let sc = &mut s[c];
                for i in 0..p {
                    if diff[i] == 0.0 {
                        continue;
                    }
                    let row = sc.row_mut(i);
                    for j in 0..=i {
                        row[j] += diff[i] * diff[j];
                    }
                }
            }
            s.into_iter()
                .map(|m| {
                    Covariance::Full(
                        (0..p)
                            .map(|i| (0..p).map(|j| if j <= i { m[(i, j)] } else { m[(j, i)] }).collect())
                            .collect(),
                    )
                })
                .collect()
        }
        CovarianceType::Diagonal | CovarianceType::Spherical => {
            let mut s = vec![vec![0.0; p]; n_classes];
            // Σᵢ (xᵢⱼ−μⱼ)² = Σ over stored entries of [(x−μ)² − μ²] + n·μ²
            for (z, &c) in zs.iter().zip(&idx) {
                let (acc, m) = (&mut s[c], &means[c]);
                z.for_each_entry(|j, v| acc[j] += (v - m[j]) * (v - m[j]) - m[j] * m[j]);
            }
            for c in 0..n_classes {
                for j in 0..p {
                    s[c][j] += counts[c] as f64 * means[c][j] * means[c][j];
                    if s[c][j] < 0.0 {
                        s[c][j] = 0.0;
                    }
                }
            }
            s.into_iter().map(Covariance::Diagonal).collect()
        }
    };

    let normalize = |cov: Covariance, denom: f64| -> Covariance {
        match cov {
            Covariance::Full(mut m) => {
                for (i, row) in m.iter_mut().enumerate() {
                    row.iter_mut().for_each(|v| *v /= denom);
                    row[i] += reg_epsilon;
                }
                Covariance::Full(m)
            }
            Covariance::Diagonal(v) => {
                let v: Vec<f64> = v.iter().map(|x| x / denom).collect();
                if cov_type == CovarianceType::Spherical {
                    let variance = v.iter().sum::<f64>() / p as f64 + reg_epsilon;
                    Covariance::Spherical { dim: p, variance }
                } else {
                    Covariance::Diagonal(v.into_iter().map(|x| x + reg_epsilon).collect())
                }
            }
            Covariance::Spherical { .. } => unreachable!(),
        }
    };

    let covariances = match kind {
        DiscriminantKind::Qda => scatters
            .into_iter()
            .zip(&counts)
            .map(|(s, &cnt)| normalize(s, cnt as f64))
            .collect(),
        DiscriminantKind::Lda => {
            let pooled = scatters
                .into_iter()
                .reduce(|a, b| match (a, b) {
                    (Covariance::Full(mut a), Covariance::Full(b)) => {
                        for (ra, rb) in a.iter_mut().zip(&b) {
                            ra.iter_mut().zip(rb).for_each(|(x, y)| *x += y);
                        }
                        Covariance::Full(a)
                    }
                    (Covariance::Diagonal(mut a), Covariance::Diagonal(b)) => {
                        a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
                        Covariance::Diagonal(a)
                    }
                    _ => unreachable!(),
                })
                .expect("at least one class");
            vec![normalize(pooled, n as f64)]
        }
    };

    GaussianClassifier::assemble(labels, means, kind, cov_type, covariances, priors, reg_epsilon)
}

// ---------------------------------------------------------------------------
// Multinomial logistic regression
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LogisticFile", into = "LogisticFile")]
pub struct LogisticModel {
    labels: Vec<String>,
    /// C×p
    weights: Mat,
    bias: Vec<f64>,
    l2: f64,
}

#[derive(Serialize, Deserialize)]
struct LogisticFile {
    version: u32,
    n_classes: usize,
    dim: usize,
    l2: f64,
    labels: Vec<String>,
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

impl TryFrom<LogisticFile> for LogisticModel {
    type Error = Error;

    fn try_from(f: LogisticFile) -> Result<Self> {
        if f.version != CLASSIFIER_VERSION {
            return Err(Error::validation(format!(
                "unsupported classifier version {}",
                f.version
            )));
        }
        if f.labels.len() != f.n_classes
            || f.weights.len() != f.n_classes
            || f.weights.iter().any(|w| w.len() != f.dim)
            || f.bias.len() != f.n_classes
        {
            return Err(Error::validation("logistic model shapes are inconsistent"));
        }
        let weights = if f.dim == 0 {
            Mat::zeros(f.n_classes, 0)
        } else {
            Mat::from_rows(&f.weights)
        };
        LogisticModel::new(f.labels, weights, f.bias, f.l2)
    }
}

impl From<LogisticModel> for LogisticFile {
    fn from(m: LogisticModel) -> Self {
        LogisticFile {
            version: CLASSIFIER_VERSION,
            n_classes: m.labels.len(),
            dim: m.weights.cols(),
            l2: m.l2,
            weights: (0..m.weights.rows()).map(|i| m.weights.row(i).to_vec()).collect(),
            labels: m.labels,
            bias: m.bias,
        }
    }
}

impl LogisticModel {
    pub fn new(labels: Vec<String>, weights: Mat, bias: Vec<f64>, l2: f64) -> Result<Self> {
        if weights.rows() != labels.len() || bias.len() != labels.len() {
            return Err(Error::validation("logistic weights, bias and labels disagree in length"));
        }
        if !(l2 >= 0.0) {
            return Err(Error::validation("l2 must be non-negative"));
        }
        Ok(LogisticModel {
            labels,
            weights,
            bias,
            l2,
        })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn weights(&self) -> &Mat {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn l2(&self) -> f64 {
        self.l2
    }

    pub fn dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn logits<R: FeatureRow + ?Sized>(&self, x: &R) -> Result<Vec<f64>> {
        if x.dim() != self.dim() {
            return Err(Error::validation(format!(
                "input has dimension {}, model expects {}",
                x.dim(),
                self.dim()
            )));
        }
        Ok(logits(&self.weights, &self.bias, x))
    }

    /// Most probable label and the class probabilities.
    pub fn predict<R: FeatureRow + ?Sized>(&self, x: &R) -> Result<(&str, Vec<f64>)> {
        let probs = softmax(&self.logits(x)?);
        let best = argmax(&probs);
        Ok((self.labels[best].as_str(), probs))
    }

    pub fn predict_index<R: FeatureRow + ?Sized>(&self, x: &R) -> Result<usize> {
        Ok(argmax(&self.logits(x)?))
    }
}

fn logits<R: FeatureRow + ?Sized>(w: &Mat, b: &[f64], x: &R) -> Vec<f64> {
    let mut out = b.to_vec();
    let c = w.rows();
    x.for_each_entry(|j, v| {
        if v != 0.0 {
            for (k, o) in out.iter_mut().enumerate().take(c) {
                *o += w[(k, j)] * v;
            }
        }
    });
    out
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(logits);
    logits.iter().map(|x| (x - lse).exp()).collect()
}

/// Objective and gradient of the penalized multinomial likelihood.
#[derive(Debug, Clone)]
pub struct LogisticObjective {
    pub loss: f64,
    /// C×p
    pub grad_weights: Mat,
    pub grad_bias: Vec<f64>,
}

/// `Σᵢ [logsumexp(sᵢ) − sᵢ,yᵢ] + (l2/2)‖W‖²_F` with `sᵢ = W xᵢ + b`, and its
/// gradient. `y` holds class indices into the rows of `weights`.
pub fn logistic_objective<R: FeatureRow>(
    xs: &[R],
    y: &[usize],
    weights: &Mat,
    bias: &[f64],
    l2: f64,
) -> LogisticObjective {
    let c = weights.rows();
    let mut grad_weights = Mat::zeros(c, weights.cols());
    let mut grad_bias = vec![0.0; c];
    let mut loss = 0.0;
    for (x, &yi) in xs.iter().zip(y) {
        let s = logits(weights, bias, x);
        let lse = log_sum_exp(&s);
        loss += lse - s[yi];
        for k in 0..c {
            let g = (s[k] - lse).exp() - if k == yi { 1.0 } else { 0.0 };
            grad_bias[k] += g;
            if g != 0.0 {
                x.add_scaled_to(g, grad_weights.row_mut(k));
            }
        }
    }
    let sq: f64 = weights.as_slice().iter().map(|w| w * w).sum();
    loss += 0.5 * l2 * sq;
    if l2 != 0.0 {
        let gw = grad_weights.as_slice().to_vec();
        grad_weights = Mat::from_vec(
            c,
            weights.cols(),
            gw.iter().zip(weights.as_slice()).map(|(g, w)| g + l2 * w).collect(),
        );
    }
    LogisticObjective {
        loss,
        grad_weights,
        grad_bias,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticConfig {
    pub l2: f64,
    pub max_iter: usize,
    /// Convergence threshold on the gradient max-norm.
    pub tol: f64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        LogisticConfig {
            l2: 1.0,
            max_iter: 500,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LogisticFit {
    pub model: LogisticModel,
    /// Loss after each accepted step, starting with the initial loss.
    pub losses: Vec<f64>,
    pub converged: bool,
}

pub fn fit_logreg<R: FeatureRow, S: AsRef<str>>(xs: &[R], y: &[S], cfg: &LogisticConfig) -> Result<LogisticModel> {
    fit_logreg_traced(xs, y, cfg).map(|f| f.model)
}

/// Full-batch gradient descent from zero weights with a backtracking
/// (Armijo) step that doubles after every accepted iteration.
pub fn fit_logreg_traced<R: FeatureRow, S: AsRef<str>>(
    xs: &[R],
    y: &[S],
    cfg: &LogisticConfig,
) -> Result<LogisticFit> {
    if xs.len() != y.len() {
        return Err(Error::validation(format!("{} inputs but {} labels", xs.len(), y.len())));
    }
    if !(cfg.l2 >= 0.0) || !cfg.l2.is_finite() {
        return Err(Error::validation("l2 must be finite and non-negative"));
    }
    let (labels, _, idx) = group_by_label(y);
    if labels.len() < 2 {
        return Err(Error::validation("logistic regression needs at least two classes"));
    }
    let p = xs[0].dim();
    if xs.iter().any(|x| x.dim() != p) {
        return Err(Error::validation("inputs differ in dimension"));
    }
    let c = labels.len();

    let mut w = Mat::zeros(c, p);
    let mut b = vec![0.0; c];
    let mut obj = logistic_objective(xs, &idx, &w, &b, cfg.l2);
    let mut losses = vec![obj.loss];
    // softmax curvature is at most ½ per unit of ‖x‖² + 1
    let curvature: f64 = xs.iter().map(|x| 0.5 * (x.squared_norm() + 1.0)).sum::<f64>() + cfg.l2;
    let mut step = 1.0 / curvature.max(f64::MIN_POSITIVE);
    let mut converged = false;

    for _ in 0..cfg.max_iter {
        let gmax = obj
            .grad_weights
            .as_slice()
            .iter()
            .chain(&obj.grad_bias)
            .fold(0.0f64, |m, g| m.max(g.abs()));
        if gmax < cfg.tol {
            converged = true;
            break;
        }
        let gsq: f64 = obj
            .grad_weights
            .as_slice()
            .iter()
            .chain(&obj.grad_bias)
            .map(|g| g * g)
            .sum();
        let mut accepted = None;
        for _ in 0..60 {
            let w_try = Mat::from_vec(
                c,
                p,
                w.as_slice()
                    .iter()
                    .zip(obj.grad_weights.as_slice())
                    .map(|(a, g)| a - step * g)
                    .collect(),
            );
            let b_try: Vec<f64> = b.iter().zip(&obj.grad_bias).map(|(a, g)| a - step * g).collect();
            let trial = logistic_objective(xs, &idx, &w_try, &b_try, cfg.l2);
            if !trial.loss.is_finite() {
                return Err(Error::Numerical("logistic loss became non-finite".into()));
            }
            if trial.loss <= obj.loss - 1e-4 * step * gsq {
                accepted = Some((w_try, b_try, trial));
                break;
            }
            step *= 0.5;
        }
        let Some((w_new, b_new, trial)) = accepted else {
            // no descent possible at machine precision
            converged = true;
            break;
        };
        w = w_new;
        b = b_new;
        obj = trial;
        losses.push(obj.loss);
        step *= 2.0;
    }

    Ok(LogisticFit {
        model: LogisticModel::new(labels, w, b, cfg.l2)?,
        losses,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_d(values: &[f64]) -> Vec<Vec<f64>> {
        values.iter().map(|&v| vec![v]).collect()
    }

    #[test]
    fn lda_one_dimensional_hand_example() {
        let zs = one_d(&[-1.0, 1.0, 3.0, 5.0]);
        let y = ["a", "a", "b", "b"];
        let m = fit_gaussian(&zs, &y, DiscriminantKind::Lda, CovarianceType::Full, 0.0).unwrap();
        assert_eq!(m.means(), &[vec![0.0], vec![4.0]]);
        assert_eq!(m.priors(), &[0.5, 0.5]);
        assert_eq!(m.covariance(0), &Covariance::Full(vec![vec![1.0]]));
    }

    #[test]
    fn spherical_variance_is_mean_of_diagonal() {
        // per-dimension ML variances 2 and 4 within one class
        let s2 = 2f64.sqrt();
        let zs = vec![vec![-s2, -2.0], vec![s2, 2.0], vec![-s2, 2.0], vec![s2, -2.0]];
        let y = ["a"; 4];
        let zs2: Vec<Vec<f64>> = zs.iter().chain(zs.iter()).cloned().collect();
        let y2: Vec<&str> = y.iter().copied().chain(["b"; 4]).collect();
        let m = fit_gaussian(&zs2, &y2, DiscriminantKind::Qda, CovarianceType::Spherical, 0.0).unwrap();
        match m.covariance(0) {
            Covariance::Spherical { variance, dim } => {
                assert_eq!(*dim, 2);
                assert!((variance - 3.0).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn full_covariance_needs_more_samples_than_dimensions() {
        let p = 1000;
        let mut zs = Vec::new();
        let mut y = Vec::new();
        for c in 0..2 {
            for i in 0..10 {
                let mut v = vec![0.0; p];
                v[(i * 7 + c) % p] = 1.0 + i as f64;
                zs.push(v);
                y.push(if c == 0 { "a" } else { "b" });
            }
        }
        for kind in [DiscriminantKind::Lda, DiscriminantKind::Qda] {
            let r = fit_gaussian(&zs, &y, kind, CovarianceType::Full, 0.0);
            assert!(matches!(r, Err(Error::SingularCovariance(_))), "{kind:?}");
        }
    }

    #[test]
    fn class_with_one_sample_rejected() {
        let zs = one_d(&[0.0, 1.0, 2.0]);
        let r = fit_gaussian(&zs, &["a", "a", "b"], DiscriminantKind::Lda, CovarianceType::Diagonal, 0.0);
        assert!(matches!(r, Err(Error::Validation(_))));
    }

    fn lda_1d(prior_a: f64) -> GaussianClassifier {
        GaussianClassifier::assemble(
            vec!["a".into(), "b".into()],
            vec![vec![0.0], vec![2.0]],
            DiscriminantKind::Lda,
            CovarianceType::Full,
            vec![Covariance::Full(vec![vec![1.0]])],
            vec![prior_a, 1.0 - prior_a],
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn midpoint_boundary() {
        let m = lda_1d(0.5);
        assert_eq!(m.predict(&vec![0.9]).unwrap().0, "a");
        assert_eq!(m.predict(&vec![1.1]).unwrap().0, "b");
        // exactly on the boundary: tie goes to the first label
        assert_eq!(m.predict(&vec![1.0]).unwrap().0, "a");
        assert_eq!(m.predict(&vec![2.0]).unwrap().0, "b");
    }

    #[test]
    fn prior_shifts_boundary() {
        // boundary at 1 + ln(0.9/0.1)/2 ≈ 2.0986
        let m = lda_1d(0.9);
        assert_eq!(m.predict(&vec![2.05]).unwrap().0, "a");
        assert_eq!(m.predict(&vec![2.15]).unwrap().0, "b");
    }

    #[test]
    fn priors_are_exact_frequencies() {
        let zs = one_d(&[0.0, 0.1, 0.2, 1.0, 1.1, 2.0, 2.2]);
        let y = ["x", "x", "x", "y", "y", "z", "z"];
        let m = fit_gaussian(&zs, &y, DiscriminantKind::Qda, CovarianceType::Diagonal, 0.0).unwrap();
        assert_eq!(m.priors(), &[3.0 / 7.0, 2.0 / 7.0, 2.0 / 7.0]);
        assert!((m.priors().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn expanded_diagonal_score_matches_direct() {
        let p = EXPANDED_SCORE_DIM + 6;
        let mut seed = 1u64;
        let mut rnd = || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((seed >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let zs: Vec<Vec<f64>> = (0..40).map(|_| (0..p).map(|_| rnd()).collect()).collect();
        let y: Vec<&str> = (0..40).map(|i| ["a", "b", "c"][i % 3]).collect();
        let m = fit_gaussian(&zs, &y, DiscriminantKind::Qda, CovarianceType::Diagonal, 0.0).unwrap();
        let z: Vec<f64> = (0..p).map(|_| rnd()).collect();
        let fast = m.log_posteriors(&z).unwrap();
        for (c, score) in fast.iter().enumerate() {
            let Covariance::Diagonal(v) = m.covariance(c) else { panic!() };
            let direct = m.priors()[c].ln()
                - 0.5 * v.iter().map(|x| x.ln()).sum::<f64>()
                - 0.5 * z.iter().zip(&m.means()[c]).zip(v).map(|((a, b), s)| (a - b) * (a - b) / s).sum::<f64>();
            assert!((score - direct).abs() < 1e-9);
        }
    }

    #[test]
    fn gaussian_json_round_trip() {
        let zs = vec![vec![0.0, 1.0], vec![1.0, 0.5], vec![0.2, 0.1], vec![3.0, 3.0], vec![4.0, 3.5], vec![3.3, 4.1]];
        let y = ["a", "a", "a", "b", "b", "b"];
        let m = fit_gaussian(&zs, &y, DiscriminantKind::Qda, CovarianceType::Full, 1e-6).unwrap();
        let json = serde_json::to_string(&m).unwrap();
        let back: GaussianClassifier = serde_json::from_str(&json).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.log_posteriors(&vec![1.0, 1.0]).unwrap(), m.log_posteriors(&vec![1.0, 1.0]).unwrap());
    }

    #[test]
    fn separable_pair() {
        let xs = one_d(&[-1.0, 1.0]);
        let m = fit_logreg(&xs, &["a", "b"], &LogisticConfig { l2: 0.01, ..Default::default() }).unwrap();
        assert_eq!(m.predict(&vec![-1.0]).unwrap().0, "a");
        assert_eq!(m.predict(&vec![1.0]).unwrap().0, "b");
    }

    #[test]
    fn zero_model_is_uniform() {
        let m = LogisticModel::new(vec!["a".into(), "b".into(), "c".into()], Mat::zeros(3, 2), vec![0.0; 3], 0.0).unwrap();
        let (label, p) = m.predict(&vec![0.3, -2.0]).unwrap();
        assert_eq!(label, "a");
        for v in p {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn bias_only_probability() {
        let m = LogisticModel::new(vec!["a".into(), "b".into()], Mat::zeros(2, 1), vec![10.0, 0.0], 0.0).unwrap();
        let (label, p) = m.predict(&vec![5.0]).unwrap();
        assert_eq!(label, "a");
        assert!((p[0] - 1.0 / (1.0 + (-10f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn softmax_shift_invariance_and_overflow() {
        let a = softmax(&[1.0, 2.0, 3.0]);
        let b = softmax(&[1001.0, 1002.0, 1003.0]);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!((b.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn stronger_l2_gives_smaller_weights() {
        let xs: Vec<Vec<f64>> = (0..20).map(|i| vec![(i as f64 - 10.0) / 5.0, ((i * 7) % 5) as f64 / 5.0]).collect();
        let y: Vec<&str> = (0..20).map(|i| if i < 10 { "lo" } else { "hi" }).collect();
        let fro = |l2: f64| {
            let m = fit_logreg(&xs, &y, &LogisticConfig { l2, max_iter: 2000, tol: 1e-8 }).unwrap();
            crate::linalg::norm2(m.weights().as_slice())
        };
        assert!(fro(10.0) <= fro(0.01));
    }
}
