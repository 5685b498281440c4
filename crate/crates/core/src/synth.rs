//! Synthetic corpora drawn from the latent linear model
//! `y ~ priors`, `z ~ N(mu_y, σ²I)`, `x = A·z + ε`.
//!
//! Because the true `z` of every record is known, these corpora let the
//! recovery of class positions and projected coordinates be checked
//! directly.

use nalgebra::DMatrix;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::corpus::{NumericCorpus, NumericRecord};
use crate::error::{Error, Result};

/// Candidate configurations tried when the means cannot form a simplex.
const SPHERE_CANDIDATES: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_classes: usize,
    pub l: usize,
    pub d: usize,
    pub priors: Vec<f64>,
    /// Class means, `n_classes × l`.
    pub mu: Vec<Vec<f64>>,
    pub sigma: f64,
    /// Mixing matrix `A`, `d × l`, stored by rows.
    pub loading: Vec<Vec<f64>>,
    pub noise_std: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let (c, l, d) = (self.n_classes, self.l, self.d);
        if c == 0 || l == 0 || d == 0 {
            return Err(Error::validation("class count and dimensions must be positive"));
        }
        if l > d {
            return Err(Error::validation(format!(
                "manifold dimension {l} exceeds feature dimension {d}"
            )));
        }
        if self.priors.len() != c {
            return Err(Error::validation("need one prior per class"));
        }
        if self.priors.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::validation("priors must be finite and non-negative"));
        }
        let total: f64 = self.priors.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::validation(format!("priors sum to {total}, not 1")));
        }
        if self.mu.len() != c || self.mu.iter().any(|m| m.len() != l) {
            return Err(Error::validation("mu must be n_classes × l"));
        }
        if self.mu.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::validation("mu must be finite"));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::validation("sigma must be positive"));
        }
        if !(self.noise_std > 0.0 && self.noise_std.is_finite()) {
            return Err(Error::validation("noise_std must be positive"));
        }
        if self.loading.len() != d || self.loading.iter().any(|r| r.len() != l) {
            return Err(Error::validation("loading must be d × l"));
        }
        let a = DMatrix::from_fn(d, l, |i, j| self.loading[i][j]);
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("loading must be finite"));
        }
        let sv = a.singular_values();
        let max = sv.max();
        if !(max > 0.0) || sv.min() <= max * 1e-10 * (d.max(l) as f64) {
            return Err(Error::validation("loading must have full column rank"));
        }
        Ok(())
    }

    pub fn label(&self, class: usize) -> String {
        class_label(class, self.n_classes)
    }
}

/// `class00`, `class01`, …; wide enough that names sort like indices.
pub fn class_label(class: usize, n_classes: usize) -> String {
    let width = n_classes.saturating_sub(1).to_string().len().max(2);
    format!("class{class:0width$}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSample {
    pub vectors: Vec<Vec<f64>>,
    pub z_true: Vec<Vec<f64>>,
    pub labels: Vec<String>,
}

impl SynthSample {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Records with ids `r00000`, `r00001`, ….
    pub fn to_corpus(&self) -> Result<NumericCorpus> {
        let width = self.len().saturating_sub(1).to_string().len().max(5);
        let records = self
            .vectors
            .iter()
            .zip(&self.labels)
            .enumerate()
            .map(|(i, (x, y))| NumericRecord {
                id: format!("r{i:0width$}"),
                label: y.clone(),
                x: x.clone(),
            })
            .collect();
        NumericCorpus::new(records)
    }
}

fn gaussian(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn sample(spec: &SynthSpec, n: usize) -> Result<SynthSample> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::validation("sample size must be at least 1"));
    }
    let classes = WeightedIndex::new(&spec.priors).map_err(|e| Error::validation(format!("priors: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    // Keep the sampling stream apart from the one `well_separated_spec` uses.
    rng.set_stream(1);

    let names: Vec<String> = (0..spec.n_classes).map(|c| spec.label(c)).collect();
    let mut out = SynthSample {
        vectors: Vec::with_capacity(n),
        z_true: Vec::with_capacity(n),
        labels: Vec::with_capacity(n),
    };
    for _ in 0..n {
        let y = classes.sample(&mut rng);
        let z: Vec<f64> = spec.mu[y]
            .iter()
            .map(|m| m + spec.sigma * gaussian(&mut rng))
            .collect();
        let x: Vec<f64> = spec
            .loading
            .iter()
            .map(|row| {
                let signal: f64 = row.iter().zip(&z).map(|(a, z)| a * z).sum();
                signal + spec.noise_std * gaussian(&mut rng)
            })
            .collect();
        out.vectors.push(x);
        out.z_true.push(z);
        out.labels.push(names[y].clone());
    }
    Ok(out)
}

fn random_orthonormal(rows: usize, cols: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(rows, cols, |_, _| gaussian(rng));
    let qr = g.qr();
    let mut q = qr.q();
    // Fix the QR sign ambiguity so the result is Haar distributed.
    let r = qr.r();
    for j in 0..cols {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Rows of `points` minus their mean.
fn center(points: &mut [Vec<f64>]) {
    let Some(first) = points.first() else { return };
    let mut mean = vec![0.0; first.len()];
    for p in points.iter() {
        mean.iter_mut().zip(p).for_each(|(m, v)| *m += v);
    }
    let n = points.len() as f64;
    for p in points.iter_mut() {
        p.iter_mut().zip(&mean).for_each(|(v, m)| *v -= m / n);
    }
}

fn min_pairwise_distance(points: &[Vec<f64>]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            best = best.min(crate::linalg::euclidean(&points[i], &points[j]));
        }
    }
    best
}

/// Unit-norm directions with large minimum separation: a regular simplex
/// when it fits in `l` dimensions, otherwise the best of several random
/// configurations on the sphere.
fn spread_directions(c: usize, l: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    if c == 1 {
        return vec![vec![0.0; l]];
    }
    if c <= l + 1 {
        // Simplex vertices e_i − 1/c live in a (c−1)-dimensional subspace of
        // ℝᶜ; express them in an orthonormal basis of it, then rotate randomly.
        let basis = random_orthonormal(c, c - 1, rng);
        let basis = {
            // Project the basis onto the sum-zero subspace and reorthonormalize.
            let mut b = basis;
            for j in 0..b.ncols() {
                let mean = b.column(j).mean();
                b.column_mut(j).add_scalar_mut(-mean);
            }
            b.qr().q()
        };
        let rot = random_orthonormal(l, l, rng);
        let scale = ((c - 1) as f64 / c as f64).sqrt();
        (0..c)
            .map(|i| {
                let mut v = vec![0.0; l];
                for k in 0..(c - 1) {
                    // ⟨e_i − 1/c, b_k⟩ = b_k[i] since b_k sums to zero.
                    let coord = basis[(i, k)] / scale;
                    for (r, vr) in v.iter_mut().enumerate() {
                        *vr += rot[(r, k)] * coord;
                    }
                }
                v
            })
            .collect()
    } else {
        let mut best: Option<(f64, Vec<Vec<f64>>)> = None;
        for _ in 0..SPHERE_CANDIDATES {
            let pts: Vec<Vec<f64>> = (0..c)
                .map(|_| {
                    let v: Vec<f64> = (0..l).map(|_| gaussian(rng)).collect();
                    let norm = crate::linalg::norm2(&v);
                    v.into_iter().map(|x| x / norm).collect()
                })
                .collect();
            let sep = min_pairwise_distance(&pts);
            if best.as_ref().is_none_or(|(b, _)| sep > *b) {
                best = Some((sep, pts));
            }
        }
        best.map(|(_, p)| p).unwrap_or_default()
    }
}

/// A spec with uniform priors, σ = 1 and noise 0.5 whose class means are
/// centered and scaled so the closest pair sits exactly `separation`
/// apart.
pub fn well_separated_spec(n_classes: usize, l: usize, d: usize, separation: f64, seed: u64) -> Result<SynthSpec> {
    if n_classes < 2 {
        return Err(Error::validation("need at least two classes"));
    }
    if !(separation >= 0.0 && separation.is_finite()) {
        return Err(Error::validation("separation must be finite and non-negative"));
    }
    if l == 0 || l > d {
        return Err(Error::validation(format!("need 1 ≤ l ≤ d, got l={l}, d={d}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mu = spread_directions(n_classes, l, &mut rng);
    center(&mut mu);
    let min = min_pairwise_distance(&mu);
    let factor = if min > 0.0 { separation / min } else { 0.0 };
    mu.iter_mut().flatten().for_each(|v| *v *= factor);

    let a = random_orthonormal(d, l, &mut rng);
    let loading = (0..d).map(|i| (0..l).map(|j| a[(i, j)]).collect()).collect();
    let spec = SynthSpec {
        n_classes,
        l,
        d,
        priors: vec![1.0 / n_classes as f64; n_classes],
        mu,
        sigma: 1.0,
        loading,
        noise_std: 0.5,
        seed,
    };
    spec.validate()?;
    Ok(spec)
}

/// Orthogonal `R` (l×l) minimizing ‖source·R − target‖_F; rows are points.
pub fn procrustes_rotation(source: &[Vec<f64>], target: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    if source.len() != target.len() || source.is_empty() {
        return Err(Error::validation("Procrustes needs two equal, non-empty point sets"));
    }
    let l = source[0].len();
    if source.iter().chain(target).any(|p| p.len() != l) {
        return Err(Error::validation("Procrustes points differ in dimension"));
    }
    let mut m = DMatrix::<f64>::zeros(l, l);
    for (s, t) in source.iter().zip(target) {
        for i in 0..l {
            for j in 0..l {
                m[(i, j)] += s[i] * t[j];
            }
        }
    }
    let svd = m.svd(true, true);
    let (Some(u), Some(v_t)) = (svd.u, svd.v_t) else {
        return Err(Error::Numerical("SVD did not converge".into()));
    };
    let r = u * v_t;
    Ok((0..l).map(|i| (0..l).map(|j| r[(i, j)]).collect()).collect())
}

/// Applies `x ↦ x·R` to each row.
pub fn rotate(points: &[Vec<f64>], r: &[Vec<f64>]) -> Vec<Vec<f64>> {
    points
        .iter()
        .map(|p| {
            (0..r.first().map_or(0, Vec::len))
                .map(|j| p.iter().zip(r).map(|(x, row)| x * row[j]).sum())
                .collect()
        })
        .collect()
}

/// `source` rotated onto `target`.
pub fn procrustes_align(source: &[Vec<f64>], target: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let r = procrustes_rotation(source, target)?;
    Ok(rotate(source, &r))
}
