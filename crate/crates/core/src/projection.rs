//! Linear projection of feature vectors onto the manifold.
//!
//! Each training document is regressed onto the manifold position of its
//! label, so the fit is an ordinary (optionally ridge-penalized) least
//! squares problem solved through the normal equations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureRow;
use crate::linalg::{self, Cholesky, Mat};
use crate::manifold::ManifoldEmbedding;

pub const PROJECTION_VERSION: u32 = 1;

/// Above this feature dimension the d×d normal matrix is never formed and
/// conjugate gradients are used instead.
pub const DENSE_SOLVE_LIMIT: usize = 4096;

const CG_TOLERANCE: f64 = 1e-10;

/// Ridge grid searched by [`select_lambda`].
pub const LAMBDA_GRID: [f64; 7] = [1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3];

pub const CV_FOLDS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ProjectionFile", into = "ProjectionFile")]
pub struct ProjectionModel {
    theta: Mat,
    intercept: Vec<f64>,
    fit_intercept: bool,
    lambda: f64,
    residual_cov_diag: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ProjectionFile {
    version: u32,
    lambda: f64,
    fit_intercept: bool,
    feature_dim: usize,
    manifold_dim: usize,
    intercept: Vec<f64>,
    theta: Vec<Vec<f64>>,
    residual_cov_diag: Vec<f64>,
}

impl TryFrom<ProjectionFile> for ProjectionModel {
    type Error = Error;

    fn try_from(f: ProjectionFile) -> Result<Self> {
        if f.version != PROJECTION_VERSION {
            return Err(Error::validation(format!(
                "unsupported projection version {}",
                f.version
            )));
        }
        if f.theta.len() != f.feature_dim
            || f.theta.iter().any(|r| r.len() != f.manifold_dim)
            || f.intercept.len() != f.manifold_dim
            || f.residual_cov_diag.len() != f.manifold_dim
        {
            return Err(Error::validation("projection model shapes are inconsistent"));
        }
        if !(f.lambda >= 0.0) || f.residual_cov_diag.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::validation("projection lambda and variances must be non-negative"));
        }
        let theta = if f.feature_dim == 0 {
            Mat::zeros(0, f.manifold_dim)
        } else {
            Mat::from_rows(&f.theta)
        };
        Ok(ProjectionModel {
            theta,
            intercept: f.intercept,
            fit_intercept: f.fit_intercept,
            lambda: f.lambda,
            residual_cov_diag: f.residual_cov_diag,
        })
    }
}

impl From<ProjectionModel> for ProjectionFile {
    fn from(m: ProjectionModel) -> Self {
        ProjectionFile {
            version: PROJECTION_VERSION,
            lambda: m.lambda,
            fit_intercept: m.fit_intercept,
            feature_dim: m.theta.rows(),
            manifold_dim: m.theta.cols(),
            intercept: m.intercept.clone(),
            theta: (0..m.theta.rows()).map(|i| m.theta.row(i).to_vec()).collect(),
            residual_cov_diag: m.residual_cov_diag,
        }
    }
}

impl ProjectionModel {
    /// `theta` is d×l, i.e. one row per feature.
    pub fn from_parts(theta: Mat, intercept: Vec<f64>, lambda: f64) -> Result<Self> {
        if intercept.len() != theta.cols() {
            return Err(Error::validation("intercept length must equal manifold dimension"));
        }
        if !(lambda >= 0.0) {
            return Err(Error::validation("lambda must be non-negative"));
        }
        let l = theta.cols();
        Ok(ProjectionModel {
            theta,
            fit_intercept: intercept.iter().any(|&b| b != 0.0),
            intercept,
            lambda,
            residual_cov_diag: vec![0.0; l],
        })
    }

    pub fn theta(&self) -> &Mat {
        &self.theta
    }

    pub fn intercept(&self) -> &[f64] {
        &self.intercept
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn residual_cov_diag(&self) -> &[f64] {
        &self.residual_cov_diag
    }

    pub fn feature_dim(&self) -> usize {
        self.theta.rows()
    }

    pub fn manifold_dim(&self) -> usize {
        self.theta.cols()
    }

    /// `θᵀx + b`
    pub fn embed<R: FeatureRow + ?Sized>(&self, x: &R) -> Result<Vec<f64>> {
        if x.dim() != self.feature_dim() {
            return Err(Error::validation(format!(
                "feature vector has dimension {}, model expects {}",
                x.dim(),
                self.feature_dim()
            )));
        }
        Ok(self.embed_unchecked(x))
    }

    fn embed_unchecked<R: FeatureRow + ?Sized>(&self, x: &R) -> Vec<f64> {
        let mut z = self.intercept.clone();
        x.for_each_entry(|j, v| {
            if v != 0.0 {
                for (zk, t) in z.iter_mut().zip(self.theta.row(j)) {
                    *zk += v * t;
                }
            }
        });
        z
    }

    pub fn embed_all<R: FeatureRow>(&self, xs: &[R]) -> Result<Vec<Vec<f64>>> {
        xs.iter().map(|x| self.embed(x)).collect()
    }
}

/// The manifold position of each label, in order.
pub fn regression_targets<S: AsRef<str>>(labels: &[S], emb: &ManifoldEmbedding) -> Result<Vec<Vec<f64>>> {
    labels
        .iter()
        .map(|l| {
            emb.position(l.as_ref())
                .map(<[f64]>::to_vec)
                .ok_or_else(|| Error::validation(format!("label {:?} is not in the embedding", l.as_ref())))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaChoice {
    Fixed(f64),
    /// Cross-validated over [`LAMBDA_GRID`].
    Auto,
}

impl std::str::FromStr for LambdaChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(LambdaChoice::Auto);
        }
        let v: f64 = s
            .parse()
            .map_err(|_| Error::validation(format!("lambda must be a number or \"auto\", got {s:?}")))?;
        if !(v >= 0.0) || !v.is_finite() {
            return Err(Error::validation("lambda must be finite and non-negative"));
        }
        Ok(LambdaChoice::Fixed(v))
    }
}

/// Raw second moments of (x, z) pairs; subsets can be subtracted out.
struct Moments {
    n: f64,
    xx: Mat,
    xz: Mat,
    sx: Vec<f64>,
    sz: Vec<f64>,
}

impl Moments {
    fn accumulate<'a, R: FeatureRow + 'a>(
        d: usize,
        l: usize,
        pairs: impl Iterator<Item = (&'a R, &'a [f64])>,
    ) -> Self {
        let mut m = Moments {
            n: 0.0,
            xx: Mat::zeros(d, d),
            xz: Mat::zeros(d, l),
            sx: vec![0.0; d],
            sz: vec![0.0; l],
        };
        let mut buf: Vec<(usize, f64)> = Vec::new();
        for (x, z) in pairs {
            buf.clear();
            x.for_each_entry(|j, v| {
                if v != 0.0 {
                    buf.push((j, v));
                }
            });
            m.n += 1.0;
            for (a, &(i, vi)) in buf.iter().enumerate() {
                m.sx[i] += vi;
                let row = m.xx.row_mut(i);
                for &(j, vj) in &buf[..=a] {
                    row[j] += vi * vj;
                }
                for (t, zk) in m.xz.row_mut(i).iter_mut().zip(z) {
                    *t += vi * zk;
                }
            }
            for (s, zk) in m.sz.iter_mut().zip(z) {
                *s += zk;
            }
        }
        m
    }

    fn minus(&self, other: &Moments) -> Moments {
        let sub = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<_>>();
        Moments {
            n: self.n - other.n,
            xx: Mat::from_vec(self.xx.rows(), self.xx.cols(), sub(self.xx.as_slice(), other.xx.as_slice())),
            xz: Mat::from_vec(self.xz.rows(), self.xz.cols(), sub(self.xz.as_slice(), other.xz.as_slice())),
            sx: sub(&self.sx, &other.sx),
            sz: sub(&self.sz, &other.sz),
        }
    }

    /// Solves the (centered, if `intercept`) ridge normal equations.
    fn solve(&self, lambda: f64, intercept: bool) -> Result<(Mat, Vec<f64>)> {
        let d = self.xx.rows();
        let l = self.xz.cols();
        let mut a = self.xx.clone();
        let mut rhs = self.xz.clone();
        let (xbar, zbar) = if intercept {
            (
                self.sx.iter().map(|v| v / self.n).collect::<Vec<_>>(),
                self.sz.iter().map(|v| v / self.n).collect::<Vec<_>>(),
            )
        } else {
            (vec![0.0; d], vec![0.0; l])
        };
        for i in 0..d {
            for j in 0..=i {
                a[(i, j)] -= self.n * xbar[i] * xbar[j];
            }
            a[(i, i)] += lambda;
            for k in 0..l {
                rhs[(i, k)] -= self.n * xbar[i] * zbar[k];
            }
        }
        let chol = Cholesky::new(&a).map_err(|_| rank_error(lambda))?;
        let mut theta = Mat::zeros(d, l);
        let mut col = vec![0.0; d];
        for k in 0..l {
            for i in 0..d {
                col[i] = rhs[(i, k)];
            }
            chol.solve_in_place(&mut col);
            for i in 0..d {
                theta[(i, k)] = col[i];
            }
        }
        let b = intercept_for(&theta, &xbar, &zbar);
        Ok((theta, b))
    }
}

fn rank_error(lambda: f64) -> Error {
    if lambda == 0.0 {
        Error::Numerical(
            "the design matrix is numerically rank deficient; use a positive lambda".into(),
        )
    } else {
        Error::Numerical(format!("ridge system with lambda={lambda} is not positive definite"))
    }
}

fn intercept_for(theta: &Mat, xbar: &[f64], zbar: &[f64]) -> Vec<f64> {
    (0..theta.cols())
        .map(|k| zbar[k] - (0..theta.rows()).map(|i| theta[(i, k)] * xbar[i]).sum::<f64>())
        .collect()
}

fn solve_cg<R: FeatureRow>(xs: &[&R], zs: &[&[f64]], lambda: f64, intercept: bool) -> Result<(Mat, Vec<f64>)> {
    let n = xs.len() as f64;
    let d = xs[0].dim();
    let l = zs[0].len();
    let mut xbar = vec![0.0; d];
    let mut zbar = vec![0.0; l];
    if intercept {
        for (x, z) in xs.iter().zip(zs) {
            x.add_scaled_to(1.0 / n, &mut xbar);
            for (s, v) in zbar.iter_mut().zip(z.iter()) {
                *s += v / n;
            }
        }
    }
    let apply = |v: &[f64], out: &mut [f64]| {
        let mean_dot = linalg::dot(&xbar, v);
        for x in xs {
            let s = x.dot(v) - mean_dot;
            x.add_scaled_to(s, out);
            for (o, m) in out.iter_mut().zip(&xbar) {
                *o -= s * m;
            }
        }
        for (o, vi) in out.iter_mut().zip(v) {
            *o += lambda * vi;
        }
    };
    let max_iter = (4 * d).clamp(200, 20_000);
    let mut theta = Mat::zeros(d, l);
    for k in 0..l {
        let mut rhs = vec![0.0; d];
        for (x, z) in xs.iter().zip(zs) {
            x.add_scaled_to(z[k] - zbar[k], &mut rhs);
        }
        let rz: f64 = xs.iter().zip(zs).map(|(_, z)| z[k] - zbar[k]).sum();
        for (r, m) in rhs.iter_mut().zip(&xbar) {
            *r -= rz * m;
        }
        let (col, converged) = linalg::conjugate_gradient(&apply, &rhs, CG_TOLERANCE, max_iter);
        if !converged {
            return Err(rank_error(lambda));
        }
        for i in 0..d {
            theta[(i, k)] = col[i];
        }
    }
    let b = intercept_for(&theta, &xbar, &zbar);
    Ok((theta, b))
}

fn check_inputs<R: FeatureRow>(xs: &[R], targets: &[Vec<f64>], lambda: f64) -> Result<(usize, usize)> {
    if xs.is_empty() {
        return Err(Error::validation("cannot fit a projection to zero documents"));
    }
    if xs.len() != targets.len() {
        return Err(Error::validation(format!(
            "{} feature vectors but {} targets",
            xs.len(),
            targets.len()
        )));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::validation("lambda must be finite and non-negative"));
    }
    let d = xs[0].dim();
    let l = targets[0].len();
    if xs.iter().any(|x| x.dim() != d) || targets.iter().any(|t| t.len() != l) {
        return Err(Error::validation("inconsistent feature or target dimensions"));
    }
    if d == 0 || l == 0 {
        return Err(Error::validation("feature and manifold dimensions must be positive"));
    }
    Ok((d, l))
}

/// Minimizes `Σᵢ ‖θᵀxᵢ + b − zᵢ‖² + λ‖θ‖²_F` (the intercept is not penalized).
pub fn fit_projection<R: FeatureRow>(
    xs: &[R],
    targets: &[Vec<f64>],
    lambda: f64,
    intercept: bool,
) -> Result<ProjectionModel> {
    let (d, l) = check_inputs(xs, targets, lambda)?;
    let (theta, b) = if d <= DENSE_SOLVE_LIMIT {
        Moments::accumulate(d, l, xs.iter().zip(targets.iter().map(Vec::as_slice))).solve(lambda, intercept)?
    } else {
        let xr: Vec<&R> = xs.iter().collect();
        let zr: Vec<&[f64]> = targets.iter().map(Vec::as_slice).collect();
        solve_cg(&xr, &zr, lambda, intercept)?
    };

    let mut model = ProjectionModel {
        theta,
        intercept: if intercept { b } else { vec![0.0; l] },
        fit_intercept: intercept,
        lambda,
        residual_cov_diag: vec![0.0; l],
    };
    let n = xs.len() as f64;
    let mut rss = vec![0.0; l];
    for (x, z) in xs.iter().zip(targets) {
        for ((r, p), t) in rss.iter_mut().zip(model.embed_unchecked(x)).zip(z) {
            *r += (p - t) * (p - t);
        }
    }
    model.residual_cov_diag = rss.into_iter().map(|r| r / n).collect();
    Ok(model)
}

/// Picks the grid value with the lowest mean squared validation error over
/// `CV_FOLDS` folds (item `i` belongs to fold `i mod CV_FOLDS`). Ties go to
/// the earlier grid entry.
pub fn select_lambda<R: FeatureRow>(xs: &[R], targets: &[Vec<f64>], grid: &[f64], intercept: bool) -> Result<f64> {
    let (d, l) = check_inputs(xs, targets, 0.0)?;
    if grid.is_empty() {
        return Err(Error::validation("lambda grid is empty"));
    }
    if xs.len() < CV_FOLDS {
        return Err(Error::validation(format!(
            "cross-validating lambda needs at least {CV_FOLDS} documents"
        )));
    }
    let in_fold = |f: usize| move |i: &usize| i % CV_FOLDS == f;

    let mut errors = vec![0.0; grid.len()];
    let total = (d <= DENSE_SOLVE_LIMIT)
        .then(|| Moments::accumulate(d, l, xs.iter().zip(targets.iter().map(Vec::as_slice))));
    for fold in 0..CV_FOLDS {
        let held: Vec<usize> = (0..xs.len()).filter(in_fold(fold)).collect();
        let kept: Vec<usize> = (0..xs.len()).filter(|i| !in_fold(fold)(i)).collect();
        let fold_moments = total.as_ref().map(|t| {
            t.minus(&Moments::accumulate(
                d,
                l,
                held.iter().map(|&i| (&xs[i], targets[i].as_slice())),
            ))
        });
        for (g, &lambda) in grid.iter().enumerate() {
            let (theta, b) = match &fold_moments {
                Some(m) => m.solve(lambda, intercept),
                None => {
                    let xr: Vec<&R> = kept.iter().map(|&i| &xs[i]).collect();
                    let zr: Vec<&[f64]> = kept.iter().map(|&i| targets[i].as_slice()).collect();
                    solve_cg(&xr, &zr, lambda, intercept)
                }
            }
            .unwrap_or_else(|_| (Mat::zeros(0, 0), Vec::new()));
            if theta.rows() == 0 {
                errors[g] = f64::INFINITY;
                continue;
            }
            let model = ProjectionModel {
                theta,
                intercept: if intercept { b } else { vec![0.0; l] },
                fit_intercept: intercept,
                lambda,
                residual_cov_diag: vec![0.0; l],
            };
            for &i in &held {
                let p = model.embed_unchecked(&xs[i]);
                errors[g] += p
                    .iter()
                    .zip(&targets[i])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>();
            }
        }
    }
    let best = errors
        .iter()
        .enumerate()
        .fold(0, |best, (g, e)| if *e < errors[best] { g } else { best });
    if !errors[best].is_finite() {
        return Err(Error::Numerical("no lambda in the grid produced a solvable fit".into()));
    }
    Ok(grid[best])
}

pub fn fit_projection_with<R: FeatureRow>(
    xs: &[R],
    targets: &[Vec<f64>],
    lambda: LambdaChoice,
    intercept: bool,
) -> Result<ProjectionModel> {
    let lambda = match lambda {
        LambdaChoice::Fixed(v) => v,
        LambdaChoice::Auto => select_lambda(xs, targets, &LAMBDA_GRID, intercept)?,
    };
    fit_projection(xs, targets, lambda, intercept)
}
