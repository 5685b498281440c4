//! Evaluation: classification metrics, paired t-tests over repeated random
//! splits, and experiment tables comparing the original feature space with
//! the manifold.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::classify::{self, CovarianceType, DiscriminantKind, LogisticConfig};
use crate::corpus::{self, AnyCorpus};
use crate::error::{Error, Result};
use crate::features::SparseVector;
use crate::pipeline::{self, Featurizer, PipelineConfig};

/// Significance level for "better than baseline" marks.
pub const ALPHA: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub labels: Vec<String>,
    pub accuracy: f64,
    pub macro_f1: f64,
    /// Same order as `labels`.
    pub per_class_f1: Vec<f64>,
    /// Rows are true labels, columns predictions.
    pub confusion: Vec<Vec<usize>>,
    pub n_test: usize,
}

/// Accuracy, per-class F1 and macro F1 over `label_set`. A class with
/// neither predictions nor true members scores F1 = 0.
pub fn score<S: AsRef<str>, L: AsRef<str>>(preds: &[S], truth: &[S], label_set: &[L]) -> Result<EvalReport> {
    if preds.len() != truth.len() {
        return Err(Error::validation(format!(
            "{} predictions but {} true labels",
            preds.len(),
            truth.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::validation("cannot score an empty prediction list"));
    }
    let labels: Vec<String> = label_set.iter().map(|l| l.as_ref().to_owned()).collect();
    let slot: HashMap<&str, usize> = labels
        .iter()
        .enumerate()
        .map(|(i, l)| (l.as_str(), i))
        .collect();
    let lookup = |l: &str| {
        slot.get(l)
            .copied()
            .ok_or_else(|| Error::validation(format!("label {l:?} is not in the label set")))
    };
    let c = labels.len();
    let mut confusion = vec![vec![0usize; c]; c];
    for (p, t) in preds.iter().zip(truth) {
        confusion[lookup(t.as_ref())?][lookup(p.as_ref())?] += 1;
    }
    let n = preds.len();
    let correct: usize = (0..c).map(|i| confusion[i][i]).sum();
    let per_class_f1: Vec<f64> = (0..c)
        .map(|k| {
            let tp = confusion[k][k] as f64;
            let predicted: usize = (0..c).map(|i| confusion[i][k]).sum();
            let actual: usize = confusion[k].iter().sum();
            // 2PR/(P+R) simplifies to 2tp / (predicted + actual)
            if predicted + actual == 0 {
                0.0
            } else {
                2.0 * tp / (predicted + actual) as f64
            }
        })
        .collect();
    let macro_f1 = if c == 0 {
        0.0
    } else {
        per_class_f1.iter().sum::<f64>() / c as f64
    };
    Ok(EvalReport {
        labels,
        accuracy: correct as f64 / n as f64,
        macro_f1,
        per_class_f1,
        confusion,
        n_test: n,
    })
}

// ---------------------------------------------------------------------------
// Student t distribution
// ---------------------------------------------------------------------------

/// `ln Γ(x)` for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + G + 0.5;
    for (i, c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Continued fraction for the incomplete beta function (modified Lentz).
fn beta_continued_fraction(x: f64, a: f64, b: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    h
}

/// Regularized incomplete beta function `I_x(a, b)`.
pub fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(x, a, b) / a
    } else {
        1.0 - front * beta_continued_fraction(1.0 - x, b, a) / b
    }
}

/// Two-sided tail probability `P(|T| ≥ |t|)` for Student's t with `df`
/// degrees of freedom.
pub fn student_t_two_sided_p(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    if t == 0.0 {
        return 1.0;
    }
    regularized_incomplete_beta(df / (df + t * t), 0.5 * df, 0.5).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub p: f64,
    pub df: usize,
    pub mean_difference: f64,
}

/// Paired two-sided t-test on `a − b`.
///
/// Zero spread in the differences gives `(0, 1)` when they are all zero and
/// `(±∞, 0)` otherwise.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(Error::validation(format!(
            "paired samples differ in length ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::validation("a paired t-test needs at least 2 pairs"));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let (mean, sd) = mean_sd(&d);
    let df = n - 1;
    let (t, p) = if sd == 0.0 {
        if mean == 0.0 {
            (0.0, 1.0)
        } else {
            (f64::INFINITY.copysign(mean), 0.0)
        }
    } else {
        let t = mean * (n as f64).sqrt() / sd;
        (t, student_t_two_sided_p(t, df as f64))
    };
    Ok(TTest {
        t,
        p,
        df,
        mean_difference: mean,
    })
}

/// Mean and sample standard deviation (n − 1).
pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

// ---------------------------------------------------------------------------
// Trials
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Space {
    Original,
    Manifold,
}

impl Space {
    pub fn name(self) -> &'static str {
        match self {
            Space::Original => "original",
            Space::Manifold => "manifold",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierSpec {
    Gaussian {
        kind: DiscriminantKind,
        covariance: CovarianceType,
    },
    Logistic,
}

impl ClassifierSpec {
    /// The seven table rows in display order.
    pub fn all() -> Vec<ClassifierSpec> {
        let mut v = Vec::new();
        for kind in [DiscriminantKind::Lda, DiscriminantKind::Qda] {
            for covariance in CovarianceType::ALL {
                v.push(ClassifierSpec::Gaussian { kind, covariance });
            }
        }
        v.push(ClassifierSpec::Logistic);
        v
    }

    pub fn id(self) -> String {
        match self {
            ClassifierSpec::Gaussian { kind, covariance } => {
                let cov = match covariance {
                    CovarianceType::Full => "full",
                    CovarianceType::Diagonal => "diag",
                    CovarianceType::Spherical => "spher",
                };
                format!("{}-{cov}", kind.name().to_lowercase())
            }
            ClassifierSpec::Logistic => "logreg".into(),
        }
    }
}

impl std::str::FromStr for ClassifierSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ClassifierSpec::all()
            .into_iter()
            .find(|c| c.id() == s)
            .ok_or_else(|| Error::validation(format!("unknown classifier {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MethodSpec {
    pub classifier: ClassifierSpec,
    pub space: Space,
}

impl MethodSpec {
    pub fn id(&self) -> String {
        format!("{}@{}", self.classifier.id(), self.space.name())
    }

    /// Every classifier in both spaces.
    pub fn full_grid() -> Vec<MethodSpec> {
        let mut v = Vec::new();
        for classifier in ClassifierSpec::all() {
            for space in [Space::Original, Space::Manifold] {
                v.push(MethodSpec { classifier, space });
            }
        }
        v
    }
}

impl std::str::FromStr for MethodSpec {
    type Err = Error;

    /// `"<classifier>@<space>"`, e.g. `lda-diag@manifold`.
    fn from_str(s: &str) -> Result<Self> {
        let (c, sp) = s
            .split_once('@')
            .ok_or_else(|| Error::validation(format!("method {s:?} must look like lda-diag@manifold")))?;
        let space = match sp {
            "original" => Space::Original,
            "manifold" => Space::Manifold,
            other => return Err(Error::validation(format!("unknown space {other:?}"))),
        };
        Ok(MethodSpec {
            classifier: c.parse()?,
            space,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub pipeline: PipelineConfig,
    pub methods: Vec<MethodSpec>,
    pub test_fraction: f64,
    /// Ridge on Gaussian covariances fitted on the manifold.
    pub manifold_reg_epsilon: f64,
    /// Ridge on full covariances in the original space; zero keeps the
    /// singular cases as explicit failures.
    pub original_reg_epsilon: f64,
    /// Ridge on diagonal and spherical covariances in the original space,
    /// where a feature absent from a class would otherwise have zero
    /// variance.
    pub original_diag_reg_epsilon: f64,
    pub logistic: LogisticConfig,
}

impl Default for TrialConfig {
    fn default() -> Self {
        TrialConfig {
            pipeline: PipelineConfig::default(),
            methods: MethodSpec::full_grid(),
            test_fraction: 0.2,
            manifold_reg_epsilon: 1e-6,
            original_reg_epsilon: 0.0,
            original_diag_reg_epsilon: 1e-6,
            logistic: LogisticConfig::default(),
        }
    }
}

impl TrialConfig {
    fn reg_epsilon(&self, method: &MethodSpec) -> f64 {
        match (method.space, method.classifier) {
            (Space::Manifold, _) => self.manifold_reg_epsilon,
            (Space::Original, ClassifierSpec::Gaussian { covariance: CovarianceType::Full, .. }) => {
                self.original_reg_epsilon
            }
            (Space::Original, _) => self.original_diag_reg_epsilon,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialScore {
    pub seed: u64,
    pub f1: f64,
    pub accuracy: f64,
}

/// Paired comparison of a manifold method with the same classifier in the
/// original space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineComparison {
    pub baseline: String,
    pub f1: TTest,
    pub accuracy: TTest,
    pub f1_significant: bool,
    pub accuracy_significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub id: String,
    pub method: MethodSpec,
    pub scores: Vec<TrialScore>,
    /// Set when the method failed on some trial (e.g. singular covariance).
    pub failure: Option<String>,
    pub f1_mean: f64,
    pub f1_std: f64,
    pub acc_mean: f64,
    pub acc_std: f64,
    pub comparison: Option<BaselineComparison>,
}

impl TrialSummary {
    fn new(method: MethodSpec, scores: Vec<TrialScore>, failure: Option<String>) -> Self {
        let f1: Vec<f64> = scores.iter().map(|s| s.f1).collect();
        let acc: Vec<f64> = scores.iter().map(|s| s.accuracy).collect();
        let (f1_mean, f1_std) = mean_sd(&f1);
        let (acc_mean, acc_std) = mean_sd(&acc);
        TrialSummary {
            id: method.id(),
            method,
            scores,
            failure,
            f1_mean,
            f1_std,
            acc_mean,
            acc_std,
            comparison: None,
        }
    }

    pub fn f1_scores(&self) -> Vec<f64> {
        self.scores.iter().map(|s| s.f1).collect()
    }

    pub fn accuracy_scores(&self) -> Vec<f64> {
        self.scores.iter().map(|s| s.accuracy).collect()
    }

    pub fn failed(&self) -> bool {
        self.failure.is_some()
    }
}

/// Compares two summaries over the same trials.
pub fn compare(candidate: &TrialSummary, baseline: &TrialSummary) -> Result<BaselineComparison> {
    let f1 = paired_t_test(&candidate.f1_scores(), &baseline.f1_scores())?;
    let accuracy = paired_t_test(&candidate.accuracy_scores(), &baseline.accuracy_scores())?;
    Ok(BaselineComparison {
        baseline: baseline.id.clone(),
        f1_significant: f1.mean_difference > 0.0 && f1.p < ALPHA,
        accuracy_significant: accuracy.mean_difference > 0.0 && accuracy.p < ALPHA,
        f1,
        accuracy,
    })
}

fn fit_and_score(
    method: &MethodSpec,
    cfg: &TrialConfig,
    train: &[SparseVector],
    train_y: &[String],
    test: &[SparseVector],
    test_y: &[String],
    label_set: &[String],
) -> Result<EvalReport> {
    let preds: Vec<String> = match method.classifier {
        ClassifierSpec::Gaussian { kind, covariance } => {
            let m = classify::fit_gaussian(train, train_y, kind, covariance, cfg.reg_epsilon(method))?;
            test.iter()
                .map(|x| m.predict_index(x).map(|i| m.labels()[i].clone()))
                .collect::<Result<_>>()?
        }
        ClassifierSpec::Logistic => {
            let m = classify::fit_logreg(train, train_y, &cfg.logistic)?;
            test.iter()
                .map(|x| m.predict_index(x).map(|i| m.labels()[i].clone()))
                .collect::<Result<_>>()?
        }
    };
    score(&preds, test_y, label_set)
}

/// Runs every configured method on `n_trials` stratified resplits (seed
/// `base_seed + t` for trial `t`). The whole pipeline is refit on each
/// training side, and all methods share each split so the per-method score
/// lists are paired.
pub fn run_trials(data: &AnyCorpus, cfg: &TrialConfig, n_trials: usize, base_seed: u64) -> Result<Vec<TrialSummary>> {
    if n_trials < 2 {
        return Err(Error::validation("at least 2 trials are needed for a paired t-test"));
    }
    if cfg.methods.is_empty() {
        return Ok(Vec::new());
    }
    let labels = data.labels();
    let needs_manifold = cfg.methods.iter().any(|m| m.space == Space::Manifold);

    let mut scores: Vec<Vec<TrialScore>> = vec![Vec::new(); cfg.methods.len()];
    let mut failures: Vec<Option<String>> = vec![None; cfg.methods.len()];

    for t in 0..n_trials {
        let seed = base_seed.wrapping_add(t as u64);
        let stage = |e: Error| -> Error {
            let msg = format!("trial {t} (seed {seed}): {e}");
            match e {
                Error::Numerical(_) | Error::SingularCovariance(_) => Error::Numerical(msg),
                _ => Error::Validation(msg),
            }
        };
        let (train_idx, test_idx) = corpus::stratified_split(&labels, cfg.test_fraction, seed).map_err(stage)?;
        let train = data.subset(&train_idx);
        let test = data.subset(&test_idx);
        let train_y = train.labels();
        let test_y = test.labels();
        let label_set: Vec<String> = train.label_vocab().into_iter().map(|(l, _)| l).collect();

        let featurizer = Featurizer::fit(&train, &cfg.pipeline).map_err(stage)?;
        let x_train = featurizer.transform(&train).map_err(stage)?;
        let x_test = featurizer.transform(&test).map_err(stage)?;

        let (z_train, z_test) = if needs_manifold {
            let model = pipeline::fit_manifold(&x_train, &train_y, &cfg.pipeline).map_err(stage)?;
            let dense_to_sparse = |zs: Vec<Vec<f64>>| zs.iter().map(|z| SparseVector::from_dense(z)).collect::<Vec<_>>();
            (
                dense_to_sparse(model.embed_all(&x_train).map_err(stage)?),
                dense_to_sparse(model.embed_all(&x_test).map_err(stage)?),
            )
        } else {
            (Vec::new(), Vec::new())
        };

        for (m, method) in cfg.methods.iter().enumerate() {
            if failures[m].is_some() {
                continue;
            }
            let (tr, te) = match method.space {
                Space::Original => (&x_train, &x_test),
                Space::Manifold => (&z_train, &z_test),
            };
            match fit_and_score(method, cfg, tr, &train_y, te, &test_y, &label_set) {
                Ok(r) => scores[m].push(TrialScore {
                    seed,
                    f1: r.macro_f1,
                    accuracy: r.accuracy,
                }),
                Err(e) => {
                    failures[m] = Some(format!("{} failed on trial {t} (seed {seed}): {e}", method.id()));
                }
            }
        }
    }

    let mut summaries: Vec<TrialSummary> = cfg
        .methods
        .iter()
        .zip(scores)
        .zip(failures)
        .map(|((method, s), f)| {
            let s = if f.is_some() { Vec::new() } else { s };
            TrialSummary::new(*method, s, f)
        })
        .collect();

    for i in 0..summaries.len() {
        let method = summaries[i].method;
        if method.space != Space::Manifold || summaries[i].failed() {
            continue;
        }
        let baseline = summaries
            .iter()
            .find(|s| s.method.space == Space::Original && s.method.classifier == method.classifier && !s.failed());
        if let Some(b) = baseline {
            let cmp = compare(&summaries[i], b)?;
            summaries[i].comparison = Some(cmp);
        }
    }
    Ok(summaries)
}

fn row_label(c: ClassifierSpec) -> (String, String) {
    match c {
        ClassifierSpec::Gaussian { kind, covariance } => (kind.name().into(), covariance.short_name().into()),
        ClassifierSpec::Logistic => ("Log.Reg.".into(), String::new()),
    }
}

/// Plain-text table: one row per classifier, F1/accuracy column pairs for
/// the original space and the manifold. Manifold cells significantly
/// better than the original-space counterpart carry a `*`; failed methods
/// show `n/a`.
pub fn emit_table(summaries: &[TrialSummary]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<9} {:<7} {:>9} {:>9}   {:>9} {:>9}",
        "", "", "Original", "Space", "Mood", "Manifold"
    );
    let _ = writeln!(
        out,
        "{:<9} {:<7} {:>9} {:>9}   {:>9} {:>9}",
        "", "", "F1", "Acc.", "F1", "Acc."
    );
    for classifier in ClassifierSpec::all() {
        let find = |space: Space| {
            summaries
                .iter()
                .find(|s| s.method.classifier == classifier && s.method.space == space)
        };
        let (orig, mani) = (find(Space::Original), find(Space::Manifold));
        if orig.is_none() && mani.is_none() {
            continue;
        }
        let cells = |s: Option<&TrialSummary>| -> (String, String) {
            match s {
                None => ("-".into(), "-".into()),
                Some(s) if s.failed() => ("n/a".into(), "n/a".into()),
                Some(s) => {
                    let (f1_star, acc_star) = s
                        .comparison
                        .as_ref()
                        .map_or((false, false), |c| (c.f1_significant, c.accuracy_significant));
                    let mark = |b: bool| if b { "*" } else { " " };
                    (
                        format!("{:.4}{}", s.f1_mean, mark(f1_star)),
                        format!("{:.4}{}", s.acc_mean, mark(acc_star)),
                    )
                }
            }
        };
        let (name, cov) = row_label(classifier);
        let (of, oa) = cells(orig);
        let (mf, ma) = cells(mani);
        let _ = writeln!(out, "{name:<9} {cov:<7} {of:>9} {oa:>9}   {mf:>9} {ma:>9}");
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub id: String,
    pub classifier: String,
    pub space: Space,
    pub f1_mean: Option<f64>,
    pub f1_std: Option<f64>,
    pub acc_mean: Option<f64>,
    pub acc_std: Option<f64>,
    /// Paired t-test p value of macro F1 against the original-space method.
    pub p_vs_baseline: Option<f64>,
    pub p_vs_baseline_acc: Option<f64>,
    pub f1_scores: Vec<f64>,
    pub acc_scores: Vec<f64>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsFile {
    pub version: u32,
    pub trials: usize,
    pub base_seed: u64,
    pub methods: Vec<MethodResult>,
}

pub fn results_file(summaries: &[TrialSummary], trials: usize, base_seed: u64) -> ResultsFile {
    let finite = |v: f64| v.is_finite().then_some(v);
    ResultsFile {
        version: 1,
        trials,
        base_seed,
        methods: summaries
            .iter()
            .map(|s| MethodResult {
                id: s.id.clone(),
                classifier: s.method.classifier.id(),
                space: s.method.space,
                f1_mean: finite(s.f1_mean),
                f1_std: finite(s.f1_std),
                acc_mean: finite(s.acc_mean),
                acc_std: finite(s.acc_std),
                p_vs_baseline: s.comparison.as_ref().map(|c| c.f1.p),
                p_vs_baseline_acc: s.comparison.as_ref().map(|c| c.accuracy.p),
                f1_scores: s.f1_scores(),
                acc_scores: s.accuracy_scores(),
                failure: s.failure.clone(),
            })
            .collect(),
    }
}
