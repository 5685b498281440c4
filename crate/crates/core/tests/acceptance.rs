//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! fails. Runs without the libtest harness so the lines are never captured.

mod common;

use std::io::Write;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mood_manifold::classify::{self, CovarianceType, DiscriminantKind, GaussianClassifier, LogisticConfig};
use mood_manifold::corpus::AnyCorpus;
use mood_manifold::error::Error;
use mood_manifold::eval::{self, TrialConfig};
use mood_manifold::features::SparseVector;
use mood_manifold::linalg::{euclidean, Mat};
use mood_manifold::manifold::{self, CentroidSet, DistanceMatrix};
use mood_manifold::pipeline::{self, PipelineConfig};
use mood_manifold::projection::{self, LambdaChoice};
use mood_manifold::synth;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within_time(elapsed: Duration, limit: Duration) -> Result<(), String> {
    check(elapsed < limit, || format!("took {elapsed:?}, limit {limit:?}"))
}

fn distances(points: &[Vec<f64>]) -> DistanceMatrix {
    let n = points.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| euclidean(&points[i], &points[j])).collect())
        .collect();
    let labels = (0..n).map(|i| format!("p{i:02}")).collect();
    DistanceMatrix::new(labels, &rows).unwrap()
}

fn mds_exactness() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let points: Vec<Vec<f64>> = (0..32).map(|_| common::uniform(&mut rng, 4)).collect();
    let d = distances(&points);
    let emb = manifold::classical_mds(&d, 4).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for i in 0..32 {
        for j in 0..32 {
            worst = worst.max((euclidean(&emb.mu()[i], &emb.mu()[j]) - d.get(i, j)).abs());
        }
    }
    let elapsed = start.elapsed();
    check(worst <= 1e-8, || format!("max distance error {worst:e}"))?;
    within_time(elapsed, Duration::from_secs(1))?;
    Ok(format!("max distance error {worst:.1e}, {elapsed:.2?}"))
}

fn kpca_mds_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let c = rng.random_range(2..=32);
        let d = rng.random_range(1..=100);
        let centroids: Vec<Vec<f64>> = (0..c).map(|_| common::uniform(&mut rng, d)).collect();
        let labels = (0..c).map(|i| format!("c{i:02}")).collect();
        let cs = CentroidSet::new(labels, centroids).unwrap();
        let l = (c - 1).min(d).min(10);
        let a = manifold::kernel_pca_linear(&cs, l).map_err(|e| e.to_string())?;
        let b = manifold::classical_mds(&manifold::pairwise_distances(&cs), l).map_err(|e| e.to_string())?;
        for (x, y) in a.mu().iter().flatten().zip(b.mu().iter().flatten()) {
            worst = worst.max((x - y).abs());
        }
    }
    let elapsed = start.elapsed();
    check(worst <= 1e-8, || format!("max coordinate difference {worst:e}"))?;
    within_time(elapsed, Duration::from_secs(5))?;
    Ok(format!("max coordinate difference {worst:.1e}, {elapsed:.2?}"))
}

/// Dense normal equations on the design augmented with a ones column,
/// solved by nalgebra's LU.
fn ridge_oracle(x: &[Vec<f64>], z: &[Vec<f64>], lambda: f64, intercept: bool) -> (DMatrix<f64>, Vec<f64>) {
    let (n, d, l) = (x.len(), x[0].len(), z[0].len());
    let cols = d + usize::from(intercept);
    let a = DMatrix::from_fn(n, cols, |i, j| if j < d { x[i][j] } else { 1.0 });
    let t = DMatrix::from_fn(n, l, |i, k| z[i][k]);
    let mut gram = a.transpose() * &a;
    for j in 0..d {
        gram[(j, j)] += lambda;
    }
    let sol = gram.lu().solve(&(a.transpose() * t)).expect("oracle system is singular");
    let theta = sol.rows(0, d).into_owned();
    let b = if intercept {
        sol.row(d).iter().copied().collect()
    } else {
        vec![0.0; l]
    };
    (theta, b)
}

fn ridge_oracle_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut worst_fit, mut worst_grad) = (0.0f64, 0.0f64);
    for p in 0..50 {
        let lambda = [0.0, 0.1, 10.0][p % 3];
        let intercept = p % 2 == 0;
        let d = rng.random_range(1..=40);
        let l = rng.random_range(1..=5);
        // Unregularized problems need more rows than unknowns.
        let n = rng.random_range((d + 2)..=100);
        let x: Vec<Vec<f64>> = (0..n).map(|_| common::uniform(&mut rng, d)).collect();
        let z: Vec<Vec<f64>> = (0..n).map(|_| common::uniform(&mut rng, l)).collect();
        let xs: Vec<SparseVector> = x.iter().map(|r| SparseVector::from_dense(r)).collect();
        let model = projection::fit_projection(&xs, &z, lambda, intercept).map_err(|e| e.to_string())?;
        let (theta, b) = ridge_oracle(&x, &z, lambda, intercept);
        for j in 0..d {
            for k in 0..l {
                worst_fit = worst_fit.max((model.theta()[(j, k)] - theta[(j, k)]).abs());
            }
        }
        for k in 0..l {
            worst_fit = worst_fit.max((model.intercept()[k] - b[k]).abs());
        }
        // Gradient of Σ‖θᵀx + b − z‖² + λ‖θ‖² at the returned solution.
        let mut g_theta = vec![vec![0.0; l]; d];
        let mut g_b = vec![0.0; l];
        for (xi, zi) in x.iter().zip(&z) {
            let pred = model.embed(xi.as_slice()).map_err(|e| e.to_string())?;
            for k in 0..l {
                let r = pred[k] - zi[k];
                g_b[k] += 2.0 * r;
                for j in 0..d {
                    g_theta[j][k] += 2.0 * r * xi[j];
                }
            }
        }
        for j in 0..d {
            for k in 0..l {
                worst_grad = worst_grad.max((g_theta[j][k] + 2.0 * lambda * model.theta()[(j, k)]).abs());
            }
        }
        if intercept {
            worst_grad = worst_grad.max(g_b.iter().fold(0.0f64, |m, g| m.max(g.abs())));
        }
    }
    check(worst_fit <= 1e-8, || format!("max deviation from oracle {worst_fit:e}"))?;
    check(worst_grad < 1e-8, || format!("max gradient {worst_grad:e}"))?;
    Ok(format!("max oracle deviation {worst_fit:.1e}, max gradient {worst_grad:.1e}"))
}

/// `argmax_c log π_c + log N(x; μ_c, Σ_c)` from the fitted parameters, with
/// the density evaluated through nalgebra.
fn brute_force_predict(m: &GaussianClassifier, x: &[f64]) -> usize {
    let p = x.len();
    let xv = DVector::from_column_slice(x);
    let mut best = (f64::NEG_INFINITY, 0);
    for c in 0..m.labels().len() {
        let cov = m.covariance(c).to_dense();
        // Stored covariances already carry the ridge.
        let sigma = DMatrix::from_fn(p, p, |i, j| cov[i][j]);
        let diff = &xv - DVector::from_column_slice(&m.means()[c]);
        let inv = sigma.clone().try_inverse().expect("covariance should be invertible");
        let maha = (diff.transpose() * inv * &diff)[(0, 0)];
        let log_det = sigma.determinant().ln();
        let score = m.priors()[c].ln() - 0.5 * (maha + log_det + p as f64 * (2.0 * std::f64::consts::PI).ln());
        if score > best.0 {
            best = (score, c);
        }
    }
    best.1
}

fn gaussian_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut checked = 0;
    let mut disagreements = 0;
    for model_idx in 0..10 {
        let p = rng.random_range(2..=5);
        let c = rng.random_range(2..=4);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for k in 0..c {
            let center: Vec<f64> = common::uniform(&mut rng, p).iter().map(|v| 2.0 * v).collect();
            let spread: Vec<f64> = (0..p).map(|_| rng.random_range(0.3..1.5)).collect();
            for _ in 0..rng.random_range(15..40) {
                let v: Vec<f64> = (0..p)
                    .map(|j| center[j] + spread[j] * rng.random_range(-1.0..1.0) + 0.3 * rng.random_range(-1.0..1.0))
                    .collect();
                xs.push(v);
                ys.push(format!("k{k}"));
            }
        }
        for kind in [DiscriminantKind::Lda, DiscriminantKind::Qda] {
            for cov in CovarianceType::ALL {
                let eps = if model_idx % 2 == 0 { 0.0 } else { 1e-3 };
                let m = classify::fit_gaussian(&xs, &ys, kind, cov, eps).map_err(|e| e.to_string())?;
                for _ in 0..100 {
                    let x: Vec<f64> = common::uniform(&mut rng, p).iter().map(|v| 4.0 * v).collect();
                    let ours = m.predict_index(x.as_slice()).map_err(|e| e.to_string())?;
                    checked += 1;
                    if ours != brute_force_predict(&m, &x) {
                        disagreements += 1;
                    }
                }
            }
        }
    }
    check(disagreements == 0, || format!("{disagreements} of {checked} predictions disagree"))?;
    Ok(format!("{checked} predictions agree (10 data sets, 6 variants, 100 points each)"))
}

fn logistic_gradient_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (n, p, c) = (30, 5, 4);
    let h = 1e-5;
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let xs: Vec<Vec<f64>> = (0..n).map(|_| common::uniform(&mut rng, p)).collect();
        let y: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();
        let w = Mat::from_vec(c, p, common::uniform(&mut rng, c * p));
        let b = common::uniform(&mut rng, c);
        let l2 = rng.random_range(0.0..2.0);
        let obj = classify::logistic_objective(&xs, &y, &w, &b, l2);
        let loss = |w: &Mat, b: &[f64]| classify::logistic_objective(&xs, &y, w, b, l2).loss;

        let mut analytic = obj.grad_weights.as_slice().to_vec();
        analytic.extend_from_slice(&obj.grad_bias);
        let mut numeric = Vec::with_capacity(analytic.len());
        for i in 0..c * p {
            let mut plus = w.as_slice().to_vec();
            let mut minus = plus.clone();
            plus[i] += h;
            minus[i] -= h;
            numeric.push((loss(&Mat::from_vec(c, p, plus), &b) - loss(&Mat::from_vec(c, p, minus), &b)) / (2.0 * h));
        }
        for k in 0..c {
            let mut plus = b.clone();
            let mut minus = b.clone();
            plus[k] += h;
            minus[k] -= h;
            numeric.push((loss(&w, &plus) - loss(&w, &minus)) / (2.0 * h));
        }
        let diff: f64 = analytic.iter().zip(&numeric).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let scale: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
        worst = worst.max(diff / scale);
    }
    check(worst <= 1e-5, || format!("relative gradient error {worst:e}"))?;

    let xs: Vec<Vec<f64>> = (0..200).map(|_| common::uniform(&mut rng, p)).collect();
    let ys: Vec<String> = xs
        .iter()
        .map(|x| format!("c{}", usize::from(x[0] > 0.0) + 2 * usize::from(x[1] > 0.2)))
        .collect();
    let fit = classify::fit_logreg_traced(&xs, &ys, &LogisticConfig::default()).map_err(|e| e.to_string())?;
    let increases = fit.losses.windows(2).filter(|w| w[1] > w[0]).count();
    check(increases == 0, || format!("training loss rose on {increases} accepted steps"))?;
    Ok(format!(
        "relative gradient error {worst:.1e}; loss monotone over {} accepted steps",
        fit.losses.len() - 1
    ))
}

fn metric_correctness() -> Outcome {
    let r = eval::score(&["a", "a", "b"], &["a", "b", "b"], &["a", "b"]).map_err(|e| e.to_string())?;
    check(r.macro_f1 == 2.0 / 3.0 && r.accuracy == 2.0 / 3.0, || {
        format!("macro F1 {}, accuracy {}", r.macro_f1, r.accuracy)
    })?;
    let t = eval::paired_t_test(&[1.0, 2.0, 3.0], &[0.0, 0.0, 0.0]).map_err(|e| e.to_string())?;
    check((t.t - 2.0 * 3f64.sqrt()).abs() < 1e-12, || format!("t = {}", t.t))?;
    check((t.p - 0.0742).abs() <= 1e-4, || format!("p = {}", t.p))?;
    Ok(format!(
        "macro F1 {:.4}, accuracy {:.4}, t {:.4}, p {:.4}",
        r.macro_f1, r.accuracy, t.t, t.p
    ))
}

fn manifold_beats_original() -> Outcome {
    let start = Instant::now();
    let mut spec = synth::well_separated_spec(8, 3, 500, 3.0, 42).map_err(|e| e.to_string())?;
    spec.noise_std = 1.0;
    let sample = synth::sample(&spec, 4000).map_err(|e| e.to_string())?;
    let data = AnyCorpus::Numeric(sample.to_corpus().map_err(|e| e.to_string())?);
    let cfg = TrialConfig {
        pipeline: PipelineConfig {
            manifold_dim: Some(3),
            lambda: LambdaChoice::Fixed(1e5),
            ..PipelineConfig::default()
        },
        methods: vec![
            "lda-diag@original".parse().unwrap(),
            "lda-diag@manifold".parse().unwrap(),
        ],
        ..TrialConfig::default()
    };
    let s = eval::run_trials(&data, &cfg, 10, 0).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let (orig, mani) = (&s[0], &s[1]);
    let cmp = mani.comparison.as_ref().ok_or("no baseline comparison")?;
    let detail = format!(
        "accuracy original {:.4}, manifold {:.4}, p {:.2e}, {elapsed:.1?}",
        orig.acc_mean, mani.acc_mean, cmp.accuracy.p
    );
    check(mani.acc_mean > orig.acc_mean, || detail.clone())?;
    check(cmp.accuracy.p < 0.05, || detail.clone())?;
    within_time(elapsed, Duration::from_secs(60))?;
    Ok(detail)
}

fn singular_covariance() -> Outcome {
    let spec = synth::well_separated_spec(8, 3, 500, 3.0, 8).map_err(|e| e.to_string())?;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    // Exactly 20 samples per class.
    let mut seed = 0;
    while ys.len() < 160 {
        let s = synth::sample(&synth::SynthSpec { seed, ..spec.clone() }, 200).map_err(|e| e.to_string())?;
        seed += 1;
        for (x, y) in s.vectors.into_iter().zip(s.labels) {
            if ys.iter().filter(|l| **l == y).count() < 20 {
                xs.push(SparseVector::from_dense(&x));
                ys.push(y);
            }
        }
    }
    let original = classify::fit_gaussian(&xs, &ys, DiscriminantKind::Qda, CovarianceType::Full, 0.0);
    check(matches!(original, Err(Error::SingularCovariance(_))), || {
        format!("original space gave {:?}", original.as_ref().err())
    })?;
    let cfg = PipelineConfig {
        manifold_dim: Some(3),
        lambda: LambdaChoice::Fixed(1.0),
        ..PipelineConfig::default()
    };
    let model = pipeline::fit_manifold(&xs, &ys, &cfg).map_err(|e| e.to_string())?;
    let zs = model.embed_all(&xs).map_err(|e| e.to_string())?;
    classify::fit_gaussian(&zs, &ys, DiscriminantKind::Qda, CovarianceType::Full, 0.0)
        .map_err(|e| format!("manifold space failed: {e}"))?;
    Ok("500-dim original: singular covariance; 3-dim manifold: fitted".into())
}

fn synthetic_recovery() -> Outcome {
    let separation = 6.0;
    let spec = synth::well_separated_spec(8, 3, 200, separation, 9).map_err(|e| e.to_string())?;
    let sample = synth::sample(&spec, 4000).map_err(|e| e.to_string())?;
    let xs: Vec<SparseVector> = sample.vectors.iter().map(|v| SparseVector::from_dense(v)).collect();
    let cfg = PipelineConfig {
        manifold_dim: Some(3),
        ..PipelineConfig::default()
    };
    let model = pipeline::fit_manifold(&xs, &sample.labels, &cfg).map_err(|e| e.to_string())?;

    let true_mu: Vec<Vec<f64>> = model
        .embedding
        .labels()
        .iter()
        .map(|name| {
            let c = (0..spec.n_classes).find(|&c| spec.label(c) == *name).unwrap();
            spec.mu[c].clone()
        })
        .collect();
    let r = synth::procrustes_rotation(model.embedding.mu(), &true_mu).map_err(|e| e.to_string())?;
    let aligned = synth::rotate(model.embedding.mu(), &r);
    let errs: Vec<f64> = aligned
        .iter()
        .flatten()
        .zip(true_mu.iter().flatten())
        .map(|(a, b)| (a - b).abs())
        .collect();
    let mean_err = errs.iter().sum::<f64>() / errs.len() as f64;
    check(mean_err < 0.15 * separation, || format!("mean coordinate error {mean_err:.3}"))?;

    let z_hat = synth::rotate(&model.embed_all(&xs).map_err(|e| e.to_string())?, &r);
    let mut min_r = f64::INFINITY;
    for k in 0..3 {
        let a: Vec<f64> = z_hat.iter().map(|z| z[k]).collect();
        let b: Vec<f64> = sample.z_true.iter().map(|z| z[k]).collect();
        min_r = min_r.min(common::pearson(&a, &b));
    }
    check(min_r > 0.9, || format!("lowest per-dimension correlation {min_r:.3}"))?;
    Ok(format!(
        "mean coordinate error {mean_err:.3} (limit {:.2}), lowest correlation {min_r:.3}",
        0.15 * separation
    ))
}

fn evaluate_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let corpus = dir.path().join("c.jsonl");
    let docs = common::text_documents(&["happy", "sad", "tired", "amused"], 40, 10);
    common::write_jsonl(&corpus, &docs);
    let mut outputs = Vec::new();
    for run in 0..2 {
        let results = dir.path().join(format!("r{run}.json"));
        let (code, _, err) = common::moodmf(&[
            "evaluate",
            "--corpus",
            corpus.to_str().unwrap(),
            "--trials",
            "3",
            "--seed",
            "7",
            "--min-df",
            "2",
            "--methods",
            "lda-diag@original,lda-diag@manifold,logreg@manifold",
            "--results",
            results.to_str().unwrap(),
        ]);
        check(code == 0, || format!("evaluate exited {code}: {err}"))?;
        outputs.push(std::fs::read(&results).map_err(|e| e.to_string())?);
    }
    check(outputs[0] == outputs[1], || "results files differ".into())?;
    Ok(format!("two runs wrote identical {}-byte results", outputs[0].len()))
}

fn plot_contract() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let corpus = dir.path().join("c.jsonl");
    let labels: Vec<String> = (0..32).map(|i| format!("mood{i:02}")).collect();
    let label_refs: Vec<&str> = labels.iter().map(String::as_str).collect();
    common::write_jsonl(&corpus, &common::text_documents(&label_refs, 8, 11));
    let bundle = dir.path().join("model");
    let svg_path = dir.path().join("p.svg");
    let run = |args: &[&str]| -> Result<(), String> {
        let (code, _, err) = common::moodmf(args);
        check(code == 0, || format!("{args:?} exited {code}: {err}"))
    };
    run(&[
        "fit",
        "--corpus",
        corpus.to_str().unwrap(),
        "--min-df",
        "2",
        "--lambda",
        "0.1",
        "--out",
        bundle.to_str().unwrap(),
    ])?;
    run(&["plot", "--model", bundle.to_str().unwrap(), "--out", svg_path.to_str().unwrap()])?;
    let svg = std::fs::read_to_string(&svg_path).map_err(|e| e.to_string())?;
    let doc = roxmltree::Document::parse(&svg).map_err(|e| format!("invalid SVG: {e}"))?;
    check(doc.root_element().has_tag_name(("http://www.w3.org/2000/svg", "svg")), || {
        "root is not an svg element".into()
    })?;
    let count = |tag: &str| doc.descendants().filter(|n| n.has_tag_name(tag)).count();
    let texts: Vec<&str> = doc
        .descendants()
        .filter(|n| n.has_tag_name("text"))
        .filter_map(|n| n.text())
        .collect();
    let (n_text, n_markers) = (count("text"), count("circle"));
    check(n_text == 32 && n_markers == 32, || {
        format!("{n_text} text elements and {n_markers} markers")
    })?;
    check(labels.iter().all(|l| texts.contains(&l.as_str())), || "a label is missing".into())?;
    Ok("well-formed SVG with 32 labeled markers".into())
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("MDS exactness", mds_exactness),
        ("KPCA/MDS equivalence", kpca_mds_equivalence),
        ("ridge oracle", ridge_oracle_check),
        ("Gaussian-classifier oracle", gaussian_oracle),
        ("logistic gradient check", logistic_gradient_check),
        ("metric correctness", metric_correctness),
        ("manifold beats original space at desk scale", manifold_beats_original),
        ("n/a behavior", singular_covariance),
        ("synthetic recovery", synthetic_recovery),
        ("evaluate determinism", evaluate_determinism),
        ("plot contract", plot_contract),
    ];
    let mut failed = 0;
    let mut stdout = std::io::stdout().lock();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let line = match &outcome {
            Ok(detail) => format!("PASS {:>2} {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                format!("FAIL {:>2} {name}: {why}", i + 1)
            }
        };
        let _ = writeln!(stdout, "{line}");
        let _ = stdout.flush();
    }
    let _ = writeln!(stdout, "acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
