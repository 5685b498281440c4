mod common;

use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use mood_manifold::classify::{self, CovarianceType, DiscriminantKind};
use mood_manifold::corpus::AnyCorpus;
use mood_manifold::eval::{self, TrialConfig};
use mood_manifold::features::{FeatureRow, SparseVector};
use mood_manifold::linalg::euclidean;
use mood_manifold::manifold::{self, CentroidSet, DistanceMatrix};
use mood_manifold::pipeline::{Featurizer, PipelineConfig};
use mood_manifold::projection::{self, LambdaChoice};
use mood_manifold::synth;

fn distance_matrix(points: &[Vec<f64>]) -> DistanceMatrix {
    let n = points.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| euclidean(&points[i], &points[j])).collect())
        .collect();
    DistanceMatrix::new((0..n).map(|i| format!("p{i}")).collect(), &rows).unwrap()
}

fn points(max_n: usize, dim: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-5.0..5.0f64, dim), 3..max_n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn mds_is_invariant_to_rigid_motions(pts in points(12, 3), angle in 0.0..6.3f64, shift in prop::collection::vec(-10.0..10.0f64, 3)) {
        let (c, s) = (angle.cos(), angle.sin());
        let moved: Vec<Vec<f64>> = pts
            .iter()
            .map(|p| vec![c * p[0] - s * p[1] + shift[0], s * p[0] + c * p[1] + shift[1], -p[2] + shift[2]])
            .collect();
        let l = 3.min(pts.len() - 1);
        let a = manifold::classical_mds(&distance_matrix(&pts), l).unwrap();
        let b = manifold::classical_mds(&distance_matrix(&moved), l).unwrap();
        for i in 0..pts.len() {
            for j in 0..pts.len() {
                let da = euclidean(&a.mu()[i], &a.mu()[j]);
                let db = euclidean(&b.mu()[i], &b.mu()[j]);
                prop_assert!((da - db).abs() < 1e-8);
            }
        }
        for (x, y) in a.eigenvalues().iter().zip(b.eigenvalues()) {
            prop_assert!((x - y).abs() < 1e-8 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn mds_eigenvalues_match_an_independent_solver(pts in points(10, 4)) {
        let d = distance_matrix(&pts);
        let n = pts.len();
        let l = 4.min(n - 1);
        let emb = manifold::classical_mds(&d, l).unwrap();
        // B = −½ J D² J built densely and handed to nalgebra.
        let d2 = DMatrix::from_fn(n, n, |i, j| d.get(i, j).powi(2));
        let j = DMatrix::identity(n, n) - DMatrix::from_element(n, n, 1.0 / n as f64);
        let b = (&j * d2 * &j) * -0.5;
        let mut want: Vec<f64> = SymmetricEigen::new(b).eigenvalues.iter().copied().collect();
        want.sort_by(|a, b| b.partial_cmp(a).unwrap());
        for (got, want) in emb.eigenvalues().iter().zip(&want) {
            prop_assert!((got - want).abs() < 1e-8 * (1.0 + want.abs()), "{} vs {}", got, want);
        }
    }

    #[test]
    fn ridge_shrinks_monotonically(seed in 0u64..1000, l1 in 0.0..10.0f64, dl in 0.0..10.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<Vec<f64>> = (0..25).map(|_| common::uniform(&mut rng, 6)).collect();
        let z: Vec<Vec<f64>> = (0..25).map(|_| common::uniform(&mut rng, 2)).collect();
        let norm = |lambda: f64| {
            let m = projection::fit_projection(&x, &z, lambda, true).unwrap();
            m.theta().as_slice().iter().map(|v| v * v).sum::<f64>()
        };
        prop_assert!(norm(l1) >= norm(l1 + dl) - 1e-12);
    }

    #[test]
    fn kpca_matches_mds(seed in 0u64..1000, c in 2usize..12, d in 1usize..20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centroids: Vec<Vec<f64>> = (0..c).map(|_| common::uniform(&mut rng, d)).collect();
        let cs = CentroidSet::new((0..c).map(|i| format!("c{i}")).collect(), centroids).unwrap();
        let l = (c - 1).min(d);
        let a = manifold::kernel_pca_linear(&cs, l).unwrap();
        let b = manifold::classical_mds(&manifold::pairwise_distances(&cs), l).unwrap();
        for (x, y) in a.mu().iter().flatten().zip(b.mu().iter().flatten()) {
            prop_assert!((x - y).abs() < 1e-8);
        }
    }
}

#[test]
fn huge_lambda_shrinks_theta_to_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x: Vec<Vec<f64>> = (0..20).map(|_| common::uniform(&mut rng, 5)).collect();
    let z: Vec<Vec<f64>> = (0..20).map(|_| common::uniform(&mut rng, 2)).collect();
    let norm = |lambda: f64| {
        let m = projection::fit_projection(&x, &z, lambda, false).unwrap();
        m.theta().as_slice().iter().map(|v| v * v).sum::<f64>().sqrt()
    };
    assert!(norm(1e12) < 1e-6 * norm(0.0));
}

fn manifold_accuracy(separation: f64, priors: Option<Vec<f64>>) -> (f64, f64) {
    let mut spec = synth::well_separated_spec(2, 2, 20, separation, 3).unwrap();
    if let Some(p) = priors {
        spec.priors = p;
    }
    let sample = synth::sample(&spec, 1000).unwrap();
    let data = AnyCorpus::Numeric(sample.to_corpus().unwrap());
    let cfg = TrialConfig {
        pipeline: PipelineConfig {
            manifold_dim: Some(1),
            ..PipelineConfig::default()
        },
        methods: vec!["lda-diag@manifold".parse().unwrap()],
        ..TrialConfig::default()
    };
    let s = eval::run_trials(&data, &cfg, 3, 0).unwrap();
    let majority = data
        .label_vocab()
        .first()
        .map(|(_, n)| *n as f64 / data.len() as f64)
        .unwrap();
    (s[0].acc_mean, majority)
}

#[test]
fn wide_separation_is_nearly_perfect() {
    let (acc, _) = manifold_accuracy(10.0, None);
    assert!(acc > 0.99, "{acc}");
}

#[test]
fn zero_separation_falls_back_to_the_majority_rate() {
    let (acc, majority) = manifold_accuracy(0.0, Some(vec![0.75, 0.25]));
    assert!((acc - majority).abs() < 0.05, "{acc} vs {majority}");
}

#[test]
fn text_pipeline_learns_cue_words() {
    let labels = ["happy", "sad", "tired", "amused", "calm", "annoyed"];
    let docs = common::text_documents(&labels, 40, 6);
    let data = AnyCorpus::Text(mood_manifold::corpus::Corpus::new(docs).unwrap());
    let cfg = TrialConfig {
        pipeline: PipelineConfig {
            vocabulary: mood_manifold::features::VocabularyConfig {
                min_df: 2,
                ..Default::default()
            },
            lambda: LambdaChoice::Auto,
            ..PipelineConfig::default()
        },
        ..TrialConfig::default()
    };
    let s = eval::run_trials(&data, &cfg, 3, 1).unwrap();
    for summary in s.iter().filter(|s| !s.failed()) {
        assert!(summary.acc_mean > 0.5, "{} {}", summary.id, summary.acc_mean);
    }
    let table = eval::emit_table(&s);
    assert_eq!(table.lines().count(), 2 + 7);
}

#[test]
fn featurizer_is_fit_on_training_documents_only() {
    let train = common::text_documents(&["happy", "sad"], 10, 1);
    let mut test = common::text_documents(&["happy", "sad"], 2, 2);
    test[0].text = "neverseenbefore neverseenbefore".into();
    let train = AnyCorpus::Text(mood_manifold::corpus::Corpus::new(train).unwrap());
    let mut cfg = PipelineConfig::default();
    cfg.vocabulary.min_df = 1;
    let f = Featurizer::fit(&train, &cfg).unwrap();
    let test = AnyCorpus::Text(mood_manifold::corpus::Corpus::new(test).unwrap());
    let xs = f.transform(&test).unwrap();
    assert_eq!(xs[0].nnz(), 0);
    assert!(xs.iter().all(|x| x.dim() == f.dim()));
}

#[test]
fn qda_full_singular_only_without_enough_samples() {
    let spec = synth::well_separated_spec(3, 2, 30, 4.0, 2).unwrap();
    let s = synth::sample(&spec, 60).unwrap();
    let xs: Vec<SparseVector> = s.vectors.iter().map(|v| SparseVector::from_dense(v)).collect();
    let r = classify::fit_gaussian(&xs, &s.labels, DiscriminantKind::Qda, CovarianceType::Full, 0.0);
    assert!(matches!(r, Err(mood_manifold::Error::SingularCovariance(_))));
    assert!(classify::fit_gaussian(&xs, &s.labels, DiscriminantKind::Qda, CovarianceType::Full, 1e-3).is_ok());
    assert!(classify::fit_gaussian(&xs, &s.labels, DiscriminantKind::Qda, CovarianceType::Diagonal, 0.0).is_ok());
}
