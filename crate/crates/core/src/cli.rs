//! The `moodmf` command line.
//!
//! Every flag may also come from a JSON object passed with `--config`;
//! flags given on the command line win over the file.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::classify::{self, GaussianClassifier, LogisticConfig, LogisticModel};
use crate::corpus::{self, AnyCorpus};
use crate::error::{Error, Result};
use crate::eval::{self, ClassifierSpec, MethodSpec, Space, TrialConfig};
use crate::features::{SparseVector, Vocabulary, VocabularyConfig, Weighting};
use crate::manifold::{EmbeddingMethod, ManifoldEmbedding};
use crate::pipeline::{self, Featurizer, ManifoldModel, PipelineConfig};
use crate::plot;
use crate::projection::{LambdaChoice, ProjectionModel};
use crate::synth;

pub const BUNDLE_VERSION: u32 = 1;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "moodmf", version, about = "Emotion manifolds for labeled text")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate a corpus and print its label counts.
    Ingest(IngestArgs),
    /// Fit vocabulary, label embedding, projection and classifiers.
    Fit(FitArgs),
    /// Repeated-split comparison of original space and manifold.
    Evaluate(EvaluateArgs),
    /// Map documents to manifold coordinates.
    Embed(EmbedArgs),
    /// SVG scatter of the label coordinates.
    Plot(PlotArgs),
    /// Sample a synthetic numeric corpus.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
struct CorpusArgs {
    /// JSON Lines corpus of {"id","text","label"} or {"id","label","x"}.
    #[arg(long)]
    corpus: PathBuf,
    /// Keep only the k most frequent labels.
    #[arg(long)]
    top_labels: Option<usize>,
    /// Relabel to the binary positive/negative polarity task.
    #[arg(long)]
    polarity: bool,
}

#[derive(Debug, Args)]
struct PipelineArgs {
    /// Manifold dimension; defaults to min(10, C-1).
    #[arg(long)]
    l: Option<usize>,
    /// Ridge coefficient, or "auto" for cross-validation.
    #[arg(long, default_value = "auto")]
    lambda: String,
    /// mds or kpca.
    #[arg(long, default_value = "mds")]
    embedding: String,
    #[arg(long, default_value_t = 5)]
    min_df: usize,
    #[arg(long, default_value_t = 50_000)]
    max_features: usize,
    #[arg(long, default_value_t = 1)]
    ngram: usize,
    /// counts or l2.
    #[arg(long, default_value = "l2")]
    weighting: String,
    /// Fit the projection without an intercept.
    #[arg(long)]
    no_intercept: bool,
}

#[derive(Debug, Args)]
struct IngestArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    /// Write the filtered corpus here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Covariance ridge for the manifold-space Gaussian classifiers.
    #[arg(long, default_value_t = 1e-6)]
    reg_epsilon: f64,
    #[arg(long, default_value_t = 1.0)]
    l2: f64,
    /// Model bundle directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[command(flatten)]
    pipeline: PipelineArgs,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.2)]
    test_fraction: f64,
    /// Comma-separated method ids such as lda-diag@manifold; all by default.
    #[arg(long)]
    methods: Option<String>,
    #[arg(long, default_value_t = 1e-6)]
    manifold_reg_epsilon: f64,
    /// Covariance ridge for full covariances in the original space.
    #[arg(long, default_value_t = 0.0)]
    original_reg_epsilon: f64,
    /// Covariance ridge for diagonal and spherical covariances in the
    /// original space.
    #[arg(long, default_value_t = 1e-6)]
    original_diag_reg_epsilon: f64,
    #[arg(long, default_value_t = 1.0)]
    l2: f64,
    #[arg(long, default_value_t = 500)]
    max_iter: usize,
    /// Write the machine-readable results here.
    #[arg(long)]
    results: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EmbedArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    /// Output JSON Lines file; stdout if absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PlotArgs {
    /// Model bundle directory holding embedding.json.
    #[arg(long, required_unless_present = "embedding")]
    model: Option<PathBuf>,
    /// An embedding.json file, instead of --model.
    #[arg(long, conflicts_with = "model")]
    embedding: Option<PathBuf>,
    /// Two zero-based dimensions, e.g. "0,1".
    #[arg(long, default_value = "0,1")]
    dims: String,
    #[arg(long)]
    flip_x: bool,
    #[arg(long)]
    flip_y: bool,
    /// SVG output file; stdout if absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 8)]
    classes: usize,
    #[arg(long, default_value_t = 3)]
    l: usize,
    #[arg(long, default_value_t = 200)]
    d: usize,
    #[arg(long, default_value_t = 4000)]
    n: usize,
    #[arg(long, default_value_t = 6.0)]
    separation: f64,
    /// Overrides the generator's default of 0.5.
    #[arg(long)]
    noise_std: Option<f64>,
    /// Overrides the generator's default of 1.
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Ground-truth sidecar; defaults to <out>.truth.json.
    #[arg(long)]
    truth: Option<PathBuf>,
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let argv = match expand_config(argv) {
        Ok(a) => a,
        Err(e) => return report(e, err),
    };
    let command = Cli::command().mut_subcommands(|s| s.args_override_self(true));
    let cli = match command
        .try_get_matches_from(argv)
        .and_then(|m| Cli::from_arg_matches(&m))
    {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{}", e.render());
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{}", e.render());
                    EXIT_VALIDATION
                }
            };
        }
    };
    let result = match cli.command {
        Command::Ingest(a) => ingest(a, out),
        Command::Fit(a) => fit(a, out, err),
        Command::Evaluate(a) => evaluate(a, out),
        Command::Embed(a) => embed(a, out),
        Command::Plot(a) => plot_cmd(a, out),
        Command::Synth(a) => synth_cmd(a, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => report(e, err),
    }
}

fn report(e: Error, err: &mut dyn Write) -> i32 {
    let _ = writeln!(err, "error: {e}");
    if e.is_numerical() {
        EXIT_NUMERICAL
    } else {
        EXIT_VALIDATION
    }
}

/// Pulls `--config <path>` out of `argv` and splices the file's flags in
/// right after the subcommand, ahead of the user's own flags so that those
/// override them.
pub fn expand_config(mut argv: Vec<OsString>) -> Result<Vec<OsString>> {
    let mut config: Option<PathBuf> = None;
    let mut i = 1;
    while i < argv.len() {
        let arg = argv[i].to_string_lossy().into_owned();
        if arg == "--" {
            break;
        }
        if arg == "--config" {
            if i + 1 >= argv.len() {
                return Err(Error::validation("--config needs a path"));
            }
            config = Some(PathBuf::from(argv.remove(i + 1)));
            argv.remove(i);
        } else if let Some(p) = arg.strip_prefix("--config=") {
            config = Some(PathBuf::from(p));
            argv.remove(i);
        } else {
            i += 1;
        }
    }
    let Some(path) = config else { return Ok(argv) };
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| Error::validation(format!("{}: {e}", path.display())))?;
    let serde_json::Value::Object(map) = value else {
        return Err(Error::validation(format!(
            "{}: config must be a JSON object",
            path.display()
        )));
    };
    let mut injected: Vec<OsString> = Vec::new();
    for (key, v) in map {
        let flag = format!("--{}", key.replace('_', "-"));
        let scalar = |v: &serde_json::Value| -> Result<String> {
            match v {
                serde_json::Value::String(s) => Ok(s.clone()),
                serde_json::Value::Number(n) => Ok(n.to_string()),
                other => Err(Error::validation(format!("config key {key:?}: unsupported value {other}"))),
            }
        };
        match &v {
            serde_json::Value::Bool(true) => injected.push(flag.into()),
            serde_json::Value::Bool(false) | serde_json::Value::Null => {}
            serde_json::Value::Array(items) => {
                let parts = items.iter().map(scalar).collect::<Result<Vec<_>>>()?;
                injected.push(flag.into());
                injected.push(parts.join(",").into());
            }
            other => {
                injected.push(flag.into());
                injected.push(scalar(other)?.into());
            }
        }
    }
    // Position of the subcommand: the first argument that is not a flag.
    let at = argv
        .iter()
        .skip(1)
        .position(|a| !a.to_string_lossy().starts_with('-'))
        .map_or(argv.len(), |p| p + 2);
    argv.splice(at..at, injected);
    Ok(argv)
}

fn load_filtered(args: &CorpusArgs) -> Result<AnyCorpus> {
    let data = corpus::load_any(&args.corpus)?;
    if args.top_labels.is_none() && !args.polarity {
        return Ok(data);
    }
    let AnyCorpus::Text(mut c) = data else {
        return Err(Error::validation("--top-labels and --polarity apply to text corpora only"));
    };
    if let Some(k) = args.top_labels {
        c = c.filter_top_labels(k)?;
    }
    if args.polarity {
        c = c.map_to_binary(&corpus::POLARITY_POSITIVE, &corpus::POLARITY_NEGATIVE)?;
    }
    Ok(AnyCorpus::Text(c))
}

impl PipelineArgs {
    fn config(&self) -> Result<PipelineConfig> {
        if self.l == Some(0) {
            return Err(Error::validation("--l must be at least 1"));
        }
        Ok(PipelineConfig {
            vocabulary: VocabularyConfig {
                min_df: self.min_df,
                max_features: self.max_features,
                ngram: self.ngram,
            },
            weighting: self.weighting.parse::<Weighting>()?,
            manifold_dim: self.l,
            embedding: self.embedding.parse::<EmbeddingMethod>()?,
            lambda: self.lambda.parse::<LambdaChoice>()?,
            intercept: !self.no_intercept,
        })
    }
}

fn create_file(path: &Path) -> Result<std::io::BufWriter<fs::File>> {
    fs::File::create(path)
        .map(std::io::BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Numerical(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::validation(format!("{}: {e}", path.display())))
}

fn ingest(args: IngestArgs, out: &mut dyn Write) -> Result<()> {
    let data = load_filtered(&args.corpus)?;
    let vocab = data.label_vocab();
    let io = |e| Error::io("<stdout>", e);
    writeln!(out, "documents: {}", data.len()).map_err(io)?;
    writeln!(out, "labels: {}", vocab.len()).map_err(io)?;
    for (label, n) in &vocab {
        writeln!(out, "{n:>8}  {label}").map_err(io)?;
    }
    if let Some(path) = &args.out {
        let mut w = create_file(path)?;
        match &data {
            AnyCorpus::Text(c) => c.write_jsonl(&mut w),
            AnyCorpus::Numeric(c) => c.records().iter().try_for_each(|r| {
                serde_json::to_writer(&mut w, r)?;
                w.write_all(b"\n")
            }),
        }
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// Describes how the bundle turns records into feature vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct BundleManifest {
    version: u32,
    features: FeatureKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum FeatureKind {
    Text { weighting: Weighting },
    Numeric { dim: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FittedClassifier {
    Gaussian(GaussianClassifier),
    Logistic(LogisticModel),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassifierEntry {
    pub id: String,
    pub space: Space,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<FittedClassifier>,
    /// Why fitting failed, when it did.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassifiersFile {
    pub version: u32,
    pub classifiers: Vec<ClassifierEntry>,
}

fn fit(args: FitArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let data = load_filtered(&args.corpus)?;
    if data.is_empty() {
        return Err(Error::validation("corpus is empty"));
    }
    let cfg = args.pipeline.config()?;
    let featurizer = Featurizer::fit(&data, &cfg)?;
    let xs = featurizer.transform(&data)?;
    let labels = data.labels();
    let model = pipeline::fit_manifold(&xs, &labels, &cfg)?;
    let zs: Vec<SparseVector> = model
        .embed_all(&xs)?
        .iter()
        .map(|z| SparseVector::from_dense(z))
        .collect();

    let logistic = LogisticConfig {
        l2: args.l2,
        ..LogisticConfig::default()
    };
    let mut entries = Vec::new();
    for spec in ClassifierSpec::all() {
        let fitted = match spec {
            ClassifierSpec::Gaussian { kind, covariance } => {
                classify::fit_gaussian(&zs, &labels, kind, covariance, args.reg_epsilon).map(FittedClassifier::Gaussian)
            }
            ClassifierSpec::Logistic => classify::fit_logreg(&zs, &labels, &logistic).map(FittedClassifier::Logistic),
        };
        let (model, error) = match fitted {
            Ok(m) => (Some(m), None),
            Err(e) if e.is_numerical() => {
                let _ = writeln!(err, "warning: {} not fitted: {e}", spec.id());
                (None, Some(e.to_string()))
            }
            Err(e) => return Err(e),
        };
        entries.push(ClassifierEntry {
            id: spec.id(),
            space: Space::Manifold,
            model,
            error,
        });
    }

    fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let features = match &featurizer {
        Featurizer::Text { vocabulary, weighting } => {
            write_json(&args.out.join("vocabulary.json"), vocabulary)?;
            FeatureKind::Text { weighting: *weighting }
        }
        Featurizer::Numeric { dim } => {
            write_json(&args.out.join("features.json"), &FeatureKind::Numeric { dim: *dim })?;
            FeatureKind::Numeric { dim: *dim }
        }
    };
    write_json(
        &args.out.join("bundle.json"),
        &BundleManifest {
            version: BUNDLE_VERSION,
            features,
        },
    )?;
    write_json(&args.out.join("embedding.json"), &model.embedding)?;
    write_json(&args.out.join("projection.json"), &model.projection)?;
    write_json(
        &args.out.join("classifiers.json"),
        &ClassifiersFile {
            version: BUNDLE_VERSION,
            classifiers: entries,
        },
    )?;
    writeln!(
        out,
        "fitted {} documents, {} labels, feature dim {}, manifold dim {}, lambda {}",
        data.len(),
        model.embedding.len(),
        featurizer.dim(),
        model.embedding.dim(),
        model.projection.lambda()
    )
    .map_err(|e| Error::io("<stdout>", e))?;
    Ok(())
}

/// Reads a bundle written by `fit`.
pub fn load_bundle(dir: &Path) -> Result<(Featurizer, ManifoldModel)> {
    let manifest: BundleManifest = read_json(&dir.join("bundle.json"))?;
    if manifest.version != BUNDLE_VERSION {
        return Err(Error::validation(format!(
            "unsupported bundle version {}",
            manifest.version
        )));
    }
    let featurizer = match manifest.features {
        FeatureKind::Text { weighting } => Featurizer::Text {
            vocabulary: read_json::<Vocabulary>(&dir.join("vocabulary.json"))?,
            weighting,
        },
        FeatureKind::Numeric { dim } => Featurizer::Numeric { dim },
    };
    let embedding: ManifoldEmbedding = read_json(&dir.join("embedding.json"))?;
    let projection: ProjectionModel = read_json(&dir.join("projection.json"))?;
    if projection.feature_dim() != featurizer.dim() || projection.manifold_dim() != embedding.dim() {
        return Err(Error::validation("bundle files disagree on dimensions"));
    }
    Ok((featurizer, ManifoldModel { embedding, projection }))
}

fn evaluate(args: EvaluateArgs, out: &mut dyn Write) -> Result<()> {
    let data = load_filtered(&args.corpus)?;
    let methods = match &args.methods {
        None => MethodSpec::full_grid(),
        Some(list) => list
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::parse)
            .collect::<Result<Vec<MethodSpec>>>()?,
    };
    let cfg = TrialConfig {
        pipeline: args.pipeline.config()?,
        methods,
        test_fraction: args.test_fraction,
        manifold_reg_epsilon: args.manifold_reg_epsilon,
        original_reg_epsilon: args.original_reg_epsilon,
        original_diag_reg_epsilon: args.original_diag_reg_epsilon,
        logistic: LogisticConfig {
            l2: args.l2,
            max_iter: args.max_iter,
            ..LogisticConfig::default()
        },
    };
    let summaries = eval::run_trials(&data, &cfg, args.trials, args.seed)?;
    write!(out, "{}", eval::emit_table(&summaries)).map_err(|e| Error::io("<stdout>", e))?;
    if let Some(path) = &args.results {
        write_json(path, &eval::results_file(&summaries, args.trials, args.seed))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct EmbeddedRecord<'a> {
    id: &'a str,
    z: Vec<f64>,
}

fn embed(args: EmbedArgs, out: &mut dyn Write) -> Result<()> {
    let (featurizer, model) = load_bundle(&args.model)?;
    let data = corpus::load_any(&args.corpus)?;
    let zs = model.embed_all(&featurizer.transform(&data)?)?;
    let ids = data.ids();
    let mut file;
    let (w, name): (&mut dyn Write, PathBuf) = match &args.out {
        Some(p) => {
            file = create_file(p)?;
            (&mut file, p.clone())
        }
        None => (out, PathBuf::from("<stdout>")),
    };
    let io = |e: std::io::Error| Error::io(&name, e);
    for (id, z) in ids.iter().zip(zs) {
        serde_json::to_writer(&mut *w, &EmbeddedRecord { id, z }).map_err(|e| io(e.into()))?;
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)
}

fn parse_dims(s: &str) -> Result<(usize, usize)> {
    let bad = || Error::validation(format!("--dims must look like \"0,1\", got {s:?}"));
    let (a, b) = s.split_once(',').ok_or_else(bad)?;
    Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
}

fn plot_cmd(args: PlotArgs, out: &mut dyn Write) -> Result<()> {
    let path = match (&args.embedding, &args.model) {
        (Some(p), _) => p.clone(),
        (None, Some(dir)) => dir.join("embedding.json"),
        (None, None) => return Err(Error::validation("plot needs --model or --embedding")),
    };
    let emb: ManifoldEmbedding = read_json(&path)?;
    let svg = plot::emit_scatter_svg(&emb, parse_dims(&args.dims)?, args.flip_x, args.flip_y)?;
    match &args.out {
        Some(p) => fs::write(p, svg).map_err(|e| Error::io(p, e)),
        None => out.write_all(svg.as_bytes()).map_err(|e| Error::io("<stdout>", e)),
    }
}

#[derive(Serialize, Deserialize)]
pub struct TruthRecord {
    pub id: String,
    pub label: String,
    pub z: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
pub struct TruthFile {
    pub version: u32,
    pub spec: synth::SynthSpec,
    pub labels: Vec<String>,
    pub records: Vec<TruthRecord>,
}

fn synth_cmd(args: SynthArgs, out: &mut dyn Write) -> Result<()> {
    let mut spec = synth::well_separated_spec(args.classes, args.l, args.d, args.separation, args.seed)?;
    if let Some(v) = args.noise_std {
        spec.noise_std = v;
    }
    if let Some(v) = args.sigma {
        spec.sigma = v;
    }
    let sample = synth::sample(&spec, args.n)?;
    let data = sample.to_corpus()?;

    let mut w = create_file(&args.out)?;
    data.records()
        .iter()
        .try_for_each(|r| {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")
        })
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(&args.out, e))?;

    let truth_path = args.truth.clone().unwrap_or_else(|| {
        let mut p = args.out.clone().into_os_string();
        p.push(".truth.json");
        PathBuf::from(p)
    });
    let truth = TruthFile {
        version: 1,
        labels: (0..spec.n_classes).map(|c| spec.label(c)).collect(),
        records: data
            .records()
            .iter()
            .zip(&sample.z_true)
            .map(|(r, z)| TruthRecord {
                id: r.id.clone(),
                label: r.label.clone(),
                z: z.clone(),
            })
            .collect(),
        spec,
    };
    write_json(&truth_path, &truth)?;
    writeln!(
        out,
        "wrote {} records to {} and ground truth to {}",
        data.len(),
        args.out.display(),
        truth_path.display()
    )
    .map_err(|e| Error::io("<stdout>", e))?;
    Ok(())
}
