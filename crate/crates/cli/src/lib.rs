//! Command implementations behind the `abuse-forecast` binary.
//!
//! Every command writes plain CSV/JSON data files plus a run manifest
//! beside them. Failures map to exit codes: 2 usage, configuration or
//! invalid input; 3 data that cannot support the operation; 4 internal.

pub mod manifest;

use std::fmt::Write as _;
use std::fs;
use std::io::Read as _;
use std::path::{Path, PathBuf};
use std::time::Duration;

use abuse_forecast::balance::{BalanceError, SmoteConfig};
use abuse_forecast::corpus::{
    load_corpus, load_corpus_with_report, synth_corpus, write_jsonl, Corpus, CorpusError, Format,
    SynthConfig,
};
use abuse_forecast::ensembles::{
    ArtifactError, EnsembleError, HyperParams, ModelArtifact, ModelKind,
};
use abuse_forecast::eval::{
    distribution_csv, fit_artifact, reply_distribution, run_ablation, CvConfig, EvalError,
    ModelSpec, TrainConfig,
};
use abuse_forecast::explain::{
    correlation_matrix, importance_ranking, top_words, CorrelationTarget, ExplainError,
    TreeExplainer, WordClass,
};
use abuse_forecast::features::{
    Family, FeatureError, FeatureExtractor, FeatureMask, Stage, BOW_CAP,
};
use abuse_forecast::lexicons::{label_corpus, LexiconError, LexiconRegistry, Threshold};
use abuse_forecast_serve::{PredictRequest, ServeConfig, ServeError, Snapshot};
use clap::{Args, Parser, Subcommand};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use manifest::{sidecar, RunManifest};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Usage,
    Data,
    Internal,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Usage => 2,
            ErrorKind::Data => 3,
            ErrorKind::Internal => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub kind: ErrorKind,
    pub code: &'static str,
    pub message: String,
}

impl CliError {
    pub fn new(kind: ErrorKind, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            kind,
            code,
            message: message.into(),
        }
    }

    fn usage(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Usage, "usage", message)
    }

    fn write(path: &Path, e: impl std::fmt::Display) -> Self {
        Self::new(
            ErrorKind::Internal,
            "io",
            format!("cannot write {}: {e}", path.display()),
        )
    }

    /// The machine-readable object printed on stderr.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "error": {
                "kind": self.kind,
                "code": self.code,
                "exit_code": self.kind.exit_code(),
                "message": self.message,
            }
        })
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        let code = match &e {
            CorpusError::Io { .. } => "io",
            CorpusError::Parse { .. } => "parse",
            CorpusError::Schema { .. }
            | CorpusError::NoReplies(_)
            | CorpusError::LabelCount(_)
            | CorpusError::DuplicateId(_) => "schema",
            CorpusError::Config(_) => "config",
            CorpusError::Unlabeled { .. } => {
                return Self::new(ErrorKind::Data, "unlabeled", e.to_string())
            }
        };
        Self::new(ErrorKind::Usage, code, e.to_string())
    }
}

impl From<LexiconError> for CliError {
    fn from(e: LexiconError) -> Self {
        match e {
            LexiconError::EmptyText => Self::new(ErrorKind::Data, "empty_text", e.to_string()),
            LexiconError::Threshold(_) => Self::new(ErrorKind::Usage, "config", e.to_string()),
            _ => Self::new(ErrorKind::Usage, "lexicon", e.to_string()),
        }
    }
}

impl From<ArtifactError> for CliError {
    fn from(e: ArtifactError) -> Self {
        Self::new(ErrorKind::Usage, "invalid_artifact", e.to_string())
    }
}

impl From<EnsembleError> for CliError {
    fn from(e: EnsembleError) -> Self {
        match e {
            EnsembleError::Config(_) => Self::new(ErrorKind::Usage, "config", e.to_string()),
            _ => Self::new(ErrorKind::Data, "model", e.to_string()),
        }
    }
}

impl From<FeatureError> for CliError {
    fn from(e: FeatureError) -> Self {
        match e {
            FeatureError::EmptyMask | FeatureError::UnknownFamily(_) => {
                Self::new(ErrorKind::Usage, "config", e.to_string())
            }
            _ => Self::new(ErrorKind::Data, "features", e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Corpus(e) => e.into(),
            EvalError::Feature(e) => e.into(),
            EvalError::Ensemble(e) => e.into(),
            EvalError::Artifact(e) => e.into(),
            EvalError::Balance(BalanceError::Config(m)) => Self::new(ErrorKind::Usage, "config", m),
            _ => Self::new(ErrorKind::Data, "evaluation", e.to_string()),
        }
    }
}

impl From<ExplainError> for CliError {
    fn from(e: ExplainError) -> Self {
        match e {
            ExplainError::Unsupported(_) => {
                Self::new(ErrorKind::Usage, "unsupported", e.to_string())
            }
            _ => Self::new(ErrorKind::Data, "explain", e.to_string()),
        }
    }
}

impl From<ServeError> for CliError {
    fn from(e: ServeError) -> Self {
        match e {
            ServeError::StageMismatch(_) => {
                Self::new(ErrorKind::Usage, "stage_mismatch", e.to_string())
            }
            ServeError::BadRequest(_) => Self::new(ErrorKind::Usage, "bad_request", e.to_string()),
            ServeError::Artifact(e) => e.into(),
            _ => Self::new(ErrorKind::Internal, "serve", e.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(
    name = "abuse-forecast",
    version,
    about = "Forecast the volume of abusive replies a post will attract"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Normalize a raw JSONL or CSV corpus into canonical JSONL.
    Ingest(IngestArgs),
    /// Generate a labeled synthetic corpus with a planted signal.
    Synth(SynthArgs),
    /// Label every reply with the lexicon threshold rule.
    Label(LabelArgs),
    /// Train a model on the whole corpus and write a model file.
    Train(TrainArgs),
    /// Cross-validate every feature-family mask against each model.
    Ablate(AblateArgs),
    /// Attribution, correlation, top-word and reply-count data files.
    Explain(ExplainArgs),
    /// Score one draft post.
    Predict(PredictArgs),
    /// Run the HTTP scoring service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// jsonl or csv; guessed from the extension when omitted.
    #[arg(long)]
    pub format: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// JSON generator settings; flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Share of conversations with at least one abusive reply.
    #[arg(long)]
    pub rate: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct LabelArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Lexicon manifest; the bundled lexicons when omitted.
    #[arg(long)]
    pub lexicons: Option<PathBuf>,
    /// Exact decimal; replies scoring exactly this are flagged.
    #[arg(long, default_value = "0.1")]
    pub threshold: String,
    #[arg(long)]
    pub out: PathBuf,
    /// Label report with the flag list; `<out>.flags.json` by default.
    #[arg(long)]
    pub flags: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ModelOpts {
    /// Trees per forest or boosting rounds.
    #[arg(long)]
    pub trees: Option<usize>,
    #[arg(long)]
    pub max_depth: Option<usize>,
    #[arg(long)]
    pub min_samples_leaf: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Train on the unaugmented data.
    #[arg(long)]
    pub no_smote: bool,
    #[arg(long, default_value_t = 5)]
    pub smote_k: usize,
    #[arg(long, default_value_t = BOW_CAP)]
    pub bow_cap: usize,
    #[arg(long)]
    pub lexicons: Option<PathBuf>,
}

impl ModelOpts {
    fn params(&self, kind: ModelKind) -> HyperParams {
        let mut p = HyperParams::defaults(kind).with_seed(self.seed);
        if let Some(n) = self.trees {
            p.n_trees = n;
        }
        if self.max_depth.is_some() {
            p.max_depth = self.max_depth;
        }
        if let Some(m) = self.min_samples_leaf {
            p.min_samples_leaf = m;
        }
        p
    }

    fn smote(&self) -> Option<SmoteConfig> {
        (!self.no_smote).then_some(SmoteConfig {
            k_neighbors: self.smote_k,
            seed: self.seed,
            ..SmoteConfig::default()
        })
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Comma-joined families, e.g. `mt,tw`, or `all`.
    #[arg(long)]
    pub mask: FeatureMask,
    #[arg(long, default_value = "prepost")]
    pub stage: Stage,
    /// rfr, ar or etr.
    #[arg(long)]
    pub model: ModelKind,
    #[command(flatten)]
    pub opts: ModelOpts,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value = "prepost")]
    pub stage: Stage,
    #[arg(long, default_value = "rfr,ar,etr", value_delimiter = ',')]
    pub models: Vec<ModelKind>,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[command(flatten)]
    pub opts: ModelOpts,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    /// Conversations attributed for the importance ranking.
    #[arg(long, default_value_t = 200)]
    pub sample: usize,
    #[arg(long, default_value_t = 10)]
    pub top_words: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Draft request JSON file, or `-` for stdin.
    #[arg(long)]
    pub draft: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Model file; defaults to $ABUSE_FORECAST_MODEL.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Bind address; defaults to $ABUSE_FORECAST_ADDR or 127.0.0.1:8080.
    #[arg(long)]
    pub addr: Option<String>,
    /// Built UI bundle served under /.
    #[arg(long)]
    pub ui_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 5000)]
    pub deadline_ms: u64,
}

/// Run a parsed command. Text meant for the caller goes to stdout.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest(a) => ingest(&a),
        Command::Synth(a) => synth(&a),
        Command::Label(a) => label(&a),
        Command::Train(a) => train(&a),
        Command::Ablate(a) => ablate(&a),
        Command::Explain(a) => explain(&a),
        Command::Predict(a) => predict(&a).map(|r| println!("{r}")),
        Command::Serve(a) => serve(&a),
    }
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::write(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| CliError::write(path, e))
}

fn json_pretty(v: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn finish(mut m: RunManifest, outputs: &[&Path], manifest_path: &Path) -> Result<()> {
    for p in outputs {
        m.output(p).map_err(|e| CliError::write(p, e))?;
    }
    m.write(manifest_path)
        .map_err(|e| CliError::write(manifest_path, e))
}

fn add_input(m: &mut RunManifest, path: &Path) -> Result<()> {
    m.input(path)
        .map_err(|e| CliError::new(ErrorKind::Usage, "io", format!("{}: {e}", path.display())))
}

fn registry(path: Option<&Path>) -> Result<LexiconRegistry> {
    Ok(match path {
        Some(p) => LexiconRegistry::from_manifest(p)?,
        None => LexiconRegistry::builtin(),
    })
}

fn load(path: &Path) -> Result<Corpus> {
    Ok(load_corpus(path, Format::from_path(path))?)
}

/// Training needs every reply labeled.
fn load_labeled(path: &Path) -> Result<Corpus> {
    let c = load(path)?;
    for conv in c.iter() {
        abuse_forecast::corpus::abuse_volume(conv)?;
    }
    Ok(c)
}

pub fn ingest(a: &IngestArgs) -> Result<()> {
    let format = match a.format.as_deref() {
        None => Format::from_path(&a.input),
        Some("jsonl") | Some("json") => Format::JsonLines,
        Some("csv") => Format::Csv,
        Some(other) => {
            return Err(CliError::usage(format!(
                "unknown format {other:?} (expected jsonl or csv)"
            )))
        }
    };
    let (corpus, report) = load_corpus_with_report(&a.input, format)?;
    write_jsonl(&corpus, &a.out).map_err(|e| CliError::write(&a.out, e))?;
    let report_path = with_suffix(&a.out, ".report.json");
    write(&report_path, json_pretty(&report))?;
    let mut m = RunManifest::new(
        "ingest",
        serde_json::json!({ "format": format!("{format:?}") }),
    );
    add_input(&mut m, &a.input)?;
    finish(m, &[&a.out, &report_path], &sidecar(&a.out))?;
    println!("{}", serde_json::to_string(&report).expect("serializable"));
    Ok(())
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(suffix);
    path.with_file_name(name)
}

pub fn synth(a: &SynthArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| CliError::usage(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::usage(format!("{}: {e}", p.display())))?
        }
        None => SynthConfig::default(),
    };
    if let Some(n) = a.n {
        cfg.n_conversations = n;
    }
    if let Some(r) = a.rate {
        cfg.abusive_conversation_rate = r;
    }
    let corpus = synth_corpus(&cfg, a.seed)?;
    write_jsonl(&corpus, &a.out).map_err(|e| CliError::write(&a.out, e))?;
    let m = RunManifest::new("synth", serde_json::to_value(&cfg).expect("serializable"))
        .seed("synth", a.seed);
    finish(m, &[&a.out], &sidecar(&a.out))
}

pub fn label(a: &LabelArgs) -> Result<()> {
    let reg = registry(a.lexicons.as_deref())?;
    let threshold = Threshold::from_decimal(&a.threshold)?;
    let corpus = load(&a.corpus)?;
    let (labeled, report) = label_corpus(&corpus, &reg, threshold);
    write_jsonl(&labeled, &a.out).map_err(|e| CliError::write(&a.out, e))?;
    let flags = a
        .flags
        .clone()
        .unwrap_or_else(|| with_suffix(&a.out, ".flags.json"));
    write(&flags, json_pretty(&report))?;
    let mut m = RunManifest::new(
        "label",
        serde_json::json!({ "threshold": threshold.to_string() }),
    );
    m.lexicon_digests = reg.digests();
    add_input(&mut m, &a.corpus)?;
    if let Some(p) = &a.lexicons {
        add_input(&mut m, p)?;
    }
    finish(m, &[&a.out, &flags], &sidecar(&a.out))
}

pub fn train(a: &TrainArgs) -> Result<()> {
    let corpus = load_labeled(&a.corpus)?;
    let ex = FeatureExtractor::new(registry(a.opts.lexicons.as_deref())?);
    let cfg = TrainConfig {
        params: a.opts.params(a.model),
        smote: a.opts.smote(),
        bow_cap: a.opts.bow_cap,
        background_seed: a.opts.seed,
        ..TrainConfig::new(a.model, a.mask, a.stage)
    };
    cfg.params.validate()?;
    let artifact = fit_artifact(&corpus, &cfg, &ex)?;
    let id = artifact
        .save(&a.out)
        .map_err(|e| CliError::write(&a.out, e))?;
    let mut m = RunManifest::new("train", serde_json::to_value(&cfg).expect("serializable"))
        .seed("model", cfg.params.seed)
        .seed("background", cfg.background_seed);
    if let Some(s) = &cfg.smote {
        m = m.seed("smote", s.seed);
    }
    m.lexicon_digests = ex.registry().digests();
    m.feature_manifest_digest = Some(artifact.feature_manifest_digest.clone());
    add_input(&mut m, &a.corpus)?;
    finish(m, &[&a.out], &sidecar(&a.out))?;
    println!("{}", serde_json::json!({ "model_id": id, "path": a.out }));
    Ok(())
}

pub fn ablate(a: &AblateArgs) -> Result<()> {
    if a.models.is_empty() {
        return Err(CliError::usage("no models given"));
    }
    let corpus = load_labeled(&a.corpus)?;
    let ex = FeatureExtractor::new(registry(a.opts.lexicons.as_deref())?);
    let specs: Vec<ModelSpec> = a
        .models
        .iter()
        .map(|&k| ModelSpec::ensemble(k, a.opts.params(k)))
        .collect();
    for s in &specs {
        if let ModelSpec::Ensemble { params, .. } = s {
            params.validate()?;
        }
    }
    let cfg = CvConfig {
        k: a.folds,
        seed: a.opts.seed,
        smote: a.opts.smote(),
        bow_cap: a.opts.bow_cap,
    };
    let grid = run_ablation(&corpus, a.stage, &specs, &cfg, &ex)?;
    let csv = a.out.join("grid.csv");
    let json = a.out.join("grid.json");
    write(&csv, grid.to_csv())?;
    write(&json, json_pretty(&grid))?;
    let mut m = RunManifest::new(
        "ablate",
        serde_json::to_value(&grid.manifest).expect("serializable"),
    )
    .seed("folds", cfg.seed)
    .seed("model", a.opts.seed);
    m.lexicon_digests = ex.registry().digests();
    add_input(&mut m, &a.corpus)?;
    finish(m, &[&csv, &json], &a.out.join("manifest.json"))
}

pub fn explain(a: &ExplainArgs) -> Result<()> {
    let (artifact, model_id) = ModelArtifact::load(&a.model)?;
    let corpus = load_labeled(&a.corpus)?;
    let ex = artifact.extractor();
    let mut m = RunManifest::new(
        "explain",
        serde_json::json!({ "model_id": model_id, "sample": a.sample, "top_words": a.top_words }),
    )
    .seed("sample", a.seed);
    m.lexicon_digests = ex.registry().digests();
    m.feature_manifest_digest = Some(artifact.feature_manifest_digest.clone());
    add_input(&mut m, &a.model)?;
    add_input(&mut m, &a.corpus)?;
    let mut outputs = Vec::new();

    match TreeExplainer::new(&artifact.model, &artifact.background) {
        Ok(explainer) => {
            let mut idx: Vec<usize> = (0..corpus.len()).collect();
            idx.shuffle(&mut ChaCha8Rng::seed_from_u64(a.seed));
            idx.truncate(a.sample.max(1));
            idx.sort_unstable();
            let rows = idx
                .iter()
                .map(|&i| artifact.row(&ex.extract(&corpus.conversations()[i])))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            let ranking =
                importance_ranking(&explainer, &rows, &artifact.feature_manifest.names())?;
            let mut bees = String::from("feature,sample,attribution,value\n");
            for (f, s, att, v) in ranking.beeswarm_rows() {
                writeln!(bees, "{},{},{att:.9},{v:.9}", quote(&f), idx[s]).unwrap();
            }
            let mut imp = String::from("rank,feature,mean_abs_attribution\n");
            for (r, (f, v)) in ranking.ranking.iter().enumerate() {
                writeln!(imp, "{},{},{v:.9}", r + 1, quote(f)).unwrap();
            }
            outputs.push(("beeswarm.csv", bees));
            outputs.push(("importance.csv", imp));
        }
        Err(e @ ExplainError::Unsupported(_)) => {
            eprintln!("warning: attribution skipped: {e}");
            m.notes.push(format!("attribution skipped: {e}"));
        }
        Err(e) => return Err(e.into()),
    }

    for family in Family::ALL {
        let cm = correlation_matrix(&corpus, family, &CorrelationTarget::ALL, &ex);
        outputs.push((
            match family {
                Family::Te => "correlation_te.csv",
                Family::Mt => "correlation_mt.csv",
                Family::Tw => "correlation_tw.csv",
                Family::Ac => "correlation_ac.csv",
            },
            cm.to_csv(),
        ));
    }
    let mut words = String::from("class,rank,word,count\n");
    for (class, name) in [
        (WordClass::WithAbusiveReplies, "with_abusive_replies"),
        (WordClass::NeutralOnly, "neutral_only"),
    ] {
        for (r, (w, n)) in top_words(&corpus, class, a.top_words, &ex)
            .iter()
            .enumerate()
        {
            writeln!(words, "{name},{},{},{n}", r + 1, quote(w)).unwrap();
        }
    }
    outputs.push(("top_words.csv", words));
    outputs.push((
        "reply_distribution.csv",
        distribution_csv(&reply_distribution(&corpus)),
    ));

    let paths: Vec<PathBuf> = outputs.iter().map(|(n, _)| a.out.join(n)).collect();
    for (p, (_, body)) in paths.iter().zip(&outputs) {
        write(p, body)?;
    }
    let refs: Vec<&Path> = paths.iter().map(PathBuf::as_path).collect();
    finish(m, &refs, &a.out.join("manifest.json"))
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\"\""))
}

/// Score one draft; returns the response JSON.
pub fn predict(a: &PredictArgs) -> Result<String> {
    let text = if a.draft.as_os_str() == "-" {
        let mut s = String::new();
        std::io::stdin()
            .read_to_string(&mut s)
            .map_err(|e| CliError::usage(format!("stdin: {e}")))?;
        s
    } else {
        fs::read_to_string(&a.draft)
            .map_err(|e| CliError::usage(format!("{}: {e}", a.draft.display())))?
    };
    let req: PredictRequest = serde_json::from_str(&text)
        .map_err(|e| CliError::new(ErrorKind::Usage, "bad_request", format!("draft: {e}")))?;
    let snap = Snapshot::load(&a.model)?;
    let resp = snap.predict(&req)?;
    Ok(serde_json::to_string(&resp).expect("serializable"))
}

pub fn serve(a: &ServeArgs) -> Result<()> {
    let mut cfg = ServeConfig::from_env()?;
    if let Some(addr) = &a.addr {
        cfg.addr = addr
            .parse()
            .map_err(|e| CliError::usage(format!("--addr {addr}: {e}")))?;
    }
    if a.model.is_some() {
        cfg.model = a.model.clone();
    }
    cfg.ui_dir = a.ui_dir.clone();
    cfg.deadline = Duration::from_millis(a.deadline_ms);
    let rt = tokio::runtime::Runtime::new()
        .map_err(|e| CliError::new(ErrorKind::Internal, "runtime", e.to_string()))?;
    Ok(rt.block_on(abuse_forecast_serve::run(cfg))?)
}

/// Parse arguments, run, and return the process exit code. Errors are
/// printed to stderr as a JSON object.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind as K;
            if matches!(e.kind(), K::DisplayHelp | K::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let err = CliError::usage(e.to_string().trim().to_string());
            eprintln!("{}", err.to_json());
            return err.kind.exit_code();
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.kind.exit_code()
        }
    }
}
