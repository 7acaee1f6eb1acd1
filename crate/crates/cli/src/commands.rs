use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Subcommand, ValueEnum};
use lstm_relevance::explain::{explain, Granularity, OcclusionMode};
use lstm_relevance::lstm::argmax;
use lstm_relevance::model_io::{load_model, model_to_string, Embeddings, Probe};
use lstm_relevance::sentiment::{
    build_synthetic_corpus, composition_analysis, pca_project, perturbation_experiment, render_heatmap,
    render_heatmap_titled, sentence_representations, train_classifier, ClassifierConfig, CompositionConfig,
    CorpusSpec, HeatmapFormat, PerturbConfig, Ranker, ReprMode, Sentence, SentimentCorpus, SentimentModel, Removal,
};
use lstm_relevance::toy::{default_toy_methods, dataset_tsv, regression_pairs, run_toy_benchmark, ToyBenchConfig, ToyTask};
use lstm_relevance::train::{history_table, train_toy_model, TrainConfig};
use lstm_relevance::{Error, InputSequence, LrpRule, Method, ModelParams, Result};
use serde::{Deserialize, Serialize};

use crate::output::RunDir;
use crate::{note, GlobalArgs};

const CORPUS_FILE: &str = "corpus.toml";
const SENTIMENT_FILE: &str = "sentiment.json";

#[derive(Subcommand)]
pub enum Command {
    /// Write the toy train/validation/test splits as TSV files.
    GenToy(GenToyArgs),
    /// Train one single-unit LSTM on a toy task.
    TrainToy(TrainToyArgs),
    /// Train a cohort of toy models and score each attribution method.
    ToyBench(ToyBenchArgs),
    /// Explain one input with one attribution method.
    Explain(ExplainArgs),
    /// Build the synthetic sentiment corpus and train a bi-LSTM classifier.
    TrainSentiment(SentimentTrainArgs),
    /// Word-removal perturbation experiment on a sentiment classifier.
    Perturb(PerturbArgs),
    /// PCA of relevance-weighted sentence representations.
    Repr(ReprArgs),
    /// Relevance of negations and amplifiers in short phrases.
    Compose(ComposeArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::GenToy(_) => "gen-toy",
            Command::TrainToy(_) => "train-toy",
            Command::ToyBench(_) => "toy-bench",
            Command::Explain(_) => "explain",
            Command::TrainSentiment(_) => "train-sentiment",
            Command::Perturb(_) => "perturb",
            Command::Repr(_) => "repr",
            Command::Compose(_) => "compose",
        }
    }
}

pub fn run(global: &GlobalArgs, command: Command) -> Result<()> {
    let name = command.name();
    let mut run = RunDir::create(global.out_dir.as_deref(), name)?;
    note!("writing to {}", run.path().display());
    let seed = global.seed;
    let outcome = match &command {
        Command::GenToy(a) => gen_toy(&mut run, seed, a),
        Command::TrainToy(a) => train_toy(&mut run, seed, a),
        Command::ToyBench(a) => toy_bench(&mut run, seed, a),
        Command::Explain(a) => explain_cmd(&mut run, seed, a),
        Command::TrainSentiment(a) => train_sentiment(&mut run, "", seed, a).map(|_| ()),
        Command::Perturb(a) => perturb(&mut run, seed, a),
        Command::Repr(a) => repr(&mut run, seed, a),
        Command::Compose(a) => compose(&mut run, seed, a),
    };
    // Partial results are still recorded in the manifest.
    let status = match &outcome {
        Ok(()) => "ok",
        Err(Error::ConvergenceBudget { .. }) => "incomplete",
        Err(_) => return outcome,
    };
    let config = ManifestConfig { command: &command, seed };
    run.finish(name, seed, &config, status)?;
    outcome
}

#[derive(Serialize)]
struct ManifestConfig<'a> {
    #[serde(flatten)]
    command: &'a Command,
    seed: u64,
}

impl Serialize for Command {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut m = s.serialize_map(Some(1))?;
        match self {
            Command::GenToy(a) => m.serialize_entry("args", a)?,
            Command::TrainToy(a) => m.serialize_entry("args", a)?,
            Command::ToyBench(a) => m.serialize_entry("args", a)?,
            Command::Explain(a) => m.serialize_entry("args", a)?,
            Command::TrainSentiment(a) => m.serialize_entry("args", a)?,
            Command::Perturb(a) => m.serialize_entry("args", a)?,
            Command::Repr(a) => m.serialize_entry("args", a)?,
            Command::Compose(a) => m.serialize_entry("args", a)?,
        }
        m.end()
    }
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

fn parse_task(s: &str) -> std::result::Result<ToyTask, String> {
    ToyTask::parse(s).map_err(|e| e.to_string())
}

// ---------------------------------------------------------------- toy

#[derive(Args, Serialize)]
pub struct ToySizes {
    #[arg(long, default_value_t = 10_000)]
    pub train_size: usize,
    #[arg(long, default_value_t = 2_500)]
    pub val_size: usize,
    #[arg(long, default_value_t = 2_500)]
    pub test_size: usize,
}

#[derive(Args, Serialize)]
pub struct ToyTrainArgs {
    /// Adam steps per model.
    #[arg(long, default_value_t = 60_000)]
    pub max_steps: usize,
    #[arg(long, default_value_t = 0.002)]
    pub lr: f64,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    /// Steps between validation checks.
    #[arg(long, default_value_t = 100)]
    pub eval_every: usize,
    /// Validation MSE below which a model counts as converged.
    #[arg(long, default_value_t = 1e-4)]
    pub converge_mse: f64,
}

impl ToyTrainArgs {
    fn config(&self) -> TrainConfig {
        TrainConfig {
            max_steps: self.max_steps,
            learning_rate: self.lr,
            batch_size: self.batch_size,
            eval_every: self.eval_every,
            convergence_mse: self.converge_mse,
            ..TrainConfig::default()
        }
    }
}

fn bench_config(task: ToyTask, seed: u64, sizes: &ToySizes) -> ToyBenchConfig {
    ToyBenchConfig {
        seed,
        train_size: sizes.train_size,
        val_size: sizes.val_size,
        test_size: sizes.test_size,
        ..ToyBenchConfig::new(task)
    }
}

#[derive(Args, Serialize)]
pub struct GenToyArgs {
    /// addition or subtraction.
    #[arg(long, value_parser = parse_task)]
    pub task: ToyTask,
    #[command(flatten)]
    pub sizes: ToySizes,
}

fn gen_toy(run: &mut RunDir, seed: u64, a: &GenToyArgs) -> Result<()> {
    let splits = bench_config(a.task, seed, &a.sizes).splits()?;
    for (name, part) in [("train", &splits.train), ("val", &splits.val), ("test", &splits.test)] {
        run.write(&format!("toy_{name}.tsv"), dataset_tsv(part))?;
    }
    note!("{} / {} / {} sequences", splits.train.len(), splits.val.len(), splits.test.len());
    Ok(())
}

#[derive(Args, Serialize)]
pub struct TrainToyArgs {
    /// addition or subtraction.
    #[arg(long, value_parser = parse_task)]
    pub task: ToyTask,
    #[command(flatten)]
    pub sizes: ToySizes,
    #[command(flatten)]
    pub train: ToyTrainArgs,
}

#[derive(Serialize)]
struct TrainSummary {
    converged: bool,
    diverged: bool,
    best_val_mse: f64,
    steps: usize,
    test_mse: f64,
}

fn train_toy(run: &mut RunDir, seed: u64, a: &TrainToyArgs) -> Result<()> {
    let splits = bench_config(a.task, seed, &a.sizes).splits()?;
    let mut tc = a.train.config();
    tc.seed = seed;
    let out = train_toy_model(&regression_pairs(&splits.train), &regression_pairs(&splits.val), &tc)?;
    let probe = Probe::record(&out.model, &splits.test[0].inputs)?;
    run.write("model.json", model_to_string(&out.model, Some(&probe))?)?;
    run.write("history.tsv", history_table(&out.history))?;
    let test_mse = lstm_relevance::grad::mse(&out.model, &regression_pairs(&splits.test))?;
    let summary = TrainSummary {
        converged: out.converged && !out.diverged,
        diverged: out.diverged,
        best_val_mse: out.best_val_mse,
        steps: out.history.last().map_or(0, |h| h.step),
        test_mse,
    };
    run.write("summary.json", to_json(&summary)?)?;
    println!("best val MSE {:.3e}, test MSE {:.3e}", summary.best_val_mse, test_mse);
    if !summary.converged {
        return Err(Error::ConvergenceBudget { converged: 0, requested: 1, attempts: 1 });
    }
    Ok(())
}

#[derive(Args, Serialize)]
pub struct ToyBenchArgs {
    /// addition or subtraction.
    #[arg(long, value_parser = parse_task)]
    pub task: ToyTask,
    /// Converged models to collect.
    #[arg(long, default_value_t = 50)]
    pub models: usize,
    /// Training runs allowed before giving up with a partial table.
    #[arg(long, default_value_t = 200)]
    pub max_attempts: usize,
    /// Comma-separated method names; defaults to the unstabilized LRP rules,
    /// Gradient×Input, f-diff occlusion and CD.
    #[arg(long, value_delimiter = ',')]
    pub methods: Vec<Method>,
    /// Also write every converged model under models/.
    #[arg(long)]
    pub save_models: bool,
    #[command(flatten)]
    pub sizes: ToySizes,
    #[command(flatten)]
    pub train: ToyTrainArgs,
}

#[derive(Serialize)]
struct ToyBenchJson<'a> {
    config: &'a ToyBenchConfig,
    converged: usize,
    complete: bool,
    attempts: &'a [lstm_relevance::toy::AttemptRecord],
    rows: &'a [lstm_relevance::toy::ToyStatsRow],
}

fn toy_bench(run: &mut RunDir, seed: u64, a: &ToyBenchArgs) -> Result<()> {
    let mut cfg = bench_config(a.task, seed, &a.sizes);
    cfg.n_models = a.models;
    cfg.max_attempts = a.max_attempts;
    cfg.methods = if a.methods.is_empty() { default_toy_methods() } else { a.methods.clone() };
    cfg.train = a.train.config();
    cfg.validate()?;
    note!("training up to {} {} models", cfg.max_attempts, cfg.task.name());
    let report = run_toy_benchmark(&cfg)?;
    run.write("toy_bench.tsv", report.table())?;
    let mut attempts = String::from("attempt\tseed\tconverged\tdiverged\tbest_val_mse\tsteps\n");
    for r in &report.attempts {
        attempts.push_str(&format!(
            "{}\t{}\t{}\t{}\t{:e}\t{}\n",
            r.attempt, r.seed, r.converged, r.diverged, r.best_val_mse, r.steps
        ));
    }
    run.write("attempts.tsv", attempts)?;
    let json = ToyBenchJson {
        config: &cfg,
        converged: report.converged(),
        complete: report.is_complete(),
        attempts: &report.attempts,
        rows: &report.rows,
    };
    run.write("report.json", to_json(&json)?)?;
    if a.save_models {
        for (k, m) in report.models.iter().enumerate() {
            run.write(&format!("models/model_{k:03}.json"), model_to_string(m, None)?)?;
        }
    }
    print!("{}", report.table());
    if !report.is_complete() {
        return Err(Error::ConvergenceBudget {
            converged: report.converged(),
            requested: cfg.n_models,
            attempts: report.attempts.len(),
        });
    }
    Ok(())
}

// ------------------------------------------------------------ explain

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeArg {
    FDiff,
    PDiff,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GranularityArg {
    Word,
    Variable,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FormatArg {
    Terminal,
    Html,
    Svg,
}

impl FormatArg {
    fn format(self) -> HeatmapFormat {
        match self {
            FormatArg::Terminal => HeatmapFormat::Terminal,
            FormatArg::Html => HeatmapFormat::Html,
            FormatArg::Svg => HeatmapFormat::Svg,
        }
    }

    fn extension(self) -> &'static str {
        match self {
            FormatArg::Terminal => "txt",
            FormatArg::Html => "html",
            FormatArg::Svg => "svg",
        }
    }
}

#[derive(Args, Serialize)]
pub struct ExplainArgs {
    /// Model JSON file.
    #[arg(long)]
    pub model: PathBuf,
    /// Embedding table; required for token input.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Whitespace-separated tokens to explain.
    #[arg(long, requires = "embeddings", conflicts_with_all = ["input", "toy_sample"])]
    pub tokens: Option<String>,
    /// Input file: tokens when --embeddings is given, otherwise one input
    /// vector per line (whitespace- or comma-separated numbers).
    #[arg(long, conflicts_with = "toy_sample")]
    pub input: Option<PathBuf>,
    /// Index of a toy test sequence, generated from --seed and --task.
    #[arg(long, requires = "task")]
    pub toy_sample: Option<usize>,
    #[arg(long, value_parser = parse_task)]
    pub task: Option<ToyTask>,
    /// grad, gxi, occlusion, lrp, cd, or a full name such as occ-p-var or
    /// lrp-half@0.01.
    #[arg(long, default_value = "lrp")]
    pub method: String,
    /// LRP product rule: all, prop, abs or half.
    #[arg(long, default_value = "all")]
    pub variant: String,
    /// LRP stabilizer (default 0.001, 0.2 for prop).
    #[arg(long)]
    pub eps: Option<f64>,
    /// Occlusion score.
    #[arg(long, value_enum, default_value = "f-diff")]
    pub mode: ModeArg,
    /// Occlusion unit.
    #[arg(long, value_enum, default_value = "word")]
    pub granularity: GranularityArg,
    /// Class to explain: predicted, true, or a class index.
    #[arg(long, default_value = "predicted")]
    pub target: String,
    /// True class of a token or file input.
    #[arg(long)]
    pub label: Option<usize>,
    #[arg(long, value_enum, default_value = "html")]
    pub format: FormatArg,
}

fn resolve_method(a: &ExplainArgs) -> Result<Method> {
    let method = match a.method.trim().to_ascii_lowercase().as_str() {
        "occlusion" | "occ" => Method::Occlusion {
            mode: match a.mode {
                ModeArg::FDiff => OcclusionMode::FDiff,
                ModeArg::PDiff => OcclusionMode::PDiff,
            },
            granularity: match a.granularity {
                GranularityArg::Word => Granularity::Word,
                GranularityArg::Variable => Granularity::Variable,
            },
        },
        "lrp" => Method::lrp(a.variant.parse::<LrpRule>()?),
        other => other.parse()?,
    };
    match (a.eps, method) {
        (None, m) => Ok(m),
        (Some(e), Method::Lrp(cfg)) => {
            let cfg = lstm_relevance::LrpConfig { epsilon: e, ..cfg };
            cfg.validate()?;
            Ok(Method::Lrp(cfg))
        }
        (Some(_), m) => Err(Error::InvalidArgument(format!("--eps only applies to LRP, not {}", m.label()))),
    }
}

fn parse_vectors(text: &str) -> Result<InputSequence> {
    let mut rows = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::InvalidArgument(format!("input line {}: {e}", n + 1)))?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::InvalidArgument("input file has no vectors".into()));
    }
    InputSequence::from_rows(&rows)
}

/// The sequence to explain and, when known, its true class.
fn explain_input(a: &ExplainArgs, seed: u64, model: &ModelParams) -> Result<(InputSequence, Option<usize>)> {
    let embeddings = a.embeddings.as_ref().map(Embeddings::load).transpose()?;
    if let Some(n) = a.toy_sample {
        let task = a.task.expect("clap enforces --task");
        let cfg = ToyBenchConfig { seed, train_size: 1, val_size: 1, test_size: n + 1, ..ToyBenchConfig::new(task) };
        let s = cfg.splits()?.test.swap_remove(n);
        let tokens = (0..s.inputs.len())
            .map(|t| {
                let x = s.inputs.step(t);
                if t == s.a || t == s.b { format!("[{:.2}]", x[0]) } else { format!("{:.2}", x[1]) }
            })
            .collect();
        return Ok((s.inputs.with_tokens(tokens)?, Some(0)));
    }
    let text = match (&a.tokens, &a.input) {
        (Some(t), _) => t.clone(),
        (None, Some(p)) => fs::read_to_string(p)?,
        (None, None) => return Err(Error::InvalidArgument("give --tokens, --input or --toy-sample".into())),
    };
    let seq = match &embeddings {
        Some(emb) => {
            let tokens: Vec<&str> = text.split_whitespace().collect();
            if tokens.is_empty() {
                return Err(Error::InvalidArgument("no tokens to explain".into()));
            }
            emb.embed(&tokens)?
        }
        None => {
            let seq = parse_vectors(&text)?;
            let tokens = (0..seq.len()).map(|t| format!("x{t}")).collect();
            seq.with_tokens(tokens)?
        }
    };
    if seq.dim() != model.input_dim() {
        return Err(Error::Shape(format!(
            "input dimension {} does not match model input dimension {}",
            seq.dim(),
            model.input_dim()
        )));
    }
    Ok((seq, a.label))
}

fn explain_cmd(run: &mut RunDir, seed: u64, a: &ExplainArgs) -> Result<()> {
    let (model, _) = load_model(&a.model)?;
    let method = resolve_method(a)?;
    let (seq, label) = explain_input(a, seed, &model)?;
    let target = match a.target.as_str() {
        "predicted" => {
            if model.classes() == 1 { 0 } else { argmax(&model.logits(&seq)?) }
        }
        "true" => label.ok_or_else(|| Error::InvalidArgument("--target true needs --label for this input".into()))?,
        idx => idx
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("--target must be predicted, true or a class index, got {idx:?}")))?,
    };
    let map = explain(&model, &seq, target, &method)?;
    run.write("relevance.tsv", map.to_tsv(true))?;
    run.write("relevance.json", map.to_json()? + "\n")?;
    let tokens = map.tokens.clone().unwrap_or_default();
    let title = format!("{} for class {target}", method.label());
    let heat = render_heatmap_titled(&tokens, &map.per_word, a.format.format(), Some(title.as_str()))?;
    run.write(&format!("heatmap.{}", a.format.extension()), &heat)?;
    println!("# {title}; scores {:?}", map.logits);
    for (t, r) in map.per_word.iter().enumerate() {
        println!("{t}\t{}\t{r:.6}", tokens.get(t).map_or("", String::as_str));
    }
    if let FormatArg::Terminal = a.format {
        println!("{heat}");
    }
    Ok(())
}

// ---------------------------------------------------------- sentiment

#[derive(Args, Serialize, Clone)]
#[group(id = "training", multiple = true)]
pub struct SentimentTrainArgs {
    /// Corpus specification (TOML); defaults to the built-in one.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Corpus generation seed (default: --seed).
    #[arg(long)]
    pub corpus_seed: Option<u64>,
    /// Override the number of test sentences.
    #[arg(long)]
    pub test_sentences: Option<usize>,
    #[arg(long, default_value_t = 32)]
    pub hidden: usize,
    #[arg(long, default_value_t = 16)]
    pub embed_dim: usize,
    #[arg(long, default_value_t = 15)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.005)]
    pub lr: f64,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    /// Stop once validation accuracy reaches this value.
    #[arg(long, default_value_t = 0.95)]
    pub target_accuracy: f64,
}

#[derive(Serialize, Deserialize)]
struct SentimentInfo {
    corpus_seed: u64,
    classifier: ClassifierConfig,
    train_accuracy: f64,
    val_accuracy: f64,
    test_accuracy: f64,
}

fn train_sentiment(run: &mut RunDir, prefix: &str, seed: u64, a: &SentimentTrainArgs) -> Result<(SentimentModel, SentimentCorpus)> {
    let mut spec = match &a.corpus {
        Some(p) => CorpusSpec::from_toml(&fs::read_to_string(p)?)?,
        None => CorpusSpec::builtin(),
    };
    if let Some(n) = a.test_sentences {
        spec.test_sentences = n;
    }
    let corpus_seed = a.corpus_seed.unwrap_or(seed);
    let corpus = build_synthetic_corpus(&spec, corpus_seed)?;
    let cfg = ClassifierConfig {
        hidden: a.hidden,
        embed_dim: a.embed_dim,
        epochs: a.epochs,
        learning_rate: a.lr,
        batch_size: a.batch_size,
        target_accuracy: a.target_accuracy,
        seed,
        ..ClassifierConfig::default()
    };
    note!(
        "training classifier on {} sentences ({} validation, {} test)",
        corpus.train.len(),
        corpus.val.len(),
        corpus.test.len()
    );
    let (model, history) = train_classifier(&corpus, &cfg)?;
    let info = SentimentInfo {
        corpus_seed,
        classifier: cfg,
        train_accuracy: model.accuracy(&corpus.train)?,
        val_accuracy: model.accuracy(&corpus.val)?,
        test_accuracy: model.accuracy(&corpus.test)?,
    };
    let dir = run.path().join(prefix);
    fs::create_dir_all(&dir)?;
    model.save(&dir)?;
    let rel = |f: &str| if prefix.is_empty() { f.to_string() } else { format!("{prefix}/{f}") };
    run.adopt(&rel(lstm_relevance::sentiment::MODEL_FILE))?;
    run.adopt(&rel(lstm_relevance::sentiment::EMBEDDINGS_FILE))?;
    run.write(&rel(CORPUS_FILE), spec.to_toml()?)?;
    run.write(&rel(SENTIMENT_FILE), to_json(&info)?)?;
    let mut hist = String::from("epoch\tstep\ttrain_loss\tval_accuracy\n");
    for r in &history {
        hist.push_str(&format!("{}\t{}\t{:.6}\t{:.6}\n", r.epoch, r.step, r.train_loss, r.val_accuracy));
    }
    run.write(&rel("history.tsv"), hist)?;
    println!(
        "accuracy: train {:.4}, validation {:.4}, test {:.4}",
        info.train_accuracy, info.val_accuracy, info.test_accuracy
    );
    Ok((model, corpus))
}

/// A classifier directory from `train-sentiment`, or training settings for a
/// fresh one.
#[derive(Args, Serialize)]
pub struct SentimentSource {
    /// Directory written by train-sentiment. Without it a classifier is
    /// trained first and saved under model/.
    #[arg(long, conflicts_with = "training")]
    pub model_dir: Option<PathBuf>,
    #[command(flatten)]
    pub train: SentimentTrainArgs,
}

fn load_sentiment(dir: &Path) -> Result<(SentimentModel, SentimentCorpus)> {
    let model = SentimentModel::load(dir)?;
    let spec = CorpusSpec::from_toml(&fs::read_to_string(dir.join(CORPUS_FILE))?)?;
    let info: SentimentInfo = serde_json::from_str(&fs::read_to_string(dir.join(SENTIMENT_FILE))?)?;
    let corpus = build_synthetic_corpus(&spec, info.corpus_seed)?;
    if model.embeddings.tokens() != corpus.vocab.as_slice() {
        return Err(Error::Format(format!(
            "{}: embedding vocabulary does not match the regenerated corpus",
            dir.display()
        )));
    }
    Ok((model, corpus))
}

fn sentiment_source(run: &mut RunDir, seed: u64, src: &SentimentSource) -> Result<(SentimentModel, SentimentCorpus)> {
    match &src.model_dir {
        Some(dir) => load_sentiment(dir),
        None => train_sentiment(run, "model", seed, &src.train),
    }
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitArg {
    Test,
    Val,
}

fn split(corpus: &SentimentCorpus, s: SplitArg) -> &[Sentence] {
    match s {
        SplitArg::Test => &corpus.test,
        SplitArg::Val => &corpus.val,
    }
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RemovalArg {
    /// Delete the word.
    Discard,
    /// Keep the position with a zero embedding.
    Zero,
}

#[derive(Args, Serialize)]
pub struct PerturbArgs {
    #[command(flatten)]
    pub source: SentimentSource,
    /// Comma-separated rankers (random or method names). Must include random
    /// and occ-p, which anchor the normalized scores. Defaults to all methods.
    #[arg(long, value_delimiter = ',')]
    pub methods: Vec<Ranker>,
    #[arg(long, default_value_t = 3)]
    pub max_removed: usize,
    /// Shortest sentence in the decreasing-order track.
    #[arg(long, default_value_t = 10)]
    pub min_length: usize,
    #[arg(long, value_enum, default_value = "discard")]
    pub removal: RemovalArg,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
}

fn perturb(run: &mut RunDir, seed: u64, a: &PerturbArgs) -> Result<()> {
    let (model, corpus) = sentiment_source(run, seed, &a.source)?;
    let mut cfg = if a.methods.is_empty() { PerturbConfig::standard() } else { PerturbConfig::new(a.methods.clone()) };
    cfg.max_removed = a.max_removed;
    cfg.min_length = a.min_length;
    cfg.seed = seed;
    cfg.removal = match a.removal {
        RemovalArg::Discard => Removal::Discard,
        RemovalArg::Zero => Removal::ZeroEmbedding,
    };
    note!("ranking words with {} methods", cfg.rankers.len());
    let report = perturbation_experiment(&model, split(&corpus, a.split), &cfg)?;
    run.write("perturbation.tsv", report.table())?;
    run.write("perturbation.json", to_json(&report)?)?;
    print!("{}", report.table());
    Ok(())
}

#[derive(Args, Serialize)]
pub struct ReprArgs {
    #[command(flatten)]
    pub source: SentimentSource,
    /// Comma-separated representations: avg, a method name (weighted
    /// embeddings), or lrp-<rule>-ht. Defaults to the standard set.
    #[arg(long, value_delimiter = ',')]
    pub modes: Vec<ReprMode>,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
    /// Use only the first N sentences of the split.
    #[arg(long)]
    pub limit: Option<usize>,
    #[arg(long, default_value_t = 3)]
    pub components: usize,
    /// Keep raw principal coordinates instead of unit-variance ones.
    #[arg(long)]
    pub no_whiten: bool,
}

#[derive(Serialize)]
struct ReprSummary {
    mode: String,
    label: String,
    file: String,
    explained_first_two: f64,
    explained_third: f64,
    rank_deficient: bool,
}

fn file_slug(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' }).collect()
}

fn repr(run: &mut RunDir, seed: u64, a: &ReprArgs) -> Result<()> {
    let (model, corpus) = sentiment_source(run, seed, &a.source)?;
    let mut sents = split(&corpus, a.split);
    if let Some(n) = a.limit {
        sents = &sents[..n.min(sents.len())];
    }
    let modes = if a.modes.is_empty() { ReprMode::standard() } else { a.modes.clone() };
    let labels: Vec<usize> = sents.iter().map(|s| s.label).collect();
    let mut summary = Vec::new();
    for mode in &modes {
        note!("representation {}", mode.label());
        let reps = sentence_representations(&model, sents, mode)?;
        let pca = pca_project(&reps, a.components, !a.no_whiten)?;
        let file = format!("pca_{}.tsv", file_slug(&mode.to_string()));
        run.write(&file, pca.to_tsv(Some(&labels)))?;
        println!(
            "{}\tPC1+PC2 {:.4}\tPC3 {:.4}{}",
            mode.label(),
            pca.explained_first_two(),
            pca.explained_third(),
            if pca.rank_deficient { "\t(rank deficient)" } else { "" }
        );
        summary.push(ReprSummary {
            mode: mode.to_string(),
            label: mode.label(),
            file,
            explained_first_two: pca.explained_first_two(),
            explained_third: pca.explained_third(),
            rank_deficient: pca.rank_deficient,
        });
    }
    run.write("repr.json", to_json(&summary)?)?;
    Ok(())
}

#[derive(Args, Serialize)]
pub struct ComposeArgs {
    #[command(flatten)]
    pub source: SentimentSource,
    /// Positive and negative words kept, by class score.
    #[arg(long, default_value_t = 50)]
    pub top_words: usize,
    /// Share of bigrams a modifier must move to the expected class.
    #[arg(long, default_value_t = 0.4)]
    pub consistency: f64,
    /// LRP product rule for the relevances.
    #[arg(long, default_value = "all")]
    pub variant: String,
    #[arg(long)]
    pub eps: Option<f64>,
    /// Format of the average-relevance heatmaps.
    #[arg(long, value_enum, default_value = "html")]
    pub format: FormatArg,
}

fn compose(run: &mut RunDir, seed: u64, a: &ComposeArgs) -> Result<()> {
    let (model, corpus) = sentiment_source(run, seed, &a.source)?;
    let mut lrp = lstm_relevance::LrpConfig::new(a.variant.parse()?);
    if let Some(e) = a.eps {
        lrp.epsilon = e;
    }
    lrp.validate()?;
    let cfg = CompositionConfig { top_words: a.top_words, consistency: a.consistency, lrp };
    let report = composition_analysis(&model, &corpus, &cfg)?;
    run.write("composition.tsv", report.table())?;
    run.write("composition.json", to_json(&report)?)?;
    for row in &report.rows {
        if row.count() == 0 {
            continue;
        }
        let heat = render_heatmap(row.kind.slots(), &row.mean, a.format.format())?;
        let name = format!("composition_{}.{}", file_slug(row.kind.name()), a.format.extension());
        run.write(&name, heat)?;
    }
    print!("{}", report.table());
    Ok(())
}
