//! Command-line entry point.
//!
//! Exit codes: 0 success, 1 usage, 2 invalid data or configuration,
//! 3 runtime failure.

use std::collections::{BTreeMap, HashMap};
use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::data::{
    filter_training, load_corpus, make_batch, parse_stopwords, read_corpus, save_corpus, synth_generate, Instance,
    LoadedCorpus, SynthConfig, Vocabulary, DEFAULT_STOPWORDS,
};
use crate::decode::{agreement, EvalOptions, SubsetPartition};
use crate::model::{Location, Model, ModelConfig};
use crate::nn::{Mode, ParameterStore};
use crate::objective::target_mass;
use crate::supervision::{build, NarrativeConfig, SupervisionKind, SupervisionMatrix};
use crate::train::{evaluate_model, multi_seed, run_dir, train_loop, TrainConfig};
use crate::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "bidaf-sa",
    version,
    about = "BiDAF reading comprehension with supervised self-attention"
)]
pub struct Cli {
    /// Where to write the run manifest (defaults next to the command's output).
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic annotated corpus.
    Synth(SynthArgs),
    /// Check a corpus file against the record format.
    Validate(ValidateArgs),
    /// Build sparse supervision matrices and report their density.
    BuildSupervision(BuildArgs),
    /// Train one model per seed.
    Train(TrainArgs),
    /// Score a trained model on a corpus.
    Eval(EvalArgs),
    /// Dump every attention head for one instance.
    InspectAttention(InspectArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub min_entities: Option<usize>,
    #[arg(long)]
    pub max_entities: Option<usize>,
    #[arg(long)]
    pub pronoun_rate: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    pub corpus: PathBuf,
    /// Also reject records without an annotation.
    #[arg(long)]
    pub require_annotation: bool,
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Comma-separated supervision types.
    #[arg(long = "type", value_delimiter = ',', required = true)]
    pub kinds: Vec<SupervisionKind>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// TOML file with `[model]` and `[train]` tables.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub dev: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    pub seeds: Vec<u64>,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides `train.epochs`.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Stopword list used to filter training answers.
    #[arg(long)]
    pub stopwords: Option<PathBuf>,
    /// Keep every training instance.
    #[arg(long)]
    pub no_filter: bool,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Directory written by `train`.
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Weights to load instead of the seed's best averaged checkpoint.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long)]
    pub corpus: PathBuf,
    /// Output directory; defaults to `<run>/seed-<seed>/eval`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub subsets: Vec<SubsetPartition>,
    /// Predictions file to compare against.
    #[arg(long)]
    pub agree: Option<PathBuf>,
    #[arg(long)]
    pub lowercase: bool,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub id: String,
    #[arg(long)]
    pub out: PathBuf,
    /// Use freshly initialized weights instead of a checkpoint.
    #[arg(long)]
    pub untrained: bool,
}

/// Model and training settings as stored in a config file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string(self).map_err(|e| Error::Config(e.to_string()))?;
        fs::write(path, text)?;
        Ok(())
    }
}

/// Record of how a command was invoked.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub config: Option<PathBuf>,
    pub data: Vec<PathBuf>,
    pub seeds: Vec<u64>,
    pub out: Option<PathBuf>,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
    pub version: String,
}

impl RunManifest {
    fn write(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent)?;
        }
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut w, self)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }
}

/// Corpus line of `build-supervision` output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupervisionRecord {
    pub id: String,
    #[serde(flatten)]
    pub matrix: SupervisionMatrix,
}

/// Line of a predictions file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub prediction: String,
    pub answer: String,
    pub correct: bool,
    pub probability: f64,
}

/// One head in an `inspect-attention` dump.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadDump {
    pub location: Location,
    pub layer: usize,
    pub head: usize,
    pub supervision: Option<SupervisionKind>,
    /// Row-major, one inner list per query position.
    pub attention: Vec<Vec<f64>>,
    /// Attention mass on gold targets per row; null for rows without targets.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub target_mass: Option<Vec<Option<f64>>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionDump {
    pub id: String,
    pub context: Vec<String>,
    pub query: Vec<String>,
    pub heads: Vec<HeadDump>,
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Data(_) | Error::Annotation(_) | Error::Checkpoint(_) | Error::Json(_) => EXIT_DATA,
        Error::Io(e) if e.kind() == std::io::ErrorKind::NotFound => EXIT_DATA,
        Error::Io(_) | Error::Tensor(_) | Error::Objective(_) | Error::Train(_) => EXIT_RUNTIME,
    }
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .try_init();
    let argv: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    match execute(&cli, argv) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn manifest(cli: &Cli, argv: Vec<String>) -> RunManifest {
    let (command, config, data, seeds, out) = match &cli.command {
        Command::Synth(a) => ("synth", None, vec![], vec![a.seed], Some(a.out.clone())),
        Command::Validate(a) => ("validate", None, vec![a.corpus.clone()], vec![], None),
        Command::BuildSupervision(a) => (
            "build-supervision",
            None,
            vec![a.corpus.clone()],
            vec![],
            Some(a.out.clone()),
        ),
        Command::Train(a) => (
            "train",
            Some(a.config.clone()),
            vec![a.train.clone(), a.dev.clone()],
            a.seeds.clone(),
            Some(a.out.clone()),
        ),
        Command::Eval(a) => (
            "eval",
            Some(a.run.run.join("config.toml")),
            vec![a.corpus.clone()],
            vec![a.run.seed],
            Some(eval_dir(a)),
        ),
        Command::InspectAttention(a) => (
            "inspect-attention",
            Some(a.run.run.join("config.toml")),
            vec![a.corpus.clone()],
            vec![a.run.seed],
            Some(a.out.clone()),
        ),
    };
    RunManifest {
        command: command.into(),
        argv,
        config,
        data,
        seeds,
        out,
        timestamp: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        version: env!("CARGO_PKG_VERSION").into(),
    }
}

fn manifest_path(cli: &Cli) -> Option<PathBuf> {
    if let Some(p) = &cli.manifest {
        return Some(p.clone());
    }
    let beside = |p: &Path| {
        let mut name = p.file_name().unwrap_or_default().to_os_string();
        name.push(".manifest.json");
        p.with_file_name(name)
    };
    match &cli.command {
        Command::Synth(a) => Some(beside(&a.out)),
        Command::Validate(_) => None,
        Command::BuildSupervision(a) => Some(beside(&a.out)),
        Command::Train(a) => Some(a.out.join("manifest.json")),
        Command::Eval(a) => Some(eval_dir(a).join("manifest.json")),
        Command::InspectAttention(a) => Some(beside(&a.out)),
    }
}

fn execute(cli: &Cli, argv: Vec<String>) -> Result<i32> {
    if let Some(path) = manifest_path(cli) {
        manifest(cli, argv).write(&path)?;
    }
    match &cli.command {
        Command::Synth(a) => synth(a),
        Command::Validate(a) => validate(a),
        Command::BuildSupervision(a) => build_supervision(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::InspectAttention(a) => inspect(a),
    }
}

fn synth(a: &SynthArgs) -> Result<i32> {
    let mut config = SynthConfig::default();
    if let Some(v) = a.min_entities {
        config.min_entities = v;
    }
    if let Some(v) = a.max_entities {
        config.max_entities = v;
    }
    if let Some(v) = a.pronoun_rate {
        config.pronoun_rate = v;
    }
    if a.count == 0 || config.min_entities < 2 || config.min_entities > config.max_entities {
        return Err(Error::Config(
            "need count >= 1 and 2 <= min_entities <= max_entities".into(),
        ));
    }
    if !(0.0..=1.0).contains(&config.pronoun_rate) {
        return Err(Error::Config("pronoun_rate must lie in [0, 1]".into()));
    }
    let instances = synth_generate(a.count, a.seed, &config);
    save_corpus(&a.out, &instances)?;
    println!("wrote {} instances to {}", instances.len(), a.out.display());
    Ok(EXIT_OK)
}

fn validate(a: &ValidateArgs) -> Result<i32> {
    let file = File::open(&a.corpus).map_err(|e| Error::Data(format!("cannot open {}: {e}", a.corpus.display())))?;
    let (mut valid, mut rejected) = (0usize, 0usize);
    for (line, parsed) in read_corpus(BufReader::new(file)) {
        let outcome = parsed.and_then(|inst| {
            if a.require_annotation && inst.annotation.is_none() {
                Err(format!("record {} has no annotation", inst.id))
            } else {
                Ok(())
            }
        });
        match outcome {
            Ok(()) => valid += 1,
            Err(reason) => {
                rejected += 1;
                println!("line {line}: {reason}");
            }
        }
    }
    println!("{valid} valid, {rejected} rejected");
    Ok(if rejected == 0 { EXIT_OK } else { EXIT_DATA })
}

#[derive(Default)]
struct Density {
    instances: usize,
    k_sum: usize,
    entries: usize,
    cells: usize,
}

fn build_supervision(a: &BuildArgs) -> Result<i32> {
    let corpus = load_corpus(&a.corpus)?;
    for r in &corpus.rejected {
        eprintln!("skipped line {}: {}", r.line, r.reason);
    }
    let narrative = NarrativeConfig::default();
    let mut stats: BTreeMap<SupervisionKind, Density> = BTreeMap::new();
    let mut skipped = 0;
    let mut out = BufWriter::new(File::create(&a.out)?);
    for inst in &corpus.instances {
        let Some(ann) = &inst.annotation else {
            eprintln!("skipped {}: no annotation", inst.id);
            skipped += 1;
            continue;
        };
        for &kind in &a.kinds {
            let matrix = build(kind, ann, &narrative)?;
            let d = stats.entry(kind).or_default();
            d.instances += 1;
            d.k_sum += matrix.k();
            d.entries += matrix.num_entries();
            d.cells += matrix.n * matrix.n;
            serde_json::to_writer(
                &mut out,
                &SupervisionRecord {
                    id: inst.id.clone(),
                    matrix,
                },
            )?;
            out.write_all(b"\n")?;
        }
    }
    out.flush()?;
    println!(
        "{:<10} {:>9} {:>8} {:>12} {:>9}",
        "type", "instances", "mean_k", "targets/row", "density"
    );
    for (kind, d) in &stats {
        let per = |x: usize, y: usize| if y == 0 { 0.0 } else { x as f64 / y as f64 };
        println!(
            "{:<10} {:>9} {:>8.3} {:>12.3} {:>9.4}",
            kind.as_str(),
            d.instances,
            per(d.k_sum, d.instances),
            per(d.entries, d.k_sum),
            per(d.entries, d.cells)
        );
    }
    if corpus.rejected.len() + skipped > 0 {
        println!(
            "{} lines rejected, {} instances without annotation",
            corpus.rejected.len(),
            skipped
        );
    }
    if stats.is_empty() {
        return Err(Error::Data("no annotated instance to build from".into()));
    }
    Ok(EXIT_OK)
}

fn load_strict(path: &Path) -> Result<Vec<Instance>> {
    let LoadedCorpus { instances, rejected } = load_corpus(path)?;
    if let Some(first) = rejected.first() {
        return Err(Error::Data(format!(
            "{}: {} invalid lines, first at line {}: {}",
            path.display(),
            rejected.len(),
            first.line,
            first.reason
        )));
    }
    if instances.is_empty() {
        return Err(Error::Data(format!("{} holds no instances", path.display())));
    }
    Ok(instances)
}

fn train(a: &TrainArgs) -> Result<i32> {
    let mut config = RunConfig::load(&a.config)?;
    if let Some(e) = a.epochs {
        config.train.epochs = e;
    }
    config.train.validate()?;
    let raw = load_strict(&a.train)?;
    let dev = load_strict(&a.dev)?;
    let train: Vec<Instance> = if a.no_filter {
        raw
    } else {
        let text = match &a.stopwords {
            Some(p) => fs::read_to_string(p)?,
            None => DEFAULT_STOPWORDS.to_string(),
        };
        let stop = parse_stopwords(&text);
        let before = raw.len();
        let kept: Vec<Instance> = filter_training(raw, &stop).collect();
        log::info!("kept {} of {} training instances", kept.len(), before);
        kept
    };
    if train.is_empty() {
        return Err(Error::Data("no training instance survives filtering".into()));
    }
    let vocab = Vocabulary::build(&train, config.train.min_count);
    config.model.word_vocab = vocab.num_words();
    config.model.char_vocab = vocab.num_chars();
    config.model.validate()?;
    fs::create_dir_all(&a.out)?;
    config.save(&a.out.join("config.toml"))?;
    serde_json::to_writer(BufWriter::new(File::create(a.out.join("vocab.json"))?), &vocab)?;

    let (summary, outcomes) = multi_seed(&a.seeds, |seed| {
        let (model, store) = Model::assemble(&config.model, seed)?;
        train_loop(
            &model,
            store,
            &train,
            &dev,
            &vocab,
            &config.train,
            seed,
            Some(&run_dir(&a.out, seed)),
        )
    })?;
    let mut w = BufWriter::new(File::create(a.out.join("summary.json"))?);
    serde_json::to_writer_pretty(&mut w, &summary)?;
    w.write_all(b"\n")?;
    w.flush()?;
    for o in &outcomes {
        println!(
            "seed {}: dev accuracy {:.4} at epoch {} ({} epochs run)",
            o.seed, o.best_dev_accuracy, o.best_epoch, o.epochs_run
        );
    }
    for (seed, why) in &summary.failed {
        println!("seed {seed}: failed: {why}");
    }
    println!(
        "mean {:.4}  max {:.4}  std {:.4}",
        summary.mean, summary.max, summary.std
    );
    Ok(if summary.failed.is_empty() {
        EXIT_OK
    } else {
        EXIT_RUNTIME
    })
}

/// Config, vocabulary and weights of one trained seed.
pub fn load_run(args: &RunArgs, untrained: bool) -> Result<(Model, ParameterStore, Vocabulary)> {
    let config = RunConfig::load(&args.run.join("config.toml"))?;
    let vocab_path = args.run.join("vocab.json");
    let vocab: Vocabulary = serde_json::from_reader(BufReader::new(
        File::open(&vocab_path).map_err(|e| Error::Data(format!("cannot open {}: {e}", vocab_path.display())))?,
    ))?;
    let (model, fresh) = Model::assemble(&config.model, args.seed)?;
    if untrained {
        return Ok((model, fresh, vocab));
    }
    let ckpt = args
        .checkpoint
        .clone()
        .unwrap_or_else(|| run_dir(&args.run, args.seed).join("best.ckpt"));
    let file = File::open(&ckpt).map_err(|e| Error::Checkpoint(format!("cannot open {}: {e}", ckpt.display())))?;
    let store = ParameterStore::read_checkpoint(BufReader::new(file))?;
    model.check_parameters(&store)?;
    Ok((model, store, vocab))
}

fn eval_dir(a: &EvalArgs) -> PathBuf {
    a.out
        .clone()
        .unwrap_or_else(|| run_dir(&a.run.run, a.run.seed).join("eval"))
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRecord>> {
    let file = File::open(path).map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
    BufReader::new(file)
        .lines()
        .filter(|l| l.as_ref().map_or(true, |l| !l.trim().is_empty()))
        .map(|l| Ok(serde_json::from_str(&l?)?))
        .collect()
}

fn eval(a: &EvalArgs) -> Result<i32> {
    let (model, store, vocab) = load_run(&a.run, false)?;
    let instances = load_strict(&a.corpus)?;
    let options = EvalOptions {
        lowercase: a.lowercase,
        subsets: a.subsets.clone(),
    };
    let (report, preds) = evaluate_model(&model, &store, &instances, &vocab, 64, &options)?;
    let dir = eval_dir(a);
    fs::create_dir_all(&dir)?;
    let records: Vec<PredictionRecord> = instances
        .iter()
        .zip(&preds)
        .map(|(inst, p)| PredictionRecord {
            id: inst.id.clone(),
            prediction: p.predicted_word.clone(),
            answer: inst.answer.clone(),
            correct: crate::data::same_word(&p.predicted_word, &inst.answer, a.lowercase),
            probability: p.summed_prob,
        })
        .collect();
    let mut w = BufWriter::new(File::create(dir.join("predictions.jsonl"))?);
    for r in &records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;

    let agree = match &a.agree {
        Some(path) => {
            let other: HashMap<String, String> = read_predictions(path)?
                .into_iter()
                .map(|r| (r.id, r.prediction))
                .collect();
            let theirs = records
                .iter()
                .map(|r| {
                    other
                        .get(&r.id)
                        .cloned()
                        .ok_or_else(|| Error::Data(format!("{} has no prediction for {}", path.display(), r.id)))
                })
                .collect::<Result<Vec<_>>>()?;
            let ours: Vec<String> = records.iter().map(|r| r.prediction.clone()).collect();
            Some(agreement(&ours, &theirs)?)
        }
        None => None,
    };
    #[derive(Serialize)]
    struct Summary<'a> {
        corpus: &'a Path,
        #[serde(flatten)]
        report: &'a crate::decode::EvalReport,
        #[serde(skip_serializing_if = "Option::is_none")]
        agreement: Option<f64>,
    }
    let mut w = BufWriter::new(File::create(dir.join("eval.json"))?);
    serde_json::to_writer_pretty(
        &mut w,
        &Summary {
            corpus: &a.corpus,
            report: &report,
            agreement: agree,
        },
    )?;
    w.write_all(b"\n")?;
    w.flush()?;
    print!("{}", report.render());
    if let Some(x) = agree {
        println!("agreement {x:.4}");
    }
    Ok(EXIT_OK)
}

fn to_rows(t: &crate::tensor::Tensor) -> Vec<Vec<f64>> {
    let n = t.shape()[0];
    (0..n).map(|i| t.row(i).to_vec()).collect()
}

fn inspect(a: &InspectArgs) -> Result<i32> {
    let (model, store, vocab) = load_run(&a.run, a.untrained)?;
    let corpus = load_corpus(&a.corpus)?;
    let inst = corpus
        .instances
        .iter()
        .find(|i| i.id == a.id)
        .ok_or_else(|| Error::Data(format!("no instance `{}` in {}", a.id, a.corpus.display())))?;
    let kinds = if inst.annotation.is_some() {
        model.config.supervision_kinds()
    } else {
        Vec::new()
    };
    let narrative = NarrativeConfig::default();
    let batch = make_batch(&[inst], &vocab, &kinds, &narrative)?;
    let fwd = model.forward(&store, &batch, Mode::Eval, 0)?;
    let input = batch.instance(0);
    let attention = &fwd.attention[0];
    let mut heads = Vec::new();
    for (location, layers) in [(Location::Early, &attention.early), (Location::Late, &attention.late)] {
        for (layer, hs) in layers.iter().enumerate() {
            for (head, t) in hs.iter().enumerate() {
                let kind = model
                    .config
                    .supervision
                    .iter()
                    .find(|s| s.location == location && s.layer == layer && s.head == head)
                    .map(|s| s.kind);
                let mass = kind.and_then(|k| input.supervision.get(&k)).map(|m| target_mass(t, m));
                heads.push(HeadDump {
                    location,
                    layer,
                    head,
                    supervision: kind,
                    attention: to_rows(t),
                    target_mass: mass,
                });
            }
        }
    }
    let dump = AttentionDump {
        id: inst.id.clone(),
        context: inst.context.clone(),
        query: inst.query.clone(),
        heads,
    };
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let mut w = BufWriter::new(File::create(&a.out)?);
    serde_json::to_writer(&mut w, &dump)?;
    w.write_all(b"\n")?;
    w.flush()?;
    println!(
        "wrote {} heads for {} to {}",
        dump.heads.len(),
        dump.id,
        a.out.display()
    );
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn run_config_round_trip() {
        let mut c = RunConfig::default();
        c.model.variant = crate::model::Variant::Both;
        c.model.supervision = vec![c.model.default_assignment(SupervisionKind::CorefAll)];
        let text = toml::to_string(&c).unwrap();
        assert_eq!(toml::from_str::<RunConfig>(&text).unwrap(), c);
        assert!(toml::from_str::<RunConfig>("[model]\nbogus = 1\n").is_err());
    }

    #[test]
    fn usage_errors() {
        assert_eq!(run(["bidaf-sa"]), EXIT_USAGE);
        assert_eq!(
            run([
                "bidaf-sa",
                "build-supervision",
                "--corpus",
                "x",
                "--type",
                "nope",
                "--out",
                "y"
            ]),
            EXIT_USAGE
        );
        assert_eq!(run(["bidaf-sa", "--help"]), EXIT_OK);
    }
}
