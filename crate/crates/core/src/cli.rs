//! Command-line front end. `run` parses arguments, executes one subcommand
//! and returns the process exit code: 0 on success, 1 on runtime or numerical
//! failure, 2 on usage or input errors.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::bench::{run_bench, BenchMode};
use crate::config::RunConfigFile;
use crate::confusion::confusion_matrix;
use crate::dataset::{generate_synthetic, load_manifest, DatasetManifest, FeatureStore};
use crate::error::Error;
use crate::learners::LearnerKind;
use crate::meta::{
    evaluate, load_checkpoint, run_training, EvalOptions, Model, TrainingOutcome, CHECKPOINT_FILE, LOG_FILE,
};
use crate::protocol::{make_split, split_stats, EpisodeSpec, SplitAssignment, SplitCounts, SplitFile, SplitMode, Subset};

#[derive(Debug, Parser)]
#[command(name = "fewshot", version, about = "Few-shot spoken intent classification with episodic meta-learning")]
pub struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// JSON run configuration; flags override its fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for the command's own randomness.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus (manifest + feature archives).
    Synth(SynthArgs),
    /// Build a class-disjoint split and print its statistics.
    Split(SplitArgs),
    /// Meta-train an encoder.
    Train(TrainArgs),
    /// Evaluate a checkpoint on sampled episodes.
    Eval(EvalArgs),
    /// Supervised MLP trained on the m shots of each episode.
    Baseline(BenchArgs),
    /// Supervised MLP trained on all records of the episode classes.
    Skyline(BenchArgs),
    /// Episode-averaged confusion matrix with plot files.
    Confusion(ConfusionArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub per_class: Option<usize>,
    #[arg(long)]
    pub speakers: Option<usize>,
    #[arg(long)]
    pub feature_dim: Option<usize>,
    #[arg(long)]
    pub separation: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// `google-commands` (18/5/5) or `fluent` (15/8/8).
    #[arg(long)]
    pub preset: Option<String>,
    /// Explicit class counts as `train,val,test`.
    #[arg(long, value_delimiter = ',')]
    pub counts: Option<Vec<usize>>,
    /// `SPO` or `NoSPO`.
    #[arg(long)]
    pub mode: Option<SplitMode>,
    /// No-SPO speaker shares as `train,val,test`.
    #[arg(long, value_delimiter = ',')]
    pub speaker_ratios: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub split: PathBuf,
    /// Manifest to use instead of the one recorded in the split file.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub learner: Option<LearnerKind>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub episodes_per_epoch: Option<usize>,
    #[arg(long)]
    pub episodes_per_batch: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Classes per training episode.
    #[arg(long)]
    pub train_n: Option<usize>,
    /// Support shots per class in training episodes.
    #[arg(long)]
    pub train_m: Option<usize>,
    /// Queries per class in training episodes.
    #[arg(long)]
    pub train_q: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub embedding_dim: Option<usize>,
    #[arg(long)]
    pub val_episodes: Option<usize>,
    /// ReLU after the projection.
    #[arg(long)]
    pub relu: bool,
}

#[derive(Debug, Args)]
pub struct EpisodeArgs {
    /// Classes per episode.
    #[arg(long = "n")]
    pub n_way: Option<usize>,
    /// Support shots per class.
    #[arg(long = "m")]
    pub m_shot: Option<usize>,
    /// Queries per class (default: m).
    #[arg(long = "q")]
    pub q_query: Option<usize>,
    #[arg(long)]
    pub subset: Option<Subset>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub ckpt: PathBuf,
    #[command(flatten)]
    pub episode: EpisodeArgs,
    #[arg(long)]
    pub episodes: Option<usize>,
    #[arg(long)]
    pub learner: Option<LearnerKind>,
    /// Permute query labels within each episode (chance calibration).
    #[arg(long)]
    pub shuffle_labels: bool,
    /// Include per-episode accuracies in the report.
    #[arg(long)]
    pub per_episode: bool,
    /// Report path (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub episode: EpisodeArgs,
    #[arg(long)]
    pub draws: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ConfusionArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub ckpt: PathBuf,
    #[command(flatten)]
    pub episode: EpisodeArgs,
    #[arg(long)]
    pub episodes: Option<usize>,
    #[arg(long)]
    pub learner: Option<LearnerKind>,
    /// Output directory for confusion.{json,csv,dat,gp}.
    #[arg(long)]
    pub out: PathBuf,
}

pub const SYNTH_CONFIG_FILE: &str = "synth_config.json";

/// An error plus the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: Error,
}

type CliResult<T> = std::result::Result<T, Failure>;

/// Errors while reading and validating inputs: exit 2 unless numerical.
fn input<T>(r: crate::Result<T>) -> CliResult<T> {
    r.map_err(|error| Failure {
        code: if error.is_numerical() { 1 } else { 2 },
        error,
    })
}

/// Errors after validation (compute, writing outputs): exit 1.
fn runtime<T>(r: crate::Result<T>) -> CliResult<T> {
    r.map_err(|error| Failure { code: 1, error })
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        error: Error::InvalidArgument(msg.into()),
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code() as u8;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {}", f.error);
            f.code
        }
    }
}

pub fn execute(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(invalid("--threads must be positive"));
        }
        // a second call in the same process (tests) keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let cfg = match &cli.config {
        Some(p) => input(RunConfigFile::load(p))?,
        None => RunConfigFile::default(),
    };
    match cli.command {
        Command::Synth(a) => cmd_synth(cfg, cli.seed, a),
        Command::Split(a) => cmd_split(cfg, cli.seed, a),
        Command::Train(a) => cmd_train(cfg, cli.seed, a),
        Command::Eval(a) => cmd_eval(cfg, cli.seed, a),
        Command::Baseline(a) => cmd_bench(cfg, cli.seed, a, BenchMode::Baseline),
        Command::Skyline(a) => cmd_bench(cfg, cli.seed, a, BenchMode::Skyline),
        Command::Confusion(a) => cmd_confusion(cfg, cli.seed, a),
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let text = runtime(serde_json::to_string_pretty(value).map_err(Error::from))?;
    runtime(fs::write(path, text + "\n").map_err(|e| Error::io(path, e)))
}

fn create_dir(path: &Path) -> CliResult<()> {
    runtime(fs::create_dir_all(path).map_err(|e| Error::io(path, e)))
}

/// Report body followed by the configuration that produced it.
#[derive(Serialize)]
struct WithConfig<'a, T: Serialize> {
    #[serde(flatten)]
    body: &'a T,
    config: &'a RunConfigFile,
}

fn cmd_synth(mut cfg: RunConfigFile, seed: Option<u64>, a: SynthArgs) -> CliResult<()> {
    let s = &mut cfg.synth;
    if let Some(v) = seed {
        s.seed = v;
    }
    if let Some(v) = a.classes {
        s.n_classes = v;
    }
    if let Some(v) = a.per_class {
        s.utterances_per_class = v;
    }
    if let Some(v) = a.speakers {
        s.speaker_pool = v;
    }
    if let Some(v) = a.feature_dim {
        s.feature_dim = v;
    }
    if let Some(v) = a.separation {
        s.class_separation = v;
    }
    input(cfg.validate())?;
    let manifest = runtime(generate_synthetic(&cfg.synth, &a.out))?;
    write_json(&a.out.join(SYNTH_CONFIG_FILE), &cfg)?;
    println!(
        "wrote {} utterances ({} classes, {} speakers) to {}",
        manifest.len(),
        manifest.classes.len(),
        manifest.speakers.len(),
        a.out.display()
    );
    Ok(())
}

// a closed pipe (`fewshot eval ... | head`) is not an error
fn print_json<T: Serialize>(body: &T) -> CliResult<()> {
    use std::io::Write;
    let text = runtime(serde_json::to_string_pretty(body).map_err(Error::from))?;
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => runtime(Err(Error::io("<stdout>", e))),
        _ => Ok(()),
    }
}

fn print_stats(split: &SplitAssignment, manifest: &DatasetManifest) {
    println!("{:<8}{:>10}{:>14}{:>10}", "subset", "classes", "audio_files", "speakers");
    for s in split_stats(split, manifest) {
        println!("{:<8}{:>10}{:>14}{:>10}", s.subset.to_string(), s.classes, s.audio_files, s.speakers);
    }
}

fn cmd_split(mut cfg: RunConfigFile, seed: Option<u64>, a: SplitArgs) -> CliResult<()> {
    let sec = &mut cfg.split;
    if let Some(v) = seed {
        sec.seed = v;
    }
    if let Some(p) = a.preset {
        if SplitCounts::preset(&p).is_none() {
            return Err(invalid(format!("unknown split preset `{p}`")));
        }
        sec.preset = p;
        sec.counts = None;
    }
    if let Some(c) = a.counts {
        if c.len() != 3 {
            return Err(invalid("--counts takes three values: train,val,test"));
        }
        sec.counts = Some(SplitCounts::new(c[0], c[1], c[2]));
    }
    if let Some(m) = a.mode {
        sec.mode = m;
    }
    if let Some(r) = a.speaker_ratios {
        if r.len() != 3 {
            return Err(invalid("--speaker-ratios takes three values: train,val,test"));
        }
        sec.speaker_ratios = Some([r[0], r[1], r[2]]);
    }
    input(cfg.validate())?;
    let path = input(fs::canonicalize(&a.manifest).map_err(|e| Error::io(&a.manifest, e)))?;
    let manifest = input(load_manifest(&path))?;
    // carry the generator settings along when the corpus came from `synth`
    let synth_cfg = path.with_file_name(SYNTH_CONFIG_FILE);
    if synth_cfg.exists() {
        cfg.synth = input(RunConfigFile::load(&synth_cfg))?.synth;
    }
    let sec = &cfg.split;
    let split = input(make_split(
        &manifest,
        input(sec.resolved_counts())?,
        sec.mode,
        sec.seed,
        sec.speaker_ratios,
    ))?;
    let mut file = split.to_file(&manifest);
    file.config = Some(runtime(serde_json::to_value(&cfg).map_err(Error::from))?);
    write_json(&a.out, &file)?;
    print_stats(&split, &manifest);
    Ok(())
}

struct Data {
    manifest: DatasetManifest,
    split: SplitAssignment,
    store: FeatureStore,
}

/// Loads the split and its data. The synth and split sections recorded in
/// the split file replace those of `cfg`, so reports describe the real data.
fn load_data(args: &DataArgs, cfg: &mut RunConfigFile) -> CliResult<Data> {
    let file = input(SplitFile::load(&args.split))?;
    if let Some(recorded) = file.config.clone() {
        if let Ok(rc) = serde_json::from_value::<RunConfigFile>(recorded) {
            cfg.synth = rc.synth;
            cfg.split = rc.split;
        }
    }
    let manifest_path = match (&args.manifest, &file.manifest) {
        (Some(p), _) => p.clone(),
        (None, Some(p)) if p.is_absolute() => p.clone(),
        (None, Some(p)) => args.split.parent().unwrap_or(Path::new("")).join(p),
        (None, None) => return Err(invalid("split file names no manifest; pass --manifest")),
    };
    let manifest = input(load_manifest(&manifest_path))?;
    let split = input(SplitAssignment::from_file(&file, &manifest))?;
    let store = input(FeatureStore::load(&manifest))?;
    Ok(Data { manifest, split, store })
}

fn apply_episode(args: &EpisodeArgs, n: &mut usize, m: &mut usize, q: &mut Option<usize>, subset: &mut Subset) {
    if let Some(v) = args.n_way {
        *n = v;
    }
    if let Some(v) = args.m_shot {
        *m = v;
    }
    if args.q_query.is_some() {
        *q = args.q_query;
    }
    if let Some(v) = args.subset {
        *subset = v;
    }
}

#[derive(Serialize)]
struct TrainSummary<'a> {
    best_epoch: usize,
    best_val: &'a crate::meta::EvalReport,
    log: &'a [crate::meta::TrainLogEntry],
}

fn cmd_train(mut cfg: RunConfigFile, seed: Option<u64>, a: TrainArgs) -> CliResult<()> {
    if let Some(v) = seed {
        cfg.train.seed = v;
    }
    if let Some(v) = a.learner {
        cfg.learner.kind = v;
    }
    let t = &mut cfg.train;
    if let Some(v) = a.epochs {
        t.epochs = v;
    }
    if let Some(v) = a.episodes_per_epoch {
        t.episodes_per_epoch = v;
    }
    if let Some(v) = a.episodes_per_batch {
        t.episodes_per_batch = v;
    }
    if let Some(v) = a.alpha {
        t.alpha = v;
    }
    if let Some(v) = a.train_n {
        t.n_way_train = v;
    }
    if let Some(v) = a.train_m {
        t.m_shot_train = v;
    }
    if a.train_q.is_some() {
        t.q_query_train = a.train_q;
    }
    if let Some(v) = a.lr {
        t.lr = v;
    }
    if let Some(v) = a.embedding_dim {
        t.embedding_dim = v;
    }
    if let Some(v) = a.val_episodes {
        t.val_episodes = v;
    }
    t.relu |= a.relu;
    input(cfg.validate())?;
    let data = load_data(&a.data, &mut cfg)?;
    let tc = cfg.train_config();
    input(tc.train_spec().check_feasible(&data.split))?;
    input(tc.val_spec().check_feasible(&data.split))?;
    create_dir(&a.out)?;
    let out: TrainingOutcome = runtime(run_training(&data.store, &data.split, &tc, Some(&a.out)))?;
    write_json(
        &a.out.join("train_summary.json"),
        &WithConfig {
            body: &TrainSummary {
                best_epoch: out.best_epoch,
                best_val: &out.best_val,
                log: &out.log,
            },
            config: &cfg,
        },
    )?;
    eprintln!(
        "best epoch {} (val {:.4} ± {:.4}); wrote {}, {}",
        out.best_epoch,
        out.best_val.mean_accuracy,
        out.best_val.ci95_halfwidth,
        a.out.join(LOG_FILE).display(),
        a.out.join(CHECKPOINT_FILE).display()
    );
    drop(data.manifest);
    Ok(())
}

fn load_model(path: &Path, cfg: &RunConfigFile, store: &FeatureStore) -> CliResult<Model> {
    let model = Model::from_checkpoint(input(load_checkpoint(path))?, cfg.train.relu);
    if model.encoder.feature_dim() != store.feature_dim {
        return Err(Failure {
            code: 2,
            error: Error::Shape(format!(
                "checkpoint {} expects feature_dim {}, data has {}",
                path.display(),
                model.encoder.feature_dim(),
                store.feature_dim
            )),
        });
    }
    Ok(model)
}

fn cmd_eval(mut cfg: RunConfigFile, seed: Option<u64>, a: EvalArgs) -> CliResult<()> {
    let e = &mut cfg.eval;
    if let Some(v) = seed {
        e.seed = v;
    }
    apply_episode(&a.episode, &mut e.n_way, &mut e.m_shot, &mut e.q_query, &mut e.subset);
    if let Some(v) = a.episodes {
        e.episodes = v;
    }
    e.shuffle_query_labels |= a.shuffle_labels;
    e.per_episode |= a.per_episode;
    if let Some(v) = a.learner {
        cfg.learner.kind = v;
    }
    input(cfg.validate())?;
    let data = load_data(&a.data, &mut cfg)?;
    let model = load_model(&a.ckpt, &cfg, &data.store)?;
    let spec = cfg.eval.spec();
    input(spec.check_feasible(&data.split))?;
    let opts = EvalOptions {
        shuffle_query_labels: cfg.eval.shuffle_query_labels,
        keep_per_episode: cfg.eval.per_episode,
    };
    let report = runtime(evaluate(
        &model.encoder,
        &model.learner_config(&cfg.learner),
        &data.split,
        &data.store,
        &spec,
        cfg.eval.episodes,
        cfg.eval.seed,
        opts,
    ))?;
    let body = WithConfig {
        body: &report,
        config: &cfg,
    };
    match &a.out {
        Some(p) => write_json(p, &body)?,
        None => print_json(&body)?,
    }
    eprintln!(
        "{}-way {}-shot {}: {:.4} ± {:.4} (std {:.4}, {} episodes)",
        report.n_way,
        report.m_shot,
        report.learner,
        report.mean_accuracy,
        report.ci95_halfwidth,
        report.std_accuracy,
        report.n_episodes
    );
    Ok(())
}

fn cmd_bench(mut cfg: RunConfigFile, seed: Option<u64>, a: BenchArgs, mode: BenchMode) -> CliResult<()> {
    let e = &mut cfg.eval;
    if let Some(v) = seed {
        e.seed = v;
    }
    apply_episode(&a.episode, &mut e.n_way, &mut e.m_shot, &mut e.q_query, &mut e.subset);
    if let Some(v) = a.draws {
        cfg.bench.draws = v;
    }
    input(cfg.validate())?;
    let data = load_data(&a.data, &mut cfg)?;
    let spec = cfg.eval.spec();
    input(spec.check_feasible(&data.split))?;
    let report = runtime(run_bench(&data.split, &data.store, &spec, &cfg.bench, mode, cfg.eval.seed))?;
    let body = WithConfig {
        body: &report,
        config: &cfg,
    };
    match &a.out {
        Some(p) => write_json(p, &body)?,
        None => print_json(&body)?,
    }
    eprintln!(
        "{mode} {}-way {}-shot: {:.4} ± {:.4} over {} draws",
        report.n_way, report.m_shot, report.mean_accuracy, report.std_accuracy, report.n_episodes
    );
    Ok(())
}

fn cmd_confusion(mut cfg: RunConfigFile, seed: Option<u64>, a: ConfusionArgs) -> CliResult<()> {
    let c = &mut cfg.confusion;
    if let Some(v) = seed {
        c.seed = v;
    }
    let mut n = c.n_way.unwrap_or(0);
    apply_episode(&a.episode, &mut n, &mut c.m_shot, &mut c.q_query, &mut c.subset);
    if n > 0 {
        c.n_way = Some(n);
    }
    if let Some(v) = a.episodes {
        c.episodes = v;
    }
    if let Some(v) = a.learner {
        cfg.learner.kind = v;
    }
    input(cfg.validate())?;
    let data = load_data(&a.data, &mut cfg)?;
    let model = load_model(&a.ckpt, &cfg, &data.store)?;
    let c = &cfg.confusion;
    let n_way = c.n_way.unwrap_or_else(|| data.split.pool(c.subset).len());
    let spec = EpisodeSpec::new(n_way, c.m_shot, c.subset);
    let spec = match c.q_query {
        Some(q) => spec.with_query(q),
        None => spec,
    };
    input(spec.check_feasible(&data.split))?;
    let cm = runtime(confusion_matrix(
        &model.encoder,
        &model.learner_config(&cfg.learner),
        &data.split,
        &data.store,
        &spec,
        c.episodes,
        c.seed,
    ))?;
    create_dir(&a.out)?;
    write_json(
        &a.out.join("confusion.json"),
        &WithConfig {
            body: &cm,
            config: &cfg,
        },
    )?;
    runtime(cm.write_plot_files(&a.out, "confusion"))?;
    let diag: f64 = (0..cm.class_names.len()).map(|i| cm.matrix[i][i]).sum::<f64>() / cm.class_names.len() as f64;
    eprintln!(
        "{}-way {}-shot confusion over {} episodes, mean diagonal {:.4}; wrote {}",
        n_way,
        c.m_shot,
        c.episodes,
        diag,
        a.out.display()
    );
    Ok(())
}
