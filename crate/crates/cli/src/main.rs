//! `kgeval`: command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.

mod eval;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use kgeval::io::{load_dataset, load_graph, write_dataset};
use kgeval::model::{save_checkpoint, train_with, CheckpointHeader, TrainMode};
use kgeval::transform::{self, SplitSpec, DEFAULT_SEPARATOR};
use kgeval::{ClosurePolicy, Family, KgError, TrainConfig};

#[derive(Parser)]
#[command(name = "kgeval", version, about = "Train and evaluate knowledge graph embeddings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load raw triples (a file or a split directory) and write a clean dataset directory.
    Ingest(IngestArgs),
    /// Rewrite a dataset.
    #[command(subcommand)]
    Transform(TransformCmd),
    /// Train an embedding model and write a checkpoint.
    Train(TrainArgs),
    /// Evaluate a checkpoint and write a JSON report.
    #[command(subcommand)]
    Eval(eval::EvalCmd),
    /// Work with stored reports.
    #[command(subcommand)]
    Report(ReportCmd),
    /// Write a seeded synthetic graph with types and mediators (all triples in train).
    Synth {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct IngestArgs {
    /// Triples file (all train) or a directory with train/valid/test files.
    #[arg(long)]
    input: PathBuf,
    /// `entity<TAB>type` rows, for a single-file input.
    #[arg(long)]
    types: Option<PathBuf>,
    /// One mediator entity per line, for a single-file input.
    #[arg(long)]
    mediators: Option<PathBuf>,
    /// Drop evaluation triples with symbols unseen in train instead of failing.
    #[arg(long)]
    drop_unseen: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DataArgs {
    /// Dataset directory.
    #[arg(long)]
    data: PathBuf,
    /// Drop evaluation triples with symbols unseen in train instead of failing.
    #[arg(long)]
    drop_unseen: bool,
}

impl DataArgs {
    fn load(&self) -> Result<kgeval::KnowledgeGraph, Failure> {
        Ok(load_dataset(&self.data, policy(self.drop_unseen))?)
    }
}

fn policy(drop_unseen: bool) -> ClosurePolicy {
    if drop_unseen {
        ClosurePolicy::Drop
    } else {
        ClosurePolicy::Reject
    }
}

#[derive(Subcommand)]
enum TransformCmd {
    /// Replace every mediator by direct concatenated relations between its neighbours.
    Binarize {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value = DEFAULT_SEPARATOR)]
        separator: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Uniform sample of a fraction of all triples.
    Subset {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Shuffle all triples into train/valid/test, keeping evaluation symbols seen in train.
    Split {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 0.9)]
        train: f64,
        #[arg(long, default_value_t = 0.05)]
        valid: f64,
        #[arg(long, default_value_t = 0.05)]
        test: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write relation categories and domains (default: <data>/relation_meta.tsv).
    Label {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value = DEFAULT_SEPARATOR)]
        separator: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Transe,
    Distmult,
    Complex,
    Rotate,
}

impl From<FamilyArg> for Family {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::Transe => Family::TransE,
            FamilyArg::Distmult => Family::DistMult,
            FamilyArg::Complex => Family::ComplEx,
            FamilyArg::Rotate => Family::RotatE,
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, value_enum)]
    family: FamilyArg,
    /// `key = value` hyperparameter file.
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config's step count.
    #[arg(long)]
    steps: Option<usize>,
    /// Worker threads; more than one trains without locks and is not reproducible.
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Also write the per-step loss, one value per line.
    #[arg(long)]
    losses: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
    Markdown,
}

#[derive(Subcommand)]
enum ReportCmd {
    /// Render a stored JSON report as JSON, CSV or markdown.
    Render {
        #[arg(long)]
        report: PathBuf,
        #[arg(long, value_enum, default_value = "markdown")]
        format: FormatArg,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

pub(crate) enum Failure {
    Usage(String),
    Data(KgError),
}

impl From<KgError> for Failure {
    fn from(e: KgError) -> Self {
        Failure::Data(e)
    }
}

pub(crate) type CliResult<T> = Result<T, Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match configure_threads().and_then(|_| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numeric() { 3 } else { 2 })
        }
    }
}

/// Caps the evaluation worker pool at `KGE_EVAL_THREADS`.
fn configure_threads() -> CliResult<()> {
    let Ok(v) = std::env::var("KGE_EVAL_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Failure::Usage(format!("KGE_EVAL_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Usage(e.to_string()))
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Transform(t) => run_transform(t),
        Command::Train(a) => run_train(a),
        Command::Eval(e) => eval::run(e),
        Command::Report(ReportCmd::Render { report, format, out }) => {
            let text = std::fs::read_to_string(&report).map_err(|e| KgError::io(&report, e))?;
            let r = kgeval::report::EvalReport::from_json(&text)?;
            let format = match format {
                FormatArg::Json => kgeval::report::Format::Json,
                FormatArg::Csv => kgeval::report::Format::Csv,
                FormatArg::Markdown => kgeval::report::Format::Markdown,
            };
            emit(out.as_deref(), &kgeval::report::render_tables(&r, format)?)
        }
        Command::Synth { seed, out } => {
            let g = kgeval::synth::freebase_like(&kgeval::synth::SynthSpec::standin(seed))?;
            write_dataset(&out, &g)?;
            println!("{} triples, {} entities, {} mediators", g.len(), g.num_entities(), g.mediator_count());
            Ok(())
        }
    }
}

pub(crate) fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| KgError::io(p, e).into()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn ingest(a: IngestArgs) -> CliResult<()> {
    let g = if a.input.is_dir() {
        if a.types.is_some() || a.mediators.is_some() {
            return Err(Failure::Usage(
                "--types and --mediators apply to a single-file input; put them in the directory instead".into(),
            ));
        }
        load_dataset(&a.input, policy(a.drop_unseen))?
    } else {
        load_graph(&a.input, a.types.as_deref(), a.mediators.as_deref())?
    };
    write_dataset(&a.out, &g)?;
    let s = g.stats();
    println!(
        "{} triples, {} entities, {} relations, {} mediators; {} duplicates, {} dropped as unseen, {} type rows and {} mediator rows skipped",
        g.len(),
        g.num_entities(),
        g.num_relations(),
        g.mediator_count(),
        s.duplicates,
        s.dropped_unseen,
        s.skipped_type_rows,
        s.skipped_mediator_rows
    );
    Ok(())
}

fn run_transform(t: TransformCmd) -> CliResult<()> {
    match t {
        TransformCmd::Binarize { data, separator, out } => {
            let (g, report) = transform::binarize_cvt(&data.load()?, &separator)?;
            write_dataset(&out, &g)?;
            println!(
                "{} mediators removed with {} triples; {} concatenated triples emitted ({} duplicates merged)",
                report.mediators, report.removed_triples, report.emitted_triples, report.duplicate_emissions
            );
        }
        TransformCmd::Subset { data, fraction, seed, out } => {
            let g = transform::sample_subset(&data.load()?, fraction, seed)?;
            write_dataset(&out, &g)?;
            println!("{} triples sampled", g.len());
        }
        TransformCmd::Split {
            data,
            train,
            valid,
            test,
            seed,
            out,
        } => {
            let spec = SplitSpec::new(train, valid, test, seed).map_err(|e| Failure::Usage(e.to_string()))?;
            let (g, r) = transform::split(&data.load()?, &spec)?;
            write_dataset(&out, &g)?;
            println!(
                "train {} valid {} test {} ({:.4}/{:.4}/{:.4}); {} moved to train, {} topped up",
                r.train,
                r.valid,
                r.test,
                r.achieved_train_frac,
                r.achieved_valid_frac,
                r.achieved_test_frac,
                r.moved_to_train,
                r.topped_up
            );
        }
        TransformCmd::Label { data, separator, out } => {
            let g = data.load()?;
            let meta = transform::label_relations(&g, &separator);
            let path = out.unwrap_or_else(|| data.data.join("relation_meta.tsv"));
            transform::write_relation_meta(&path, &g, &meta)?;
            println!("{} relations labeled", meta.len());
        }
    }
    Ok(())
}

fn run_train(a: TrainArgs) -> CliResult<()> {
    let family: Family = a.family.into();
    let text = std::fs::read_to_string(&a.config).map_err(|e| KgError::io(&a.config, e))?;
    if let Some(f) = TrainConfig::family_in(&text) {
        let named: Family = f.parse().map_err(|e: KgError| Failure::Usage(e.to_string()))?;
        if named != family {
            return Err(Failure::Usage(format!(
                "config {} is for {named}, but --family is {family}",
                a.config.display()
            )));
        }
    }
    let mut cfg = TrainConfig::parse(&text, &a.config)?;
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    if let Some(steps) = a.steps {
        cfg.steps = steps;
    }
    if a.threads == 0 {
        return Err(Failure::Usage("--threads must be at least 1".into()));
    }
    let mode = if a.threads == 1 {
        TrainMode::Deterministic
    } else {
        TrainMode::Hogwild { threads: a.threads }
    };
    let g = a.data.load()?;
    let outcome = train_with(&g, &cfg, family, mode)?;
    let header = CheckpointHeader::new(&outcome.params, &g, &cfg);
    save_checkpoint(&a.out, &outcome.params, &header)?;
    if let Some(path) = &a.losses {
        kgeval::io::write_rows(path, None, outcome.losses.iter().map(|l| format!("{l:.6}")))?;
    }
    match outcome.loss_window_means(0.1) {
        Some((first, last)) => println!(
            "{family}: {} steps, mean loss {first:.6} (first 10%) -> {last:.6} (last 10%)",
            cfg.steps
        ),
        None => println!("{family}: {} steps", cfg.steps),
    }
    Ok(())
}
