use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};

use skgp_core::baselines::{
    build_lexicons, evaluate_baseline, read_sentiment_labels, run_keyphrase_baseline, run_sentiment_baseline,
    BaselinePrediction, LexiconScope, LexiconSources, DEFAULT_THRESHOLD,
};
use skgp_core::ingest::{load_dataset, read_jsonl, write_jsonl};
use skgp_core::runner::{
    compare_reports, evaluate_predictions, export_factor_timeline, method_name, predictions_by_layer, read_predictions,
    read_reports, run_experiment, ExperimentConfig,
};
use skgp_core::{DatasetKind, DatasetRecord, EvalReport};

#[derive(Parser)]
#[command(
    name = "skgp",
    version,
    about = "Stock movement prediction with knowledge-guided LLM prompting"
)]
struct Cli {
    /// Log verbosity when RUST_LOG is unset.
    #[arg(long, global = true, default_value = "info")]
    log_level: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a TOML config.
    Run(RunArgs),
    /// Score a predictions file.
    Eval(EvalArgs),
    /// Export the per-day factors of one stock.
    Timeline(TimelineArgs),
    /// Combine report files into one ACC/MCC table.
    Compare(CompareArgs),
    /// Run a non-LLM comparison method.
    #[command(subcommand)]
    Baseline(BaselineCommand),
    /// Convert a native dataset layout to canonical JSONL.
    Ingest(IngestArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `run_id`.
    #[arg(long)]
    run_id: Option<String>,
    /// Overrides `output_dir`.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Overrides `sample_limit`.
    #[arg(long)]
    limit: Option<usize>,
    /// Overrides `seed`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    predictions: PathBuf,
    /// Dataset name used in the report label.
    #[arg(long, default_value = "dataset")]
    dataset: String,
    /// Print reports as JSON instead of a table.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct TimelineArgs {
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long)]
    ticker: String,
    #[arg(long)]
    from: Option<NaiveDate>,
    #[arg(long)]
    to: Option<NaiveDate>,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// report.json files, report arrays or single reports.
    #[arg(required = true)]
    reports: Vec<PathBuf>,
    #[arg(long)]
    csv: bool,
}

#[derive(Args)]
struct DatasetArgs {
    /// Canonical JSONL file, or a native dataset root with `--kind`.
    #[arg(long)]
    dataset: PathBuf,
    /// jsonl, stocknet, cmin-us, cmin-cn or edt.
    #[arg(long, default_value = "jsonl")]
    kind: String,
    /// Past movements per record for native layouts.
    #[arg(long, default_value_t = 5)]
    window: usize,
    /// Dataset name used in the report label.
    #[arg(long)]
    name: Option<String>,
    /// Write per-record predictions as JSONL.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    json: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScopeArg {
    PerStock,
    Global,
}

impl From<ScopeArg> for LexiconScope {
    fn from(s: ScopeArg) -> Self {
        match s {
            ScopeArg::PerStock => LexiconScope::PerStock,
            ScopeArg::Global => LexiconScope::Global,
        }
    }
}

#[derive(Subcommand)]
enum BaselineCommand {
    /// Score news against POS/NEG keyphrase lexicons.
    Keyphrase {
        #[command(flatten)]
        data: DatasetArgs,
        /// CSV `ticker,phrase,rank` extracted from rising days.
        #[arg(long)]
        pos: PathBuf,
        /// CSV `ticker,phrase,rank` extracted from falling days.
        #[arg(long)]
        neg: PathBuf,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long, value_enum, default_value = "per-stock")]
        scope: ScopeArg,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
        /// Canonical JSONL of the records the phrase files were built from;
        /// overlap with the evaluated records is reported.
        #[arg(long)]
        train: Option<PathBuf>,
        /// Reject phrases listed in both POS and NEG.
        #[arg(long)]
        no_overlap: bool,
    },
    /// Map per-record sentiment labels to directions.
    Sentiment {
        #[command(flatten)]
        data: DatasetArgs,
        /// JSONL of `{"record_ref": {"ticker", "date"}, "label"}`.
        #[arg(long)]
        labels: PathBuf,
        /// Name of the model that produced the labels.
        #[arg(long, default_value = "sentiment")]
        method: String,
    },
}

#[derive(Args)]
struct IngestArgs {
    /// stocknet, cmin-us, cmin-cn or edt.
    #[arg(long)]
    dataset: DatasetKind,
    #[arg(long)]
    root: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 5)]
    window: usize,
}

fn main() {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(&cli.log_level))
        .format_timestamp(None)
        .init();
    if let Err(e) = dispatch(cli.command) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Run(args) => run(args),
        Command::Eval(args) => eval(args),
        Command::Timeline(args) => timeline(args),
        Command::Compare(args) => compare(args),
        Command::Baseline(cmd) => baseline(cmd),
        Command::Ingest(args) => ingest(args),
    }
}

fn run(args: RunArgs) -> Result<()> {
    let mut config = ExperimentConfig::from_file(&args.config)?;
    if let Some(id) = args.run_id {
        config.run_id = id;
    }
    if let Some(dir) = args.output_dir {
        config.output_dir = dir;
    }
    if args.limit.is_some() {
        config.sample_limit = args.limit;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let outcome = run_experiment(&config)?;
    print!("{}", compare_reports(outcome.reports()).to_markdown());
    println!("\nartifacts: {}", outcome.dir.display());
    Ok(())
}

fn print_reports(reports: &[EvalReport], json: bool) -> Result<()> {
    if json {
        println!("{}", serde_json::to_string_pretty(reports)?);
    } else {
        print!("{}", compare_reports(reports).to_markdown());
    }
    Ok(())
}

fn eval(args: EvalArgs) -> Result<()> {
    let predictions = read_predictions(&args.predictions)?;
    if predictions.is_empty() {
        bail!("{} holds no predictions", args.predictions.display());
    }
    let mut reports = Vec::new();
    for (layer, preds) in predictions_by_layer(predictions) {
        let model = preds[0].model_id.clone();
        reports.push(evaluate_predictions(&preds)?.labelled(args.dataset.clone(), method_name(layer, &model)));
    }
    print_reports(&reports, args.json)
}

fn timeline(args: TimelineArgs) -> Result<()> {
    let predictions = read_predictions(&args.predictions)?;
    let csv = export_factor_timeline(&predictions, &args.ticker, args.from, args.to)?.to_csv()?;
    match args.out {
        Some(path) => std::fs::write(&path, csv).with_context(|| format!("writing {}", path.display()))?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn compare(args: CompareArgs) -> Result<()> {
    let mut reports = Vec::new();
    for path in &args.reports {
        reports.extend(read_reports(path)?);
    }
    let table = compare_reports(&reports);
    if args.csv {
        print!("{}", table.to_csv()?);
    } else {
        print!("{}", table.to_markdown());
    }
    Ok(())
}

fn load_records(data: &DatasetArgs) -> Result<(String, Vec<DatasetRecord>)> {
    if data.kind.eq_ignore_ascii_case("jsonl") {
        let records = read_jsonl(&data.dataset)?;
        let name = data.name.clone().unwrap_or_else(|| {
            data.dataset
                .file_stem()
                .map_or_else(|| "dataset".into(), |s| s.to_string_lossy().into_owned())
        });
        Ok((name, records))
    } else {
        let kind: DatasetKind = data.kind.parse()?;
        let loaded = load_dataset(kind, &data.dataset, data.window)?;
        Ok((data.name.clone().unwrap_or(loaded.manifest.name), loaded.records))
    }
}

fn write_predictions(path: &Path, predictions: &[BaselinePrediction]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    for p in predictions {
        serde_json::to_writer(&mut w, p)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn finish_baseline(data: &DatasetArgs, name: String, method: String, predictions: &[BaselinePrediction]) -> Result<()> {
    if let Some(out) = &data.out {
        write_predictions(out, predictions)?;
    }
    let report = evaluate_baseline(predictions)?.labelled(name, method);
    print_reports(&[report], data.json)
}

fn baseline(cmd: BaselineCommand) -> Result<()> {
    match cmd {
        BaselineCommand::Keyphrase {
            data,
            pos,
            neg,
            k,
            scope,
            threshold,
            train,
            no_overlap,
        } => {
            let (name, records) = load_records(&data)?;
            let eval_refs: Vec<_> = records.iter().map(|r| r.key()).collect();
            let train_refs: Vec<_> = match &train {
                Some(path) => read_jsonl(path)?.iter().map(|r| r.key()).collect(),
                None => Vec::new(),
            };
            let sources = LexiconSources {
                pos_path: &pos,
                neg_path: &neg,
                k,
                scope: scope.into(),
                allow_overlap: !no_overlap,
            };
            let lexicons = build_lexicons(&train_refs, &eval_refs, &sources)?;
            if lexicons.leaked_records > 0 {
                log::warn!(
                    "{} evaluated record(s) were used to build the lexicons",
                    lexicons.leaked_records
                );
            }
            let predictions = run_keyphrase_baseline(&records, &lexicons, threshold);
            finish_baseline(&data, name, format!("keyphrase (k={k})"), &predictions)
        }
        BaselineCommand::Sentiment { data, labels, method } => {
            let (name, records) = load_records(&data)?;
            let labels = read_sentiment_labels(&labels)?;
            let predictions = run_sentiment_baseline(&records, &labels);
            finish_baseline(&data, name, method, &predictions)
        }
    }
}

fn ingest(args: IngestArgs) -> Result<()> {
    let loaded = load_dataset(args.dataset, &args.root, args.window)?;
    let file = File::create(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let mut w = BufWriter::new(file);
    write_jsonl(&mut w, &loaded.records)?;
    w.flush()?;
    println!(
        "{}: {} records written to {} ({} days without news, {} without enough history, {} unlabeled)",
        loaded.manifest.name,
        loaded.records.len(),
        args.out.display(),
        loaded.skipped_no_news,
        loaded.skipped_history,
        loaded.skipped_unlabeled
    );
    Ok(())
}
