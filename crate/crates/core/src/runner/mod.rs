//! Experiment orchestration: loads a dataset, runs every configured layer
//! over it and writes the artifacts of the run under
//! `output_dir/run_id/`:
//!
//! - `config.toml`: the resolved configuration
//! - `replay.jsonl`: every backend response, keyed by prompt hash
//! - `bundles_<layer>.jsonl`, `predictions_<layer>.jsonl`
//! - `report.json`, `report.md`

mod config;
mod report;
mod timeline;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use parking_lot::Mutex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use config::{DatasetConfig, DatasetFormat, ExperimentConfig, TemplateConfig};
pub use report::{compare_reports, ComparisonTable};
pub use timeline::{export_factor_timeline, FactorTimeline, TimelineRow};

use crate::backend::{CachedBackend, CompletionBackend};
use crate::domain::{evaluate, Direction, EvalReport, Prediction, StockEntry};
use crate::error::{Error, Result};
use crate::ingest::{self, DatasetManifest, DatasetRecord};
use crate::matcher::{self, StockIndex};
use crate::skgp::{run_skgp, Layer, PredictionRecord, PromptBundle, PromptTemplateSet, SkgpOptions};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerStats {
    pub layer: Layer,
    pub records: usize,
    pub relation_prompts: usize,
    pub factor_prompts: usize,
    pub price_prompts: usize,
    pub news_truncated: usize,
    pub backend_errors: usize,
    pub parse_failures: usize,
}

/// Contents of `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_id: String,
    pub dataset: DatasetManifest,
    pub model_id: String,
    pub window: usize,
    pub factors: usize,
    pub news_char_budget: usize,
    pub reports: Vec<EvalReport>,
    pub layers: Vec<LayerStats>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub summary: RunSummary,
    pub dir: PathBuf,
}

impl RunOutcome {
    pub fn reports(&self) -> &[EvalReport] {
        &self.summary.reports
    }
}

struct Prepared {
    manifest: DatasetManifest,
    records: Vec<DatasetRecord>,
    index: StockIndex,
    templates: PromptTemplateSet,
}

fn load_records(config: &ExperimentConfig) -> Result<(DatasetManifest, Vec<DatasetRecord>)> {
    let ds = &config.dataset;
    let (mut manifest, records) = match ds.format()? {
        DatasetFormat::Native(kind) => {
            let loaded = ingest::load_dataset(kind, &ds.path, config.window)?;
            (loaded.manifest, loaded.records)
        }
        DatasetFormat::Jsonl => {
            let records = ingest::read_jsonl(&ds.path)?;
            let has_ts = records.iter().any(|r| !r.history.is_empty());
            let name = ds.name.clone().unwrap_or_else(|| {
                ds.path
                    .file_stem()
                    .map_or_else(|| "dataset".into(), |s| s.to_string_lossy().into_owned())
            });
            (DatasetManifest::canonical(name, ds.language()?, has_ts), records)
        }
    };
    if let Some(name) = &ds.name {
        manifest.name = name.clone();
    }
    manifest.language = ds.language()?;
    manifest.record_count = records.len();
    for r in &records {
        if !r.history.is_empty() && r.history.len() != config.window + 1 {
            return Err(Error::Config(format!(
                "{} has {} closes but window {} needs {}",
                r.key(),
                r.history.len(),
                config.window,
                config.window + 1
            )));
        }
    }
    Ok((manifest, records))
}

fn load_registry(config: &ExperimentConfig, records: &[DatasetRecord]) -> Result<Vec<StockEntry>> {
    let ds = &config.dataset;
    let path = match (&ds.registry, ds.format()?) {
        (Some(p), _) => Some(p.clone()),
        (None, DatasetFormat::Native(_)) => Some(ds.path.join("stocks.csv")).filter(|p| p.exists()),
        (None, DatasetFormat::Jsonl) => None,
    };
    let mut registry = match path {
        Some(p) => ingest::load_stock_registry(p)?,
        None => Vec::new(),
    };
    let mut known: std::collections::HashSet<String> = registry.iter().map(|s| s.ticker.clone()).collect();
    for r in records {
        if known.insert(r.target.ticker.clone()) {
            registry.push(r.target.clone());
        }
    }
    Ok(registry)
}

/// Picks `limit` records with a seeded generator; the result is in
/// `(ticker, date)` order.
pub fn sample_records(mut records: Vec<DatasetRecord>, limit: Option<usize>, seed: u64) -> Vec<DatasetRecord> {
    records.sort_by_key(|r| r.key());
    match limit {
        Some(n) if n < records.len() => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut picked = rand::seq::index::sample(&mut rng, records.len(), n).into_vec();
            picked.sort_unstable();
            let mut slots: Vec<Option<DatasetRecord>> = records.into_iter().map(Some).collect();
            picked
                .into_iter()
                .map(|i| slots[i].take().expect("distinct index"))
                .collect()
        }
        _ => records,
    }
}

fn prepare(config: &ExperimentConfig) -> Result<Prepared> {
    config.validate()?;
    let templates = config.template_set()?;
    let (manifest, records) = load_records(config)?;
    if records.is_empty() {
        return Err(Error::Config(format!(
            "dataset {} has no records",
            config.dataset.path.display()
        )));
    }
    let registry = load_registry(config, &records)?;
    let aliases = match &config.dataset.aliases {
        Some(p) => matcher::load_aliases(p)?,
        None => Vec::new(),
    };
    let index = StockIndex::with_aliases(&registry, &aliases);
    let records = sample_records(records, config.sample_limit, config.seed);
    Ok(Prepared {
        manifest,
        records,
        index,
        templates,
    })
}

/// Runs the experiment with the backend described by the config.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunOutcome> {
    let prepared = prepare(config)?;
    let backend = config.backend.build()?;
    execute(config, prepared, backend)
}

/// Runs the experiment with a caller-supplied backend. Responses still go
/// through the run's replay log.
pub fn run_experiment_with(config: &ExperimentConfig, backend: Box<dyn CompletionBackend>) -> Result<RunOutcome> {
    let prepared = prepare(config)?;
    execute(config, prepared, backend)
}

fn write_lines<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(|e| Error::Json {
            location: path.display().to_string(),
            source: e,
        })?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn process_layer(
    prepared: &Prepared,
    backend: &dyn CompletionBackend,
    layer: Layer,
    opts: &SkgpOptions,
) -> Vec<(PromptBundle, PredictionRecord)> {
    let records = &prepared.records;
    let workers = backend.max_concurrency().clamp(1, records.len().max(1));
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<(PromptBundle, PredictionRecord)>>> = Mutex::new(vec![None; records.len()]);
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(record) = records.get(i) else { break };
                let outcome = run_skgp(record, &prepared.index, &prepared.templates, backend, layer, opts)
                    .unwrap_or_else(|e| failed_record(record, layer, backend.model_id(), e));
                results.lock()[i] = Some(outcome);
            });
        }
    });
    let mut out: Vec<_> = results
        .into_inner()
        .into_iter()
        .map(|r| r.expect("every record processed"))
        .collect();
    out.sort_by(|a, b| a.1.record.cmp(&b.1.record));
    out
}

fn failed_record(record: &DatasetRecord, layer: Layer, model_id: &str, err: Error) -> (PromptBundle, PredictionRecord) {
    log::warn!("{}: {err}", record.key());
    let message = err.to_string();
    let bundle = PromptBundle {
        record: record.key(),
        layer,
        relation_exchanges: Vec::new(),
        factor_exchange: None,
        price_exchange: None,
        news_truncated: false,
        backend_error: Some(message.clone()),
    };
    let prediction = PredictionRecord {
        record: record.key(),
        gold: record.gold,
        layer,
        direction: Prediction::ParseFailure,
        rationale: message,
        factors: None,
        relations: Vec::new(),
        model_id: model_id.to_string(),
    };
    (bundle, prediction)
}

/// Scores prediction records with Rise as the positive class.
pub fn evaluate_predictions(predictions: &[PredictionRecord]) -> Result<EvalReport> {
    let pairs: Vec<(Direction, Prediction)> = predictions.iter().map(|p| (p.gold, p.direction)).collect();
    evaluate(&pairs, Direction::Rise)
}

fn layer_stats(layer: Layer, results: &[(PromptBundle, PredictionRecord)]) -> LayerStats {
    LayerStats {
        layer,
        records: results.len(),
        relation_prompts: results.iter().map(|(b, _)| b.relation_exchanges.len()).sum(),
        factor_prompts: results.iter().filter(|(b, _)| b.factor_exchange.is_some()).count(),
        price_prompts: results.iter().filter(|(b, _)| b.price_exchange.is_some()).count(),
        news_truncated: results.iter().filter(|(b, _)| b.news_truncated).count(),
        backend_errors: results.iter().filter(|(b, _)| b.backend_error.is_some()).count(),
        parse_failures: results
            .iter()
            .filter(|(_, p)| p.direction == Prediction::ParseFailure)
            .count(),
    }
}

pub fn method_name(layer: Layer, model_id: &str) -> String {
    format!("skgp {layer} ({model_id})")
}

fn execute(config: &ExperimentConfig, prepared: Prepared, backend: Box<dyn CompletionBackend>) -> Result<RunOutcome> {
    let dir = config.output_dir.join(&config.run_id);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    write_text(&dir.join("config.toml"), &config.to_toml()?)?;
    let backend = CachedBackend::open(backend, dir.join("replay.jsonl"))?;
    let model_id = backend.model_id().to_string();
    let opts = SkgpOptions {
        k: config.factors,
        news_char_budget: config.news_char_budget,
        ..SkgpOptions::default()
    };

    let mut layers: Vec<Layer> = config.layers.clone();
    layers.sort();
    layers.dedup();
    let mut reports = Vec::new();
    let mut stats = Vec::new();
    for layer in layers {
        log::info!(
            "{}: running layer {layer} over {} records",
            config.run_id,
            prepared.records.len()
        );
        let results = process_layer(&prepared, &backend, layer, &opts);
        let (bundles, predictions): (Vec<_>, Vec<_>) = results.iter().cloned().unzip();
        write_lines(&dir.join(format!("bundles_{layer}.jsonl")), &bundles)?;
        write_lines(&dir.join(format!("predictions_{layer}.jsonl")), &predictions)?;
        let report =
            evaluate_predictions(&predictions)?.labelled(prepared.manifest.name.clone(), method_name(layer, &model_id));
        reports.push(report);
        stats.push(layer_stats(layer, &results));
    }

    backend.compact()?;

    let summary = RunSummary {
        run_id: config.run_id.clone(),
        dataset: prepared.manifest,
        model_id,
        window: config.window,
        factors: config.factors,
        news_char_budget: config.news_char_budget,
        reports,
        layers: stats,
    };
    let json = serde_json::to_string_pretty(&summary).map_err(|e| Error::Json {
        location: "report.json".into(),
        source: e,
    })?;
    write_text(&dir.join("report.json"), &(json + "\n"))?;
    write_text(&dir.join("report.md"), &compare_reports(&summary.reports).to_markdown())?;
    Ok(RunOutcome { summary, dir })
}

pub fn read_predictions(path: impl AsRef<Path>) -> Result<Vec<PredictionRecord>> {
    read_json_lines(path.as_ref())
}

pub fn read_bundles(path: impl AsRef<Path>) -> Result<Vec<PromptBundle>> {
    read_json_lines(path.as_ref())
}

fn read_json_lines<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Json {
            location: format!("{}:{}", path.display(), i + 1),
            source: e,
        })?);
    }
    Ok(out)
}

/// Reads evaluation reports from a `report.json` run summary, a JSON array
/// of reports or a single report.
pub fn read_reports(path: impl AsRef<Path>) -> Result<Vec<EvalReport>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if let Ok(summary) = serde_json::from_str::<RunSummary>(&text) {
        return Ok(summary.reports);
    }
    if let Ok(list) = serde_json::from_str::<Vec<EvalReport>>(&text) {
        return Ok(list);
    }
    serde_json::from_str::<EvalReport>(&text)
        .map(|r| vec![r])
        .map_err(|e| Error::Json {
            location: path.display().to_string(),
            source: e,
        })
}

/// Groups predictions by layer, keeping file order within a layer.
pub fn predictions_by_layer(predictions: Vec<PredictionRecord>) -> BTreeMap<Layer, Vec<PredictionRecord>> {
    let mut out: BTreeMap<Layer, Vec<PredictionRecord>> = BTreeMap::new();
    for p in predictions {
        out.entry(p.layer).or_default().push(p);
    }
    out
}
