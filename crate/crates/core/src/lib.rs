//! Stock movement prediction from news with sequential knowledge-guided
//! prompting: peer relations, extracted factors and textualized price
//! history feed a final rise/fall prompt.

pub mod backend;
pub mod baselines;
pub mod domain;
pub mod error;
pub mod ingest;
pub mod matcher;
pub mod runner;
pub mod skgp;

pub use backend::{
    BackendConfig, BackendError, BackendKind, CachedBackend, CompletionBackend, CompletionResult, MockBackend,
    RemoteBackend, SYSTEM_PREAMBLE,
};
pub use domain::{
    evaluate, label_movements, ConfusionMatrix, Direction, EvalReport, MovementWindow, Prediction, PriceWindow,
    StockEntry,
};
pub use error::{Error, Result};
pub use ingest::{DatasetKind, DatasetManifest, DatasetRecord, Language, NewsItem, RecordRef};
pub use matcher::{MatchResult, StockIndex};
pub use runner::{run_experiment, ExperimentConfig, RunOutcome, RunSummary};
pub use skgp::{run_skgp, FactorSet, Layer, PredictionRecord, PromptBundle, PromptTemplateSet, RelationFinding};
