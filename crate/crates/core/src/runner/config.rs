//! TOML experiment configuration.
//!
//! ```toml
//! run_id = "stocknet-gpt4"
//! output_dir = "runs"
//! layers = ["price-only", "plus-factor", "plus-factor-relation"]
//! window = 5
//! factors = 5
//! sample_limit = 200
//! seed = 7
//!
//! [dataset]
//! kind = "stocknet"          # stocknet | cmin-us | cmin-cn | edt | jsonl
//! path = "data/stocknet"
//!
//! [backend]
//! kind = "remote"
//! model_id = "gpt-4"
//!
//! [templates]
//! variant = 0
//! ```
//!
//! Relative paths are resolved against the directory holding the file.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::backend::BackendConfig;
use crate::error::{Error, Result};
use crate::ingest::{DatasetKind, Language};
use crate::skgp::{Layer, PromptTemplateSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    Native(DatasetKind),
    /// Canonical JSONL records.
    Jsonl,
}

impl FromStr for DatasetFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s.trim().eq_ignore_ascii_case("jsonl") {
            Ok(DatasetFormat::Jsonl)
        } else {
            s.parse().map(DatasetFormat::Native)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub kind: String,
    /// Dataset root for native layouts, the file itself for JSONL.
    pub path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub language: Option<Language>,
    /// Stock registry CSV used for peer matching.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub registry: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aliases: Option<PathBuf>,
}

impl DatasetConfig {
    pub fn format(&self) -> Result<DatasetFormat> {
        self.kind.parse()
    }

    pub fn language(&self) -> Result<Language> {
        match (self.format()?, self.language) {
            (_, Some(lang)) => Ok(lang),
            (DatasetFormat::Native(kind), None) => Ok(kind.language()),
            (DatasetFormat::Jsonl, None) => Ok(Language::En),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TemplateConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    pub variant: usize,
}

fn default_layers() -> Vec<Layer> {
    Layer::ALL.to_vec()
}

fn default_five() -> usize {
    5
}

fn default_budget() -> usize {
    6000
}

fn default_output() -> PathBuf {
    PathBuf::from("runs")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub run_id: String,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default = "default_layers")]
    pub layers: Vec<Layer>,
    /// Number of past daily movements in the price prompt.
    #[serde(default = "default_five")]
    pub window: usize,
    /// Number of factors requested per record.
    #[serde(default = "default_five")]
    pub factors: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_limit: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_budget")]
    pub news_char_budget: usize,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub backend: BackendConfig,
    #[serde(default)]
    pub templates: TemplateConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        Ok(config)
    }

    /// Makes every relative path absolute with respect to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        fix(&mut self.dataset.path);
        self.dataset.registry.as_mut().map(fix);
        self.dataset.aliases.as_mut().map(fix);
        self.templates.file.as_mut().map(fix);
        self.backend.mock_rules.as_mut().map(fix);
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.run_id.trim().is_empty() || self.run_id.contains(['/', '\\']) || self.run_id.starts_with('.') {
            return Err(Error::Config(format!("invalid run_id {:?}", self.run_id)));
        }
        if self.layers.is_empty() {
            return Err(Error::Config("at least one layer is required".into()));
        }
        if self.window < 1 {
            return Err(Error::Config("window must be at least 1".into()));
        }
        if self.factors < 1 {
            return Err(Error::Config("factors must be at least 1".into()));
        }
        if self.sample_limit == Some(0) {
            return Err(Error::Config("sample_limit must be at least 1".into()));
        }
        if self.news_char_budget == 0 {
            return Err(Error::Config("news_char_budget must be at least 1".into()));
        }
        self.dataset.format()?;
        self.backend.validate()?;
        Ok(())
    }

    /// Loads and checks the template set for this run.
    pub fn template_set(&self) -> Result<PromptTemplateSet> {
        let language = self.dataset.language()?;
        let tpl = match &self.templates.file {
            Some(path) => PromptTemplateSet::from_file(path)?,
            None => PromptTemplateSet::for_language(language),
        };
        if tpl.language != language {
            return Err(Error::Config(format!(
                "template language {:?} does not match dataset language {:?}",
                tpl.language, language
            )));
        }
        tpl.with_variant(self.templates.variant)
    }
}
