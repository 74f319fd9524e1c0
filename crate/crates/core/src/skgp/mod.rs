//! The three-stage prompting pipeline: relation fill-in, factor extraction
//! and the price-direction prompt.

pub mod parse;
pub mod templates;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::backend::{CompletionBackend, SYSTEM_PREAMBLE};
use crate::domain::{Direction, Prediction, StockEntry};
use crate::error::{Error, Result};
use crate::ingest::{DatasetRecord, RecordRef};
use crate::matcher::StockIndex;

pub use parse::{parse_direction, parse_factors, parse_relation, ParseFailure, ParsedFactors, ParsedRelation};
pub use templates::{
    render, render_factor_prompt, render_price_prompt, render_relation_prompt, PromptTemplateSet, BLANK,
};

/// Which knowledge stages feed the price prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Layer {
    PriceOnly,
    PlusFactor,
    PlusFactorRelation,
}

impl Layer {
    pub const ALL: [Layer; 3] = [Layer::PriceOnly, Layer::PlusFactor, Layer::PlusFactorRelation];

    pub fn as_str(self) -> &'static str {
        match self {
            Layer::PriceOnly => "price-only",
            Layer::PlusFactor => "plus-factor",
            Layer::PlusFactorRelation => "plus-factor-relation",
        }
    }

    pub fn uses_factors(self) -> bool {
        self != Layer::PriceOnly
    }

    pub fn uses_relations(self) -> bool {
        self == Layer::PlusFactorRelation
    }
}

impl fmt::Display for Layer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Layer {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "price-only" | "price" => Ok(Layer::PriceOnly),
            "plus-factor" | "factor" => Ok(Layer::PlusFactor),
            "plus-factor-relation" | "relation" | "full" => Ok(Layer::PlusFactorRelation),
            other => Err(Error::Config(format!("unknown layer {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkgpOptions {
    /// Number of factors requested and kept.
    pub k: usize,
    /// News longer than this many characters is cut from the end.
    pub news_char_budget: usize,
    pub system_preamble: String,
}

impl Default for SkgpOptions {
    fn default() -> Self {
        Self {
            k: 5,
            news_char_budget: 6000,
            system_preamble: SYSTEM_PREAMBLE.to_string(),
        }
    }
}

/// One prompt and the raw text the backend returned for it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exchange {
    pub prompt: String,
    pub response: Option<String>,
}

impl Exchange {
    fn pending(prompt: String) -> Self {
        Self { prompt, response: None }
    }
}

/// Every prompt and response of one record, kept verbatim for audit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub record: RecordRef,
    pub layer: Layer,
    pub relation_exchanges: Vec<Exchange>,
    pub factor_exchange: Option<Exchange>,
    pub price_exchange: Option<Exchange>,
    #[serde(default)]
    pub news_truncated: bool,
    #[serde(default)]
    pub backend_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationFinding {
    pub target: StockEntry,
    pub peer: StockEntry,
    pub relation_text: String,
    /// Text placed in the connections block of the price prompt.
    pub sentence: String,
    pub low_confidence: bool,
    pub raw_response: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactorSet {
    pub k: usize,
    pub factors: Vec<String>,
    pub low_confidence: bool,
    pub raw_response: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub record: RecordRef,
    pub gold: Direction,
    pub layer: Layer,
    pub direction: Prediction,
    pub rationale: String,
    pub factors: Option<FactorSet>,
    pub relations: Vec<RelationFinding>,
    pub model_id: String,
}

/// Cuts `text` to at most `budget` characters on a char boundary.
pub fn truncate_chars(text: &str, budget: usize) -> (&str, bool) {
    match text.char_indices().nth(budget) {
        Some((byte, _)) => (&text[..byte], true),
        None => (text, false),
    }
}

fn relation_sentence(
    tpl: &PromptTemplateSet,
    target: &StockEntry,
    peer: &StockEntry,
    parsed: &ParsedRelation,
) -> Result<String> {
    let sentence = match &parsed.sentence {
        Some(s) => s.clone(),
        None => render(
            &tpl.relation_answer,
            &[
                ("target", &target.company),
                ("peer", &peer.company),
                ("relation", &parsed.relation),
            ],
        )?,
    };
    Ok(sentence.trim().trim_end_matches(['.', '。']).trim_end().to_string())
}

struct Pipeline<'a> {
    record: &'a DatasetRecord,
    index: &'a StockIndex,
    tpl: &'a PromptTemplateSet,
    backend: &'a dyn CompletionBackend,
    layer: Layer,
    opts: &'a SkgpOptions,
    bundle: PromptBundle,
    relations: Vec<RelationFinding>,
    factors: Option<FactorSet>,
}

enum Abort {
    Backend(String),
    Template(Error),
}

impl Pipeline<'_> {
    fn ask(&self, prompt: &str) -> std::result::Result<String, Abort> {
        self.backend
            .complete(&self.opts.system_preamble, prompt)
            .map(|r| r.text)
            .map_err(|e| Abort::Backend(e.to_string()))
    }

    fn run(&mut self) -> std::result::Result<(Prediction, String), Abort> {
        let target = &self.record.target;
        let blob = self.record.news_blob();
        let (news, truncated) = truncate_chars(&blob, self.opts.news_char_budget);
        self.bundle.news_truncated = truncated;

        if self.layer.uses_relations() {
            let peers = self.index.match_stocks(&blob, target).matched;
            for peer in peers {
                let prompt = render_relation_prompt(self.tpl, target, &peer).map_err(Abort::Template)?;
                self.bundle.relation_exchanges.push(Exchange::pending(prompt.clone()));
                let response = self.ask(&prompt)?;
                self.bundle.relation_exchanges.last_mut().expect("just pushed").response = Some(response.clone());
                match parse_relation(&response) {
                    Ok(parsed) => {
                        let sentence = relation_sentence(self.tpl, target, &peer, &parsed).map_err(Abort::Template)?;
                        self.relations.push(RelationFinding {
                            target: target.clone(),
                            peer,
                            relation_text: parsed.relation,
                            sentence,
                            low_confidence: parsed.low_confidence,
                            raw_response: response,
                        });
                    }
                    Err(e) => log::warn!("{}: relation with {}: {e}", self.bundle.record, peer.ticker),
                }
            }
        }

        if self.layer.uses_factors() {
            let prompt = render_factor_prompt(self.tpl, target, self.opts.k, news).map_err(Abort::Template)?;
            self.bundle.factor_exchange = Some(Exchange::pending(prompt.clone()));
            let response = self.ask(&prompt)?;
            self.bundle.factor_exchange.as_mut().expect("just set").response = Some(response.clone());
            match parse_factors(&response, self.opts.k) {
                Ok(parsed) => {
                    self.factors = Some(FactorSet {
                        k: self.opts.k,
                        factors: parsed.factors,
                        low_confidence: parsed.low_confidence,
                        raw_response: response,
                    })
                }
                Err(e) => log::warn!("{}: factors: {e}", self.bundle.record),
            }
        }

        let sentences: Vec<String> = self.relations.iter().map(|r| r.sentence.clone()).collect();
        let factors = self.factors.as_ref().map(|f| f.factors.as_slice()).unwrap_or(&[]);
        let prompt = render_price_prompt(
            self.tpl,
            target,
            &sentences,
            factors,
            &self.record.movements(),
            self.record.target_date,
        )
        .map_err(Abort::Template)?;
        self.bundle.price_exchange = Some(Exchange::pending(prompt.clone()));
        let response = self.ask(&prompt)?;
        self.bundle.price_exchange.as_mut().expect("just set").response = Some(response.clone());
        Ok(parse_direction(&response, self.tpl.language))
    }
}

/// Runs the stages `layer` prescribes for one record. A backend failure
/// ends the record early: the error is kept in the bundle and the record
/// counts as a parse failure. Template errors are returned.
pub fn run_skgp(
    record: &DatasetRecord,
    index: &StockIndex,
    templates: &PromptTemplateSet,
    backend: &dyn CompletionBackend,
    layer: Layer,
    opts: &SkgpOptions,
) -> Result<(PromptBundle, PredictionRecord)> {
    let mut pipeline = Pipeline {
        record,
        index,
        tpl: templates,
        backend,
        layer,
        opts,
        bundle: PromptBundle {
            record: record.key(),
            layer,
            relation_exchanges: Vec::new(),
            factor_exchange: None,
            price_exchange: None,
            news_truncated: false,
            backend_error: None,
        },
        relations: Vec::new(),
        factors: None,
    };
    let (direction, rationale) = match pipeline.run() {
        Ok(outcome) => outcome,
        Err(Abort::Template(e)) => return Err(e),
        Err(Abort::Backend(message)) => {
            log::warn!("{}: backend failure: {message}", pipeline.bundle.record);
            pipeline.bundle.backend_error = Some(message.clone());
            (Prediction::ParseFailure, message)
        }
    };
    let prediction = PredictionRecord {
        record: record.key(),
        gold: record.gold,
        layer,
        direction,
        rationale,
        factors: pipeline.factors,
        relations: pipeline.relations,
        model_id: backend.model_id().to_string(),
    };
    Ok((pipeline.bundle, prediction))
}
