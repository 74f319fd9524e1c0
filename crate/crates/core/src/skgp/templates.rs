//! Prompt templates for the three prompting stages, in English and Chinese.
//!
//! Templates use `{name}` placeholders. Each template kind accepts a fixed
//! set of names; anything else is rejected when the set is built.

use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::domain::{MovementWindow, StockEntry};
use crate::error::{Error, Result};
use crate::ingest::Language;

pub const BLANK: &str = "___";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptTemplateSet {
    pub language: Language,
    /// Stage one: `{target}`, `{peer}`.
    pub relation: String,
    /// A filled-in relation sentence: `{target}`, `{peer}`, `{relation}`.
    pub relation_answer: String,
    /// Stage two variants: `{target}`, `{k}`, `{news}`.
    pub factor_variants: Vec<String>,
    #[serde(default)]
    pub factor_variant: usize,
    pub price_preamble: String,
    /// `{factors}`
    pub factor_block: String,
    /// `{relations}`
    pub relation_block: String,
    /// One past movement: `{date}`, `{target}`, `{movement}`.
    pub time_line: String,
    /// `{date}`, `{target}`
    pub price_conclusion: String,
    /// Direction words as the answer fills the blank.
    pub rise_word: String,
    pub fall_word: String,
    /// Past-tense movement words used in `time_line`.
    pub rose_word: String,
    pub fell_word: String,
    pub list_separator: String,
}

impl PromptTemplateSet {
    pub fn english() -> Self {
        Self {
            language: Language::En,
            relation: "Please fill in the blank and return a complete sentence: {target} and {peer} are most likely in a ___ relationship.".into(),
            relation_answer: "{target} and {peer} are most likely in a {relation} relationship".into(),
            factor_variants: vec![
                "Please extract the top {k} factors that may affect the stock price of {target} from the following news.\n{news}".into(),
                "Please identify the primary top {k} factors influencing {target}'s stock price based on the news provided\n{news}".into(),
                "Please analyze the provided news and pinpoint the top {k} major factors impacting the stock price of {target}\n{news}".into(),
            ],
            factor_variant: 0,
            price_preamble: "Based on the following information, please judge the direction of the stock price from rise/fall, fill in the blank and give reasons.".into(),
            factor_block: "These are the main factors that may affect this stock's price recently: {factors}.".into(),
            relation_block: "These are the connections between the companies that have appeared in the news: {relations}.".into(),
            time_line: "On {date}, the stock price of {target} {movement}.".into(),
            price_conclusion: "On {date}, the stock price of {target} will ___.".into(),
            rise_word: "rise".into(),
            fall_word: "fall".into(),
            rose_word: "rose".into(),
            fell_word: "fell".into(),
            list_separator: "; ".into(),
        }
    }

    pub fn chinese() -> Self {
        Self {
            language: Language::Cn,
            relation: "请填空并返回完整的句子: {target}和{peer}最可能是___关系。".into(),
            relation_answer: "{target}和{peer}最可能是{relation}关系".into(),
            factor_variants: vec![
                "请从以下新闻中提取可能影响{target}股价的前{k}个因素。\n{news}".into(),
                "根据提供的新闻，请识别出影响{target}股价的主要{k}个因素\n{news}".into(),
                "请分析所提供的新闻并找出影响{target}股价的前{k}个主要因素\n{news}".into(),
            ],
            factor_variant: 0,
            price_preamble: "根据以下信息，请判断股票价格是上涨还是下跌，填写在空白处并给出理由。".into(),
            factor_block: "这些是最近可能影响该股票价格的主要因素: {factors}".into(),
            relation_block: "这些是新闻中出现过的公司之间的关系: {relations}".into(),
            time_line: "在{date},{target}的股价{movement}。".into(),
            price_conclusion: "在{date},{target}的股价将___。".into(),
            rise_word: "上涨".into(),
            fall_word: "下跌".into(),
            rose_word: "上涨".into(),
            fell_word: "下跌".into(),
            list_separator: "；".into(),
        }
    }

    pub fn for_language(language: Language) -> Self {
        match language {
            Language::En => Self::english(),
            Language::Cn => Self::chinese(),
        }
    }

    /// Loads a template set from a TOML file and validates it.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let set: Self = toml::from_str(&text).map_err(|e| Error::Template(format!("{}: {e}", path.display())))?;
        set.validate()?;
        Ok(set)
    }

    pub fn with_variant(mut self, variant: usize) -> Result<Self> {
        self.factor_variant = variant;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let checks: Vec<(&str, &str, &[&str])> = vec![
            ("relation", &self.relation, &["target", "peer"]),
            (
                "relation_answer",
                &self.relation_answer,
                &["target", "peer", "relation"],
            ),
            ("price_preamble", &self.price_preamble, &["target"]),
            ("factor_block", &self.factor_block, &["factors"]),
            ("relation_block", &self.relation_block, &["relations"]),
            ("time_line", &self.time_line, &["date", "target", "movement"]),
            ("price_conclusion", &self.price_conclusion, &["date", "target"]),
        ];
        for (name, template, allowed) in checks {
            check_placeholders(name, template, allowed)?;
        }
        if self.factor_variants.is_empty() {
            return Err(Error::Template("no factor template variants".into()));
        }
        for (i, v) in self.factor_variants.iter().enumerate() {
            check_placeholders(&format!("factor_variants[{i}]"), v, &["target", "k", "news"])?;
        }
        if self.factor_variant >= self.factor_variants.len() {
            return Err(Error::Template(format!(
                "factor variant {} out of range (have {})",
                self.factor_variant,
                self.factor_variants.len()
            )));
        }
        if !self.relation.contains(BLANK) || !self.price_conclusion.contains(BLANK) {
            return Err(Error::Template(
                "relation and price_conclusion templates need a ___ blank".into(),
            ));
        }
        Ok(())
    }

    pub fn movement_word(&self, rose: bool) -> &str {
        if rose {
            &self.rose_word
        } else {
            &self.fell_word
        }
    }
}

fn check_placeholders(name: &str, template: &str, allowed: &[&str]) -> Result<()> {
    for placeholder in placeholders(template) {
        if !allowed.contains(&placeholder) {
            return Err(Error::Template(format!(
                "template {name} uses unsupported placeholder {{{placeholder}}}"
            )));
        }
    }
    Ok(())
}

fn is_placeholder_name(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_lowercase() || c == '_')
}

/// Placeholder names in order of appearance.
pub fn placeholders(template: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        match after.find('}') {
            Some(close) if is_placeholder_name(&after[..close]) => {
                out.push(&after[..close]);
                rest = &after[close + 1..];
            }
            _ => rest = after,
        }
    }
    out
}

/// Substitutes `{name}` placeholders. Substituted values are not rescanned.
pub fn render(template: &str, bindings: &[(&str, &str)]) -> Result<String> {
    let mut out = String::with_capacity(template.len() + 64);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        match after.find('}') {
            Some(close) if is_placeholder_name(&after[..close]) => {
                let name = &after[..close];
                let value = bindings
                    .iter()
                    .find(|(k, _)| *k == name)
                    .map(|(_, v)| *v)
                    .ok_or_else(|| Error::Template(format!("no binding for {{{name}}}")))?;
                out.push_str(value);
                rest = &after[close + 1..];
            }
            _ => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    Ok(out)
}

pub fn render_relation_prompt(tpl: &PromptTemplateSet, target: &StockEntry, peer: &StockEntry) -> Result<String> {
    if target.ticker == peer.ticker {
        return Err(Error::Template(format!(
            "relation prompt needs two distinct stocks, got {} twice",
            target.ticker
        )));
    }
    render(&tpl.relation, &[("target", &target.company), ("peer", &peer.company)])
}

pub fn render_factor_prompt(tpl: &PromptTemplateSet, target: &StockEntry, k: usize, news_blob: &str) -> Result<String> {
    if k == 0 {
        return Err(Error::Template("k must be at least 1".into()));
    }
    if news_blob.trim().is_empty() {
        return Err(Error::Template("factor prompt needs news text".into()));
    }
    let variant = tpl
        .factor_variants
        .get(tpl.factor_variant)
        .ok_or_else(|| Error::Template(format!("factor variant {} missing", tpl.factor_variant)))?;
    render(
        variant,
        &[("target", &target.company), ("k", &k.to_string()), ("news", news_blob)],
    )
}

/// Assembles the prediction prompt. Absent knowledge blocks are left out;
/// a text-only record has no movement lines.
pub fn render_price_prompt(
    tpl: &PromptTemplateSet,
    target: &StockEntry,
    relations: &[String],
    factors: &[String],
    movements: &MovementWindow,
    target_date: NaiveDate,
) -> Result<String> {
    let mut lines = vec![render(&tpl.price_preamble, &[("target", &target.ticker)])?];
    if !factors.is_empty() {
        let joined = factors.join(&tpl.list_separator);
        lines.push(render(&tpl.factor_block, &[("factors", &joined)])?);
    }
    if !relations.is_empty() {
        let joined = relations.join(&tpl.list_separator);
        lines.push(render(&tpl.relation_block, &[("relations", &joined)])?);
    }
    for (date, direction) in movements.iter() {
        let date = date.to_string();
        let word = tpl.movement_word(direction == crate::domain::Direction::Rise);
        lines.push(render(
            &tpl.time_line,
            &[("date", &date), ("target", &target.ticker), ("movement", word)],
        )?);
    }
    lines.push(render(
        &tpl.price_conclusion,
        &[("date", &target_date.to_string()), ("target", &target.ticker)],
    )?);
    Ok(lines.join("\n"))
}
