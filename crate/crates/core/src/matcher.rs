//! Finds registry stocks mentioned in a news text.
//!
//! A stock matches when its ticker appears as a whole, case-sensitive token
//! or when its company name (display form, suffix-stripped form, or an alias)
//! appears case-insensitively on word boundaries. Tickers that are also
//! ordinary words only count in unambiguous forms: `$A`, `(A)`, `NYSE: A`.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use aho_corasick::{AhoCorasick, AhoCorasickBuilder, MatchKind};
use serde::{Deserialize, Serialize};

use crate::domain::StockEntry;
use crate::error::{Error, Result};

/// Tickers that collide with common words or abbreviations.
pub const AMBIGUOUS_TICKERS: &[&str] = &[
    "AI", "ALL", "AM", "AN", "ARE", "AT", "BE", "BEST", "BIG", "BY", "CAN", "CAR", "CASH", "CEO", "DD", "DO", "EAT",
    "EV", "FOR", "FUN", "GO", "GOOD", "HAS", "HE", "HI", "IT", "KEY", "LIFE", "LOVE", "LOW", "MAIN", "MAN", "MOVE",
    "NEW", "NICE", "NOW", "ON", "ONE", "OPEN", "OUT", "PAY", "PLAY", "REAL", "RUN", "SAFE", "SEE", "SHOP", "SITE",
    "SO", "TRUE", "TV", "TWO", "UP", "USA", "WELL", "YOU",
];

const NAME_SUFFIXES: &[&str] = &[
    "incorporated",
    "inc.",
    "inc",
    "corporation",
    "corp.",
    "corp",
    "company",
    "co.",
    "co",
    "limited",
    "ltd.",
    "ltd",
    "plc",
    "n.v.",
    "s.a.",
    "ag",
    "holdings",
    "group",
];

const CN_NAME_SUFFIXES: &[&str] = &["股份有限公司", "有限责任公司", "有限公司", "集团"];

const EXCHANGE_PREFIXES: &[&str] = &["NYSE:", "NASDAQ:", "Nasdaq:", "NYSE: ", "NASDAQ: ", "Nasdaq: "];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evidence {
    /// Text exactly as it appears in the news.
    pub surface: String,
    /// Byte offset of `surface` in the news text.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchResult {
    pub target: StockEntry,
    /// Peers in order of first mention; never contains the target.
    pub matched: Vec<StockEntry>,
    /// One evidence list per entry of `matched`.
    pub evidence: Vec<Vec<Evidence>>,
}

/// Pre-compiled search structure over a registry; build once, share freely.
#[derive(Debug, Clone)]
pub struct StockIndex {
    entries: Vec<StockEntry>,
    names: AhoCorasick,
    name_owner: Vec<usize>,
    tickers: AhoCorasick,
    ticker_owner: Vec<usize>,
    ambiguous: Vec<bool>,
}

impl StockIndex {
    pub fn new(registry: &[StockEntry]) -> Self {
        Self::with_aliases(registry, &[])
    }

    /// `aliases` are `(ticker, alias)` pairs; unknown tickers are ignored.
    pub fn with_aliases(registry: &[StockEntry], aliases: &[(String, String)]) -> Self {
        let mut name_patterns = Vec::new();
        let mut name_owner = Vec::new();
        let mut ticker_patterns = Vec::new();
        let mut ticker_owner = Vec::new();
        let mut ambiguous = Vec::new();
        let ambiguous_set: HashSet<&str> = AMBIGUOUS_TICKERS.iter().copied().collect();

        for (i, entry) in registry.iter().enumerate() {
            let mut forms: Vec<String> = vec![entry.company.clone(), normalize_company(&entry.company)];
            forms.extend(
                aliases
                    .iter()
                    .filter(|(t, _)| *t == entry.ticker)
                    .map(|(_, a)| a.trim().to_string()),
            );
            let mut seen = HashSet::new();
            for form in forms {
                if form.chars().count() < 2 || !seen.insert(form.to_lowercase()) {
                    continue;
                }
                name_patterns.push(form);
                name_owner.push(i);
            }
            ticker_patterns.push(entry.ticker.clone());
            ticker_owner.push(i);
            ambiguous.push(entry.ticker.chars().count() == 1 || ambiguous_set.contains(entry.ticker.as_str()));
        }

        let build = |patterns: &[String], case_insensitive: bool| {
            AhoCorasickBuilder::new()
                .match_kind(MatchKind::Standard)
                .ascii_case_insensitive(case_insensitive)
                .build(patterns)
                .expect("registry patterns compile")
        };
        Self {
            entries: registry.to_vec(),
            names: build(&name_patterns, true),
            name_owner,
            tickers: build(&ticker_patterns, false),
            ticker_owner,
            ambiguous,
        }
    }

    pub fn entries(&self) -> &[StockEntry] {
        &self.entries
    }

    pub fn get(&self, ticker: &str) -> Option<&StockEntry> {
        self.entries.iter().find(|e| e.ticker == ticker)
    }

    /// Registry stocks other than `target` mentioned in `text`.
    pub fn match_stocks(&self, text: &str, target: &StockEntry) -> MatchResult {
        // owner -> (offset -> surface), keeping the longest surface per offset
        let mut hits: BTreeMap<usize, BTreeMap<usize, &str>> = BTreeMap::new();
        let mut add = |owner: usize, start: usize, end: usize| {
            let surface = &text[start..end];
            let slot = hits.entry(owner).or_default().entry(start).or_insert(surface);
            if surface.len() > slot.len() {
                *slot = surface;
            }
        };

        for m in self.names.find_overlapping_iter(text) {
            let pattern = m.pattern().as_usize();
            if name_boundaries_ok(text, m.start(), m.end()) {
                add(self.name_owner[pattern], m.start(), m.end());
            }
        }
        for m in self.tickers.find_overlapping_iter(text) {
            let pattern = m.pattern().as_usize();
            let owner = self.ticker_owner[pattern];
            if !ticker_boundaries_ok(text, m.start(), m.end()) {
                continue;
            }
            let cashtag = text[..m.start()].ends_with('$');
            if self.ambiguous[pattern] && !cashtag && !unambiguous_context(text, m.start(), m.end()) {
                continue;
            }
            let start = if cashtag { m.start() - 1 } else { m.start() };
            add(owner, start, m.end());
        }

        let mut found: Vec<(usize, usize, Vec<Evidence>)> = hits
            .into_iter()
            .filter(|(owner, _)| self.entries[*owner].ticker != target.ticker)
            .map(|(owner, by_offset)| {
                let evidence: Vec<Evidence> = by_offset
                    .into_iter()
                    .map(|(offset, surface)| Evidence {
                        surface: surface.to_string(),
                        offset,
                    })
                    .collect();
                (evidence[0].offset, owner, evidence)
            })
            .collect();
        found.sort_by_key(|(first, owner, _)| (*first, *owner));

        let mut matched = Vec::with_capacity(found.len());
        let mut evidence = Vec::with_capacity(found.len());
        let mut tickers = HashSet::new();
        for (_, owner, ev) in found {
            if tickers.insert(self.entries[owner].ticker.clone()) {
                matched.push(self.entries[owner].clone());
                evidence.push(ev);
            }
        }
        MatchResult {
            target: target.clone(),
            matched,
            evidence,
        }
    }
}

/// Builds a throwaway index and matches once.
pub fn match_stocks(news_text: &str, registry: &[StockEntry], target: &StockEntry) -> MatchResult {
    StockIndex::new(registry).match_stocks(news_text, target)
}

/// Drops a leading "The" and trailing legal-form suffixes ("Inc.", "Corp.",
/// "股份有限公司", ...).
pub fn normalize_company(name: &str) -> String {
    let mut s = name.trim().to_string();
    if s.len() > 4 && s.get(..4).is_some_and(|p| p.eq_ignore_ascii_case("the ")) {
        s = s[4..].trim_start().to_string();
    }
    loop {
        let before = s.len();
        s = s.trim_end_matches([',', ' ', '&']).to_string();
        if let Some(suffix) = NAME_SUFFIXES.iter().find(|suf| {
            let cut = s.len().saturating_sub(suf.len());
            s.len() > suf.len()
                && s.is_char_boundary(cut)
                && s[cut..].eq_ignore_ascii_case(suf)
                && s[..cut].ends_with([' ', ','])
        }) {
            s.truncate(s.len() - suffix.len());
        } else if let Some(suffix) = CN_NAME_SUFFIXES
            .iter()
            .find(|suf| s.ends_with(*suf) && s.len() > suf.len())
        {
            s.truncate(s.len() - suffix.len());
        }
        s = s.trim_end_matches([',', ' ', '&']).to_string();
        if s.len() == before {
            return s;
        }
    }
}

/// Reads a `ticker,alias` CSV.
pub fn load_aliases(path: impl AsRef<Path>) -> Result<Vec<(String, String)>> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Config(format!("alias file {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| Error::Config(format!("alias file {}: {e}", path.display())))?;
        match (row.get(0), row.get(1)) {
            (Some(t), Some(a)) if !t.is_empty() && !a.is_empty() => out.push((t.to_string(), a.to_string())),
            _ => {
                return Err(Error::Config(format!(
                    "alias file {}: line {} needs ticker,alias",
                    path.display(),
                    row.position().map_or(0, |p| p.line())
                )))
            }
        }
    }
    Ok(out)
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

fn name_boundaries_ok(text: &str, start: usize, end: usize) -> bool {
    let matched = &text[start..end];
    let first = matched.chars().next();
    let last = matched.chars().next_back();
    // CJK names have no word boundaries to check.
    let check_left = first.is_some_and(|c| c.is_ascii_alphanumeric());
    let check_right = last.is_some_and(|c| c.is_ascii_alphanumeric());
    let left_ok = !check_left || !text[..start].chars().next_back().is_some_and(is_word_char);
    let right_ok = !check_right || !text[end..].chars().next().is_some_and(is_word_char);
    left_ok && right_ok
}

fn ticker_boundaries_ok(text: &str, start: usize, end: usize) -> bool {
    let mut before = text[..start].chars().rev();
    let left_ok = match before.next() {
        None => true,
        Some(c) if is_word_char(c) => false,
        Some('.') | Some('-') => !before.next().is_some_and(is_word_char),
        Some(_) => true,
    };
    let mut after = text[end..].chars();
    let right_ok = match after.next() {
        None => true,
        Some(c) if is_word_char(c) => false,
        Some('.') | Some('-') => !after.next().is_some_and(is_word_char),
        Some(_) => true,
    };
    left_ok && right_ok
}

fn unambiguous_context(text: &str, start: usize, end: usize) -> bool {
    let parenthesized = text[..start].ends_with('(') && text[end..].starts_with(')');
    let exchange = EXCHANGE_PREFIXES.iter().any(|p| text[..start].ends_with(p));
    parenthesized || exchange
}
