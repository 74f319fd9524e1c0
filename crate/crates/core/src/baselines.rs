//! Non-LLM comparison methods: keyphrase lexicon scoring and a mapping from
//! externally produced sentiment labels to directions.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::{evaluate, Direction, EvalReport, Prediction};
use crate::error::{Error, Result};
use crate::ingest::{DatasetRecord, RecordRef};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LexiconScope {
    /// One lexicon per ticker, built from that ticker's phrases.
    #[default]
    PerStock,
    /// A single lexicon pooled over all tickers.
    Global,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct KeyphraseLexicon {
    pub pos: BTreeSet<String>,
    pub neg: BTreeSet<String>,
    pub scope: LexiconScope,
    pub allow_overlap: bool,
}

fn normalize_phrase(p: &str) -> String {
    p.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

impl KeyphraseLexicon {
    pub fn new<P, N>(pos: P, neg: N) -> Self
    where
        P: IntoIterator,
        P::Item: AsRef<str>,
        N: IntoIterator,
        N::Item: AsRef<str>,
    {
        Self {
            pos: pos
                .into_iter()
                .map(|p| normalize_phrase(p.as_ref()))
                .filter(|p| !p.is_empty())
                .collect(),
            neg: neg
                .into_iter()
                .map(|p| normalize_phrase(p.as_ref()))
                .filter(|p| !p.is_empty())
                .collect(),
            scope: LexiconScope::Global,
            allow_overlap: true,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.pos.is_empty() && self.neg.is_empty()
    }

    pub fn overlap(&self) -> Vec<&String> {
        self.pos.intersection(&self.neg).collect()
    }

    fn check(&self) -> Result<()> {
        if !self.allow_overlap && !self.pos.is_disjoint(&self.neg) {
            return Err(Error::Config(format!(
                "phrases in both POS and NEG: {:?}",
                self.overlap()
            )));
        }
        Ok(())
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

fn is_cjk(c: char) -> bool {
    matches!(c as u32, 0x3040..=0x30FF | 0x3400..=0x4DBF | 0x4E00..=0x9FFF | 0xF900..=0xFAFF | 0xAC00..=0xD7AF)
}

/// Case-insensitive presence of `phrase` with word boundaries at both ends.
/// Boundaries are not required next to CJK characters.
pub fn contains_phrase(text: &str, phrase: &str) -> bool {
    contains_normalized(&normalize_phrase(text), &normalize_phrase(phrase))
}

fn contains_normalized(lower_text: &str, phrase: &str) -> bool {
    let (Some(first), Some(last)) = (phrase.chars().next(), phrase.chars().next_back()) else {
        return false;
    };
    let mut from = 0;
    while let Some(pos) = lower_text[from..].find(phrase) {
        let start = from + pos;
        let end = start + phrase.len();
        let before_ok = !is_word_char(first)
            || is_cjk(first)
            || lower_text[..start]
                .chars()
                .next_back()
                .is_none_or(|c| !is_word_char(c) || is_cjk(c));
        let after_ok = !is_word_char(last)
            || is_cjk(last)
            || lower_text[end..]
                .chars()
                .next()
                .is_none_or(|c| !is_word_char(c) || is_cjk(c));
        if before_ok && after_ok {
            return true;
        }
        from = start + first.len_utf8();
    }
    false
}

/// Net count of present phrases: each POS phrase found adds one, each NEG
/// phrase found subtracts one, regardless of how often it occurs.
pub fn keyphrase_balance(text: &str, lexicon: &KeyphraseLexicon) -> i64 {
    let lower = normalize_phrase(text);
    let pos = lexicon.pos.iter().filter(|p| contains_normalized(&lower, p)).count() as i64;
    let neg = lexicon.neg.iter().filter(|p| contains_normalized(&lower, p)).count() as i64;
    pos - neg
}

pub fn keyphrase_score(text: &str, lexicon: &KeyphraseLexicon) -> Result<f64> {
    if lexicon.is_empty() {
        return Err(Error::Config("keyphrase lexicon is empty".into()));
    }
    Ok(sigmoid(keyphrase_balance(text, lexicon) as f64))
}

/// Rise only when the score is strictly above the threshold.
pub fn keyphrase_direction(score: f64, threshold: f64) -> Direction {
    if score > threshold {
        Direction::Rise
    } else {
        Direction::Fall
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
struct PhraseRow {
    ticker: String,
    phrase: String,
    rank: u32,
}

fn read_phrase_file(path: &Path) -> Result<BTreeMap<String, Vec<(u32, String)>>> {
    if !path.exists() {
        return Err(Error::Config(format!(
            "keyphrase file {} does not exist",
            path.display()
        )));
    }
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Ingest {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
    let mut out: BTreeMap<String, Vec<(u32, String)>> = BTreeMap::new();
    for (i, row) in reader.deserialize::<PhraseRow>().enumerate() {
        let row = row.map_err(|e| Error::Ingest {
            path: path.to_path_buf(),
            message: format!("row {}: {e}", i + 2),
        })?;
        let phrase = normalize_phrase(&row.phrase);
        if phrase.is_empty() {
            continue;
        }
        out.entry(row.ticker).or_default().push((row.rank, phrase));
    }
    Ok(out)
}

fn top_k(mut ranked: Vec<(u32, String)>, k: usize) -> Vec<String> {
    ranked.sort();
    let mut seen = HashSet::new();
    ranked
        .into_iter()
        .filter(|(_, p)| seen.insert(p.clone()))
        .take(k)
        .map(|(_, p)| p)
        .collect()
}

#[derive(Debug, Clone)]
pub struct LexiconSources<'a> {
    /// Phrases extracted from the rise subset.
    pub pos_path: &'a Path,
    /// Phrases extracted from the fall subset.
    pub neg_path: &'a Path,
    pub k: usize,
    pub scope: LexiconScope,
    pub allow_overlap: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lexicons {
    pub scope: LexiconScope,
    pub global: KeyphraseLexicon,
    pub by_stock: BTreeMap<String, KeyphraseLexicon>,
    /// Training records that also appear in the evaluation set.
    pub leaked_records: usize,
}

impl Lexicons {
    /// The lexicon used to score news about `ticker`.
    pub fn for_ticker(&self, ticker: &str) -> Option<&KeyphraseLexicon> {
        match self.scope {
            LexiconScope::Global => Some(&self.global),
            LexiconScope::PerStock => self.by_stock.get(ticker),
        }
    }
}

/// Builds POS/NEG lexicons from ranked phrase files `(ticker, phrase, rank)`,
/// keeping the `k` best-ranked phrases per stock. `train` declares which
/// records produced the phrase files; overlap with `eval` is reported.
pub fn build_lexicons(train: &[RecordRef], eval: &[RecordRef], src: &LexiconSources<'_>) -> Result<Lexicons> {
    if src.k == 0 {
        return Err(Error::Config("keyphrase k must be at least 1".into()));
    }
    let pos = read_phrase_file(src.pos_path)?;
    let neg = read_phrase_file(src.neg_path)?;

    let tickers: BTreeSet<&String> = pos.keys().chain(neg.keys()).collect();
    let mut by_stock = BTreeMap::new();
    let mut global = KeyphraseLexicon {
        scope: LexiconScope::Global,
        allow_overlap: src.allow_overlap,
        ..Default::default()
    };
    for ticker in tickers {
        let lex = KeyphraseLexicon {
            pos: top_k(pos.get(ticker).cloned().unwrap_or_default(), src.k)
                .into_iter()
                .collect(),
            neg: top_k(neg.get(ticker).cloned().unwrap_or_default(), src.k)
                .into_iter()
                .collect(),
            scope: LexiconScope::PerStock,
            allow_overlap: src.allow_overlap,
        };
        let overlap = lex.overlap();
        if !overlap.is_empty() {
            log::warn!("{ticker}: phrases in both POS and NEG: {overlap:?}");
        }
        lex.check()?;
        global.pos.extend(lex.pos.iter().cloned());
        global.neg.extend(lex.neg.iter().cloned());
        by_stock.insert(ticker.clone(), lex);
    }
    if src.scope == LexiconScope::Global {
        let overlap = global.overlap();
        if !overlap.is_empty() {
            log::warn!("global lexicon has phrases in both POS and NEG: {overlap:?}");
        }
        global.check()?;
    }

    let eval_set: HashSet<&RecordRef> = eval.iter().collect();
    let leaked_records = train.iter().filter(|r| eval_set.contains(r)).count();
    if leaked_records > 0 {
        log::warn!("{leaked_records} lexicon training record(s) are also evaluation records");
    }
    Ok(Lexicons {
        scope: src.scope,
        global,
        by_stock,
        leaked_records,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselinePrediction {
    pub record: RecordRef,
    pub gold: Direction,
    pub direction: Prediction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

/// Scores every record's news. Records whose stock has no lexicon count as
/// parse failures.
pub fn run_keyphrase_baseline(
    records: &[DatasetRecord],
    lexicons: &Lexicons,
    threshold: f64,
) -> Vec<BaselinePrediction> {
    records
        .iter()
        .map(|r| {
            let score = lexicons
                .for_ticker(&r.target.ticker)
                .and_then(|lex| keyphrase_score(&r.news_blob(), lex).ok());
            BaselinePrediction {
                record: r.key(),
                gold: r.gold,
                direction: score.map_or(Prediction::ParseFailure, |s| keyphrase_direction(s, threshold).into()),
                score,
            }
        })
        .collect()
}

/// Positive maps to Rise; negative and neutral map to Fall.
pub fn sentiment_direction(label: &str) -> Prediction {
    match label.trim().to_ascii_lowercase().as_str() {
        "positive" | "pos" => Prediction::Rise,
        "negative" | "neg" | "neutral" => Prediction::Fall,
        _ => Prediction::ParseFailure,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentimentLabel {
    pub record_ref: RecordRef,
    pub label: String,
}

pub fn read_sentiment_labels(path: impl AsRef<Path>) -> Result<Vec<SentimentLabel>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
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

/// Applies sentiment labels to records. A record without a label counts as
/// a parse failure; the first label for a record wins.
pub fn run_sentiment_baseline(records: &[DatasetRecord], labels: &[SentimentLabel]) -> Vec<BaselinePrediction> {
    let mut by_ref: HashMap<&RecordRef, &str> = HashMap::new();
    for l in labels {
        by_ref.entry(&l.record_ref).or_insert(&l.label);
    }
    records
        .iter()
        .map(|r| {
            let key = r.key();
            let direction = by_ref
                .get(&key)
                .map_or(Prediction::ParseFailure, |l| sentiment_direction(l));
            BaselinePrediction {
                record: key,
                gold: r.gold,
                direction,
                score: None,
            }
        })
        .collect()
}

pub fn evaluate_baseline(predictions: &[BaselinePrediction]) -> Result<EvalReport> {
    let pairs: Vec<(Direction, Prediction)> = predictions.iter().map(|p| (p.gold, p.direction)).collect();
    evaluate(&pairs, Direction::Rise)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Write;

    fn lex(pos: &[&str], neg: &[&str]) -> KeyphraseLexicon {
        KeyphraseLexicon::new(pos.iter().copied(), neg.iter().copied())
    }

    #[test]
    fn score_examples() {
        let l = lex(&["record profit", "upgrade"], &["lawsuit"]);
        let s = keyphrase_score("Record profit despite a lawsuit", &l).unwrap();
        assert_eq!(s, 0.5);
        let s = keyphrase_score("Record profit and an upgrade", &l).unwrap();
        assert!((s - 0.88080).abs() < 1e-5);
        let s = keyphrase_score("A new LAWSUIT was filed", &l).unwrap();
        assert!((s - 0.26894).abs() < 1e-5);
        assert!(keyphrase_score("x", &KeyphraseLexicon::default()).is_err());
    }

    #[test]
    fn direction_threshold() {
        assert_eq!(keyphrase_direction(0.88, 0.5), Direction::Rise);
        assert_eq!(keyphrase_direction(0.5, 0.5), Direction::Fall);
        assert_eq!(keyphrase_direction(0.27, 0.5), Direction::Fall);
    }

    #[test]
    fn word_boundaries() {
        assert!(contains_phrase("An upgrade!", "upgrade"));
        assert!(!contains_phrase("downgraded", "upgrade"));
        assert!(!contains_phrase("upgrades", "upgrade"));
        assert!(contains_phrase("Stock  Buyback plan", "stock buyback"));
        assert!(contains_phrase("公司业绩增长明显", "业绩增长"));
        assert!(!contains_phrase("", "x"));
    }

    #[test]
    fn sentiment_mapping() {
        assert_eq!(sentiment_direction("positive"), Prediction::Rise);
        assert_eq!(sentiment_direction("negative"), Prediction::Fall);
        assert_eq!(sentiment_direction("Neutral"), Prediction::Fall);
        assert_eq!(sentiment_direction("bullish"), Prediction::ParseFailure);
    }

    fn write_csv(dir: &Path, name: &str, rows: &[(&str, &str, u32)]) -> std::path::PathBuf {
        let path = dir.join(name);
        let mut f = std::fs::File::create(&path).unwrap();
        writeln!(f, "ticker,phrase,rank").unwrap();
        for (t, p, r) in rows {
            writeln!(f, "{t},{p},{r}").unwrap();
        }
        path
    }

    fn sources<'a>(pos: &'a Path, neg: &'a Path, k: usize) -> LexiconSources<'a> {
        LexiconSources {
            pos_path: pos,
            neg_path: neg,
            k,
            scope: LexiconScope::PerStock,
            allow_overlap: true,
        }
    }

    #[test]
    fn lexicon_sizes_and_overlap() {
        let dir = tempfile::tempdir().unwrap();
        let pos = write_csv(
            dir.path(),
            "pos.csv",
            &[
                ("AAPL", "record sales", 1),
                ("AAPL", "upgrade", 2),
                ("AAPL", "buyback", 3),
            ],
        );
        let neg = write_csv(dir.path(), "neg.csv", &[("AAPL", "lawsuit", 1), ("AAPL", "Upgrade", 2)]);
        let l = build_lexicons(&[], &[], &sources(&pos, &neg, 5)).unwrap();
        let aapl = l.for_ticker("AAPL").unwrap();
        assert_eq!((aapl.pos.len(), aapl.neg.len()), (3, 2));
        assert_eq!(aapl.overlap(), vec!["upgrade"]);

        let mut strict = sources(&pos, &neg, 5);
        strict.allow_overlap = false;
        assert!(matches!(build_lexicons(&[], &[], &strict), Err(Error::Config(_))));
    }

    #[test]
    fn lexicon_top_k_and_missing_file() {
        let dir = tempfile::tempdir().unwrap();
        let rows: Vec<(String, u32)> = (1..=9).rev().map(|i| (format!("phrase {i}"), i)).collect();
        let rows: Vec<(&str, &str, u32)> = rows.iter().map(|(p, r)| ("TSLA", p.as_str(), *r)).collect();
        let pos = write_csv(dir.path(), "pos.csv", &rows);
        let neg = write_csv(dir.path(), "neg.csv", &[]);
        let l = build_lexicons(&[], &[], &sources(&pos, &neg, 5)).unwrap();
        let tsla = l.for_ticker("TSLA").unwrap();
        let expected: BTreeSet<String> = (1..=5).map(|i| format!("phrase {i}")).collect();
        assert_eq!(tsla.pos, expected);

        let missing = dir.path().join("nope.csv");
        assert!(matches!(
            build_lexicons(&[], &[], &sources(&pos, &missing, 5)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn leakage_is_counted() {
        let dir = tempfile::tempdir().unwrap();
        let pos = write_csv(dir.path(), "pos.csv", &[("AAPL", "upgrade", 1)]);
        let neg = write_csv(dir.path(), "neg.csv", &[]);
        let r = |d: &str| RecordRef {
            ticker: "AAPL".into(),
            date: d.parse().unwrap(),
        };
        let l = build_lexicons(
            &[r("2020-01-02"), r("2020-01-03")],
            &[r("2020-01-03")],
            &sources(&pos, &neg, 5),
        )
        .unwrap();
        assert_eq!(l.leaked_records, 1);
    }

    fn word() -> impl Strategy<Value = String> {
        prop::sample::select(vec!["up", "down", "loss", "gain", "beat", "miss", "deal", "cut"]).prop_map(String::from)
    }

    proptest! {
        #[test]
        fn adding_present_pos_never_decreases(words in prop::collection::vec(word(), 1..20), pos in prop::collection::vec(word(), 0..4), neg in prop::collection::vec(word(), 1..4), extra in word()) {
            let text = words.join(" ");
            let base = lex(&pos.iter().map(String::as_str).collect::<Vec<_>>(), &neg.iter().map(String::as_str).collect::<Vec<_>>());
            let mut more = base.clone();
            more.pos.insert(extra.clone());
            let s0 = keyphrase_score(&text, &base).unwrap();
            let s1 = keyphrase_score(&text, &more).unwrap();
            prop_assert!(s1 >= s0);
            let mut more_neg = base.clone();
            more_neg.neg.insert(extra);
            prop_assert!(keyphrase_score(&text, &more_neg).unwrap() <= s0);
        }

        #[test]
        fn swapping_classes_complements(words in prop::collection::vec(word(), 0..20), pos in prop::collection::vec(word(), 0..4), neg in prop::collection::vec(word(), 1..4)) {
            let text = words.join(" ");
            let a = lex(&pos.iter().map(String::as_str).collect::<Vec<_>>(), &neg.iter().map(String::as_str).collect::<Vec<_>>());
            let b = KeyphraseLexicon { pos: a.neg.clone(), neg: a.pos.clone(), ..a.clone() };
            let sum = keyphrase_score(&text, &a).unwrap() + keyphrase_score(&text, &b).unwrap();
            prop_assert!((sum - 1.0).abs() < 1e-12);
        }

        #[test]
        fn duplicate_occurrences_do_not_matter(words in prop::collection::vec(word(), 1..20), pos in prop::collection::vec(word(), 1..4), neg in prop::collection::vec(word(), 0..4), i in any::<prop::sample::Index>()) {
            let l = lex(&pos.iter().map(String::as_str).collect::<Vec<_>>(), &neg.iter().map(String::as_str).collect::<Vec<_>>());
            let text = words.join(" ");
            let doubled = format!("{text} {}", words[i.index(words.len())]);
            prop_assert_eq!(keyphrase_score(&text, &l).unwrap(), keyphrase_score(&doubled, &l).unwrap());
        }
    }
}
