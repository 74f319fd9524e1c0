//! Dataset ingestion: the stock registry, trading-day windows, the canonical
//! JSONL record format and adapters for the native benchmark layouts.

mod adapters;

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::domain::{label_movements, Direction, MovementWindow, PriceWindow, StockEntry};
use crate::error::{Error, Result};

pub use adapters::load_dataset;

/// One news text (tweet or article) published on a given day.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NewsItem {
    pub date: NaiveDate,
    pub text: String,
    pub source_id: String,
}

/// A single prediction sample: one stock on one target date.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CanonicalRecord", into = "CanonicalRecord")]
pub struct DatasetRecord {
    pub target: StockEntry,
    pub target_date: NaiveDate,
    pub news: Vec<NewsItem>,
    /// Closes ending the trading day before `target_date`; empty for
    /// text-only datasets.
    pub history: PriceWindow,
    pub gold: Direction,
}

impl DatasetRecord {
    pub fn new(
        target: StockEntry,
        target_date: NaiveDate,
        news: Vec<NewsItem>,
        history: PriceWindow,
        gold: Direction,
    ) -> Result<Self> {
        if news.is_empty() {
            return Err(Error::InvalidValue(format!(
                "record {} {target_date} has no news",
                target.ticker
            )));
        }
        if let Some(item) = news.iter().find(|n| n.date != target_date) {
            return Err(Error::InvalidValue(format!(
                "news item {} dated {} attached to {target_date}",
                item.source_id, item.date
            )));
        }
        if news.iter().any(|n| n.text.trim().is_empty()) {
            return Err(Error::InvalidValue(format!(
                "record {} {target_date} has an empty news text",
                target.ticker
            )));
        }
        if history.dates().last().is_some_and(|d| *d >= target_date) {
            return Err(Error::InvalidValue(format!(
                "history for {} reaches past {target_date}",
                target.ticker
            )));
        }
        if history.len() == 1 {
            return Err(Error::InvalidValue(
                "history must be empty or hold at least two closes".into(),
            ));
        }
        Ok(Self {
            target,
            target_date,
            news,
            history,
            gold,
        })
    }

    pub fn key(&self) -> RecordRef {
        RecordRef {
            ticker: self.target.ticker.clone(),
            date: self.target_date,
        }
    }

    /// Past movements, or an empty window for text-only records.
    pub fn movements(&self) -> MovementWindow {
        if self.history.is_empty() {
            MovementWindow::default()
        } else {
            label_movements(&self.history).expect("history holds at least two closes")
        }
    }

    /// Same-day news texts joined in source order by a blank line.
    pub fn news_blob(&self) -> String {
        self.news.iter().map(|n| n.text.trim()).collect::<Vec<_>>().join("\n\n")
    }
}

/// Identifies a record by `(ticker, date)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RecordRef {
    pub ticker: String,
    pub date: NaiveDate,
}

impl fmt::Display for RecordRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.ticker, self.date)
    }
}

/// Wire layout of one canonical JSONL line. Field order is fixed.
#[derive(Serialize, Deserialize)]
struct CanonicalRecord {
    stock: StockEntry,
    date: NaiveDate,
    news: Vec<NewsItem>,
    closes: Vec<f64>,
    close_dates: Vec<NaiveDate>,
    gold: Direction,
}

impl TryFrom<CanonicalRecord> for DatasetRecord {
    type Error = Error;
    fn try_from(c: CanonicalRecord) -> Result<Self> {
        let stock = StockEntry::new(c.stock.company, c.stock.ticker, c.stock.industry)?;
        let history = PriceWindow::new(c.close_dates, c.closes)?;
        DatasetRecord::new(stock, c.date, c.news, history, c.gold)
    }
}

impl From<DatasetRecord> for CanonicalRecord {
    fn from(r: DatasetRecord) -> Self {
        CanonicalRecord {
            stock: r.target,
            date: r.target_date,
            news: r.news,
            closes: r.history.closes().to_vec(),
            close_dates: r.history.dates().to_vec(),
            gold: r.gold,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    En,
    Cn,
}

impl FromStr for Language {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "en" => Ok(Language::En),
            "cn" | "zh" => Ok(Language::Cn),
            other => Err(Error::Config(format!("unknown language {other:?}"))),
        }
    }
}

/// The four supported benchmark layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DatasetKind {
    #[serde(rename = "stocknet")]
    StockNet,
    #[serde(rename = "cmin-us")]
    CminUs,
    #[serde(rename = "cmin-cn")]
    CminCn,
    #[serde(rename = "edt")]
    Edt,
}

impl DatasetKind {
    pub fn display_name(self) -> &'static str {
        match self {
            DatasetKind::StockNet => "StockNet",
            DatasetKind::CminUs => "CMIN-US",
            DatasetKind::CminCn => "CMIN-CN",
            DatasetKind::Edt => "EDT",
        }
    }

    pub fn language(self) -> Language {
        match self {
            DatasetKind::CminCn => Language::Cn,
            _ => Language::En,
        }
    }

    pub fn has_timeseries(self) -> bool {
        self != DatasetKind::Edt
    }

    /// Record count of the complete published corpus.
    pub fn published_size(self) -> usize {
        match self {
            DatasetKind::StockNet => 19_318,
            DatasetKind::CminUs => 83_553,
            DatasetKind::CminCn => 198_781,
            DatasetKind::Edt => 54_080,
        }
    }
}

impl FromStr for DatasetKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "stocknet" => Ok(DatasetKind::StockNet),
            "cmin-us" => Ok(DatasetKind::CminUs),
            "cmin-cn" => Ok(DatasetKind::CminCn),
            "edt" => Ok(DatasetKind::Edt),
            other => Err(Error::Config(format!(
                "unknown dataset {other:?}; expected stocknet, cmin-us, cmin-cn or edt"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub kind: Option<DatasetKind>,
    pub language: Language,
    pub has_timeseries: bool,
    pub record_count: usize,
}

impl DatasetManifest {
    pub fn for_kind(kind: DatasetKind) -> Self {
        Self {
            name: kind.display_name().to_string(),
            kind: Some(kind),
            language: kind.language(),
            has_timeseries: kind.has_timeseries(),
            record_count: 0,
        }
    }

    /// Manifest for records already in canonical JSONL form.
    pub fn canonical(name: impl Into<String>, language: Language, has_timeseries: bool) -> Self {
        Self {
            name: name.into(),
            kind: None,
            language,
            has_timeseries,
            record_count: 0,
        }
    }
}

/// Records produced by an adapter together with the tallies of excluded
/// candidates.
#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub manifest: DatasetManifest,
    pub records: Vec<DatasetRecord>,
    pub skipped_no_news: usize,
    pub skipped_history: usize,
    pub skipped_unlabeled: usize,
}

/// Reads a `company,ticker,industry` CSV. Duplicate or missing tickers are
/// rejected with the offending line number.
pub fn load_stock_registry(path: impl AsRef<Path>) -> Result<Vec<StockEntry>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_stock_registry(file)
}

pub fn parse_stock_registry(reader: impl std::io::Read) -> Result<Vec<StockEntry>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::RegistryFormat {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim_start_matches('\u{feff}').eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::RegistryFormat {
                line: 1,
                message: format!("header must contain company,ticker,industry (missing {name})"),
            })
    };
    let (ci, ti, ii) = (column("company")?, column("ticker")?, column("industry")?);

    let mut entries = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for row in rdr.records() {
        let row = row.map_err(|e| Error::RegistryFormat {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        let field = |i: usize| row.get(i).unwrap_or("").to_string();
        let ticker = field(ti);
        if ticker.is_empty() {
            return Err(Error::RegistryFormat {
                line,
                message: "missing ticker".into(),
            });
        }
        let entry = StockEntry::new(field(ci), ticker, field(ii)).map_err(|e| Error::RegistryFormat {
            line,
            message: e.to_string(),
        })?;
        if !seen.insert(entry.ticker.clone()) {
            return Err(Error::RegistryFormat {
                line,
                message: format!("duplicate ticker {}", entry.ticker),
            });
        }
        entries.push(entry);
    }
    if entries.is_empty() {
        return Err(Error::RegistryFormat {
            line: 1,
            message: "registry has no stocks".into(),
        });
    }
    Ok(entries)
}

/// The last `t + 1` trading-day closes strictly before `target_date`.
pub fn make_windows(
    prices_by_date: &BTreeMap<NaiveDate, f64>,
    target_date: NaiveDate,
    t: usize,
) -> Result<PriceWindow> {
    let mut picked: Vec<(NaiveDate, f64)> = prices_by_date
        .range(..target_date)
        .rev()
        .take(t + 1)
        .map(|(d, c)| (*d, *c))
        .collect();
    if picked.len() < t + 1 {
        return Err(Error::InsufficientHistory {
            stock: String::new(),
            date: Some(target_date),
            needed: t + 1,
            found: picked.len(),
        });
    }
    picked.reverse();
    let (dates, closes) = picked.into_iter().unzip();
    PriceWindow::new(dates, closes)
}

pub fn read_jsonl(path: impl AsRef<Path>) -> Result<Vec<DatasetRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_jsonl(BufReader::new(file), &path.display().to_string())
}

pub fn parse_jsonl(reader: impl BufRead, source: &str) -> Result<Vec<DatasetRecord>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(source, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| Error::Json {
            location: format!("{source}:{}", i + 1),
            source: e,
        })?;
        out.push(record);
    }
    Ok(out)
}

pub fn write_jsonl<'a>(
    mut writer: impl Write,
    records: impl IntoIterator<Item = &'a DatasetRecord>,
) -> std::io::Result<()> {
    for record in records {
        serde_json::to_writer(&mut writer, record)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    #[test]
    fn registry_parses_single_row() {
        let reg = parse_stock_registry("company,ticker,industry\nNvidia,NVDA,Semiconductors\n".as_bytes()).unwrap();
        assert_eq!(reg, vec![StockEntry::new("Nvidia", "NVDA", "Semiconductors").unwrap()]);
    }

    #[test]
    fn registry_rejects_empty_and_duplicates() {
        assert!(matches!(
            parse_stock_registry("".as_bytes()),
            Err(Error::RegistryFormat { .. })
        ));
        assert!(matches!(
            parse_stock_registry("company,ticker,industry\n".as_bytes()),
            Err(Error::RegistryFormat { .. })
        ));
        let dup = "company,ticker,industry\nApple,AAPL,Tech\nApple Inc.,AAPL,Tech\n";
        match parse_stock_registry(dup.as_bytes()) {
            Err(Error::RegistryFormat { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("AAPL"));
            }
            other => panic!("{other:?}"),
        }
        let missing = "company,ticker,industry\nApple,,Tech\n";
        assert!(matches!(
            parse_stock_registry(missing.as_bytes()),
            Err(Error::RegistryFormat { line: 2, .. })
        ));
    }

    #[test]
    fn registry_requires_header() {
        assert!(parse_stock_registry("name,symbol\nApple,AAPL\n".as_bytes()).is_err());
    }

    #[test]
    fn windows_take_last_closes_before_target() {
        let prices: BTreeMap<_, _> = (1..=10)
            .map(|i| (d("2020-01-01") + chrono::Days::new(i), i as f64))
            .collect();
        let target = d("2020-01-11");
        let w = make_windows(&prices, target, 5).unwrap();
        assert_eq!(w.len(), 6);
        assert_eq!(*w.dates().last().unwrap(), d("2020-01-10"));
        assert_eq!(w.closes(), &[4.0, 5.0, 6.0, 7.0, 8.0, 9.0]);

        let short: BTreeMap<_, _> = prices.into_iter().take(4).collect();
        assert!(matches!(
            make_windows(&short, target, 5),
            Err(Error::InsufficientHistory { .. })
        ));
    }

    #[test]
    fn weekend_target_anchors_to_previous_trading_day() {
        // Mon 2019-09-09 .. Fri 2019-09-13 and Mon 2019-09-16.
        let prices: BTreeMap<_, _> = [
            "2019-09-09",
            "2019-09-10",
            "2019-09-11",
            "2019-09-12",
            "2019-09-13",
            "2019-09-16",
        ]
        .iter()
        .enumerate()
        .map(|(i, s)| (d(s), 100.0 + i as f64))
        .collect();
        let w = make_windows(&prices, d("2019-09-15"), 4).unwrap();
        assert_eq!(w.dates().first(), Some(&d("2019-09-09")));
        assert_eq!(w.dates().last(), Some(&d("2019-09-13")));
    }

    #[test]
    fn record_rejects_misdated_news() {
        let stock = StockEntry::new("Apple", "AAPL", "Tech").unwrap();
        let news = vec![NewsItem {
            date: d("2020-01-02"),
            text: "x".into(),
            source_id: "1".into(),
        }];
        assert!(DatasetRecord::new(stock, d("2020-01-03"), news, PriceWindow::empty(), Direction::Rise).is_err());
    }

    #[test]
    fn canonical_line_layout() {
        let stock = StockEntry::new("Apple", "AAPL", "Tech").unwrap();
        let rec = DatasetRecord::new(
            stock,
            d("2020-01-03"),
            vec![NewsItem {
                date: d("2020-01-03"),
                text: "Apple up".into(),
                source_id: "t1".into(),
            }],
            PriceWindow::new(vec![d("2020-01-01"), d("2020-01-02")], vec![1.5, 2.0]).unwrap(),
            Direction::Fall,
        )
        .unwrap();
        let line = serde_json::to_string(&rec).unwrap();
        assert_eq!(
            line,
            r#"{"stock":{"company":"Apple","ticker":"AAPL","industry":"Tech"},"date":"2020-01-03","news":[{"date":"2020-01-03","text":"Apple up","source_id":"t1"}],"closes":[1.5,2.0],"close_dates":["2020-01-01","2020-01-02"],"gold":"fall"}"#
        );
        let back: DatasetRecord = serde_json::from_str(&line).unwrap();
        assert_eq!(back, rec);
    }
}
