//! Readers for the native benchmark layouts.
//!
//! Time-series datasets (StockNet, CMIN-US, CMIN-CN) share one layout:
//!
//! ```text
//! <root>/price/raw/<TICKER>.csv           Date,...,Close,... (or <root>/price/)
//! <root>/tweet/raw/<TICKER>/<YYYY-MM-DD>  one JSON object or plain text per line
//! <root>/stocks.csv                       optional company,ticker,industry registry
//! ```
//!
//! EDT is a single article table, `<root>/evaluate_news.json` (JSON array or
//! JSONL) whose objects carry `title`, `text`, `pub_time` and a `labels`
//! object with `ticker`, a start price and `end_price_1day`.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde_json::Value;

use super::{make_windows, DatasetKind, DatasetManifest, DatasetRecord, LoadedDataset, NewsItem};
use crate::domain::{Direction, PriceWindow, StockEntry};
use crate::error::{Error, Result};

const NEWS_DIRS: &[&str] = &[
    "tweet/raw",
    "tweet/preprocessed",
    "news/raw",
    "news/preprocessed",
    "tweet",
    "news",
];

/// Loads every valid `(stock, date)` sample from a native dataset layout.
pub fn load_dataset(kind: DatasetKind, root: &Path, window: usize) -> Result<LoadedDataset> {
    if window == 0 {
        return Err(Error::Config("window size must be at least 1".into()));
    }
    let registry = load_optional_registry(root)?;
    let mut loaded = match kind {
        DatasetKind::Edt => load_edt(root, &registry)?,
        _ => load_timeseries(kind, root, window, &registry)?,
    };
    loaded.manifest.record_count = loaded.records.len();
    log::info!(
        "loaded {} {} records ({} without news, {} without history, {} unlabeled)",
        loaded.records.len(),
        loaded.manifest.name,
        loaded.skipped_no_news,
        loaded.skipped_history,
        loaded.skipped_unlabeled
    );
    Ok(loaded)
}

fn load_optional_registry(root: &Path) -> Result<HashMap<String, StockEntry>> {
    let path = root.join("stocks.csv");
    if !path.exists() {
        return Ok(HashMap::new());
    }
    Ok(super::load_stock_registry(&path)?
        .into_iter()
        .map(|s| (s.ticker.clone(), s))
        .collect())
}

fn stock_for(ticker: &str, registry: &HashMap<String, StockEntry>) -> Result<StockEntry> {
    match registry.get(ticker) {
        Some(s) => Ok(s.clone()),
        None => StockEntry::new(ticker, ticker, ""),
    }
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Ingest {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn list_dir(path: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(path).map_err(|e| Error::Ingest {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let mut out = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::Ingest {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        out.push(entry.path());
    }
    out.sort();
    Ok(out)
}

fn parse_date(s: &str) -> Option<NaiveDate> {
    let s = s.trim();
    let head = s.get(..10).unwrap_or(s);
    ["%Y-%m-%d", "%Y/%m/%d"]
        .iter()
        .find_map(|f| NaiveDate::parse_from_str(head, f).ok())
        .or_else(|| NaiveDate::parse_from_str(s.get(..8).unwrap_or(s), "%Y%m%d").ok())
}

fn load_timeseries(
    kind: DatasetKind,
    root: &Path,
    window: usize,
    registry: &HashMap<String, StockEntry>,
) -> Result<LoadedDataset> {
    let price_dir = [root.join("price/raw"), root.join("price")]
        .into_iter()
        .find(|p| p.is_dir())
        .ok_or_else(|| Error::Ingest {
            path: root.join("price"),
            message: "price directory not found".into(),
        })?;
    let news_dir = NEWS_DIRS
        .iter()
        .map(|d| root.join(d))
        .find(|p| p.is_dir())
        .ok_or_else(|| Error::Ingest {
            path: root.join("tweet"),
            message: "tweet/news directory not found".into(),
        })?;

    let mut loaded = LoadedDataset {
        manifest: DatasetManifest::for_kind(kind),
        records: Vec::new(),
        skipped_no_news: 0,
        skipped_history: 0,
        skipped_unlabeled: 0,
    };

    for price_file in list_dir(&price_dir)? {
        if price_file.extension().and_then(|e| e.to_str()) != Some("csv") {
            continue;
        }
        let Some(stem) = price_file.file_stem().and_then(|s| s.to_str()) else {
            continue;
        };
        let ticker = stem.to_ascii_uppercase();
        let stock = stock_for(&ticker, registry)?;
        let prices = read_price_csv(&price_file, &ticker)?;
        let news = read_stock_news(&news_dir, stem, &ticker)?;

        let dates: Vec<NaiveDate> = prices.keys().copied().collect();
        for (i, &date) in dates.iter().enumerate() {
            if i < window + 1 {
                loaded.skipped_history += 1;
                continue;
            }
            let Some(items) = news.get(&date) else {
                loaded.skipped_no_news += 1;
                continue;
            };
            let history = make_windows(&prices, date, window)?;
            let last = *history.closes().last().expect("window is non-empty");
            let gold = if prices[&date] > last {
                Direction::Rise
            } else {
                Direction::Fall
            };
            loaded
                .records
                .push(DatasetRecord::new(stock.clone(), date, items.clone(), history, gold)?);
        }
    }
    Ok(loaded)
}

fn read_price_csv(path: &Path, ticker: &str) -> Result<BTreeMap<NaiveDate, f64>> {
    let ingest_err = |message: String| Error::Ingest {
        path: path.to_path_buf(),
        message,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| ingest_err(e.to_string()))?;
    let headers = rdr.headers().map_err(|e| ingest_err(e.to_string()))?.clone();
    let find = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let date_col = find("date").ok_or_else(|| ingest_err("missing Date column".into()))?;
    let close_col = find("close")
        .or_else(|| find("adj close"))
        .ok_or_else(|| ingest_err("missing Close column".into()))?;

    let mut rows: Vec<(NaiveDate, f64)> = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| ingest_err(e.to_string()))?;
        let raw_date = row.get(date_col).unwrap_or("");
        let date = parse_date(raw_date).ok_or_else(|| ingest_err(format!("unparseable date {raw_date:?}")))?;
        let close: f64 = row.get(close_col).unwrap_or("").parse().map_err(|_| Error::Alignment {
            stock: ticker.to_string(),
            date,
            message: "close is not a number".into(),
        })?;
        if !(close.is_finite() && close > 0.0) {
            return Err(Error::Alignment {
                stock: ticker.to_string(),
                date,
                message: format!("non-positive close {close}"),
            });
        }
        rows.push((date, close));
    }
    // Some exports list newest first.
    if rows.len() > 1 && rows.windows(2).all(|w| w[0].0 > w[1].0) {
        rows.reverse();
    }
    if let Some(w) = rows.windows(2).find(|w| w[0].0 >= w[1].0) {
        return Err(Error::Alignment {
            stock: ticker.to_string(),
            date: w[1].0,
            message: format!("follows {} out of order", w[0].0),
        });
    }
    Ok(rows.into_iter().collect())
}

fn read_stock_news(news_dir: &Path, dir_name: &str, ticker: &str) -> Result<BTreeMap<NaiveDate, Vec<NewsItem>>> {
    let mut by_date: BTreeMap<NaiveDate, Vec<NewsItem>> = BTreeMap::new();
    let Some(stock_dir) = [news_dir.join(dir_name), news_dir.join(ticker)]
        .into_iter()
        .find(|p| p.is_dir())
    else {
        return Ok(by_date);
    };
    for file in list_dir(&stock_dir)? {
        let Some(date) = file.file_stem().and_then(|s| s.to_str()).and_then(parse_date) else {
            continue;
        };
        let content = read_to_string(&file)?;
        for (line_no, line) in content.lines().enumerate() {
            let Some((text, id)) = parse_news_line(line) else {
                continue;
            };
            let source_id = id.unwrap_or_else(|| format!("{ticker}/{date}#{}", line_no + 1));
            by_date
                .entry(date)
                .or_default()
                .push(NewsItem { date, text, source_id });
        }
    }
    Ok(by_date)
}

/// Extracts `(text, id)` from a JSON tweet object or a plain text line.
fn parse_news_line(line: &str) -> Option<(String, Option<String>)> {
    let line = line.trim();
    if line.is_empty() {
        return None;
    }
    let (text, id) = match serde_json::from_str::<Value>(line) {
        Ok(Value::Object(obj)) => {
            let text = match obj.get("text") {
                Some(Value::String(s)) => s.clone(),
                Some(Value::Array(tokens)) => tokens.iter().filter_map(Value::as_str).collect::<Vec<_>>().join(" "),
                _ => return None,
            };
            let id = ["id_str", "id"].iter().find_map(|k| match obj.get(*k) {
                Some(Value::String(s)) => Some(s.clone()),
                Some(Value::Number(n)) => Some(n.to_string()),
                _ => None,
            });
            (text, id)
        }
        _ => (line.to_string(), None),
    };
    let text = text.trim().to_string();
    (!text.is_empty()).then_some((text, id))
}

fn load_edt(root: &Path, registry: &HashMap<String, StockEntry>) -> Result<LoadedDataset> {
    let path = ["evaluate_news.json", "evaluate_news.jsonl", "news.jsonl"]
        .iter()
        .map(|n| root.join(n))
        .find(|p| p.is_file())
        .ok_or_else(|| Error::Ingest {
            path: root.join("evaluate_news.json"),
            message: "EDT article table not found".into(),
        })?;
    let content = read_to_string(&path)?;
    let articles: Vec<Value> = if content.trim_start().starts_with('[') {
        serde_json::from_str(&content).map_err(|e| Error::Json {
            location: path.display().to_string(),
            source: e,
        })?
    } else {
        content
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str(l).map_err(|e| Error::Json {
                    location: format!("{}:{}", path.display(), i + 1),
                    source: e,
                })
            })
            .collect::<Result<_>>()?
    };

    let mut loaded = LoadedDataset {
        manifest: DatasetManifest::for_kind(DatasetKind::Edt),
        records: Vec::new(),
        skipped_no_news: 0,
        skipped_history: 0,
        skipped_unlabeled: 0,
    };
    fn str_field<'v>(v: &'v Value, k: &str) -> Option<&'v str> {
        v.get(k).and_then(Value::as_str).map(str::trim)
    }
    for (i, article) in articles.iter().enumerate() {
        let num_field = |v: &Value, k: &str| {
            v.get(k).and_then(|x| match x {
                Value::Number(n) => n.as_f64(),
                Value::String(s) => s.trim().parse().ok(),
                _ => None,
            })
        };
        let labels = article.get("labels").unwrap_or(&Value::Null);
        let ticker = str_field(labels, "ticker").map(str::to_ascii_uppercase);
        let start = ["start_price_close", "start_price", "start_price_open"]
            .iter()
            .find_map(|k| num_field(labels, k));
        let end = num_field(labels, "end_price_1day");
        let date = str_field(article, "pub_time").and_then(parse_date);
        let (Some(ticker), Some(start), Some(end), Some(date)) = (ticker, start, end, date) else {
            loaded.skipped_unlabeled += 1;
            continue;
        };
        let Ok(stock) = stock_for(&ticker, registry) else {
            loaded.skipped_unlabeled += 1;
            continue;
        };
        let title = str_field(article, "title").unwrap_or("");
        let body = str_field(article, "text").unwrap_or("");
        let text = match (title.is_empty(), body.is_empty()) {
            (true, true) => {
                loaded.skipped_no_news += 1;
                continue;
            }
            (false, false) => format!("{title}\n\n{body}"),
            _ => format!("{title}{body}"),
        };
        let source_id = article
            .get("id")
            .map(|v| v.as_str().map(str::to_string).unwrap_or_else(|| v.to_string()))
            .unwrap_or_else(|| format!("edt#{}", i + 1));
        let gold = if end > start { Direction::Rise } else { Direction::Fall };
        loaded.records.push(DatasetRecord::new(
            stock,
            date,
            vec![NewsItem { date, text, source_id }],
            PriceWindow::empty(),
            gold,
        )?);
    }
    Ok(loaded)
}
