//! Domain types shared by every stage of the pipeline, movement labeling and
//! the ACC/MCC evaluation metrics. Nothing in here touches the filesystem.

use std::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An exchange-listed stock: display name, ticker symbol and industry.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StockEntry {
    pub company: String,
    pub ticker: String,
    pub industry: String,
}

impl StockEntry {
    pub fn new(company: impl Into<String>, ticker: impl Into<String>, industry: impl Into<String>) -> Result<Self> {
        let company = company.into().trim().to_string();
        let ticker = ticker.into().trim().to_string();
        let industry = industry.into().trim().to_string();
        if company.is_empty() {
            return Err(Error::InvalidValue(format!("empty company name for ticker {ticker:?}")));
        }
        if !is_valid_ticker(&ticker) {
            return Err(Error::InvalidValue(format!("invalid ticker {ticker:?}")));
        }
        Ok(Self {
            company,
            ticker,
            industry,
        })
    }
}

/// Upper-case ASCII letters, digits, `.` and `-`; at least one letter or digit.
pub fn is_valid_ticker(ticker: &str) -> bool {
    !ticker.is_empty()
        && ticker.chars().any(|c| c.is_ascii_alphanumeric())
        && ticker
            .chars()
            .all(|c| c.is_ascii_uppercase() || c.is_ascii_digit() || c == '.' || c == '-')
}

/// Binary price movement between two consecutive closes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Rise,
    Fall,
}

impl Direction {
    pub fn opposite(self) -> Self {
        match self {
            Direction::Rise => Direction::Fall,
            Direction::Fall => Direction::Rise,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Rise => "rise",
            Direction::Fall => "fall",
        }
    }

    pub fn as_cn(self) -> &'static str {
        match self {
            Direction::Rise => "上涨",
            Direction::Fall => "下跌",
        }
    }

    pub fn from_label(label: &str) -> Option<Self> {
        match label.trim() {
            l if l.eq_ignore_ascii_case("rise") => Some(Direction::Rise),
            l if l.eq_ignore_ascii_case("fall") => Some(Direction::Fall),
            "上涨" => Some(Direction::Rise),
            "下跌" => Some(Direction::Fall),
            _ => None,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Outcome of a single prediction attempt. `ParseFailure` marks a response
/// from which no direction could be extracted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Prediction {
    Rise,
    Fall,
    ParseFailure,
}

impl Prediction {
    pub fn direction(self) -> Option<Direction> {
        match self {
            Prediction::Rise => Some(Direction::Rise),
            Prediction::Fall => Some(Direction::Fall),
            Prediction::ParseFailure => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Prediction::Rise => "rise",
            Prediction::Fall => "fall",
            Prediction::ParseFailure => "parse_failure",
        }
    }
}

impl From<Direction> for Prediction {
    fn from(d: Direction) -> Self {
        match d {
            Direction::Rise => Prediction::Rise,
            Direction::Fall => Prediction::Fall,
        }
    }
}

impl fmt::Display for Prediction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Closing prices on consecutive trading days.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "RawPriceWindow", into = "RawPriceWindow")]
pub struct PriceWindow {
    dates: Vec<NaiveDate>,
    closes: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawPriceWindow {
    dates: Vec<NaiveDate>,
    closes: Vec<f64>,
}

impl TryFrom<RawPriceWindow> for PriceWindow {
    type Error = Error;
    fn try_from(raw: RawPriceWindow) -> Result<Self> {
        PriceWindow::new(raw.dates, raw.closes)
    }
}

impl From<PriceWindow> for RawPriceWindow {
    fn from(w: PriceWindow) -> Self {
        RawPriceWindow {
            dates: w.dates,
            closes: w.closes,
        }
    }
}

impl PriceWindow {
    pub fn new(dates: Vec<NaiveDate>, closes: Vec<f64>) -> Result<Self> {
        if dates.len() != closes.len() {
            return Err(Error::InvalidValue(format!(
                "price window has {} dates but {} closes",
                dates.len(),
                closes.len()
            )));
        }
        if let Some(bad) = closes.iter().find(|c| !(c.is_finite() && **c > 0.0)) {
            return Err(Error::InvalidValue(format!("non-positive close {bad}")));
        }
        if let Some(pair) = dates.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::InvalidValue(format!(
                "price dates not strictly increasing: {} then {}",
                pair[0], pair[1]
            )));
        }
        Ok(Self { dates, closes })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn closes(&self) -> &[f64] {
        &self.closes
    }

    pub fn len(&self) -> usize {
        self.closes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.closes.is_empty()
    }
}

/// Daily movements, each dated by the later of the two closes it compares.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MovementWindow {
    pub dates: Vec<NaiveDate>,
    pub moves: Vec<Direction>,
}

impl MovementWindow {
    pub fn len(&self) -> usize {
        self.moves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.moves.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (NaiveDate, Direction)> + '_ {
        self.dates.iter().copied().zip(self.moves.iter().copied())
    }
}

/// Turns `n` closes into `n - 1` movements. A close equal to its predecessor
/// counts as a fall.
pub fn label_movements(window: &PriceWindow) -> Result<MovementWindow> {
    if window.len() < 2 {
        return Err(Error::InsufficientHistory {
            stock: String::new(),
            date: None,
            needed: 2,
            found: window.len(),
        });
    }
    let moves = window
        .closes
        .windows(2)
        .map(|w| if w[1] > w[0] { Direction::Rise } else { Direction::Fall })
        .collect();
    Ok(MovementWindow {
        dates: window.dates[1..].to_vec(),
        moves,
    })
}

/// Binary confusion matrix laid out as `[[tp, fp], [fn, tn]]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        Self { tp, fp, fn_, tn }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn record(&mut self, gold: Direction, predicted: Direction, positive: Direction) {
        match (gold == positive, predicted == positive) {
            (true, true) => self.tp += 1,
            (false, true) => self.fp += 1,
            (true, false) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    pub fn accuracy(&self) -> Result<f64> {
        let total = self.total();
        if total == 0 {
            return Err(Error::EmptyEvaluation);
        }
        Ok((self.tp + self.tn) as f64 / total as f64)
    }

    /// Matthews correlation coefficient; 0 when any marginal is empty.
    pub fn mcc(&self) -> Result<f64> {
        if self.total() == 0 {
            return Err(Error::EmptyEvaluation);
        }
        let (tp, fp, fn_, tn) = (self.tp as u128, self.fp as u128, self.fn_ as u128, self.tn as u128);
        let factors = [tp + fp, tp + fn_, tn + fp, tn + fn_];
        if factors.contains(&0) {
            return Ok(0.0);
        }
        let numerator = (tp * tn) as f64 - (fp * fn_) as f64;
        let denominator = ((factors[0] * factors[1]) as f64).sqrt() * ((factors[2] * factors[3]) as f64).sqrt();
        Ok((numerator / denominator).clamp(-1.0, 1.0))
    }
}

/// ACC/MCC summary for one dataset and method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub label: String,
    pub dataset: String,
    pub method: String,
    pub matrix: ConfusionMatrix,
    pub acc: f64,
    pub mcc: f64,
    pub n_parse_failures: u64,
}

impl EvalReport {
    pub fn from_matrix(matrix: ConfusionMatrix, n_parse_failures: u64) -> Result<Self> {
        Ok(Self {
            label: String::new(),
            dataset: String::new(),
            method: String::new(),
            acc: matrix.accuracy()?,
            mcc: matrix.mcc()?,
            matrix,
            n_parse_failures,
        })
    }

    pub fn labelled(mut self, dataset: impl Into<String>, method: impl Into<String>) -> Self {
        self.dataset = dataset.into();
        self.method = method.into();
        self.label = format!("{}/{}", self.dataset, self.method);
        self
    }
}

/// Scores `(gold, prediction)` pairs. A parse failure is counted and scored
/// as the class opposite to gold.
pub fn evaluate(pairs: &[(Direction, Prediction)], positive: Direction) -> Result<EvalReport> {
    if pairs.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    let mut matrix = ConfusionMatrix::default();
    let mut failures = 0;
    for &(gold, prediction) in pairs {
        let predicted = match prediction.direction() {
            Some(d) => d,
            None => {
                failures += 1;
                gold.opposite()
            }
        };
        matrix.record(gold, predicted, positive);
    }
    EvalReport::from_matrix(matrix, failures)
}
