//! Per-day factor listings for one stock, for case-study plots.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::domain::{Direction, Prediction};
use crate::error::{Error, Result};
use crate::skgp::PredictionRecord;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimelineRow {
    pub date: NaiveDate,
    pub gold: Direction,
    pub predicted: Prediction,
    pub factors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactorTimeline {
    pub ticker: String,
    pub rows: Vec<TimelineRow>,
}

/// Collects one row per date for `ticker` within `[from, to]`. When several
/// layers predicted the same day, the richest layer wins.
pub fn export_factor_timeline(
    predictions: &[PredictionRecord],
    ticker: &str,
    from: Option<NaiveDate>,
    to: Option<NaiveDate>,
) -> Result<FactorTimeline> {
    let mut by_date: BTreeMap<NaiveDate, &PredictionRecord> = BTreeMap::new();
    for p in predictions {
        if p.record.ticker != ticker || from.is_some_and(|f| p.record.date < f) || to.is_some_and(|t| p.record.date > t)
        {
            continue;
        }
        by_date
            .entry(p.record.date)
            .and_modify(|cur| {
                if p.layer > cur.layer {
                    *cur = p;
                }
            })
            .or_insert(p);
    }
    if by_date.is_empty() {
        return Err(Error::EmptyTimeline { ticker: ticker.into() });
    }
    let rows = by_date
        .into_iter()
        .map(|(date, p)| TimelineRow {
            date,
            gold: p.gold,
            predicted: p.direction,
            factors: p.factors.as_ref().map(|f| f.factors.clone()).unwrap_or_default(),
        })
        .collect();
    Ok(FactorTimeline {
        ticker: ticker.into(),
        rows,
    })
}

impl FactorTimeline {
    /// `date,gold,predicted,factors` with factors joined by " | ".
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::InvalidValue(e.to_string());
        w.write_record(["date", "gold", "predicted", "factors"])
            .map_err(csv_err)?;
        for row in &self.rows {
            w.write_record([
                row.date.to_string().as_str(),
                row.gold.as_str(),
                row.predicted.as_str(),
                row.factors.join(" | ").as_str(),
            ])
            .map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::InvalidValue(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::InvalidValue(e.to_string()))
    }
}
