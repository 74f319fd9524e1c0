//! Side-by-side comparison of evaluation reports as Markdown or CSV.

use std::fmt::Write as _;

use crate::domain::EvalReport;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    pub methods: Vec<String>,
    pub datasets: Vec<String>,
    /// `cells[method][dataset]`.
    pub cells: Vec<Vec<Option<EvalReport>>>,
}

fn fmt_acc(acc: f64) -> String {
    format!("{:.2}", acc * 100.0)
}

fn fmt_mcc(mcc: f64) -> String {
    let s = format!("{mcc:.3}");
    if s == "-0.000" {
        "0.000".into()
    } else {
        s
    }
}

fn method_of(r: &EvalReport) -> String {
    if r.method.is_empty() {
        r.label.clone()
    } else {
        r.method.clone()
    }
}

/// Arranges reports with one row per method and one column per dataset.
/// A later report for the same cell replaces an earlier one.
pub fn compare_reports(reports: &[EvalReport]) -> ComparisonTable {
    let mut methods: Vec<String> = Vec::new();
    let mut datasets: Vec<String> = Vec::new();
    for r in reports {
        let m = method_of(r);
        if !methods.contains(&m) {
            methods.push(m);
        }
        if !datasets.contains(&r.dataset) {
            datasets.push(r.dataset.clone());
        }
    }
    let mut cells = vec![vec![None; datasets.len()]; methods.len()];
    for r in reports {
        let i = methods.iter().position(|m| *m == method_of(r)).expect("method listed");
        let j = datasets.iter().position(|d| *d == r.dataset).expect("dataset listed");
        if cells[i][j].is_some() {
            log::warn!(
                "duplicate report for {} on {}; keeping the last",
                methods[i],
                datasets[j]
            );
        }
        cells[i][j] = Some(r.clone());
    }
    ComparisonTable {
        methods,
        datasets,
        cells,
    }
}

impl ComparisonTable {
    fn column(&self, j: usize) -> impl Iterator<Item = &EvalReport> {
        self.cells.iter().filter_map(move |row| row[j].as_ref())
    }

    /// Best displayed ACC and MCC of a column, when it has two or more entries.
    fn best(&self, j: usize) -> Option<(String, String)> {
        if self.column(j).count() < 2 {
            return None;
        }
        let acc = self.column(j).map(|r| r.acc).fold(f64::NEG_INFINITY, f64::max);
        let mcc = self.column(j).map(|r| r.mcc).fold(f64::NEG_INFINITY, f64::max);
        Some((fmt_acc(acc), fmt_mcc(mcc)))
    }

    /// Cells read "ACC% / MCC"; the best value per column is bold and parse
    /// failures are counted in footnotes.
    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "| Method | {} |", self.datasets.join(" | "));
        let _ = writeln!(out, "|---|{}", "---|".repeat(self.datasets.len()));
        let best: Vec<_> = (0..self.datasets.len()).map(|j| self.best(j)).collect();
        let mut notes = Vec::new();
        for (i, method) in self.methods.iter().enumerate() {
            let mut cells = Vec::new();
            for (j, cell) in self.cells[i].iter().enumerate() {
                let Some(r) = cell else {
                    cells.push("-".to_string());
                    continue;
                };
                let (mut acc, mut mcc) = (fmt_acc(r.acc), fmt_mcc(r.mcc));
                if let Some((best_acc, best_mcc)) = &best[j] {
                    if acc == *best_acc {
                        acc = format!("**{acc}**");
                    }
                    if mcc == *best_mcc {
                        mcc = format!("**{mcc}**");
                    }
                }
                let mut text = format!("{acc} / {mcc}");
                if r.n_parse_failures > 0 {
                    notes.push(format!(
                        "{method} on {}: {} of {} responses could not be parsed and were scored as incorrect.",
                        self.datasets[j],
                        r.n_parse_failures,
                        r.matrix.total()
                    ));
                    let _ = write!(text, " [^{}]", notes.len());
                }
                cells.push(text);
            }
            let _ = writeln!(out, "| {method} | {} |", cells.join(" | "));
        }
        if !notes.is_empty() {
            out.push('\n');
            for (n, note) in notes.iter().enumerate() {
                let _ = writeln!(out, "[^{}]: {note}", n + 1);
            }
        }
        out
    }

    /// One row per method with `<dataset> ACC`, `<dataset> MCC` and
    /// `<dataset> parse failures` columns.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["method".to_string()];
        for d in &self.datasets {
            header.push(format!("{d} ACC"));
            header.push(format!("{d} MCC"));
            header.push(format!("{d} parse failures"));
        }
        let csv_err = |e: csv::Error| Error::InvalidValue(e.to_string());
        w.write_record(&header).map_err(csv_err)?;
        for (i, method) in self.methods.iter().enumerate() {
            let mut row = vec![method.clone()];
            for cell in &self.cells[i] {
                match cell {
                    Some(r) => {
                        row.push(fmt_acc(r.acc));
                        row.push(fmt_mcc(r.mcc));
                        row.push(r.n_parse_failures.to_string());
                    }
                    None => row.extend([String::new(), String::new(), String::new()]),
                }
            }
            w.write_record(&row).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::InvalidValue(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::InvalidValue(e.to_string()))
    }
}
