#![allow(dead_code)]

use std::path::PathBuf;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn golden() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

pub fn synthetic40() -> PathBuf {
    fixtures().join("synthetic40.jsonl")
}

pub fn registry_csv() -> PathBuf {
    fixtures().join("stocks.csv")
}

pub fn mini_stocknet() -> PathBuf {
    fixtures().join("mini_stocknet")
}

/// Exact accuracy as a rational, converted once at the end.
pub fn exact_acc(tp: u64, fp: u64, fn_: u64, tn: u64) -> f64 {
    let total = tp + fp + fn_ + tn;
    BigRational::new(BigInt::from(tp + tn), BigInt::from(total))
        .to_f64()
        .unwrap()
}

/// MCC from integer arithmetic: the square root is taken on a value scaled
/// by 10^80 so the result carries about 40 exact decimal digits. Any zero
/// marginal gives 0.
pub fn exact_mcc(tp: u64, fp: u64, fn_: u64, tn: u64) -> f64 {
    let b = |x: u64| BigInt::from(x);
    let num = b(tp) * b(tn) - b(fp) * b(fn_);
    let den = (b(tp) + b(fp)) * (b(tp) + b(fn_)) * (b(tn) + b(fp)) * (b(tn) + b(fn_));
    if den.is_zero() {
        return 0.0;
    }
    let scale = BigUint::from(10u32).pow(80);
    let squared: BigUint = (num.abs() * num.abs()).to_biguint().unwrap() * &scale / den.to_biguint().unwrap();
    let root = squared.sqrt();
    let value = BigRational::new(BigInt::from(root), BigInt::from(BigUint::from(10u32).pow(40)));
    let v = value.to_f64().unwrap();
    if num.is_negative() {
        -v
    } else {
        v
    }
}

/// Tally `(tp, fp, fn, tn)` with Rise positive from `(gold_is_rise, predicted_is_rise)`
/// pairs; `None` predictions count as the class opposite to gold.
pub fn tally(pairs: &[(bool, Option<bool>)]) -> (u64, u64, u64, u64) {
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for &(gold, pred) in pairs {
        let pred = pred.unwrap_or(!gold);
        match (gold, pred) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (true, false) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    (tp, fp, fn_, tn)
}

/// Reads the synthetic fixture as raw JSON and predicts with the momentum
/// rule straight from the closes: rise when at least three of the daily
/// changes are strictly positive.
pub fn momentum_oracle() -> Vec<(bool, Option<bool>)> {
    let text = std::fs::read_to_string(synthetic40()).unwrap();
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            let closes: Vec<f64> = v["closes"]
                .as_array()
                .unwrap()
                .iter()
                .map(|c| c.as_f64().unwrap())
                .collect();
            let ups = closes.windows(2).filter(|w| w[1] > w[0]).count();
            (v["gold"] == "rise", Some(ups >= 3))
        })
        .collect()
}

pub fn read_golden(lang: &str, name: &str) -> String {
    std::fs::read_to_string(golden().join(lang).join(format!("{name}.txt"))).unwrap()
}

pub fn fill(template: &str, pairs: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (k, v) in pairs {
        out = out.replace(&format!("{{{k}}}"), v);
    }
    out
}

/// Price prompt assembled directly from the golden files.
pub fn golden_price_prompt(
    lang: &str,
    ticker: &str,
    factors: &[&str],
    relations: &[&str],
    moves: &[(String, bool)],
    target_date: &str,
) -> String {
    let sep = if lang == "cn" { "；" } else { "; " };
    let (rose, fell) = if lang == "cn" {
        ("上涨", "下跌")
    } else {
        ("rose", "fell")
    };
    let mut lines = vec![read_golden(lang, "step3_preamble")];
    if !factors.is_empty() {
        lines.push(fill(
            &read_golden(lang, "step3_factor"),
            &[("factor", &factors.join(sep))],
        ));
    }
    if !relations.is_empty() {
        lines.push(fill(
            &read_golden(lang, "step3_relation"),
            &[("relation", &relations.join(sep))],
        ));
    }
    for (date, up) in moves {
        lines.push(fill(
            &read_golden(lang, "step3_time"),
            &[
                ("date", date),
                ("target", ticker),
                ("movement", if *up { rose } else { fell }),
            ],
        ));
    }
    lines.push(fill(
        &read_golden(lang, "step3_conclusion"),
        &[("date", target_date), ("target", ticker)],
    ));
    lines.join("\n")
}

/// Keyphrase score by enumerating every subset of the lexicon and keeping
/// the one that equals the set of phrases present in the text.
pub fn keyphrase_oracle(text: &str, pos: &[String], neg: &[String]) -> f64 {
    let phrases: Vec<(&String, i64)> = pos.iter().map(|p| (p, 1)).chain(neg.iter().map(|n| (n, -1))).collect();
    assert!(phrases.len() <= 16);
    let present: Vec<bool> = phrases
        .iter()
        .map(|(p, _)| {
            let words: Vec<String> = p.split_whitespace().map(regex::escape).collect();
            regex::Regex::new(&format!(r"(?i)\b{}\b", words.join(r"\s+")))
                .unwrap()
                .is_match(text)
        })
        .collect();
    let mut hits = Vec::new();
    for mask in 0u32..(1 << phrases.len()) {
        let matches = (0..phrases.len()).all(|i| ((mask >> i) & 1 == 1) == present[i]);
        if matches {
            let x: i64 = (0..phrases.len())
                .filter(|i| (mask >> i) & 1 == 1)
                .map(|i| phrases[i].1)
                .sum();
            hits.push(1.0 / (1.0 + (-(x as f64)).exp()));
        }
    }
    assert_eq!(hits.len(), 1);
    hits[0]
}

/// Labels a window by comparing each close with the previous one.
pub fn movement_oracle(closes: &[f64]) -> Vec<bool> {
    let mut out = Vec::new();
    for i in 1..closes.len() {
        out.push(closes[i] > closes[i - 1]);
    }
    out
}
