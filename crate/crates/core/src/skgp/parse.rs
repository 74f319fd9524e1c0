//! Extraction of relations, factors and the predicted direction from raw
//! model responses.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::domain::{Direction, Prediction};
use crate::ingest::Language;

const MAX_RELATION_WORDS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("unparseable response: {0}")]
pub struct ParseFailure(pub &'static str);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedRelation {
    /// The words that fill the blank, e.g. "competitive".
    pub relation: String,
    /// The answer sentence as written by the model, when it used the frame.
    pub sentence: Option<String>,
    pub low_confidence: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedFactors {
    pub factors: Vec<String>,
    pub low_confidence: bool,
}

static EN_RELATION_FRAME: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)[^.!?\n]*?\bin\s+an?\s+([^.!?\n]+?)\s+relationships?\b[^.!?\n]*").unwrap());
static CN_RELATION_FRAME: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"[^。！？\n]*?最可能是\s*([^。！？\n]+?)\s*关系[^。！？\n]*").unwrap());
static NUMBERED_ITEM: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^\s*(?:\d{1,3}\s*[.)、:：]|[(（]\d{1,3}[)）]|[一二三四五六七八九十]+、)\s*(.*)$").unwrap()
});
static BULLET_ITEM: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*[-*•·+]\s+(.*)$").unwrap());
static EN_FILL_IN: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\bwill\s+(?:[*_]{1,2})?(rise|fall)\b").unwrap());
static EN_KEYWORD: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\b(rise|fall)\b").unwrap());
static CN_FILL_IN: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"将\s*(?:[*_]{1,2})?(上涨|下跌)").unwrap());
static CN_KEYWORD: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(上涨|下跌)").unwrap());

fn strip_markup(s: &str) -> String {
    s.replace("**", "")
        .replace("__", "")
        .trim()
        .trim_matches(|c: char| matches!(c, '"' | '\'' | '`' | '“' | '”' | '「' | '」' | '*' | '_'))
        .trim()
        .to_string()
}

fn first_words(s: &str, n: usize) -> String {
    s.split_whitespace().take(n).collect::<Vec<_>>().join(" ")
}

/// Reads the word(s) filling the relation blank. Falls back to the first
/// non-empty line, flagged as low confidence.
pub fn parse_relation(response: &str) -> Result<ParsedRelation, ParseFailure> {
    for frame in [&*EN_RELATION_FRAME, &*CN_RELATION_FRAME] {
        for caps in frame.captures_iter(response) {
            let relation = first_words(&strip_markup(&caps[1]), MAX_RELATION_WORDS);
            if relation.is_empty() || relation.chars().all(|c| c == '_') {
                continue;
            }
            return Ok(ParsedRelation {
                relation,
                sentence: Some(caps[0].trim().to_string()),
                low_confidence: false,
            });
        }
    }
    let line = response
        .lines()
        .filter(|l| !l.contains(super::templates::BLANK))
        .map(strip_markup)
        .map(|l| l.trim_end_matches(['.', '。', '!', '！', ',', '，']).trim().to_string())
        .find(|l| !l.is_empty())
        .ok_or(ParseFailure("empty relation response"))?;
    Ok(ParsedRelation {
        relation: first_words(&line, MAX_RELATION_WORDS),
        sentence: None,
        low_confidence: true,
    })
}

/// Splits a numbered or bulleted list into at most `k` factors. Without any
/// list markers the first sentence becomes a single low-confidence factor.
pub fn parse_factors(response: &str, k: usize) -> Result<ParsedFactors, ParseFailure> {
    if k == 0 {
        return Err(ParseFailure("k must be at least 1"));
    }
    let collect = |re: &Regex| -> Vec<String> {
        response
            .lines()
            .filter_map(|l| re.captures(l).map(|c| strip_markup(&c[1])))
            .filter(|f| !f.is_empty())
            .collect()
    };
    let mut factors = collect(&NUMBERED_ITEM);
    if factors.is_empty() {
        factors = collect(&BULLET_ITEM);
    }
    if !factors.is_empty() {
        factors.truncate(k);
        return Ok(ParsedFactors {
            factors,
            low_confidence: false,
        });
    }
    let first = response
        .split(['.', '!', '?', '。', '！', '？', '\n'])
        .map(strip_markup)
        .find(|s| !s.is_empty())
        .ok_or(ParseFailure("no factors in response"))?;
    Ok(ParsedFactors {
        factors: vec![first],
        low_confidence: true,
    })
}

/// Finds the predicted direction. A keyword filling the blank ("will rise",
/// "将上涨") takes precedence; otherwise the first bare keyword wins. The
/// rationale is the text after the deciding keyword.
pub fn parse_direction(response: &str, language: Language) -> (Prediction, String) {
    let (fill_in, keyword) = match language {
        Language::En => (&*EN_FILL_IN, &*EN_KEYWORD),
        Language::Cn => (&*CN_FILL_IN, &*CN_KEYWORD),
    };
    let hit = fill_in
        .captures(response)
        .or_else(|| keyword.captures(response))
        .map(|c| c.get(1).expect("keyword group"));
    match hit.and_then(|m| Direction::from_label(m.as_str()).map(|d| (d, m.end()))) {
        Some((direction, end)) => {
            let rationale = response[end..]
                .trim_start_matches(|c: char| {
                    c.is_whitespace() || matches!(c, '.' | '。' | ',' | '，' | ':' | '：' | '*' | '_' | '!' | '！')
                })
                .trim_end()
                .to_string();
            (direction.into(), rationale)
        }
        None => (Prediction::ParseFailure, response.trim().to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn relation_from_frame() {
        let r = parse_relation("Nvidia and Intel are most likely in a competitive relationship.").unwrap();
        assert_eq!(r.relation, "competitive");
        assert_eq!(
            r.sentence.as_deref(),
            Some("Nvidia and Intel are most likely in a competitive relationship")
        );
        assert!(!r.low_confidence);

        let r = parse_relation("Sure! Apple and Corning are most likely in an **upstream supplier** relationship.")
            .unwrap();
        assert_eq!(r.relation, "upstream supplier");
    }

    #[test]
    fn relation_from_cn_frame() {
        let r = parse_relation("贵州茅台和五粮液最可能是竞争关系。").unwrap();
        assert_eq!(r.relation, "竞争");
        assert_eq!(r.sentence.as_deref(), Some("贵州茅台和五粮液最可能是竞争关系"));
    }

    #[test]
    fn relation_fallback_and_failure() {
        let r = parse_relation("supplier").unwrap();
        assert_eq!(r.relation, "supplier");
        assert!(r.low_confidence);
        assert!(r.sentence.is_none());

        let r = parse_relation("one two three four five six seven eight nine ten eleven twelve").unwrap();
        assert_eq!(r.relation.split_whitespace().count(), 10);

        assert!(parse_relation("").is_err());
        assert!(parse_relation("  \n ").is_err());
    }

    #[test]
    fn echoed_blank_is_not_a_relation() {
        let r = parse_relation("A and B are most likely in a ___ relationship.\ncustomer").unwrap();
        assert_eq!(r.relation, "customer");
        assert!(r.low_confidence);
    }

    #[test]
    fn numbered_factors() {
        let f = parse_factors(
            "1. Nvidia stock gain in January\n2. new product announcements\n3. selection of Nvidia Drive Thor by EV makers",
            5,
        )
        .unwrap();
        assert_eq!(
            f.factors,
            [
                "Nvidia stock gain in January",
                "new product announcements",
                "selection of Nvidia Drive Thor by EV makers"
            ]
        );
        assert!(!f.low_confidence);
    }

    #[test]
    fn factors_truncate_to_k() {
        let text: String = (1..=7).map(|i| format!("{i}. factor {i}\n")).collect();
        let f = parse_factors(&text, 5).unwrap();
        assert_eq!(f.factors.len(), 5);
        assert_eq!(f.factors[4], "factor 5");
    }

    #[test]
    fn factor_list_variants() {
        let f = parse_factors("Here are the factors:\n- **Record loss**: big\n* competition\n", 5).unwrap();
        assert_eq!(f.factors, ["Record loss: big", "competition"]);
        let f = parse_factors("1) a\n   - detail\n2) b", 5).unwrap();
        assert_eq!(f.factors, ["a", "b"]);
        let f = parse_factors("1、业绩增长\n2、新产品发布", 5).unwrap();
        assert_eq!(f.factors, ["业绩增长", "新产品发布"]);
    }

    #[test]
    fn prose_factor_fallback() {
        let f = parse_factors("The record quarterly loss worried investors. Competition grew.", 5).unwrap();
        assert_eq!(f.factors, ["The record quarterly loss worried investors"]);
        assert!(f.low_confidence);
        assert!(parse_factors("   ", 5).is_err());
        assert!(parse_factors("1. a", 0).is_err());
    }

    #[test]
    fn direction_examples() {
        let (d, why) = parse_direction(
            "On 2019-09-17, the stock price of AAPL will rise. Reasons: strong demand.",
            Language::En,
        );
        assert_eq!(d, Prediction::Rise);
        assert_eq!(why, "Reasons: strong demand.");

        let (d, _) = parse_direction("Although some expected a fall, the price will rise.", Language::En);
        assert_eq!(d, Prediction::Rise);

        let (d, _) = parse_direction("Expect a FALL; a rise is unlikely.", Language::En);
        assert_eq!(d, Prediction::Fall);

        let (d, why) = parse_direction("I cannot determine this.", Language::En);
        assert_eq!(d, Prediction::ParseFailure);
        assert_eq!(why, "I cannot determine this.");

        assert_eq!(
            parse_direction("sunrise and rainfall", Language::En).0,
            Prediction::ParseFailure
        );
    }

    #[test]
    fn direction_cn() {
        let (d, why) = parse_direction(
            "虽然可能上涨，但在2020-01-02,600519的股价将下跌。理由：需求疲软",
            Language::Cn,
        );
        assert_eq!(d, Prediction::Fall);
        assert_eq!(why, "理由：需求疲软");
        assert_eq!(parse_direction("无法判断", Language::Cn).0, Prediction::ParseFailure);
    }

    proptest! {
        #[test]
        fn factor_count_never_exceeds_k(n in 0usize..50, k in 1usize..10, bullets in any::<bool>()) {
            let text: String = (1..=n)
                .map(|i| if bullets { format!("- item {i}\n") } else { format!("{i}. item {i}\n") })
                .collect();
            match parse_factors(&text, k) {
                Ok(f) => {
                    prop_assert!(!f.factors.is_empty());
                    prop_assert!(f.factors.len() <= k);
                    prop_assert!(f.factors.iter().all(|x| !x.is_empty() && !x.contains('\n')));
                }
                Err(_) => prop_assert_eq!(n, 0),
            }
        }

        #[test]
        fn factor_count_bounded_for_arbitrary_text(text in "\\PC{0,400}", k in 1usize..8) {
            if let Ok(f) = parse_factors(&text, k) {
                prop_assert!(f.factors.len() <= k);
            }
        }
    }
}
