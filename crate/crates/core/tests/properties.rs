mod common;

use proptest::prelude::*;
use skgp_core::{evaluate, Direction, Prediction, StockEntry, StockIndex};

fn registry() -> Vec<StockEntry> {
    skgp_core::ingest::load_stock_registry(common::registry_csv()).unwrap()
}

fn prediction() -> impl Strategy<Value = Option<bool>> {
    prop_oneof![Just(None), Just(Some(true)), Just(Some(false))]
}

/// Sentence fragments; some name registry stocks, some do not.
fn fragment() -> impl Strategy<Value = String> {
    prop::sample::select(vec![
        "Apple",
        "apple",
        "Nvidia",
        "NVDA",
        "$NVDA",
        "Intel Corp",
        "Tesla Inc.",
        "Microsoft",
        "Amazon",
        "Corning",
        "Advanced Micro Devices",
        "AMD",
        "shares rose",
        "the market",
        "pineapple",
        "Intelligent",
        "GLWX",
        "and",
        "earnings",
        ",",
        ".",
        "(",
        ")",
        "\n",
    ])
    .prop_map(str::to_string)
}

fn text() -> impl Strategy<Value = String> {
    prop::collection::vec(fragment(), 0..30).prop_map(|v| v.join(" "))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn evaluate_agrees_with_tally(pairs in prop::collection::vec((any::<bool>(), prediction()), 1..200)) {
        let (tp, fp, fn_, tn) = common::tally(&pairs);
        let input: Vec<(Direction, Prediction)> = pairs
            .iter()
            .map(|&(gold, pred)| {
                let gold = if gold { Direction::Rise } else { Direction::Fall };
                let pred = match pred {
                    None => Prediction::ParseFailure,
                    Some(true) => Prediction::Rise,
                    Some(false) => Prediction::Fall,
                };
                (gold, pred)
            })
            .collect();
        let report = evaluate(&input, Direction::Rise).unwrap();
        prop_assert_eq!((report.matrix.tp, report.matrix.fp, report.matrix.fn_, report.matrix.tn), (tp, fp, fn_, tn));
        prop_assert_eq!(report.n_parse_failures, pairs.iter().filter(|p| p.1.is_none()).count() as u64);
        prop_assert!((report.acc - common::exact_acc(tp, fp, fn_, tn)).abs() <= 1e-12);
        prop_assert!((report.mcc - common::exact_mcc(tp, fp, fn_, tn)).abs() <= 1e-9);
        prop_assert!((-1.0..=1.0).contains(&report.mcc));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn matching_is_deterministic_and_sound(text in text(), t in 0usize..8) {
        let reg = registry();
        let index = StockIndex::new(&reg);
        let target = &reg[t];
        let a = index.match_stocks(&text, target);
        let b = StockIndex::new(&reg).match_stocks(&text, target);
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.matched.len(), a.evidence.len());
        let mut tickers: Vec<&str> = a.matched.iter().map(|m| m.ticker.as_str()).collect();
        prop_assert!(!tickers.contains(&target.ticker.as_str()));
        tickers.sort();
        tickers.dedup();
        prop_assert_eq!(tickers.len(), a.matched.len());
        for (peer, ev) in a.matched.iter().zip(&a.evidence) {
            prop_assert!(!ev.is_empty());
            for e in ev {
                prop_assert_eq!(&text[e.offset..e.offset + e.surface.len()], e.surface.as_str());
                let surface = e.surface.trim_start_matches('$').to_lowercase();
                prop_assert!(
                    peer.company.to_lowercase().starts_with(&surface) || surface == peer.ticker.to_lowercase(),
                    "{} is not a form of {}", e.surface, peer.company
                );
            }
        }
        // Peers come in order of first mention.
        let firsts: Vec<usize> = a.evidence.iter().map(|ev| ev.iter().map(|e| e.offset).min().unwrap()).collect();
        let mut sorted = firsts.clone();
        sorted.sort();
        prop_assert_eq!(firsts, sorted);
    }

    #[test]
    fn more_text_never_loses_peers(head in text(), tail in text(), t in 0usize..8) {
        let reg = registry();
        let index = StockIndex::new(&reg);
        let target = &reg[t];
        let short = index.match_stocks(&head, target);
        let long = index.match_stocks(&format!("{head}\n{tail}"), target);
        for m in &short.matched {
            prop_assert!(long.matched.contains(m), "{} lost", m.ticker);
        }
    }
}
