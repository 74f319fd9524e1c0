//! Synthetic inputs for the pipeline benchmarks.

use chrono::{Datelike, Days, NaiveDate, Weekday};
use skgp_core::ingest::NewsItem;
use skgp_core::{DatasetRecord, Direction, PriceWindow, StockEntry};

const COMPANIES: &[(&str, &str, &str)] = &[
    ("Apple", "AAPL", "Technology"),
    ("Nvidia", "NVDA", "Semiconductors"),
    ("Intel", "INTC", "Semiconductors"),
    ("Tesla", "TSLA", "Automobiles"),
    ("Microsoft", "MSFT", "Technology"),
    ("Amazon", "AMZN", "Retail"),
    ("Corning", "GLW", "Materials"),
    ("Advanced Micro Devices", "AMD", "Semiconductors"),
    ("Alphabet", "GOOGL", "Technology"),
    ("Meta Platforms", "META", "Technology"),
    ("Netflix", "NFLX", "Media"),
    ("Qualcomm", "QCOM", "Semiconductors"),
];

/// A registry of `n` stocks; the first twelve have real names, the rest are
/// generated.
pub fn registry(n: usize) -> Vec<StockEntry> {
    (0..n)
        .map(|i| match COMPANIES.get(i) {
            Some((c, t, ind)) => StockEntry::new(*c, *t, *ind).expect("valid entry"),
            None => StockEntry::new(format!("Company{i} Holdings"), format!("C{i:04}"), "Other").expect("valid entry"),
        })
        .collect()
}

fn trading_days(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(n);
    let mut day = start;
    while out.len() < n {
        if !matches!(day.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(day);
        }
        day = day + Days::new(1);
    }
    out
}

/// News text of roughly `chars` characters mentioning two registry peers.
pub fn news_text(target: &StockEntry, peers: &[&StockEntry], chars: usize) -> String {
    let mut text = format!("{} shares were in focus today.", target.company);
    for p in peers {
        text.push_str(&format!(" Analysts compared it with {} (${}).", p.company, p.ticker));
    }
    let filler = " Trading volume was above average and the outlook remained steady.";
    while text.len() < chars {
        text.push_str(filler);
    }
    text
}

/// `n` records cycling through the registry, each with a five-movement
/// history and news naming the next two stocks.
pub fn records(registry: &[StockEntry], n: usize) -> Vec<DatasetRecord> {
    let days = trading_days(NaiveDate::from_ymd_opt(2019, 1, 2).expect("valid date"), n + 6);
    (0..n)
        .map(|i| {
            let target = &registry[i % registry.len()];
            let peers = [&registry[(i + 1) % registry.len()], &registry[(i + 2) % registry.len()]];
            let dates = days[i..i + 6].to_vec();
            let closes: Vec<f64> = (0..6).map(|j| 100.0 + ((i * 7 + j * 3) % 11) as f64).collect();
            let date = days[i + 6];
            let news = vec![NewsItem {
                date,
                text: news_text(target, &peers, 600),
                source_id: format!("{}-{i}", target.ticker),
            }];
            let gold = if i % 2 == 0 { Direction::Rise } else { Direction::Fall };
            DatasetRecord::new(
                target.clone(),
                date,
                news,
                PriceWindow::new(dates, closes).expect("ascending dates"),
                gold,
            )
            .expect("valid record")
        })
        .collect()
}
