//! Rule-driven offline backend. Responses are a pure function of the prompt.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use regex::Regex;
use serde::Deserialize;

use super::{count_tokens, BackendError, CompletionBackend, CompletionResult};
use crate::error::{Error, Result};

type PromptPredicate = Arc<dyn Fn(&str) -> bool + Send + Sync>;
type PromptResponder = Arc<dyn Fn(&str) -> String + Send + Sync>;

#[derive(Clone)]
pub enum PromptMatcher {
    Always,
    Contains(String),
    Regex(Regex),
    /// At least `min` lines of the prompt match `pattern`.
    MinLines {
        pattern: Regex,
        min: usize,
    },
    Predicate(PromptPredicate),
}

impl PromptMatcher {
    fn matches(&self, prompt: &str) -> bool {
        match self {
            PromptMatcher::Always => true,
            PromptMatcher::Contains(s) => prompt.contains(s.as_str()),
            PromptMatcher::Regex(re) => re.is_match(prompt),
            PromptMatcher::MinLines { pattern, min } => prompt.lines().filter(|l| pattern.is_match(l)).count() >= *min,
            PromptMatcher::Predicate(f) => f(prompt),
        }
    }
}

#[derive(Clone)]
pub enum MockResponse {
    Fixed(String),
    /// Expanded with the capture groups of a `Regex` matcher (`$1`, `${name}`).
    Captures(String),
    Function(PromptResponder),
}

#[derive(Clone)]
pub struct MockRule {
    pub matcher: PromptMatcher,
    pub response: MockResponse,
}

impl MockRule {
    pub fn new(matcher: PromptMatcher, response: MockResponse) -> Self {
        Self { matcher, response }
    }

    fn respond(&self, prompt: &str) -> String {
        match &self.response {
            MockResponse::Fixed(s) => s.clone(),
            MockResponse::Function(f) => f(prompt),
            MockResponse::Captures(template) => match &self.matcher {
                PromptMatcher::Regex(re) => {
                    let mut out = String::new();
                    if let Some(caps) = re.captures(prompt) {
                        caps.expand(template, &mut out);
                    }
                    out
                }
                _ => template.clone(),
            },
        }
    }
}

/// Deterministic backend answering with the first matching rule. The last
/// rule must match every prompt.
pub struct MockBackend {
    model_id: String,
    rules: Vec<MockRule>,
    concurrency: usize,
    calls: AtomicUsize,
}

impl MockBackend {
    pub fn from_rules(
        model_id: impl Into<String>,
        mut rules: Vec<MockRule>,
        default: Option<MockResponse>,
    ) -> Result<Self> {
        match default {
            Some(response) => rules.push(MockRule::new(PromptMatcher::Always, response)),
            None if rules.last().is_some_and(|r| matches!(r.matcher, PromptMatcher::Always)) => {}
            None => {
                return Err(Error::Config(
                    "mock rules need a default response covering every prompt".into(),
                ))
            }
        }
        Ok(Self {
            model_id: model_id.into(),
            rules,
            concurrency: 1,
            calls: AtomicUsize::new(0),
        })
    }

    pub fn with_concurrency(mut self, n: usize) -> Self {
        self.concurrency = n.max(1);
        self
    }

    /// Number of `complete` calls served so far.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn respond(&self, prompt: &str) -> String {
        self.rules
            .iter()
            .find(|r| r.matcher.matches(prompt))
            .map(|r| r.respond(prompt))
            .expect("rule set ends with a catch-all")
    }

    /// Answers relation and factor prompts with fixed knowledge, and price
    /// prompts with "rise" when at least three history lines rose.
    pub fn momentum() -> Self {
        let rules = vec![
            MockRule::new(
                PromptMatcher::Regex(
                    Regex::new(r"complete sentence: (.+?) and (.+?) are most likely in a ___ relationship\.").unwrap(),
                ),
                MockResponse::Captures("$1 and $2 are most likely in a competitor relationship.".into()),
            ),
            MockRule::new(
                PromptMatcher::Regex(Regex::new(r"请填空并返回完整的句子: (.+?)和(.+?)最可能是___关系。").unwrap()),
                MockResponse::Captures("$1和$2最可能是竞争关系。".into()),
            ),
            MockRule::new(
                PromptMatcher::Regex(Regex::new(r"(?m)^Please .*factors").unwrap()),
                MockResponse::Fixed(
                    "1. recent price momentum\n2. market sentiment in the news\n3. sector performance".into(),
                ),
            ),
            MockRule::new(
                PromptMatcher::Regex(Regex::new(r"(?m)^(?:请|根据提供的新闻).*因素").unwrap()),
                MockResponse::Fixed("1. 近期价格动量\n2. 新闻情绪\n3. 行业表现".into()),
            ),
            MockRule::new(
                PromptMatcher::MinLines {
                    pattern: Regex::new(r"^(?:On \S+, the stock price of .+ rose\.|在\S+,.+的股价上涨。)$").unwrap(),
                    min: 3,
                },
                MockResponse::Function(Arc::new(|prompt: &str| {
                    if prompt.contains("的股价将___") {
                        "股价将上涨。理由：近期多数交易日上涨。".to_string()
                    } else {
                        "The stock price will rise. Reason: it rose on most recent trading days.".to_string()
                    }
                })),
            ),
        ];
        let default = MockResponse::Function(Arc::new(|prompt: &str| {
            if prompt.contains("的股价将___") {
                "股价将下跌。理由：近期多数交易日下跌。".to_string()
            } else {
                "The stock price will fall. Reason: it fell on most recent trading days.".to_string()
            }
        }));
        Self::from_rules("mock-momentum", rules, Some(default)).expect("preset has a default")
    }

    /// Loads rules from a TOML file:
    ///
    /// ```toml
    /// model_id = "mock"
    /// default = "The stock price will fall."
    /// [[rules]]
    /// contains = "relationship"        # or regex = "...", or line_regex + min_lines
    /// response = "A and B are most likely in a supplier relationship."
    /// ```
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: RuleFile =
            toml::from_str(&text).map_err(|e| Error::Config(format!("mock rules {}: {e}", path.display())))?;
        let mut rules = Vec::with_capacity(file.rules.len());
        for (i, r) in file.rules.into_iter().enumerate() {
            let bad = |m: String| Error::Config(format!("mock rule {i}: {m}"));
            let compile = |p: &str| Regex::new(p).map_err(|e| bad(e.to_string()));
            let (matcher, captures) = match (r.contains, r.regex, r.line_regex) {
                (Some(s), None, None) => (PromptMatcher::Contains(s), false),
                (None, Some(p), None) => (PromptMatcher::Regex(compile(&p)?), true),
                (None, None, Some(p)) => (
                    PromptMatcher::MinLines {
                        pattern: compile(&p)?,
                        min: r.min_lines.unwrap_or(1),
                    },
                    false,
                ),
                _ => return Err(bad("set exactly one of contains, regex, line_regex".into())),
            };
            let response = if captures {
                MockResponse::Captures(r.response)
            } else {
                MockResponse::Fixed(r.response)
            };
            rules.push(MockRule::new(matcher, response));
        }
        Self::from_rules(
            file.model_id.unwrap_or_else(|| "mock".into()),
            rules,
            file.default.map(MockResponse::Fixed),
        )
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleFile {
    model_id: Option<String>,
    default: Option<String>,
    #[serde(default)]
    rules: Vec<RuleSpec>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleSpec {
    contains: Option<String>,
    regex: Option<String>,
    line_regex: Option<String>,
    min_lines: Option<usize>,
    response: String,
}

impl CompletionBackend for MockBackend {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn max_concurrency(&self) -> usize {
        self.concurrency
    }

    fn complete(&self, _system_preamble: &str, user_prompt: &str) -> Result<CompletionResult, BackendError> {
        if user_prompt.trim().is_empty() {
            return Err(BackendError::EmptyPrompt);
        }
        self.calls.fetch_add(1, Ordering::SeqCst);
        let text = self.respond(user_prompt);
        Ok(CompletionResult {
            prompt_tokens: count_tokens(user_prompt),
            completion_tokens: count_tokens(&text),
            text,
            latency_ms: 0,
            attempt: 1,
            cached: false,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::SYSTEM_PREAMBLE;

    #[test]
    fn scripted_answer() {
        let mock = MockBackend::from_rules(
            "m",
            vec![MockRule::new(
                PromptMatcher::Contains("AAPL".into()),
                MockResponse::Fixed("rise".into()),
            )],
            Some(MockResponse::Fixed("fall".into())),
        )
        .unwrap();
        let r = mock.complete(SYSTEM_PREAMBLE, "what about AAPL?").unwrap();
        assert_eq!((r.text.as_str(), r.attempt), ("rise", 1));
        assert_eq!(mock.complete(SYSTEM_PREAMBLE, "MSFT").unwrap().text, "fall");
        assert_eq!(mock.calls(), 2);
        assert!(mock.complete(SYSTEM_PREAMBLE, " ").is_err());
    }

    #[test]
    fn missing_default_is_config_error() {
        let rules = vec![MockRule::new(
            PromptMatcher::Contains("x".into()),
            MockResponse::Fixed("y".into()),
        )];
        assert!(matches!(
            MockBackend::from_rules("m", rules, None),
            Err(Error::Config(_))
        ));
        assert!(MockBackend::from_rules(
            "m",
            vec![MockRule::new(PromptMatcher::Always, MockResponse::Fixed("y".into()))],
            None
        )
        .is_ok());
    }

    #[test]
    fn momentum_relation_answers_use_frame() {
        let mock = MockBackend::momentum();
        let answer = mock.respond(
            "Please fill in the blank and return a complete sentence: Nvidia and Intel are most likely in a ___ relationship.",
        );
        assert_eq!(answer, "Nvidia and Intel are most likely in a competitor relationship.");
        let cn = mock.respond("请填空并返回完整的句子: 贵州茅台和五粮液最可能是___关系。");
        assert_eq!(cn, "贵州茅台和五粮液最可能是竞争关系。");
    }

    #[test]
    fn momentum_price_rule_counts_rose_lines() {
        let mock = MockBackend::momentum();
        let prompt = |rose: usize| {
            let mut lines = vec!["Based on the following information, please judge".to_string()];
            for i in 0..5 {
                let word = if i < rose { "rose" } else { "fell" };
                lines.push(format!("On 2020-01-0{}, the stock price of AAPL {word}.", i + 1));
            }
            lines.push("On 2020-01-08, the stock price of AAPL will ___.".into());
            lines.join("\n")
        };
        assert!(mock.respond(&prompt(3)).contains("will rise"));
        assert!(mock.respond(&prompt(2)).contains("will fall"));
    }

    #[test]
    fn rules_from_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rules.toml");
        std::fs::write(
            &path,
            r#"
model_id = "scripted"
default = "The stock price will fall."
[[rules]]
regex = "(\\w+) and (\\w+) are most likely"
response = "$1 and $2 are most likely in a supplier relationship."
[[rules]]
line_regex = "rose\\.$"
min_lines = 2
response = "will rise"
"#,
        )
        .unwrap();
        let mock = MockBackend::from_file(&path).unwrap();
        assert_eq!(mock.model_id(), "scripted");
        assert_eq!(
            mock.respond("Apple and Corning are most likely in a ___ relationship."),
            "Apple and Corning are most likely in a supplier relationship."
        );
        assert_eq!(mock.respond("a rose.\nb rose."), "will rise");
        assert_eq!(mock.respond("a rose."), "The stock price will fall.");

        std::fs::write(&path, "[[rules]]\ncontains = \"x\"\nresponse = \"y\"\n").unwrap();
        assert!(matches!(MockBackend::from_file(&path), Err(Error::Config(_))));
    }
}
