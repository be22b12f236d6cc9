//! Deterministic offline backends. Each reply is a pure function of the
//! prompt and the policy.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use serde::{Serialize, Serializer};

use super::{Completion, Gateway, GatewayError};
use crate::analysis::tokenize;
use crate::corpus::{CorpusError, Dataset, ReadabilityLabel};
use crate::prompt::{parse_prompt, prompt_hash};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StubPolicy {
    /// Always answers the same label word.
    Constant(ReadabilityLabel),
    /// Answers the target snippet's most common label over all developers.
    MajorityEcho,
    /// Answers the label of the shot whose token set is most similar
    /// (Jaccard) to the target's; earlier shots win ties.
    ShotEcho,
    /// Answers the given text verbatim.
    Verbatim(String),
}

impl fmt::Display for StubPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StubPolicy::Constant(l) => write!(f, "constant-{}", l.word().to_lowercase()),
            StubPolicy::MajorityEcho => f.write_str("majority-echo"),
            StubPolicy::ShotEcho => f.write_str("shot-echo"),
            StubPolicy::Verbatim(t) => write!(f, "verbatim={t}"),
        }
    }
}

impl FromStr for StubPolicy {
    type Err = GatewayError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "constant-unreadable" => StubPolicy::Constant(ReadabilityLabel::Unreadable),
            "constant-neutral" => StubPolicy::Constant(ReadabilityLabel::Neutral),
            "constant-readable" => StubPolicy::Constant(ReadabilityLabel::Readable),
            "majority-echo" => StubPolicy::MajorityEcho,
            "shot-echo" => StubPolicy::ShotEcho,
            _ => match s.strip_prefix("verbatim=") {
                Some(text) => StubPolicy::Verbatim(text.to_string()),
                None => return Err(GatewayError::Config(format!("unknown stub policy `{s}`"))),
            },
        })
    }
}

impl Serialize for StubPolicy {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Debug, Clone)]
pub struct StubGateway {
    policy: StubPolicy,
    model_name: String,
    majority: HashMap<String, ReadabilityLabel>,
}

impl StubGateway {
    /// For [`StubPolicy::MajorityEcho`] use [`StubGateway::majority_echo`].
    pub fn new(policy: StubPolicy) -> Self {
        StubGateway {
            model_name: format!("stub:{policy}"),
            policy,
            majority: HashMap::new(),
        }
    }

    /// Majority-echo stub keyed by snippet source (trailing whitespace
    /// trimmed). With duplicate sources the first snippet in dataset order wins.
    pub fn majority_echo(dataset: &Dataset) -> Result<Self, CorpusError> {
        let view = dataset.matrix.view();
        let mut majority = HashMap::new();
        for (i, snippet) in dataset.snippets().iter().enumerate() {
            let label = view.majority_label_at(i)?;
            majority.entry(snippet.source.trim_end().to_string()).or_insert(label);
        }
        Ok(StubGateway {
            model_name: format!("stub:{}", StubPolicy::MajorityEcho),
            policy: StubPolicy::MajorityEcho,
            majority,
        })
    }

    pub fn policy(&self) -> &StubPolicy {
        &self.policy
    }

    fn reply(&self, prompt: &str) -> String {
        match &self.policy {
            StubPolicy::Constant(l) => l.word().to_string(),
            StubPolicy::Verbatim(t) => t.clone(),
            StubPolicy::MajorityEcho => parse_prompt(prompt)
                .and_then(|p| self.majority.get(&p.target).copied())
                .map_or_else(|| "unknown snippet".to_string(), |l| l.word().to_string()),
            StubPolicy::ShotEcho => {
                let Some(parsed) = parse_prompt(prompt) else {
                    return "unrecognized prompt".to_string();
                };
                let target = token_set(&parsed.target);
                let mut best: Option<(f64, ReadabilityLabel)> = None;
                for shot in &parsed.shots {
                    let sim = jaccard(&target, &token_set(&shot.source));
                    if best.is_none_or(|(b, _)| sim > b) {
                        best = Some((sim, shot.label));
                    }
                }
                best.map_or_else(
                    || ReadabilityLabel::Neutral.word().to_string(),
                    |(_, l)| l.word().to_string(),
                )
            }
        }
    }
}

fn token_set(source: &str) -> BTreeSet<String> {
    tokenize(source)
        .map(|ts| ts.code_tokens().map(|t| t.text.clone()).collect())
        .unwrap_or_default()
}

fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

impl Gateway for StubGateway {
    fn model_name(&self) -> &str {
        &self.model_name
    }

    fn complete(&self, prompt: &str) -> Result<Completion, GatewayError> {
        if prompt.is_empty() {
            return Err(GatewayError::EmptyPrompt);
        }
        Ok(Completion {
            prompt_hash: prompt_hash(prompt),
            raw_text: self.reply(prompt),
            latency: Duration::ZERO,
            attempt: 1,
        })
    }
}
