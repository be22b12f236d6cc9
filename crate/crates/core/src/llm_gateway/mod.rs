//! Chat-completion backends behind one trait, plus label parsing.
//!
//! Every backend is `Send + Sync`; protocol code shares one gateway across
//! worker threads. The remote backend bounds in-flight requests itself.

mod cache;
mod remote;
mod stub;

use std::fmt;
use std::str::FromStr;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cache::CachedGateway;
pub use remote::{RemoteGateway, API_KEY_ENV};
pub use stub::{StubGateway, StubPolicy};

use crate::corpus::{Dataset, ReadabilityLabel};
pub use crate::prompt::prompt_hash;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GatewayError {
    #[error("empty prompt")]
    EmptyPrompt,
    #[error("authentication failure: {0}")]
    Authentication(String),
    #[error("request timed out after {0:?}")]
    Timeout(Duration),
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("unexpected response: {0}")]
    Protocol(String),
    #[error("gave up after {attempts} attempts: {last}")]
    ExhaustedRetries { attempts: u32, last: String },
    #[error("invalid gateway configuration: {0}")]
    Config(String),
    #[error("backend unavailable: {0}")]
    Unavailable(String),
}

impl GatewayError {
    /// Errors that will recur on every request, so a protocol should stop
    /// instead of recording an abstention.
    pub fn is_fatal(&self) -> bool {
        matches!(
            self,
            GatewayError::Authentication(_) | GatewayError::Config(_) | GatewayError::Unavailable(_)
        )
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LabelParseError {
    #[error("no label word in completion `{0}`")]
    Unparseable(String),
    #[error("completion `{text}` names several labels: {labels:?}")]
    Ambiguous {
        text: String,
        labels: Vec<ReadabilityLabel>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub prompt_hash: String,
    pub raw_text: String,
    pub latency: Duration,
    /// 1-based attempt that produced the text; 0 for cache hits.
    pub attempt: u32,
}

pub trait Gateway: Send + Sync {
    fn model_name(&self) -> &str;
    fn complete(&self, prompt: &str) -> Result<Completion, GatewayError>;

    /// Like [`Gateway::complete`] but never answered from a cache; used to
    /// re-ask after an unparseable reply.
    fn complete_fresh(&self, prompt: &str) -> Result<Completion, GatewayError> {
        self.complete(prompt)
    }
}

impl<G: Gateway + ?Sized> Gateway for &G {
    fn model_name(&self) -> &str {
        (**self).model_name()
    }
    fn complete(&self, prompt: &str) -> Result<Completion, GatewayError> {
        (**self).complete(prompt)
    }
    fn complete_fresh(&self, prompt: &str) -> Result<Completion, GatewayError> {
        (**self).complete_fresh(prompt)
    }
}

impl<G: Gateway + ?Sized> Gateway for Box<G> {
    fn model_name(&self) -> &str {
        (**self).model_name()
    }
    fn complete(&self, prompt: &str) -> Result<Completion, GatewayError> {
        (**self).complete(prompt)
    }
    fn complete_fresh(&self, prompt: &str) -> Result<Completion, GatewayError> {
        (**self).complete_fresh(prompt)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RequestRecord {
    pub prompt_hash: String,
    pub attempt: u32,
    pub outcome: String,
}

/// Append-only record of requests a backend has issued.
#[derive(Debug, Default)]
pub struct RequestLog {
    entries: Mutex<Vec<RequestRecord>>,
}

impl RequestLog {
    pub fn append(&self, record: RequestRecord) {
        self.entries.lock().expect("request log poisoned").push(record);
    }

    pub fn snapshot(&self) -> Vec<RequestRecord> {
        self.entries.lock().expect("request log poisoned").clone()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("request log poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    RemoteHttp,
    Stub,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GatewayConfig {
    pub backend: Backend,
    pub model_name: String,
    pub temperature: f64,
    pub max_retries: u32,
    #[serde(with = "duration_secs")]
    pub request_timeout: Duration,
    pub max_concurrent_requests: usize,
    pub stub_policy: Option<StubPolicy>,
    pub endpoint: Option<String>,
    /// First retry delay; doubles on each further attempt.
    #[serde(with = "duration_secs")]
    pub backoff_base: Duration,
}

mod duration_secs {
    use serde::Serializer;
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }
}

impl GatewayConfig {
    pub fn stub(policy: StubPolicy) -> Self {
        GatewayConfig {
            backend: Backend::Stub,
            model_name: format!("stub:{policy}"),
            temperature: 0.0,
            max_retries: 3,
            request_timeout: Duration::from_secs(60),
            max_concurrent_requests: 4,
            stub_policy: Some(policy),
            endpoint: None,
            backoff_base: Duration::from_secs(1),
        }
    }

    pub fn remote(model_name: impl Into<String>, endpoint: impl Into<String>) -> Self {
        GatewayConfig {
            backend: Backend::RemoteHttp,
            model_name: model_name.into(),
            stub_policy: None,
            endpoint: Some(endpoint.into()),
            ..GatewayConfig::stub(StubPolicy::MajorityEcho)
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.temperature != 0.0 {
            return Err(GatewayError::Config("temperature must be 0".into()));
        }
        if self.max_concurrent_requests == 0 {
            return Err(GatewayError::Config("max_concurrent_requests must be >= 1".into()));
        }
        match self.backend {
            Backend::Stub if self.stub_policy.is_none() => {
                Err(GatewayError::Config("stub backend needs a stub policy".into()))
            }
            Backend::RemoteHttp if self.endpoint.as_deref().is_none_or(str::is_empty) => {
                Err(GatewayError::Config("remote backend needs an endpoint URL".into()))
            }
            _ => Ok(()),
        }
    }

    /// Builds the configured backend. The majority-echo stub needs `dataset`
    /// to know each snippet's most common label.
    pub fn build(&self, dataset: Option<&Dataset>) -> Result<Box<dyn Gateway>, GatewayError> {
        self.validate()?;
        match self.backend {
            Backend::Stub => {
                let policy = self.stub_policy.clone().expect("validated");
                let stub = match (&policy, dataset) {
                    (StubPolicy::MajorityEcho, Some(ds)) => {
                        StubGateway::majority_echo(ds).map_err(|e| GatewayError::Config(e.to_string()))?
                    }
                    (StubPolicy::MajorityEcho, None) => {
                        return Err(GatewayError::Config("majority-echo stub needs a dataset".into()))
                    }
                    _ => StubGateway::new(policy),
                };
                Ok(Box::new(stub))
            }
            Backend::RemoteHttp => Ok(Box::new(RemoteGateway::new(self.clone())?)),
        }
    }
}

impl FromStr for GatewayConfig {
    type Err = GatewayError;

    /// `remote` or `stub:<policy>`; see [`StubPolicy`] for policy names.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "remote" {
            return Ok(GatewayConfig {
                endpoint: None,
                ..GatewayConfig::remote("gpt-4o", "")
            });
        }
        let policy = s
            .strip_prefix("stub:")
            .ok_or_else(|| GatewayError::Config(format!("unknown gateway `{s}`")))?;
        Ok(GatewayConfig::stub(policy.parse()?))
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Backend::RemoteHttp => "remote_http",
            Backend::Stub => "stub",
        })
    }
}

/// Case-insensitive, word-level scan for the three label words. Exactly one
/// distinct label must appear. Words are maximal alphanumeric runs, so
/// "Unreadable" never counts as "Readable".
pub fn parse_label(raw_text: &str) -> Result<ReadabilityLabel, LabelParseError> {
    let mut found: Vec<ReadabilityLabel> = Vec::new();
    for word in raw_text.split(|c: char| !c.is_alphanumeric()) {
        let lower = word.to_lowercase();
        let label = match lower.as_str() {
            "unreadable" => ReadabilityLabel::Unreadable,
            "neutral" => ReadabilityLabel::Neutral,
            "readable" => ReadabilityLabel::Readable,
            _ => continue,
        };
        if !found.contains(&label) {
            found.push(label);
        }
    }
    match found.as_slice() {
        [] => Err(LabelParseError::Unparseable(raw_text.to_string())),
        [one] => Ok(*one),
        _ => {
            found.sort();
            Err(LabelParseError::Ambiguous {
                text: raw_text.to_string(),
                labels: found,
            })
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum QueryError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Label(#[from] LabelParseError),
}

/// Sends `prompt` and parses the reply, re-asking up to `parse_retries`
/// more times while the reply has no single label word.
pub fn query_label(gateway: &dyn Gateway, prompt: &str, parse_retries: u32) -> Result<ReadabilityLabel, QueryError> {
    let mut last = None;
    for attempt in 0..=parse_retries {
        let completion = if attempt == 0 {
            gateway.complete(prompt)?
        } else {
            gateway.complete_fresh(prompt)?
        };
        match parse_label(&completion.raw_text) {
            Ok(label) => return Ok(label),
            Err(e) => last = Some(e),
        }
    }
    Err(last.expect("at least one attempt").into())
}
