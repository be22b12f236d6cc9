//! Chat-completion backend over HTTP JSON.
//!
//! Request: `{"model", "messages": [{"role": "user", "content": <prompt>}], "temperature": 0}`
//! with `Authorization: Bearer $READABILITY_LAB_API_KEY`. The reply text is
//! `choices[0].message.content`.

use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{Completion, Gateway, GatewayConfig, GatewayError, RequestLog, RequestRecord};
use crate::prompt::prompt_hash;

pub const API_KEY_ENV: &str = "READABILITY_LAB_API_KEY";

/// Consecutive requests that exhaust their retries before the backend is declared down.
pub const FAILURES_BEFORE_UNAVAILABLE: u32 = 3;

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 1],
    temperature: f64,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ReplyMessage,
}

#[derive(Deserialize)]
struct ReplyMessage {
    content: Option<String>,
}

/// Counting semaphore bounding requests in flight.
struct Permits {
    free: Mutex<usize>,
    released: Condvar,
}

struct Permit<'a>(&'a Permits);

impl Permits {
    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().expect("permit lock poisoned");
        while *free == 0 {
            free = self.released.wait(free).expect("permit lock poisoned");
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("permit lock poisoned") += 1;
        self.0.released.notify_one();
    }
}

enum AttemptError {
    Retryable(GatewayError),
    Fatal(GatewayError),
}

pub struct RemoteGateway {
    config: GatewayConfig,
    endpoint: String,
    api_key: String,
    agent: ureq::Agent,
    permits: Permits,
    log: RequestLog,
    consecutive_failures: AtomicU32,
}

impl RemoteGateway {
    /// Reads the API key from the environment; fails before any request if absent.
    pub fn new(config: GatewayConfig) -> Result<Self, GatewayError> {
        let key = std::env::var(API_KEY_ENV).unwrap_or_default();
        Self::with_api_key(config, key)
    }

    pub fn with_api_key(config: GatewayConfig, api_key: impl Into<String>) -> Result<Self, GatewayError> {
        config.validate()?;
        let api_key = api_key.into();
        if api_key.trim().is_empty() {
            return Err(GatewayError::Authentication(format!("{API_KEY_ENV} is not set")));
        }
        let endpoint = config.endpoint.clone().expect("validated");
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.request_timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(RemoteGateway {
            permits: Permits {
                free: Mutex::new(config.max_concurrent_requests),
                released: Condvar::new(),
            },
            endpoint,
            api_key,
            agent,
            config,
            log: RequestLog::default(),
            consecutive_failures: AtomicU32::new(0),
        })
    }

    pub fn log(&self) -> &RequestLog {
        &self.log
    }

    fn attempt(&self, prompt: &str) -> Result<String, AttemptError> {
        let _permit = self.permits.acquire();
        let body = ChatRequest {
            model: &self.config.model_name,
            messages: [ChatMessage {
                role: "user",
                content: prompt,
            }],
            temperature: self.config.temperature,
        };
        let mut response = self
            .agent
            .post(&self.endpoint)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(&body)
            .map_err(|e| match e {
                ureq::Error::Timeout(_) => AttemptError::Retryable(GatewayError::Timeout(self.config.request_timeout)),
                other => AttemptError::Retryable(GatewayError::Transport(other.to_string())),
            })?;
        let status = response.status().as_u16();
        match status {
            200..=299 => {}
            401 | 403 => {
                return Err(AttemptError::Fatal(GatewayError::Authentication(format!(
                    "endpoint answered HTTP {status}"
                ))))
            }
            408 | 429 | 500..=599 => {
                return Err(AttemptError::Retryable(GatewayError::Transport(format!(
                    "HTTP {status}"
                ))))
            }
            _ => return Err(AttemptError::Fatal(GatewayError::Protocol(format!("HTTP {status}")))),
        }
        let parsed: ChatResponse = response
            .body_mut()
            .read_json()
            .map_err(|e| AttemptError::Fatal(GatewayError::Protocol(e.to_string())))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| AttemptError::Fatal(GatewayError::Protocol("response has no message text".into())))
    }
}

impl Gateway for RemoteGateway {
    fn model_name(&self) -> &str {
        &self.config.model_name
    }

    fn complete(&self, prompt: &str) -> Result<Completion, GatewayError> {
        if prompt.is_empty() {
            return Err(GatewayError::EmptyPrompt);
        }
        let down = self.consecutive_failures.load(Ordering::SeqCst);
        if down >= FAILURES_BEFORE_UNAVAILABLE {
            return Err(GatewayError::Unavailable(format!("{down} consecutive requests failed")));
        }
        let hash = prompt_hash(prompt);
        let attempts = self.config.max_retries + 1;
        let mut last = String::new();
        for attempt in 1..=attempts {
            let started = Instant::now();
            let outcome = self.attempt(prompt);
            let record = |outcome: String| RequestRecord {
                prompt_hash: hash.clone(),
                attempt,
                outcome,
            };
            match outcome {
                Ok(text) => {
                    self.consecutive_failures.store(0, Ordering::SeqCst);
                    self.log.append(record("ok".into()));
                    return Ok(Completion {
                        prompt_hash: hash,
                        raw_text: text,
                        latency: started.elapsed(),
                        attempt,
                    });
                }
                Err(AttemptError::Fatal(e)) => {
                    self.log.append(record(e.to_string()));
                    return Err(e);
                }
                Err(AttemptError::Retryable(e)) => {
                    self.log.append(record(e.to_string()));
                    last = e.to_string();
                    if attempt < attempts {
                        std::thread::sleep(self.config.backoff_base * 2u32.pow(attempt - 1));
                    }
                }
            }
        }
        let down = self.consecutive_failures.fetch_add(1, Ordering::SeqCst) + 1;
        if down >= FAILURES_BEFORE_UNAVAILABLE {
            return Err(GatewayError::Unavailable(format!(
                "{down} consecutive requests failed, last: {last}"
            )));
        }
        Err(GatewayError::ExhaustedRetries { attempts, last })
    }
}

impl std::fmt::Debug for RemoteGateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteGateway")
            .field("endpoint", &self.endpoint)
            .field("model", &self.config.model_name)
            .finish_non_exhaustive()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::Arc;
    use std::time::Duration;

    /// Serves one canned HTTP response per connection, in order, and returns
    /// the raw request bodies it saw.
    fn serve(responses: Vec<(u16, String)>) -> (String, std::thread::JoinHandle<Vec<(String, String)>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
        let handle = std::thread::spawn(move || {
            let mut seen = Vec::new();
            for (status, body) in responses {
                let (stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut headers = String::new();
                let mut len = 0usize;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if line == "\r\n" || line.is_empty() {
                        break;
                    }
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                    headers.push_str(&line);
                }
                let mut buf = vec![0u8; len];
                reader.read_exact(&mut buf).unwrap();
                seen.push((headers, String::from_utf8(buf).unwrap()));
                let mut stream = stream;
                write!(
                    stream,
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                )
                .unwrap();
            }
            seen
        });
        (url, handle)
    }

    fn config(url: &str) -> GatewayConfig {
        GatewayConfig {
            backoff_base: Duration::from_millis(1),
            max_retries: 2,
            ..GatewayConfig::remote("gpt-4o", url)
        }
    }

    #[test]
    fn sends_single_user_message_at_temperature_zero() {
        let reply = r#"{"choices":[{"message":{"role":"assistant","content":"Readable"}}]}"#;
        let (url, server) = serve(vec![(200, reply.into())]);
        let g = RemoteGateway::with_api_key(config(&url), "k-123").unwrap();
        let c = g.complete("judge this").unwrap();
        assert_eq!(c.raw_text, "Readable");
        assert_eq!(c.attempt, 1);
        let seen = server.join().unwrap();
        assert!(seen[0].0.contains("authorization: Bearer k-123") || seen[0].0.contains("Authorization: Bearer k-123"));
        let body: serde_json::Value = serde_json::from_str(&seen[0].1).unwrap();
        assert_eq!(body["model"], "gpt-4o");
        assert_eq!(body["temperature"], 0.0);
        assert_eq!(body["messages"].as_array().unwrap().len(), 1);
        assert_eq!(body["messages"][0]["role"], "user");
        assert_eq!(body["messages"][0]["content"], "judge this");
    }

    #[test]
    fn retries_server_errors_then_succeeds() {
        let ok = r#"{"choices":[{"message":{"content":"Neutral"}}]}"#;
        let (url, server) = serve(vec![(503, "{}".into()), (500, "{}".into()), (200, ok.into())]);
        let g = RemoteGateway::with_api_key(config(&url), "k").unwrap();
        let c = g.complete("p").unwrap();
        assert_eq!((c.raw_text.as_str(), c.attempt), ("Neutral", 3));
        assert_eq!(g.log().len(), 3);
        server.join().unwrap();
    }

    #[test]
    fn gives_up_after_retry_budget() {
        let (url, server) = serve(vec![(503, "{}".into()); 3]);
        let g = RemoteGateway::with_api_key(config(&url), "k").unwrap();
        assert!(matches!(
            g.complete("p"),
            Err(GatewayError::ExhaustedRetries { attempts: 3, .. })
        ));
        server.join().unwrap();
    }

    #[test]
    fn repeated_exhaustion_marks_backend_unavailable() {
        let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
        let g = RemoteGateway::with_api_key(config(&format!("http://127.0.0.1:{port}/v1")), "k").unwrap();
        for _ in 1..FAILURES_BEFORE_UNAVAILABLE {
            let e = g.complete("p").unwrap_err();
            assert!(matches!(e, GatewayError::ExhaustedRetries { .. }), "{e}");
        }
        let e = g.complete("p").unwrap_err();
        assert!(e.is_fatal(), "{e}");
        let sent = g.log().len();
        assert!(g.complete("p").unwrap_err().is_fatal());
        assert_eq!(g.log().len(), sent, "no request once unavailable");
    }

    #[test]
    fn auth_failure_is_not_retried() {
        let (url, server) = serve(vec![(401, "{}".into())]);
        let g = RemoteGateway::with_api_key(config(&url), "bad").unwrap();
        assert!(matches!(g.complete("p"), Err(GatewayError::Authentication(_))));
        assert_eq!(g.log().len(), 1);
        server.join().unwrap();
    }

    #[test]
    fn missing_key_fails_before_any_request() {
        let err = RemoteGateway::with_api_key(config("http://127.0.0.1:9/never"), "").unwrap_err();
        assert!(matches!(err, GatewayError::Authentication(_)));
    }

    #[test]
    fn permits_bound_concurrency() {
        let permits = Arc::new(Permits {
            free: Mutex::new(2),
            released: Condvar::new(),
        });
        let peak = Arc::new(Mutex::new((0usize, 0usize)));
        std::thread::scope(|s| {
            for _ in 0..8 {
                let (permits, peak) = (permits.clone(), peak.clone());
                s.spawn(move || {
                    let _p = permits.acquire();
                    {
                        let mut g = peak.lock().unwrap();
                        g.0 += 1;
                        g.1 = g.1.max(g.0);
                    }
                    std::thread::sleep(Duration::from_millis(5));
                    peak.lock().unwrap().0 -= 1;
                });
            }
        });
        assert_eq!(peak.lock().unwrap().1, 2);
    }
}
