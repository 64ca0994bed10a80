//! HTTP client for a log-probability server.
//!
//! Two endpoints, JSON bodies:
//!
//! - `POST /v1/logprob` `{context, continuation, prompt?, eos}` →
//!   `{per_token_logprobs, total}`
//! - `POST /v1/sample` `{context, prompt?, num_samples, max_tokens, temperature, seed}` →
//!   `{samples: [{text, per_token_logprobs, terminated?}]}`
//!
//! `eos` asks the server to include the end-of-sequence log-prob. A sample
//! without `terminated` counts as terminated when it is shorter than
//! `max_tokens`.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use ureq::Agent;

use super::{
    Backend, BackendError, BackendResult, Description, LogProbResult, SampleRequest,
    SampledDescription,
};

/// Environment variable overriding the configured endpoint.
pub const ENDPOINT_ENV: &str = "CCDAE_ENDPOINT";

const BACKOFF_BASE: Duration = Duration::from_millis(100);

#[derive(Debug, Clone, PartialEq)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub timeout: Duration,
    pub max_in_flight: usize,
    /// Total attempts per request, including the first.
    pub attempts: u32,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://127.0.0.1:8080".to_string(),
            timeout: Duration::from_secs(30),
            max_in_flight: 4,
            attempts: 3,
        }
    }
}

#[derive(Serialize)]
struct LogprobRequest<'a> {
    context: &'a str,
    continuation: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    prompt: Option<&'a str>,
    eos: bool,
}

#[derive(Deserialize)]
struct LogprobResponse {
    per_token_logprobs: Vec<f64>,
    total: f64,
}

#[derive(Serialize)]
struct SampleBody<'a> {
    context: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    prompt: Option<&'a str>,
    num_samples: usize,
    max_tokens: usize,
    temperature: f64,
    seed: u64,
}

#[derive(Deserialize)]
struct SampleResponse {
    samples: Vec<RemoteSample>,
}

#[derive(Deserialize)]
struct RemoteSample {
    text: String,
    per_token_logprobs: Vec<f64>,
    #[serde(default)]
    terminated: Option<bool>,
}

pub struct RemoteBackend {
    config: RemoteConfig,
    agent: Agent,
}

impl RemoteBackend {
    /// Builds a client; `CCDAE_ENDPOINT`, when set, replaces the endpoint.
    pub fn new(mut config: RemoteConfig) -> BackendResult<Self> {
        if let Ok(env) = std::env::var(ENDPOINT_ENV) {
            if !env.trim().is_empty() {
                config.endpoint = env.trim().to_string();
            }
        }
        config.endpoint = config.endpoint.trim_end_matches('/').to_string();
        if !(config.endpoint.starts_with("http://") || config.endpoint.starts_with("https://")) {
            return Err(BackendError::InvalidRequest(format!(
                "endpoint '{}' must start with http:// or https://",
                config.endpoint
            )));
        }
        if config.max_in_flight == 0 || config.attempts == 0 {
            return Err(BackendError::InvalidRequest(
                "max_in_flight and attempts must be at least 1".into(),
            ));
        }
        let agent = Agent::new_with_config(
            Agent::config_builder()
                .timeout_global(Some(config.timeout))
                .http_status_as_error(false)
                .build(),
        );
        Ok(Self { config, agent })
    }

    pub fn endpoint(&self) -> &str {
        &self.config.endpoint
    }

    fn post_once<B: Serialize, R: DeserializeOwned>(
        &self,
        url: &str,
        body: &B,
    ) -> BackendResult<R> {
        let transport = |e: ureq::Error| BackendError::Transport {
            endpoint: url.to_string(),
            message: e.to_string(),
        };
        let response = self.agent.post(url).send_json(body).map_err(transport)?;
        let status = response.status().as_u16();
        let mut body = response.into_body();
        if !(200..300).contains(&status) {
            let text = body.read_to_string().unwrap_or_default();
            return Err(BackendError::Status {
                endpoint: url.to_string(),
                status,
                body: text,
            });
        }
        body.read_json().map_err(|e| BackendError::Protocol {
            endpoint: url.to_string(),
            message: e.to_string(),
        })
    }

    fn post<B: Serialize, R: DeserializeOwned>(&self, path: &str, body: &B) -> BackendResult<R> {
        let url = format!("{}{path}", self.config.endpoint);
        let mut attempt = 0;
        loop {
            match self.post_once(&url, body) {
                Err(e) if e.is_retryable() && attempt + 1 < self.config.attempts => {
                    let delay = BACKOFF_BASE * 2u32.pow(attempt);
                    log::warn!("{e}; retrying in {delay:?}");
                    thread::sleep(delay);
                    attempt += 1;
                }
                other => return other,
            }
        }
    }

    fn check_logprobs(&self, per_token: &[f64], total: f64) -> BackendResult<()> {
        let sum: f64 = per_token.iter().sum();
        if per_token.iter().any(|v| v.is_nan()) || (sum - total).abs() > 1e-6 * (1.0 + total.abs())
        {
            return Err(BackendError::Protocol {
                endpoint: self.config.endpoint.clone(),
                message: format!("total {total} does not match per-token sum {sum}"),
            });
        }
        Ok(())
    }
}

impl Backend for RemoteBackend {
    fn id(&self) -> String {
        format!("remote({})", self.config.endpoint)
    }

    fn cond_logprob(
        &self,
        context: &str,
        prompt: Option<&str>,
        d: &Description,
    ) -> BackendResult<LogProbResult> {
        let r: LogprobResponse = self.post(
            "/v1/logprob",
            &LogprobRequest {
                context,
                continuation: &d.text,
                prompt,
                eos: d.terminated,
            },
        )?;
        self.check_logprobs(&r.per_token_logprobs, r.total)?;
        Ok(LogProbResult {
            total: r.total,
            per_token: r.per_token_logprobs,
        })
    }

    fn code_logprob(&self, d: &Description) -> BackendResult<LogProbResult> {
        self.cond_logprob("", None, d)
    }

    fn sample_descriptions(
        &self,
        context: &str,
        request: &SampleRequest,
    ) -> BackendResult<Vec<SampledDescription>> {
        request.validate()?;
        let r: SampleResponse = self.post(
            "/v1/sample",
            &SampleBody {
                context,
                prompt: request.prompt.as_deref(),
                num_samples: request.count,
                max_tokens: request.max_tokens,
                temperature: request.temperature,
                seed: request.seed,
            },
        )?;
        Ok(r.samples
            .into_iter()
            .map(|s| {
                let terminated = s
                    .terminated
                    .unwrap_or(s.per_token_logprobs.len() < request.max_tokens);
                SampledDescription {
                    description: Description::new(s.text, terminated),
                    per_token: s.per_token_logprobs,
                }
            })
            .collect())
    }

    /// Scores with up to `max_in_flight` concurrent requests.
    fn cond_logprob_many(
        &self,
        context: &str,
        prompt: Option<&str>,
        descriptions: &[Description],
    ) -> BackendResult<Vec<LogProbResult>> {
        let next = AtomicUsize::new(0);
        let slots: Mutex<Vec<Option<BackendResult<LogProbResult>>>> =
            Mutex::new((0..descriptions.len()).map(|_| None).collect());
        let workers = self.config.max_in_flight.min(descriptions.len());
        thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= descriptions.len() {
                        break;
                    }
                    let r = self.cond_logprob(context, prompt, &descriptions[i]);
                    slots.lock().expect("no panics while holding the lock")[i] = Some(r);
                });
            }
        });
        slots
            .into_inner()
            .expect("workers joined")
            .into_iter()
            .map(|r| r.expect("every slot filled"))
            .collect()
    }

    fn accepts_references(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_http_endpoints() {
        if std::env::var(ENDPOINT_ENV).is_ok() {
            return;
        }
        let cfg = RemoteConfig {
            endpoint: "localhost:1".into(),
            ..RemoteConfig::default()
        };
        assert!(RemoteBackend::new(cfg).is_err());
    }
}
