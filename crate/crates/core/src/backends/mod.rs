//! Description-scoring models behind one contract.
//!
//! A backend provides the conditional encoder `p(h|x)`, an unconditional code
//! model `p_code(h)`, and sampling from `p(h|x)`. Three kinds exist: a
//! character n-gram model trained locally, a remote HTTP server, and a fixture
//! table of precomputed log-probabilities.

mod ngram;
mod remote;
mod sampling;
mod table;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ngram::{
    train_ngram, NGramBackend, NGramModel, DEFAULT_ALPHA, DEFAULT_CACHE_WEIGHT, DEFAULT_ORDER,
    SEPARATOR,
};
pub use remote::{RemoteBackend, RemoteConfig, ENDPOINT_ENV};
pub use table::{TableBackend, TableFixture};

/// Token id reserved for end-of-sequence in hypothesis token lists.
pub const EOS_TOKEN: u32 = u32::MAX;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("request to {endpoint} failed: {message}")]
    Transport { endpoint: String, message: String },

    #[error("{endpoint} returned HTTP {status}: {body}")]
    Status {
        endpoint: String,
        status: u16,
        body: String,
    },

    #[error("malformed response from {endpoint}: {message}")]
    Protocol { endpoint: String, message: String },

    #[error("{0} is not supported by this backend")]
    Unsupported(&'static str),

    #[error("unknown context '{0}'")]
    UnknownContext(String),

    #[error("invalid model: {0}")]
    Model(String),

    #[error("invalid request: {0}")]
    InvalidRequest(String),

    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl BackendError {
    /// Whether retrying the same request may succeed.
    pub fn is_retryable(&self) -> bool {
        match self {
            BackendError::Transport { .. } => true,
            BackendError::Status { status, .. } => *status >= 500,
            _ => false,
        }
    }
}

pub type BackendResult<T> = std::result::Result<T, BackendError>;

/// A description: rendered text plus whether it ended with an explicit
/// end-of-sequence (as opposed to truncation at the token limit).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Description {
    pub text: String,
    pub terminated: bool,
}

impl Description {
    pub fn new(text: impl Into<String>, terminated: bool) -> Self {
        Self {
            text: text.into(),
            terminated,
        }
    }

    /// A complete description, scored including its end-of-sequence term.
    pub fn complete(text: impl Into<String>) -> Self {
        Self::new(text, true)
    }

    /// Character code points, followed by [`EOS_TOKEN`] when terminated.
    pub fn tokens(&self) -> Vec<u32> {
        let mut t: Vec<u32> = self.text.chars().map(u32::from).collect();
        if self.terminated {
            t.push(EOS_TOKEN);
        }
        t
    }

    pub fn is_empty(&self) -> bool {
        self.text.is_empty() && !self.terminated
    }
}

/// Total and per-token log-probabilities in nats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogProbResult {
    pub total: f64,
    pub per_token: Vec<f64>,
}

impl LogProbResult {
    pub fn from_tokens(per_token: Vec<f64>) -> Self {
        Self {
            total: per_token.iter().sum(),
            per_token,
        }
    }
}

/// Parameters of one sampling call.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRequest {
    pub count: usize,
    pub max_tokens: usize,
    pub temperature: f64,
    pub seed: u64,
    pub prompt: Option<String>,
}

impl SampleRequest {
    pub fn validate(&self) -> BackendResult<()> {
        if self.count == 0 {
            return Err(BackendError::InvalidRequest(
                "count must be at least 1".into(),
            ));
        }
        if self.max_tokens == 0 {
            return Err(BackendError::InvalidRequest(
                "max_tokens must be at least 1".into(),
            ));
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(BackendError::InvalidRequest(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        Ok(())
    }
}

/// A sampled description with per-token log-probs under the untempered model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledDescription {
    pub description: Description,
    pub per_token: Vec<f64>,
}

/// The scoring contract shared by all backends. Implementations are
/// immutable after construction and safe to share across threads.
pub trait Backend: Send + Sync {
    /// Stable identifier recorded in reports.
    fn id(&self) -> String;

    /// `log p(h | prompt, context)`.
    fn cond_logprob(
        &self,
        context: &str,
        prompt: Option<&str>,
        description: &Description,
    ) -> BackendResult<LogProbResult>;

    /// Unconditional `log p_code(h)`.
    fn code_logprob(&self, description: &Description) -> BackendResult<LogProbResult>;

    fn sample_descriptions(
        &self,
        context: &str,
        request: &SampleRequest,
    ) -> BackendResult<Vec<SampledDescription>>;

    /// Samples from the token-level ensemble `½ log p(·|a) + ½ log p(·|b)`.
    fn ensemble_sample(
        &self,
        _context_a: &str,
        _context_b: &str,
        _request: &SampleRequest,
    ) -> BackendResult<Vec<Description>> {
        Err(BackendError::Unsupported("ensemble sampling"))
    }

    /// Scores many descriptions against one context, in input order.
    fn cond_logprob_many(
        &self,
        context: &str,
        prompt: Option<&str>,
        descriptions: &[Description],
    ) -> BackendResult<Vec<LogProbResult>> {
        descriptions
            .iter()
            .map(|d| self.cond_logprob(context, prompt, d))
            .collect()
    }

    /// Generative reconstruction loss `-log p(x|h)`; by default the
    /// description is the conditioning context and `x` the continuation.
    fn reconstruction_loss(&self, x: &str, h: &Description) -> BackendResult<f64> {
        Ok(-self
            .cond_logprob(&h.text, None, &Description::complete(x))?
            .total)
    }

    /// Whether contexts may be opaque item references instead of text.
    fn accepts_references(&self) -> bool {
        false
    }
}

/// Wraps a backend so calls without an explicit prompt use a default one.
struct Prompted {
    inner: Box<dyn Backend>,
    prompt: String,
}

impl Prompted {
    fn pick<'a>(&'a self, prompt: Option<&'a str>) -> Option<&'a str> {
        prompt.or(Some(self.prompt.as_str()))
    }
}

impl Backend for Prompted {
    fn id(&self) -> String {
        self.inner.id()
    }

    fn cond_logprob(
        &self,
        context: &str,
        prompt: Option<&str>,
        d: &Description,
    ) -> BackendResult<LogProbResult> {
        self.inner.cond_logprob(context, self.pick(prompt), d)
    }

    fn code_logprob(&self, d: &Description) -> BackendResult<LogProbResult> {
        self.inner.code_logprob(d)
    }

    fn sample_descriptions(
        &self,
        context: &str,
        request: &SampleRequest,
    ) -> BackendResult<Vec<SampledDescription>> {
        let mut request = request.clone();
        request.prompt.get_or_insert_with(|| self.prompt.clone());
        self.inner.sample_descriptions(context, &request)
    }

    fn ensemble_sample(
        &self,
        a: &str,
        b: &str,
        request: &SampleRequest,
    ) -> BackendResult<Vec<Description>> {
        let mut request = request.clone();
        request.prompt.get_or_insert_with(|| self.prompt.clone());
        self.inner.ensemble_sample(a, b, &request)
    }

    fn cond_logprob_many(
        &self,
        context: &str,
        prompt: Option<&str>,
        ds: &[Description],
    ) -> BackendResult<Vec<LogProbResult>> {
        self.inner.cond_logprob_many(context, self.pick(prompt), ds)
    }

    fn reconstruction_loss(&self, x: &str, h: &Description) -> BackendResult<f64> {
        self.inner.reconstruction_loss(x, h)
    }

    fn accepts_references(&self) -> bool {
        self.inner.accepts_references()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Ngram,
    Remote,
    Table,
}

impl FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ngram" => Ok(BackendKind::Ngram),
            "remote" => Ok(BackendKind::Remote),
            "table" => Ok(BackendKind::Table),
            other => Err(format!(
                "unknown backend '{other}', expected ngram, remote or table"
            )),
        }
    }
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BackendKind::Ngram => "ngram",
            BackendKind::Remote => "remote",
            BackendKind::Table => "table",
        })
    }
}

/// Kind-specific backend configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BackendParameters {
    Ngram {
        model: PathBuf,
        cache_weight: f64,
    },
    Remote {
        endpoint: String,
        timeout_secs: f64,
        max_in_flight: usize,
        attempts: u32,
    },
    Table {
        fixture: PathBuf,
    },
}

/// Everything needed to construct a backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendDescriptor {
    pub parameters: BackendParameters,
    /// Instruction prepended to every conditioning context.
    pub prompt: Option<String>,
}

impl BackendDescriptor {
    pub fn ngram(model: impl Into<PathBuf>) -> Self {
        Self {
            parameters: BackendParameters::Ngram {
                model: model.into(),
                cache_weight: DEFAULT_CACHE_WEIGHT,
            },
            prompt: None,
        }
    }

    pub fn remote(endpoint: impl Into<String>) -> Self {
        let defaults = RemoteConfig::default();
        Self {
            parameters: BackendParameters::Remote {
                endpoint: endpoint.into(),
                timeout_secs: defaults.timeout.as_secs_f64(),
                max_in_flight: defaults.max_in_flight,
                attempts: defaults.attempts,
            },
            prompt: None,
        }
    }

    pub fn table(fixture: impl Into<PathBuf>) -> Self {
        Self {
            parameters: BackendParameters::Table {
                fixture: fixture.into(),
            },
            prompt: None,
        }
    }

    pub fn with_prompt(mut self, prompt: Option<String>) -> Self {
        self.prompt = prompt;
        self
    }

    pub fn kind(&self) -> BackendKind {
        match self.parameters {
            BackendParameters::Ngram { .. } => BackendKind::Ngram,
            BackendParameters::Remote { .. } => BackendKind::Remote,
            BackendParameters::Table { .. } => BackendKind::Table,
        }
    }

    /// Validates the parameters and constructs the backend.
    pub fn build(&self) -> BackendResult<Box<dyn Backend>> {
        let inner: Box<dyn Backend> = match &self.parameters {
            BackendParameters::Ngram {
                model,
                cache_weight,
            } => Box::new(NGramBackend::new(NGramModel::load(model)?, *cache_weight)?),
            BackendParameters::Remote {
                endpoint,
                timeout_secs,
                max_in_flight,
                attempts,
            } => {
                if !(timeout_secs.is_finite() && *timeout_secs > 0.0) {
                    return Err(BackendError::InvalidRequest(
                        "timeout must be positive".into(),
                    ));
                }
                Box::new(RemoteBackend::new(RemoteConfig {
                    endpoint: endpoint.clone(),
                    timeout: Duration::from_secs_f64(*timeout_secs),
                    max_in_flight: *max_in_flight,
                    attempts: *attempts,
                })?)
            }
            BackendParameters::Table { fixture } => Box::new(TableBackend::load(fixture)?),
        };
        Ok(match &self.prompt {
            Some(p) => Box::new(Prompted {
                inner,
                prompt: p.clone(),
            }),
            None => inner,
        })
    }
}

/// Conditioning prefix: the prompt (if any) and a newline before the context.
pub(crate) fn conditioning_prefix(prompt: Option<&str>, context: &str, separator: &str) -> String {
    match prompt {
        Some(p) => format!("{p}\n{context}{separator}"),
        None => format!("{context}{separator}"),
    }
}
