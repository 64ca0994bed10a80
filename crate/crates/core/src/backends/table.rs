//! Fixture backend returning precomputed log-probabilities.
//!
//! ```json
//! {
//!   "conditional":   { "<context>": { "<description>": -1.2, ... }, ... },
//!   "unconditional": { "<description>": -3.4, ... },
//!   "decoder":       { "<description>": { "<item>": -5.0, ... }, ... }
//! }
//! ```
//!
//! Each description is a single scoring unit. A description missing from a
//! known context has probability zero.

use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::sampling::{ensemble_log_probs, sample_index};
use super::{
    Backend, BackendError, BackendResult, Description, LogProbResult, SampleRequest,
    SampledDescription,
};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TableFixture {
    #[serde(default)]
    pub id: Option<String>,
    pub conditional: BTreeMap<String, BTreeMap<String, f64>>,
    #[serde(default)]
    pub unconditional: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decoder: Option<BTreeMap<String, BTreeMap<String, f64>>>,
}

#[derive(Debug, Clone)]
pub struct TableBackend {
    fixture: TableFixture,
}

impl TableBackend {
    pub fn new(fixture: TableFixture) -> BackendResult<Self> {
        let all = fixture
            .conditional
            .values()
            .flat_map(|m| m.values())
            .chain(fixture.unconditional.values())
            .chain(
                fixture
                    .decoder
                    .iter()
                    .flat_map(|d| d.values().flat_map(|m| m.values())),
            );
        for v in all {
            if v.is_nan() || *v > 0.0 {
                return Err(BackendError::Model(format!(
                    "log-probability {v} is not in [-inf, 0]"
                )));
            }
        }
        if fixture.conditional.values().any(|m| m.is_empty()) {
            return Err(BackendError::Model("a context has no descriptions".into()));
        }
        Ok(Self { fixture })
    }

    pub fn load(path: impl AsRef<Path>) -> BackendResult<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| BackendError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let fixture =
            serde_json::from_str(&text).map_err(|e| BackendError::Model(e.to_string()))?;
        Self::new(fixture)
    }

    pub fn fixture(&self) -> &TableFixture {
        &self.fixture
    }

    fn context(&self, context: &str) -> BackendResult<&BTreeMap<String, f64>> {
        self.fixture
            .conditional
            .get(context)
            .ok_or_else(|| BackendError::UnknownContext(context.to_string()))
    }
}

fn single(lp: f64) -> LogProbResult {
    LogProbResult {
        total: lp,
        per_token: vec![lp],
    }
}

impl Backend for TableBackend {
    fn id(&self) -> String {
        match &self.fixture.id {
            Some(id) => format!("table({id})"),
            None => "table".to_string(),
        }
    }

    fn cond_logprob(
        &self,
        context: &str,
        _prompt: Option<&str>,
        d: &Description,
    ) -> BackendResult<LogProbResult> {
        let table = self.context(context)?;
        Ok(single(
            table.get(&d.text).copied().unwrap_or(f64::NEG_INFINITY),
        ))
    }

    fn code_logprob(&self, d: &Description) -> BackendResult<LogProbResult> {
        Ok(single(
            self.fixture
                .unconditional
                .get(&d.text)
                .copied()
                .unwrap_or(f64::NEG_INFINITY),
        ))
    }

    fn sample_descriptions(
        &self,
        context: &str,
        request: &SampleRequest,
    ) -> BackendResult<Vec<SampledDescription>> {
        request.validate()?;
        let table = self.context(context)?;
        let (texts, lps): (Vec<&String>, Vec<f64>) = table.iter().map(|(k, v)| (k, *v)).unzip();
        if lps.iter().all(|l| *l == f64::NEG_INFINITY) {
            return Err(BackendError::Model(format!(
                "context '{context}' has no probability mass"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(request.seed);
        Ok((0..request.count)
            .map(|_| {
                let i = sample_index(&lps, request.temperature, &mut rng);
                SampledDescription {
                    description: Description::complete(texts[i].clone()),
                    per_token: vec![lps[i]],
                }
            })
            .collect())
    }

    fn ensemble_sample(
        &self,
        a: &str,
        b: &str,
        request: &SampleRequest,
    ) -> BackendResult<Vec<Description>> {
        request.validate()?;
        let (ta, tb) = (self.context(a)?, self.context(b)?);
        let mut texts: Vec<&String> = ta.keys().chain(tb.keys()).collect();
        texts.sort();
        texts.dedup();
        let lookup =
            |t: &BTreeMap<String, f64>, k: &String| t.get(k).copied().unwrap_or(f64::NEG_INFINITY);
        let la: Vec<f64> = texts.iter().map(|k| lookup(ta, k)).collect();
        let lb: Vec<f64> = texts.iter().map(|k| lookup(tb, k)).collect();
        let lp = ensemble_log_probs(&la, &lb);
        if lp.iter().any(|v| v.is_nan()) {
            return Err(BackendError::Model(format!(
                "contexts '{a}' and '{b}' share no support"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(request.seed);
        Ok((0..request.count)
            .map(|_| {
                Description::complete(
                    texts[sample_index(&lp, request.temperature, &mut rng)].clone(),
                )
            })
            .collect())
    }

    fn reconstruction_loss(&self, x: &str, h: &Description) -> BackendResult<f64> {
        let decoder = self
            .fixture
            .decoder
            .as_ref()
            .ok_or(BackendError::Unsupported(
                "generative loss without a decoder table",
            ))?;
        let lp = decoder
            .get(&h.text)
            .and_then(|m| m.get(x))
            .copied()
            .unwrap_or(f64::NEG_INFINITY);
        Ok(-lp)
    }

    fn accepts_references(&self) -> bool {
        true
    }
}
