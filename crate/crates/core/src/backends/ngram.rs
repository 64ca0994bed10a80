//! Character n-gram language model with additive smoothing.
//!
//! Symbols are the characters observed in the training corpus plus an
//! unknown-character symbol and end-of-sequence. Each nonempty corpus line
//! is one training sequence terminated by end-of-sequence. Prediction backs
//! off to the longest context (at most `order - 1` characters) seen in
//! training and applies add-α smoothing there.
//!
//! For conditional scoring the backend mixes in a cache distribution built
//! from the conditioning prefix itself: when the current suffix also occurs in
//! the prefix, the characters that followed it there get extra mass. A plain
//! `k`-gram only ever sees the last `k - 1` characters of the input; the cache
//! lets the whole input shape its descriptions.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::sampling::{ensemble_log_probs, sample_index};
use super::{
    conditioning_prefix, Backend, BackendError, BackendResult, Description, LogProbResult,
    SampleRequest, SampledDescription,
};
use crate::error::{Error, Result};

pub const DEFAULT_ORDER: usize = 5;
pub const DEFAULT_ALPHA: f64 = 0.01;
/// Upper bound on the cache mixture weight.
pub const DEFAULT_CACHE_WEIGHT: f64 = 0.5;

const MAGIC: &str = "ccdae-ngram v1";
/// Placed between the input and its description in the conditioning prefix.
/// Training lines of the form `input | description` teach the model to
/// describe what precedes it.
pub const SEPARATOR: &str = " | ";
/// Rendering of the unknown-character symbol when sampled.
const UNKNOWN_CHAR: char = '\u{FFFD}';

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ModelFile {
    order: usize,
    alpha: f64,
    vocabulary: Vec<char>,
    /// Context → (symbol, count), symbols ascending.
    counts: BTreeMap<String, Vec<(u32, u64)>>,
}

#[derive(Debug, Clone, PartialEq)]
struct ContextCounts {
    total: u64,
    next: Vec<(u32, u64)>,
}

/// Trained character n-gram model. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct NGramModel {
    file: ModelFile,
    symbol_of: HashMap<char, u32>,
    contexts: HashMap<String, ContextCounts>,
}

/// Trains a model on `corpus`, one sequence per nonempty line.
pub fn train_ngram(corpus: &str, order: usize, alpha: f64) -> Result<NGramModel> {
    if order == 0 {
        return Err(Error::invalid("order must be at least 1"));
    }
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::invalid(format!(
            "smoothing alpha must be positive, got {alpha}"
        )));
    }
    let lines: Vec<Vec<char>> = corpus
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.chars().collect())
        .collect();
    if lines.is_empty() {
        return Err(Error::invalid("corpus is empty"));
    }
    let mut vocabulary: Vec<char> = lines.iter().flatten().copied().collect();
    vocabulary.sort_unstable();
    vocabulary.dedup();
    let symbol_of: HashMap<char, u32> = vocabulary
        .iter()
        .enumerate()
        .map(|(i, c)| (*c, i as u32))
        .collect();
    let eos = vocabulary.len() as u32 + 1;

    let mut counts: BTreeMap<String, BTreeMap<u32, u64>> = BTreeMap::new();
    for line in &lines {
        for t in 0..=line.len() {
            let symbol = if t == line.len() {
                eos
            } else {
                symbol_of[&line[t]]
            };
            for k in 0..order.min(t + 1) {
                let context: String = line[t - k..t].iter().collect();
                *counts
                    .entry(context)
                    .or_default()
                    .entry(symbol)
                    .or_default() += 1;
            }
        }
    }
    let counts = counts
        .into_iter()
        .map(|(ctx, next)| (ctx, next.into_iter().collect()))
        .collect();
    NGramModel::from_file(ModelFile {
        order,
        alpha,
        vocabulary,
        counts,
    })
    .map_err(|e| Error::invalid(e.to_string()))
}

impl NGramModel {
    fn from_file(file: ModelFile) -> BackendResult<Self> {
        if file.order == 0 || !(file.alpha.is_finite() && file.alpha > 0.0) {
            return Err(BackendError::Model(
                "order must be >= 1 and alpha positive".into(),
            ));
        }
        if !file.vocabulary.windows(2).all(|w| w[0] < w[1]) {
            return Err(BackendError::Model(
                "vocabulary must be sorted and unique".into(),
            ));
        }
        if !file.counts.contains_key("") {
            return Err(BackendError::Model("missing empty-context counts".into()));
        }
        let size = file.vocabulary.len() as u32 + 2;
        let symbol_of: HashMap<char, u32> = file
            .vocabulary
            .iter()
            .enumerate()
            .map(|(i, c)| (*c, i as u32))
            .collect();
        let mut contexts = HashMap::with_capacity(file.counts.len());
        for (ctx, next) in &file.counts {
            if ctx.chars().count() >= file.order {
                return Err(BackendError::Model(format!(
                    "context '{ctx}' not shorter than order"
                )));
            }
            if next.iter().any(|(s, _)| *s >= size) {
                return Err(BackendError::Model(format!(
                    "symbol out of range in context '{ctx}'"
                )));
            }
            let total = next.iter().map(|(_, c)| c).sum();
            contexts.insert(
                ctx.clone(),
                ContextCounts {
                    total,
                    next: next.clone(),
                },
            );
        }
        Ok(Self {
            file,
            symbol_of,
            contexts,
        })
    }

    pub fn order(&self) -> usize {
        self.file.order
    }

    pub fn alpha(&self) -> f64 {
        self.file.alpha
    }

    /// Observed characters; symbol `i` is `vocabulary()[i]`, followed by the
    /// unknown symbol and end-of-sequence.
    pub fn vocabulary(&self) -> &[char] {
        &self.file.vocabulary
    }

    /// Number of symbols including unknown and end-of-sequence.
    pub fn symbol_count(&self) -> usize {
        self.file.vocabulary.len() + 2
    }

    fn unknown(&self) -> u32 {
        self.file.vocabulary.len() as u32
    }

    fn eos(&self) -> u32 {
        self.file.vocabulary.len() as u32 + 1
    }

    fn symbol(&self, c: char) -> u32 {
        self.symbol_of
            .get(&c)
            .copied()
            .unwrap_or_else(|| self.unknown())
    }

    /// Symbol index for a character, `None` meaning end-of-sequence.
    pub fn symbol_index(&self, c: Option<char>) -> usize {
        match c {
            Some(c) => self.symbol(c) as usize,
            None => self.eos() as usize,
        }
    }

    /// Next-symbol probabilities after `history`.
    pub fn next_probabilities(&self, history: &str) -> Vec<f64> {
        let chars: Vec<char> = history.chars().collect();
        self.base_distribution(&chars)
    }

    fn base_distribution(&self, history: &[char]) -> Vec<f64> {
        let size = self.symbol_count();
        let longest = (self.file.order - 1).min(history.len());
        let counts = (0..=longest)
            .rev()
            .find_map(|k| {
                let key: String = history[history.len() - k..].iter().collect();
                self.contexts.get(&key)
            })
            .expect("empty context always present");
        let alpha = self.file.alpha;
        let denom = counts.total as f64 + alpha * size as f64;
        let mut p = vec![alpha / denom; size];
        for (s, c) in &counts.next {
            p[*s as usize] = (*c as f64 + alpha) / denom;
        }
        p
    }

    pub fn load(path: impl AsRef<Path>) -> BackendResult<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| BackendError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_text(&text)
    }

    pub fn from_text(text: &str) -> BackendResult<Self> {
        let (header, body) = text
            .split_once('\n')
            .ok_or_else(|| BackendError::Model("truncated model file".into()))?;
        if header.trim_end() != MAGIC {
            return Err(BackendError::Model(format!(
                "bad header '{header}', expected '{MAGIC}'"
            )));
        }
        let file: ModelFile =
            serde_json::from_str(body).map_err(|e| BackendError::Model(e.to_string()))?;
        Self::from_file(file)
    }

    /// Serialized form: magic line followed by a JSON body.
    pub fn to_text(&self) -> String {
        let body = serde_json::to_string(&self.file).expect("model serializes");
        format!("{MAGIC}\n{body}\n")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

/// Continuation counts of every substring of the conditioning prefix.
struct Cache {
    contexts: HashMap<String, (u64, HashMap<u32, u64>)>,
}

impl Cache {
    fn new(model: &NGramModel, prefix: &[char]) -> Self {
        let mut contexts: HashMap<String, (u64, HashMap<u32, u64>)> = HashMap::new();
        for t in 1..prefix.len() {
            let next = model.symbol(prefix[t]);
            for k in 1..model.order().min(t + 1) {
                let key: String = prefix[t - k..t].iter().collect();
                let entry = contexts.entry(key).or_default();
                entry.0 += 1;
                *entry.1.entry(next).or_default() += 1;
            }
        }
        Self { contexts }
    }

    /// Longest matching suffix: its continuation counts and their total.
    fn lookup(&self, history: &[char], order: usize) -> Option<&(u64, HashMap<u32, u64>)> {
        let longest = (order - 1).min(history.len());
        (1..=longest).rev().find_map(|k| {
            let key: String = history[history.len() - k..].iter().collect();
            self.contexts.get(&key)
        })
    }
}

/// Backend over a trained [`NGramModel`].
#[derive(Debug, Clone)]
pub struct NGramBackend {
    model: NGramModel,
    cache_weight: f64,
}

impl NGramBackend {
    pub fn new(model: NGramModel, cache_weight: f64) -> BackendResult<Self> {
        if !(0.0..1.0).contains(&cache_weight) {
            return Err(BackendError::InvalidRequest(format!(
                "cache weight must lie in [0, 1), got {cache_weight}"
            )));
        }
        Ok(Self {
            model,
            cache_weight,
        })
    }

    pub fn model(&self) -> &NGramModel {
        &self.model
    }

    fn cache_for(&self, prefix: &[char]) -> Option<Cache> {
        (self.cache_weight > 0.0 && prefix.len() > 1).then(|| Cache::new(&self.model, prefix))
    }

    fn log_distribution(&self, history: &[char], cache: Option<&Cache>) -> Vec<f64> {
        let mut p = self.model.base_distribution(history);
        if let Some((n, next)) = cache.and_then(|c| c.lookup(history, self.model.order())) {
            let n = *n as f64;
            let mu = self.cache_weight * n / (n + 1.0);
            for v in p.iter_mut() {
                *v *= 1.0 - mu;
            }
            for (s, c) in next {
                p[*s as usize] += mu * *c as f64 / n;
            }
        }
        p.into_iter().map(f64::ln).collect()
    }

    fn score(
        &self,
        prefix: Vec<char>,
        description: &Description,
        use_cache: bool,
    ) -> BackendResult<LogProbResult> {
        if description.is_empty() {
            return Err(BackendError::InvalidRequest("description is empty".into()));
        }
        let cache = if use_cache {
            self.cache_for(&prefix)
        } else {
            None
        };
        let mut history = prefix;
        let mut per_token = Vec::with_capacity(description.text.len() + 1);
        for c in description.text.chars() {
            let lp = self.log_distribution(&history, cache.as_ref());
            per_token.push(lp[self.model.symbol(c) as usize]);
            history.push(c);
        }
        if description.terminated {
            let lp = self.log_distribution(&history, cache.as_ref());
            per_token.push(lp[self.model.eos() as usize]);
        }
        Ok(LogProbResult::from_tokens(per_token))
    }

    fn render(&self, symbol: usize) -> Option<char> {
        let vocab = self.model.vocabulary();
        match symbol.cmp(&vocab.len()) {
            std::cmp::Ordering::Less => Some(vocab[symbol]),
            std::cmp::Ordering::Equal => Some(UNKNOWN_CHAR),
            std::cmp::Ordering::Greater => None,
        }
    }
}

impl Backend for NGramBackend {
    fn id(&self) -> String {
        format!(
            "ngram(order={},alpha={},cache={})",
            self.model.order(),
            self.model.alpha(),
            self.cache_weight
        )
    }

    fn cond_logprob(
        &self,
        context: &str,
        prompt: Option<&str>,
        description: &Description,
    ) -> BackendResult<LogProbResult> {
        let prefix = conditioning_prefix(prompt, context, SEPARATOR)
            .chars()
            .collect();
        self.score(prefix, description, true)
    }

    fn code_logprob(&self, description: &Description) -> BackendResult<LogProbResult> {
        self.score(Vec::new(), description, false)
    }

    fn sample_descriptions(
        &self,
        context: &str,
        request: &SampleRequest,
    ) -> BackendResult<Vec<SampledDescription>> {
        request.validate()?;
        let prefix: Vec<char> = conditioning_prefix(request.prompt.as_deref(), context, SEPARATOR)
            .chars()
            .collect();
        let cache = self.cache_for(&prefix);
        let mut rng = ChaCha8Rng::seed_from_u64(request.seed);
        let mut out = Vec::with_capacity(request.count);
        for _ in 0..request.count {
            let mut history = prefix.clone();
            let mut text = String::new();
            let mut per_token = Vec::with_capacity(request.max_tokens);
            let mut terminated = false;
            while per_token.len() < request.max_tokens {
                let lp = self.log_distribution(&history, cache.as_ref());
                let s = sample_index(&lp, request.temperature, &mut rng);
                per_token.push(lp[s]);
                match self.render(s) {
                    Some(c) => {
                        text.push(c);
                        history.push(c);
                    }
                    None => {
                        terminated = true;
                        break;
                    }
                }
            }
            out.push(SampledDescription {
                description: Description::new(text, terminated),
                per_token,
            });
        }
        Ok(out)
    }

    fn ensemble_sample(
        &self,
        a: &str,
        b: &str,
        request: &SampleRequest,
    ) -> BackendResult<Vec<Description>> {
        request.validate()?;
        let prompt = request.prompt.as_deref();
        let prefix_a: Vec<char> = conditioning_prefix(prompt, a, SEPARATOR).chars().collect();
        let prefix_b: Vec<char> = conditioning_prefix(prompt, b, SEPARATOR).chars().collect();
        let (cache_a, cache_b) = (self.cache_for(&prefix_a), self.cache_for(&prefix_b));
        let mut rng = ChaCha8Rng::seed_from_u64(request.seed);
        let mut out = Vec::with_capacity(request.count);
        for _ in 0..request.count {
            let (mut ha, mut hb) = (prefix_a.clone(), prefix_b.clone());
            let mut text = String::new();
            let mut terminated = false;
            for _ in 0..request.max_tokens {
                let lp = ensemble_log_probs(
                    &self.log_distribution(&ha, cache_a.as_ref()),
                    &self.log_distribution(&hb, cache_b.as_ref()),
                );
                match self.render(sample_index(&lp, request.temperature, &mut rng)) {
                    Some(c) => {
                        text.push(c);
                        ha.push(c);
                        hb.push(c);
                    }
                    None => {
                        terminated = true;
                        break;
                    }
                }
            }
            out.push(Description::new(text, terminated));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn abab() -> NGramModel {
        train_ngram("ababababab", 2, 0.01).unwrap()
    }

    #[test]
    fn bigram_follows_pattern() {
        let m = abab();
        let p = m.next_probabilities("a");
        assert!(p[m.symbol_index(Some('b'))] >= 0.9);
    }

    #[test]
    fn unigram_on_repeated_symbol() {
        let m = train_ngram(&"a".repeat(30), 1, 0.01).unwrap();
        let p = m.next_probabilities("");
        assert!(p[m.symbol_index(Some('a'))] >= 0.9);
    }

    #[test]
    fn distributions_normalize() {
        let m = train_ngram("the cat sat\non the mat\n", 3, 0.01).unwrap();
        for h in ["", "t", "th", "the", "zz", "mat", "\u{1F600}"] {
            let total: f64 = m.next_probabilities(h).iter().sum();
            assert!((total - 1.0).abs() < 1e-9, "{h}: {total}");
        }
    }

    #[test]
    fn cache_mixture_normalizes() {
        let m = train_ngram("the cat sat\non the mat\n", 3, 0.01).unwrap();
        let b = NGramBackend::new(m, 0.5).unwrap();
        let prefix: Vec<char> = "a cat on a mat".chars().collect();
        let cache = b.cache_for(&prefix);
        for h in ["a ca", "zz", "at", ""] {
            let mut hist = prefix.clone();
            hist.extend(h.chars());
            let total: f64 = b
                .log_distribution(&hist, cache.as_ref())
                .iter()
                .map(|l| l.exp())
                .sum();
            assert!((total - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn empty_corpus_rejected() {
        assert!(train_ngram("\n  \n", 3, 0.01).is_err());
        assert!(train_ngram("ab", 0, 0.01).is_err());
    }

    #[test]
    fn text_round_trip_is_exact() {
        let m = train_ngram("hello world\nhold the door\n", 4, 0.037).unwrap();
        let back = NGramModel::from_text(&m.to_text()).unwrap();
        assert_eq!(back, m);
        assert!(NGramModel::from_text("bogus\n{}").is_err());
    }

    #[test]
    fn truncated_descriptions_have_no_eos_term() {
        let b = NGramBackend::new(abab(), 0.0).unwrap();
        let open = b.code_logprob(&Description::new("ab", false)).unwrap();
        let closed = b.code_logprob(&Description::new("ab", true)).unwrap();
        assert_eq!(open.per_token.len(), 2);
        assert_eq!(closed.per_token.len(), 3);
        assert!(closed.total < open.total);
    }
}
