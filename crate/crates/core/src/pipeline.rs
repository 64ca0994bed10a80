//! End-to-end pair comparison.
//!
//! Descriptions are drawn from each item's conditional `p(h|x_i)`, pooled,
//! and scored under both items. The pooled draws come from the proposal
//! `π(h) = ½ p(h|x₁) + ½ p(h|x₂)`. In encoder-only mode the reconstruction
//! loss is `ℓ̄(x_i|h) = log π(h) - log p(h|x_i)`, which needs no decoder and
//! no data likelihood.
//!
//! Inputs are put in a canonical order (by content hash) before sampling, so
//! `compare(a, b)` and `compare(b, a)` see the same pooled hypotheses and
//! produce bit-identical distances.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backends::{Backend, Description, SampleRequest};
use crate::distance::{
    distance_curve, gibbs_weights, DistanceCurve, Hypothesis, LambdaGrid, LossMode, Sample,
    ScoredBatch, CAPACITY_CLAMP, DEFAULT_CAPACITY_POINTS,
};
use crate::error::{Error, Result};
use crate::numeric::{effective_sample_size, log_mean_exp2};
use crate::units::{fmt_fixed, Units};

/// Importance-sampling health threshold on the effective sample size.
pub const ESS_WARNING: f64 = 5.0;

/// Source of `log p_code(h)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PcodeMode {
    /// `p_code = π`, the proposal mixture.
    #[default]
    ProposalMix,
    /// The backend's unconditional language model.
    LmCode,
}

impl FromStr for PcodeMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "proposal" | "proposal_mix" => Ok(PcodeMode::ProposalMix),
            "lm" | "lm_code" => Ok(PcodeMode::LmCode),
            other => Err(format!(
                "unknown p_code mode '{other}', expected proposal or lm"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareConfig {
    pub samples_per_input: usize,
    pub max_tokens: usize,
    pub temperature: f64,
    pub seed: u64,
    pub pcode_mode: PcodeMode,
    pub loss_mode: LossMode,
    pub lambda_grid: LambdaGrid,
    /// Upper capacity limit in nats; `None` picks the smaller traced range.
    pub c_max: Option<f64>,
    pub capacity_points: usize,
    pub prompt: Option<String>,
    /// λ at which explanations are ranked.
    pub explain_lambda: f64,
    /// Length of each ranked explanation list.
    pub explain_top: usize,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            samples_per_input: 20,
            max_tokens: 20,
            temperature: 1.0,
            seed: 0,
            pcode_mode: PcodeMode::default(),
            loss_mode: LossMode::default(),
            lambda_grid: LambdaGrid::default(),
            c_max: None,
            capacity_points: DEFAULT_CAPACITY_POINTS,
            prompt: None,
            explain_lambda: 1.0,
            explain_top: 10,
        }
    }
}

impl CompareConfig {
    /// Defaults for binary-choice benchmarks: 10 draws of at most 10 tokens.
    pub fn choice_defaults() -> Self {
        Self {
            samples_per_input: 10,
            max_tokens: 10,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples_per_input == 0 || self.max_tokens == 0 {
            return Err(Error::invalid(
                "samples per input and max tokens must be at least 1",
            ));
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(Error::invalid(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        if !(self.explain_lambda.is_finite() && self.explain_lambda >= 0.0) {
            return Err(Error::invalid(
                "explain lambda must be finite and nonnegative",
            ));
        }
        Ok(())
    }

    fn request(&self, seed: u64) -> SampleRequest {
        SampleRequest {
            count: self.samples_per_input,
            max_tokens: self.max_tokens,
            temperature: self.temperature,
            seed,
            prompt: self.prompt.clone(),
        }
    }
}

/// The two inputs in canonical order with their sampling seeds.
fn canonical_order<'a>(x1: &'a str, x2: &'a str, seed: u64) -> [(&'a str, u64); 2] {
    let key = |x: &str| Sha256::digest(x.as_bytes()).to_vec();
    let (a, b) = if (key(x1), x1) <= (key(x2), x2) {
        (x1, x2)
    } else {
        (x2, x1)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    [(a, rng.gen()), (b, rng.gen())]
}

/// Pooled draws from both conditionals, deduplicated in first-draw order.
pub fn draw_descriptions(
    x1: &str,
    x2: &str,
    backend: &dyn Backend,
    config: &CompareConfig,
) -> Result<Vec<(Description, u32)>> {
    config.validate()?;
    let mut index: HashMap<Description, usize> = HashMap::new();
    let mut pooled: Vec<(Description, u32)> = Vec::new();
    for (x, seed) in canonical_order(x1, x2, config.seed) {
        for s in backend.sample_descriptions(x, &config.request(seed))? {
            match index.get(&s.description) {
                Some(&i) => pooled[i].1 += 1,
                None => {
                    index.insert(s.description.clone(), pooled.len());
                    pooled.push((s.description, 1));
                }
            }
        }
    }
    Ok(pooled)
}

/// Scores `descriptions` under both inputs and assembles the batch.
pub fn score_batch(
    x1: &str,
    x2: &str,
    descriptions: &[(Description, u32)],
    backend: &dyn Backend,
    config: &CompareConfig,
) -> Result<ScoredBatch> {
    let descs: Vec<Description> = descriptions.iter().map(|(d, _)| d.clone()).collect();
    let prompt = config.prompt.as_deref();
    let lp1 = backend.cond_logprob_many(x1, prompt, &descs)?;
    let lp2 = backend.cond_logprob_many(x2, prompt, &descs)?;
    let mut hyps = Vec::with_capacity(descs.len());
    let mut loss1 = Vec::with_capacity(descs.len());
    let mut loss2 = Vec::with_capacity(descs.len());
    for (j, (d, m)) in descriptions.iter().enumerate() {
        let (a, b) = (lp1[j].total, lp2[j].total);
        let log_pi = log_mean_exp2(a, b);
        let log_pcode = match config.pcode_mode {
            PcodeMode::ProposalMix => log_pi,
            PcodeMode::LmCode => backend.code_logprob(d)?.total,
        };
        let (l1, l2) = match config.loss_mode {
            LossMode::EncoderOnly => (log_pi - a, log_pi - b),
            LossMode::Generative => (
                backend.reconstruction_loss(x1, d)?,
                backend.reconstruction_loss(x2, d)?,
            ),
        };
        hyps.push(
            Hypothesis::with_tokens(d.tokens(), d.text.clone(), log_pcode, log_pi).multiplicity(*m),
        );
        loss1.push(l1);
        loss2.push(l2);
    }
    ScoredBatch::new(hyps, [loss1, loss2], config.loss_mode)
}

/// Samples from the proposal mixture and scores every pooled description.
pub fn build_batch(
    x1: &str,
    x2: &str,
    backend: &dyn Backend,
    config: &CompareConfig,
) -> Result<ScoredBatch> {
    let pooled = draw_descriptions(x1, x2, backend, config)?;
    score_batch(x1, x2, &pooled, backend, config)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedDescription {
    pub text: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub lambda: f64,
    /// Ranked by the mixture weight `q_∩ = ½ q₁ + ½ q₂`.
    pub shared: Vec<RankedDescription>,
    /// Per sample, ranked by `q_i - q_∩`.
    pub distinctive: [Vec<RankedDescription>; 2],
}

fn render_text(h: &Hypothesis) -> String {
    if h.tokens.last() == Some(&crate::backends::EOS_TOKEN) || h.text.is_empty() {
        h.text.clone()
    } else {
        format!("{}…", h.text)
    }
}

fn ranked(batch: &ScoredBatch, weights: &[f64], top: usize) -> Vec<RankedDescription> {
    let mut items: Vec<RankedDescription> = batch
        .hypotheses()
        .iter()
        .zip(weights)
        .map(|(h, w)| RankedDescription {
            text: render_text(h),
            weight: *w,
        })
        .collect();
    items.sort_by(|a, b| {
        b.weight
            .total_cmp(&a.weight)
            .then_with(|| a.text.cmp(&b.text))
    });
    items.truncate(top);
    items
}

/// Shared and distinctive descriptions at `lambda`.
pub fn explain(batch: &ScoredBatch, lambda: f64, top: usize) -> Result<Explanation> {
    let q1 = gibbs_weights(batch, lambda, Sample::First)?;
    let q2 = gibbs_weights(batch, lambda, Sample::Second)?;
    let mix: Vec<f64> = q1.iter().zip(&q2).map(|(a, b)| 0.5 * a + 0.5 * b).collect();
    let diff = |q: &[f64]| -> Vec<f64> { q.iter().zip(&mix).map(|(a, m)| a - m).collect() };
    Ok(Explanation {
        lambda,
        shared: ranked(batch, &mix, top),
        distinctive: [
            ranked(batch, &diff(&q1), top),
            ranked(batch, &diff(&q2), top),
        ],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub hypotheses: usize,
    pub draws: f64,
    pub dropped: usize,
    /// Effective sample size per sample at the smallest grid λ.
    pub ess_min_lambda: [f64; 2],
    /// Effective sample size per sample at the largest grid λ.
    pub ess_max_lambda: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceReport {
    pub backend: String,
    pub loss_mode: LossMode,
    pub pcode_mode: PcodeMode,
    pub lambda_grid: LambdaGrid,
    pub curve: DistanceCurve,
    pub auc: f64,
    pub explanation: Explanation,
    pub diagnostics: Diagnostics,
}

impl DistanceReport {
    /// JSON document with capacities, losses and the AUC in `units`.
    pub fn to_json(&self, units: Units) -> String {
        let mut doc = self.clone();
        doc.curve = self.curve.in_units(units);
        doc.auc = doc.curve.auc;
        let mut value = serde_json::to_value(&doc).expect("report serializes");
        value["units"] = serde_json::Value::String(units.to_string());
        serde_json::to_string_pretty(&value).expect("report serializes")
    }

    /// Ranked plain-text explanation table.
    pub fn explanation_table(&self) -> String {
        let mut out = String::new();
        let e = &self.explanation;
        let mut section = |title: String, rows: &[RankedDescription]| {
            let _ = writeln!(out, "{title}");
            let _ = writeln!(out, "{:>4}  {:>12}  description", "rank", "weight");
            for (i, r) in rows.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{:>4}  {:>12}  {:?}",
                    i + 1,
                    fmt_fixed(r.weight),
                    r.text
                );
            }
            out.push('\n');
        };
        section(
            format!("shared descriptions (q_mix, lambda={})", e.lambda),
            &e.shared,
        );
        section(
            format!("distinctive for x1 (q1 - q_mix, lambda={})", e.lambda),
            &e.distinctive[0],
        );
        section(
            format!("distinctive for x2 (q2 - q_mix, lambda={})", e.lambda),
            &e.distinctive[1],
        );
        out
    }
}

fn diagnostics(batch: &ScoredBatch, grid: &LambdaGrid) -> Result<Diagnostics> {
    let values = grid.values();
    let ess = |lambda: f64| -> Result<[f64; 2]> {
        Ok([
            effective_sample_size(&gibbs_weights(batch, lambda, Sample::First)?),
            effective_sample_size(&gibbs_weights(batch, lambda, Sample::Second)?),
        ])
    };
    let d = Diagnostics {
        hypotheses: batch.len(),
        draws: batch.draws(),
        dropped: batch.dropped(),
        ess_min_lambda: ess(values[0])?,
        ess_max_lambda: ess(grid.max())?,
    };
    for (label, pair) in [
        ("smallest", d.ess_min_lambda),
        ("largest", d.ess_max_lambda),
    ] {
        for (i, e) in pair.iter().enumerate() {
            if *e < ESS_WARNING {
                log::warn!(
                    "effective sample size {e:.2} for x{} at the {label} lambda",
                    i + 1
                );
            }
        }
    }
    Ok(d)
}

/// Distance curve, AUC and explanations for a prepared batch.
pub fn report_for_batch(
    batch: &ScoredBatch,
    backend_id: String,
    config: &CompareConfig,
) -> Result<DistanceReport> {
    let curve = distance_curve(
        batch,
        &config.lambda_grid,
        config.capacity_points,
        config.c_max,
    )?;
    Ok(DistanceReport {
        backend: backend_id,
        loss_mode: batch.mode(),
        pcode_mode: config.pcode_mode,
        lambda_grid: config.lambda_grid.clone(),
        auc: curve.auc,
        curve,
        explanation: explain(batch, config.explain_lambda, config.explain_top)?,
        diagnostics: diagnostics(batch, &config.lambda_grid)?,
    })
}

/// Compares two text items end to end.
pub fn compare(
    x1: &str,
    x2: &str,
    backend: &dyn Backend,
    config: &CompareConfig,
) -> Result<DistanceReport> {
    let batch = build_batch(x1, x2, backend, config)?;
    report_for_batch(&batch, backend.id(), config)
}

/// Common integration limit for several curves: the smallest positive auto
/// range, or 0 when every range is empty. Areas are only comparable when
/// integrated over the same capacity range.
pub fn shared_capacity_limit(ranges: impl IntoIterator<Item = f64>) -> f64 {
    let smallest = ranges
        .into_iter()
        .filter(|c| *c > CAPACITY_CLAMP)
        .fold(f64::INFINITY, f64::min);
    if smallest.is_finite() {
        smallest
    } else {
        0.0
    }
}

/// Compares several pairs with every curve integrated up to one shared
/// `c_max`: the configured value, else [`shared_capacity_limit`] of the
/// per-pair auto ranges.
pub fn compare_on_shared_range(
    pairs: &[(&str, &str)],
    backend: &dyn Backend,
    config: &CompareConfig,
) -> Result<Vec<DistanceReport>> {
    let batches = pairs
        .iter()
        .map(|(a, b)| build_batch(a, b, backend, config))
        .collect::<Result<Vec<_>>>()?;
    let c_max = match config.c_max {
        Some(c) => c,
        None => shared_capacity_limit(
            batches
                .iter()
                .map(|b| {
                    distance_curve(b, &config.lambda_grid, config.capacity_points, None)
                        .map(|c| c.c_max)
                })
                .collect::<Result<Vec<_>>>()?,
        ),
    };
    let shared = CompareConfig {
        c_max: Some(c_max),
        ..config.clone()
    };
    batches
        .iter()
        .map(|b| report_for_batch(b, backend.id(), &shared))
        .collect()
}

/// Compares a text item with an item the backend knows by reference (for
/// example an image id on a multimodal server).
pub fn cross_modal_compare(
    x_text: &str,
    x_other: &str,
    backend: &dyn Backend,
    config: &CompareConfig,
) -> Result<DistanceReport> {
    if !backend.accepts_references() {
        return Err(Error::invalid(format!(
            "backend {} does not accept item references",
            backend.id()
        )));
    }
    compare(x_text, x_other, backend, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::{TableBackend, TableFixture};

    fn fixture() -> TableBackend {
        let f: TableFixture = serde_json::from_str(
            r#"{
                "conditional": {
                    "x": {"red": -0.5, "round": -1.5, "small": -2.0},
                    "y": {"red": -2.5, "round": -0.4, "small": -1.3}
                },
                "unconditional": {"red": -1.0, "round": -1.2, "small": -1.1}
            }"#,
        )
        .unwrap();
        TableBackend::new(f).unwrap()
    }

    #[test]
    fn batch_entries_match_hand_values() {
        let b = fixture();
        let cfg = CompareConfig::default();
        let pooled: Vec<(Description, u32)> = ["red", "round", "small"]
            .iter()
            .map(|t| (Description::complete(*t), 1))
            .collect();
        let batch = score_batch("x", "y", &pooled, &b, &cfg).unwrap();
        let h = &batch.hypotheses()[0];
        let log_pi = (0.5 * (-0.5f64).exp() + 0.5 * (-2.5f64).exp()).ln();
        assert!((h.log_proposal - log_pi).abs() < 1e-12);
        assert!((h.log_pcode - log_pi).abs() < 1e-12);
        assert!((batch.loss(Sample::First)[0] - (log_pi + 0.5)).abs() < 1e-12);
        assert!((batch.loss(Sample::Second)[0] - (log_pi + 2.5)).abs() < 1e-12);
    }

    #[test]
    fn self_comparison_has_zero_losses_and_auc() {
        let b = fixture();
        let batch = build_batch("x", "x", &b, &CompareConfig::default()).unwrap();
        assert!(batch.loss(Sample::First).iter().all(|l| *l == 0.0));
        let r = compare("x", "x", &b, &CompareConfig::default()).unwrap();
        assert_eq!(r.auc, 0.0);
    }

    #[test]
    fn argument_order_does_not_change_auc() {
        let b = fixture();
        let cfg = CompareConfig::default();
        let r1 = compare("x", "y", &b, &cfg).unwrap();
        let r2 = compare("y", "x", &b, &cfg).unwrap();
        assert_eq!(r1.auc.to_bits(), r2.auc.to_bits());
    }

    #[test]
    fn mixture_bounds_hold() {
        let b = fixture();
        let batch = build_batch("x", "y", &b, &CompareConfig::default()).unwrap();
        for (j, h) in batch.hypotheses().iter().enumerate() {
            let a = h.log_proposal - batch.loss(Sample::First)[j];
            let c = h.log_proposal - batch.loss(Sample::Second)[j];
            let hi = a.max(c);
            assert!(h.log_proposal <= hi + 1e-12 && h.log_proposal >= hi - 2f64.ln() - 1e-12);
        }
    }
}
