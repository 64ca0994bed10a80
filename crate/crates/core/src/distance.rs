//! Importance-sampled Gibbs families and the conceptual distance curve.
//!
//! Every quantity here is a pure function of a [`ScoredBatch`]: a set of
//! sampled hypotheses with their code and proposal log-probabilities plus the
//! reconstruction loss of each compared sample under each hypothesis. For a
//! Lagrange multiplier `λ ≥ 0` the optimal description distribution of sample
//! `x` is `q(h) ∝ p_code(h) · exp(-λ ℓ(x|h))`; over a batch drawn from `π` it
//! is represented by the self-normalized weights
//!
//! ```text
//! α_j ∝ m_j · exp(-λ ℓ(x|h_j) + log p_code(h_j) - log π(h_j))
//! ```
//!
//! where `m_j` is the number of times `h_j` was drawn.
//!
//! The asymmetric deltas use the cross-minus-optimal convention:
//! `Δ_{2→1}(C) = E_{q₂(C)}[ℓ(x₁|h)] - E_{q₁(C)}[ℓ(x₁|h)] ≥ 0`, and
//! `d(C) = ½ (Δ_{2→1}(C) + Δ_{1→2}(C))`.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{interpolate, linspace, trapezoid, weighted_log_sum_exp, weighted_softmax};
use crate::units::{fmt_fixed, Units};

/// Capacities in `[-CAPACITY_CLAMP, 0)` are reported as zero.
pub const CAPACITY_CLAMP: f64 = 1e-9;

/// Default number of points on the shared capacity grid.
pub const DEFAULT_CAPACITY_POINTS: usize = 101;

/// One of the two compared samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sample {
    First,
    Second,
}

impl Sample {
    pub const BOTH: [Sample; 2] = [Sample::First, Sample::Second];

    pub fn index(self) -> usize {
        match self {
            Sample::First => 0,
            Sample::Second => 1,
        }
    }

    pub fn other(self) -> Sample {
        match self {
            Sample::First => Sample::Second,
            Sample::Second => Sample::First,
        }
    }
}

impl fmt::Display for Sample {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "x{}", self.index() + 1)
    }
}

/// A candidate description with its coding and proposal log-probabilities (nats).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub tokens: Vec<u32>,
    pub text: String,
    pub log_pcode: f64,
    pub log_proposal: f64,
    /// Number of proposal draws that produced this description.
    pub multiplicity: u32,
}

impl Hypothesis {
    /// Hypothesis whose tokens are the characters of `text`.
    pub fn new(text: impl Into<String>, log_pcode: f64, log_proposal: f64) -> Self {
        let text = text.into();
        let tokens = text.chars().map(u32::from).collect();
        Self::with_tokens(tokens, text, log_pcode, log_proposal)
    }

    pub fn with_tokens(tokens: Vec<u32>, text: String, log_pcode: f64, log_proposal: f64) -> Self {
        Self {
            tokens,
            text,
            log_pcode,
            log_proposal,
            multiplicity: 1,
        }
    }

    pub fn multiplicity(mut self, m: u32) -> Self {
        self.multiplicity = m;
        self
    }
}

/// How the reconstruction losses of a batch were produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    /// `ℓ(x|h) = -log p(x|h)` from a decoder.
    Generative,
    /// `ℓ̄(x|h) = log p̂(h) - log p(h|x)`; the data likelihood cancels.
    #[default]
    EncoderOnly,
}

impl fmt::Display for LossMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossMode::Generative => "generative",
            LossMode::EncoderOnly => "encoder_only",
        })
    }
}

/// Sampled hypotheses scored against both compared samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredBatch {
    hypotheses: Vec<Hypothesis>,
    loss: [Vec<f64>; 2],
    mode: LossMode,
    dropped: usize,
}

impl ScoredBatch {
    /// Builds a batch, dropping hypotheses whose loss (for either sample) or
    /// log-probabilities are not finite.
    pub fn new(hypotheses: Vec<Hypothesis>, loss: [Vec<f64>; 2], mode: LossMode) -> Result<Self> {
        let n = hypotheses.len();
        if loss[0].len() != n || loss[1].len() != n {
            return Err(Error::invalid(format!(
                "loss rows have {} and {} columns for {} hypotheses",
                loss[0].len(),
                loss[1].len(),
                n
            )));
        }
        let [row1, row2] = loss;
        let mut kept = Vec::with_capacity(n);
        let mut kept1 = Vec::with_capacity(n);
        let mut kept2 = Vec::with_capacity(n);
        let mut dropped = 0;
        for ((h, l1), l2) in hypotheses.into_iter().zip(row1).zip(row2) {
            if h.tokens.is_empty() {
                return Err(Error::invalid(format!(
                    "hypothesis '{}' has no tokens",
                    h.text
                )));
            }
            if h.multiplicity == 0 {
                return Err(Error::invalid(format!(
                    "hypothesis '{}' has zero multiplicity",
                    h.text
                )));
            }
            let finite = l1.is_finite()
                && l2.is_finite()
                && h.log_pcode.is_finite()
                && h.log_proposal.is_finite();
            if finite {
                kept.push(h);
                kept1.push(l1);
                kept2.push(l2);
            } else {
                dropped += 1;
            }
        }
        if dropped > 0 {
            log::warn!("dropped {dropped} hypotheses with non-finite scores");
        }
        if kept.len() < 2 {
            return Err(Error::DegenerateBatch {
                surviving: kept.len(),
                dropped,
            });
        }
        Ok(Self {
            hypotheses: kept,
            loss: [kept1, kept2],
            mode,
            dropped,
        })
    }

    pub fn hypotheses(&self) -> &[Hypothesis] {
        &self.hypotheses
    }

    pub fn len(&self) -> usize {
        self.hypotheses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hypotheses.is_empty()
    }

    pub fn loss(&self, sample: Sample) -> &[f64] {
        &self.loss[sample.index()]
    }

    pub fn mode(&self) -> LossMode {
        self.mode
    }

    /// Hypotheses removed at construction for non-finite scores.
    pub fn dropped(&self) -> usize {
        self.dropped
    }

    /// Total number of proposal draws represented (sum of multiplicities).
    pub fn draws(&self) -> f64 {
        self.hypotheses
            .iter()
            .map(|h| f64::from(h.multiplicity))
            .sum()
    }

    /// Same batch with the two sample rows exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            hypotheses: self.hypotheses.clone(),
            loss: [self.loss[1].clone(), self.loss[0].clone()],
            mode: self.mode,
            dropped: self.dropped,
        }
    }

    fn multiplicities(&self) -> Vec<f64> {
        self.hypotheses
            .iter()
            .map(|h| f64::from(h.multiplicity))
            .collect()
    }

    /// `log p_code(h) - log π(h)` per hypothesis.
    fn log_importance(&self) -> Vec<f64> {
        self.hypotheses
            .iter()
            .map(|h| h.log_pcode - h.log_proposal)
            .collect()
    }
}

/// Increasing grid of Lagrange multipliers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LambdaGrid(Vec<f64>);

impl LambdaGrid {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("lambda grid is empty"));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid(
                "lambda grid values must be finite and nonnegative",
            ));
        }
        if values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("lambda grid must be strictly increasing"));
        }
        Ok(Self(values))
    }

    pub fn linspace(start: f64, stop: f64, count: usize) -> Result<Self> {
        if count == 0 {
            return Err(Error::invalid("lambda grid needs at least one point"));
        }
        Self::new(linspace(start, stop, count))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn max(&self) -> f64 {
        *self.0.last().expect("grid is nonempty")
    }
}

impl Default for LambdaGrid {
    /// 200 evenly spaced values on `[0, 100]`.
    fn default() -> Self {
        Self(linspace(0.0, 100.0, 200))
    }
}

impl FromStr for LambdaGrid {
    type Err = Error;

    /// Parses `start:stop:count`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(Error::invalid(format!(
                "lambda grid '{s}' is not start:stop:count"
            )));
        }
        let start: f64 = parts[0]
            .trim()
            .parse()
            .map_err(|_| Error::invalid(format!("bad lambda start '{}'", parts[0])))?;
        let stop: f64 = parts[1]
            .trim()
            .parse()
            .map_err(|_| Error::invalid(format!("bad lambda stop '{}'", parts[1])))?;
        let count: usize = parts[2]
            .trim()
            .parse()
            .map_err(|_| Error::invalid(format!("bad lambda count '{}'", parts[2])))?;
        Self::linspace(start, stop, count)
    }
}

/// One member of a Gibbs family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GibbsPoint {
    pub lambda: f64,
    pub weights: Vec<f64>,
    /// KL(q ‖ p_code) in nats.
    pub capacity: f64,
    /// β = E_q[ℓ(x|h)] in nats.
    pub expected_loss: f64,
    pub log_partition: f64,
}

/// Rate curve `(λ, C(λ), β(λ))` of one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityCurve {
    pub points: Vec<GibbsPoint>,
    pub sample: Sample,
}

impl CapacityCurve {
    pub fn capacities(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.capacity).collect()
    }

    pub fn expected_losses(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.expected_loss).collect()
    }
}

/// Asymmetric deltas and conceptual distance on a shared capacity grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceCurve {
    pub capacity_grid: Vec<f64>,
    pub delta_2_to_1: Vec<f64>,
    pub delta_1_to_2: Vec<f64>,
    pub distance: Vec<f64>,
    pub auc: f64,
    pub c_max: f64,
}

pub const CURVE_CSV_HEADER: &str = "capacity,delta_2_to_1,delta_1_to_2,distance";

impl DistanceCurve {
    /// Assembles a curve from Δ values on a grid; the distance and AUC are derived.
    pub fn from_deltas(
        capacity_grid: Vec<f64>,
        delta_2_to_1: Vec<f64>,
        delta_1_to_2: Vec<f64>,
    ) -> Self {
        let distance: Vec<f64> = delta_2_to_1
            .iter()
            .zip(&delta_1_to_2)
            .map(|(a, b)| 0.5 * (a + b))
            .collect();
        let auc = trapezoid(&capacity_grid, &distance);
        let c_max = capacity_grid.last().copied().unwrap_or(0.0);
        Self {
            capacity_grid,
            delta_2_to_1,
            delta_1_to_2,
            distance,
            auc,
            c_max,
        }
    }

    /// Copy with capacities and losses rescaled to `units`; the AUC carries
    /// the product unit.
    pub fn in_units(&self, units: Units) -> Self {
        let s = units.scale();
        let scale = |v: &Vec<f64>| v.iter().map(|x| x * s).collect::<Vec<_>>();
        Self {
            capacity_grid: scale(&self.capacity_grid),
            delta_2_to_1: scale(&self.delta_2_to_1),
            delta_1_to_2: scale(&self.delta_1_to_2),
            distance: scale(&self.distance),
            auc: self.auc * s * s,
            c_max: self.c_max * s,
        }
    }

    /// Distance at capacity `c` by linear interpolation on the grid.
    pub fn distance_at(&self, c: f64) -> Option<f64> {
        interpolate(&self.capacity_grid, &self.distance, c)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.capacity_grid.len() + 1));
        out.push_str(CURVE_CSV_HEADER);
        out.push('\n');
        for k in 0..self.capacity_grid.len() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                fmt_fixed(self.capacity_grid[k]),
                fmt_fixed(self.delta_2_to_1[k]),
                fmt_fixed(self.delta_1_to_2[k]),
                fmt_fixed(self.distance[k])
            ));
        }
        out
    }
}

/// Report document for a traced curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveDocument {
    pub auc: f64,
    pub c_max: f64,
    pub lambda_grid: LambdaGrid,
    pub mode: LossMode,
    pub units: Units,
}

impl CurveDocument {
    pub fn new(
        curve: &DistanceCurve,
        lambda_grid: &LambdaGrid,
        mode: LossMode,
        units: Units,
    ) -> Self {
        let scaled = curve.in_units(units);
        Self {
            auc: scaled.auc,
            c_max: scaled.c_max,
            lambda_grid: lambda_grid.clone(),
            mode,
            units,
        }
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda.is_finite() && lambda >= 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "lambda must be finite and nonnegative, got {lambda}"
        )))
    }
}

/// Shared per-λ evaluation: weights plus the stabilized pieces needed for
/// the partition function and the capacity.
struct Tilt {
    weights: Vec<f64>,
    expected_loss: f64,
    log_partition: f64,
    capacity: f64,
}

fn tilt(batch: &ScoredBatch, lambda: f64, target: Sample) -> Tilt {
    let loss = batch.loss(target);
    let counts = batch.multiplicities();
    let base = batch.log_importance();
    let min_loss = loss.iter().copied().fold(f64::INFINITY, f64::min);
    // Shifting by the minimum loss keeps every logit bounded at large λ.
    let shifted_loss: Vec<f64> = loss.iter().map(|l| l - min_loss).collect();
    let logits: Vec<f64> = base
        .iter()
        .zip(&shifted_loss)
        .map(|(b, s)| b - lambda * s)
        .collect();
    let lse_lambda = weighted_log_sum_exp(&logits, &counts);
    let lse_zero = weighted_log_sum_exp(&base, &counts);
    let weights = weighted_softmax(&logits, &counts);
    let expected_loss: f64 = weights.iter().zip(loss).map(|(a, l)| a * l).sum();
    let tilt_term: f64 = weights
        .iter()
        .zip(&shifted_loss)
        .map(|(a, s)| a * (-lambda * s))
        .sum();
    // KL(α ‖ normalized p_code/π weights); equals -λβ - log Ẑ_λ when p_code = π.
    let mut capacity = tilt_term - lse_lambda + lse_zero;
    if (-CAPACITY_CLAMP..0.0).contains(&capacity) {
        capacity = 0.0;
    }
    let log_partition = lse_lambda - lambda * min_loss - batch.draws().ln();
    Tilt {
        weights,
        expected_loss,
        log_partition,
        capacity,
    }
}

/// Importance weights `α` of `target`'s Gibbs family at `lambda`.
pub fn gibbs_weights(batch: &ScoredBatch, lambda: f64, target: Sample) -> Result<Vec<f64>> {
    check_lambda(lambda)?;
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    Ok(tilt(batch, lambda, target).weights)
}

/// `log Ẑ_λ = log[(1/N) Σ_j m_j exp(-λ ℓ_j + log p_code(h_j) - log π(h_j))]`.
pub fn log_partition_estimate(batch: &ScoredBatch, lambda: f64, target: Sample) -> Result<f64> {
    check_lambda(lambda)?;
    Ok(tilt(batch, lambda, target).log_partition)
}

/// Capacity `C(λ) = KL(q_λ ‖ p_code)` in nats, estimated on the batch.
pub fn capacity_estimate(batch: &ScoredBatch, lambda: f64, target: Sample) -> Result<f64> {
    check_lambda(lambda)?;
    Ok(tilt(batch, lambda, target).capacity)
}

/// `β(λ) = E_{q_λ}[ℓ(x_target|h)]`.
pub fn expected_loss(batch: &ScoredBatch, lambda: f64, target: Sample) -> Result<f64> {
    check_lambda(lambda)?;
    Ok(tilt(batch, lambda, target).expected_loss)
}

pub fn gibbs_point(batch: &ScoredBatch, lambda: f64, target: Sample) -> Result<GibbsPoint> {
    check_lambda(lambda)?;
    let t = tilt(batch, lambda, target);
    Ok(GibbsPoint {
        lambda,
        weights: t.weights,
        capacity: t.capacity,
        expected_loss: t.expected_loss,
        log_partition: t.log_partition,
    })
}

/// One [`GibbsPoint`] per grid value. Points are evaluated in parallel.
pub fn trace_rate_curve(
    batch: &ScoredBatch,
    lambda_grid: &LambdaGrid,
    target: Sample,
) -> Result<CapacityCurve> {
    let points = lambda_grid
        .values()
        .par_iter()
        .map(|&lambda| gibbs_point(batch, lambda, target))
        .collect::<Result<Vec<_>>>()?;
    Ok(CapacityCurve {
        points,
        sample: target,
    })
}

/// `E_{q_source(λ)}[ℓ(x_target|h)]`: how well `source`'s descriptions fit `target`.
pub fn cross_expected_loss(
    batch: &ScoredBatch,
    lambda: f64,
    source: Sample,
    target: Sample,
) -> Result<f64> {
    let weights = gibbs_weights(batch, lambda, source)?;
    Ok(dot(&weights, batch.loss(target)))
}

/// `Δ_{source→target}(λ) = E_{q_source}[ℓ(x_target)] - E_{q_target}[ℓ(x_target)]`
/// with both families at the same λ.
pub fn asymmetric_delta(
    batch: &ScoredBatch,
    lambda: f64,
    source: Sample,
    target: Sample,
) -> Result<f64> {
    let cross = cross_expected_loss(batch, lambda, source, target)?;
    let optimal = expected_loss(batch, lambda, target)?;
    Ok(cross - optimal)
}

/// `E_{q_∩}[ℓ₁ + ℓ₂] - E_{q₁}[ℓ₁] - E_{q₂}[ℓ₂]` with `q_∩ = ½ q₁ + ½ q₂`
/// at a common λ.
pub fn intersection_distance(batch: &ScoredBatch, lambda: f64) -> Result<f64> {
    let q1 = gibbs_weights(batch, lambda, Sample::First)?;
    let q2 = gibbs_weights(batch, lambda, Sample::Second)?;
    let l1 = batch.loss(Sample::First);
    let l2 = batch.loss(Sample::Second);
    let joint: Vec<f64> = l1.iter().zip(l2).map(|(a, b)| a + b).collect();
    let mixture: Vec<f64> = q1.iter().zip(&q2).map(|(a, b)| 0.5 * a + 0.5 * b).collect();
    Ok(dot(&mixture, &joint) - dot(&q1, l1) - dot(&q2, l2))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Per-sample traced data used to build the distance curve.
struct SampleTrace {
    capacity: Vec<f64>,
    optimal: Vec<f64>,
    cross: Vec<f64>,
}

impl SampleTrace {
    fn max_capacity(&self) -> f64 {
        self.capacity.last().copied().unwrap_or(0.0)
    }
}

fn trace_sample(batch: &ScoredBatch, grid: &LambdaGrid, sample: Sample) -> Result<SampleTrace> {
    let rows = grid
        .values()
        .par_iter()
        .map(|&lambda| {
            check_lambda(lambda)?;
            let t = tilt(batch, lambda, sample);
            let cross = dot(&t.weights, batch.loss(sample.other()));
            Ok((t.capacity, t.expected_loss, cross))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut capacity = Vec::with_capacity(rows.len());
    let mut running = 0.0f64;
    for (c, _, _) in &rows {
        // Estimator noise can produce tiny decreases; the curve is monotone.
        running = running.max(*c);
        capacity.push(running);
    }
    Ok(SampleTrace {
        capacity,
        optimal: rows.iter().map(|r| r.1).collect(),
        cross: rows.iter().map(|r| r.2).collect(),
    })
}

/// Value of a traced curve at capacity `c`; beyond the traced range the last
/// value is held.
fn at_capacity(capacity: &[f64], values: &[f64], c: f64) -> f64 {
    match interpolate(capacity, values, c) {
        Some(v) => v,
        None if c > *capacity.last().expect("nonempty trace") => {
            *values.last().expect("nonempty trace")
        }
        None => values[0],
    }
}

/// Resolves `c_max` against the traced ranges of both samples.
///
/// When neither sample traces any capacity (constant loss rows) the
/// constraint never binds, so any explicit `c_max` is accepted.
pub(crate) fn resolve_c_max(c_max: Option<f64>, max1: f64, max2: f64) -> Result<f64> {
    let flat = max1.max(max2) <= CAPACITY_CLAMP;
    match c_max {
        None => Ok(max1.min(max2)),
        Some(c) if !c.is_finite() || c < 0.0 => Err(Error::invalid(format!(
            "c_max must be finite and nonnegative, got {c}"
        ))),
        Some(c) if c > max1.max(max2) && !flat => Err(Error::CapacityOutOfRange {
            requested: c,
            available: max1.max(max2),
        }),
        Some(c) => Ok(c),
    }
}

/// Capacity grid of `points` values on `[0, c_max]`; a single point when the
/// capacity range is degenerate.
pub(crate) fn capacity_grid(c_max: f64, points: usize) -> Result<Vec<f64>> {
    if points < 2 {
        return Err(Error::invalid("capacity grid needs at least 2 points"));
    }
    if c_max <= 0.0 {
        return Ok(vec![0.0]);
    }
    Ok(linspace(0.0, c_max, points))
}

/// Traces both samples over `lambda_grid` and interpolates the asymmetric
/// deltas onto a shared capacity grid on `[0, c_max]`.
///
/// `c_max = None` uses the smaller of the two traced capacity ranges.
pub fn distance_curve(
    batch: &ScoredBatch,
    lambda_grid: &LambdaGrid,
    capacity_points: usize,
    c_max: Option<f64>,
) -> Result<DistanceCurve> {
    let first = trace_sample(batch, lambda_grid, Sample::First)?;
    let second = trace_sample(batch, lambda_grid, Sample::Second)?;
    let c_max = resolve_c_max(c_max, first.max_capacity(), second.max_capacity())?;
    let grid = capacity_grid(c_max, capacity_points)?;

    let delta = |source: &SampleTrace, target: &SampleTrace, c: f64| {
        at_capacity(&source.capacity, &source.cross, c)
            - at_capacity(&target.capacity, &target.optimal, c)
    };
    let delta_2_to_1: Vec<f64> = grid.iter().map(|&c| delta(&second, &first, c)).collect();
    let delta_1_to_2: Vec<f64> = grid.iter().map(|&c| delta(&first, &second, c)).collect();
    let mut curve = DistanceCurve::from_deltas(grid, delta_2_to_1, delta_1_to_2);
    curve.c_max = c_max;
    Ok(curve)
}

/// Trapezoidal area under sampled `(C, d)` pairs over `[C_0, c_max]`, with the
/// endpoint value interpolated when `c_max` falls between samples.
pub fn auc(capacities: &[f64], values: &[f64], c_max: f64) -> Result<f64> {
    if capacities.len() != values.len() {
        return Err(Error::invalid("capacity and value arrays differ in length"));
    }
    if capacities.len() < 2 {
        return Err(Error::invalid("auc needs at least 2 points"));
    }
    if capacities.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("capacities must be strictly increasing"));
    }
    let end = *capacities.last().expect("len >= 2");
    if !(capacities[0]..=end).contains(&c_max) {
        return Err(Error::invalid(format!(
            "c_max {c_max} outside sampled range [{}, {end}]",
            capacities[0]
        )));
    }
    let cut = capacities.partition_point(|&c| c < c_max);
    let mut xs = capacities[..cut].to_vec();
    let mut ys = values[..cut].to_vec();
    let end_value = interpolate(capacities, values, c_max).expect("c_max checked in range");
    xs.push(c_max);
    ys.push(end_value);
    Ok(trapezoid(&xs, &ys))
}
