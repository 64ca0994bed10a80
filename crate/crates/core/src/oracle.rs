//! Exact computations over finite hypothesis tables.
//!
//! These are the ground truth for the importance-sampling estimators in
//! [`crate::distance`]: the Gibbs family is normalized by enumeration, matched
//! capacities are found by bisection on λ instead of interpolation, and the
//! discrete description problem and two-part structure function are solved
//! by direct search.

use std::fmt::Write as _;
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::distance::{
    capacity_grid, resolve_c_max, CapacityCurve, DistanceCurve, GibbsPoint, Hypothesis, LambdaGrid,
    LossMode, Sample, ScoredBatch,
};
use crate::error::{Error, Result};
use crate::numeric::{log_sum_exp, weighted_softmax};

/// Kraft slack allowed when validating code lengths.
pub const KRAFT_TOLERANCE: f64 = 1e-9;

/// Default code length of the universal hypothesis, in nats.
pub const DEFAULT_SEARCH_CODE_LENGTH: f64 = 0.1;

const BISECTION_STEPS: usize = 200;

/// A finite hypothesis space with code lengths and per-sample losses (nats).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteHypothesisTable {
    labels: Vec<String>,
    code_lengths: Vec<f64>,
    loss: Vec<Vec<f64>>,
}

impl FiniteHypothesisTable {
    pub fn new(labels: Vec<String>, code_lengths: Vec<f64>, loss: Vec<Vec<f64>>) -> Result<Self> {
        let n = code_lengths.len();
        if n == 0 {
            return Err(Error::invalid("table has no hypotheses"));
        }
        if labels.len() != n {
            return Err(Error::invalid(format!(
                "{} labels for {n} hypotheses",
                labels.len()
            )));
        }
        if labels
            .iter()
            .any(|l| l.is_empty() || l.contains(['\t', '\n', '\r']))
        {
            return Err(Error::invalid(
                "labels must be nonempty and free of tabs and newlines",
            ));
        }
        if loss.is_empty() {
            return Err(Error::invalid("table has no samples"));
        }
        for (i, row) in loss.iter().enumerate() {
            if row.len() != n {
                return Err(Error::invalid(format!(
                    "loss row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!(
                    "loss row {i} has non-finite entries"
                )));
            }
        }
        if code_lengths.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("code lengths must be finite"));
        }
        let mass: f64 = code_lengths.iter().map(|c| (-c).exp()).sum();
        if mass > 1.0 + KRAFT_TOLERANCE {
            return Err(Error::invalid(format!(
                "code lengths violate Kraft: total mass {mass}"
            )));
        }
        Ok(Self {
            labels,
            code_lengths,
            loss,
        })
    }

    /// Encoder-only table from two conditionals `log p(h|x₁)`, `log p(h|x₂)`
    /// over the same descriptions: the code distribution is the mixture
    /// `π = ½ p₁ + ½ p₂` and loss row `i` is `log π - log pᵢ`.
    pub fn from_conditionals(labels: Vec<String>, log_p: [Vec<f64>; 2]) -> Result<Self> {
        let [p1, p2] = log_p;
        if p1.len() != p2.len() {
            return Err(Error::invalid(
                "conditionals cover different description sets",
            ));
        }
        if p1.iter().chain(&p2).any(|v| !v.is_finite() || *v > 0.0) {
            return Err(Error::invalid(
                "conditional log-probabilities must be finite and at most 0",
            ));
        }
        let log_mix: Vec<f64> = p1
            .iter()
            .zip(&p2)
            .map(|(a, b)| log_sum_exp(&[*a, *b]) - std::f64::consts::LN_2)
            .collect();
        let loss = [&p1, &p2]
            .iter()
            .map(|p| log_mix.iter().zip(p.iter()).map(|(m, l)| m - l).collect())
            .collect();
        Self::new(labels, log_mix.iter().map(|m| -m).collect(), loss)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn code_lengths(&self) -> &[f64] {
        &self.code_lengths
    }

    pub fn loss_row(&self, sample: usize) -> &[f64] {
        &self.loss[sample]
    }

    pub fn num_hypotheses(&self) -> usize {
        self.code_lengths.len()
    }

    pub fn num_samples(&self) -> usize {
        self.loss.len()
    }

    fn check_sample(&self, sample: usize) -> Result<()> {
        if sample < self.loss.len() {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "sample {sample} out of range ({} samples)",
                self.loss.len()
            )))
        }
    }

    /// Batch enumerating every hypothesis once with exact code log-probs and
    /// a uniform enumeration proposal, so importance weights equal the exact
    /// Gibbs weights.
    pub fn enumeration_batch(&self, pair: (usize, usize)) -> Result<ScoredBatch> {
        self.batch_with_mode(pair, LossMode::Generative)
    }

    /// [`Self::enumeration_batch`] tagged encoder-only, for tables built by
    /// [`Self::from_conditionals`].
    pub fn encoder_batch(&self, pair: (usize, usize)) -> Result<ScoredBatch> {
        self.batch_with_mode(pair, LossMode::EncoderOnly)
    }

    /// Importance-sampling batch from `draws` i.i.d. draws of `proposal`
    /// (probabilities over hypotheses), duplicates merged with multiplicity.
    pub fn sampled_batch(
        &self,
        pair: (usize, usize),
        proposal: &[f64],
        draws: usize,
        seed: u64,
    ) -> Result<ScoredBatch> {
        self.check_sample(pair.0)?;
        self.check_sample(pair.1)?;
        if proposal.len() != self.num_hypotheses() {
            return Err(Error::invalid(
                "proposal length differs from the hypothesis count",
            ));
        }
        if draws == 0 {
            return Err(Error::invalid("need at least one draw"));
        }
        let total: f64 = proposal.iter().sum();
        let index = WeightedIndex::new(proposal)
            .map_err(|e| Error::invalid(format!("bad proposal: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut counts = vec![0u32; proposal.len()];
        for _ in 0..draws {
            counts[index.sample(&mut rng)] += 1;
        }
        let drawn: Vec<usize> = (0..counts.len()).filter(|&j| counts[j] > 0).collect();
        let hyps = drawn
            .iter()
            .map(|&j| {
                Hypothesis::new(
                    self.labels[j].clone(),
                    -self.code_lengths[j],
                    (proposal[j] / total).ln(),
                )
                .multiplicity(counts[j])
            })
            .collect();
        let rows = [pair.0, pair.1].map(|s| drawn.iter().map(|&j| self.loss[s][j]).collect());
        ScoredBatch::new(hyps, rows, LossMode::Generative)
    }

    fn batch_with_mode(&self, pair: (usize, usize), mode: LossMode) -> Result<ScoredBatch> {
        self.check_sample(pair.0)?;
        self.check_sample(pair.1)?;
        let log_enum = -(self.num_hypotheses() as f64).ln();
        let hyps = self
            .labels
            .iter()
            .zip(&self.code_lengths)
            .map(|(l, c)| Hypothesis::new(l.clone(), -c, log_enum))
            .collect();
        ScoredBatch::new(
            hyps,
            [self.loss[pair.0].clone(), self.loss[pair.1].clone()],
            mode,
        )
    }

    /// Parses the plain-text table format:
    ///
    /// ```text
    /// # comment
    /// hypotheses<TAB>label…
    /// code<TAB>ℓ(h)…
    /// loss<TAB>ℓ(x₁|h)…
    /// loss<TAB>ℓ(x₂|h)…
    /// ```
    pub fn parse(text: &str) -> Result<Self> {
        let mut labels = None;
        let mut code = None;
        let mut loss = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = line.split('\t');
            let key = fields.next().unwrap_or_default();
            let rest: Vec<&str> = fields.collect();
            let numbers = |rest: &[&str]| -> Result<Vec<f64>> {
                rest.iter()
                    .map(|f| {
                        f.parse::<f64>().map_err(|_| Error::Parse {
                            line: line_no,
                            message: format!("'{f}' is not a number"),
                        })
                    })
                    .collect()
            };
            match key {
                "hypotheses" => {
                    labels = Some(rest.iter().map(|s| s.to_string()).collect::<Vec<_>>())
                }
                "code" => code = Some(numbers(&rest)?),
                "loss" => loss.push(numbers(&rest)?),
                other => {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!("unknown row kind '{other}'"),
                    })
                }
            }
        }
        let labels = labels.ok_or_else(|| Error::invalid("missing 'hypotheses' row"))?;
        let code = code.ok_or_else(|| Error::invalid("missing 'code' row"))?;
        Self::new(labels, code, loss)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Renders the table; floats use shortest round-trip formatting so
    /// `parse(render(t)) == t` bit for bit.
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str("hypotheses");
        for l in &self.labels {
            let _ = write!(out, "\t{l}");
        }
        out.push_str("\ncode");
        for c in &self.code_lengths {
            let _ = write!(out, "\t{c:?}");
        }
        out.push('\n');
        for row in &self.loss {
            out.push_str("loss");
            for v in row {
                let _ = write!(out, "\t{v:?}");
            }
            out.push('\n');
        }
        out
    }
}

/// Stabilized pieces of the exact tilt at one λ.
struct ExactTilt {
    weights: Vec<f64>,
    capacity: f64,
    log_partition: f64,
}

fn exact_tilt(table: &FiniteHypothesisTable, sample: usize, lambda: f64) -> ExactTilt {
    let loss = &table.loss[sample];
    let min_loss = loss.iter().copied().fold(f64::INFINITY, f64::min);
    let prior: Vec<f64> = table.code_lengths.iter().map(|c| -c).collect();
    let shifted: Vec<f64> = loss.iter().map(|l| -lambda * (l - min_loss)).collect();
    let logits: Vec<f64> = prior.iter().zip(&shifted).map(|(p, s)| p + s).collect();
    let lse = log_sum_exp(&logits);
    let lse_zero = log_sum_exp(&prior);
    let weights = weighted_softmax(&logits, &vec![1.0; logits.len()]);
    let tilt: f64 = weights.iter().zip(&shifted).map(|(w, s)| w * s).sum();
    ExactTilt {
        capacity: (tilt - lse + lse_zero).max(0.0),
        log_partition: lse - lambda * min_loss - lse_zero,
        weights,
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

/// Exact `q*(h) ∝ exp(-ℓ(h) - λ ℓ(x|h))`.
pub fn exact_gibbs(table: &FiniteHypothesisTable, sample: usize, lambda: f64) -> Result<Vec<f64>> {
    table.check_sample(sample)?;
    check_lambda(lambda)?;
    Ok(exact_tilt(table, sample, lambda).weights)
}

/// Exact `KL(q*_λ ‖ p_code)` in nats.
pub fn exact_capacity(table: &FiniteHypothesisTable, sample: usize, lambda: f64) -> Result<f64> {
    table.check_sample(sample)?;
    check_lambda(lambda)?;
    Ok(exact_tilt(table, sample, lambda).capacity)
}

/// Exact `E_{q*_source(λ)}[ℓ(x_target|h)]`.
pub fn exact_cross_loss(
    table: &FiniteHypothesisTable,
    source: usize,
    target: usize,
    lambda: f64,
) -> Result<f64> {
    table.check_sample(target)?;
    let q = exact_gibbs(table, source, lambda)?;
    Ok(q.iter().zip(&table.loss[target]).map(|(w, l)| w * l).sum())
}

pub fn exact_expected_loss(
    table: &FiniteHypothesisTable,
    sample: usize,
    lambda: f64,
) -> Result<f64> {
    exact_cross_loss(table, sample, sample, lambda)
}

/// Exact rate curve over `grid`.
pub fn exact_rate_curve(
    table: &FiniteHypothesisTable,
    sample: usize,
    grid: &LambdaGrid,
) -> Result<CapacityCurve> {
    table.check_sample(sample)?;
    let points = grid
        .values()
        .iter()
        .map(|&lambda| {
            let t = exact_tilt(table, sample, lambda);
            let expected_loss = t
                .weights
                .iter()
                .zip(&table.loss[sample])
                .map(|(w, l)| w * l)
                .sum();
            GibbsPoint {
                lambda,
                weights: t.weights,
                capacity: t.capacity,
                expected_loss,
                log_partition: t.log_partition,
            }
        })
        .collect();
    let tag = if sample == 0 {
        Sample::First
    } else {
        Sample::Second
    };
    Ok(CapacityCurve {
        points,
        sample: tag,
    })
}

/// Index minimizing `loss` among entries with `code ≤ capacity`; ties go to
/// the shorter code, then the lower index.
pub fn constrained_argmin(code: &[f64], loss: &[f64], capacity: f64) -> Option<usize> {
    let mut best: Option<usize> = None;
    for j in 0..code.len() {
        if code[j] > capacity {
            continue;
        }
        best = match best {
            None => Some(j),
            Some(b) if loss[j] < loss[b] || (loss[j] == loss[b] && code[j] < code[b]) => Some(j),
            keep => keep,
        };
    }
    best
}

/// Best single description with code length at most `capacity`.
pub fn solve_discrete_description(
    table: &FiniteHypothesisTable,
    sample: usize,
    capacity: f64,
) -> Result<usize> {
    table.check_sample(sample)?;
    constrained_argmin(&table.code_lengths, &table.loss[sample], capacity)
        .ok_or(Error::NoFeasibleDescription { capacity })
}

/// Two-part code `min { ℓ(x|h) + ℓ(h) : ℓ(h) ≤ C }`.
pub fn structure_function(
    table: &FiniteHypothesisTable,
    sample: usize,
    capacity: f64,
) -> Result<f64> {
    table.check_sample(sample)?;
    table
        .code_lengths
        .iter()
        .zip(&table.loss[sample])
        .filter(|(c, _)| **c <= capacity)
        .map(|(c, l)| l + c)
        .fold(None, |acc: Option<f64>, v| {
            Some(acc.map_or(v, |a| a.min(v)))
        })
        .ok_or(Error::NoFeasibleDescription { capacity })
}

/// Smallest λ in `[0, λ_max]` whose exact capacity reaches `target`.
fn lambda_for_capacity(
    table: &FiniteHypothesisTable,
    sample: usize,
    grid: &[f64],
    caps: &[f64],
    target: f64,
) -> f64 {
    if target <= 0.0 || exact_tilt(table, sample, 0.0).capacity >= target {
        return 0.0;
    }
    let k = caps.partition_point(|&c| c < target);
    if k == caps.len() {
        return *grid.last().expect("nonempty grid");
    }
    let (mut lo, mut hi) = if k == 0 {
        (0.0, grid[0])
    } else {
        (grid[k - 1], grid[k])
    };
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if exact_tilt(table, sample, mid).capacity >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Exact conceptual distance curve for `pair`: each grid capacity is matched
/// by solving `C_i(λ) = C` for both samples.
pub fn exact_distance_curve(
    table: &FiniteHypothesisTable,
    pair: (usize, usize),
    lambda_grid: &LambdaGrid,
    capacity_points: usize,
    c_max: Option<f64>,
) -> Result<DistanceCurve> {
    let (a, b) = pair;
    table.check_sample(a)?;
    table.check_sample(b)?;
    let lambdas = lambda_grid.values();
    let trace = |s: usize| -> Vec<f64> {
        lambdas
            .iter()
            .map(|&l| exact_tilt(table, s, l).capacity)
            .collect()
    };
    let (caps_a, caps_b) = (trace(a), trace(b));
    let max_a = caps_a.iter().copied().fold(0.0, f64::max);
    let max_b = caps_b.iter().copied().fold(0.0, f64::max);
    let c_max = resolve_c_max(c_max, max_a, max_b)?;
    let grid = capacity_grid(c_max, capacity_points)?;

    let mut delta_2_to_1 = Vec::with_capacity(grid.len());
    let mut delta_1_to_2 = Vec::with_capacity(grid.len());
    for &c in &grid {
        let la = lambda_for_capacity(table, a, lambdas, &caps_a, c);
        let lb = lambda_for_capacity(table, b, lambdas, &caps_b, c);
        let qa = exact_tilt(table, a, la).weights;
        let qb = exact_tilt(table, b, lb).weights;
        let e =
            |q: &[f64], s: usize| -> f64 { q.iter().zip(&table.loss[s]).map(|(w, l)| w * l).sum() };
        delta_2_to_1.push(e(&qb, a) - e(&qa, a));
        delta_1_to_2.push(e(&qa, b) - e(&qb, b));
    }
    let mut curve = DistanceCurve::from_deltas(grid, delta_2_to_1, delta_1_to_2);
    curve.c_max = c_max;
    Ok(curve)
}

/// Exact distance at a common λ through the intersection form.
pub fn exact_intersection_distance(
    table: &FiniteHypothesisTable,
    pair: (usize, usize),
    lambda: f64,
) -> Result<f64> {
    let (a, b) = pair;
    let qa = exact_gibbs(table, a, lambda)?;
    let qb = exact_gibbs(table, b, lambda)?;
    let (la, lb) = (&table.loss[a], &table.loss[b]);
    let mut mixed = 0.0;
    let mut own = 0.0;
    for j in 0..qa.len() {
        mixed += (0.5 * qa[j] + 0.5 * qb[j]) * (la[j] + lb[j]);
        own += qa[j] * la[j] + qb[j] * lb[j];
    }
    Ok(mixed - own)
}

/// Exact `½(Δ_{2→1} + Δ_{1→2})` at a common λ.
pub fn exact_half_delta_sum(
    table: &FiniteHypothesisTable,
    pair: (usize, usize),
    lambda: f64,
) -> Result<f64> {
    let (a, b) = pair;
    let d21 = exact_cross_loss(table, b, a, lambda)? - exact_expected_loss(table, a, lambda)?;
    let d12 = exact_cross_loss(table, a, b, lambda)? - exact_expected_loss(table, b, lambda)?;
    Ok(0.5 * (d21 + d12))
}

/// Exact `E_{p_code}|ℓ(x_a|h) - ℓ(x_b|h)|`. For a table built by
/// [`FiniteHypothesisTable::from_conditionals`] this is the trajectory
/// distance `E_π |log p(h|x₁) - log p(h|x₂)|`.
pub fn exact_trajectory_distance(
    table: &FiniteHypothesisTable,
    pair: (usize, usize),
) -> Result<f64> {
    let (a, b) = pair;
    table.check_sample(a)?;
    table.check_sample(b)?;
    Ok(table
        .code_lengths
        .iter()
        .zip(table.loss[a].iter().zip(&table.loss[b]))
        .map(|(c, (la, lb))| (-c).exp() * (la - lb).abs())
        .sum())
}

/// Appends a search hypothesis `h_search` with code length `epsilon_code`
/// whose loss on every sample is `min_j(ℓ(x|h_j) + ℓ(h_j)) - epsilon_code`,
/// so it attains the optimal two-part code of every sample at once. Existing
/// code masses are scaled down when needed to keep the Kraft sum at most 1.
pub fn universal_augment(
    table: &FiniteHypothesisTable,
    epsilon_code: f64,
) -> Result<FiniteHypothesisTable> {
    if !(epsilon_code.is_finite() && epsilon_code > 0.0) {
        return Err(Error::invalid(format!(
            "epsilon_code must be positive, got {epsilon_code}"
        )));
    }
    let search_mass = (-epsilon_code).exp();
    let existing: f64 = table.code_lengths.iter().map(|c| (-c).exp()).sum();
    let shift = if existing + search_mass > 1.0 {
        -((1.0 - search_mass) / existing).ln()
    } else {
        0.0
    };

    let mut labels = table.labels.clone();
    let mut search_label = String::from("h_search");
    while labels.contains(&search_label) {
        search_label.push('\'');
    }
    labels.push(search_label);
    let mut code_lengths: Vec<f64> = table.code_lengths.iter().map(|c| c + shift).collect();
    code_lengths.push(epsilon_code);
    let loss = table
        .loss
        .iter()
        .map(|row| {
            let two_part = row
                .iter()
                .zip(&table.code_lengths)
                .map(|(l, c)| l + c)
                .fold(f64::INFINITY, f64::min);
            let mut out = row.clone();
            out.push(two_part - epsilon_code);
            out
        })
        .collect();
    FiniteHypothesisTable::new(labels, code_lengths, loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn table(code: &[f64], loss: &[&[f64]]) -> FiniteHypothesisTable {
        let labels = (0..code.len()).map(|j| format!("h{j}")).collect();
        FiniteHypothesisTable::new(
            labels,
            code.to_vec(),
            loss.iter().map(|r| r.to_vec()).collect(),
        )
        .unwrap()
    }

    fn separable() -> FiniteHypothesisTable {
        let ln2 = 2f64.ln();
        table(&[ln2, ln2], &[&[0.0, 10.0], &[10.0, 0.0]])
    }

    #[test]
    fn gibbs_at_zero_is_the_code_distribution() {
        let t = table(&[0.5, 1.5, 2.5], &[&[1.0, 0.0, 3.0]]);
        let q = exact_gibbs(&t, 0, 0.0).unwrap();
        let mass: f64 = t.code_lengths().iter().map(|c| (-c).exp()).sum();
        for (qj, c) in q.iter().zip(t.code_lengths()) {
            assert_abs_diff_eq!(*qj, (-c).exp() / mass, epsilon = 1e-15);
        }
    }

    #[test]
    fn gibbs_two_hypotheses_unit_lambda() {
        let ln2 = 2f64.ln();
        let t = table(&[ln2, ln2], &[&[1.0, 2.0]]);
        let q = exact_gibbs(&t, 0, 1.0).unwrap();
        assert_abs_diff_eq!(q[0], 0.731_058_578_630_004_9, epsilon = 1e-12);
        assert_abs_diff_eq!(
            exact_capacity(&t, 0, 1.0).unwrap(),
            0.110_944_071_671_727_35,
            epsilon = 1e-12
        );
        assert_eq!(exact_capacity(&t, 0, 0.0).unwrap(), 0.0);
        assert_abs_diff_eq!(exact_capacity(&t, 0, 1e6).unwrap(), ln2, epsilon = 1e-9);
    }

    #[test]
    fn gibbs_large_lambda_selects_two_part_minimizer() {
        let t = table(&[1.0, 3.0], &[&[5.0, 1.0]]);
        let q = exact_gibbs(&t, 0, 1e6).unwrap();
        assert_abs_diff_eq!(q[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn discrete_description_examples() {
        let t = table(&[1.0, 3.0], &[&[5.0, 1.0]]);
        assert!(matches!(
            solve_discrete_description(&t, 0, 0.5),
            Err(Error::NoFeasibleDescription { .. })
        ));
        assert_eq!(solve_discrete_description(&t, 0, 2.0).unwrap(), 0);
        assert_eq!(solve_discrete_description(&t, 0, 3.0).unwrap(), 1);
        assert_eq!(solve_discrete_description(&t, 0, f64::INFINITY).unwrap(), 1);
    }

    #[test]
    fn discrete_ties_prefer_shorter_code_then_index() {
        let t = table(&[2.0, 1.5, 1.5], &[&[1.0, 1.0, 1.0]]);
        assert_eq!(solve_discrete_description(&t, 0, 10.0).unwrap(), 1);
    }

    #[test]
    fn structure_function_examples() {
        let t = table(&[1.0, 3.0], &[&[5.0, 1.0]]);
        assert_abs_diff_eq!(structure_function(&t, 0, f64::INFINITY).unwrap(), 4.0);
        assert_abs_diff_eq!(structure_function(&t, 0, 2.0).unwrap(), 6.0);
        assert!(structure_function(&t, 0, 0.1).is_err());
    }

    #[test]
    fn kraft_violation_rejected() {
        let labels = vec!["a".into(), "b".into()];
        assert!(FiniteHypothesisTable::new(labels, vec![0.1, 0.1], vec![vec![0.0, 0.0]]).is_err());
    }

    #[test]
    fn separable_distance_is_positive() {
        let curve =
            exact_distance_curve(&separable(), (0, 1), &LambdaGrid::default(), 50, None).unwrap();
        assert_eq!(curve.distance[0], 0.0);
        assert!(curve.distance[1..].iter().all(|d| *d > 0.0));
        assert!(curve.auc > 0.0);
    }

    #[test]
    fn identical_rows_give_zero_exact_distance() {
        let t = table(&[1.0, 2.0, 3.0], &[&[1.0, 0.0, 2.0], &[1.0, 0.0, 2.0]]);
        let curve = exact_distance_curve(&t, (0, 1), &LambdaGrid::default(), 50, None).unwrap();
        assert!(curve.distance.iter().all(|d| *d == 0.0));
    }

    #[test]
    fn augment_makes_structure_function_flat() {
        let t = universal_augment(&separable(), 0.1).unwrap();
        assert_eq!(t.num_hypotheses(), 3);
        let mass: f64 = t.code_lengths().iter().map(|c| (-c).exp()).sum();
        assert!(mass <= 1.0 + KRAFT_TOLERANCE);
        for s in 0..2 {
            let base = structure_function(&t, s, 0.1).unwrap();
            for c in [0.2, 1.0, 5.0, 100.0] {
                assert_eq!(structure_function(&t, s, c).unwrap(), base);
            }
            assert_eq!(solve_discrete_description(&t, s, 0.1).unwrap(), 2);
        }
    }

    #[test]
    fn augmented_distances_are_smaller_at_moderate_lambda() {
        let orig = separable();
        let aug = universal_augment(&orig, 0.1).unwrap();
        for lambda in [0.5, 1.0, 2.0, 5.0] {
            let d0 = exact_intersection_distance(&orig, (0, 1), lambda).unwrap();
            let d1 = exact_intersection_distance(&aug, (0, 1), lambda).unwrap();
            assert!(d1 < d0, "lambda {lambda}: {d1} >= {d0}");
        }
    }

    #[test]
    fn render_parse_round_trip() {
        let t = table(
            &[1.1 + 0.2, 1.0 + 1.0 / 3.0],
            &[&[std::f64::consts::PI, -0.0], &[1e-300, 7.0]],
        );
        let back = FiniteHypothesisTable::parse(&t.render()).unwrap();
        assert_eq!(back, t);
        for (a, b) in back.code_lengths().iter().zip(t.code_lengths()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn parse_reports_line_numbers() {
        let err = FiniteHypothesisTable::parse("hypotheses\ta\tb\ncode\t1\tx\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }
}
