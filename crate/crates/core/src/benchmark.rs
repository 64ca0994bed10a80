//! Benchmark datasets, Spearman correlation and scoring loops.

use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backends::Backend;
use crate::baselines::{cond_likelihood_score, trajectory_distance};
use crate::distance::{distance_curve, LossMode, ScoredBatch};
use crate::error::{Error, Result};
use crate::pipeline::{build_batch, compare, shared_capacity_limit, CompareConfig, PcodeMode};
use crate::units::fmt_fixed;

/// Largest tolerated fraction of failed items in a run.
pub const FAILURE_BUDGET: f64 = 0.10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub id: String,
    pub text_a: String,
    pub text_b: String,
    pub human_score: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChoiceRecord {
    pub id: String,
    pub context: String,
    pub positive: String,
    pub negative: String,
}

/// A skipped input line and the reason.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedLine {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Loaded<T> {
    pub records: Vec<T>,
    pub skipped: Vec<SkippedLine>,
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.split('\n')
        .enumerate()
        .map(|(i, l)| (i + 1, l.strip_suffix('\r').unwrap_or(l)))
        .filter(|(_, l)| !l.trim().is_empty())
}

/// Parses `[id]\ttext_a\ttext_b\tscore` lines. A first line whose last
/// column is not a number is a header.
pub fn parse_pairs(text: &str) -> Result<Loaded<PairRecord>> {
    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for (n, (line_no, line)) in data_lines(text).enumerate() {
        let fields: Vec<&str> = line.split('\t').collect();
        let last = fields.last().copied().unwrap_or_default().trim();
        let score = last.parse::<f64>().ok().filter(|s| s.is_finite());
        if n == 0 && score.is_none() {
            continue;
        }
        let (id, a, b) = match fields.len() {
            3 => (format!("L{line_no}"), fields[0], fields[1]),
            4 => (fields[0].trim().to_string(), fields[1], fields[2]),
            k => {
                skipped.push(SkippedLine {
                    line: line_no,
                    reason: format!("expected 3 or 4 tab-separated columns, found {k}"),
                });
                continue;
            }
        };
        match score {
            Some(human_score) => records.push(PairRecord {
                id,
                text_a: a.to_string(),
                text_b: b.to_string(),
                human_score,
            }),
            None => skipped.push(SkippedLine {
                line: line_no,
                reason: format!("score '{last}' is not a finite number"),
            }),
        }
    }
    for s in &skipped {
        log::warn!("skipping line {}: {}", s.line, s.reason);
    }
    if records.is_empty() {
        return Err(Error::invalid("no valid pair records"));
    }
    Ok(Loaded { records, skipped })
}

pub fn load_pairs(path: impl AsRef<Path>) -> Result<Loaded<PairRecord>> {
    parse_pairs(&std::fs::read_to_string(path)?)
}

/// Parses `[id]\tcontext\tpositive\tnegative` lines; a first line starting
/// with `id` is a header.
pub fn parse_choices(text: &str) -> Result<Loaded<ChoiceRecord>> {
    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for (n, (line_no, line)) in data_lines(text).enumerate() {
        let fields: Vec<&str> = line.split('\t').collect();
        if n == 0 && fields[0].trim().eq_ignore_ascii_case("id") {
            continue;
        }
        let (id, c, p, q) = match fields.len() {
            3 => (format!("L{line_no}"), fields[0], fields[1], fields[2]),
            4 => (
                fields[0].trim().to_string(),
                fields[1],
                fields[2],
                fields[3],
            ),
            k => {
                skipped.push(SkippedLine {
                    line: line_no,
                    reason: format!("expected 3 or 4 tab-separated columns, found {k}"),
                });
                continue;
            }
        };
        if p == q {
            skipped.push(SkippedLine {
                line: line_no,
                reason: "positive equals negative".into(),
            });
            continue;
        }
        records.push(ChoiceRecord {
            id,
            context: c.to_string(),
            positive: p.to_string(),
            negative: q.to_string(),
        });
    }
    for s in &skipped {
        log::warn!("skipping line {}: {}", s.line, s.reason);
    }
    if records.is_empty() {
        return Err(Error::invalid("no valid choice records"));
    }
    Ok(Loaded { records, skipped })
}

pub fn load_choices(path: impl AsRef<Path>) -> Result<Loaded<ChoiceRecord>> {
    parse_choices(&std::fs::read_to_string(path)?)
}

/// Average ranks (1-based); ties share the mean of their positions.
fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            ranks[order[k]] = rank;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("an input is constant"));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::invalid("spearman inputs differ in length"));
    }
    if xs.len() < 2 {
        return Err(Error::UndefinedCorrelation("fewer than 2 observations"));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::invalid("spearman inputs must be finite"));
    }
    pearson(&average_ranks(xs), &average_ranks(ys))
}

/// Which quantity a benchmark scores pairs with.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ScoreKind {
    Auc,
    /// Distance at a fixed capacity in nats.
    DAtC {
        capacity: f64,
    },
    Traj,
    CondLik,
}

impl FromStr for ScoreKind {
    type Err = String;

    /// Parses `auc`, `dc` (capacity filled in later), `traj` or `condlik`.
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "auc" => Ok(ScoreKind::Auc),
            "dc" | "d_at_c" => Ok(ScoreKind::DAtC { capacity: 0.0 }),
            "traj" => Ok(ScoreKind::Traj),
            "condlik" | "cond_lik" => Ok(ScoreKind::CondLik),
            other => Err(format!(
                "unknown score '{other}', expected auc, dc, traj or condlik"
            )),
        }
    }
}

/// Similarity of two items under `score`; distances are negated so that
/// larger always means more similar.
pub fn pair_similarity(
    a: &str,
    b: &str,
    backend: &dyn Backend,
    config: &CompareConfig,
    score: ScoreKind,
) -> Result<f64> {
    match score {
        ScoreKind::Auc => Ok(-compare(a, b, backend, config)?.auc),
        ScoreKind::DAtC { capacity } => {
            let report = compare(a, b, backend, config)?;
            report
                .curve
                .distance_at(capacity)
                .map(|d| -d)
                .ok_or(Error::CapacityOutOfRange {
                    requested: capacity,
                    available: report.curve.c_max,
                })
        }
        ScoreKind::Traj => {
            let cfg = CompareConfig {
                pcode_mode: PcodeMode::ProposalMix,
                loss_mode: LossMode::EncoderOnly,
                ..config.clone()
            };
            Ok(-trajectory_distance(&build_batch(a, b, backend, &cfg)?)?)
        }
        ScoreKind::CondLik => cond_likelihood_score(a, b, backend),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairScore {
    pub id: String,
    pub score: Option<f64>,
    pub human: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    pub backend: String,
    pub score: ScoreKind,
    pub config: CompareConfig,
    /// Shared integration limit of the auc score.
    pub c_max: Option<f64>,
    pub rho_x100: f64,
    pub scored: usize,
    pub failed: usize,
    pub pairs: Vec<PairScore>,
    pub wall_clock_secs: f64,
}

impl SimilarityReport {
    /// `id,score,human`; failed pairs have an empty score.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("id,score,human\n");
        for p in &self.pairs {
            let score = p.score.map(fmt_fixed).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{}\n",
                csv_field(&p.id),
                score,
                fmt_fixed(p.human)
            ));
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn check_budget(failed: usize, total: usize) -> Result<()> {
    if failed as f64 > FAILURE_BUDGET * total as f64 {
        return Err(Error::FailureBudgetExceeded { failed, total });
    }
    Ok(())
}

/// An item scored up to the point where the shared integration range is
/// needed.
enum Prepared {
    Done(f64),
    Curve { batch: ScoredBatch, c_max: f64 },
}

fn prepare(
    a: &str,
    b: &str,
    backend: &dyn Backend,
    config: &CompareConfig,
    score: ScoreKind,
) -> Result<Prepared> {
    match score {
        ScoreKind::Auc => {
            let batch = build_batch(a, b, backend, config)?;
            let c_max = distance_curve(
                &batch,
                &config.lambda_grid,
                config.capacity_points,
                config.c_max,
            )?
            .c_max;
            Ok(Prepared::Curve { batch, c_max })
        }
        other => pair_similarity(a, b, backend, config, other).map(Prepared::Done),
    }
}

/// The explicit `c_max`, else the shared limit of the per-item ranges.
fn shared_c_max<'a>(
    config: &CompareConfig,
    items: impl Iterator<Item = &'a Prepared>,
) -> Option<f64> {
    let mut ranges = items.filter_map(|p| match p {
        Prepared::Curve { c_max, .. } => Some(*c_max),
        Prepared::Done(_) => None,
    });
    let first = ranges.next()?;
    Some(
        config
            .c_max
            .unwrap_or_else(|| shared_capacity_limit(std::iter::once(first).chain(ranges))),
    )
}

fn finish(item: Prepared, config: &CompareConfig, c_max: Option<f64>) -> Result<f64> {
    match item {
        Prepared::Done(s) => Ok(s),
        Prepared::Curve { batch, .. } => {
            Ok(-distance_curve(&batch, &config.lambda_grid, config.capacity_points, c_max)?.auc)
        }
    }
}

/// Scores every pair and correlates similarities with human scores.
///
/// With the auc score every pair is integrated over the same capacity
/// range: the explicit `c_max`, else the smallest positive auto range over
/// all pairs. Areas over different ranges are not comparable.
pub fn run_similarity_bench(
    records: &[PairRecord],
    backend: &dyn Backend,
    config: &CompareConfig,
    score: ScoreKind,
) -> Result<SimilarityReport> {
    if records.is_empty() {
        return Err(Error::invalid("no records"));
    }
    let start = Instant::now();
    let prepared: Vec<Result<Prepared>> = records
        .par_iter()
        .map(|r| prepare(&r.text_a, &r.text_b, backend, config, score))
        .collect();
    let c_max = shared_c_max(config, prepared.iter().filter_map(|p| p.as_ref().ok()));
    let pairs: Vec<PairScore> = records
        .par_iter()
        .zip(prepared.into_par_iter())
        .map(|(r, item)| {
            let result = item.and_then(|item| finish(item, config, c_max));
            if let Err(e) = &result {
                log::warn!("pair {} failed: {e}", r.id);
            }
            PairScore {
                id: r.id.clone(),
                score: result.as_ref().ok().copied(),
                human: r.human_score,
                error: result.err().map(|e| e.to_string()),
            }
        })
        .collect();
    let failed = pairs.iter().filter(|p| p.score.is_none()).count();
    check_budget(failed, pairs.len())?;
    let (xs, ys): (Vec<f64>, Vec<f64>) = pairs
        .iter()
        .filter_map(|p| p.score.map(|s| (s, p.human)))
        .unzip();
    let rho = spearman(&xs, &ys)?;
    Ok(SimilarityReport {
        backend: backend.id(),
        score,
        config: config.clone(),
        c_max,
        rho_x100: 100.0 * rho,
        scored: xs.len(),
        failed,
        pairs,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoiceOutcome {
    pub id: String,
    pub positive: Option<f64>,
    pub negative: Option<f64>,
    /// 1 for a correct choice, 0.5 for a tie, 0 otherwise.
    pub credit: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoiceReport {
    pub backend: String,
    pub score: ScoreKind,
    pub config: CompareConfig,
    /// Shared integration limit of the auc score.
    pub c_max: Option<f64>,
    pub accuracy: f64,
    pub scored: usize,
    pub failed: usize,
    pub records: Vec<ChoiceOutcome>,
    pub wall_clock_secs: f64,
}

impl ChoiceReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("id,positive,negative,credit\n");
        let f = |v: Option<f64>| v.map(fmt_fixed).unwrap_or_default();
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{}\n",
                csv_field(&r.id),
                f(r.positive),
                f(r.negative),
                f(r.credit)
            ));
        }
        out
    }
}

/// Fraction of records where the positive candidate is more similar to the
/// context than the negative one; ties earn half credit. The auc score uses
/// one capacity range for all comparisons, as in [`run_similarity_bench`].
pub fn run_choice_bench(
    records: &[ChoiceRecord],
    backend: &dyn Backend,
    config: &CompareConfig,
    score: ScoreKind,
) -> Result<ChoiceReport> {
    if records.is_empty() {
        return Err(Error::invalid("no records"));
    }
    let start = Instant::now();
    let prepared: Vec<Result<(Prepared, Prepared)>> = records
        .par_iter()
        .map(|r| {
            let p = prepare(&r.context, &r.positive, backend, config, score)?;
            let n = prepare(&r.context, &r.negative, backend, config, score)?;
            Ok((p, n))
        })
        .collect();
    let c_max = shared_c_max(
        config,
        prepared
            .iter()
            .filter_map(|p| p.as_ref().ok())
            .flat_map(|(p, n)| [p, n]),
    );
    let outcomes: Vec<ChoiceOutcome> = records
        .par_iter()
        .zip(prepared.into_par_iter())
        .map(|(r, item)| {
            let both =
                item.and_then(|(p, n)| Ok((finish(p, config, c_max)?, finish(n, config, c_max)?)));
            match both {
                Ok((p, n)) => ChoiceOutcome {
                    id: r.id.clone(),
                    positive: Some(p),
                    negative: Some(n),
                    credit: Some(if p > n {
                        1.0
                    } else if p == n {
                        0.5
                    } else {
                        0.0
                    }),
                    error: None,
                },
                Err(e) => {
                    log::warn!("record {} failed: {e}", r.id);
                    ChoiceOutcome {
                        id: r.id.clone(),
                        positive: None,
                        negative: None,
                        credit: None,
                        error: Some(e.to_string()),
                    }
                }
            }
        })
        .collect();
    let failed = outcomes.iter().filter(|o| o.credit.is_none()).count();
    check_budget(failed, outcomes.len())?;
    let credits: Vec<f64> = outcomes.iter().filter_map(|o| o.credit).collect();
    if credits.is_empty() {
        return Err(Error::FailureBudgetExceeded {
            failed,
            total: outcomes.len(),
        });
    }
    Ok(ChoiceReport {
        backend: backend.id(),
        score,
        config: config.clone(),
        c_max,
        accuracy: credits.iter().sum::<f64>() / credits.len() as f64,
        scored: credits.len(),
        failed,
        records: outcomes,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn spearman_examples() {
        assert_abs_diff_eq!(
            spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            spearman(&[1.0, 2.0, 3.0], &[30.0, 20.0, 10.0]).unwrap(),
            -1.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            spearman(&[1.0, 2.0, 2.0, 3.0], &[1.0, 2.0, 3.0, 4.0]).unwrap(),
            0.9487,
            epsilon = 1e-4
        );
        assert!(matches!(
            spearman(&[1.0, 1.0], &[1.0, 2.0]),
            Err(Error::UndefinedCorrelation(_))
        ));
    }

    #[test]
    fn pairs_parse_with_header_and_crlf() {
        let lf = "id\ta\tb\tscore\n1\tx\ty\t3.5\n2\tu\tv\t1\n";
        let crlf = lf.replace('\n', "\r\n");
        let a = parse_pairs(lf).unwrap();
        let b = parse_pairs(&crlf).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.records.len(), 2);
        assert_eq!(a.records[1].text_b, "v");
    }

    #[test]
    fn bad_scores_are_skipped_with_line_numbers() {
        let t = "x\ty\t1.0\nu\tv\thigh\nw\tz\t2\n";
        let l = parse_pairs(t).unwrap();
        assert_eq!(l.records.len(), 2);
        assert_eq!(l.skipped[0].line, 2);
        assert_eq!(l.records[0].id, "L1");
        assert!(parse_pairs("a\tb\tc\n").is_err());
    }

    #[test]
    fn choices_parse() {
        let l =
            parse_choices("id\tcontext\tpositive\tnegative\nc1\tx\ty\tz\nc2\tx\ty\ty\n").unwrap();
        assert_eq!(l.records.len(), 1);
        assert_eq!(l.skipped.len(), 1);
    }
}
