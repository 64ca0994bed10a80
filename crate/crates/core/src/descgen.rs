//! Longer descriptions for qualitative curves.
//!
//! Short description fragments ("atoms") are sampled from each item and from
//! the two-item ensemble, then composed by beam search into progressively
//! longer descriptions. For each capacity the best single description of each
//! item, and the best common one, can then be read off.

use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backends::{Backend, Description, SampleRequest};
use crate::distance::LossMode;
use crate::error::{Error, Result};
use crate::numeric::{linspace, log_mean_exp2};
use crate::oracle::constrained_argmin;
use crate::pipeline::CompareConfig;
use crate::units::fmt_fixed;

pub const DEFAULT_ATOM_PROMPT: &str =
    "Describe in 10 short bullet points what you see in the image";
pub const ATOM_JOINER: &str = ", ";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AtomSource {
    Sample1,
    Sample2,
    Ensemble,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Atom {
    pub text: String,
    pub source: AtomSource,
}

const BULLETS: [char; 4] = ['•', '·', '-', '*'];

/// Splits generated text on line and bullet boundaries, trims, and drops
/// empty and repeated fragments (first occurrence wins).
pub fn split_atoms(text: &str) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for line in text.split(['\n', '•']) {
        let t = line.trim().trim_start_matches(BULLETS).trim();
        if !t.is_empty() && seen.insert(t.to_string()) {
            out.push(t.to_string());
        }
    }
    out
}

fn collect_atoms(
    texts: impl IntoIterator<Item = String>,
    source: AtomSource,
    into: &mut Vec<Atom>,
) {
    for t in texts {
        for a in split_atoms(&t) {
            if !into.iter().any(|x| x.text == a) {
                into.push(Atom { text: a, source });
            }
        }
    }
}

/// Samples `count` descriptions of `context` with `prompt` and splits them
/// into atoms.
pub fn generate_atoms(
    backend: &dyn Backend,
    context: &str,
    count: usize,
    prompt: Option<&str>,
    config: &CompareConfig,
    source: AtomSource,
) -> Result<Vec<Atom>> {
    if count == 0 {
        return Err(Error::invalid("atom count must be at least 1"));
    }
    let samples = backend.sample_descriptions(
        context,
        &SampleRequest {
            count,
            max_tokens: config.max_tokens,
            temperature: config.temperature,
            seed: config.seed,
            prompt: prompt.map(str::to_string),
        },
    )?;
    let mut atoms = Vec::new();
    collect_atoms(
        samples.into_iter().map(|s| s.description.text),
        source,
        &mut atoms,
    );
    Ok(atoms)
}

/// Atoms from both items and, when the backend supports it, the ensemble.
pub fn generate_pair_atoms(
    backend: &dyn Backend,
    x1: &str,
    x2: &str,
    count: usize,
    prompt: Option<&str>,
    config: &CompareConfig,
) -> Result<Vec<Atom>> {
    let mut atoms = generate_atoms(backend, x1, count, prompt, config, AtomSource::Sample1)?;
    let second = generate_atoms(backend, x2, count, prompt, config, AtomSource::Sample2)?;
    collect_atoms(
        second.into_iter().map(|a| a.text),
        AtomSource::Sample2,
        &mut atoms,
    );
    let request = SampleRequest {
        count,
        max_tokens: config.max_tokens,
        temperature: config.temperature,
        seed: config.seed.wrapping_add(1),
        prompt: prompt.map(str::to_string),
    };
    match backend.ensemble_sample(x1, x2, &request) {
        Ok(ds) => collect_atoms(
            ds.into_iter().map(|d| d.text),
            AtomSource::Ensemble,
            &mut atoms,
        ),
        Err(crate::backends::BackendError::Unsupported(_)) => {}
        Err(e) => return Err(e.into()),
    }
    Ok(atoms)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamEntry {
    /// Indices into the atom list, ascending.
    pub atoms_used: Vec<usize>,
    pub text: String,
    pub proxy_score: f64,
    /// Code length in nats, filled in by [`assign_code_lengths`].
    pub code_length: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamConfig {
    pub beam_width: usize,
    pub max_atoms: usize,
    /// Weight on the negative-prompt similarity subtracted from the score.
    pub negative_penalty: f64,
}

impl Default for BeamConfig {
    fn default() -> Self {
        Self {
            beam_width: 8,
            max_atoms: 10,
            negative_penalty: 0.0,
        }
    }
}

/// A scoring function over descriptions.
pub type Scorer<'a> = dyn Fn(&str) -> Result<f64> + Sync + 'a;

fn join(atoms: &[Atom], used: &[usize]) -> String {
    used.iter()
        .map(|&i| atoms[i].text.as_str())
        .collect::<Vec<_>>()
        .join(ATOM_JOINER)
}

/// Beam search over atom subsets. Entry `L - 1` of the result holds the
/// best `beam_width` descriptions made of `L` atoms, best first. Ties are
/// broken by text.
pub fn beam_compose(
    atoms: &[Atom],
    proxy: &Scorer,
    negative: Option<&Scorer>,
    config: BeamConfig,
) -> Result<Vec<Vec<BeamEntry>>> {
    if atoms.is_empty() {
        return Err(Error::invalid("no atoms to compose"));
    }
    if config.beam_width == 0 {
        return Err(Error::invalid("beam width must be at least 1"));
    }
    let score = |text: &str| -> Result<f64> {
        let mut s = proxy(text)?;
        if let (Some(neg), true) = (negative, config.negative_penalty != 0.0) {
            s -= config.negative_penalty * neg(text)?;
        }
        Ok(s)
    };
    let max_len = config.max_atoms.min(atoms.len());
    let mut levels: Vec<Vec<BeamEntry>> = Vec::with_capacity(max_len);
    let mut frontier: Vec<Vec<usize>> = vec![Vec::new()];
    for _ in 0..max_len {
        let mut candidates: Vec<Vec<usize>> = Vec::new();
        let mut seen = HashSet::new();
        for used in &frontier {
            for i in 0..atoms.len() {
                if used.contains(&i) {
                    continue;
                }
                let mut next = used.clone();
                next.push(i);
                next.sort_unstable();
                if seen.insert(next.clone()) {
                    candidates.push(next);
                }
            }
        }
        let mut scored = candidates
            .into_par_iter()
            .map(|used| {
                let text = join(atoms, &used);
                Ok(BeamEntry {
                    proxy_score: score(&text)?,
                    atoms_used: used,
                    text,
                    code_length: None,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        scored.sort_by(|a, b| {
            b.proxy_score
                .total_cmp(&a.proxy_score)
                .then_with(|| a.text.cmp(&b.text))
        });
        scored.truncate(config.beam_width);
        frontier = scored.iter().map(|e| e.atoms_used.clone()).collect();
        levels.push(scored);
    }
    Ok(levels)
}

/// Sets each entry's code length to `-log p_code` of its text.
pub fn assign_code_lengths(entries: &mut [BeamEntry], backend: &dyn Backend) -> Result<()> {
    let lengths = entries
        .par_iter()
        .map(|e| {
            Ok(-backend
                .code_logprob(&Description::complete(e.text.clone()))?
                .total)
        })
        .collect::<Result<Vec<f64>>>()?;
    for (e, c) in entries.iter_mut().zip(lengths) {
        e.code_length = Some(c);
    }
    Ok(())
}

/// A candidate description scored against both items.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredDescription {
    pub text: String,
    pub code_length: f64,
    pub loss: [f64; 2],
}

/// Code lengths from the backend's unconditional model and losses under the
/// configured loss mode.
pub fn score_descriptions(
    texts: &[String],
    backend: &dyn Backend,
    x1: &str,
    x2: &str,
    config: &CompareConfig,
) -> Result<Vec<ScoredDescription>> {
    let prompt = config.prompt.as_deref();
    texts
        .par_iter()
        .map(|t| {
            let d = Description::complete(t.clone());
            let code_length = -backend.code_logprob(&d)?.total;
            let loss = match config.loss_mode {
                LossMode::EncoderOnly => {
                    let a = backend.cond_logprob(x1, prompt, &d)?.total;
                    let b = backend.cond_logprob(x2, prompt, &d)?.total;
                    let log_mix = log_mean_exp2(a, b);
                    [log_mix - a, log_mix - b]
                }
                LossMode::Generative => [
                    backend.reconstruction_loss(x1, &d)?,
                    backend.reconstruction_loss(x2, &d)?,
                ],
            };
            Ok(ScoredDescription {
                text: t.clone(),
                code_length,
                loss,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub capacity: f64,
    pub best_x1: Option<(String, f64)>,
    pub best_x2: Option<(String, f64)>,
    /// Minimizer of the summed loss; the reported loss is that sum.
    pub best_common: Option<(String, f64)>,
}

pub const DESCRIBE_CSV_HEADER: &str =
    "capacity,best_h_x1,loss_x1,best_h_x2,loss_x2,best_common,loss_common";

/// Best single description per item, and the best common one, among
/// entries with code length at most each capacity.
pub fn best_single_description_curve(
    entries: &[ScoredDescription],
    capacities: &[f64],
) -> Vec<CurveRow> {
    let code: Vec<f64> = entries.iter().map(|e| e.code_length).collect();
    let l1: Vec<f64> = entries.iter().map(|e| e.loss[0]).collect();
    let l2: Vec<f64> = entries.iter().map(|e| e.loss[1]).collect();
    let sum: Vec<f64> = l1.iter().zip(&l2).map(|(a, b)| a + b).collect();
    let pick = |loss: &[f64], c: f64| {
        constrained_argmin(&code, loss, c).map(|j| (entries[j].text.clone(), loss[j]))
    };
    capacities
        .iter()
        .map(|&c| CurveRow {
            capacity: c,
            best_x1: pick(&l1, c),
            best_x2: pick(&l2, c),
            best_common: pick(&sum, c),
        })
        .collect()
}

/// `points` capacities from 0 to the largest code length.
pub fn describe_capacity_grid(entries: &[ScoredDescription], points: usize) -> Vec<f64> {
    let max = entries.iter().map(|e| e.code_length).fold(0.0, f64::max);
    linspace(0.0, max, points.max(2))
}

/// CSV of the curve with capacities and losses multiplied by `scale`.
pub fn curve_csv(rows: &[CurveRow], scale: f64) -> String {
    let mut out = String::from(DESCRIBE_CSV_HEADER);
    out.push('\n');
    let cell = |v: &Option<(String, f64)>| match v {
        Some((t, l)) => format!("{},{}", quote(t), fmt_fixed(l * scale)),
        None => ",".to_string(),
    };
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            fmt_fixed(r.capacity * scale),
            cell(&r.best_x1),
            cell(&r.best_x2),
            cell(&r.best_common)
        ));
    }
    out
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\"\""))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn atoms(texts: &[&str]) -> Vec<Atom> {
        texts
            .iter()
            .map(|t| Atom {
                text: t.to_string(),
                source: AtomSource::Sample1,
            })
            .collect()
    }

    #[test]
    fn splitting_bullets_and_duplicates() {
        assert_eq!(split_atoms("• a\n• b"), vec!["a", "b"]);
        assert_eq!(split_atoms("a\na\nb"), vec!["a", "b"]);
        assert_eq!(split_atoms("- red\n  * round  \n\n"), vec!["red", "round"]);
    }

    #[test]
    fn beam_width_one_picks_best_atom() {
        let a = atoms(&["low", "high"]);
        let scorer = |t: &str| Ok(if t == "high" { 5.0 } else { 3.0 });
        let levels = beam_compose(
            &a,
            &scorer,
            None,
            BeamConfig {
                beam_width: 1,
                max_atoms: 2,
                negative_penalty: 0.0,
            },
        )
        .unwrap();
        assert_eq!(levels[0][0].text, "high");
        assert_eq!(levels[1][0].atoms_used, vec![0, 1]);
    }

    #[test]
    fn negative_prompt_penalty_changes_winner() {
        let a = atoms(&["cat", "dog"]);
        let proxy = |t: &str| Ok(if t == "cat" { 2.0 } else { 1.5 });
        let neg = |t: &str| Ok(if t == "cat" { 1.0 } else { 0.0 });
        let cfg = BeamConfig {
            beam_width: 1,
            max_atoms: 1,
            negative_penalty: 1.0,
        };
        assert_eq!(
            beam_compose(&a, &proxy, Some(&neg), cfg).unwrap()[0][0].text,
            "dog"
        );
    }

    #[test]
    fn empty_atoms_rejected() {
        let scorer = |_: &str| Ok(0.0);
        assert!(beam_compose(&[], &scorer, None, BeamConfig::default()).is_err());
    }

    #[test]
    fn switchover_at_longer_code_length() {
        let entries = vec![
            ScoredDescription {
                text: "short".into(),
                code_length: 1.0,
                loss: [5.0, 6.0],
            },
            ScoredDescription {
                text: "longer one".into(),
                code_length: 3.0,
                loss: [2.0, 1.0],
            },
        ];
        let rows = best_single_description_curve(&entries, &[0.5, 1.0, 2.9, 3.0, 4.0]);
        assert!(rows[0].best_x1.is_none());
        assert_eq!(rows[1].best_x1.as_ref().unwrap().0, "short");
        assert_eq!(rows[2].best_common.as_ref().unwrap().0, "short");
        assert_eq!(rows[3].best_x1.as_ref().unwrap().0, "longer one");
        assert_eq!(rows[3].best_common.as_ref().unwrap().1, 3.0);
        let csv = curve_csv(&rows, 1.0);
        assert!(csv.lines().nth(1).unwrap().starts_with("0.500000000,,,,,,"));
    }
}
