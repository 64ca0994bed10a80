//! Reference similarity measures: trajectory distance, conditional
//! likelihood and normalized compression distance (NCD).

use std::io::Write as _;

use flate2::write::DeflateEncoder;
use flate2::Compression;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backends::{Backend, Description};
use crate::distance::{gibbs_weights, LossMode, Sample, ScoredBatch};
use crate::error::{Error, Result};
use crate::units::fmt_fixed;

/// `E_π |log p(h|x₁) - log p(h|x₂)|` over the pooled proposal draws.
///
/// Needs an encoder-only batch whose code distribution is the proposal
/// mixture: then `ℓ̄₁ - ℓ̄₂` is the log-ratio of the two conditionals and the
/// λ = 0 weights are the proposal weights.
pub fn trajectory_distance(batch: &ScoredBatch) -> Result<f64> {
    if batch.mode() != LossMode::EncoderOnly {
        return Err(Error::invalid(
            "trajectory distance needs encoder-only losses",
        ));
    }
    let w = gibbs_weights(batch, 0.0, Sample::First)?;
    let (l1, l2) = (batch.loss(Sample::First), batch.loss(Sample::Second));
    Ok(w.iter()
        .zip(l1.iter().zip(l2))
        .map(|(w, (a, b))| w * (a - b).abs())
        .sum())
}

/// `½ (log p(x₂|x₁) + log p(x₁|x₂))`, each item scored as a complete
/// continuation of the other. Higher means more similar.
pub fn cond_likelihood_score(x1: &str, x2: &str, backend: &dyn Backend) -> Result<f64> {
    let forward = backend
        .cond_logprob(x1, None, &Description::complete(x2))?
        .total;
    let backward = backend
        .cond_logprob(x2, None, &Description::complete(x1))?
        .total;
    let (lo, hi) = if x1 <= x2 {
        (forward, backward)
    } else {
        (backward, forward)
    };
    Ok(0.5 * (lo + hi))
}

/// A lossless compressor reporting compressed sizes.
pub trait Compressor: Sync {
    fn id(&self) -> &str;
    fn compressed_bits(&self, data: &[u8]) -> u64;
}

/// Raw deflate at maximum compression.
#[derive(Debug, Clone, Copy, Default)]
pub struct Deflate;

impl Compressor for Deflate {
    fn id(&self) -> &str {
        "deflate-9"
    }

    fn compressed_bits(&self, data: &[u8]) -> u64 {
        let mut enc =
            DeflateEncoder::new(Vec::with_capacity(data.len() / 2 + 64), Compression::best());
        enc.write_all(data).expect("writing to a Vec cannot fail");
        8 * enc.finish().expect("writing to a Vec cannot fail").len() as u64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NcdResult {
    pub value: f64,
    pub z_x: u64,
    pub z_y: u64,
    pub z_xy: u64,
    pub compressor: String,
}

/// `(Z(xy) - min(Z(x), Z(y))) / max(Z(x), Z(y))`.
pub fn ncd(a: &[u8], b: &[u8], compressor: &dyn Compressor) -> Result<NcdResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("ncd inputs must be nonempty"));
    }
    let joint: Vec<u8> = a.iter().chain(b).copied().collect();
    let (z_x, z_y, z_xy) = (
        compressor.compressed_bits(a),
        compressor.compressed_bits(b),
        compressor.compressed_bits(&joint),
    );
    Ok(NcdResult {
        value: ncd_from_sizes(z_x as f64, z_y as f64, z_xy as f64),
        z_x,
        z_y,
        z_xy,
        compressor: compressor.id().to_string(),
    })
}

fn ncd_from_sizes(z_x: f64, z_y: f64, z_xy: f64) -> f64 {
    (z_xy - z_x.min(z_y)) / z_x.max(z_y)
}

/// Lower bound `Z(x) + Z(y) - Z(s)` on the joint size of two noisy copies
/// of a shared structure `s`.
pub fn ncd_joint_lower_bound(z_x: f64, z_y: f64, z_s: f64) -> Result<f64> {
    if !(z_x > 0.0 && z_y > 0.0 && z_s > 0.0) {
        return Err(Error::invalid("compressed sizes must be positive"));
    }
    let bound = z_x + z_y - z_s;
    if bound <= 0.0 {
        return Err(Error::invalid(format!(
            "joint bound {bound} is not positive"
        )));
    }
    Ok(bound)
}

/// Bernoulli entropy in nats.
pub fn bernoulli_entropy(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid(format!("p = {p} is outside [0, 1]")));
    }
    let term = |q: f64| if q > 0.0 { -q * q.ln() } else { 0.0 };
    Ok(term(p) + term(1.0 - p))
}

/// Low-complexity binary image families for the noise experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pattern {
    /// Filled disk centered in a white square, radius 0.3 of the side.
    #[default]
    Disk,
}

impl std::str::FromStr for Pattern {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "disk" => Ok(Pattern::Disk),
            other => Err(format!("unknown pattern '{other}', expected disk")),
        }
    }
}

impl Pattern {
    /// Row-major pixels of a `side × side` image, `true` for black.
    pub fn render(self, side: usize) -> Vec<bool> {
        match self {
            Pattern::Disk => {
                let c = (side as f64 - 1.0) / 2.0;
                let r2 = (0.3 * side as f64).powi(2);
                (0..side * side)
                    .map(|i| {
                        let (y, x) = ((i / side) as f64, (i % side) as f64);
                        (x - c).powi(2) + (y - c).powi(2) <= r2
                    })
                    .collect()
            }
        }
    }
}

/// Packs pixels 8 per byte, most significant bit first.
pub fn pack_bits(pixels: &[bool]) -> Vec<u8> {
    pixels
        .chunks(8)
        .map(|chunk| {
            chunk
                .iter()
                .enumerate()
                .fold(0u8, |acc, (i, &b)| acc | (u8::from(b) << (7 - i)))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseExperimentPoint {
    /// Pixel count `D`.
    pub dimension: usize,
    pub p: f64,
    pub ncd: f64,
    /// `1 - Z(s) / (D · H(p))`, clamped to `[0, 1]`, with `H` in bits.
    pub predicted: f64,
    pub z_s_bits: u64,
}

pub const NOISE_CSV_HEADER: &str = "dimension,p,ncd_measured,ncd_predicted,z_s_bits";

/// NCD between two independently noised copies of `pattern` at each side
/// length in `sides` (`D = side²`). Deterministic given `seed`.
pub fn noise_experiment(
    pattern: Pattern,
    p: f64,
    sides: &[usize],
    seed: u64,
    compressor: &dyn Compressor,
) -> Result<Vec<NoiseExperimentPoint>> {
    if !(0.0..=0.5).contains(&p) {
        return Err(Error::invalid(format!(
            "noise rate {p} is outside [0, 0.5]"
        )));
    }
    if sides.contains(&0) {
        return Err(Error::invalid("image side must be at least 1"));
    }
    let entropy_bits = bernoulli_entropy(p)? / std::f64::consts::LN_2;
    sides
        .par_iter()
        .enumerate()
        .map(|(k, &side)| {
            let s = pattern.render(side);
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(k as u64));
            let mut noisy = || -> Vec<bool> { s.iter().map(|&b| b ^ rng.gen_bool(p)).collect() };
            let (x, y) = (noisy(), noisy());
            let z_s = compressor.compressed_bits(&pack_bits(&s));
            let dimension = side * side;
            let measured = ncd(&pack_bits(&x), &pack_bits(&y), compressor)?;
            let predicted = if entropy_bits > 0.0 {
                (1.0 - z_s as f64 / (dimension as f64 * entropy_bits)).clamp(0.0, 1.0)
            } else {
                0.0
            };
            Ok(NoiseExperimentPoint {
                dimension,
                p,
                ncd: measured.value,
                predicted,
                z_s_bits: z_s,
            })
        })
        .collect()
}

/// NCD with the joint size replaced by `Z(x) + Z(y) - Z(s)`.
pub fn ncd_with_joint_bound(result: &NcdResult, z_s: u64) -> Result<f64> {
    let joint = ncd_joint_lower_bound(result.z_x as f64, result.z_y as f64, z_s as f64)?;
    Ok(ncd_from_sizes(result.z_x as f64, result.z_y as f64, joint))
}

pub fn noise_csv(points: &[NoiseExperimentPoint]) -> String {
    let mut out = String::from(NOISE_CSV_HEADER);
    out.push('\n');
    for pt in points {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            pt.dimension,
            fmt_fixed(pt.p),
            fmt_fixed(pt.ncd),
            fmt_fixed(pt.predicted),
            pt.z_s_bits
        ));
    }
    out
}
