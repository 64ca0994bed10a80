use rand::Rng;

use crate::numeric::log_sum_exp;

/// Draws an index from `exp(log_probs / temperature)`, renormalized.
/// Entries at `-∞` are never drawn.
pub(crate) fn sample_index<R: Rng>(log_probs: &[f64], temperature: f64, rng: &mut R) -> usize {
    let scaled: Vec<f64> = log_probs.iter().map(|l| l / temperature).collect();
    let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = scaled.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    let mut last_positive = 0;
    for (i, w) in weights.iter().enumerate() {
        if *w <= 0.0 {
            continue;
        }
        last_positive = i;
        if u < *w {
            return i;
        }
        u -= w;
    }
    last_positive
}

/// Token distribution `∝ exp(½ a + ½ b)`, returned as log-probs.
pub(crate) fn ensemble_log_probs(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mean: Vec<f64> = a.iter().zip(b).map(|(x, y)| 0.5 * x + 0.5 * y).collect();
    let z = log_sum_exp(&mean);
    mean.into_iter().map(|m| m - z).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn low_temperature_is_greedy() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let lp = [(0.3f64).ln(), (0.5f64).ln(), (0.2f64).ln()];
        for _ in 0..100 {
            assert_eq!(sample_index(&lp, 1e-4, &mut rng), 1);
        }
    }

    #[test]
    fn never_draws_impossible_tokens() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let lp = [f64::NEG_INFINITY, 0.0, f64::NEG_INFINITY];
        for _ in 0..100 {
            assert_eq!(sample_index(&lp, 1.0, &mut rng), 1);
        }
    }

    #[test]
    fn ensemble_of_equal_terms_is_identity() {
        let a = [(0.25f64).ln(), (0.75f64).ln()];
        let e = ensemble_log_probs(&a, &a);
        assert!((e[0] - a[0]).abs() < 1e-12 && (e[1] - a[1]).abs() < 1e-12);
    }
}
