//! Small numeric helpers shared across modules.

/// `log Σ_j w_j exp(x_j)` with max subtraction. Weights multiply linearly so
/// integer multiplicities stay exact.
pub fn weighted_log_sum_exp(logits: &[f64], weights: &[f64]) -> f64 {
    debug_assert_eq!(logits.len(), weights.len());
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = logits
        .iter()
        .zip(weights)
        .map(|(&x, &w)| w * (x - max).exp())
        .sum();
    max + sum.ln()
}

pub fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + logits.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

/// `log(½ e^a + ½ e^b)`.
pub fn log_mean_exp2(a: f64, b: f64) -> f64 {
    let max = a.max(b);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + (0.5 * (a - max).exp() + 0.5 * (b - max).exp()).ln()
}

/// Normalized softmax; `weights` act as count multipliers.
pub fn weighted_softmax(logits: &[f64], weights: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let unnorm: Vec<f64> = logits
        .iter()
        .zip(weights)
        .map(|(&x, &w)| w * (x - max).exp())
        .collect();
    let total: f64 = unnorm.iter().sum();
    unnorm.into_iter().map(|u| u / total).collect()
}

/// `n` evenly spaced points on `[start, stop]`, endpoints exact.
pub fn linspace(start: f64, stop: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![start],
        _ => {
            let step = (stop - start) / (n - 1) as f64;
            let mut v: Vec<f64> = (0..n).map(|k| start + step * k as f64).collect();
            v[n - 1] = stop;
            v
        }
    }
}

/// Trapezoidal integral of sampled `(x, y)` pairs; `xs` must be non-decreasing.
pub fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
    xs.windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
        // `sum` starts at -0.0, which would print as "-0" for empty areas.
        .fold(0.0, |acc, v| acc + v)
}

/// Piecewise-linear interpolation through `(xs, ys)` with `xs` non-decreasing.
/// Returns `None` when `x` lies outside `[xs[0], xs[last]]`.
pub fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> Option<f64> {
    let n = xs.len();
    if n == 0 || x < xs[0] || x > xs[n - 1] {
        return None;
    }
    let idx = xs.partition_point(|&v| v < x);
    if idx == 0 {
        return Some(ys[0]);
    }
    let (x0, x1) = (xs[idx - 1], xs[idx]);
    let (y0, y1) = (ys[idx - 1], ys[idx]);
    let t = (x - x0) / (x1 - x0);
    Some(y0 + t * (y1 - y0))
}

/// Effective sample size `1 / Σ α²` of a normalized weight vector.
pub fn effective_sample_size(weights: &[f64]) -> f64 {
    1.0 / weights.iter().map(|w| w * w).sum::<f64>()
}
