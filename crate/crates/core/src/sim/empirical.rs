use serde::{Deserialize, Serialize};
use statrs::function::beta::inv_beta_reg;
use statrs::function::gamma::gamma_ur;

use crate::error::{Error, Result};

/// Two-sided confidence level used throughout.
pub const CONFIDENCE: f64 = 0.99;
/// Normal quantile matching [`CONFIDENCE`].
pub const Z_99: f64 = 2.576;
pub const MIN_BATCHES: usize = 30;
pub const MIN_EFFECTIVE: f64 = 100.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleKind {
    /// Independent draws.
    Iid,
    /// Successive states of one stationary path.
    Path,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailEstimate {
    pub estimate: f64,
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
    pub n_eff: f64,
}

/// Exact two-sided Clopper-Pearson interval for `k` successes in `n`
/// trials; fractional counts are allowed for effective sample sizes.
pub fn clopper_pearson(k: f64, n: f64, confidence: f64) -> (f64, f64) {
    let half = 0.5 * (1.0 - confidence);
    let lo = if k <= 0.0 {
        0.0
    } else if k >= n {
        half.powf(1.0 / n)
    } else {
        inv_beta_reg(k, n - k + 1.0, half)
    };
    let hi = if k <= 0.0 {
        1.0 - half.powf(1.0 / n)
    } else if k >= n {
        1.0
    } else {
        inv_beta_reg(k + 1.0, n - k, 1.0 - half)
    };
    (lo, hi)
}

fn batch_count(n: usize) -> usize {
    ((n as f64).sqrt() as usize).max(MIN_BATCHES).min(n)
}

/// Batch means of the leading `batches * size` values.
fn batch_means(values: &[f64]) -> (Vec<f64>, usize) {
    let batches = batch_count(values.len());
    let size = values.len() / batches;
    let means = values
        .chunks_exact(size)
        .take(batches)
        .map(|c| c.iter().sum::<f64>() / size as f64)
        .collect();
    (means, size)
}

/// Frequency of `value > level` with a 99% Clopper-Pearson interval. Path
/// samples are decorrelated by batch means: the effective size is
/// `n p(1-p) / (m Var(batch means))` for batches of length `m`.
pub fn empirical_tail(values: &[f64], level: f64, kind: SampleKind) -> Result<TailEstimate> {
    let n = values.len();
    if (n as f64) < MIN_EFFECTIVE {
        return Err(Error::InsufficientSamples {
            effective: n as f64,
        });
    }
    let hits: Vec<f64> = values
        .iter()
        .map(|v| if *v > level { 1.0 } else { 0.0 })
        .collect();
    let k: f64 = hits.iter().sum();
    let p = k / n as f64;
    let n_eff = match kind {
        SampleKind::Iid => n as f64,
        SampleKind::Path => {
            let (means, size) = batch_means(&hits);
            let b = means.len() as f64;
            let grand = means.iter().sum::<f64>() / b;
            let var = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (b - 1.0);
            let long_run = size as f64 * var;
            if long_run > 0.0 && p > 0.0 && p < 1.0 {
                (n as f64 * p * (1.0 - p) / long_run).min(n as f64)
            } else {
                n as f64
            }
        }
    };
    if n_eff < MIN_EFFECTIVE {
        return Err(Error::InsufficientSamples { effective: n_eff });
    }
    let (lo, hi) = clopper_pearson(p * n_eff, n_eff, CONFIDENCE);
    Ok(TailEstimate {
        estimate: p,
        lo,
        hi,
        n,
        n_eff,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanInterval {
    pub mean: f64,
    pub half_width: f64,
    pub batches: usize,
}

/// Mean of a stationary sequence with a 99% batch-means half-width.
pub fn batch_mean_interval(values: &[f64]) -> Result<MeanInterval> {
    if values.len() < MIN_BATCHES * 2 {
        return Err(Error::InsufficientSamples {
            effective: values.len() as f64,
        });
    }
    let (means, _) = batch_means(values);
    let b = means.len() as f64;
    let mean = means.iter().sum::<f64>() / b;
    let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (b - 1.0);
    Ok(MeanInterval {
        mean,
        half_width: Z_99 * (var / b).sqrt(),
        batches: means.len(),
    })
}

/// Pearson goodness-of-fit p-value of `observed` frequencies (summing to
/// one) from `n` effective observations against `expected` probabilities.
/// Cells with expected count below 5 are pooled into one.
pub fn chi_square_gof(observed: &[f64], expected: &[f64], n: f64) -> Result<f64> {
    if observed.len() != expected.len() || observed.is_empty() {
        return Err(Error::param("observed", "must match expected in length"));
    }
    let mut stat = 0.0;
    let mut cells = 0usize;
    let (mut pool_o, mut pool_e) = (0.0, 0.0);
    for (o, e) in observed.iter().zip(expected) {
        if n * e >= 5.0 {
            stat += n * (o - e).powi(2) / e;
            cells += 1;
        } else {
            pool_o += o;
            pool_e += e;
        }
    }
    if pool_e > 0.0 {
        stat += n * (pool_o - pool_e).powi(2) / pool_e;
        cells += 1;
    }
    if cells < 2 {
        return Err(Error::param("expected", "need at least two cells"));
    }
    let df = (cells - 1) as f64;
    Ok(if stat > 0.0 {
        gamma_ur(0.5 * df, 0.5 * stat)
    } else {
        1.0
    })
}
