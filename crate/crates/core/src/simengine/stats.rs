use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::ScenarioMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Percentiles {
    pub p5: f64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub p95: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: u64,
}

/// Empirical statistics of one column. `stddev` is the population value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleStats {
    pub mean: f64,
    pub stddev: f64,
    pub min: f64,
    pub max: f64,
    pub percentiles: Percentiles,
    pub histogram: Vec<HistogramBin>,
}

pub fn summarize(matrix: &ScenarioMatrix) -> Vec<SampleStats> {
    matrix.columns.iter().map(|c| summarize_column(c)).collect()
}

pub(crate) fn mean_and_variance(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var)
}

/// Nearest-rank percentile: the value at rank ⌈pct·N/100⌉ (1-based).
fn nearest_rank(sorted: &[f64], pct: usize) -> f64 {
    let n = sorted.len();
    let rank = (pct * n).div_ceil(100).max(1);
    sorted[rank - 1]
}

/// ⌈√N⌉ clamped to [10, 200].
pub fn bin_count(n: usize) -> usize {
    let mut r = libm::sqrt(n as f64) as usize;
    while r * r < n {
        r += 1;
    }
    while r > 0 && (r - 1) * (r - 1) >= n {
        r -= 1;
    }
    r.clamp(10, 200)
}

/// Panics on an empty column.
pub fn summarize_column(values: &[f64]) -> SampleStats {
    assert!(!values.is_empty(), "cannot summarize an empty column");
    let (mean, var) = mean_and_variance(values);
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let min = sorted[0];
    let max = sorted[sorted.len() - 1];
    let percentiles = Percentiles {
        p5: nearest_rank(&sorted, 5),
        p25: nearest_rank(&sorted, 25),
        p50: nearest_rank(&sorted, 50),
        p75: nearest_rank(&sorted, 75),
        p95: nearest_rank(&sorted, 95),
    };

    let bins = bin_count(values.len());
    let width = (max - min) / bins as f64;
    let mut histogram: Vec<HistogramBin> = (0..bins)
        .map(|b| HistogramBin {
            lo: min + width * b as f64,
            hi: if b + 1 == bins { max } else { min + width * (b + 1) as f64 },
            count: 0,
        })
        .collect();
    for &v in &sorted {
        let b = if width > 0.0 {
            (((v - min) / width) as usize).min(bins - 1)
        } else {
            0
        };
        histogram[b].count += 1;
    }

    SampleStats {
        mean,
        stddev: libm::sqrt(var),
        min,
        max,
        percentiles,
        histogram,
    }
}
