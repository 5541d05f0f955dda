//! Paired-sample statistics: goal-differential summaries, the exact
//! Wilcoxon signed-rank test and Benjamini-Hochberg adjustment.
//!
//! Zero differences are dropped before ranking. Tied magnitudes get
//! mid-ranks.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::batch::Execution;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("no samples")]
    Empty,
    #[error("non-finite sample in row {0}")]
    NonFinite(usize),
    #[error("p-value {0} outside [0, 1]")]
    PValue(f64),
    #[error("alpha {0} outside (0, 1)")]
    Alpha(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedRow {
    pub label: String,
    pub a: f64,
    pub b: f64,
}

/// Rows of `(label, condition a, condition b)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PairedSamples {
    pub rows: Vec<PairedRow>,
}

impl PairedSamples {
    pub fn from_pairs(pairs: &[(f64, f64)]) -> Self {
        PairedSamples {
            rows: pairs
                .iter()
                .enumerate()
                .map(|(i, &(a, b))| PairedRow {
                    label: format!("{}", i + 1),
                    a,
                    b,
                })
                .collect(),
        }
    }

    /// Differences `b - a`, in row order.
    pub fn differences(&self) -> Result<Vec<f64>, StatsError> {
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                if r.a.is_finite() && r.b.is_finite() {
                    Ok(r.b - r.a)
                } else {
                    Err(StatsError::NonFinite(i))
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub mean: f64,
    /// Sample standard deviation; 0 when only one value exists.
    pub std: f64,
    /// Standard deviation with an `n` denominator.
    pub population_std: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DifferentialSummary {
    pub n: usize,
    pub a: ConditionSummary,
    pub b: ConditionSummary,
    /// False when `n == 1` and the standard deviations are placeholders.
    pub std_defined: bool,
}

fn summarize(values: impl Iterator<Item = f64> + Clone, n: usize) -> ConditionSummary {
    let mean = values.clone().sum::<f64>() / n as f64;
    let ss: f64 = values.map(|v| (v - mean) * (v - mean)).sum();
    let std = if n > 1 { (ss / (n - 1) as f64).sqrt() } else { 0.0 };
    ConditionSummary {
        mean,
        std,
        population_std: (ss / n as f64).sqrt(),
    }
}

/// Per-condition mean and sample standard deviation of paired goal
/// differentials.
pub fn goal_differential(pairs: &PairedSamples) -> Result<DifferentialSummary, StatsError> {
    let n = pairs.rows.len();
    if n == 0 {
        return Err(StatsError::Empty);
    }
    pairs.differences()?;
    Ok(DifferentialSummary {
        n,
        a: summarize(pairs.rows.iter().map(|r| r.a), n),
        b: summarize(pairs.rows.iter().map(|r| r.b), n),
        std_defined: n > 1,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Sum of ranks of positive differences.
    pub w_plus: f64,
    pub w_minus: f64,
    /// Differences left after dropping zeros.
    pub n: usize,
    pub p: f64,
    /// Every difference was zero; `p` is reported as 1.
    pub degenerate: bool,
}

/// Largest reduced sample size tested by enumerating every sign pattern;
/// larger samples use the exact null distribution by convolution.
pub const ENUMERATION_LIMIT: usize = 20;

/// Mid-ranks of `|d|`, doubled so they stay integral.
fn doubled_midranks(abs: &[f64]) -> Vec<u64> {
    let mut order: Vec<usize> = (0..abs.len()).collect();
    order.sort_by(|&i, &j| abs[i].total_cmp(&abs[j]));
    let mut ranks = vec![0u64; abs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && abs[order[j + 1]] == abs[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their mean; doubled: (i+1)+(j+1)
        let r = (i + 1 + j + 1) as u64;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Counts sign patterns whose doubled positive-rank sum is `>= w` and
/// `<= w`, for masks whose top `ranks.len() - low` bits equal `high`.
fn count_block(ranks: &[u64], low: usize, high: u64, w: u64) -> (u64, u64) {
    let base: u64 = ranks[low..]
        .iter()
        .enumerate()
        .filter(|(i, _)| high >> i & 1 == 1)
        .map(|(_, r)| r)
        .sum();
    let (mut ge, mut le) = (0u64, 0u64);
    let mut sum = base;
    // walk the low bits in Gray-code order, one rank flips per step
    for step in 0u64..(1 << low) {
        if step > 0 {
            let bit = step.trailing_zeros() as usize;
            let gray = step ^ (step >> 1);
            if gray >> bit & 1 == 1 {
                sum += ranks[bit];
            } else {
                sum -= ranks[bit];
            }
        }
        if sum >= w {
            ge += 1;
        }
        if sum <= w {
            le += 1;
        }
    }
    (ge, le)
}

fn enumerate_tails(ranks: &[u64], w: u64, exec: Execution) -> (u64, u64) {
    let n = ranks.len();
    let low = n.min(12);
    let blocks = 1u64 << (n - low);
    exec.map_range(blocks, |high| count_block(ranks, low, high, w))
        .into_iter()
        .fold((0, 0), |(a, b), (c, d)| (a + c, b + d))
}

/// Null distribution of the doubled rank sum, as probabilities.
fn convolve_tails(ranks: &[u64], w: u64) -> (f64, f64) {
    let total: u64 = ranks.iter().sum();
    let mut dist = vec![0.0f64; total as usize + 1];
    dist[0] = 1.0;
    let mut reach = 0usize;
    for &r in ranks {
        let r = r as usize;
        for s in (0..=reach).rev() {
            let p = dist[s] * 0.5;
            dist[s] = p;
            dist[s + r] += p;
        }
        reach += r;
    }
    let w = w as usize;
    let ge: f64 = dist[w.min(dist.len())..].iter().sum();
    let le: f64 = dist[..=w.min(dist.len() - 1)].iter().sum();
    (ge, le)
}

/// Exact two-sided Wilcoxon signed-rank test on `b - a`.
pub fn wilcoxon_signed_rank(samples: &PairedSamples) -> Result<WilcoxonResult, StatsError> {
    wilcoxon_signed_rank_with(samples, Execution::default())
}

pub fn wilcoxon_signed_rank_with(samples: &PairedSamples, exec: Execution) -> Result<WilcoxonResult, StatsError> {
    if samples.rows.is_empty() {
        return Err(StatsError::Empty);
    }
    let d: Vec<f64> = samples.differences()?.into_iter().filter(|&x| x != 0.0).collect();
    if d.is_empty() {
        return Ok(WilcoxonResult {
            w_plus: 0.0,
            w_minus: 0.0,
            n: 0,
            p: 1.0,
            degenerate: true,
        });
    }
    let abs: Vec<f64> = d.iter().map(|x| x.abs()).collect();
    let ranks = doubled_midranks(&abs);
    let w2: u64 = d.iter().zip(&ranks).filter(|(x, _)| **x > 0.0).map(|(_, r)| r).sum();
    let total: u64 = ranks.iter().sum();
    let n = d.len();
    let (ge, le) = if n <= ENUMERATION_LIMIT {
        let (ge, le) = enumerate_tails(&ranks, w2, exec);
        let all = (1u64 << n) as f64;
        (ge as f64 / all, le as f64 / all)
    } else {
        convolve_tails(&ranks, w2)
    };
    Ok(WilcoxonResult {
        w_plus: w2 as f64 / 2.0,
        w_minus: (total - w2) as f64 / 2.0,
        n,
        p: (2.0 * ge.min(le)).min(1.0),
        degenerate: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BhResult {
    pub rejected: Vec<bool>,
    pub adjusted: Vec<f64>,
}

/// Benjamini-Hochberg step-up at level `alpha`, results in input order.
pub fn bh_adjust(p_values: &[f64], alpha: f64) -> Result<BhResult, StatsError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(StatsError::Alpha(alpha));
    }
    if let Some(&p) = p_values.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(StatsError::PValue(p));
    }
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| p_values[i].total_cmp(&p_values[j]));
    let k = (1..=m)
        .rev()
        .find(|&k| p_values[order[k - 1]] <= k as f64 * alpha / m as f64)
        .unwrap_or(0);
    let mut rejected = vec![false; m];
    for &i in &order[..k] {
        rejected[i] = true;
    }
    let mut adjusted = vec![0.0; m];
    let mut running = 1.0f64;
    for rank in (1..=m).rev() {
        let i = order[rank - 1];
        running = running.min(m as f64 * p_values[i] / rank as f64);
        adjusted[i] = running.min(1.0);
    }
    Ok(BhResult { rejected, adjusted })
}
