//! Permutation-based multiplicity control and the baseline per-column
//! F-test suite.
//!
//! The resampling procedures share one rejection rule: the threshold `t` is
//! the ⌊α(B+1)⌋-th smallest resampled value (the 0-th order statistic is
//! −∞, so too small a B forces no rejections) and hypothesis i is rejected
//! iff its original p-value is strictly below `t`.

use rayon::prelude::*;

use crate::dataset::{pool_and_split, GroupedSample};
use crate::error::{Error, Result};
use crate::statfun::{child_seed, f_sf, seeded_rng, streams, Pvalue};

/// Outcome of a resampling run: original p-value(s), the per-replicate
/// resampled values, the order-statistic threshold, and the rejected
/// hypothesis indices.
#[derive(Debug, Clone)]
pub struct PermutationResult {
    /// P₀ (single test) or P₀₁..P₀ₘ (multiple hypotheses).
    pub original: Vec<Pvalue>,
    /// One value per replicate: P̃*_b for a single test, the minimum of the
    /// replicate's p-vector otherwise.
    pub resampled_min: Vec<f64>,
    /// The ⌊α(B+1)⌋-th smallest resampled value; −∞ when B is too small
    /// for any rejection, `None` when no resampling was performed (plain
    /// Holm/BY/unadjusted paths).
    pub threshold: Option<f64>,
    /// Indices i with original[i] < threshold, ascending.
    pub rejections: Vec<usize>,
    pub b_used: usize,
}

impl PermutationResult {
    pub fn rejected(&self) -> bool {
        !self.rejections.is_empty()
    }
}

/// The ⌊α(B+1)⌋-th smallest of `resampled`; −∞ when that index is 0.
pub fn order_statistic_threshold(resampled: &[f64], level_alpha: f64) -> f64 {
    let b = resampled.len();
    let k = ((level_alpha * (b as f64 + 1.0)) + 1e-9).floor() as usize;
    if k == 0 {
        return f64::NEG_INFINITY;
    }
    let mut sorted = resampled.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    sorted[k - 1]
}

fn check_level(level_alpha: f64) -> Result<()> {
    if !(level_alpha > 0.0 && level_alpha < 1.0) {
        return Err(Error::invalid_argument(format!(
            "significance level must lie in (0,1), got {level_alpha}"
        )));
    }
    Ok(())
}

fn check_b(b: usize) -> Result<()> {
    if b == 0 {
        return Err(Error::invalid_argument(
            "number of permutation replicates must be >= 1",
        ));
    }
    Ok(())
}

fn permuted_copy(g: &GroupedSample, seed: u64, replicate: u64) -> Result<GroupedSample> {
    let mut rng = seeded_rng(child_seed(seed, streams::PERMUTE, replicate));
    pool_and_split(g, &g.group_sizes(), &mut rng)
}

fn replicate_err(replicate: usize, e: Error) -> Error {
    Error::Numerical(format!("permutation replicate {replicate}: {e}"))
}

/// Permutation test for a single p-value statistic (resampling for a single
/// hypothesis). `stat_fn` must be pure given (data, seed).
pub fn resample_single<F>(
    stat_fn: F,
    g: &GroupedSample,
    b: usize,
    level_alpha: f64,
    seed: u64,
) -> Result<PermutationResult>
where
    F: Fn(&GroupedSample, u64) -> Result<Pvalue> + Sync,
{
    check_b(b)?;
    check_level(level_alpha)?;
    let p0 = stat_fn(g, child_seed(seed, streams::STAT, 0))?;
    let resampled: Vec<f64> = (1..=b)
        .into_par_iter()
        .map(|i| {
            let gp = permuted_copy(g, seed, i as u64).map_err(|e| replicate_err(i, e))?;
            stat_fn(&gp, child_seed(seed, streams::STAT, i as u64))
                .map(Pvalue::value)
                .map_err(|e| replicate_err(i, e))
        })
        .collect::<Result<_>>()?;
    let threshold = order_statistic_threshold(&resampled, level_alpha);
    let rejections = if p0.value() < threshold { vec![0] } else { vec![] };
    Ok(PermutationResult {
        original: vec![p0],
        resampled_min: resampled,
        threshold: Some(threshold),
        rejections,
        b_used: b,
    })
}

/// Min-p permutation control for a fixed family of hypotheses (resampling
/// for multiple hypotheses). Controls FWER under any dependence structure.
pub fn resample_minp<F>(
    stat_fn: F,
    g: &GroupedSample,
    b: usize,
    level_alpha: f64,
    seed: u64,
) -> Result<PermutationResult>
where
    F: Fn(&GroupedSample, u64) -> Result<Vec<Pvalue>> + Sync,
{
    check_b(b)?;
    check_level(level_alpha)?;
    let p0 = stat_fn(g, child_seed(seed, streams::STAT, 0))?;
    if p0.is_empty() {
        return Err(Error::invalid_argument("stat_fn returned no p-values"));
    }
    let m = p0.len();
    let minima: Vec<f64> = (1..=b)
        .into_par_iter()
        .map(|i| {
            let gp = permuted_copy(g, seed, i as u64).map_err(|e| replicate_err(i, e))?;
            let pv = stat_fn(&gp, child_seed(seed, streams::STAT, i as u64))
                .map_err(|e| replicate_err(i, e))?;
            if pv.len() != m {
                return Err(Error::invalid_argument(format!(
                    "replicate {i} produced {} p-values, expected {m}",
                    pv.len()
                )));
            }
            Ok(pv.iter().map(|p| p.value()).fold(f64::INFINITY, f64::min))
        })
        .collect::<Result<_>>()?;
    let threshold = order_statistic_threshold(&minima, level_alpha);
    let rejections = (0..m).filter(|&i| p0[i].value() < threshold).collect();
    Ok(PermutationResult {
        original: p0,
        resampled_min: minima,
        threshold: Some(threshold),
        rejections,
        b_used: b,
    })
}

/// Min-p resampling applied after a hypothesis-selection rule. The rule is
/// applied independently to the original data and to every permuted
/// replicate; a replicate whose selected set is empty contributes min-p 1.
/// Rejections are restricted to the originally selected hypotheses.
pub fn resample_after_selection<F, S>(
    stat_fn: F,
    select_rule: S,
    g: &GroupedSample,
    b: usize,
    level_alpha: f64,
    seed: u64,
) -> Result<PermutationResult>
where
    F: Fn(&GroupedSample, u64) -> Result<Vec<Pvalue>> + Sync,
    S: Fn(&[Pvalue]) -> Vec<usize> + Sync,
{
    check_b(b)?;
    check_level(level_alpha)?;
    let p0 = stat_fn(g, child_seed(seed, streams::STAT, 0))?;
    if p0.is_empty() {
        return Err(Error::invalid_argument("stat_fn returned no p-values"));
    }
    let m = p0.len();
    let selected0 = select_rule(&p0);
    if selected0.iter().any(|&i| i >= m) {
        return Err(Error::invalid_argument(
            "selection rule returned an out-of-range index",
        ));
    }
    let minima: Vec<f64> = (1..=b)
        .into_par_iter()
        .map(|i| {
            let gp = permuted_copy(g, seed, i as u64).map_err(|e| replicate_err(i, e))?;
            let pv = stat_fn(&gp, child_seed(seed, streams::STAT, i as u64))
                .map_err(|e| replicate_err(i, e))?;
            if pv.len() != m {
                return Err(Error::invalid_argument(format!(
                    "replicate {i} produced {} p-values, expected {m}",
                    pv.len()
                )));
            }
            let sel = select_rule(&pv);
            Ok(sel
                .iter()
                .filter(|&&j| j < m)
                .map(|&j| pv[j].value())
                .fold(1.0_f64, f64::min))
        })
        .collect::<Result<_>>()?;
    let threshold = order_statistic_threshold(&minima, level_alpha);
    let rejections = selected0
        .iter()
        .copied()
        .filter(|&i| p0[i].value() < threshold)
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    Ok(PermutationResult {
        original: p0,
        resampled_min: minima,
        threshold: Some(threshold),
        rejections,
        b_used: b,
    })
}

fn check_pvalues(pvalues: &[f64]) -> Result<()> {
    for (i, &p) in pvalues.iter().enumerate() {
        if !p.is_finite() || !(0.0..=1.0).contains(&p) {
            return Err(Error::invalid_argument(format!(
                "p-value {i} is invalid: {p}"
            )));
        }
    }
    Ok(())
}

fn sorted_indices(pvalues: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..pvalues.len()).collect();
    idx.sort_by(|&a, &b| pvalues[a].total_cmp(&pvalues[b]));
    idx
}

/// Holm's step-down procedure at family-wise level `level_alpha`; returns
/// the rejected indices in ascending order.
pub fn holm_adjust(pvalues: &[f64], level_alpha: f64) -> Result<Vec<usize>> {
    check_pvalues(pvalues)?;
    let m = pvalues.len();
    let idx = sorted_indices(pvalues);
    let mut rejected = Vec::new();
    for (rank, &i) in idx.iter().enumerate() {
        if pvalues[i] <= level_alpha / (m - rank) as f64 {
            rejected.push(i);
        } else {
            break;
        }
    }
    rejected.sort_unstable();
    Ok(rejected)
}

/// Benjamini–Yekutieli step-up procedure at FDR level `q` (BH with the
/// harmonic correction c(m) = Σ 1/i); returns rejected indices ascending.
pub fn by_adjust(pvalues: &[f64], q: f64) -> Result<Vec<usize>> {
    check_pvalues(pvalues)?;
    let m = pvalues.len();
    if m == 0 {
        return Ok(vec![]);
    }
    let c_m: f64 = (1..=m).map(|i| 1.0 / i as f64).sum();
    let idx = sorted_indices(pvalues);
    let mut k_max = 0usize;
    for (rank, &i) in idx.iter().enumerate() {
        let k = rank + 1;
        if pvalues[i] <= k as f64 * q / (m as f64 * c_m) {
            k_max = k;
        }
    }
    let mut rejected: Vec<usize> = idx[..k_max].to_vec();
    rejected.sort_unstable();
    Ok(rejected)
}

/// Multiplicity adjustment applied to the baseline per-column p-values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdjustMethod {
    /// Per-column level-α tests with no correction (the naive baseline).
    Unadjusted,
    Holm,
    /// Benjamini–Yekutieli at q = level_alpha.
    By,
    /// Min-p resampling (Algorithm 2 applied to the p-value vector).
    MinP,
}

/// One-way ANOVA F-test p-value per column, treating category codes as
/// numeric responses and groups as treatments. Constant columns yield p = 1.
pub fn marginal_f_pvalues(g: &GroupedSample) -> Result<Vec<Pvalue>> {
    let k = g.k();
    let n = g.n_total();
    if n <= k {
        return Err(Error::invalid_input(
            "no residual degrees of freedom: total rows must exceed group count",
        ));
    }
    let m = g.n_cols();
    let mut pvalues = Vec::with_capacity(m);
    for j in 0..m {
        let mut grand_sum = 0.0;
        let mut group_sums = vec![0.0; k];
        let mut first = None;
        let mut constant = true;
        for (gi, table) in g.groups().iter().enumerate() {
            for r in 0..table.n_rows() {
                let v = table.code(r, j) as f64;
                match first {
                    None => first = Some(v),
                    Some(f) if f != v => constant = false,
                    _ => {}
                }
                group_sums[gi] += v;
                grand_sum += v;
            }
        }
        if constant {
            pvalues.push(Pvalue::ONE);
            continue;
        }
        let grand_mean = grand_sum / n as f64;
        let mut sst = 0.0;
        let mut sse = 0.0;
        for (gi, table) in g.groups().iter().enumerate() {
            let nj = table.n_rows() as f64;
            let mean_j = group_sums[gi] / nj;
            let dm = mean_j - grand_mean;
            sst += nj * dm * dm;
            for r in 0..table.n_rows() {
                let d = table.code(r, j) as f64 - mean_j;
                sse += d * d;
            }
        }
        let p = if sse <= 1e-12 * (sst + sse) {
            // all within-group variance vanished while means differ
            Pvalue::clamped(0.0)
        } else {
            let f = (sst / (k - 1) as f64) / (sse / (n - k) as f64);
            f_sf(f, k - 1, n - k)?
        };
        pvalues.push(p);
    }
    Ok(pvalues)
}

/// The §-baseline randomization check: per-column F-tests with the chosen
/// multiplicity adjustment.
pub fn baseline_marginal_test(
    g: &GroupedSample,
    adjust: AdjustMethod,
    level_alpha: f64,
    b: usize,
    seed: u64,
) -> Result<PermutationResult> {
    check_level(level_alpha)?;
    match adjust {
        AdjustMethod::MinP => {
            resample_minp(|gp, _seed| marginal_f_pvalues(gp), g, b, level_alpha, seed)
        }
        AdjustMethod::Unadjusted => {
            let p0 = marginal_f_pvalues(g)?;
            let rejections = (0..p0.len())
                .filter(|&i| p0[i].value() < level_alpha)
                .collect();
            Ok(PermutationResult {
                original: p0,
                resampled_min: vec![],
                threshold: Some(level_alpha),
                rejections,
                b_used: 0,
            })
        }
        AdjustMethod::Holm | AdjustMethod::By => {
            let p0 = marginal_f_pvalues(g)?;
            let raw: Vec<f64> = p0.iter().map(|p| p.value()).collect();
            let rejections = match adjust {
                AdjustMethod::Holm => holm_adjust(&raw, level_alpha)?,
                _ => by_adjust(&raw, level_alpha)?,
            };
            Ok(PermutationResult {
                original: p0,
                resampled_min: vec![],
                threshold: None,
                rejections,
                b_used: 0,
            })
        }
    }
}

/// Convert an upper-tail statistic permutation run into the shared p-value
/// machinery: each statistic maps to its add-one rank p-value within the
/// pooled set {observed} ∪ {replicates}, after which the usual
/// order-statistic threshold applies. Rejection is then exactly
/// "(1 + #{D_b ≥ D₀})/(B+1) ≤ level_alpha".
pub(crate) fn upper_tail_result(
    observed: f64,
    resampled: &[f64],
    level_alpha: f64,
) -> PermutationResult {
    let b = resampled.len();
    let denom = (b + 1) as f64;
    let mut pool: Vec<f64> = Vec::with_capacity(b + 1);
    pool.push(observed);
    pool.extend_from_slice(resampled);
    pool.sort_unstable_by(f64::total_cmp);
    let rank_p = |x: f64| -> f64 {
        // #{v in pool : v >= x} / (B+1)
        let below = pool.partition_point(|v| *v < x);
        (pool.len() - below) as f64 / denom
    };
    let p0 = rank_p(observed);
    let replicate_p: Vec<f64> = resampled.iter().map(|&d| rank_p(d)).collect();
    let threshold = order_statistic_threshold(&replicate_p, level_alpha);
    let rejections = if p0 < threshold { vec![0] } else { vec![] };
    PermutationResult {
        original: vec![Pvalue::clamped(p0)],
        resampled_min: replicate_p,
        threshold: Some(threshold),
        rejections,
        b_used: b,
    }
}
