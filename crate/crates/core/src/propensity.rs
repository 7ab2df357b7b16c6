//! Propensity-score equivalence test: fit a multinomial logistic classifier
//! predicting group membership, cross-tabulate predicted vs actual labels on
//! held-out rows, test the table by Pearson chi-square, and calibrate the
//! p-value by permutation.

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::dataset::{one_hot_offsets, CategoricalTable, GroupedSample, NumericMatrix};
use crate::error::{Error, Result};
use crate::multiplicity::{order_statistic_threshold, PermutationResult};
use crate::statfun::{child_seed, chi_square_sf, seeded_rng, streams, Pvalue};

/// Fit diagnostics recorded alongside the weights.
#[derive(Debug, Clone)]
pub struct LogitTrainingMeta {
    pub iterations: usize,
    pub final_objective: f64,
    pub l2_lambda: f64,
    pub converged: bool,
    /// Accepted objective values, starting at the initial point; strictly
    /// non-increasing.
    pub objective_trace: Vec<f64>,
}

/// Multinomial logistic model with a (d+1)×K weight matrix (intercept row
/// first, one column per class). The last class's column is pinned to zero
/// for identifiability.
#[derive(Debug, Clone)]
pub struct LogitModel {
    /// Row-major (d+1)×K.
    pub weights: Vec<f64>,
    pub n_feature_dims: usize,
    pub n_classes: usize,
    pub training_meta: LogitTrainingMeta,
}

pub(crate) trait DesignLike: Sync {
    fn n_rows(&self) -> usize;
    fn n_feature_dims(&self) -> usize;
    /// scores[r*k + c] = intercept_c + x_r · w_c
    fn scores_into(&self, weights: &[f64], k: usize, scores: &mut [f64]);
    /// grad += designᵀ·resid over the (d+1)×K layout (resid is n×K).
    fn accumulate_grad(&self, resid: &[f64], k: usize, grad: &mut [f64]);
}

pub(crate) struct DenseDesign<'a> {
    pub x: &'a NumericMatrix,
}

impl DesignLike for DenseDesign<'_> {
    fn n_rows(&self) -> usize {
        self.x.n_rows()
    }

    fn n_feature_dims(&self) -> usize {
        self.x.n_dims()
    }

    fn scores_into(&self, weights: &[f64], k: usize, scores: &mut [f64]) {
        let d = self.x.n_dims();
        for r in 0..self.x.n_rows() {
            let row = self.x.row(r);
            let out = &mut scores[r * k..(r + 1) * k];
            out.copy_from_slice(&weights[..k]);
            for f in 0..d {
                let xv = row[f];
                if xv != 0.0 {
                    let wrow = &weights[(1 + f) * k..(2 + f) * k];
                    for c in 0..k {
                        out[c] += xv * wrow[c];
                    }
                }
            }
        }
    }

    fn accumulate_grad(&self, resid: &[f64], k: usize, grad: &mut [f64]) {
        let d = self.x.n_dims();
        for r in 0..self.x.n_rows() {
            let row = self.x.row(r);
            let res = &resid[r * k..(r + 1) * k];
            for c in 0..k {
                grad[c] += res[c];
            }
            for f in 0..d {
                let xv = row[f];
                if xv != 0.0 {
                    let grow = &mut grad[(1 + f) * k..(2 + f) * k];
                    for c in 0..k {
                        grow[c] += xv * res[c];
                    }
                }
            }
        }
    }
}

/// One-hot design stored as raw category codes: each row contributes its
/// intercept plus one weight row per column, which keeps the fit cost at
/// O(n·m·K) instead of O(n·Σcardinalities·K).
pub(crate) struct SparseOneHotDesign {
    pub codes: Vec<u32>, // row-major, n × m
    pub m: usize,
    pub offsets: Vec<usize>, // one-hot block offsets; last entry = total dims
}

impl SparseOneHotDesign {
    pub(crate) fn from_rows(
        pooled: &CategoricalTable,
        rows: &[usize],
        offsets: &[usize],
    ) -> Self {
        let m = pooled.n_cols();
        let mut codes = Vec::with_capacity(rows.len() * m);
        for &r in rows {
            codes.extend_from_slice(pooled.row(r));
        }
        SparseOneHotDesign {
            codes,
            m,
            offsets: offsets.to_vec(),
        }
    }
}

impl DesignLike for SparseOneHotDesign {
    fn n_rows(&self) -> usize {
        self.codes.len() / self.m
    }

    fn n_feature_dims(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    fn scores_into(&self, weights: &[f64], k: usize, scores: &mut [f64]) {
        let n = self.n_rows();
        for r in 0..n {
            let row = &self.codes[r * self.m..(r + 1) * self.m];
            let out = &mut scores[r * k..(r + 1) * k];
            out.copy_from_slice(&weights[..k]);
            for (j, &code) in row.iter().enumerate() {
                let wrow_idx = 1 + self.offsets[j] + code as usize;
                let wrow = &weights[wrow_idx * k..(wrow_idx + 1) * k];
                for c in 0..k {
                    out[c] += wrow[c];
                }
            }
        }
    }

    fn accumulate_grad(&self, resid: &[f64], k: usize, grad: &mut [f64]) {
        let n = self.n_rows();
        for r in 0..n {
            let row = &self.codes[r * self.m..(r + 1) * self.m];
            let res = &resid[r * k..(r + 1) * k];
            for c in 0..k {
                grad[c] += res[c];
            }
            for (j, &code) in row.iter().enumerate() {
                let grow_idx = 1 + self.offsets[j] + code as usize;
                let grow = &mut grad[grow_idx * k..(grow_idx + 1) * k];
                for c in 0..k {
                    grow[c] += res[c];
                }
            }
        }
    }
}

/// Mean penalized negative log-likelihood for the given weights.
fn objective<D: DesignLike>(
    design: &D,
    labels: &[usize],
    k: usize,
    l2_lambda: f64,
    weights: &[f64],
    scores: &mut [f64],
) -> f64 {
    let n = design.n_rows();
    design.scores_into(weights, k, scores);
    let mut nll = 0.0;
    for r in 0..n {
        let s = &scores[r * k..(r + 1) * k];
        let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + s.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        nll += lse - s[labels[r]];
    }
    let penalty: f64 = weights.iter().map(|w| w * w).sum();
    nll / n as f64 + 0.5 * l2_lambda * penalty
}

/// Gradient of the objective; the pinned class column is zeroed.
fn gradient<D: DesignLike>(
    design: &D,
    labels: &[usize],
    k: usize,
    l2_lambda: f64,
    weights: &[f64],
    scores: &mut [f64],
    resid: &mut [f64],
    grad: &mut [f64],
) {
    let n = design.n_rows();
    design.scores_into(weights, k, scores);
    for r in 0..n {
        let s = &scores[r * k..(r + 1) * k];
        let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for c in 0..k {
            let e = (s[c] - max).exp();
            resid[r * k + c] = e;
            denom += e;
        }
        for c in 0..k {
            resid[r * k + c] /= denom;
        }
        resid[r * k + labels[r]] -= 1.0;
        for c in 0..k {
            resid[r * k + c] /= n as f64;
        }
    }
    grad.fill(0.0);
    design.accumulate_grad(resid, k, grad);
    for (g, w) in grad.iter_mut().zip(weights) {
        *g += l2_lambda * w;
    }
    // pinned reference class: last column stays zero
    for row in 0..(design.n_feature_dims() + 1) {
        grad[row * k + (k - 1)] = 0.0;
    }
}

pub(crate) fn fit_design<D: DesignLike>(
    design: &D,
    labels: &[usize],
    n_classes: usize,
    l2_lambda: f64,
    max_iter: usize,
    tol: f64,
) -> Result<LogitModel> {
    let n = design.n_rows();
    if n != labels.len() {
        return Err(Error::invalid_argument(format!(
            "design has {n} rows but {} labels were given",
            labels.len()
        )));
    }
    if labels.iter().any(|&l| l >= n_classes) {
        return Err(Error::invalid_argument("label out of class range"));
    }
    {
        let mut seen = vec![false; n_classes];
        for &l in labels {
            seen[l] = true;
        }
        if seen.iter().filter(|&&s| s).count() < 2 {
            return Err(Error::invalid_input(
                "need at least 2 classes present to fit a classifier",
            ));
        }
    }
    if l2_lambda < 0.0 || !l2_lambda.is_finite() {
        return Err(Error::invalid_argument("l2 penalty must be finite and >= 0"));
    }

    let k = n_classes;
    let d = design.n_feature_dims();
    let n_weights = (d + 1) * k;
    let mut weights = vec![0.0; n_weights];
    let mut scores = vec![0.0; n * k];
    let mut resid = vec![0.0; n * k];
    let mut grad = vec![0.0; n_weights];
    let mut trial = vec![0.0; n_weights];

    let mut obj = objective(design, labels, k, l2_lambda, &weights, &mut scores);
    let mut trace = vec![obj];
    let mut step: f64 = 1.0;
    let mut converged = false;
    let mut iterations = 0;

    for _ in 0..max_iter {
        iterations += 1;
        gradient(
            design, labels, k, l2_lambda, &weights, &mut scores, &mut resid, &mut grad,
        );
        let gg: f64 = grad.iter().map(|g| g * g).sum();
        let g_inf = grad.iter().fold(0.0_f64, |m, g| m.max(g.abs()));
        if g_inf <= tol {
            converged = true;
            break;
        }
        // backtracking line search, restarting from twice the last step
        step = (step * 2.0).min(1e8);
        let mut accepted = false;
        while step >= 1e-18 {
            for i in 0..n_weights {
                trial[i] = weights[i] - step * grad[i];
            }
            let obj_try = objective(design, labels, k, l2_lambda, &trial, &mut scores);
            if obj_try <= obj - 1e-4 * step * gg {
                let improvement = obj - obj_try;
                weights.copy_from_slice(&trial);
                obj = obj_try;
                trace.push(obj);
                accepted = true;
                if improvement <= tol {
                    converged = true;
                }
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // no descent step representable: treat as converged
            converged = true;
            break;
        }
        if converged {
            break;
        }
    }

    Ok(LogitModel {
        weights,
        n_feature_dims: d,
        n_classes: k,
        training_meta: LogitTrainingMeta {
            iterations,
            final_objective: obj,
            l2_lambda,
            converged,
            objective_trace: trace,
        },
    })
}

/// Fit a multinomial logistic model by gradient descent with backtracking
/// line search, minimizing the mean penalized negative log-likelihood.
/// Training stops when the objective improvement (or the gradient max-norm)
/// drops below `tol`, or after `max_iter` iterations.
pub fn fit_multinomial_logit(
    x: &NumericMatrix,
    labels: &[usize],
    l2_lambda: f64,
    max_iter: usize,
    tol: f64,
) -> Result<LogitModel> {
    let n_classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    fit_design(&DenseDesign { x }, labels, n_classes.max(2), l2_lambda, max_iter, tol)
}

fn argmax_lowest(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn predict_design<D: DesignLike>(design: &D, model: &LogitModel) -> Result<Vec<usize>> {
    if design.n_feature_dims() != model.n_feature_dims {
        return Err(Error::invalid_argument(format!(
            "design dimension {} does not match model dimension {}",
            design.n_feature_dims(),
            model.n_feature_dims
        )));
    }
    let k = model.n_classes;
    let mut scores = vec![0.0; design.n_rows() * k];
    design.scores_into(&model.weights, k, &mut scores);
    Ok((0..design.n_rows())
        .map(|r| argmax_lowest(&scores[r * k..(r + 1) * k]))
        .collect())
}

/// Predicted class per row: argmax over class scores, ties broken toward
/// the lowest class index.
pub fn predict_labels(model: &LogitModel, x: &NumericMatrix) -> Result<Vec<usize>> {
    predict_design(&DenseDesign { x }, model)
}

/// An R×C count table with labeled rows and columns.
#[derive(Debug, Clone)]
pub struct ContingencyTable {
    counts: Vec<u64>, // row-major
    n_rows: usize,
    n_cols: usize,
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
}

impl ContingencyTable {
    pub fn new(
        counts: Vec<u64>,
        n_rows: usize,
        n_cols: usize,
        row_labels: Vec<String>,
        col_labels: Vec<String>,
    ) -> Result<Self> {
        if n_rows == 0 || n_cols == 0 || counts.len() != n_rows * n_cols {
            return Err(Error::invalid_argument("contingency table shape mismatch"));
        }
        if row_labels.len() != n_rows || col_labels.len() != n_cols {
            return Err(Error::invalid_argument("contingency table label mismatch"));
        }
        if counts.iter().sum::<u64>() == 0 {
            return Err(Error::invalid_argument("contingency table is all zeros"));
        }
        Ok(ContingencyTable {
            counts,
            n_rows,
            n_cols,
            row_labels,
            col_labels,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn count(&self, r: usize, c: usize) -> u64 {
        self.counts[r * self.n_cols + c]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }
}

/// Pearson chi-square independence test on a raw count matrix. Rows and
/// columns with zero marginal sums are pruned before computing the statistic;
/// a table that degenerates to fewer than two active rows or columns is a
/// [`Error::DegenerateTable`].
pub fn chi_square_from_counts(
    counts: &[u64],
    n_rows: usize,
    n_cols: usize,
) -> Result<(f64, usize, Pvalue)> {
    if counts.len() != n_rows * n_cols {
        return Err(Error::invalid_argument("count matrix shape mismatch"));
    }
    let mut row_sums = vec![0u64; n_rows];
    let mut col_sums = vec![0u64; n_cols];
    for r in 0..n_rows {
        for c in 0..n_cols {
            let v = counts[r * n_cols + c];
            row_sums[r] += v;
            col_sums[c] += v;
        }
    }
    let total: u64 = row_sums.iter().sum();
    if total == 0 {
        return Err(Error::invalid_argument("contingency table is all zeros"));
    }
    let active_rows: Vec<usize> = (0..n_rows).filter(|&r| row_sums[r] > 0).collect();
    let active_cols: Vec<usize> = (0..n_cols).filter(|&c| col_sums[c] > 0).collect();
    if active_rows.len() < 2 || active_cols.len() < 2 {
        return Err(Error::DegenerateTable(format!(
            "{}x{} after pruning zero marginals",
            active_rows.len(),
            active_cols.len()
        )));
    }
    let totalf = total as f64;
    let mut stat = 0.0;
    for &r in &active_rows {
        for &c in &active_cols {
            let expected = row_sums[r] as f64 * col_sums[c] as f64 / totalf;
            let diff = counts[r * n_cols + c] as f64 - expected;
            stat += diff * diff / expected;
        }
    }
    let dof = (active_rows.len() - 1) * (active_cols.len() - 1);
    let p = chi_square_sf(stat, dof)?;
    Ok((stat, dof, p))
}

/// Pearson chi-square independence test on a labeled table.
pub fn pearson_chi_square(t: &ContingencyTable) -> Result<(f64, usize, Pvalue)> {
    chi_square_from_counts(t.counts(), t.n_rows(), t.n_cols())
}

/// Configuration of the propensity-score test.
#[derive(Debug, Clone)]
pub struct PropensityConfig {
    /// Training fraction c: ⌈c·n_j⌉ rows of each group are used to fit the
    /// classifier, the rest form the chi-square test set.
    pub train_frac: f64,
    pub l2_lambda: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for PropensityConfig {
    fn default() -> Self {
        PropensityConfig {
            train_frac: 0.8,
            l2_lambda: 1e-4,
            max_iter: 500,
            tol: 1e-8,
        }
    }
}

/// Propensity test outcome: the permutation calibration plus the observed
/// chi-square statistic and fit diagnostics for reporting.
#[derive(Debug, Clone)]
pub struct PropensityOutcome {
    pub result: PermutationResult,
    /// Observed predicted×actual chi-square; `None` when the table was
    /// degenerate (no information, treated as p = 1).
    pub statistic: Option<f64>,
    pub dof: Option<usize>,
    /// Whether the fit on the observed (unpermuted) data converged.
    pub converged: bool,
}

/// Number of training rows for a group of size `n`: ⌈c·n⌉, computed with a
/// guard against f64 representation of c pushing an exact product above the
/// next integer.
pub fn train_rows(train_frac: f64, n: usize) -> usize {
    ((train_frac * n as f64) - 1e-9).ceil() as usize
}

enum PooledRows<'a> {
    Cat {
        pooled: &'a CategoricalTable,
        offsets: Vec<usize>,
    },
    Num(&'a NumericMatrix),
}

enum AnyDesign<'a> {
    Sparse(SparseOneHotDesign),
    Dense(OwnedDense<'a>),
}

struct OwnedDense<'a> {
    source: &'a NumericMatrix,
    rows: Vec<usize>,
}

impl DesignLike for OwnedDense<'_> {
    fn n_rows(&self) -> usize {
        self.rows.len()
    }

    fn n_feature_dims(&self) -> usize {
        self.source.n_dims()
    }

    fn scores_into(&self, weights: &[f64], k: usize, scores: &mut [f64]) {
        let d = self.source.n_dims();
        for (ri, &r) in self.rows.iter().enumerate() {
            let row = self.source.row(r);
            let out = &mut scores[ri * k..(ri + 1) * k];
            out.copy_from_slice(&weights[..k]);
            for f in 0..d {
                let xv = row[f];
                if xv != 0.0 {
                    let wrow = &weights[(1 + f) * k..(2 + f) * k];
                    for c in 0..k {
                        out[c] += xv * wrow[c];
                    }
                }
            }
        }
    }

    fn accumulate_grad(&self, resid: &[f64], k: usize, grad: &mut [f64]) {
        let d = self.source.n_dims();
        for (ri, &r) in self.rows.iter().enumerate() {
            let row = self.source.row(r);
            let res = &resid[ri * k..(ri + 1) * k];
            for c in 0..k {
                grad[c] += res[c];
            }
            for f in 0..d {
                let xv = row[f];
                if xv != 0.0 {
                    let grow = &mut grad[(1 + f) * k..(2 + f) * k];
                    for c in 0..k {
                        grow[c] += xv * res[c];
                    }
                }
            }
        }
    }
}

impl PooledRows<'_> {
    fn design(&self, rows: &[usize]) -> AnyDesign<'_> {
        match self {
            PooledRows::Cat { pooled, offsets } => {
                AnyDesign::Sparse(SparseOneHotDesign::from_rows(pooled, rows, offsets))
            }
            PooledRows::Num(x) => AnyDesign::Dense(OwnedDense {
                source: x,
                rows: rows.to_vec(),
            }),
        }
    }
}

/// One propensity statistic evaluation for a fixed group assignment:
/// stratified split, fit on train, predict on test, chi-square on the
/// predicted×actual table. Degenerate tables yield p = 1.
#[allow(clippy::too_many_arguments)]
fn propensity_stat(
    rows: &PooledRows<'_>,
    group_rows: &[Vec<usize>],
    cfg: &PropensityConfig,
    split_seed: u64,
) -> Result<(f64, Option<f64>, Option<usize>, bool)> {
    let k = group_rows.len();
    let mut rng = seeded_rng(split_seed);
    let mut train_rows_idx: Vec<usize> = Vec::new();
    let mut train_labels: Vec<usize> = Vec::new();
    let mut test_rows_idx: Vec<usize> = Vec::new();
    let mut test_labels: Vec<usize> = Vec::new();
    for (gi, rows_g) in group_rows.iter().enumerate() {
        let mut shuffled = rows_g.clone();
        shuffled.shuffle(&mut rng);
        let t = train_rows(cfg.train_frac, shuffled.len());
        for (i, &r) in shuffled.iter().enumerate() {
            if i < t {
                train_rows_idx.push(r);
                train_labels.push(gi);
            } else {
                test_rows_idx.push(r);
                test_labels.push(gi);
            }
        }
    }

    let model = match rows.design(&train_rows_idx) {
        AnyDesign::Sparse(d) => {
            fit_design(&d, &train_labels, k, cfg.l2_lambda, cfg.max_iter, cfg.tol)?
        }
        AnyDesign::Dense(d) => {
            fit_design(&d, &train_labels, k, cfg.l2_lambda, cfg.max_iter, cfg.tol)?
        }
    };
    let predicted = match rows.design(&test_rows_idx) {
        AnyDesign::Sparse(d) => predict_design(&d, &model)?,
        AnyDesign::Dense(d) => predict_design(&d, &model)?,
    };

    let mut counts = vec![0u64; k * k];
    for (pred, actual) in predicted.iter().zip(&test_labels) {
        counts[pred * k + actual] += 1;
    }
    match chi_square_from_counts(&counts, k, k) {
        Ok((stat, dof, p)) => Ok((
            p.value(),
            Some(stat),
            Some(dof),
            model.training_meta.converged,
        )),
        Err(Error::DegenerateTable(_)) => {
            Ok((1.0, None, None, model.training_meta.converged))
        }
        Err(e) => Err(e),
    }
}

fn propensity_engine(
    rows: PooledRows<'_>,
    sizes: &[usize],
    cfg: &PropensityConfig,
    b_permutations: usize,
    level_alpha: f64,
    seed: u64,
) -> Result<PropensityOutcome> {
    if b_permutations == 0 {
        return Err(Error::invalid_argument(
            "number of permutation replicates must be >= 1",
        ));
    }
    if !(level_alpha > 0.0 && level_alpha < 1.0) {
        return Err(Error::invalid_argument(format!(
            "significance level must lie in (0,1), got {level_alpha}"
        )));
    }
    if !(cfg.train_frac > 0.0 && cfg.train_frac < 1.0) {
        return Err(Error::invalid_argument(format!(
            "training fraction must lie in (0,1), got {}",
            cfg.train_frac
        )));
    }
    for (gi, &n) in sizes.iter().enumerate() {
        let t = train_rows(cfg.train_frac, n);
        if t < 2 || n - t < 2 {
            return Err(Error::invalid_input(format!(
                "group {gi} has {n} rows: train/test split {t}/{} is too small \
                 (need >= 2 rows on each side)",
                n - t
            )));
        }
    }

    let n: usize = sizes.iter().sum();
    let template: Vec<usize> = {
        let mut t = Vec::with_capacity(n);
        for (gi, &s) in sizes.iter().enumerate() {
            t.extend(std::iter::repeat(gi).take(s));
        }
        t
    };
    let group_rows_for = |assignment: &dyn Fn(usize) -> usize| -> Vec<Vec<usize>> {
        let mut rows_by_group = vec![Vec::new(); sizes.len()];
        for r in 0..n {
            rows_by_group[assignment(r)].push(r);
        }
        rows_by_group
    };

    // observed
    let original_groups = group_rows_for(&|r| template[r]);
    let (p0, statistic, dof, converged) = propensity_stat(
        &rows,
        &original_groups,
        cfg,
        child_seed(seed, streams::SPLIT, 0),
    )?;

    let resampled: Vec<f64> = (1..=b_permutations)
        .into_par_iter()
        .map(|b| {
            let mut rng = seeded_rng(child_seed(seed, streams::PERMUTE, b as u64));
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            let mut assignment = vec![0usize; n];
            for (pos, &row) in perm.iter().enumerate() {
                assignment[row] = template[pos];
            }
            let groups = group_rows_for(&|r| assignment[r]);
            propensity_stat(&rows, &groups, cfg, child_seed(seed, streams::SPLIT, b as u64))
                .map(|(p, _, _, _)| p)
                .map_err(|e| Error::Numerical(format!("permutation replicate {b}: {e}")))
        })
        .collect::<Result<_>>()?;

    let threshold = order_statistic_threshold(&resampled, level_alpha);
    let rejections = if p0 < threshold { vec![0] } else { vec![] };
    Ok(PropensityOutcome {
        result: PermutationResult {
            original: vec![Pvalue::clamped(p0)],
            resampled_min: resampled,
            threshold: Some(threshold),
            rejections,
            b_used: b_permutations,
        },
        statistic,
        dof,
        converged,
    })
}

/// Propensity-score test on a grouped categorical sample (main-effects
/// one-hot design).
pub fn propensity_test(
    g: &GroupedSample,
    cfg: &PropensityConfig,
    b_permutations: usize,
    level_alpha: f64,
    seed: u64,
) -> Result<PropensityOutcome> {
    let pooled = g.pooled();
    let offsets = one_hot_offsets(pooled.col_cardinalities());
    propensity_engine(
        PooledRows::Cat {
            pooled: &pooled,
            offsets,
        },
        &g.group_sizes(),
        cfg,
        b_permutations,
        level_alpha,
        seed,
    )
}

/// Propensity-score test on numeric samples (dense design).
pub fn propensity_test_numeric(
    groups: &[NumericMatrix],
    cfg: &PropensityConfig,
    b_permutations: usize,
    level_alpha: f64,
    seed: u64,
) -> Result<PropensityOutcome> {
    if groups.len() < 2 {
        return Err(Error::invalid_argument("need at least 2 groups"));
    }
    let dims = groups[0].n_dims();
    if groups.iter().any(|g| g.n_dims() != dims) {
        return Err(Error::invalid_argument("groups differ in dimension"));
    }
    let sizes: Vec<usize> = groups.iter().map(|g| g.n_rows()).collect();
    let mut entries = Vec::new();
    for g in groups {
        entries.extend_from_slice(g.entries());
    }
    let pooled = NumericMatrix::new(entries, dims)?;
    propensity_engine(
        PooledRows::Num(&pooled),
        &sizes,
        cfg,
        b_permutations,
        level_alpha,
        seed,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::GroupedSample;
    use rand::Rng;

    #[test]
    fn separable_two_class_fit_reaches_full_accuracy() {
        let x = NumericMatrix::new(
            vec![-2.0, -1.5, -1.0, -0.5, 0.5, 1.0, 1.5, 2.0],
            1,
        )
        .unwrap();
        let labels = vec![0, 0, 0, 0, 1, 1, 1, 1];
        let model = fit_multinomial_logit(&x, &labels, 1e-4, 500, 1e-8).unwrap();
        let pred = predict_labels(&model, &x).unwrap();
        assert_eq!(pred, labels);
    }

    #[test]
    fn random_labels_give_chance_level_accuracy() {
        // labels independent of features: held-out accuracy sits at 1/K and
        // predicted class frequencies match the priors on average (a single
        // noise fit can lean heavily toward one class)
        let mut acc_sum = 0.0;
        let mut freq_sum = 0.0;
        let fits = 12;
        for seed in 0..fits {
            let mut rng = crate::statfun::seeded_rng(300 + seed);
            let n = 2000;
            let x_entries: Vec<f64> =
                (0..n * 2).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
            let x = NumericMatrix::new(x_entries, 2).unwrap();
            let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..2)).collect();
            let half = n / 2;
            let train_x = NumericMatrix::new(x.entries()[..half * 2].to_vec(), 2).unwrap();
            let test_x = NumericMatrix::new(x.entries()[half * 2..].to_vec(), 2).unwrap();
            let model =
                fit_multinomial_logit(&train_x, &labels[..half], 1e-4, 500, 1e-8).unwrap();
            let pred = predict_labels(&model, &test_x).unwrap();
            acc_sum += pred
                .iter()
                .zip(&labels[half..])
                .filter(|(p, a)| p == a)
                .count() as f64
                / half as f64;
            freq_sum += pred.iter().filter(|&&p| p == 1).count() as f64 / half as f64;
        }
        let acc = acc_sum / fits as f64;
        let freq1 = freq_sum / fits as f64;
        assert!((acc - 0.5).abs() < 0.05, "mean held-out accuracy {acc}");
        assert!((freq1 - 0.5).abs() < 0.15, "mean predicted class-1 frequency {freq1}");
    }

    #[test]
    fn gradient_matches_finite_differences_and_vanishes_at_optimum() {
        // 20×4 instance, 3 classes
        let mut rng = crate::statfun::seeded_rng(11);
        let n = 20;
        let x_entries: Vec<f64> = (0..n * 4).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
        let x = NumericMatrix::new(x_entries, 4).unwrap();
        let labels: Vec<usize> = (0..n).map(|i| i % 3).collect();
        let k = 3;
        let lambda = 0.1;
        let design = DenseDesign { x: &x };

        // finite-difference check at a generic point
        let d = 4;
        let n_weights = (d + 1) * k;
        let mut w: Vec<f64> = (0..n_weights)
            .map(|i| ((i * 37 % 11) as f64 - 5.0) / 10.0)
            .collect();
        for row in 0..=d {
            w[row * k + (k - 1)] = 0.0;
        }
        let mut scores = vec![0.0; n * k];
        let mut resid = vec![0.0; n * k];
        let mut grad = vec![0.0; n_weights];
        gradient(&design, &labels, k, lambda, &w, &mut scores, &mut resid, &mut grad);
        let h = 1e-6;
        for i in 0..n_weights {
            if i % k == k - 1 {
                continue; // pinned column
            }
            let mut wp = w.clone();
            let mut wm = w.clone();
            wp[i] += h;
            wm[i] -= h;
            let fp = objective(&design, &labels, k, lambda, &wp, &mut scores);
            let fm = objective(&design, &labels, k, lambda, &wm, &mut scores);
            let fd = (fp - fm) / (2.0 * h);
            let rel = (grad[i] - fd).abs() / fd.abs().max(1e-8);
            assert!(rel < 1e-5, "gradient {i}: analytic {} vs fd {fd}", grad[i]);
        }

        // run to numerical convergence (tol = 0 stalls only when no
        // representable descent step remains): the gradient then vanishes to
        // within 10x the default production tolerance
        let tol = 1e-8;
        let model = fit_design(&design, &labels, k, lambda, 50_000, 0.0).unwrap();
        assert!(model.training_meta.converged);
        gradient(
            &design,
            &labels,
            k,
            lambda,
            &model.weights,
            &mut scores,
            &mut resid,
            &mut grad,
        );
        let norm: f64 = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        assert!(norm <= 10.0 * tol, "gradient norm {norm} at optimum");
    }

    #[test]
    fn objective_trace_non_increasing() {
        let mut rng = crate::statfun::seeded_rng(21);
        let n = 50;
        let x_entries: Vec<f64> = (0..n * 3).map(|_| rng.gen::<f64>()).collect();
        let x = NumericMatrix::new(x_entries, 3).unwrap();
        let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..3)).collect();
        let model = fit_multinomial_logit(&x, &labels, 1e-4, 200, 1e-10).unwrap();
        let trace = &model.training_meta.objective_trace;
        for w in trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-15, "objective increased: {} -> {}", w[0], w[1]);
        }
        assert!(model.weights.iter().all(|w| w.is_finite()));
    }

    #[test]
    fn single_class_input_is_error() {
        let x = NumericMatrix::new(vec![1.0, 2.0], 1).unwrap();
        assert!(fit_multinomial_logit(&x, &[0, 0], 1e-4, 10, 1e-8).is_err());
    }

    #[test]
    fn zero_weight_model_predicts_class_zero() {
        let model = LogitModel {
            weights: vec![0.0; 2 * 3],
            n_feature_dims: 1,
            n_classes: 3,
            training_meta: LogitTrainingMeta {
                iterations: 0,
                final_objective: 0.0,
                l2_lambda: 0.0,
                converged: true,
                objective_trace: vec![],
            },
        };
        let x = NumericMatrix::new(vec![0.3, -1.0, 2.0], 1).unwrap();
        assert_eq!(predict_labels(&model, &x).unwrap(), vec![0, 0, 0]);
    }

    #[test]
    fn predictions_invariant_to_constant_column_shift() {
        let mut rng = crate::statfun::seeded_rng(5);
        let n = 30;
        let x = NumericMatrix::new((0..n * 2).map(|_| rng.gen::<f64>()).collect(), 2).unwrap();
        let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..3)).collect();
        let model = fit_multinomial_logit(&x, &labels, 1e-3, 100, 1e-8).unwrap();
        let before = predict_labels(&model, &x).unwrap();
        let mut shifted = model.clone();
        // add the same vector to every class column
        for row in 0..=2 {
            for c in 0..3 {
                shifted.weights[row * 3 + c] += (row as f64) * 0.83 - 0.4;
            }
        }
        let after = predict_labels(&shifted, &x).unwrap();
        assert_eq!(before, after);
    }

    #[test]
    fn pearson_hand_values() {
        let (stat, dof, p) = chi_square_from_counts(&[10, 20, 20, 10], 2, 2).unwrap();
        assert!((stat - 20.0 / 3.0).abs() < 1e-12);
        assert_eq!(dof, 1);
        assert!((p.value() - 0.00982).abs() < 1e-5);

        let (stat, _, p) = chi_square_from_counts(&[15, 15, 15, 15], 2, 2).unwrap();
        assert_eq!(stat, 0.0);
        assert_eq!(p.value(), 1.0);
    }

    #[test]
    fn pearson_prunes_zero_marginals() {
        // middle column all zero: pruned, dof = (2-1)(2-1) = 1
        let (_, dof, _) =
            chi_square_from_counts(&[10, 0, 20, 20, 0, 10], 2, 3).unwrap();
        assert_eq!(dof, 1);
    }

    #[test]
    fn pearson_degenerate_is_error() {
        let err = chi_square_from_counts(&[5, 5, 0, 0], 2, 2).unwrap_err();
        assert!(matches!(err, Error::DegenerateTable(_)));
    }

    #[test]
    fn contingency_table_validation() {
        assert!(ContingencyTable::new(vec![0, 0], 1, 2, vec!["r".into()], vec!["a".into(), "b".into()]).is_err());
        let t = ContingencyTable::new(
            vec![1, 2, 3, 4],
            2,
            2,
            vec!["p0".into(), "p1".into()],
            vec!["a0".into(), "a1".into()],
        )
        .unwrap();
        assert_eq!(t.count(1, 0), 3);
        assert!(pearson_chi_square(&t).is_ok());
    }

    fn iid_grouped(seed: u64, n: usize, k: usize, m: usize) -> GroupedSample {
        let mut rng = crate::statfun::seeded_rng(seed);
        let groups = (0..k)
            .map(|_| {
                let cells: Vec<u32> = (0..n * m).map(|_| rng.gen_range(0..4)).collect();
                CategoricalTable::new(cells, m, vec![4; m], None).unwrap()
            })
            .collect();
        GroupedSample::new(groups, (0..k).map(|i| format!("g{i}")).collect()).unwrap()
    }

    #[test]
    fn stratified_split_row_counts_exact() {
        assert_eq!(train_rows(0.8, 100), 80);
        assert_eq!(train_rows(0.8, 99), 80); // ceil(79.2)
        assert_eq!(train_rows(0.5, 7), 4); // ceil(3.5)
        assert_eq!(train_rows(0.75, 8), 6);
    }

    #[test]
    fn propensity_test_too_small_group_is_error() {
        let g = iid_grouped(1, 4, 2, 2);
        let cfg = PropensityConfig::default(); // train 4 of 4 -> no test rows
        assert!(propensity_test(&g, &cfg, 9, 0.05, 1).is_err());
    }

    #[test]
    fn propensity_test_deterministic() {
        let g = iid_grouped(2, 30, 2, 3);
        let cfg = PropensityConfig::default();
        let a = propensity_test(&g, &cfg, 19, 0.05, 5).unwrap();
        let b = propensity_test(&g, &cfg, 19, 0.05, 5).unwrap();
        assert_eq!(a.result.original[0].value(), b.result.original[0].value());
        assert_eq!(a.result.resampled_min, b.result.resampled_min);
    }

    #[test]
    fn propensity_detects_grossly_different_groups() {
        // group 2 nearly constant in every column; group 1 uniform
        let mut rng = crate::statfun::seeded_rng(17);
        let n = 120;
        let m = 4;
        let a_cells: Vec<u32> = (0..n * m).map(|_| rng.gen_range(0..4)).collect();
        let b_cells: Vec<u32> = (0..n * m)
            .map(|_| if rng.gen::<f64>() < 0.9 { 0 } else { 1 })
            .collect();
        let ga = CategoricalTable::new(a_cells, m, vec![4; m], None).unwrap();
        let gb = CategoricalTable::new(b_cells, m, vec![4; m], None).unwrap();
        let g = GroupedSample::new(vec![ga, gb], vec!["A".into(), "B".into()]).unwrap();
        let out =
            propensity_test(&g, &PropensityConfig::default(), 99, 0.05, 9).unwrap();
        assert!(out.result.rejected(), "p = {}", out.result.original[0].value());
    }

    #[test]
    fn sparse_and_dense_fits_agree() {
        let g = iid_grouped(23, 25, 2, 3);
        let pooled = g.pooled();
        let offsets = one_hot_offsets(pooled.col_cardinalities());
        let rows: Vec<usize> = (0..pooled.n_rows()).collect();
        let sparse = SparseOneHotDesign::from_rows(&pooled, &rows, &offsets);
        let labels: Vec<usize> = g
            .group_of_rows()
            .iter()
            .map(|&v| v as usize)
            .collect();
        let dense_x = crate::dataset::one_hot(&pooled);
        let m_sparse = fit_design(&sparse, &labels, 2, 1e-3, 300, 1e-10).unwrap();
        let m_dense =
            fit_design(&DenseDesign { x: &dense_x }, &labels, 2, 1e-3, 300, 1e-10).unwrap();
        for (a, b) in m_sparse.weights.iter().zip(&m_dense.weights) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }
}
