//! Randomized chi-square test: repeatedly sample a small set of columns,
//! test the joint-category × group contingency table, and combine the draws
//! by min-p permutation resampling. Rejected draws flag the columns they
//! contain, pointing at the imbalanced dimensions.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::dataset::GroupedSample;
use crate::error::{Error, Result};
use crate::multiplicity::order_statistic_threshold;
use crate::propensity::{chi_square_from_counts, ContingencyTable};
use crate::statfun::{child_seed, seeded_rng, streams, Pvalue};

/// How many columns one draw samples, relative to the configured C.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DrawSizePolicy {
    /// Every draw samples exactly min(C, m) columns.
    Fixed,
    /// Each draw samples a uniformly random size in 1..=min(C, m)
    /// ("maximum C columns each time"). Small draws concentrate per-column
    /// signal; large draws see interaction structure.
    UniformMax,
}

/// Configuration of the randomized chi-square test.
#[derive(Debug, Clone)]
pub struct RandChiConfig {
    /// Column budget per draw (C); capped at the data dimension.
    pub cols_per_draw: usize,
    /// Number of draws (D).
    pub n_draws: usize,
    /// Permutation replicates (B).
    pub b_permutations: usize,
    pub level_alpha: f64,
    pub seed: u64,
    /// Expected-count advisory threshold; draws whose observed table has an
    /// expected cell below it are reported, not rejected.
    pub min_cell_guideline: f64,
    pub draw_size: DrawSizePolicy,
}

impl RandChiConfig {
    pub fn new(
        cols_per_draw: usize,
        n_draws: usize,
        b_permutations: usize,
        level_alpha: f64,
        seed: u64,
    ) -> Self {
        RandChiConfig {
            cols_per_draw,
            n_draws,
            b_permutations,
            level_alpha,
            seed,
            min_cell_guideline: 5.0,
            draw_size: DrawSizePolicy::UniformMax,
        }
    }

    pub fn with_draw_size(mut self, draw_size: DrawSizePolicy) -> Self {
        self.draw_size = draw_size;
        self
    }
}

/// Default C for an m-column dataset: round(m/7) clamped to [1, m], inside
/// the m/10..m/5 band that keeps per-cell counts workable.
pub fn default_cols_per_draw(m: usize) -> usize {
    ((m as f64 / 7.0).round() as usize).clamp(1, m)
}

/// Probability that a fixed column is picked at least once over D draws of
/// C columns: 1 − (1 − C/m)^D.
pub fn coverage_probability(m: usize, c: usize, d: usize) -> Result<f64> {
    if m == 0 || c == 0 || d == 0 {
        return Err(Error::invalid_argument(
            "coverage probability requires m, C, D >= 1",
        ));
    }
    if c > m {
        return Err(Error::invalid_argument(format!(
            "C = {c} exceeds the number of columns m = {m}"
        )));
    }
    Ok(1.0 - (1.0 - c as f64 / m as f64).powi(d as i32))
}

/// Outcome of the randomized chi-square test.
#[derive(Debug, Clone)]
pub struct RandChiOutcome {
    /// Observed p-value per draw (degenerate draws contribute 1).
    pub draw_pvalues: Vec<Pvalue>,
    /// Sorted column indices per draw.
    pub draw_columns: Vec<Vec<usize>>,
    /// Min-p order-statistic threshold (−∞ when B is too small).
    pub threshold: f64,
    /// Indices of draws with p-value strictly below the threshold.
    pub rejected_draws: Vec<usize>,
    /// Per column: number of rejected draws containing it.
    pub column_flag_counts: Vec<u64>,
    pub overall_reject: bool,
    /// Per replicate: minimum p-value over the D draws.
    pub resampled_min: Vec<f64>,
    /// Draws whose observed table was degenerate (p = 1, no information).
    pub degenerate_draws: Vec<usize>,
    /// Draws whose observed table had an expected cell below the guideline.
    pub low_expected_cell_draws: Vec<usize>,
}

/// The K×l contingency table of groups against the distinct observed value
/// tuples over the selected columns, in lexicographic tuple order.
pub fn joint_table(g: &GroupedSample, columns: &[usize]) -> Result<ContingencyTable> {
    let m = g.n_cols();
    if columns.is_empty() {
        return Err(Error::invalid_argument("column set must be nonempty"));
    }
    if columns.iter().any(|&c| c >= m) {
        return Err(Error::invalid_argument("column index out of range"));
    }
    let k = g.k();
    let mut counts_by_tuple: BTreeMap<Vec<u32>, Vec<u64>> = BTreeMap::new();
    for (gi, table) in g.groups().iter().enumerate() {
        for r in 0..table.n_rows() {
            let tuple: Vec<u32> = columns.iter().map(|&c| table.code(r, c)).collect();
            counts_by_tuple.entry(tuple).or_insert_with(|| vec![0; k])[gi] += 1;
        }
    }
    let l = counts_by_tuple.len();
    let mut counts = vec![0u64; k * l];
    let mut col_labels = Vec::with_capacity(l);
    for (ci, (tuple, group_counts)) in counts_by_tuple.iter().enumerate() {
        col_labels.push(
            tuple
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        for gi in 0..k {
            counts[gi * l + ci] = group_counts[gi];
        }
    }
    ContingencyTable::new(counts, k, l, g.group_names().to_vec(), col_labels)
}

/// Dense joint-tuple codes for one column draw over the pooled rows: the
/// code order is the lexicographic order of the observed tuples, so the
/// counts match [`joint_table`] column-for-column.
struct DrawCodes {
    codes: Vec<u32>, // per pooled row
    n_tuples: usize,
}

fn draw_codes(pooled_rows: &[&[u32]], columns: &[usize]) -> DrawCodes {
    let mut tuples: Vec<Vec<u32>> = pooled_rows
        .iter()
        .map(|row| columns.iter().map(|&c| row[c]).collect())
        .collect();
    let mut sorted: Vec<Vec<u32>> = tuples.clone();
    sorted.sort_unstable();
    sorted.dedup();
    let index: BTreeMap<&[u32], u32> = sorted
        .iter()
        .enumerate()
        .map(|(i, t)| (t.as_slice(), i as u32))
        .collect();
    let codes = tuples
        .drain(..)
        .map(|t| index[t.as_slice()])
        .collect();
    DrawCodes {
        codes,
        n_tuples: sorted.len(),
    }
}

fn pvalue_for_assignment(
    draw: &DrawCodes,
    group_of: &[u16],
    k: usize,
) -> Result<(f64, bool, Vec<u64>)> {
    let l = draw.n_tuples;
    let mut counts = vec![0u64; k * l];
    for (row, &code) in draw.codes.iter().enumerate() {
        counts[group_of[row] as usize * l + code as usize] += 1;
    }
    match chi_square_from_counts(&counts, k, l) {
        Ok((_, _, p)) => Ok((p.value(), false, counts)),
        Err(Error::DegenerateTable(_)) => Ok((1.0, true, counts)),
        Err(e) => Err(e),
    }
}

fn has_low_expected_cell(counts: &[u64], k: usize, l: usize, guideline: f64) -> bool {
    let mut row_sums = vec![0u64; k];
    let mut col_sums = vec![0u64; l];
    for r in 0..k {
        for c in 0..l {
            row_sums[r] += counts[r * l + c];
            col_sums[c] += counts[r * l + c];
        }
    }
    let total: u64 = row_sums.iter().sum();
    if total == 0 {
        return true;
    }
    for r in 0..k {
        if row_sums[r] == 0 {
            continue;
        }
        for c in 0..l {
            if col_sums[c] == 0 {
                continue;
            }
            let expected = row_sums[r] as f64 * col_sums[c] as f64 / total as f64;
            if expected < guideline {
                return true;
            }
        }
    }
    false
}

/// Run the randomized chi-square test. Column subsets are drawn once and
/// held fixed across the permutation replicates, so the min-p null
/// distribution matches the selection structure of the observed p-values.
pub fn randomized_chi_square_test(
    g: &GroupedSample,
    cfg: &RandChiConfig,
) -> Result<RandChiOutcome> {
    if cfg.cols_per_draw == 0 || cfg.n_draws == 0 {
        return Err(Error::invalid_argument("C and D must be >= 1"));
    }
    if cfg.b_permutations == 0 {
        return Err(Error::invalid_argument(
            "number of permutation replicates must be >= 1",
        ));
    }
    if !(cfg.level_alpha > 0.0 && cfg.level_alpha < 1.0) {
        return Err(Error::invalid_argument(format!(
            "significance level must lie in (0,1), got {}",
            cfg.level_alpha
        )));
    }
    let m = g.n_cols();
    let k = g.k();
    let c_eff = cfg.cols_per_draw.min(m);

    // independent column draws, without replacement within a draw
    let mut draw_rng = seeded_rng(child_seed(cfg.seed, streams::DRAW, 0));
    let draw_columns: Vec<Vec<usize>> = (0..cfg.n_draws)
        .map(|_| {
            let size = match cfg.draw_size {
                DrawSizePolicy::Fixed => c_eff,
                DrawSizePolicy::UniformMax => draw_rng.gen_range(1..=c_eff),
            };
            let mut cols = rand::seq::index::sample(&mut draw_rng, m, size).into_vec();
            cols.sort_unstable();
            cols
        })
        .collect();

    let pooled = g.pooled();
    let pooled_rows: Vec<&[u32]> = (0..pooled.n_rows()).map(|r| pooled.row(r)).collect();
    let draws: Vec<DrawCodes> = draw_columns
        .iter()
        .map(|cols| draw_codes(&pooled_rows, cols))
        .collect();

    let template = g.group_of_rows();
    let mut draw_pvalues = Vec::with_capacity(cfg.n_draws);
    let mut degenerate_draws = Vec::new();
    let mut low_expected_cell_draws = Vec::new();
    for (i, draw) in draws.iter().enumerate() {
        let (p, degenerate, counts) = pvalue_for_assignment(draw, &template, k)?;
        draw_pvalues.push(Pvalue::clamped(p));
        if degenerate {
            degenerate_draws.push(i);
        }
        if has_low_expected_cell(&counts, k, draw.n_tuples, cfg.min_cell_guideline) {
            low_expected_cell_draws.push(i);
        }
    }

    let n = pooled.n_rows();
    let resampled_min: Vec<f64> = (1..=cfg.b_permutations)
        .into_par_iter()
        .map(|b| {
            let mut rng = seeded_rng(child_seed(cfg.seed, streams::PERMUTE, b as u64));
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            let mut group_of = vec![0u16; n];
            for (pos, &row) in perm.iter().enumerate() {
                group_of[row] = template[pos];
            }
            let mut min_p = f64::INFINITY;
            for draw in &draws {
                let (p, _, _) = pvalue_for_assignment(draw, &group_of, k)
                    .map_err(|e| Error::Numerical(format!("permutation replicate {b}: {e}")))?;
                min_p = min_p.min(p);
            }
            Ok(min_p)
        })
        .collect::<Result<_>>()?;

    let threshold = order_statistic_threshold(&resampled_min, cfg.level_alpha);
    let rejected_draws: Vec<usize> = (0..cfg.n_draws)
        .filter(|&i| draw_pvalues[i].value() < threshold)
        .collect();
    let mut column_flag_counts = vec![0u64; m];
    for &i in &rejected_draws {
        for &c in &draw_columns[i] {
            column_flag_counts[c] += 1;
        }
    }
    Ok(RandChiOutcome {
        overall_reject: !rejected_draws.is_empty(),
        draw_pvalues,
        draw_columns,
        threshold,
        rejected_draws,
        column_flag_counts,
        resampled_min,
        degenerate_draws,
        low_expected_cell_draws,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::CategoricalTable;
    use rand::Rng;

    #[test]
    fn coverage_trivial_and_paper_values() {
        for d in [1, 5, 50] {
            assert_eq!(coverage_probability(10, 10, d).unwrap(), 1.0);
        }
        let p = coverage_probability(10, 3, 10).unwrap();
        assert!((p - (1.0 - 0.7_f64.powi(10))).abs() < 1e-15);
        assert!((p - 0.9717).abs() < 1e-3);
        assert!(coverage_probability(10, 11, 1).is_err());
    }

    #[test]
    fn coverage_small_ratio_approximation() {
        // coverage ≈ CD/m within 5% when CD/m <= 0.1
        for &(m, c, d) in &[(100usize, 1usize, 10usize), (200, 2, 10), (1000, 5, 20)] {
            let ratio = (c * d) as f64 / m as f64;
            if ratio > 0.1 {
                continue;
            }
            let exact = coverage_probability(m, c, d).unwrap();
            assert!(
                (exact - ratio).abs() / ratio < 0.05,
                "m={m} C={c} D={d}: {exact} vs {ratio}"
            );
        }
    }

    #[test]
    fn coverage_monotone_in_c_and_d() {
        let m = 25;
        for c in 1..m {
            assert!(
                coverage_probability(m, c, 5).unwrap()
                    <= coverage_probability(m, c + 1, 5).unwrap() + 1e-15
            );
        }
        for d in 1..40 {
            assert!(
                coverage_probability(m, 3, d).unwrap()
                    <= coverage_probability(m, 3, d + 1).unwrap() + 1e-15
            );
        }
    }

    #[test]
    fn default_c_heuristic() {
        assert_eq!(default_cols_per_draw(1), 1);
        assert_eq!(default_cols_per_draw(8), 1);
        assert_eq!(default_cols_per_draw(10), 1);
        assert_eq!(default_cols_per_draw(21), 3);
        assert_eq!(default_cols_per_draw(50), 7);
    }

    fn sample_from_columns(groups: Vec<Vec<Vec<u32>>>) -> GroupedSample {
        // groups[g][col][row]
        let tables = groups
            .into_iter()
            .map(|cols| {
                let n = cols[0].len();
                let m = cols.len();
                let mut cells = vec![0u32; n * m];
                for (j, col) in cols.iter().enumerate() {
                    for (r, &v) in col.iter().enumerate() {
                        cells[r * m + j] = v;
                    }
                }
                CategoricalTable::new(cells, m, vec![4; m], None).unwrap()
            })
            .collect::<Vec<_>>();
        let k = tables.len();
        GroupedSample::new(tables, (0..k).map(|i| format!("g{i}")).collect()).unwrap()
    }

    #[test]
    fn joint_table_single_binary_column() {
        let g = sample_from_columns(vec![vec![vec![0, 0, 1]], vec![vec![0, 1, 1]]]);
        let t = joint_table(&g, &[0]).unwrap();
        assert_eq!(t.n_rows(), 2);
        assert_eq!(t.n_cols(), 2);
        assert_eq!(t.counts(), &[2, 1, 1, 2]);
    }

    #[test]
    fn joint_table_omits_unobserved_tuples() {
        // 2 columns, 4 possible pairs per column set of cardinality 2x2,
        // but only 3 observed
        let g = sample_from_columns(vec![
            vec![vec![0, 0, 1], vec![0, 1, 1]],
            vec![vec![0, 1, 1], vec![0, 1, 1]],
        ]);
        let t = joint_table(&g, &[0, 1]).unwrap();
        assert!(t.n_cols() <= 4);
        let total: u64 = t.counts().iter().sum();
        assert_eq!(total, 6);
        // lexicographic order of tuple labels
        let labels = t.col_labels.clone();
        let mut sorted = labels.clone();
        sorted.sort();
        assert_eq!(labels, sorted);
    }

    #[test]
    fn joint_table_validates_columns() {
        let g = sample_from_columns(vec![vec![vec![0, 1]], vec![vec![1, 0]]]);
        assert!(joint_table(&g, &[]).is_err());
        assert!(joint_table(&g, &[3]).is_err());
    }

    fn iid_sample(seed: u64, n: usize, k: usize, m: usize) -> GroupedSample {
        let mut rng = crate::statfun::seeded_rng(seed);
        let tables = (0..k)
            .map(|_| {
                let cells: Vec<u32> = (0..n * m).map(|_| rng.gen_range(0..4)).collect();
                CategoricalTable::new(cells, m, vec![4; m], None).unwrap()
            })
            .collect();
        GroupedSample::new(tables, (0..k).map(|i| format!("g{i}")).collect()).unwrap()
    }

    #[test]
    fn deterministic_given_seed() {
        let g = iid_sample(9, 40, 2, 6);
        let cfg = RandChiConfig::new(2, 5, 49, 0.05, 1234);
        let a = randomized_chi_square_test(&g, &cfg).unwrap();
        let b = randomized_chi_square_test(&g, &cfg).unwrap();
        assert_eq!(a.draw_columns, b.draw_columns);
        assert_eq!(a.resampled_min, b.resampled_min);
        assert_eq!(a.rejected_draws, b.rejected_draws);
    }

    #[test]
    fn grand_total_equals_n_for_every_draw() {
        let g = iid_sample(10, 30, 3, 5);
        let cfg = RandChiConfig::new(2, 8, 19, 0.05, 7);
        let out = randomized_chi_square_test(&g, &cfg).unwrap();
        for cols in &out.draw_columns {
            let t = joint_table(&g, cols).unwrap();
            let total: u64 = t.counts().iter().sum();
            assert_eq!(total as usize, g.n_total());
        }
    }

    #[test]
    fn flags_only_from_rejected_draws() {
        let g = iid_sample(11, 60, 2, 6);
        let cfg = RandChiConfig::new(2, 10, 99, 0.05, 3);
        let out = randomized_chi_square_test(&g, &cfg).unwrap();
        let mut expected = vec![0u64; 6];
        for &i in &out.rejected_draws {
            for &c in &out.draw_columns[i] {
                expected[c] += 1;
            }
        }
        assert_eq!(out.column_flag_counts, expected);
        assert_eq!(out.overall_reject, !out.rejected_draws.is_empty());
    }

    #[test]
    fn detects_one_wildly_imbalanced_column() {
        let mut rng = crate::statfun::seeded_rng(12);
        let n = 150;
        let m = 5;
        let a_cells: Vec<u32> = (0..n * m).map(|_| rng.gen_range(0..4)).collect();
        let mut b_cells: Vec<u32> = (0..n * m).map(|_| rng.gen_range(0..4)).collect();
        for r in 0..n {
            // column 2 heavily skewed in group B
            if rng.gen::<f64>() < 0.8 {
                b_cells[r * m + 2] = 0;
            }
        }
        let ta = CategoricalTable::new(a_cells, m, vec![4; m], None).unwrap();
        let tb = CategoricalTable::new(b_cells, m, vec![4; m], None).unwrap();
        let g = GroupedSample::new(vec![ta, tb], vec!["A".into(), "B".into()]).unwrap();
        let cfg = RandChiConfig::new(2, 12, 99, 0.05, 21);
        let out = randomized_chi_square_test(&g, &cfg).unwrap();
        assert!(out.overall_reject);
        let max_flags = *out.column_flag_counts.iter().max().unwrap();
        assert_eq!(out.column_flag_counts[2], max_flags);
    }

    #[test]
    fn degenerate_single_tuple_draw_contributes_p_one() {
        // constant columns: every draw sees a single tuple, p = 1
        let ta = CategoricalTable::new(vec![0, 0, 0], 1, vec![4], None).unwrap();
        let tb = CategoricalTable::new(vec![0, 0, 0], 1, vec![4], None).unwrap();
        let g = GroupedSample::new(vec![ta, tb], vec!["A".into(), "B".into()]).unwrap();
        let cfg = RandChiConfig::new(1, 3, 19, 0.05, 2);
        let out = randomized_chi_square_test(&g, &cfg).unwrap();
        assert!(out.draw_pvalues.iter().all(|p| p.value() == 1.0));
        assert_eq!(out.degenerate_draws, vec![0, 1, 2]);
        assert!(!out.overall_reject);
    }

    #[test]
    fn low_expected_cell_warning_fires() {
        let g = iid_sample(31, 8, 2, 3);
        let cfg = RandChiConfig::new(3, 4, 19, 0.05, 5);
        let out = randomized_chi_square_test(&g, &cfg).unwrap();
        // 16 rows over up to 64 tuples: expected counts are tiny
        assert!(!out.low_expected_cell_draws.is_empty());
    }
}
