//! Distance-components (DISCO) k-sample test: energy dispersions, the
//! between/within decomposition of total dispersion, the F-like statistic,
//! and its permutation calibration.
//!
//! For categorical input the rows are one-hot embedded by default, so two
//! rows differing in d columns are √(2d) apart; the raw integer-code
//! embedding is available as an option.

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::dataset::{CategoricalTable, GroupedSample, NumericMatrix};
use crate::error::{Error, Result};
use crate::multiplicity::{upper_tail_result, PermutationResult};
use crate::statfun::{child_seed, pairwise_sum, seeded_rng, streams};

/// How categorical rows are embedded before distance computation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CategoricalEncoding {
    /// One indicator dimension per category (default).
    OneHot,
    /// Integer category codes used directly as coordinates.
    Codes,
}

/// The dispersion decomposition: total = between + within, and the F-like
/// statistic (between/(K−1)) / (within/(N−K)).
#[derive(Debug, Clone)]
pub struct DiscoComponents {
    pub between: f64,
    pub within: f64,
    pub total: f64,
    pub statistic: f64,
    pub index_alpha: f64,
    pub group_sizes: Vec<usize>,
}

/// Tuning knobs for the distance engine.
#[derive(Debug, Clone)]
pub struct DiscoOptions {
    /// Largest pooled row count for which the full pairwise distance matrix
    /// is materialized; beyond it distances are recomputed streamingly.
    pub pooled_row_limit: usize,
}

impl Default for DiscoOptions {
    fn default() -> Self {
        DiscoOptions {
            pooled_row_limit: 8192,
        }
    }
}

fn check_alpha(index_alpha: f64) -> Result<()> {
    if !(index_alpha > 0.0 && index_alpha <= 2.0) {
        return Err(Error::invalid_argument(format!(
            "distance index must lie in (0,2], got {index_alpha}"
        )));
    }
    Ok(())
}

/// ‖x−y‖^α given the squared distance, with exact short-circuits for the
/// common indices.
#[inline]
fn pow_half(squared: f64, index_alpha: f64) -> f64 {
    if index_alpha == 2.0 {
        squared
    } else if index_alpha == 1.0 {
        squared.sqrt()
    } else {
        if squared == 0.0 {
            return 0.0;
        }
        squared.powf(index_alpha * 0.5)
    }
}

#[inline]
fn dist_pow(x: &[f64], y: &[f64], index_alpha: f64) -> f64 {
    let mut ss = 0.0;
    for (a, b) in x.iter().zip(y) {
        let d = a - b;
        ss += d * d;
    }
    pow_half(ss, index_alpha)
}

/// Mean pairwise α-distance (1/(n₁n₂)) Σᵢ Σₘ ‖aᵢ − bₘ‖^α.
pub fn g_alpha(a: &NumericMatrix, b: &NumericMatrix, index_alpha: f64) -> Result<f64> {
    check_alpha(index_alpha)?;
    if a.n_dims() != b.n_dims() {
        return Err(Error::invalid_argument(format!(
            "dimension mismatch: {} vs {}",
            a.n_dims(),
            b.n_dims()
        )));
    }
    if a.n_rows() == 0 || b.n_rows() == 0 {
        return Err(Error::invalid_argument("samples must be nonempty"));
    }
    let row_sums: Vec<f64> = (0..a.n_rows())
        .map(|i| {
            let xi = a.row(i);
            let mut s = 0.0;
            for j in 0..b.n_rows() {
                s += dist_pow(xi, b.row(j), index_alpha);
            }
            s
        })
        .collect();
    Ok(pairwise_sum(&row_sums) / (a.n_rows() as f64 * b.n_rows() as f64))
}

fn d_alpha_from_g(n1: f64, n2: f64, g_ab: f64, g_aa: f64, g_bb: f64) -> Result<f64> {
    let d = (n1 * n2 / (n1 + n2)) * (2.0 * g_ab - g_aa - g_bb);
    if d < -1e-12 {
        return Err(Error::Numerical(format!(
            "between-sample dispersion came out {d}, far below zero"
        )));
    }
    Ok(d.max(0.0))
}

/// The two-sample α-dispersion (n₁n₂/(n₁+n₂))·[2g(a,b) − g(a,a) − g(b,b)],
/// clipped to zero when floating-point cancellation leaves a value in
/// [−1e-12, 0).
pub fn d_alpha(a: &NumericMatrix, b: &NumericMatrix, index_alpha: f64) -> Result<f64> {
    let g_ab = g_alpha(a, b, index_alpha)?;
    let g_aa = g_alpha(a, a, index_alpha)?;
    let g_bb = g_alpha(b, b, index_alpha)?;
    d_alpha_from_g(a.n_rows() as f64, b.n_rows() as f64, g_ab, g_aa, g_bb)
}

/// Packed upper-triangular powered-distance matrix over the pooled rows.
struct PooledDistances {
    n: usize,
    vals: Vec<f64>, // index (i, j) with i < j: row i's block is contiguous
}

impl PooledDistances {
    fn row_offset(&self, i: usize) -> usize {
        i * self.n - i * (i + 1) / 2
    }

    fn from_rows<'a>(rows: &dyn Fn(usize) -> &'a [f64], n: usize, index_alpha: f64) -> Self {
        let mut vals = Vec::with_capacity(n * (n - 1) / 2);
        for i in 0..n {
            let xi = rows(i);
            for j in i + 1..n {
                vals.push(dist_pow(xi, rows(j), index_alpha));
            }
        }
        PooledDistances { n, vals }
    }

    fn from_categorical(
        pooled: &CategoricalTable,
        index_alpha: f64,
        encoding: CategoricalEncoding,
    ) -> Self {
        let n = pooled.n_rows();
        let m = pooled.n_cols();
        let mut vals = Vec::with_capacity(n * (n - 1) / 2);
        match encoding {
            CategoricalEncoding::OneHot => {
                // one-hot distance is a function of the column mismatch count
                let lut: Vec<f64> = (0..=m)
                    .map(|d| pow_half(2.0 * d as f64, index_alpha))
                    .collect();
                for i in 0..n {
                    let ri = pooled.row(i);
                    for j in i + 1..n {
                        let rj = pooled.row(j);
                        let mut mismatches = 0usize;
                        for (a, b) in ri.iter().zip(rj) {
                            mismatches += usize::from(a != b);
                        }
                        vals.push(lut[mismatches]);
                    }
                }
            }
            CategoricalEncoding::Codes => {
                for i in 0..n {
                    let ri = pooled.row(i);
                    for j in i + 1..n {
                        let rj = pooled.row(j);
                        let mut ss = 0.0;
                        for (a, b) in ri.iter().zip(rj) {
                            let d = *a as f64 - *b as f64;
                            ss += d * d;
                        }
                        vals.push(pow_half(ss, index_alpha));
                    }
                }
            }
        }
        PooledDistances { n, vals }
    }

    /// Unordered-pair sums per group pair: slot (a ≤ b) of the returned
    /// vector holds Σ over pairs {i, j} with groups {a, b}.
    ///
    /// `accurate` collects per-row partials and pairwise-sums them (used for
    /// the observed statistic); the plain path accumulates sequentially.
    fn pair_sums(&self, group_of: &[u16], k: usize, accurate: bool) -> Vec<f64> {
        let slots = k * (k + 1) / 2;
        let slot = |a: usize, b: usize| -> usize {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            lo * k - lo * (lo + 1) / 2 + hi
        };
        if accurate {
            let mut partials = vec![0.0; self.n * slots];
            for i in 0..self.n {
                let gi = group_of[i] as usize;
                let base = i * slots;
                let off = self.row_offset(i);
                for j in i + 1..self.n {
                    let s = slot(gi, group_of[j] as usize);
                    partials[base + s] += self.vals[off + j - i - 1];
                }
            }
            (0..slots)
                .map(|s| {
                    let col: Vec<f64> =
                        (0..self.n).map(|i| partials[i * slots + s]).collect();
                    pairwise_sum(&col)
                })
                .collect()
        } else {
            let mut sums = vec![0.0; slots];
            let mut idx = 0usize;
            for i in 0..self.n {
                let gi = group_of[i] as usize;
                for j in i + 1..self.n {
                    sums[slot(gi, group_of[j] as usize)] += self.vals[idx];
                    idx += 1;
                }
            }
            sums
        }
    }
}

fn components_from_pair_sums(
    pair_sums: &[f64],
    sizes: &[usize],
    index_alpha: f64,
) -> Result<DiscoComponents> {
    let k = sizes.len();
    let n: usize = sizes.iter().sum();
    let slot = |a: usize, b: usize| a * k - a * (a + 1) / 2 + b; // a <= b

    let g_within: Vec<f64> = (0..k)
        .map(|j| 2.0 * pair_sums[slot(j, j)] / (sizes[j] as f64 * sizes[j] as f64))
        .collect();
    let within: f64 = (0..k)
        .map(|j| sizes[j] as f64 / 2.0 * g_within[j])
        .sum();
    let total = pair_sums.iter().sum::<f64>() / n as f64;

    let mut between = 0.0;
    for j in 0..k {
        for l in j + 1..k {
            let (nj, nl) = (sizes[j] as f64, sizes[l] as f64);
            let g_jl = pair_sums[slot(j, l)] / (nj * nl);
            let d = d_alpha_from_g(nj, nl, g_jl, g_within[j], g_within[l])?;
            between += (nj + nl) / (2.0 * n as f64) * d;
        }
    }

    let statistic = if within > 0.0 && n > k {
        (between / (k - 1) as f64) / (within / (n - k) as f64)
    } else if between.abs() <= 1e-12 {
        0.0
    } else {
        f64::INFINITY
    };

    Ok(DiscoComponents {
        between,
        within,
        total,
        statistic,
        index_alpha,
        group_sizes: sizes.to_vec(),
    })
}

/// Streamed computation (no pooled matrix): per-pair g's and the pooled
/// total by direct double loops over row blocks.
fn components_streamed(groups: &[NumericMatrix], index_alpha: f64) -> Result<DiscoComponents> {
    let k = groups.len();
    let sizes: Vec<usize> = groups.iter().map(|g| g.n_rows()).collect();
    let n: usize = sizes.iter().sum();

    let g_within: Vec<f64> = groups
        .iter()
        .map(|g| g_alpha(g, g, index_alpha))
        .collect::<Result<_>>()?;
    let within: f64 = (0..k)
        .map(|j| sizes[j] as f64 / 2.0 * g_within[j])
        .sum();

    let mut between = 0.0;
    for j in 0..k {
        for l in j + 1..k {
            let g_jl = g_alpha(&groups[j], &groups[l], index_alpha)?;
            let (nj, nl) = (sizes[j] as f64, sizes[l] as f64);
            let d = d_alpha_from_g(nj, nl, g_jl, g_within[j], g_within[l])?;
            between += (nj + nl) / (2.0 * n as f64) * d;
        }
    }

    // pooled total dispersion, block-wise: (N/2) g(A,A)
    let mut cross = vec![0.0; k * k];
    for j in 0..k {
        for l in j + 1..k {
            cross[j * k + l] = g_alpha(&groups[j], &groups[l], index_alpha)?;
        }
    }
    let mut total_sum = 0.0; // sum over unordered pooled pairs
    for j in 0..k {
        let nj = sizes[j] as f64;
        total_sum += g_within[j] * nj * nj / 2.0;
        for l in j + 1..k {
            total_sum += cross[j * k + l] * nj * sizes[l] as f64;
        }
    }
    let total = total_sum / n as f64;

    let statistic = if within > 0.0 && n > k {
        (between / (k - 1) as f64) / (within / (n - k) as f64)
    } else if between.abs() <= 1e-12 {
        0.0
    } else {
        f64::INFINITY
    };

    Ok(DiscoComponents {
        between,
        within,
        total,
        statistic,
        index_alpha,
        group_sizes: sizes,
    })
}

fn check_groups_numeric(groups: &[NumericMatrix]) -> Result<()> {
    if groups.len() < 2 {
        return Err(Error::invalid_argument("need at least 2 groups"));
    }
    let d = groups[0].n_dims();
    for (i, g) in groups.iter().enumerate() {
        if g.n_rows() == 0 {
            return Err(Error::invalid_argument(format!("group {i} is empty")));
        }
        if g.n_dims() != d {
            return Err(Error::invalid_argument(format!(
                "group {i} has dimension {}, expected {d}",
                g.n_dims()
            )));
        }
    }
    Ok(())
}

/// Dispersion components of numeric samples.
pub fn disco_components_numeric(
    groups: &[NumericMatrix],
    index_alpha: f64,
) -> Result<DiscoComponents> {
    disco_components_numeric_opts(groups, index_alpha, &DiscoOptions::default())
}

pub fn disco_components_numeric_opts(
    groups: &[NumericMatrix],
    index_alpha: f64,
    opts: &DiscoOptions,
) -> Result<DiscoComponents> {
    check_alpha(index_alpha)?;
    check_groups_numeric(groups)?;
    let sizes: Vec<usize> = groups.iter().map(|g| g.n_rows()).collect();
    let n: usize = sizes.iter().sum();
    if n > opts.pooled_row_limit {
        return components_streamed(groups, index_alpha);
    }
    let mut pooled: Vec<&[f64]> = Vec::with_capacity(n);
    for g in groups {
        for r in 0..g.n_rows() {
            pooled.push(g.row(r));
        }
    }
    let rows = |i: usize| pooled[i];
    let dist = PooledDistances::from_rows(&rows, n, index_alpha);
    let group_of = template_labels(&sizes);
    let sums = dist.pair_sums(&group_of, sizes.len(), true);
    components_from_pair_sums(&sums, &sizes, index_alpha)
}

/// Dispersion components of a grouped categorical sample after embedding.
pub fn disco_components(
    g: &GroupedSample,
    index_alpha: f64,
    encoding: CategoricalEncoding,
) -> Result<DiscoComponents> {
    check_alpha(index_alpha)?;
    let sizes = g.group_sizes();
    let dist = PooledDistances::from_categorical(&g.pooled(), index_alpha, encoding);
    let group_of = template_labels(&sizes);
    let sums = dist.pair_sums(&group_of, sizes.len(), true);
    components_from_pair_sums(&sums, &sizes, index_alpha)
}

fn template_labels(sizes: &[usize]) -> Vec<u16> {
    let mut labels = Vec::with_capacity(sizes.iter().sum());
    for (gi, &s) in sizes.iter().enumerate() {
        labels.extend(std::iter::repeat(gi as u16).take(s));
    }
    labels
}

/// DISCO test outcome: the observed decomposition plus the permutation
/// calibration.
#[derive(Debug, Clone)]
pub struct DiscoTestOutcome {
    pub components: DiscoComponents,
    pub result: PermutationResult,
}

fn disco_test_engine(
    dist: &PooledDistances,
    sizes: &[usize],
    index_alpha: f64,
    b_permutations: usize,
    level_alpha: f64,
    seed: u64,
) -> Result<DiscoTestOutcome> {
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
    let k = sizes.len();
    let template = template_labels(sizes);
    let observed_sums = dist.pair_sums(&template, k, true);
    let components = components_from_pair_sums(&observed_sums, sizes, index_alpha)?;

    let n = dist.n;
    let resampled: Vec<f64> = (1..=b_permutations)
        .into_par_iter()
        .map(|b| {
            let mut rng = seeded_rng(child_seed(seed, streams::PERMUTE, b as u64));
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            let mut group_of = vec![0u16; n];
            for (pos, &row) in perm.iter().enumerate() {
                group_of[row] = template[pos];
            }
            let sums = dist.pair_sums(&group_of, k, false);
            components_from_pair_sums(&sums, sizes, index_alpha).map(|c| c.statistic)
        })
        .collect::<Result<_>>()?;

    let result = upper_tail_result(components.statistic, &resampled, level_alpha);
    Ok(DiscoTestOutcome { components, result })
}

/// Permutation DISCO test on a grouped categorical sample.
pub fn disco_test(
    g: &GroupedSample,
    index_alpha: f64,
    b_permutations: usize,
    level_alpha: f64,
    seed: u64,
    encoding: CategoricalEncoding,
) -> Result<DiscoTestOutcome> {
    check_alpha(index_alpha)?;
    let dist = PooledDistances::from_categorical(&g.pooled(), index_alpha, encoding);
    disco_test_engine(
        &dist,
        &g.group_sizes(),
        index_alpha,
        b_permutations,
        level_alpha,
        seed,
    )
}

/// Permutation DISCO test on numeric samples.
pub fn disco_test_numeric(
    groups: &[NumericMatrix],
    index_alpha: f64,
    b_permutations: usize,
    level_alpha: f64,
    seed: u64,
) -> Result<DiscoTestOutcome> {
    check_alpha(index_alpha)?;
    check_groups_numeric(groups)?;
    let n: usize = groups.iter().map(|g| g.n_rows()).sum();
    let mut pooled: Vec<&[f64]> = Vec::with_capacity(n);
    for g in groups {
        for r in 0..g.n_rows() {
            pooled.push(g.row(r));
        }
    }
    let rows = |i: usize| pooled[i];
    let dist = PooledDistances::from_rows(&rows, n, index_alpha);
    let sizes: Vec<usize> = groups.iter().map(|g| g.n_rows()).collect();
    disco_test_engine(&dist, &sizes, index_alpha, b_permutations, level_alpha, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{one_hot, CategoricalTable};
    use rand::Rng;

    fn matrix(rows: &[&[f64]]) -> NumericMatrix {
        let dims = rows[0].len();
        NumericMatrix::new(rows.iter().flat_map(|r| r.iter().copied()).collect(), dims)
            .unwrap()
    }

    #[test]
    fn g_alpha_zero_for_identical_single_points() {
        let a = matrix(&[&[1.0, 2.0]]);
        assert_eq!(g_alpha(&a, &a, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn g_alpha_unit_distance() {
        let a = matrix(&[&[0.0]]);
        let b = matrix(&[&[1.0]]);
        assert_eq!(g_alpha(&a, &b, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn g_alpha_matches_naive_double_loop() {
        let mut rng = crate::statfun::seeded_rng(42);
        for &alpha in &[0.5, 1.0, 1.5, 2.0] {
            let a_entries: Vec<f64> = (0..15).map(|_| rng.gen::<f64>() * 4.0 - 2.0).collect();
            let b_entries: Vec<f64> = (0..12).map(|_| rng.gen::<f64>() * 4.0 - 2.0).collect();
            let a = NumericMatrix::new(a_entries, 3).unwrap();
            let b = NumericMatrix::new(b_entries, 3).unwrap();
            let mut naive = 0.0;
            for i in 0..a.n_rows() {
                for j in 0..b.n_rows() {
                    let ss: f64 = a
                        .row(i)
                        .iter()
                        .zip(b.row(j))
                        .map(|(x, y)| (x - y) * (x - y))
                        .sum();
                    naive += ss.sqrt().powf(alpha);
                }
            }
            naive /= (a.n_rows() * b.n_rows()) as f64;
            let got = g_alpha(&a, &b, alpha).unwrap();
            assert!((got - naive).abs() <= 1e-12 * naive.max(1.0), "{got} vs {naive}");
        }
    }

    #[test]
    fn g_alpha_validates_input() {
        let a = matrix(&[&[0.0]]);
        let b = matrix(&[&[0.0, 1.0]]);
        assert!(g_alpha(&a, &b, 1.0).is_err());
        assert!(g_alpha(&a, &a, 0.0).is_err());
        assert!(g_alpha(&a, &a, 2.5).is_err());
    }

    #[test]
    fn d_alpha_identical_samples_is_zero() {
        let a = matrix(&[&[1.0], &[2.0], &[5.0]]);
        assert_eq!(d_alpha(&a, &a, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn d_alpha_hand_value() {
        let a = matrix(&[&[0.0]]);
        let b = matrix(&[&[1.0]]);
        assert_eq!(d_alpha(&a, &b, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn d_alpha_orders_same_vs_shifted() {
        let mut rng = crate::statfun::seeded_rng(7);
        let draw = |rng: &mut crate::statfun::SeededRng, shift: f64| -> NumericMatrix {
            // crude bucketed normal: sum of uniforms, shifted
            let vals: Vec<f64> = (0..200)
                .map(|_| {
                    let z: f64 =
                        (0..12).map(|_| rng.gen::<f64>()).sum::<f64>() - 6.0 + shift;
                    (2.0 * z).floor() / 2.0
                })
                .collect();
            NumericMatrix::from_column(&vals).unwrap()
        };
        let same_a = draw(&mut rng, 0.0);
        let same_b = draw(&mut rng, 0.0);
        let far = draw(&mut rng, 2.0);
        let d_same = d_alpha(&same_a, &same_b, 1.0).unwrap();
        let d_far = d_alpha(&same_a, &far, 1.0).unwrap();
        assert!(
            d_far > 10.0 * d_same.max(1e-3),
            "expected clear separation: {d_same} vs {d_far}"
        );
    }

    fn random_grouped(seed: u64, k: usize, m: usize, max_rows: usize) -> GroupedSample {
        let mut rng = crate::statfun::seeded_rng(seed);
        let groups = (0..k)
            .map(|_| {
                let n = rng.gen_range(2..=max_rows);
                let cells: Vec<u32> = (0..n * m).map(|_| rng.gen_range(0..4)).collect();
                CategoricalTable::new(cells, m, vec![4; m], None).unwrap()
            })
            .collect();
        GroupedSample::new(groups, (0..k).map(|i| format!("g{i}")).collect()).unwrap()
    }

    #[test]
    fn identical_groups_have_zero_between() {
        let t = CategoricalTable::new(vec![0, 1, 2, 3, 1, 2], 2, vec![4, 4], None).unwrap();
        let g = GroupedSample::new(vec![t.clone(), t], vec!["A".into(), "B".into()]).unwrap();
        let c = disco_components(&g, 1.0, CategoricalEncoding::OneHot).unwrap();
        assert!(c.between.abs() < 1e-12);
        assert_eq!(c.statistic, 0.0);
    }

    #[test]
    fn total_equals_between_plus_within() {
        for seed in 0..20 {
            let g = random_grouped(seed, 2 + (seed as usize % 3), 4, 30);
            for &alpha in &[0.5, 1.0, 1.5] {
                let c = disco_components(&g, alpha, CategoricalEncoding::OneHot).unwrap();
                let lhs = c.total;
                let rhs = c.between + c.within;
                assert!(
                    (lhs - rhs).abs() <= 1e-9 * lhs.abs().max(1.0),
                    "identity violated: T={lhs} S+W={rhs} (seed {seed}, alpha {alpha})"
                );
            }
        }
    }

    #[test]
    fn alpha_two_matches_anova_f() {
        let mut rng = crate::statfun::seeded_rng(1234);
        for _ in 0..20 {
            let k = rng.gen_range(2..5);
            let groups: Vec<NumericMatrix> = (0..k)
                .map(|_| {
                    let n = rng.gen_range(3..25);
                    let vals: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 10.0).collect();
                    NumericMatrix::from_column(&vals).unwrap()
                })
                .collect();
            let c = disco_components_numeric(&groups, 2.0).unwrap();

            // classical one-way ANOVA
            let all: Vec<f64> = groups
                .iter()
                .flat_map(|g| g.entries().iter().copied())
                .collect();
            let n = all.len() as f64;
            let grand = all.iter().sum::<f64>() / n;
            let mut sst = 0.0;
            let mut sse = 0.0;
            for g in &groups {
                let nj = g.n_rows() as f64;
                let mean = g.entries().iter().sum::<f64>() / nj;
                sst += nj * (mean - grand) * (mean - grand);
                for v in g.entries() {
                    sse += (v - mean) * (v - mean);
                }
            }
            let f = (sst / (k as f64 - 1.0)) / (sse / (n - k as f64));
            assert!(
                (c.statistic - f).abs() <= 1e-9 * f.max(1.0),
                "DISCO {} vs ANOVA {f}",
                c.statistic
            );
        }
    }

    #[test]
    fn invariant_under_within_group_row_reorder() {
        let g = random_grouped(77, 3, 3, 15);
        let c1 = disco_components(&g, 1.0, CategoricalEncoding::OneHot).unwrap();
        // reverse rows in each group
        let reversed: Vec<CategoricalTable> = g
            .groups()
            .iter()
            .map(|t| {
                let mut cells = Vec::with_capacity(t.n_rows() * t.n_cols());
                for r in (0..t.n_rows()).rev() {
                    cells.extend_from_slice(t.row(r));
                }
                CategoricalTable::new(
                    cells,
                    t.n_cols(),
                    t.col_cardinalities().to_vec(),
                    None,
                )
                .unwrap()
            })
            .collect();
        let g2 = GroupedSample::new(reversed, g.group_names().to_vec()).unwrap();
        let c2 = disco_components(&g2, 1.0, CategoricalEncoding::OneHot).unwrap();
        assert!((c1.statistic - c2.statistic).abs() < 1e-12);
        assert!((c1.total - c2.total).abs() < 1e-12);
    }

    #[test]
    fn scale_equivariance() {
        let mut rng = crate::statfun::seeded_rng(31);
        let groups: Vec<NumericMatrix> = (0..3)
            .map(|_| {
                let vals: Vec<f64> = (0..20).map(|_| rng.gen::<f64>()).collect();
                NumericMatrix::new(vals, 2).unwrap()
            })
            .collect();
        for &alpha in &[0.5, 1.0, 1.7] {
            let c1 = disco_components_numeric(&groups, alpha).unwrap();
            let c = 3.7_f64;
            let scaled: Vec<NumericMatrix> = groups
                .iter()
                .map(|g| {
                    NumericMatrix::new(
                        g.entries().iter().map(|v| v * c).collect(),
                        g.n_dims(),
                    )
                    .unwrap()
                })
                .collect();
            let c2 = disco_components_numeric(&scaled, alpha).unwrap();
            let factor = c.powf(alpha);
            assert!((c2.total - factor * c1.total).abs() < 1e-9 * c2.total.abs().max(1.0));
            assert!(
                (c2.between - factor * c1.between).abs()
                    < 1e-9 * c2.between.abs().max(1.0)
            );
            assert!((c2.statistic - c1.statistic).abs() < 1e-9 * c1.statistic.max(1.0));
        }
    }

    #[test]
    fn pooled_and_streamed_paths_agree() {
        let mut rng = crate::statfun::seeded_rng(90);
        let groups: Vec<NumericMatrix> = (0..3)
            .map(|_| {
                let n = rng.gen_range(5..20);
                let vals: Vec<f64> = (0..n * 2).map(|_| rng.gen::<f64>() * 3.0).collect();
                NumericMatrix::new(vals, 2).unwrap()
            })
            .collect();
        for &alpha in &[0.5, 1.0, 2.0] {
            let pooled = disco_components_numeric(&groups, alpha).unwrap();
            let streamed = disco_components_numeric_opts(
                &groups,
                alpha,
                &DiscoOptions { pooled_row_limit: 0 },
            )
            .unwrap();
            for (a, b) in [
                (pooled.total, streamed.total),
                (pooled.between, streamed.between),
                (pooled.within, streamed.within),
                (pooled.statistic, streamed.statistic),
            ] {
                assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn onehot_fast_path_matches_numeric_embedding() {
        let g = random_grouped(55, 3, 4, 12);
        let via_cat = disco_components(&g, 1.3, CategoricalEncoding::OneHot).unwrap();
        let numeric: Vec<NumericMatrix> = g.groups().iter().map(one_hot).collect();
        let via_num = disco_components_numeric(&numeric, 1.3).unwrap();
        assert!((via_cat.total - via_num.total).abs() < 1e-12 * via_num.total.max(1.0));
        assert!(
            (via_cat.statistic - via_num.statistic).abs()
                < 1e-12 * via_num.statistic.max(1.0)
        );
    }

    #[test]
    fn zero_permutations_rejected() {
        let g = random_grouped(5, 2, 2, 10);
        assert!(disco_test(&g, 1.0, 0, 0.05, 1, CategoricalEncoding::OneHot).is_err());
    }

    #[test]
    fn disco_test_detects_strong_marginal_shift() {
        // one group heavily skewed vs three uniform
        let mut rng = crate::statfun::seeded_rng(8);
        let mut groups: Vec<CategoricalTable> = (0..3)
            .map(|_| {
                let cells: Vec<u32> = (0..100 * 5).map(|_| rng.gen_range(0..4)).collect();
                CategoricalTable::new(cells, 5, vec![4; 5], None).unwrap()
            })
            .collect();
        let skew_cells: Vec<u32> = (0..100 * 5)
            .map(|_| {
                let u: f64 = rng.gen();
                if u < 0.7 {
                    0
                } else {
                    rng.gen_range(1..4)
                }
            })
            .collect();
        groups.push(CategoricalTable::new(skew_cells, 5, vec![4; 5], None).unwrap());
        let g = GroupedSample::new(
            groups,
            (0..4).map(|i| format!("g{i}")).collect(),
        )
        .unwrap();
        let out = disco_test(&g, 1.0, 99, 0.05, 3, CategoricalEncoding::OneHot).unwrap();
        assert!(out.result.rejected(), "p = {}", out.result.original[0].value());
    }

    #[test]
    fn disco_test_deterministic_and_thread_invariant() {
        let g = random_grouped(66, 2, 3, 20);
        let a = disco_test(&g, 1.0, 49, 0.05, 42, CategoricalEncoding::OneHot).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool
            .install(|| disco_test(&g, 1.0, 49, 0.05, 42, CategoricalEncoding::OneHot))
            .unwrap();
        assert_eq!(a.result.original[0].value(), b.result.original[0].value());
        assert_eq!(a.result.resampled_min, b.result.resampled_min);
        assert_eq!(a.result.rejections, b.result.rejections);
    }
}
