//! Synthetic data generators for the power studies: marginal-shift and
//! interaction scenarios, their combination, a conditional-multinomial
//! "real-world" process, a continuous-value bucketing helper, and the
//! Monte-Carlo power-study engine that runs any of the four test methods
//! over independently seeded replicates.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::dataset::{CategoricalTable, GroupedSample};
use crate::disco::{disco_test, CategoricalEncoding};
use crate::error::{Error, Result};
use crate::multiplicity::{baseline_marginal_test, AdjustMethod};
use crate::propensity::{propensity_test, PropensityConfig};
use crate::randchi::{
    default_cols_per_draw, randomized_chi_square_test, DrawSizePolicy, RandChiConfig,
};
use crate::statfun::{child_seed, multinomial_row, seeded_rng, streams, SeededRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    /// One group's per-column marginals are shifted.
    Marginal,
    /// One group's columns are correlated; marginals unchanged.
    Interaction,
    /// Marginal shift plus correlation on the same column block.
    Combined,
    /// The 8-column conditional-multinomial process, two groups A and B.
    RealWorld,
}

impl Scenario {
    pub fn as_str(&self) -> &'static str {
        match self {
            Scenario::Marginal => "marginal",
            Scenario::Interaction => "interaction",
            Scenario::Combined => "combined",
            Scenario::RealWorld => "realworld",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "marginal" => Ok(Scenario::Marginal),
            "interaction" => Ok(Scenario::Interaction),
            "combined" => Ok(Scenario::Combined),
            "realworld" => Ok(Scenario::RealWorld),
            other => Err(Error::invalid_argument(format!(
                "unknown scenario '{other}' (expected marginal|interaction|combined|realworld)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Signal {
    Weak,
    Medium,
    Strong,
}

impl Signal {
    pub fn as_str(&self) -> &'static str {
        match self {
            Signal::Weak => "weak",
            Signal::Medium => "medium",
            Signal::Strong => "strong",
        }
    }
}

impl fmt::Display for Signal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Signal {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "weak" => Ok(Signal::Weak),
            "medium" => Ok(Signal::Medium),
            "strong" => Ok(Signal::Strong),
            other => Err(Error::invalid_argument(format!(
                "unknown signal '{other}' (expected weak|medium|strong)"
            ))),
        }
    }
}

/// Parameters of one synthetic dataset.
#[derive(Debug, Clone)]
pub struct ScenarioSpec {
    pub scenario: Scenario,
    pub signal: Signal,
    /// Number of heterogeneous columns in the last group (0 = exchangeable
    /// null data). Ignored by the real-world scenario.
    pub n_hetero_cols: usize,
    /// Rows per group.
    pub n_rows: usize,
    /// Columns; the real-world scenario is fixed at 8.
    pub n_cols: usize,
    /// Groups; the real-world scenario is fixed at 2.
    pub n_groups: usize,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn new(scenario: Scenario, signal: Signal, n_hetero_cols: usize, seed: u64) -> Self {
        ScenarioSpec {
            scenario,
            signal,
            n_hetero_cols,
            n_rows: 100,
            n_cols: 10,
            n_groups: 4,
            seed,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        let mut s = self.clone();
        s.seed = seed;
        s
    }

    fn validate(&self) -> Result<()> {
        if self.n_rows == 0 {
            return Err(Error::invalid_argument("rows per group must be >= 1"));
        }
        if self.scenario == Scenario::RealWorld {
            return Ok(());
        }
        if self.n_cols == 0 {
            return Err(Error::invalid_argument("column count must be >= 1"));
        }
        if self.n_groups < 2 {
            return Err(Error::invalid_argument("need at least 2 groups"));
        }
        if self.n_hetero_cols > self.n_cols {
            return Err(Error::invalid_argument(format!(
                "heterogeneous column count {} exceeds dimension {}",
                self.n_hetero_cols, self.n_cols
            )));
        }
        Ok(())
    }
}

const NULL_PROBS: [f64; 4] = [0.25, 0.25, 0.25, 0.25];

fn marginal_probs(signal: Signal) -> [f64; 4] {
    match signal {
        Signal::Weak => [0.3, 0.25, 0.25, 0.2],
        Signal::Medium => [0.4, 0.25, 0.2, 0.15],
        Signal::Strong => [0.5, 0.2, 0.2, 0.1],
    }
}

/// Fraction of each rearranged column that is re-permuted, diluting the
/// correlation: none for strong, 40% for medium, 80% for weak.
fn interaction_permute_fraction(signal: Signal) -> f64 {
    match signal {
        Signal::Strong => 0.0,
        Signal::Medium => 0.4,
        Signal::Weak => 0.8,
    }
}

/// Component signals of the combined scenario: weak = weak marginal + weak
/// interaction, medium = weak + medium, strong = medium + medium.
fn combined_components(signal: Signal) -> (Signal, Signal) {
    match signal {
        Signal::Weak => (Signal::Weak, Signal::Weak),
        Signal::Medium => (Signal::Weak, Signal::Medium),
        Signal::Strong => (Signal::Medium, Signal::Medium),
    }
}

fn synthetic_col_names(m: usize) -> Vec<String> {
    (0..m).map(|j| format!("c{j}")).collect()
}

fn synthetic_group_names(k: usize) -> Vec<String> {
    (1..=k).map(|i| format!("g{i}")).collect()
}

/// Draw an n×m block of iid categorical cells, column j distributed by
/// `probs_for(j)`.
fn draw_cells<'a>(
    n_rows: usize,
    n_cols: usize,
    probs_for: &dyn Fn(usize) -> &'a [f64],
    rng: &mut SeededRng,
) -> Result<Vec<u32>> {
    let mut cells = vec![0u32; n_rows * n_cols];
    for r in 0..n_rows {
        for j in 0..n_cols {
            cells[r * n_cols + j] = multinomial_row(probs_for(j), rng)? as u32;
        }
    }
    Ok(cells)
}

/// Sort each of the first `n_hetero` columns, rotate column j left by 10·j,
/// then re-permute a fraction of its entries. Rearrangements preserve the
/// per-column counts exactly.
fn rearrange_for_interaction(
    cells: &mut [u32],
    n_rows: usize,
    n_cols: usize,
    n_hetero: usize,
    signal: Signal,
    seed: u64,
) {
    let frac = interaction_permute_fraction(signal);
    for j in 0..n_hetero {
        let mut col: Vec<u32> = (0..n_rows).map(|r| cells[r * n_cols + j]).collect();
        col.sort_unstable();
        col.rotate_left(10 * j % n_rows);
        let n_perm = (frac * n_rows as f64).floor() as usize;
        if n_perm >= 2 {
            let mut rng = seeded_rng(child_seed(seed, streams::ARRANGE, j as u64));
            let positions = rand::seq::index::sample(&mut rng, n_rows, n_perm).into_vec();
            let mut values: Vec<u32> = positions.iter().map(|&p| col[p]).collect();
            values.shuffle(&mut rng);
            for (&p, v) in positions.iter().zip(values) {
                col[p] = v;
            }
        }
        for r in 0..n_rows {
            cells[r * n_cols + j] = col[r];
        }
    }
}

fn build_synthetic(
    spec: &ScenarioSpec,
    last_group_cells: Vec<u32>,
) -> Result<GroupedSample> {
    let (n, m, k) = (spec.n_rows, spec.n_cols, spec.n_groups);
    let names = synthetic_col_names(m);
    let mut groups = Vec::with_capacity(k);
    for g in 0..k - 1 {
        let mut rng = seeded_rng(child_seed(spec.seed, streams::GEN, g as u64));
        let cells = draw_cells(n, m, &|_| &NULL_PROBS[..], &mut rng)?;
        groups.push(CategoricalTable::new(cells, m, vec![4; m], Some(names.clone()))?);
    }
    groups.push(CategoricalTable::new(
        last_group_cells,
        m,
        vec![4; m],
        Some(names),
    )?);
    GroupedSample::new(groups, synthetic_group_names(k))
}

/// Scenario 1: groups 1..K−1 are iid uniform 4-category; group K uses the
/// signal-level probability vector in its first `n_hetero_cols` columns.
pub fn gen_scenario1(spec: &ScenarioSpec) -> Result<GroupedSample> {
    if spec.scenario != Scenario::Marginal {
        return Err(Error::invalid_argument("spec is not a marginal scenario"));
    }
    spec.validate()?;
    let probs = marginal_probs(spec.signal);
    let h = spec.n_hetero_cols;
    let mut rng = seeded_rng(child_seed(
        spec.seed,
        streams::GEN,
        (spec.n_groups - 1) as u64,
    ));
    let cells = draw_cells(
        spec.n_rows,
        spec.n_cols,
        &|j| if j < h { &probs[..] } else { &NULL_PROBS[..] },
        &mut rng,
    )?;
    build_synthetic(spec, cells)
}

/// Scenario 2: marginals identical everywhere; group K's first
/// `n_hetero_cols` columns are sorted, rotated, and partially re-permuted to
/// induce cross-column correlation.
pub fn gen_scenario2(spec: &ScenarioSpec) -> Result<GroupedSample> {
    if spec.scenario != Scenario::Interaction {
        return Err(Error::invalid_argument("spec is not an interaction scenario"));
    }
    spec.validate()?;
    if spec.n_hetero_cols < 2 {
        return Err(Error::invalid_argument(
            "interaction heterogeneity needs at least 2 columns",
        ));
    }
    let mut rng = seeded_rng(child_seed(
        spec.seed,
        streams::GEN,
        (spec.n_groups - 1) as u64,
    ));
    let mut cells = draw_cells(spec.n_rows, spec.n_cols, &|_| &NULL_PROBS[..], &mut rng)?;
    rearrange_for_interaction(
        &mut cells,
        spec.n_rows,
        spec.n_cols,
        spec.n_hetero_cols,
        spec.signal,
        spec.seed,
    );
    build_synthetic(spec, cells)
}

/// Marginal shift and interaction rearrangement applied to the same column
/// block of group K.
pub fn gen_combined(spec: &ScenarioSpec) -> Result<GroupedSample> {
    if spec.scenario != Scenario::Combined {
        return Err(Error::invalid_argument("spec is not a combined scenario"));
    }
    spec.validate()?;
    if spec.n_hetero_cols < 2 {
        return Err(Error::invalid_argument(
            "combined heterogeneity needs at least 2 columns",
        ));
    }
    let (marg_signal, inter_signal) = combined_components(spec.signal);
    let probs = marginal_probs(marg_signal);
    let h = spec.n_hetero_cols;
    let mut rng = seeded_rng(child_seed(
        spec.seed,
        streams::GEN,
        (spec.n_groups - 1) as u64,
    ));
    let mut cells = draw_cells(
        spec.n_rows,
        spec.n_cols,
        &|j| if j < h { &probs[..] } else { &NULL_PROBS[..] },
        &mut rng,
    )?;
    rearrange_for_interaction(
        &mut cells,
        spec.n_rows,
        spec.n_cols,
        h,
        inter_signal,
        spec.seed,
    );
    build_synthetic(spec, cells)
}

/// Which arm of the real-world A/B process to generate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RealWorldSet {
    A,
    B,
}

pub const REALWORLD_COL_NAMES: [&str; 8] = [
    "area_of_living",
    "browser_type",
    "gender",
    "age",
    "employment_status",
    "income",
    "accumulated_visits",
    "converted_before",
];

pub const REALWORLD_CARDINALITIES: [u32; 8] = [3, 5, 2, 5, 3, 4, 4, 2];

const AREA_PROBS: [f64; 3] = [0.33, 0.33, 0.34];
const BROWSER_PROBS: [f64; 5] = [0.3, 0.3, 0.2, 0.15, 0.05];
const EMPLOYMENT_A: [f64; 3] = [0.3, 0.3, 0.4];
const EMPLOYMENT_B: [f64; 3] = [0.4, 0.3, 0.3];
const GENDER_BY_EMPLOYMENT: [[f64; 2]; 3] = [[0.5, 0.5], [0.6, 0.4], [0.3, 0.7]];
const AGE_BY_EMPLOYMENT: [[f64; 5]; 3] = [
    [0.7, 0.2, 0.05, 0.03, 0.02],
    [0.1, 0.2, 0.3, 0.3, 0.1],
    [0.1, 0.02, 0.04, 0.04, 0.8],
];
const INCOME_BY_EMPLOYMENT: [[f64; 4]; 3] = [
    [0.7, 0.2, 0.1, 0.0],
    [0.2, 0.3, 0.3, 0.2],
    [0.8, 0.15, 0.05, 0.0],
];
const VISITS_HIGH_AGE: [f64; 4] = [0.7, 0.15, 0.1, 0.05];
const VISITS_YOUNG_MALE: [f64; 4] = [0.5, 0.2, 0.2, 0.1];
const VISITS_RICH_FEMALE: [f64; 4] = [0.15, 0.2, 0.25, 0.4];
const VISITS_OTHER: [f64; 4] = [0.25, 0.25, 0.25, 0.25];
const CONV_LOW_INCOME_FEW_VISITS: [f64; 2] = [0.9, 0.1];
const CONV_HIGH_INCOME_FEW_VISITS: [f64; 2] = [0.85, 0.15];
const CONV_HIGH_INCOME_MANY_VISITS: [f64; 2] = [0.65, 0.35];
const CONV_LOW_INCOME_MANY_VISITS: [f64; 2] = [0.8, 0.2];

/// Accumulated-visits distribution given (income, gender, age); conditions
/// are evaluated in order, first match wins.
fn visits_probs(income: u32, gender: u32, age: u32) -> &'static [f64] {
    if income <= 2 && age >= 3 {
        &VISITS_HIGH_AGE
    } else if income <= 1 && gender == 0 && age <= 2 {
        &VISITS_YOUNG_MALE
    } else if income >= 3 && gender == 1 && age > 2 {
        &VISITS_RICH_FEMALE
    } else {
        &VISITS_OTHER
    }
}

/// Conversion distribution over the four (income, visits) quadrants split
/// at 2.
fn conversion_probs(income: u32, visits: u32) -> &'static [f64] {
    match (income < 2, visits < 2) {
        (true, true) => &CONV_LOW_INCOME_FEW_VISITS,
        (false, true) => &CONV_HIGH_INCOME_FEW_VISITS,
        (false, false) => &CONV_HIGH_INCOME_MANY_VISITS,
        (true, false) => &CONV_LOW_INCOME_MANY_VISITS,
    }
}

/// Generate one arm of the real-world process: 8 columns with employment
/// status driving gender, age and income, which in turn drive visit counts
/// and conversion. Set A and B differ only in the employment marginal.
pub fn gen_realworld(set: RealWorldSet, n_rows: usize, seed: u64) -> Result<CategoricalTable> {
    let employment_probs: &[f64] = match set {
        RealWorldSet::A => &EMPLOYMENT_A,
        RealWorldSet::B => &EMPLOYMENT_B,
    };
    let mut rng = seeded_rng(seed);
    let m = 8;
    let mut cells = vec![0u32; n_rows * m];
    for r in 0..n_rows {
        let area = multinomial_row(&AREA_PROBS, &mut rng)? as u32;
        let browser = multinomial_row(&BROWSER_PROBS, &mut rng)? as u32;
        let employment = multinomial_row(employment_probs, &mut rng)? as u32;
        let gender =
            multinomial_row(&GENDER_BY_EMPLOYMENT[employment as usize], &mut rng)? as u32;
        let age = multinomial_row(&AGE_BY_EMPLOYMENT[employment as usize], &mut rng)? as u32;
        let income =
            multinomial_row(&INCOME_BY_EMPLOYMENT[employment as usize], &mut rng)? as u32;
        let visits = multinomial_row(visits_probs(income, gender, age), &mut rng)? as u32;
        let converted = multinomial_row(conversion_probs(income, visits), &mut rng)? as u32;
        let row = [area, browser, gender, age, employment, income, visits, converted];
        cells[r * m..(r + 1) * m].copy_from_slice(&row);
    }
    CategoricalTable::new(
        cells,
        m,
        REALWORLD_CARDINALITIES.to_vec(),
        Some(REALWORLD_COL_NAMES.iter().map(|s| s.to_string()).collect()),
    )
}

/// Both arms of the real-world process as a grouped sample (names A and B).
pub fn gen_realworld_pair(n_rows: usize, seed: u64) -> Result<GroupedSample> {
    let a = gen_realworld(RealWorldSet::A, n_rows, child_seed(seed, streams::GEN, 0))?;
    let b = gen_realworld(RealWorldSet::B, n_rows, child_seed(seed, streams::GEN, 1))?;
    GroupedSample::new(vec![a, b], vec!["A".into(), "B".into()])
}

/// Generate the dataset described by a scenario spec.
pub fn gen_grouped(spec: &ScenarioSpec) -> Result<GroupedSample> {
    match spec.scenario {
        Scenario::Marginal => gen_scenario1(spec),
        Scenario::Interaction => gen_scenario2(spec),
        Scenario::Combined => gen_combined(spec),
        Scenario::RealWorld => {
            spec.validate()?;
            gen_realworld_pair(spec.n_rows, spec.seed)
        }
    }
}

/// Bucketing rule for continuous values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BucketRule {
    /// x ↦ ⌊2x⌋, shifted so codes start at 0.
    FloorTwoX,
    /// Cut at the empirical k-quantiles.
    Quantile(usize),
}

/// Map continuous values to category codes.
pub fn bucketize(values: &[f64], rule: BucketRule) -> Result<Vec<u32>> {
    if values.is_empty() {
        return Err(Error::invalid_argument("no values to bucketize"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid_argument("values must be finite"));
    }
    match rule {
        BucketRule::FloorTwoX => {
            let raw: Vec<i64> = values.iter().map(|&x| (2.0 * x).floor() as i64).collect();
            let min = *raw.iter().min().unwrap();
            Ok(raw.iter().map(|&r| (r - min) as u32).collect())
        }
        BucketRule::Quantile(k) => {
            if k == 0 {
                return Err(Error::invalid_argument("quantile bucket count must be >= 1"));
            }
            let mut sorted = values.to_vec();
            sorted.sort_unstable_by(f64::total_cmp);
            let n = sorted.len();
            let cuts: Vec<f64> = (1..k)
                .map(|i| sorted[(i * n / k).min(n - 1)])
                .collect();
            Ok(values
                .iter()
                .map(|&x| cuts.iter().filter(|&&c| c <= x).count() as u32)
                .collect())
        }
    }
}

/// A test procedure with its configuration, runnable on any grouped sample.
#[derive(Debug, Clone)]
pub enum TestMethod {
    Baseline {
        adjust: AdjustMethod,
        b_permutations: usize,
        level_alpha: f64,
    },
    Disco {
        index_alpha: f64,
        encoding: CategoricalEncoding,
        b_permutations: usize,
        level_alpha: f64,
    },
    Propensity {
        config: PropensityConfig,
        b_permutations: usize,
        level_alpha: f64,
    },
    RandChi {
        /// None = round(m/7) heuristic.
        cols_per_draw: Option<usize>,
        n_draws: usize,
        b_permutations: usize,
        level_alpha: f64,
        min_cell_guideline: f64,
        draw_size: DrawSizePolicy,
    },
}

impl TestMethod {
    pub fn name(&self) -> &'static str {
        match self {
            TestMethod::Baseline { .. } => "baseline",
            TestMethod::Disco { .. } => "disco",
            TestMethod::Propensity { .. } => "propensity",
            TestMethod::RandChi { .. } => "randchi",
        }
    }

    /// Run the method on a dataset; `seed` drives all of its randomness.
    pub fn run(&self, g: &GroupedSample, seed: u64) -> Result<MethodRun> {
        match self {
            TestMethod::Baseline {
                adjust,
                b_permutations,
                level_alpha,
            } => {
                let res = baseline_marginal_test(g, *adjust, *level_alpha, *b_permutations, seed)?;
                Ok(MethodRun {
                    reject: res.rejected(),
                    flag_counts: None,
                })
            }
            TestMethod::Disco {
                index_alpha,
                encoding,
                b_permutations,
                level_alpha,
            } => {
                let out = disco_test(g, *index_alpha, *b_permutations, *level_alpha, seed, *encoding)?;
                Ok(MethodRun {
                    reject: out.result.rejected(),
                    flag_counts: None,
                })
            }
            TestMethod::Propensity {
                config,
                b_permutations,
                level_alpha,
            } => {
                let out = propensity_test(g, config, *b_permutations, *level_alpha, seed)?;
                Ok(MethodRun {
                    reject: out.result.rejected(),
                    flag_counts: None,
                })
            }
            TestMethod::RandChi {
                cols_per_draw,
                n_draws,
                b_permutations,
                level_alpha,
                min_cell_guideline,
                draw_size,
            } => {
                let cfg = RandChiConfig {
                    cols_per_draw: cols_per_draw.unwrap_or_else(|| default_cols_per_draw(g.n_cols())),
                    n_draws: *n_draws,
                    b_permutations: *b_permutations,
                    level_alpha: *level_alpha,
                    seed,
                    min_cell_guideline: *min_cell_guideline,
                    draw_size: *draw_size,
                };
                let out = randomized_chi_square_test(g, &cfg)?;
                Ok(MethodRun {
                    reject: out.overall_reject,
                    flag_counts: Some(out.column_flag_counts),
                })
            }
        }
    }
}

/// Result of one method run inside a power study.
#[derive(Debug, Clone)]
pub struct MethodRun {
    pub reject: bool,
    /// Column flag counts (randomized chi-square only).
    pub flag_counts: Option<Vec<u64>>,
}

/// Rejection-rate estimate over Monte-Carlo replicates.
#[derive(Debug, Clone)]
pub struct PowerEstimate {
    pub method: String,
    pub scenario: Scenario,
    pub signal: Signal,
    pub n_hetero_cols: usize,
    pub n_rows: usize,
    pub n_cols: usize,
    pub n_groups: usize,
    pub reps: usize,
    pub rejections: usize,
    pub power: f64,
}

impl PowerEstimate {
    /// Binomial standard error of the power estimate.
    pub fn standard_error(&self) -> f64 {
        (self.power * (1.0 - self.power) / self.reps as f64).sqrt()
    }
}

/// Power study output: the estimate plus, for the randomized chi-square
/// method, the column flag counts accumulated over all replicates.
#[derive(Debug, Clone)]
pub struct PowerStudy {
    pub estimate: PowerEstimate,
    pub flag_counts: Option<Vec<u64>>,
}

/// Run `method` on `reps` independently seeded datasets drawn from `spec`
/// and estimate its rejection rate.
pub fn power_study(
    method: &TestMethod,
    spec: &ScenarioSpec,
    reps: usize,
    master_seed: u64,
) -> Result<PowerStudy> {
    if reps == 0 {
        return Err(Error::invalid_argument("need at least 1 replicate"));
    }
    spec.validate()?;
    let runs: Vec<MethodRun> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let data_spec = spec.with_seed(child_seed(master_seed, streams::GEN, r as u64));
            let g = gen_grouped(&data_spec)
                .map_err(|e| Error::Numerical(format!("replicate {r}: {e}")))?;
            method
                .run(&g, child_seed(master_seed, streams::STAT, r as u64))
                .map_err(|e| Error::Numerical(format!("replicate {r}: {e}")))
        })
        .collect::<Result<_>>()?;

    let rejections = runs.iter().filter(|r| r.reject).count();
    let flag_counts = if runs.iter().any(|r| r.flag_counts.is_some()) {
        let m = runs
            .iter()
            .find_map(|r| r.flag_counts.as_ref().map(|f| f.len()))
            .unwrap();
        let mut totals = vec![0u64; m];
        for run in &runs {
            if let Some(flags) = &run.flag_counts {
                for (t, f) in totals.iter_mut().zip(flags) {
                    *t += f;
                }
            }
        }
        Some(totals)
    } else {
        None
    };

    Ok(PowerStudy {
        estimate: PowerEstimate {
            method: method.name().to_string(),
            scenario: spec.scenario,
            signal: spec.signal,
            n_hetero_cols: spec.n_hetero_cols,
            n_rows: spec.n_rows,
            n_cols: spec.n_cols,
            n_groups: spec.n_groups,
            reps,
            rejections,
            power: rejections as f64 / reps as f64,
        },
        flag_counts,
    })
}
