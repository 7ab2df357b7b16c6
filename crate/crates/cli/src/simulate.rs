//! The `simulate` subcommand: Monte-Carlo power estimates over synthetic
//! scenarios, written as plot-ready CSV rows.

use rayon::prelude::*;

use splitcheck::disco::CategoricalEncoding;
use splitcheck::multiplicity::{holm_adjust, AdjustMethod};
use splitcheck::propensity::PropensityConfig;
use splitcheck::randchi::{
    default_cols_per_draw, randomized_chi_square_test, DrawSizePolicy, RandChiConfig,
};
use splitcheck::simgen::{
    gen_grouped, power_study, Scenario, ScenarioSpec, Signal, TestMethod,
};
use splitcheck::statfun::{child_seed, streams};

use crate::args::SimulateArgs;
use crate::config::ConfigFile;
use crate::{
    build_pool, parse_adjust, parse_draw_size, parse_encoding, parse_methods,
    parse_randchi_c, parse_sweep, resolve, resolve_string, CliError, MethodName,
};

struct SimSettings {
    scenario: Scenario,
    signal: Signal,
    hetero_cols: Option<usize>,
    rows: usize,
    cols: usize,
    groups: usize,
    reps: usize,
    methods: Vec<MethodName>,
    alpha: f64,
    b: usize,
    seed: u64,
    disco_alpha: f64,
    disco_encoding: CategoricalEncoding,
    train_frac: f64,
    l2: f64,
    max_iter: usize,
    randchi_c: Option<usize>,
    randchi_d: usize,
    randchi_size: DrawSizePolicy,
    adjust: AdjustMethod,
    sweep_hetero: Option<Vec<usize>>,
    sweep_dim: Option<Vec<usize>>,
    compare_holm: bool,
    flag_table: Option<String>,
    out: Option<String>,
    threads: usize,
}

const SIM_KEYS: [&str; 20] = [
    "scenario",
    "signal",
    "hetero-cols",
    "rows",
    "cols",
    "groups",
    "reps",
    "methods",
    "alpha",
    "b",
    "seed",
    "disco-alpha",
    "disco-encoding",
    "train-frac",
    "l2",
    "max-iter",
    "randchi-c",
    "randchi-d",
    "randchi-size",
    "adjust",
];

fn resolve_settings(args: &SimulateArgs) -> Result<SimSettings, CliError> {
    let cfg = match &args.config {
        Some(path) => ConfigFile::load(path, &SIM_KEYS)?,
        None => ConfigFile::empty(),
    };
    let scenario: Scenario = args
        .scenario
        .clone()
        .or_else(|| cfg.get_string("scenario"))
        .ok_or_else(|| CliError("--scenario is required".into()))?
        .parse()?;
    let signal: Signal = resolve_string(args.signal.clone(), &cfg, "signal", "medium").parse()?;
    let hetero_cols = match args.hetero_cols {
        Some(h) => Some(h),
        None => cfg.get_parsed("hetero-cols")?,
    };
    let randchi_c = match &args.randchi_c {
        Some(s) => parse_randchi_c(s)?,
        None => match cfg.get_string("randchi-c") {
            Some(s) => parse_randchi_c(&s)?,
            None => None,
        },
    };
    Ok(SimSettings {
        scenario,
        signal,
        hetero_cols,
        rows: resolve(args.rows, &cfg, "rows", 100)?,
        cols: resolve(args.cols, &cfg, "cols", 10)?,
        groups: resolve(args.groups, &cfg, "groups", 4)?,
        reps: resolve(args.reps, &cfg, "reps", 100)?,
        methods: parse_methods(&resolve_string(args.methods.clone(), &cfg, "methods", "all"))?,
        alpha: resolve(args.alpha, &cfg, "alpha", 0.05)?,
        b: resolve(args.b, &cfg, "b", 99)?,
        seed: resolve(args.seed, &cfg, "seed", 0)?,
        disco_alpha: resolve(args.disco_alpha, &cfg, "disco-alpha", 1.0)?,
        disco_encoding: parse_encoding(&resolve_string(
            args.disco_encoding.clone(),
            &cfg,
            "disco-encoding",
            "one-hot",
        ))?,
        train_frac: resolve(args.train_frac, &cfg, "train-frac", 0.8)?,
        l2: resolve(args.l2, &cfg, "l2", 1e-4)?,
        max_iter: resolve(args.max_iter, &cfg, "max-iter", 500)?,
        randchi_c,
        randchi_d: resolve(args.randchi_d, &cfg, "randchi-d", 10)?,
        randchi_size: parse_draw_size(&resolve_string(
            args.randchi_size.clone(),
            &cfg,
            "randchi-size",
            "uniform",
        ))?,
        adjust: parse_adjust(&resolve_string(args.adjust.clone(), &cfg, "adjust", "minp"))?,
        sweep_hetero: args.sweep_hetero.as_deref().map(parse_sweep).transpose()?,
        sweep_dim: args.sweep_dim.as_deref().map(parse_sweep).transpose()?,
        compare_holm: args.compare_holm,
        flag_table: args.flag_table.clone(),
        out: args.out.clone(),
        threads: resolve(args.threads, &cfg, "threads", 1)?,
    })
}

fn default_hetero(scenario: Scenario, cols: usize) -> usize {
    match scenario {
        Scenario::Marginal => (cols / 5).max(1),
        Scenario::Interaction | Scenario::Combined => (cols / 5).max(2),
        Scenario::RealWorld => 0,
    }
}

fn build_method(name: MethodName, s: &SimSettings) -> TestMethod {
    match name {
        MethodName::Baseline => TestMethod::Baseline {
            adjust: s.adjust,
            b_permutations: s.b,
            level_alpha: s.alpha,
        },
        MethodName::Disco => TestMethod::Disco {
            index_alpha: s.disco_alpha,
            encoding: s.disco_encoding,
            b_permutations: s.b,
            level_alpha: s.alpha,
        },
        MethodName::Propensity => TestMethod::Propensity {
            config: PropensityConfig {
                train_frac: s.train_frac,
                l2_lambda: s.l2,
                max_iter: s.max_iter,
                tol: 1e-8,
            },
            b_permutations: s.b,
            level_alpha: s.alpha,
        },
        MethodName::RandChi => TestMethod::RandChi {
            cols_per_draw: s.randchi_c,
            n_draws: s.randchi_d,
            b_permutations: s.b,
            level_alpha: s.alpha,
            min_cell_guideline: 5.0,
            draw_size: s.randchi_size,
        },
    }
}

struct PowerRow {
    method: String,
    scenario: Scenario,
    signal: Signal,
    n_hetero: usize,
    m: usize,
    reps: usize,
    power: f64,
    se: f64,
}

/// Paired minp-vs-Holm power for the randomized chi-square draws: both
/// decision rules are evaluated on the same draw p-values per replicate.
fn randchi_holm_pair(
    spec: &ScenarioSpec,
    s: &SimSettings,
    master_seed: u64,
) -> Result<(PowerRow, PowerRow), CliError> {
    let results: Vec<(bool, bool)> = (0..s.reps)
        .into_par_iter()
        .map(|r| {
            let data_spec = spec.with_seed(child_seed(master_seed, streams::GEN, r as u64));
            let g = gen_grouped(&data_spec)?;
            let cfg = RandChiConfig {
                cols_per_draw: s.randchi_c.unwrap_or_else(|| default_cols_per_draw(g.n_cols())),
                n_draws: s.randchi_d,
                b_permutations: s.b,
                level_alpha: s.alpha,
                seed: child_seed(master_seed, streams::STAT, r as u64),
                min_cell_guideline: 5.0,
                draw_size: s.randchi_size,
            };
            let out = randomized_chi_square_test(&g, &cfg)?;
            let raw: Vec<f64> = out.draw_pvalues.iter().map(|p| p.value()).collect();
            let holm_reject = !holm_adjust(&raw, s.alpha)?.is_empty();
            Ok((out.overall_reject, holm_reject))
        })
        .collect::<splitcheck::Result<_>>()?;
    let make_row = |method: &str, rejections: usize| {
        let power = rejections as f64 / s.reps as f64;
        PowerRow {
            method: method.to_string(),
            scenario: spec.scenario,
            signal: spec.signal,
            n_hetero: spec.n_hetero_cols,
            m: spec.n_cols,
            reps: s.reps,
            power,
            se: (power * (1.0 - power) / s.reps as f64).sqrt(),
        }
    };
    let minp = results.iter().filter(|(m, _)| *m).count();
    let holm = results.iter().filter(|(_, h)| *h).count();
    Ok((make_row("randchi", minp), make_row("randchi_holm", holm)))
}

pub(crate) fn cmd_simulate(args: &SimulateArgs) -> Result<i32, CliError> {
    let s = resolve_settings(args)?;
    if s.reps == 0 {
        return Err(CliError("--reps must be >= 1".into()));
    }
    let pool = build_pool(s.threads)?;

    // the (hetero, cols) design points to run
    let points: Vec<(usize, usize)> = if let Some(dims) = &s.sweep_dim {
        dims.iter()
            .map(|&m| (default_hetero(s.scenario, m), m))
            .collect()
    } else if let Some(heteros) = &s.sweep_hetero {
        heteros.iter().map(|&h| (h, s.cols)).collect()
    } else {
        let h = s
            .hetero_cols
            .unwrap_or_else(|| default_hetero(s.scenario, s.cols));
        vec![(h, s.cols)]
    };

    let mut rows: Vec<PowerRow> = Vec::new();
    let mut flag_totals: Option<(Vec<String>, Vec<u64>)> = None;
    for (point_idx, &(hetero, cols)) in points.iter().enumerate() {
        let mut spec = ScenarioSpec::new(s.scenario, s.signal, hetero, 0);
        spec.n_rows = s.rows;
        spec.n_cols = cols;
        spec.n_groups = s.groups;
        let point_seed = child_seed(s.seed, streams::GEN, point_idx as u64);

        for method_name in &s.methods {
            let method = build_method(*method_name, &s);
            let study = pool.install(|| power_study(&method, &spec, s.reps, point_seed))?;
            let est = &study.estimate;
            rows.push(PowerRow {
                method: est.method.clone(),
                scenario: est.scenario,
                signal: est.signal,
                n_hetero: est.n_hetero_cols,
                m: est.n_cols,
                reps: est.reps,
                power: est.power,
                se: est.standard_error(),
            });
            if let Some(flags) = study.flag_counts {
                let names = column_names_for(&spec)?;
                match &mut flag_totals {
                    Some((_, totals)) => {
                        for (t, f) in totals.iter_mut().zip(&flags) {
                            *t += f;
                        }
                    }
                    None => flag_totals = Some((names, flags)),
                }
            }
        }
        if s.compare_holm {
            let (minp_row, holm_row) =
                pool.install(|| randchi_holm_pair(&spec, &s, point_seed))?;
            if !s.methods.contains(&MethodName::RandChi) {
                rows.push(minp_row);
            }
            rows.push(holm_row);
        }
    }

    let mut csv = String::from("method,scenario,signal,n_hetero,m,reps,power,se\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{:.6}\n",
            r.method, r.scenario, r.signal, r.n_hetero, r.m, r.reps, r.power, r.se
        ));
    }
    match &s.out {
        Some(path) => std::fs::write(path, csv.as_bytes())?,
        None => print!("{csv}"),
    }

    if let Some(path) = &s.flag_table {
        match &flag_totals {
            Some((names, totals)) => {
                let mut table = String::from("column,count\n");
                for (n, c) in names.iter().zip(totals) {
                    table.push_str(&format!("{n},{c}\n"));
                }
                std::fs::write(path, table.as_bytes())?;
            }
            None => {
                return Err(CliError(
                    "--flag-table requires the randchi method to be selected".into(),
                ))
            }
        }
    }
    Ok(0)
}

fn column_names_for(spec: &ScenarioSpec) -> Result<Vec<String>, CliError> {
    let probe = gen_grouped(&spec.with_seed(0))?;
    Ok(match probe.col_names() {
        Some(names) => names.to_vec(),
        None => (0..probe.n_cols()).map(|j| format!("c{j}")).collect(),
    })
}
