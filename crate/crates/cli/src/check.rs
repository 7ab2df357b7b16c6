//! The `check` subcommand: load a CSV, run the selected tests with a shared
//! seed, and write the report.

use std::time::Instant;

use splitcheck::dataset::{load_csv, GroupColumn, GroupedSample, TokenMap};
use splitcheck::disco::{disco_test, CategoricalEncoding};
use splitcheck::multiplicity::{baseline_marginal_test, AdjustMethod};
use splitcheck::propensity::{propensity_test, PropensityConfig};
use splitcheck::randchi::{
    default_cols_per_draw, joint_table, randomized_chi_square_test, DrawSizePolicy,
    RandChiConfig,
};
use splitcheck::statfun::{child_seed, streams};

use crate::args::CheckArgs;
use crate::config::ConfigFile;
use crate::report::*;
use crate::{
    adjust_name, build_pool, draw_size_name, encoding_name, parse_adjust, parse_draw_size,
    parse_encoding, parse_methods, parse_randchi_c, resolve, resolve_string, CliError,
    MethodName,
};

pub(crate) struct CheckSettings {
    pub input: String,
    pub group_col: GroupColumn,
    pub has_header: bool,
    pub methods: Vec<MethodName>,
    pub alpha: f64,
    pub b: usize,
    pub seed: u64,
    pub disco_alpha: f64,
    pub disco_encoding: CategoricalEncoding,
    pub train_frac: f64,
    pub l2: f64,
    pub max_iter: usize,
    pub randchi_c: Option<usize>,
    pub randchi_d: usize,
    pub randchi_size: DrawSizePolicy,
    pub adjust: AdjustMethod,
    pub threads: usize,
    pub report_path: Option<String>,
    pub format: String,
    pub timing: bool,
}

const CHECK_KEYS: [&str; 18] = [
    "input",
    "group-col",
    "no-header",
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
    "threads",
    "format",
];

fn resolve_settings(args: &CheckArgs) -> Result<CheckSettings, CliError> {
    let cfg = match &args.config {
        Some(path) => ConfigFile::load(path, &CHECK_KEYS)?,
        None => ConfigFile::empty(),
    };
    let input = args
        .input
        .clone()
        .or_else(|| cfg.get_string("input"))
        .ok_or_else(|| CliError("--input is required".into()))?;
    let group_col = GroupColumn::parse(&resolve_string(
        args.group_col.clone(),
        &cfg,
        "group-col",
        "group",
    ));
    let has_header = !(args.no_header || cfg.get_flag("no-header")?);
    let methods = parse_methods(&resolve_string(args.methods.clone(), &cfg, "methods", "all"))?;
    let alpha = resolve(args.alpha, &cfg, "alpha", 0.05)?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(CliError(format!("--alpha must lie in (0,1), got {alpha}")));
    }
    let disco_encoding = parse_encoding(&resolve_string(
        args.disco_encoding.clone(),
        &cfg,
        "disco-encoding",
        "one-hot",
    ))?;
    let adjust = parse_adjust(&resolve_string(args.adjust.clone(), &cfg, "adjust", "minp"))?;
    let randchi_c = match &args.randchi_c {
        Some(s) => parse_randchi_c(s)?,
        None => match cfg.get_string("randchi-c") {
            Some(s) => parse_randchi_c(&s)?,
            None => None,
        },
    };
    Ok(CheckSettings {
        input,
        group_col,
        has_header,
        methods,
        alpha,
        b: resolve(args.b, &cfg, "b", 200)?,
        seed: resolve(args.seed, &cfg, "seed", 0)?,
        disco_alpha: resolve(args.disco_alpha, &cfg, "disco-alpha", 1.0)?,
        disco_encoding,
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
        adjust,
        threads: resolve(args.threads, &cfg, "threads", 1)?,
        report_path: args.report.clone(),
        format: resolve_string(args.format.clone(), &cfg, "format", "text"),
        timing: args.timing,
    })
}

fn column_names(g: &GroupedSample) -> Vec<String> {
    match g.col_names() {
        Some(names) => names.to_vec(),
        None => (0..g.n_cols()).map(|j| format!("c{j}")).collect(),
    }
}

fn run_baseline(
    g: &GroupedSample,
    s: &CheckSettings,
    names: &[String],
) -> Result<(MethodBlock, bool), CliError> {
    let res = baseline_marginal_test(
        g,
        s.adjust,
        s.alpha,
        s.b,
        child_seed(s.seed, streams::STAT, 1),
    )?;
    let reject = res.rejected();
    let block = MethodBlock::Baseline {
        adjust: adjust_name(s.adjust).to_string(),
        p_values: res.original.iter().map(|p| p.value()).collect(),
        threshold: res.threshold.and_then(finite_or_none),
        rejected_columns: res.rejections.iter().map(|&j| names[j].clone()).collect(),
        reject,
        warnings: vec![],
    };
    Ok((block, reject))
}

fn run_disco(g: &GroupedSample, s: &CheckSettings) -> Result<(MethodBlock, bool), CliError> {
    let out = disco_test(
        g,
        s.disco_alpha,
        s.b,
        s.alpha,
        child_seed(s.seed, streams::STAT, 2),
        s.disco_encoding,
    )?;
    let reject = out.result.rejected();
    let block = MethodBlock::Disco {
        index_alpha: s.disco_alpha,
        encoding: encoding_name(s.disco_encoding).to_string(),
        statistic: finite_or_none(out.components.statistic),
        between: out.components.between,
        within: out.components.within,
        total: out.components.total,
        p_value: out.result.original[0].value(),
        threshold: out.result.threshold.and_then(finite_or_none),
        reject,
        warnings: vec![],
    };
    Ok((block, reject))
}

fn run_propensity(g: &GroupedSample, s: &CheckSettings) -> Result<(MethodBlock, bool), CliError> {
    let cfg = PropensityConfig {
        train_frac: s.train_frac,
        l2_lambda: s.l2,
        max_iter: s.max_iter,
        tol: 1e-8,
    };
    let out = propensity_test(g, &cfg, s.b, s.alpha, child_seed(s.seed, streams::STAT, 3))?;
    let reject = out.result.rejected();
    let mut warnings = vec![];
    if !out.converged {
        warnings.push(Warning {
            code: "FIT_NOT_CONVERGED",
            message: format!(
                "classifier fit on the observed data hit the {}-iteration cap",
                s.max_iter
            ),
        });
    }
    let block = MethodBlock::Propensity {
        statistic: out.statistic,
        dof: out.dof,
        p_value: out.result.original[0].value(),
        threshold: out.result.threshold.and_then(finite_or_none),
        reject,
        warnings,
    };
    Ok((block, reject))
}

fn run_randchi(
    g: &GroupedSample,
    s: &CheckSettings,
    names: &[String],
    tokens: &TokenMap,
) -> Result<(MethodBlock, bool), CliError> {
    let c = s.randchi_c.unwrap_or_else(|| default_cols_per_draw(g.n_cols()));
    let cfg = RandChiConfig::new(
        c,
        s.randchi_d,
        s.b,
        s.alpha,
        child_seed(s.seed, streams::STAT, 4),
    )
    .with_draw_size(s.randchi_size);
    let out = randomized_chi_square_test(g, &cfg)?;
    let reject = out.overall_reject;

    let mut warnings = vec![];
    if !out.low_expected_cell_draws.is_empty() {
        warnings.push(Warning {
            code: "LOW_EXPECTED_CELLS",
            message: format!(
                "draws {:?} have expected cell counts below {}",
                out.low_expected_cell_draws, cfg.min_cell_guideline
            ),
        });
    }
    if !out.degenerate_draws.is_empty() {
        warnings.push(Warning {
            code: "DEGENERATE_DRAW",
            message: format!(
                "draws {:?} carried no information (single active row or column) and contributed p = 1",
                out.degenerate_draws
            ),
        });
    }

    // the draw to detail: smallest p among rejected draws, else overall
    let detail_draw = out
        .rejected_draws
        .iter()
        .copied()
        .min_by(|&a, &b| out.draw_pvalues[a].value().total_cmp(&out.draw_pvalues[b].value()))
        .or_else(|| {
            (0..out.draw_columns.len())
                .min_by(|&a, &b| out.draw_pvalues[a].value().total_cmp(&out.draw_pvalues[b].value()))
        });
    let most_imbalanced_draw = match detail_draw {
        Some(i) => Some(imbalance_block(g, &out.draw_columns[i], names, tokens)?),
        None => None,
    };

    let block = MethodBlock::Randchi {
        cols_per_draw: c,
        n_draws: s.randchi_d,
        draws: out
            .draw_columns
            .iter()
            .zip(&out.draw_pvalues)
            .map(|(cols, p)| DrawBlock {
                columns: cols.iter().map(|&j| names[j].clone()).collect(),
                p_value: p.value(),
            })
            .collect(),
        threshold: finite_or_none(out.threshold),
        rejected_draws: out.rejected_draws.clone(),
        column_flags: names
            .iter()
            .zip(&out.column_flag_counts)
            .map(|(n, &c)| ColumnFlag {
                column: n.clone(),
                count: c,
            })
            .collect(),
        most_imbalanced_draw,
        reject,
        warnings,
    };
    Ok((block, reject))
}

/// Per-combination counts per group for one column draw, top combinations
/// by total count first (15 at most), with the group-1/group-2 count ratio
/// for two-group data.
fn imbalance_block(
    g: &GroupedSample,
    columns: &[usize],
    names: &[String],
    tokens: &TokenMap,
) -> Result<ImbalanceBlock, CliError> {
    let table = joint_table(g, columns)?;
    let k = table.n_rows();
    let mut combos: Vec<(Vec<String>, Vec<u64>, u64)> = Vec::with_capacity(table.n_cols());
    for ci in 0..table.n_cols() {
        let codes: Vec<u32> = table.col_labels[ci]
            .split(',')
            .map(|t| t.parse::<u32>().unwrap_or(0))
            .collect();
        let values: Vec<String> = columns
            .iter()
            .zip(&codes)
            .map(|(&col, &code)| {
                tokens
                    .columns
                    .get(col)
                    .and_then(|c| c.tokens.get(code as usize))
                    .cloned()
                    .unwrap_or_else(|| code.to_string())
            })
            .collect();
        let counts: Vec<u64> = (0..k).map(|gi| table.count(gi, ci)).collect();
        let total = counts.iter().sum();
        combos.push((values, counts, total));
    }
    combos.sort_by(|a, b| b.2.cmp(&a.2).then_with(|| a.0.cmp(&b.0)));
    combos.truncate(15);
    Ok(ImbalanceBlock {
        columns: columns.iter().map(|&j| names[j].clone()).collect(),
        combinations: combos
            .into_iter()
            .map(|(values, counts, _)| {
                let ratio = (k == 2 && counts[1] > 0)
                    .then(|| counts[0] as f64 / counts[1] as f64);
                ComboBlock {
                    values,
                    counts,
                    ratio,
                }
            })
            .collect(),
    })
}

fn text_summary(report: &Report) -> String {
    let mut out = String::new();
    let input = &report.input;
    out.push_str(&format!(
        "splitcheck check: {} — {} rows, {} columns, {} groups ({})\n",
        input.path,
        input.n_rows,
        input.n_cols,
        input.n_groups,
        input
            .group_names
            .iter()
            .zip(&input.group_sizes)
            .map(|(n, s)| format!("{n}: {s}"))
            .collect::<Vec<_>>()
            .join(", ")
    ));
    for block in &report.methods {
        let line = match block {
            MethodBlock::Baseline {
                adjust,
                rejected_columns,
                reject,
                ..
            } => format!(
                "  baseline    {}  (adjust {adjust}; {} column(s) flagged{})",
                verdict(*reject),
                rejected_columns.len(),
                if rejected_columns.is_empty() {
                    String::new()
                } else {
                    format!(": {}", rejected_columns.join(", "))
                }
            ),
            MethodBlock::Disco {
                statistic,
                p_value,
                reject,
                ..
            } => format!(
                "  disco       {}  (statistic {}, p {p_value:.4})",
                verdict(*reject),
                statistic.map_or("inf".into(), |s| format!("{s:.4}"))
            ),
            MethodBlock::Propensity {
                statistic,
                p_value,
                reject,
                ..
            } => format!(
                "  propensity  {}  (chi-square {}, p {p_value:.4})",
                verdict(*reject),
                statistic.map_or("n/a".into(), |s| format!("{s:.4}"))
            ),
            MethodBlock::Randchi {
                rejected_draws,
                n_draws,
                column_flags,
                reject,
                ..
            } => {
                let top = column_flags
                    .iter()
                    .max_by(|a, b| a.count.cmp(&b.count).then_with(|| b.column.cmp(&a.column)))
                    .filter(|f| f.count > 0);
                format!(
                    "  randchi     {}  ({} of {n_draws} draws rejected{})",
                    verdict(*reject),
                    rejected_draws.len(),
                    top.map_or(String::new(), |f| format!(
                        "; most-flagged column: {}",
                        f.column
                    ))
                )
            }
        };
        out.push_str(&line);
        out.push('\n');
    }
    out.push_str(&format!("decision: {}\n", report.decision));
    out
}

fn verdict(reject: bool) -> &'static str {
    if reject {
        "REJECT"
    } else {
        "ok    "
    }
}

pub(crate) fn cmd_check(args: &CheckArgs) -> Result<i32, CliError> {
    let settings = resolve_settings(args)?;
    let pool = build_pool(settings.threads)?;
    let loaded = load_csv(&settings.input, &settings.group_col, settings.has_header)?;
    let g = &loaded.sample;
    let names = column_names(g);

    let mut blocks = Vec::new();
    let mut timing = Vec::new();
    let mut any_reject = false;
    for method in &settings.methods {
        let started = Instant::now();
        let (block, reject) = pool.install(|| match method {
            MethodName::Baseline => run_baseline(g, &settings, &names),
            MethodName::Disco => run_disco(g, &settings),
            MethodName::Propensity => run_propensity(g, &settings),
            MethodName::RandChi => run_randchi(g, &settings, &names, &loaded.tokens),
        })?;
        timing.push(MethodTiming {
            method: method.as_str().to_string(),
            wall_ms: started.elapsed().as_millis() as u64,
        });
        any_reject |= reject;
        blocks.push(block);
    }

    let report = Report {
        schema_version: SCHEMA_VERSION,
        command: "check".into(),
        input: InputBlock {
            path: settings.input.clone(),
            n_rows: g.n_total(),
            n_cols: g.n_cols(),
            n_groups: g.k(),
            group_names: g.group_names().to_vec(),
            group_sizes: g.group_sizes(),
            column_names: names.clone(),
        },
        settings: SettingsEcho {
            methods: settings.methods.iter().map(|m| m.as_str().to_string()).collect(),
            alpha: settings.alpha,
            b: settings.b,
            seed: settings.seed,
            disco_alpha: settings.disco_alpha,
            disco_encoding: encoding_name(settings.disco_encoding).to_string(),
            train_frac: settings.train_frac,
            l2: settings.l2,
            max_iter: settings.max_iter,
            randchi_c: settings
                .randchi_c
                .unwrap_or_else(|| default_cols_per_draw(g.n_cols())),
            randchi_d: settings.randchi_d,
            randchi_size: draw_size_name(settings.randchi_size).to_string(),
            adjust: adjust_name(settings.adjust).to_string(),
        },
        methods: blocks,
        decision: if any_reject { "reject" } else { "no_reject" }.into(),
        token_map: TokenMapBlock::from_tokens(&loaded.tokens),
        timing_ms: settings.timing.then_some(timing),
    };

    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| CliError(format!("report serialization failed: {e}")))?;
    match &settings.report_path {
        Some(path) => {
            std::fs::write(path, json.as_bytes())?;
            print!("{}", text_summary(&report));
        }
        None => {
            if settings.format == "json" {
                println!("{json}");
            } else {
                print!("{}", text_summary(&report));
            }
        }
    }
    Ok(if any_reject { 1 } else { 0 })
}
