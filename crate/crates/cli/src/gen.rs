//! The `gen` subcommand: write a synthetic dataset as CSV with a leading
//! group column, deterministic under the seed.

use splitcheck::simgen::{gen_grouped, Scenario, ScenarioSpec, Signal};

use crate::args::GenArgs;
use crate::config::ConfigFile;
use crate::{resolve, resolve_string, CliError};

const GEN_KEYS: [&str; 7] = [
    "scenario",
    "signal",
    "hetero-cols",
    "rows",
    "cols",
    "groups",
    "seed",
];

pub(crate) fn cmd_gen(args: &GenArgs) -> Result<i32, CliError> {
    let cfg = match &args.config {
        Some(path) => ConfigFile::load(path, &GEN_KEYS)?,
        None => ConfigFile::empty(),
    };
    let scenario: Scenario = args
        .scenario
        .clone()
        .or_else(|| cfg.get_string("scenario"))
        .ok_or_else(|| CliError("--scenario is required".into()))?
        .parse()?;
    let signal: Signal = resolve_string(args.signal.clone(), &cfg, "signal", "medium").parse()?;
    let rows = resolve(args.rows, &cfg, "rows", 100)?;
    if rows == 0 {
        return Err(CliError("--rows must be >= 1".into()));
    }
    let cols = resolve(args.cols, &cfg, "cols", 10)?;
    let hetero = match args.hetero_cols {
        Some(h) => h,
        None => match cfg.get_parsed("hetero-cols")? {
            Some(h) => h,
            None => match scenario {
                Scenario::Marginal => (cols / 5).max(1),
                Scenario::Interaction | Scenario::Combined => (cols / 5).max(2),
                Scenario::RealWorld => 0,
            },
        },
    };

    let mut spec = ScenarioSpec::new(scenario, signal, hetero, resolve(args.seed, &cfg, "seed", 0)?);
    spec.n_rows = rows;
    spec.n_cols = cols;
    spec.n_groups = resolve(args.groups, &cfg, "groups", 4)?;
    let g = gen_grouped(&spec)?;

    let names: Vec<String> = match g.col_names() {
        Some(n) => n.to_vec(),
        None => (0..g.n_cols()).map(|j| format!("c{j}")).collect(),
    };
    let mut out: Vec<u8> = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut out);
        let mut header = vec!["group".to_string()];
        header.extend(names);
        w.write_record(&header)
            .map_err(|e| CliError(e.to_string()))?;
        for (gi, table) in g.groups().iter().enumerate() {
            let gname = &g.group_names()[gi];
            for r in 0..table.n_rows() {
                let mut record = vec![gname.clone()];
                record.extend(table.row(r).iter().map(|c| c.to_string()));
                w.write_record(&record).map_err(|e| CliError(e.to_string()))?;
            }
        }
        w.flush()?;
    }
    match &args.out {
        Some(path) => std::fs::write(path, &out)?,
        None => print!("{}", String::from_utf8_lossy(&out)),
    }
    Ok(0)
}
