//! CLI front end: `check` runs the equivalence tests on a CSV dataset,
//! `simulate` estimates power on synthetic scenarios, and `gen` emits
//! synthetic datasets. Exit codes: 0 = no rejection, 1 = imbalance
//! detected, 2 = usage or data error.

use std::fmt;
use std::str::FromStr;

use clap::Parser;

mod args;
mod check;
mod config;
mod gen;
mod report;
mod simulate;

pub use args::{CheckArgs, Cli, Command, GenArgs, SimulateArgs};
use config::ConfigFile;

#[derive(Debug)]
pub struct CliError(pub String);

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<splitcheck::Error> for CliError {
    fn from(e: splitcheck::Error) -> Self {
        CliError(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError(e.to_string())
    }
}

/// Parse and execute; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match cli.command {
        Command::Check(a) => check::cmd_check(&a),
        Command::Simulate(a) => simulate::cmd_simulate(&a),
        Command::Gen(a) => gen::cmd_gen(&a),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum MethodName {
    Baseline,
    Disco,
    Propensity,
    RandChi,
}

impl MethodName {
    pub(crate) fn as_str(&self) -> &'static str {
        match self {
            MethodName::Baseline => "baseline",
            MethodName::Disco => "disco",
            MethodName::Propensity => "propensity",
            MethodName::RandChi => "randchi",
        }
    }
}

pub(crate) const ALL_METHODS: [MethodName; 4] = [
    MethodName::Baseline,
    MethodName::Disco,
    MethodName::Propensity,
    MethodName::RandChi,
];

pub(crate) fn parse_methods(s: &str) -> Result<Vec<MethodName>, CliError> {
    if s == "all" {
        return Ok(ALL_METHODS.to_vec());
    }
    let mut out = Vec::new();
    for part in s.split(',') {
        let m = match part.trim() {
            "baseline" => MethodName::Baseline,
            "disco" => MethodName::Disco,
            "propensity" => MethodName::Propensity,
            "randchi" => MethodName::RandChi,
            other => {
                return Err(CliError(format!(
                    "unknown method '{other}' (expected baseline|disco|propensity|randchi|all)"
                )))
            }
        };
        if !out.contains(&m) {
            out.push(m);
        }
    }
    if out.is_empty() {
        return Err(CliError("no methods selected".into()));
    }
    Ok(out)
}

pub(crate) fn parse_encoding(
    s: &str,
) -> Result<splitcheck::disco::CategoricalEncoding, CliError> {
    match s {
        "one-hot" | "onehot" | "one_hot" => Ok(splitcheck::disco::CategoricalEncoding::OneHot),
        "codes" => Ok(splitcheck::disco::CategoricalEncoding::Codes),
        other => Err(CliError(format!(
            "unknown encoding '{other}' (expected one-hot|codes)"
        ))),
    }
}

pub(crate) fn encoding_name(e: splitcheck::disco::CategoricalEncoding) -> &'static str {
    match e {
        splitcheck::disco::CategoricalEncoding::OneHot => "one-hot",
        splitcheck::disco::CategoricalEncoding::Codes => "codes",
    }
}

pub(crate) fn parse_adjust(s: &str) -> Result<splitcheck::multiplicity::AdjustMethod, CliError> {
    use splitcheck::multiplicity::AdjustMethod;
    match s {
        "none" => Ok(AdjustMethod::Unadjusted),
        "holm" => Ok(AdjustMethod::Holm),
        "by" => Ok(AdjustMethod::By),
        "minp" => Ok(AdjustMethod::MinP),
        other => Err(CliError(format!(
            "unknown adjustment '{other}' (expected none|holm|by|minp)"
        ))),
    }
}

pub(crate) fn adjust_name(a: splitcheck::multiplicity::AdjustMethod) -> &'static str {
    use splitcheck::multiplicity::AdjustMethod;
    match a {
        AdjustMethod::Unadjusted => "none",
        AdjustMethod::Holm => "holm",
        AdjustMethod::By => "by",
        AdjustMethod::MinP => "minp",
    }
}

/// "auto" or a positive integer.
pub(crate) fn parse_randchi_c(s: &str) -> Result<Option<usize>, CliError> {
    if s == "auto" {
        return Ok(None);
    }
    s.parse::<usize>()
        .map(Some)
        .map_err(|_| CliError(format!("--randchi-c expects 'auto' or an integer, got '{s}'")))
}

pub(crate) fn parse_draw_size(s: &str) -> Result<splitcheck::randchi::DrawSizePolicy, CliError> {
    use splitcheck::randchi::DrawSizePolicy;
    match s {
        "uniform" => Ok(DrawSizePolicy::UniformMax),
        "fixed" => Ok(DrawSizePolicy::Fixed),
        other => Err(CliError(format!(
            "unknown draw-size policy '{other}' (expected uniform|fixed)"
        ))),
    }
}

pub(crate) fn draw_size_name(p: splitcheck::randchi::DrawSizePolicy) -> &'static str {
    match p {
        splitcheck::randchi::DrawSizePolicy::UniformMax => "uniform",
        splitcheck::randchi::DrawSizePolicy::Fixed => "fixed",
    }
}

/// "a..b" or "a..b:step", inclusive.
pub(crate) fn parse_sweep(s: &str) -> Result<Vec<usize>, CliError> {
    let (range, step) = match s.split_once(':') {
        Some((r, st)) => (
            r,
            st.parse::<usize>()
                .map_err(|_| CliError(format!("bad sweep step in '{s}'")))?,
        ),
        None => (s, 1),
    };
    let (a, b) = range
        .split_once("..")
        .ok_or_else(|| CliError(format!("bad sweep range '{s}' (expected a..b or a..b:step)")))?;
    let a: usize = a
        .parse()
        .map_err(|_| CliError(format!("bad sweep range '{s}'")))?;
    let b: usize = b
        .parse()
        .map_err(|_| CliError(format!("bad sweep range '{s}'")))?;
    if step == 0 || a > b {
        return Err(CliError(format!("bad sweep range '{s}'")));
    }
    Ok((a..=b).step_by(step).collect())
}

/// Flag value, else config value, else default.
pub(crate) fn resolve<T: FromStr>(
    flag: Option<T>,
    cfg: &ConfigFile,
    key: &str,
    default: T,
) -> Result<T, CliError>
where
    T::Err: fmt::Display,
{
    match flag {
        Some(v) => Ok(v),
        None => Ok(cfg.get_parsed(key)?.unwrap_or(default)),
    }
}

pub(crate) fn resolve_string(
    flag: Option<String>,
    cfg: &ConfigFile,
    key: &str,
    default: &str,
) -> String {
    flag.or_else(|| cfg.get_string(key))
        .unwrap_or_else(|| default.to_string())
}

pub(crate) fn build_pool(threads: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| CliError(format!("cannot build thread pool: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_list_parsing() {
        assert_eq!(parse_methods("all").unwrap().len(), 4);
        assert_eq!(
            parse_methods("disco,randchi").unwrap(),
            vec![MethodName::Disco, MethodName::RandChi]
        );
        assert!(parse_methods("nope").is_err());
        assert!(parse_methods("").is_err());
    }

    #[test]
    fn sweep_parsing() {
        assert_eq!(parse_sweep("1..4").unwrap(), vec![1, 2, 3, 4]);
        assert_eq!(parse_sweep("10..50:20").unwrap(), vec![10, 30, 50]);
        assert!(parse_sweep("5..1").is_err());
        assert!(parse_sweep("x..y").is_err());
    }

    #[test]
    fn randchi_c_parsing() {
        assert_eq!(parse_randchi_c("auto").unwrap(), None);
        assert_eq!(parse_randchi_c("3").unwrap(), Some(3));
        assert!(parse_randchi_c("many").is_err());
    }
}
