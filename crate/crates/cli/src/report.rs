//! The versioned JSON report. Field order is fixed by the struct layout and
//! no hash maps are used, so a report is byte-identical across runs and
//! thread counts; timing is only included on request.

use serde::Serialize;
use splitcheck::dataset::TokenMap;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Debug)]
pub struct Report {
    pub schema_version: u32,
    pub command: String,
    pub input: InputBlock,
    pub settings: SettingsEcho,
    pub methods: Vec<MethodBlock>,
    /// "reject" when any selected method rejected.
    pub decision: String,
    pub token_map: TokenMapBlock,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timing_ms: Option<Vec<MethodTiming>>,
}

#[derive(Serialize, Debug)]
pub struct MethodTiming {
    pub method: String,
    pub wall_ms: u64,
}

#[derive(Serialize, Debug)]
pub struct InputBlock {
    pub path: String,
    pub n_rows: usize,
    pub n_cols: usize,
    pub n_groups: usize,
    pub group_names: Vec<String>,
    pub group_sizes: Vec<usize>,
    pub column_names: Vec<String>,
}

#[derive(Serialize, Debug)]
pub struct SettingsEcho {
    pub methods: Vec<String>,
    pub alpha: f64,
    pub b: usize,
    pub seed: u64,
    pub disco_alpha: f64,
    pub disco_encoding: String,
    pub train_frac: f64,
    pub l2: f64,
    pub max_iter: usize,
    pub randchi_c: usize,
    pub randchi_d: usize,
    pub randchi_size: String,
    pub adjust: String,
}

#[derive(Serialize, Debug)]
pub struct Warning {
    pub code: &'static str,
    pub message: String,
}

#[derive(Serialize, Debug)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum MethodBlock {
    Baseline {
        adjust: String,
        p_values: Vec<f64>,
        threshold: Option<f64>,
        rejected_columns: Vec<String>,
        reject: bool,
        warnings: Vec<Warning>,
    },
    Disco {
        index_alpha: f64,
        encoding: String,
        statistic: Option<f64>,
        between: f64,
        within: f64,
        total: f64,
        p_value: f64,
        threshold: Option<f64>,
        reject: bool,
        warnings: Vec<Warning>,
    },
    Propensity {
        statistic: Option<f64>,
        dof: Option<usize>,
        p_value: f64,
        threshold: Option<f64>,
        reject: bool,
        warnings: Vec<Warning>,
    },
    Randchi {
        cols_per_draw: usize,
        n_draws: usize,
        draws: Vec<DrawBlock>,
        threshold: Option<f64>,
        rejected_draws: Vec<usize>,
        column_flags: Vec<ColumnFlag>,
        most_imbalanced_draw: Option<ImbalanceBlock>,
        reject: bool,
        warnings: Vec<Warning>,
    },
}

#[derive(Serialize, Debug)]
pub struct DrawBlock {
    pub columns: Vec<String>,
    pub p_value: f64,
}

#[derive(Serialize, Debug)]
pub struct ColumnFlag {
    pub column: String,
    pub count: u64,
}

/// The per-combination counts behind the most imbalanced draw: the top
/// combinations by total count, each with its per-group counts and the
/// first-to-second-group count ratio (two-group data only).
#[derive(Serialize, Debug)]
pub struct ImbalanceBlock {
    pub columns: Vec<String>,
    pub combinations: Vec<ComboBlock>,
}

#[derive(Serialize, Debug)]
pub struct ComboBlock {
    pub values: Vec<String>,
    pub counts: Vec<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ratio: Option<f64>,
}

#[derive(Serialize, Debug)]
pub struct TokenMapBlock {
    pub group_labels: Vec<String>,
    pub columns: Vec<ColumnTokensBlock>,
}

#[derive(Serialize, Debug)]
pub struct ColumnTokensBlock {
    pub name: String,
    pub tokens: Vec<String>,
}

impl TokenMapBlock {
    pub fn from_tokens(tokens: &TokenMap) -> Self {
        TokenMapBlock {
            group_labels: tokens.group_labels.clone(),
            columns: tokens
                .columns
                .iter()
                .map(|c| ColumnTokensBlock {
                    name: c.name.clone(),
                    tokens: c.tokens.clone(),
                })
                .collect(),
        }
    }
}

/// serde_json rejects non-finite floats; −∞ thresholds (B too small for any
/// rejection) and ∞ statistics map to null.
pub fn finite_or_none(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}
