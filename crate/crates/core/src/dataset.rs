//! Data model for grouped categorical samples: CSV ingestion, category
//! encoding, pooling/splitting, and one-hot numeric embedding.

use std::collections::HashMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};

/// An n×m matrix of category codes with per-column category counts.
///
/// Every cell in column `j` lies in `[0, col_cardinalities[j])`. Tables are
/// immutable after construction and safe to share across threads.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CategoricalTable {
    n_rows: usize,
    n_cols: usize,
    cells: Vec<u32>, // row-major
    col_cardinalities: Vec<u32>,
    col_names: Option<Vec<String>>,
}

impl CategoricalTable {
    pub fn new(
        cells: Vec<u32>,
        n_cols: usize,
        col_cardinalities: Vec<u32>,
        col_names: Option<Vec<String>>,
    ) -> Result<Self> {
        if n_cols == 0 {
            return Err(Error::invalid_input("table must have at least one column"));
        }
        if cells.len() % n_cols != 0 {
            return Err(Error::invalid_input(format!(
                "cell count {} is not a multiple of column count {n_cols}",
                cells.len()
            )));
        }
        if col_cardinalities.len() != n_cols {
            return Err(Error::invalid_input(
                "col_cardinalities length must equal the column count",
            ));
        }
        if let Some(names) = &col_names {
            if names.len() != n_cols {
                return Err(Error::invalid_input(
                    "col_names length must equal the column count",
                ));
            }
        }
        if col_cardinalities.iter().any(|&c| c == 0) {
            return Err(Error::invalid_input("column cardinality must be >= 1"));
        }
        let n_rows = cells.len() / n_cols;
        for r in 0..n_rows {
            for j in 0..n_cols {
                let v = cells[r * n_cols + j];
                if v >= col_cardinalities[j] {
                    return Err(Error::invalid_input(format!(
                        "cell ({r},{j}) = {v} exceeds cardinality {}",
                        col_cardinalities[j]
                    )));
                }
            }
        }
        Ok(CategoricalTable {
            n_rows,
            n_cols,
            cells,
            col_cardinalities,
            col_names,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, r: usize) -> &[u32] {
        &self.cells[r * self.n_cols..(r + 1) * self.n_cols]
    }

    pub fn code(&self, r: usize, j: usize) -> u32 {
        self.cells[r * self.n_cols + j]
    }

    pub fn cells(&self) -> &[u32] {
        &self.cells
    }

    pub fn col_cardinalities(&self) -> &[u32] {
        &self.col_cardinalities
    }

    pub fn col_names(&self) -> Option<&[String]> {
        self.col_names.as_deref()
    }

    /// Per-column category counts.
    pub fn column_counts(&self, j: usize) -> Vec<u64> {
        let mut counts = vec![0u64; self.col_cardinalities[j] as usize];
        for r in 0..self.n_rows {
            counts[self.code(r, j) as usize] += 1;
        }
        counts
    }

    pub fn one_hot(&self) -> NumericMatrix {
        one_hot(self)
    }
}

/// K categorical tables sharing a column schema; the datasets under test.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupedSample {
    groups: Vec<CategoricalTable>,
    group_names: Vec<String>,
}

impl GroupedSample {
    pub fn new(groups: Vec<CategoricalTable>, group_names: Vec<String>) -> Result<Self> {
        if groups.len() < 2 {
            return Err(Error::invalid_input("need at least 2 groups"));
        }
        if group_names.len() != groups.len() {
            return Err(Error::invalid_input("group name count must match group count"));
        }
        let first = &groups[0];
        for (i, g) in groups.iter().enumerate() {
            if g.n_rows() == 0 {
                return Err(Error::invalid_input(format!(
                    "group '{}' is empty",
                    group_names[i]
                )));
            }
            if g.n_cols() != first.n_cols()
                || g.col_cardinalities() != first.col_cardinalities()
            {
                return Err(Error::invalid_input(format!(
                    "group '{}' does not share the column schema of group '{}'",
                    group_names[i], group_names[0]
                )));
            }
        }
        Ok(GroupedSample {
            groups,
            group_names,
        })
    }

    pub fn k(&self) -> usize {
        self.groups.len()
    }

    pub fn n_cols(&self) -> usize {
        self.groups[0].n_cols()
    }

    pub fn col_cardinalities(&self) -> &[u32] {
        self.groups[0].col_cardinalities()
    }

    pub fn col_names(&self) -> Option<&[String]> {
        self.groups[0].col_names()
    }

    pub fn groups(&self) -> &[CategoricalTable] {
        &self.groups
    }

    pub fn group_names(&self) -> &[String] {
        &self.group_names
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        self.groups.iter().map(|g| g.n_rows()).collect()
    }

    pub fn n_total(&self) -> usize {
        self.groups.iter().map(|g| g.n_rows()).sum()
    }

    /// Concatenate the groups (in order) into one pooled table.
    pub fn pooled(&self) -> CategoricalTable {
        let first = &self.groups[0];
        let mut cells = Vec::with_capacity(self.n_total() * first.n_cols());
        for g in &self.groups {
            cells.extend_from_slice(g.cells());
        }
        CategoricalTable {
            n_rows: self.n_total(),
            n_cols: first.n_cols(),
            cells,
            col_cardinalities: first.col_cardinalities().to_vec(),
            col_names: first.col_names().map(|n| n.to_vec()),
        }
    }

    /// Group label of each pooled row, in pooled order.
    pub fn group_of_rows(&self) -> Vec<u16> {
        let mut labels = Vec::with_capacity(self.n_total());
        for (gi, g) in self.groups.iter().enumerate() {
            labels.extend(std::iter::repeat(gi as u16).take(g.n_rows()));
        }
        labels
    }
}

/// A real-valued matrix, the carrier for one-hot embeddings and generic
/// numeric test input. All entries are finite.
#[derive(Debug, Clone, PartialEq)]
pub struct NumericMatrix {
    n_rows: usize,
    n_dims: usize,
    entries: Vec<f64>, // row-major
}

impl NumericMatrix {
    pub fn new(entries: Vec<f64>, n_dims: usize) -> Result<Self> {
        if n_dims == 0 {
            return Err(Error::invalid_input("matrix must have at least one dimension"));
        }
        if entries.len() % n_dims != 0 {
            return Err(Error::invalid_input(format!(
                "entry count {} is not a multiple of dimension {n_dims}",
                entries.len()
            )));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid_input("matrix entries must be finite"));
        }
        Ok(NumericMatrix {
            n_rows: entries.len() / n_dims,
            n_dims,
            entries,
        })
    }

    /// Build from one value per row (a single column).
    pub fn from_column(values: &[f64]) -> Result<Self> {
        NumericMatrix::new(values.to_vec(), 1)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_dims(&self) -> usize {
        self.n_dims
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.entries[r * self.n_dims..(r + 1) * self.n_dims]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }
}

/// Token list for one column; code `i` decodes to `tokens[i]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnTokens {
    pub name: String,
    pub tokens: Vec<String>,
}

/// Reversible encoding record produced by [`load_csv`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenMap {
    pub group_labels: Vec<String>,
    pub columns: Vec<ColumnTokens>,
}

impl TokenMap {
    /// Decode a coded row back to its original tokens.
    pub fn decode_row(&self, row: &[u32]) -> Vec<&str> {
        row.iter()
            .zip(&self.columns)
            .map(|(&code, col)| col.tokens[code as usize].as_str())
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct LoadedCsv {
    pub sample: GroupedSample,
    pub tokens: TokenMap,
}

/// How the group column is addressed in a CSV file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GroupColumn {
    Name(String),
    Index(usize),
}

impl GroupColumn {
    /// Interpret a CLI-style selector: a bare integer is a 0-based index,
    /// anything else is a header name.
    pub fn parse(s: &str) -> GroupColumn {
        match s.parse::<usize>() {
            Ok(i) => GroupColumn::Index(i),
            Err(_) => GroupColumn::Name(s.to_string()),
        }
    }
}

/// Load a grouped categorical sample from an RFC-4180-style CSV file.
///
/// Distinct tokens per column are mapped to codes 0..c−1 in first-appearance
/// order; rows are partitioned by group label in first-appearance order. The
/// token map is returned so reports can decode codes back to tokens.
pub fn load_csv(
    path: impl AsRef<Path>,
    group_col: &GroupColumn,
    has_header: bool,
) -> Result<LoadedCsv> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::invalid_input(format!(
            "input file not found: {}",
            path.display()
        )));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(false)
        .from_path(path)?;

    let mut records = reader.records();
    let header: Option<csv::StringRecord> = if has_header {
        match records.next() {
            Some(rec) => Some(rec?),
            None => return Err(Error::invalid_input("csv file is empty")),
        }
    } else {
        None
    };

    let mut group_idx: Option<usize> = None;
    let mut n_fields: Option<usize> = None;
    if let Some(h) = &header {
        n_fields = Some(h.len());
        group_idx = Some(match group_col {
            GroupColumn::Name(name) => h
                .iter()
                .position(|f| f == name)
                .ok_or_else(|| {
                    Error::invalid_input(format!("group column '{name}' not found in header"))
                })?,
            GroupColumn::Index(i) => {
                if *i >= h.len() {
                    return Err(Error::invalid_input(format!(
                        "group column index {i} out of range (file has {} columns)",
                        h.len()
                    )));
                }
                *i
            }
        });
    }

    // token -> code, per covariate column
    let mut col_token_index: Vec<HashMap<String, u32>> = Vec::new();
    let mut col_tokens: Vec<Vec<String>> = Vec::new();
    let mut group_index: HashMap<String, usize> = HashMap::new();
    let mut group_labels: Vec<String> = Vec::new();
    let mut group_rows: Vec<Vec<u32>> = Vec::new();
    let mut n_cov = 0usize;

    for (line, rec) in records.enumerate() {
        let rec = rec.map_err(|e| match e.kind() {
            csv::ErrorKind::UnequalLengths { .. } => {
                Error::invalid_input(format!("ragged row at record {}", line + 1))
            }
            _ => Error::Csv(e),
        })?;
        let gidx = match group_idx {
            Some(i) => i,
            None => {
                let i = match group_col {
                    GroupColumn::Index(i) => *i,
                    GroupColumn::Name(name) => {
                        return Err(Error::invalid_input(format!(
                            "group column '{name}' requires a header row"
                        )))
                    }
                };
                if i >= rec.len() {
                    return Err(Error::invalid_input(format!(
                        "group column index {i} out of range (file has {} columns)",
                        rec.len()
                    )));
                }
                group_idx = Some(i);
                i
            }
        };
        match n_fields {
            None => {
                n_fields = Some(rec.len());
            }
            Some(n) if rec.len() != n => {
                return Err(Error::invalid_input(format!(
                    "ragged row at record {}: {} fields, expected {n}",
                    line + 1,
                    rec.len()
                )));
            }
            _ => {}
        }
        if col_token_index.is_empty() {
            n_cov = rec.len() - 1;
            if n_cov == 0 {
                return Err(Error::invalid_input(
                    "csv has no covariate columns besides the group column",
                ));
            }
            col_token_index = vec![HashMap::new(); n_cov];
            col_tokens = vec![Vec::new(); n_cov];
        }

        let group_label = rec.get(gidx).unwrap();
        if group_label.is_empty() {
            return Err(Error::invalid_input(format!(
                "missing group label at record {}",
                line + 1
            )));
        }
        let g = match group_index.get(group_label) {
            Some(&g) => g,
            None => {
                let g = group_labels.len();
                group_index.insert(group_label.to_string(), g);
                group_labels.push(group_label.to_string());
                group_rows.push(Vec::new());
                g
            }
        };

        let mut cov = 0usize;
        for (fi, field) in rec.iter().enumerate() {
            if fi == gidx {
                continue;
            }
            if field.is_empty() {
                return Err(Error::invalid_input(format!(
                    "missing value at record {}, field {fi}",
                    line + 1
                )));
            }
            let code = match col_token_index[cov].get(field) {
                Some(&c) => c,
                None => {
                    let c = col_tokens[cov].len() as u32;
                    col_token_index[cov].insert(field.to_string(), c);
                    col_tokens[cov].push(field.to_string());
                    c
                }
            };
            group_rows[g].push(code);
            cov += 1;
        }
    }

    if group_labels.len() < 2 {
        return Err(Error::invalid_input(format!(
            "group column has {} distinct label(s), need at least 2",
            group_labels.len()
        )));
    }

    let cardinalities: Vec<u32> = col_tokens.iter().map(|t| t.len() as u32).collect();
    let col_names: Vec<String> = match &header {
        Some(h) => h
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != group_idx.unwrap())
            .map(|(_, f)| f.to_string())
            .collect(),
        None => (0..n_cov).map(|j| format!("c{j}")).collect(),
    };

    let groups: Vec<CategoricalTable> = group_rows
        .into_iter()
        .map(|cells| {
            CategoricalTable::new(cells, n_cov, cardinalities.clone(), Some(col_names.clone()))
        })
        .collect::<Result<_>>()?;

    let tokens = TokenMap {
        group_labels: group_labels.clone(),
        columns: col_names
            .iter()
            .zip(col_tokens)
            .map(|(name, tokens)| ColumnTokens {
                name: name.clone(),
                tokens,
            })
            .collect(),
    };

    Ok(LoadedCsv {
        sample: GroupedSample::new(groups, group_labels)?,
        tokens,
    })
}

/// Re-partition the pooled rows of `g` according to an explicit permutation:
/// output row `r` (in pooled order) is input pooled row `perm[r]`, and the
/// output is split sequentially into groups of the given sizes.
pub fn apply_pooled_permutation(
    g: &GroupedSample,
    perm: &[usize],
    sizes: &[usize],
) -> Result<GroupedSample> {
    let n = g.n_total();
    if perm.len() != n {
        return Err(Error::invalid_argument(format!(
            "permutation length {} does not match pooled row count {n}",
            perm.len()
        )));
    }
    if sizes.iter().sum::<usize>() != n {
        return Err(Error::invalid_argument(format!(
            "group sizes sum to {}, expected {n}",
            sizes.iter().sum::<usize>()
        )));
    }
    if sizes.iter().any(|&s| s == 0) {
        return Err(Error::invalid_argument("group sizes must all be >= 1"));
    }
    let pooled = g.pooled();
    let m = pooled.n_cols();
    let mut groups = Vec::with_capacity(sizes.len());
    let mut offset = 0usize;
    for &size in sizes {
        let mut cells = Vec::with_capacity(size * m);
        for r in offset..offset + size {
            cells.extend_from_slice(pooled.row(perm[r]));
        }
        groups.push(CategoricalTable {
            n_rows: size,
            n_cols: m,
            cells,
            col_cardinalities: pooled.col_cardinalities().to_vec(),
            col_names: pooled.col_names().map(|c| c.to_vec()),
        });
        offset += size;
    }
    GroupedSample::new(groups, g.group_names().to_vec())
}

/// Permute the pooled rows uniformly at random and re-partition into groups
/// of the given sizes. The input is unmodified.
pub fn pool_and_split(
    g: &GroupedSample,
    sizes: &[usize],
    rng: &mut impl Rng,
) -> Result<GroupedSample> {
    let n = g.n_total();
    if sizes.iter().sum::<usize>() != n {
        return Err(Error::invalid_argument(format!(
            "group sizes sum to {}, expected {n}",
            sizes.iter().sum::<usize>()
        )));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    apply_pooled_permutation(g, &perm, sizes)
}

/// One-hot embed a categorical table. The output has Σ_j cardinality(j)
/// dimensions; row r has exactly m ones, one per column block.
pub fn one_hot(t: &CategoricalTable) -> NumericMatrix {
    let offsets = one_hot_offsets(t.col_cardinalities());
    let dims = *offsets.last().unwrap();
    let mut entries = vec![0.0; t.n_rows() * dims];
    for r in 0..t.n_rows() {
        let base = r * dims;
        for j in 0..t.n_cols() {
            entries[base + offsets[j] + t.code(r, j) as usize] = 1.0;
        }
    }
    NumericMatrix {
        n_rows: t.n_rows(),
        n_dims: dims,
        entries,
    }
}

/// Column block offsets of the one-hot embedding; the final entry is the
/// total embedded dimension.
pub fn one_hot_offsets(cardinalities: &[u32]) -> Vec<usize> {
    let mut offsets = Vec::with_capacity(cardinalities.len() + 1);
    let mut acc = 0usize;
    for &c in cardinalities {
        offsets.push(acc);
        acc += c as usize;
    }
    offsets.push(acc);
    offsets
}

/// Build a table from per-column code vectors (all the same length).
pub fn table_from_columns(
    columns: &[Vec<u32>],
    col_names: Option<Vec<String>>,
) -> Result<CategoricalTable> {
    if columns.is_empty() {
        return Err(Error::invalid_input("no columns given"));
    }
    let n = columns[0].len();
    if columns.iter().any(|c| c.len() != n) {
        return Err(Error::invalid_input("columns differ in length"));
    }
    let m = columns.len();
    let mut cells = vec![0u32; n * m];
    let mut cards = vec![0u32; m];
    for (j, col) in columns.iter().enumerate() {
        let max = col.iter().copied().max().unwrap_or(0);
        cards[j] = max + 1;
        for (r, &v) in col.iter().enumerate() {
            cells[r * m + j] = v;
        }
    }
    CategoricalTable::new(cells, m, cards, col_names)
}
