//! Abundance/covariate ingestion, validation, biological-zero screening, and
//! reference-taxon handling.
//!
//! Counts are samples-by-taxa (rows are samples). Files are headered TSV by
//! default, CSV when the extension says so, with the first column holding
//! sample IDs. Covariate tables are keyed on the same sample IDs and carry a
//! designated group column.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::math;

/// Name given to the synthetic reference column added by [`augment_reference`].
pub const AUGMENTED_REF_NAME: &str = "_AUGMENTED_REF";

/// Validated abundance data ready for inference.
///
/// After preprocessing, taxon 0 is the reference taxon (a pinned singleton
/// cluster during inference) and `l[i]` always equals the row sum of `z`.
#[derive(Debug, Clone)]
pub struct AbundanceData {
    /// Observed counts, row-major n x p.
    pub z: Vec<u64>,
    pub n: usize,
    pub p: usize,
    /// Observed sampling depths, row sums of `z`.
    pub l: Vec<u64>,
    /// Group labels in 0..k.
    pub groups: Vec<usize>,
    pub k: usize,
    /// Per-group sample counts.
    pub group_sizes: Vec<usize>,
    /// Covariates after encoding/standardization, row-major n x t.
    pub x: Vec<f64>,
    pub t: usize,
    /// Design matrix [1 : X], row-major n x (t+1).
    pub xdag: Vec<f64>,
    pub sample_ids: Vec<String>,
    pub taxon_names: Vec<String>,
    pub group_labels: Vec<String>,
    /// Set once a reference taxon occupies column 0.
    pub reference_set: bool,
    /// True when the reference column was synthesized rather than selected.
    pub reference_augmented: bool,
}

impl AbundanceData {
    #[inline]
    pub fn count(&self, i: usize, j: usize) -> u64 {
        self.z[i * self.p + j]
    }

    #[inline]
    pub fn xdag_row(&self, i: usize) -> &[f64] {
        &self.xdag[i * (self.t + 1)..(i + 1) * (self.t + 1)]
    }

    /// Recompute depths from counts; every loader/preprocessing step ends here.
    fn refresh_depths(&mut self) {
        self.l = (0..self.n)
            .map(|i| self.z[i * self.p..(i + 1) * self.p].iter().sum())
            .collect();
    }

    fn rebuild_xdag(&mut self) {
        let d = self.t + 1;
        let mut xdag = vec![0.0; self.n * d];
        for i in 0..self.n {
            xdag[i * d] = 1.0;
            for t in 0..self.t {
                xdag[i * d + 1 + t] = self.x[i * self.t + t];
            }
        }
        self.xdag = xdag;
    }

    /// Gram matrix of the design, (t+1) x (t+1) row-major.
    pub fn gram(&self) -> Vec<f64> {
        let d = self.t + 1;
        let mut g = vec![0.0; d * d];
        for i in 0..self.n {
            let xi = self.xdag_row(i);
            for a in 0..d {
                for b in 0..d {
                    g[a * d + b] += xi[a] * xi[b];
                }
            }
        }
        g
    }

    /// Drop the taxon columns listed in `remove` (indices into current taxa).
    fn drop_taxa(&mut self, remove: &[usize]) {
        if remove.is_empty() {
            return;
        }
        let mut keep = vec![true; self.p];
        for &j in remove {
            keep[j] = false;
        }
        let new_p = keep.iter().filter(|&&k| k).count();
        let mut z = Vec::with_capacity(self.n * new_p);
        for i in 0..self.n {
            for j in 0..self.p {
                if keep[j] {
                    z.push(self.z[i * self.p + j]);
                }
            }
        }
        self.taxon_names = self
            .taxon_names
            .iter()
            .zip(&keep)
            .filter(|(_, &k)| k)
            .map(|(n, _)| n.clone())
            .collect();
        self.z = z;
        self.p = new_p;
        self.refresh_depths();
    }
}

/// Outcome of biological-zero screening, reported by taxon name.
#[derive(Debug, Clone, PartialEq)]
pub struct ScreenReport {
    /// Taxa declared differentially abundant without model fitting: zero for
    /// an entire group while positive somewhere else.
    pub forced_da: Vec<String>,
    /// Taxa passed through to inference.
    pub retained: Vec<String>,
    /// Taxa that are all-zero in every group, removed entirely.
    pub dropped: Vec<String>,
}

impl ScreenReport {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("taxon\tstatus\n");
        for t in &self.forced_da {
            let _ = writeln!(out, "{t}\tforced_da");
        }
        for t in &self.retained {
            let _ = writeln!(out, "{t}\tretained");
        }
        for t in &self.dropped {
            let _ = writeln!(out, "{t}\tdropped");
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Table parsing

fn delimiter_for(path: &Path) -> u8 {
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => b',',
        _ => b'\t',
    }
}

/// A parsed rectangular table: header names plus string cells, first column
/// interpreted as row IDs.
struct RawTable {
    col_names: Vec<String>,
    row_ids: Vec<String>,
    cells: Vec<Vec<String>>,
}

fn read_table(path: &Path) -> Result<RawTable> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let delim = delimiter_for(path) as char;
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Load(format!("{}: empty file", path.display())))?;
    let header: Vec<String> = header.split(delim).map(|s| s.trim().to_string()).collect();
    if header.len() < 2 {
        return Err(Error::Load(format!(
            "{}: expected at least an ID column and one data column",
            path.display()
        )));
    }
    let col_names = header[1..].to_vec();
    let mut row_ids = Vec::new();
    let mut cells = Vec::new();
    for (lineno, line) in lines {
        let fields: Vec<String> = line.split(delim).map(|s| s.trim().to_string()).collect();
        if fields.len() != header.len() {
            return Err(Error::Load(format!(
                "{}: line {}: expected {} fields, found {}",
                path.display(),
                lineno + 1,
                header.len(),
                fields.len()
            )));
        }
        row_ids.push(fields[0].clone());
        cells.push(fields[1..].to_vec());
    }
    if cells.is_empty() {
        return Err(Error::Load(format!("{}: no data rows", path.display())));
    }
    Ok(RawTable {
        col_names,
        row_ids,
        cells,
    })
}

fn transpose_table(t: RawTable) -> RawTable {
    let mut cells = vec![Vec::with_capacity(t.row_ids.len()); t.col_names.len()];
    for row in &t.cells {
        for (j, cell) in row.iter().enumerate() {
            cells[j].push(cell.clone());
        }
    }
    RawTable {
        col_names: t.row_ids,
        row_ids: t.col_names,
        cells,
    }
}

fn parse_count(path: &Path, row_id: &str, col: &str, cell: &str) -> Result<u64> {
    let v: f64 = cell.parse().map_err(|_| {
        Error::Load(format!(
            "{}: sample {row_id}, taxon {col}: not a number: {cell:?}",
            path.display()
        ))
    })?;
    if v < 0.0 {
        return Err(Error::Load(format!(
            "{}: sample {row_id}, taxon {col}: negative count {v}",
            path.display()
        )));
    }
    if v.fract() != 0.0 {
        return Err(Error::Load(format!(
            "{}: sample {row_id}, taxon {col}: non-integer count {v}",
            path.display()
        )));
    }
    Ok(v as u64)
}

// ---------------------------------------------------------------------------
// Covariate encoding

enum ColumnKind {
    /// All values parse as numbers and more than two are distinct.
    Continuous(Vec<f64>),
    /// All values parse as numbers within {0,1}.
    Binary(Vec<f64>),
    /// String-valued with g levels; expands to g-1 indicator columns.
    Categorical(Vec<String>),
}

fn classify_column(values: &[String]) -> ColumnKind {
    let parsed: Option<Vec<f64>> = values.iter().map(|v| v.parse::<f64>().ok()).collect();
    match parsed {
        Some(nums) => {
            let mut distinct: Vec<f64> = nums.clone();
            distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
            distinct.dedup();
            if distinct.iter().all(|&v| v == 0.0 || v == 1.0) {
                ColumnKind::Binary(nums)
            } else {
                ColumnKind::Continuous(nums)
            }
        }
        None => ColumnKind::Categorical(values.to_vec()),
    }
}

/// Load counts plus covariates and assemble a validated [`AbundanceData`].
///
/// `group_column` names the covariate column holding group labels; remaining
/// covariate columns become the design (categoricals one-hot expanded with
/// g-1 indicators, continuous columns standardized to mean 0, sd 1).
/// `transpose_counts` accepts taxa-by-sample count files.
pub fn load_abundance(
    count_path: &Path,
    covariate_path: &Path,
    group_column: &str,
    transpose_counts: bool,
) -> Result<AbundanceData> {
    let mut counts = read_table(count_path)?;
    if transpose_counts {
        counts = transpose_table(counts);
    }
    let covs = read_table(covariate_path)?;

    // Row alignment: covariates looked up by the count file's sample IDs.
    let cov_index: HashMap<&str, usize> = covs
        .row_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    if cov_index.len() != covs.row_ids.len() {
        return Err(Error::Load(format!(
            "{}: duplicate sample IDs",
            covariate_path.display()
        )));
    }
    let mut cov_rows = Vec::with_capacity(counts.row_ids.len());
    for id in &counts.row_ids {
        match cov_index.get(id.as_str()) {
            Some(&i) => cov_rows.push(i),
            None => {
                return Err(Error::Load(format!(
                    "{}: sample ID {id:?} from the count table has no covariate row",
                    covariate_path.display()
                )))
            }
        }
    }

    let n = counts.row_ids.len();
    let p = counts.col_names.len();
    let mut z = Vec::with_capacity(n * p);
    for (i, row) in counts.cells.iter().enumerate() {
        for (j, cell) in row.iter().enumerate() {
            z.push(parse_count(
                count_path,
                &counts.row_ids[i],
                &counts.col_names[j],
                cell,
            )?);
        }
    }

    // Split group column from the rest of the covariates.
    let gcol = covs
        .col_names
        .iter()
        .position(|c| c == group_column)
        .ok_or_else(|| {
            Error::Load(format!(
                "{}: no column named {group_column:?}",
                covariate_path.display()
            ))
        })?;
    let group_values: Vec<String> = cov_rows
        .iter()
        .map(|&r| covs.cells[r][gcol].clone())
        .collect();
    let mut group_labels: Vec<String> = group_values.clone();
    group_labels.sort();
    group_labels.dedup();
    let k = group_labels.len();
    if k < 2 {
        return Err(Error::Load(format!(
            "{}: group column {group_column:?} has {k} level(s); need at least 2",
            covariate_path.display()
        )));
    }
    let groups: Vec<usize> = group_values
        .iter()
        .map(|g| group_labels.iter().position(|l| l == g).unwrap())
        .collect();
    let mut group_sizes = vec![0usize; k];
    for &g in &groups {
        group_sizes[g] += 1;
    }

    // Encode remaining covariate columns.
    let mut x_cols: Vec<Vec<f64>> = Vec::new();
    for (c, name) in covs.col_names.iter().enumerate() {
        if c == gcol {
            continue;
        }
        let values: Vec<String> = cov_rows.iter().map(|&r| covs.cells[r][c].clone()).collect();
        match classify_column(&values) {
            ColumnKind::Binary(v) => x_cols.push(v),
            ColumnKind::Continuous(v) => {
                let (m, var) = math::mean_var(&v);
                let sd = var.sqrt();
                if sd == 0.0 {
                    return Err(Error::Load(format!(
                        "{}: covariate {name:?} is constant",
                        covariate_path.display()
                    )));
                }
                x_cols.push(v.iter().map(|&a| (a - m) / sd).collect());
            }
            ColumnKind::Categorical(v) => {
                let mut levels: Vec<&String> = v.iter().collect();
                levels.sort();
                levels.dedup();
                if levels.len() < 2 {
                    return Err(Error::Load(format!(
                        "{}: covariate {name:?} is constant",
                        covariate_path.display()
                    )));
                }
                // first level is the baseline
                for lvl in levels.iter().skip(1) {
                    x_cols.push(
                        v.iter()
                            .map(|a| if a == *lvl { 1.0 } else { 0.0 })
                            .collect(),
                    );
                }
            }
        }
    }
    let t = x_cols.len();
    let mut x = vec![0.0; n * t];
    for (c, col) in x_cols.iter().enumerate() {
        for i in 0..n {
            x[i * t + c] = col[i];
        }
    }

    let mut data = AbundanceData {
        z,
        n,
        p,
        l: vec![],
        groups,
        k,
        group_sizes,
        x,
        t,
        xdag: vec![],
        sample_ids: counts.row_ids,
        taxon_names: counts.col_names,
        group_labels,
        reference_set: false,
        reference_augmented: false,
    };
    data.refresh_depths();
    data.rebuild_xdag();

    // Full column rank, checked via the Gram matrix.
    if math::cholesky(&data.gram(), data.t + 1).is_err() {
        return Err(Error::Load(
            "covariate design matrix [1 : X] is rank deficient".into(),
        ));
    }
    Ok(data)
}

/// Screen out taxa whose zeros are structural rather than stochastic.
///
/// A taxon zero across every sample of some group but positive overall is
/// declared DA outright and removed before fitting; all-zero taxa are dropped.
/// Requires at least two groups.
pub fn screen_biological_zeros(data: &mut AbundanceData) -> Result<ScreenReport> {
    if data.k < 2 {
        return Err(Error::Config(format!(
            "screening requires K >= 2 groups, found {}",
            data.k
        )));
    }
    let mut forced = Vec::new();
    let mut dropped = Vec::new();
    let mut retained = Vec::new();
    let mut remove = Vec::new();
    for j in 0..data.p {
        let mut group_any = vec![false; data.k];
        for i in 0..data.n {
            if data.count(i, j) > 0 {
                group_any[data.groups[i]] = true;
            }
        }
        let seen = group_any.iter().filter(|&&a| a).count();
        if seen == 0 {
            dropped.push(data.taxon_names[j].clone());
            remove.push(j);
        } else if seen < data.k {
            forced.push(data.taxon_names[j].clone());
            remove.push(j);
        } else {
            retained.push(data.taxon_names[j].clone());
        }
    }
    data.drop_taxa(&remove);
    Ok(ScreenReport {
        forced_da: forced,
        retained,
        dropped,
    })
}

/// Optional rare-taxon filter: drop taxa with more than `max_zero_frac` zeros.
/// Returns the names of removed taxa.
pub fn filter_rare_taxa(data: &mut AbundanceData, max_zero_frac: f64) -> Vec<String> {
    let mut remove = Vec::new();
    let mut names = Vec::new();
    for j in 0..data.p {
        let zeros = (0..data.n).filter(|&i| data.count(i, j) == 0).count();
        if zeros as f64 > max_zero_frac * data.n as f64 {
            remove.push(j);
            names.push(data.taxon_names[j].clone());
        }
    }
    data.drop_taxa(&remove);
    names
}

/// Insert an artificial reference taxon: a column of unit counts at index 0.
/// Each depth grows by one and p grows by one.
pub fn augment_reference(data: &mut AbundanceData) -> Result<()> {
    if data.reference_set {
        return Err(Error::Config("reference taxon already set".into()));
    }
    if data.p == 0 {
        return Err(Error::Config("cannot augment an empty count matrix".into()));
    }
    let p_new = data.p + 1;
    let mut z = Vec::with_capacity(data.n * p_new);
    for i in 0..data.n {
        z.push(1);
        z.extend_from_slice(&data.z[i * data.p..(i + 1) * data.p]);
    }
    data.z = z;
    data.p = p_new;
    data.taxon_names.insert(0, AUGMENTED_REF_NAME.to_string());
    data.refresh_depths();
    data.reference_set = true;
    data.reference_augmented = true;
    Ok(())
}

/// Index of the taxon with the smallest variance of relative abundances,
/// ties broken toward the smallest index.
pub fn select_reference_min_variance(data: &AbundanceData) -> Result<usize> {
    if data.p == 0 {
        return Err(Error::Config("empty count matrix".into()));
    }
    if data.l.iter().any(|&l| l == 0) {
        return Err(Error::Config(
            "min-variance reference requires positive depth in every sample".into(),
        ));
    }
    let mut best = 0usize;
    let mut best_var = f64::INFINITY;
    for j in 0..data.p {
        let rel: Vec<f64> = (0..data.n)
            .map(|i| data.count(i, j) as f64 / data.l[i] as f64)
            .collect();
        let (_, var) = math::mean_var(&rel);
        if var < best_var {
            best_var = var;
            best = j;
        }
    }
    Ok(best)
}

/// Reorder taxa so `reference` occupies column 0 and mark the reference set.
pub fn pin_reference(data: &mut AbundanceData, reference: usize) -> Result<()> {
    if data.reference_set {
        return Err(Error::Config("reference taxon already set".into()));
    }
    if reference >= data.p {
        return Err(Error::Config(format!(
            "reference index {reference} out of range for p = {}",
            data.p
        )));
    }
    if reference != 0 {
        for i in 0..data.n {
            let row = &mut data.z[i * data.p..(i + 1) * data.p];
            let v = row[reference];
            row.copy_within(0..reference, 1);
            row[0] = v;
        }
        let name = data.taxon_names.remove(reference);
        data.taxon_names.insert(0, name);
    }
    data.reference_set = true;
    data.reference_augmented = false;
    Ok(())
}
