use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::table::{Cell, ColumnKind, RawTable, Schema};
use crate::error::{Error, Result};

/// Row-major design matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureMatrix {
    /// Binary rows stored as the indices of their `per_row` active columns.
    OneHot {
        rows: usize,
        cols: usize,
        per_row: usize,
        active: Vec<u32>,
    },
    Dense {
        rows: usize,
        cols: usize,
        values: Vec<f64>,
    },
}

impl FeatureMatrix {
    pub fn dense(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().find(|r| r.len() != cols) {
            return Err(Error::Dimension(format!(
                "dense row has {} entries, expected {cols}",
                r.len()
            )));
        }
        Ok(FeatureMatrix::Dense {
            rows: rows.len(),
            cols,
            values: rows.concat(),
        })
    }

    pub fn one_hot(rows: usize, cols: usize, per_row: usize, active: Vec<u32>) -> Result<Self> {
        if active.len() != rows * per_row {
            return Err(Error::Dimension(format!(
                "{} active indices for {rows} rows of {per_row}",
                active.len()
            )));
        }
        if let Some(&bad) = active.iter().find(|&&a| a as usize >= cols) {
            return Err(Error::Dimension(format!("active column {bad} >= {cols}")));
        }
        Ok(FeatureMatrix::OneHot {
            rows,
            cols,
            per_row,
            active,
        })
    }

    pub fn nrows(&self) -> usize {
        match self {
            FeatureMatrix::OneHot { rows, .. } | FeatureMatrix::Dense { rows, .. } => *rows,
        }
    }

    pub fn ncols(&self) -> usize {
        match self {
            FeatureMatrix::OneHot { cols, .. } | FeatureMatrix::Dense { cols, .. } => *cols,
        }
    }

    #[inline]
    pub fn dot_row(&self, i: usize, w: &[f64]) -> f64 {
        match self {
            FeatureMatrix::OneHot {
                per_row, active, ..
            } => active[i * per_row..(i + 1) * per_row]
                .iter()
                .map(|&c| w[c as usize])
                .sum(),
            FeatureMatrix::Dense { cols, values, .. } => values[i * cols..(i + 1) * cols]
                .iter()
                .zip(w)
                .map(|(x, w)| x * w)
                .sum(),
        }
    }

    /// `out += coef * x_i`.
    #[inline]
    pub fn add_row_to(&self, i: usize, coef: f64, out: &mut [f64]) {
        match self {
            FeatureMatrix::OneHot {
                per_row, active, ..
            } => {
                for &c in &active[i * per_row..(i + 1) * per_row] {
                    out[c as usize] += coef;
                }
            }
            FeatureMatrix::Dense { cols, values, .. } => {
                for (o, x) in out.iter_mut().zip(&values[i * cols..(i + 1) * cols]) {
                    *o += coef * x;
                }
            }
        }
    }

    pub fn row_dense(&self, i: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.ncols()];
        self.add_row_to(i, 1.0, &mut out);
        out
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        match self {
            FeatureMatrix::OneHot {
                cols,
                per_row,
                active,
                ..
            } => FeatureMatrix::OneHot {
                rows: idx.len(),
                cols: *cols,
                per_row: *per_row,
                active: idx
                    .iter()
                    .flat_map(|&i| active[i * per_row..(i + 1) * per_row].iter().copied())
                    .collect(),
            },
            FeatureMatrix::Dense { cols, values, .. } => FeatureMatrix::Dense {
                rows: idx.len(),
                cols: *cols,
                values: idx
                    .iter()
                    .flat_map(|&i| values[i * cols..(i + 1) * cols].iter().copied())
                    .collect(),
            },
        }
    }

    /// Appends a one-hot block of width `width` with the given hot column per row.
    fn append_one_hot(&self, width: usize, hot: &[usize]) -> Self {
        match self {
            FeatureMatrix::OneHot {
                rows,
                cols,
                per_row,
                active,
            } => {
                let mut out = Vec::with_capacity(rows * (per_row + 1));
                for (i, &h) in hot.iter().enumerate() {
                    out.extend_from_slice(&active[i * per_row..(i + 1) * per_row]);
                    out.push((cols + h) as u32);
                }
                FeatureMatrix::OneHot {
                    rows: *rows,
                    cols: cols + width,
                    per_row: per_row + 1,
                    active: out,
                }
            }
            FeatureMatrix::Dense { rows, cols, values } => {
                let mut out = Vec::with_capacity(rows * (cols + width));
                for (i, &h) in hot.iter().enumerate() {
                    out.extend_from_slice(&values[i * cols..(i + 1) * cols]);
                    out.extend((0..width).map(|k| if k == h { 1.0 } else { 0.0 }));
                }
                FeatureMatrix::Dense {
                    rows: *rows,
                    cols: cols + width,
                    values: out,
                }
            }
        }
    }
}

/// Borrowed training data exposing a single group column.
///
/// Trainers only ever see this view, so the true groups cannot leak into a
/// gradient unless the caller conditions on them explicitly.
#[derive(Debug, Clone, Copy)]
pub struct TrainView<'a> {
    pub features: &'a FeatureMatrix,
    pub labels: &'a [u8],
    pub groups: &'a [usize],
    pub num_groups: usize,
}

impl TrainView<'_> {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }
}

/// Encoded features, labels, and both group columns.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedDataset {
    base: FeatureMatrix,
    features: FeatureMatrix,
    labels: Vec<u8>,
    true_groups: Vec<usize>,
    noisy_groups: Vec<usize>,
    m: usize,
    group_feature: bool,
    feature_names: Vec<String>,
}

impl EncodedDataset {
    /// Builds a dataset whose noisy groups start equal to the true groups.
    /// With `group_feature` the noisy group is appended as a one-hot block.
    pub fn new(
        base: FeatureMatrix,
        labels: Vec<u8>,
        true_groups: Vec<usize>,
        m: usize,
        group_feature: bool,
    ) -> Result<Self> {
        let n = base.nrows();
        if labels.len() != n || true_groups.len() != n {
            return Err(Error::Dimension(format!(
                "{n} feature rows, {} labels, {} groups",
                labels.len(),
                true_groups.len()
            )));
        }
        if labels.iter().any(|&y| y > 1) {
            return Err(Error::InvalidInput("labels must be 0 or 1".into()));
        }
        if let Some(&g) = true_groups.iter().find(|&&g| g >= m) {
            return Err(Error::InvalidInput(format!("group id {g} >= {m}")));
        }
        let feature_names = (0..base.ncols()).map(|c| format!("x{c}")).collect();
        let mut ds = Self {
            features: base.clone(),
            base,
            labels,
            noisy_groups: true_groups.clone(),
            true_groups,
            m,
            group_feature,
            feature_names,
        };
        ds.rebuild_features();
        Ok(ds)
    }

    fn rebuild_features(&mut self) {
        self.features = if self.group_feature {
            self.base.append_one_hot(self.m, &self.noisy_groups)
        } else {
            self.base.clone()
        };
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Self {
        self.feature_names = names;
        self
    }

    /// Replaces the noisy group column (and its one-hot block).
    pub fn with_noisy_groups(mut self, noisy: Vec<usize>) -> Result<Self> {
        if noisy.len() != self.len() {
            return Err(Error::Dimension(format!(
                "{} noisy groups for {} rows",
                noisy.len(),
                self.len()
            )));
        }
        if let Some(&g) = noisy.iter().find(|&&g| g >= self.m) {
            return Err(Error::InvalidInput(format!("noisy group id {g} >= {}", self.m)));
        }
        self.noisy_groups = noisy;
        self.rebuild_features();
        Ok(self)
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        let pick = |v: &[usize]| idx.iter().map(|&i| v[i]).collect::<Vec<_>>();
        let mut ds = Self {
            base: self.base.select_rows(idx),
            features: FeatureMatrix::Dense {
                rows: 0,
                cols: 0,
                values: Vec::new(),
            },
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            true_groups: pick(&self.true_groups),
            noisy_groups: pick(&self.noisy_groups),
            m: self.m,
            group_feature: self.group_feature,
            feature_names: self.feature_names.clone(),
        };
        ds.rebuild_features();
        ds
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn features(&self) -> &FeatureMatrix {
        &self.features
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn true_groups(&self) -> &[usize] {
        &self.true_groups
    }

    pub fn noisy_groups(&self) -> &[usize] {
        &self.noisy_groups
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Number of noisy groups; always equal to `m` here.
    pub fn m_hat(&self) -> usize {
        self.m
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn noisy_view(&self) -> TrainView<'_> {
        TrainView {
            features: &self.features,
            labels: &self.labels,
            groups: &self.noisy_groups,
            num_groups: self.m,
        }
    }

    /// View conditioned on the true groups (oracle baseline and evaluation).
    pub fn true_view(&self) -> TrainView<'_> {
        TrainView {
            features: &self.features,
            labels: &self.labels,
            groups: &self.true_groups,
            num_groups: self.m,
        }
    }

    /// `(true, noisy)` pairs for noise-model estimation.
    pub fn group_pairs(&self) -> Vec<(usize, usize)> {
        self.true_groups
            .iter()
            .copied()
            .zip(self.noisy_groups.iter().copied())
            .collect()
    }
}

/// Empirical quartile edges with midpoint interpolation, duplicates merged.
pub fn quartile_edges(values: &[f64]) -> Vec<f64> {
    if values.is_empty() {
        return Vec::new();
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let mut edges: Vec<f64> = Vec::with_capacity(3);
    for q in [0.25, 0.5, 0.75] {
        let pos = (n - 1) as f64 * q;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        let e = if lo == hi { v[lo] } else { 0.5 * (v[lo] + v[hi]) };
        if edges.last() != Some(&e) {
            edges.push(e);
        }
    }
    edges
}

/// Bucket index: the number of edges strictly below `x`.
pub fn bucket_of(edges: &[f64], x: f64) -> usize {
    edges.iter().filter(|&&e| e < x).count()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EncodedColumn {
    Numeric { name: String, edges: Vec<f64> },
    Categorical { name: String, levels: Vec<String> },
}

impl EncodedColumn {
    fn width(&self) -> usize {
        match self {
            EncodedColumn::Numeric { edges, .. } => edges.len() + 1,
            EncodedColumn::Categorical { levels, .. } => levels.len(),
        }
    }

    fn name(&self) -> &str {
        match self {
            EncodedColumn::Numeric { name, .. } | EncodedColumn::Categorical { name, .. } => name,
        }
    }
}

/// Fitted one-hot encoding: quartile buckets for numeric columns, one column
/// per level for categorical ones, then one column per (noisy) group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    pub schema: Schema,
    pub columns: Vec<EncodedColumn>,
}

impl Encoder {
    pub fn fit(raw: &RawTable, schema: &Schema) -> Result<Self> {
        schema.validate()?;
        let mut columns = Vec::new();
        for (idx, (name, kind)) in raw.columns.iter().zip(&raw.kinds).enumerate() {
            match kind {
                ColumnKind::Numeric => {
                    let values: Vec<f64> = raw.column(idx).filter_map(Cell::as_num).collect();
                    let edges = quartile_edges(&values);
                    if edges.len() < 3 {
                        log::warn!(
                            "column `{name}`: quartile edges collapse, using {} buckets",
                            edges.len() + 1
                        );
                    }
                    columns.push(EncodedColumn::Numeric {
                        name: name.clone(),
                        edges,
                    });
                }
                ColumnKind::Categorical => {
                    let levels: BTreeSet<String> = raw.column(idx).map(Cell::to_string).collect();
                    columns.push(EncodedColumn::Categorical {
                        name: name.clone(),
                        levels: levels.into_iter().collect(),
                    });
                }
                ColumnKind::Label | ColumnKind::Group | ColumnKind::Ignore => {}
            }
        }
        Ok(Self {
            schema: schema.clone(),
            columns,
        })
    }

    /// Width of the encoded matrix, group block included.
    pub fn dim(&self) -> usize {
        self.columns.iter().map(EncodedColumn::width).sum::<usize>() + self.schema.num_groups()
    }

    pub fn feature_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.dim());
        for col in &self.columns {
            match col {
                EncodedColumn::Numeric { name, edges } => {
                    names.extend((0..=edges.len()).map(|b| format!("{name}#q{b}")));
                }
                EncodedColumn::Categorical { name, levels } => {
                    names.extend(levels.iter().map(|l| format!("{name}={l}")));
                }
            }
        }
        names.extend(
            self.schema
                .group_names()
                .into_iter()
                .map(|g| format!("group={g}")),
        );
        names
    }

    pub fn transform(&self, raw: &RawTable) -> Result<EncodedDataset> {
        let locate = |name: &str| {
            raw.column_index(name)
                .ok_or_else(|| Error::Schema(format!("column `{name}` missing from table")))
        };
        let label_idx = locate(self.schema.label_column()?)?;
        let group_idx = locate(self.schema.group_column()?)?;
        let col_idx: Vec<usize> = self
            .columns
            .iter()
            .map(|c| locate(c.name()))
            .collect::<Result<_>>()?;

        let n = raw.len();
        let per_row = self.columns.len();
        let mut active = Vec::with_capacity(n * per_row);
        let mut labels = Vec::with_capacity(n);
        let mut groups = Vec::with_capacity(n);
        for (r, row) in raw.rows.iter().enumerate() {
            let mut offset = 0usize;
            for (col, &ci) in self.columns.iter().zip(&col_idx) {
                let hot = match col {
                    EncodedColumn::Numeric { name, edges } => {
                        let x = row[ci].as_num().ok_or_else(|| Error::BadNumber {
                            row: r + 1,
                            column: name.clone(),
                            value: row[ci].to_string(),
                        })?;
                        bucket_of(edges, x)
                    }
                    EncodedColumn::Categorical { name, levels } => {
                        let v = row[ci].to_string();
                        levels.binary_search(&v).map_err(|_| {
                            Error::InvalidInput(format!(
                                "row {}: unseen level {v:?} in column `{name}`",
                                r + 1
                            ))
                        })?
                    }
                };
                active.push((offset + hot) as u32);
                offset += col.width();
            }
            labels.push(self.schema.label_value(&row[label_idx])?);
            groups.push(self.schema.group_id(&row[group_idx].to_string())?);
        }
        let base_cols = self.columns.iter().map(EncodedColumn::width).sum();
        let base = FeatureMatrix::one_hot(n, base_cols, per_row, active)?;
        let ds = EncodedDataset::new(base, labels, groups, self.schema.num_groups(), true)?;
        Ok(ds.with_feature_names(self.feature_names()))
    }
}

/// Fits an encoder on the whole table and applies it.
pub fn encode(raw: &RawTable, schema: &Schema) -> Result<(EncodedDataset, Encoder)> {
    let enc = Encoder::fit(raw, schema)?;
    let ds = enc.transform(raw)?;
    Ok((ds, enc))
}
