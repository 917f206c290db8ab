use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Numeric,
    Categorical,
    Label,
    /// The true protected group.
    Group,
    /// Present in the file but not used.
    Ignore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
}

/// Column kinds plus the value mappings for the label and group columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub columns: Vec<ColumnSpec>,
    /// Label value mapped to 1. When absent the label must read as 0/1.
    #[serde(default)]
    pub positive_label: Option<String>,
    /// Group values that get their own group id, in id order.
    #[serde(default)]
    pub group_levels: Vec<String>,
    /// Whether values outside `group_levels` share one extra group.
    #[serde(default = "default_true")]
    pub group_other: bool,
}

fn default_true() -> bool {
    true
}

impl Schema {
    pub fn kind_of(&self, name: &str) -> Option<ColumnKind> {
        self.columns.iter().find(|c| c.name == name).map(|c| c.kind)
    }

    fn single(&self, kind: ColumnKind) -> Result<&str> {
        let found: Vec<&str> = self
            .columns
            .iter()
            .filter(|c| c.kind == kind)
            .map(|c| c.name.as_str())
            .collect();
        match found.as_slice() {
            [one] => Ok(one),
            _ => Err(Error::Schema(format!(
                "expected exactly one {kind:?} column, found {}",
                found.len()
            ))),
        }
    }

    pub fn label_column(&self) -> Result<&str> {
        self.single(ColumnKind::Label)
    }

    pub fn group_column(&self) -> Result<&str> {
        self.single(ColumnKind::Group)
    }

    pub fn num_groups(&self) -> usize {
        self.group_levels.len() + usize::from(self.group_other)
    }

    pub fn group_names(&self) -> Vec<String> {
        let mut names = self.group_levels.clone();
        if self.group_other {
            names.push("other".to_string());
        }
        names
    }

    /// Maps a raw group value to its id.
    pub fn group_id(&self, value: &str) -> Result<usize> {
        match self.group_levels.iter().position(|l| l == value) {
            Some(i) => Ok(i),
            None if self.group_other => Ok(self.group_levels.len()),
            None => Err(Error::Schema(format!("unknown group value {value:?}"))),
        }
    }

    /// Maps a raw label cell to {0, 1}.
    pub fn label_value(&self, cell: &Cell) -> Result<u8> {
        let text = cell.to_string();
        if let Some(pos) = &self.positive_label {
            return Ok(u8::from(&text == pos));
        }
        match text.as_str() {
            "0" | "0.0" | "false" | "False" => Ok(0),
            "1" | "1.0" | "true" | "True" => Ok(1),
            other => Err(Error::Schema(format!(
                "label value {other:?} is not binary and no positive_label is set"
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.label_column()?;
        self.group_column()?;
        let mut seen = BTreeSet::new();
        for c in &self.columns {
            if !seen.insert(c.name.as_str()) {
                return Err(Error::Schema(format!("duplicate column `{}`", c.name)));
            }
        }
        if self.num_groups() < 2 {
            return Err(Error::Schema("need at least two groups".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Text(String),
}

impl std::fmt::Display for Cell {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Cell::Num(v) => write!(f, "{v}"),
            Cell::Text(s) => f.write_str(s),
        }
    }
}

impl Cell {
    pub fn as_num(&self) -> Option<f64> {
        match self {
            Cell::Num(v) => Some(*v),
            Cell::Text(_) => None,
        }
    }
}

/// Parsed CSV contents, one cell per column per row.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub columns: Vec<String>,
    pub kinds: Vec<ColumnKind>,
    pub rows: Vec<Vec<Cell>>,
}

impl RawTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn column(&self, idx: usize) -> impl Iterator<Item = &Cell> {
        self.rows.iter().map(move |r| &r[idx])
    }
}

/// Reads a headed CSV file. Every header name must appear in the schema and
/// vice versa; numeric cells are parsed as reals.
pub fn load_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<RawTable> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, schema)
}

/// [`load_csv`] over any reader.
pub fn read_csv<R: std::io::Read>(reader: R, schema: &Schema) -> Result<RawTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();

    let header_set: BTreeSet<&str> = header.iter().map(String::as_str).collect();
    let schema_set: BTreeSet<&str> = schema.columns.iter().map(|c| c.name.as_str()).collect();
    if header_set != schema_set {
        let missing: Vec<_> = schema_set.difference(&header_set).collect();
        let extra: Vec<_> = header_set.difference(&schema_set).collect();
        return Err(Error::Schema(format!(
            "header does not match schema (missing {missing:?}, unexpected {extra:?})"
        )));
    }
    let kinds: Vec<ColumnKind> = header
        .iter()
        .map(|h| schema.kind_of(h).expect("checked above"))
        .collect();

    let mut rows = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        // 1-based data row numbers, header excluded.
        let row = i + 1;
        if record.len() != header.len() {
            return Err(Error::RaggedRow {
                row,
                expected: header.len(),
                found: record.len(),
            });
        }
        let mut cells = Vec::with_capacity(header.len());
        for ((value, kind), name) in record.iter().zip(&kinds).zip(&header) {
            let cell = if *kind == ColumnKind::Numeric {
                let v: f64 = value.parse().map_err(|_| Error::BadNumber {
                    row,
                    column: name.clone(),
                    value: value.to_string(),
                })?;
                if !v.is_finite() {
                    return Err(Error::BadNumber {
                        row,
                        column: name.clone(),
                        value: value.to_string(),
                    });
                }
                Cell::Num(v)
            } else {
                Cell::Text(value.to_string())
            };
            cells.push(cell);
        }
        rows.push(cells);
    }
    Ok(RawTable {
        columns: header,
        kinds,
        rows,
    })
}
