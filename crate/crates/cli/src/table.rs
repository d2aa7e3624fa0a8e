//! CSV tables exchanged between subcommands: the dataset manifest and the
//! feature table.

use gaitasym::features::{Feature, FeatureRow};
use gaitasym::flags;
use gaitasym::sim::{Direction, Label};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// One measurement listed in a dataset manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    /// Relative to the manifest's directory unless absolute.
    pub path: String,
    pub subject: String,
    pub direction: Direction,
    pub label: Label,
    pub seed: u64,
}

pub fn write_dataset(entries: &[DatasetEntry]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for e in entries {
        w.serialize(e).map_err(|e| CliError::data("dataset manifest", e))?;
    }
    w.into_inner().map_err(|e| CliError::data("dataset manifest", e))
}

pub fn read_dataset(bytes: &[u8]) -> Result<Vec<DatasetEntry>> {
    csv::Reader::from_reader(bytes)
        .deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| CliError::data("dataset manifest", e))
}

pub const FEATURE_COLUMNS: [&str; 12] = [
    "subject",
    "direction",
    "label",
    "r",
    "r_H",
    "r_M",
    "r_L",
    "MSE",
    "MAE",
    "MSSIM",
    "delta_fmax",
    "flags",
];

/// Prefix of the flag that marks a measurement without features.
pub const REJECTED: &str = "rejected:";

/// A feature-table line: either a feature row or a rejected measurement
/// with empty feature cells and a `rejected:<reason>` flag.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub subject: String,
    pub direction: Direction,
    pub label: Label,
    pub values: Option<[f64; 8]>,
    pub flags: String,
}

impl TableRow {
    pub fn accepted(row: &FeatureRow) -> Self {
        Self {
            subject: row.subject.clone(),
            direction: row.direction,
            label: row.label,
            values: Some(row.values),
            flags: flags::join(&row.flags),
        }
    }

    pub fn rejected(subject: &str, direction: Direction, label: Label, reason: &str) -> Self {
        Self {
            subject: subject.to_string(),
            direction,
            label,
            values: None,
            flags: format!("{REJECTED}{reason}"),
        }
    }

    pub fn is_rejected(&self) -> bool {
        self.values.is_none()
    }

    /// The feature row, or `None` for a rejected measurement.
    pub fn feature_row(&self) -> Result<Option<FeatureRow>> {
        let Some(values) = self.values else {
            return Ok(None);
        };
        let flags = flags::split(&self.flags).map_err(|e| CliError::data("feature table", e))?;
        Ok(Some(FeatureRow {
            subject: self.subject.clone(),
            direction: self.direction,
            label: self.label,
            values,
            flags,
        }))
    }

    fn record(&self) -> Vec<String> {
        let mut fields = vec![
            self.subject.clone(),
            self.direction.as_str().to_string(),
            self.label.as_str().to_string(),
        ];
        match self.values {
            Some(v) => fields.extend(v.iter().map(|x| x.to_string())),
            None => fields.extend(std::iter::repeat_n(String::new(), 8)),
        }
        fields.push(self.flags.clone());
        fields
    }
}

pub fn write_feature_table(rows: &[TableRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| CliError::data("feature table", e);
    w.write_record(FEATURE_COLUMNS).map_err(err)?;
    for row in rows {
        w.write_record(row.record()).map_err(err)?;
    }
    w.into_inner().map_err(|e| CliError::data("feature table", e))
}

pub fn read_feature_table(bytes: &[u8]) -> Result<Vec<TableRow>> {
    let bad = |line: usize, m: String| CliError::Data(format!("feature table line {line}: {m}"));
    let mut reader = csv::Reader::from_reader(bytes);
    let header = reader.headers().map_err(|e| CliError::data("feature table", e))?;
    if header.iter().ne(FEATURE_COLUMNS) {
        return Err(CliError::Data(format!(
            "feature table columns must be {}",
            FEATURE_COLUMNS.join(",")
        )));
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| bad(line, e.to_string()))?;
        let direction = record[1].parse().map_err(|e| bad(line, format!("{e}")))?;
        let label = record[2].parse().map_err(|e| bad(line, format!("{e}")))?;
        let cells: Vec<&str> = (3..11).map(|k| &record[k]).collect();
        let values = if cells.iter().all(|c| c.is_empty()) {
            None
        } else {
            let mut v = [0.0; 8];
            for (f, cell) in Feature::ALL.iter().zip(&cells) {
                v[f.index()] = cell
                    .parse()
                    .map_err(|_| bad(line, format!("{f} value `{cell}` is not a number")))?;
            }
            Some(v)
        };
        let flags = record[11].to_string();
        if values.is_none() != flags.starts_with(REJECTED) {
            return Err(bad(line, "rows without features must carry a rejected flag and vice versa".into()));
        }
        rows.push(TableRow {
            subject: record[0].to_string(),
            direction,
            label,
            values,
            flags,
        });
    }
    Ok(rows)
}

/// Feature rows of the accepted measurements.
pub fn accepted_rows(table: &[TableRow]) -> Result<Vec<FeatureRow>> {
    let mut rows = Vec::new();
    for t in table {
        if let Some(r) = t.feature_row()? {
            rows.push(r);
        }
    }
    Ok(rows)
}
