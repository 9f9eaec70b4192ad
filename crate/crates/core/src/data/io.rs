use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

use super::{Dataset, InteractionRecord};

pub const INTERACTION_HEADER: [&str; 6] =
    ["user_id", "item_id", "click", "like", "follow", "timestamp"];

fn parse_err(path: &Path, line: u64, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        kind => parse_err(path, line, format!("{kind:?}")),
    }
}

fn parse_flag(path: &Path, line: u64, column: &str, value: &str) -> Result<bool> {
    match value {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(parse_err(
            path,
            line,
            format!("{column} must be 0 or 1, got {other:?}"),
        )),
    }
}

/// Parses the interaction CSV from any reader. `path` is only used in
/// error messages.
pub fn read_interactions<R: Read>(reader: R, path: &Path) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let headers = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    let mut cols = [0usize; 6];
    for (slot, name) in cols.iter_mut().zip(INTERACTION_HEADER) {
        *slot = headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| parse_err(path, 1, format!("missing column {name:?}")))?;
    }

    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| csv_err(path, e))?;
        let line = row.position().map_or(0, |p| p.line());
        let field = |k: usize| row.get(cols[k]).unwrap_or("");
        let timestamp = field(5).parse::<u64>().map_err(|_| {
            parse_err(
                path,
                line,
                format!(
                    "timestamp must be a non-negative integer, got {:?}",
                    field(5)
                ),
            )
        })?;
        records.push(InteractionRecord {
            user_id: field(0).to_owned(),
            item_id: field(1).to_owned(),
            click: parse_flag(path, line, "click", field(2))?,
            like: parse_flag(path, line, "like", field(3))?,
            follow: parse_flag(path, line, "follow", field(4))?,
            timestamp,
        });
    }
    Ok(Dataset::from_records(records))
}

pub fn load_interactions(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_interactions(file, path)
}

pub fn write_interactions<W: Write>(ds: &Dataset, writer: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(INTERACTION_HEADER)?;
    let flag = |b: bool| if b { "1" } else { "0" };
    for r in ds.records() {
        w.write_record([
            r.user_id.as_str(),
            r.item_id.as_str(),
            flag(r.click),
            flag(r.like),
            flag(r.follow),
            &r.timestamp.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_interactions(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_interactions(ds, file).map_err(|e| csv_err(path, e))
}

/// Per-item feature rows keyed by external item id.
#[derive(Clone, Debug, PartialEq)]
pub struct ItemFeatures {
    pub ids: Vec<String>,
    pub features: Matrix,
}

impl ItemFeatures {
    /// `(dataset item index, row)` for every id the dataset knows; others
    /// are skipped.
    pub fn rows_for(&self, ds: &Dataset) -> Vec<(usize, Vec<f64>)> {
        self.ids
            .iter()
            .enumerate()
            .filter_map(|(k, id)| {
                ds.item_index(id)
                    .map(|i| (i, self.features.row(k).to_vec()))
            })
            .collect()
    }
}

/// Writes `item_id,f1,...,fd`, one row per feature row.
pub fn save_item_features(
    ids: &[impl AsRef<str>],
    features: &Matrix,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    if ids.len() != features.rows() {
        return Err(Error::Contract(format!(
            "{} ids for {} feature rows",
            ids.len(),
            features.rows()
        )));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    let mut header = vec!["item_id".to_string()];
    header.extend((1..=features.cols()).map(|k| format!("f{k}")));
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for (k, id) in ids.iter().enumerate() {
        let mut row = vec![id.as_ref().to_string()];
        // `{:?}` prints the shortest string that parses back to the same f64.
        row.extend(features.row(k).iter().map(|x| format!("{x:?}")));
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_item_features(path: impl AsRef<Path>) -> Result<ItemFeatures> {
    let path: PathBuf = path.as_ref().to_path_buf();
    let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(file);
    let headers = rdr.headers().map_err(|e| csv_err(&path, e))?.clone();
    if headers.get(0).map(str::trim) != Some("item_id") || headers.len() < 2 {
        return Err(parse_err(&path, 1, "expected header item_id,f1,...,fd"));
    }
    let d = headers.len() - 1;
    let mut ids = Vec::new();
    let mut data = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| csv_err(&path, e))?;
        let line = row.position().map_or(0, |p| p.line());
        ids.push(row[0].to_owned());
        for value in row.iter().skip(1) {
            let x: f64 = value
                .trim()
                .parse()
                .map_err(|_| parse_err(&path, line, format!("bad feature value {value:?}")))?;
            if !x.is_finite() {
                return Err(parse_err(&path, line, "feature values must be finite"));
            }
            data.push(x);
        }
    }
    let features = Matrix::new(ids.len(), d, data)?;
    Ok(ItemFeatures { ids, features })
}
