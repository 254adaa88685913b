use std::path::Path;

use super::SeriesBatch;
use crate::error::{Error, Result};

/// Rows of a labelled series CSV: values followed by one integer label.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelledRows {
    pub length: usize,
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<i64>,
}

impl LabelledRows {
    pub fn into_batch(self) -> SeriesBatch {
        let mut b = SeriesBatch::empty(self.length);
        for r in &self.rows {
            b.push(r).expect("rows share one length");
        }
        b
    }
}

fn parse_label(s: &str) -> Option<i64> {
    let v: f64 = s.trim().parse().ok()?;
    (v.fract() == 0.0 && v.is_finite()).then_some(v as i64)
}

/// Reads a corpus CSV with a trailing integer label column.
///
/// A first row that does not parse as numbers is treated as a header. When
/// `columns` is given every row must have exactly that many cells; otherwise
/// all rows must match the first one. Errors carry the 1-based line number.
pub fn read_labelled_csv(path: &Path, columns: Option<usize>) -> Result<LabelledRows> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::Parse {
                path: path.into(),
                row: 0,
                msg: format!("{other:?}"),
            },
        })?;
    let err = |row: usize, msg: String| Error::Parse {
        path: path.into(),
        row,
        msg,
    };
    let mut width = columns;
    let mut out = LabelledRows {
        length: 0,
        rows: Vec::new(),
        labels: Vec::new(),
    };
    for (i, rec) in reader.records().enumerate() {
        let line = i + 1;
        let rec = rec.map_err(|e| err(line, e.to_string()))?;
        let cells: Vec<&str> = rec.iter().collect();
        let numeric = cells.iter().all(|c| c.trim().parse::<f64>().is_ok());
        if i == 0 && !numeric {
            width.get_or_insert(cells.len());
            continue;
        }
        let w = *width.get_or_insert(cells.len());
        if cells.len() != w {
            return Err(err(line, format!("expected {w} columns, found {}", cells.len())));
        }
        if w < 2 {
            return Err(err(line, "need at least one value and a label".into()));
        }
        let mut values = Vec::with_capacity(w - 1);
        for (c, cell) in cells[..w - 1].iter().enumerate() {
            let v = cell
                .trim()
                .parse::<f64>()
                .map_err(|_| err(line, format!("column {}: `{cell}` is not a number", c + 1)))?;
            values.push(v);
        }
        let label = parse_label(cells[w - 1]).ok_or_else(|| err(line, format!("label `{}` is not an integer", cells[w - 1])))?;
        out.rows.push(values);
        out.labels.push(label);
    }
    out.length = match width {
        Some(w) if w >= 2 => w - 1,
        _ => return Err(err(0, "file has no rows and no header".into())),
    };
    Ok(out)
}

/// Reads a corpus CSV into a batch, dropping labels.
pub fn read_series_csv(path: &Path) -> Result<SeriesBatch> {
    Ok(read_labelled_csv(path, None)?.into_batch())
}
