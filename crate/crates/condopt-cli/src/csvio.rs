//! CSV ingestion and emission. Input files need a header row; values are
//! parsed locale-independently (decimal point, no grouping separators);
//! binary columns accept the literals 0 and 1 only. Rows stream into flat
//! buffers, so per-row memory is constant before indexing.

use std::path::Path;

use condopt::{Dataset, PointMatrix};

use crate::config::{ColKind, ColumnSpec};
use crate::errors::{CliError, CliResult};

/// Read the configured columns from a CSV file.
pub fn read_dataset(
    path: &Path,
    predictors: &[ColumnSpec],
    responses: &[ColumnSpec],
) -> CliResult<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| CliError::io(&format!("opening {}", path.display()), e.into_io_error_or()))?;

    let headers = reader
        .headers()
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?
        .clone();
    let locate = |specs: &[ColumnSpec]| -> CliResult<Vec<usize>> {
        specs
            .iter()
            .map(|c| {
                headers.iter().position(|h| h == c.name).ok_or_else(|| {
                    CliError::Data(format!("{}: missing column {:?}", path.display(), c.name))
                })
            })
            .collect()
    };
    let x_cols = locate(predictors)?;
    let y_cols = locate(responses)?;

    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let row = row_idx + 1;
        let push = |cols: &[usize], specs: &[ColumnSpec], out: &mut Vec<f64>| -> CliResult<()> {
            for (&c, spec) in cols.iter().zip(specs) {
                let raw = record.get(c).ok_or_else(|| {
                    CliError::Data(format!("row {row}: missing field {:?}", spec.name))
                })?;
                let v = parse_value(raw, spec, row)?;
                out.push(v);
            }
            Ok(())
        };
        push(&x_cols, predictors, &mut xs)?;
        push(&y_cols, responses, &mut ys)?;
    }
    let x = PointMatrix::new(predictors.len(), xs).map_err(CliError::from)?;
    let y = PointMatrix::new(responses.len(), ys).map_err(CliError::from)?;
    Dataset::new(x, y).map_err(CliError::from)
}

fn parse_value(raw: &str, spec: &ColumnSpec, row: usize) -> CliResult<f64> {
    let raw = raw.trim();
    match spec.kind {
        ColKind::Binary => match raw {
            "0" => Ok(0.0),
            "1" => Ok(1.0),
            other => Err(CliError::Data(format!(
                "row {row}, column {:?}: binary columns accept 0 or 1, got {other:?}",
                spec.name
            ))),
        },
        ColKind::Continuous => raw.parse::<f64>().map_err(|_| {
            CliError::Data(format!(
                "row {row}, column {:?}: unparsable number {raw:?}",
                spec.name
            ))
        }),
    }
}

/// Write rows with a header, each value in shortest round-trip form.
pub fn write_csv(path: &Path, header: &[String], rows: impl Iterator<Item = Vec<f64>>) -> CliResult<()> {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        let mut first = true;
        for v in row {
            if !first {
                out.push(',');
            }
            first = false;
            out.push_str(&format!("{v}"));
        }
        out.push('\n');
    }
    crate::atomic_write(path, out.as_bytes())
}

trait IntoIoError {
    fn into_io_error_or(self) -> std::io::Error;
}

impl IntoIoError for csv::Error {
    fn into_io_error_or(self) -> std::io::Error {
        match self.into_kind() {
            csv::ErrorKind::Io(e) => e,
            other => std::io::Error::other(format!("{other:?}")),
        }
    }
}
