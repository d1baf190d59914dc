//! Reading of the small numeric CSV tables this crate consumes.

use std::io::Read;

use crate::error::{Error, Result};

/// One data row with its 1-based line number in the source.
#[derive(Debug, Clone)]
pub struct NumericRow {
    pub line: u64,
    pub values: Vec<f64>,
}

fn optional_suffix(optional: &[&str]) -> String {
    if optional.is_empty() {
        String::new()
    } else {
        format!(" (optionally followed by `{}`)", optional.join(","))
    }
}

/// Reads a headed numeric CSV whose columns are `columns`, the last
/// `optional` of which may be absent. Lines starting with `#` are skipped.
pub fn read_numeric_csv<R: Read>(
    reader: R,
    source: &str,
    columns: &[&str],
    optional: usize,
) -> Result<Vec<NumericRow>> {
    let required = columns.len() - optional;
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).flexible(true).trim(csv::Trim::All).from_reader(reader);
    let parse_err = |line: u64, field: &str, message: String| Error::Parse {
        path: source.to_string(),
        line,
        field: field.to_string(),
        message,
    };
    let headers =
        rdr.headers().map_err(|e| parse_err(e.position().map_or(1, |p| p.line()), "header", e.to_string()))?.clone();
    let header_line = headers.position().map_or(1, |p| p.line());
    if headers.len() < required || headers.len() > columns.len() {
        return Err(parse_err(
            header_line,
            "header",
            format!("expected columns `{}`{}", columns[..required].join(","), optional_suffix(&columns[required..])),
        ));
    }
    for (got, want) in headers.iter().zip(columns) {
        if got != *want {
            return Err(parse_err(header_line, want, format!("unexpected header `{got}`")));
        }
    }
    let width = headers.len();
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| parse_err(e.position().map_or(0, |p| p.line()), "record", e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != width {
            return Err(parse_err(line, "record", format!("expected {width} fields, found {}", record.len())));
        }
        let mut values = Vec::with_capacity(width);
        for (raw, name) in record.iter().zip(columns) {
            let v: f64 = raw.parse().map_err(|_| parse_err(line, name, format!("`{raw}` is not a number")))?;
            if !v.is_finite() {
                return Err(parse_err(line, name, format!("`{raw}` is not finite")));
            }
            values.push(v);
        }
        rows.push(NumericRow { line, values });
    }
    if rows.is_empty() {
        return Err(parse_err(header_line, "record", "no data rows".into()));
    }
    Ok(rows)
}
