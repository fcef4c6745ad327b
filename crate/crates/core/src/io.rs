//! CSV ingestion and export, plus atomic file writes.
//!
//! Input files carry a header row. Columns named `time`, `date` or `t` are
//! ignored, the column named `y` is the response (the first remaining column
//! when none is named `y`), and every other column is a covariate. A file
//! without covariates gets the all-ones design.

use crate::error::{Error, Result};
use crate::quantile_fit::RegressionSample;
use std::io::{Read, Write};
use std::path::Path;

const TIME_COLUMNS: [&str; 3] = ["time", "date", "t"];

/// Shortest decimal that parses back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x}")
    }
}

pub fn read_sample_csv(path: &Path, log_transform: bool) -> Result<RegressionSample> {
    let file = std::fs::File::open(path)?;
    parse_sample_csv(file, log_transform)
}

pub fn parse_sample_csv<R: Read>(reader: R, log_transform: bool) -> Result<RegressionSample> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.to_ascii_lowercase()).collect();
    let kept: Vec<usize> = (0..header.len()).filter(|c| !TIME_COLUMNS.contains(&header[*c].as_str())).collect();
    let y_col = kept
        .iter()
        .copied()
        .find(|c| header[*c] == "y")
        .or_else(|| kept.first().copied())
        .ok_or_else(|| Error::InvalidInput("the file has no response column".into()))?;
    let x_cols: Vec<usize> = kept.into_iter().filter(|c| *c != y_col).collect();
    let p = x_cols.len().max(1);
    let mut y = Vec::new();
    let mut x = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        // data rows are numbered from 1, after the header
        let row = r + 1;
        let cell = |c: usize| -> Result<f64> {
            let s = rec.get(c).ok_or_else(|| Error::Parse { row, col: c + 1, message: "missing field".into() })?;
            let v: f64 = s.parse().map_err(|_| Error::Parse { row, col: c + 1, message: format!("not a number: {s:?}") })?;
            if !v.is_finite() {
                return Err(Error::Parse { row, col: c + 1, message: format!("not finite: {s:?}") });
            }
            Ok(v)
        };
        let mut v = cell(y_col)?;
        if log_transform {
            if v <= 0.0 {
                return Err(Error::NonPositiveForLog { row, value: v });
            }
            v = v.ln();
        }
        y.push(v);
        if x_cols.is_empty() {
            x.push(1.0);
        } else {
            for c in &x_cols {
                x.push(cell(*c)?);
            }
        }
    }
    RegressionSample::new(y, x, p)
}

/// `y,x1,…,xp` with full-precision values.
pub fn sample_csv(sample: &RegressionSample) -> String {
    let mut out = String::from("y");
    for j in 1..=sample.p() {
        out.push_str(&format!(",x{j}"));
    }
    out.push('\n');
    for i in 0..sample.n() {
        out.push_str(&fmt_f64(sample.y()[i]));
        for v in sample.row(i) {
            out.push(',');
            out.push_str(&fmt_f64(*v));
        }
        out.push('\n');
    }
    out
}

/// Rows of numbers under a header, as CSV text.
pub fn table_csv(header: &[String], rows: impl IntoIterator<Item = Vec<f64>>) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| fmt_f64(*v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Writes through a temporary file in the target directory and renames it
/// into place, so readers never see a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn time_column_and_log() {
        let text = "date,y\n".to_string() + &(1..=12).map(|i| format!("2020-01-{i:02},{}\n", i as f64 * 2.0)).collect::<String>();
        let s = parse_sample_csv(text.as_bytes(), true).unwrap();
        assert_eq!(s.p(), 1);
        assert!(s.x().iter().all(|v| *v == 1.0));
        assert_eq!(s.y()[0], 2.0f64.ln());
    }

    #[test]
    fn log_rejects_non_positive() {
        let text = "y\n".to_string() + &(0..12).map(|i| format!("{i}\n")).collect::<String>();
        assert!(matches!(parse_sample_csv(text.as_bytes(), true), Err(Error::NonPositiveForLog { row: 1, .. })));
    }

    #[test]
    fn parse_error_location() {
        let mut text = "y,x1\n".to_string() + &(0..12).map(|i| format!("{i},1\n")).collect::<String>();
        text.push_str("3,abc\n");
        match parse_sample_csv(text.as_bytes(), false) {
            Err(Error::Parse { row, col, .. }) => assert_eq!((row, col), (13, 2)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn export_round_trip_is_exact() {
        let n = 20;
        let y: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin() / 3.0).collect();
        let x: Vec<f64> = (0..n * 3).map(|i| 1.0 / (i as f64 + 0.7)).collect();
        let s = RegressionSample::new(y, x, 3).unwrap();
        let back = parse_sample_csv(sample_csv(&s).as_bytes(), false).unwrap();
        assert_eq!(back.y(), s.y());
        assert_eq!(back.x(), s.x());
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
