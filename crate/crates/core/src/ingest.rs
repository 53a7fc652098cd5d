//! Long-format CSV input: header `i,j,y`, one comparison per row, 1-based
//! item ids, `y` the outcome of `i` against `j`.

use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};
use crate::estimate::ComparisonData;

/// Parses long-format CSV. Rows with `i > j` are stored as `(j, i, -y)`;
/// `K` is the largest item id, and every pair must be observed.
pub fn parse_long_csv<R: Read>(reader: R) -> Result<ComparisonData> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::Row {
        line: 1,
        message: e.to_string(),
    })?;
    let cols: Vec<&str> = headers.iter().collect();
    if cols != ["i", "j", "y"] {
        return Err(Error::Row {
            line: 1,
            message: format!("expected header 'i,j,y', found '{}'", cols.join(",")),
        });
    }
    let mut records = Vec::new();
    let mut k = 0;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Row {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let row_err = |message: String| Error::Row { line, message };
        let id = |idx: usize, name: &str| -> Result<usize> {
            let raw = &rec[idx];
            match raw.parse::<usize>() {
                Ok(v) if v >= 1 => Ok(v - 1),
                _ => Err(row_err(format!(
                    "{name} = '{raw}' is not a positive integer item id"
                ))),
            }
        };
        let i = id(0, "i")?;
        let j = id(1, "j")?;
        let y: f64 = rec[2]
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| row_err(format!("y = '{}' is not a finite number", &rec[2])))?;
        if i == j {
            return Err(row_err(format!("item {} compared with itself", i + 1)));
        }
        k = k.max(i + 1).max(j + 1);
        records.push((i, j, y));
    }
    if k < 3 {
        return Err(Error::InvalidDimension(k));
    }
    ComparisonData::from_records(k, &records)
}

/// Reads a long-format CSV file.
pub fn read_long_csv(path: &Path) -> Result<ComparisonData> {
    let file =
        std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_long_csv(file)
}
