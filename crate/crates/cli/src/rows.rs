//! Plain-text numeric rows: one observation per line, comma or whitespace
//! separated. Blank lines and lines starting with `#` are ignored.

use std::path::Path;

use oal_core::error::{Error, Result};
use oal_core::numerics::Matrix;

/// Parses one line; `line_no` is 1-based and only used in errors.
pub fn parse_row(line: &str, line_no: usize) -> Result<Option<Vec<f64>>> {
    let t = line.trim();
    if t.is_empty() || t.starts_with('#') {
        return Ok(None);
    }
    t.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|f| !f.is_empty())
        .enumerate()
        .map(|(j, f)| {
            let v: f64 = f.parse().map_err(|_| Error::Parse {
                row: line_no,
                column: (j + 1).to_string(),
                message: format!("not a number: {f:?}"),
            })?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::Parse {
                    row: line_no,
                    column: (j + 1).to_string(),
                    message: format!("non-finite value {f:?}"),
                })
            }
        })
        .collect::<Result<Vec<f64>>>()
        .map(Some)
}

pub fn read_matrix(path: &Path) -> Result<Matrix> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if let Some(r) = parse_row(line, i + 1)? {
            rows.push(r);
        }
    }
    if rows.is_empty() {
        return Err(Error::Shape(format!("{} holds no rows", path.display())));
    }
    Matrix::from_rows(&rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separators_and_comments() {
        assert_eq!(
            parse_row("1, 2\t3  4", 1).unwrap(),
            Some(vec![1.0, 2.0, 3.0, 4.0])
        );
        assert_eq!(parse_row("  # note", 2).unwrap(), None);
        assert_eq!(parse_row("", 3).unwrap(), None);
        match parse_row("1,x", 7) {
            Err(Error::Parse { row, column, .. }) => assert_eq!((row, column.as_str()), (7, "2")),
            other => panic!("{other:?}"),
        }
        assert!(parse_row("1,NaN", 1).is_err());
    }
}
