use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::{Error, Result};

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Reads the `rows cols` header format, one whitespace-separated row per line.
pub fn read_matrix(path: &Path) -> Result<Array2<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_matrix(&text, path)
}

pub(crate) fn parse_matrix(text: &str, path: &Path) -> Result<Array2<f64>> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| parse_err(path, 1, "empty file, expected \"rows cols\" header"))?;
    let dims: Vec<&str> = header.split_whitespace().collect();
    if dims.len() != 2 {
        return Err(parse_err(path, 1, format!("header must hold two integers, got {header:?}")));
    }
    let parse_dim = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| parse_err(path, 1, format!("invalid dimension {s:?}")))
    };
    let (rows, cols) = (parse_dim(dims[0])?, parse_dim(dims[1])?);

    let mut data = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        let lineno = r + 2;
        let line = match lines.next() {
            Some(l) => l,
            // a zero-width matrix may omit its trailing empty rows
            None if cols == 0 => break,
            None => {
                return Err(parse_err(path, lineno, format!("expected {rows} rows, file ends after {r}")));
            }
        };
        let mut count = 0;
        for tok in line.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| parse_err(path, lineno, format!("non-numeric token {tok:?}")))?;
            if !v.is_finite() {
                return Err(parse_err(path, lineno, format!("non-finite value {tok:?}")));
            }
            data.push(v);
            count += 1;
        }
        if count != cols {
            let what = if count == 0 { "blank line".to_string() } else { format!("{count} values") };
            return Err(parse_err(path, lineno, format!("expected {cols} values, found {what}")));
        }
    }
    if let Some((offset, _)) = lines.enumerate().find(|(_, l)| !l.trim().is_empty()) {
        return Err(parse_err(path, rows + 2 + offset, "unexpected data after last row"));
    }
    Ok(Array2::from_shape_vec((rows, cols), data).expect("row count checked"))
}

/// Writes with 17 significant digits so that reading back is lossless.
pub fn write_matrix(path: &Path, a: &Array2<f64>) -> Result<()> {
    let mut out = String::with_capacity(a.len() * 25 + 16);
    writeln!(out, "{} {}", a.nrows(), a.ncols()).unwrap();
    for row in a.rows() {
        let mut first = true;
        for v in row {
            if !first {
                out.push(' ');
            }
            first = false;
            write!(out, "{v:.16e}").unwrap();
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_labels(&text, path)
}

pub(crate) fn parse_labels(text: &str, path: &Path) -> Result<Vec<usize>> {
    let mut labels = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let tok = line.trim();
        let v: i64 = tok
            .parse()
            .map_err(|_| parse_err(path, i + 1, format!("expected an integer label, got {tok:?}")))?;
        if v < 1 {
            return Err(Error::Validation(format!(
                "{}:{}: labels must be >= 1, got {v}",
                path.display(),
                i + 1
            )));
        }
        labels.push(v as usize);
    }
    Ok(labels)
}

pub fn write_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let mut out = String::with_capacity(labels.len() * 4);
    for l in labels {
        writeln!(out, "{l}").unwrap();
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> &'static Path {
        Path::new("mem")
    }

    #[test]
    fn truncated_row_reports_line() {
        match parse_matrix("2 2\n1 2\n3", p()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_width_matrix() {
        let m = parse_matrix("3 0\n\n\n\n", p()).unwrap();
        assert_eq!(m.dim(), (3, 0));
        let m = parse_matrix("0 4\n", p()).unwrap();
        assert_eq!(m.dim(), (0, 4));
    }

    #[test]
    fn rejects_malformed_input() {
        for (text, line) in [
            ("", 1),
            ("2\n", 1),
            ("a 2\n", 1),
            ("1 2\n1 x\n", 2),
            ("1 2\n1 NaN\n", 2),
            ("1 2\n1 inf\n", 2),
            ("2 1\n\n1\n", 2),
            ("1 1\n1\n2\n", 3),
            ("1 1\n", 2),
        ] {
            match parse_matrix(text, p()) {
                Err(Error::Parse { line: got, .. }) => assert_eq!(got, line, "{text:?}"),
                other => panic!("{text:?}: unexpected {other:?}"),
            }
        }
    }

    #[test]
    fn labels_cases() {
        assert_eq!(parse_labels("1\n2\n2\n", p()).unwrap(), vec![1, 2, 2]);
        assert!(parse_labels("", p()).unwrap().is_empty());
        assert!(matches!(parse_labels("1\n0\n", p()), Err(Error::Validation(_))));
        assert!(matches!(parse_labels("1\n-3\n", p()), Err(Error::Validation(_))));
        assert!(matches!(parse_labels("1\nx\n", p()), Err(Error::Parse { line: 2, .. })));
    }
}
