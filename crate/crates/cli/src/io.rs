//! Text matrix files: a `rows cols` header followed by one line per row of
//! space-separated floats written with 17 significant digits.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MatrixFileError {
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{path}: {message}")]
    DimensionMismatch { path: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl MatrixFileError {
    pub fn line(&self) -> Option<usize> {
        match self {
            MatrixFileError::Parse { line, .. } => Some(*line),
            _ => None,
        }
    }
}

pub fn format_matrix(a: &DMatrix<f64>) -> String {
    let mut out = format!("{} {}\n", a.nrows(), a.ncols());
    for r in 0..a.nrows() {
        for c in 0..a.ncols() {
            if c > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{:.16e}", a[(r, c)]);
        }
        out.push('\n');
    }
    out
}

pub fn parse_matrix(text: &str, path: &str) -> Result<DMatrix<f64>, MatrixFileError> {
    let parse_err = |line: usize, message: String| MatrixFileError::Parse {
        path: path.to_string(),
        line,
        message,
    };
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let Some((hline, header)) = lines.next() else {
        return Err(parse_err(1, "missing header".into()));
    };
    let dims: Vec<&str> = header.split_whitespace().collect();
    if dims.len() != 2 {
        return Err(parse_err(
            hline,
            format!("expected 'rows cols', found '{header}'"),
        ));
    }
    let parse_dim = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| parse_err(hline, format!("invalid dimension '{s}'")))
    };
    let rows = parse_dim(dims[0])?;
    let cols = parse_dim(dims[1])?;
    if rows == 0 || cols == 0 {
        return Err(parse_err(hline, "dimensions must be positive".into()));
    }
    let mut data = DMatrix::zeros(rows, cols);
    let mut r = 0;
    for (ln, line) in lines {
        if r == rows {
            return Err(MatrixFileError::DimensionMismatch {
                path: path.to_string(),
                message: format!("more than {rows} rows (extra data on line {ln})"),
            });
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != cols {
            return Err(parse_err(
                ln,
                format!("expected {cols} entries, found {}", fields.len()),
            ));
        }
        for (c, f) in fields.iter().enumerate() {
            let v: f64 = f
                .parse()
                .map_err(|_| parse_err(ln, format!("invalid number '{f}'")))?;
            if !v.is_finite() {
                return Err(parse_err(ln, format!("non-finite entry '{f}'")));
            }
            data[(r, c)] = v;
        }
        r += 1;
    }
    if r != rows {
        return Err(MatrixFileError::DimensionMismatch {
            path: path.to_string(),
            message: format!("header declares {rows} rows, found {r}"),
        });
    }
    Ok(data)
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>, MatrixFileError> {
    let name = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|source| MatrixFileError::Io {
        path: name.clone(),
        source,
    })?;
    parse_matrix(&text, &name)
}

pub fn write_matrix(path: &Path, a: &DMatrix<f64>) -> Result<(), MatrixFileError> {
    fs::write(path, format_matrix(a)).map_err(|source| MatrixFileError::Io {
        path: path.display().to_string(),
        source,
    })
}
