//! Plain-text matrix and subspace files.
//!
//! A matrix file holds `n` on its first line followed by `n` rows of `n`
//! whitespace-separated reals. A subspace file starts with `n k` and holds
//! `n` rows of `k` basis coordinates. Values are written with 17 significant
//! digits, which round-trips every `f64`.

use std::io::{BufRead, Write};
use std::path::Path;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::grassmann::{GrassmannError, Subspace};
use crate::spectral::{SpectralError, SymOperator};

#[derive(Debug, Error)]
pub enum FormatError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Grassmann(#[from] GrassmannError),
}

fn parse_err(line: usize, message: impl Into<String>) -> FormatError {
    FormatError::Parse { line, message: message.into() }
}

fn significant_lines<R: BufRead>(reader: R) -> Result<Vec<(usize, String)>, FormatError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if !trimmed.is_empty() && !trimmed.starts_with('#') {
            out.push((i + 1, trimmed.to_string()));
        }
    }
    Ok(out)
}

fn parse_row(line_no: usize, text: &str, width: usize) -> Result<Vec<f64>, FormatError> {
    let values = text
        .split_whitespace()
        .map(|tok| tok.parse::<f64>().map_err(|e| parse_err(line_no, format!("bad number {tok:?}: {e}"))))
        .collect::<Result<Vec<_>, _>>()?;
    if values.len() != width {
        return Err(parse_err(line_no, format!("expected {width} values, found {}", values.len())));
    }
    Ok(values)
}

fn parse_rows(lines: &[(usize, String)], rows: usize, cols: usize) -> Result<DMatrix<f64>, FormatError> {
    if lines.len() != rows {
        let at = lines.last().map(|l| l.0).unwrap_or(1);
        return Err(parse_err(at, format!("expected {rows} rows, found {}", lines.len())));
    }
    let mut m = DMatrix::zeros(rows, cols);
    for (r, (line_no, text)) in lines.iter().enumerate() {
        for (c, v) in parse_row(*line_no, text, cols)?.into_iter().enumerate() {
            m[(r, c)] = v;
        }
    }
    Ok(m)
}

fn header(lines: &[(usize, String)], fields: usize) -> Result<Vec<usize>, FormatError> {
    let (line_no, text) = lines.first().ok_or_else(|| parse_err(1, "empty file"))?;
    let dims = text
        .split_whitespace()
        .map(|t| t.parse::<usize>().map_err(|e| parse_err(*line_no, format!("bad header: {e}"))))
        .collect::<Result<Vec<_>, _>>()?;
    if dims.len() != fields {
        return Err(parse_err(*line_no, format!("header needs {fields} integers")));
    }
    Ok(dims)
}

pub fn read_matrix<R: BufRead>(reader: R) -> Result<DMatrix<f64>, FormatError> {
    let lines = significant_lines(reader)?;
    let n = header(&lines, 1)?[0];
    parse_rows(&lines[1..], n, n)
}

pub fn write_matrix<W: Write>(mut out: W, m: &DMatrix<f64>) -> Result<(), FormatError> {
    writeln!(out, "{}", m.nrows())?;
    write_rows(&mut out, m)
}

fn write_rows<W: Write>(out: &mut W, m: &DMatrix<f64>) -> Result<(), FormatError> {
    for r in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|c| format!("{:.16e}", m[(r, c)])).collect();
        writeln!(out, "{}", row.join(" "))?;
    }
    Ok(())
}

pub fn read_operator<P: AsRef<Path>>(path: P) -> Result<SymOperator<f64>, FormatError> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    Ok(SymOperator::new(read_matrix(file)?)?)
}

pub fn write_operator<P: AsRef<Path>>(path: P, op: &SymOperator<f64>) -> Result<(), FormatError> {
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_matrix(file, op.entries())
}

pub fn read_subspace<R: BufRead>(reader: R) -> Result<Subspace<f64>, FormatError> {
    let lines = significant_lines(reader)?;
    let dims = header(&lines, 2)?;
    let (n, k) = (dims[0], dims[1]);
    if k > n {
        return Err(parse_err(lines[0].0, "subspace dimension exceeds ambient dimension"));
    }
    if k == 0 {
        return Ok(Subspace::zero(n));
    }
    let basis = parse_rows(&lines[1..], n, k)?;
    Ok(Subspace::from_orthonormal(basis)?)
}

pub fn write_subspace<W: Write>(mut out: W, v: &Subspace<f64>) -> Result<(), FormatError> {
    writeln!(out, "{} {}", v.ambient_dim(), v.dim())?;
    write_rows(&mut out, v.basis())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn matrix_round_trip_is_lossless() {
        let m = DMatrix::from_fn(3, 3, |r, c| (r as f64 + 0.1).powf(c as f64 + 0.3) / 7.0);
        let mut buf = Vec::new();
        write_matrix(&mut buf, &m).unwrap();
        let back = read_matrix(buf.as_slice()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn subspace_round_trip_is_lossless() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let v = Subspace::<f64>::random(5, 2, &mut rng);
        let mut buf = Vec::new();
        write_subspace(&mut buf, &v).unwrap();
        let back = read_subspace(buf.as_slice()).unwrap();
        assert_eq!(back.basis(), v.basis());
    }

    #[test]
    fn malformed_rows_are_reported_with_line_numbers() {
        let text = "2\n1 0\n0\n";
        match read_matrix(text.as_bytes()) {
            Err(FormatError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        assert!(read_matrix("2\n1 x\n0 1\n".as_bytes()).is_err());
        assert!(read_matrix("".as_bytes()).is_err());
    }

    #[test]
    fn empty_subspace_file() {
        let v = read_subspace("3 0\n\n\n\n".as_bytes()).unwrap();
        assert_eq!((v.ambient_dim(), v.dim()), (3, 0));
    }
}
