//! Matrix text format: a `rows cols` header line followed by `rows` lines of
//! `cols` whitespace-separated decimals. Values are written with 17
//! significant digits so they round-trip exactly.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::{Error, Matrix, Result};

pub fn read_matrix<R: BufRead>(reader: R) -> Result<Matrix> {
    let mut lines = reader.lines().enumerate().filter_map(|(i, l)| match l {
        Ok(l) if l.trim().is_empty() => None,
        other => Some((i + 1, other)),
    });
    let (hline, header) = lines
        .next()
        .ok_or(Error::Parse { line: 1, msg: "empty input, expected 'rows cols'".into() })?;
    let header = header?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Parse { line: hline, msg: format!("bad header '{header}': {e}") })?;
    let [rows, cols] = dims[..] else {
        return Err(Error::Parse { line: hline, msg: format!("header must be 'rows cols', got '{header}'") });
    };
    let mut data = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        let (lno, line) = lines.next().ok_or(Error::Parse {
            line: hline + r + 1,
            msg: format!("expected {rows} data rows, found {r}"),
        })?;
        let line = line?;
        let before = data.len();
        for tok in line.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| Error::Parse { line: lno, msg: format!("invalid number '{tok}'") })?;
            data.push(v);
        }
        if data.len() - before != cols {
            return Err(Error::Parse {
                line: lno,
                msg: format!("expected {cols} values, found {}", data.len() - before),
            });
        }
    }
    if let Some((lno, _)) = lines.next() {
        return Err(Error::Parse { line: lno, msg: "trailing data after last row".into() });
    }
    Ok(Matrix::from_row_slice(rows, cols, &data))
}

pub fn write_matrix<W: Write>(mut w: W, m: &Matrix) -> Result<()> {
    writeln!(w, "{} {}", m.nrows(), m.ncols())?;
    for r in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|c| format!("{:.16e}", m[(r, c)])).collect();
        writeln!(w, "{}", row.join(" "))?;
    }
    Ok(())
}

pub fn read_matrix_file<P: AsRef<Path>>(path: P) -> Result<Matrix> {
    let f = File::open(path.as_ref())
        .map_err(|e| Error::Io(format!("{}: {e}", path.as_ref().display())))?;
    read_matrix(BufReader::new(f))
}

pub fn write_matrix_file<P: AsRef<Path>>(path: P, m: &Matrix) -> Result<()> {
    let f = File::create(path.as_ref())
        .map_err(|e| Error::Io(format!("{}: {e}", path.as_ref().display())))?;
    let mut w = BufWriter::new(f);
    write_matrix(&mut w, m)?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_simple_matrix() {
        let m = read_matrix("2 3\n1 2 3\n4 5 6.5\n".as_bytes()).unwrap();
        assert_eq!(m.shape(), (2, 3));
        assert_eq!(m[(1, 2)], 6.5);
        assert_eq!(m[(0, 1)], 2.0);
    }

    #[test]
    fn reports_line_numbers() {
        let err = read_matrix("2 2\n1 2\n3 x\n".as_bytes()).unwrap_err();
        assert_eq!(err, Error::Parse { line: 3, msg: "invalid number 'x'".into() });
        let err = read_matrix("2 2\n1 2 3\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        let err = read_matrix("2 2\n1 2\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }));
        let err = read_matrix("two 2\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    proptest! {
        #[test]
        fn write_read_round_trips_bit_exactly(
            rows in 1usize..5, cols in 1usize..5,
            vals in proptest::collection::vec(-1e6f64..1e6, 25),
        ) {
            let m = Matrix::from_fn(rows, cols, |r, c| vals[r * 5 + c] / 7.0);
            let mut buf = Vec::new();
            write_matrix(&mut buf, &m).unwrap();
            let back = read_matrix(buf.as_slice()).unwrap();
            prop_assert_eq!(back, m);
        }
    }
}
