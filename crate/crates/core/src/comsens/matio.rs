//! Plain-text matrix format.
//!
//! ```text
//! <rows> <cols> complex
//! <re> <im> <re> <im> ...   (one line per row)
//! ```
//!
//! Values are written with 17 significant digits so a round trip is exact.

use num_complex::Complex64;

use super::model::CMatrix;
use crate::error::{Error, Result};

pub fn write_matrix(m: &CMatrix) -> String {
    let mut out = format!("{} {} complex\n", m.nrows(), m.ncols());
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols())
            .map(|j| format!("{:.16e} {:.16e}", m[(i, j)].re, m[(i, j)].im))
            .collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

pub fn read_matrix(text: &str) -> Result<CMatrix> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
    let header = lines.next().ok_or_else(|| Error::Parse("empty matrix file".into()))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    let (rows, cols) = match fields.as_slice() {
        [r, c, "complex"] => (
            r.parse::<usize>().map_err(|e| Error::Parse(format!("rows: {e}")))?,
            c.parse::<usize>().map_err(|e| Error::Parse(format!("cols: {e}")))?,
        ),
        _ => return Err(Error::Parse(format!("bad matrix header {header:?}"))),
    };
    let mut m = CMatrix::zeros(rows, cols);
    for i in 0..rows {
        let line = lines
            .next()
            .ok_or_else(|| Error::Parse(format!("matrix ends before row {i}")))?;
        let vals = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|e| Error::Parse(format!("row {i}: {e}"))))
            .collect::<Result<Vec<f64>>>()?;
        if vals.len() != 2 * cols {
            return Err(Error::Parse(format!(
                "row {i} has {} numbers, expected {}",
                vals.len(),
                2 * cols
            )));
        }
        for j in 0..cols {
            m[(i, j)] = Complex64::new(vals[2 * j], vals[2 * j + 1]);
        }
    }
    if lines.next().is_some() {
        return Err(Error::Parse("trailing data after matrix rows".into()));
    }
    Ok(m)
}
