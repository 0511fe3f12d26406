//! Matrix-oriented JSON output.
//!
//! Floats are written in scientific notation with 17 significant digits,
//! which is enough for every `f64` to parse back to the identical bit
//! pattern. Reading goes through `serde_json`, whose float parser rounds
//! correctly.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub fn fmt_f64(x: f64) -> String {
    if x == 0.0 {
        // keeps the sign of negative zero
        return if x.is_sign_negative() { "-0.0000000000000000e0".into() } else { "0.0000000000000000e0".into() };
    }
    format!("{x:.16e}")
}

pub fn fmt_vec(v: &[f64]) -> String {
    let mut s = String::from("[");
    for (i, x) in v.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        s.push_str(&fmt_f64(*x));
    }
    s.push(']');
    s
}

/// Row-major nested array.
pub fn fmt_matrix(m: &DMatrix<f64>) -> String {
    let mut s = String::from("[");
    for i in 0..m.nrows() {
        if i > 0 {
            s.push(',');
        }
        let row: Vec<f64> = m.row(i).iter().copied().collect();
        s.push_str(&fmt_vec(&row));
    }
    s.push(']');
    s
}

/// Writes the vectors as rows of a nested array.
pub fn fmt_rows(rows: &[DVector<f64>]) -> String {
    let mut s = String::from("[");
    for (i, r) in rows.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        s.push_str(&fmt_vec(r.as_slice()));
    }
    s.push(']');
    s
}

/// Builds a JSON object from already-rendered values, preserving key order.
pub fn object(fields: &[(&str, String)]) -> String {
    let mut s = String::from("{");
    for (i, (k, v)) in fields.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        let _ = write!(s, "\"{k}\":{v}");
    }
    s.push('}');
    s
}

pub fn matrix_from_rows(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Dimension(format!("{what}: ragged rows")));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}
