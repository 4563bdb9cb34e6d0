//! Deterministic CSV emission: RFC-4180-style quoting, `\n` line endings,
//! floats rendered with exactly nine significant digits so reruns produce
//! byte-identical files.

use crate::error::{Error, Result};
use std::fmt;
use std::path::Path;

/// One CSV cell.
#[derive(Debug, Clone)]
pub enum CsvValue {
    Int(i64),
    Float(f64),
    Text(String),
}

impl fmt::Display for CsvValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CsvValue::Int(v) => write!(f, "{v}"),
            CsvValue::Float(v) => write!(f, "{}", fmt_sig9(*v)),
            CsvValue::Text(s) => write!(f, "{}", escape(s)),
        }
    }
}

fn escape(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Renders a float with nine significant digits. Positional notation is used
/// for exponents in [-4, 14]; anything beyond stays scientific.
pub fn fmt_sig9(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return if v.is_nan() {
            "nan".to_string()
        } else if v > 0.0 {
            "inf".to_string()
        } else {
            "-inf".to_string()
        };
    }
    let sci = format!("{:.8e}", v);
    let (mant, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if !(-4..=14).contains(&exp) {
        return sci;
    }
    let neg = mant.starts_with('-');
    let digits: Vec<u8> = mant.bytes().filter(|b| b.is_ascii_digit()).collect();
    debug_assert_eq!(digits.len(), 9);
    let mut out = String::with_capacity(20);
    if neg {
        out.push('-');
    }
    if exp >= 8 {
        // nine or more integer digits, no fraction
        out.push_str(std::str::from_utf8(&digits).unwrap());
        for _ in 0..(exp - 8) {
            out.push('0');
        }
    } else if exp >= 0 {
        let split = (exp + 1) as usize;
        out.push_str(std::str::from_utf8(&digits[..split]).unwrap());
        out.push('.');
        out.push_str(std::str::from_utf8(&digits[split..]).unwrap());
    } else {
        out.push_str("0.");
        for _ in 0..(-exp - 1) {
            out.push('0');
        }
        out.push_str(std::str::from_utf8(&digits).unwrap());
    }
    out
}

/// Writes the header and rows; every row must match the header width.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<CsvValue>]) -> Result<()> {
    for (i, row) in rows.iter().enumerate() {
        if row.len() != header.len() {
            return Err(Error::LengthMismatch {
                what: "csv row width (see row index in file order)",
                expected: header.len(),
                got: rows[i].len(),
            });
        }
    }
    let mut text = String::new();
    text.push_str(
        &header
            .iter()
            .map(|h| escape(h))
            .collect::<Vec<_>>()
            .join(","),
    );
    text.push('\n');
    for row in rows {
        let line = row
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(",");
        text.push_str(&line);
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
