//! Reading user-supplied designs and responses.
//!
//! CSV: one row per observation, comma separated, an optional non-numeric
//! header row. Binary (`.bin`): `u64` little-endian `n`, `u64` little-endian
//! `p`, then `n·p` little-endian `f64` in row-major order.

use std::path::Path;

use anyhow::{bail, Context, Result};

use pseudoko::numerics::{Matrix, Vector};

fn is_binary(path: &Path) -> bool {
    matches!(path.extension().and_then(|e| e.to_str()), Some("bin"))
}

pub fn parse_binary(bytes: &[u8]) -> Result<Matrix> {
    if bytes.len() < 16 {
        bail!("binary input shorter than its 16-byte header");
    }
    let n = u64::from_le_bytes(bytes[0..8].try_into().expect("8 bytes")) as usize;
    let p = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let expected = n
        .checked_mul(p)
        .and_then(|c| c.checked_mul(8))
        .and_then(|c| c.checked_add(16))
        .context("binary header dimensions overflow")?;
    if bytes.len() != expected {
        bail!("binary input has {} bytes, header n = {n}, p = {p} needs {expected}", bytes.len());
    }
    let values: Vec<f64> = bytes[16..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok(Matrix::from_row_slice(n, p, &values))
}

#[cfg(test)]
pub fn encode_binary(m: &Matrix) -> Vec<u8> {
    let (n, p) = m.shape();
    let mut out = Vec::with_capacity(16 + 8 * n * p);
    out.extend_from_slice(&(n as u64).to_le_bytes());
    out.extend_from_slice(&(p as u64).to_le_bytes());
    for i in 0..n {
        for j in 0..p {
            out.extend_from_slice(&m[(i, j)].to_le_bytes());
        }
    }
    out
}

pub fn parse_csv(text: &str) -> Result<Matrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.with_context(|| format!("CSV line {}", line + 1))?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(|f| f.parse::<f64>()).collect();
        match parsed {
            Ok(v) => rows.push(v),
            // a non-numeric first row is a header
            Err(_) if line == 0 => continue,
            Err(e) => bail!("CSV line {}: {e}", line + 1),
        }
    }
    let Some(first) = rows.first() else {
        bail!("CSV input has no numeric rows");
    };
    let p = first.len();
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != p) {
        bail!("CSV row {} has {} fields, expected {p}", i + 1, r.len());
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        bail!("CSV input contains non-finite values");
    }
    let flat: Vec<f64> = rows.concat();
    Ok(Matrix::from_row_slice(rows.len(), p, &flat))
}

pub fn read_matrix(path: &Path) -> Result<Matrix> {
    if is_binary(path) {
        parse_binary(&std::fs::read(path)?)
    } else {
        parse_csv(&std::fs::read_to_string(path)?)
    }
}

/// A single column or a single row.
pub fn read_vector(path: &Path) -> Result<Vector> {
    let m = read_matrix(path)?;
    match m.shape() {
        (_, 1) => Ok(m.column(0).into_owned()),
        (1, _) => Ok(m.row(0).transpose()),
        (n, p) => bail!("response must be a single row or column, got {n} x {p}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_round_trip() {
        let m = Matrix::from_fn(3, 2, |i, j| i as f64 - 0.5 * j as f64);
        assert_eq!(parse_binary(&encode_binary(&m)).unwrap(), m);
        let mut bad = encode_binary(&m);
        bad.pop();
        assert!(parse_binary(&bad).is_err());
    }

    #[test]
    fn csv_with_and_without_header() {
        let a = parse_csv("x1,x2\n1,2\n3,4\n").unwrap();
        let b = parse_csv("1,2\n3,4").unwrap();
        assert_eq!(a, b);
        assert_eq!(a[(1, 0)], 3.0);
        assert!(parse_csv("1,2\n3\n").is_err());
        assert!(parse_csv("1,2\n3,abc\n").is_err());
        assert!(parse_csv("").is_err());
    }
}
