//! Plain-text data fixtures.
//!
//! ```text
//! d m
//! <d rows of X, m values each>
//! <d rows of Y, m values each>
//! ```
//!
//! Values are written as `{:.16e}` so a save/load round trip is exact. Blank
//! lines and lines starting with `#` are ignored.

use std::fmt::Write as _;
use std::path::Path;

use landscape_core::datagen::DataPair;
use landscape_core::numkit::Matrix;

use crate::LabError;

pub fn to_string(pair: &DataPair) -> String {
    let mut out = format!("{} {}\n", pair.d(), pair.m());
    for m in [pair.x(), pair.y()] {
        for i in 0..m.rows() {
            let row: Vec<String> = (0..m.cols()).map(|j| format!("{:.16e}", m[(i, j)])).collect();
            let _ = writeln!(out, "{}", row.join(" "));
        }
    }
    out
}

pub fn parse(text: &str) -> Result<DataPair, LabError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let (ln, header) = lines.next().ok_or_else(|| LabError::Fixture("empty fixture".into()))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|e| LabError::Fixture(format!("line {ln}: bad header: {e}")))?;
    let [d, m] = dims[..] else {
        return Err(LabError::Fixture(format!("line {ln}: header must be `d m`")));
    };
    if d == 0 || m == 0 {
        return Err(LabError::Fixture(format!("line {ln}: dimensions must be positive")));
    }
    let mut read = |name: &str| -> Result<Matrix, LabError> {
        let mut data = vec![0.0; d * m];
        for i in 0..d {
            let (ln, line) = lines
                .next()
                .ok_or_else(|| LabError::Fixture(format!("{name}: expected {d} rows, found {i}")))?;
            let row: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| LabError::Fixture(format!("line {ln}: {e}")))?;
            if row.len() != m {
                return Err(LabError::Fixture(format!(
                    "line {ln}: {name} row has {} values, expected {m}",
                    row.len()
                )));
            }
            for (j, v) in row.into_iter().enumerate() {
                data[j * d + i] = v;
            }
        }
        Ok(Matrix::from_col_major(d, m, data)?)
    };
    let x = read("X")?;
    let y = read("Y")?;
    if let Some((ln, _)) = lines.next() {
        return Err(LabError::Fixture(format!("line {ln}: trailing content")));
    }
    Ok(DataPair::new(x, y)?)
}

pub fn save(pair: &DataPair, path: &Path) -> Result<(), LabError> {
    std::fs::write(path, to_string(pair)).map_err(|e| LabError::io(path, e))
}

pub fn load(path: &Path) -> Result<DataPair, LabError> {
    let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
    parse(&text)
}
