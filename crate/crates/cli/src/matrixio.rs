//! Matrix CSV format: one matrix per line,
//! `id, m, v_11, v_12, ..., v_1m, v_22, ..., v_mm` — the upper triangle in
//! row-major order, symmetric by construction.

use std::path::Path;

use spdtest::{Error, Result, SpectralMatrix};

pub fn read_matrices(path: &Path) -> Result<Vec<SpectralMatrix>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() < 2 {
            return Err(Error::Parse(format!(
                "{}:{}: expected `id, m, upper-triangle...`",
                path.display(),
                i + 1
            )));
        }
        let m: usize = fields[1].parse().map_err(|_| {
            Error::Parse(format!(
                "{}:{}: invalid dimension {:?}",
                path.display(),
                i + 1,
                fields[1]
            ))
        })?;
        let need = m * (m + 1) / 2;
        if fields.len() != 2 + need {
            return Err(Error::Parse(format!(
                "{}:{}: dimension {m} needs {need} entries, found {}",
                path.display(),
                i + 1,
                fields.len() - 2
            )));
        }
        let mut rows = vec![vec![0.0f64; m]; m];
        let mut cursor = 2;
        for r in 0..m {
            for c in r..m {
                let v: f64 = fields[cursor].parse().map_err(|_| {
                    Error::Parse(format!(
                        "{}:{}: invalid entry {:?}",
                        path.display(),
                        i + 1,
                        fields[cursor]
                    ))
                })?;
                rows[r][c] = v;
                rows[c][r] = v;
                cursor += 1;
            }
        }
        out.push(SpectralMatrix::from_rows(&rows)?);
    }
    if out.is_empty() {
        return Err(Error::EmptyInput(format!(
            "no matrices in {}",
            path.display()
        )));
    }
    Ok(out)
}

pub fn write_matrices(path: &Path, matrices: &[SpectralMatrix]) -> Result<()> {
    let mut text = String::new();
    for (i, matrix) in matrices.iter().enumerate() {
        let m = matrix.dim();
        text.push_str(&format!("{i},{m}"));
        for r in 0..m {
            for c in r..m {
                text.push_str(&format!(",{:.17e}", matrix.entries()[(r, c)]));
            }
        }
        text.push('\n');
    }
    std::fs::write(path, text)?;
    Ok(())
}
