//! CSV tables and heatmaps.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, FormatError, Result};

/// Shortest representation that parses back to the same `f64`.
pub fn format_float(v: f64) -> String {
    format!("{v}")
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut out = String::new();
    if !header.is_empty() {
        out.push_str(&header.join(","));
        out.push('\n');
    }
    for r in rows {
        out.push_str(&r.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Parses a numeric CSV, skipping a header line if its first field is not a number.
pub fn read_csv(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: std::result::Result<Vec<f64>, _> = line.split(',').map(|f| f.trim().parse::<f64>()).collect();
        match fields {
            Ok(r) => rows.push(r),
            Err(_) if i == 0 => continue,
            Err(e) => {
                return Err(FormatError::Manifest(format!("{}:{}: {e}", path.display(), i + 1)).into());
            }
        }
    }
    Ok(rows)
}

/// Symmetric grayscale scaling: `value = (gray - 127.5) / 127.5 * max_abs`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HeatmapScale {
    pub min: f64,
    pub max: f64,
    pub max_abs: f64,
    pub zero_gray: f64,
}

/// 8-bit binary PGM of a row-major `height x width` grid, scaled symmetrically about zero.
pub fn write_pgm(path: &Path, values: &[f64], height: usize, width: usize) -> Result<HeatmapScale> {
    assert_eq!(values.len(), height * width, "grid size");
    let max_abs = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(values.iter().map(|&v| {
        let t = if max_abs > 0.0 { v / max_abs } else { 0.0 };
        (127.5 + 127.5 * t).round().clamp(0.0, 255.0) as u8
    }));
    fs::write(path, out).map_err(|e| Error::io(path, e))?;
    Ok(HeatmapScale {
        min,
        max,
        max_abs,
        zero_gray: 127.5,
    })
}

/// `<stem>.csv`, `<stem>.pgm` and the `<stem>.scale.json` sidecar for a map.
/// Maps with more than two axes are laid out as `shape[0]` rows.
pub fn write_heatmap(dir: &Path, stem: &str, shape: &[usize], values: &[f64]) -> Result<HeatmapScale> {
    let (h, w) = match shape.len() {
        0 | 1 => (1, values.len()),
        _ => (shape[0], values.len() / shape[0].max(1)),
    };
    let mut csv = String::new();
    for r in 0..h {
        let row = &values[r * w..(r + 1) * w];
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                csv.push(',');
            }
            let _ = write!(csv, "{}", format_float(*v));
        }
        csv.push('\n');
    }
    let csv_path = dir.join(format!("{stem}.csv"));
    fs::write(&csv_path, csv).map_err(|e| Error::io(&csv_path, e))?;
    let scale = write_pgm(&dir.join(format!("{stem}.pgm")), values, h, w)?;
    let side = dir.join(format!("{stem}.scale.json"));
    let text = serde_json::to_string_pretty(&scale).expect("scale serializes");
    fs::write(&side, text + "\n").map_err(|e| Error::io(&side, e))?;
    Ok(scale)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_is_symmetric_about_zero() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.pgm");
        let s = write_pgm(&p, &[-2.0, 0.0, 1.0, 2.0], 2, 2).unwrap();
        assert_eq!(s.max_abs, 2.0);
        let bytes = fs::read(&p).unwrap();
        let header = b"P5\n2 2\n255\n";
        assert_eq!(&bytes[..header.len()], header);
        assert_eq!(&bytes[header.len()..], &[0, 128, 191, 255]);
    }

    #[test]
    fn csv_floats_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let vals = [0.1, -1.0 / 3.0, 1e-300, 12345.678];
        write_heatmap(dir.path(), "h", &[2, 2], &vals).unwrap();
        let back = read_csv(&dir.path().join("h.csv")).unwrap();
        assert_eq!(back, vec![vec![0.1, -1.0 / 3.0], vec![1e-300, 12345.678]]);
    }
}
