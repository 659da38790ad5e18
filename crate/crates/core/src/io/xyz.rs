use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::pointset::{PointCloud, Point3};
use crate::{Error, Result};

/// Parses ASCII `x y z [features...]` lines; `#` lines and blank lines are skipped.
pub fn parse_xyz(text: &str, path: &Path) -> Result<PointCloud> {
    let mut coords: Vec<Point3> = Vec::new();
    let mut feats: Vec<f64> = Vec::new();
    let mut width: Option<usize> = None;
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let err = |msg: String| Error::Parse { path: path.to_path_buf(), line: line_no, msg };
        let values = trimmed
            .split_whitespace()
            .map(|tok| tok.parse::<f64>().map_err(|_| err(format!("'{tok}' is not a number"))))
            .collect::<Result<Vec<f64>>>()?;
        if values.len() < 3 {
            return Err(err(format!("expected at least 3 columns, found {}", values.len())));
        }
        match width {
            None => width = Some(values.len()),
            Some(w) if w != values.len() => {
                return Err(err(format!("expected {w} columns, found {}", values.len())))
            }
            _ => {}
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(err(format!("non-finite value {v}")));
        }
        coords.push([values[0], values[1], values[2]]);
        feats.extend_from_slice(&values[3..]);
    }
    if coords.is_empty() {
        return Err(Error::InvalidInput(format!("{} contains no points", path.display())));
    }
    let channels = width.unwrap_or(3) - 3;
    let features = (channels > 0)
        .then(|| Array2::from_shape_vec((coords.len(), channels), feats).expect("row lengths checked"));
    PointCloud::with_attributes(coords, features, None)
}

pub fn read_xyz(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    parse_xyz(&fs::read_to_string(path)?, path)
}

/// Seventeen significant digits, so every `f64` reads back exactly.
pub fn format_xyz(cloud: &PointCloud) -> String {
    let mut out = String::new();
    for (i, p) in cloud.coords().iter().enumerate() {
        let mut first = true;
        let feats = cloud.features().map(|f| f.row(i).to_vec()).unwrap_or_default();
        for v in p.iter().chain(&feats) {
            if !first {
                out.push(' ');
            }
            first = false;
            write!(out, "{v:.16e}").expect("writing to a String");
        }
        out.push('\n');
    }
    out
}

pub fn write_xyz(cloud: &PointCloud, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, format_xyz(cloud))?;
    Ok(())
}
