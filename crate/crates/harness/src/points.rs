//! Univariate point files: `point_id,x_m,y_m,value` (targets may omit `value`).

use std::path::Path;

use geokrige::{Location, SpatialDataset};

use crate::error::{HarnessError, Result};

fn column(headers: &csv::StringRecord, name: &str, path: &Path) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| HarnessError::data(format!("{}: missing column `{name}`", path.display())))
}

fn read(path: &Path, with_value: bool) -> Result<Vec<(u64, Location, f64)>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| HarnessError::data(format!("{}: {e}", path.display())))?;
    let headers = reader.headers()?.clone();
    let id = column(&headers, "point_id", path)?;
    let x = column(&headers, "x_m", path)?;
    let y = column(&headers, "y_m", path)?;
    let value = if with_value { Some(column(&headers, "value", path)?) } else { None };
    let mut out = Vec::new();
    for (k, rec) in reader.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| HarnessError::data(format!("{}:{}: bad {what}", path.display(), k + 2));
        let num = |i: usize, what: &str| -> Result<f64> {
            rec.get(i)
                .and_then(|s| s.parse::<f64>().ok())
                .filter(|v| v.is_finite())
                .ok_or_else(|| bad(what))
        };
        let pid = rec.get(id).and_then(|s| s.parse().ok()).ok_or_else(|| bad("point_id"))?;
        let v = match value {
            Some(i) => num(i, "value")?,
            None => 0.0,
        };
        out.push((pid, Location::new(num(x, "x_m")?, num(y, "y_m")?), v));
    }
    Ok(out)
}

pub fn read_point_csv(path: &Path) -> Result<SpatialDataset> {
    Ok(SpatialDataset::univariate(read(path, true)?)?)
}

/// Prediction locations; values are set to 0.
pub fn read_target_csv(path: &Path) -> Result<SpatialDataset> {
    Ok(SpatialDataset::univariate(read(path, false)?)?)
}
