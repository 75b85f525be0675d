//! Tidy long-format data behind the figures: fitted variograms, bias against
//! the true value, and quintile reliability by true quintile.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use geokrige::EmpiricalVariogram;
use geokrige::ExponentialVariogramModel;

use crate::error::{HarnessError, Result};
use crate::format::{fmt_g, header_value, open_csv, read_header, CsvOut};
use crate::scenario::POINT_SUMMARY;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    Variogram,
    BiasByRange,
    QuintileReliability,
}

impl FromStr for PlotKind {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "variogram" => Ok(Self::Variogram),
            "bias_by_range" => Ok(Self::BiasByRange),
            "quintile_reliability" => Ok(Self::QuintileReliability),
            _ => Err(HarnessError::config(format!(
                "unknown plot kind `{s}` (variogram, bias_by_range, quintile_reliability)"
            ))),
        }
    }
}

impl PlotKind {
    pub fn file_name(&self) -> &'static str {
        match self {
            Self::Variogram => "plot_variogram.csv",
            Self::BiasByRange => "plot_bias_by_range.csv",
            Self::QuintileReliability => "plot_quintile_reliability.csv",
        }
    }
}

/// Columns `lag_center_m, gamma_hat, n_pairs, model_gamma`, one row per non-empty bin.
pub fn write_variogram_plot(
    path: &Path,
    header: &[(String, String)],
    emp: &EmpiricalVariogram,
    model: &ExponentialVariogramModel,
) -> Result<()> {
    let mut out = CsvOut::create(path, header, &["lag_center_m", "gamma_hat", "n_pairs", "model_gamma"])?;
    for b in emp.nonempty_bins() {
        out.row([
            fmt_g(b.lag_center),
            fmt_g(b.gamma.unwrap_or(f64::NAN)),
            b.n_pairs.to_string(),
            fmt_g(model.gamma(b.lag_center)),
        ])?;
    }
    out.finish()
}

fn point_summary_path(input: &Path) -> PathBuf {
    if input.is_dir() {
        input.join(POINT_SUMMARY)
    } else {
        input.to_path_buf()
    }
}

struct PointRow {
    method: String,
    true_value: String,
    true_quintile: u8,
    bias: String,
    correct: f64,
    neighbor: f64,
}

fn read_points(path: &Path) -> Result<(Vec<(String, String)>, Vec<PointRow>)> {
    let header = read_header(path)?;
    let mut reader = open_csv(path)?;
    let cols = reader.headers()?.clone();
    let idx = |name: &str| {
        cols.iter()
            .position(|c| c == name)
            .ok_or_else(|| HarnessError::data(format!("{}: missing column `{name}`", path.display())))
    };
    let (m, tv, tq, b, pc, pn) = (
        idx("method")?,
        idx("true_value")?,
        idx("true_quintile")?,
        idx("bias")?,
        idx("prop_correct_quintile")?,
        idx("prop_correct_or_neighbor")?,
    );
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let get = |i: usize| rec.get(i).unwrap_or("").to_string();
        let num = |i: usize| {
            get(i)
                .parse::<f64>()
                .map_err(|_| HarnessError::data(format!("{}: bad number in {rec:?}", path.display())))
        };
        rows.push(PointRow {
            method: get(m),
            true_value: get(tv),
            true_quintile: get(tq)
                .parse()
                .map_err(|_| HarnessError::data(format!("{}: bad quintile", path.display())))?,
            bias: get(b),
            correct: num(pc)?,
            neighbor: num(pn)?,
        });
    }
    Ok((header, rows))
}

/// Writes the plot data of `kind` built from scenario output directories
/// (or their `point_summary.csv` files), in input order.
pub fn emit_plot_data(kind: PlotKind, inputs: &[PathBuf], out: &Path) -> Result<()> {
    if inputs.is_empty() {
        return Err(HarnessError::config("emit-plot-data needs at least one input"));
    }
    let provenance = vec![(
        "inputs".to_string(),
        inputs.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(","),
    )];
    match kind {
        PlotKind::Variogram => Err(HarnessError::config(
            "variogram plot data is computed from a point file; use `emit-plot-data --kind variogram --input points.csv`",
        )),
        PlotKind::BiasByRange => {
            let mut w = CsvOut::create(
                out,
                &provenance,
                &["true_value", "mean_bias_sd_units", "range_m", "variogram_mode", "method"],
            )?;
            for input in inputs {
                let (header, rows) = read_points(&point_summary_path(input))?;
                let range = header_value(&header, "range_m").unwrap_or("").to_string();
                let mode = header_value(&header, "variogram_mode").unwrap_or("").to_string();
                for r in rows {
                    w.row([r.true_value, r.bias, range.clone(), mode.clone(), r.method])?;
                }
            }
            w.finish()
        }
        PlotKind::QuintileReliability => {
            let mut w = CsvOut::create(
                out,
                &provenance,
                &["true_quintile", "prop_correct", "prop_correct_or_neighbor", "range_m", "method"],
            )?;
            for input in inputs {
                let (header, rows) = read_points(&point_summary_path(input))?;
                let range = header_value(&header, "range_m").unwrap_or("").to_string();
                // ordered by method label then quintile
                let mut groups: BTreeMap<(String, u8), (f64, f64, usize)> = BTreeMap::new();
                for r in &rows {
                    let g = groups.entry((r.method.clone(), r.true_quintile)).or_default();
                    g.0 += r.correct;
                    g.1 += r.neighbor;
                    g.2 += 1;
                }
                for ((method, q), (c, n, k)) in groups {
                    w.row([
                        q.to_string(),
                        fmt_g(c / k as f64),
                        fmt_g(n / k as f64),
                        range.clone(),
                        method,
                    ])?;
                }
            }
            w.finish()
        }
    }
}
