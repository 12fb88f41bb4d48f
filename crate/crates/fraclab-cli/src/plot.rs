//! Declarative plot descriptions for CSVs written by `run`.

use anyhow::{anyhow, bail, Context, Result};
use clap::ValueEnum;
use serde::Serialize;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PlotKind {
    Renormalization,
    Layer,
    History,
    Blowdown,
    Minimality,
    Stability,
    Rescaling,
    Sliding,
    Profile,
}

#[derive(Debug, Serialize)]
pub struct Series {
    pub label: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct Axis {
    pub label: String,
    pub log: bool,
}

#[derive(Debug, Serialize)]
pub struct PlotDescription {
    pub kind: String,
    pub title: String,
    pub x_axis: Axis,
    pub y_axis: Axis,
    pub series: Vec<Series>,
}

struct Table {
    header: Vec<String>,
    rows: Vec<csv::StringRecord>,
}

impl Table {
    fn column(&self, name: &str) -> Result<Vec<f64>> {
        let k = self
            .header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| anyhow!("schema mismatch: missing column `{name}`"))?;
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                r.get(k)
                    .unwrap_or("")
                    .parse::<f64>()
                    .with_context(|| format!("row {}: column `{name}` is not a number", i + 2))
            })
            .collect()
    }
}

fn read(path: &Path) -> Result<Table> {
    let mut rd = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let header = rd.headers()?.iter().map(str::to_string).collect();
    let rows = rd.records().collect::<std::result::Result<_, _>>()?;
    Ok(Table { header, rows })
}

fn axis(label: &str, log: bool) -> Axis {
    Axis { label: label.into(), log }
}

fn series(t: &Table, label: &str, x: &str, y: &str, abs: bool) -> Result<Series> {
    let mut y = t.column(y)?;
    if abs {
        y.iter_mut().for_each(|v| *v = v.abs());
    }
    Ok(Series { label: label.into(), x: t.column(x)?, y })
}

pub fn describe(path: &Path, kind: PlotKind) -> Result<PlotDescription> {
    let t = read(path)?;
    let (title, xa, ya, series) = match kind {
        PlotKind::Renormalization => (
            "renormalization gaps",
            axis("R", true),
            axis("gap", true),
            vec![
                series(&t, "|extension - extension_inf|", "R", "ext_gap", true)?,
                series(&t, "relative gap, extension", "R", "gap12", false)?,
                series(&t, "relative gap, extension_inf", "R", "gap13", false)?,
            ],
        ),
        PlotKind::Layer => ("layer profile", axis("x", false), axis("u", false), vec![series(&t, "u", "x", "u", false)?]),
        PlotKind::History => (
            "flow residual",
            axis("sample", false),
            axis("residual", true),
            vec![series(&t, "residual", "sample", "residual", false)?],
        ),
        PlotKind::Blowdown => (
            "blow-down distance to a step",
            axis("eps", true),
            axis("L1 distance", true),
            vec![series(&t, "L1", "eps", "l1", false)?],
        ),
        PlotKind::Minimality => (
            "energy differences",
            axis("trial", false),
            axis("difference", false),
            vec![series(&t, "difference", "trial", "difference", false)?],
        ),
        PlotKind::Stability => (
            "normalized second variation",
            axis("trial", false),
            axis("normalized form", false),
            vec![series(&t, "normalized", "trial", "normalized", false)?],
        ),
        PlotKind::Rescaling => (
            "rescaled form at zero",
            axis("eps", true),
            axis("|term|", true),
            vec![
                series(&t, "kinetic", "eps", "kinetic", false)?,
                series(&t, "|potential|", "eps", "potential", true)?,
            ],
        ),
        PlotKind::Sliding => (
            "sliding gaps",
            axis("k", false),
            axis("min gap", false),
            vec![series(&t, "min gap", "k", "min_gap", false)?],
        ),
        PlotKind::Profile => {
            ("fitted 1D profile", axis("t", false), axis("u", false), vec![series(&t, "profile", "t", "u", false)?])
        }
    };
    if series.iter().any(|s| s.x.is_empty()) {
        bail!("{} has no data rows", path.display());
    }
    let kind = kind.to_possible_value().expect("named variant").get_name().to_string();
    Ok(PlotDescription { kind, title: title.into(), x_axis: xa, y_axis: ya, series })
}
