//! Run summaries and file artifacts: K-table CSVs, metric JSON, PPM heatmaps
//! and rollout outcome tables.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::certify::{CertificationResult, Metrics};
use crate::env::{Label, Outcome, Trajectory};
use crate::grid::{Grid, ValueTable};
use crate::policy::{Policy, TabularPolicy};
use crate::{Error, Result};

pub const REPORT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub version: u32,
    /// Fraction of simulated trajectories that reach the goal safely.
    pub performance: Option<f64>,
    pub avg_lower_bound: Option<f64>,
    pub coverage: Option<f64>,
    pub n_safe: Option<usize>,
    /// Wall-clock seconds; only recorded on request since it varies between runs.
    pub runtime_s: Option<f64>,
    pub config_digest: String,
}

impl Report {
    pub fn new(config_digest: impl Into<String>) -> Self {
        Self {
            version: REPORT_VERSION,
            performance: None,
            avg_lower_bound: None,
            coverage: None,
            n_safe: None,
            runtime_s: None,
            config_digest: config_digest.into(),
        }
    }

    pub fn with_metrics(mut self, m: &Metrics) -> Self {
        self.avg_lower_bound = Some(m.avg_lower_bound);
        self.coverage = Some(m.coverage);
        self.n_safe = Some(m.n_safe);
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in
            [("performance", self.performance), ("avg_lower_bound", self.avg_lower_bound), ("coverage", self.coverage)]
        {
            if let Some(v) = v {
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::Format(format!("{name} = {v} is outside [0, 1]")));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        self.validate()?;
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: Self = serde_json::from_str(text)?;
        if r.version != REPORT_VERSION {
            return Err(Error::Format(format!("unsupported report version {}", r.version)));
        }
        r.validate()?;
        Ok(r)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

fn label_str(l: Label) -> &'static str {
    match l {
        Label::Goal => "goal",
        Label::Safe => "safe",
        Label::Unsafe => "unsafe",
    }
}

pub fn labels_csv(labels: &[Label]) -> String {
    let mut out = String::from("cell,label\n");
    for (i, l) in labels.iter().enumerate() {
        writeln!(out, "{i},{}", label_str(*l)).unwrap();
    }
    out
}

pub fn parse_labels_csv(text: &str) -> Result<Vec<Label>> {
    text.lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|line| match line.split(',').nth(1).map(str::trim) {
            Some("goal") => Ok(Label::Goal),
            Some("safe") => Ok(Label::Safe),
            Some("unsafe") => Ok(Label::Unsafe),
            other => Err(Error::Format(format!("bad label {other:?}"))),
        })
        .collect()
}

/// Writes `k{k}.csv`/`k{k}.json` for every step, `labels.csv` and
/// `certificate.json` (metrics and provenance) into `dir`.
pub fn write_certification(dir: &Path, grid: &Grid, result: &CertificationResult) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for t in &result.tables {
        t.save(grid, dir, &format!("k{}", t.k))?;
    }
    std::fs::write(dir.join("labels.csv"), labels_csv(&result.labels))?;
    let meta = serde_json::json!({
        "version": 1,
        "metrics": result.metrics,
        "provenance": result.provenance,
    });
    std::fs::write(dir.join("certificate.json"), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

/// Metrics recomputed from the `k0.csv` and `labels.csv` written by
/// [`write_certification`].
pub fn metrics_from_files(dir: &Path, grid: &Grid) -> Result<Metrics> {
    let k0 = ValueTable::from_csv(&std::fs::read_to_string(dir.join("k0.csv"))?, grid, 0)?;
    let labels = parse_labels_csv(&std::fs::read_to_string(dir.join("labels.csv"))?)?;
    if labels.len() != grid.n_cells() {
        return Err(Error::Format("labels do not match the grid".into()));
    }
    Ok(Metrics::compute(&k0, &labels))
}

/// Per-cell action table with columns `k, i0.., a0..`; undefined entries are
/// skipped.
pub fn action_table_csv(policy: &TabularPolicy) -> String {
    let grid = policy.grid();
    let d = grid.dim();
    let m = policy.action_dim();
    let header: Vec<String> = std::iter::once("k".to_string())
        .chain((0..d).map(|i| format!("i{i}")))
        .chain((0..m).map(|j| format!("a{j}")))
        .collect();
    let mut out = header.join(",");
    out.push('\n');
    for k in 0..policy.steps() {
        for cell in 0..grid.n_cells() {
            let Some(a) = policy.get(k, cell) else { continue };
            write!(out, "{k}").unwrap();
            for i in grid.index_tuple(cell) {
                write!(out, ",{i}").unwrap();
            }
            for v in a {
                write!(out, ",{v}").unwrap();
            }
            out.push('\n');
        }
    }
    out
}

/// Values over the first `pos_dims` axes (one or two), taking the minimum
/// over all remaining axes. Returns `(nx, ny, values)` with `x` fastest.
pub fn position_marginal(grid: &Grid, table: &ValueTable, pos_dims: usize) -> Result<(usize, usize, Vec<f64>)> {
    if table.len() != grid.n_cells() || pos_dims == 0 || pos_dims > 2 || pos_dims > grid.dim() {
        return Err(Error::invalid("heatmap needs one or two position axes of a matching grid"));
    }
    let axes = grid.axes();
    let nx = axes[0].count;
    let ny = if pos_dims == 2 { axes[1].count } else { 1 };
    let mut out = vec![f64::INFINITY; nx * ny];
    for (cell, v) in table.values().iter().enumerate() {
        let idx = grid.index_tuple(cell);
        let iy = if pos_dims == 2 { idx[1] } else { 0 };
        let slot = &mut out[iy * nx + idx[0]];
        *slot = slot.min(*v);
    }
    Ok((nx, ny, out))
}

/// Binary PPM of the position marginal, `scale` pixels per cell, with the
/// largest second coordinate on the top row. Colours run from red (0) to
/// green (1).
pub fn heatmap_ppm(grid: &Grid, table: &ValueTable, pos_dims: usize, scale: usize) -> Result<Vec<u8>> {
    if scale == 0 {
        return Err(Error::invalid("scale must be positive"));
    }
    let (nx, ny, values) = position_marginal(grid, table, pos_dims)?;
    let (w, h) = (nx * scale, ny * scale);
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    out.reserve(3 * w * h);
    for row in 0..h {
        let iy = ny - 1 - row / scale;
        for col in 0..w {
            let v = values[iy * nx + col / scale].clamp(0.0, 1.0);
            out.extend_from_slice(&[(255.0 * (1.0 - v)).round() as u8, (255.0 * v).round() as u8, 0]);
        }
    }
    Ok(out)
}

pub fn performance(trajectories: &[Trajectory]) -> Result<f64> {
    if trajectories.is_empty() {
        return Err(Error::invalid("no trajectories"));
    }
    let ok = trajectories.iter().filter(|t| t.outcome == Outcome::Reached).count();
    Ok(ok as f64 / trajectories.len() as f64)
}

/// One row per trajectory: index, outcome, number of steps and start state.
pub fn outcomes_csv(trajectories: &[Trajectory]) -> String {
    let d = trajectories.first().and_then(|t| t.states.first()).map_or(0, |s| s.len());
    let mut out = String::from("trajectory,outcome,steps");
    for i in 0..d {
        write!(out, ",x{i}").unwrap();
    }
    out.push('\n');
    for (i, t) in trajectories.iter().enumerate() {
        write!(out, "{i},{},{}", t.outcome.as_str(), t.actions.len()).unwrap();
        for v in t.states.first().into_iter().flatten() {
            write!(out, ",{v}").unwrap();
        }
        out.push('\n');
    }
    out
}
