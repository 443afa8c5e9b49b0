//! Hyperrectangular state-space partition, cell labels and value tables.
//!
//! Cells are numbered row-major with the last axis varying fastest. Along
//! each axis cell `i` covers `[lo + i·w, lo + (i+1)·w)`; the upper edge of the
//! last cell belongs to it as well.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::env::{Label, ReachAvoidSpec};
use crate::interval::{Interval, IntervalBox};
use crate::{Error, Result};

/// Relative slack, in units of one cell, used when mapping box edges to
/// cell indices so that rounding never drops a touched cell.
const INDEX_SLACK: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub lo: f64,
    pub width: f64,
    pub count: usize,
    /// Values are clamped into this range before assignment (velocity axes).
    #[serde(default)]
    pub clip: Option<(f64, f64)>,
}

impl Axis {
    /// Covers `[lo, hi]` with cells of `width`. When the range is not a whole
    /// number of cells the last cell extends past `hi`.
    pub fn covering(lo: f64, hi: f64, width: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) || !(width > 0.0) || !width.is_finite() {
            return Err(Error::invalid(format!("bad axis [{lo}, {hi}] with width {width}")));
        }
        let count = (((hi - lo) / width) - 1e-9).ceil().max(1.0) as usize;
        Ok(Self { lo, width, count, clip: None })
    }

    pub fn hi(&self) -> f64 {
        self.lo + self.count as f64 * self.width
    }

    fn index(&self, x: f64) -> Option<usize> {
        let x = match self.clip {
            Some((a, b)) => x.clamp(a, b),
            None => x,
        };
        if !(x >= self.lo && x <= self.hi()) {
            return None;
        }
        Some((((x - self.lo) / self.width).floor() as usize).min(self.count - 1))
    }

    /// Index range of cells sharing a point with `[a, b]` under the half-open
    /// assignment, or `None` when part of the interval leaves the axis.
    fn touched(&self, iv: Interval) -> Option<(usize, usize)> {
        let (a, b) = match self.clip {
            Some((c0, c1)) => (iv.lo.clamp(c0, c1), iv.hi.clamp(c0, c1)),
            None => (iv.lo, iv.hi),
        };
        if !(a >= self.lo && b <= self.hi()) {
            return None;
        }
        let first = ((a - self.lo) / self.width - INDEX_SLACK).floor().max(0.0) as usize;
        let last = ((b - self.lo) / self.width + INDEX_SLACK).floor() as usize;
        Some((first.min(self.count - 1), last.min(self.count - 1)))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    axes: Vec<Axis>,
}

impl Grid {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::invalid("a grid needs at least one axis"));
        }
        for a in &axes {
            if a.count == 0 || !(a.width > 0.0) || !a.lo.is_finite() {
                return Err(Error::invalid("axes need a finite origin, positive width and count"));
            }
        }
        let total = axes.iter().try_fold(1usize, |acc, a| acc.checked_mul(a.count));
        if total.is_none_or(|t| t > 50_000_000) {
            return Err(Error::invalid("grid has too many cells"));
        }
        Ok(Self { axes })
    }

    /// Grid over `spec.bounds` (or `window` when given) for the positions, and
    /// over the velocity clip range for the remaining `state_dim - d`
    /// coordinates.
    pub fn for_spec(
        spec: &ReachAvoidSpec,
        state_dim: usize,
        position_width: f64,
        velocity_width: f64,
        window: Option<&IntervalBox>,
    ) -> Result<Self> {
        let d = spec.position_dim();
        if state_dim < d {
            return Err(Error::invalid("state dimension is smaller than the position dimension"));
        }
        let region = window.unwrap_or(&spec.bounds);
        if region.dim() != d {
            return Err(Error::invalid("grid window must cover the position coordinates"));
        }
        let mut axes = Vec::with_capacity(state_dim);
        for iv in region.intervals() {
            axes.push(Axis::covering(iv.lo, iv.hi, position_width)?);
        }
        for _ in d..state_dim {
            let (lo, hi) =
                spec.velocity_clip.ok_or_else(|| Error::Config("velocity axes need a velocity clip range".into()))?;
            let mut axis = Axis::covering(lo, hi, velocity_width)?;
            axis.clip = Some((lo, hi));
            axes.push(axis);
        }
        Self::new(axes)
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn n_cells(&self) -> usize {
        self.axes.iter().map(|a| a.count).product()
    }

    pub fn widths(&self) -> Vec<f64> {
        self.axes.iter().map(|a| a.width).collect()
    }

    pub fn index_tuple(&self, cell: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        let mut rest = cell;
        for (slot, a) in idx.iter_mut().zip(&self.axes).rev() {
            *slot = rest % a.count;
            rest /= a.count;
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> Result<usize> {
        if idx.len() != self.dim() || idx.iter().zip(&self.axes).any(|(i, a)| *i >= a.count) {
            return Err(Error::invalid(format!("cell {idx:?} lies outside the grid")));
        }
        Ok(idx.iter().zip(&self.axes).fold(0, |acc, (i, a)| acc * a.count + i))
    }

    /// The cell containing `x`, or `None` for the exterior.
    pub fn z(&self, x: &[f64]) -> Option<usize> {
        if x.len() != self.dim() {
            return None;
        }
        let mut flat = 0;
        for (v, a) in x.iter().zip(&self.axes) {
            flat = flat * a.count + a.index(*v)?;
        }
        Some(flat)
    }

    /// Closed hyperrectangle of a cell.
    pub fn cell_box(&self, cell: usize) -> Result<IntervalBox> {
        if cell >= self.n_cells() {
            return Err(Error::invalid(format!("cell {cell} lies outside the grid")));
        }
        Ok(self.cell_box_unchecked(cell))
    }

    pub(crate) fn cell_box_unchecked(&self, cell: usize) -> IntervalBox {
        let dims = self
            .index_tuple(cell)
            .iter()
            .zip(&self.axes)
            .map(|(&i, a)| Interval { lo: a.lo + i as f64 * a.width, hi: a.lo + (i + 1) as f64 * a.width })
            .collect();
        IntervalBox::new(dims).expect("cell bounds are ordered")
    }

    pub fn cell_center(&self, cell: usize) -> Vec<f64> {
        self.index_tuple(cell).iter().zip(&self.axes).map(|(&i, a)| a.lo + (i as f64 + 0.5) * a.width).collect()
    }

    /// Calls `f` with every flat index in the product of inclusive ranges,
    /// stopping early when `f` returns `false`.
    pub(crate) fn for_each_in(&self, ranges: &[(usize, usize)], mut f: impl FnMut(usize) -> bool) {
        let n = ranges.len();
        let mut idx: Vec<usize> = ranges.iter().map(|r| r.0).collect();
        loop {
            let flat = idx.iter().zip(&self.axes).fold(0, |acc, (i, a)| acc * a.count + i);
            if !f(flat) {
                return;
            }
            let mut d = n;
            loop {
                if d == 0 {
                    return;
                }
                d -= 1;
                if idx[d] < ranges[d].1 {
                    idx[d] += 1;
                    break;
                }
                idx[d] = ranges[d].0;
            }
        }
    }

    /// Inclusive index ranges of the cells sharing a point with `b`, or `None`
    /// when `b` leaves the grid.
    pub fn touched_ranges(&self, b: &IntervalBox) -> Option<Vec<(usize, usize)>> {
        if b.dim() != self.dim() {
            return None;
        }
        b.intervals().iter().zip(&self.axes).map(|(iv, a)| a.touched(*iv)).collect()
    }

    /// Index radius per axis for a neighbourhood of half-width `rho_x`.
    pub fn radius_cells(&self, rho_x: f64) -> Vec<usize> {
        self.axes.iter().map(|a| (rho_x / a.width - INDEX_SLACK).ceil().max(0.0) as usize).collect()
    }

    /// Position-space labels of every cell: goal only when the whole cell lies
    /// in the goal, unsafe when it touches an obstacle or leaves the bounds.
    pub fn labels(&self, spec: &ReachAvoidSpec) -> Result<Vec<Label>> {
        if spec.position_dim() > self.dim() {
            return Err(Error::Config("grid has fewer axes than position coordinates".into()));
        }
        Ok((0..self.n_cells()).map(|c| self.classify_cell_unchecked(spec, c)).collect())
    }

    pub fn classify_cell(&self, spec: &ReachAvoidSpec, cell: usize) -> Result<Label> {
        if spec.position_dim() > self.dim() {
            return Err(Error::Config("grid has fewer axes than position coordinates".into()));
        }
        self.cell_box(cell)?;
        Ok(self.classify_cell_unchecked(spec, cell))
    }

    fn classify_cell_unchecked(&self, spec: &ReachAvoidSpec, cell: usize) -> Label {
        let pos = self.cell_box_unchecked(cell).project(spec.position_dim());
        // edges computed as lo + i * w may overshoot a region boundary by rounding
        let slack: Vec<f64> = self.axes.iter().map(|a| INDEX_SLACK * a.width).collect();
        let inner = IntervalBox::new(
            pos.intervals().iter().zip(&slack).map(|(iv, s)| Interval { lo: iv.lo + s, hi: iv.hi - s }).collect(),
        )
        .expect("cells are wider than the slack");
        if spec.goal.contains_box(&inner) {
            Label::Goal
        } else if !spec.bounds.contains_box(&inner) || spec.obstacles.iter().any(|o| o.intersects_box(&pos)) {
            Label::Unsafe
        } else {
            Label::Safe
        }
    }
}

/// Serializable grid recipe: cell widths and optional windows restricting
/// the gridded position and velocity ranges.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub position_width: f64,
    pub velocity_width: f64,
    /// Per position axis `[lo, hi]`; defaults to the workspace bounds.
    pub position_window: Option<Vec<[f64; 2]>>,
    /// Shared by every velocity axis; defaults to the velocity clip range.
    pub velocity_window: Option<[f64; 2]>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { position_width: 0.02, velocity_width: 0.08, position_window: None, velocity_window: None }
    }
}

impl GridSpec {
    pub fn build(&self, spec: &ReachAvoidSpec, state_dim: usize) -> Result<Grid> {
        let window = match &self.position_window {
            Some(w) => Some(IntervalBox::new(w.iter().map(|[a, b]| Interval::new(*a, *b)).collect::<Result<_>>()?)?),
            None => None,
        };
        let mut grid = Grid::for_spec(spec, state_dim, self.position_width, self.velocity_width, window.as_ref())?;
        if let Some([lo, hi]) = self.velocity_window {
            let d = spec.position_dim();
            for axis in grid.axes.iter_mut().skip(d) {
                let clip = axis.clip;
                *axis = Axis::covering(lo, hi, self.velocity_width)?;
                axis.clip = clip;
            }
        }
        Ok(grid)
    }
}

/// Per-cell probabilities for one time step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueTable {
    pub k: usize,
    values: Vec<f64>,
}

impl ValueTable {
    pub fn new(k: usize, values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!("table entry {v} lies outside [0, 1]")));
        }
        Ok(Self { k, values })
    }

    /// 1 on goal cells and 0 elsewhere.
    pub fn goal_indicator(k: usize, labels: &[Label]) -> Self {
        Self { k, values: labels.iter().map(|l| if *l == Label::Goal { 1.0 } else { 0.0 }).collect() }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, cell: usize) -> f64 {
        self.values[cell]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Largest value over the cells within `rho_x` of `cell`, measured as an
    /// index radius of `⌈rho_x / width⌉` per axis.
    pub fn neighborhood_max(&self, grid: &Grid, cell: usize, rho_x: f64) -> f64 {
        self.neighborhood_max_r(grid, cell, &grid.radius_cells(rho_x))
    }

    pub(crate) fn neighborhood_max_r(&self, grid: &Grid, cell: usize, radius: &[usize]) -> f64 {
        let idx = grid.index_tuple(cell);
        let ranges: Vec<(usize, usize)> = idx
            .iter()
            .zip(radius)
            .zip(grid.axes())
            .map(|((&i, &r), a)| (i.saturating_sub(r), (i + r).min(a.count - 1)))
            .collect();
        let mut best = 0.0f64;
        grid.for_each_in(&ranges, |c| {
            best = best.max(self.values[c]);
            best < 1.0
        });
        best
    }

    /// Smallest value over every cell sharing a point with `b`; 0 when `b`
    /// leaves the grid.
    pub fn min_over_box(&self, grid: &Grid, b: &IntervalBox) -> f64 {
        let Some(ranges) = grid.touched_ranges(b) else {
            return 0.0;
        };
        self.min_over_ranges(grid, &ranges)
    }

    /// Smallest and largest value over the cells sharing a point with `b`.
    pub(crate) fn range_over_box(&self, grid: &Grid, b: &IntervalBox) -> (f64, f64) {
        let Some(ranges) = grid.touched_ranges(b) else {
            return (0.0, 1.0);
        };
        let (mut lo, mut hi) = (1.0f64, 0.0f64);
        grid.for_each_in(&ranges, |c| {
            lo = lo.min(self.values[c]);
            hi = hi.max(self.values[c]);
            true
        });
        (lo, hi)
    }

    pub(crate) fn min_over_ranges(&self, grid: &Grid, ranges: &[(usize, usize)]) -> f64 {
        let mut m = 1.0f64;
        grid.for_each_in(ranges, |c| {
            m = m.min(self.values[c]);
            m > 0.0
        });
        m
    }

    /// One row per cell: index tuple, cell centre, value.
    pub fn to_csv(&self, grid: &Grid) -> Result<String> {
        if self.len() != grid.n_cells() {
            return Err(Error::invalid("table does not match the grid"));
        }
        let d = grid.dim();
        let mut out = String::new();
        let header: Vec<String> = (0..d)
            .map(|i| format!("i{i}"))
            .chain((0..d).map(|i| format!("c{i}")))
            .chain(std::iter::once("p".to_string()))
            .collect();
        out.push_str(&header.join(","));
        out.push('\n');
        for (cell, v) in self.values.iter().enumerate() {
            for i in grid.index_tuple(cell) {
                write!(out, "{i},").unwrap();
            }
            for c in grid.cell_center(cell) {
                write!(out, "{c},").unwrap();
            }
            writeln!(out, "{v}").unwrap();
        }
        Ok(out)
    }

    pub fn from_csv(text: &str, grid: &Grid, k: usize) -> Result<Self> {
        let d = grid.dim();
        let mut values = vec![f64::NAN; grid.n_cells()];
        for (line_no, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 2 * d + 1 {
                return Err(Error::Format(format!("line {}: expected {} fields", line_no + 1, 2 * d + 1)));
            }
            let idx = fields[..d]
                .iter()
                .map(|f| f.trim().parse::<usize>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Format(format!("line {}: {e}", line_no + 1)))?;
            let p: f64 =
                fields[2 * d].trim().parse().map_err(|e| Error::Format(format!("line {}: {e}", line_no + 1)))?;
            values[grid.flat_index(&idx)?] = p;
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::Format("table CSV does not cover every cell".into()));
        }
        Self::new(k, values)
    }

    /// Writes `<stem>.csv` plus a `<stem>.json` sidecar holding the grid.
    pub fn save(&self, grid: &Grid, dir: &Path, stem: &str) -> Result<()> {
        std::fs::write(dir.join(format!("{stem}.csv")), self.to_csv(grid)?)?;
        let meta = serde_json::json!({ "version": 1, "k": self.k, "grid": grid });
        std::fs::write(dir.join(format!("{stem}.json")), serde_json::to_string_pretty(&meta)?)?;
        Ok(())
    }
}
