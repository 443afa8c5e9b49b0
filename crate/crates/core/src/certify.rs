//! Backward recursion computing certified per-cell lower bounds on the
//! reach-avoid probability of a closed loop with BNN dynamics.
//!
//! For each time step `k = N-1, …, 0` and each safe cell `q`, weight boxes are
//! centred on posterior draws and propagated together with `q` and the
//! policy's action box. The Gaussian noise is truncated at radius `ε` per
//! coordinate, costing a factor `η` per state dimension. Boxes whose reachable
//! set only meets cells of value at least `v` certify the value `v` on the
//! posterior mass they cover.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{Label, ReachAvoidSpec};
use crate::grid::{Grid, ValueTable};
use crate::interval::{epsilon_for, ibp_weight_bounds, IbpScratch, IntervalBox};
use crate::policy::Policy;
use crate::posterior::{Posterior, WeightBox};
use crate::rng::stream;
use crate::{Error, Result};

/// Half-width of the weight boxes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum RhoW {
    /// The same half-width for every parameter.
    Absolute { value: f64 },
    /// `scale` times the per-parameter posterior standard deviation.
    PosteriorStd { scale: f64 },
}

impl Default for RhoW {
    fn default() -> Self {
        RhoW::PosteriorStd { scale: 0.5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CertifyParams {
    /// Weight boxes sampled per cell.
    pub n_s: usize,
    pub rho_w: RhoW,
    /// Probability bins. With 2 the upper bin starts at the neighbourhood
    /// maximum of the next table; above 2 the bins are uniform on `[0, 1]`.
    pub n_p: usize,
    pub eta: f64,
    /// Neighbourhood half-width; `None` means one cell along every axis.
    pub rho_x: Option<f64>,
    pub seed: u64,
    /// Fail on safe cells where the policy is undefined instead of assigning 0.
    pub strict: bool,
}

impl Default for CertifyParams {
    fn default() -> Self {
        Self { n_s: 250, rho_w: RhoW::default(), n_p: 2, eta: 0.99, rho_x: None, seed: 0, strict: false }
    }
}

impl CertifyParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_s == 0 {
            return Err(Error::Config("n_s must be at least 1".into()));
        }
        match self.rho_w {
            RhoW::Absolute { value } if !(value > 0.0) => return Err(Error::Config("rho_w must be positive".into())),
            RhoW::PosteriorStd { scale } if !(scale > 0.0) => {
                return Err(Error::Config("rho_w scale must be positive".into()))
            }
            _ => {}
        }
        if self.n_p < 2 {
            return Err(Error::Config("n_p must be at least 2".into()));
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(Error::Config("eta must lie in (0, 1)".into()));
        }
        if let Some(r) = self.rho_x {
            if !(r >= 0.0) {
                return Err(Error::Config("rho_x must be non-negative".into()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Mean of `K_0` over safe cells.
    pub avg_lower_bound: f64,
    /// Fraction of safe cells with `K_0 > 0`.
    pub coverage: f64,
    pub n_safe: usize,
}

impl Metrics {
    /// Both metrics are 1 when there is no safe cell.
    pub fn compute(k0: &ValueTable, labels: &[Label]) -> Self {
        let safe: Vec<f64> =
            labels.iter().zip(k0.values()).filter(|(l, _)| **l == Label::Safe).map(|(_, v)| *v).collect();
        if safe.is_empty() {
            return Self { avg_lower_bound: 1.0, coverage: 1.0, n_safe: 0 };
        }
        let n = safe.len() as f64;
        Self {
            avg_lower_bound: safe.iter().sum::<f64>() / n,
            coverage: safe.iter().filter(|v| **v > 0.0).count() as f64 / n,
            n_safe: safe.len(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertProvenance {
    pub params: CertifyParams,
    pub posterior_digest: String,
    pub policy_digest: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificationResult {
    /// `tables[k]` holds `K_k`; `tables[N]` is the goal indicator.
    pub tables: Vec<ValueTable>,
    pub labels: Vec<Label>,
    pub metrics: Metrics,
    pub provenance: CertProvenance,
}

impl CertificationResult {
    pub fn k0(&self) -> &ValueTable {
        &self.tables[0]
    }
}

/// Greedy pass in input order keeping each box that is disjoint from every
/// box kept before it.
pub fn disjointify(boxes: Vec<WeightBox>) -> Vec<WeightBox> {
    let mut kept: Vec<WeightBox> = Vec::with_capacity(boxes.len());
    for b in boxes {
        if !kept.iter().any(|k| k.intersects(&b)) {
            kept.push(b);
        }
    }
    kept
}

/// Shared, validated state of one certification run.
pub(crate) struct Certifier<'a> {
    pub posterior: &'a Posterior,
    pub grid: &'a Grid,
    pub labels: Vec<Label>,
    pub params: CertifyParams,
    eps: f64,
    half: Vec<f64>,
    radius: Vec<usize>,
    eta_n: f64,
}

impl<'a> Certifier<'a> {
    pub fn new(
        posterior: &'a Posterior,
        spec: &'a ReachAvoidSpec,
        grid: &'a Grid,
        params: &CertifyParams,
        action_dim: usize,
    ) -> Result<Self> {
        params.validate()?;
        let arch = posterior.arch();
        let n = grid.dim();
        if arch.output_dim() != n || arch.input_dim() != n + action_dim {
            return Err(Error::Config(format!(
                "network maps {} → {} values but the grid has {n} axes and the policy {action_dim} actions",
                arch.input_dim(),
                arch.output_dim()
            )));
        }
        let labels = grid.labels(spec)?;
        let eps = epsilon_for(params.eta, spec.sigma)?;
        let half = match params.rho_w {
            RhoW::Absolute { value } => vec![value; arch.n_params()],
            RhoW::PosteriorStd { scale } => posterior.param_std().iter().map(|s| scale * s).collect(),
        };
        let radius = match params.rho_x {
            Some(r) => grid.radius_cells(r),
            None => vec![1; n],
        };
        let eta_n = params.eta.powi(n as i32);
        Ok(Self { posterior, grid, labels, params: params.clone(), eps, half, radius, eta_n })
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// Cell box with velocity axes restricted to their clip range.
    pub fn state_box(&self, cell: usize) -> IntervalBox {
        let b = self.grid.cell_box_unchecked(cell);
        let dims = b
            .intervals()
            .iter()
            .zip(self.grid.axes())
            .map(|(iv, a)| match a.clip {
                Some((lo, hi)) => crate::interval::Interval { lo: iv.lo.clamp(lo, hi), hi: iv.hi.clamp(lo, hi) },
                None => *iv,
            })
            .collect();
        IntervalBox::new(dims).expect("clamped bounds stay ordered")
    }

    /// Certified value of `cell` at step `k` for actions in `action_box`.
    pub fn cell_value(&self, k: usize, cell: usize, next: &ValueTable, action_box: &IntervalBox) -> f64 {
        match self.labels[cell] {
            Label::Goal => return 1.0,
            Label::Unsafe => return 0.0,
            Label::Safe => {}
        }
        let input = self.state_box(cell).concat(action_box);
        let (in_lo, in_hi) = (input.lower(), input.upper());
        let arch = self.posterior.arch();
        let mut rng = stream(self.params.seed, &[k as u64, cell as u64]);
        let mut scratch = IbpScratch::default();
        let mut w = Vec::with_capacity(arch.n_params());
        let n_p = self.params.n_p;
        let v1 = if n_p == 2 { next.neighborhood_max_r(self.grid, cell, &self.radius) } else { 1.0 };
        if v1 <= 0.0 {
            return 0.0;
        }
        let mut accepted: Vec<(WeightBox, f64)> = Vec::new();
        for _ in 0..self.params.n_s {
            self.posterior.draw_into(&mut rng, &mut w);
            let lo: Vec<f64> = w.iter().zip(&self.half).map(|(c, h)| c - h).collect();
            let hi: Vec<f64> = w.iter().zip(&self.half).map(|(c, h)| c + h).collect();
            ibp_weight_bounds(arch, &lo, &hi, &in_lo, &in_hi, &mut scratch);
            let reach = IntervalBox::from_bounds(scratch.lower(), scratch.upper());
            let Ok(reach) = reach else { continue };
            let reach = reach.inflate(self.eps);
            let value = if n_p == 2 {
                (next.min_over_box(self.grid, &reach) >= v1).then_some(v1)
            } else {
                let (lo_v, hi_v) = next.range_over_box(self.grid, &reach);
                // highest bin [v_{i-1}, v_i] holding every reachable value
                (1..=n_p)
                    .rev()
                    .map(|i| ((i - 1) as f64 / n_p as f64, i as f64 / n_p as f64))
                    .find(|(a, b)| *a <= lo_v && hi_v <= *b)
                    .map(|(a, _)| a)
                    .filter(|a| *a > 0.0)
            };
            if let Some(v) = value {
                accepted.push((WeightBox::new(lo, hi).expect("ordered bounds"), v));
            }
        }
        if accepted.is_empty() {
            return 0.0;
        }
        let mut kept: Vec<(WeightBox, f64)> = Vec::with_capacity(accepted.len());
        for (b, v) in accepted {
            if !kept.iter().any(|(k, _)| k.intersects(&b)) {
                kept.push((b, v));
            }
        }
        let mut levels: Vec<f64> = kept.iter().map(|(_, v)| *v).collect();
        levels.sort_by(f64::total_cmp);
        levels.dedup();
        let total: f64 = levels
            .iter()
            .map(|&v| {
                let boxes: Vec<WeightBox> = kept.iter().filter(|(_, x)| *x == v).map(|(b, _)| b.clone()).collect();
                v * self.posterior.disjoint_union_unchecked(&boxes)
            })
            .sum();
        (self.eta_n * total).clamp(0.0, 1.0)
    }

    /// One backward step for a fixed policy.
    pub fn step(&self, k: usize, next: &ValueTable, policy: &dyn Policy) -> Result<ValueTable> {
        let values = (0..self.grid.n_cells())
            .into_par_iter()
            .map(|cell| {
                if self.labels[cell] != Label::Safe {
                    return Ok(self.cell_value(k, cell, next, &IntervalBox::point(&[])));
                }
                match policy.action_box(self.grid, cell, k) {
                    Some(ab) if ab.dim() == policy.action_dim() => Ok(self.cell_value(k, cell, next, &ab)),
                    _ if self.params.strict => Err(Error::Config(format!(
                        "policy is undefined on safe cell {:?} at step {k}",
                        self.grid.index_tuple(cell)
                    ))),
                    _ => Ok(0.0),
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        ValueTable::new(k, values)
    }

    pub fn finish(&self, mut tables: Vec<ValueTable>) -> Result<CertificationResult> {
        tables.sort_by_key(|t| t.k);
        let metrics = Metrics::compute(&tables[0], &self.labels);
        Ok(CertificationResult {
            tables,
            labels: self.labels.clone(),
            metrics,
            provenance: CertProvenance {
                params: self.params.clone(),
                posterior_digest: self.posterior.digest()?,
                policy_digest: None,
            },
        })
    }
}

/// Certified lower bounds `K_k` for `k = 0, …, N` under `policy`.
pub fn run(
    posterior: &Posterior,
    policy: &dyn Policy,
    spec: &ReachAvoidSpec,
    grid: &Grid,
    params: &CertifyParams,
) -> Result<CertificationResult> {
    let cert = Certifier::new(posterior, spec, grid, params, policy.action_dim())?;
    let n = spec.horizon;
    let mut tables = vec![ValueTable::goal_indicator(n, &cert.labels)];
    for k in (0..n).rev() {
        let next = cert.step(k, tables.last().unwrap(), policy)?;
        tables.push(next);
    }
    cert.finish(tables)
}

/// One-step certification towards a moving goal: for waypoint `j` the goal is
/// replaced by `waypoints[j]` and the horizon by 1, with the policy evaluated
/// at time `j`. Only cells next to the waypoint can receive a nonzero bound.
pub fn forward_invariance(
    posterior: &Posterior,
    policy: &dyn Policy,
    spec: &ReachAvoidSpec,
    grid: &Grid,
    params: &CertifyParams,
    waypoints: &[IntervalBox],
) -> Result<Vec<CertificationResult>> {
    waypoints
        .iter()
        .enumerate()
        .map(|(j, wp)| {
            let local = ReachAvoidSpec::new(
                wp.clone(),
                spec.bounds.clone(),
                spec.obstacles.clone(),
                1,
                spec.sigma,
                spec.eta,
                spec.velocity_clip,
            )?;
            let cert = Certifier::new(posterior, &local, grid, params, policy.action_dim())?;
            let goal = ValueTable::goal_indicator(1, &cert.labels);
            let k0 = cert.step(j, &goal, policy)?;
            cert.finish(vec![ValueTable::new(0, k0.values().to_vec())?, goal])
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Axis;
    use crate::interval::Interval;
    use crate::nn::{Activation, Architecture, WeightSet};
    use crate::policy::TabularPolicy;
    use crate::posterior::{Provenance, SamplePosterior};

    fn prov() -> Provenance {
        Provenance { method: "fixed".into(), seed: 0, details: serde_json::Value::Null }
    }

    /// `x' = x + u + b` for each bias in `biases`.
    fn drift_posterior(biases: &[f64]) -> Posterior {
        let arch = Architecture::new(vec![2, 1], Activation::Relu).unwrap();
        let samples =
            biases.iter().map(|b| WeightSet::from_layers(&arch, &[(vec![1.0, 1.0], vec![*b])]).unwrap()).collect();
        SamplePosterior::new(arch, samples, prov()).unwrap().into()
    }

    fn line_spec(goal: (f64, f64), horizon: usize, sigma: f64) -> ReachAvoidSpec {
        ReachAvoidSpec::new(
            IntervalBox::new(vec![Interval { lo: goal.0, hi: goal.1 }]).unwrap(),
            IntervalBox::from_bounds(&[0.0], &[1.0]).unwrap(),
            vec![],
            horizon,
            sigma,
            0.99,
            None,
        )
        .unwrap()
    }

    fn line_grid(n: usize) -> Grid {
        Grid::new(vec![Axis::covering(0.0, 1.0, 1.0 / n as f64).unwrap()]).unwrap()
    }

    fn params(n_s: usize) -> CertifyParams {
        CertifyParams { n_s, rho_w: RhoW::Absolute { value: 1e-6 }, ..CertifyParams::default() }
    }

    #[test]
    fn disjointify_is_greedy() {
        let b = |lo: f64, hi: f64| WeightBox::new(vec![lo], vec![hi]).unwrap();
        let same = disjointify(vec![b(0.0, 1.0), b(0.0, 1.0)]);
        assert_eq!(same.len(), 1);
        let kept = disjointify(vec![b(0.0, 1.0), b(0.5, 1.5), b(2.0, 3.0)]);
        assert_eq!(kept, vec![b(0.0, 1.0), b(2.0, 3.0)]);
        let apart = vec![b(0.0, 1.0), b(1.5, 2.0)];
        assert_eq!(disjointify(apart.clone()), apart);
    }

    #[test]
    fn one_step_into_the_goal_costs_eta() {
        // cell [0.5, 0.6] moves by 0.2 into the goal [0.6, 0.9] with margin
        let spec = line_spec((0.6, 0.9), 3, 0.01);
        let grid = line_grid(10);
        let post = drift_posterior(&[0.0]);
        let policy = TabularPolicy::constant(grid.clone(), &[0.2]).unwrap();
        let res = run(&post, &policy, &spec, &grid, &params(10)).unwrap();
        assert!(res.tables.iter().all(|t| t.get(7) == 1.0));
        let k2 = &res.tables[2];
        assert!((k2.get(5) - 0.99).abs() < 1e-15, "{}", k2.get(5));
        assert!((res.tables[1].get(5) - 0.99).abs() < 1e-15);
        // two steps away: the neighbour at 0.99 bounds the value
        assert!((res.tables[1].get(4) - 0.99 * 0.99).abs() < 1e-15);
        assert_eq!(res.tables[2].get(4), 0.0);
        assert!(res.tables.iter().flat_map(|t| t.values()).all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn all_goal_grid_has_unit_metrics() {
        let spec = line_spec((0.0, 1.0), 2, 0.01);
        let grid = line_grid(4);
        let policy = TabularPolicy::undefined(grid.clone(), 1, 1).unwrap();
        let res = run(&drift_posterior(&[0.0]), &policy, &spec, &grid, &params(3)).unwrap();
        assert_eq!(res.metrics, Metrics { avg_lower_bound: 1.0, coverage: 1.0, n_safe: 0 });
    }

    #[test]
    fn undefined_cells_are_zero_or_errors() {
        let spec = line_spec((0.6, 0.9), 2, 0.01);
        let grid = line_grid(10);
        let policy = TabularPolicy::undefined(grid.clone(), 1, 1).unwrap();
        let post = drift_posterior(&[0.0]);
        let res = run(&post, &policy, &spec, &grid, &params(3)).unwrap();
        assert_eq!(res.metrics.coverage, 0.0);
        let strict = CertifyParams { strict: true, ..params(3) };
        assert!(matches!(run(&post, &policy, &spec, &grid, &strict), Err(Error::Config(_))));
    }

    #[test]
    fn mass_counts_only_verified_samples() {
        // one of the four drifts overshoots the goal
        let spec = line_spec((0.6, 0.9), 1, 0.001);
        let grid = line_grid(10);
        let post = drift_posterior(&[0.0, 0.01, -0.01, 0.2]);
        let policy = TabularPolicy::constant(grid.clone(), &[0.2]).unwrap();
        let res = run(&post, &policy, &spec, &grid, &params(200)).unwrap();
        let expected = 0.99 * 0.75;
        assert!((res.tables[0].get(5) - expected).abs() < 1e-12, "{}", res.tables[0].get(5));
    }

    #[test]
    fn uniform_bins_weight_by_lower_edge() {
        // cells 4..=6 hold 0.6, which lies in the bin [0.5, 0.75]
        let spec = line_spec((0.7, 1.0), 1, 0.001);
        let grid = line_grid(10);
        let post = drift_posterior(&[0.0]);
        let policy = TabularPolicy::constant(grid.clone(), &[0.2]).unwrap();
        let cert = Certifier::new(&post, &spec, &grid, &CertifyParams { n_p: 4, ..params(5) }, 1).unwrap();
        let mut v = vec![0.0; 10];
        v[4..7].fill(0.6);
        v[7..].fill(1.0);
        let next = ValueTable::new(1, v).unwrap();
        let k0 = cert.step(0, &next, &policy).unwrap();
        assert!((k0.get(3) - 0.99 * 0.5).abs() < 1e-12, "{}", k0.get(3));
        // reaches values 0.6 and 1, which share no bin
        assert_eq!(k0.get(4), 0.0);
        // all reachable values are 1 but the bin [0.75, 1] is weighted by 0.75
        assert!((k0.get(6) - 0.99 * 0.75).abs() < 1e-12);
    }

    #[test]
    fn results_do_not_depend_on_thread_count() {
        let spec = line_spec((0.6, 0.9), 4, 0.02);
        let grid = line_grid(25);
        let post = drift_posterior(&[-0.01, 0.0, 0.01]);
        let policy = TabularPolicy::constant(grid.clone(), &[0.1]).unwrap();
        let p = CertifyParams { rho_w: RhoW::Absolute { value: 1e-4 }, n_s: 20, ..CertifyParams::default() };
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| run(&post, &policy, &spec, &grid, &p)).unwrap();
        let b = four.install(|| run(&post, &policy, &spec, &grid, &p)).unwrap();
        assert_eq!(a, b);
        assert!(a.metrics.coverage > 0.0);
    }

    #[test]
    fn forward_invariance_towards_a_waypoint() {
        let spec = line_spec((0.6, 0.9), 1, 0.001);
        let grid = line_grid(10);
        let post = drift_posterior(&[0.0]);
        let policy = TabularPolicy::constant(grid.clone(), &[0.15]).unwrap();
        let wp = IntervalBox::from_bounds(&[0.5], &[0.705]).unwrap();
        let res = forward_invariance(&post, &policy, &spec, &grid, &params(5), &[wp]).unwrap();
        let k0 = res[0].k0();
        assert_eq!((k0.get(5), k0.get(6)), (1.0, 1.0));
        assert!((k0.get(4) - 0.99).abs() < 1e-12);
        assert_eq!(k0.get(2), 0.0);
        // no goal cell at all
        let far = IntervalBox::from_bounds(&[0.51], &[0.58]).unwrap();
        let res = forward_invariance(&post, &policy, &spec, &grid, &params(5), &[far]).unwrap();
        assert!(res[0].k0().values().iter().all(|v| *v == 0.0));
    }
}
