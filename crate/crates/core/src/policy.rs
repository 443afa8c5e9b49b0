//! Tabular and neural control policies, their storage, and the episodic loop
//! that learns a baseline tabular policy.

use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::container;
use crate::env::{collect_episode, CollectConfig, Label, PuckParams, ReachAvoidSpec};
use crate::grid::Grid;
use crate::interval::{ibp_fixed_bounds, IbpScratch, IntervalBox};
use crate::nn::{forward_with, glorot_prior, Activation, Architecture, ForwardScratch, WeightSet};
use crate::posterior::{hmc_fit, vi_fit, Dataset, HmcConfig, Posterior, ViConfig};
use crate::rng::stream;
use crate::{Error, Result};

const POLICY_MAGIC: &[u8; 4] = b"RCPL";

/// Control law `u_k = π_k(x_k)`.
pub trait Policy: Sync {
    fn action_dim(&self) -> usize;

    /// `None` where the policy is undefined.
    fn action(&self, x: &[f64], k: usize) -> Option<Vec<f64>>;

    /// Box containing `action(x, k)` for every `x` in the cell.
    fn action_box(&self, grid: &Grid, cell: usize, k: usize) -> Option<IntervalBox>;
}

/// One action per grid cell, optionally one table per time step. Undefined
/// entries are stored as NaN.
#[derive(Clone, Debug)]
pub struct TabularPolicy {
    grid: Grid,
    action_dim: usize,
    tables: Vec<Vec<f64>>,
}

impl PartialEq for TabularPolicy {
    fn eq(&self, other: &Self) -> bool {
        self.grid == other.grid
            && self.action_dim == other.action_dim
            && self.tables.len() == other.tables.len()
            && self
                .tables
                .iter()
                .zip(&other.tables)
                .all(|(a, b)| a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x == y || (x.is_nan() && y.is_nan())))
    }
}

impl TabularPolicy {
    /// Every cell undefined, `steps` time-indexed tables.
    pub fn undefined(grid: Grid, action_dim: usize, steps: usize) -> Result<Self> {
        if action_dim == 0 || steps == 0 {
            return Err(Error::invalid("action_dim and steps must be positive"));
        }
        let n = grid.n_cells() * action_dim;
        Ok(Self { grid, action_dim, tables: vec![vec![f64::NAN; n]; steps] })
    }

    /// The same action in every cell and step.
    pub fn constant(grid: Grid, action: &[f64]) -> Result<Self> {
        let mut p = Self::undefined(grid, action.len(), 1)?;
        for c in 0..p.grid.n_cells() {
            p.set(0, c, action)?;
        }
        Ok(p)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn steps(&self) -> usize {
        self.tables.len()
    }

    fn step_index(&self, k: usize) -> usize {
        k.min(self.tables.len() - 1)
    }

    pub fn get(&self, k: usize, cell: usize) -> Option<&[f64]> {
        let t = &self.tables[self.step_index(k)];
        let a = t.get(cell * self.action_dim..(cell + 1) * self.action_dim)?;
        (!a[0].is_nan()).then_some(a)
    }

    /// Stores `action` clamped to `[-1, 1]`.
    pub fn set(&mut self, k: usize, cell: usize, action: &[f64]) -> Result<()> {
        if action.len() != self.action_dim || cell >= self.grid.n_cells() || k >= self.tables.len() {
            return Err(Error::invalid("action, cell or step out of range"));
        }
        if action.iter().any(|a| !a.is_finite()) {
            return Err(Error::invalid("actions must be finite"));
        }
        let d = self.action_dim;
        for (slot, a) in self.tables[k][cell * d..(cell + 1) * d].iter_mut().zip(action) {
            *slot = a.clamp(-1.0, 1.0);
        }
        Ok(())
    }
}

impl Policy for TabularPolicy {
    fn action_dim(&self) -> usize {
        self.action_dim
    }

    fn action(&self, x: &[f64], k: usize) -> Option<Vec<f64>> {
        self.get(k, self.grid.z(x)?).map(|a| a.to_vec())
    }

    fn action_box(&self, grid: &Grid, cell: usize, k: usize) -> Option<IntervalBox> {
        if grid != &self.grid {
            // cells of a different grid: hull of the actions it overlaps
            let b = grid.cell_box(cell).ok()?;
            let ranges = self.grid.touched_ranges(&b)?;
            let mut hull: Option<IntervalBox> = None;
            let mut defined = true;
            self.grid.for_each_in(&ranges, |c| match self.get(k, c) {
                Some(a) => {
                    let p = IntervalBox::point(a);
                    hull = Some(match hull.take() {
                        None => p,
                        Some(h) => IntervalBox::from_bounds(
                            &h.lower().iter().zip(a).map(|(l, v)| l.min(*v)).collect::<Vec<_>>(),
                            &h.upper().iter().zip(a).map(|(u, v)| u.max(*v)).collect::<Vec<_>>(),
                        )
                        .expect("ordered"),
                    });
                    true
                }
                None => {
                    defined = false;
                    false
                }
            });
            return if defined { hull } else { None };
        }
        self.get(k, cell).map(IntervalBox::point)
    }
}

/// Per-step networks with outputs clamped to `[bounds.0, bounds.1]`. A single
/// network is shared by all steps.
#[derive(Clone, Debug, PartialEq)]
pub struct NeuralPolicy {
    arch: Architecture,
    steps: Vec<WeightSet>,
    bounds: (f64, f64),
}

impl NeuralPolicy {
    pub fn new(arch: Architecture, steps: Vec<WeightSet>) -> Result<Self> {
        if steps.is_empty() {
            return Err(Error::invalid("a neural policy needs at least one network"));
        }
        for w in &steps {
            w.check(&arch)?;
        }
        Ok(Self { arch, steps, bounds: (-1.0, 1.0) })
    }

    /// Glorot-normal initialisation, the same network at every step.
    pub fn random<R: Rng + ?Sized>(arch: Architecture, n_steps: usize, rng: &mut R) -> Result<Self> {
        let var = glorot_prior(&arch);
        let params: Vec<f64> = var
            .iter()
            .map(|v| (0.5 * v).sqrt() * rand_distr::Distribution::<f64>::sample(&rand_distr::StandardNormal, rng))
            .collect();
        let w = WeightSet::unflatten(&arch, &params)?;
        Self::new(arch, vec![w; n_steps.max(1)])
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn bounds(&self) -> (f64, f64) {
        self.bounds
    }

    pub fn n_steps(&self) -> usize {
        self.steps.len()
    }

    pub fn weights(&self, k: usize) -> &WeightSet {
        &self.steps[k.min(self.steps.len() - 1)]
    }

    pub fn set_weights(&mut self, k: usize, w: WeightSet) -> Result<()> {
        w.check(&self.arch)?;
        let slot = self.steps.get_mut(k).ok_or_else(|| Error::invalid("step out of range"))?;
        *slot = w;
        Ok(())
    }
}

impl Policy for NeuralPolicy {
    fn action_dim(&self) -> usize {
        self.arch.output_dim()
    }

    fn action(&self, x: &[f64], k: usize) -> Option<Vec<f64>> {
        if x.len() != self.arch.input_dim() {
            return None;
        }
        let mut scratch = ForwardScratch::default();
        let out = forward_with(&self.arch, self.weights(k).params(), x, &mut scratch);
        Some(out.iter().map(|v| v.clamp(self.bounds.0, self.bounds.1)).collect())
    }

    fn action_box(&self, grid: &Grid, cell: usize, k: usize) -> Option<IntervalBox> {
        let b = grid.cell_box(cell).ok()?;
        if b.dim() != self.arch.input_dim() {
            return None;
        }
        let mut scratch = IbpScratch::default();
        ibp_fixed_bounds(&self.arch, self.weights(k).params(), &b.lower(), &b.upper(), &mut scratch);
        let out = IntervalBox::from_bounds(scratch.lower(), scratch.upper()).ok()?;
        Some(out.clamp(self.bounds.0, self.bounds.1))
    }
}

/// Either policy kind, as read from a policy file.
#[derive(Clone, Debug, PartialEq)]
pub enum StoredPolicy {
    Tabular(TabularPolicy),
    Neural(NeuralPolicy),
}

impl From<TabularPolicy> for StoredPolicy {
    fn from(p: TabularPolicy) -> Self {
        StoredPolicy::Tabular(p)
    }
}

impl From<NeuralPolicy> for StoredPolicy {
    fn from(p: NeuralPolicy) -> Self {
        StoredPolicy::Neural(p)
    }
}

impl Policy for StoredPolicy {
    fn action_dim(&self) -> usize {
        match self {
            StoredPolicy::Tabular(p) => p.action_dim(),
            StoredPolicy::Neural(p) => p.action_dim(),
        }
    }

    fn action(&self, x: &[f64], k: usize) -> Option<Vec<f64>> {
        match self {
            StoredPolicy::Tabular(p) => p.action(x, k),
            StoredPolicy::Neural(p) => p.action(x, k),
        }
    }

    fn action_box(&self, grid: &Grid, cell: usize, k: usize) -> Option<IntervalBox> {
        match self {
            StoredPolicy::Tabular(p) => p.action_box(grid, cell, k),
            StoredPolicy::Neural(p) => p.action_box(grid, cell, k),
        }
    }
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum PolicyHeader {
    Tabular { grid: Grid, action_dim: usize, steps: usize },
    Neural { architecture: Architecture, steps: usize, bounds: (f64, f64) },
}

impl StoredPolicy {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        match self {
            StoredPolicy::Tabular(p) => {
                let header = serde_json::json!({
                    "kind": "tabular",
                    "grid": p.grid,
                    "action_dim": p.action_dim,
                    "steps": p.tables.len(),
                    "payload": "per step, per cell actions; NaN marks undefined cells",
                });
                let payload: Vec<f64> = p.tables.concat();
                container::encode(POLICY_MAGIC, &header, &payload)
            }
            StoredPolicy::Neural(p) => {
                let header = serde_json::json!({
                    "kind": "neural",
                    "architecture": p.arch,
                    "steps": p.steps.len(),
                    "bounds": p.bounds,
                    "payload": "per step flat parameters",
                });
                let payload: Vec<f64> = p.steps.iter().flat_map(|w| w.params().iter().copied()).collect();
                container::encode(POLICY_MAGIC, &header, &payload)
            }
        }
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (header, payload) = container::decode(POLICY_MAGIC, bytes)?;
        match serde_json::from_value::<PolicyHeader>(header)? {
            PolicyHeader::Tabular { grid, action_dim, steps } => {
                let n = grid.n_cells() * action_dim;
                if action_dim == 0 || steps == 0 || payload.len() != n * steps {
                    return Err(Error::Format("tabular payload has the wrong length".into()));
                }
                let tables = payload.chunks_exact(n).map(|c| c.to_vec()).collect();
                Ok(TabularPolicy { grid, action_dim, tables }.into())
            }
            PolicyHeader::Neural { architecture, steps, bounds } => {
                let n = architecture.n_params();
                if steps == 0 || payload.len() != n * steps {
                    return Err(Error::Format("neural payload has the wrong length".into()));
                }
                let ws = payload
                    .chunks_exact(n)
                    .map(|c| WeightSet::unflatten(&architecture, c))
                    .collect::<Result<Vec<_>>>()?;
                let mut p = NeuralPolicy::new(architecture, ws)?;
                p.bounds = bounds;
                Ok(p.into())
            }
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        container::write_file(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&container::read_file(path)?)
    }

    pub fn digest(&self) -> Result<String> {
        Ok(container::sha256_hex(&self.to_bytes()?))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum Inference {
    Hmc(HmcConfig),
    Vi(ViConfig),
}

impl Default for Inference {
    fn default() -> Self {
        Inference::Hmc(HmcConfig::default())
    }
}

/// Fits a posterior with the configured method and seed.
pub fn fit_posterior(data: &Dataset, arch: &Architecture, inference: &Inference, seed: u64) -> Result<Posterior> {
    Ok(match inference {
        Inference::Hmc(cfg) => {
            let cfg = HmcConfig { seed, ..cfg.clone() };
            hmc_fit(data, arch, &glorot_prior(arch), &cfg)?.into()
        }
        Inference::Vi(cfg) => {
            let cfg = ViConfig { seed, ..cfg.clone() };
            vi_fit(data, arch, &cfg)?.into()
        }
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnConfig {
    pub episodes: usize,
    pub n_trajectories: usize,
    pub max_horizon: usize,
    pub c_obstacle: f64,
    /// Hinge radius of the obstacle proximity penalty.
    pub obstacle_radius: f64,
    pub lr: f64,
    /// Gradient steps on the action table per episode.
    pub policy_iters: usize,
    pub rollout_horizon: usize,
    pub discount: f64,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub inference: Inference,
    /// Noise on the ground-truth system during data collection.
    pub collect_noise: f64,
    pub seed: u64,
}

impl Default for LearnConfig {
    fn default() -> Self {
        Self {
            episodes: 15,
            n_trajectories: 20,
            max_horizon: 25,
            c_obstacle: 0.25,
            obstacle_radius: 0.1,
            lr: 0.5,
            policy_iters: 5,
            rollout_horizon: 10,
            discount: 0.9,
            hidden: vec![16],
            activation: Activation::Sigmoid,
            inference: Inference::default(),
            collect_noise: 0.0,
            seed: 0,
        }
    }
}

/// Progress towards the goal minus the hinge obstacle penalty at the new
/// position.
pub fn reward(spec: &ReachAvoidSpec, cfg: &LearnConfig, x: &[f64], next: &[f64]) -> f64 {
    let d = spec.position_dim();
    let progress = spec.goal_distance(&x[..d]) - spec.goal_distance(&next[..d]);
    let proximity = (cfg.obstacle_radius - spec.obstacle_distance(&next[..d])).max(0.0);
    progress - cfg.c_obstacle * proximity
}

/// Discounted return of applying `first` at `x0` and then following the table
/// under the deterministic model.
fn discounted_return(
    spec: &ReachAvoidSpec,
    cfg: &LearnConfig,
    model: &(Architecture, Vec<f64>),
    policy: &TabularPolicy,
    x0: &[f64],
    first: &[f64],
    scratch: &mut ForwardScratch,
) -> f64 {
    let mut x = x0.to_vec();
    let mut total = 0.0;
    let mut weight = 1.0;
    let mut input = Vec::with_capacity(model.0.input_dim());
    for t in 0..cfg.rollout_horizon {
        let u: Vec<f64> =
            if t == 0 { first.to_vec() } else { policy.action(&x, 0).unwrap_or_else(|| vec![0.0; policy.action_dim]) };
        input.clear();
        input.extend_from_slice(&x);
        input.extend_from_slice(&u);
        let mut next = forward_with(&model.0, &model.1, &input, scratch).to_vec();
        spec.clip_velocity(&mut next);
        total += weight * reward(spec, cfg, &x, &next);
        weight *= cfg.discount;
        if spec.classify(&next) == Label::Goal {
            break;
        }
        x = next;
    }
    total
}

fn improve_actions(
    spec: &ReachAvoidSpec,
    cfg: &LearnConfig,
    posterior: &Posterior,
    policy: &mut TabularPolicy,
    labels: &[Label],
) -> Result<()> {
    let model = (posterior.arch().clone(), posterior.mean_params());
    let d = policy.action_dim;
    const H: f64 = 1e-3;
    for _ in 0..cfg.policy_iters {
        let frozen = policy.clone();
        let updated: Vec<(usize, Vec<f64>)> = (0..frozen.grid.n_cells())
            .into_par_iter()
            .filter(|&c| labels[c] == Label::Safe)
            .filter_map(|c| {
                let a = frozen.get(0, c)?.to_vec();
                let x0 = frozen.grid.cell_center(c);
                let mut scratch = ForwardScratch::default();
                let mut next = a.clone();
                for j in 0..d {
                    let mut up = a.clone();
                    up[j] += H;
                    let mut down = a.clone();
                    down[j] -= H;
                    let g = (discounted_return(spec, cfg, &model, &frozen, &x0, &up, &mut scratch)
                        - discounted_return(spec, cfg, &model, &frozen, &x0, &down, &mut scratch))
                        / (2.0 * H);
                    next[j] = (a[j] + cfg.lr * g).clamp(-1.0, 1.0);
                }
                Some((c, next))
            })
            .collect();
        for (c, a) in updated {
            policy.set(0, c, &a)?;
        }
    }
    Ok(())
}

/// Result of [`learn_initial_policy`].
#[derive(Debug, Clone)]
pub struct Learned {
    pub policy: TabularPolicy,
    pub posterior: Posterior,
    pub dataset: Dataset,
}

/// Episodic model-based learning of a stationary tabular policy.
///
/// A first batch of trajectories with random actions seeds the dataset and
/// the posterior. Each episode then improves the actions by gradient ascent
/// on the discounted reward under the posterior-mean model, collects new
/// trajectories with the improved policy and refits the posterior on all data.
pub fn learn_initial_policy(
    spec: &ReachAvoidSpec,
    params: &PuckParams,
    grid: &Grid,
    cfg: &LearnConfig,
) -> Result<Learned> {
    let state_dim = params.state_dim();
    if grid.dim() != state_dim {
        return Err(Error::Config(format!("grid has {} axes, the system has {state_dim} states", grid.dim())));
    }
    let labels = grid.labels(spec)?;
    let arch = Architecture::mlp(state_dim + params.action_dim(), &cfg.hidden, state_dim, cfg.activation)?;
    let mut rng = stream(cfg.seed, &[0x6c6561726e]);
    let mut policy = TabularPolicy::undefined(grid.clone(), params.action_dim(), 1)?;
    for c in 0..grid.n_cells() {
        let a: Vec<f64> = (0..params.action_dim()).map(|_| rng.random_range(-1.0..=1.0)).collect();
        policy.set(0, c, &a)?;
    }
    let collect = CollectConfig {
        n_trajectories: cfg.n_trajectories,
        max_horizon: cfg.max_horizon,
        noise_sigma: cfg.collect_noise,
    };
    let mut dataset = collect_episode(spec, params, None, &collect, &mut rng)?;
    let mut posterior = fit_posterior(&dataset, &arch, &cfg.inference, cfg.seed)?;
    for episode in 0..cfg.episodes {
        improve_actions(spec, cfg, &posterior, &mut policy, &labels)?;
        let batch = collect_episode(spec, params, Some(&policy), &collect, &mut rng)?;
        dataset.extend(&batch)?;
        posterior = fit_posterior(&dataset, &arch, &cfg.inference, cfg.seed.wrapping_add(episode as u64 + 1))?;
    }
    Ok(Learned { policy, posterior, dataset })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Layout;
    use crate::grid::Axis;
    use crate::nn::forward;

    fn unit_grid() -> Grid {
        Grid::new(vec![Axis::covering(0.0, 1.0, 0.5).unwrap(), Axis::covering(0.0, 1.0, 0.5).unwrap()]).unwrap()
    }

    #[test]
    fn tabular_lookup_and_box() {
        let g = unit_grid();
        let mut p = TabularPolicy::undefined(g.clone(), 2, 1).unwrap();
        p.set(0, 3, &[0.3, -0.1]).unwrap();
        assert_eq!(p.action(&[0.7, 0.7], 0), Some(vec![0.3, -0.1]));
        assert_eq!(p.action(&[0.2, 0.7], 0), None);
        let b = p.action_box(&g, 3, 4).unwrap();
        assert_eq!(b.widths(), vec![0.0, 0.0]);
        p.set(0, 0, &[2.0, -3.0]).unwrap();
        assert_eq!(p.action(&[0.1, 0.1], 0), Some(vec![1.0, -1.0]));
    }

    #[test]
    fn neural_clamps_and_bounds() {
        let arch = Architecture::new(vec![2, 2], Activation::Relu).unwrap();
        let zero = NeuralPolicy::new(arch.clone(), vec![WeightSet::zeros(&arch)]).unwrap();
        assert_eq!(zero.action(&[0.4, 0.2], 0), Some(vec![0.0, 0.0]));
        let w = WeightSet::from_layers(&arch, &[(vec![0.0; 4], vec![2.0, -3.0])]).unwrap();
        let p = NeuralPolicy::new(arch, vec![w]).unwrap();
        assert_eq!(p.action(&[0.4, 0.2], 0), Some(vec![1.0, -1.0]));

        let arch = Architecture::new(vec![1, 1], Activation::Relu).unwrap();
        let w = WeightSet::from_layers(&arch, &[(vec![1.0], vec![0.0])]).unwrap();
        let p = NeuralPolicy::new(arch, vec![w]).unwrap();
        let g = Grid::new(vec![Axis::covering(0.0, 1.0, 0.5).unwrap()]).unwrap();
        let b = p.action_box(&g, 0, 0).unwrap();
        assert_eq!((b.get(0).lo, b.get(0).hi), (0.0, 0.5));
    }

    #[test]
    fn neural_box_contains_sampled_actions() {
        let arch = Architecture::mlp(4, &[8], 2, Activation::Tanh).unwrap();
        let mut rng = stream(5, &[]);
        let p = NeuralPolicy::random(arch, 1, &mut rng).unwrap();
        let g = Grid::new((0..4).map(|_| Axis::covering(-1.0, 1.0, 0.5).unwrap()).collect()).unwrap();
        for cell in [0, 17, 100, 255] {
            let b = p.action_box(&g, cell, 0).unwrap();
            let cb = g.cell_box(cell).unwrap();
            for _ in 0..250 {
                let x: Vec<f64> = cb.intervals().iter().map(|iv| rng.random_range(iv.lo..=iv.hi)).collect();
                assert!(b.contains(&p.action(&x, 0).unwrap()));
            }
        }
    }

    #[test]
    fn files_round_trip() {
        let g = unit_grid();
        let mut t = TabularPolicy::undefined(g, 2, 2).unwrap();
        t.set(1, 2, &[0.5, 0.25]).unwrap();
        let s: StoredPolicy = t.into();
        assert_eq!(StoredPolicy::from_bytes(&s.to_bytes().unwrap()).unwrap(), s);

        let arch = Architecture::mlp(4, &[3], 2, Activation::Sigmoid).unwrap();
        let n = NeuralPolicy::random(arch, 3, &mut stream(1, &[])).unwrap();
        let s: StoredPolicy = n.into();
        let back = StoredPolicy::from_bytes(&s.to_bytes().unwrap()).unwrap();
        assert_eq!(back, s);
        assert!(StoredPolicy::from_bytes(b"RCPO0000").is_err());
    }

    #[test]
    fn reward_prefers_moving_towards_the_goal() {
        let spec = Layout::builtin("v1").unwrap().spec(5, 0.01, 0.99).unwrap();
        let cfg = LearnConfig::default();
        // goal [0.1, 0.3]^2, obstacle [0.4, 0.6]^2
        let x = [0.5, 0.9, 0.0, 0.0];
        let toward = reward(&spec, &cfg, &x, &[0.45, 0.85, 0.0, 0.0]);
        let away = reward(&spec, &cfg, &x, &[0.55, 0.95, 0.0, 0.0]);
        assert!(toward > away);
        // the same progress next to an obstacle is penalised
        let near = reward(&spec, &cfg, &[0.4, 0.7, 0.0, 0.0], &[0.35, 0.65, 0.0, 0.0]);
        let far = reward(&spec, &cfg, &[0.9, 0.7, 0.0, 0.0], &[0.85, 0.65, 0.0, 0.0]);
        assert!(near < far);
    }

    fn tiny_learn() -> (ReachAvoidSpec, Grid, LearnConfig) {
        let spec = Layout::builtin("v1").unwrap().spec(5, 0.01, 0.99).unwrap();
        let grid = Grid::for_spec(&spec, 4, 0.25, 0.3, None).unwrap();
        let cfg = LearnConfig {
            episodes: 1,
            n_trajectories: 3,
            max_horizon: 5,
            hidden: vec![4],
            inference: Inference::Hmc(HmcConfig {
                n_samples: 5,
                burn_in: 5,
                map_init_steps: 20,
                ..HmcConfig::default()
            }),
            policy_iters: 1,
            seed: 11,
            ..LearnConfig::default()
        };
        (spec, grid, cfg)
    }

    #[test]
    fn learning_is_reproducible() {
        let (spec, grid, cfg) = tiny_learn();
        let a = learn_initial_policy(&spec, &PuckParams::default(), &grid, &cfg).unwrap();
        let b = learn_initial_policy(&spec, &PuckParams::default(), &grid, &cfg).unwrap();
        assert_eq!(a.policy, b.policy);
        assert_eq!(a.posterior, b.posterior);
        assert_eq!(a.dataset, b.dataset);
        assert_eq!(a.dataset.input_dim(), 6);
    }

    #[test]
    fn zero_episodes_keep_the_random_policy() {
        let (spec, grid, cfg) = tiny_learn();
        let cfg0 = LearnConfig { episodes: 0, ..cfg };
        let a = learn_initial_policy(&spec, &PuckParams::default(), &grid, &cfg0).unwrap();
        let mut rng = stream(cfg0.seed, &[0x6c6561726e]);
        for c in 0..grid.n_cells() {
            let expect: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..=1.0)).collect();
            assert_eq!(a.policy.get(0, c).unwrap(), expect.as_slice());
        }
        let w = a.posterior.draw(&mut rng);
        assert_eq!(forward(a.posterior.arch(), &w, &[0.0; 6]).unwrap().len(), 4);
    }
}
