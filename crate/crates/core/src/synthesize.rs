//! Policy synthesis maximising the certified bound: a per-cell search over a
//! finite action set interleaved with the backward recursion, and training of
//! per-step neural policies against a set-distance loss.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::certify::{CertificationResult, Certifier, CertifyParams};
use crate::env::{Label, ReachAvoidSpec};
use crate::grid::{Grid, ValueTable};
use crate::interval::{ibp_fixed_backward, ibp_fixed_bounds, ibp_fixed_tape, IbpScratch, IntervalBox};
use crate::nn::{forward_with, Activation, Architecture, ForwardScratch, WeightSet};
use crate::optim::Adam;
use crate::policy::{NeuralPolicy, TabularPolicy};
use crate::posterior::Posterior;
use crate::rng::{stream, StreamRng};
use crate::{Error, Result};

const SYNTH_STREAM: u64 = 0x73796e;
const TRAIN_STREAM: u64 = 0x6e6e;

/// Midpoints of a uniform `per_dim^dim` partition of `[-1, 1]^dim`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionGrid {
    pub per_dim: usize,
    pub dim: usize,
}

impl ActionGrid {
    pub fn new(per_dim: usize, dim: usize) -> Result<Self> {
        if per_dim < 2 || dim == 0 {
            return Err(Error::Config("action grid needs at least 2 values per dimension".into()));
        }
        Ok(Self { per_dim, dim })
    }

    /// Enumerated with the first component varying slowest.
    pub fn actions(&self) -> Vec<Vec<f64>> {
        let t = self.per_dim;
        let mids: Vec<f64> = (0..t).map(|i| -1.0 + (2 * i + 1) as f64 / t as f64).collect();
        let total = t.pow(self.dim as u32);
        (0..total)
            .map(|mut n| {
                let mut a = vec![0.0; self.dim];
                for slot in a.iter_mut().rev() {
                    *slot = mids[n % t];
                    n /= t;
                }
                a
            })
            .collect()
    }
}

/// How the predictions of the sampled networks are combined in the loss.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reduction {
    Sum,
    Mean,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NnConfig {
    pub hidden: usize,
    pub activation: Activation,
    pub lr: f64,
    pub epochs: usize,
    pub n_states: usize,
    pub batch_size: usize,
    /// Networks drawn from the posterior per time step.
    pub n_weight_samples: usize,
    pub reduction: Reduction,
}

impl Default for NnConfig {
    fn default() -> Self {
        Self {
            hidden: 36,
            activation: Activation::Tanh,
            lr: 0.00075,
            epochs: 100,
            n_states: 15000,
            batch_size: 64,
            n_weight_samples: 5,
            reduction: Reduction::Mean,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthesisConfig {
    /// Weight samples per candidate action.
    pub n_s: usize,
    pub p_t: f64,
    pub alpha: f64,
    pub eps_robust: f64,
    pub actions_per_dim: usize,
    pub nn: NnConfig,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self { n_s: 250, p_t: 0.9, alpha: 0.25, eps_robust: 0.025, actions_per_dim: 10, nn: NnConfig::default() }
    }
}

impl SynthesisConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_s == 0 {
            return Err(Error::Config("n_s must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) || !(0.0..=1.0).contains(&self.p_t) {
            return Err(Error::Config("alpha and p_t must lie in [0, 1]".into()));
        }
        if !(self.eps_robust >= 0.0) {
            return Err(Error::Config("eps_robust must be non-negative".into()));
        }
        if self.nn.hidden == 0 || self.nn.batch_size == 0 || self.nn.n_weight_samples == 0 {
            return Err(Error::Config("hidden, batch_size and n_weight_samples must be positive".into()));
        }
        Ok(())
    }
}

fn synth_with(
    cert: &Certifier<'_>,
    cell: usize,
    next: &ValueTable,
    actions: &[Vec<f64>],
    n_s: usize,
    rng: &mut StreamRng,
) -> (usize, f64) {
    let arch = cert.posterior.arch();
    let draws: Vec<Vec<f64>> = (0..n_s)
        .map(|_| {
            let mut w = Vec::with_capacity(arch.n_params());
            cert.posterior.draw_into(rng, &mut w);
            w
        })
        .collect();
    let state = cert.state_box(cell);
    let mut in_lo = state.lower();
    let mut in_hi = state.upper();
    let n = in_lo.len();
    let mut scratch = IbpScratch::default();
    let mut best = (0, f64::NEG_INFINITY);
    for (ai, u) in actions.iter().enumerate() {
        in_lo.truncate(n);
        in_hi.truncate(n);
        in_lo.extend_from_slice(u);
        in_hi.extend_from_slice(u);
        let mut total = 0.0;
        for w in &draws {
            ibp_fixed_bounds(arch, w, &in_lo, &in_hi, &mut scratch);
            let Ok(reach) = IntervalBox::from_bounds(scratch.lower(), scratch.upper()) else { continue };
            total += next.min_over_box(cert.grid, &reach.inflate(cert.eps()));
        }
        let kappa = total / n_s as f64;
        if kappa > best.1 {
            best = (ai, kappa);
        }
    }
    best
}

/// Picks the action maximising the sampled estimate `κ̂` of the next-step
/// bound; ties go to the first action in `actions`.
#[allow(clippy::too_many_arguments)]
pub fn synth_action(
    posterior: &Posterior,
    grid: &Grid,
    spec: &ReachAvoidSpec,
    cell: usize,
    next: &ValueTable,
    actions: &[Vec<f64>],
    n_s: usize,
    eta: f64,
    rng: &mut StreamRng,
) -> Result<(Vec<f64>, f64)> {
    let action_dim = actions.first().map(|a| a.len()).ok_or_else(|| Error::invalid("no candidate actions"))?;
    if n_s == 0 || cell >= grid.n_cells() || next.len() != grid.n_cells() {
        return Err(Error::invalid("n_s must be positive and cell and table must match the grid"));
    }
    let params = CertifyParams { n_s, eta, ..CertifyParams::default() };
    let cert = Certifier::new(posterior, spec, grid, &params, action_dim)?;
    let (i, kappa) = synth_with(&cert, cell, next, actions, n_s, rng);
    Ok((actions[i].clone(), kappa))
}

/// Backward synthesis of a time-indexed tabular policy. At every step each
/// safe cell takes the action with the best sampled estimate, and the stored
/// bound is the weight-box certificate of that action.
pub fn max_cert(
    posterior: &Posterior,
    spec: &ReachAvoidSpec,
    grid: &Grid,
    agrid: &ActionGrid,
    cparams: &CertifyParams,
    scfg: &SynthesisConfig,
) -> Result<(TabularPolicy, CertificationResult)> {
    scfg.validate()?;
    let cert = Certifier::new(posterior, spec, grid, cparams, agrid.dim)?;
    let actions = agrid.actions();
    let n = spec.horizon;
    let mut policy = TabularPolicy::undefined(grid.clone(), agrid.dim, n)?;
    let mut tables = vec![ValueTable::goal_indicator(n, &cert.labels)];
    for k in (0..n).rev() {
        let next = tables.last().unwrap();
        let chosen: Vec<(Option<usize>, f64)> = (0..grid.n_cells())
            .into_par_iter()
            .map(|cell| {
                if cert.labels[cell] != Label::Safe {
                    return (None, cert.cell_value(k, cell, next, &IntervalBox::point(&[])));
                }
                let mut rng = stream(cparams.seed, &[k as u64, cell as u64, SYNTH_STREAM]);
                let (ai, _) = synth_with(&cert, cell, next, &actions, scfg.n_s, &mut rng);
                let value = cert.cell_value(k, cell, next, &IntervalBox::point(&actions[ai]));
                (Some(ai), value)
            })
            .collect();
        let mut values = Vec::with_capacity(chosen.len());
        for (cell, (ai, v)) in chosen.into_iter().enumerate() {
            if let Some(ai) = ai {
                policy.set(k, cell, &actions[ai])?;
            }
            values.push(v);
        }
        tables.push(ValueTable::new(k, values)?);
    }
    let result = cert.finish(tables)?;
    Ok((policy, result))
}

/// Finite point set for the set-distance terms of the loss.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointSet {
    points: Vec<Vec<f64>>,
}

fn box_distance(p: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    p.iter().zip(lo.iter().zip(hi)).map(|(x, (l, h))| (l - x).max(0.0).max(x - h).powi(2)).sum::<f64>().sqrt()
}

fn far_distance(p: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    p.iter().zip(lo.iter().zip(hi)).map(|(x, (l, h))| (x - l).abs().max((x - h).abs()).powi(2)).sum::<f64>().sqrt()
}

impl PointSet {
    pub fn new(points: Vec<Vec<f64>>) -> Self {
        Self { points }
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Centres of the cells whose value satisfies `keep`, in cell order.
    pub fn from_table(grid: &Grid, table: &ValueTable, keep: impl Fn(f64) -> bool) -> Self {
        Self::new(
            table.values().iter().enumerate().filter(|(_, v)| keep(**v)).map(|(c, _)| grid.cell_center(c)).collect(),
        )
    }

    /// Minimum of `metric(p, lo, hi)` over members, with the first minimiser.
    fn nearest(&self, lo: &[f64], hi: &[f64], metric: fn(&[f64], &[f64], &[f64]) -> f64) -> Option<(f64, Vec<f64>)> {
        let mut best: Option<(f64, &Vec<f64>)> = None;
        for p in &self.points {
            let d = metric(p, lo, hi);
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, p));
            }
        }
        best.map(|(d, p)| (d, p.clone()))
    }

    /// `min_p ‖p − y‖` over members, minimised over `y` in the box.
    pub fn distance_to_box(&self, lo: &[f64], hi: &[f64]) -> Option<(f64, Vec<f64>)> {
        self.nearest(lo, hi, box_distance)
    }

    /// `min_p max_{y in box} ‖p − y‖`, an upper bound on the largest
    /// set distance attained in the box.
    pub fn farthest_in_box(&self, lo: &[f64], hi: &[f64]) -> Option<(f64, Vec<f64>)> {
        self.nearest(lo, hi, far_distance)
    }
}

/// The networks, point sets and weights entering the loss
/// `−α‖Σ_w f^w(x, π(x)) − A‖ + (1−α)‖Σ_w f^w(x, π(x)) − R‖`.
pub struct PolicyLoss<'a> {
    pub dynamics: &'a Architecture,
    pub samples: &'a [WeightSet],
    pub policy: &'a Architecture,
    pub good: &'a PointSet,
    pub bad: &'a PointSet,
    pub alpha: f64,
    pub reduction: Reduction,
    pub action_bounds: (f64, f64),
}

impl PolicyLoss<'_> {
    fn check(&self, theta: &[f64], x: &[f64]) -> Result<()> {
        if self.samples.is_empty() {
            return Err(Error::invalid("at least one network sample is needed"));
        }
        if theta.len() != self.policy.n_params() || x.len() != self.policy.input_dim() {
            return Err(Error::invalid("policy parameters or state have the wrong length"));
        }
        if self.dynamics.input_dim() != x.len() + self.policy.output_dim() || self.dynamics.output_dim() != x.len() {
            return Err(Error::invalid("dynamics network does not match the state and action sizes"));
        }
        Ok(())
    }

    fn scale(&self) -> f64 {
        match self.reduction {
            Reduction::Sum => 1.0,
            Reduction::Mean => 1.0 / self.samples.len() as f64,
        }
    }

    /// Loss at a single state.
    pub fn value(&self, theta: &[f64], x: &[f64]) -> Result<f64> {
        self.check(theta, x)?;
        let mut scratch = ForwardScratch::default();
        let u: Vec<f64> = forward_with(self.policy, theta, x, &mut scratch)
            .iter()
            .map(|v| v.clamp(self.action_bounds.0, self.action_bounds.1))
            .collect();
        let mut input = x.to_vec();
        input.extend_from_slice(&u);
        let mut total = vec![0.0; x.len()];
        for w in self.samples {
            for (t, y) in total.iter_mut().zip(forward_with(self.dynamics, w.params(), &input, &mut scratch)) {
                *t += y;
            }
        }
        let s = self.scale();
        total.iter_mut().for_each(|t| *t *= s);
        let mut loss = 0.0;
        if let Some((d, _)) = self.good.distance_to_box(&total, &total) {
            loss -= self.alpha * d;
        }
        if let Some((d, _)) = self.bad.distance_to_box(&total, &total) {
            loss += (1.0 - self.alpha) * d;
        }
        Ok(loss)
    }

    /// Upper bound on the loss over the box `[x − eps, x + eps]`, with its
    /// gradient in `theta` accumulated into `grad` when given.
    pub fn robust(&self, theta: &[f64], x: &[f64], eps: f64, grad: Option<&mut [f64]>) -> Result<f64> {
        self.check(theta, x)?;
        if !(eps >= 0.0) {
            return Err(Error::invalid("eps must be non-negative"));
        }
        let n = x.len();
        let m = self.policy.output_dim();
        let x_lo: Vec<f64> = x.iter().map(|v| v - eps).collect();
        let x_hi: Vec<f64> = x.iter().map(|v| v + eps).collect();
        let ptape = ibp_fixed_tape(self.policy, theta, &x_lo, &x_hi);
        let (b0, b1) = self.action_bounds;
        let a_lo: Vec<f64> = ptape.lower().iter().map(|v| v.clamp(b0, b1)).collect();
        let a_hi: Vec<f64> = ptape.upper().iter().map(|v| v.clamp(b0, b1)).collect();
        let mut in_lo = x_lo.clone();
        in_lo.extend_from_slice(&a_lo);
        let mut in_hi = x_hi.clone();
        in_hi.extend_from_slice(&a_hi);
        let tapes: Vec<_> =
            self.samples.iter().map(|w| ibp_fixed_tape(self.dynamics, w.params(), &in_lo, &in_hi)).collect();
        let s = self.scale();
        let mut y_lo = vec![0.0; n];
        let mut y_hi = vec![0.0; n];
        for t in &tapes {
            for j in 0..n {
                y_lo[j] += t.lower()[j];
                y_hi[j] += t.upper()[j];
            }
        }
        y_lo.iter_mut().for_each(|v| *v *= s);
        y_hi.iter_mut().for_each(|v| *v *= s);

        let mut loss = 0.0;
        let mut g_lo = vec![0.0; n];
        let mut g_hi = vec![0.0; n];
        if let Some((d, p)) = self.good.distance_to_box(&y_lo, &y_hi) {
            loss -= self.alpha * d;
            if d > 0.0 {
                for j in 0..n {
                    if y_lo[j] > p[j] {
                        g_lo[j] -= self.alpha * (y_lo[j] - p[j]) / d;
                    } else if p[j] > y_hi[j] {
                        g_hi[j] -= self.alpha * (y_hi[j] - p[j]) / d;
                    }
                }
            }
        }
        if let Some((d, p)) = self.bad.farthest_in_box(&y_lo, &y_hi) {
            loss += (1.0 - self.alpha) * d;
            if d > 0.0 {
                for j in 0..n {
                    let (dl, dh) = ((p[j] - y_lo[j]).abs(), (p[j] - y_hi[j]).abs());
                    if dl >= dh {
                        g_lo[j] += (1.0 - self.alpha) * (y_lo[j] - p[j]) / d;
                    } else {
                        g_hi[j] += (1.0 - self.alpha) * (y_hi[j] - p[j]) / d;
                    }
                }
            }
        }
        if let Some(grad) = grad {
            g_lo.iter_mut().for_each(|g| *g *= s);
            g_hi.iter_mut().for_each(|g| *g *= s);
            let mut ga_lo = vec![0.0; m];
            let mut ga_hi = vec![0.0; m];
            let mut gi_lo = vec![0.0; n + m];
            let mut gi_hi = vec![0.0; n + m];
            for (w, t) in self.samples.iter().zip(&tapes) {
                ibp_fixed_backward(self.dynamics, w.params(), t, &g_lo, &g_hi, None, &mut gi_lo, &mut gi_hi);
                for j in 0..m {
                    ga_lo[j] += gi_lo[n + j];
                    ga_hi[j] += gi_hi[n + j];
                }
            }
            for j in 0..m {
                let (pl, ph) = (ptape.lower()[j], ptape.upper()[j]);
                if !(pl > b0 && pl < b1) {
                    ga_lo[j] = 0.0;
                }
                if !(ph > b0 && ph < b1) {
                    ga_hi[j] = 0.0;
                }
            }
            let mut sink_lo = vec![0.0; n];
            let mut sink_hi = vec![0.0; n];
            ibp_fixed_backward(self.policy, theta, &ptape, &ga_lo, &ga_hi, Some(grad), &mut sink_lo, &mut sink_hi);
        }
        Ok(loss)
    }
}

/// The set-distance loss at `x` with `A_k = good`, `R_k = bad`.
#[allow(clippy::too_many_arguments)]
pub fn nn_policy_loss(
    samples: &[WeightSet],
    dynamics: &Architecture,
    policy: &Architecture,
    theta: &[f64],
    x: &[f64],
    good: &PointSet,
    bad: &PointSet,
    alpha: f64,
) -> Result<f64> {
    let loss = PolicyLoss {
        dynamics,
        samples,
        policy,
        good,
        bad,
        alpha,
        reduction: Reduction::Sum,
        action_bounds: (-1.0, 1.0),
    };
    loss.value(theta, x)
}

/// Interval upper bound of the loss over the `eps`-box around `x`.
#[allow(clippy::too_many_arguments)]
pub fn nn_policy_robust_loss(
    samples: &[WeightSet],
    dynamics: &Architecture,
    policy: &Architecture,
    theta: &[f64],
    x: &[f64],
    good: &PointSet,
    bad: &PointSet,
    alpha: f64,
    eps_robust: f64,
) -> Result<f64> {
    let loss = PolicyLoss {
        dynamics,
        samples,
        policy,
        good,
        bad,
        alpha,
        reduction: Reduction::Sum,
        action_bounds: (-1.0, 1.0),
    };
    loss.robust(theta, x, eps_robust, None)
}

fn sample_safe_states(cert: &Certifier<'_>, n: usize, rng: &mut StreamRng) -> Vec<Vec<f64>> {
    let safe: Vec<usize> = (0..cert.labels.len()).filter(|&c| cert.labels[c] == Label::Safe).collect();
    if safe.is_empty() {
        return Vec::new();
    }
    (0..n)
        .map(|_| {
            let cell = safe[rng.random_range(0..safe.len())];
            cert.state_box(cell).intervals().iter().map(|iv| rng.random_range(iv.lo..=iv.hi)).collect()
        })
        .collect()
}

/// Trains `π_{N−1}, …, π_0` backwards, each initialised from its successor,
/// and certifies each step before moving on. The minimised objective is the
/// robust bound of `α‖y − A_k‖ − (1−α)‖y − R_k‖`, which pulls predictions
/// towards high-value cells and away from low-value ones.
pub fn train_nn_policy(
    posterior: &Posterior,
    spec: &ReachAvoidSpec,
    grid: &Grid,
    cparams: &CertifyParams,
    scfg: &SynthesisConfig,
    init: Option<&NeuralPolicy>,
) -> Result<(NeuralPolicy, CertificationResult)> {
    scfg.validate()?;
    let state_dim = grid.dim();
    let action_dim = posterior
        .arch()
        .input_dim()
        .checked_sub(state_dim)
        .filter(|d| *d > 0)
        .ok_or_else(|| Error::Config("network input is too small for the grid".into()))?;
    let cert = Certifier::new(posterior, spec, grid, cparams, action_dim)?;
    let n = spec.horizon;
    let nn = &scfg.nn;
    let mut rng = stream(cparams.seed, &[TRAIN_STREAM]);
    let mut policy = match init {
        Some(p) => {
            let mut p = p.clone();
            while p.n_steps() < n {
                let last = p.weights(p.n_steps() - 1).clone();
                p = NeuralPolicy::new(p.arch().clone(), {
                    let mut ws: Vec<WeightSet> = (0..p.n_steps()).map(|k| p.weights(k).clone()).collect();
                    ws.push(last);
                    ws
                })?;
            }
            p
        }
        None => {
            let arch = Architecture::mlp(state_dim, &[nn.hidden], action_dim, nn.activation)?;
            NeuralPolicy::random(arch, n, &mut rng)?
        }
    };
    if policy.arch().input_dim() != state_dim || policy.arch().output_dim() != action_dim {
        return Err(Error::Config("initial policy does not match the system".into()));
    }
    let dyn_arch = posterior.arch().clone();
    let pol_arch = policy.arch().clone();
    let mut tables = vec![ValueTable::goal_indicator(n, &cert.labels)];
    for k in (0..n).rev() {
        let next = tables.last().unwrap().clone();
        let mut theta = if k + 1 < n { policy.weights(k + 1).clone() } else { policy.weights(k).clone() };
        let good = PointSet::from_table(grid, &next, |v| v >= scfg.p_t);
        let bad = PointSet::from_table(grid, &next, |v| v <= 1.0 - scfg.p_t);
        if good.is_empty() {
            log::warn!("step {k}: no cell reaches p_t; the attraction term is dropped");
        }
        if bad.is_empty() {
            log::warn!("step {k}: no cell falls below 1 - p_t; the repulsion term is dropped");
        }
        let mut krng = stream(cparams.seed, &[TRAIN_STREAM, k as u64]);
        let samples: Vec<WeightSet> = (0..nn.n_weight_samples).map(|_| posterior.draw(&mut krng)).collect();
        let mut states = sample_safe_states(&cert, nn.n_states, &mut krng);
        // minimising the negated loss: swap the sets and the weights
        let objective = PolicyLoss {
            dynamics: &dyn_arch,
            samples: &samples,
            policy: &pol_arch,
            good: &bad,
            bad: &good,
            alpha: 1.0 - scfg.alpha,
            reduction: nn.reduction,
            action_bounds: policy.bounds(),
        };
        let mut opt = Adam::new(theta.len(), nn.lr);
        for _ in 0..nn.epochs {
            states.shuffle(&mut krng);
            for batch in states.chunks(nn.batch_size) {
                let grads: Vec<Vec<f64>> = batch
                    .par_iter()
                    .map(|x| {
                        let mut g = vec![0.0; theta.len()];
                        objective.robust(theta.params(), x, scfg.eps_robust, Some(&mut g)).map(|_| g)
                    })
                    .collect::<Result<_>>()?;
                let mut total = vec![0.0; theta.len()];
                for g in &grads {
                    for (t, v) in total.iter_mut().zip(g) {
                        *t += v / batch.len() as f64;
                    }
                }
                opt.step(theta.params_mut(), &total);
            }
        }
        policy.set_weights(k, theta)?;
        let table = cert.step(k, &next, &policy)?;
        tables.push(table);
    }
    let result = cert.finish(tables)?;
    Ok((policy, result))
}
