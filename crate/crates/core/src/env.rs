//! Puck dynamics, obstacle layouts, reach-avoid specifications and rollouts.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::interval::{Interval, IntervalBox};
use crate::nn::{forward_with, ForwardScratch};
use crate::policy::Policy;
use crate::posterior::{Dataset, Posterior};
use crate::{Error, Result};

/// Discretised point-mass dynamics in `dims` planar dimensions. The state is
/// positions followed by velocities; the action is an acceleration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PuckParams {
    pub h: f64,
    pub m: f64,
    pub eta_f: f64,
    pub dims: usize,
}

impl Default for PuckParams {
    fn default() -> Self {
        Self { h: 0.35, m: 5.0, eta_f: 1.0, dims: 2 }
    }
}

impl PuckParams {
    pub fn new(h: f64, m: f64, eta_f: f64, dims: usize) -> Result<Self> {
        if !(h > 0.0) || !(m > 0.0) || !(eta_f >= 0.0) || dims < 2 {
            return Err(Error::invalid("puck parameters need h > 0, m > 0, eta_f >= 0, dims >= 2"));
        }
        Ok(Self { h, m, eta_f, dims })
    }

    pub fn state_dim(&self) -> usize {
        2 * self.dims
    }

    pub fn action_dim(&self) -> usize {
        self.dims
    }
}

/// `A·state + B·action` without noise.
pub fn true_step(p: &PuckParams, state: &[f64], action: &[f64]) -> Result<Vec<f64>> {
    let d = p.dims;
    if state.len() != 2 * d || action.len() != d {
        return Err(Error::invalid(format!("puck expects a state of length {} and an action of length {d}", 2 * d)));
    }
    let damp = 1.0 - p.h * p.eta_f / p.m;
    let gain = p.h / p.m;
    let mut next = Vec::with_capacity(2 * d);
    for i in 0..d {
        next.push(state[i] + p.h * state[d + i]);
    }
    for i in 0..d {
        next.push(damp * state[d + i] + gain * action[i]);
    }
    Ok(next)
}

/// [`true_step`] plus independent Gaussian noise of standard deviation
/// `sigma` on every state coordinate.
pub fn true_step_noisy<R: Rng + ?Sized>(
    p: &PuckParams,
    state: &[f64],
    action: &[f64],
    sigma: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let mut next = true_step(p, state, action)?;
    add_noise(&mut next, sigma, rng);
    Ok(next)
}

fn add_noise<R: Rng + ?Sized>(x: &mut [f64], sigma: f64, rng: &mut R) {
    if sigma > 0.0 {
        for v in x.iter_mut() {
            let z: f64 = StandardNormal.sample(rng);
            *v += sigma * z;
        }
    }
}

/// Closed convex obstacle over the position coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Obstacle {
    /// `coords = [lower corner, upper corner]`.
    Rect { coords: [Vec<f64>; 2] },
    /// Planar triangle over the first two position coordinates.
    Tri { coords: [[f64; 2]; 3] },
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if len2 > 0.0 { (((p[0] - a[0]) * ab[0] + (p[1] - a[1]) * ab[1]) / len2).clamp(0.0, 1.0) } else { 0.0 };
    let q = [a[0] + t * ab[0], a[1] + t * ab[1]];
    ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()
}

impl Obstacle {
    pub fn rect(lo: &[f64], hi: &[f64]) -> Self {
        Obstacle::Rect { coords: [lo.to_vec(), hi.to_vec()] }
    }

    fn validate(&self, d: usize) -> Result<()> {
        match self {
            Obstacle::Rect { coords } => {
                if coords[0].len() != d || coords[1].len() != d {
                    return Err(Error::Config(format!("rectangle corners must have {d} coordinates")));
                }
                if coords[0].iter().zip(&coords[1]).any(|(l, h)| !(l <= h)) {
                    return Err(Error::Config("rectangle lower corner exceeds upper corner".into()));
                }
            }
            Obstacle::Tri { coords } => {
                if cross(coords[0], coords[1], coords[2]) == 0.0 {
                    return Err(Error::Config("degenerate triangle".into()));
                }
            }
        }
        Ok(())
    }

    pub fn contains(&self, pos: &[f64]) -> bool {
        match self {
            Obstacle::Rect { coords } => {
                pos.iter().zip(coords[0].iter().zip(&coords[1])).all(|(x, (l, h))| l <= x && x <= h)
            }
            Obstacle::Tri { coords } => {
                let p = [pos[0], pos[1]];
                let c1 = cross(coords[0], coords[1], p);
                let c2 = cross(coords[1], coords[2], p);
                let c3 = cross(coords[2], coords[0], p);
                (c1 >= 0.0 && c2 >= 0.0 && c3 >= 0.0) || (c1 <= 0.0 && c2 <= 0.0 && c3 <= 0.0)
            }
        }
    }

    /// Closed intersection test with a position box.
    pub fn intersects_box(&self, b: &IntervalBox) -> bool {
        match self {
            Obstacle::Rect { coords } => b
                .intervals()
                .iter()
                .zip(coords[0].iter().zip(&coords[1]))
                .all(|(iv, (l, h))| iv.lo <= *h && *l <= iv.hi),
            Obstacle::Tri { coords } => {
                let (bx, by) = (b.get(0), b.get(1));
                // separating axes: the two box axes and the three edge normals
                let txs = coords.map(|c| c[0]);
                let tys = coords.map(|c| c[1]);
                let fmin = |v: [f64; 3]| v[0].min(v[1]).min(v[2]);
                let fmax = |v: [f64; 3]| v[0].max(v[1]).max(v[2]);
                if fmax(txs) < bx.lo || fmin(txs) > bx.hi || fmax(tys) < by.lo || fmin(tys) > by.hi {
                    return false;
                }
                let corners = [[bx.lo, by.lo], [bx.lo, by.hi], [bx.hi, by.lo], [bx.hi, by.hi]];
                for e in 0..3 {
                    let a = coords[e];
                    let bpt = coords[(e + 1) % 3];
                    let n = [a[1] - bpt[1], bpt[0] - a[0]];
                    let proj = |p: [f64; 2]| n[0] * p[0] + n[1] * p[1];
                    let tri: Vec<f64> = coords.iter().map(|&c| proj(c)).collect();
                    let (tlo, thi) = (
                        tri.iter().cloned().fold(f64::INFINITY, f64::min),
                        tri.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                    );
                    let bp: Vec<f64> = corners.iter().map(|&c| proj(c)).collect();
                    let (blo, bhi) = (
                        bp.iter().cloned().fold(f64::INFINITY, f64::min),
                        bp.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                    );
                    if bhi < tlo || blo > thi {
                        return false;
                    }
                }
                true
            }
        }
    }

    /// Euclidean distance from a position to the obstacle, zero inside.
    pub fn distance(&self, pos: &[f64]) -> f64 {
        match self {
            Obstacle::Rect { coords } => pos
                .iter()
                .zip(coords[0].iter().zip(&coords[1]))
                .map(|(x, (l, h))| (l - x).max(0.0).max(x - h).powi(2))
                .sum::<f64>()
                .sqrt(),
            Obstacle::Tri { coords } => {
                if self.contains(pos) {
                    return 0.0;
                }
                let p = [pos[0], pos[1]];
                (0..3).map(|e| segment_distance(p, coords[e], coords[(e + 1) % 3])).fold(f64::INFINITY, f64::min)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Goal,
    Safe,
    Unsafe,
}

/// Reach the goal within `horizon` steps while staying inside `bounds` and
/// outside every obstacle. Regions constrain the position coordinates only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReachAvoidSpec {
    pub goal: IntervalBox,
    pub bounds: IntervalBox,
    pub obstacles: Vec<Obstacle>,
    pub horizon: usize,
    pub sigma: f64,
    pub eta: f64,
    /// Velocity components are clamped to this range after every step.
    pub velocity_clip: Option<(f64, f64)>,
}

impl ReachAvoidSpec {
    pub fn new(
        goal: IntervalBox,
        bounds: IntervalBox,
        obstacles: Vec<Obstacle>,
        horizon: usize,
        sigma: f64,
        eta: f64,
        velocity_clip: Option<(f64, f64)>,
    ) -> Result<Self> {
        let spec = Self { goal, bounds, obstacles, horizon, sigma, eta, velocity_clip };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.position_dim();
        if d == 0 || self.goal.dim() != d {
            return Err(Error::Config("goal and bounds must have the same positive dimension".into()));
        }
        if self.obstacles.iter().any(|o| matches!(o, Obstacle::Tri { .. })) && d < 2 {
            return Err(Error::Config("triangles need at least two position dimensions".into()));
        }
        for (i, o) in self.obstacles.iter().enumerate() {
            o.validate(d)?;
            if o.intersects_box(&self.goal) {
                return Err(Error::Config(format!("obstacle {i} intersects the goal region")));
            }
        }
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::Config("sigma must be positive".into()));
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(Error::Config("eta must lie in (0, 1)".into()));
        }
        if let Some((lo, hi)) = self.velocity_clip {
            if !(lo <= hi) {
                return Err(Error::Config("velocity clip lower bound exceeds upper bound".into()));
            }
        }
        Ok(())
    }

    pub fn position_dim(&self) -> usize {
        self.bounds.dim()
    }

    pub fn classify(&self, state: &[f64]) -> Label {
        let pos = &state[..self.position_dim()];
        if !self.bounds.contains(pos) {
            Label::Unsafe
        } else if self.goal.contains(pos) {
            Label::Goal
        } else if self.obstacles.iter().any(|o| o.contains(pos)) {
            Label::Unsafe
        } else {
            Label::Safe
        }
    }

    pub fn clip_velocity(&self, state: &mut [f64]) {
        if let Some((lo, hi)) = self.velocity_clip {
            let d = self.position_dim();
            for v in state[d..].iter_mut() {
                *v = v.clamp(lo, hi);
            }
        }
    }

    /// Distance from a position to the nearest obstacle (infinite without
    /// obstacles).
    pub fn obstacle_distance(&self, pos: &[f64]) -> f64 {
        self.obstacles.iter().map(|o| o.distance(pos)).fold(f64::INFINITY, f64::min)
    }

    /// Distance from a position to the goal box.
    pub fn goal_distance(&self, pos: &[f64]) -> f64 {
        pos.iter()
            .zip(self.goal.intervals())
            .map(|(x, iv)| (iv.lo - x).max(0.0).max(x - iv.hi).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// On-disk obstacle layout. Intervals are written as `[lo, hi]` pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub version: u32,
    pub name: String,
    pub bounds: Vec<[f64; 2]>,
    pub goal: Vec<[f64; 2]>,
    pub obstacles: Vec<Obstacle>,
    pub velocity_clip: Option<[f64; 2]>,
    pub start: Vec<f64>,
}

pub const LAYOUT_VERSION: u32 = 1;
pub const BUILTIN_LAYOUTS: [&str; 3] = ["v1", "v2", "zigzag"];

fn to_box(pairs: &[[f64; 2]]) -> Result<IntervalBox> {
    IntervalBox::new(pairs.iter().map(|p| Interval { lo: p[0], hi: p[1] }).collect())
        .map_err(|e| Error::Config(e.to_string()))
}

impl Layout {
    pub fn builtin(name: &str) -> Result<Self> {
        let text = match name.to_ascii_lowercase().as_str() {
            "v1" => include_str!("../layouts/v1.json"),
            "v2" => include_str!("../layouts/v2.json"),
            "zigzag" => include_str!("../layouts/zigzag.json"),
            other => return Err(Error::Config(format!("unknown layout {other:?}"))),
        };
        Self::from_json(text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let layout: Layout = serde_json::from_str(text)?;
        if layout.version != LAYOUT_VERSION {
            return Err(Error::Config(format!("unsupported layout version {}", layout.version)));
        }
        Ok(layout)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn spec(&self, horizon: usize, sigma: f64, eta: f64) -> Result<ReachAvoidSpec> {
        let spec = ReachAvoidSpec::new(
            to_box(&self.goal)?,
            to_box(&self.bounds)?,
            self.obstacles.clone(),
            horizon,
            sigma,
            eta,
            self.velocity_clip.map(|c| (c[0], c[1])),
        )?;
        if self.start.len() != spec.position_dim() {
            return Err(Error::Config("start position has the wrong dimension".into()));
        }
        Ok(spec)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Reached,
    Collided,
    OutOfBounds,
    Timeout,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Reached => "reached",
            Outcome::Collided => "collided",
            Outcome::OutOfBounds => "out_of_bounds",
            Outcome::Timeout => "timeout",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub outcome: Outcome,
}

/// Source of transitions for rollouts.
#[derive(Clone, Copy, Debug)]
pub enum Stepper<'a> {
    /// Ground-truth puck with additive Gaussian noise.
    True { params: PuckParams, sigma: f64 },
    /// BNN with fresh weights drawn at every step plus noise `spec.sigma`.
    Bnn(&'a Posterior),
}

impl Stepper<'_> {
    /// One transition including noise, without velocity clipping.
    pub fn step<R: Rng + ?Sized>(
        &self,
        spec: &ReachAvoidSpec,
        state: &[f64],
        action: &[f64],
        scratch: &mut StepScratch,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        match self {
            Stepper::True { params, sigma } => true_step_noisy(params, state, action, *sigma, rng),
            Stepper::Bnn(post) => {
                let arch = post.arch();
                if state.len() + action.len() != arch.input_dim() {
                    return Err(Error::invalid("state and action do not match the network input"));
                }
                post.draw_into(rng, &mut scratch.weights);
                scratch.input.clear();
                scratch.input.extend_from_slice(state);
                scratch.input.extend_from_slice(action);
                let mut next = forward_with(arch, &scratch.weights, &scratch.input, &mut scratch.forward).to_vec();
                add_noise(&mut next, spec.sigma, rng);
                Ok(next)
            }
        }
    }
}

#[derive(Default, Debug)]
pub struct StepScratch {
    weights: Vec<f64>,
    input: Vec<f64>,
    forward: ForwardScratch,
}

fn terminal_outcome(spec: &ReachAvoidSpec, state: &[f64]) -> Option<Outcome> {
    match spec.classify(state) {
        Label::Goal => Some(Outcome::Reached),
        Label::Safe => None,
        Label::Unsafe => {
            if spec.bounds.contains(&state[..spec.position_dim()]) {
                Some(Outcome::Collided)
            } else {
                Some(Outcome::OutOfBounds)
            }
        }
    }
}

/// Rolls the policy forward for at most `spec.horizon` steps, stopping at the
/// first goal or unsafe state. Cells where the policy is undefined apply the
/// zero action.
pub fn simulate<R: Rng + ?Sized>(
    spec: &ReachAvoidSpec,
    stepper: &Stepper<'_>,
    policy: &dyn Policy,
    x0: &[f64],
    rng: &mut R,
) -> Result<Trajectory> {
    rollout(spec, stepper, spec.horizon, x0, rng, |x, k, _| {
        Ok(policy.action(x, k).unwrap_or_else(|| vec![0.0; policy.action_dim()]))
    })
}

fn rollout<R: Rng + ?Sized>(
    spec: &ReachAvoidSpec,
    stepper: &Stepper<'_>,
    horizon: usize,
    x0: &[f64],
    rng: &mut R,
    mut choose: impl FnMut(&[f64], usize, &mut R) -> Result<Vec<f64>>,
) -> Result<Trajectory> {
    let mut states = vec![x0.to_vec()];
    let mut actions = Vec::new();
    let mut scratch = StepScratch::default();
    if let Some(outcome) = terminal_outcome(spec, x0) {
        return Ok(Trajectory { states, actions, outcome });
    }
    for k in 0..horizon {
        let x = states.last().unwrap().clone();
        let u = choose(&x, k, rng)?;
        let mut next = stepper.step(spec, &x, &u, &mut scratch, rng)?;
        spec.clip_velocity(&mut next);
        actions.push(u);
        states.push(next);
        if let Some(outcome) = terminal_outcome(spec, states.last().unwrap()) {
            return Ok(Trajectory { states, actions, outcome });
        }
    }
    Ok(Trajectory { states, actions, outcome: Outcome::Timeout })
}

/// Uniform state with a safe position and velocities inside the clip range.
pub fn random_safe_state<R: Rng + ?Sized>(spec: &ReachAvoidSpec, rng: &mut R) -> Result<Vec<f64>> {
    let d = spec.position_dim();
    let (vlo, vhi) = spec.velocity_clip.unwrap_or((-0.5, 0.5));
    for _ in 0..10_000 {
        let mut x: Vec<f64> = spec.bounds.intervals().iter().map(|iv| rng.random_range(iv.lo..=iv.hi)).collect();
        for _ in 0..d {
            x.push(if vlo < vhi { rng.random_range(vlo..=vhi) } else { vlo });
        }
        if spec.classify(&x) == Label::Safe {
            return Ok(x);
        }
    }
    Err(Error::Config("could not sample a safe start state".into()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollectConfig {
    pub n_trajectories: usize,
    pub max_horizon: usize,
    /// Noise on the ground-truth system.
    pub noise_sigma: f64,
}

impl Default for CollectConfig {
    fn default() -> Self {
        Self { n_trajectories: 20, max_horizon: 25, noise_sigma: 0.0 }
    }
}

/// Ground-truth rollouts from uniformly random safe starts. With no policy the
/// actions are uniform in `[-1, 1]^d`. Every transition becomes one dataset
/// row `(state ⊕ action) → clipped next state`.
pub fn collect_episode<R: Rng + ?Sized>(
    spec: &ReachAvoidSpec,
    params: &PuckParams,
    policy: Option<&dyn Policy>,
    cfg: &CollectConfig,
    rng: &mut R,
) -> Result<Dataset> {
    if params.dims != spec.position_dim() {
        return Err(Error::Config("puck dimension does not match the specification".into()));
    }
    let stepper = Stepper::True { params: *params, sigma: cfg.noise_sigma };
    let mut data = Dataset::default();
    for _ in 0..cfg.n_trajectories {
        let x0 = random_safe_state(spec, rng)?;
        let traj = rollout(spec, &stepper, cfg.max_horizon, &x0, rng, |x, k, rng| {
            Ok(match policy.and_then(|p| p.action(x, k)) {
                Some(u) => u,
                None => (0..params.dims).map(|_| rng.random_range(-1.0..=1.0)).collect(),
            })
        })?;
        for (i, u) in traj.actions.iter().enumerate() {
            let mut input = traj.states[i].clone();
            input.extend_from_slice(u);
            data.push(input, traj.states[i + 1].clone())?;
        }
    }
    Ok(data)
}
