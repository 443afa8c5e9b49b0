//! Interval arithmetic and interval bound propagation (IBP) through networks.
//!
//! The propagation kernels accumulate each pre-activation as `b + Σ w·x` in
//! the same order as [`crate::nn::forward_with`]. Floating-point addition and
//! multiplication are monotone, so the float output of a forward pass for any
//! weights and inputs inside the boxes lies inside the float bounds computed
//! here, and point boxes reproduce the forward pass bit for bit.

use serde::{Deserialize, Serialize};
use statrs::function::erf;

use crate::nn::{Architecture, WeightSet};
use crate::posterior::WeightBox;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if lo.is_nan() || hi.is_nan() || lo > hi {
            return Err(Error::invalid(format!("invalid interval [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    pub fn point(x: f64) -> Self {
        Self { lo: x, hi: x }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    /// Closed-interval overlap; touching endpoints count.
    pub fn intersects(&self, other: &Interval) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }

    pub fn contains_interval(&self, other: &Interval) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }

    pub fn hull(&self, other: &Interval) -> Interval {
        Interval { lo: self.lo.min(other.lo), hi: self.hi.max(other.hi) }
    }

    /// `[a,b]·[c,d]` by taking min and max over the four endpoint products.
    #[inline]
    pub fn mul(&self, other: &Interval) -> Interval {
        let (lo, hi) = mul_bounds(self.lo, self.hi, other.lo, other.hi);
        Interval { lo, hi }
    }

    pub fn add(&self, other: &Interval) -> Interval {
        Interval { lo: self.lo + other.lo, hi: self.hi + other.hi }
    }
}

#[inline]
fn mul_bounds(a: f64, b: f64, c: f64, d: f64) -> (f64, f64) {
    let p1 = a * c;
    let p2 = a * d;
    let p3 = b * c;
    let p4 = b * d;
    (p1.min(p2).min(p3.min(p4)), p1.max(p2).max(p3.max(p4)))
}

/// Axis-aligned hyperrectangle, one closed interval per dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IntervalBox {
    dims: Vec<Interval>,
}

impl IntervalBox {
    pub fn new(dims: Vec<Interval>) -> Result<Self> {
        for d in &dims {
            Interval::new(d.lo, d.hi)?;
        }
        Ok(Self { dims })
    }

    pub fn from_bounds(lo: &[f64], hi: &[f64]) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::invalid("lower and upper bounds differ in length"));
        }
        let dims = lo.iter().zip(hi).map(|(&l, &h)| Interval::new(l, h)).collect::<Result<_>>()?;
        Ok(Self { dims })
    }

    pub fn point(x: &[f64]) -> Self {
        Self { dims: x.iter().map(|&v| Interval::point(v)).collect() }
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.dims
    }

    pub fn get(&self, i: usize) -> Interval {
        self.dims[i]
    }

    pub fn lower(&self) -> Vec<f64> {
        self.dims.iter().map(|d| d.lo).collect()
    }

    pub fn upper(&self) -> Vec<f64> {
        self.dims.iter().map(|d| d.hi).collect()
    }

    pub fn center(&self) -> Vec<f64> {
        self.dims.iter().map(Interval::mid).collect()
    }

    pub fn widths(&self) -> Vec<f64> {
        self.dims.iter().map(Interval::width).collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dims.len() && self.dims.iter().zip(x).all(|(d, &v)| d.contains(v))
    }

    pub fn contains_box(&self, other: &IntervalBox) -> bool {
        self.dims.len() == other.dims.len() && self.dims.iter().zip(&other.dims).all(|(a, b)| a.contains_interval(b))
    }

    pub fn intersects(&self, other: &IntervalBox) -> bool {
        self.dims.len() == other.dims.len() && self.dims.iter().zip(&other.dims).all(|(a, b)| a.intersects(b))
    }

    /// Cartesian product `self × other`, e.g. a state box followed by an
    /// action box.
    pub fn concat(&self, other: &IntervalBox) -> IntervalBox {
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        IntervalBox { dims }
    }

    /// The first `n` dimensions.
    pub fn project(&self, n: usize) -> IntervalBox {
        IntervalBox { dims: self.dims[..n].to_vec() }
    }

    /// Intersects every dimension with `[lo, hi]`.
    pub fn clamp(&self, lo: f64, hi: f64) -> IntervalBox {
        IntervalBox {
            dims: self.dims.iter().map(|d| Interval { lo: d.lo.clamp(lo, hi), hi: d.hi.clamp(lo, hi) }).collect(),
        }
    }

    pub fn inflate(&self, r: f64) -> IntervalBox {
        IntervalBox { dims: self.dims.iter().map(|d| Interval { lo: d.lo - r, hi: d.hi + r }).collect() }
    }
}

/// Reusable buffers for the propagation kernels.
#[derive(Default, Debug, Clone)]
pub struct IbpScratch {
    lo: Vec<f64>,
    hi: Vec<f64>,
    next_lo: Vec<f64>,
    next_hi: Vec<f64>,
}

impl IbpScratch {
    pub fn lower(&self) -> &[f64] {
        &self.lo
    }

    pub fn upper(&self) -> &[f64] {
        &self.hi
    }
}

/// Propagates the input box `[in_lo, in_hi]` through every network whose
/// flat parameters lie in `[w_lo, w_hi]`. The result is left in `scratch`.
/// Shapes are not checked.
pub fn ibp_weight_bounds(
    arch: &Architecture,
    w_lo: &[f64],
    w_hi: &[f64],
    in_lo: &[f64],
    in_hi: &[f64],
    scratch: &mut IbpScratch,
) {
    scratch.lo.clear();
    scratch.lo.extend_from_slice(in_lo);
    scratch.hi.clear();
    scratch.hi.extend_from_slice(in_hi);
    let act = arch.activation();
    for layer in 0..arch.n_layers() {
        let (fi, fo) = arch.layer_dims(layer);
        let (w_off, b_off) = arch.layer_offsets(layer);
        scratch.next_lo.clear();
        scratch.next_hi.clear();
        for j in 0..fo {
            let row = w_off + j * fi;
            let mut lo = w_lo[b_off + j];
            let mut hi = w_hi[b_off + j];
            for i in 0..fi {
                let (pl, ph) = mul_bounds(w_lo[row + i], w_hi[row + i], scratch.lo[i], scratch.hi[i]);
                lo += pl;
                hi += ph;
            }
            scratch.next_lo.push(lo);
            scratch.next_hi.push(hi);
        }
        if arch.is_hidden(layer) {
            for j in 0..fo {
                scratch.next_lo[j] = act.apply(scratch.next_lo[j]);
                scratch.next_hi[j] = act.apply(scratch.next_hi[j]);
            }
        }
        std::mem::swap(&mut scratch.lo, &mut scratch.next_lo);
        std::mem::swap(&mut scratch.hi, &mut scratch.next_hi);
    }
}

/// Fixed-weight variant of [`ibp_weight_bounds`]; identical to it with a
/// degenerate weight box.
pub fn ibp_fixed_bounds(arch: &Architecture, params: &[f64], in_lo: &[f64], in_hi: &[f64], scratch: &mut IbpScratch) {
    scratch.lo.clear();
    scratch.lo.extend_from_slice(in_lo);
    scratch.hi.clear();
    scratch.hi.extend_from_slice(in_hi);
    let act = arch.activation();
    for layer in 0..arch.n_layers() {
        let (fi, fo) = arch.layer_dims(layer);
        let (w_off, b_off) = arch.layer_offsets(layer);
        scratch.next_lo.clear();
        scratch.next_hi.clear();
        for j in 0..fo {
            let row = &params[w_off + j * fi..w_off + (j + 1) * fi];
            let mut lo = params[b_off + j];
            let mut hi = lo;
            for i in 0..fi {
                let a = row[i] * scratch.lo[i];
                let b = row[i] * scratch.hi[i];
                lo += a.min(b);
                hi += a.max(b);
            }
            scratch.next_lo.push(lo);
            scratch.next_hi.push(hi);
        }
        if arch.is_hidden(layer) {
            for j in 0..fo {
                scratch.next_lo[j] = act.apply(scratch.next_lo[j]);
                scratch.next_hi[j] = act.apply(scratch.next_hi[j]);
            }
        }
        std::mem::swap(&mut scratch.lo, &mut scratch.next_lo);
        std::mem::swap(&mut scratch.hi, &mut scratch.next_hi);
    }
}

fn check_input(arch: &Architecture, input: &IntervalBox) -> Result<()> {
    if input.dim() != arch.input_dim() {
        return Err(Error::invalid(format!(
            "input box has {} dimensions, network expects {}",
            input.dim(),
            arch.input_dim()
        )));
    }
    Ok(())
}

fn to_box(scratch: &IbpScratch) -> IntervalBox {
    IntervalBox { dims: scratch.lo.iter().zip(&scratch.hi).map(|(&lo, &hi)| Interval { lo, hi }).collect() }
}

/// Bounds `f^w(x)` over every `w` in `wbox` and every `x` in `input`.
pub fn ibp_weight_box(arch: &Architecture, wbox: &WeightBox, input: &IntervalBox) -> Result<IntervalBox> {
    if wbox.len() != arch.n_params() {
        return Err(Error::invalid(format!(
            "weight box has {} parameters, architecture needs {}",
            wbox.len(),
            arch.n_params()
        )));
    }
    check_input(arch, input)?;
    let mut scratch = IbpScratch::default();
    ibp_weight_bounds(arch, wbox.lower(), wbox.upper(), &input.lower(), &input.upper(), &mut scratch);
    Ok(to_box(&scratch))
}

/// Bounds `f^w(x)` over every `x` in `input` for fixed weights.
pub fn ibp_fixed_weights(arch: &Architecture, w: &WeightSet, input: &IntervalBox) -> Result<IntervalBox> {
    w.check(arch)?;
    check_input(arch, input)?;
    let mut scratch = IbpScratch::default();
    ibp_fixed_bounds(arch, w.params(), &input.lower(), &input.upper(), &mut scratch);
    Ok(to_box(&scratch))
}

/// Layer endpoints of a fixed-weight propagation, kept for
/// reverse-mode differentiation of the output bounds.
#[derive(Debug, Clone)]
pub struct IbpTape {
    /// `lo[0]`/`hi[0]` are the input bounds, `lo[l + 1]`/`hi[l + 1]` the
    /// bounds after layer `l`.
    lo: Vec<Vec<f64>>,
    hi: Vec<Vec<f64>>,
    pre_lo: Vec<Vec<f64>>,
    pre_hi: Vec<Vec<f64>>,
}

impl IbpTape {
    pub fn lower(&self) -> &[f64] {
        self.lo.last().unwrap()
    }

    pub fn upper(&self) -> &[f64] {
        self.hi.last().unwrap()
    }
}

/// Same bounds as [`ibp_fixed_bounds`], recording intermediate endpoints.
pub fn ibp_fixed_tape(arch: &Architecture, params: &[f64], in_lo: &[f64], in_hi: &[f64]) -> IbpTape {
    let act = arch.activation();
    let mut tape = IbpTape { lo: vec![in_lo.to_vec()], hi: vec![in_hi.to_vec()], pre_lo: vec![], pre_hi: vec![] };
    for layer in 0..arch.n_layers() {
        let (fi, fo) = arch.layer_dims(layer);
        let (w_off, b_off) = arch.layer_offsets(layer);
        let (l, h) = (tape.lo.last().unwrap(), tape.hi.last().unwrap());
        let mut zl = Vec::with_capacity(fo);
        let mut zh = Vec::with_capacity(fo);
        for j in 0..fo {
            let row = &params[w_off + j * fi..w_off + (j + 1) * fi];
            let mut lo = params[b_off + j];
            let mut hi = lo;
            for i in 0..fi {
                let a = row[i] * l[i];
                let b = row[i] * h[i];
                lo += a.min(b);
                hi += a.max(b);
            }
            zl.push(lo);
            zh.push(hi);
        }
        let (ol, oh) = if arch.is_hidden(layer) {
            (zl.iter().map(|z| act.apply(*z)).collect(), zh.iter().map(|z| act.apply(*z)).collect())
        } else {
            (zl.clone(), zh.clone())
        };
        tape.pre_lo.push(zl);
        tape.pre_hi.push(zh);
        tape.lo.push(ol);
        tape.hi.push(oh);
    }
    tape
}

/// Back-propagates `g_lo · lower + g_hi · upper` through a recorded
/// propagation. Parameter gradients are accumulated into `grad_params` when
/// given; input-bound gradients are written to `grad_in_lo` and `grad_in_hi`.
#[allow(clippy::too_many_arguments)]
pub fn ibp_fixed_backward(
    arch: &Architecture,
    params: &[f64],
    tape: &IbpTape,
    g_lo: &[f64],
    g_hi: &[f64],
    mut grad_params: Option<&mut [f64]>,
    grad_in_lo: &mut [f64],
    grad_in_hi: &mut [f64],
) {
    let act = arch.activation();
    let mut dl = g_lo.to_vec();
    let mut dh = g_hi.to_vec();
    for layer in (0..arch.n_layers()).rev() {
        let (fi, fo) = arch.layer_dims(layer);
        let (w_off, b_off) = arch.layer_offsets(layer);
        if arch.is_hidden(layer) {
            for j in 0..fo {
                let (zl, zh) = (tape.pre_lo[layer][j], tape.pre_hi[layer][j]);
                dl[j] *= act.derivative(zl, tape.lo[layer + 1][j]);
                dh[j] *= act.derivative(zh, tape.hi[layer + 1][j]);
            }
        }
        let (l, h) = (&tape.lo[layer], &tape.hi[layer]);
        let mut pl = vec![0.0; fi];
        let mut ph = vec![0.0; fi];
        for j in 0..fo {
            let row = &params[w_off + j * fi..w_off + (j + 1) * fi];
            if let Some(g) = grad_params.as_deref_mut() {
                g[b_off + j] += dl[j] + dh[j];
            }
            for i in 0..fi {
                let w = row[i];
                // same endpoint selection as the forward `min`/`max`
                let lower_first = w * l[i] <= w * h[i];
                let (src_lo, src_hi) = if lower_first { (l[i], h[i]) } else { (h[i], l[i]) };
                if let Some(g) = grad_params.as_deref_mut() {
                    g[w_off + j * fi + i] += dl[j] * src_lo + dh[j] * src_hi;
                }
                if lower_first {
                    pl[i] += dl[j] * w;
                    ph[i] += dh[j] * w;
                } else {
                    ph[i] += dl[j] * w;
                    pl[i] += dh[j] * w;
                }
            }
        }
        dl = pl;
        dh = ph;
    }
    grad_in_lo.copy_from_slice(&dl);
    grad_in_hi.copy_from_slice(&dh);
}

pub fn add_noise_margin(b: &IntervalBox, eps: f64) -> Result<IntervalBox> {
    if !(eps >= 0.0) {
        return Err(Error::invalid(format!("noise margin must be non-negative, got {eps}")));
    }
    Ok(b.inflate(eps))
}

/// Inverse error function. The statrs rational approximation is polished by
/// one Newton step on `erf`, giving close to full double precision on (-1, 1).
pub fn erf_inv(y: f64) -> f64 {
    let x = erf::erf_inv(y);
    if !x.is_finite() {
        return x;
    }
    let fx = erf::erf(x) - y;
    let dfx = 2.0 / std::f64::consts::PI.sqrt() * (-x * x).exp();
    x - fx / dfx
}

/// Truncation radius `√(2σ²)·erf⁻¹(η)`: a Gaussian coordinate with standard
/// deviation `σ` lies in `[-ε, ε]` with probability `η`.
pub fn epsilon_for(eta: f64, sigma: f64) -> Result<f64> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::invalid(format!("eta must lie in (0, 1), got {eta}")));
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::invalid(format!("sigma must be positive, got {sigma}")));
    }
    Ok((2.0 * sigma * sigma).sqrt() * erf_inv(eta))
}
