//! Reference values for one-dimensional systems with Gaussian-mixture
//! transitions, computed by numerical integration of the exact dynamic
//! programme
//!
//! ```text
//! V_N(x) = 1_G(x)
//! V_k(x) = 1_G(x) + 1_S(x) ∫ V_{k+1}(x') p(x' | x, π_k(x)) dx'
//! ```
//!
//! The goal mass is integrated in closed form; the rest of the safe set uses
//! a midpoint rule on `n_points` bins with exact Gaussian bin masses.

use statrs::function::erf::erfc;

use crate::env::{Label, ReachAvoidSpec};
use crate::{Error, Result};

/// Transition `x' ~ Σ_j p_j N(m_j, σ²)` where `(p_j, m_j) = means(x, k)`.
pub struct MixtureKernel<'a> {
    pub sigma: f64,
    pub means: &'a (dyn Fn(f64, usize) -> Vec<(f64, f64)> + Sync),
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

fn gaussian_mass(mean: f64, sigma: f64, a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let (za, zb) = ((a - mean) / sigma, (b - mean) / sigma);
    if za > 0.0 {
        normal_cdf(-za) - normal_cdf(-zb)
    } else {
        normal_cdf(zb) - normal_cdf(za)
    }
}

#[derive(Clone, Debug)]
pub struct OracleValues {
    lo: f64,
    h: f64,
    points: Vec<f64>,
    labels: Vec<Label>,
    /// `tables[k][i]` is `V_k` at `points[i]`.
    tables: Vec<Vec<f64>>,
    goal: (f64, f64),
}

impl OracleValues {
    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn horizon(&self) -> usize {
        self.tables.len() - 1
    }

    pub fn table(&self, k: usize) -> &[f64] {
        &self.tables[k]
    }

    /// Smallest tabulated `V_k` over quadrature points in `[a, b]`.
    pub fn min_on(&self, k: usize, a: f64, b: f64) -> Option<f64> {
        self.points.iter().zip(&self.tables[k]).filter(|(p, _)| **p >= a && **p <= b).map(|(_, v)| *v).reduce(f64::min)
    }

    fn integrate(&self, next: &[f64], mean: f64, sigma: f64) -> f64 {
        let mut total = gaussian_mass(mean, sigma, self.goal.0, self.goal.1);
        let reach = 9.0 * sigma;
        let n = self.points.len();
        let first = (((mean - reach - self.lo) / self.h).floor().max(0.0) as usize).min(n);
        let last = (((mean + reach - self.lo) / self.h).ceil().max(0.0) as usize).min(n);
        for i in first..last {
            if self.labels[i] != Label::Safe || next[i] == 0.0 {
                continue;
            }
            let (a, b) = (self.lo + i as f64 * self.h, self.lo + (i + 1) as f64 * self.h);
            let in_goal = gaussian_mass(mean, sigma, a.max(self.goal.0), b.min(self.goal.1));
            total += next[i] * (gaussian_mass(mean, sigma, a, b) - in_goal).max(0.0);
        }
        total.clamp(0.0, 1.0)
    }

    fn value_at(&self, spec: &ReachAvoidSpec, kernel: &MixtureKernel<'_>, k: usize, x: f64) -> f64 {
        match spec.classify(&[x]) {
            Label::Goal => 1.0,
            Label::Unsafe => 0.0,
            Label::Safe if k == self.horizon() => 0.0,
            Label::Safe => (kernel.means)(x, k)
                .iter()
                .map(|(p, m)| p * self.integrate(&self.tables[k + 1], *m, kernel.sigma))
                .sum::<f64>()
                .clamp(0.0, 1.0),
        }
    }

    /// `V_k(x)` at an arbitrary state, integrating against the tabulated
    /// `V_{k+1}`.
    pub fn eval(&self, spec: &ReachAvoidSpec, kernel: &MixtureKernel<'_>, k: usize, x: f64) -> f64 {
        self.value_at(spec, kernel, k, x)
    }
}

/// Tabulates `V_k` for `k = 0, …, spec.horizon` on `n_points` midpoints
/// spanning the bounds.
pub fn exact_recursion_oracle(
    kernel: &MixtureKernel<'_>,
    spec: &ReachAvoidSpec,
    n_points: usize,
) -> Result<OracleValues> {
    if spec.position_dim() != 1 {
        return Err(Error::invalid("the quadrature oracle handles one-dimensional systems"));
    }
    if n_points < 2 || !(kernel.sigma > 0.0) {
        return Err(Error::invalid("need at least two quadrature points and sigma > 0"));
    }
    let bounds = spec.bounds.get(0);
    let h = bounds.width() / n_points as f64;
    let points: Vec<f64> = (0..n_points).map(|i| bounds.lo + (i as f64 + 0.5) * h).collect();
    let labels: Vec<Label> = points.iter().map(|p| spec.classify(&[*p])).collect();
    let n = spec.horizon;
    let goal = (spec.goal.get(0).lo, spec.goal.get(0).hi);
    let terminal: Vec<f64> = labels.iter().map(|l| if *l == Label::Goal { 1.0 } else { 0.0 }).collect();
    let mut out = OracleValues { lo: bounds.lo, h, points, labels, tables: vec![Vec::new(); n + 1], goal };
    out.tables[n] = terminal;
    for k in (0..n).rev() {
        let row: Vec<f64> = out.points.iter().map(|&x| out.value_at(spec, kernel, k, x)).collect();
        out.tables[k] = row;
    }
    Ok(out)
}
