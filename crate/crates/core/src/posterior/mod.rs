//! Approximate posteriors over network weights and their box-mass queries.

mod hmc;
mod vi;

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::{erf, erfc};

use crate::container;
use crate::nn::{forward_with, Architecture, ForwardScratch, WeightSet};
use crate::{Error, Result};

pub use hmc::{hmc_fit, HmcConfig};
pub use vi::{vi_fit, ViConfig};

const POSTERIOR_MAGIC: &[u8; 4] = b"RCPO";

/// Training pairs `(state ⊕ action) → next state`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    inputs: Vec<Vec<f64>>,
    targets: Vec<Vec<f64>>,
}

impl Dataset {
    pub fn new(inputs: Vec<Vec<f64>>, targets: Vec<Vec<f64>>) -> Result<Self> {
        if inputs.len() != targets.len() {
            return Err(Error::invalid(format!("{} inputs but {} targets", inputs.len(), targets.len())));
        }
        let mut ds = Dataset::default();
        for (x, y) in inputs.into_iter().zip(targets) {
            ds.push(x, y)?;
        }
        Ok(ds)
    }

    pub fn push(&mut self, x: Vec<f64>, y: Vec<f64>) -> Result<()> {
        if let (Some(x0), Some(y0)) = (self.inputs.first(), self.targets.first()) {
            if x.len() != x0.len() || y.len() != y0.len() {
                return Err(Error::invalid("dataset rows have inconsistent dimensions"));
            }
        }
        self.inputs.push(x);
        self.targets.push(y);
        Ok(())
    }

    pub fn extend(&mut self, other: &Dataset) -> Result<()> {
        for (x, y) in other.inputs.iter().zip(&other.targets) {
            self.push(x.clone(), y.clone())?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn targets(&self) -> &[Vec<f64>] {
        &self.targets
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.first().map_or(0, Vec::len)
    }

    pub fn target_dim(&self) -> usize {
        self.targets.first().map_or(0, Vec::len)
    }

    /// CSV with header `x0,..,x{m-1},y0,..,y{n-1}`.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let cols: Vec<String> = (0..self.input_dim())
            .map(|i| format!("x{i}"))
            .chain((0..self.target_dim()).map(|i| format!("y{i}")))
            .collect();
        out.push_str(&cols.join(","));
        out.push('\n');
        for (x, y) in self.inputs.iter().zip(&self.targets) {
            let row: Vec<String> = x.iter().chain(y).map(|v| format!("{v:?}")).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::Format("empty dataset file".into()))?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        let m = cols.iter().filter(|c| c.starts_with('x')).count();
        let n = cols.iter().filter(|c| c.starts_with('y')).count();
        if m + n != cols.len() || m == 0 || n == 0 {
            return Err(Error::Format("dataset header must list x* then y* columns".into()));
        }
        let mut ds = Dataset::default();
        for (lineno, line) in lines.enumerate() {
            let vals: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Format(format!("dataset row {}: {e}", lineno + 1)))?;
            if vals.len() != m + n {
                return Err(Error::Format(format!("dataset row {} has {} values", lineno + 1, vals.len())));
            }
            ds.push(vals[..m].to_vec(), vals[m..].to_vec())?;
        }
        Ok(ds)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_csv(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// Axis-aligned box `[lower, upper]` in flat parameter space.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl WeightBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::invalid("weight box bounds differ in length"));
        }
        if let Some(i) = (0..lower.len()).find(|&i| !(lower[i] <= upper[i])) {
            return Err(Error::invalid(format!(
                "weight box dimension {i}: lower {} exceeds upper {}",
                lower[i], upper[i]
            )));
        }
        Ok(Self { lower, upper })
    }

    /// `[center − half, center + half]`.
    pub fn around(center: &[f64], half: &[f64]) -> Result<Self> {
        if center.len() != half.len() {
            return Err(Error::invalid("center and half-widths differ in length"));
        }
        Self::new(
            center.iter().zip(half).map(|(c, h)| c - h).collect(),
            center.iter().zip(half).map(|(c, h)| c + h).collect(),
        )
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    pub fn contains(&self, w: &[f64]) -> bool {
        w.len() == self.len() && (0..w.len()).all(|i| self.lower[i] <= w[i] && w[i] <= self.upper[i])
    }

    /// Closed boxes: sharing a face counts as intersecting.
    pub fn intersects(&self, other: &WeightBox) -> bool {
        (0..self.len()).all(|i| self.lower[i] <= other.upper[i] && other.lower[i] <= self.upper[i])
    }

    pub fn contains_box(&self, other: &WeightBox) -> bool {
        (0..self.len()).all(|i| self.lower[i] <= other.lower[i] && other.upper[i] <= self.upper[i])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub method: String,
    pub seed: u64,
    /// Method-specific settings and diagnostics.
    pub details: serde_json::Value,
}

/// Equally weighted posterior samples, e.g. from HMC.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplePosterior {
    arch: Architecture,
    samples: Vec<WeightSet>,
    pub provenance: Provenance,
}

impl SamplePosterior {
    pub fn new(arch: Architecture, samples: Vec<WeightSet>, provenance: Provenance) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("a sample posterior needs at least one sample"));
        }
        for s in &samples {
            s.check(&arch)?;
        }
        Ok(Self { arch, samples, provenance })
    }

    pub fn samples(&self) -> &[WeightSet] {
        &self.samples
    }
}

/// Mean-field Gaussian over the flat parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianPosterior {
    arch: Architecture,
    mean: Vec<f64>,
    variance: Vec<f64>,
    pub provenance: Provenance,
}

impl GaussianPosterior {
    pub fn new(arch: Architecture, mean: Vec<f64>, variance: Vec<f64>, provenance: Provenance) -> Result<Self> {
        if mean.len() != arch.n_params() || variance.len() != arch.n_params() {
            return Err(Error::invalid("mean and variance must have one entry per parameter"));
        }
        if variance.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::invalid("variances must be positive and finite"));
        }
        Ok(Self { arch, mean, variance, provenance })
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn variance(&self) -> &[f64] {
        &self.variance
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Posterior {
    Samples(SamplePosterior),
    Gaussian(GaussianPosterior),
}

impl From<SamplePosterior> for Posterior {
    fn from(p: SamplePosterior) -> Self {
        Posterior::Samples(p)
    }
}

impl From<GaussianPosterior> for Posterior {
    fn from(p: GaussianPosterior) -> Self {
        Posterior::Gaussian(p)
    }
}

/// `½[erf(b) − erf(a)]`, switching to `erfc` in the tails to avoid
/// cancellation.
fn std_normal_interval(a: f64, b: f64) -> f64 {
    let m = if a >= 0.0 {
        0.5 * (erfc(a) - erfc(b))
    } else if b <= 0.0 {
        0.5 * (erfc(-b) - erfc(-a))
    } else {
        0.5 * (erf(b) - erf(a))
    };
    m.clamp(0.0, 1.0)
}

impl Posterior {
    pub fn arch(&self) -> &Architecture {
        match self {
            Posterior::Samples(p) => &p.arch,
            Posterior::Gaussian(p) => &p.arch,
        }
    }

    pub fn n_params(&self) -> usize {
        self.arch().n_params()
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Posterior::Samples(_) => "samples",
            Posterior::Gaussian(_) => "gaussian",
        }
    }

    pub fn provenance(&self) -> &Provenance {
        match self {
            Posterior::Samples(p) => &p.provenance,
            Posterior::Gaussian(p) => &p.provenance,
        }
    }

    /// Writes one posterior draw into `out`.
    pub fn draw_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut Vec<f64>) {
        out.clear();
        match self {
            Posterior::Samples(p) => {
                let i = rng.random_range(0..p.samples.len());
                out.extend_from_slice(p.samples[i].params());
            }
            Posterior::Gaussian(p) => {
                for (m, v) in p.mean.iter().zip(&p.variance) {
                    let z: f64 = StandardNormal.sample(rng);
                    out.push(m + v.sqrt() * z);
                }
            }
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> WeightSet {
        let mut v = Vec::with_capacity(self.n_params());
        self.draw_into(rng, &mut v);
        WeightSet::unflatten(self.arch(), &v).expect("posterior draws match the architecture")
    }

    fn check_box(&self, b: &WeightBox) -> Result<()> {
        if b.len() != self.n_params() {
            return Err(Error::invalid(format!(
                "weight box has {} parameters, posterior has {}",
                b.len(),
                self.n_params()
            )));
        }
        Ok(())
    }

    /// Posterior probability of the closed box.
    pub fn box_mass(&self, b: &WeightBox) -> Result<f64> {
        self.check_box(b)?;
        Ok(self.box_mass_unchecked(b))
    }

    pub(crate) fn box_mass_unchecked(&self, b: &WeightBox) -> f64 {
        match self {
            Posterior::Samples(p) => {
                let inside = p.samples.iter().filter(|s| b.contains(s.params())).count();
                inside as f64 / p.samples.len() as f64
            }
            Posterior::Gaussian(p) => {
                let mut mass = 1.0;
                for j in 0..p.mean.len() {
                    let s = (2.0 * p.variance[j]).sqrt();
                    mass *= std_normal_interval((b.lower[j] - p.mean[j]) / s, (b.upper[j] - p.mean[j]) / s);
                    if mass == 0.0 {
                        break;
                    }
                }
                mass
            }
        }
    }

    /// Mass of a union of pairwise-disjoint boxes. Overlapping boxes are
    /// rejected; callers disjointify first.
    pub fn mass_of_disjoint_union(&self, boxes: &[WeightBox]) -> Result<f64> {
        for b in boxes {
            self.check_box(b)?;
        }
        for i in 0..boxes.len() {
            for j in 0..i {
                if boxes[i].intersects(&boxes[j]) {
                    return Err(Error::invalid(format!("weight boxes {j} and {i} overlap")));
                }
            }
        }
        Ok(self.disjoint_union_unchecked(boxes))
    }

    pub(crate) fn disjoint_union_unchecked(&self, boxes: &[WeightBox]) -> f64 {
        match self {
            Posterior::Samples(p) => {
                let inside = p.samples.iter().filter(|s| boxes.iter().any(|b| b.contains(s.params()))).count();
                inside as f64 / p.samples.len() as f64
            }
            Posterior::Gaussian(_) => {
                let total: f64 = boxes.iter().map(|b| self.box_mass_unchecked(b)).sum();
                total.min(1.0)
            }
        }
    }

    /// Per-output population variance of `f^w(x)` over all samples, or over
    /// `n_draws` draws of a Gaussian posterior.
    pub fn predictive_variance<R: Rng + ?Sized>(&self, x: &[f64], n_draws: usize, rng: &mut R) -> Result<Vec<f64>> {
        let arch = self.arch();
        if x.len() != arch.input_dim() {
            return Err(Error::invalid("input length does not match the network"));
        }
        let mut scratch = ForwardScratch::default();
        let mut outputs: Vec<Vec<f64>> = Vec::new();
        match self {
            Posterior::Samples(p) => {
                for s in &p.samples {
                    outputs.push(forward_with(arch, s.params(), x, &mut scratch).to_vec());
                }
            }
            Posterior::Gaussian(_) => {
                let mut w = Vec::new();
                for _ in 0..n_draws.max(1) {
                    self.draw_into(rng, &mut w);
                    outputs.push(forward_with(arch, &w, x, &mut scratch).to_vec());
                }
            }
        }
        let n = outputs.len() as f64;
        let d = arch.output_dim();
        Ok((0..d)
            .map(|j| {
                let mean = outputs.iter().map(|o| o[j]).sum::<f64>() / n;
                (outputs.iter().map(|o| (o[j] - mean).powi(2)).sum::<f64>() / n).max(0.0)
            })
            .collect())
    }

    /// Posterior mean of the flat parameters.
    pub fn mean_params(&self) -> Vec<f64> {
        match self {
            Posterior::Samples(p) => {
                let n = p.samples.len() as f64;
                let mut m = vec![0.0; self.n_params()];
                for s in &p.samples {
                    for (a, b) in m.iter_mut().zip(s.params()) {
                        *a += b;
                    }
                }
                m.iter_mut().for_each(|v| *v /= n);
                m
            }
            Posterior::Gaussian(p) => p.mean.clone(),
        }
    }

    /// Per-parameter posterior standard deviation (population convention for
    /// sample posteriors).
    pub fn param_std(&self) -> Vec<f64> {
        match self {
            Posterior::Samples(p) => {
                let mean = self.mean_params();
                let n = p.samples.len() as f64;
                (0..self.n_params())
                    .map(|j| (p.samples.iter().map(|s| (s.params()[j] - mean[j]).powi(2)).sum::<f64>() / n).sqrt())
                    .collect()
            }
            Posterior::Gaussian(p) => p.variance.iter().map(|v| v.sqrt()).collect(),
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let (count, payload) = match self {
            Posterior::Samples(p) => {
                (p.samples.len(), p.samples.iter().flat_map(|s| s.params().iter().copied()).collect::<Vec<_>>())
            }
            Posterior::Gaussian(p) => (1, p.mean.iter().chain(&p.variance).copied().collect::<Vec<_>>()),
        };
        let header = serde_json::json!({
            "kind": self.kind(),
            "architecture": self.arch(),
            "n_params": self.n_params(),
            "n_samples": count,
            "flattening": "layer-major; weights row-major (one row per output unit) then biases",
            "payload": match self {
                Posterior::Samples(_) => "samples concatenated",
                Posterior::Gaussian(_) => "mean then variance",
            },
            "provenance": self.provenance(),
        });
        container::encode(POSTERIOR_MAGIC, &header, &payload)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        #[derive(Deserialize)]
        struct Header {
            kind: String,
            architecture: Architecture,
            n_samples: usize,
            provenance: Provenance,
        }
        let (header, payload) = container::decode(POSTERIOR_MAGIC, bytes)?;
        let h: Header = serde_json::from_value(header)?;
        let n = h.architecture.n_params();
        match h.kind.as_str() {
            "samples" => {
                if payload.len() != n * h.n_samples {
                    return Err(Error::Format("sample payload has the wrong length".into()));
                }
                let samples = payload
                    .chunks_exact(n.max(1))
                    .map(|c| WeightSet::unflatten(&h.architecture, c))
                    .collect::<Result<_>>()?;
                Ok(SamplePosterior::new(h.architecture, samples, h.provenance)?.into())
            }
            "gaussian" => {
                if payload.len() != 2 * n {
                    return Err(Error::Format("gaussian payload has the wrong length".into()));
                }
                let (m, v) = payload.split_at(n);
                Ok(GaussianPosterior::new(h.architecture, m.to_vec(), v.to_vec(), h.provenance)?.into())
            }
            other => Err(Error::Format(format!("unknown posterior kind {other:?}"))),
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

/// Negative log posterior (up to a constant) and its gradient.
pub(crate) fn neg_log_posterior(
    arch: &Architecture,
    data: &Dataset,
    prior_var: &[f64],
    sigma: f64,
    params: &[f64],
    grad: &mut [f64],
) -> f64 {
    grad.iter_mut().for_each(|g| *g = 0.0);
    let inv_s2 = 1.0 / (sigma * sigma);
    let mut energy = 0.0;
    let mut g_out = vec![0.0; arch.output_dim()];
    for (x, y) in data.inputs().iter().zip(data.targets()) {
        let tape = crate::nn::forward_tape(arch, params, x);
        for (j, (o, t)) in tape.output().iter().zip(y).enumerate() {
            let r = o - t;
            energy += 0.5 * r * r * inv_s2;
            g_out[j] = r * inv_s2;
        }
        crate::nn::backward(arch, params, &tape, &g_out, grad, None);
    }
    for j in 0..params.len() {
        energy += 0.5 * params[j] * params[j] / prior_var[j];
        grad[j] += params[j] / prior_var[j];
    }
    energy
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Activation;
    use crate::rng::stream;

    fn arch11() -> Architecture {
        Architecture::new(vec![1, 1], Activation::Sigmoid).unwrap()
    }

    fn prov() -> Provenance {
        Provenance { method: "test".into(), seed: 0, details: serde_json::Value::Null }
    }

    fn samples(vals: &[f64]) -> Posterior {
        let arch = arch11();
        let s = vals.iter().map(|&v| WeightSet::unflatten(&arch, &[v, 0.0]).unwrap()).collect();
        SamplePosterior::new(arch, s, prov()).unwrap().into()
    }

    fn wb(lo: f64, hi: f64) -> WeightBox {
        WeightBox::new(vec![lo, -1.0], vec![hi, 1.0]).unwrap()
    }

    #[test]
    fn sample_counting() {
        let p = samples(&[0.0, 1.0, 2.0, 3.0]);
        assert_eq!(p.box_mass(&wb(0.5, 2.5)).unwrap(), 0.5);
        assert_eq!(p.mass_of_disjoint_union(&[]).unwrap(), 0.0);
        assert_eq!(p.mass_of_disjoint_union(&[wb(-0.5, 0.5), wb(2.5, 3.5)]).unwrap(), 0.5);
        assert!(p.mass_of_disjoint_union(&[wb(0.0, 1.0), wb(1.0, 2.0)]).is_err());
    }

    #[test]
    fn single_sample_draws() {
        let p = samples(&[0.7]);
        let mut rng = stream(1, &[]);
        for _ in 0..10 {
            assert_eq!(p.draw(&mut rng).params(), &[0.7, 0.0]);
        }
    }

    #[test]
    fn gaussian_masses() {
        let g: Posterior = GaussianPosterior::new(arch11(), vec![0.0, 0.0], vec![1.0, 1.0], prov()).unwrap().into();
        let b = WeightBox::new(vec![-1.0, -1e9], vec![1.0, 1e9]).unwrap();
        let m = g.box_mass(&b).unwrap();
        assert!((m - 0.682_689_492_137_085_9).abs() < 1e-9, "{m}");
        let wide = WeightBox::new(vec![-1e9; 2], vec![1e9; 2]).unwrap();
        assert!((g.box_mass(&wide).unwrap() - 1.0).abs() < 1e-15);
        let u = g
            .mass_of_disjoint_union(&[
                WeightBox::new(vec![-1.0, -1e9], vec![0.0, 1e9]).unwrap(),
                WeightBox::new(vec![0.0001, -1e9], vec![1.0, 1e9]).unwrap(),
            ])
            .unwrap();
        assert!((u - 0.682_689_5).abs() < 1e-3);
        assert!(g.box_mass(&WeightBox::new(vec![0.0], vec![1.0]).unwrap()).is_err());
        assert!(WeightBox::new(vec![1.0], vec![0.0]).is_err());
    }

    #[test]
    fn tail_masses_are_accurate() {
        // erf(9) - erf(8) underflows to 0 in double precision, erfc does not
        assert!(std_normal_interval(8.0, 9.0) > 0.0);
        assert!(std_normal_interval(-9.0, -8.0) > 0.0);
        assert_eq!(std_normal_interval(-f64::INFINITY, f64::INFINITY), 1.0);
    }

    #[test]
    fn gaussian_draws_concentrate() {
        let g: Posterior =
            GaussianPosterior::new(arch11(), vec![0.3, -0.2], vec![1e-300, 1e-300], prov()).unwrap().into();
        let mut rng = stream(2, &[]);
        let d = g.draw(&mut rng);
        assert!((d.params()[0] - 0.3).abs() < 1e-100);
        let g: Posterior = GaussianPosterior::new(arch11(), vec![0.3, -0.2], vec![4.0, 0.25], prov()).unwrap().into();
        let n = 100_000;
        let mut sum = [0.0; 2];
        for _ in 0..n {
            let d = g.draw(&mut rng);
            sum[0] += d.params()[0];
            sum[1] += d.params()[1];
        }
        assert!((sum[0] / n as f64 - 0.3).abs() < 4.0 * 2.0 / (n as f64).sqrt());
        assert!((sum[1] / n as f64 + 0.2).abs() < 4.0 * 0.5 / (n as f64).sqrt());
    }

    #[test]
    fn predictive_variance_population() {
        let arch = arch11();
        let s =
            vec![WeightSet::unflatten(&arch, &[0.0, 0.0]).unwrap(), WeightSet::unflatten(&arch, &[0.0, 2.0]).unwrap()];
        let p: Posterior = SamplePosterior::new(arch, s, prov()).unwrap().into();
        let mut rng = stream(3, &[]);
        assert_eq!(p.predictive_variance(&[1.0], 100, &mut rng).unwrap(), vec![1.0]);
        assert_eq!(samples(&[0.4]).predictive_variance(&[1.0], 100, &mut rng).unwrap(), vec![0.0]);
    }

    #[test]
    fn file_round_trip() {
        let p = samples(&[0.1, 0.2, 0.3]);
        assert_eq!(Posterior::from_bytes(&p.to_bytes().unwrap()).unwrap(), p);
        let g: Posterior = GaussianPosterior::new(arch11(), vec![0.1, 0.2], vec![0.3, 0.4], prov()).unwrap().into();
        assert_eq!(Posterior::from_bytes(&g.to_bytes().unwrap()).unwrap(), g);
        assert!(GaussianPosterior::new(arch11(), vec![0.0; 2], vec![0.0, 1.0], prov()).is_err());
    }

    #[test]
    fn dataset_csv_round_trip() {
        let ds = Dataset::new(vec![vec![0.1, 0.2, 1.0 / 3.0]], vec![vec![-0.5, 1e-17]]).unwrap();
        assert_eq!(Dataset::from_csv(&ds.to_csv()).unwrap(), ds);
        assert!(Dataset::new(vec![vec![0.0]], vec![]).is_err());
        assert!(Dataset::from_csv("x0,y0\n1,2,3\n").is_err());
    }

    #[test]
    fn gradient_of_energy() {
        let arch = Architecture::new(vec![2, 3, 1], Activation::Tanh).unwrap();
        let data = Dataset::new(vec![vec![0.1, 0.5], vec![-0.3, 0.2]], vec![vec![0.4], vec![-0.1]]).unwrap();
        let prior = crate::nn::glorot_prior(&arch);
        let p: Vec<f64> = (0..arch.n_params()).map(|i| (i as f64 * 0.7).sin()).collect();
        let mut g = vec![0.0; p.len()];
        neg_log_posterior(&arch, &data, &prior, 0.3, &p, &mut g);
        let mut tmp = vec![0.0; p.len()];
        for i in 0..p.len() {
            let mut a = p.clone();
            let mut b = p.clone();
            a[i] += 1e-6;
            b[i] -= 1e-6;
            let fd = (neg_log_posterior(&arch, &data, &prior, 0.3, &a, &mut tmp)
                - neg_log_posterior(&arch, &data, &prior, 0.3, &b, &mut tmp))
                / 2e-6;
            assert!((fd - g[i]).abs() < 1e-5 * (1.0 + fd.abs()));
        }
    }
}
