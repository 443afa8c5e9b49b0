//! Mean-field Gaussian variational inference with reparameterisation
//! gradients.

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::hmc::check_data;
use super::{Dataset, GaussianPosterior, Provenance};
use crate::nn::{backward, forward_tape, glorot_prior, Architecture};
use crate::optim::Adam;
use crate::rng::stream;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ViConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Learning rate at epoch `e` is `learning_rate / (1 + decay·e)`.
    pub decay: f64,
    pub batch_size: usize,
    pub likelihood_sigma: f64,
    /// Standard deviation of every factor at initialisation.
    pub init_std: f64,
    pub seed: u64,
}

impl Default for ViConfig {
    fn default() -> Self {
        Self {
            epochs: 1500,
            learning_rate: 0.025,
            decay: 0.1,
            batch_size: 64,
            likelihood_sigma: 0.1,
            init_std: 0.01,
            seed: 0,
        }
    }
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn softplus_inv(y: f64) -> f64 {
    if y > 30.0 {
        y
    } else {
        y.exp_m1().ln()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Maximises the evidence lower bound under the doubled-Glorot prior. The
/// per-epoch ELBO estimates are kept in the provenance as `elbo_trace`.
pub fn vi_fit(data: &Dataset, arch: &Architecture, cfg: &ViConfig) -> Result<GaussianPosterior> {
    check_data(data, arch)?;
    if cfg.batch_size == 0 || !(cfg.likelihood_sigma > 0.0) || !(cfg.init_std > 0.0) {
        return Err(Error::invalid("batch_size, likelihood_sigma and init_std must be positive"));
    }
    let n = arch.n_params();
    let prior = glorot_prior(arch);
    let mut rng = stream(cfg.seed, &[0x7669]);
    let mut mu: Vec<f64> = prior.iter().map(|v| Normal::new(0.0, v.sqrt()).unwrap().sample(&mut rng)).collect();
    let mut rho = vec![softplus_inv(cfg.init_std); n];

    let inv_s2 = 1.0 / (cfg.likelihood_sigma * cfg.likelihood_sigma);
    let n_data = data.len();
    let mut order: Vec<usize> = (0..n_data).collect();
    let mut opt_mu = Adam::new(n, cfg.learning_rate);
    let mut opt_rho = Adam::new(n, cfg.learning_rate);
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut eps = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut g_w = vec![0.0; n];
    let mut g_mu = vec![0.0; n];
    let mut g_rho = vec![0.0; n];
    let mut g_out = vec![0.0; arch.output_dim()];
    for epoch in 0..cfg.epochs {
        let lr = cfg.learning_rate / (1.0 + cfg.decay * epoch as f64);
        opt_mu.lr = lr;
        opt_rho.lr = lr;
        order.shuffle(&mut rng);
        let n_batches = n_data.div_ceil(cfg.batch_size);
        let mut elbo = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let scale = n_data as f64 / batch.len() as f64;
            for i in 0..n {
                eps[i] = StandardNormal.sample(&mut rng);
                w[i] = mu[i] + softplus(rho[i]) * eps[i];
            }
            // gradient of the negative ELBO with respect to w
            g_w.iter_mut().for_each(|g| *g = 0.0);
            let mut nll = 0.0;
            for &r in batch {
                let tape = forward_tape(arch, &w, &data.inputs()[r]);
                for (j, (o, t)) in tape.output().iter().zip(&data.targets()[r]).enumerate() {
                    let res = o - t;
                    nll += 0.5 * res * res * inv_s2;
                    g_out[j] = res * inv_s2 * scale;
                }
                backward(arch, &w, &tape, &g_out, &mut g_w, None);
            }
            let mut kl = 0.0;
            for i in 0..n {
                let s = softplus(rho[i]);
                let p = prior[i];
                kl += 0.5 * ((s * s + mu[i] * mu[i]) / p - 1.0 - (s * s / p).ln());
                // KL is shared by all batches of the epoch
                let kl_mu = mu[i] / p / n_batches as f64;
                let kl_s = (s / p - 1.0 / s) / n_batches as f64;
                g_mu[i] = g_w[i] + kl_mu;
                g_rho[i] = (g_w[i] * eps[i] + kl_s) * sigmoid(rho[i]);
            }
            elbo += -(nll * scale) / n_batches as f64 - kl / n_batches as f64;
            if !elbo.is_finite() || g_mu.iter().chain(&g_rho).any(|g| !g.is_finite()) {
                return Err(Error::InferenceFailure(format!("ELBO diverged at epoch {epoch}")));
            }
            opt_mu.step(&mut mu, &g_mu);
            opt_rho.step(&mut rho, &g_rho);
        }
        trace.push(elbo);
    }

    let variance: Vec<f64> = rho.iter().map(|r| softplus(*r).powi(2).max(f64::MIN_POSITIVE)).collect();
    let provenance = Provenance {
        method: "vi".into(),
        seed: cfg.seed,
        details: serde_json::json!({ "config": cfg, "elbo_trace": trace }),
    };
    GaussianPosterior::new(arch.clone(), mu, variance, provenance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Activation;
    use crate::posterior::Posterior;

    fn arch() -> Architecture {
        Architecture::new(vec![1, 1], Activation::Sigmoid).unwrap()
    }

    #[test]
    fn zero_epochs_returns_initialisation() {
        let data = Dataset::new(vec![vec![1.0]], vec![vec![2.0]]).unwrap();
        let cfg = ViConfig { epochs: 0, seed: 4, ..ViConfig::default() };
        let a = vi_fit(&data, &arch(), &cfg).unwrap();
        assert!(a.variance().iter().all(|v| (v.sqrt() - 0.01).abs() < 1e-12));
        let b = vi_fit(&data, &arch(), &cfg).unwrap();
        assert_eq!(a.mean(), b.mean());
    }

    #[test]
    fn conjugate_predictive_mean() {
        // prior variance 2 on w and b, σ = 0.1, one point (1, 2): the exact
        // posterior mean of w + b is 2·4/(4 + 0.01)
        let data = Dataset::new(vec![vec![1.0]], vec![vec![2.0]]).unwrap();
        let cfg = ViConfig { epochs: 3000, decay: 0.0, learning_rate: 0.01, seed: 1, ..ViConfig::default() };
        let post = vi_fit(&data, &arch(), &cfg).unwrap();
        let exact = 2.0 * 4.0 / 4.01;
        let pred = post.mean()[0] + post.mean()[1];
        assert!((pred - exact).abs() < 0.05 * exact, "{pred} vs {exact}");
    }

    #[test]
    fn elbo_improves() {
        let xs: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64 / 20.0 - 1.0]).collect();
        let ys: Vec<Vec<f64>> = xs.iter().map(|x| vec![0.7 * x[0] - 0.2]).collect();
        let data = Dataset::new(xs, ys).unwrap();
        let cfg = ViConfig { epochs: 300, batch_size: 8, seed: 2, ..ViConfig::default() };
        let post = vi_fit(&data, &arch(), &cfg).unwrap();
        let trace: Vec<f64> = serde_json::from_value(post.provenance.details["elbo_trace"].clone()).unwrap();
        let window = |a: usize| trace[a..a + 30].iter().sum::<f64>() / 30.0;
        assert!(window(0) < window(100));
        assert!(window(100) <= window(270) + 1.0);
        let again: Posterior = vi_fit(&data, &arch(), &cfg).unwrap().into();
        assert_eq!(Posterior::from(post), again);
    }
}
