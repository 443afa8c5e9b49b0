//! Hamiltonian Monte Carlo with an identity mass matrix.

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{neg_log_posterior, Dataset, Provenance, SamplePosterior};
use crate::nn::{Architecture, WeightSet};
use crate::optim::Adam;
use crate::rng::stream;
use crate::{Error, Result};

const MAX_NON_FINITE: usize = 100;
const REJECTION_BURST: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HmcConfig {
    pub n_samples: usize,
    pub burn_in: usize,
    pub leapfrog_steps: usize,
    pub step_size: f64,
    pub likelihood_sigma: f64,
    pub seed: u64,
    /// Keep every `thin`-th post-burn-in state.
    pub thin: usize,
    /// Full-batch Adam steps towards the posterior mode before the chain
    /// starts.
    pub map_init_steps: usize,
}

impl Default for HmcConfig {
    fn default() -> Self {
        Self {
            n_samples: 500,
            burn_in: 25,
            leapfrog_steps: 10,
            step_size: 0.05,
            likelihood_sigma: 0.1,
            seed: 0,
            thin: 1,
            map_init_steps: 300,
        }
    }
}

pub(super) fn check_data(data: &Dataset, arch: &Architecture) -> Result<()> {
    if data.is_empty() {
        return Err(Error::invalid("dataset is empty"));
    }
    if data.input_dim() != arch.input_dim() || data.target_dim() != arch.output_dim() {
        return Err(Error::invalid(format!(
            "dataset maps {} → {} values, network maps {} → {}",
            data.input_dim(),
            data.target_dim(),
            arch.input_dim(),
            arch.output_dim()
        )));
    }
    Ok(())
}

/// Samples `exp(−½Σ‖y−f^w(x)‖²/σ² − ½Σ w_j²/prior_j)`.
///
/// The step size shrinks by 0.9 after every rejection during burn-in and after
/// every burst of consecutive rejections while sampling.
pub fn hmc_fit(data: &Dataset, arch: &Architecture, prior: &[f64], cfg: &HmcConfig) -> Result<SamplePosterior> {
    check_data(data, arch)?;
    let n = arch.n_params();
    if prior.len() != n || prior.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::invalid("prior needs one positive variance per parameter"));
    }
    if cfg.n_samples == 0 || cfg.leapfrog_steps == 0 || cfg.thin == 0 {
        return Err(Error::invalid("n_samples, leapfrog_steps and thin must be positive"));
    }
    if !(cfg.step_size > 0.0) || !(cfg.likelihood_sigma > 0.0) {
        return Err(Error::invalid("step_size and likelihood_sigma must be positive"));
    }
    let sigma = cfg.likelihood_sigma;
    let mut rng = stream(cfg.seed, &[0x686d63]);

    let mut theta: Vec<f64> = prior.iter().map(|v| Normal::new(0.0, v.sqrt()).unwrap().sample(&mut rng)).collect();
    let mut grad = vec![0.0; n];
    if cfg.map_init_steps > 0 {
        let mut opt = Adam::new(n, 0.01);
        for _ in 0..cfg.map_init_steps {
            let e = neg_log_posterior(arch, data, prior, sigma, &theta, &mut grad);
            if !e.is_finite() {
                return Err(Error::InferenceFailure("non-finite energy during mode search".into()));
            }
            opt.step(&mut theta, &grad);
        }
    }

    let mut energy = neg_log_posterior(arch, data, prior, sigma, &theta, &mut grad);
    if !energy.is_finite() {
        return Err(Error::InferenceFailure("non-finite energy at the initial state".into()));
    }
    let mut step = cfg.step_size;
    let total = cfg.burn_in + cfg.n_samples * cfg.thin;
    let mut samples = Vec::with_capacity(cfg.n_samples);
    let mut accepted = 0usize;
    let mut proposals = 0usize;
    let mut non_finite = 0usize;
    let mut rejected_run = 0usize;

    let mut q = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut g = vec![0.0; n];
    for iter in 0..total {
        for v in p.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        let kinetic0: f64 = 0.5 * p.iter().map(|v| v * v).sum::<f64>();
        q.copy_from_slice(&theta);
        g.copy_from_slice(&grad);
        let mut e_new = energy;
        for _ in 0..cfg.leapfrog_steps {
            for i in 0..n {
                p[i] -= 0.5 * step * g[i];
                q[i] += step * p[i];
            }
            e_new = neg_log_posterior(arch, data, prior, sigma, &q, &mut g);
            for i in 0..n {
                p[i] -= 0.5 * step * g[i];
            }
            if !e_new.is_finite() {
                break;
            }
        }
        let kinetic1: f64 = 0.5 * p.iter().map(|v| v * v).sum::<f64>();
        let log_ratio = energy + kinetic0 - e_new - kinetic1;
        let sampling = iter >= cfg.burn_in;
        if sampling {
            proposals += 1;
        }
        let accept = if log_ratio.is_finite() {
            non_finite = 0;
            let u: f64 = rng.random();
            u.ln() < log_ratio
        } else {
            non_finite += 1;
            if non_finite >= MAX_NON_FINITE {
                return Err(Error::InferenceFailure(format!(
                    "{MAX_NON_FINITE} consecutive non-finite proposals (step size {step:.3e})"
                )));
            }
            false
        };
        if accept {
            theta.copy_from_slice(&q);
            grad.copy_from_slice(&g);
            energy = e_new;
            rejected_run = 0;
            if sampling {
                accepted += 1;
            }
        } else {
            rejected_run += 1;
            if !sampling || rejected_run >= REJECTION_BURST || !log_ratio.is_finite() {
                step *= 0.9;
                rejected_run = 0;
            }
        }
        if sampling && (iter - cfg.burn_in + 1).is_multiple_of(cfg.thin) {
            samples.push(WeightSet::unflatten(arch, &theta)?);
        }
    }

    let acceptance_rate = accepted as f64 / proposals.max(1) as f64;
    let provenance = Provenance {
        method: "hmc".into(),
        seed: cfg.seed,
        details: serde_json::json!({
            "config": cfg,
            "final_step_size": step,
            "acceptance_rate": acceptance_rate,
        }),
    };
    SamplePosterior::new(arch.clone(), samples, provenance)
}
