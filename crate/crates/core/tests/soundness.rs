//! Certified tables against the quadrature oracle on random 1-D drift
//! systems.

use proptest::prelude::*;

use reachcert::certify::{self, CertifyParams, RhoW};
use reachcert::env::{Label, ReachAvoidSpec};
use reachcert::grid::{Axis, Grid};
use reachcert::interval::IntervalBox;
use reachcert::nn::{Activation, Architecture, WeightSet};
use reachcert::oracle::{exact_recursion_oracle, MixtureKernel};
use reachcert::policy::TabularPolicy;
use reachcert::posterior::{Posterior, Provenance, SamplePosterior};
use reachcert::synthesize::{max_cert, ActionGrid, SynthesisConfig};

fn drift_posterior(biases: &[f64]) -> Posterior {
    let arch = Architecture::new(vec![2, 1], Activation::Relu).unwrap();
    let samples =
        biases.iter().map(|b| WeightSet::from_layers(&arch, &[(vec![1.0, 1.0], vec![*b])]).unwrap()).collect();
    let prov = Provenance { method: "fixed".into(), seed: 0, details: serde_json::Value::Null };
    SamplePosterior::new(arch, samples, prov).unwrap().into()
}

fn line_spec(goal: (f64, f64), horizon: usize, sigma: f64) -> ReachAvoidSpec {
    ReachAvoidSpec::new(
        IntervalBox::from_bounds(&[goal.0], &[goal.1]).unwrap(),
        IntervalBox::from_bounds(&[0.0], &[1.0]).unwrap(),
        vec![],
        horizon,
        sigma,
        0.99,
        None,
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn tables_lower_bound_the_oracle(
        biases in prop::collection::vec(-0.03f64..0.03, 1..4),
        drift in 0.02f64..0.15,
        sigma in 0.005f64..0.03,
        goal_lo in 0.5f64..0.75,
        seed in 0u64..1000,
    ) {
        let goal = ((goal_lo * 20.0).round() / 20.0, 0.9);
        let spec = line_spec(goal, 3, sigma);
        let grid = Grid::new(vec![Axis::covering(0.0, 1.0, 0.05).unwrap()]).unwrap();
        let post = drift_posterior(&biases);
        let policy = TabularPolicy::constant(grid.clone(), &[drift]).unwrap();
        let params = CertifyParams { n_s: 12, rho_w: RhoW::Absolute { value: 1e-4 }, seed, ..CertifyParams::default() };
        let res = certify::run(&post, &policy, &spec, &grid, &params).unwrap();

        let w = 1.0 / biases.len() as f64;
        let means = |x: f64, _k: usize| biases.iter().map(|b| (w, x + drift + b)).collect::<Vec<_>>();
        let oracle = exact_recursion_oracle(&MixtureKernel { sigma, means: &means }, &spec, 1000).unwrap();
        for k in 0..=3 {
            for cell in 0..grid.n_cells() {
                let kv = res.tables[k].get(cell);
                prop_assert!((0.0..=1.0).contains(&kv));
                match res.labels[cell] {
                    Label::Goal => prop_assert_eq!(kv, 1.0),
                    Label::Unsafe => prop_assert_eq!(kv, 0.0),
                    Label::Safe => {
                        let b = grid.cell_box(cell).unwrap().get(0);
                        let v = oracle.min_on(k, b.lo, b.hi).unwrap();
                        prop_assert!(kv <= v + 1e-9, "k {} cell {}: {} > {}", k, cell, kv, v);
                    }
                }
            }
        }
    }
}

#[test]
fn max_cert_dominates_each_constant_action() {
    let spec = line_spec((0.7, 0.9), 3, 0.002);
    let grid = Grid::new(vec![Axis::covering(0.0, 1.0, 0.05).unwrap()]).unwrap();
    let post = drift_posterior(&[-0.01, 0.0, 0.01]);
    let params = CertifyParams { n_s: 20, rho_w: RhoW::Absolute { value: 1e-4 }, seed: 5, ..CertifyParams::default() };
    let agrid = ActionGrid::new(10, 1).unwrap();
    let scfg = SynthesisConfig { n_s: 20, ..SynthesisConfig::default() };
    let (_, best) = max_cert(&post, &spec, &grid, &agrid, &params, &scfg).unwrap();
    for a in agrid.actions() {
        let policy = TabularPolicy::constant(grid.clone(), &a).unwrap();
        let res = certify::run(&post, &policy, &spec, &grid, &params).unwrap();
        assert!(
            best.metrics.avg_lower_bound + 1e-12 >= res.metrics.avg_lower_bound,
            "action {a:?}: {} vs {}",
            res.metrics.avg_lower_bound,
            best.metrics.avg_lower_bound
        );
    }
    assert!(best.metrics.coverage > 0.0);
}
