//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails. Pass criterion numbers as arguments to
//! run a subset.

use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::sync::OnceLock;
use std::time::Instant;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use statrs::function::erf::erf;

use reachcert::certify::{self, CertificationResult, CertifyParams, RhoW};
use reachcert::container::sha256_hex;
use reachcert::env::{simulate, true_step, Label, Outcome, PuckParams, ReachAvoidSpec, Stepper};
use reachcert::grid::{Axis, Grid};
use reachcert::interval::{epsilon_for, ibp_weight_box, IntervalBox};
use reachcert::nn::{forward, Activation, Architecture, WeightSet};
use reachcert::oracle::{exact_recursion_oracle, MixtureKernel};
use reachcert::policy::{learn_initial_policy, Learned, Policy, TabularPolicy};
use reachcert::posterior::{GaussianPosterior, Posterior, Provenance, SamplePosterior, WeightBox};
use reachcert::rng::stream;
use reachcert::synthesize::{max_cert, ActionGrid, PointSet, PolicyLoss, Reduction};
use reachcert_cli::RunConfig;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn benchmark_config() -> RunConfig {
    let mut cfg = RunConfig::load(&repo_root().join("configs/v1_reduced.json")).expect("benchmark config");
    cfg.propagate_seed().unwrap();
    cfg
}

/// Reduced V1 benchmark shared by criteria 3, 7 and 9.
struct Bench {
    spec: ReachAvoidSpec,
    grid: Grid,
    cparams: CertifyParams,
    learned: Learned,
    learned_cert: CertificationResult,
    synth: TabularPolicy,
    synth_cert: CertificationResult,
}

fn bench() -> &'static Bench {
    static B: OnceLock<Bench> = OnceLock::new();
    B.get_or_init(|| {
        let cfg = benchmark_config();
        let spec = cfg.spec().unwrap();
        let grid = cfg.grid(&spec).unwrap();
        let learned = learn_initial_policy(&spec, &cfg.puck, &grid, &cfg.learn).unwrap();
        let cparams = cfg.certify.clone();
        let learned_cert = certify::run(&learned.posterior, &learned.policy, &spec, &grid, &cparams).unwrap();
        let agrid = ActionGrid::new(cfg.synthesis.actions_per_dim, cfg.puck.action_dim()).unwrap();
        let (synth, synth_cert) = max_cert(&learned.posterior, &spec, &grid, &agrid, &cparams, &cfg.synthesis).unwrap();
        Bench { spec, grid, cparams, learned, learned_cert, synth, synth_cert }
    })
}

fn uniform_in(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

fn c1_ibp_soundness() -> Verdict {
    let mut rng = stream(101, &[]);
    let acts = [Activation::Relu, Activation::Tanh, Activation::Sigmoid];
    let mut violations = 0usize;
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let n_layers = rng.random_range(1..=3);
        let mut widths = vec![rng.random_range(1..=8)];
        for _ in 0..n_layers {
            widths.push(rng.random_range(1..=64));
        }
        let arch = Architecture::new(widths, acts[rng.random_range(0..3)]).unwrap();
        let centre: Vec<f64> = (0..arch.n_params()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let half: Vec<f64> = (0..arch.n_params()).map(|_| rng.random_range(0.0..0.1)).collect();
        let wbox = WeightBox::around(&centre, &half).unwrap();
        let xc: Vec<f64> = (0..arch.input_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let xh: Vec<f64> = (0..arch.input_dim()).map(|_| rng.random_range(0.0..0.5)).collect();
        let lo: Vec<f64> = xc.iter().zip(&xh).map(|(c, h)| c - h).collect();
        let hi: Vec<f64> = xc.iter().zip(&xh).map(|(c, h)| c + h).collect();
        let input = IntervalBox::from_bounds(&lo, &hi).unwrap();
        let out = ibp_weight_box(&arch, &wbox, &input).unwrap();
        for _ in 0..1000 {
            // a fifth of the draws sit on box corners
            let corner = rng.random_bool(0.2);
            let pick = |rng: &mut _, l: f64, h: f64| {
                if corner {
                    if Rng::random_bool(rng, 0.5) {
                        l
                    } else {
                        h
                    }
                } else {
                    uniform_in(rng, l, h)
                }
            };
            let w: Vec<f64> =
                (0..centre.len()).map(|j| pick(&mut rng, centre[j] - half[j], centre[j] + half[j])).collect();
            let x: Vec<f64> = (0..lo.len()).map(|j| pick(&mut rng, lo[j], hi[j])).collect();
            let y = forward(&arch, &WeightSet::unflatten(&arch, &w).unwrap(), &x).unwrap();
            for (j, v) in y.iter().enumerate() {
                let iv = out.get(j);
                let excess = (iv.lo - v).max(v - iv.hi);
                if excess > 0.0 {
                    violations += 1;
                    worst = worst.max(excess);
                }
            }
        }
    }
    verdict(violations == 0, format!("{violations} violations over 50 x 1000 pairs (worst excess {worst:.1e})"))
}

fn c2_exact_oracle() -> Verdict {
    let (sigma, n, drift) = (0.02, 5, 0.1);
    let biases = [-0.01, 0.0, 0.015];
    let spec = ReachAvoidSpec::new(
        IntervalBox::from_bounds(&[0.7], &[0.9]).unwrap(),
        IntervalBox::from_bounds(&[0.0], &[1.0]).unwrap(),
        vec![],
        n,
        sigma,
        0.99,
        None,
    )
    .unwrap();
    let grid = Grid::new(vec![Axis::covering(0.0, 1.0, 0.02).unwrap()]).unwrap();
    assert_eq!(grid.n_cells(), 50);
    let arch = Architecture::new(vec![2, 1], Activation::Relu).unwrap();
    let samples: Vec<WeightSet> =
        biases.iter().map(|b| WeightSet::from_layers(&arch, &[(vec![1.0, 1.0], vec![*b])]).unwrap()).collect();
    let prov = Provenance { method: "fixed".into(), seed: 0, details: serde_json::Value::Null };
    let post = Posterior::from(SamplePosterior::new(arch, samples, prov).unwrap());
    let policy = TabularPolicy::constant(grid.clone(), &[drift]).unwrap();
    let cparams = CertifyParams { n_s: 30, rho_w: RhoW::Absolute { value: 1e-4 }, seed: 2, ..CertifyParams::default() };
    let res = certify::run(&post, &policy, &spec, &grid, &cparams).unwrap();

    let means = move |x: f64, _k: usize| biases.iter().map(|b| (1.0 / 3.0, x + drift + b)).collect::<Vec<_>>();
    let kernel = MixtureKernel { sigma, means: &means };
    let oracle = exact_recursion_oracle(&kernel, &spec, 4000).unwrap();
    let mut bound_violations = 0;
    let mut worst_gap = f64::INFINITY;
    for k in 0..=n {
        for cell in 0..grid.n_cells() {
            let b = grid.cell_box(cell).unwrap().get(0);
            let v = oracle.min_on(k, b.lo, b.hi).unwrap();
            let kv = res.tables[k].get(cell);
            if kv > v + 1e-9 {
                bound_violations += 1;
            }
            if kv > 0.0 && res.labels[cell] == Label::Safe {
                worst_gap = worst_gap.min(v - kv);
            }
        }
    }
    let k0_max =
        (0..grid.n_cells()).filter(|c| res.labels[*c] == Label::Safe).map(|c| res.k0().get(c)).fold(0.0, f64::max);

    let probes: Vec<f64> = (0..10).map(|i| 0.2 + 0.05 * i as f64).collect();
    let stepper = Stepper::Bnn(&post);
    let mc_errors: Vec<f64> = probes
        .par_iter()
        .enumerate()
        .map(|(i, &x)| {
            let mut rng = stream(202, &[i as u64]);
            let runs = 100_000;
            let hits = (0..runs)
                .filter(|_| simulate(&spec, &stepper, &policy, &[x], &mut rng).unwrap().outcome == Outcome::Reached)
                .count();
            (hits as f64 / runs as f64 - oracle.eval(&spec, &kernel, 0, x)).abs()
        })
        .collect();
    let mc_worst = mc_errors.iter().cloned().fold(0.0, f64::max);
    verdict(
        bound_violations == 0 && mc_worst <= 0.02,
        format!(
            "{bound_violations} cells above the oracle (min slack {worst_gap:.4}, max safe K_0 {k0_max:.3}); \
             worst |MC - V_0| {mc_worst:.4} over 10 probes"
        ),
    )
}

fn c3_mc_soundness() -> Verdict {
    let b = bench();
    let stepper = Stepper::Bnn(&b.learned.posterior);
    let runs = 10_000usize;
    let mut details = Vec::new();
    let mut total_violations = 0;
    let policies: [(&str, &dyn Policy, &CertificationResult); 2] =
        [("learned", &b.learned.policy, &b.learned_cert), ("max_cert", &b.synth, &b.synth_cert)];
    for (name, policy, res) in policies {
        let safe: Vec<usize> = (0..b.grid.n_cells()).filter(|c| res.labels[*c] == Label::Safe).collect();
        let checks: Vec<(bool, f64)> = safe
            .par_iter()
            .map(|&cell| {
                let k0 = res.k0().get(cell);
                if k0 == 0.0 {
                    return (false, 0.0);
                }
                let x0 = b.grid.cell_center(cell);
                let mut rng = stream(303, &[cell as u64]);
                let hits = (0..runs)
                    .filter(|_| simulate(&b.spec, &stepper, policy, &x0, &mut rng).unwrap().outcome == Outcome::Reached)
                    .count();
                let p = hits as f64 / runs as f64;
                let se = (p * (1.0 - p) / runs as f64).sqrt();
                (k0 > p + 3.0 * se, p - k0)
            })
            .collect();
        let violations = checks.iter().filter(|c| c.0).count();
        let nonzero = safe.iter().filter(|c| res.k0().get(**c) > 0.0).count();
        total_violations += violations;
        let min_margin = checks
            .iter()
            .zip(&safe)
            .filter(|(_, c)| res.k0().get(**c) > 0.0)
            .map(|(c, _)| c.1)
            .fold(f64::INFINITY, f64::min);
        details.push(format!(
            "{name}: {violations}/{} violations, {nonzero} nonzero bounds, min MC - K_0 {min_margin:.3}",
            safe.len()
        ));
    }
    verdict(total_violations == 0, details.join("; "))
}

fn c4_box_mass() -> Verdict {
    let mut rng = stream(404, &[]);
    let prov = || Provenance { method: "gaussian".into(), seed: 0, details: serde_json::Value::Null };
    let n_mc = 1_000_000usize;
    let cases: Vec<(Posterior, WeightBox)> = (0..100)
        .map(|_| {
            let width = rng.random_range(1..=3);
            let arch = Architecture::new(vec![1, width], Activation::Relu).unwrap();
            let d = arch.n_params();
            let mean: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let var: Vec<f64> = (0..d).map(|_| rng.random_range(0.05f64..1.0).powi(2)).collect();
            let lo: Vec<f64> = mean.iter().zip(&var).map(|(m, v)| m + v.sqrt() * rng.random_range(-2.5..0.5)).collect();
            let hi: Vec<f64> = lo.iter().zip(&var).map(|(l, v)| l + v.sqrt() * rng.random_range(0.5..3.0)).collect();
            let post = Posterior::from(GaussianPosterior::new(arch, mean, var, prov()).unwrap());
            (post, WeightBox::new(lo, hi).unwrap())
        })
        .collect();
    let outside: Vec<bool> = cases
        .par_iter()
        .enumerate()
        .map(|(i, (post, b))| {
            let exact = post.box_mass(b).unwrap();
            let mut r = stream(404, &[i as u64]);
            let hits = (0..n_mc).filter(|_| b.contains(post.draw(&mut r).params())).count();
            let p = hits as f64 / n_mc as f64;
            let se = (exact * (1.0 - exact) / n_mc as f64).sqrt().max(1e-12);
            (p - exact).abs() > 3.0 * se
        })
        .collect();
    let misses = outside.iter().filter(|m| **m).count();

    let arch = Architecture::new(vec![1, 1], Activation::Relu).unwrap();
    let post = Posterior::from(GaussianPosterior::new(arch, vec![0.0, 0.0], vec![1.0, 1.0], prov()).unwrap());
    let unit = post.box_mass(&WeightBox::new(vec![-1.0, -50.0], vec![1.0, 50.0]).unwrap()).unwrap();
    let target = erf(std::f64::consts::FRAC_1_SQRT_2);
    let mut r = stream(405, &[]);
    let mc = (0..n_mc)
        .filter(|_| {
            let z: f64 = StandardNormal.sample(&mut r);
            z.abs() <= 1.0
        })
        .count() as f64
        / n_mc as f64;
    let ok = misses == 0 && (unit - target).abs() <= 1e-3 && (mc - unit).abs() <= 1e-3;
    verdict(ok, format!("{misses}/100 boxes beyond 3 SE; 1-D mass {unit:.6} vs erf(1/sqrt2) {target:.6}, MC {mc:.6}"))
}

fn newton_erf_inv(y: f64) -> f64 {
    let mut x = 1.0;
    for _ in 0..100 {
        let step = (erf(x) - y) / (2.0 / std::f64::consts::PI.sqrt() * (-x * x).exp());
        x -= step;
        if step.abs() < 1e-16 {
            break;
        }
    }
    x
}

fn c5_epsilon() -> Verdict {
    let eps = epsilon_for(0.99, 0.1).unwrap();
    let oracle = 2f64.sqrt() * 0.1 * newton_erf_inv(0.99);
    let ok = (eps - 0.257583).abs() <= 1e-6 && (eps - oracle).abs() <= 1e-6;
    verdict(ok, format!("epsilon_for(0.99, 0.1) = {eps:.9}, Newton oracle {oracle:.9}"))
}

fn c6_puck() -> Verdict {
    let p = PuckParams { h: 0.35, m: 5.0, eta_f: 1.0, dims: 2 };
    let (h, m, eta) = (p.h, p.m, p.eta_f);
    let a = [
        [1.0, 0.0, h, 0.0],
        [0.0, 1.0, 0.0, h],
        [0.0, 0.0, 1.0 - h * eta / m, 0.0],
        [0.0, 0.0, 0.0, 1.0 - h * eta / m],
    ];
    let bm = [[0.0, 0.0], [0.0, 0.0], [h / m, 0.0], [0.0, h / m]];
    let cases: [([f64; 4], [f64; 2]); 10] = [
        ([0.0, 0.0, 0.0, 0.0], [0.0, 0.0]),
        ([0.5, 0.5, 0.0, 0.0], [1.0, 0.0]),
        ([0.1, 0.9, 0.2, -0.3], [0.0, -1.0]),
        ([0.85, 0.85, -0.1, -0.1], [-1.0, -1.0]),
        ([0.3, 0.7, 0.05, 0.4], [0.5, -0.25]),
        ([1.0, 0.0, -0.5, 0.1], [0.9, 0.9]),
        ([0.25, 0.75, 0.3, 0.3], [-0.3, 0.6]),
        ([0.6, 0.2, -0.25, 0.15], [0.1, -0.8]),
        ([0.45, 0.55, 0.0, -0.45], [-0.7, 0.2]),
        ([0.9, 0.1, 0.1, 0.0], [0.33, -0.66]),
    ];
    let mut worst = 0.0f64;
    for (x, u) in cases {
        let got = true_step(&p, &x, &u).unwrap();
        for i in 0..4 {
            let hand: f64 = (0..4).map(|j| a[i][j] * x[j]).sum::<f64>() + (0..2).map(|j| bm[i][j] * u[j]).sum::<f64>();
            worst = worst.max((got[i] - hand).abs() / hand.abs().max(1.0));
        }
    }
    verdict(worst <= 4.0 * f64::EPSILON, format!("max relative deviation {worst:.2e} over 10 cases"))
}

fn c7_synthesis_improvement() -> Verdict {
    let b = bench();
    let (l, s) = (&b.learned_cert.metrics, &b.synth_cert.metrics);
    let ok = s.avg_lower_bound >= 1.5 * l.avg_lower_bound && s.coverage > l.coverage;
    verdict(
        ok,
        format!(
            "max_cert avg K_0 {:.4}, coverage {:.4}; learned avg K_0 {:.4}, coverage {:.4}",
            s.avg_lower_bound, s.coverage, l.avg_lower_bound, l.coverage
        ),
    )
}

fn c8_gradient() -> Verdict {
    let mut rng = stream(808, &[]);
    let h = 1e-5;
    let mut worst = 0.0f64;
    let mut failures = 0;
    for _ in 0..100 {
        let act = [Activation::Tanh, Activation::Sigmoid][rng.random_range(0..2)];
        let dynamics = Architecture::mlp(6, &[rng.random_range(4..=16)], 4, act).unwrap();
        let policy = Architecture::mlp(4, &[rng.random_range(4..=16)], 2, Activation::Tanh).unwrap();
        let samples: Vec<WeightSet> = (0..rng.random_range(1..=4))
            .map(|_| {
                let p: Vec<f64> = (0..dynamics.n_params()).map(|_| rng.random_range(-0.8..0.8)).collect();
                WeightSet::unflatten(&dynamics, &p).unwrap()
            })
            .collect();
        let mut points =
            |n: usize| PointSet::new((0..n).map(|_| (0..4).map(|_| rng.random_range(-1.5..1.5)).collect()).collect());
        let (good, bad) = (points(6), points(6));
        let loss = PolicyLoss {
            dynamics: &dynamics,
            samples: &samples,
            policy: &policy,
            good: &good,
            bad: &bad,
            alpha: rng.random_range(0.05..0.95),
            reduction: if rng.random_bool(0.5) { Reduction::Sum } else { Reduction::Mean },
            action_bounds: (-1.0, 1.0),
        };
        // |w| in the interval radius has a kink at zero; keep weights off it
        let theta: Vec<f64> = (0..policy.n_params())
            .map(|_| {
                let m = rng.random_range(0.01..0.5);
                if rng.random_bool(0.5) {
                    m
                } else {
                    -m
                }
            })
            .collect();
        let x: Vec<f64> = (0..4).map(|_| rng.random_range(-0.5..0.5)).collect();
        let eps = 0.025;
        let mut grad = vec![0.0; theta.len()];
        loss.robust(&theta, &x, eps, Some(&mut grad)).unwrap();
        let fd: Vec<f64> = (0..theta.len())
            .map(|i| {
                let mut tp = theta.clone();
                tp[i] += h;
                let mut tm = theta.clone();
                tm[i] -= h;
                (loss.robust(&tp, &x, eps, None).unwrap() - loss.robust(&tm, &x, eps, None).unwrap()) / (2.0 * h)
            })
            .collect();
        let diff = grad.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let scale = grad.iter().map(|a| a * a).sum::<f64>().sqrt().max(fd.iter().map(|a| a * a).sum::<f64>().sqrt());
        let rel = if scale > 0.0 { diff / scale } else { 0.0 };
        worst = worst.max(rel);
        if rel > 1e-4 {
            failures += 1;
        }
    }
    verdict(failures == 0, format!("{failures}/100 configurations above 1e-4 (worst relative error {worst:.2e})"))
}

fn c9_refinement() -> Verdict {
    let b = bench();
    let mean_k0 = |n_s: usize| {
        let runs: Vec<f64> = (1..=5u64)
            .map(|seed| {
                let p = CertifyParams { n_s, seed, ..b.cparams.clone() };
                certify::run(&b.learned.posterior, &b.synth, &b.spec, &b.grid, &p).unwrap().metrics.avg_lower_bound
            })
            .collect();
        runs.iter().sum::<f64>() / runs.len() as f64
    };
    let (lo, hi) = (mean_k0(50), mean_k0(200));
    verdict(hi >= lo, format!("mean avg K_0 over 5 seeds: n_s=50 {lo:.4}, n_s=200 {hi:.4}"))
}

fn digest_dir(dir: &Path) -> String {
    let mut names: Vec<String> =
        std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    let mut all = Vec::new();
    for n in names {
        all.extend_from_slice(n.as_bytes());
        all.extend(std::fs::read(dir.join(&n)).unwrap());
    }
    sha256_hex(&all)
}

fn c10_reproducibility() -> Verdict {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = benchmark_config();
    cfg.synthesis.nn.epochs = 2;
    cfg.synthesis.nn.n_states = 1000;
    let config = tmp.path().join("config.json");
    std::fs::write(&config, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    let config = config.to_str().unwrap();
    let commands: [(&str, Vec<&str>); 6] = [
        ("train", vec!["train-bnn"]),
        ("cert", vec!["certify", "--posterior", "train/posterior.rcp", "--policy", "train/learned_policy.rcp"]),
        ("syn", vec!["synthesize", "--posterior", "train/posterior.rcp"]),
        ("nn", vec!["synthesize-nn", "--posterior", "train/posterior.rcp"]),
        ("sim", vec!["simulate", "--policy", "syn/policy.rcp"]),
        (
            "simbnn",
            vec!["simulate", "--policy", "nn/policy.rcp", "--stepper", "bnn", "--posterior", "train/posterior.rcp"],
        ),
    ];
    let mut runs: Vec<Vec<String>> = Vec::new();
    for (i, workers) in ["1", "4", "4"].iter().enumerate() {
        let dir = tmp.path().join(format!("run{i}"));
        std::fs::create_dir_all(&dir).unwrap();
        let mut digests = Vec::new();
        for (out, args) in &commands {
            let status = Command::new(env!("CARGO_BIN_EXE_reachcert"))
                .current_dir(&dir)
                .env_remove("REACHCERT_WORKERS")
                .args(["--config", config, "--workers", workers, "-o", out])
                .args(args)
                .output()
                .unwrap();
            if !status.status.success() {
                return verdict(false, format!("{out} failed: {}", String::from_utf8_lossy(&status.stderr)));
            }
            digests.push(digest_dir(&dir.join(out)));
        }
        runs.push(digests);
    }
    let same_workers = runs[1] == runs[2];
    let across = runs[0] == runs[1];
    let differing: Vec<&str> = commands
        .iter()
        .enumerate()
        .filter(|(j, _)| runs.iter().any(|r| r[*j] != runs[0][*j]))
        .map(|(_, c)| c.0)
        .collect();
    verdict(same_workers && across, format!("6 commands x 3 runs (workers 1, 4, 4); differing outputs: {differing:?}"))
}

fn main() -> ExitCode {
    type Check = fn() -> Verdict;
    let criteria: [(&str, Check); 10] = [
        ("IBP soundness", c1_ibp_soundness),
        ("exact-recursion oracle", c2_exact_oracle),
        ("end-to-end Monte Carlo soundness", c3_mc_soundness),
        ("Gaussian box mass", c4_box_mass),
        ("noise truncation radius", c5_epsilon),
        ("puck dynamics", c6_puck),
        ("synthesis improvement", c7_synthesis_improvement),
        ("robust-loss gradient", c8_gradient),
        ("refinement monotonicity", c9_refinement),
        ("reproducibility", c10_reproducibility),
    ];
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let id = i + 1;
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let v = check();
        let status = if v.pass { "PASS" } else { "FAIL" };
        println!("{status} [{id:>2}] {name}: {} ({:.1} s)", v.detail, start.elapsed().as_secs_f64());
        if !v.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
