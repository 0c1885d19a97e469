//! Acceptance suite. Runs every criterion at its stated tolerance, prints one
//! PASS/FAIL line per criterion and exits nonzero if any fails.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::path::{Path, PathBuf};
use std::time::Instant;

use deahes::elastic::{elastic_exchange, map_h1, map_h2, WeightPair};
use deahes::optim::{hutchinson_estimate, rademacher};
use deahes::{
    Activation, Dataset, FailureModel, Method, Mlp, ModelSpec, Objective, ParamVector, PartitionPlan, Quadratic,
    SimConfig, WeightingVariant,
};
use deahes_cli::summary::{read_rows, summarize_rows, SummaryRow};
use deahes_cli::{run_grid, ExperimentConfig, RunOptions};
use rand::Rng;

type Check = Result<String, String>;
type Simulated = (SimConfig<f64>, deahes::RunMetrics<f64>, Vec<u64>);

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn main() {
    let criteria: [(&str, fn() -> Check); 8] = [
        ("numerical kernels", numerical_kernels),
        ("elastic law", elastic_law),
        ("partition", partition_suite),
        ("simulator determinism", determinism),
        ("failure statistics", failure_statistics),
        ("overlap sweep", overlap_sweep),
        ("method ordering", method_ordering),
        ("healthy-regime equivalence", healthy_regime),
    ];
    // ACCEPTANCE_ONLY=6,8 runs a subset.
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|n| n.trim().parse().ok()).collect());
    let mut failed = 0;
    let mut ran = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        if only.as_ref().is_some_and(|o| !o.contains(&(i + 1))) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {} {name} ({secs:.1}s): {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {} {name} ({secs:.1}s): {detail}", i + 1);
            }
        }
    }
    println!("{} of {ran} criteria passed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn numerical_kernels() -> Check {
    let sizes = [4, 8, 3];
    let mut worst_grad: f64 = 0.0;
    for act in [Activation::Tanh, Activation::Relu] {
        let m = common::mlp(&sizes, act);
        let mut r = common::rng(100);
        for _ in 0..100 {
            let p = common::random_params(&m, &mut r, 1.0);
            let (batch, xs, ys) = common::random_batch(&mut r, 16, 4, 3);
            let g = m.gradient(&p, &batch).unwrap();
            let fd = common::fd_gradient(|t| common::reference_loss(&sizes, act, t, &xs, &ys), p.values(), 1e-6);
            worst_grad = worst_grad.max(common::max_coord_rel(g.values(), &fd, 1e-12));
        }
    }
    ensure(worst_grad < 1e-4, || format!("gradient rel error {worst_grad:e}"))?;

    let mut worst_hvp: f64 = 0.0;
    let mut worst_sym: f64 = 0.0;
    let mut r = common::rng(5);
    for act in [Activation::Tanh, Activation::Relu] {
        let m = common::mlp(&[2, 3, 2], act);
        for _ in 0..10 {
            let p = common::random_params(&m, &mut r, 1.0);
            let (batch, _, _) = common::random_batch(&mut r, 6, 2, 2);
            let h = common::fd_hessian(&m, &p, &batch, 1e-5);
            let z = common::random_params(&m, &mut r, 1.0);
            let w = common::random_params(&m, &mut r, 1.0);
            let hz = m.hvp(&p, &batch, &z).unwrap();
            let hw = m.hvp(&p, &batch, &w).unwrap();
            worst_hvp = worst_hvp.max(common::rel_l2(hz.values(), &common::mat_vec(&h, z.values())));
            let (a, b) = (w.dot(&hz), z.dot(&hw));
            worst_sym = worst_sym.max((a - b).abs() / a.abs().max(b.abs()).max(1e-300));
        }
    }
    ensure(worst_hvp < 1e-4, || format!("hvp rel error {worst_hvp:e}"))?;
    ensure(worst_sym < 1e-6, || format!("hvp symmetry error {worst_sym:e}"))?;

    let diag = [0.5, 2.0, 7.25, 1e-3, 40.0];
    let q = Quadratic::diagonal(&diag);
    let p = ParamVector::flat(vec![0.0; 5]);
    let batch = deahes::Batch::new(vec![0.0], 1, vec![0]).unwrap();
    for step in 1..20 {
        let z = rademacher::<f64>(p.shape().clone(), 3, step, 0);
        let est = hutchinson_estimate(&q, &p, &batch, &z).unwrap();
        ensure(est.values() == diag, || format!("diagonal estimate {:?}", est.values()))?;
    }
    let q = Quadratic::new(vec![2.0, 1.0, 1.0, 3.0], vec![0.0, 0.0]).unwrap();
    let p = ParamVector::flat(vec![0.0; 2]);
    let mut mean = [0.0; 2];
    for signs in [[1.0, 1.0], [1.0, -1.0]] {
        let est = hutchinson_estimate(&q, &p, &batch, &ParamVector::flat(signs.to_vec())).unwrap();
        mean[0] += est.values()[0] / 2.0;
        mean[1] += est.values()[1] / 2.0;
    }
    ensure(mean == [2.0, 3.0], || format!("sign-pattern mean {mean:?}"))?;
    Ok(format!(
        "gradient {worst_grad:.1e} < 1e-4, hvp {worst_hvp:.1e} < 1e-4, symmetry {worst_sym:.1e} < 1e-6, Hutchinson exact"
    ))
}

fn elastic_law() -> Check {
    let (alpha, kappa) = (0.1, -1.0);
    let mut worst_jump: f64 = 0.0;
    for a in [kappa, 0.0] {
        for h in [map_h1::<f64>, map_h2::<f64>] {
            for eps in [1e-9, 1e-7] {
                worst_jump = worst_jump.max((h(a + eps, alpha, kappa) - h(a - eps, alpha, kappa)).abs());
            }
        }
    }
    ensure(worst_jump < 1e-6, || format!("discontinuity {worst_jump:e}"))?;
    let grid: Vec<f64> = (0..1000).map(|i| -3.0 + 6.0 * i as f64 / 999.0).collect();
    for w in grid.windows(2) {
        let (h1a, h1b) = (map_h1(w[0], alpha, kappa), map_h1(w[1], alpha, kappa));
        let (h2a, h2b) = (map_h2(w[0], alpha, kappa), map_h2(w[1], alpha, kappa));
        ensure(h1b <= h1a && h2b >= h2a, || format!("not monotone near {}", w[0]))?;
        ensure((alpha..=1.0).contains(&h1a) && (0.0..=alpha).contains(&h2a), || {
            format!("out of range at {}", w[0])
        })?;
    }

    let mut r = common::rng(9);
    let (mut worst_sum, mut worst_scale): (f64, f64) = (0.0, 0.0);
    for _ in 0..1000 {
        let n = r.random_range(1..30);
        let w: Vec<f64> = (0..n).map(|_| r.random_range(-5.0..5.0)).collect();
        let m: Vec<f64> = (0..n).map(|_| r.random_range(-5.0..5.0)).collect();
        let h: f64 = r.random_range(0.0..1.0);
        let (mut wp, mut mp) = (ParamVector::flat(w.clone()), ParamVector::flat(m.clone()));
        elastic_exchange(&mut wp, &mut mp, WeightPair { h1: h, h2: h }).unwrap();
        for i in 0..n {
            worst_sum = worst_sum.max((wp.values()[i] + mp.values()[i] - w[i] - m[i]).abs());
        }
        let (h1, h2): (f64, f64) = (r.random_range(0.0..1.0), r.random_range(0.0..1.0));
        let before = ParamVector::flat(w.clone()).sub(&ParamVector::flat(m.clone())).norm();
        let (mut wp, mut mp) = (ParamVector::flat(w), ParamVector::flat(m));
        elastic_exchange(&mut wp, &mut mp, WeightPair { h1, h2 }).unwrap();
        worst_scale = worst_scale.max((wp.sub(&mp).norm() - (1.0 - h1 - h2).abs() * before).abs());
    }
    ensure(worst_sum < 1e-12, || format!("pair sum drift {worst_sum:e}"))?;
    ensure(worst_scale < 1e-10, || format!("distance scaling error {worst_scale:e}"))?;

    let (h1, h2) = (map_h1(-0.5, alpha, kappa), map_h2(-0.5, alpha, kappa));
    ensure((h1 - 0.55).abs() < 1e-12 && (h2 - 0.05).abs() < 1e-12, || format!("h(-0.5) = ({h1}, {h2})"))?;
    Ok(format!(
        "max jump {worst_jump:.1e}, pair sum {worst_sum:.1e}, scaling {worst_scale:.1e}, h(-0.5) = ({h1}, {h2})"
    ))
}

fn partition_suite() -> Check {
    let mut r = common::rng(33);
    let mut draws = 0;
    while draws < 200 {
        let n = r.random_range(1..2000);
        let k = r.random_range(1..=16);
        let ratio: f64 = r.random_range(0.0..0.9);
        let seed: u64 = r.random();
        let o = (ratio * n as f64 + 1e-9).floor() as usize;
        if o + k > n {
            ensure(PartitionPlan::new(n, ratio, k, seed).is_err(), || format!("accepted n={n} r={ratio} k={k}"))?;
            continue;
        }
        draws += 1;
        let plan = PartitionPlan::new(n, ratio, k, seed).map_err(|e| e.to_string())?;
        ensure(plan.overlap().len() == o, || format!("|O| = {} for n={n} r={ratio}", plan.overlap().len()))?;
        let mut owner = vec![0u32; n];
        for &i in plan.overlap() {
            owner[i] += 100;
        }
        let base = (n - o) / k;
        for j in 0..k {
            let s = plan.unique(j);
            ensure(s.len() == base || s.len() == base + 1, || format!("|S_{j}| = {}", s.len()))?;
            for &i in s {
                owner[i] += 1;
            }
        }
        ensure(owner.iter().all(|&c| c == 1 || c == 100), || format!("overlap or gap for n={n} k={k}"))?;

        let bigger = ratio + r.random_range(0.0..(0.95 - ratio));
        let o2 = (bigger * n as f64 + 1e-9).floor() as usize;
        if o2 + k <= n {
            let wide = PartitionPlan::new(n, bigger, k, seed).map_err(|e| e.to_string())?;
            let set: std::collections::HashSet<_> = wide.overlap().iter().collect();
            ensure(plan.overlap().iter().all(|i| set.contains(i)), || format!("O({ratio}) not within O({bigger})"))?;
        }
    }
    Ok("200 draws: disjoint, covering, |O| = floor(rn), balanced, nested".into())
}

fn scratch_config(text_path: &str, dir: &Path, name: &str) -> ExperimentConfig {
    let path = repo_root().join(text_path);
    let mut config = ExperimentConfig::load(&path).unwrap();
    config.output = dir.join(name);
    config
}

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut config = scratch_config("configs/desk-methods.toml", dir.path(), "a.csv");
    config.rounds = 15;
    config.repeats = 2;
    config.grid.tau = vec![1, 2];
    let run = |config: &ExperimentConfig, jobs| {
        run_grid(config, &RunOptions { jobs: Some(jobs), resume: false }).map_err(|e| e.to_string())?;
        std::fs::read(&config.output).map_err(|e| e.to_string())
    };
    let first = run(&config, 1)?;
    let second = run(&config, 1)?;
    let parallel = run(&config, 4)?;
    ensure(first == second, || "two serial runs differ".into())?;
    ensure(first == parallel, || "parallel run differs from serial".into())?;
    Ok(format!("{} bytes identical across 2 serial runs and a 4-thread run", first.len()))
}

fn failure_statistics() -> Check {
    let q = Quadratic::diagonal(&[1.0, 2.0]);
    let data: Dataset<f64> = deahes::data::make_synthetic(2, 10, 1, 1.0, 0).unwrap();
    let mut cfg = SimConfig::with_defaults(Method::Easgd, 8, 1, 1500);
    cfg.batch_size = 1;
    let metrics = deahes::sim::build(cfg, &q, &data, &data)
        .and_then(|mut s| s.run())
        .map_err(|e| e.to_string())?;
    let n = metrics.comm_attempts as f64;
    let p = 1.0 / 3.0;
    let sd = (n * p * (1.0 - p)).sqrt();
    let z = (metrics.suppressed_attempts as f64 - n * p) / sd;
    ensure(n >= 1e4, || format!("only {n} attempts"))?;
    ensure(z.abs() <= 3.0, || format!("z = {z:.2}"))?;
    Ok(format!(
        "{} of {n} attempts suppressed, rate {:.4}, z = {z:.2}",
        metrics.suppressed_attempts,
        metrics.suppressed_attempts as f64 / n
    ))
}

fn pooled(a: &SummaryRow, b: &SummaryRow) -> f64 {
    ((a.sd_accuracy.powi(2) + b.sd_accuracy.powi(2)) / 2.0).sqrt()
}

/// `hi` is not worse than `lo` by more than one pooled standard deviation.
fn at_least(hi: &SummaryRow, lo: &SummaryRow) -> Result<(), String> {
    let sd = pooled(hi, lo);
    ensure(hi.mean_accuracy >= lo.mean_accuracy - sd, || {
        format!(
            "{} (tau {}, r {}) {:.4} < {} (tau {}, r {}) {:.4} - {:.4}",
            hi.method, hi.tau, hi.r, hi.mean_accuracy, lo.method, lo.tau, lo.r, lo.mean_accuracy, sd
        )
    })
}

fn run_config(path: &str) -> Result<Vec<SummaryRow>, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = scratch_config(path, dir.path(), "out.csv");
    run_grid(&config, &RunOptions::default()).map_err(|e| e.to_string())?;
    let rows = read_rows(&config.output).map_err(|e| e.to_string())?;
    Ok(summarize_rows(&rows))
}

fn fmt_rows(rows: &[&SummaryRow]) -> String {
    rows.iter()
        .map(|s| format!("{} {:.4}±{:.4}", s.method, s.mean_accuracy, s.sd_accuracy))
        .collect::<Vec<_>>()
        .join(", ")
}

fn overlap_sweep() -> Check {
    let summary = run_config("configs/desk-overlap.toml")?;
    let mut sweep: Vec<&SummaryRow> = summary.iter().collect();
    sweep.sort_by(|a, b| a.r.total_cmp(&b.r));
    let ratios: Vec<f64> = sweep.iter().map(|s| s.r).collect();
    ensure(ratios == [0.0, 0.125, 0.25, 0.5], || format!("ratios {ratios:?}"))?;
    for w in sweep.windows(2) {
        at_least(w[1], w[0])?;
    }
    Ok(sweep
        .iter()
        .map(|s| format!("r={} {:.4}±{:.4}", s.r, s.mean_accuracy, s.sd_accuracy))
        .collect::<Vec<_>>()
        .join(", "))
}

fn method_ordering() -> Check {
    let summary = run_config("configs/desk-methods.toml")?;
    let get = |m: Method, tau: usize| {
        summary
            .iter()
            .find(|s| s.method == m && s.tau == tau && s.k == 4)
            .ok_or_else(|| format!("missing {m} at tau {tau}"))
    };
    let order = [Method::EahesOm, Method::DeahesO, Method::EahesO, Method::Eahes];
    for w in order.windows(2) {
        at_least(get(w[0], 2)?, get(w[1], 2)?)?;
    }
    for sgd in [Method::Easgd, Method::Eamsgd] {
        at_least(get(Method::Eahes, 2)?, get(sgd, 2)?)?;
    }
    for m in Method::ALL {
        at_least(get(m, 2)?, get(m, 1)?)?;
        at_least(get(m, 4)?, get(m, 2)?)?;
    }
    let claimed = [Method::EahesOm, Method::DeahesO, Method::EahesO, Method::Eahes, Method::Easgd, Method::Eamsgd];
    let at_two: Vec<&SummaryRow> = claimed.iter().map(|&m| get(m, 2)).collect::<Result<_, _>>()?;
    Ok(format!("tau=2: {}; no method degrades over tau 1, 2, 4", fmt_rows(&at_two)))
}

fn healthy_regime() -> Check {
    let train: Dataset<f64> = deahes::data::make_synthetic(3, 1000, 20, 2.5, 7).unwrap();
    let test: Dataset<f64> = deahes::data::make_synthetic(3, 300, 20, 2.5, 8).unwrap();
    let mut checked_rounds = 0;
    let mut full_runs = 0;
    for (k, tau, rounds, act) in [
        (1, 1, 8, Activation::Tanh),
        (1, 1, 8, Activation::Relu),
        (1, 2, 8, Activation::Tanh),
        (4, 2, 60, Activation::Tanh),
        (4, 1, 60, Activation::Relu),
    ] {
        for seed in 0..3u64 {
            let mlp = Mlp::new(ModelSpec::new(vec![20, 32, 3], act, seed).unwrap()).unwrap();
            let mut cfg = SimConfig::with_defaults(Method::EahesO, k, tau, rounds);
            cfg.failure = FailureModel::none();
            cfg.master_seed = seed;
            let fixed = simulate(cfg.clone(), &mlp, &train, &test)?;
            let dynamic = simulate(cfg.for_method(Method::DeahesO), &mlp, &train, &test)?;
            ensure(dynamic.0.elastic.variant == WeightingVariant::Dynamic, || "variant not dynamic".into())?;

            // Rounds that closed before the first exchange with a
            // non-positive score.
            let first_bad = dynamic
                .1
                .rounds
                .iter()
                .flat_map(|r| &r.workers)
                .filter(|w| w.score.is_some_and(|a| a <= 0.0))
                .map(|w| w.tick)
                .min();
            let healthy = match first_bad {
                None => {
                    full_runs += 1;
                    ensure(fixed.2 == dynamic.2, || format!("final master differs (k={k}, tau={tau})"))?;
                    rounds
                }
                Some(t) => dynamic.1.rounds.iter().take_while(|r| r.tick < t).count(),
            };
            if k == 1 && tau == 1 {
                ensure(first_bad.is_none(), || format!("precondition: score turned non-positive at tick {first_bad:?}"))?;
            }
            for (f, d) in fixed.1.rounds.iter().zip(&dynamic.1.rounds).take(healthy) {
                ensure(f.master_loss.to_bits() == d.master_loss.to_bits() && f.workers == d.workers, || {
                    format!("round {} differs (k={k}, tau={tau}, seed {seed})", f.round)
                })?;
            }
            checked_rounds += healthy;
        }
    }
    ensure(full_runs >= 9, || format!("only {full_runs} runs kept every score positive"))?;
    Ok(format!(
        "{full_runs} runs with every score positive are bitwise identical; {checked_rounds} healthy rounds compared"
    ))
}

fn simulate(
    cfg: SimConfig<f64>,
    mlp: &Mlp,
    train: &Dataset<f64>,
    test: &Dataset<f64>,
) -> Result<Simulated, String> {
    let mut sim = deahes::sim::build(cfg.clone(), mlp, train, test).map_err(|e| e.to_string())?;
    let metrics = sim.run().map_err(|e| e.to_string())?;
    let master = sim.master().values().iter().map(|v| v.to_bits()).collect();
    Ok((cfg, metrics, master))
}
