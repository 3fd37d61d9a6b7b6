//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use osborn::eval::{kendall_tau, pearson, weighted_kendall_tau};
use osborn::io::{FeatureMatrix, LabelVector, TEConfig, Weights};
use osborn::metrics::{build_cache, cohesion_pair, w_task, JointLabelDistribution, Scorer};
use osborn::ot::{cost_matrix, exact_ot, quadratic_objective, sinkhorn, sinkhorn_frobenius, CostMatrix, MarginalWeights};
use osborn::selection::{exhaustive_select, greedy_select, score_all};
use osborn::synth::{generate, SynthPool, SynthSpec};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn random_pool(rng: &mut ChaCha8Rng, m: usize, groups: Vec<String>, seed: u64) -> SynthPool {
    let spec = SynthSpec {
        num_models: m,
        dim: 4,
        source_classes: 3,
        target_classes: 3,
        samples: 60,
        domain_shift: (0..m).map(|_| rng.random_range(0.0..1.0)).collect(),
        prediction_noise: (0..m).map(|_| rng.random_range(0.0..0.5)).collect(),
        groups,
        seed,
        class_scale: 3.0,
    };
    generate(&spec).unwrap()
}

fn points(rng: &mut ChaCha8Rng, n: usize, d: usize) -> FeatureMatrix {
    FeatureMatrix::new(n, d, (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn ot_correctness() -> Outcome {
    let start = Instant::now();
    let (mut worst_rel, mut worst_res, mut failures) = (0.0f64, 0.0f64, 0);
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n, m) = (rng.random_range(1..=8), rng.random_range(1..=8));
        let cost = cost_matrix(&points(&mut rng, n, 3), &points(&mut rng, m, 3)).unwrap();
        let marginals = MarginalWeights::uniform(n, m);
        let approx = sinkhorn(&cost, &marginals, 0.01 * cost.median(), 1000, 1e-6).unwrap();
        let exact = exact_ot(&cost, &marginals).unwrap();
        let rel = (approx.transport_cost - exact.transport_cost).abs() / exact.transport_cost.max(f64::MIN_POSITIVE);
        let res = approx.residual(&marginals);
        worst_rel = worst_rel.max(rel);
        worst_res = worst_res.max(res);
        if rel > 0.05 || res > 1e-6 {
            failures += 1;
        }
    }
    let elapsed = start.elapsed();
    outcome(
        failures == 0 && elapsed < Duration::from_secs(5),
        format!("worst relative error {worst_rel:.2e}, worst residual {worst_res:.2e}, {failures} failures, {elapsed:.2?}"),
    )
}

fn members_of(mask: usize, m: usize) -> Vec<usize> {
    (0..m).filter(|i| mask >> i & 1 == 1).collect()
}

fn submodularity() -> Outcome {
    let (mut triples, mut violations) = (0usize, 0usize);
    for seed in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = rng.random_range(2..=6);
        let groups = (0..m).map(|_| format!("g{}", rng.random_range(0..3))).collect();
        let synth = random_pool(&mut rng, m, groups, seed);
        let config = TEConfig {
            standardize: false,
            seed,
            ..TEConfig::default()
        };
        let cache = build_cache(&synth.pool, &config).unwrap();
        let scorer = Scorer::new(&cache, &config).unwrap();
        let f = |mask: usize| scorer.f(&members_of(mask, m));
        for y in 0..1usize << m {
            // Every submask of y.
            let mut x = y;
            loop {
                for v in (0..m).filter(|v| y >> v & 1 == 0) {
                    triples += 1;
                    let small = f(x | 1 << v) - f(x);
                    let large = f(y | 1 << v) - f(y);
                    if small < large - 1e-9 {
                        violations += 1;
                    }
                }
                if x == 0 {
                    break;
                }
                x = (x - 1) & y;
            }
        }
    }
    outcome(violations == 0, format!("{violations} violations in {triples} triples"))
}

fn marginal_gain_closed_form() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    let mut queries = 0;
    for pool_seed in 0..10u64 {
        let m = 6;
        let groups = (0..m).map(|_| format!("g{}", rng.random_range(0..3))).collect();
        let synth = random_pool(&mut rng, m, groups, pool_seed);
        let config = TEConfig {
            standardize: pool_seed % 2 == 0,
            weights: Weights::new(rng.random_range(0.1..2.0), rng.random_range(0.1..2.0), rng.random_range(0.1..2.0)).unwrap(),
            seed: pool_seed,
            ..TEConfig::default()
        };
        let cache = build_cache(&synth.pool, &config).unwrap();
        let scorer = Scorer::new(&cache, &config).unwrap();
        for _ in 0..100 {
            let mut order: Vec<usize> = (0..m).collect();
            order.shuffle(&mut rng);
            let size = rng.random_range(0..m);
            let (set, v) = (&order[..size], order[size]);
            let mut with = set.to_vec();
            with.push(v);
            let diff = (scorer.gain(set, v) - (scorer.f(&with) - scorer.f(set))).abs();
            worst = worst.max(diff);
            queries += 1;
        }
    }
    outcome(worst <= 1e-12, format!("{queries} queries, worst difference {worst:.2e}"))
}

fn greedy_quality() -> Outcome {
    let start = Instant::now();
    let (mut equal, mut greedy_acc, mut optimal_acc) = (0, 0.0, 0.0);
    let instances = 200;
    for seed in 0..instances as u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = 6;
        let groups = (0..m).map(|i| format!("g{i}")).collect();
        let synth = random_pool(&mut rng, m, groups, seed);
        let config = TEConfig {
            seed,
            ..TEConfig::default()
        };
        let cache = build_cache(&synth.pool, &config).unwrap();
        let greedy = greedy_select(&cache, 3, &config).unwrap();
        let (best, f_best) = exhaustive_select(&cache, 3, &config).unwrap();
        if (greedy.f_value() - f_best).abs() <= 1e-9 * f_best.abs().max(1.0) {
            equal += 1;
        }
        greedy_acc += synth.proxy_accuracy(&greedy.ensemble).unwrap();
        optimal_acc += synth.proxy_accuracy(&best).unwrap();
    }
    let elapsed = start.elapsed();
    let share = equal as f64 / instances as f64;
    let ratio = greedy_acc / optimal_acc;
    outcome(
        share >= 0.8 && ratio >= 0.90 && elapsed < Duration::from_secs(60),
        format!("greedy optimal in {equal}/{instances}, accuracy ratio {ratio:.4}, {elapsed:.2?}"),
    )
}

fn cohesion_component() -> Outcome {
    let (mut with, mut without) = (Vec::new(), Vec::new());
    let m = 4;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let groups: Vec<String> = (0..m).map(|i| if i < 3 { "g".into() } else { format!("s{i}") }).collect();
        let shared: f64 = rng.random_range(0.0..0.5);
        let spec = SynthSpec {
            num_models: m,
            dim: 4,
            source_classes: 3,
            target_classes: 3,
            samples: 60,
            domain_shift: (0..m).map(|_| rng.random_range(0.0..1.0)).collect(),
            prediction_noise: (0..m)
                .map(|i| {
                    let own = rng.random_range(0.0..0.5);
                    if i < 3 {
                        shared
                    } else {
                        own
                    }
                })
                .collect(),
            groups,
            seed,
            class_scale: 3.0,
        };
        let synth = generate(&spec).unwrap();
        let config = TEConfig {
            seed,
            ..TEConfig::default()
        };
        let cache = build_cache(&synth.pool, &config).unwrap();
        for (weights, out) in [(Weights::UNIT, &mut with), (Weights::new(1.0, 1.0, 0.0).unwrap(), &mut without)] {
            let config = TEConfig {
                weights,
                ..config.clone()
            };
            let rows = score_all(&cache, 2, &config).unwrap();
            let alpha: Vec<f64> = rows.iter().map(|(_, s)| -s).collect();
            let acc: Vec<f64> = rows.iter().map(|(c, _)| synth.proxy_accuracy(c).unwrap()).collect();
            if let Ok(r) = pearson(&alpha, &acc) {
                out.push(r);
            }
        }
    }
    let counts = format!("{}/{} seeds with defined PCC", with.len().min(without.len()), 20);
    let (a, b) = (median(with), median(without));
    outcome(b < a, format!("median PCC {a:.3} with cohesion, {b:.3} without ({counts})"))
}

/// `H(X | Y) = H(X, Y) − H(Y)` from a count or probability table laid out
/// with `x` as rows.
fn entropy_oracle(table: &[f64], cols: usize) -> f64 {
    let total: f64 = table.iter().sum();
    let h = |ps: &mut dyn Iterator<Item = f64>| -> f64 {
        ps.filter(|&p| p > 0.0).map(|p| -(p / total) * (p / total).ln()).sum()
    };
    let joint = h(&mut table.iter().copied());
    let column = h(&mut (0..cols).map(|j| table.iter().skip(j).step_by(cols).sum::<f64>()));
    joint - column
}

fn entropy_oracle_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    for _ in 0..250 {
        let (cs, ct) = (rng.random_range(1..=6), rng.random_range(1..=6));
        let mut table: Vec<f64> = (0..cs * ct)
            .map(|_| if rng.random_bool(0.3) { 0.0 } else { rng.random_range(0.0..1.0) })
            .collect();
        table[rng.random_range(0..cs * ct)] += 0.5;
        let total: f64 = table.iter().sum();
        table.iter_mut().for_each(|p| *p /= total);
        let joint = JointLabelDistribution::new(cs, ct, table.clone()).unwrap();
        worst = worst.max((w_task(&joint) - entropy_oracle(&table, ct)).abs());
    }
    for _ in 0..250 {
        let n = rng.random_range(1..=100);
        let (ci, cj) = (rng.random_range(1..=5), rng.random_range(1..=5));
        let a: Vec<usize> = (0..n).map(|_| rng.random_range(0..ci)).collect();
        let b: Vec<usize> = (0..n).map(|_| rng.random_range(0..cj)).collect();
        let mut counts = vec![0.0; ci * cj];
        for (&x, &y) in a.iter().zip(&b) {
            counts[x * cj + y] += 1.0;
        }
        let got = cohesion_pair(&LabelVector::new(ci, a).unwrap(), &LabelVector::new(cj, b).unwrap()).unwrap();
        worst = worst.max((got - entropy_oracle(&counts, cj)).abs());
    }

    let labels = |c: usize, v: Vec<usize>| LabelVector::new(c, v).unwrap();
    let mut analytic = Vec::new();
    let same = labels(3, vec![0, 1, 2, 2, 1]);
    analytic.push((cohesion_pair(&same, &same).unwrap(), 0.0));
    let coin = labels(2, vec![0, 1, 0, 1]);
    let given = labels(2, vec![0, 0, 1, 1]);
    analytic.push((cohesion_pair(&coin, &given).unwrap(), 2f64.ln()));
    for c in 2..=6usize {
        let table = vec![1.0 / (c * c) as f64; c * c];
        analytic.push((w_task(&JointLabelDistribution::new(c, c, table).unwrap()), (c as f64).ln()));
        let diagonal: Vec<f64> = (0..c * c).map(|i| if i % (c + 1) == 0 { 1.0 / c as f64 } else { 0.0 }).collect();
        analytic.push((w_task(&JointLabelDistribution::new(c, c, diagonal).unwrap()), 0.0));
    }
    let analytic_worst = analytic.iter().map(|(g, e)| (g - e).abs()).fold(0.0, f64::max);
    outcome(
        worst <= 1e-12 && analytic_worst <= 1e-12,
        format!("500 random inputs, worst {worst:.2e}; analytic cases worst {analytic_worst:.2e}"),
    )
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn pearson_loop(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / n;
    let (mx, my) = (mean(x), mean(y));
    let sd = |v: &[f64], mu: f64| (v.iter().map(|a| (a - mu).powi(2)).sum::<f64>() / n).sqrt();
    let (sx, sy) = (sd(x, mx), sd(y, my));
    x.iter().zip(y).map(|(a, b)| (a - mx) / sx * ((b - my) / sy)).sum::<f64>() / n
}

/// Pairwise loop with pair weights `w_i + w_j` (unit weights give τ-b).
fn tau_loop(x: &[f64], y: &[f64], weights: &[f64]) -> f64 {
    let (mut num, mut dx, mut dy) = (0.0, 0.0, 0.0);
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            let w = weights[i] + weights[j];
            let (a, b) = (sign(x[i] - x[j]), sign(y[i] - y[j]));
            num += w * a * b;
            dx += w * a.abs();
            dy += w * b.abs();
        }
    }
    num / (dx * dy).sqrt()
}

fn hyperbolic_loop(y: &[f64]) -> Vec<f64> {
    y.iter().map(|&v| 1.0 / (y.iter().filter(|&&u| u > v).count() as f64 + 1.0)).collect()
}

fn correlation_statistics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    let mut done = 0;
    while done < 100 {
        let n = rng.random_range(2..=50);
        let tied = rng.random_bool(0.5);
        let mut draw = |_| if tied { rng.random_range(0..5) as f64 } else { rng.random_range(-1.0..1.0) };
        let x: Vec<f64> = (0..n).map(&mut draw).collect();
        let y: Vec<f64> = (0..n).map(&mut draw).collect();
        let varies = |v: &[f64]| v.iter().any(|&a| a != v[0]);
        if !varies(&x) || !varies(&y) {
            continue;
        }
        let unit = vec![0.5; n];
        worst = worst
            .max((pearson(&x, &y).unwrap() - pearson_loop(&x, &y)).abs())
            .max((kendall_tau(&x, &y).unwrap() - tau_loop(&x, &y, &unit)).abs())
            .max((weighted_kendall_tau(&x, &y).unwrap() - tau_loop(&x, &y, &hyperbolic_loop(&y))).abs());
        done += 1;
    }
    let x: Vec<f64> = (0..20).map(|i| i as f64 * 0.37 - 2.0).collect();
    let up: Vec<f64> = x.iter().map(|v| 3.0 * v + 1.0).collect();
    let down: Vec<f64> = x.iter().map(|v| -0.5 * v + 4.0).collect();
    let curved: Vec<f64> = x.iter().map(|v| v.exp()).collect();
    let boundaries = [
        (pearson(&x, &up).unwrap() - 1.0).abs() <= 1e-12,
        (pearson(&x, &down).unwrap() + 1.0).abs() <= 1e-12,
        kendall_tau(&x, &curved).unwrap() == 1.0,
        kendall_tau(&x, &down).unwrap() == -1.0,
        weighted_kendall_tau(&x, &curved).unwrap() == 1.0,
        weighted_kendall_tau(&x, &down).unwrap() == -1.0,
    ];
    let boundary_ok = boundaries.iter().all(|&b| b);
    outcome(
        worst <= 1e-12 && boundary_ok,
        format!("100 random vectors, worst {worst:.2e}; monotone boundaries {}", if boundary_ok { "exact" } else { "off" }),
    )
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_osborn"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)))
    }
}

fn pipeline(dir: &Path, threads: &str) -> Result<Vec<(String, Vec<u8>)>, String> {
    let p = |name: &str| dir.join(name).to_str().unwrap().to_owned();
    fs::write(
        p("synth.spec"),
        "num_models = 4\ndim = 6\nsource_classes = 3\ntarget_classes = 4\nsamples = 300\n\
         domain_shift = 0.2, 0.8, 1.5, 0.5\nprediction_noise = 0.1, 0.3, 0.1, 0.2\n\
         groups = a, b, a, c\nseed = 11\n",
    )
    .map_err(|e| e.to_string())?;
    let t = ["--threads", threads];
    let manifest = p("pool/pool.json");
    run_cli(&[&t[..], &["synth", "--spec", &p("synth.spec"), "--out", &p("pool")]].concat())?;
    run_cli(&[&t[..], &["pairwise", "--pool", &manifest, "--out", &p("cache.csv")]].concat())?;
    run_cli(&[&t[..], &["score", "--cache", &p("cache.csv"), "--k", "2", "--out", &p("rankings.csv")]].concat())?;
    run_cli(&[&t[..], &["select", "--cache", &p("cache.csv"), "--k", "3", "--out", &p("selection.csv")]].concat())?;
    run_cli(&[&t[..], &["accuracy", "--pool", &manifest, "--rankings", &p("rankings.csv"), "--out", &p("scored.csv")]].concat())?;
    run_cli(&[&t[..], &["eval", "--rankings", &p("scored.csv"), "--out", &p("report.csv")]].concat())?;

    let mut files = Vec::new();
    for base in [dir.to_path_buf(), dir.join("pool")] {
        let mut names: Vec<_> = fs::read_dir(&base)
            .map_err(|e| e.to_string())?
            .filter_map(|e| e.ok())
            .filter(|e| e.path().is_file())
            .map(|e| e.path())
            .collect();
        names.sort();
        for path in names {
            let bytes = fs::read(&path).map_err(|e| e.to_string())?;
            files.push((path.strip_prefix(dir).unwrap().display().to_string(), bytes));
        }
    }
    Ok(files)
}

fn determinism() -> Outcome {
    let runs: Result<Vec<_>, String> = ["1", "1", "4"]
        .iter()
        .map(|threads| {
            let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
            pipeline(dir.path(), threads)
        })
        .collect();
    match runs {
        Err(e) => outcome(false, format!("pipeline failed: {e}")),
        Ok(runs) => {
            let identical = runs[1..].iter().all(|r| *r == runs[0]);
            outcome(identical, format!("{} files compared over runs with 1, 1 and 4 threads", runs[0].len()))
        }
    }
}

fn frobenius_variant() -> Outcome {
    let (mut worst_res, mut worse) = (0.0f64, 0);
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..5).map(|_| (0..5).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
        let cost = CostMatrix::from_rows(&rows).unwrap();
        let marginals = MarginalWeights::uniform(5, 5);
        let scale = cost.median();
        let eps_q = 0.1 * scale * 25.0;
        let quadratic = sinkhorn_frobenius(&cost, &marginals, eps_q, 10_000, 1e-9).unwrap();
        let entropic = sinkhorn(&cost, &marginals, 0.1 * scale, 10_000, 1e-9).unwrap();
        worst_res = worst_res.max(quadratic.residual(&marginals));
        let oq = quadratic_objective(&cost, quadratic.plan(), eps_q);
        let oe = quadratic_objective(&cost, entropic.plan(), eps_q);
        if oq > oe {
            worse += 1;
        }
    }
    outcome(
        worst_res <= 1e-6 && worse == 0,
        format!("worst residual {worst_res:.2e}, {worse}/20 instances above the entropic plan's objective"),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 9] = [
        ("OT correctness", ot_correctness),
        ("submodularity", submodularity),
        ("marginal gain closed form", marginal_gain_closed_form),
        ("greedy quality", greedy_quality),
        ("cohesion component", cohesion_component),
        ("conditional entropy oracle", entropy_oracle_check),
        ("correlation statistics", correlation_statistics),
        ("determinism", determinism),
        ("Frobenius variant", frobenius_variant),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let result = check();
        if !result.pass {
            failed += 1;
        }
        println!(
            "criterion {} {name}: {} ({})",
            i + 1,
            if result.pass { "PASS" } else { "FAIL" },
            result.detail
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
