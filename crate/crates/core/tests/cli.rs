use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn osborn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_osborn")).args(args).output().unwrap()
}

fn ok(args: &[&str]) {
    let out = osborn(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_owned()
}

const SPEC: &str = "# three models, two of them redundant
num_models = 3
dim = 4
source_classes = 3
target_classes = 3
samples = 45
domain_shift = 0.1, 0.6, 1.2
prediction_noise = 0.2
groups = a, a, b
seed = 5
";

fn synth_pool(dir: &Path) -> String {
    fs::write(dir.join("synth.spec"), SPEC).unwrap();
    ok(&["synth", "--spec", &path(dir, "synth.spec"), "--out", &path(dir, "pool")]);
    path(dir, "pool/pool.json")
}

#[test]
fn pairwise_writes_models_and_pairs_idempotently() {
    let dir = tempfile::tempdir().unwrap();
    let pool = synth_pool(dir.path());
    let out = path(dir.path(), "cache.csv");
    ok(&["pairwise", "--pool", &pool, "--out", &out]);
    let first = fs::read_to_string(&out).unwrap();
    assert_eq!(first.lines().filter(|l| l.starts_with("model,")).count(), 3);
    assert_eq!(first.lines().filter(|l| l.starts_with("pair,")).count(), 6);
    ok(&["pairwise", "--pool", &pool, "--out", &out]);
    assert_eq!(fs::read_to_string(&out).unwrap(), first);
}

#[test]
fn score_lists_every_subset() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("synth.spec"), SPEC.replace("num_models = 3", "num_models = 4")
        .replace("0.1, 0.6, 1.2", "0.1, 0.6, 1.2, 0.3")
        .replace("a, a, b", "a, a, b, c"))
    .unwrap();
    ok(&["synth", "--spec", &path(dir.path(), "synth.spec"), "--out", &path(dir.path(), "pool")]);
    let out = path(dir.path(), "rankings.csv");
    ok(&["score", "--pool", &path(dir.path(), "pool/pool.json"), "--k", "3", "--out", &out]);
    let text = fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "ensemble,alpha,accuracy");
    assert_eq!(
        lines[1..].iter().map(|l| l.split(',').next().unwrap()).collect::<Vec<_>>(),
        ["m0;m1;m2", "m0;m1;m3", "m0;m2;m3", "m1;m2;m3"]
    );
}

const CACHE: &str = "model,a,wd,1,wt,0.5,converged,1
model,b,wd,0.2,wt,0.1,converged,1
model,c,wd,0.3,wt,0.1,converged,1
model,d,wd,2,wt,1,converged,1
pair,a,b,h,0.4
pair,b,a,h,0.4
pair,a,c,h,0.3
pair,c,a,h,0.3
pair,a,d,h,0.9
pair,d,a,h,0.9
pair,b,c,h,0.7
pair,c,b,h,0.6
pair,b,d,h,0.2
pair,d,b,h,0.2
pair,c,d,h,0.5
pair,d,c,h,0.5
";

#[test]
fn greedy_and_exhaustive_agree() {
    let dir = tempfile::tempdir().unwrap();
    let cache = path(dir.path(), "cache.csv");
    fs::write(&cache, CACHE).unwrap();
    let (greedy, exhaustive) = (path(dir.path(), "greedy.csv"), path(dir.path(), "best.csv"));
    let common = ["--cache", cache.as_str(), "--k", "2", "--standardize", "false"];
    ok(&[&["select"], &common[..], &["--out", &greedy]].concat());
    ok(&[&["select"], &common[..], &["--strategy", "exhaustive", "--out", &exhaustive]].concat());
    let greedy = fs::read_to_string(greedy).unwrap();
    let exhaustive = fs::read_to_string(exhaustive).unwrap();
    assert!(greedy.starts_with("step,chosen_id,gain,f_cumulative\n1,b,"), "{greedy}");
    assert!(greedy.ends_with("ensemble,b;c\n"), "{greedy}");
    // b + c: 0.7 from domain and task plus 1.3 from cohesion.
    let (f, ensemble) = exhaustive.split_once('\n').unwrap();
    assert!((f.strip_prefix("f,").unwrap().parse::<f64>().unwrap() + 2.0).abs() < 1e-12);
    assert_eq!(ensemble, "ensemble,b;c\n");
}

#[test]
fn invalid_k_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cache = path(dir.path(), "cache.csv");
    fs::write(&cache, CACHE).unwrap();
    for k in ["0", "5"] {
        let out = osborn(&["select", "--cache", &cache, "--k", k, "--out", &path(dir.path(), "x.csv")]);
        assert_eq!(out.status.code(), Some(1));
        assert!(!dir.path().join("x.csv").exists());
    }
}

#[test]
fn synth_names_the_missing_key() {
    let dir = tempfile::tempdir().unwrap();
    let spec = path(dir.path(), "synth.spec");
    fs::write(&spec, SPEC.replace("samples = 45\n", "")).unwrap();
    let out = osborn(&["synth", "--spec", &spec, "--out", &path(dir.path(), "pool")]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("samples"));
}

#[test]
fn eval_reports_perfect_and_reversed_rankings() {
    let dir = tempfile::tempdir().unwrap();
    for (accuracies, expected) in [([0.5, 0.6, 0.7, 0.8], 1.0), ([0.8, 0.7, 0.6, 0.5], -1.0)] {
        let mut text = String::from("ensemble,alpha,accuracy\n");
        for (i, acc) in accuracies.iter().enumerate() {
            text.push_str(&format!("m{i},{},{acc}\n", i as f64 - 1.5));
        }
        let rankings = path(dir.path(), "rankings.csv");
        let report = path(dir.path(), "report.csv");
        fs::write(&rankings, text).unwrap();
        ok(&["eval", "--rankings", &rankings, "--out", &report]);
        let report = fs::read_to_string(report).unwrap();
        let values: Vec<(&str, f64)> = report
            .lines()
            .skip(1)
            .map(|l| l.split_once(',').unwrap())
            .map(|(k, v)| (k, v.parse().unwrap()))
            .collect();
        assert_eq!(values.iter().map(|v| v.0).collect::<Vec<_>>(), ["pcc", "kendall_tau", "weighted_kendall_tau", "n_pairs"]);
        for (_, v) in &values[..3] {
            assert!((v - expected).abs() < 1e-12, "{report}");
        }
        assert_eq!(values[3].1, 4.0);
    }
}

#[test]
fn unconverged_solves_exit_two_when_required() {
    let dir = tempfile::tempdir().unwrap();
    let pool = synth_pool(dir.path());
    let config = path(dir.path(), "te.cfg");
    fs::write(&config, "max_iters = 1\nconvergence_tol = 1e-12\nepsilon = 0.001\n").unwrap();
    let out = path(dir.path(), "cache.csv");
    let strict = osborn(&["pairwise", "--pool", &pool, "--config", &config, "--require-convergence", "--out", &out]);
    assert_eq!(strict.status.code(), Some(2), "{}", String::from_utf8_lossy(&strict.stderr));
    let lenient = osborn(&["pairwise", "--pool", &pool, "--config", &config, "--out", &out]);
    assert_eq!(lenient.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&lenient.stderr).contains("did not converge"));
    assert!(fs::read_to_string(&out).unwrap().contains(",converged,0\n"));
}
