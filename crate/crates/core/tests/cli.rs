use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use mlr::io;
use serde_json::Value;

fn mlr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mlr")).args(args).output().unwrap()
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gen_then_factor_fit() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("a.dmat");
    let out = mlr(&["gen", "dgt:m=60,n=50", "--seed", "4", "--out", path(&input)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let dir = tmp.path().join("run");
    let out = mlr(&["run", path(&input), "--rank", "6", "--levels", "3", "--out", path(&dir), "--baselines"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rep = report(&dir);
    assert_eq!(rep["mode"], "factor_fit");
    assert_eq!(rep["m"], 60);
    assert_eq!(rep["storage"], (60 + 50) * 6);
    assert_eq!(rep["ranks"], serde_json::json!([2, 2, 2]));

    let fit = io::load_mlr(dir.join("mlr.bin")).unwrap();
    let a = mlr::dense::load(&input).unwrap();
    let err = (&a - fit.to_dense()).norm() / a.norm();
    assert!((err - rep["final_rel_error"].as_f64().unwrap()).abs() < 1e-10);

    let csv = fs::read_to_string(dir.join("trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "epoch,rel_error,r_1,r_2,r_3,exchange");
    let errors: Vec<f64> = lines.map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(errors.len() as u64, rep["epochs_run"].as_u64().unwrap());
    assert!(errors.windows(2).all(|w| w[1] <= w[0]));

    assert!(dir.join("lr.json").exists());
    assert!(!dir.join("lrd.json").exists(), "baseline with diagonal is only for square inputs");
}

#[test]
fn full_fit_on_generated_symmetric_input() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("run");
    let out = mlr(&[
        "run", "--gen", "fiedler:n=64", "--seed", "2", "--mode", "full_fit", "--kind", "symmetric", "--rank", "6",
        "--init", "bottom", "--out", path(&dir), "--baselines",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rep = report(&dir);
    assert_eq!(rep["input"], "fiedler:n=64,seed=2");
    assert_eq!(rep["ranks"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).sum::<u64>(), 6);
    let lrd: Value = serde_json::from_str(&fs::read_to_string(dir.join("lrd.json")).unwrap()).unwrap();
    assert!(lrd["rel_error"].as_f64().unwrap() < 1.0);
    let p = io::load_partition(dir.join("partition.json")).unwrap();
    assert_eq!(p.row_perm(), p.col_perm());
}

#[test]
fn rank_alloc_with_partition_file_and_warm_start() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("a.csv");
    assert!(mlr(&["gen", "multiscale_kernel:n=48", "--out", path(&input)]).status.success());
    let first = tmp.path().join("first");
    let out = mlr(&["run", path(&input), "--rank", "5", "--levels", "4", "--init", "top", "--out", path(&first)]);
    assert!(out.status.success());

    let second = tmp.path().join("second");
    let partition = first.join("partition.json");
    let init = format!("file:{}", path(&first.join("mlr.bin")));
    let out = mlr(&[
        "run", path(&input), "--mode", "rank_alloc", "--rank", "5", "--partition", path(&partition), "--init", &init,
        "--out", path(&second),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let a = report(&first)["final_rel_error"].as_f64().unwrap();
    let b = report(&second);
    assert!(b["final_rel_error"].as_f64().unwrap() <= a + 1e-12);
    assert!((b["initial_rel_error"].as_f64().unwrap() - a).abs() < 1e-12);
}

#[test]
fn runs_are_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let (x, y) = (tmp.path().join("x"), tmp.path().join("y"));
    for dir in [&x, &y] {
        let out = mlr(&["run", "--gen", "graph_distance:n=60", "--seed", "9", "--mode", "rank_alloc", "--kind", "symmetric", "--rank", "4", "--out", path(dir)]);
        assert!(out.status.success());
    }
    for name in ["mlr.bin", "trajectory.csv", "partition.json"] {
        assert_eq!(fs::read(x.join(name)).unwrap(), fs::read(y.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn bad_inputs_exit_with_code_two() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("o");
    let cases: Vec<Vec<&str>> = vec![
        vec!["run", "--gen", "nosuch:n=3", "--rank", "2", "--out", path(&dir)],
        vec!["run", "/nonexistent/a.dmat", "--rank", "2", "--out", path(&dir)],
        vec!["run", "--gen", "dgt:n=10", "--rank", "0", "--out", path(&dir)],
        vec!["run", "--gen", "dgt:n=10,m=12", "--kind", "symmetric", "--rank", "2", "--out", path(&dir)],
        vec!["run", "--gen", "dgt:n=10", "--mode", "fastest", "--rank", "2"],
        vec!["gen", "dgt:n=10,h=oops", "--out", path(&dir)],
    ];
    for args in cases {
        let out = mlr(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}
