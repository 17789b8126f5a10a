use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use circula::io::{load_model, parse_dataset, LoadOptions};

fn circula(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_circula")).args(args).output().unwrap()
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

fn stderr_json(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().unwrap();
    serde_json::from_str(line).unwrap()
}

const BLOBS: &str = "circula-model,1
dim,2,components,3
weight,marginal_1,mu_1,conc_1,marginal_2,mu_2,conc_2,binding,bconc_1,bconc_2,q_1,q_2
0.3,vm,1.0,20,vm,1.0,20,wc,0.7,0.7,1,1
0.3,vm,4.0,20,vm,1.5,20,wc,0.7,0.7,1,1
0.4,vm,2.5,20,vm,4.5,20,wc,0.7,0.7,1,1
";

#[test]
fn sample_then_fit_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let truth = path(dir.path(), "truth.csv");
    fs::write(
        &truth,
        "circula-model,1\ndim,2,components,1\n\
         weight,marginal_1,mu_1,conc_1,marginal_2,mu_2,conc_2,binding,bconc_1,bconc_2,q_1,q_2\n\
         1,vm,1.0,4.0,vm,5.0,2.0,wc,0.8,0.6,1,-1\n",
    )
    .unwrap();
    let data = path(dir.path(), "data.csv");
    let fitted = path(dir.path(), "fit.csv");
    assert!(circula(&["sample", "--model", &truth, "--n", "20000", "--seed", "3", "--out", &data]).status.success());
    let out = circula(&["fit", "--data", &data, "--out", &fitted]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("q\t1,-1"));
    let m = load_model(&fitted).unwrap();
    let c = &m.components()[0];
    let mu: Vec<f64> = c.marginals().iter().map(|f| f.mu()).collect();
    assert!((mu[0] - 1.0).abs() < 0.05 && (mu[1] - 5.0).abs() < 0.05, "{mu:?}");
    let kappa: Vec<f64> = c.marginals().iter().map(|f| f.concentration()).collect();
    assert!((kappa[0] / 4.0 - 1.0).abs() < 0.1 && (kappa[1] / 2.0 - 1.0).abs() < 0.1, "{kappa:?}");
    let rho = c.circula().conc();
    // only the product is identified in two dimensions
    assert!((rho[0] * rho[1] - 0.48).abs() < 0.03, "{rho:?}");
}

#[test]
fn fit_mixture_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let truth = path(dir.path(), "blobs.csv");
    fs::write(&truth, BLOBS).unwrap();
    let data = path(dir.path(), "data.csv");
    assert!(circula(&["sample", "--model", &truth, "--n", "600", "--seed", "1", "--out", &data]).status.success());
    let run = |name: &str| {
        let out_path = path(dir.path(), name);
        let out = circula(&["fit-mixture", "--data", &data, "--k-max", "4", "--seed", "7", "--out", &out_path]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        assert!(String::from_utf8_lossy(&out.stdout).contains("message_length_bits"));
        fs::read(out_path).unwrap()
    };
    assert_eq!(run("a.csv"), run("b.csv"));
}

#[test]
fn logpdf_grid_and_modes() {
    let dir = tempfile::tempdir().unwrap();
    let model = path(dir.path(), "blobs.csv");
    fs::write(&model, BLOBS).unwrap();
    let data = path(dir.path(), "pts.csv");
    fs::write(&data, "#unit=degrees\nphi,psi\n57.3,57.3\n180,270\n").unwrap();
    let out = circula(&["logpdf", "--model", &model, "--data", &data]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    let vals: Vec<f64> = lines[1..].iter().map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!((vals[0] + vals[1] - vals[2]).abs() < 1e-9);

    let grid = path(dir.path(), "grid.csv");
    let out = circula(&["grid", "--model", &model, "--dims", "1,2", "--resolution", "200", "--out", &grid]);
    assert!(out.status.success());
    let text = fs::read_to_string(&grid).unwrap();
    let h = std::f64::consts::TAU / 200.0;
    let mass: f64 = text.lines().skip(1).map(|l| l.split(',').nth(2).unwrap().parse::<f64>().unwrap()).sum::<f64>() * h * h;
    assert!((mass - 1.0).abs() < 1e-3, "{mass}");

    let out = circula(&["modes", "--model", &model, "--component", "3"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("alternating_sum\t0"));
}

#[test]
fn synth_and_bench() {
    let dir = tempfile::tempdir().unwrap();
    let data = path(dir.path(), "s.csv");
    let run = || circula(&["synth", "--dim", "3", "--n", "200", "--seed", "5", "--out", &data]);
    assert!(run().status.success());
    let first = fs::read(&data).unwrap();
    assert!(run().status.success());
    assert_eq!(first, fs::read(&data).unwrap());
    let loaded = parse_dataset(&String::from_utf8(first).unwrap(), &LoadOptions::default()).unwrap();
    assert_eq!((loaded.data.len(), loaded.data.dim()), (200, 3));

    let csv = path(dir.path(), "bench.csv");
    let json = path(dir.path(), "bench.json");
    let out = circula(&[
        "bench-rank1", "--dim", "3", "--n", "200", "--repeats", "2", "--seed", "1", "--out", &csv, "--summary", &json,
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read_to_string(&csv).unwrap().lines().count(), 7);
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(summary["n_repeats"], 2);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = circula(&["fit", "--bogus"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_json(&out)["error"], "usage");

    let bad = path(dir.path(), "bad.csv");
    fs::write(&bad, "a,b\n0.1,0.2\n0.3\n").unwrap();
    let out = circula(&["fit", "--data", &bad, "--out", &path(dir.path(), "m.csv")]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_json(&out);
    assert_eq!(err["code"], 2);
    assert!(err["message"].as_str().unwrap().contains("line 3"));

    let out = circula(&["synth", "--dim", "3", "--factor", "0.5,0.5", "--out", &path(dir.path(), "x.csv")]);
    assert_eq!(out.status.code(), Some(1));

    let model = path(dir.path(), "blobs.csv");
    fs::write(&model, BLOBS).unwrap();
    let out = circula(&["grid", "--model", &model, "--dims", "1,3", "--out", &path(dir.path(), "g.csv")]);
    assert_eq!(out.status.code(), Some(1));

    let missing = circula(&["sample", "--model", &path(dir.path(), "none.csv"), "--n", "3", "--out", &path(dir.path(), "o.csv")]);
    assert_eq!(missing.status.code(), Some(2));
}
