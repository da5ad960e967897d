use std::path::Path;
use std::process::{Command, Output};

fn pivchol(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pivchol")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

#[test]
fn missing_hyperparameters_is_a_config_error() {
    let out = pivchol(&["precond-bench", "--synth", "uniform(50,2)"]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn unknown_config_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "bogus = 3\n").unwrap();
    let out = pivchol(&["gp-bench", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
}

#[test]
fn constant_target_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("flat.csv");
    std::fs::write(&data, "x,y\n1,1\n2,1\n3,1\n").unwrap();
    let out = pivchol(&[
        "trace-bounds",
        "--data",
        data.to_str().unwrap(),
        "--theta",
        "1",
        "--lengthscale",
        "1",
        "--noise",
        "0.1",
    ]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}

fn files(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> =
        std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    v.sort();
    v
}

#[test]
fn synth_then_bench_from_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("data.csv");
    let out = pivchol(&["synth", "--synth", "clusters(3,120,2,0.2)", "--out", csv.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let head = std::fs::read_to_string(&csv).unwrap();
    assert!(head.starts_with("x0,x1,y"));

    let res = dir.path().join("res");
    let common = ["--data", csv.to_str().unwrap(), "--theta", "1", "--lengthscale", "0.3", "--noise", "0.05"];
    let mut args = vec!["precond-bench"];
    args.extend(common);
    args.extend(["--strategies", "var,random", "--seeds", "0,1", "--out", res.to_str().unwrap()]);
    let out = pivchol(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let mut args = vec!["decompose"];
    args.extend(common);
    args.extend(["--strategies", "pcov", "--ranks", "7", "--out", res.to_str().unwrap()]);
    let out = pivchol(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let names = files(&res);
    assert!(names.contains(&"precond_data.csv".to_string()), "{names:?}");
    assert!(names.contains(&"precond_data.svg".to_string()), "{names:?}");
    assert!(names.iter().any(|n| n.ends_with(".pchl")), "{names:?}");
}
