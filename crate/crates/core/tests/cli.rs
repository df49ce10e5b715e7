use std::path::Path;
use std::process::{Command, Output};

use cllb::output::read_binary;

fn cllb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cllb"))
        .args(args)
        .env_remove("CLLB_WORKERS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn value(text: &str, key: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("{key} missing"))
        .parse()
        .unwrap()
}

#[test]
fn constants_for_white_noise() {
    let o = cllb(&["constants", "--alpha", "2", "--hurst", "0.5"]);
    assert!(o.status.success());
    let s = stdout(&o);
    assert_eq!(value(&s, "theta"), 0.25);
    assert!((value(&s, "c21") - 0.398942).abs() < 1e-6);
    assert!((value(&s, "kappa") - 0.751126).abs() < 1e-6);
}

#[test]
fn validation_failures_exit_2_with_one_error_line() {
    let o = cllb(&["constants", "--alpha", "3"]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    assert_eq!(e.lines().count(), 1);
    assert!(e.starts_with("error: code=2 kind=validation"));
    assert!(e.contains("(1, 2]"));
    let o = cllb(&["constants", "--hurst", "0.2", "--alpha", "1.2"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(cllb(&["constants", "--nope"]).status.code(), Some(1));
    assert_eq!(cllb(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(cllb(&[]).status.code(), Some(1));
    assert_eq!(cllb(&["sample", "--count", "many"]).status.code(), Some(1));
    assert!(cllb(&["--help"]).status.success());
}

#[test]
fn smallball_is_byte_identical_across_runs_and_workers() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let base = ["smallball", "--process", "fbm", "--hurst-index", "0.5", "--seed", "7", "--count", "10000", "--grid-size", "256"];
    let run = |out: &Path, workers: &str| {
        let mut args = base.to_vec();
        args.extend(["--workers", workers, "-o", out.to_str().unwrap()]);
        assert!(cllb(&args).status.success());
        std::fs::read(out).unwrap()
    };
    let first = run(&a, "1");
    let second = run(&b, "0");
    assert_eq!(first, second);
    let text = String::from_utf8(first).unwrap();
    assert!(text.starts_with("# cllb "));
    assert!(text.contains("# seed = 7\n"));
    assert!(text.contains("# count = 10000\n"));
    assert!(text.contains("\nepsilon,prob,stderr,count,grid_size"));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# white noise\nalpha = 1.5\nhurst = 0.75\n").unwrap();
    let o = cllb(&["constants", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(value(&stdout(&o), "alpha"), 1.5);
    let o = cllb(&["constants", "--config", cfg.to_str().unwrap(), "--alpha", "2"]);
    assert_eq!(value(&stdout(&o), "alpha"), 2.0);
    assert_eq!(value(&stdout(&o), "hurst"), 0.75);

    std::fs::write(&cfg, "colour = blue\n").unwrap();
    let o = cllb(&["constants", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("colour"));
}

#[test]
fn sample_binary_layout() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("paths.bin");
    let o = cllb(&[
        "sample", "--grid", "explicit", "--points", "0.1,0.5,1", "--count", "5", "--seed", "3", "--format",
        "binary", "-o", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let bytes = std::fs::read(&out).unwrap();
    assert_eq!(&bytes[..4], b"CLLB");
    let (m, rows, cols) = read_binary(&bytes).unwrap();
    assert_eq!((rows, cols), (5, 3));
    assert!(m.iter().all(|x| x.is_finite()));

    let csv = dir.path().join("paths.csv");
    let o = cllb(&[
        "sample", "--grid", "explicit", "--points", "0.1,0.5,1", "--count", "5", "--seed", "3", "-o",
        csv.to_str().unwrap(), "--plot",
    ]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(&csv).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "path,x0,x1,x2");
    // CSV and binary carry the same numbers.
    let first: Vec<f64> = rows[1].split(',').skip(1).map(|x| x.parse().unwrap()).collect();
    assert_eq!(first, m[..3].to_vec());
    assert!(dir.path().join("paths.plot.py").exists());
}

#[test]
fn cov_verify_columns() {
    let o = cllb(&["cov-verify", "--pairs", "1.5:0.75", "--points", "3"]);
    assert!(o.status.success());
    let s = stdout(&o);
    let rows: Vec<&str> = s.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "alpha,H,s,t,closed,quadrature,rel_err");
    assert_eq!(rows.len(), 1 + 9);
    for r in &rows[1..] {
        let err: f64 = r.rsplit(',').next().unwrap().parse().unwrap();
        assert!(err < 1e-6);
    }
}

#[test]
fn lil_writes_records_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("lil.csv");
    let o = cllb(&[
        "lil", "--lambda", "7.8", "--n-max", "6", "--count", "5", "--grid-points", "128", "--lemmas", "-o",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&out).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(
        rows[0],
        "realization,n,sup_u_over_psi,sup_un_over_psi,sup_yn_over_psi,running_min,running_min_u"
    );
    assert_eq!(rows.len(), 1 + 5 * 5);
    assert!(text.contains("#   \"predicted_kappa_lambda_theta\": "));
    assert!(text.contains("#   \"triangle_violations\": 0"));
    assert!(stdout(&o).contains("\"lemma_rows\""));
}
