use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use camt::simulation::{generate_replicate, Setup, SimulationConfig};
use camt::table::FitOutput;
use camt::{bh, storey};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

fn camt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_camt")).args(args).output().expect("binary runs")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_simulated(dir: &Path, name: &str, m: usize, k_d: f64, delim: char) -> PathBuf {
    let cfg = SimulationConfig { m, k_d, n_replicates: 1, seed: 9, ..SimulationConfig::default() };
    let d = generate_replicate(&cfg, 0).unwrap();
    let mut text = format!("pvalue{delim}x\n");
    for (p, x) in d.pvals.iter().zip(&d.covariates[0]) {
        text.push_str(&format!("{p}{delim}{x}\n"));
    }
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn fit(input: &Path, output: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["fit", "--input", path_str(input), "--output", path_str(output)];
    args.extend_from_slice(extra);
    camt(&args)
}

#[test]
fn fit_writes_readable_output() {
    let dir = TempDir::new().unwrap();
    let input = write_simulated(dir.path(), "in.csv", 3000, 1.5, ',');
    let output = dir.path().join("out.csv");
    let res = fit(&input, &output, &["--alpha", "0.1", "--seed", "7"]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));

    let out = FitOutput::read(fs::File::open(&output).unwrap()).unwrap();
    assert_eq!(out.pvalue.len(), 3000);
    assert_eq!(out.covariate_names, vec!["x"]);
    for key in ["camt_version", "alpha", "t_hat", "em_iterations", "gif", "seed"] {
        assert!(out.meta(key).is_some(), "missing {key}");
    }
    assert_eq!(out.meta("seed"), Some("7"));
    let t_hat: f64 = out.meta("t_hat").unwrap().parse().unwrap();
    let n_rej: usize = out.meta("n_rejections").unwrap().parse().unwrap();
    assert!(n_rej > 0);
    assert_eq!(out.rejected.iter().filter(|&&r| r).count(), n_rej);
    for (s, r) in out.psi_stat.iter().zip(&out.rejected) {
        assert_eq!(*r, *s <= t_hat);
    }

    // rewriting the parsed output reproduces the file byte for byte
    let mut buf = Vec::new();
    out.write(&mut buf).unwrap();
    assert_eq!(buf, fs::read(&output).unwrap());
}

#[test]
fn fit_output_matches_library() {
    let dir = TempDir::new().unwrap();
    let input = write_simulated(dir.path(), "in.csv", 2000, 1.0, ',');
    let output = dir.path().join("out.csv");
    assert!(fit(&input, &output, &["--spline-knots", "6"]).status.success());
    let out = FitOutput::read(fs::File::open(&output).unwrap()).unwrap();

    let table = camt::parse_table(&input).unwrap();
    let config = camt::CamtConfig { spline_knots: 6, ..Default::default() };
    let res = camt::run(&table.pvalues, &table.covariates, &config).unwrap();
    let pi: Vec<f64> = res.fit.model.fitted.pi_hat.iter().map(|p| p.get()).collect();
    assert_eq!(out.pi0_hat, pi);
    assert_eq!(out.rejected, res.rejection.rejected);
    assert_eq!(out.meta("t_hat").unwrap(), res.rejection.t_hat.to_string());
}

#[test]
fn identical_inputs_give_identical_bytes() {
    let dir = TempDir::new().unwrap();
    let input = write_simulated(dir.path(), "in.csv", 1500, 1.0, ',');
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    assert!(fit(&input, &a, &["--mixed"]).status.success());
    assert!(fit(&input, &b, &["--mixed"]).status.success());
    assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap());
}

#[test]
fn tab_and_comma_inputs_agree() {
    let dir = TempDir::new().unwrap();
    let comma = write_simulated(dir.path(), "c.csv", 1200, 1.0, ',');
    let tab = write_simulated(dir.path(), "t.tsv", 1200, 1.0, '\t');
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    assert!(fit(&comma, &a, &[]).status.success());
    assert!(fit(&tab, &b, &[]).status.success());
    assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap());
}

#[test]
fn no_tup_cap_flag_is_recorded() {
    let dir = TempDir::new().unwrap();
    let input = write_simulated(dir.path(), "in.csv", 1000, 1.0, ',');
    let output = dir.path().join("out.csv");
    assert!(fit(&input, &output, &["--no-tup-cap"]).status.success());
    let out = FitOutput::read(fs::File::open(&output).unwrap()).unwrap();
    assert_eq!(out.meta("t_up_cap"), Some("false"));
}

#[test]
fn clamped_pvalues_are_counted() {
    let dir = TempDir::new().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut text = String::from("pvalue,x\n1.0,0.5\n0,1.5\n");
    for _ in 0..998 {
        text.push_str(&format!("{},{}\n", rng.random::<f64>(), rng.random::<f64>()));
    }
    let input = dir.path().join("in.csv");
    fs::write(&input, text).unwrap();
    let output = dir.path().join("out.csv");
    let res = fit(&input, &output, &[]);
    assert!(res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("2 p-values clamped"));
    let out = FitOutput::read(fs::File::open(&output).unwrap()).unwrap();
    assert_eq!(out.meta("clamped_pvalues"), Some("2"));
    assert_eq!(out.pvalue[0], 1.0);
}

#[test]
fn small_tables_warn_or_fail() {
    let dir = TempDir::new().unwrap();
    let ok = write_simulated(dir.path(), "small.csv", 500, 1.0, ',');
    let res = fit(&ok, &dir.path().join("o.csv"), &[]);
    assert_eq!(res.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&res.stderr).contains("warning: only 500 hypotheses"));

    let tiny = write_simulated(dir.path(), "tiny.csv", 150, 1.0, ',');
    assert_eq!(fit(&tiny, &dir.path().join("o2.csv"), &[]).status.code(), Some(1));
}

#[test]
fn missing_cell_names_row_and_column() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("in.csv");
    fs::write(&input, "pvalue,age,dose\n0.1,30,1\n0.2,,2\n").unwrap();
    let res = fit(&input, &dir.path().join("o.csv"), &[]);
    assert_eq!(res.status.code(), Some(1));
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("row 2") && err.contains("'age'"), "{err}");
}

#[test]
fn validation_errors_exit_with_one() {
    let dir = TempDir::new().unwrap();
    let input = write_simulated(dir.path(), "in.csv", 300, 1.0, ',');
    let out = dir.path().join("o.csv");
    assert_eq!(fit(&input, &out, &["--alpha", "1.5"]).status.code(), Some(1));
    assert_eq!(fit(&input, &out, &["--spline-knots", "1"]).status.code(), Some(1));
    assert_eq!(fit(&input, &out, &["--spline-knots", "21"]).status.code(), Some(1));
    assert_eq!(camt(&["fit", "--input", path_str(&input)]).status.code(), Some(1));
    assert_eq!(camt(&["frobnicate"]).status.code(), Some(1));

    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "pvalue,x\n0.1,1\n0.1,abc\n").unwrap();
    let res = fit(&bad, &out, &[]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("line 3"));

    let sim = camt(&["simulate", "--setup", "S9", "--output", path_str(&out)]);
    assert_eq!(sim.status.code(), Some(1));
}

#[test]
fn runtime_errors_exit_with_two() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("nope.csv");
    assert_eq!(fit(&missing, &dir.path().join("o.csv"), &[]).status.code(), Some(2));

    let input = write_simulated(dir.path(), "in.csv", 300, 1.0, ',');
    let unwritable = dir.path().join("no_such_dir").join("o.csv");
    assert_eq!(fit(&input, &unwritable, &[]).status.code(), Some(2));
}

#[test]
fn help_and_version_exit_with_zero() {
    assert_eq!(camt(&["--help"]).status.code(), Some(0));
    assert_eq!(camt(&["--version"]).status.code(), Some(0));
    assert_eq!(camt(&["fit", "--help"]).status.code(), Some(0));
}

#[test]
fn simulate_smoke_shape() {
    let dir = TempDir::new().unwrap();
    let output = dir.path().join("sim.csv");
    let res = camt(&[
        "simulate", "--setup", "S0", "--m", "2000", "--eta0", "2.5", "--kd", "1", "--ks", "2.4",
        "--reps", "5", "--seed", "11", "--alpha-grid", "0.05,0.1,0.2", "--output", path_str(&output),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let text = fs::read_to_string(&output).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
    // default procedures: camt, bh, storey, oracle
    assert_eq!(rows.len(), 5 * 4 * 3);
    assert!(text.contains("# generator=ChaCha8Rng"));
    assert!(text.contains("# seed=11"));
}

#[test]
fn simulate_is_byte_deterministic() {
    let dir = TempDir::new().unwrap();
    let run = |name: &str, threads: &str| {
        let output = dir.path().join(name);
        let res = camt(&[
            "simulate", "--setup", "S3.1", "--m", "1000", "--reps", "4", "--seed", "5",
            "--alpha-grid", "0.05,0.1", "--procedures", "camt,camt_mixed,bh", "--no-timing",
            "--threads", threads, "--output", path_str(&output),
        ]);
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
        fs::read(output).unwrap()
    };
    let a = run("a.csv", "1");
    assert_eq!(a, run("b.csv", "1"));
    assert_eq!(a, run("c.csv", "3"));
}

#[test]
fn threads_env_is_validated() {
    let dir = TempDir::new().unwrap();
    let output = dir.path().join("s.csv");
    let res = Command::new(env!("CARGO_BIN_EXE_camt"))
        .args(["simulate", "--setup", "S0", "--m", "500", "--reps", "1", "--output", path_str(&output)])
        .env("CAMT_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(res.status.code(), Some(1));
}

#[test]
fn diagnose_reports_gif() {
    let dir = TempDir::new().unwrap();
    let input = write_simulated(dir.path(), "in.csv", 2000, 1.0, ',');
    let res = camt(&["diagnose", "--input", path_str(&input), "--bins", "10"]);
    assert!(res.status.success());
    let text = String::from_utf8(res.stdout).unwrap();
    assert!(text.contains("# gif="));
    let counts: usize = text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("bin"))
        .map(|l| l.rsplit(',').next().unwrap().parse::<usize>().unwrap())
        .sum();
    assert_eq!(counts, 2000);
}

#[test]
fn randomized_covariate_tracks_storey() {
    // a covariate unrelated to the signal should leave CAMT close to Storey
    let cfg = SimulationConfig {
        setup: Setup::S0,
        m: 10_000,
        eta0: 2.0,
        k_d: 0.0,
        k_s: 2.8,
        n_replicates: 1,
        seed: 21,
        ..SimulationConfig::default()
    };
    let d = generate_replicate(&cfg, 0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let noise: Vec<f64> = (0..cfg.m).map(|_| rng.random()).collect();
    let pv: Vec<camt::PValue> = d.pvals.iter().map(|&p| camt::PValue::new(p).unwrap()).collect();
    let res = camt::run(&pv, &[noise], &camt::CamtConfig::default()).unwrap();
    let st = storey(&d.pvals, 0.05, 0.5).unwrap();
    let b = bh(&d.pvals, 0.05).unwrap();
    let jaccard = |a: &[bool], b: &[bool]| {
        let inter = a.iter().zip(b).filter(|(x, y)| **x && **y).count() as f64;
        let union = a.iter().zip(b).filter(|(x, y)| **x || **y).count() as f64;
        inter / union.max(1.0)
    };
    let j_st = jaccard(&res.rejection.rejected, &st);
    let j_bh = jaccard(&res.rejection.rejected, &b);
    assert!(j_st >= 0.8, "Jaccard with Storey {j_st}, with BH {j_bh}");
}
