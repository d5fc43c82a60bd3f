use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use pathsgd::datafile;

fn pathsgd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pathsgd"))
        .args(args)
        .env_remove("PATHSGD_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("run.toml");
    fs::write(&path, body).unwrap();
    path.display().to_string()
}

#[test]
fn linreg_run_converges() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "task = \"linreg\"\nhidden = []\noptimizer = \"path_sgd\"\nlr = 0.2\nsteps = 2000\neval_interval = 50\n\
         target_metric = 1e-9\nn_test = 64\n",
    );
    let out_dir = dir.path().join("out");
    let o = pathsgd(&["train", "--config", &cfg, "--out-dir", out_dir.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("status converged"));
    let text = fs::read_to_string(out_dir.join("metrics.csv")).unwrap();
    let last = text.lines().last().unwrap();
    let train_loss: f64 = last.split(',').nth(1).unwrap().parse().unwrap();
    assert!(train_loss < 1e-6, "{last}");
    assert!(out_dir.join("checkpoint_final.txt").exists());
}

#[test]
fn exploding_sgd_reports_divergence() {
    let dir = tempfile::tempdir().unwrap();
    let o = pathsgd(&[
        "train",
        "--set",
        "task=linreg",
        "--set",
        "hidden=[]",
        "--set",
        "init_range=1.0",
        "--optimizer",
        "sgd",
        "--lr",
        "10",
        "--steps",
        "500",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", stdout(&o));
    assert!(stdout(&o).contains("status diverged"));
}

#[test]
fn config_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "learning_rate = 0.1\n");
    assert_eq!(pathsgd(&["train", "--config", &cfg]).status.code(), Some(1));
    assert_eq!(pathsgd(&["train", "--set", "lr=-1", "--out-dir", dir.path().to_str().unwrap()]).status.code(), Some(1));
    assert_eq!(pathsgd(&["train", "--resume", "/nonexistent/checkpoint.txt"]).status.code(), Some(1));
    assert_eq!(pathsgd(&["no-such-command"]).status.code(), Some(1));
}

#[test]
fn flags_override_environment_override_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "lr = 0.1\nsteps = 7\nout_dir = \"from_file\"\n");
    let run = |extra: &[&str], env: Option<&str>| {
        let mut c = Command::new(env!("CARGO_BIN_EXE_pathsgd"));
        c.args(["train", "--config", &cfg, "--print-config"]).args(extra).env_remove("PATHSGD_OUT_DIR");
        if let Some(v) = env {
            c.env("PATHSGD_OUT_DIR", v);
        }
        let o = c.output().unwrap();
        assert_eq!(o.status.code(), Some(0));
        pathsgd::config::RunConfig::parse(&stdout(&o)).unwrap()
    };
    let base = run(&[], None);
    assert_eq!((base.lr, base.steps, base.out_dir.to_str().unwrap()), (0.1, 7, "from_file"));
    assert_eq!(run(&[], Some("from_env")).out_dir.to_str().unwrap(), "from_env");
    let flagged = run(&["--lr", "0.25", "--out-dir", "from_flag", "--set", "steps=9"], Some("from_env"));
    assert_eq!((flagged.lr, flagged.steps, flagged.out_dir.to_str().unwrap()), (0.25, 9, "from_flag"));
}

#[test]
fn verify_quick_passes_and_detects_a_doubled_kappa() {
    let ok = pathsgd(&["verify", "--level", "quick", "--seed", "3"]);
    assert_eq!(ok.status.code(), Some(0), "{}", stdout(&ok));
    assert!(!stdout(&ok).contains("FAIL"));
    let bad = pathsgd(&["verify", "--level", "quick", "--seed", "3", "--inject-kappa-fault"]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(stdout(&bad).contains("FAIL"));
}

#[test]
fn gen_data_addition_records_are_consistent_and_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.txt");
    let b = dir.path().join("b.txt");
    for out in [&a, &b] {
        let o = pathsgd(&["gen-data", "--task", "addition", "--length", "100", "--n", "1000", "--seed", "5", "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0));
    }
    let data = datafile::check_addition_file(&a).unwrap();
    assert_eq!(data.len(), 1000);
    assert!(data.iter().all(|e| e.values.len() == 100));
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());

    let o = pathsgd(&["gen-data", "--task", "addition", "--length", "1", "--n", "10", "--out", a.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn kappa_ratio_matches_enumeration_on_small_nets() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("ratio.csv");
    let o = pathsgd(&[
        "kappa-ratio",
        "--hidden",
        "10",
        "--lengths",
        "4",
        "--io",
        "2",
        "--seeds",
        "2",
        "--check-bruteforce",
        "--csv",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let text = fs::read_to_string(&csv).unwrap();
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(&row[..3], ["10", "4", "2"]);
    let gap: f64 = row[6].parse().unwrap();
    assert!(gap < 1e-10, "{gap}");
}

#[test]
fn kappa_ratio_refuses_oversized_cells() {
    let o = pathsgd(&["kappa-ratio", "--hidden", "5000", "--lengths", "2", "--io", "10000", "--seeds", "1"]);
    assert_eq!(o.status.code(), Some(1));
}
