use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn invlearn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_invlearn")).args(args).output().unwrap()
}

fn invlearn_workers(args: &[&str], workers: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_invlearn"))
        .args(args)
        .env("INVLEARN_WORKERS", workers)
        .output()
        .unwrap()
}

fn write_config(dir: &Path, extra: &str) -> String {
    let path = dir.join("run.cfg");
    let text = format!(
        "b = 2\nr = 0.5\ns = 0.5\nR = 1\nsigma = 0.1\nregularizer = tikhonov\nn_grid = 50, 100, 200\nreplicates = 4\nseed = 3\nslope_tolerance = 1\n{extra}"
    );
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn rates_writes_csv_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = write_config(dir.path(), &format!("output = {}\n", out.display()));
    let res = invlearn(&["rates", "--config", &cfg]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let csv = fs::read_to_string(out.join("rates.csv")).unwrap();
    assert!(csv.starts_with("n,lambda,p,moment,stderr,floor"));
    assert_eq!(csv.lines().count(), 4);
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    for key in ["slope", "slope_ci", "theory", "pass"] {
        assert!(json.get(key).is_some(), "missing {key}");
    }
}

#[test]
fn rates_output_is_reproducible_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let mut outputs = Vec::new();
    for (k, workers) in ["1", "3", "1"].into_iter().enumerate() {
        let out = dir.path().join(format!("run{k}"));
        let res = invlearn_workers(&["rates", "--config", &cfg, "--out", out.to_str().unwrap()], workers);
        assert_eq!(res.status.code(), Some(0));
        outputs.push(fs::read(out.join("rates.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);

    let other = dir.path().join("other");
    invlearn(&["rates", "--config", &cfg, "--seed", "4", "--out", other.to_str().unwrap()]);
    assert_ne!(outputs[0], fs::read(other.join("rates.csv")).unwrap());
}

#[test]
fn qualification_gate_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.cfg");
    fs::write(&path, "r = 0.7\ns = 0.5\nregularizer = tikhonov\n").unwrap();
    let res = invlearn(&["rates", "--config", path.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("qualification"));
}

#[test]
fn unknown_config_key_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.cfg");
    fs::write(&path, "r = 0.5\nfoo = 1\n").unwrap();
    let res = invlearn(&["rates", "--config", path.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("line 2"));
}

#[test]
fn usage_errors() {
    assert_eq!(invlearn(&["nonsense"]).status.code(), Some(64));
    assert_eq!(invlearn(&["packing"]).status.code(), Some(64));
    assert_eq!(invlearn(&["--help"]).status.code(), Some(0));
}

#[test]
fn effdim_table() {
    let res = invlearn(&["effdim", "--lambdas", "0.1,0.01"]);
    let text = String::from_utf8(res.stdout).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("lambda,N,upper_bound,lower_floor"));
    assert_eq!(lines.count(), 2);
    // N(lambda) exceeds the class bound on this instance
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn packing_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("packing.csv");
    let res = invlearn(&["packing", "--eps", "0.002", "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(0));
    let text = fs::read_to_string(out).unwrap();
    assert!(text.starts_with("eps,m,N,min_separation_sq,max_kl,omega_at_recipe_n"));

    let res = invlearn(&["packing", "--eps", "0.01"]);
    assert_eq!(res.status.code(), Some(1));
}

#[test]
fn conc_check_rows() {
    let res = invlearn(&["conc-check", "--reps", "20", "--n", "200"]);
    let text = String::from_utf8(res.stdout).unwrap();
    assert_eq!(text.lines().count(), 5);
    assert!(text.contains("refused"));
    assert_eq!(res.status.code(), Some(2));

    let res = invlearn(&["conc-check", "--bound", "hs-deviation", "--reps", "20"]);
    assert_eq!(res.status.code(), Some(0));
    let res = invlearn(&["conc-check", "--bound", "power", "--r", "1.5", "--reps", "200"]);
    assert_eq!(res.status.code(), Some(0));
}

#[test]
fn qual_check_exit_codes() {
    assert_eq!(invlearn(&["qual-check", "--method", "landweber", "--q", "2"]).status.code(), Some(0));
    assert_eq!(invlearn(&["qual-check", "--method", "tikhonov", "--q", "1"]).status.code(), Some(0));
    assert_eq!(invlearn(&["qual-check", "--method", "ridge"]).status.code(), Some(1));
}

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for path in [&a, &b] {
        let res = invlearn(&["simulate", "--n", "25", "--seed", "9", "--out", path.to_str().unwrap()]);
        assert_eq!(res.status.code(), Some(0));
    }
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(text, fs::read_to_string(&b).unwrap());
    assert!(text.contains("# seed=9"));
    let data = invlearn::sampling::Dataset::read_csv(fs::File::open(&a).unwrap()).unwrap();
    assert_eq!(data.len(), 25);
}
