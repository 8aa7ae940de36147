use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mcmpl::io::{write_dataset, DatasetKind};
use mcmpl::sim::{parse_config, trial_dataset};
use tempfile::TempDir;

fn mcmpl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mcmpl")).args(args).env_remove("MCMPL_THREADS").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn path(dir: &TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Writes the first simulated dataset of `config` and returns its path.
fn dataset(dir: &TempDir, kind: DatasetKind, config: &str) -> PathBuf {
    let spec = parse_config(config).unwrap();
    let data = trial_dataset(&spec, 0).unwrap();
    let p = path(dir, &format!("{kind}.csv"));
    write_dataset(kind, &data, fs::File::create(&p).unwrap()).unwrap();
    p
}

const AR1: &str = "model = ar1\nrho = 0.5\nsigma2 = 1\nN = 60\nT = 8\nS = 6\nR = 40\n";
const WEIBULL: &str = "model = weibull\nxi = 1.5\nbeta = -1, 1\nPc = 0.2\nN = 60\nT = 6\nS = 3\nR = 30\n";
const MCAR: &str = "model = binary\nmechanism = mcar\nbeta = 1\ngamma1 = 2.5\nN = 60\nT = 8\nS = 3\nR = 30\n";

fn rows(text: &str) -> Vec<Vec<String>> {
    text.lines().filter(|l| !l.starts_with('#')).skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn fit_ar1_writes_table_and_footer() {
    let dir = TempDir::new().unwrap();
    let data = dataset(&dir, DatasetKind::Ar1, AR1);
    let out = path(&dir, "fit.csv");
    let o = mcmpl(&["fit", "--model", "ar1", "--data", s(&data), "--replicates", "50", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("method,parameter,estimate,std_error,z,p_value,ci_lo,ci_hi\n"));
    assert!(text.ends_with("# seed=20190601,replicates=50,dropped_clusters=0\n"));
    let r = rows(&text);
    let names: Vec<(&str, &str)> = r.iter().map(|r| (r[0].as_str(), r[1].as_str())).collect();
    assert_eq!(names, [("profile", "rho"), ("profile", "sigma2"), ("mcmpl", "rho"), ("mcmpl", "sigma2")]);
    for row in &r {
        let v: Vec<f64> = row[2..].iter().map(|c| c.parse().unwrap()).collect();
        assert!(v[1] > 0.0 && v[4] < v[0] && v[0] < v[5]);
        assert!((v[2] - v[0] / v[1]).abs() < 1e-6 * v[2].abs().max(1.0));
    }
}

#[test]
fn fit_weibull_reports_relative_risks() {
    let dir = TempDir::new().unwrap();
    let data = dataset(&dir, DatasetKind::Weibull, WEIBULL);
    let o = mcmpl(&["fit", "--model", "weibull", "--data", s(&data), "--method", "mcmpl", "--replicates", "30"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = rows(&stdout(&o));
    let get = |name: &str| -> Vec<f64> {
        r.iter().find(|row| row[1] == name).unwrap()[2..].iter().map(|c| c.parse().unwrap()).collect()
    };
    let (xi, b2, rr2) = (get("xi"), get("beta2"), get("rr2"));
    assert!((rr2[0] - (-xi[0] * b2[0]).exp()).abs() < 1e-8);
    assert!(rr2[1] > 0.0 && rr2[1].is_finite());
}

#[test]
fn single_replicate_is_legal() {
    let dir = TempDir::new().unwrap();
    let data = dataset(&dir, DatasetKind::Binary, MCAR);
    let o = mcmpl(&["fit", "--model", "binary", "--data", s(&data), "--method", "mcmpl", "--replicates", "1"]);
    assert!(matches!(o.status.code(), Some(0) | Some(2)), "{}", stderr(&o));
    assert!(stdout(&o).contains("mcmpl,beta1,"));
    assert!(stdout(&o).contains("replicates=1,"));
}

#[test]
fn exact_and_monte_carlo_agree_for_mcar() {
    let dir = TempDir::new().unwrap();
    let data = dataset(&dir, DatasetKind::Binary, MCAR);
    let o =
        mcmpl(&["fit", "--model", "binary", "--data", s(&data), "--method", "mpl-exact,mcmpl", "--replicates", "500"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = rows(&stdout(&o));
    let est: Vec<f64> = r.iter().map(|row| row[2].parse().unwrap()).collect();
    assert!((est[0] - est[1]).abs() < 0.02, "{est:?}");
}

#[test]
fn separation_flags_exit_two() {
    // Missing responses are always zeros, so the selection slope runs off to -inf.
    let dir = TempDir::new().unwrap();
    let mut text = String::from("cluster,t,y,missing,x1\n");
    let pattern = [(1, 0), (1, 0), (0, 0), (0, 1), (0, 1), (1, 0)];
    for i in 0..30 {
        for (t, (y, m)) in pattern.iter().enumerate() {
            let y = if *m == 1 { String::new() } else { ((y + i + t) % 2).to_string() };
            text.push_str(&format!("{i},{t},{y},{m},{}\n", (t as f64 + 0.1 * (i % 7) as f64) / 5.0));
        }
    }
    let data = path(&dir, "toe.csv");
    fs::write(&data, text).unwrap();
    let o = mcmpl(&["fit", "--model", "binary", "--mechanism", "mnar", "--data", s(&data), "--method", "profile"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("profile,gamma2,"));
    assert!(out.contains("# warning: profile: gamma2 at the search bound (separation"), "{out}");
}

#[test]
fn malformed_data_is_an_input_error() {
    let dir = TempDir::new().unwrap();
    let data = path(&dir, "bad.csv");
    fs::write(&data, "cluster,t,y\n1,0,0.5\n1,1,abc\n").unwrap();
    let o = mcmpl(&["fit", "--model", "ar1", "--data", s(&data)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));

    fs::write(&data, "cluster,t,time\n1,1,2.0\n").unwrap();
    let o = mcmpl(&["fit", "--model", "weibull", "--data", s(&data)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("event"));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(mcmpl(&[]).status.code(), Some(1));
    assert_eq!(mcmpl(&["fit", "--model", "nonsense", "--data", "x.csv"]).status.code(), Some(1));
    assert_eq!(mcmpl(&["--help"]).status.code(), Some(0));
}

#[test]
fn simulate_is_identical_across_thread_counts() {
    let dir = TempDir::new().unwrap();
    let cfg = path(&dir, "ar1.cfg");
    fs::write(&cfg, AR1).unwrap();
    let (one, eight) = (path(&dir, "one.csv"), path(&dir, "eight.csv"));
    let o = mcmpl(&["simulate", "--config", s(&cfg), "--threads", "1", "--out", s(&one)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let o = Command::new(env!("CARGO_BIN_EXE_mcmpl"))
        .args(["simulate", "--config", s(&cfg), "--out", s(&eight)])
        .env("MCMPL_THREADS", "8")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let (a, b) = (fs::read(&one).unwrap(), fs::read(&eight).unwrap());
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("N,T,method,parameter,B,MB,SD,RMSE,MAE,SE_over_SD,coverage,failed_trials\n"));
    assert_eq!(text.lines().count(), 5);
}

#[test]
fn simulate_rejects_bad_configs() {
    let dir = TempDir::new().unwrap();
    let cfg = path(&dir, "bad.cfg");
    fs::write(&cfg, format!("{AR1}colour = blue\n")).unwrap();
    let o = mcmpl(&["simulate", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("colour"));
    fs::write(&cfg, AR1.replace("S = 6", "S = 0")).unwrap();
    assert_eq!(mcmpl(&["simulate", "--config", s(&cfg)]).status.code(), Some(1));
}

fn trace_columns(text: &str) -> (Vec<f64>, Vec<Option<f64>>, Vec<Option<f64>>) {
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("param_value,rel_profile,rel_mcmpl"));
    let cell = |c: &str| if c.is_empty() { None } else { Some(c.parse::<f64>().unwrap()) };
    let mut cols = (Vec::new(), Vec::new(), Vec::new());
    for l in lines {
        let c: Vec<&str> = l.split(',').collect();
        cols.0.push(c[0].parse().unwrap());
        cols.1.push(cell(c[1]));
        cols.2.push(cell(c[2]));
    }
    cols
}

fn top(col: &[Option<f64>]) -> f64 {
    col.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max)
}

#[test]
fn trace_ar1_is_relative() {
    let dir = TempDir::new().unwrap();
    let data = dataset(&dir, DatasetKind::Ar1, AR1);
    let o = mcmpl(&[
        "trace",
        "--model",
        "ar1",
        "--data",
        s(&data),
        "--param",
        "rho",
        "--grid",
        "-1.4:1.4:0.05",
        "--replicates",
        "40",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let (x, p, m) = trace_columns(&stdout(&o));
    assert_eq!(x.len(), 57);
    assert_eq!(top(&p), 0.0);
    assert_eq!(top(&m), 0.0);
    let argmax = x[p.iter().position(|v| *v == Some(0.0)).unwrap()];
    assert!((0.2..0.6).contains(&argmax), "{argmax}");
}

#[test]
fn trace_profile_interval_matches_likelihood_ratio() {
    // The band rel_profile >= -1.92 should bracket the fitted value and
    // close on both sides within the grid.
    let dir = TempDir::new().unwrap();
    let data = dataset(&dir, DatasetKind::Weibull, WEIBULL);
    let cfg_out = mcmpl(&["fit", "--model", "weibull", "--data", s(&data), "--method", "profile"]);
    let xi: f64 = rows(&stdout(&cfg_out))[0][2].parse().unwrap();
    let o = mcmpl(&[
        "trace",
        "--model",
        "weibull",
        "--data",
        s(&data),
        "--param",
        "xi",
        "--grid",
        "0.8:3.5:0.02",
        "--replicates",
        "30",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let (x, p, m) = trace_columns(&stdout(&o));
    assert_eq!(top(&p), 0.0);
    assert_eq!(top(&m), 0.0);
    let inside: Vec<f64> = x.iter().zip(&p).filter(|(_, v)| v.is_some_and(|v| v >= -1.92)).map(|(x, _)| *x).collect();
    let (lo, hi) = (inside[0], *inside.last().unwrap());
    assert!(lo < xi && xi < hi && lo > 0.8 && hi < 3.5, "{lo} {xi} {hi}");
    let argmax = x[p.iter().position(|v| *v == Some(0.0)).unwrap()];
    assert!((argmax - xi).abs() <= 0.02 + 1e-9);
}

#[test]
fn trace_from_config_and_errors() {
    let dir = TempDir::new().unwrap();
    let cfg = path(&dir, "ar1.cfg");
    fs::write(&cfg, AR1).unwrap();
    let o = mcmpl(&["trace", "--config", s(&cfg), "--param", "sigma2", "--grid", "0.5:2:0.25"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let (_, p, _) = trace_columns(&stdout(&o));
    assert_eq!(top(&p), 0.0);

    let o = mcmpl(&["trace", "--config", s(&cfg), "--param", "rho", "--grid", "1:1:0.1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("empty grid"));
    let o = mcmpl(&["trace", "--config", s(&cfg), "--param", "beta9", "--grid", "0:1:0.1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("unknown parameter"));
}
