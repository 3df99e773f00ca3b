use std::path::Path;
use std::process::{Command, Output};

use snls::io::read_csv;

fn snls(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_snls")).args(args).env_remove("SNLS_OUT").output().unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

const SMALL: &str = r#"
p = 6.0

[grid]
n_points = 1024
half_length = 40.0

[[solitons]]
w = 1.0
v = 1.0
alpha0 = 0.0
theta0 = 0.0

[noise]
case = { kind = "exponential" }
seed = 1
seeds = [1, 2]
channels = [
  { profile = { kind = "sech", c = 1.0, center = 0.0 }, weight = { kind = "exp", amp = 0.1, rate = 0.25 } },
]

[solver]
dt = 0.01

[construction]
n_list = [8.0]
T_floor = 2.0

[evolve]
t0 = 1.0
t1 = 2.0
"#;

#[test]
fn ground_state_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = snls(&["ground-state", "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&dir.path().join("ground_state.json"));
    assert!(v["residual"].as_f64().unwrap() <= 1e-9);
    assert_eq!(v["p"].as_f64().unwrap(), 6.0);
    assert!((v["peak"].as_f64().unwrap() - 3.5f64.powf(0.2)).abs() <= 1e-8);
    assert!(dir.path().join("ground_state.snap").exists());
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, SMALL.replace("p = 6.0", "p = 3.0")).unwrap();
    let out = snls(&["ground-state", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("`p`"));
    let out = snls(&["ground-state", "--preset", "nonsense"]);
    assert_eq!(out.status.code(), Some(2));
    let out = snls(&["noise", "--preset", "deterministic-2sol", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn evolve_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.toml");
    std::fs::write(&cfg, SMALL).unwrap();
    let run = |sub: &str, seed: &str| {
        let out = dir.path().join(sub);
        let o = snls(&["evolve", "--config", cfg.to_str().unwrap(), "--seed", seed, "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read(out.join("evolve.csv")).unwrap()
    };
    let a = run("a", "7");
    let b = run("b", "7");
    let c = run("c", "8");
    assert_eq!(a, b);
    assert_ne!(a, c);
    let (header, rows) = read_csv(std::str::from_utf8(&a).unwrap()).unwrap();
    assert_eq!(header.len(), 14);
    assert_eq!(rows.len(), 11);
    assert_eq!(rows[0][0], 1.0);
    // B* is nonzero with noise and mass is conserved
    assert!(rows.iter().all(|r| r[6] > 0.0));
    assert!(rows.iter().all(|r| (r[13] - rows[0][13]).abs() <= 1e-9));
}

#[test]
fn noise_report_over_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.toml");
    std::fs::write(&cfg, SMALL).unwrap();
    let o = snls(&["noise", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success());
    let v = json(&dir.path().join("noise.json"));
    let seeds = v["seeds"].as_array().unwrap();
    assert_eq!(seeds.len(), 2);
    assert!(v["tail_beyond_horizon"].as_f64().unwrap() <= 1e-12);
    let b = seeds[0]["b_star"].as_array().unwrap();
    assert!(b.windows(2).all(|w| w[1].as_f64().unwrap() <= w[0].as_f64().unwrap()));
}

#[test]
fn construct_deterministic_preset_reaches_the_floor() {
    let dir = tempfile::tempdir().unwrap();
    let o = snls(&["construct", "--preset", "deterministic-2sol", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&dir.path().join("construct_report.json"));
    assert_eq!(v["tube_slack"].as_f64().unwrap(), 4.0);
    assert!(v["seed"].is_null());
    let runs = v["runs"].as_array().unwrap();
    assert_eq!(runs.len(), 3);
    for r in runs {
        assert_eq!(r["exit_time"].as_f64().unwrap(), 2.0);
        assert!(r["fitted_C"].as_f64().unwrap() > 0.0);
        assert_eq!(r["a_minus"].as_array().unwrap().len(), 2);
        assert_eq!(r["b"].as_array().unwrap().len(), 4);
    }
    for n in [12, 16, 20] {
        let text = std::fs::read_to_string(dir.path().join(format!("construct_n{n}.csv"))).unwrap();
        let (header, rows) = read_csv(&text).unwrap();
        assert_eq!(header.len(), 18);
        assert_eq!(rows.last().unwrap()[0], 2.0);
    }
}
