use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn psido(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_psido"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("PSIDO_CONFIG")
        .env_remove("PSIDO_GRID_K")
        .env_remove("PSIDO_SEED")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("exp.toml");
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn report(dir: &Path, stem: &str) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join(format!("{stem}.json"))).unwrap()).unwrap()
}

fn csv_column(path: &Path, name: &str) -> Vec<Option<f64>> {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let j = header.iter().position(|h| *h == name).unwrap();
    lines.map(|l| l.split(',').nth(j).unwrap().parse().ok()).collect()
}

#[test]
fn taylor_preset_passes_and_writes_files() {
    let dir = tempfile::tempdir().unwrap();
    let o = psido(&["taylor"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(dir.path(), "taylor");
    assert_eq!(r["pass"], Value::Bool(true));
    assert!(dir.path().join("taylor_rho_derivative.csv").exists());
}

#[test]
fn resolvent_ray_at_pi_matches_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"
experiment = "resolvent"
[symbols]
a = "bessel1"
projection = "hardy"
theta_min = 1.0
theta_max = 1.0
[grid]
k = 16
[strip]
tau_lo_exp = 1.0
tau_hi_exp = 3.0
per_decade = 4
n_theta = 1
"#,
    );
    let o = psido(&["resolvent", "--config", &cfg], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let csv = dir.path().join("resolvent_resolvent.csv");
    let taus = csv_column(&csv, "tau");
    let norms = csv_column(&csv, "inverse_norm");
    for (t, n) in taus.iter().zip(&norms) {
        let (t, n) = (t.unwrap(), n.unwrap());
        assert!((n - 1.0 / (t + 1.0)).abs() < 1e-10, "tau {t}: {n}");
    }
    let r = report(dir.path(), "resolvent");
    let slope = r["slopes"][0]["value"].as_f64().unwrap();
    assert!((slope + 1.0).abs() <= 0.02, "{slope}");
}

#[test]
fn compose_errors_decrease() {
    let dir = tempfile::tempdir().unwrap();
    let o = psido(&["compose", "--grid-K", "32"], dir.path());
    assert!(o.status.success());
    let e = csv_column(&dir.path().join("compose_compose.csv"), "error_shell");
    assert_eq!(e.len(), 4);
    assert!(e.windows(2).all(|w| w[1].unwrap() < w[0].unwrap()), "{e:?}");
}

#[test]
fn empty_tau_grid_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "experiment = \"toeplitz\"\n[strip]\ntaus = []\n");
    let o = psido(&["toeplitz", "--config", &cfg], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("empty tau grid"));
}

#[test]
fn unknown_symbol_is_a_catalog_miss() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[symbols]\na = \"nonesuch\"\n");
    let o = psido(&["toeplitz", "--config", &cfg], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nonesuch"));
}

#[test]
fn failing_invariant_gives_exit_one() {
    // the negative control strip, but claiming ellipticity should hold
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[symbols]\na = \"toeplitz-model\"\nprojection = \"hardy\"\ntheta_min = 1.0\ntheta_max = 1.5\nexpect = \"pass\"\n[grid]\nk = 8\n",
    );
    let o = psido(&["ellipticity", "--config", &cfg], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL ellipticity.passes"));
    let ok = psido(&["ellipticity", "--grid-K", "8"], dir.path());
    assert_eq!(ok.status.code(), Some(0));
}

#[test]
fn identical_runs_give_identical_reports() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        assert!(psido(&["compose", "--seed", "11"], d.path()).status.success());
    }
    let strip = |d: &Path| {
        let mut v = report(d, "compose");
        v["wall_clock_seconds"] = Value::Null;
        v["config"]["output"]["dir"] = Value::Null;
        v
    };
    assert_eq!(strip(a.path()), strip(b.path()));
    assert_eq!(report(a.path(), "compose")["config"]["seed"], 11);
}

#[test]
fn environment_overrides_apply() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_psido"))
        .args(["toeplitz", "--print-config"])
        .env("PSIDO_GRID_K", "12")
        .env("PSIDO_SEED", "5")
        .env("PSIDO_OUT", dir.path())
        .output()
        .unwrap();
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("k = 12"), "{text}");
    assert!(text.contains("seed = 5"), "{text}");
}

#[test]
fn sweep_of_the_shift_reports_singular_truncations() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"
experiment = "compose"
[symbols]
a = "shift"
b = "bessel-inv"
theta_min = 0.0
theta_max = 0.0
[grid]
k = 8
[strip]
taus = [1.0, 10.0]
thetas = [0.0]
"#,
    );
    let _ = psido(&["sweep", "--config", &cfg], dir.path());
    let r = report(dir.path(), "sweep");
    assert_eq!(r["results"]["target"], "compose");
    for s in r["results"]["inversion"].as_array().unwrap() {
        assert!(s["k"].as_str().unwrap().starts_with("SingularToTolerance"), "{s}");
        assert!(s["2k"].as_str().unwrap().starts_with("SingularToTolerance"), "{s}");
    }
    // an isometry up to one dropped column: norm 1 at both cutoffs
    let drift = csv_column(&dir.path().join("sweep_sweep.csv"), "norm_drift_percent");
    assert!(drift.iter().all(|d| d.unwrap() < 1e-10), "{drift:?}");
}

#[test]
fn sweep_preset_has_small_sigma3_drift() {
    let dir = tempfile::tempdir().unwrap();
    let o = psido(&["sweep"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let r = report(dir.path(), "sweep");
    let inv = r["invariants"].as_array().unwrap().iter().find(|i| i["name"] == "sweep.sigma3_drift_percent").unwrap();
    assert!(inv["measured"].as_f64().unwrap() < 10.0);
}
