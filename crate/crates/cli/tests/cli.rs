use std::fs;
use std::path::Path;
use std::process::Command;

use serde_json::Value;

fn hyperlab(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_hyperlab"))
        .args(args)
        .env("HYPERLAB_THREADS", "1")
        .output()
        .unwrap();
    let text = String::from_utf8_lossy(&out.stdout).into_owned()
        + &String::from_utf8_lossy(&out.stderr);
    (out.status.code().unwrap(), text)
}

fn run_config(dir: &Path, command: &str, config: &str) -> (i32, String) {
    let path = dir.join("config.toml");
    fs::write(&path, config).unwrap();
    let out = dir.join("out");
    hyperlab(&[command, "--config", path.to_str().unwrap(), "--out", out.to_str().unwrap()])
}

fn report(dir: &Path) -> Value {
    let text = fs::read_to_string(dir.join("out/report.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

const SPHERE: &str = r#"
space = { kappa = -1.0, n = 3 }
surface = { family = "geodesic_sphere", radius = 1.0 }
gamma = "auto"
grid = { min = 0.25, max = 2.0, count = 12 }
suites = ["monotonicity", "corollary"]
output = { plot = false }

[[centers]]
label = "center"
coords = [1.0, 0.0, 0.0, 0.0, 0.0]
"#;

#[test]
fn version_prints_the_package_version() {
    let (code, text) = hyperlab(&["version"]);
    assert_eq!(code, 0);
    assert!(text.contains(env!("CARGO_PKG_VERSION")));
}

#[test]
fn centered_sphere_passes_with_automatic_gamma() {
    let dir = tempfile::tempdir().unwrap();
    let (code, text) = run_config(dir.path(), "run", SPHERE);
    assert_eq!(code, 0, "{text}");
    let r = report(dir.path());
    let gamma = r["gamma"].as_f64().unwrap();
    assert!((gamma - 2.0 / 1.0f64.tanh()).abs() < 1e-6, "{gamma}");
    assert_eq!(r["gamma_auto"], Value::Bool(true));
    assert_eq!(r["exit_code"], 0);
    assert_eq!(r["provenance"]["config_sha256"].as_str().unwrap().len(), 64);
    let csv = fs::read_to_string(dir.path().join("out/phi_center.csv")).unwrap();
    assert_eq!(csv.lines().count(), 13);
    assert!(csv.starts_with("r,integral_sinh_H,integral_H,g,phi,phi_err,bound_B,margin\n"));
    assert!(!dir.path().join("out/phi_center.svg").exists());
}

#[test]
fn small_gamma_fails_monotonicity_with_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let config = SPHERE.replace("gamma = \"auto\"", "gamma = 1.0");
    let (code, text) = run_config(dir.path(), "run", &config);
    assert_eq!(code, 1, "{text}");
    assert_eq!(report(dir.path())["suites"]["monotonicity"]["passed"], Value::Bool(false));
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let positive = SPHERE.replace("kappa = -1.0", "kappa = 1.0");
    let (code, text) = run_config(dir.path(), "run", &positive);
    assert_eq!(code, 2);
    assert!(text.contains("kappa < 0"), "{text}");

    let unknown = SPHERE.replace("gamma = \"auto\"", "gamma = \"auto\"\nbogus = 3");
    assert_eq!(run_config(dir.path(), "run", &unknown).0, 2);

    let both = SPHERE.replace("radius = 1.0 }", "radius = 1.0, distance = 0.2 }");
    assert_eq!(run_config(dir.path(), "run", &both).0, 2);

    let (code, _) = hyperlab(&["run", "--config", "/nonexistent/config.toml"]);
    assert_eq!(code, 2);
    assert_eq!(hyperlab(&["run"]).0, 2);
}

const EQUIDISTANT: &str = r#"
space = { kappa = -1.0, n = 4 }
surface = { family = "equidistant", distance = 0.3 }
gamma = "auto"
grid = { min = 0.5, max = 1.25, count = 4 }
suites = ["divergence-criterion"]
output = { plot = false }

[[centers]]
label = "origin"
coords = [1.0, 0.0, 0.0, 0.0, 0.0, 0.0]

[sweep]
parameter = "shape"
values = [0.1, 0.2, 0.3]
"#;

#[test]
fn shape_sweep_writes_one_report_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let (code, text) = run_config(dir.path(), "sweep", EQUIDISTANT);
    assert_eq!(code, 0, "{text}");
    let out = dir.path().join("out");
    let index = fs::read_to_string(out.join("index.csv")).unwrap();
    assert_eq!(index.lines().count(), 4);
    for (i, t) in [0.1f64, 0.2, 0.3].iter().enumerate() {
        let text = fs::read_to_string(out.join(format!("cell_{i:03}/report.json"))).unwrap();
        let r: Value = serde_json::from_str(&text).unwrap();
        assert!((r["gamma"].as_f64().unwrap() - 3.0 * t.tanh()).abs() < 1e-6);
        let criterion = &r["centers"][0]["divergence_criterion"];
        assert_eq!(criterion["applies"], Value::Bool(true));
        assert!((criterion["rate"].as_f64().unwrap() - (1.0 - 3.0 * t.tanh()) / 2.0).abs() < 1e-6);
    }
}

#[test]
fn empty_sweep_is_a_configuration_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = EQUIDISTANT.replace("values = [0.1, 0.2, 0.3]", "values = []");
    assert_eq!(run_config(dir.path(), "sweep", &config).0, 2);
}

#[test]
fn center_sweep_runs_each_center() {
    let dir = tempfile::tempdir().unwrap();
    let config = SPHERE.replace("suites = [\"monotonicity\", \"corollary\"]", "suites = [\"monotonicity\"]")
        + "\n[[centers]]\nlabel = \"off\"\nspatial = [0.3, 0.0, 0.0, 0.0]\n\n[sweep]\nparameter = \"center\"\n";
    let (code, text) = run_config(dir.path(), "sweep", &config);
    assert_eq!(code, 0, "{text}");
    let index = fs::read_to_string(dir.path().join("out/index.csv")).unwrap();
    let rows: Vec<&str> = index.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].contains(",center,center,"));
    assert!(rows[1].contains(",center,off,"));
}

#[test]
fn identities_subcommand_runs_only_identities() {
    let dir = tempfile::tempdir().unwrap();
    let config = SPHERE.replace(
        "suites = [\"monotonicity\", \"corollary\"]",
        "suites = [\"monotonicity\"]\nidentities = { points = 10 }",
    );
    let (code, text) = run_config(dir.path(), "identities", &config);
    assert_eq!(code, 0, "{text}");
    let r = report(dir.path());
    let suites = r["suites"].as_object().unwrap();
    assert_eq!(suites.keys().collect::<Vec<_>>(), vec!["identities"]);
}
