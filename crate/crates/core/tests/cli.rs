use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tikhonov::moduli::sqrt_instance;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tikhonov"))
}

fn stock(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn write_json(dir: &Path, name: &str, v: &Value) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p
}

fn hyperplane(extra: Value) -> Value {
    let mut v = json!({
        "name": "h",
        "scheme": "tkm",
        "problem": { "kind": "hyperplane", "a": [1, 0, 0, 0, 0], "c": 1 },
        "instance": "sqrt",
        "bound": 1,
        "n_max": 10000,
        "checks": ["recurrence", "boundedness", "asymptotic_regularity"]
    });
    for (k, x) in extra.as_object().unwrap() {
        v[k] = x.clone();
    }
    v
}

#[test]
fn missing_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["run", "no/such/config.json", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
}

#[test]
fn malformed_config_and_bad_arguments_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.json");
    fs::write(&p, "{ \"name\": ").unwrap();
    let out = bin().arg("run").arg(&p).arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(code(&out), 2);
    let out = bin().args(["frobnicate"]).output().unwrap();
    assert_eq!(code(&out), 2);
    let out = bin().args(["rates", "--instance", "nope"]).output().unwrap();
    assert_eq!(code(&out), 2);
}

#[test]
fn stock_config_exits_0() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .arg("run")
        .arg(stock("hyperplane-tkm-sqrt.json"))
        .args(["--thin", "1000", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    let text = stdout(&out);
    assert!(text.contains("PASS         boundedness"), "{text}");
    assert!(text.contains("PASS         strong_convergence"), "{text}");
    assert!(!text.contains("FAIL"), "{text}");
    let report: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("hyperplane-tkm-sqrt.json")).unwrap()).unwrap();
    assert_eq!(report["bounds"]["0"]["nu1"], "5626");
    let csv = fs::read_to_string(dir.path().join("hyperplane-tkm-sqrt.csv")).unwrap();
    // Header, every 1000th iterate and the last one.
    assert_eq!(csv.lines().count(), 1 + 1001);
}

#[test]
fn undersized_bound_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_json(dir.path(), "c.json", &hyperplane(json!({ "x0": [1, 2, 0, 0, 0] })));
    let out = bin().arg("run").arg(&cfg).arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(code(&out), 1);
    assert!(stdout(&out).contains("FAIL         boundedness"));
    // The same start is fine once N covers it.
    let cfg = write_json(
        dir.path(),
        "d.json",
        &hyperplane(json!({ "x0": [1, 2, 0, 0, 0], "bound": 3 })),
    );
    let out = bin().arg("run").arg(&cfg).arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(code(&out), 0, "{}", stdout(&out));
}

#[test]
fn rates_prints_the_sqrt_values() {
    let out = bin().args(["rates", "--instance", "sqrt", "-k", "0"]).output().unwrap();
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert!(text.contains("nu1 = 5626"), "{text}");
    assert!(text.contains("nu2 = 1336337"), "{text}");
    assert!(text.contains("mu = SATURATED(1000000000000000000)"), "{text}");
    assert!(text.contains("mu1[a=1] = SATURATED"), "{text}");
}

#[test]
fn rates_reads_a_config() {
    let out = bin()
        .arg("rates")
        .arg(stock("dr-l1-affine-quarter-sqrt.json"))
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert!(text.contains("nu1 = 577"), "{text}");
    assert!(text.contains("mu1[a=2]"), "{text}");
}

#[test]
fn validate_flags_a_broken_convergence_rate() {
    let out = bin()
        .args(["validate", "--instance", "sqrt", "--horizon", "2000", "--k-max", "4"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", stdout(&out));

    let inst = sqrt_instance(1);
    let mut moduli = serde_json::to_value(&inst.moduli).unwrap();
    moduli["b"] = json!({ "kind": "const", "params": { "value": 0 } });
    let cfg = hyperplane(json!({
        "schedule": serde_json::to_value(&inst.schedule).unwrap(),
        "moduli": moduli,
    }));
    let mut cfg = cfg;
    cfg.as_object_mut().unwrap().remove("instance");
    cfg.as_object_mut().unwrap().remove("bound");
    let dir = tempfile::tempdir().unwrap();
    let p = write_json(dir.path(), "broken.json", &cfg);
    let out = bin()
        .arg("validate")
        .arg(&p)
        .args(["--horizon", "2000", "--k-max", "4"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 1, "{}", stdout(&out));
    assert!(stdout(&out).contains("FAIL"));
}

#[test]
fn identical_runs_write_identical_files() {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let out = bin()
            .arg("run")
            .arg(stock("hyperplane-km.json"))
            .arg("--out")
            .arg(d.path())
            .output()
            .unwrap();
        assert_eq!(code(&out), 0);
    }
    for file in ["hyperplane-km.csv", "hyperplane-km.json"] {
        let a = fs::read(dirs[0].path().join(file)).unwrap();
        let b = fs::read(dirs[1].path().join(file)).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b, "{file} differs");
    }
}

#[test]
fn seed_flag_changes_the_start() {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for (d, seed) in dirs.iter().zip(["7", "8"]) {
        let out = bin()
            .arg("run")
            .arg(stock("hyperplane-km.json"))
            .args(["--seed", seed, "--out"])
            .arg(d.path())
            .output()
            .unwrap();
        assert_eq!(code(&out), 0);
    }
    let a = fs::read(dirs[0].path().join("hyperplane-km.csv")).unwrap();
    let b = fs::read(dirs[1].path().join("hyperplane-km.csv")).unwrap();
    assert_ne!(a, b);
}
