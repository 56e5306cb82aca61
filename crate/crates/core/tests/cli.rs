use serde_json::Value;
use shockstab::cli::{parse_config, run};
use std::fs;
use std::path::{Path, PathBuf};

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("shockstab-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn exec(args: &[&str], out: &Path, config: Option<&str>) -> i32 {
    let mut v: Vec<String> = vec!["shockstab".into()];
    v.extend(args.iter().map(|s| s.to_string()));
    v.push("--out".into());
    v.push(out.join("out").to_string_lossy().into_owned());
    if let Some(c) = config {
        let p = out.join("config.json");
        fs::write(&p, c).unwrap();
        v.push("--config".into());
        v.push(p.to_string_lossy().into_owned());
    }
    run(v)
}

fn report(out: &Path, name: &str) -> Value {
    serde_json::from_str(&fs::read_to_string(out.join("out").join(name)).unwrap()).unwrap()
}

#[test]
fn burgers_report_is_stable() {
    let d = scratch("burgers");
    assert_eq!(exec(&["report"], &d, None), 0);
    let r = report(&d, "report.json");
    assert_eq!(r["exit_code"], 0);
    assert_eq!(r["verdicts"]["spectral"]["verdict"], "strongly stable");
    assert_eq!(r["verdicts"]["inviscid"]["evidence"]["delta"], -2.0);
    let names: Vec<&str> = r["hypotheses"]
        .as_array()
        .unwrap()
        .iter()
        .map(|h| h["name"].as_str().unwrap())
        .collect();
    assert_eq!(names, ["A1", "A2", "H0", "H1", "H2", "H3", "H4", "H5"]);
    // Defaults are echoed.
    assert_eq!(r["provenance"]["config"]["contours"]["outer_radius"], 10.0);
    for f in ["profile.csv", "evans_traces.csv", "lowfreq.csv"] {
        assert!(d.join("out").join(f).exists(), "{f}");
    }
}

#[test]
fn planted_root_exits_unstable() {
    let d = scratch("planted");
    assert_eq!(
        exec(
            &["report"],
            &d,
            Some(r#"{"fixture": {"planted_root": [0.4, 0.1]}}"#)
        ),
        2
    );
    assert_eq!(
        report(&d, "report.json")["verdicts"]["spectral"]["verdict"],
        "strongly unstable"
    );
    let d = scratch("planted-sweep");
    assert_eq!(
        exec(
            &["evans-sweep"],
            &d,
            Some(r#"{"fixture": {"planted_root": [2.0, -1.0]}}"#)
        ),
        2
    );
}

#[test]
fn malformed_config_is_an_execution_error() {
    let d = scratch("malformed");
    assert_eq!(
        exec(&["report"], &d, Some(r#"{"model": {"id": "burgers",}"#)),
        1
    );
    assert_eq!(
        exec(&["report"], &d, Some(r#"{"model": {"name": "burgers"}}"#)),
        1
    );
    assert_eq!(
        exec(
            &["report"],
            &d,
            Some(r#"{"model": {"id": "no-such-model"}}"#)
        ),
        1
    );
    let err = parse_config("{\"shock\": [").unwrap_err().to_string();
    assert!(err.contains("parse error"), "{err}");
}

#[test]
fn reports_are_byte_identical() {
    let a = scratch("det-a");
    let b = scratch("det-b");
    assert_eq!(exec(&["report", "--seed", "5"], &a, None), 0);
    assert_eq!(exec(&["report", "--seed", "5"], &b, None), 0);
    for f in [
        "report.json",
        "profile.csv",
        "evans_traces.csv",
        "lowfreq.csv",
    ] {
        assert_eq!(
            fs::read(a.join("out").join(f)).unwrap(),
            fs::read(b.join("out").join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn subcommands_on_burgers() {
    let d = scratch("subs");
    for (cmd, code) in [
        ("structure-check", 0),
        ("profile-solve", 0),
        ("inviscid", 0),
        ("lowfreq", 0),
        ("verify-decay", 0),
        ("verify-energy", 0),
    ] {
        assert_eq!(exec(&[cmd], &d, None), code, "{cmd}");
        assert!(d.join("out").join(format!("{cmd}.json")).exists());
    }
    let txt = fs::read_to_string(d.join("out").join("profile.txt")).unwrap();
    assert!(!txt.is_empty());
}

#[test]
fn transverse_burgers_boundary_root() {
    // Linear transverse flux gives a boundary root of the Lopatinski
    // determinant: inviscid weak stability, rescued by β > 0.
    let d = scratch("transverse");
    let cfg = r#"{"model": {"id": "burgers", "params": {"d": 2, "c": [0.5], "q": [0.0]}}}"#;
    assert_eq!(exec(&["inviscid"], &d, Some(cfg)), 3);
    assert_eq!(exec(&["beta"], &d, Some(cfg)), 0);
    let r = report(&d, "beta.json");
    assert_eq!(r["verdicts"]["refined"]["verdict"], "strong refined");
}

#[test]
fn jordan_at_euler_rest_state() {
    let d = scratch("jordan");
    let cfg = r#"{"model": {"id": "navier-stokes-ideal", "params": {"d": 2}},
                  "shock": {"natural_minus": [1.0, 1.3015375521108, 0.0, 1.0], "speed": 0.0},
                  "verify": {"jordan_state": [1.0, 0.0, 0.0, 1.0]}}"#;
    assert_eq!(exec(&["jordan"], &d, Some(cfg)), 0);
    let r = report(&d, "jordan.json");
    assert!(r["evidence"]["jordan"]
        .as_array()
        .unwrap()
        .iter()
        .all(|j| j["margin"].as_f64().unwrap() > 0.0));
}
