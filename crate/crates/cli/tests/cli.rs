use std::process::Command;

use morse_bott_cli::config::{self, ConfigError};
use morse_bott_cli::run;
use serde_json::Value;

fn cfg(name: &str) -> String {
    format!("{}/../../configs/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn call(args: &[&str]) -> (i32, String, String) {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let mut argv = vec!["morse-bott"];
    argv.extend_from_slice(args);
    let code = run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn json(args: &[&str]) -> (i32, Value) {
    let mut a = args.to_vec();
    a.extend(["--report", "json"]);
    let (code, out, err) = call(&a);
    assert!(err.is_empty(), "{err}");
    (code, serde_json::from_str(&out).expect("report is JSON"))
}

#[test]
fn catalog_s2_height_json() {
    let (code, r) = json(&["catalog", "s2-height"]);
    assert_eq!(code, 0);
    assert_eq!(r["schema"], 1);
    assert_eq!(r["pass"], true);
    assert_eq!(r["body"]["homology"]["betti"], serde_json::json!([1, 0, 1]));
    assert_eq!(r["body"]["d_squared_zero"], true);
    assert_eq!(r["body"]["oracle_match"], true);
}

#[test]
fn catalog_interval_cubic_matches_the_oracle() {
    let (code, out, _) = call(&["catalog", "interval-cubic"]);
    assert_eq!(code, 0, "{out}");
    assert!(out.contains("betti [1]"), "{out}");
    assert!(out.contains("grid oracle [1]"), "{out}");
}

#[test]
fn verify_bad_field_fails_with_a_witness() {
    let (code, r) = json(&["verify", &cfg("bad-field.toml")]);
    assert_eq!(code, 1);
    let taming = r["body"]["axioms"]
        .as_array()
        .unwrap()
        .iter()
        .find(|a| a["axiom"].as_str().unwrap().starts_with("(iv)"))
        .unwrap()
        .clone();
    assert_eq!(taming["pass"], false);
    assert_eq!(taming["witness"].as_array().unwrap().len(), 3);
}

#[test]
fn verify_accepts_a_config_field() {
    let (code, out, _) = call(&["verify", &cfg("s2-tilted.toml"), "--tol-profile", "loose"]);
    assert_eq!(code, 0, "{out}");
}

#[test]
fn json_reports_are_reproducible() {
    let args = ["moduli", &cfg("s2-tilted.toml"), "--budget", "12", "--seed", "7", "--report", "json"];
    let (_, a, _) = call(&args);
    let (_, b, _) = call(&args);
    assert_eq!(a, b);
    let r: Value = serde_json::from_str(&a).unwrap();
    assert_eq!(r["seed"], 7);
}

#[test]
fn continuation_of_the_rotation() {
    let (code, r) = json(&["continuation", &cfg("rotation.toml")]);
    assert_eq!(code, 0);
    assert_eq!(r["body"]["chain_map"]["holds"], true);
    assert_eq!(r["body"]["induced"]["isomorphism"], true);
}

#[test]
fn equivariant_from_a_config() {
    let (code, r) = json(&["equivariant", &cfg("hopf.toml")]);
    assert_eq!(code, 0);
    assert_eq!(r["body"]["pin2"]["homology"]["betti"], serde_json::json!([1, 1, 1]));
    assert_eq!(r["body"]["oracle_match"], true);
}

#[test]
fn oracle_on_the_disk() {
    let (code, r) = json(&["oracle", &cfg("disk.toml")]);
    assert_eq!(code, 0);
    assert_eq!(r["body"]["conley"]["resolution"], 20);
    assert_eq!(r["body"]["oracle_match"], true);
}

#[test]
fn out_writes_the_report_to_a_file() {
    let dir = std::env::temp_dir().join(format!("mb-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("report.json");
    let (code, out, _) = call(&["stationary", "s2-height", "--report", "json", "--out", path.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert!(out.is_empty());
    let r: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(r["body"]["loci"].as_array().unwrap().len(), 2);
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn config_errors_exit_with_two() {
    let (code, _, err) = call(&["complex", "no-such-entry"]);
    assert_eq!(code, 2);
    assert!(err.contains("unknown catalog entry 'no-such-entry'"), "{err}");

    let (code, _, err) = call(&["complex", "s2-height", "--tol-profile", "sloppy"]);
    assert_eq!(code, 2, "{err}");

    let (code, _, err) = call(&["equivariant", "s2-height"]);
    assert_eq!(code, 2);
    assert!(err.contains("[pin2]"), "{err}");
}

#[test]
fn expression_errors_point_into_the_file() {
    let src = "name = \"t\"\n\n[manifold]\nvars = [\"x\", \"y\"]\n\n[field]\nf = \"x + w\"\n";
    match config::parse("t.toml", src) {
        Err(ConfigError::ConfigParse { line, col, message, .. }) => {
            assert_eq!((line, col), (7, 10), "{message}");
            assert!(message.contains("'w'"));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn toml_errors_carry_positions() {
    let src = "name = \"t\"\n[manifold\n";
    let Err(ConfigError::ConfigParse { line, .. }) = config::parse("t.toml", src) else {
        panic!("accepted")
    };
    assert_eq!(line, 2);
    let src = "[manifold]\nvars = [\"x\"]\ncolour = 3\n";
    let Err(ConfigError::ConfigParse { line, message, .. }) = config::parse("t.toml", src) else {
        panic!("accepted")
    };
    assert_eq!(line, 3, "{message}");
    let src = "catalog = \"s9\"\n";
    let Err(ConfigError::ConfigParse { line, col, .. }) = config::parse("t.toml", src) else {
        panic!("accepted")
    };
    assert_eq!((line, col), (1, 11));
}

#[test]
fn homotopies_parse_in_both_forms() {
    let base = "[manifold]\nvars = [\"x\", \"y\", \"z\"]\nconstraints = [\"x^2 + y^2 + z^2 - 1\"]\n";
    let a = config::parse("a", &format!("{base}[homotopy]\npotential = \"z + 0.2*s*x\"\n")).unwrap();
    assert!(a.homotopy.is_some() && a.field.is_none());
    let b = config::parse("b", &format!("{base}[homotopy]\nfrom = \"z\"\nto = \"x\"\nrate = 1.25\n")).unwrap();
    assert_eq!(b.homotopy.unwrap().rate, 1.25);
    assert!(config::parse("c", &format!("{base}[homotopy]\nfrom = \"z\"\n")).is_err());
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_morse-bott");
    let ok = Command::new(bin).args(["catalog"]).output().unwrap();
    assert_eq!(ok.status.code(), Some(0));
    let bad = Command::new(bin).args(["verify", &cfg("bad-field.toml")]).output().unwrap();
    assert_eq!(bad.status.code(), Some(1));
    let cfg_err = Command::new(bin).args(["verify", "nope"]).output().unwrap();
    assert_eq!(cfg_err.status.code(), Some(2));
}
