use std::path::Path;
use std::process::Command;

use serde_json::{json, Value};

use quenchlab::cli::{main_with_args, Manifest, EXIT_CONFIG, EXIT_OK, MANIFEST_NAME};

fn config() -> Value {
    json!({
        "domain": {"lower": [-1.0], "upper": [1.0], "nodes": [41]},
        "kernel": {"profile": "epanechnikov", "radius": 0.5},
        "params": {"lambda": 1.0, "mu": 1.0, "p": 1.0, "q": 1.0, "alpha": 1.0, "beta": 1.0},
        "initial": {"u": {"constant": 0.4}, "v": {"constant": 0.4}}
    })
}

fn write_config(dir: &Path, doc: &Value) -> String {
    let path = dir.join("run.json");
    std::fs::write(&path, serde_json::to_string_pretty(doc).unwrap()).unwrap();
    path.to_str().unwrap().to_string()
}

fn run(args: &[&str]) -> i32 {
    main_with_args(std::iter::once("quenchlab").chain(args.iter().copied()))
}

fn manifest(dir: &Path) -> Manifest {
    serde_json::from_str(&std::fs::read_to_string(dir.join(MANIFEST_NAME)).unwrap()).unwrap()
}

#[test]
fn run_writes_report_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &config());
    let out = dir.path().join("out");
    assert_eq!(run(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]), EXIT_OK);
    let m = manifest(&out);
    assert!(!m.partial);
    assert_eq!(m.status, "ok");
    for f in &m.files {
        let bytes = std::fs::read(out.join(&f.path)).unwrap();
        assert_eq!(quenchlab::cli::manifest::sha256_hex(&bytes), f.sha256, "{}", f.path);
    }
    let report: Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["report"]["verdict"], "quench");
    assert_eq!(report["simultaneity"]["kind"], "simultaneous");
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &config());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(run(&["run", "--config", &cfg, "--out", a.to_str().unwrap(), "--threads", "1"]), EXIT_OK);
    assert_eq!(run(&["run", "--config", &cfg, "--out", b.to_str().unwrap(), "--threads", "3"]), EXIT_OK);
    assert_eq!(manifest(&a), manifest(&b));
}

#[test]
fn missing_config_exits_before_writing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = dir.path().join("absent.json");
    assert_eq!(run(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]), EXIT_CONFIG);
    assert!(!out.exists());
}

#[test]
fn invalid_exponent_is_rejected_by_name() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &config());
    let out = dir.path().join("out");
    let status = Command::new(env!("CARGO_BIN_EXE_quenchlab"))
        .args(["run", "--config", &cfg, "--out", out.to_str().unwrap(), "--set", "params.p=0"])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(EXIT_CONFIG));
    let stderr = String::from_utf8_lossy(&status.stderr);
    assert!(stderr.contains("params.p must be > 0"), "{stderr}");
    assert!(!out.exists());
}

#[test]
fn overrides_and_output_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let mut doc = config();
    doc["output"] = json!(dir.path().join("from-config"));
    let cfg = write_config(dir.path(), &doc);
    assert_eq!(run(&["run", "--config", &cfg, "--set", "domain.nodes.0=21"]), EXIT_OK);
    let written: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("from-config/config.json")).unwrap()).unwrap();
    assert_eq!(written["domain"]["nodes"][0], 21);

    let cli_out = dir.path().join("from-cli");
    assert_eq!(run(&["run", "--config", &cfg, "--out", cli_out.to_str().unwrap()]), EXIT_OK);
    assert!(cli_out.join(MANIFEST_NAME).exists());
}

#[test]
fn bad_flags_are_configuration_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &config());
    let out = dir.path().join("out");
    assert_eq!(run(&["run", "--config", &cfg, "--out", out.to_str().unwrap(), "--threads", "0"]), EXIT_CONFIG);
    assert_eq!(run(&["frobnicate"]), EXIT_CONFIG);
    assert_eq!(run(&["run", "--config", &cfg, "--set", "nonsense"]), EXIT_CONFIG);
}

#[test]
fn stationary_and_rates_pipelines() {
    let dir = tempfile::tempdir().unwrap();
    let mut doc = config();
    doc["params"]["lambda"] = json!(0.005);
    doc["params"]["mu"] = json!(0.005);
    let cfg = write_config(dir.path(), &doc);
    let out = dir.path().join("st");
    assert_eq!(run(&["stationary", "--config", &cfg, "--out", out.to_str().unwrap(), "--dump-operator"]), EXIT_OK);
    let report: Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["outcome"], "stationary");
    assert_eq!(report["within_bounds"], true);
    assert!(manifest(&out).files.iter().any(|f| f.path == "operator.csv"));

    let cfg = write_config(dir.path(), &config());
    let out = dir.path().join("rates");
    assert_eq!(
        run(&["rates", "--config", &cfg, "--out", out.to_str().unwrap(), "--set", "controls.record=\"full\""]),
        EXIT_OK
    );
    let report: Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert!(report["fits"]["u"]["power_law"]["ok"]["exponent"].is_number(), "{report}");
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        let doc: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        let kind: quenchlab::cli::Experiment = serde_json::from_value(doc["experiment"].clone()).unwrap();
        quenchlab::cli::parse_config(&path, &[], kind).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        seen += 1;
    }
    assert_eq!(seen, 6);
}
