use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_viscobem"))
}

fn case(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../cases").join(name)
}

#[test]
fn validate_shipped_case() {
    let out = bin().args(["validate", "--config"]).arg(case("example_a.json")).output().unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("800 steps"));
}

#[test]
fn config_error_exit_code_and_error_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, "{}").unwrap();
    let out_dir = dir.path().join("out");
    let st = bin().args(["run", "--config"]).arg(&cfg).arg("--out").arg(&out_dir).status().unwrap();
    assert_eq!(st.code(), Some(2));
    let msg = std::fs::read_to_string(out_dir.join("error.txt")).unwrap();
    assert!(msg.contains("missing required fields"));
    let st = bin().args(["validate", "--config"]).arg(&cfg).status().unwrap();
    assert_eq!(st.code(), Some(2));
}

#[test]
fn tau_override_must_divide_total() {
    let dir = tempfile::tempdir().unwrap();
    let st = bin()
        .args(["run", "--config"])
        .arg(case("example_a.json"))
        .arg("--out")
        .arg(dir.path())
        .args(["--tau", "7"])
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(2));
}

#[test]
fn run_with_coarse_step() {
    let dir = tempfile::tempdir().unwrap();
    let st = bin()
        .args(["run", "--config"])
        .arg(case("example_a.json"))
        .arg("--out")
        .arg(dir.path())
        .args(["--tau", "10"])
        .status()
        .unwrap();
    assert!(st.success());
    let ts = std::fs::read_to_string(dir.path().join("timeseries.csv")).unwrap();
    assert_eq!(ts.lines().filter(|l| l.contains(",tip,")).count(), 80);
}

#[test]
fn solver_error_exit_code() {
    // a Maxwell region in contact is not supported by the contact solver
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(case("contact_chi45.json"))
        .unwrap()
        .replace("\"kelvin_voigt\"", "\"maxwell\"");
    let cfg = dir.path().join("maxwell.json");
    std::fs::write(&cfg, text).unwrap();
    let out_dir = dir.path().join("out");
    let st = bin().args(["run", "--config"]).arg(&cfg).arg("--out").arg(&out_dir).status().unwrap();
    assert_eq!(st.code(), Some(3));
    assert!(out_dir.join("error.txt").exists());
}

#[test]
fn mesh_roundtrip_through_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("disk.mesh");
    let st = bin()
        .args(["mesh", "quarter-disk", "--radius", "0.75", "--contact-angle", "13.5"])
        .args(["--n-contact", "6", "--n-arc", "17", "--n-straight", "2", "--out"])
        .arg(&path)
        .status()
        .unwrap();
    assert!(st.success());
    let text = std::fs::read_to_string(&path).unwrap();
    let mesh = viscobem::model::Mesh::from_text(&text).unwrap();
    assert_eq!(mesh.elements.len(), 6 + 17 + 4);
    let out = bin().args(["mesh", "rectangle", "--length", "2", "--height", "1", "--nx", "0", "--ny", "1"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}
