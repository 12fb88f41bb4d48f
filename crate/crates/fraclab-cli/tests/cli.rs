use std::path::Path;
use std::process::{Command, Output};

fn fraclab(args: &[&str], cfg: Option<&Path>) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_fraclab"));
    c.args(args);
    if let Some(p) = cfg {
        c.arg("--config").arg(p);
    }
    c.output().unwrap()
}

fn config(dir: &Path, body: &str) -> std::path::PathBuf {
    let p = dir.join("c.toml");
    std::fs::write(&p, body).unwrap();
    p
}

#[test]
fn bad_config_exits_2_with_the_field_named() {
    let d = tempfile::tempdir().unwrap();
    let cfg = config(d.path(), "experiment = \"layer\"\ns = 0.5\n[grid]\nh = -0.1\n");
    let out = fraclab(&["run", "--out", d.path().to_str().unwrap()], Some(&cfg));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("grid.h"));

    let cfg = config(d.path(), "experiment = \"layer\"\ns = 0.5\nunknown = 1\n");
    let out = fraclab(&["run", "--out", d.path().to_str().unwrap()], Some(&cfg));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
}

#[test]
fn numerical_domain_error_exits_3() {
    let d = tempfile::tempdir().unwrap();
    // the glue box radius is not a multiple of its spacing
    let cfg = config(d.path(), "experiment = \"glue\"\ns = 0.5\nn = 2\n[minimality]\nglue_r = 4.1\nglue_trials = 1\n");
    let out = fraclab(&["run", "--out", d.path().to_str().unwrap()], Some(&cfg));
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn layer_run_writes_manifest_and_plot_data() {
    let d = tempfile::tempdir().unwrap();
    let cfg = config(d.path(), "experiment = \"layer\"\ns = 0.5\n[grid]\nh = 0.2\nx_max = 20.0\n");
    let out = fraclab(&["run", "--out", d.path().join("runs").to_str().unwrap()], Some(&cfg));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run_dir = std::path::PathBuf::from(String::from_utf8_lossy(&out.stdout).lines().next().unwrap());
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["status"], "pass");
    assert_eq!(manifest["experiment"], "layer");
    for a in manifest["artifacts"].as_array().unwrap() {
        assert!(run_dir.join(a["name"].as_str().unwrap()).exists());
    }

    let csv = run_dir.join("layer.csv");
    let out = fraclab(&["plotdata", "--in", csv.to_str().unwrap(), "--kind", "layer"], None);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let desc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(!desc["series"].as_array().unwrap().is_empty());

    // a layer table is not a blow-down table
    let out = fraclab(&["plotdata", "--in", csv.to_str().unwrap(), "--kind", "blowdown"], None);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing column"));
}
