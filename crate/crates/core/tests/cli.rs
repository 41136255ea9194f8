use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn crossim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crossim"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn validate_passes_and_fault_fails() {
    let ok = crossim(&["validate", "--seeds", "2"]);
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stderr));
    let report: serde_json::Value = serde_json::from_slice(&ok.stdout).unwrap();
    assert_eq!(report["passed"], true);
    assert!(report["properties"].as_array().unwrap().iter().all(|p| p["trials"] == 2));

    let bad = crossim(&["validate", "--seeds", "1", "--fault", "signed-anc"]);
    assert!(!bad.status.success());
    let stderr = String::from_utf8_lossy(&bad.stderr);
    assert!(stderr.contains("FAIL anc_per_neuron_affine_invariance"), "{stderr}");
}

#[test]
fn gen_compare_match_plot_round() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let out = dir.path().join("out");
    let run = |args: &[&str]| {
        let o = crossim(args);
        assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        o
    };
    run(&["gen", "--out", path(&data), "--layers", "4", "--m", "150", "--n", "12", "--seed", "3"]);
    let manifest = data.join("manifest.json");
    run(&[
        "compare", "--manifest", path(&manifest), "--indexes", "all", "--pairs", "en-fr,en-de", "--out", path(&out),
    ]);
    let scores = fs::read_to_string(out.join("scores.csv")).unwrap();
    assert!(scores.starts_with("model_id,index,pair,layer,score,degenerate_count\n"));
    assert_eq!(scores.lines().count(), 1 + 5 * 2 * 5);
    assert!(out.join("aggregate.csv").exists());

    run(&["match", "--manifest", path(&manifest), "--pairs", "en-fr", "--out", path(&out)]);
    assert_eq!(fs::read_to_string(out.join("matching.csv")).unwrap().lines().count(), 6);

    run(&["neurons", "--manifest", path(&manifest), "--pairs", "en-de", "--layer", "2", "-k", "3", "--out", path(&out)]);
    assert!(out.join("neurons_synthetic_en-de_l2.json").exists());

    run(&["plot", path(&out.join("scores.csv")), "--out", path(&dir.path().join("plots"))]);
    assert_eq!(fs::read_dir(dir.path().join("plots")).unwrap().count(), 5);
}

#[test]
fn errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = crossim(&["compare", "--manifest", path(&dir.path().join("absent.json"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
}
