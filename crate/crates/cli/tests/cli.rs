use std::fs;
use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_gestalt-probe"));
    c.env_remove("GESTALT_PROBE_SEED");
    c
}

fn write_config(dir: &Path, name: &str, body: serde_json::Value) -> std::path::PathBuf {
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string_pretty(&body).unwrap()).unwrap();
    path
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|x| x == "csv") {
                out.push((p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn small_config(out: &str) -> serde_json::Value {
    serde_json::json!({
        "models": ["builtin:smallnet"],
        "experiments": ["exp1", "exp2", "sanity"],
        "repetitions": 3,
        "seed": 7,
        "workers": 2,
        "output_dir": out,
    })
}

#[test]
fn repeated_runs_write_identical_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let a = write_config(dir.path(), "a.json", small_config("run_a"));
    let b = write_config(dir.path(), "b.json", small_config("run_b"));
    for cfg in [&a, &b] {
        let status = bin().args(["run", "--config"]).arg(cfg).status().unwrap();
        assert!(status.success());
    }
    let (ra, rb) = (csv_files(&dir.path().join("run_a")), csv_files(&dir.path().join("run_b")));
    assert!(ra.len() >= 8, "{:?}", ra.iter().map(|f| &f.0).collect::<Vec<_>>());
    assert_eq!(ra, rb);

    let exp2 = String::from_utf8(ra.iter().find(|f| f.0 == "exp2_black_on_random_pixels_translate.csv").unwrap().1.clone()).unwrap();
    assert_eq!(exp2.lines().next().unwrap(), "model,probe,set_or_ef,base_sim,composite_sim,ce,stderr,n");
    assert_eq!(exp2.lines().count(), 1 + 3 * 5);
    let corr = ra.iter().find(|f| f.0.starts_with("correlations_")).unwrap();
    assert!(String::from_utf8_lossy(&corr.1).starts_with("model,probe,rho,p,n,excluded\n"));

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("run_a/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["failed"], 0);
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
    assert!(dir.path().join("run_a/figures").read_dir().unwrap().count() >= 5);
}

#[test]
fn seed_environment_variable_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config("a");
    cfg["experiments"] = serde_json::json!(["sanity"]);
    let a = write_config(dir.path(), "a.json", cfg.clone());
    cfg["output_dir"] = "b".into();
    let b = write_config(dir.path(), "b.json", cfg);
    assert!(bin().args(["run", "--config"]).arg(&a).status().unwrap().success());
    assert!(bin().args(["run", "--config"]).arg(&b).env("GESTALT_PROBE_SEED", "8").status().unwrap().success());
    let table = "sanity_black_on_random_pixels_translate.csv";
    assert_ne!(fs::read(dir.path().join("a").join(table)).unwrap(), fs::read(dir.path().join("b").join(table)).unwrap());
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("b/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 8);

    let bad = bin().args(["run", "--config"]).arg(&a).env("GESTALT_PROBE_SEED", "x").output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn failed_cells_give_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config("out");
    cfg["models"] = serde_json::json!(["builtin:smallnet", "missing.onnx"]);
    cfg["experiments"] = serde_json::json!(["sanity"]);
    let path = write_config(dir.path(), "c.json", cfg);
    let out = bin().args(["run", "--config"]).arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing"));
    assert!(dir.path().join("out/sanity_black_on_random_pixels_translate.csv").exists());
}

#[test]
fn invalid_config_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), "c.json", serde_json::json!({"models": ["m"], "experiments": [], "output_dir": "o"}));
    let out = bin().args(["run", "--config"]).arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("experiments"));
}

#[test]
fn plot_of_empty_directory_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin().arg("plot").arg(dir.path()).output().unwrap();
    assert!(!out.status.success());
    assert!(!dir.path().join("figures").exists());
}

#[test]
fn gen_writes_sequences_and_datasets() {
    let dir = tempfile::tempdir().unwrap();
    let ef = dir.path().join("ef");
    assert!(bin().args(["gen", "--ef", "orientation", "--n", "2", "--out"]).arg(&ef).status().unwrap().success());
    assert!(ef.join("orientation_001_composite_b.png").exists());
    assert!(ef.join("orientation_layouts.json").exists());

    let ds = dir.path().join("ds");
    let status = bin()
        .args(["gen", "--task", "linearity2", "--n-train", "4", "--n-test", "2", "--size", "64", "--out"])
        .arg(&ds)
        .status()
        .unwrap();
    assert!(status.success());
    let manifest = fs::read_to_string(ds.join("train_manifest.csv")).unwrap();
    assert_eq!(manifest.lines().next().unwrap(), "filename,label,param_value");
    assert_eq!(manifest.lines().count(), 5);

    assert!(!bin().args(["gen", "--ef", "nonsense", "--out"]).arg(&ef).status().unwrap().success());
}

#[test]
fn train_writes_curve_confusion_and_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t");
    let status = bin()
        .args(["train", "--task", "proximity3", "--epochs", "1", "--n-train", "30", "--n-test", "9", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(fs::read_to_string(out.join("proximity3_loss.csv")).unwrap().lines().count(), 2);
    assert!(out.join("smallnet_proximity3.onnx").exists());
    assert!(out.join("smallnet_proximity3.meta.json").exists());
}
