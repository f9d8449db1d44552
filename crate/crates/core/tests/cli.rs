use std::process::Command;

fn dcyl(out: &std::path::Path) -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_dcyl"));
    c.env("DCYL_OUT", out);
    c
}

#[test]
fn verify_exact_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = dcyl(dir.path()).args(["verify", "--level", "exact"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.lines().count() >= 15);
    assert!(!text.contains("FAIL"));
    assert!(dir.path().join("verify.json").exists());
}

#[test]
fn theorem41_from_config_file_writes_record() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("t41.toml");
    std::fs::write(&cfg, "seed = 4\nN = [3, 4]\nu = 2.0\nreplicates = 12\n").unwrap();
    let out = dcyl(dir.path()).args(["theorem41", "--config"]).arg(&cfg).args(["--delta", "0.5"]).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("theorem41.json")).unwrap()).unwrap();
    assert_eq!(json["config"]["delta"], 0.5);
    assert_eq!(json["level"]["source"], "user");
    assert_eq!(json["rows"].as_array().unwrap().len(), 24);
    let csv = std::fs::read_to_string(dir.path().join("theorem41.csv")).unwrap();
    assert_eq!(csv.lines().count(), 25);
}

#[test]
fn disconnect_sim_csv_schema() {
    let dir = tempfile::tempdir().unwrap();
    let out = dcyl(dir.path()).args(["disconnect-sim", "--N", "3", "--replicates", "5"]).output().unwrap();
    assert!(out.status.success());
    let csv = std::fs::read_to_string(dir.path().join("tn_d2_N3.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    for col in ["seed", "N", "d", "T_N", "censored"] {
        assert!(header.split(',').any(|h| h == col), "{header}");
    }
}

#[test]
fn bad_input_exits_with_error_status() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "d = 1\n").unwrap();
    let out = dcyl(dir.path()).args(["theorem41", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = dcyl(dir.path()).args(["interlace-sim", "--d", "1"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn limitlaw_eval_prints_monotone_tail() {
    let dir = tempfile::tempdir().unwrap();
    let out = dcyl(dir.path()).args(["limitlaw-eval", "--u", "1", "--s", "0.1,0.3,0.6"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    let tails: Vec<f64> = text.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(tails.len(), 3);
    assert!(tails.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn shipped_configs_parse() {
    let root = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for name in ["theorem41.toml", "corollary46.toml"] {
        let cfg = dcyl::harness::ExperimentConfig::load(&root.join(name)).unwrap();
        assert_eq!(format!("{}.toml", cfg.experiment), name);
    }
}
