use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use thermosplat::checkpoint::Checkpoint;

const BIN: &str = env!("CARGO_BIN_EXE_thermosplat");

fn smoke_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/smoke.json")
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env_remove("NTR_THREADS").output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let o = run(args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    o
}

fn err_line(o: &Output) -> String {
    let s = String::from_utf8_lossy(&o.stderr).into_owned();
    s.lines().last().unwrap_or("").to_string()
}

/// Synthesized smoke data in a fresh directory.
fn synth_dir() -> (tempfile::TempDir, String) {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap().to_string();
    ok(&["synth", "--config", smoke_config().to_str().unwrap(), "--out", &out]);
    (dir, out)
}

fn read(dir: &str, name: &str) -> Vec<u8> {
    fs::read(Path::new(dir).join(name)).unwrap()
}

#[test]
fn synth_populates_the_run_directory() {
    let (_d, out) = synth_dir();
    for f in ["config.json", "scene.json", "gt_params.json", "split.json", "captures/view00_t0.pfm", "captures/view00_t0.json"] {
        assert!(Path::new(&out).join(f).is_file(), "missing {f}");
    }
    let n = fs::read_dir(Path::new(&out).join("captures")).unwrap().count();
    assert_eq!(n, 2 * 16);
}

#[test]
fn emitted_config_alone_reproduces_the_run() {
    let (_d, out) = synth_dir();
    let again = tempfile::tempdir().unwrap();
    let a2 = again.path().to_str().unwrap();
    let cfg = Path::new(&out).join("config.json");
    ok(&["synth", "--config", cfg.to_str().unwrap(), "--out", a2]);
    for f in ["config.json", "scene.json", "split.json", "captures/view02_t14400.pfm"] {
        assert_eq!(read(&out, f), read(a2, f), "{f}");
    }
}

#[test]
fn seed_flag_overrides_config() {
    let (_d, out) = synth_dir();
    let other = tempfile::tempdir().unwrap();
    let o2 = other.path().to_str().unwrap();
    ok(&["synth", "--config", smoke_config().to_str().unwrap(), "--out", o2, "--seed", "11"]);
    let text = String::from_utf8(read(o2, "config.json")).unwrap();
    assert!(text.contains("\"seed\": 11"));
    assert_ne!(read(&out, "scene.json"), read(o2, "scene.json"));
}

#[test]
fn missing_config_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["synth", "--config", "no/such/cfg.json", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let line = err_line(&o);
    assert!(line.starts_with("error[E_VALIDATION]:"), "{line}");
    assert!(line.contains("no/such/cfg.json"), "{line}");
    assert_eq!(String::from_utf8_lossy(&o.stderr).lines().count(), 1);
}

#[test]
fn stage_two_without_stage_one_names_the_checkpoint() {
    let (_d, out) = synth_dir();
    let o = run(&["train", "--stage", "2", "--config", smoke_config().to_str().unwrap(), "--out", &out]);
    assert_eq!(o.status.code(), Some(1));
    let line = err_line(&o);
    assert!(line.starts_with("error[E_VALIDATION]:") && line.contains("stage1.ckpt"), "{line}");
}

#[test]
fn unknown_flags_and_bad_thread_counts_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let o = run(&["synth", "--out", d, "--colour", "red"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(err_line(&o).starts_with("error[E_USAGE]:"));
    assert_eq!(run(&["synth"]).status.code(), Some(1));
    assert_eq!(run(&["synth", "--out", d, "--threads", "0"]).status.code(), Some(1));
    let o = Command::new(BIN).args(["synth", "--out", d]).env("NTR_THREADS", "many").output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(err_line(&o).contains("NTR_THREADS"));
}

#[test]
fn help_lists_every_config_key_with_its_default() {
    let o = ok(&["--help"]);
    let text = String::from_utf8(o.stdout).unwrap();
    for (k, v) in thermosplat::json::config_keys() {
        let line = text.lines().find(|l| l.split_whitespace().next() == Some(k.as_str()));
        let line = line.unwrap_or_else(|| panic!("{k} missing from help"));
        assert!(line.trim_end().ends_with(&v), "{line}");
    }
    let sub = String::from_utf8(ok(&["train", "--help"]).stdout).unwrap();
    assert!(sub.contains("train.stage1_iters"));
    for c in ["synth", "train", "render", "eval", "predict-curve", "ablate"] {
        assert!(text.contains(c));
    }
}

#[test]
fn staged_training_matches_one_shot_and_freezes_geometry() {
    let cfg = smoke_config();
    let cfg = cfg.to_str().unwrap();
    let (_d, all) = synth_dir();
    ok(&["train", "--config", cfg, "--out", &all]);
    let staged = tempfile::tempdir().unwrap();
    let st = staged.path().to_str().unwrap();
    ok(&["train", "--stage", "1", "--config", cfg, "--out", st, "--data", &all]);
    assert!(Path::new(st).join("metrics.csv").is_file());
    assert!(!Path::new(st).join("stage2.ckpt").exists());
    ok(&["train", "--stage", "2", "--config", cfg, "--out", st, "--data", &all]);
    for f in ["stage1.ckpt", "stage2.ckpt", "metrics.csv", "emissivity.csv"] {
        assert_eq!(read(&all, f), read(st, f), "{f}");
    }

    let s1 = Checkpoint::load(&Path::new(&all).join("stage1.ckpt")).unwrap();
    let s2 = Checkpoint::load(&Path::new(&all).join("stage2.ckpt")).unwrap();
    let geometry = |c: &Checkpoint| -> Vec<(String, Vec<u64>)> {
        c.arrays
            .iter()
            .filter(|(n, _, _)| n.starts_with("scene."))
            .map(|(n, _, v)| (n.clone(), v.iter().map(|x| x.to_bits()).collect()))
            .collect()
    };
    assert_eq!(geometry(&s1).len(), 3);
    assert_eq!(geometry(&s1), geometry(&s2));
    assert_ne!(s1.arrays, s2.arrays);
}

#[test]
fn ground_truth_never_reaches_training() {
    let cfg = smoke_config();
    let cfg = cfg.to_str().unwrap();
    let (_d, clean) = synth_dir();
    let (_e, dirty) = synth_dir();
    fs::write(Path::new(&dirty).join("gt_params.json"), "{ corrupted").unwrap();
    ok(&["train", "--config", cfg, "--out", &clean]);
    ok(&["train", "--config", cfg, "--out", &dirty]);
    for f in ["stage1.ckpt", "stage2.ckpt", "metrics.csv", "emissivity.csv"] {
        assert_eq!(read(&clean, f), read(&dirty, f), "{f}");
    }
}

#[test]
fn thread_count_does_not_change_results() {
    let cfg = smoke_config();
    let cfg = cfg.to_str().unwrap();
    let (_d, one) = synth_dir();
    let (_e, two) = synth_dir();
    ok(&["train", "--config", cfg, "--out", &one, "--threads", "1"]);
    let o = Command::new(BIN)
        .args(["train", "--config", cfg, "--out", &two])
        .env("NTR_THREADS", "3")
        .output()
        .unwrap();
    assert!(o.status.success());
    for f in ["stage2.ckpt", "metrics.csv", "emissivity.csv"] {
        assert_eq!(read(&one, f), read(&two, f), "{f}");
    }
}

#[test]
fn eval_render_and_curves_after_training() {
    let cfg = smoke_config();
    let cfg = cfg.to_str().unwrap();
    let (_d, out) = synth_dir();
    let o = run(&["eval", "--config", cfg, "--out", &out]);
    assert_eq!(o.status.code(), Some(1));
    assert!(err_line(&o).contains("stage1.ckpt"));

    ok(&["train", "--config", cfg, "--out", &out]);
    let first = read(&out, "metrics.csv");
    ok(&["eval", "--config", cfg, "--out", &out]);
    assert_eq!(read(&out, "metrics.csv"), first);
    ok(&["eval", "--config", cfg, "--out", &out, "--split", "train"]);
    let train = String::from_utf8(read(&out, "metrics_train.csv")).unwrap();
    assert_eq!(train.lines().count(), 1 + 8);

    ok(&["render", "--config", cfg, "--out", &out, "--time", "3600"]);
    for v in 0..4 {
        assert!(Path::new(&out).join(format!("renders/view{v:02}_t3600.pfm")).is_file());
    }
    let o = run(&["render", "--config", cfg, "--out", &out, "--time", "-60"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(err_line(&o).contains("precedes"));

    ok(&["predict-curve", "--config", cfg, "--out", &out, "--time", "7200", "--substeps", "6"]);
    let curves = String::from_utf8(read(&out, "curves.csv")).unwrap();
    let mut lines = curves.lines();
    assert_eq!(lines.next(), Some("gaussian_id,time_s,temp_c,delta_t"));
    assert_eq!(lines.count(), 36 * 7);
}

#[test]
fn empty_test_split_gives_an_empty_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(
        &cfg,
        r#"{"seed": 2, "synth": {"grid": [4, 4], "test_times": [], "cameras": {"width": 16, "height": 16, "focal": 40.0}},
            "train": {"stage1_iters": 4, "stage2_iters": 4}}"#,
    )
    .unwrap();
    let cfg = cfg.to_str().unwrap();
    ok(&["synth", "--config", cfg, "--out", out]);
    let o = ok(&["train", "--config", cfg, "--out", out]);
    assert!(String::from_utf8_lossy(&o.stdout).contains("no captures"));
    assert_eq!(String::from_utf8(read(out, "metrics.csv")).unwrap(), "view_id,time_s,psnr_db,ssim,mae_c\n");
}

#[test]
fn corrupt_capture_aborts_with_numerical_code() {
    let (_d, out) = synth_dir();
    let path = Path::new(&out).join("captures/view01_t0.pfm");
    let mut bytes = fs::read(&path).unwrap();
    let n = bytes.len();
    bytes[n - 4..].copy_from_slice(&f32::NAN.to_le_bytes());
    fs::write(&path, bytes).unwrap();
    let o = run(&["train", "--config", smoke_config().to_str().unwrap(), "--out", &out]);
    assert_eq!(o.status.code(), Some(2));
    assert!(err_line(&o).starts_with("error[E_NUMERICAL]:"), "{}", err_line(&o));
}
