use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const SYNTH: &str = "height = 32\nwidth = 32\nangular = [5, 5]\nseed = 3\n\
                     layer_count = [1, 2]\ndisparity_range = [-1.0, 1.0]\n";

const TRAIN: &str = "seed = 1\ncrop_size = 24\nlearning_rate = 1e-3\nbatch_size = 1\n\
                     steps = 3\ncheckpoint_every = 2\n\n[model]\nfeature_channels = 4\n\
                     feature_width = 4\ndisparity_width = 4\nrefine_width = 4\n\
                     n_resgroups = 1\nn_cbam = 1\nca_reduction = 2\n";

fn lfvs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lfvs"))
        .args(args)
        .env_remove("LFVS_DATA_ROOT")
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "status {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn files_with(dir: &Path, suffix: &str) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.to_string_lossy().ends_with(suffix))
        .collect();
    v.sort();
    v
}

/// Synthetic data set of `count` scenes plus a micro training config.
fn fixture(count: usize) -> (TempDir, PathBuf, PathBuf) {
    let tmp = TempDir::new().unwrap();
    let spec = tmp.path().join("synth.cfg");
    fs::write(&spec, SYNTH).unwrap();
    let data = tmp.path().join("data");
    ok(&lfvs(&["prepare", "--synthetic", s(&spec), "--count", &count.to_string(), "--out", s(&data)]));
    let cfg = tmp.path().join("micro.cfg");
    fs::write(&cfg, TRAIN).unwrap();
    (tmp, data, cfg)
}

fn trained(count: usize) -> (TempDir, PathBuf, PathBuf) {
    let (tmp, data, cfg) = fixture(count);
    let run = tmp.path().join("run");
    ok(&lfvs(&["train", "--config", s(&cfg), "--data", s(&data), "--out", s(&run)]));
    (tmp, data, run)
}

#[test]
fn prepare_synthetic_writes_scenes_and_disparities() {
    let (_tmp, data, _) = fixture(3);
    for i in 0..3 {
        let dir = data.join(format!("scene_{i:04}"));
        assert_eq!(files_with(&dir, ".png").len(), 25);
        assert_eq!(files_with(&dir, ".pfm").len(), 25);
    }
    assert!(data.join("manifest.json").is_file());
    assert!(data.join("dataset.toml").is_file());
}

#[test]
fn prepare_dataset_split_is_deterministic() {
    let (tmp, data, _) = fixture(5);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for out in [&a, &b] {
        ok(&lfvs(&["prepare", "--dataset", s(&data), "--test", "2", "--seed", "7", "--out", s(out)]));
    }
    for f in ["train.txt", "test.txt"] {
        assert_eq!(fs::read_to_string(a.join(f)).unwrap(), fs::read_to_string(b.join(f)).unwrap());
    }
    let test = fs::read_to_string(a.join("test.txt")).unwrap();
    assert_eq!(test.lines().filter(|l| !l.trim().is_empty()).count(), 2);
}

#[test]
fn prepare_reports_first_missing_view() {
    let (_tmp, data, _) = fixture(2);
    let victim = data.join("scene_0001").join("view_2_3.png");
    fs::remove_file(&victim).unwrap();
    let out = lfvs(&["prepare", "--dataset", s(&data), "--test", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("scene_0001"));
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(lfvs(&["train"]).status.code(), Some(1));
    assert_eq!(lfvs(&["bogus"]).status.code(), Some(1));
    assert_eq!(lfvs(&["--help"]).status.code(), Some(0));
}

#[test]
fn train_writes_artifacts_and_resume_continues() {
    let (tmp, data, run) = trained(2);
    for f in ["latest.ckpt", "loss.csv", "manifest.json"] {
        assert!(run.join(f).is_file(), "{f} missing");
    }
    let log = fs::read_to_string(run.join("loss.csv")).unwrap();
    assert_eq!(log.lines().count(), 4);

    let cfg = tmp.path().join("micro.cfg");
    let latest = run.join("latest");
    ok(&lfvs(&[
        "train", "--config", s(&cfg), "--data", s(&data), "--out", s(&run),
        "--resume", s(&latest), "--steps", "5",
    ]));
    let log = fs::read_to_string(run.join("loss.csv")).unwrap();
    let steps: Vec<u64> = log.lines().skip(1).map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(steps, vec![1, 2, 3, 4, 5]);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["resolved_config"]["steps"], 5);
}

#[test]
fn train_flag_overrides_config_file() {
    let (tmp, data, cfg) = fixture(1);
    let run = tmp.path().join("run");
    ok(&lfvs(&[
        "train", "--config", s(&cfg), "--data", s(&data), "--out", s(&run),
        "--steps", "1", "--learning-rate", "5e-4",
    ]));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["resolved_config"]["learning_rate"], 5e-4);
    assert_eq!(manifest["resolved_config"]["crop_size"], 24);
    assert_eq!(manifest["seed"], 1);
}

#[test]
fn train_divergence_exits_with_three() {
    let (tmp, data, cfg) = fixture(1);
    let run = tmp.path().join("run");
    let out = lfvs(&[
        "train", "--config", s(&cfg), "--data", s(&data), "--out", s(&run),
        "--steps", "6", "--learning-rate", "1e300",
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn synthesize_targets_dumps_and_corner_rejection() {
    let (tmp, data, run) = trained(1);
    let ckpt = run.join("latest.ckpt");
    let scene = data.join("scene_0000");

    let one = tmp.path().join("one");
    ok(&lfvs(&[
        "synthesize", "--ckpt", s(&ckpt), "--scene", s(&scene), "--target", "2,2",
        "--out", s(&one), "--dump-disparity", "--dump-warped",
    ]));
    assert_eq!(files_with(&one, ".pfm").len(), 3);
    assert_eq!(files_with(&one, "_warped_L.png").len(), 1);
    assert_eq!(files_with(&one, ".png").len(), 4);

    let all = tmp.path().join("all");
    ok(&lfvs(&["synthesize", "--ckpt", s(&ckpt), "--scene", s(&scene), "--all-interior", "--out", s(&all)]));
    assert_eq!(files_with(&all, ".png").len(), 21);

    let bad = lfvs(&[
        "synthesize", "--ckpt", s(&ckpt), "--scene", s(&scene), "--target", "4,0",
        "--out", s(&tmp.path().join("bad")),
    ]);
    assert_ne!(bad.status.code(), Some(0));
}

#[test]
fn synthesize_needs_only_the_corners() {
    let (tmp, data, run) = trained(1);
    let scene = data.join("scene_0000");
    for v in 0..5 {
        for u in 0..5 {
            if (v == 0 || v == 4) && (u == 0 || u == 4) {
                continue;
            }
            fs::remove_file(scene.join(format!("view_{v}_{u}.png"))).unwrap();
        }
    }
    let out = tmp.path().join("out");
    ok(&lfvs(&[
        "synthesize", "--ckpt", s(&run.join("latest.ckpt")), "--scene", s(&scene),
        "--target", "1,3", "--out", s(&out),
    ]));
    assert_eq!(files_with(&out, ".png").len(), 1);
}

#[test]
fn evaluate_writes_one_row_per_interior_view() {
    let (tmp, data, run) = trained(2);
    let out = tmp.path().join("eval");
    ok(&lfvs(&["evaluate", "--ckpt", s(&run.join("latest")), "--data", s(&data), "--out", s(&out)]));
    let csv = fs::read_to_string(out.join("report.csv")).unwrap();
    let rows = csv.lines().filter(|l| l.starts_with("scene_")).count();
    assert_eq!(rows, 2 * 21);
    assert!(out.join("summary.txt").is_file());
    assert!(out.join("manifest.json").is_file());
}

#[test]
fn evaluate_reads_data_root_from_environment() {
    let (tmp, data, run) = trained(1);
    let out = tmp.path().join("eval");
    let status = Command::new(env!("CARGO_BIN_EXE_lfvs"))
        .args(["evaluate", "--ckpt", s(&run.join("latest.ckpt")), "--out", s(&out)])
        .env("LFVS_DATA_ROOT", &data)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(out.join("report.csv").is_file());
}

#[test]
fn evaluate_qualitative_writes_crops() {
    let (tmp, data, run) = trained(1);
    let out = tmp.path().join("q");
    ok(&lfvs(&[
        "evaluate", "--ckpt", s(&run.join("latest.ckpt")), "--data", s(&data), "--out", s(&out),
        "--qualitative", "scene:scene_0000", "--crop", "0.62,0.7,0.75,0.82",
    ]));
    for kind in ["synth", "gt", "error"] {
        assert_eq!(files_with(&out, &format!("_{kind}.png")).len(), 1);
        assert_eq!(files_with(&out, &format!("_{kind}_crop0.png")).len(), 1);
    }
    let bad = lfvs(&[
        "evaluate", "--ckpt", s(&run.join("latest.ckpt")), "--data", s(&data),
        "--out", s(&tmp.path().join("q2")), "--qualitative", "scene:scene_0000", "--crop", "0.5,0.5,1.5,0.9",
    ]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn evaluate_ablation_and_architecture_mismatch() {
    let (tmp, data, run) = trained(1);
    let grid = tmp.path().join("grid.cfg");
    fs::write(
        &grid,
        "[[entry]]\nn_resgroups = 1\nn_cbam = 1\nattention = true\ncheckpoint = \"run/latest.ckpt\"\n",
    )
    .unwrap();
    let out = tmp.path().join("abl");
    ok(&lfvs(&["evaluate", "--ablate", s(&grid), "--data", s(&data), "--out", s(&out)]));
    let table = fs::read_to_string(out.join("ablation.txt")).unwrap();
    assert!(table.contains("LFVS-AM"));

    fs::write(
        &grid,
        "[[entry]]\nn_resgroups = 5\nn_cbam = 3\nattention = true\ncheckpoint = \"run/latest.ckpt\"\n",
    )
    .unwrap();
    let bad = lfvs(&["evaluate", "--ablate", s(&grid), "--data", s(&data), "--out", s(&out)]);
    assert_eq!(bad.status.code(), Some(2));
    let _ = run;
}
