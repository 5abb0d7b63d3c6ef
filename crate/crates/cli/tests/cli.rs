use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use cfl_cli::commands::{annotate, read_log, RunPaths};
use cfl_cli::draw::UNKNOWN;
use cfl_cli::{Checkpoint, RunConfig, EXIT_OK, EXIT_RUNTIME, EXIT_USAGE};
use cfl_core::data::Image;
use cfl_core::eval::EvalResult;
use cfl_core::pipeline::TrainState;
use cfl_core::{BoundingBox, Detection};

fn cli(args: &[&str]) -> i32 {
    let mut full = vec!["cfl"];
    full.extend_from_slice(args);
    cfl_cli::run(full)
}

/// `--set` arguments for a tiny run rooted at `root`.
fn tiny(root: &Path, extra: &[&str]) -> Vec<String> {
    let mut sets = vec![
        format!("output_dir={}", root.display()),
        "num_labeled=8".into(),
        "num_unlabeled=8".into(),
        "num_test=6".into(),
        "stage1_iters=10".into(),
        "stage2_iters=4".into(),
        "checkpoint_every=0".into(),
        "eval_images=2".into(),
    ];
    sets.extend(extra.iter().map(|s| s.to_string()));
    sets.into_iter().flat_map(|s| ["--set".to_string(), s]).collect()
}

fn run_with(cmd: &[&str], sets: &[String]) -> i32 {
    let mut args: Vec<&str> = cmd.to_vec();
    args.extend(sets.iter().map(String::as_str));
    cli(&args)
}

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in std::fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn make_splits_refuses_to_overwrite_and_force_rebuilds_identically() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("run");
    let sets = tiny(&root, &[]);
    assert_eq!(run_with(&["make-splits"], &sets), EXIT_OK);
    let data = root.join("data");
    for split in ["labeled", "unlabeled", "test"] {
        assert!(data.join(format!("manifests/{split}.jsonl")).is_file(), "{split}");
    }
    let first = tree(&data);

    std::fs::write(data.join("marker"), b"x").unwrap();
    assert_eq!(run_with(&["make-splits"], &sets), EXIT_RUNTIME);
    assert!(data.join("marker").exists());

    assert_eq!(run_with(&["make-splits", "--force"], &sets), EXIT_OK);
    assert!(!data.join("marker").exists());
    assert_eq!(tree(&data), first);
}

#[test]
fn stage_one_training_writes_checkpoint_and_log() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("run");
    let sets = tiny(&root, &["enable_fc=false"]);
    assert_eq!(run_with(&["make-splits"], &sets), EXIT_OK);
    assert_eq!(run_with(&["train", "--stage", "1"], &sets), EXIT_OK);

    let paths = RunPaths::new(&root);
    let ck = Checkpoint::load(&paths.stage_checkpoint(1)).unwrap();
    assert_eq!((ck.stage, ck.state.iteration), (1, 10));
    assert_eq!(ck.state.teacher, ck.state.student);
    assert!(!ck.config.schedule.enable_fc);

    let log = read_log(&paths.train_log()).unwrap();
    assert_eq!(log.len(), 10);
    assert_eq!(log[0].iteration, 0);
    assert_eq!(log[0].alpha_t, 0.1);
    assert!(log.iter().all(|l| l.l_fc == 0.0 && l.u_fc == 0.0 && l.stage == 1));
    assert!(log.iter().all(|l| l.total.is_finite() && l.total > 0.0));
    assert!(std::fs::read_to_string(paths.resolved_config()).unwrap().contains("enable_fc = false"));

    // stage 2 picks up from the stage-1 checkpoint
    assert_eq!(run_with(&["train", "--stage", "2"], &sets), EXIT_OK);
    let ck = Checkpoint::load(&paths.stage_checkpoint(2)).unwrap();
    assert_eq!((ck.stage, ck.state.iteration), (2, 14));
    let log = read_log(&paths.train_log()).unwrap();
    assert_eq!(log.len(), 14);
    assert!(log[10..].iter().all(|l| l.stage == 2));
}

#[test]
fn stage_two_without_stage_one_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("run");
    let sets = tiny(&root, &[]);
    assert_eq!(run_with(&["make-splits"], &sets), EXIT_OK);
    assert_eq!(run_with(&["train", "--stage", "2"], &sets), EXIT_RUNTIME);
    assert!(!RunPaths::new(&root).stage_checkpoint(2).exists());
}

#[test]
fn untrained_model_scores_near_zero_and_nets_write_separate_files() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("run");
    let sets = tiny(&root, &[]);
    assert_eq!(run_with(&["make-splits"], &sets), EXIT_OK);
    let config = RunConfig::default();
    let state = TrainState::new(config.detector(), &config.schedule, 11).unwrap();
    let ckpt = dir.path().join("untrained.ckpt");
    Checkpoint { config, stage: 0, state }.save(&ckpt).unwrap();
    let ck = ckpt.to_str().unwrap();

    assert_eq!(run_with(&["eval", "--checkpoint", ck, "--net", "teacher"], &sets), EXIT_OK);
    assert_eq!(run_with(&["eval", "--checkpoint", ck, "--net", "student"], &sets), EXIT_OK);
    let eval = RunPaths::new(&root).eval_dir();
    for net in ["teacher", "student"] {
        let json: serde_json::Value = serde_json::from_slice(&std::fs::read(eval.join(format!("test_{net}.json"))).unwrap()).unwrap();
        let result: EvalResult = serde_json::from_value(json["result"].clone()).unwrap();
        assert!(result.map_k < 0.05, "{net}: {}", result.map_k);
        assert!(eval.join(format!("test_{net}.txt")).is_file());
        assert_eq!(std::fs::read_dir(eval.join(format!("test_{net}"))).unwrap().count(), 2);
    }
}

#[test]
fn unknown_detections_are_drawn_dashed_in_the_reserved_colour() {
    let cfg = RunConfig::default();
    let space = cfg.detector().label_space();
    let img = Image { width: 16, height: 16, data: vec![0.5; 16 * 16 * 3] };
    let det = |class_id| Detection { bbox: BoundingBox::new(2.0, 4.0, 12.0, 14.0).unwrap(), class_id, score: 0.9 };
    let unknown = annotate(&img, &[det(space.unknown_id())], &cfg, &space);
    let count = |im: &image::RgbImage| im.pixels().filter(|p| **p == UNKNOWN).count();
    assert!(count(&unknown) > 0);
    // dashed: the bottom edge has gaps
    let y = 14 * 4 - 1;
    let edge: Vec<bool> = (8..14 * 4).map(|x| *unknown.get_pixel(x, y) == UNKNOWN).collect();
    assert!(edge.iter().any(|&b| b) && edge.iter().any(|&b| !b));
    let known = annotate(&img, &[det(0)], &cfg, &space);
    assert_eq!(count(&known), 0);
}

#[test]
fn version_mismatch_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("run");
    let sets = tiny(&root, &[]);
    assert_eq!(run_with(&["make-splits"], &sets), EXIT_OK);
    let config = RunConfig::default();
    let state = TrainState::new(config.detector(), &config.schedule, 0).unwrap();
    let mut bytes = Checkpoint { config, stage: 0, state }.to_bytes().unwrap();
    bytes[8] = 2;
    let ckpt = dir.path().join("old.ckpt");
    std::fs::write(&ckpt, bytes).unwrap();
    let err = Checkpoint::load(&ckpt).unwrap_err().to_string();
    assert!(err.contains("format version 2 is not supported"), "{err}");
    assert_eq!(run_with(&["eval", "--checkpoint", ckpt.to_str().unwrap()], &sets), EXIT_RUNTIME);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("run");
    assert_eq!(cli(&["--help"]), EXIT_OK);
    assert_eq!(cli(&["frobnicate"]), EXIT_USAGE);
    assert_eq!(cli(&["train", "--stage", "3"]), EXIT_USAGE);
    assert_eq!(run_with(&["train"], &tiny(&root, &["no_such_key=1"])), EXIT_USAGE);
    assert_eq!(run_with(&["train"], &tiny(&root, &["lambda=-1"])), EXIT_USAGE);
    assert_eq!(cli(&["train", "--config", dir.path().join("missing.conf").to_str().unwrap()]), EXIT_USAGE);
    // valid config, but no splits yet
    assert_eq!(run_with(&["train"], &tiny(&root, &[])), EXIT_RUNTIME);
    assert_eq!(run_with(&["report"], &tiny(&root, &[])), EXIT_RUNTIME);
}

#[test]
fn report_renders_loss_curves() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("run");
    let sets = tiny(&root, &["stage1_iters=3", "stage2_iters=0"]);
    assert_eq!(run_with(&["make-splits"], &sets), EXIT_OK);
    assert_eq!(run_with(&["train", "--stage", "1"], &sets), EXIT_OK);
    assert_eq!(run_with(&["report"], &sets), EXIT_OK);
    let png = image::open(RunPaths::new(&root).report_dir().join("loss_curves.png")).unwrap();
    assert!(png.width() > 100);
}
