use std::fs;

use mirlab::env::MapKind;
use mirlab::harness::*;
use mirlab::mappo::Method;

fn tiny(dir: &std::path::Path, method: Method, seeds: &[u64]) -> ExperimentConfig {
    let mut c = ExperimentConfig {
        method,
        seeds: seeds.to_vec(),
        output_dir: dir.to_path_buf(),
        eval_window: 10,
        checkpoint_every: 2,
        ..ExperimentConfig::default()
    };
    c.train.horizon = 32;
    c.train.num_envs = 4;
    c.train.total_steps = 3 * 128;
    c.novelty.disc_pairs = 64;
    c
}

#[test]
fn no_model_smoke_run_writes_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = tiny(dir.path(), Method::NoModel, &[1]);
    c.env.max_steps = 20;
    let report = run_experiment(&c).unwrap();
    assert!(report.is_success());
    let run = &report.runs[0];
    assert!(run.completed);
    assert!(run.episodes >= 16);
    assert!(!run.points.is_empty());
    assert_eq!(run.env_steps, 384);
    assert!(mean_best_episode_reward(&report.runs).unwrap() >= 0.0);
    let d = dir.path().join("seed_1");
    let log = fs::read_to_string(d.join("train_log.csv")).unwrap();
    assert_eq!(log.lines().next().unwrap(), TRAIN_LOG_HEADER);
    assert_eq!(log.lines().count(), 1 + 3);
    for f in [
        "config.txt",
        "summary.json",
        "checkpoints/update_2.ckpt",
        "checkpoints/final.ckpt",
        "best_episode.replay",
    ] {
        assert!(d.join(f).exists(), "{f}");
    }
    assert!(!d.join("rewards.csv").exists());
    let replay = fs::read_to_string(d.join("best_episode.replay")).unwrap();
    let frames = render_replay(&replay).unwrap();
    assert!(frames.contains(&format!("team reward: {}", run.best_episode_reward)));
    let cfg = ExperimentConfig::parse(&fs::read_to_string(d.join("config.txt")).unwrap()).unwrap();
    assert_eq!(cfg.seeds, vec![1]);
}

#[test]
fn same_seed_same_run_log() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = run_experiment(&tiny(a.path(), Method::DeirMir, &[7])).unwrap();
    let rb = run_experiment(&tiny(b.path(), Method::DeirMir, &[7])).unwrap();
    assert_eq!(ra.runs, rb.runs);
    let read = |d: &std::path::Path| fs::read_to_string(d.join("seed_7/train_log.csv")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
}

#[test]
fn each_seed_gets_its_own_directory() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = tiny(dir.path(), Method::Rnd, &[1, 2, 3]);
    c.train.total_steps = 128;
    let report = run_experiment(&c).unwrap();
    let mut seeds: Vec<u64> = report.runs.iter().map(|r| r.seed).collect();
    seeds.sort_unstable();
    assert_eq!(seeds, vec![1, 2, 3]);
    for s in 1..=3 {
        assert!(dir.path().join(format!("seed_{s}/train_log.csv")).exists());
    }
    let table = MetricTable::from_dir(dir.path()).unwrap();
    let row = table.get("DoorKeyB6x6", Method::Rnd).unwrap();
    assert_eq!(row.seed_bests.len(), 3);
    assert!(row.missing.is_empty());
}

#[test]
fn unfinished_seed_is_reported_missing() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = tiny(dir.path(), Method::NoModel, &[4]);
    c.train.total_steps = 128;
    run_experiment(&c).unwrap();
    fs::remove_file(dir.path().join("seed_4/summary.json")).unwrap();
    let table = MetricTable::from_dir(dir.path()).unwrap();
    let row = table.get("DoorKeyB6x6", Method::NoModel).unwrap();
    assert_eq!(row.mean_best, None);
    assert_eq!(row.missing, vec![4]);
}

#[test]
fn io_failure_aborts_only_that_seed() {
    let dir = tempfile::tempdir().unwrap();
    // A file where seed 2's directory should go.
    fs::write(dir.path().join("seed_2"), "blocker").unwrap();
    let mut c = tiny(dir.path(), Method::NoModel, &[1, 2]);
    c.train.total_steps = 128;
    let report = run_experiment(&c).unwrap();
    assert_eq!(report.runs.len(), 1);
    assert_eq!(report.failures.len(), 1);
    assert_eq!(report.failures[0].seed, 2);
    assert!(!report.is_success());
}

#[test]
fn invalid_config_stops_before_any_run() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = tiny(dir.path(), Method::NoveldMir, &[1]);
    c.rewards.k_m = 0.0;
    assert!(matches!(run_experiment(&c), Err(HarnessError::Invalid(_))));
    assert!(!dir.path().join("seed_1").exists());
}

#[test]
fn sweep_lays_out_cells_and_writes_the_grid() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = tiny(dir.path(), Method::NoModel, &[1]);
    c.train.total_steps = 128;
    let report = sweep(
        &c,
        &[Method::NoModel, Method::Noveld],
        &[(MapKind::DoorKeyB, 6)],
    )
    .unwrap();
    assert_eq!(report.runs.len(), 2);
    assert!(dir
        .path()
        .join("DoorKeyB6x6/noveld/seed_1/summary.json")
        .exists());
    let grid = fs::read_to_string(dir.path().join("metric.csv")).unwrap();
    let row = grid.lines().nth(1).unwrap();
    assert!(row.starts_with("DoorKeyB6x6,"));
    assert_eq!(row.split(',').filter(|c| !c.is_empty()).count(), 3);
}
