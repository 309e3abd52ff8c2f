use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn mirlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mirlab"))
        .args(args)
        .env("MIRLAB_THREADS", "1")
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, extra: &str) -> String {
    let path = dir.join("exp.cfg");
    let text = format!(
        "# tiny budget\nseeds = 1\noutput_dir = {}\ntrain.horizon = 32\ntrain.num_envs = 4\n\
         train.total_steps = 256\nenv.max_steps = 24\neval_window = 5\nnovelty.disc_pairs = 32\n{extra}",
        dir.join("out").display()
    );
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn train_then_metric_then_render() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "method = deir_mir\n");
    let out = mirlab(&["train", &cfg]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(stdout(&out)
        .starts_with("map,no_model,rnd,noveld,noveld_mir,deir,deir_mir\nDoorKeyB6x6,,,,,,"));

    let out_dir = dir.path().join("out");
    let m = mirlab(&["metric", out_dir.to_str().unwrap()]);
    assert!(m.status.success());
    assert_eq!(stdout(&m).lines().count(), 2);
    let d = mirlab(&["metric", "--details", out_dir.to_str().unwrap()]);
    assert!(stdout(&d).contains("DoorKeyB6x6,deir_mir,1,"));

    let replay = out_dir.join("seed_1/best_episode.replay");
    let r = mirlab(&["render", replay.to_str().unwrap()]);
    assert!(r.status.success());
    assert!(stdout(&r).contains("team reward:"));
}

#[test]
fn set_overrides_file_entries() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "method = rnd\n");
    let out = mirlab(&[
        "train",
        &cfg,
        "--set",
        "method=no_model",
        "--set",
        "seeds=2",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let summary = fs::read_to_string(dir.path().join("out/seed_2/summary.json")).unwrap();
    assert!(summary.contains("\"no_model\""));
}

#[test]
fn sweep_fills_the_requested_cells() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out = mirlab(&[
        "sweep",
        &cfg,
        "--methods",
        "no_model,noveld_mir",
        "--maps",
        "DoorKeyB6x6",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let grid = fs::read_to_string(dir.path().join("out/metric.csv")).unwrap();
    assert_eq!(grid, stdout(&out));
    assert!(dir
        .path()
        .join("out/DoorKeyB6x6/noveld_mir/seed_1/train_log.csv")
        .exists());
}

#[test]
fn bad_inputs_fail_with_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "rewards.k_X = 1\n");
    let out = mirlab(&["train", &cfg]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 10"));

    let bad = dir.path().join("bad.replay");
    fs::write(&bad, "DoorKeyB,6,2,1,144\n0,1\nx,1\n").unwrap();
    let r = mirlab(&["render", bad.to_str().unwrap()]);
    assert!(!r.status.success());
    assert!(String::from_utf8_lossy(&r.stderr).contains("line 3"));

    let cfg = write_config(dir.path(), "");
    let s = mirlab(&["sweep", &cfg, "--methods", "ngu", "--maps", "DoorKeyB6x6"]);
    assert!(!s.status.success());
    assert!(
        !mirlab(&["metric", dir.path().join("nothing").to_str().unwrap()])
            .status
            .success()
    );
}

#[test]
fn selftest_and_defaults() {
    let s = mirlab(&["selftest"]);
    assert!(s.status.success(), "{}", stdout(&s));
    assert!(stdout(&s).lines().all(|l| l.starts_with("pass")));
    let d = mirlab(&["defaults"]);
    assert!(stdout(&d).contains("rewards.k_M = 0.5"));
}
