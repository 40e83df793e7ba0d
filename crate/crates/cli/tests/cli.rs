use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TINY: &[&str] = &[
    "train.n_envs=2",
    "train.steps_per_env=64",
    "train.minibatch=64",
    "train.epochs=1",
    "train.hidden_size=16",
    "train.total_steps=256",
    "train.checkpoint_every=1",
    "curriculum.eval_episodes=4",
    "eval.episodes=5",
];

fn quadlab(args: &[&str], overrides: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_quadlab"));
    cmd.env_remove("QUADLAB_CONFIG_DIR");
    for o in overrides {
        cmd.args(["--set", o]);
    }
    cmd.args(args).output().expect("binary runs")
}

fn ok(out: &Output) {
    assert!(out.status.success(), "exit {:?}\n{}", out.status.code(), String::from_utf8_lossy(&out.stderr));
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn waypoints(dir: &Path) -> PathBuf {
    let w = dir.join("w.txt");
    fs::write(&w, "0 0 0\n6 -2 1\n").unwrap();
    w
}

#[test]
fn plan_writes_sampled_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let w = waypoints(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&quadlab(&["plan", "--waypoints", path(&w), "--out", path(&a)], &[]));
    ok(&quadlab(&["plan", "--waypoints", path(&w), "--out", path(&b)], &[]));
    let text = fs::read_to_string(a.join("trajectory.csv")).unwrap();
    assert_eq!(text, fs::read_to_string(b.join("trajectory.csv")).unwrap());
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "t,px,py,pz,vx,vy,vz,ax,ay,az,segment");
    let rows: Vec<&str> = lines.collect();
    let last: Vec<f64> = rows.last().unwrap().split(',').map(|x| x.parse().unwrap()).collect();
    let duration: f64 = fs::read_to_string(a.join("segments.csv")).unwrap().lines().nth(1).unwrap().split(',').nth(2).unwrap().parse().unwrap();
    assert_eq!(rows.len(), (duration * 100.0).floor() as usize + 1);
    assert!((last[1] - 6.0).abs() < 0.01 && (last[2] + 2.0).abs() < 0.01);
    assert!(a.join("config.resolved").exists());
}

#[test]
fn malformed_waypoints_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let w = dir.path().join("bad.txt");
    fs::write(&w, "0 0 0\n1 2\n").unwrap();
    let out = quadlab(&["plan", "--waypoints", path(&w), "--out", path(dir.path())], &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.txt:2:"));
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let w = waypoints(dir.path());
    let out_dir = dir.path().join("o");
    for bad in ["nope.key=1", "train.gamma=abc", "train.gamma=1.5"] {
        let out = quadlab(&["plan", "--waypoints", path(&w), "--out", path(&out_dir)], &[bad]);
        assert_eq!(out.status.code(), Some(2), "{bad}");
    }
    let conf = dir.path().join("bad.conf");
    fs::write(&conf, "train.seed = 1\nthis line has no equals\n").unwrap();
    let out = quadlab(&["--config", path(&conf), "plan", "--waypoints", path(&w), "--out", path(&out_dir)], &[]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let conf_dir = dir.path().join("conf");
    fs::create_dir(&conf_dir).unwrap();
    fs::write(conf_dir.join("quadlab.conf"), "planner.ax_max = 3.5\n").unwrap();
    fs::write(conf_dir.join("other.conf"), "planner.ax_max = 2.5\n").unwrap();
    let w = waypoints(dir.path());
    let out_dir = dir.path().join("o");
    let run = |extra: &[&str]| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_quadlab"));
        cmd.env("QUADLAB_CONFIG_DIR", &conf_dir).args(extra).args(["plan", "--waypoints", path(&w), "--out", path(&out_dir)]);
        let out = cmd.output().unwrap();
        ok(&out);
        fs::read_to_string(out_dir.join("config.resolved")).unwrap()
    };
    assert!(run(&[]).contains("planner.ax_max = 3.5\n"));
    assert!(run(&["--config", "other.conf"]).contains("planner.ax_max = 2.5\n"));
    assert!(run(&["--config", "other.conf", "--set", "planner.ax_max=1.5"]).contains("planner.ax_max = 1.5\n"));
}

#[test]
fn compare_needs_a_policy_unless_baseline_only() {
    let dir = tempfile::tempdir().unwrap();
    let out = quadlab(&["compare", "--out", path(dir.path())], &[]);
    assert_eq!(out.status.code(), Some(3));
    let w = dir.path().join("w.txt");
    fs::write(&w, "0 0 0\n8 0 0\n8 6 0\n").unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&quadlab(&["compare", "--baseline-only", "--waypoints", path(&w), "--out", path(&a)], &[]));
    ok(&quadlab(&["compare", "--baseline-only", "--waypoints", path(&w), "--out", path(&b)], &[]));
    let metrics = fs::read_to_string(a.join("metrics.csv")).unwrap();
    assert_eq!(metrics, fs::read_to_string(b.join("metrics.csv")).unwrap());
    assert!(metrics.starts_with("trajectory,method,flight_time,arrived,max_speed,planned_time,rms_error,velocity_scale\n"));
    assert!(a.join("trace_w_pmm_tracker.csv").exists());
}

#[test]
fn missing_checkpoint_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = quadlab(&["evaluate", "--policy", path(&dir.path().join("none.qlck")), "--out", path(dir.path())], &[]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn train_evaluate_simulate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&quadlab(&["train", "--out", path(&a)], TINY));
    ok(&quadlab(&["train", "--out", path(&b)], TINY));
    let metrics = fs::read_to_string(a.join("metrics.csv")).unwrap();
    assert_eq!(metrics, fs::read_to_string(b.join("metrics.csv")).unwrap());
    let header = metrics.lines().next().unwrap();
    assert!(header.contains("mean_reward") && header.contains("mean_episode_length"));
    assert_eq!(metrics.lines().count(), 3);
    assert_eq!(fs::read(a.join("checkpoint.qlck")).unwrap(), fs::read(b.join("checkpoint.qlck")).unwrap());

    let ckpt = a.join("checkpoint.qlck");
    for out in [&a, &b] {
        ok(&quadlab(&["evaluate", "--policy", path(&ckpt), "--out", path(&out.join("eval"))], TINY));
        ok(&quadlab(&["simulate", "--policy", path(&ckpt), "--out", path(&out.join("sim"))], TINY));
    }
    for f in ["eval/eval.csv", "eval/summary.csv", "sim/episode.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }

    let noisy = |dir: &Path| {
        ok(&quadlab(&["evaluate", "--stochastic", "--policy", path(&ckpt), "--out", path(dir)], TINY));
        fs::read(dir.join("eval.csv")).unwrap()
    };
    let sampled = noisy(&a.join("noisy"));
    assert_eq!(sampled, noisy(&b.join("noisy")));
    assert_ne!(sampled, fs::read(a.join("eval/eval.csv")).unwrap());

    // Aggregate RMSE is the root mean square of the per-episode distances.
    let eval = fs::read_to_string(a.join("eval/eval.csv")).unwrap();
    let d: Vec<f64> = eval.lines().skip(1).map(|l| l.split(',').nth(7).unwrap().parse().unwrap()).collect();
    assert_eq!(d.len(), 5);
    let rmse = (d.iter().map(|x| x * x).sum::<f64>() / d.len() as f64).sqrt();
    let summary = fs::read_to_string(a.join("eval/summary.csv")).unwrap();
    let reported: f64 = summary.lines().nth(1).unwrap().split(',').nth(2).unwrap().parse().unwrap();
    assert!((reported - rmse).abs() < 1e-12);
}

#[test]
fn resume_continues_iteration_numbering() {
    let dir = tempfile::tempdir().unwrap();
    let split = dir.path().join("split");
    let mut long: Vec<&str> = TINY.to_vec();
    long.push("train.total_steps=512");
    ok(&quadlab(&["train", "--out", path(&split)], TINY));
    let first = fs::read_to_string(split.join("metrics.csv")).unwrap();
    let ckpt = split.join("checkpoint.qlck");
    ok(&quadlab(&["train", "--resume", path(&ckpt), "--out", path(&split)], &long));
    let both = fs::read_to_string(split.join("metrics.csv")).unwrap();
    assert!(both.starts_with(&first));
    let cols: Vec<(String, String)> = both
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].to_string(), f[1].to_string())
        })
        .collect();
    let want: Vec<(String, String)> = (0..4).map(|i| (i.to_string(), (128 * (i + 1)).to_string())).collect();
    assert_eq!(cols, want);

    let mut other: Vec<&str> = long.clone();
    other.push("train.gamma=0.9");
    let out = quadlab(&["train", "--resume", path(&ckpt), "--out", path(&dir.path().join("x"))], &other);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn no_curriculum_starts_at_widest_range() {
    let dir = tempfile::tempdir().unwrap();
    ok(&quadlab(&["train", "--no-curriculum", "--out", path(dir.path())], TINY));
    let metrics = fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    let first: Vec<&str> = metrics.lines().nth(1).unwrap().split(',').collect();
    assert_eq!((first[2], first[3]), ("4", "20"));
}

#[test]
fn ablate_writes_both_variants_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    ok(&quadlab(&["ablate", "--seeds", "3,4", "--out", path(dir.path())], TINY));
    for seed in [3, 4] {
        for variant in ["curriculum", "no_curriculum"] {
            let sub = dir.path().join(format!("{variant}_s{seed}"));
            assert!(sub.join("metrics.csv").exists() && sub.join("config.resolved").exists());
            assert!(fs::read_to_string(sub.join("config.resolved")).unwrap().contains(&format!("train.seed = {seed}\n")));
        }
    }
    let table = fs::read_to_string(dir.path().join("ablation.csv")).unwrap();
    assert_eq!(table.lines().count(), 5);
    assert!(table.starts_with("seed,variant,final_stage,eval_stage,rmse,reached_rate\n"));
}
