use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use nalgebra::Vector3;
use quadlab::config::RunConfig;
use quadlab::curriculum::{evaluate_promotion, CurriculumConfig, CurriculumState, PromotionCheck};
use quadlab::dynamics::CtbrAction;
use quadlab::env::{EnvConfig, QuadEnv, RewardBreakdown};
use quadlab::io::{read_waypoints, write_csv, write_text, CsvSink};
use quadlab::pmm::PmmPath;
use quadlab::ppo::{Checkpoint, IterationMetrics, Policy, PolicyRunner, Trainer, TrainerState};
use quadlab::tracker::{run_comparison, track_step, ComparisonConfig, FlightMetrics, TraceRow, TrackError, WaypointSet};

use crate::{Cli, Command, CONFIG_DIR_ENV};

/// Error carrying its exit-code class.
#[derive(Debug)]
pub enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Runtime(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(e) => write!(f, "config: {e:#}"),
            Failure::Runtime(e) => write!(f, "{e:#}"),
        }
    }
}

type Result<T> = std::result::Result<T, Failure>;

trait Classify<T> {
    fn config(self) -> Result<T>;
    fn runtime(self) -> Result<T>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for std::result::Result<T, E> {
    fn config(self) -> Result<T> {
        self.map_err(|e| Failure::Config(e.into()))
    }
    fn runtime(self) -> Result<T> {
        self.map_err(|e| Failure::Runtime(e.into()))
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let mut cfg = load_config(cli)?;
    if let Command::Train { no_curriculum: true, .. } = cli.command {
        cfg.curriculum.start_stage = 4;
        cfg.curriculum.max_stage = 4;
    }
    if let Command::Compare { velocity_scale: Some(k), .. } = cli.command {
        cfg.compare.velocity_scale = k;
    }
    cfg.validate().config()?;
    std::fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display())).runtime()?;
    write_text(&cli.out.join("config.resolved"), &cfg.render()).runtime()?;

    match &cli.command {
        Command::Plan { waypoints, rate } => plan(&cfg, waypoints, *rate, &cli.out),
        Command::Simulate { policy } => simulate(&cfg, policy.as_deref(), &cli.out),
        Command::Train { resume, .. } => train(&cfg, resume.as_deref(), &cli.out).map(|_| ()),
        Command::Evaluate { policy, episodes, stage, stochastic } => evaluate(&cfg, policy, *episodes, *stage, *stochastic, &cli.out),
        Command::Compare { policy, baseline_only, waypoints, .. } => compare(&cfg, policy.as_deref(), *baseline_only, waypoints.as_deref(), &cli.out),
        Command::Ablate { seeds } => ablate(&cfg, seeds, &cli.out),
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    let dir = std::env::var_os(CONFIG_DIR_ENV).map(PathBuf::from);
    let file = match (&cli.config, &dir) {
        (Some(p), Some(d)) if p.is_relative() && !p.exists() => Some(d.join(p)),
        (Some(p), _) => Some(p.clone()),
        (None, Some(d)) => Some(d.join("quadlab.conf")).filter(|p| p.exists()),
        (None, None) => None,
    };
    if let Some(path) = file {
        let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display())).config()?;
        cfg.apply_text(&text, &path.display().to_string()).config()?;
    }
    for kv in &cli.overrides {
        cfg.apply_override(kv).config()?;
    }
    if let Some(seed) = cli.seed {
        cfg.train.seed = seed;
        cfg.eval.seed = seed;
    }
    Ok(cfg)
}

fn fmt_vec(v: &Vector3<f64>) -> [String; 3] {
    [v.x.to_string(), v.y.to_string(), v.z.to_string()]
}

fn plan(cfg: &RunConfig, waypoints: &Path, rate: f64, out: &Path) -> Result<()> {
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(Failure::Config(anyhow!("--rate must be positive")));
    }
    let pts = read_waypoints(waypoints).config()?;
    let path = PmmPath::through(&pts, &cfg.env.planner).runtime()?;
    let dt = 1.0 / rate;
    let n = (path.duration() * rate + 1e-9).floor() as usize;
    let rows = (0..=n).map(|k| {
        let t = k as f64 * dt;
        let s = path.sample(t);
        let seg = path.offsets().partition_point(|&o| o <= t).max(1);
        let mut r = vec![t.to_string()];
        r.extend(fmt_vec(&s.p));
        r.extend(fmt_vec(&s.v));
        r.extend(fmt_vec(&s.a));
        r.push(seg.to_string());
        r
    });
    let header = ["t", "px", "py", "pz", "vx", "vy", "vz", "ax", "ay", "az", "segment"];
    write_csv(&out.join("trajectory.csv"), &header, rows).runtime()?;
    let segs = path.segments().iter().enumerate().map(|(i, s)| vec![(i + 1).to_string(), path.offsets()[i].to_string(), s.duration.to_string()]);
    write_csv(&out.join("segments.csv"), &["segment", "start", "duration"], segs).runtime()?;
    eprintln!("planned {} segments, total {:.3} s", path.segments().len(), path.duration());
    Ok(())
}

fn load_policy(cfg: &RunConfig, path: &Path) -> Result<PolicyRunner> {
    let ckpt = Checkpoint::load(path).with_context(|| format!("loading checkpoint {}", path.display())).runtime()?;
    Ok(PolicyRunner::new(ckpt.state.net, ckpt.state.obs_norm, cfg.env.action))
}

fn eval_env(cfg: &RunConfig, stage: usize) -> EnvConfig {
    let mut ec = cfg.env;
    ec.range = cfg.curriculum.range(stage);
    ec.episode.randomize = cfg.curriculum.eval_randomize;
    ec
}

fn simulate(cfg: &RunConfig, policy: Option<&Path>, out: &Path) -> Result<()> {
    let policy = policy.map(|p| load_policy(cfg, p)).transpose()?;
    let mut env = QuadEnv::new(eval_env(cfg, cfg.eval.stage), cfg.eval.seed).runtime()?;
    let mut header: Vec<&str> = vec!["t", "px", "py", "pz", "qw", "qx", "qy", "qz", "vx", "vy", "vz", "wx", "wy", "wz"];
    header.extend(["thrust", "wx_cmd", "wy_cmd", "wz_cmd"]);
    header.extend(RewardBreakdown::NAMES);
    header.extend(["ref_px", "ref_py", "ref_pz", "ref_vx", "ref_vy", "ref_vz", "done"]);
    let mut sink = CsvSink::create(&out.join("episode.csv"), &header).runtime()?;
    loop {
        let s = *env.state();
        let action: CtbrAction = match &policy {
            Some(p) => p.act(&[env.observe()])[0],
            None => track_step(&s, &env.plan().sample(env.time()), env.goal().heading, &cfg.compare.gains, &cfg.env.action),
        };
        let r = env.step(&action).runtime()?;
        let s = env.state();
        let mut row = vec![r.info.time.to_string()];
        row.extend(fmt_vec(&s.p));
        row.extend([s.q.w, s.q.i, s.q.j, s.q.k].map(|x| x.to_string()));
        row.extend(fmt_vec(&s.v));
        row.extend(fmt_vec(&s.w));
        row.extend(r.info.applied.to_array().map(|x| x.to_string()));
        row.extend(r.reward.to_array().map(|x| x.to_string()));
        row.extend(fmt_vec(&r.info.reference.p));
        row.extend(fmt_vec(&r.info.reference.v));
        row.push(r.info.reason.map_or("", |d| d.as_str()).to_string());
        sink.row(row).runtime()?;
        if r.done {
            break;
        }
    }
    sink.flush().runtime()
}

/// Trains into `out`, resuming from `resume` when given; returns the final state.
pub fn train(cfg: &RunConfig, resume: Option<&Path>, out: &Path) -> Result<TrainerState> {
    let hash = cfg.training_hash();
    let metrics_path = out.join("metrics.csv");
    let mut trainer = match resume {
        Some(path) => {
            let ckpt = Checkpoint::load(path).with_context(|| format!("loading checkpoint {}", path.display())).runtime()?;
            if ckpt.config_hash != hash {
                return Err(Failure::Config(anyhow!("checkpoint {} was written with a different training configuration", path.display())));
            }
            Trainer::from_state(cfg.train, cfg.env, cfg.curriculum, ckpt.state).config()?
        }
        None => Trainer::new(cfg.train, cfg.env, cfg.curriculum).config()?,
    };
    let mut sink = if resume.is_some() && metrics_path.exists() {
        CsvSink::append(&metrics_path)
    } else {
        CsvSink::create(&metrics_path, &IterationMetrics::HEADER)
    }
    .runtime()?;
    let save = |t: &Trainer, name: &str| {
        Checkpoint { config_hash: hash, state: t.state().clone() }.save(&out.join(name)).with_context(|| format!("writing {name}")).runtime()
    };
    while !trainer.is_finished() {
        let m = trainer.iterate().runtime()?;
        sink.row(m.fields()).runtime()?;
        sink.flush().runtime()?;
        eprintln!(
            "iter {} steps {} stage {} reward {:.2} len {:.1}{}",
            m.iteration,
            m.env_steps,
            m.stage,
            m.mean_reward,
            m.mean_episode_length,
            m.rmse.map(|r| format!(" rmse {r:.3}")).unwrap_or_default()
        );
        if m.promoted {
            save(&trainer, &format!("stage{}.qlck", trainer.state().stage))?;
        }
        let every = cfg.train.checkpoint_every;
        if every > 0 && trainer.state().iteration % every == 0 {
            save(&trainer, "checkpoint.qlck")?;
        }
    }
    save(&trainer, "checkpoint.qlck")?;
    Ok(trainer.into_state())
}

fn evaluation(cfg: &RunConfig, policy: &PolicyRunner, episodes: usize, stage: usize) -> Result<PromotionCheck> {
    let cur = CurriculumConfig { eval_episodes: episodes, ..cfg.curriculum };
    evaluate_promotion(policy, &cfg.env, &cur, &CurriculumState::at_stage(stage), cfg.eval.seed, cfg.train.exec).runtime()
}

fn evaluate(cfg: &RunConfig, policy: &Path, episodes: Option<usize>, stage: Option<usize>, stochastic: bool, out: &Path) -> Result<()> {
    let episodes = episodes.unwrap_or(cfg.eval.episodes);
    let stage = stage.unwrap_or(cfg.eval.stage);
    if episodes == 0 || !(1..=4).contains(&stage) {
        return Err(Failure::Config(anyhow!("episodes must be positive and stage in 1..=4")));
    }
    let mut runner = load_policy(cfg, policy)?;
    if stochastic {
        runner = runner.stochastic(cfg.eval.seed);
    }
    let check = evaluation(cfg, &runner, episodes, stage)?;
    let g = eval_env(cfg, stage).convergence_radius();
    let header = [
        "episode",
        "start_x",
        "start_y",
        "start_z",
        "final_x",
        "final_y",
        "final_z",
        "distance",
        "final_speed",
        "time",
        "reason",
        "return",
        "success",
        "reached",
    ];
    let rows = check.endpoints.iter().enumerate().map(|(i, e)| {
        let mut r = vec![i.to_string()];
        r.extend(fmt_vec(&e.start));
        r.extend(fmt_vec(&e.final_p));
        let d = e.distance();
        r.extend([d.to_string(), e.final_speed.to_string(), e.time.to_string(), e.reason.as_str().to_string(), e.total_reward.to_string()]);
        r.push(u8::from(d < g).to_string());
        r.push(u8::from(d < cfg.eval.success_radius).to_string());
        r
    });
    write_csv(&out.join("eval.csv"), &header, rows).runtime()?;
    let n = check.endpoints.len() as f64;
    let within_g = check.endpoints.iter().filter(|e| e.distance() < g).count() as f64 / n;
    let reached = check.endpoints.iter().filter(|e| e.distance() < cfg.eval.success_radius).count() as f64 / n;
    let summary = [vec![
        stage.to_string(),
        check.endpoints.len().to_string(),
        check.rmse.to_string(),
        within_g.to_string(),
        reached.to_string(),
        cfg.eval.success_radius.to_string(),
    ]];
    write_csv(&out.join("summary.csv"), &["stage", "episodes", "rmse", "success_rate", "reached_rate", "success_radius"], summary).runtime()?;
    eprintln!("rmse {:.4} m, {:.0}% within {} m", check.rmse, 100.0 * reached, cfg.eval.success_radius);
    Ok(())
}

fn comparison_config(cfg: &RunConfig) -> ComparisonConfig {
    let mut c = cfg.compare;
    c.sim.quad = cfg.env.quad;
    c.sim.bounds = cfg.env.action;
    c.sim.control_dt = cfg.env.episode.control_dt;
    c.sim.physics_dt = cfg.env.episode.physics_dt;
    c
}

pub const METRICS_HEADER: [&str; 8] = ["trajectory", "method", "flight_time", "arrived", "max_speed", "planned_time", "rms_error", "velocity_scale"];

fn metrics_row(course: &str, method: &str, m: &FlightMetrics, scale: f64) -> Vec<String> {
    vec![
        course.to_string(),
        method.to_string(),
        m.flight_time.to_string(),
        u8::from(m.arrived).to_string(),
        m.max_speed.to_string(),
        m.planned_time.to_string(),
        m.rms_error.to_string(),
        scale.to_string(),
    ]
}

fn compare(cfg: &RunConfig, policy: Option<&Path>, baseline_only: bool, waypoints: Option<&Path>, out: &Path) -> Result<()> {
    let runner = match (policy, baseline_only) {
        (Some(p), _) => Some(load_policy(cfg, p)?),
        (None, true) => None,
        (None, false) => return Err(Failure::Runtime(TrackError::MissingCheckpoint.into())),
    };
    let courses: Vec<(String, Vec<Vector3<f64>>)> = match waypoints {
        Some(path) => {
            let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("waypoints").to_string();
            vec![(name, read_waypoints(path).config()?)]
        }
        None => WaypointSet::ALL.iter().map(|w| (w.name().to_string(), w.points())).collect(),
    };
    let cc = comparison_config(cfg);
    let mut rows = Vec::new();
    for (name, pts) in &courses {
        let runs = run_comparison(pts, runner.as_ref().map(|r| r as &dyn Policy), &cc).runtime()?;
        for run in runs {
            rows.push(metrics_row(name, run.method, &run.flight.metrics, cc.velocity_scale));
            let trace = run.flight.trace.iter().map(TraceRow::fields);
            write_csv(&out.join(format!("trace_{name}_{}.csv", run.method)), &TraceRow::HEADER, trace).runtime()?;
        }
    }
    for r in &rows {
        eprintln!("{:<12} {:<12} flight {:>8} s  max speed {:>8} m/s", r[0], r[1], short(&r[2]), short(&r[4]));
    }
    write_csv(&out.join("metrics.csv"), &METRICS_HEADER, rows).runtime()
}

fn short(s: &str) -> String {
    s.parse::<f64>().map(|x| format!("{x:.3}")).unwrap_or_else(|_| s.to_string())
}

fn ablate(cfg: &RunConfig, seeds: &[u64], out: &Path) -> Result<()> {
    if seeds.is_empty() {
        return Err(Failure::Config(anyhow!("--seeds needs at least one seed")));
    }
    let mut rows = Vec::new();
    for &seed in seeds {
        for (variant, curriculum) in
            [("curriculum", cfg.curriculum), ("no_curriculum", CurriculumConfig { start_stage: 4, max_stage: 4, ..cfg.curriculum })]
        {
            let mut run_cfg = *cfg;
            run_cfg.train.seed = seed;
            run_cfg.curriculum = curriculum;
            let dir = out.join(format!("{variant}_s{seed}"));
            std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display())).runtime()?;
            write_text(&dir.join("config.resolved"), &run_cfg.render()).runtime()?;
            let state = train(&run_cfg, None, &dir)?;
            let runner = PolicyRunner::new(state.net, state.obs_norm, cfg.env.action);
            let check = evaluation(cfg, &runner, cfg.eval.episodes, cfg.eval.stage)?;
            let reached = check.endpoints.iter().filter(|e| e.distance() < cfg.eval.success_radius).count() as f64 / check.endpoints.len() as f64;
            rows.push(vec![
                seed.to_string(),
                variant.to_string(),
                state.stage.to_string(),
                cfg.eval.stage.to_string(),
                check.rmse.to_string(),
                reached.to_string(),
            ]);
        }
    }
    write_csv(&out.join("ablation.csv"), &["seed", "variant", "final_stage", "eval_stage", "rmse", "reached_rate"], rows).runtime()
}
