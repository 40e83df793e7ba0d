//! Goal-reaching quadrotor MDP.
//!
//! Each episode spawns the vehicle at rest inside a cube around the goal,
//! plans a minimum-time point-mass reference from the spawn to the goal and
//! rewards both direct objectives and tracking of that reference. The policy
//! acts at the control rate; the simulator runs several physics substeps
//! per action.

mod reward;
mod vec_env;

pub use reward::{compute_reward, RewardBreakdown, RewardConfig, RewardContext};
pub use vec_env::{VecEnv, VecStep};

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use thiserror::Error;

use crate::dynamics::{ActionBounds, CtbrAction, QuadParams, QuadState, Quadrotor, SimError};
use crate::math::wrap_angle;
use crate::pmm::{plan_state_to_state, PlanError, PlannerLimits, PmmSample, PmmTrajectory, PointState};

pub const OBS_DIM: usize = 23;
pub const ACT_DIM: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("step called on a finished episode")]
    EpisodeFinished,
    #[error("reset failed after {attempts} planning attempts: {source}")]
    ResetFailed { attempts: usize, source: PlanError },
    #[error("invalid environment config: {0}")]
    InvalidConfig(String),
}

/// Policy input: `[v(3), R(9, row-major), p - p_goal(3), w(3), heading error(1), previous action(4)]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation(pub [f64; OBS_DIM]);

impl Observation {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn velocity(&self) -> Vector3<f64> {
        Vector3::new(self.0[0], self.0[1], self.0[2])
    }

    pub fn rotation_row_major(&self) -> &[f64] {
        &self.0[3..12]
    }

    pub fn relative_position(&self) -> Vector3<f64> {
        Vector3::new(self.0[12], self.0[13], self.0[14])
    }

    pub fn body_rates(&self) -> Vector3<f64> {
        Vector3::new(self.0[15], self.0[16], self.0[17])
    }

    pub fn heading_error(&self) -> f64 {
        self.0[18]
    }

    pub fn previous_action(&self) -> [f64; 4] {
        [self.0[19], self.0[20], self.0[21], self.0[22]]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Goal {
    pub p: Vector3<f64>,
    pub heading: f64,
}

impl Goal {
    pub fn origin() -> Self {
        Self { p: Vector3::zeros(), heading: 0.0 }
    }
}

pub fn observe(s: &QuadState, goal: &Goal, prev_action: &CtbrAction) -> Observation {
    let r = s.rotation();
    let dp = s.p - goal.p;
    let a = prev_action.to_array();
    Observation([
        s.v.x,
        s.v.y,
        s.v.z,
        r[(0, 0)],
        r[(0, 1)],
        r[(0, 2)],
        r[(1, 0)],
        r[(1, 1)],
        r[(1, 2)],
        r[(2, 0)],
        r[(2, 1)],
        r[(2, 2)],
        dp.x,
        dp.y,
        dp.z,
        s.w.x,
        s.w.y,
        s.w.z,
        wrap_angle(s.yaw() - goal.heading),
        a[0],
        a[1],
        a[2],
        a[3],
    ])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeConfig {
    pub duration: f64,
    pub control_dt: f64,
    pub physics_dt: f64,
    /// Out-of-bounds box half-width as a multiple of the spawn half-width.
    pub bounds_inflation: f64,
    pub randomize: bool,
    pub mass_randomization: f64,
    pub inertia_randomization: f64,
    pub gravity_randomization: f64,
    pub max_reset_attempts: usize,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            duration: 5.0,
            control_dt: 0.01,
            physics_dt: 0.001,
            bounds_inflation: 1.5,
            randomize: true,
            mass_randomization: 0.3,
            inertia_randomization: 0.3,
            gravity_randomization: 0.0,
            max_reset_attempts: 10,
        }
    }
}

impl EpisodeConfig {
    pub fn substeps(&self) -> usize {
        (self.control_dt / self.physics_dt).round() as usize
    }

    pub fn max_steps(&self) -> usize {
        (self.duration / self.control_dt).round() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvConfig {
    pub episode: EpisodeConfig,
    pub reward: RewardConfig,
    pub action: ActionBounds,
    pub quad: QuadParams,
    pub planner: PlannerLimits,
    /// Spawn half-width per axis (m).
    pub range: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            episode: EpisodeConfig::default(),
            reward: RewardConfig::default(),
            action: ActionBounds::default(),
            quad: QuadParams::default(),
            planner: PlannerLimits::default(),
            range: 1.0,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        let e = &self.episode;
        let bad = |m: &str| Err(EnvError::InvalidConfig(m.to_string()));
        if !(e.physics_dt > 0.0 && e.control_dt > 0.0 && e.duration > 0.0) {
            return bad("time steps and duration must be positive");
        }
        let n = e.substeps();
        if n == 0 || (n as f64 * e.physics_dt - e.control_dt).abs() > 1e-9 {
            return bad("control period must be an integer multiple of the physics step");
        }
        if !(self.range > 0.0 && e.bounds_inflation >= 1.0) {
            return bad("spawn range must be positive and bounds inflation at least 1");
        }
        for f in [e.mass_randomization, e.inertia_randomization, e.gravity_randomization] {
            if !(0.0..1.0).contains(&f) {
                return bad("randomization fractions must lie in [0, 1)");
            }
        }
        if let Some(g) = self.reward.convergence_radius {
            if !(g > 0.0) {
                return bad("convergence radius must be positive");
            }
        }
        self.quad.validate().map_err(|e| EnvError::InvalidConfig(e.to_string()))?;
        self.planner.validate().map_err(|e| EnvError::InvalidConfig(e.to_string()))
    }

    pub fn convergence_radius(&self) -> f64 {
        self.reward.convergence_radius.unwrap_or(self.range)
    }

    pub fn bounds_half_width(&self) -> f64 {
        self.range * self.episode.bounds_inflation
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DoneReason {
    TimeLimit,
    OutOfBounds,
    Diverged,
}

impl DoneReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            DoneReason::TimeLimit => "time_limit",
            DoneReason::OutOfBounds => "out_of_bounds",
            DoneReason::Diverged => "diverged",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub reason: Option<DoneReason>,
    pub time: f64,
    pub reference: PmmSample,
    pub saturated: bool,
    /// The clamped action that was applied.
    pub applied: CtbrAction,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepResult {
    pub obs: Observation,
    pub reward: RewardBreakdown,
    pub done: bool,
    pub info: StepInfo,
}

/// Parameters drawn at reset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeSetup {
    pub start: Vector3<f64>,
    pub yaw: f64,
    pub goal: Goal,
    pub mass_factor: f64,
    pub inertia_factor: f64,
    pub gravity_factor: f64,
}

pub struct QuadEnv {
    cfg: EnvConfig,
    rng: ChaCha8Rng,
    quad: Quadrotor,
    state: QuadState,
    goal: Goal,
    plan: PmmTrajectory,
    steps: usize,
    prev_action: CtbrAction,
    done: Option<DoneReason>,
    setup: EpisodeSetup,
}

impl QuadEnv {
    /// Creates the environment and performs an initial reset.
    pub fn new(cfg: EnvConfig, seed: u64) -> Result<Self, EnvError> {
        cfg.validate()?;
        let setup =
            EpisodeSetup { start: Vector3::zeros(), yaw: 0.0, goal: Goal::origin(), mass_factor: 1.0, inertia_factor: 1.0, gravity_factor: 1.0 };
        let origin = PointState::at_rest(Vector3::zeros());
        let plan = plan_state_to_state(&origin, &origin, &cfg.planner).expect("validated limits");
        let mut env = Self {
            cfg,
            rng: ChaCha8Rng::seed_from_u64(seed),
            quad: Quadrotor::new(cfg.quad),
            state: QuadState::at_rest(Vector3::zeros(), 0.0, cfg.quad.hover_rotor_speed()),
            goal: Goal::origin(),
            plan,
            steps: 0,
            prev_action: CtbrAction::hover(),
            done: None,
            setup,
        };
        env.reset()?;
        Ok(env)
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    /// Changes the spawn half-width for subsequent resets.
    pub fn set_range(&mut self, range: f64) {
        self.cfg.range = range;
    }

    pub fn reseed(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    pub fn state(&self) -> &QuadState {
        &self.state
    }

    pub fn goal(&self) -> &Goal {
        &self.goal
    }

    pub fn plan(&self) -> &PmmTrajectory {
        &self.plan
    }

    pub fn setup(&self) -> &EpisodeSetup {
        &self.setup
    }

    pub fn plant(&self) -> &QuadParams {
        &self.quad.plant
    }

    pub fn time(&self) -> f64 {
        self.steps as f64 * self.cfg.episode.control_dt
    }

    pub fn is_done(&self) -> bool {
        self.done.is_some()
    }

    fn draw_setup(&mut self) -> EpisodeSetup {
        let r = self.cfg.range;
        let e = self.cfg.episode;
        let rng = &mut self.rng;
        let start = Vector3::new(rng.random_range(-r..=r), rng.random_range(-r..=r), rng.random_range(-r..=r));
        let yaw = rng.random_range(-PI..=PI);
        let heading = rng.random_range(-PI..=PI);
        let mut factor = |frac: f64| {
            let u: f64 = rng.random_range(-1.0..=1.0);
            if e.randomize {
                1.0 + frac * u
            } else {
                1.0
            }
        };
        let mass_factor = factor(e.mass_randomization);
        let inertia_factor = factor(e.inertia_randomization);
        let gravity_factor = factor(e.gravity_randomization);
        EpisodeSetup { start, yaw, goal: Goal { p: Vector3::zeros(), heading }, mass_factor, inertia_factor, gravity_factor }
    }

    /// Starts a new episode from the internal random stream.
    pub fn reset(&mut self) -> Result<Observation, EnvError> {
        let attempts = self.cfg.episode.max_reset_attempts.max(1);
        let mut last_err = None;
        for _ in 0..attempts {
            let setup = self.draw_setup();
            match self.reset_to(setup) {
                Ok(obs) => return Ok(obs),
                Err(EnvError::ResetFailed { source, .. }) => last_err = Some(source),
                Err(e) => return Err(e),
            }
        }
        Err(EnvError::ResetFailed { attempts, source: last_err.expect("at least one attempt") })
    }

    /// Starts a new episode from explicit initial conditions.
    pub fn reset_to(&mut self, setup: EpisodeSetup) -> Result<Observation, EnvError> {
        let plan = plan_state_to_state(&PointState::at_rest(setup.start), &PointState::at_rest(setup.goal.p), &self.cfg.planner)
            .map_err(|source| EnvError::ResetFailed { attempts: 1, source })?;
        let mut plant = self.cfg.quad;
        plant.mass *= setup.mass_factor;
        plant.inertia *= setup.inertia_factor;
        plant.gravity *= setup.gravity_factor;
        self.quad = Quadrotor { plant, ..Quadrotor::new(self.cfg.quad) };
        self.state = QuadState::at_rest(setup.start, setup.yaw, plant.hover_rotor_speed());
        self.goal = setup.goal;
        self.plan = plan;
        self.steps = 0;
        self.prev_action = CtbrAction::hover();
        self.done = None;
        self.setup = setup;
        Ok(self.observe())
    }

    pub fn observe(&self) -> Observation {
        observe(&self.state, &self.goal, &self.prev_action)
    }

    /// Retargets the running episode (used for sequential waypoint goals).
    pub fn set_goal(&mut self, goal: Goal) {
        self.goal = goal;
    }

    fn out_of_bounds(&self) -> bool {
        let half = self.cfg.bounds_half_width();
        (self.state.p - self.goal.p).iter().any(|d| d.abs() > half)
    }

    pub fn step(&mut self, action: &CtbrAction) -> Result<StepResult, EnvError> {
        if self.done.is_some() {
            return Err(EnvError::EpisodeFinished);
        }
        let e = self.cfg.episode;
        let applied = self.cfg.action.clamp(action);
        let prev = self.state;
        let mut saturated = false;
        let mut diverged = false;
        for _ in 0..e.substeps() {
            match self.quad.integrate_step(&self.state, &applied, e.physics_dt) {
                Ok((s, info)) => {
                    self.state = s;
                    saturated |= info.saturated;
                }
                Err(SimError::NumericalDivergence) | Err(SimError::InvalidParams(_)) => {
                    diverged = true;
                    break;
                }
            }
        }
        self.steps += 1;
        let time = self.time();
        let reference = self.plan.sample(time);
        let ctx = RewardContext { radius: self.cfg.convergence_radius(), control_dt: e.control_dt };
        let mut reward = compute_reward(&self.state, &prev, &applied, &self.prev_action, &self.goal, &reference, &self.cfg.reward, &ctx);

        let reason = if diverged {
            Some(DoneReason::Diverged)
        } else if self.out_of_bounds() {
            Some(DoneReason::OutOfBounds)
        } else if self.steps >= e.max_steps() {
            Some(DoneReason::TimeLimit)
        } else {
            None
        };
        if matches!(reason, Some(DoneReason::Diverged | DoneReason::OutOfBounds)) {
            reward = reward.with_crash(self.cfg.reward.crash_penalty);
        }
        self.done = reason;
        self.prev_action = applied;
        Ok(StepResult { obs: self.observe(), reward, done: reason.is_some(), info: StepInfo { reason, time, reference, saturated, applied } })
    }
}
