//! Spawn-range schedule and the endpoint-RMSE promotion rule.

use nalgebra::Vector3;

use crate::env::{DoneReason, EnvConfig, EnvError, QuadEnv};
use crate::math::mix_seed;
use crate::par::{self, Exec};
use crate::ppo::Policy;

/// Spawn half-widths (m) of stages 1 to 4.
pub const STAGE_RANGES: [f64; 4] = [1.0, 5.0, 10.0, 20.0];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurriculumConfig {
    pub ranges: [f64; 4],
    /// Highest reachable stage (1-based).
    pub max_stage: usize,
    /// Stage at iteration 0.
    pub start_stage: usize,
    /// Promote when the endpoint RMSE is strictly below this (m).
    pub threshold: f64,
    pub eval_episodes: usize,
    /// Run the promotion check every this many iterations.
    pub eval_interval: u64,
    /// Keep mass and inertia randomization on during promotion rollouts.
    pub eval_randomize: bool,
}

impl Default for CurriculumConfig {
    fn default() -> Self {
        Self { ranges: STAGE_RANGES, max_stage: 4, start_stage: 1, threshold: 2.0, eval_episodes: 100, eval_interval: 1, eval_randomize: false }
    }
}

impl CurriculumConfig {
    /// Training directly at the widest range with no promotions.
    pub fn disabled() -> Self {
        Self { start_stage: 4, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(1..=4).contains(&self.max_stage) || !(1..=self.max_stage).contains(&self.start_stage) {
            return Err("curriculum stages must satisfy 1 <= start_stage <= max_stage <= 4".into());
        }
        if self.ranges.iter().any(|r| !(*r > 0.0)) || self.ranges.windows(2).any(|w| w[1] < w[0]) {
            return Err("stage ranges must be positive and nondecreasing".into());
        }
        if self.eval_episodes == 0 || self.eval_interval == 0 {
            return Err("evaluation episodes and interval must be positive".into());
        }
        if !(self.threshold > 0.0) {
            return Err("promotion threshold must be positive".into());
        }
        Ok(())
    }

    pub fn range(&self, stage: usize) -> f64 {
        self.ranges[stage - 1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CurriculumState {
    stage: usize,
}

impl CurriculumState {
    pub fn new(cfg: &CurriculumConfig) -> Self {
        Self { stage: cfg.start_stage }
    }

    /// Restores a saved stage.
    pub fn at_stage(stage: usize) -> Self {
        Self { stage }
    }

    pub fn stage(&self) -> usize {
        self.stage
    }

    pub fn range(&self, cfg: &CurriculumConfig) -> f64 {
        cfg.range(self.stage)
    }

    pub fn can_promote(&self, cfg: &CurriculumConfig) -> bool {
        self.stage < cfg.max_stage
    }

    /// Applies a promotion decision; the stage never decreases.
    pub fn apply(&mut self, check: &PromotionCheck) {
        if check.promote {
            self.stage += 1;
        }
    }
}

/// Where one evaluation rollout ended.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Endpoint {
    pub start: Vector3<f64>,
    pub goal: Vector3<f64>,
    pub final_p: Vector3<f64>,
    pub final_speed: f64,
    pub time: f64,
    pub reason: DoneReason,
    pub total_reward: f64,
}

impl Endpoint {
    pub fn distance(&self) -> f64 {
        (self.final_p - self.goal).norm()
    }
}

/// `sqrt(mean |p_final - p_goal|^2)`.
pub fn endpoint_rmse(endpoints: &[Endpoint]) -> f64 {
    if endpoints.is_empty() {
        return 0.0;
    }
    let sq: f64 = endpoints.iter().map(|e| (e.final_p - e.goal).norm_squared()).sum();
    (sq / endpoints.len() as f64).sqrt()
}

/// Runs `n` full episodes in lockstep; episode `i` uses seed `mix_seed(seed, i)`.
pub fn rollout_endpoints(policy: &dyn Policy, cfg: &EnvConfig, n: usize, seed: u64, exec: Exec) -> Result<Vec<Endpoint>, EnvError> {
    let mut envs = (0..n as u64).map(|i| QuadEnv::new(*cfg, mix_seed(seed, i))).collect::<Result<Vec<_>, _>>()?;
    let mut out: Vec<Option<Endpoint>> = vec![None; n];
    let mut rewards = vec![0.0; n];
    let starts: Vec<Vector3<f64>> = envs.iter().map(|e| e.setup().start).collect();
    loop {
        let active: Vec<usize> = (0..n).filter(|&i| out[i].is_none()).collect();
        if active.is_empty() {
            break;
        }
        let obs: Vec<_> = active.iter().map(|&i| envs[i].observe()).collect();
        let actions = policy.act(&obs);
        let mut slot = vec![None; n];
        for (k, &i) in active.iter().enumerate() {
            slot[i] = Some(actions[k]);
        }
        let results = par::map_mut(exec, &mut envs, |i, env| slot[i].map(|a| env.step(&a)));
        for (i, r) in results.into_iter().enumerate() {
            let Some(r) = r else { continue };
            let r = r?;
            rewards[i] += r.reward.total;
            if let Some(reason) = r.info.reason {
                let s = envs[i].state();
                out[i] = Some(Endpoint {
                    start: starts[i],
                    goal: envs[i].goal().p,
                    final_p: s.p,
                    final_speed: s.v.norm(),
                    time: r.info.time,
                    reason,
                    total_reward: rewards[i],
                });
            }
        }
    }
    Ok(out.into_iter().map(|e| e.expect("all finished")).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromotionCheck {
    pub rmse: f64,
    pub promote: bool,
    pub endpoints: Vec<Endpoint>,
}

/// Evaluates the policy at the current stage range and decides promotion.
pub fn evaluate_promotion(
    policy: &dyn Policy,
    env_cfg: &EnvConfig,
    cfg: &CurriculumConfig,
    state: &CurriculumState,
    seed: u64,
    exec: Exec,
) -> Result<PromotionCheck, EnvError> {
    let mut ec = *env_cfg;
    ec.range = state.range(cfg);
    ec.episode.randomize = cfg.eval_randomize;
    let endpoints = rollout_endpoints(policy, &ec, cfg.eval_episodes, seed, exec)?;
    let rmse = endpoint_rmse(&endpoints);
    Ok(PromotionCheck { rmse, promote: decide(rmse, state, cfg), endpoints })
}

pub fn decide(rmse: f64, state: &CurriculumState, cfg: &CurriculumConfig) -> bool {
    rmse < cfg.threshold && state.can_promote(cfg)
}
