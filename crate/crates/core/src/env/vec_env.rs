use crate::dynamics::CtbrAction;
use crate::math::mix_seed;
use crate::par::{self, Exec};

use super::{EnvConfig, EnvError, Observation, QuadEnv, RewardBreakdown, StepInfo};

/// Result of one instance in a batched step.
#[derive(Debug, Clone, PartialEq)]
pub struct VecStep {
    /// Next observation; after `done` this is the first observation of the
    /// automatically started episode.
    pub obs: Observation,
    pub reward: RewardBreakdown,
    pub done: bool,
    pub info: StepInfo,
    /// Last observation of the finished episode, when `done`.
    pub terminal_obs: Option<Observation>,
    /// Failure of the automatic reset, isolated to this instance.
    pub error: Option<EnvError>,
}

/// A batch of independent environments with automatic reset.
///
/// Every instance owns its random stream, so results do not depend on
/// whether the batch is stepped sequentially or in parallel.
pub struct VecEnv {
    envs: Vec<QuadEnv>,
    exec: Exec,
}

impl VecEnv {
    pub fn new(cfg: EnvConfig, seeds: &[u64], exec: Exec) -> Result<Self, EnvError> {
        if seeds.is_empty() {
            return Err(EnvError::InvalidConfig("vector env needs at least one instance".into()));
        }
        let envs = seeds.iter().map(|&s| QuadEnv::new(cfg, s)).collect::<Result<Vec<_>, _>>()?;
        Ok(Self { envs, exec })
    }

    /// `n` instances seeded from `base` via independent streams.
    pub fn seeded(cfg: EnvConfig, n: usize, base: u64, exec: Exec) -> Result<Self, EnvError> {
        let seeds: Vec<u64> = (0..n as u64).map(|i| mix_seed(base, i)).collect();
        Self::new(cfg, &seeds, exec)
    }

    pub fn len(&self) -> usize {
        self.envs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.envs.is_empty()
    }

    pub fn envs(&self) -> &[QuadEnv] {
        &self.envs
    }

    pub fn envs_mut(&mut self) -> &mut [QuadEnv] {
        &mut self.envs
    }

    pub fn set_range(&mut self, range: f64) {
        for env in &mut self.envs {
            env.set_range(range);
        }
    }

    /// Reseeds instance `i` with `mix_seed(base, i)`.
    pub fn reseed(&mut self, base: u64) {
        for (i, env) in self.envs.iter_mut().enumerate() {
            env.reseed(mix_seed(base, i as u64));
        }
    }

    pub fn reset_all(&mut self) -> Result<Vec<Observation>, EnvError> {
        par::map_mut(self.exec, &mut self.envs, |_, env| env.reset()).into_iter().collect()
    }

    pub fn observe_all(&self) -> Vec<Observation> {
        self.envs.iter().map(QuadEnv::observe).collect()
    }

    /// Steps instance `i` with `actions[i]`.
    ///
    /// # Panics
    /// If `actions.len()` differs from the number of instances.
    pub fn step_all(&mut self, actions: &[CtbrAction]) -> Vec<VecStep> {
        assert_eq!(actions.len(), self.envs.len(), "one action per instance");
        par::map_mut(self.exec, &mut self.envs, |i, env| {
            let r = match env.step(&actions[i]) {
                Ok(r) => r,
                Err(e) => {
                    // Only reachable when an earlier auto-reset failed.
                    let obs = env.observe();
                    return VecStep {
                        obs,
                        reward: RewardBreakdown::default(),
                        done: true,
                        info: StepInfo {
                            reason: None,
                            time: env.time(),
                            reference: env.plan().sample(env.time()),
                            saturated: false,
                            applied: actions[i],
                        },
                        terminal_obs: Some(obs),
                        error: Some(e),
                    };
                }
            };
            if !r.done {
                return VecStep { obs: r.obs, reward: r.reward, done: false, info: r.info, terminal_obs: None, error: None };
            }
            let (obs, error) = match env.reset() {
                Ok(o) => (o, None),
                Err(e) => (r.obs, Some(e)),
            };
            VecStep { obs, reward: r.reward, done: true, info: r.info, terminal_obs: Some(r.obs), error }
        })
    }
}
