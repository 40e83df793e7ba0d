use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::curriculum::{evaluate_promotion, CurriculumConfig, CurriculumState, PromotionCheck};
use crate::env::{DoneReason, EnvConfig, EnvError, VecEnv, ACT_DIM, OBS_DIM};
use crate::math::mix_seed;
use crate::par::Exec;

use super::adam::{clip_grad_norm, Adam, AdamConfig};
use super::gae::{gae, normalize};
use super::loss::{ppo_loss_and_grad, LossCoefs, LossStats, Minibatch};
use super::net::{gaussian_log_prob, ActorCritic};
use super::normalize::RunningMeanStd;
use super::policy::{normalize_batch, PolicyRunner};

const STREAM_ENV: u64 = 1;
const STREAM_NOISE: u64 = 2;
const STREAM_SHUFFLE: u64 = 3;
const STREAM_EVAL: u64 = 4;
const STREAM_INIT: u64 = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub seed: u64,
    pub gamma: f64,
    pub lambda: f64,
    pub lr_start: f64,
    pub lr_end: f64,
    pub steps_per_env: usize,
    pub n_envs: usize,
    pub clip: f64,
    pub epochs: usize,
    pub minibatch: usize,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub max_grad_norm: f64,
    pub total_steps: u64,
    pub hidden_size: usize,
    pub hidden_layers: usize,
    pub init_log_std: f64,
    pub obs_clip: f64,
    /// Multiplies rewards before advantage estimation; logged rewards are unscaled.
    pub reward_scale: f64,
    /// Save a checkpoint every this many iterations (0 disables interval saves).
    pub checkpoint_every: u64,
    pub exec: Exec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            gamma: 0.99,
            lambda: 0.95,
            lr_start: 5e-4,
            lr_end: 2e-5,
            steps_per_env: 2000,
            n_envs: 16,
            clip: 0.2,
            epochs: 10,
            minibatch: 4096,
            value_coef: 0.5,
            entropy_coef: 0.0,
            max_grad_norm: 0.5,
            total_steps: 2_000_000,
            hidden_size: 256,
            hidden_layers: 2,
            init_log_std: -0.5,
            obs_clip: 10.0,
            reward_scale: 1.0,
            checkpoint_every: 10,
            exec: Exec::Parallel,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.n_envs == 0 || self.steps_per_env == 0 || self.epochs == 0 || self.minibatch == 0 {
            return Err("n_envs, steps_per_env, epochs and minibatch must be positive".into());
        }
        if self.hidden_size == 0 || self.hidden_layers == 0 {
            return Err("network needs at least one hidden layer of positive width".into());
        }
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.lambda) {
            return Err("gamma and lambda must lie in [0, 1]".into());
        }
        if !(self.lr_start >= 0.0 && self.lr_end >= 0.0 && self.clip > 0.0 && self.max_grad_norm > 0.0) {
            return Err("learning rates must be nonnegative, clip and grad norm positive".into());
        }
        if self.total_steps == 0 || !(self.obs_clip > 0.0) || !(self.reward_scale > 0.0) {
            return Err("total_steps, obs_clip and reward_scale must be positive".into());
        }
        Ok(())
    }

    /// Linear schedule over training progress in `[0, 1]`, exact at both ends.
    pub fn lr(&self, progress: f64) -> f64 {
        let p = progress.clamp(0.0, 1.0);
        (1.0 - p) * self.lr_start + p * self.lr_end
    }

    pub fn batch_size(&self) -> usize {
        self.n_envs * self.steps_per_env
    }

    pub fn hidden(&self) -> Vec<usize> {
        vec![self.hidden_size; self.hidden_layers]
    }

    /// Number of iterations needed to spend the step budget.
    pub fn iterations(&self) -> u64 {
        self.total_steps.div_ceil(self.batch_size() as u64)
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("non-finite loss at iteration {iteration}, epoch {epoch}, minibatch {minibatch}")]
    NonFiniteLoss { iteration: u64, epoch: usize, minibatch: usize },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Env(#[from] EnvError),
}

/// One row of the training log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationMetrics {
    pub iteration: u64,
    pub env_steps: u64,
    pub stage: usize,
    pub range: f64,
    pub lr: f64,
    /// Mean undiscounted return of episodes completed during collection.
    pub mean_reward: f64,
    pub mean_episode_length: f64,
    pub episodes: usize,
    pub mean_step_reward: f64,
    pub crash_fraction: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
    pub rmse: Option<f64>,
    pub promoted: bool,
}

impl IterationMetrics {
    pub const HEADER: [&'static str; 17] = [
        "iteration",
        "env_steps",
        "stage",
        "range",
        "lr",
        "mean_reward",
        "mean_episode_length",
        "episodes",
        "mean_step_reward",
        "crash_fraction",
        "policy_loss",
        "value_loss",
        "entropy",
        "clip_fraction",
        "approx_kl",
        "rmse",
        "promoted",
    ];

    pub fn fields(&self) -> Vec<String> {
        vec![
            self.iteration.to_string(),
            self.env_steps.to_string(),
            self.stage.to_string(),
            self.range.to_string(),
            self.lr.to_string(),
            self.mean_reward.to_string(),
            self.mean_episode_length.to_string(),
            self.episodes.to_string(),
            self.mean_step_reward.to_string(),
            self.crash_fraction.to_string(),
            self.policy_loss.to_string(),
            self.value_loss.to_string(),
            self.entropy.to_string(),
            self.clip_fraction.to_string(),
            self.approx_kl.to_string(),
            self.rmse.map(|r| r.to_string()).unwrap_or_default(),
            u8::from(self.promoted).to_string(),
        ]
    }
}

/// Rollout storage for one iteration, flattened as `t * n_envs + e`.
struct Rollout {
    obs: Array2<f64>,
    actions: Array2<f64>,
    log_prob: Array1<f64>,
    advantages: Array1<f64>,
    returns: Array1<f64>,
}

/// Complete trainer state; everything needed for a bit-exact resume.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainerState {
    pub net: ActorCritic,
    pub adam: Adam,
    pub obs_norm: RunningMeanStd,
    pub stage: usize,
    pub iteration: u64,
    pub env_steps: u64,
}

pub struct Trainer {
    pub cfg: TrainConfig,
    pub env_cfg: EnvConfig,
    pub curriculum: CurriculumConfig,
    state: TrainerState,
    venv: VecEnv,
}

impl Trainer {
    pub fn new(cfg: TrainConfig, env_cfg: EnvConfig, curriculum: CurriculumConfig) -> Result<Self, TrainError> {
        cfg.validate().map_err(TrainError::InvalidConfig)?;
        curriculum.validate().map_err(TrainError::InvalidConfig)?;
        env_cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, STREAM_INIT));
        let net = ActorCritic::new(OBS_DIM, ACT_DIM, &cfg.hidden(), cfg.init_log_std, &mut rng);
        let adam = Adam::new(&net, AdamConfig::default());
        let state = TrainerState {
            net,
            adam,
            obs_norm: RunningMeanStd::new(OBS_DIM, cfg.obs_clip),
            stage: CurriculumState::new(&curriculum).stage(),
            iteration: 0,
            env_steps: 0,
        };
        Self::from_state(cfg, env_cfg, curriculum, state)
    }

    pub fn from_state(cfg: TrainConfig, env_cfg: EnvConfig, curriculum: CurriculumConfig, state: TrainerState) -> Result<Self, TrainError> {
        cfg.validate().map_err(TrainError::InvalidConfig)?;
        curriculum.validate().map_err(TrainError::InvalidConfig)?;
        let mut ec = env_cfg;
        ec.range = curriculum.range(state.stage);
        let venv = VecEnv::seeded(ec, cfg.n_envs, mix_seed(cfg.seed, STREAM_ENV), cfg.exec)?;
        Ok(Self { cfg, env_cfg, curriculum, state, venv })
    }

    pub fn state(&self) -> &TrainerState {
        &self.state
    }

    pub fn into_state(self) -> TrainerState {
        self.state
    }

    pub fn is_finished(&self) -> bool {
        self.state.env_steps >= self.cfg.total_steps
    }

    pub fn curriculum_state(&self) -> CurriculumState {
        CurriculumState::at_stage(self.state.stage)
    }

    pub fn policy(&self) -> PolicyRunner {
        PolicyRunner::new(self.state.net.clone(), self.state.obs_norm.clone(), self.env_cfg.action)
    }

    /// Seed of the promotion rollouts; fixed for the whole run.
    pub fn eval_seed(&self) -> u64 {
        mix_seed(self.cfg.seed, STREAM_EVAL)
    }

    /// Collect, update, check promotion.
    pub fn iterate(&mut self) -> Result<IterationMetrics, TrainError> {
        let it = self.state.iteration;
        let progress = self.state.env_steps as f64 / self.cfg.total_steps as f64;
        let lr = self.cfg.lr(progress);
        let range = self.curriculum.range(self.state.stage);

        let (rollout, collect) = self.collect(it, range)?;
        let stats = self.update(&rollout, lr, it)?;
        self.state.env_steps += self.cfg.batch_size() as u64;
        self.state.iteration += 1;

        let cs = self.curriculum_state();
        let mut rmse = None;
        let mut promoted = false;
        if cs.can_promote(&self.curriculum) && it.is_multiple_of(self.curriculum.eval_interval) {
            let check: PromotionCheck = evaluate_promotion(&self.policy(), &self.env_cfg, &self.curriculum, &cs, self.eval_seed(), self.cfg.exec)?;
            rmse = Some(check.rmse);
            if check.promote {
                self.state.stage += 1;
                promoted = true;
            }
        }

        Ok(IterationMetrics {
            iteration: it,
            env_steps: self.state.env_steps,
            stage: cs.stage(),
            range,
            lr,
            mean_reward: collect.mean_return,
            mean_episode_length: collect.mean_length,
            episodes: collect.episodes,
            mean_step_reward: collect.mean_step_reward,
            crash_fraction: collect.crash_fraction,
            policy_loss: stats.policy_loss,
            value_loss: stats.value_loss,
            entropy: stats.entropy,
            clip_fraction: stats.clip_fraction,
            approx_kl: stats.approx_kl,
            rmse,
            promoted,
        })
    }

    fn collect(&mut self, it: u64, range: f64) -> Result<(Rollout, CollectStats), TrainError> {
        let n = self.cfg.n_envs;
        let steps = self.cfg.steps_per_env;
        let gamma = self.cfg.gamma;
        let st = &mut self.state;
        self.venv.set_range(range);
        self.venv.reseed(mix_seed(mix_seed(self.cfg.seed, STREAM_ENV), it));
        let mut obs = self.venv.reset_all()?;
        let mut noise_rng = ChaCha8Rng::seed_from_u64(mix_seed(mix_seed(self.cfg.seed, STREAM_NOISE), it));
        let log_std = st.net.log_std.to_vec();
        let std: Vec<f64> = log_std.iter().map(|l| l.exp()).collect();

        let total = n * steps;
        let mut obs_buf = Array2::<f64>::zeros((total, OBS_DIM));
        let mut raw_obs: Vec<[f64; OBS_DIM]> = Vec::with_capacity(total);
        let mut act_buf = Array2::<f64>::zeros((total, ACT_DIM));
        let mut logp = Array1::<f64>::zeros(total);
        let mut rewards = vec![0.0; total];
        let mut values = vec![0.0; total];
        let mut dones = vec![false; total];
        let mut ep_return = vec![0.0; n];
        let mut ep_len = vec![0usize; n];
        let mut cs = CollectStats::default();

        for t in 0..steps {
            let x = normalize_batch(&st.obs_norm, &obs);
            let mean = st.net.mean(x.view());
            let v = st.net.value(x.view());
            let mut actions = Vec::with_capacity(n);
            for e in 0..n {
                let k = t * n + e;
                let mut u = [0.0; ACT_DIM];
                for j in 0..ACT_DIM {
                    let z: f64 = StandardNormal.sample(&mut noise_rng);
                    u[j] = mean[(e, j)] + std[j] * z;
                }
                logp[k] = gaussian_log_prob(&u, mean.row(e).as_slice().expect("row-major"), &log_std);
                act_buf.row_mut(k).as_slice_mut().expect("row-major").copy_from_slice(&u);
                obs_buf.row_mut(k).assign(&x.row(e));
                raw_obs.push(obs[e].0);
                values[k] = v[e];
                actions.push(self.env_cfg.action.from_normalized(&u));
            }
            let out = self.venv.step_all(&actions);
            // Values of time-limit terminal states, bootstrapped into the reward.
            let truncated: Vec<usize> = (0..n).filter(|&e| out[e].info.reason == Some(DoneReason::TimeLimit)).collect();
            let terminal_values = if truncated.is_empty() {
                Vec::new()
            } else {
                let term: Vec<_> = truncated.iter().map(|&e| out[e].terminal_obs.expect("done step")).collect();
                st.net.value(normalize_batch(&st.obs_norm, &term).view()).to_vec()
            };
            for (e, s) in out.iter().enumerate() {
                let k = t * n + e;
                if let Some(err) = &s.error {
                    return Err(err.clone().into());
                }
                rewards[k] = s.reward.total * self.cfg.reward_scale;
                dones[k] = s.done;
                ep_return[e] += s.reward.total;
                ep_len[e] += 1;
                cs.step_reward_sum += s.reward.total;
                if s.done {
                    cs.finish(ep_return[e], ep_len[e], s.info.reason);
                    ep_return[e] = 0.0;
                    ep_len[e] = 0;
                }
            }
            for (&e, tv) in truncated.iter().zip(terminal_values) {
                rewards[t * n + e] += gamma * tv;
            }
            obs = out.into_iter().map(|s| s.obs).collect();
        }
        let last_values = st.net.value(normalize_batch(&st.obs_norm, &obs).view());

        let mut advantages = vec![0.0; total];
        let mut returns = vec![0.0; total];
        for e in 0..n {
            let r: Vec<f64> = (0..steps).map(|t| rewards[t * n + e]).collect();
            let mut v: Vec<f64> = (0..steps).map(|t| values[t * n + e]).collect();
            v.push(last_values[e]);
            let d: Vec<bool> = (0..steps).map(|t| dones[t * n + e]).collect();
            let (a, ret) = gae(&r, &v, &d, gamma, self.cfg.lambda);
            for t in 0..steps {
                advantages[t * n + e] = a[t];
                returns[t * n + e] = ret[t];
            }
        }
        normalize(&mut advantages);
        st.obs_norm.update(raw_obs.iter().map(|o| o.as_slice()));

        cs.mean_step_reward = cs.step_reward_sum / total as f64;
        if cs.episodes > 0 {
            cs.mean_return = cs.return_sum / cs.episodes as f64;
            cs.mean_length = cs.length_sum as f64 / cs.episodes as f64;
            cs.crash_fraction = cs.crashes as f64 / cs.episodes as f64;
        }
        let rollout =
            Rollout { obs: obs_buf, actions: act_buf, log_prob: logp, advantages: Array1::from(advantages), returns: Array1::from(returns) };
        Ok((rollout, cs))
    }

    fn update(&mut self, r: &Rollout, lr: f64, it: u64) -> Result<LossStats, TrainError> {
        let total = r.obs.nrows();
        let coefs = LossCoefs { clip: self.cfg.clip, value: self.cfg.value_coef, entropy: self.cfg.entropy_coef };
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(mix_seed(self.cfg.seed, STREAM_SHUFFLE), it));
        let mut idx: Vec<usize> = (0..total).collect();
        let mut acc = LossStats::default();
        let mut count = 0.0;
        for epoch in 0..self.cfg.epochs {
            idx.shuffle(&mut rng);
            for (mb_i, chunk) in idx.chunks(self.cfg.minibatch).enumerate() {
                let obs = r.obs.select(ndarray::Axis(0), chunk);
                let actions = r.actions.select(ndarray::Axis(0), chunk);
                let old: Array1<f64> = chunk.iter().map(|&i| r.log_prob[i]).collect();
                let adv: Array1<f64> = chunk.iter().map(|&i| r.advantages[i]).collect();
                let ret: Array1<f64> = chunk.iter().map(|&i| r.returns[i]).collect();
                let mb =
                    Minibatch { obs: obs.view(), actions: actions.view(), old_log_prob: old.view(), advantages: adv.view(), returns: ret.view() };
                let (stats, mut grads) = ppo_loss_and_grad(&self.state.net, &mb, &coefs);
                if !stats.loss.is_finite() || !grads.is_finite() {
                    return Err(TrainError::NonFiniteLoss { iteration: it, epoch, minibatch: mb_i });
                }
                clip_grad_norm(&mut grads, self.cfg.max_grad_norm);
                self.state.adam.step(&mut self.state.net, &grads, lr);
                acc.loss += stats.loss;
                acc.policy_loss += stats.policy_loss;
                acc.value_loss += stats.value_loss;
                acc.entropy += stats.entropy;
                acc.clip_fraction += stats.clip_fraction;
                acc.approx_kl += stats.approx_kl;
                count += 1.0;
            }
        }
        Ok(LossStats {
            loss: acc.loss / count,
            policy_loss: acc.policy_loss / count,
            value_loss: acc.value_loss / count,
            entropy: acc.entropy / count,
            clip_fraction: acc.clip_fraction / count,
            approx_kl: acc.approx_kl / count,
        })
    }
}

#[derive(Debug, Default)]
struct CollectStats {
    episodes: usize,
    return_sum: f64,
    length_sum: usize,
    crashes: usize,
    step_reward_sum: f64,
    mean_return: f64,
    mean_length: f64,
    mean_step_reward: f64,
    crash_fraction: f64,
}

impl CollectStats {
    fn finish(&mut self, ret: f64, len: usize, reason: Option<DoneReason>) {
        self.episodes += 1;
        self.return_sum += ret;
        self.length_sum += len;
        if matches!(reason, Some(DoneReason::OutOfBounds | DoneReason::Diverged)) {
            self.crashes += 1;
        }
    }
}
