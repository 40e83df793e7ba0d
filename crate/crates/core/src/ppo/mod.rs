//! Proximal policy optimization with a Gaussian actor-critic.

mod adam;
mod checkpoint;
mod gae;
mod loss;
mod net;
mod normalize;
mod policy;
mod train;

pub use adam::{clip_grad_norm, group_norm, Adam, AdamConfig};
pub use checkpoint::{Checkpoint, CheckpointError, FORMAT_VERSION};
pub use gae::{gae, normalize as normalize_advantages};
pub use loss::{ppo_loss, ppo_loss_and_grad, LossCoefs, LossStats, Minibatch};
pub use net::{gaussian_entropy, gaussian_log_prob, ActorCritic, Dense, Group, Mlp, MlpTape, LOG_STD_MAX, LOG_STD_MIN};
pub use normalize::RunningMeanStd;
pub use policy::{Policy, PolicyRunner};
pub use train::{IterationMetrics, TrainConfig, TrainError, Trainer, TrainerState};
