use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dynamics::{ActionBounds, CtbrAction};
use crate::env::{Observation, OBS_DIM};
use crate::math::mix_seed;

use super::net::ActorCritic;
use super::normalize::RunningMeanStd;

/// Maps a batch of observations to commands.
pub trait Policy: Sync {
    fn act(&self, obs: &[Observation]) -> Vec<CtbrAction>;
}

impl<F> Policy for F
where
    F: Fn(&Observation) -> CtbrAction + Sync,
{
    fn act(&self, obs: &[Observation]) -> Vec<CtbrAction> {
        obs.iter().map(self).collect()
    }
}

/// Evaluation policy with frozen normalization. Acts with the mean action
/// unless sampling is enabled.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyRunner {
    pub net: ActorCritic,
    pub obs_norm: RunningMeanStd,
    pub bounds: ActionBounds,
    /// Seed of the action noise when sampling from the Gaussian head.
    pub sampling: Option<u64>,
}

impl PolicyRunner {
    pub fn new(net: ActorCritic, obs_norm: RunningMeanStd, bounds: ActionBounds) -> Self {
        Self { net, obs_norm, bounds, sampling: None }
    }

    /// Samples actions instead of taking the mean. The noise for each step is
    /// drawn from a stream keyed by `seed` and the observation itself, so
    /// rollouts stay reproducible in any execution order.
    pub fn stochastic(mut self, seed: u64) -> Self {
        self.sampling = Some(seed);
        self
    }

    /// Normalized observation matrix, one row per observation.
    pub fn normalized(&self, obs: &[Observation]) -> Array2<f64> {
        normalize_batch(&self.obs_norm, obs)
    }
}

pub(crate) fn normalize_batch(rms: &RunningMeanStd, obs: &[Observation]) -> Array2<f64> {
    let mut x = Array2::zeros((obs.len(), OBS_DIM));
    for (mut row, o) in x.rows_mut().into_iter().zip(obs) {
        rms.normalize_into(o.as_slice(), row.as_slice_mut().expect("row-major"));
    }
    x
}

impl Policy for PolicyRunner {
    fn act(&self, obs: &[Observation]) -> Vec<CtbrAction> {
        if obs.is_empty() {
            return Vec::new();
        }
        let mut mean = self.net.mean(self.normalized(obs).view());
        if let Some(seed) = self.sampling {
            for (mut row, o) in mean.rows_mut().into_iter().zip(obs) {
                let key = o.as_slice().iter().fold(seed, |h, x| mix_seed(h, x.to_bits()));
                let mut rng = ChaCha8Rng::seed_from_u64(key);
                for (m, ls) in row.iter_mut().zip(&self.net.log_std) {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *m += ls.exp() * z;
                }
            }
        }
        mean.rows().into_iter().map(|r| self.bounds.from_normalized(r.as_slice().expect("row-major"))).collect()
    }
}
