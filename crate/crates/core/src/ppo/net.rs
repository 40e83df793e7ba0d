//! Fully connected networks with hand-written reverse mode.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `inputs x outputs`.
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self { w: Array2::zeros((inputs, outputs)), b: Array1::zeros(outputs) }
    }

    /// He-uniform weights, zero bias.
    pub fn he_uniform(inputs: usize, outputs: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = (6.0 / inputs as f64).sqrt();
        let w = Array2::from_shape_fn((inputs, outputs), |_| rng.random_range(-bound..bound));
        Self { w, b: Array1::zeros(outputs) }
    }
}

/// ReLU hidden layers, linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Inputs seen by each layer during a forward pass.
#[derive(Debug, Clone)]
pub struct MlpTape {
    inputs: Vec<Array2<f64>>,
}

impl Mlp {
    /// `sizes = [in, hidden.., out]`; the output layer starts at zero.
    pub fn new(sizes: &[usize], rng: &mut ChaCha8Rng) -> Self {
        let n = sizes.len() - 1;
        let layers =
            (0..n).map(|i| if i + 1 == n { Dense::zeros(sizes[i], sizes[i + 1]) } else { Dense::he_uniform(sizes[i], sizes[i + 1], rng) }).collect();
        Self { layers }
    }

    pub fn zeros_like(&self) -> Self {
        Self { layers: self.layers.iter().map(|l| Dense::zeros(l.w.nrows(), l.w.ncols())).collect() }
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut h = x.to_owned();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            h = h.dot(&layer.w) + &layer.b;
            if i < last {
                h.mapv_inplace(|v| v.max(0.0));
            }
        }
        h
    }

    pub fn forward_taped(&self, x: ArrayView2<f64>) -> (Array2<f64>, MlpTape) {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = x.to_owned();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut out = h.dot(&layer.w) + &layer.b;
            if i < last {
                out.mapv_inplace(|v| v.max(0.0));
            }
            inputs.push(h);
            h = out;
        }
        (h, MlpTape { inputs })
    }

    /// Accumulates parameter gradients for upstream gradient `d_out` into `grads`.
    pub fn backward(&self, tape: &MlpTape, d_out: Array2<f64>, grads: &mut Mlp) {
        let mut delta = d_out;
        for l in (0..self.layers.len()).rev() {
            let x = &tape.inputs[l];
            ndarray::linalg::general_mat_mul(1.0, &x.t(), &delta, 1.0, &mut grads.layers[l].w);
            grads.layers[l].b += &delta.sum_axis(Axis(0));
            if l > 0 {
                let mut dx = delta.dot(&self.layers[l].w.t());
                // Layer input is the ReLU output of the previous layer.
                ndarray::Zip::from(&mut dx).and(x).for_each(|d, &a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
                delta = dx;
            }
        }
    }

    fn slices(&self) -> impl Iterator<Item = &[f64]> {
        self.layers.iter().flat_map(|l| [l.w.as_slice().expect("standard layout"), l.b.as_slice().expect("contiguous")])
    }

    fn slices_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        self.layers.iter_mut().flat_map(|l| [l.w.as_slice_mut().expect("standard layout"), l.b.as_slice_mut().expect("contiguous")])
    }
}

/// Separate actor and critic trunks with a state-independent log-std.
#[derive(Debug, Clone, PartialEq)]
pub struct ActorCritic {
    pub actor: Mlp,
    pub log_std: Array1<f64>,
    pub critic: Mlp,
}

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 1.0;

/// Which parameter group a slice belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Group {
    Actor,
    Critic,
}

impl ActorCritic {
    pub fn new(obs_dim: usize, act_dim: usize, hidden: &[usize], init_log_std: f64, rng: &mut ChaCha8Rng) -> Self {
        let mut actor_sizes = vec![obs_dim];
        actor_sizes.extend_from_slice(hidden);
        let mut critic_sizes = actor_sizes.clone();
        actor_sizes.push(act_dim);
        critic_sizes.push(1);
        let actor = Mlp::new(&actor_sizes, rng);
        let critic = Mlp::new(&critic_sizes, rng);
        Self { actor, log_std: Array1::from_elem(act_dim, init_log_std.clamp(LOG_STD_MIN, LOG_STD_MAX)), critic }
    }

    pub fn zeros_like(&self) -> Self {
        Self { actor: self.actor.zeros_like(), log_std: Array1::zeros(self.log_std.len()), critic: self.critic.zeros_like() }
    }

    pub fn act_dim(&self) -> usize {
        self.log_std.len()
    }

    pub fn obs_dim(&self) -> usize {
        self.actor.layers[0].w.nrows()
    }

    /// Action means (`tanh` of the actor output) for a batch of observations.
    pub fn mean(&self, obs: ArrayView2<f64>) -> Array2<f64> {
        self.actor.forward(obs).mapv(f64::tanh)
    }

    pub fn value(&self, obs: ArrayView2<f64>) -> Array1<f64> {
        self.critic.forward(obs).column(0).to_owned()
    }

    /// `(mean, log_std, value)` for every row of `obs`.
    pub fn forward(&self, obs: ArrayView2<f64>) -> (Array2<f64>, Array1<f64>, Array1<f64>) {
        (self.mean(obs), self.log_std.clone(), self.value(obs))
    }

    /// Parameter slices in a fixed order, tagged with their group.
    pub fn slices(&self) -> Vec<(Group, &[f64])> {
        let mut out: Vec<(Group, &[f64])> = self.actor.slices().map(|s| (Group::Actor, s)).collect();
        out.push((Group::Actor, self.log_std.as_slice().expect("contiguous")));
        out.extend(self.critic.slices().map(|s| (Group::Critic, s)));
        out
    }

    pub fn slices_mut(&mut self) -> Vec<(Group, &mut [f64])> {
        let mut out: Vec<(Group, &mut [f64])> = self.actor.slices_mut().map(|s| (Group::Actor, s)).collect();
        out.push((Group::Actor, self.log_std.as_slice_mut().expect("contiguous")));
        out.extend(self.critic.slices_mut().map(|s| (Group::Critic, s)));
        out
    }

    pub fn num_params(&self) -> usize {
        self.slices().iter().map(|(_, s)| s.len()).sum()
    }

    pub fn flat(&self) -> Vec<f64> {
        self.slices().into_iter().flat_map(|(_, s)| s.iter().copied()).collect()
    }

    /// Overwrites all parameters from a flat vector in [`Self::slices`] order.
    pub fn set_flat(&mut self, values: &[f64]) {
        let mut offset = 0;
        for (_, s) in self.slices_mut() {
            s.copy_from_slice(&values[offset..offset + s.len()]);
            offset += s.len();
        }
        assert_eq!(offset, values.len(), "parameter count mismatch");
    }

    pub fn clamp_log_std(&mut self) {
        self.log_std.mapv_inplace(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX));
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|(_, s)| s.iter().all(|x| x.is_finite()))
    }
}

/// Diagonal Gaussian log-density of `x` summed over dimensions.
pub fn gaussian_log_prob(x: &[f64], mean: &[f64], log_std: &[f64]) -> f64 {
    x.iter()
        .zip(mean)
        .zip(log_std)
        .map(|((&x, &m), &ls)| {
            let z = (x - m) * (-ls).exp();
            -0.5 * z * z - ls - 0.5 * LN_2PI
        })
        .sum()
}

/// Entropy of a diagonal Gaussian.
pub fn gaussian_entropy(log_std: &[f64]) -> f64 {
    log_std.iter().map(|ls| ls + 0.5 * (LN_2PI + 1.0)).sum()
}
