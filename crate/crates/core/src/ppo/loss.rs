//! Clipped-surrogate PPO loss and its exact gradient.

use ndarray::{Array2, ArrayView1, ArrayView2};

use super::net::{gaussian_entropy, gaussian_log_prob, ActorCritic};

#[derive(Debug, Clone, Copy)]
pub struct Minibatch<'a> {
    pub obs: ArrayView2<'a, f64>,
    /// Pre-squash, unclamped Gaussian samples.
    pub actions: ArrayView2<'a, f64>,
    pub old_log_prob: ArrayView1<'a, f64>,
    pub advantages: ArrayView1<'a, f64>,
    pub returns: ArrayView1<'a, f64>,
}

impl Minibatch<'_> {
    pub fn len(&self) -> usize {
        self.obs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.nrows() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossCoefs {
    pub clip: f64,
    pub value: f64,
    pub entropy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossStats {
    pub loss: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
}

/// `loss = -mean(min(r A, clip(r) A)) + c_v mean((V - R)^2) - c_e H`.
pub fn ppo_loss(net: &ActorCritic, mb: &Minibatch, coefs: &LossCoefs) -> LossStats {
    evaluate(net, mb, coefs, None)
}

/// Loss together with its gradient with respect to every parameter of `net`.
pub fn ppo_loss_and_grad(net: &ActorCritic, mb: &Minibatch, coefs: &LossCoefs) -> (LossStats, ActorCritic) {
    let mut grads = net.zeros_like();
    let stats = evaluate(net, mb, coefs, Some(&mut grads));
    (stats, grads)
}

fn evaluate(net: &ActorCritic, mb: &Minibatch, coefs: &LossCoefs, grads: Option<&mut ActorCritic>) -> LossStats {
    let n = mb.len();
    let inv_n = 1.0 / n as f64;
    let act_dim = net.act_dim();
    let log_std = net.log_std.as_slice().expect("contiguous");
    let inv_var: Vec<f64> = log_std.iter().map(|ls| (-2.0 * ls).exp()).collect();

    let want_grad = grads.is_some();
    let (raw_mean, actor_tape) = if want_grad {
        let (m, t) = net.actor.forward_taped(mb.obs);
        (m, Some(t))
    } else {
        (net.actor.forward(mb.obs), None)
    };
    let (values, critic_tape) = if want_grad {
        let (v, t) = net.critic.forward_taped(mb.obs);
        (v, Some(t))
    } else {
        (net.critic.forward(mb.obs), None)
    };

    let mut d_raw = Array2::<f64>::zeros((n, act_dim));
    let mut d_log_std = vec![0.0; act_dim];
    let mut d_value = Array2::<f64>::zeros((n, 1));
    let (mut policy_loss, mut value_loss, mut clipped, mut kl) = (0.0, 0.0, 0usize, 0.0);
    let mut mean = vec![0.0; act_dim];

    for i in 0..n {
        for j in 0..act_dim {
            mean[j] = raw_mean[(i, j)].tanh();
        }
        let action = mb.actions.row(i);
        let action = action.as_slice().expect("row-major minibatch");
        let logp = gaussian_log_prob(action, &mean, log_std);
        let log_ratio = logp - mb.old_log_prob[i];
        let ratio = log_ratio.exp();
        let adv = mb.advantages[i];
        let clipped_ratio = ratio.clamp(1.0 - coefs.clip, 1.0 + coefs.clip);
        policy_loss -= (ratio * adv).min(clipped_ratio * adv);
        if (ratio - 1.0).abs() > coefs.clip {
            clipped += 1;
        }
        kl += (ratio - 1.0) - log_ratio;
        let err = values[(i, 0)] - mb.returns[i];
        value_loss += err * err;

        if want_grad {
            // Gradient flows only through the unclipped branch of the min.
            let flat = (adv > 0.0 && ratio > 1.0 + coefs.clip) || (adv < 0.0 && ratio < 1.0 - coefs.clip);
            let d_logp = if flat { 0.0 } else { -ratio * adv * inv_n };
            if d_logp != 0.0 {
                for j in 0..act_dim {
                    let diff = action[j] - mean[j];
                    let d_mean = d_logp * diff * inv_var[j];
                    d_raw[(i, j)] = d_mean * (1.0 - mean[j] * mean[j]);
                    d_log_std[j] += d_logp * (diff * diff * inv_var[j] - 1.0);
                }
            }
            d_value[(i, 0)] = coefs.value * 2.0 * err * inv_n;
        }
    }

    let entropy = gaussian_entropy(log_std);
    policy_loss *= inv_n;
    value_loss *= inv_n;
    let stats = LossStats {
        loss: policy_loss + coefs.value * value_loss - coefs.entropy * entropy,
        policy_loss,
        value_loss,
        entropy,
        clip_fraction: clipped as f64 * inv_n,
        approx_kl: kl * inv_n,
    };

    if let Some(g) = grads {
        net.actor.backward(actor_tape.as_ref().expect("taped"), d_raw, &mut g.actor);
        net.critic.backward(critic_tape.as_ref().expect("taped"), d_value, &mut g.critic);
        for (g, d) in g.log_std.iter_mut().zip(&d_log_std) {
            *g += d - coefs.entropy;
        }
    }
    stats
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{Array1, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    struct Data {
        obs: Array2<f64>,
        actions: Array2<f64>,
        old: Array1<f64>,
        adv: Array1<f64>,
        ret: Array1<f64>,
    }

    impl Data {
        fn mb(&self) -> Minibatch<'_> {
            Minibatch {
                obs: self.obs.view(),
                actions: self.actions.view(),
                old_log_prob: self.old.view(),
                advantages: self.adv.view(),
                returns: self.ret.view(),
            }
        }
    }

    fn random_net(seed: u64) -> ActorCritic {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net = ActorCritic::new(5, 3, &[8, 8], -0.3, &mut rng);
        let mut flat = net.flat();
        for v in flat.iter_mut() {
            *v += rng.random_range(-0.3..0.3);
        }
        net.set_flat(&flat);
        net
    }

    fn data_for(net: &ActorCritic, n: usize, seed: u64, adv_scale: f64) -> Data {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let obs = Array2::from_shape_fn((n, 5), |_| rng.random_range(-1.0..1.0));
        let mean = net.mean(obs.view());
        let actions = Array2::from_shape_fn((n, 3), |(i, j)| mean[(i, j)] + rng.random_range(-0.5..0.5));
        let old = Array1::from_shape_fn(n, |i| {
            let a = actions.row(i).to_vec();
            let m = mean.row(i).to_vec();
            gaussian_log_prob(&a, &m, net.log_std.as_slice().unwrap()) + rng.random_range(-0.05..0.05)
        });
        let adv = Array1::from_shape_fn(n, |_| adv_scale * rng.random_range(-1.0..1.0));
        let ret = Array1::from_shape_fn(n, |_| rng.random_range(-2.0..2.0));
        Data { obs, actions, old, adv, ret }
    }

    #[test]
    fn zero_advantage_gives_zero_policy_loss() {
        let net = random_net(1);
        let d = data_for(&net, 16, 2, 0.0);
        let coefs = LossCoefs { clip: 0.2, value: 0.5, entropy: 0.0 };
        let (stats, g) = ppo_loss_and_grad(&net, &d.mb(), &coefs);
        assert_eq!(stats.policy_loss, 0.0);
        assert!(g.actor.layers.iter().all(|l| l.w.iter().all(|&x| x == 0.0)));
        assert!(g.critic.layers.iter().any(|l| l.w.iter().any(|&x| x != 0.0)));
    }

    #[test]
    fn same_policy_has_unit_ratio() {
        let net = random_net(3);
        let mut d = data_for(&net, 32, 4, 1.0);
        let mean = net.mean(d.obs.view());
        for i in 0..32 {
            d.old[i] = gaussian_log_prob(&d.actions.row(i).to_vec(), &mean.row(i).to_vec(), net.log_std.as_slice().unwrap());
        }
        let stats = ppo_loss(&net, &d.mb(), &LossCoefs { clip: 0.2, value: 0.5, entropy: 0.0 });
        assert_eq!(stats.clip_fraction, 0.0);
        assert!(stats.approx_kl.abs() < 1e-15);
    }

    #[test]
    fn clipped_samples_have_flat_gradient() {
        let net = random_net(5);
        let mut d = data_for(&net, 8, 6, 1.0);
        d.adv.fill(1.0);
        d.old -= 1.0; // ratio = e > 1.2
        let coefs = LossCoefs { clip: 0.2, value: 0.0, entropy: 0.0 };
        let (stats, g) = ppo_loss_and_grad(&net, &d.mb(), &coefs);
        assert_eq!(stats.clip_fraction, 1.0);
        assert!(g.flat().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn gradient_of_sum_is_sum_of_gradients() {
        let net = random_net(7);
        let a = data_for(&net, 10, 8, 1.0);
        let b = data_for(&net, 10, 9, 1.0);
        let coefs = LossCoefs { clip: 0.2, value: 0.5, entropy: 0.01 };
        let (_, ga) = ppo_loss_and_grad(&net, &a.mb(), &coefs);
        let (_, gb) = ppo_loss_and_grad(&net, &b.mb(), &coefs);
        let cat = |x: &Array2<f64>, y: &Array2<f64>| ndarray::concatenate(ndarray::Axis(0), &[x.view(), y.view()]).unwrap();
        let cat1 = |x: &Array1<f64>, y: &Array1<f64>| ndarray::concatenate(ndarray::Axis(0), &[x.view(), y.view()]).unwrap();
        let joint = Data {
            obs: cat(&a.obs, &b.obs),
            actions: cat(&a.actions, &b.actions),
            old: cat1(&a.old, &b.old),
            adv: cat1(&a.adv, &b.adv),
            ret: cat1(&a.ret, &b.ret),
        };
        // The joint loss is a mean over 20 samples: (L_a + L_b) / 2, entropy counted once.
        let (_, gj) = ppo_loss_and_grad(&net, &joint.mb(), &coefs);
        let n_log_std = net.act_dim();
        let actor_len: usize = net.actor.layers.iter().map(|l| l.w.len() + l.b.len()).sum();
        for (k, ((x, y), z)) in ga.flat().iter().zip(gb.flat()).zip(gj.flat()).enumerate() {
            let expect = if (actor_len..actor_len + n_log_std).contains(&k) {
                0.5 * (x + coefs.entropy) + 0.5 * (y + coefs.entropy) - coefs.entropy
            } else {
                0.5 * (x + y)
            };
            assert!((expect - z).abs() < 1e-12, "param {k}: {expect} vs {z}");
        }
    }
}
