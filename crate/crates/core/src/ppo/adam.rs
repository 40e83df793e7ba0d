use super::net::{ActorCritic, Group};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Adam moments shaped like the network they update.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub cfg: AdamConfig,
    pub m: ActorCritic,
    pub v: ActorCritic,
    pub t: u64,
}

impl Adam {
    pub fn new(net: &ActorCritic, cfg: AdamConfig) -> Self {
        Self { cfg, m: net.zeros_like(), v: net.zeros_like(), t: 0 }
    }

    pub fn step(&mut self, net: &mut ActorCritic, grads: &ActorCritic, lr: f64) {
        self.t += 1;
        let AdamConfig { beta1, beta2, eps } = self.cfg;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        let params = net.slices_mut();
        let ms = self.m.slices_mut();
        let vs = self.v.slices_mut();
        let gs = grads.slices();
        for (((p, m), v), g) in params.into_iter().zip(ms).zip(vs).zip(gs) {
            for i in 0..p.1.len() {
                let gi = g.1[i];
                m.1[i] = beta1 * m.1[i] + (1.0 - beta1) * gi;
                v.1[i] = beta2 * v.1[i] + (1.0 - beta2) * gi * gi;
                p.1[i] -= lr * (m.1[i] / c1) / ((v.1[i] / c2).sqrt() + eps);
            }
        }
        net.clamp_log_std();
    }
}

/// L2 norm of the gradient restricted to one parameter group.
pub fn group_norm(grads: &ActorCritic, group: Group) -> f64 {
    grads.slices().iter().filter(|(g, _)| *g == group).flat_map(|(_, s)| s.iter()).map(|x| x * x).sum::<f64>().sqrt()
}

/// Rescales each group so its norm is at most `max_norm`. Returns the
/// pre-clip norms `(actor, critic)`.
pub fn clip_grad_norm(grads: &mut ActorCritic, max_norm: f64) -> (f64, f64) {
    let na = group_norm(grads, Group::Actor);
    let nc = group_norm(grads, Group::Critic);
    let scale = |n: f64| if n > max_norm { max_norm / n } else { 1.0 };
    let (sa, sc) = (scale(na), scale(nc));
    for (g, s) in grads.slices_mut() {
        let k = if g == Group::Actor { sa } else { sc };
        if k != 1.0 {
            s.iter_mut().for_each(|x| *x *= k);
        }
    }
    (na, nc)
}
