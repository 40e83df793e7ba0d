//! Independent reference computations shared by the integration and
//! acceptance tests. Nothing here calls into the code under test except
//! for plain data types.
#![allow(dead_code)]

use quadlab::dynamics::{CtbrAction, QuadState};
use quadlab::env::{Goal, RewardConfig};
use quadlab::pmm::PmmSample;

/// Minimum duration of a two-phase bang-bang profile found by scanning the
/// switch time on a grid of step `h`.
///
/// For each sign pattern the second-phase time follows from the velocity
/// boundary; the position residual is tracked along the grid and every sign
/// change is resolved by linear interpolation. Returns `None` when no
/// crossing is found below `t_cap`.
#[allow(clippy::too_many_arguments)]
pub fn grid_min_time(p0: f64, v0: f64, p2: f64, v2: f64, a_min: f64, a_max: f64, h: f64, t_cap: f64) -> Option<f64> {
    if p0 == p2 && v0 == v2 {
        return Some(0.0);
    }
    let mut best: Option<f64> = None;
    for (a1, a2) in [(a_max, a_min), (a_min, a_max)] {
        let eval = |t1: f64| -> Option<(f64, f64)> {
            let v1 = v0 + a1 * t1;
            let t2 = (v2 - v1) / a2;
            if t2 < 0.0 {
                return None;
            }
            let p1 = p0 + v0 * t1 + 0.5 * a1 * t1 * t1;
            Some((p1 + v1 * t2 + 0.5 * a2 * t2 * t2 - p2, t1 + t2))
        };
        let mut prev: Option<(f64, f64)> = None;
        let mut k = 0u64;
        loop {
            let t1 = k as f64 * h;
            if t1 > t_cap || best.is_some_and(|b| t1 > b) {
                break;
            }
            match eval(t1) {
                Some((r, total)) => {
                    if r == 0.0 {
                        best = Some(best.map_or(total, |b: f64| b.min(total)));
                    } else if let Some((rp, totp)) = prev {
                        if rp.signum() != r.signum() && rp != 0.0 {
                            let w = rp / (rp - r);
                            let t = totp + w * (total - totp);
                            best = Some(best.map_or(t, |b: f64| b.min(t)));
                        }
                    }
                    prev = Some((r, total));
                }
                None => prev = None,
            }
            k += 1;
        }
    }
    best
}

fn norm3(x: [f64; 3]) -> f64 {
    (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt()
}

fn sub3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn arr(v: &nalgebra::Vector3<f64>) -> [f64; 3] {
    [v.x, v.y, v.z]
}

fn yaw_of(s: &QuadState) -> f64 {
    // Heading of the body x axis projected onto the ground plane.
    let (w, x, y, z) = (s.q.w, s.q.i, s.q.j, s.q.k);
    let bx_x = 1.0 - 2.0 * (y * y + z * z);
    let bx_y = 2.0 * (x * y + w * z);
    bx_y.atan2(bx_x)
}

fn wrapped_abs(d: f64) -> f64 {
    d.sin().atan2(d.cos()).abs()
}

/// Reward terms `[goal, heading, stay, accel, rate, thrust, cmd, pmm]`
/// evaluated directly from the term definitions.
#[allow(clippy::too_many_arguments)]
pub fn reward_terms(
    cur: &QuadState,
    prev: &QuadState,
    action: &CtbrAction,
    prev_action: &CtbrAction,
    goal: &Goal,
    reference: &PmmSample,
    k: &RewardConfig,
    radius: f64,
    dt: f64,
) -> [f64; 8] {
    let pen = |c: f64| if k.literal_signs { c } else { -c.abs() };
    let p = arr(&cur.p);
    let pp = arr(&prev.p);
    let g = arr(&goal.p);
    let d = norm3(sub3(p, g));
    let r_goal = k.k_goal * (1.0 - d / radius);
    let r_heading = k.k_heading * wrapped_abs(yaw_of(cur) - goal.heading);
    let step = sub3(p, pp);
    let toward = sub3(g, pp);
    let r_stay = if k.literal_stay {
        k.k_stay * norm3(step) * d
    } else {
        let (ns, nt) = (norm3(step), norm3(toward));
        if ns < 1e-9 || nt < 1e-9 {
            0.0
        } else {
            k.k_stay * (step[0] * toward[0] + step[1] * toward[1] + step[2] * toward[2]) / (ns * nt)
        }
    };
    let acc = sub3(arr(&cur.v), arr(&prev.v)).map(|x| x / dt);
    let r_accel = k.k_accel * norm3(acc);
    let r_rate = pen(k.k_rate) * norm3(arr(&cur.w));
    let r_thrust = pen(k.k_thrust_smooth) * (action.thrust - prev_action.thrust).abs();
    let dc = sub3(arr(&action.rates), arr(&prev_action.rates));
    let r_cmd = pen(k.k_cmd_smooth) * (dc[0].abs() + dc[1].abs() + dc[2].abs());
    let r_pmm = k.k_pmm_pos * norm3(sub3(p, arr(&reference.p))) + k.k_pmm_vel * norm3(sub3(arr(&cur.v), arr(&reference.v)));
    [r_goal, r_heading, r_stay, r_accel, r_rate, r_thrust, r_cmd, r_pmm]
}

/// Advantages by explicit double sum `A_t = sum_l (gamma lambda)^l delta_{t+l}`,
/// truncated at the first terminal step.
pub fn brute_force_gae(rewards: &[f64], values: &[f64], dones: &[bool], gamma: f64, lambda: f64) -> Vec<f64> {
    let n = rewards.len();
    (0..n)
        .map(|t| {
            let mut sum = 0.0;
            for l in 0..(n - t) {
                let i = t + l;
                let next = if dones[i] { 0.0 } else { values[i + 1] };
                let delta = rewards[i] + gamma * next - values[i];
                sum += (gamma * lambda).powi(l as i32) * delta;
                if dones[i] {
                    break;
                }
            }
            sum
        })
        .collect()
}

/// Central difference `(f(x + h) - f(x - h)) / 2h` of coordinate `i`.
pub fn central_difference(x: &mut [f64], i: usize, h: f64, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    let x0 = x[i];
    x[i] = x0 + h;
    let up = f(x);
    x[i] = x0 - h;
    let down = f(x);
    x[i] = x0;
    (up - down) / (2.0 * h)
}

/// Relative error with a floor on the scale for near-zero gradients.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}
