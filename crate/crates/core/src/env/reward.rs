use nalgebra::Vector3;

use crate::dynamics::{CtbrAction, QuadState};
use crate::math::wrap_angle;
use crate::pmm::PmmSample;

use super::Goal;

/// Reward scaling constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardConfig {
    pub k_goal: f64,
    pub k_heading: f64,
    pub k_stay: f64,
    pub k_accel: f64,
    pub k_rate: f64,
    pub k_thrust_smooth: f64,
    pub k_cmd_smooth: f64,
    pub k_pmm_pos: f64,
    pub k_pmm_vel: f64,
    /// Convergence radius; `None` uses the spawn half-width of the stage.
    pub convergence_radius: Option<f64>,
    /// `true` reads the stay-at-goal term as the product of the two norms
    /// instead of the alignment of unit vectors.
    pub literal_stay: bool,
    /// `true` applies the rate and smoothing constants with their tabulated
    /// sign; `false` treats them as penalties (`-|K|`).
    pub literal_signs: bool,
    /// Added once when an episode ends by leaving the bounds or diverging.
    pub crash_penalty: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            k_goal: 0.2,
            k_heading: -1.0,
            k_stay: 0.2,
            k_accel: -0.15,
            k_rate: 0.25,
            k_thrust_smooth: 0.4,
            k_cmd_smooth: 0.35,
            k_pmm_pos: -3.0,
            k_pmm_vel: -0.3,
            convergence_radius: None,
            literal_stay: false,
            literal_signs: false,
            crash_penalty: 0.0,
        }
    }
}

/// Per-term reward of one control step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RewardBreakdown {
    pub goal: f64,
    pub heading: f64,
    pub stay: f64,
    pub accel: f64,
    pub rate: f64,
    pub thrust_smooth: f64,
    pub cmd_smooth: f64,
    pub pmm: f64,
    pub crash: f64,
    pub total: f64,
}

impl RewardBreakdown {
    pub const NAMES: [&'static str; 10] = ["r_goal", "r_heading", "r_stay", "r_accel", "r_rate", "r_thrust", "r_cmd", "r_pmm", "r_crash", "r_total"];

    pub fn terms(&self) -> [f64; 9] {
        [self.goal, self.heading, self.stay, self.accel, self.rate, self.thrust_smooth, self.cmd_smooth, self.pmm, self.crash]
    }

    pub fn to_array(&self) -> [f64; 10] {
        let t = self.terms();
        [t[0], t[1], t[2], t[3], t[4], t[5], t[6], t[7], t[8], self.total]
    }

    fn summed(mut self) -> Self {
        self.total = self.terms().iter().sum();
        self
    }

    pub fn with_crash(mut self, penalty: f64) -> Self {
        self.crash = penalty;
        self.summed()
    }
}

/// Step-dependent quantities that are not part of the state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardContext {
    pub radius: f64,
    /// Interval between `prev` and `cur`, used for the acceleration estimate.
    pub control_dt: f64,
}

/// Shaped reward for the transition `prev -> cur` under `action`.
///
/// Acceleration is the vehicle's linear acceleration, estimated as the
/// velocity change over the control interval.
#[allow(clippy::too_many_arguments)]
pub fn compute_reward(
    cur: &QuadState,
    prev: &QuadState,
    action: &CtbrAction,
    prev_action: &CtbrAction,
    goal: &Goal,
    reference: &PmmSample,
    cfg: &RewardConfig,
    ctx: &RewardContext,
) -> RewardBreakdown {
    let penalty = |k: f64| if cfg.literal_signs { k } else { -k.abs() };
    let to_goal = cur.p - goal.p;
    let dist = to_goal.norm();

    let stay = if cfg.literal_stay {
        cfg.k_stay * (cur.p - prev.p).norm() * dist
    } else {
        let step = cur.p - prev.p;
        let toward = goal.p - prev.p;
        if step.norm() < 1e-9 || toward.norm() < 1e-9 {
            0.0
        } else {
            cfg.k_stay * step.normalize().dot(&toward.normalize())
        }
    };
    let accel: Vector3<f64> = (cur.v - prev.v) / ctx.control_dt;
    let cmd_change = action.rates - prev_action.rates;

    RewardBreakdown {
        goal: cfg.k_goal * (1.0 - dist / ctx.radius),
        heading: cfg.k_heading * wrap_angle(cur.yaw() - goal.heading).abs(),
        stay,
        accel: cfg.k_accel * accel.norm(),
        rate: penalty(cfg.k_rate) * cur.w.norm(),
        thrust_smooth: penalty(cfg.k_thrust_smooth) * (action.thrust - prev_action.thrust).abs(),
        cmd_smooth: penalty(cfg.k_cmd_smooth) * cmd_change.abs().sum(),
        pmm: cfg.k_pmm_pos * (cur.p - reference.p).norm() + cfg.k_pmm_vel * (cur.v - reference.v).norm(),
        crash: 0.0,
        total: 0.0,
    }
    .summed()
}
