//! Flat `key = value` run configuration with dotted keys.
//!
//! Every tunable lives in one [`RunConfig`]. Files and command-line overrides
//! are applied in order on top of the defaults; the resolved result renders
//! back to the same format, so a snapshot reproduces the run.

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::curriculum::CurriculumConfig;
use crate::env::EnvConfig;
use crate::par::Exec;
use crate::ppo::TrainConfig;
use crate::tracker::ComparisonConfig;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("{origin}:{line}: {msg}")]
    Syntax { origin: String, line: usize, msg: String },
    #[error("unknown config key '{0}'")]
    UnknownKey(String),
    #[error("invalid value '{value}' for '{key}': {msg}")]
    InvalidValue { key: String, value: String, msg: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// Evaluation settings shared by `evaluate` and the acceptance checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalConfig {
    pub episodes: usize,
    /// Stage whose spawn range is used.
    pub stage: usize,
    /// Final distance counted as reaching the goal (m).
    pub success_radius: f64,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { episodes: 100, stage: 1, success_radius: 0.3, seed: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub env: EnvConfig,
    pub curriculum: CurriculumConfig,
    pub compare: ComparisonConfig,
    pub eval: EvalConfig,
}

trait Value: Sized {
    fn parse_value(s: &str) -> Result<Self, String>;
    fn render(&self) -> String;
}

impl Value for f64 {
    fn parse_value(s: &str) -> Result<Self, String> {
        s.parse::<f64>().map_err(|e| e.to_string()).and_then(|x| if x.is_finite() { Ok(x) } else { Err("must be finite".into()) })
    }
    fn render(&self) -> String {
        self.to_string()
    }
}

impl Value for usize {
    fn parse_value(s: &str) -> Result<Self, String> {
        s.replace('_', "").parse().map_err(|e: std::num::ParseIntError| e.to_string())
    }
    fn render(&self) -> String {
        self.to_string()
    }
}

impl Value for u64 {
    fn parse_value(s: &str) -> Result<Self, String> {
        s.replace('_', "").parse().map_err(|e: std::num::ParseIntError| e.to_string())
    }
    fn render(&self) -> String {
        self.to_string()
    }
}

impl Value for bool {
    fn parse_value(s: &str) -> Result<Self, String> {
        match s {
            "true" => Ok(true),
            "false" => Ok(false),
            _ => Err("expected true or false".into()),
        }
    }
    fn render(&self) -> String {
        self.to_string()
    }
}

/// `auto` means unset.
impl Value for Option<f64> {
    fn parse_value(s: &str) -> Result<Self, String> {
        if s == "auto" {
            Ok(None)
        } else {
            f64::parse_value(s).map(Some)
        }
    }
    fn render(&self) -> String {
        self.map_or_else(|| "auto".to_string(), |x| x.to_string())
    }
}

impl Value for Exec {
    fn parse_value(s: &str) -> Result<Self, String> {
        match s {
            "parallel" => Ok(Exec::Parallel),
            "sequential" => Ok(Exec::Sequential),
            _ => Err("expected parallel or sequential".into()),
        }
    }
    fn render(&self) -> String {
        match self {
            Exec::Parallel => "parallel".into(),
            Exec::Sequential => "sequential".into(),
        }
    }
}

macro_rules! config_keys {
    ($($key:literal => $($field:ident $([$idx:literal])?).+;)*) => {
        impl RunConfig {
            /// All keys in canonical order.
            pub const KEYS: &'static [&'static str] = &[$($key),*];

            pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
                let invalid = |msg: String| ConfigError::InvalidValue { key: key.to_string(), value: value.to_string(), msg };
                match key {
                    $($key => { self.$($field $([$idx])?).+ = Value::parse_value(value).map_err(invalid)?; })*
                    _ => return Err(ConfigError::UnknownKey(key.to_string())),
                }
                Ok(())
            }

            pub fn get(&self, key: &str) -> Option<String> {
                match key {
                    $($key => Some(self.$($field $([$idx])?).+.render()),)*
                    _ => None,
                }
            }
        }
    };
}

config_keys! {
    "train.seed" => train.seed;
    "train.gamma" => train.gamma;
    "train.lambda" => train.lambda;
    "train.lr_start" => train.lr_start;
    "train.lr_end" => train.lr_end;
    "train.steps_per_env" => train.steps_per_env;
    "train.n_envs" => train.n_envs;
    "train.clip" => train.clip;
    "train.epochs" => train.epochs;
    "train.minibatch" => train.minibatch;
    "train.value_coef" => train.value_coef;
    "train.entropy_coef" => train.entropy_coef;
    "train.max_grad_norm" => train.max_grad_norm;
    "train.total_steps" => train.total_steps;
    "train.hidden_size" => train.hidden_size;
    "train.hidden_layers" => train.hidden_layers;
    "train.init_log_std" => train.init_log_std;
    "train.obs_clip" => train.obs_clip;
    "train.reward_scale" => train.reward_scale;
    "train.checkpoint_every" => train.checkpoint_every;
    "train.exec" => train.exec;
    "env.range" => env.range;
    "env.duration" => env.episode.duration;
    "env.control_dt" => env.episode.control_dt;
    "env.physics_dt" => env.episode.physics_dt;
    "env.bounds_inflation" => env.episode.bounds_inflation;
    "env.randomize" => env.episode.randomize;
    "env.mass_randomization" => env.episode.mass_randomization;
    "env.inertia_randomization" => env.episode.inertia_randomization;
    "env.gravity_randomization" => env.episode.gravity_randomization;
    "env.max_reset_attempts" => env.episode.max_reset_attempts;
    "reward.k_goal" => env.reward.k_goal;
    "reward.k_heading" => env.reward.k_heading;
    "reward.k_stay" => env.reward.k_stay;
    "reward.k_accel" => env.reward.k_accel;
    "reward.k_rate" => env.reward.k_rate;
    "reward.k_thrust_smooth" => env.reward.k_thrust_smooth;
    "reward.k_cmd_smooth" => env.reward.k_cmd_smooth;
    "reward.k_pmm_pos" => env.reward.k_pmm_pos;
    "reward.k_pmm_vel" => env.reward.k_pmm_vel;
    "reward.convergence_radius" => env.reward.convergence_radius;
    "reward.literal_stay" => env.reward.literal_stay;
    "reward.literal_signs" => env.reward.literal_signs;
    "reward.crash_penalty" => env.reward.crash_penalty;
    "action.thrust_max" => env.action.thrust_max;
    "action.rate_max" => env.action.rate_max;
    "quad.mass" => env.quad.mass;
    "quad.inertia_x" => env.quad.inertia.x;
    "quad.inertia_y" => env.quad.inertia.y;
    "quad.inertia_z" => env.quad.inertia.z;
    "quad.arm_length" => env.quad.arm_length;
    "quad.torque_const" => env.quad.torque_const;
    "quad.thrust_coef" => env.quad.thrust_coef;
    "quad.motor_time_const" => env.quad.motor_time_const;
    "quad.drag_x" => env.quad.drag.x;
    "quad.drag_y" => env.quad.drag.y;
    "quad.drag_z" => env.quad.drag.z;
    "quad.gravity_z" => env.quad.gravity.z;
    "quad.rotor_speed_max" => env.quad.rotor_speed_max;
    "quad.rate_bandwidth_x" => env.quad.rate_bandwidth.x;
    "quad.rate_bandwidth_y" => env.quad.rate_bandwidth.y;
    "quad.rate_bandwidth_z" => env.quad.rate_bandwidth.z;
    "planner.ax_min" => env.planner.axes[0].a_min;
    "planner.ax_max" => env.planner.axes[0].a_max;
    "planner.ay_min" => env.planner.axes[1].a_min;
    "planner.ay_max" => env.planner.axes[1].a_max;
    "planner.az_min" => env.planner.axes[2].a_min;
    "planner.az_max" => env.planner.axes[2].a_max;
    "curriculum.range_1" => curriculum.ranges[0];
    "curriculum.range_2" => curriculum.ranges[1];
    "curriculum.range_3" => curriculum.ranges[2];
    "curriculum.range_4" => curriculum.ranges[3];
    "curriculum.max_stage" => curriculum.max_stage;
    "curriculum.start_stage" => curriculum.start_stage;
    "curriculum.threshold" => curriculum.threshold;
    "curriculum.eval_episodes" => curriculum.eval_episodes;
    "curriculum.eval_interval" => curriculum.eval_interval;
    "curriculum.eval_randomize" => curriculum.eval_randomize;
    "compare.velocity_scale" => compare.velocity_scale;
    "compare.switch_radius" => compare.switch_radius;
    "compare.kp_x" => compare.gains.kp.x;
    "compare.kp_y" => compare.gains.kp.y;
    "compare.kp_z" => compare.gains.kp.z;
    "compare.kd_x" => compare.gains.kd.x;
    "compare.kd_y" => compare.gains.kd.y;
    "compare.kd_z" => compare.gains.kd.z;
    "compare.feed_forward" => compare.gains.feed_forward;
    "compare.k_att" => compare.gains.k_att;
    "compare.k_yaw" => compare.gains.k_yaw;
    "compare.arrival_radius" => compare.sim.arrival.radius;
    "compare.arrival_speed" => compare.sim.arrival.max_speed;
    "compare.slack" => compare.sim.slack;
    "compare.ax_min" => compare.limits.axes[0].a_min;
    "compare.ax_max" => compare.limits.axes[0].a_max;
    "compare.ay_min" => compare.limits.axes[1].a_min;
    "compare.ay_max" => compare.limits.axes[1].a_max;
    "compare.az_min" => compare.limits.axes[2].a_min;
    "compare.az_max" => compare.limits.axes[2].a_max;
    "eval.episodes" => eval.episodes;
    "eval.stage" => eval.stage;
    "eval.success_radius" => eval.success_radius;
    "eval.seed" => eval.seed;
}

impl RunConfig {
    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let syntax = |msg: String| ConfigError::Syntax { origin: origin.to_string(), line: i + 1, msg };
            let (k, v) = line.split_once('=').ok_or_else(|| syntax("expected key = value".into()))?;
            self.set(k.trim(), v.trim()).map_err(|e| syntax(e.to_string()))?;
        }
        Ok(())
    }

    /// Applies a single `key=value` override.
    pub fn apply_override(&mut self, kv: &str) -> Result<(), ConfigError> {
        let (k, v) = kv.split_once('=').ok_or_else(|| ConfigError::InvalidValue {
            key: kv.to_string(),
            value: String::new(),
            msg: "expected key=value".into(),
        })?;
        self.set(k.trim(), v.trim())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let inv = ConfigError::Invalid;
        self.train.validate().map_err(inv)?;
        self.env.validate().map_err(|e| inv(e.to_string()))?;
        self.curriculum.validate().map_err(inv)?;
        self.compare.gains.validate().map_err(inv)?;
        self.compare.limits.validate().map_err(|e| inv(e.to_string()))?;
        if !(self.compare.velocity_scale > 0.0 && self.compare.velocity_scale <= 1.0) {
            return Err(inv("compare.velocity_scale must lie in (0, 1]".into()));
        }
        if !(self.compare.switch_radius > 0.0 && self.compare.sim.arrival.radius > 0.0 && self.compare.sim.slack >= 0.0) {
            return Err(inv("switch radius, arrival radius must be positive and slack nonnegative".into()));
        }
        if self.eval.episodes == 0 || !(1..=4).contains(&self.eval.stage) || !(self.eval.success_radius > 0.0) {
            return Err(inv("eval needs episodes > 0, stage in 1..=4 and a positive success radius".into()));
        }
        Ok(())
    }

    /// Canonical rendering of every key.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for k in Self::KEYS {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&self.get(k).expect("listed key"));
            out.push('\n');
        }
        out
    }

    pub fn hash(&self) -> [u8; 32] {
        Sha256::digest(self.render().as_bytes()).into()
    }

    /// Hash of everything that affects training, ignoring the step budget so
    /// a run can be extended on resume.
    pub fn training_hash(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        for k in Self::KEYS.iter().filter(|k| !k.starts_with("compare.") && !k.starts_with("eval.") && **k != "train.total_steps") {
            h.update(k.as_bytes());
            h.update(b"=");
            h.update(self.get(k).expect("listed key").as_bytes());
            h.update(b"\n");
        }
        h.finalize().into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_round_trips() {
        let mut c = RunConfig::default();
        c.set("train.gamma", "0.95").unwrap();
        c.set("reward.convergence_radius", "2.5").unwrap();
        c.set("train.exec", "sequential").unwrap();
        let mut d = RunConfig::default();
        d.apply_text(&c.render(), "snapshot").unwrap();
        assert_eq!(c, d);
        assert_eq!(c.render(), d.render());
    }

    #[test]
    fn defaults_render_and_parse() {
        let c = RunConfig::default();
        let mut d = RunConfig::default();
        d.apply_text(&c.render(), "x").unwrap();
        assert_eq!(c, d);
        assert_eq!(c.get("reward.convergence_radius").unwrap(), "auto");
        assert_eq!(c.get("reward.k_pmm_pos").unwrap(), "-3");
    }

    #[test]
    fn errors_name_key_and_line() {
        let mut c = RunConfig::default();
        assert_eq!(c.set("train.nope", "1"), Err(ConfigError::UnknownKey("train.nope".into())));
        let e = c.apply_text("train.gamma = 0.9\n\ntrain.epochs = many\n", "a.conf").unwrap_err();
        assert!(e.to_string().starts_with("a.conf:3:"), "{e}");
        assert!(matches!(c.apply_text("just words", "a.conf"), Err(ConfigError::Syntax { line: 1, .. })));
    }

    #[test]
    fn validation_catches_bad_values() {
        let mut c = RunConfig::default();
        c.set("curriculum.max_stage", "5").unwrap();
        assert!(c.validate().is_err());
    }

    #[test]
    fn training_hash_ignores_budget_and_eval() {
        let a = RunConfig::default();
        let mut b = a;
        b.set("train.total_steps", "10").unwrap();
        b.set("eval.episodes", "3").unwrap();
        assert_eq!(a.training_hash(), b.training_hash());
        assert_ne!(a.hash(), b.hash());
        b.set("train.gamma", "0.5").unwrap();
        assert_ne!(a.training_hash(), b.training_hash());
    }
}
