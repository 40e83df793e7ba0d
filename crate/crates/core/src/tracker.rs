//! Cascaded position and attitude tracker for point-mass references, and the
//! flight-time comparison harness.

use nalgebra::Vector3;
use thiserror::Error;

use crate::dynamics::{ActionBounds, CtbrAction, QuadParams, QuadState, Quadrotor, SimError};
use crate::env::{observe, Goal};
use crate::math::wrap_angle;
use crate::pmm::{PlanError, PlannerLimits, PmmPath, PmmSample};
use crate::ppo::Policy;
use crate::GRAVITY;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackerGains {
    pub kp: Vector3<f64>,
    pub kd: Vector3<f64>,
    /// Weight of the reference acceleration.
    pub feed_forward: f64,
    pub k_att: f64,
    pub k_yaw: f64,
}

impl Default for TrackerGains {
    fn default() -> Self {
        Self { kp: Vector3::new(6.0, 6.0, 8.0), kd: Vector3::new(4.0, 4.0, 5.0), feed_forward: 1.0, k_att: 6.0, k_yaw: 2.0 }
    }
}

impl TrackerGains {
    /// All feedback removed; the reference acceleration is still fed forward.
    pub fn zero() -> Self {
        Self { kp: Vector3::zeros(), kd: Vector3::zeros(), feed_forward: 1.0, k_att: 0.0, k_yaw: 0.0 }
    }

    pub fn validate(&self) -> Result<(), String> {
        let all = self.kp.iter().chain(self.kd.iter()).copied().chain([self.feed_forward, self.k_att, self.k_yaw]);
        if all.into_iter().all(|g| g >= 0.0 && g.is_finite()) {
            Ok(())
        } else {
            Err("tracker gains must be finite and nonnegative".into())
        }
    }
}

/// Thrust along the current body z and reduced-attitude rate commands.
pub fn track_step(s: &QuadState, reference: &PmmSample, yaw_ref: f64, gains: &TrackerGains, bounds: &ActionBounds) -> CtbrAction {
    let a_des = gains.feed_forward * reference.a
        + gains.kp.component_mul(&(reference.p - s.p))
        + gains.kd.component_mul(&(reference.v - s.v))
        + Vector3::new(0.0, 0.0, GRAVITY);
    let r = s.rotation();
    let z_b = r.column(2).into_owned();
    let z_des = if a_des.norm() > 1e-9 { a_des.normalize() } else { z_b };
    let thrust = a_des.dot(&z_b);
    let e = r.transpose() * z_b.cross(&z_des);
    let rates = Vector3::new(gains.k_att * e.x, gains.k_att * e.y, gains.k_yaw * wrap_angle(yaw_ref - s.yaw()));
    bounds.clamp(&CtbrAction::new(thrust, rates))
}

/// Built-in comparison trajectories.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WaypointSet {
    Line,
    Zigzag,
    Semicircle,
}

impl WaypointSet {
    pub const ALL: [WaypointSet; 3] = [WaypointSet::Line, WaypointSet::Zigzag, WaypointSet::Semicircle];

    pub fn name(&self) -> &'static str {
        match self {
            WaypointSet::Line => "line",
            WaypointSet::Zigzag => "zigzag",
            WaypointSet::Semicircle => "semicircle",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|w| w.name() == name)
    }

    pub fn points(&self) -> Vec<Vector3<f64>> {
        match self {
            WaypointSet::Line => vec![Vector3::zeros(), Vector3::new(40.0, 0.0, 0.0)],
            // 10 m legs alternating across the x axis.
            WaypointSet::Zigzag => (0..5).map(|i| Vector3::new(8.0 * i as f64, if i % 2 == 1 { 6.0 } else { 0.0 }, 0.0)).collect(),
            // Radius 10 m, plane tilted 30 degrees about x.
            WaypointSet::Semicircle => (0..=6)
                .map(|i| {
                    let th = std::f64::consts::PI * i as f64 / 6.0;
                    let (s, c) = th.sin_cos();
                    let tilt = 30f64.to_radians();
                    Vector3::new(10.0 - 10.0 * c, 10.0 * s * tilt.cos(), 10.0 * s * tilt.sin())
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrivalCriterion {
    pub radius: f64,
    pub max_speed: f64,
}

impl Default for ArrivalCriterion {
    fn default() -> Self {
        Self { radius: 0.3, max_speed: 0.5 }
    }
}

impl ArrivalCriterion {
    pub fn reached(&self, s: &QuadState, goal: &Vector3<f64>) -> bool {
        (s.p - goal).norm() < self.radius && s.v.norm() < self.max_speed
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimSettings {
    pub control_dt: f64,
    pub physics_dt: f64,
    pub quad: QuadParams,
    pub bounds: ActionBounds,
    pub arrival: ArrivalCriterion,
    /// Extra time allowed beyond the planned duration.
    pub slack: f64,
}

impl Default for SimSettings {
    fn default() -> Self {
        Self {
            control_dt: 0.01,
            physics_dt: 0.001,
            quad: QuadParams::default(),
            bounds: ActionBounds::default(),
            arrival: ArrivalCriterion::default(),
            slack: 10.0,
        }
    }
}

impl SimSettings {
    fn substeps(&self) -> usize {
        (self.control_dt / self.physics_dt).round() as usize
    }
}

/// One control step of a comparison run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub p: Vector3<f64>,
    pub v: Vector3<f64>,
    pub speed: f64,
    pub reference: PmmSample,
    pub action: CtbrAction,
    pub waypoint: usize,
}

impl TraceRow {
    pub const HEADER: [&'static str; 19] = [
        "t", "px", "py", "pz", "vx", "vy", "vz", "speed", "ref_px", "ref_py", "ref_pz", "ref_vx", "ref_vy", "ref_vz", "thrust", "wx_cmd", "wy_cmd",
        "wz_cmd", "waypoint",
    ];

    pub fn fields(&self) -> Vec<String> {
        let mut out = vec![self.t.to_string()];
        out.extend(self.p.iter().chain(self.v.iter()).map(|x| x.to_string()));
        out.push(self.speed.to_string());
        out.extend(self.reference.p.iter().chain(self.reference.v.iter()).map(|x| x.to_string()));
        out.extend(self.action.to_array().iter().map(|x| x.to_string()));
        out.push(self.waypoint.to_string());
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlightMetrics {
    /// Time of first arrival at the final goal, or the run cap when never reached.
    pub flight_time: f64,
    pub arrived: bool,
    pub max_speed: f64,
    /// RMS distance to the reference position over the run.
    pub rms_error: f64,
    pub planned_time: f64,
}

#[derive(Debug, Error)]
pub enum TrackError {
    #[error("planning failed: {0}")]
    Plan(#[from] PlanError),
    #[error("simulation failed: {0}")]
    Sim(#[from] SimError),
    #[error("no policy checkpoint provided for the learned controller")]
    MissingCheckpoint,
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Flight {
    pub metrics: FlightMetrics,
    pub trace: Vec<TraceRow>,
}

struct Recorder {
    trace: Vec<TraceRow>,
    sq_err: f64,
    max_speed: f64,
    arrival: Option<f64>,
}

impl Recorder {
    fn new() -> Self {
        Self { trace: Vec::new(), sq_err: 0.0, max_speed: 0.0, arrival: None }
    }

    fn record(&mut self, row: TraceRow) {
        self.sq_err += (row.p - row.reference.p).norm_squared();
        self.max_speed = self.max_speed.max(row.speed);
        self.trace.push(row);
    }

    fn finish(self, cap: f64, planned_time: f64) -> Flight {
        let n = self.trace.len().max(1) as f64;
        let metrics = FlightMetrics {
            flight_time: self.arrival.unwrap_or(cap),
            arrived: self.arrival.is_some(),
            max_speed: self.max_speed,
            rms_error: (self.sq_err / n).sqrt(),
            planned_time,
        };
        Flight { metrics, trace: self.trace }
    }
}

fn start_state(path: &PmmPath, quad: &QuadParams) -> QuadState {
    let p0 = path.segments().first().map(|s| s.start.p).unwrap_or_else(Vector3::zeros);
    QuadState::at_rest(p0, 0.0, quad.hover_rotor_speed())
}

fn advance(quad: &Quadrotor, s: &QuadState, a: &CtbrAction, sim: &SimSettings) -> Result<QuadState, SimError> {
    let mut s = *s;
    for _ in 0..sim.substeps() {
        s = quad.integrate_step(&s, a, sim.physics_dt)?.0;
    }
    Ok(s)
}

/// Flies the tracker along `path` from rest at its start.
pub fn fly_tracker(path: &PmmPath, gains: &TrackerGains, sim: &SimSettings) -> Result<Flight, TrackError> {
    gains.validate().map_err(TrackError::Invalid)?;
    let quad = Quadrotor::new(sim.quad);
    let goal = path.sample(path.duration()).p;
    let cap = path.duration() + sim.slack;
    let n_steps = (cap / sim.control_dt).round() as usize;
    let mut s = start_state(path, &sim.quad);
    let mut rec = Recorder::new();
    for k in 0..n_steps {
        let t = k as f64 * sim.control_dt;
        let reference = path.sample(t);
        let a = track_step(&s, &reference, 0.0, gains, &sim.bounds);
        let seg = path.offsets().partition_point(|&o| o <= t).max(1) - 1;
        rec.record(TraceRow { t, p: s.p, v: s.v, speed: s.v.norm(), reference, action: a, waypoint: seg + 1 });
        if rec.arrival.is_none() && sim.arrival.reached(&s, &goal) {
            rec.arrival = Some(t);
            break;
        }
        s = advance(&quad, &s, &a, sim)?;
    }
    Ok(rec.finish(cap, path.duration()))
}

/// Flies a learned policy through `waypoints`, issuing them one at a time and
/// switching to the next once within `switch_radius` of the current one.
pub fn fly_policy(
    policy: &dyn Policy,
    waypoints: &[Vector3<f64>],
    path: &PmmPath,
    switch_radius: f64,
    sim: &SimSettings,
) -> Result<Flight, TrackError> {
    if waypoints.len() < 2 {
        return Err(TrackError::Plan(PlanError::TooFewWaypoints(waypoints.len())));
    }
    let quad = Quadrotor::new(sim.quad);
    let last = waypoints.len() - 1;
    let cap = path.duration() + sim.slack;
    let n_steps = (cap / sim.control_dt).round() as usize;
    let mut s = QuadState::at_rest(waypoints[0], 0.0, sim.quad.hover_rotor_speed());
    let mut target = 1;
    let mut prev = CtbrAction::hover();
    let mut rec = Recorder::new();
    for k in 0..n_steps {
        let t = k as f64 * sim.control_dt;
        while target < last && (s.p - waypoints[target]).norm() < switch_radius {
            target += 1;
        }
        let goal = Goal { p: waypoints[target], heading: 0.0 };
        let obs = observe(&s, &goal, &prev);
        let a = sim.bounds.clamp(&policy.act(&[obs])[0]);
        rec.record(TraceRow { t, p: s.p, v: s.v, speed: s.v.norm(), reference: path.sample(t), action: a, waypoint: target });
        if target == last && sim.arrival.reached(&s, &waypoints[last]) {
            rec.arrival = Some(t);
            break;
        }
        s = advance(&quad, &s, &a, sim)?;
        prev = a;
    }
    Ok(rec.finish(cap, path.duration()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonConfig {
    /// Planner limits of the comparison; half the training limits by default.
    pub limits: PlannerLimits,
    /// Reference speed multiplier for the tracker; accelerations scale by its square.
    pub velocity_scale: f64,
    pub gains: TrackerGains,
    pub switch_radius: f64,
    pub sim: SimSettings,
}

impl Default for ComparisonConfig {
    fn default() -> Self {
        Self {
            limits: PlannerLimits::default().scaled(0.5),
            velocity_scale: 1.0,
            gains: TrackerGains::default(),
            switch_radius: 0.5,
            sim: SimSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRun {
    pub method: &'static str,
    pub flight: Flight,
}

/// Tracker on the point-mass plan, and the policy (when given) on the same waypoints.
pub fn run_comparison(waypoints: &[Vector3<f64>], policy: Option<&dyn Policy>, cfg: &ComparisonConfig) -> Result<Vec<ComparisonRun>, TrackError> {
    if !(cfg.velocity_scale > 0.0 && cfg.velocity_scale <= 1.0) {
        return Err(TrackError::Invalid("velocity scale must lie in (0, 1]".into()));
    }
    let limits = cfg.limits.scaled(cfg.velocity_scale * cfg.velocity_scale);
    let path = PmmPath::through(waypoints, &limits)?;
    let mut runs = vec![ComparisonRun { method: "pmm_tracker", flight: fly_tracker(&path, &cfg.gains, &cfg.sim)? }];
    if let Some(p) = policy {
        let full = PmmPath::through(waypoints, &cfg.limits)?;
        runs.push(ComparisonRun { method: "policy", flight: fly_policy(p, waypoints, &full, cfg.switch_radius, &cfg.sim)? });
    }
    Ok(runs)
}
