//! Analytical minimum-time point-mass (PMM) trajectories.
//!
//! Each axis is an independent double integrator with box-constrained
//! acceleration. The minimum-time profile is bang-bang with at most one
//! switch; the three axes are then synchronized to the slowest one by
//! scaling the faster axes' accelerations down.

use nalgebra::Vector3;
use thiserror::Error;

use crate::GRAVITY;

/// Relative slack when deciding whether a computed duration is "negative".
const TIME_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisBoundary {
    pub p0: f64,
    pub v0: f64,
    pub p2: f64,
    pub v2: f64,
}

impl AxisBoundary {
    pub fn new(p0: f64, v0: f64, p2: f64, v2: f64) -> Self {
        Self { p0, v0, p2, v2 }
    }

    fn is_finite(&self) -> bool {
        self.p0.is_finite() && self.v0.is_finite() && self.p2.is_finite() && self.v2.is_finite()
    }

    fn scale(&self) -> f64 {
        1.0 + self.p0.abs().max(self.p2.abs()) + self.v0.abs().max(self.v2.abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisLimits {
    pub a_min: f64,
    pub a_max: f64,
}

impl AxisLimits {
    pub fn new(a_min: f64, a_max: f64) -> Result<Self, PlanError> {
        let lim = Self { a_min, a_max };
        lim.validate()?;
        Ok(lim)
    }

    pub fn symmetric(a: f64) -> Result<Self, PlanError> {
        Self::new(-a, a)
    }

    pub fn validate(&self) -> Result<(), PlanError> {
        if self.a_min.is_finite() && self.a_max.is_finite() && self.a_min < 0.0 && self.a_max > 0.0 {
            Ok(())
        } else {
            Err(PlanError::InvalidLimits { a_min: self.a_min, a_max: self.a_max })
        }
    }

    /// Both bounds multiplied by `k > 0`.
    pub fn scaled(&self, k: f64) -> Self {
        Self { a_min: self.a_min * k, a_max: self.a_max * k }
    }
}

/// Two constant-acceleration segments: `a1` for `t1`, then `a2` for `t2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisSolution {
    pub a1: f64,
    pub a2: f64,
    pub t1: f64,
    pub t2: f64,
}

impl AxisSolution {
    pub fn duration(&self) -> f64 {
        self.t1 + self.t2
    }

    /// Position and velocity at the switch time, starting from `(p0, v0)`.
    pub fn switch_state(&self, p0: f64, v0: f64) -> (f64, f64) {
        let p1 = p0 + v0 * self.t1 + 0.5 * self.a1 * self.t1 * self.t1;
        let v1 = v0 + self.a1 * self.t1;
        (p1, v1)
    }

    /// Exact piecewise integration from `(p0, v0)` to the end of the profile.
    pub fn end_state(&self, p0: f64, v0: f64) -> (f64, f64) {
        let (p1, v1) = self.switch_state(p0, v0);
        (p1 + v1 * self.t2 + 0.5 * self.a2 * self.t2 * self.t2, v1 + self.a2 * self.t2)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("invalid acceleration limits [{a_min}, {a_max}]: need a_min < 0 < a_max")]
    InvalidLimits { a_min: f64, a_max: f64 },
    #[error("non-finite boundary state {0:?}")]
    NonFinite(AxisBoundary),
    #[error("infeasible axis {boundary:?} under {limits:?}{}: {reason}", target.map(|t| format!(" at T = {t} s")).unwrap_or_default())]
    Infeasible { boundary: AxisBoundary, limits: AxisLimits, target: Option<f64>, reason: &'static str },
    #[error("need at least two waypoints, got {0}")]
    TooFewWaypoints(usize),
}

fn check_inputs(b: &AxisBoundary, lim: &AxisLimits) -> Result<(), PlanError> {
    lim.validate()?;
    if !b.is_finite() {
        return Err(PlanError::NonFinite(*b));
    }
    Ok(())
}

/// Minimum-time two-segment bang-bang profile for one axis.
///
/// For each ordering of `(a_max, a_min)` the switch velocity solves
/// `v1^2 (1/2a1 - 1/2a2) = dp + v0^2/2a1 - v2^2/2a2`, giving two roots
/// per ordering. Candidates with negative durations are dropped and the
/// fastest survivor wins; ties keep `a1 = a_max`.
pub fn solve_axis(b: &AxisBoundary, lim: &AxisLimits) -> Result<AxisSolution, PlanError> {
    check_inputs(b, lim)?;
    let dp = b.p2 - b.p0;
    if dp == 0.0 && b.v0 == b.v2 {
        return Ok(AxisSolution { a1: lim.a_max, a2: lim.a_min, t1: 0.0, t2: 0.0 });
    }

    let scale = b.scale();
    let mut best: Option<AxisSolution> = None;
    for (a1, a2) in [(lim.a_max, lim.a_min), (lim.a_min, lim.a_max)] {
        let coef = 0.5 / a1 - 0.5 / a2;
        let rhs = dp + 0.5 * b.v0 * b.v0 / a1 - 0.5 * b.v2 * b.v2 / a2;
        let mut v1_sq = rhs / coef;
        if v1_sq < 0.0 {
            // Cancellation can leave a tiny negative where the true root is 0.
            if v1_sq > -1e-12 * scale * scale {
                v1_sq = 0.0;
            } else {
                continue;
            }
        }
        let root = v1_sq.sqrt();
        for v1 in [root, -root] {
            let t1 = (v1 - b.v0) / a1;
            let t2 = (b.v2 - v1) / a2;
            let slack = TIME_EPS * scale;
            if !(t1.is_finite() && t2.is_finite()) || t1 < -slack || t2 < -slack {
                continue;
            }
            let cand = AxisSolution { a1, a2, t1: t1.max(0.0), t2: t2.max(0.0) };
            match best {
                Some(cur) if cand.duration() >= cur.duration() - TIME_EPS * (1.0 + cur.duration()) => {}
                _ => best = Some(cand),
            }
        }
    }
    best.ok_or(PlanError::Infeasible { boundary: *b, limits: *lim, target: None, reason: "no real candidate with non-negative segment times" })
}

/// Real roots of `c2 x^2 + c1 x + c0` (degrades to linear when `c2` vanishes).
fn quadratic_roots(c2: f64, c1: f64, c0: f64, x_scale: f64) -> Vec<f64> {
    let lin_mag = c1.abs() * x_scale + c0.abs();
    if c2.abs() * x_scale * x_scale <= 1e-14 * lin_mag || c2 == 0.0 {
        if c1 != 0.0 {
            return vec![-c0 / c1];
        }
        return Vec::new();
    }
    let disc = c1 * c1 - 4.0 * c2 * c0;
    let disc = if disc < 0.0 && disc > -1e-12 * c1 * c1 { 0.0 } else { disc };
    if disc < 0.0 {
        return Vec::new();
    }
    let sgn = if c1 >= 0.0 { 1.0 } else { -1.0 };
    let q = -0.5 * (c1 + sgn * disc.sqrt());
    let mut roots = Vec::with_capacity(2);
    if q != 0.0 {
        roots.push(q / c2);
        roots.push(c0 / q);
    } else {
        roots.push(0.0);
    }
    roots
}

/// Two-segment profile reaching the boundary in exactly `target` seconds.
///
/// The segment ordering of a bang-bang profile is kept and both
/// accelerations are multiplied by a common factor `s in [0, 1]`, so the
/// result stays inside the limits. Among valid profiles the one with the
/// smallest `s` is returned.
pub fn stretch_axis(b: &AxisBoundary, lim: &AxisLimits, target: f64) -> Result<AxisSolution, PlanError> {
    let fastest = solve_axis(b, lim)?;
    let t_min = fastest.duration();
    let infeasible = |reason| PlanError::Infeasible { boundary: *b, limits: *lim, target: Some(target), reason };
    if !target.is_finite() || target < t_min - 1e-9 * (1.0 + t_min) {
        return Err(infeasible("target duration below the axis minimum"));
    }
    if (target - t_min).abs() <= 1e-12 * (1.0 + t_min) {
        return Ok(fastest);
    }

    let scale = b.scale();
    let dv = b.v2 - b.v0;
    let dp = b.p2 - b.p0 - b.v0 * target;
    if dv.abs() <= 1e-14 * scale && dp.abs() <= 1e-14 * scale * (1.0 + target) {
        // Pure coast.
        return Ok(AxisSolution { a1: 0.0, a2: 0.0, t1: target, t2: 0.0 });
    }

    let mut best: Option<(f64, AxisSolution)> = None;
    for (big1, big2) in [(lim.a_max, lim.a_min), (lim.a_min, lim.a_max)] {
        let da = big1 - big2;
        // Velocity: s * L(t1) = dv with L = da*t1 + big2*T.
        // Position: s * Q(t1) = dp with Q = -da/2 t1^2 + da T t1 + big2 T^2 / 2.
        // Eliminating s: dp*L - dv*Q = 0.
        let c2 = 0.5 * dv * da;
        let c1 = dp * da - dv * da * target;
        let c0 = dp * big2 * target - 0.5 * dv * big2 * target * target;
        for t1 in quadratic_roots(c2, c1, c0, target) {
            let t1_slack = TIME_EPS * (1.0 + target);
            if !t1.is_finite() || t1 < -t1_slack || t1 > target + t1_slack {
                continue;
            }
            let t1 = t1.clamp(0.0, target);
            let lin = da * t1 + big2 * target;
            let quad = -0.5 * da * t1 * t1 + da * target * t1 + 0.5 * big2 * target * target;
            let s = if lin.abs() * target >= quad.abs() { dv / lin } else { dp / quad };
            if !(-1e-12..=1.0 + 1e-9).contains(&s) {
                continue;
            }
            let s = s.clamp(0.0, 1.0);
            let cand = AxisSolution { a1: s * big1, a2: s * big2, t1, t2: target - t1 };
            let (pe, ve) = cand.end_state(b.p0, b.v0);
            let tol = 1e-9 * scale * (1.0 + target);
            if (pe - b.p2).abs() > tol || (ve - b.v2).abs() > tol {
                continue;
            }
            match best {
                Some((s_best, _)) if s >= s_best - 1e-15 => {}
                _ => best = Some((s, cand)),
            }
        }
    }
    best.map(|(_, sol)| sol).ok_or_else(|| infeasible("no scaled two-segment profile reaches the boundary in the target time"))
}

/// Position and velocity of a point mass in 3D.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointState {
    pub p: Vector3<f64>,
    pub v: Vector3<f64>,
}

impl PointState {
    pub fn new(p: Vector3<f64>, v: Vector3<f64>) -> Self {
        Self { p, v }
    }

    pub fn at_rest(p: Vector3<f64>) -> Self {
        Self { p, v: Vector3::zeros() }
    }
}

/// Per-axis acceleration limits for 3D planning.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlannerLimits {
    pub axes: [AxisLimits; 3],
}

impl Default for PlannerLimits {
    /// Lateral `±0.8 g`; vertical `[-0.6 g, +1.2 g]`.
    fn default() -> Self {
        let lateral = AxisLimits { a_min: -0.8 * GRAVITY, a_max: 0.8 * GRAVITY };
        Self { axes: [lateral, lateral, AxisLimits { a_min: -0.6 * GRAVITY, a_max: 1.2 * GRAVITY }] }
    }
}

impl PlannerLimits {
    pub fn scaled(&self, k: f64) -> Self {
        Self { axes: self.axes.map(|a| a.scaled(k)) }
    }

    pub fn validate(&self) -> Result<(), PlanError> {
        self.axes.iter().try_for_each(AxisLimits::validate)
    }
}

/// One axis of a trajectory: start state plus its two-segment profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisProfile {
    pub p0: f64,
    pub v0: f64,
    pub solution: AxisSolution,
}

impl AxisProfile {
    /// `(p, v, a)` at `t`, coasting at the final velocity past the profile end.
    pub fn state_at(&self, t: f64) -> (f64, f64, f64) {
        let s = &self.solution;
        if t <= s.t1 {
            return (self.p0 + self.v0 * t + 0.5 * s.a1 * t * t, self.v0 + s.a1 * t, s.a1);
        }
        let (p1, v1) = s.switch_state(self.p0, self.v0);
        let tau = t - s.t1;
        if tau <= s.t2 {
            return (p1 + v1 * tau + 0.5 * s.a2 * tau * tau, v1 + s.a2 * tau, s.a2);
        }
        let (p2, v2) = s.end_state(self.p0, self.v0);
        (p2 + v2 * (tau - s.t2), v2, 0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PmmTrajectory {
    pub axes: [AxisProfile; 3],
    pub duration: f64,
    pub start: PointState,
    pub goal: PointState,
}

/// Reference state sampled from a trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PmmSample {
    pub p: Vector3<f64>,
    pub v: Vector3<f64>,
    pub a: Vector3<f64>,
}

impl PmmSample {
    pub fn hover(p: Vector3<f64>) -> Self {
        Self { p, v: Vector3::zeros(), a: Vector3::zeros() }
    }
}

fn axis_boundaries(start: &PointState, goal: &PointState) -> [AxisBoundary; 3] {
    std::array::from_fn(|i| AxisBoundary::new(start.p[i], start.v[i], goal.p[i], goal.v[i]))
}

fn stretch_all(bounds: &[AxisBoundary; 3], limits: &PlannerLimits, target: f64) -> Result<[AxisSolution; 3], PlanError> {
    let mut out = [AxisSolution { a1: 0.0, a2: 0.0, t1: 0.0, t2: 0.0 }; 3];
    for i in 0..3 {
        out[i] = stretch_axis(&bounds[i], &limits.axes[i], target)?;
    }
    Ok(out)
}

/// Synchronized 3D minimum-time trajectory between two point states.
///
/// The total duration is the slowest axis' minimum. With non-zero boundary
/// velocities a faster axis can have no scaled profile at exactly that
/// duration; the duration is then increased to the nearest value (within
/// bisection resolution) at which every axis can be stretched.
pub fn plan_state_to_state(start: &PointState, goal: &PointState, limits: &PlannerLimits) -> Result<PmmTrajectory, PlanError> {
    limits.validate()?;
    let bounds = axis_boundaries(start, goal);
    let mut duration = 0.0_f64;
    for (b, lim) in bounds.iter().zip(&limits.axes) {
        duration = duration.max(solve_axis(b, lim)?.duration());
    }

    let solutions = match stretch_all(&bounds, limits, duration) {
        Ok(sol) => sol,
        Err(first_err) => {
            let mut lo = duration;
            let mut hi = None;
            let mut t = duration.max(1e-3);
            for _ in 0..400 {
                t *= 1.02;
                if let Ok(sol) = stretch_all(&bounds, limits, t) {
                    hi = Some((t, sol));
                    break;
                }
                lo = t;
            }
            let (mut t_hi, mut sol_hi) = hi.ok_or(first_err)?;
            for _ in 0..60 {
                let mid = 0.5 * (lo + t_hi);
                match stretch_all(&bounds, limits, mid) {
                    Ok(sol) => {
                        t_hi = mid;
                        sol_hi = sol;
                    }
                    Err(_) => lo = mid,
                }
            }
            duration = t_hi;
            sol_hi
        }
    };

    let axes = std::array::from_fn(|i| AxisProfile { p0: start.p[i], v0: start.v[i], solution: solutions[i] });
    Ok(PmmTrajectory { axes, duration, start: *start, goal: *goal })
}

impl PmmTrajectory {
    /// Reference at time `t`. Negative times clamp to the start; times at or
    /// past the end return the goal with zero acceleration.
    pub fn sample(&self, t: f64) -> PmmSample {
        if t >= self.duration {
            return PmmSample { p: self.goal.p, v: self.goal.v, a: Vector3::zeros() };
        }
        let t = t.max(0.0);
        let mut out = PmmSample { p: Vector3::zeros(), v: Vector3::zeros(), a: Vector3::zeros() };
        for (i, axis) in self.axes.iter().enumerate() {
            let (p, v, a) = axis.state_at(t);
            out.p[i] = p;
            out.v[i] = v;
            out.a[i] = a;
        }
        out
    }
}

/// Free-function form of [`PmmTrajectory::sample`].
pub fn sample(traj: &PmmTrajectory, t: f64) -> PmmSample {
    traj.sample(t)
}

/// Rest-to-rest segments through consecutive waypoints.
pub fn plan_waypoints(points: &[Vector3<f64>], limits: &PlannerLimits) -> Result<Vec<PmmTrajectory>, PlanError> {
    if points.len() < 2 {
        return Err(PlanError::TooFewWaypoints(points.len()));
    }
    points.windows(2).map(|w| plan_state_to_state(&PointState::at_rest(w[0]), &PointState::at_rest(w[1]), limits)).collect()
}

/// Waypoint segments laid end to end on one time axis.
#[derive(Debug, Clone, PartialEq)]
pub struct PmmPath {
    segments: Vec<PmmTrajectory>,
    offsets: Vec<f64>,
}

impl PmmPath {
    pub fn new(segments: Vec<PmmTrajectory>) -> Self {
        let mut offsets = Vec::with_capacity(segments.len());
        let mut acc = 0.0;
        for seg in &segments {
            offsets.push(acc);
            acc += seg.duration;
        }
        Self { segments, offsets }
    }

    pub fn through(points: &[Vector3<f64>], limits: &PlannerLimits) -> Result<Self, PlanError> {
        Ok(Self::new(plan_waypoints(points, limits)?))
    }

    pub fn segments(&self) -> &[PmmTrajectory] {
        &self.segments
    }

    /// Start time of every segment on the shared time axis.
    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    pub fn duration(&self) -> f64 {
        match (self.offsets.last(), self.segments.last()) {
            (Some(o), Some(s)) => o + s.duration,
            _ => 0.0,
        }
    }

    pub fn sample(&self, t: f64) -> PmmSample {
        let idx = self.offsets.partition_point(|&o| o <= t).saturating_sub(1);
        match self.segments.get(idx) {
            Some(seg) => seg.sample(t - self.offsets[idx]),
            None => PmmSample::hover(Vector3::zeros()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lim(a_min: f64, a_max: f64) -> AxisLimits {
        AxisLimits::new(a_min, a_max).unwrap()
    }

    #[test]
    fn identity_boundary_is_zero_time() {
        let sol = solve_axis(&AxisBoundary::new(0.0, 0.0, 0.0, 0.0), &lim(-3.0, 5.0)).unwrap();
        assert_eq!(sol.duration(), 0.0);
        assert_eq!(sol.a1, 5.0);
    }

    #[test]
    fn symmetric_rest_to_rest() {
        let sol = solve_axis(&AxisBoundary::new(0.0, 0.0, 4.0, 0.0), &lim(-2.0, 2.0)).unwrap();
        assert_eq!((sol.a1, sol.a2), (2.0, -2.0));
        assert!((sol.t1 - 2f64.sqrt()).abs() < 1e-12);
        assert!((sol.t2 - 2f64.sqrt()).abs() < 1e-12);
        assert!((sol.duration() - 2.0 * 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn consistent_moving_boundary_is_instant() {
        let sol = solve_axis(&AxisBoundary::new(0.0, 1.0, 0.0, 1.0), &lim(-1.0, 1.0)).unwrap();
        assert_eq!(sol.duration(), 0.0);
    }

    #[test]
    fn invalid_limits_rejected() {
        assert!(matches!(AxisLimits::new(1.0, 2.0), Err(PlanError::InvalidLimits { .. })));
        let b = AxisBoundary::new(0.0, 0.0, 1.0, 0.0);
        let bad = AxisLimits { a_min: -1.0, a_max: 0.0 };
        assert!(solve_axis(&b, &bad).is_err());
        let nan = AxisBoundary::new(f64::NAN, 0.0, 1.0, 0.0);
        assert!(matches!(solve_axis(&nan, &lim(-1.0, 1.0)), Err(PlanError::NonFinite(_))));
    }

    #[test]
    fn stretch_fixed_point() {
        let b = AxisBoundary::new(1.0, -2.0, 5.0, 0.5);
        let l = lim(-3.0, 4.0);
        let fast = solve_axis(&b, &l).unwrap();
        assert_eq!(stretch_axis(&b, &l, fast.duration()).unwrap(), fast);
    }

    #[test]
    fn stretch_rest_to_rest_closed_form() {
        let b = AxisBoundary::new(0.0, 0.0, 4.0, 0.0);
        let l = lim(-2.0, 2.0);
        let sol = stretch_axis(&b, &l, 4.0).unwrap();
        assert!((sol.a1 - 1.0).abs() < 1e-12 && (sol.a2 + 1.0).abs() < 1e-12);
        let (pe, ve) = sol.end_state(0.0, 0.0);
        assert!((pe - 4.0).abs() < 1e-9 && ve.abs() < 1e-9);

        let t_min = solve_axis(&b, &l).unwrap().duration();
        let sol = stretch_axis(&b, &l, 2.0 * t_min).unwrap();
        assert!((sol.a1 - 0.5).abs() < 1e-12, "a1 = {}", sol.a1);
    }

    #[test]
    fn stretch_below_minimum_is_infeasible() {
        let b = AxisBoundary::new(0.0, 0.0, 4.0, 0.0);
        let err = stretch_axis(&b, &lim(-2.0, 2.0), 1.0).unwrap_err();
        assert!(matches!(err, PlanError::Infeasible { target: Some(_), .. }));
    }

    #[test]
    fn decoupled_axes() {
        let limits = PlannerLimits::default();
        let traj = plan_state_to_state(&PointState::at_rest(Vector3::zeros()), &PointState::at_rest(Vector3::new(7.0, 0.0, 0.0)), &limits).unwrap();
        let x = solve_axis(&AxisBoundary::new(0.0, 0.0, 7.0, 0.0), &limits.axes[0]).unwrap();
        assert_eq!(traj.duration, x.duration());
        for t in [0.1, 0.7, 1.3] {
            let s = traj.sample(t);
            assert_eq!((s.p.y, s.p.z, s.v.y, s.v.z, s.a.y, s.a.z), (0.0, 0.0, 0.0, 0.0, 0.0, 0.0));
        }
    }

    #[test]
    fn same_start_and_goal() {
        let p = PointState::at_rest(Vector3::new(1.0, 2.0, 3.0));
        let traj = plan_state_to_state(&p, &p, &PlannerLimits::default()).unwrap();
        assert_eq!(traj.duration, 0.0);
        assert_eq!(traj.sample(0.0).p, p.p);
    }

    #[test]
    fn sample_endpoints_and_clamp() {
        let start = PointState::new(Vector3::new(1.0, -2.0, 0.5), Vector3::new(0.3, 1.0, -0.4));
        let goal = PointState::new(Vector3::new(-4.0, 3.0, 2.0), Vector3::new(0.0, 0.5, 0.0));
        let traj = plan_state_to_state(&start, &goal, &PlannerLimits::default()).unwrap();
        let s0 = traj.sample(0.0);
        assert_eq!(s0.p, start.p);
        assert_eq!(s0.v, start.v);
        let end = traj.sample(traj.duration - 1e-15);
        assert!((end.p - goal.p).norm() < 1e-9 && (end.v - goal.v).norm() < 1e-9);
        let after = traj.sample(traj.duration + 10.0);
        assert_eq!(after.p, goal.p);
        assert_eq!(after.a, Vector3::zeros());
    }

    #[test]
    fn waypoints_collinear_sum() {
        let limits = PlannerLimits::default();
        let pts = [Vector3::zeros(), Vector3::new(3.0, 0.0, 0.0), Vector3::new(10.0, 0.0, 0.0)];
        let segs = plan_waypoints(&pts, &limits).unwrap();
        assert_eq!(segs.len(), 2);
        // rest-to-rest closed form: T = 2 sqrt(d / a)
        let a = limits.axes[0].a_max;
        let expect = 2.0 * (3.0 / a).sqrt() + 2.0 * (7.0 / a).sqrt();
        let total: f64 = segs.iter().map(|s| s.duration).sum();
        assert!((total - expect).abs() < 1e-12);
        assert!(matches!(plan_waypoints(&pts[..1], &limits), Err(PlanError::TooFewWaypoints(1))));
    }

    #[test]
    fn two_waypoints_match_state_to_state() {
        let limits = PlannerLimits::default();
        let a = Vector3::new(0.0, 1.0, 2.0);
        let b = Vector3::new(5.0, -3.0, 4.0);
        let segs = plan_waypoints(&[a, b], &limits).unwrap();
        let direct = plan_state_to_state(&PointState::at_rest(a), &PointState::at_rest(b), &limits).unwrap();
        assert_eq!(segs, vec![direct]);
    }

    #[test]
    fn zigzag_cumulative_time_monotone() {
        let pts = [Vector3::new(0.0, 0.0, 2.0), Vector3::new(10.0, 0.0, 2.0), Vector3::new(10.0, 10.0, 2.0), Vector3::new(20.0, 10.0, 2.0)];
        let path = PmmPath::through(&pts, &PlannerLimits::default()).unwrap();
        let offs = path.offsets();
        assert!(offs.windows(2).all(|w| w[1] >= w[0]));
        assert!(path.duration() >= *offs.last().unwrap());
        assert_eq!(path.sample(path.duration() + 1.0).p, pts[3]);
    }

    #[test]
    fn continuity_across_switch() {
        let start = PointState::new(Vector3::new(0.0, 0.0, 0.0), Vector3::new(2.0, -1.0, 0.5));
        let goal = PointState::at_rest(Vector3::new(6.0, 4.0, -3.0));
        let traj = plan_state_to_state(&start, &goal, &PlannerLimits::default()).unwrap();
        for axis in &traj.axes {
            let ts = axis.solution.t1;
            let (pa, va, _) = axis.state_at(ts - 1e-12);
            let (pb, vb, _) = axis.state_at(ts + 1e-12);
            assert!((pa - pb).abs() < 1e-9 && (va - vb).abs() < 1e-9);
        }
    }

    fn boundary() -> impl Strategy<Value = AxisBoundary> {
        (-10.0..10.0f64, -5.0..5.0f64, -10.0..10.0f64, -5.0..5.0f64).prop_map(|(p0, v0, p2, v2)| AxisBoundary::new(p0, v0, p2, v2))
    }

    fn limits() -> impl Strategy<Value = AxisLimits> {
        (0.5..10.0f64, 0.5..10.0f64).prop_map(|(lo, hi)| AxisLimits { a_min: -lo, a_max: hi })
    }

    proptest! {
        #[test]
        fn solve_reaches_boundary_with_bang_bang(b in boundary(), l in limits()) {
            let sol = solve_axis(&b, &l).unwrap();
            prop_assert!(sol.t1 >= 0.0 && sol.t2 >= 0.0);
            prop_assert!(sol.a1 == l.a_min || sol.a1 == l.a_max);
            prop_assert!(sol.a2 == l.a_min || sol.a2 == l.a_max);
            prop_assert!(sol.a1 != sol.a2 || sol.t1 * sol.t2 == 0.0);
            let (pe, ve) = sol.end_state(b.p0, b.v0);
            prop_assert!((pe - b.p2).abs() < 1e-9, "pos err {}", pe - b.p2);
            prop_assert!((ve - b.v2).abs() < 1e-9, "vel err {}", ve - b.v2);
        }

        #[test]
        fn stretch_reaches_boundary_within_limits(b in boundary(), l in limits(), k in 1.0..4.0f64) {
            let t_min = solve_axis(&b, &l).unwrap().duration();
            // Rest-to-rest variants are always stretchable.
            let rest = AxisBoundary::new(b.p0, 0.0, b.p2, 0.0);
            let t_rest = solve_axis(&rest, &l).unwrap().duration();
            let sol = stretch_axis(&rest, &l, t_rest * k).unwrap();
            prop_assert!((sol.duration() - t_rest * k).abs() < 1e-9);
            prop_assert!(sol.a1 >= l.a_min - 1e-12 && sol.a1 <= l.a_max + 1e-12);
            prop_assert!(sol.a2 >= l.a_min - 1e-12 && sol.a2 <= l.a_max + 1e-12);
            let (pe, ve) = sol.end_state(rest.p0, 0.0);
            prop_assert!((pe - rest.p2).abs() < 1e-9 && ve.abs() < 1e-9);
            if let Ok(sol) = stretch_axis(&b, &l, t_min * k) {
                let (pe, ve) = sol.end_state(b.p0, b.v0);
                prop_assert!((pe - b.p2).abs() < 1e-9 && (ve - b.v2).abs() < 1e-9);
            }
        }

        #[test]
        fn planned_trajectories_are_synchronized(
            p0 in prop::array::uniform3(-20.0..20.0f64),
            v0 in prop::array::uniform3(-4.0..4.0f64),
            p2 in prop::array::uniform3(-20.0..20.0f64),
            v2 in prop::array::uniform3(-4.0..4.0f64),
        ) {
            let limits = PlannerLimits::default();
            let start = PointState::new(p0.into(), v0.into());
            let goal = PointState::new(p2.into(), v2.into());
            let traj = plan_state_to_state(&start, &goal, &limits).unwrap();
            for (axis, lim) in traj.axes.iter().zip(&limits.axes) {
                prop_assert!((axis.solution.duration() - traj.duration).abs() < 1e-9);
                prop_assert!(axis.solution.a1 >= lim.a_min - 1e-12 && axis.solution.a1 <= lim.a_max + 1e-12);
                prop_assert!(axis.solution.a2 >= lim.a_min - 1e-12 && axis.solution.a2 <= lim.a_max + 1e-12);
            }
            let end = traj.sample(traj.duration * (1.0 - 1e-15));
            prop_assert!((end.p - goal.p).norm() < 1e-6);
            prop_assert!((end.v - goal.v).norm() < 1e-6);
        }
    }
}
