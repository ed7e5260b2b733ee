//! Dynamic-window local planner parameterized by a 7-field configuration.

use crate::global_plan::PathIndex;
use crate::world::{step_kinematics, Command, Costmap, Pose};
use serde::{Deserialize, Serialize};

/// Closed bounds `(min, max)` of every tunable field, in field order.
#[allow(clippy::approx_constant)]
pub const CONFIG_BOUNDS: [(f64, f64); 7] = [
    (0.1, 2.0),   // max_vel_x, m/s
    (0.314, 3.14), // max_vel_theta, rad/s
    (4.0, 12.0),  // vx_samples
    (8.0, 40.0),  // vtheta_samples
    (0.1, 0.5),   // path_distance_bias
    (0.1, 2.0),   // goal_distance_bias
    (0.1, 0.6),   // inflation_radius, m
];

pub const CONFIG_NAMES: [&str; 7] = [
    "max_vel_x",
    "max_vel_theta",
    "vx_samples",
    "vtheta_samples",
    "path_distance_bias",
    "goal_distance_bias",
    "inflation_radius",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    pub max_vel_x: f64,
    pub max_vel_theta: f64,
    pub vx_samples: u32,
    pub vtheta_samples: u32,
    pub path_distance_bias: f64,
    pub goal_distance_bias: f64,
    pub inflation_radius: f64,
}

impl Default for PlannerConfig {
    /// Midpoint of every bound.
    fn default() -> Self {
        Self::from_normalized(&[0.0; 7])
    }
}

impl PlannerConfig {
    pub fn to_array(&self) -> [f64; 7] {
        [
            self.max_vel_x,
            self.max_vel_theta,
            self.vx_samples as f64,
            self.vtheta_samples as f64,
            self.path_distance_bias,
            self.goal_distance_bias,
            self.inflation_radius,
        ]
    }

    fn from_array_unchecked(a: [f64; 7]) -> Self {
        Self {
            max_vel_x: a[0],
            max_vel_theta: a[1],
            vx_samples: a[2] as u32,
            vtheta_samples: a[3] as u32,
            path_distance_bias: a[4],
            goal_distance_bias: a[5],
            inflation_radius: a[6],
        }
    }

    /// Affine map from `[-1, 1]^7` onto the bounds. Inputs are clipped first;
    /// integer fields are rounded half away from zero, then clamped.
    pub fn from_normalized(a: &[f64; 7]) -> Self {
        let mut out = [0.0; 7];
        for (k, (&x, &(lo, hi))) in a.iter().zip(CONFIG_BOUNDS.iter()).enumerate() {
            let x = if x.is_nan() { 0.0 } else { x.clamp(-1.0, 1.0) };
            let v = lo + (x + 1.0) * 0.5 * (hi - lo);
            out[k] = if k == 2 || k == 3 { v.round().clamp(lo, hi) } else { v.clamp(lo, hi) };
        }
        Self::from_array_unchecked(out)
    }

    /// Inverse of [`from_normalized`](Self::from_normalized), into `[-1, 1]^7`.
    pub fn to_normalized(&self) -> [f64; 7] {
        let a = self.to_array();
        let mut out = [0.0; 7];
        for k in 0..7 {
            let (lo, hi) = CONFIG_BOUNDS[k];
            out[k] = ((a[k] - lo) / (hi - lo) * 2.0 - 1.0).clamp(-1.0, 1.0);
        }
        out
    }

    /// Every field clamped into its bound (NaN maps to the lower bound).
    pub fn clamped(&self) -> Self {
        let a = self.to_array();
        let mut out = [0.0; 7];
        for k in 0..7 {
            let (lo, hi) = CONFIG_BOUNDS[k];
            out[k] = if a[k].is_nan() { lo } else { a[k].clamp(lo, hi) };
        }
        Self::from_array_unchecked(out)
    }

    pub fn is_valid(&self) -> bool {
        self.to_array()
            .iter()
            .zip(CONFIG_BOUNDS.iter())
            .all(|(&v, &(lo, hi))| v >= lo && v <= hi)
    }
}

/// Fixed planner internals that are not part of the tunable configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DwaParams {
    /// Linear acceleration limit, m/s^2.
    pub accel_v: f64,
    /// Angular acceleration limit, rad/s^2.
    pub accel_omega: f64,
    /// Control period, s.
    pub dt: f64,
    /// Forward-simulation horizon, s.
    pub horizon: f64,
    /// Weight of the obstacle-cost term.
    pub occdist_scale: f64,
    /// Rotate in place when no rollout is feasible.
    pub recovery: bool,
}

impl Default for DwaParams {
    fn default() -> Self {
        Self {
            accel_v: 2.0,
            accel_omega: 3.2,
            dt: 0.1,
            horizon: 1.5,
            occdist_scale: 0.1,
            recovery: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DwaError {
    #[error("cannot score an infeasible rollout")]
    InfeasibleRollout,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub poses: Vec<Pose>,
    pub cmd: Command,
    pub feasible: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostTerms {
    pub path: f64,
    pub goal: f64,
    pub obstacle: f64,
    pub total: f64,
}

/// Outcome of one planning call.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub command: Command,
    /// Winning rollout and its cost; `None` when recovery (or a stop) was used.
    pub chosen: Option<(Rollout, CostTerms)>,
    pub candidates: usize,
}

fn linspace(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |k| {
        if n == 1 {
            lo
        } else if k + 1 == n {
            hi
        } else {
            lo + (hi - lo) * k as f64 / (n - 1) as f64
        }
    })
}

/// Reachable-velocity window, `[lo, hi]` on each axis. If the current speed
/// exceeds a newly lowered cap the window collapses to the maximal braking
/// value.
pub fn velocity_window(config: &PlannerConfig, current: Command, params: &DwaParams) -> ((f64, f64), (f64, f64)) {
    let dv = params.accel_v * params.dt;
    let dw = params.accel_omega * params.dt;
    let v_lo = (current.v - dv).max(0.0);
    let v_hi = (current.v + dv).min(config.max_vel_x);
    let w_lo = (current.omega - dw).max(-config.max_vel_theta);
    let w_hi = (current.omega + dw).min(config.max_vel_theta);
    let v = if v_lo <= v_hi { (v_lo, v_hi) } else { (v_lo, v_lo) };
    let w = if w_lo <= w_hi {
        (w_lo, w_hi)
    } else if current.omega > 0.0 {
        (w_lo, w_lo)
    } else {
        (w_hi, w_hi)
    };
    (v, w)
}

/// Candidate commands: `vx_samples` evenly spaced speeds times
/// `vtheta_samples` evenly spaced turn rates, speed-major.
pub fn sample_window(config: &PlannerConfig, current: Command, params: &DwaParams) -> Vec<Command> {
    let ((v_lo, v_hi), (w_lo, w_hi)) = velocity_window(config, current, params);
    let nv = config.vx_samples.max(1) as usize;
    let nw = config.vtheta_samples.max(1) as usize;
    let mut out = Vec::with_capacity(nv * nw);
    for v in linspace(v_lo, v_hi, nv) {
        for omega in linspace(w_lo, w_hi, nw) {
            out.push(Command { v, omega });
        }
    }
    out
}

/// Forward-simulates a constant command; the rollout is infeasible if any
/// predicted pose lands on a lethal cell.
pub fn rollout(costmap: &Costmap, pose: Pose, cmd: Command, horizon: f64, dt: f64) -> Rollout {
    let steps = (horizon / dt).round() as usize;
    let mut poses = Vec::with_capacity(steps);
    let mut p = pose;
    let mut feasible = true;
    for _ in 0..steps {
        p = step_kinematics(p, cmd, dt);
        if costmap.cost_at(p.x, p.y) >= 1.0 {
            feasible = false;
        }
        poses.push(p);
    }
    Rollout { poses, cmd, feasible }
}

/// Weighted rollout cost, lower is better.
pub fn score(
    rollout: &Rollout,
    costmap: &Costmap,
    local_goal: (f64, f64),
    path: &PathIndex,
    config: &PlannerConfig,
    params: &DwaParams,
) -> Result<CostTerms, DwaError> {
    if !rollout.feasible {
        return Err(DwaError::InfeasibleRollout);
    }
    let end = rollout.poses.last().copied().unwrap_or(Pose { x: f64::NAN, y: f64::NAN, w: 0.0 });
    let path_term = config.path_distance_bias * path.distance(end.x, end.y);
    let goal_term = config.goal_distance_bias * (end.x - local_goal.0).hypot(end.y - local_goal.1);
    let max_cost = rollout
        .poses
        .iter()
        .map(|p| costmap.cost_at(p.x, p.y))
        .fold(0.0, f64::max);
    let obstacle = params.occdist_scale * max_cost;
    Ok(CostTerms {
        path: path_term,
        goal: goal_term,
        obstacle,
        total: path_term + goal_term + obstacle,
    })
}

/// Strict preference: lower cost, then higher speed, then smaller |turn|.
pub fn better(a_cost: f64, a: Command, b_cost: f64, b: Command) -> bool {
    if a_cost != b_cost {
        return a_cost < b_cost;
    }
    if a.v != b.v {
        return a.v > b.v;
    }
    a.omega.abs() < b.omega.abs()
}

/// Picks the best feasible command for one control cycle. Out-of-range
/// configurations are clamped first.
pub fn plan(
    costmap: &Costmap,
    pose: Pose,
    current: Command,
    local_goal: (f64, f64),
    path: &PathIndex,
    config: &PlannerConfig,
    params: &DwaParams,
) -> Decision {
    let config = config.clamped();
    let candidates = sample_window(&config, current, params);
    let mut best: Option<(Rollout, CostTerms)> = None;
    for &cmd in &candidates {
        let r = rollout(costmap, pose, cmd, params.horizon, params.dt);
        let Ok(terms) = score(&r, costmap, local_goal, path, &config, params) else {
            continue;
        };
        let take = match &best {
            None => true,
            Some((br, bt)) => better(terms.total, cmd, bt.total, br.cmd),
        };
        if take {
            best = Some((r, terms));
        }
    }
    match best {
        Some((r, terms)) => Decision {
            command: r.cmd,
            chosen: Some((r, terms)),
            candidates: candidates.len(),
        },
        None => Decision {
            command: if params.recovery {
                Command::new(0.0, config.max_vel_theta / 2.0)
            } else {
                Command::default()
            },
            chosen: None,
            candidates: candidates.len(),
        },
    }
}
