//! Dijkstra global planning on the lethal mask, local-goal extraction and the
//! optimal-time reference used by the navigation score.

use crate::world::{wrap_angle, Cell, Costmap, DistanceField, OccupancyGrid, Pose, ROBOT_RADIUS};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::BinaryHeap;

/// Lookahead along the path used to pick the local goal, meters. Matches
/// top speed times the planner's rollout horizon, so the goal term never
/// penalizes driving at the configured speed cap.
pub const DEFAULT_LOOKAHEAD: f64 = 3.0;
/// Nominal top speed used for the optimal-time reference, m/s.
pub const NOMINAL_MAX_SPEED: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PlanError {
    #[error("goal unreachable from start")]
    Unreachable,
    #[error("endpoint ({0:.3}, {1:.3}) is outside the grid or inside an obstacle")]
    BlockedEndpoint(f64, f64),
    #[error("max speed must be positive, got {0}")]
    BadSpeed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalPath {
    pub waypoints: Vec<(f64, f64)>,
    pub length_m: f64,
    /// Arc length at each waypoint.
    #[serde(skip)]
    cumulative: Vec<f64>,
}

impl GlobalPath {
    pub fn from_waypoints(waypoints: Vec<(f64, f64)>) -> Self {
        assert!(!waypoints.is_empty(), "path needs at least one waypoint");
        let mut cumulative = Vec::with_capacity(waypoints.len());
        let mut acc = 0.0;
        cumulative.push(0.0);
        for w in waypoints.windows(2) {
            acc += (w[1].0 - w[0].0).hypot(w[1].1 - w[0].1);
            cumulative.push(acc);
        }
        Self {
            waypoints,
            length_m: acc,
            cumulative,
        }
    }

    pub fn arc_length(&self, index: usize) -> f64 {
        self.cumulative[index]
    }

    pub fn goal(&self) -> (f64, f64) {
        *self.waypoints.last().unwrap()
    }

    /// Index of the waypoint closest to `(x, y)`; ties go to the earliest.
    pub fn nearest_index(&self, x: f64, y: f64) -> usize {
        let mut best = (f64::INFINITY, 0);
        for (k, &(px, py)) in self.waypoints.iter().enumerate() {
            let d = (px - x).powi(2) + (py - y).powi(2);
            if d < best.0 {
                best = (d, k);
            }
        }
        best.1
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Frontier {
    cost: f64,
    idx: usize,
}

impl Eq for Frontier {}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        other.cost.total_cmp(&self.cost).then_with(|| other.idx.cmp(&self.idx))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Plans on `grid` using the default robot radius for the lethal mask.
pub fn plan_global(grid: &OccupancyGrid, start: (f64, f64), goal: (f64, f64)) -> Result<GlobalPath, PlanError> {
    let field = DistanceField::compute(grid);
    let lethal: Vec<bool> = field.values().iter().map(|&d| d <= ROBOT_RADIUS).collect();
    dijkstra(grid.width, grid.height, grid.resolution(), &lethal, start, goal)
}

/// Plans on an inflated costmap, avoiding cells with cost 1.
pub fn plan_on_costmap(costmap: &Costmap, start: (f64, f64), goal: (f64, f64)) -> Result<GlobalPath, PlanError> {
    let lethal: Vec<bool> = costmap.values().iter().map(|&c| c >= 1.0).collect();
    dijkstra(costmap.width, costmap.height, costmap.resolution, &lethal, start, goal)
}

/// 8-connected Dijkstra; diagonal steps cost sqrt(2) * resolution. The start
/// and goal cells may sit inside the lethal band (the robot is already
/// there), but every intermediate cell must be non-lethal.
fn dijkstra(
    width: usize,
    height: usize,
    res: f64,
    lethal: &[bool],
    start: (f64, f64),
    goal: (f64, f64),
) -> Result<GlobalPath, PlanError> {
    let to_cell = |(x, y): (f64, f64)| -> Option<Cell> {
        if !(x >= 0.0 && y >= 0.0) {
            return None;
        }
        let (i, j) = ((x / res).floor() as usize, (y / res).floor() as usize);
        (i < width && j < height).then_some((i, j))
    };
    let s = to_cell(start).ok_or(PlanError::BlockedEndpoint(start.0, start.1))?;
    let g = to_cell(goal).ok_or(PlanError::BlockedEndpoint(goal.0, goal.1))?;
    let (s_idx, g_idx) = (s.1 * width + s.0, g.1 * width + g.0);
    let center = |idx: usize| ((idx % width) as f64 * res + res / 2.0, (idx / width) as f64 * res + res / 2.0);

    if s_idx == g_idx {
        return Ok(GlobalPath::from_waypoints(vec![center(s_idx)]));
    }

    let diag = std::f64::consts::SQRT_2 * res;
    let mut dist = vec![f64::INFINITY; width * height];
    let mut parent = vec![usize::MAX; width * height];
    let mut heap = BinaryHeap::new();
    dist[s_idx] = 0.0;
    heap.push(Frontier { cost: 0.0, idx: s_idx });

    while let Some(Frontier { cost, idx }) = heap.pop() {
        if cost > dist[idx] {
            continue;
        }
        if idx == g_idx {
            break;
        }
        let (i, j) = ((idx % width) as i64, (idx / width) as i64);
        for (di, dj) in [(-1i64, -1i64), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)] {
            let (ni, nj) = (i + di, j + dj);
            if ni < 0 || nj < 0 || ni >= width as i64 || nj >= height as i64 {
                continue;
            }
            let n = nj as usize * width + ni as usize;
            if lethal[n] && n != g_idx {
                continue;
            }
            let step = if di != 0 && dj != 0 { diag } else { res };
            let nc = cost + step;
            if nc < dist[n] {
                dist[n] = nc;
                parent[n] = idx;
                heap.push(Frontier { cost: nc, idx: n });
            }
        }
    }
    if !dist[g_idx].is_finite() {
        return Err(PlanError::Unreachable);
    }
    let mut chain = vec![g_idx];
    while *chain.last().unwrap() != s_idx {
        chain.push(parent[*chain.last().unwrap()]);
    }
    chain.reverse();
    Ok(GlobalPath::from_waypoints(chain.into_iter().map(center).collect()))
}

/// Local goal: the first waypoint at least `lookahead_m` of arc length past
/// the waypoint nearest the robot (or the final goal), and its bearing
/// relative to the robot heading.
pub fn local_goal(path: &GlobalPath, pose: &Pose, lookahead_m: f64) -> ((f64, f64), f64) {
    let near = path.nearest_index(pose.x, pose.y);
    let target = path.arc_length(near) + lookahead_m;
    let idx = (near..path.waypoints.len())
        .find(|&k| path.arc_length(k) >= target)
        .unwrap_or(path.waypoints.len() - 1);
    let point = path.waypoints[idx];
    let phi = wrap_angle((point.1 - pose.y).atan2(point.0 - pose.x) - pose.w);
    (point, phi)
}

/// Optimal traversal time: shortest-path length over the nominal max speed.
pub fn optimal_time(grid: &OccupancyGrid, start: (f64, f64), goal: (f64, f64), v_max: f64) -> Result<f64, PlanError> {
    if !(v_max > 0.0) {
        return Err(PlanError::BadSpeed(v_max));
    }
    Ok(plan_global(grid, start, goal)?.length_m / v_max)
}

/// Bucketed nearest-waypoint lookup; exact, used by trajectory scoring.
#[derive(Debug, Clone)]
pub struct PathIndex {
    bucket: f64,
    cols: usize,
    rows: usize,
    origin: (f64, f64),
    buckets: Vec<Vec<(f64, f64)>>,
}

impl PathIndex {
    pub fn new(path: &GlobalPath) -> Self {
        let bucket = 0.5;
        let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for &(x, y) in &path.waypoints {
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
        }
        let cols = ((x1 - x0) / bucket).floor() as usize + 1;
        let rows = ((y1 - y0) / bucket).floor() as usize + 1;
        let mut buckets = vec![Vec::new(); cols * rows];
        for &(x, y) in &path.waypoints {
            let c = (((x - x0) / bucket).floor() as usize).min(cols - 1);
            let r = (((y - y0) / bucket).floor() as usize).min(rows - 1);
            buckets[r * cols + c].push((x, y));
        }
        Self {
            bucket,
            cols,
            rows,
            origin: (x0, y0),
            buckets,
        }
    }

    /// Distance from `(x, y)` to the nearest waypoint.
    pub fn distance(&self, x: f64, y: f64) -> f64 {
        let fc = (x - self.origin.0) / self.bucket;
        let fr = (y - self.origin.1) / self.bucket;
        let qc = fc.floor().clamp(0.0, (self.cols - 1) as f64) as i64;
        let qr = fr.floor().clamp(0.0, (self.rows - 1) as f64) as i64;
        let mut best2 = f64::INFINITY;
        let max_ring = self.cols.max(self.rows) as i64;
        for ring in 0..=max_ring {
            for r in (qr - ring)..=(qr + ring) {
                for c in (qc - ring)..=(qc + ring) {
                    if (r - qr).abs() != ring && (c - qc).abs() != ring {
                        continue;
                    }
                    if r < 0 || c < 0 || r >= self.rows as i64 || c >= self.cols as i64 {
                        continue;
                    }
                    for &(px, py) in &self.buckets[r as usize * self.cols + c as usize] {
                        best2 = best2.min((px - x).powi(2) + (py - y).powi(2));
                    }
                }
            }
            // Lower bound on the distance to any bucket not yet searched.
            let (b, (x0, y0)) = (self.bucket, self.origin);
            let mut bound = f64::INFINITY;
            if qc - ring > 0 {
                bound = bound.min(x - (x0 + (qc - ring) as f64 * b));
            }
            if qc + ring < self.cols as i64 - 1 {
                bound = bound.min(x0 + (qc + ring + 1) as f64 * b - x);
            }
            if qr - ring > 0 {
                bound = bound.min(y - (y0 + (qr - ring) as f64 * b));
            }
            if qr + ring < self.rows as i64 - 1 {
                bound = bound.min(y0 + (qr + ring + 1) as f64 * b - y);
            }
            if best2 <= bound.max(0.0).powi(2) {
                break;
            }
        }
        best2.sqrt()
    }
}
