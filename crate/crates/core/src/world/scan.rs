use super::{OccupancyGrid, Pose, WorldError};

pub const SCAN_BEAMS: usize = 720;
/// Field of view, radians (270 degrees).
pub const SCAN_FOV: f64 = 1.5 * std::f64::consts::PI;
pub const SCAN_MAX_RANGE: f64 = 2.0;

/// A planar lidar sweep. Beam `k` points at `heading - fov/2 + k * fov/720`,
/// so beam 360 looks straight ahead.
#[derive(Debug, Clone, PartialEq)]
pub struct Scan {
    pub ranges: Vec<f64>,
    pub fov: f64,
    pub max_range: f64,
}

impl Scan {
    pub fn beam_angle(k: usize) -> f64 {
        -SCAN_FOV / 2.0 + k as f64 * SCAN_FOV / SCAN_BEAMS as f64
    }
}

/// Casts all beams from `pose` with an exact grid traversal; each range is
/// the distance at which the beam first enters an occupied cell, capped at
/// the maximum range.
pub fn cast_scan(grid: &OccupancyGrid, pose: &Pose) -> Result<Scan, WorldError> {
    if !grid.contains(pose.x, pose.y) {
        return Err(WorldError::OutOfBounds { x: pose.x, y: pose.y });
    }
    let ranges = (0..SCAN_BEAMS)
        .map(|k| {
            let a = pose.w + Scan::beam_angle(k);
            ray_distance(grid, pose.x, pose.y, a.cos(), a.sin(), SCAN_MAX_RANGE)
        })
        .collect();
    Ok(Scan {
        ranges,
        fov: SCAN_FOV,
        max_range: SCAN_MAX_RANGE,
    })
}

/// Amanatides-Woo traversal. Returns the entry distance of the first
/// occupied cell along the ray, or `max_range`.
pub(crate) fn ray_distance(grid: &OccupancyGrid, x0: f64, y0: f64, dx: f64, dy: f64, max_range: f64) -> f64 {
    let res = grid.resolution();
    let Some((mut i, mut j)) = grid.cell_at(x0, y0) else {
        return f64::MIN_POSITIVE;
    };
    if grid.is_occupied((i, j)) {
        // Sensor inside an obstacle: report the smallest positive reading.
        return f64::MIN_POSITIVE;
    }
    let step_i: i64 = if dx > 0.0 { 1 } else { -1 };
    let step_j: i64 = if dy > 0.0 { 1 } else { -1 };
    let next_boundary = |c: usize, step: i64| -> f64 {
        if step > 0 {
            (c + 1) as f64 * res
        } else {
            c as f64 * res
        }
    };
    let mut t_max_x = if dx.abs() < 1e-15 {
        f64::INFINITY
    } else {
        (next_boundary(i, step_i) - x0) / dx
    };
    let mut t_max_y = if dy.abs() < 1e-15 {
        f64::INFINITY
    } else {
        (next_boundary(j, step_j) - y0) / dy
    };
    let t_delta_x = if dx.abs() < 1e-15 { f64::INFINITY } else { res / dx.abs() };
    let t_delta_y = if dy.abs() < 1e-15 { f64::INFINITY } else { res / dy.abs() };

    loop {
        let t = if t_max_x < t_max_y {
            let t = t_max_x;
            t_max_x += t_delta_x;
            let ni = i as i64 + step_i;
            if ni < 0 || ni >= grid.width as i64 {
                return t.clamp(f64::MIN_POSITIVE, max_range);
            }
            i = ni as usize;
            t
        } else {
            let t = t_max_y;
            t_max_y += t_delta_y;
            let nj = j as i64 + step_j;
            if nj < 0 || nj >= grid.height as i64 {
                return t.clamp(f64::MIN_POSITIVE, max_range);
            }
            j = nj as usize;
            t
        };
        if t >= max_range {
            return max_range;
        }
        if grid.is_occupied((i, j)) {
            return t.max(f64::MIN_POSITIVE);
        }
    }
}
