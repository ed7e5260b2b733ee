//! Simulated planar world: occupancy grids, kinematics, lidar and costmaps.

mod costmap;
mod generate;
mod grid;
mod kinematics;
mod mapfile;
mod pose;
mod scan;

pub use costmap::{inflate, Costmap, DistanceField};
pub use generate::{derive_seed, generate_map, DifficultyParams};
pub use grid::{check_collision, Cell, Difficulty, OccupancyGrid};
pub use kinematics::step_kinematics;
pub use mapfile::{read_map, write_map, MapFileError};
pub use pose::{Command, Pose};
pub(crate) use pose::wrap_angle;
pub use scan::{cast_scan, Scan, SCAN_BEAMS, SCAN_FOV, SCAN_MAX_RANGE};

use std::sync::Arc;

/// Grid cell size used by generated maps, meters.
pub const DEFAULT_RESOLUTION: f64 = 0.05;
/// Circular robot footprint radius, meters.
pub const ROBOT_RADIUS: f64 = 0.25;

#[derive(Debug, thiserror::Error)]
pub enum WorldError {
    #[error("map dimension {0} m is below the 5 m minimum")]
    DimensionTooSmall(f64),
    #[error("no connected map found after {0} regeneration attempts")]
    Unconnected(usize),
    #[error("pose ({x:.3}, {y:.3}) lies outside the grid")]
    OutOfBounds { x: f64, y: f64 },
    #[error("inflation radius {0} outside [0.1, 0.6]")]
    InflationRadius(f64),
}

/// A grid together with its obstacle distance field. Immutable and cheap to
/// share between environments through an `Arc`.
#[derive(Debug, Clone)]
pub struct World {
    pub grid: OccupancyGrid,
    pub distance: DistanceField,
    pub robot_radius: f64,
}

impl World {
    pub fn new(grid: OccupancyGrid) -> Arc<Self> {
        let distance = DistanceField::compute(&grid);
        Arc::new(Self {
            grid,
            distance,
            robot_radius: ROBOT_RADIUS,
        })
    }

    pub fn costmap(&self, inflation_radius: f64) -> Result<Costmap, WorldError> {
        Costmap::from_distance(&self.distance, self.robot_radius, inflation_radius)
    }

    /// Default mission start: the `S` cell facing +x.
    pub fn start_pose(&self) -> Pose {
        let (x, y) = self.grid.cell_center(self.grid.start);
        Pose::new(x, y, 0.0)
    }

    pub fn goal_point(&self) -> (f64, f64) {
        self.grid.cell_center(self.grid.goal)
    }
}
