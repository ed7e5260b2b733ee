use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Grid cell index: `(column, row)` with row 0 at y = 0.
pub type Cell = (usize, usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Easy,
    Medium,
    Difficult,
}

impl Difficulty {
    pub const ALL: [Difficulty; 3] = [Difficulty::Easy, Difficulty::Medium, Difficulty::Difficult];

    pub fn as_str(&self) -> &'static str {
        match self {
            Difficulty::Easy => "easy",
            Difficulty::Medium => "medium",
            Difficulty::Difficult => "difficult",
        }
    }
}

impl fmt::Display for Difficulty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Difficulty {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "easy" => Ok(Difficulty::Easy),
            "medium" => Ok(Difficulty::Medium),
            "difficult" | "hard" => Ok(Difficulty::Difficult),
            other => Err(format!("unknown difficulty `{other}` (expected easy, medium or difficult)")),
        }
    }
}

/// Binary obstacle map with a designated start and goal cell.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct OccupancyGrid {
    pub width: usize,
    pub height: usize,
    resolution_bits: u64,
    cells: Vec<bool>,
    pub difficulty: Difficulty,
    pub seed: u64,
    pub start: Cell,
    pub goal: Cell,
}

impl OccupancyGrid {
    /// An obstacle-free grid with an occupied one-cell border.
    pub fn empty(width: usize, height: usize, resolution: f64) -> Self {
        assert!(width >= 3 && height >= 3, "grid needs room for a border");
        assert!(resolution > 0.0, "resolution must be positive");
        let mut grid = Self {
            width,
            height,
            resolution_bits: resolution.to_bits(),
            cells: vec![false; width * height],
            difficulty: Difficulty::Easy,
            seed: 0,
            start: (1, height / 2),
            goal: (width - 2, height / 2),
        };
        grid.fill_border();
        grid
    }

    pub(crate) fn from_cells(
        width: usize,
        height: usize,
        resolution: f64,
        cells: Vec<bool>,
        difficulty: Difficulty,
        seed: u64,
        start: Cell,
        goal: Cell,
    ) -> Self {
        debug_assert_eq!(cells.len(), width * height);
        Self {
            width,
            height,
            resolution_bits: resolution.to_bits(),
            cells,
            difficulty,
            seed,
            start,
            goal,
        }
    }

    pub fn fill_border(&mut self) {
        for i in 0..self.width {
            self.set((i, 0), true);
            self.set((i, self.height - 1), true);
        }
        for j in 0..self.height {
            self.set((0, j), true);
            self.set((self.width - 1, j), true);
        }
    }

    pub fn resolution(&self) -> f64 {
        f64::from_bits(self.resolution_bits)
    }

    pub fn width_m(&self) -> f64 {
        self.width as f64 * self.resolution()
    }

    pub fn height_m(&self) -> f64 {
        self.height as f64 * self.resolution()
    }

    #[inline]
    pub fn index(&self, cell: Cell) -> usize {
        cell.1 * self.width + cell.0
    }

    #[inline]
    pub fn is_occupied(&self, cell: Cell) -> bool {
        self.cells[self.index(cell)]
    }

    pub fn set(&mut self, cell: Cell, occupied: bool) {
        let idx = self.index(cell);
        self.cells[idx] = occupied;
    }

    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    pub fn occupied_fraction(&self) -> f64 {
        self.cells.iter().filter(|&&c| c).count() as f64 / self.cells.len() as f64
    }

    /// Cell containing a world point, or `None` outside the grid.
    #[inline]
    pub fn cell_at(&self, x: f64, y: f64) -> Option<Cell> {
        let res = self.resolution();
        if !(x >= 0.0 && y >= 0.0) {
            return None;
        }
        let i = (x / res).floor() as usize;
        let j = (y / res).floor() as usize;
        (i < self.width && j < self.height).then_some((i, j))
    }

    #[inline]
    pub fn cell_center(&self, cell: Cell) -> (f64, f64) {
        let res = self.resolution();
        ((cell.0 as f64 + 0.5) * res, (cell.1 as f64 + 0.5) * res)
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        self.cell_at(x, y).is_some()
    }
}

/// True iff an occupied cell center lies within `robot_radius` of `(x, y)`,
/// or the point is outside the grid.
pub fn check_collision(grid: &OccupancyGrid, x: f64, y: f64, robot_radius: f64) -> bool {
    if !grid.contains(x, y) {
        return true;
    }
    let res = grid.resolution();
    let r2 = robot_radius * robot_radius;
    let i_lo = ((x - robot_radius) / res - 0.5).floor().max(0.0) as usize;
    let j_lo = ((y - robot_radius) / res - 0.5).floor().max(0.0) as usize;
    let i_hi = (((x + robot_radius) / res - 0.5).ceil() as usize).min(grid.width - 1);
    let j_hi = (((y + robot_radius) / res - 0.5).ceil() as usize).min(grid.height - 1);
    for j in j_lo..=j_hi {
        for i in i_lo..=i_hi {
            if grid.is_occupied((i, j)) {
                let (cx, cy) = grid.cell_center((i, j));
                let dx = cx - x;
                let dy = cy - y;
                if dx * dx + dy * dy <= r2 {
                    return true;
                }
            }
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_collision(grid: &OccupancyGrid, x: f64, y: f64, r: f64) -> bool {
        if !grid.contains(x, y) {
            return true;
        }
        (0..grid.height).any(|j| {
            (0..grid.width).any(|i| {
                let (cx, cy) = grid.cell_center((i, j));
                grid.is_occupied((i, j)) && (cx - x).hypot(cy - y) <= r
            })
        })
    }

    #[test]
    fn empty_interior_is_collision_free() {
        let grid = OccupancyGrid::empty(100, 100, 0.05);
        for &(x, y) in &[(2.5, 2.5), (1.0, 4.0), (0.4, 0.4), (4.6, 2.0)] {
            assert!(!check_collision(&grid, x, y, 0.25));
        }
    }

    #[test]
    fn obstacle_within_radius_collides() {
        let mut grid = OccupancyGrid::empty(100, 100, 0.05);
        grid.set((50, 50), true);
        let (cx, cy) = grid.cell_center((50, 50));
        assert!(check_collision(&grid, cx + 0.1, cy, 0.25));
    }

    #[test]
    fn radius_plus_resolution_is_clear() {
        let mut grid = OccupancyGrid::empty(100, 100, 0.05);
        grid.set((50, 50), true);
        let (cx, cy) = grid.cell_center((50, 50));
        let x = cx + 0.25 + 0.05;
        assert!(!check_collision(&grid, x, cy, 0.25));
        assert!(!brute_collision(&grid, x, cy, 0.25));
    }

    #[test]
    fn outside_bounds_collides() {
        let grid = OccupancyGrid::empty(40, 40, 0.05);
        assert!(check_collision(&grid, -0.1, 1.0, 0.25));
        assert!(check_collision(&grid, 1.0, 2.5, 0.25));
    }

    #[test]
    fn windowed_check_matches_exhaustive_scan() {
        let mut grid = OccupancyGrid::empty(60, 60, 0.05);
        for k in 0..40usize {
            grid.set(((k * 37) % 58 + 1, (k * 11) % 58 + 1), true);
        }
        for a in 0..300usize {
            let x = 0.01 + (a as f64 * 0.0731) % 2.98;
            let y = 0.01 + (a as f64 * 0.1379) % 2.98;
            for &r in &[0.1, 0.25, 0.33] {
                assert_eq!(check_collision(&grid, x, y, r), brute_collision(&grid, x, y, r), "({x}, {y}, {r})");
            }
        }
    }

    #[test]
    fn difficulty_parses_case_insensitively() {
        assert_eq!("Medium".parse::<Difficulty>().unwrap(), Difficulty::Medium);
        assert!("extreme".parse::<Difficulty>().is_err());
    }
}
