use super::costmap::distance_to_mask;
use super::{Cell, Difficulty, DistanceField, OccupancyGrid, WorldError, DEFAULT_RESOLUTION, ROBOT_RADIUS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::VecDeque;

/// Obstacles are placed on a coarse lattice of 3x3-cell blocks (0.15 m).
const BLOCK: usize = 3;
const MAX_ATTEMPTS: usize = 100;
/// Start and goal sit this far in from the left and right edges.
const EDGE_INSET_M: f64 = 1.0;
/// No obstacle cell is placed within this distance of the start or goal.
const KEEPOUT_M: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DifficultyParams {
    /// Target occupied fraction of all cells, border included.
    pub density: f64,
    /// Minimum gap between separate obstacle clusters, in robot diameters.
    pub gap_factor: f64,
}

impl DifficultyParams {
    pub fn of(difficulty: Difficulty) -> Self {
        match difficulty {
            Difficulty::Easy => Self { density: 0.08, gap_factor: 4.0 },
            Difficulty::Medium => Self { density: 0.15, gap_factor: 2.5 },
            Difficulty::Difficult => Self { density: 0.22, gap_factor: 1.5 },
        }
    }

    pub fn min_gap_m(&self) -> f64 {
        self.gap_factor * 2.0 * ROBOT_RADIUS
    }
}

/// Generates a seeded obstacle map. Blobs of 1-3 lattice blocks are dropped
/// uniformly at random in batches; after each batch, free pockets and
/// corridors narrower than the difficulty's minimum gap are filled in.
/// Placement stops once the target density is reached. Maps whose start
/// cannot reach the goal are regenerated from an incremented sub-seed.
pub fn generate_map(
    difficulty: Difficulty,
    seed: u64,
    width_m: f64,
    height_m: f64,
) -> Result<OccupancyGrid, WorldError> {
    for dim in [width_m, height_m] {
        if !(dim >= 5.0) {
            return Err(WorldError::DimensionTooSmall(dim));
        }
    }
    let res = DEFAULT_RESOLUTION;
    let width = (width_m / res).round() as usize;
    let height = (height_m / res).round() as usize;
    let inset = (EDGE_INSET_M / res).round() as usize;
    let start = (inset, height / 2);
    let goal = (width - 1 - inset, height / 2);
    let params = DifficultyParams::of(difficulty);

    for attempt in 0..MAX_ATTEMPTS {
        let sub_seed = derive_seed(&[seed, difficulty as u64, width as u64, height as u64, attempt as u64]);
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed);
        let cells = place_obstacles(&mut rng, width, height, res, start, goal, &params);
        let grid = OccupancyGrid::from_cells(width, height, res, cells, difficulty, seed, start, goal);
        if connected(&grid, ROBOT_RADIUS) {
            return Ok(grid);
        }
    }
    Err(WorldError::Unconnected(MAX_ATTEMPTS))
}

fn place_obstacles(
    rng: &mut ChaCha8Rng,
    width: usize,
    height: usize,
    res: f64,
    start: Cell,
    goal: Cell,
    params: &DifficultyParams,
) -> Vec<bool> {
    let grid = OccupancyGrid::empty(width, height, res);
    let total = width * height;
    let target = (params.density * total as f64).ceil() as usize;
    let overshoot = total / 100;

    let anchors = [grid.cell_center(start), grid.cell_center(goal)];
    let keepout = KEEPOUT_M.max(params.min_gap_m() / 2.0 + res);
    let protected: Vec<bool> = (0..total)
        .map(|idx| {
            let (x, y) = grid.cell_center((idx % width, idx / width));
            anchors.iter().any(|&(ax, ay)| (x - ax).hypot(y - ay) < keepout)
        })
        .collect();

    let blocks_x = width.div_ceil(BLOCK);
    let blocks_y = height.div_ceil(BLOCK);
    let mut cells = grid.cells().to_vec();
    let mut occupied = cells.iter().filter(|&&c| c).count();
    let mut rounds = 0;
    while occupied < target && rounds < 4000 {
        rounds += 1;
        let per_blob = 2 * BLOCK * BLOCK;
        let mut batch = ((target - occupied) / per_blob / 2).max(1);
        loop {
            let mut trial = cells.clone();
            for _ in 0..batch {
                for (bx, by) in random_blob(rng, blocks_x, blocks_y) {
                    for dj in 0..BLOCK {
                        for di in 0..BLOCK {
                            let (i, j) = (bx * BLOCK + di, by * BLOCK + dj);
                            if i < width && j < height && !protected[j * width + i] {
                                trial[j * width + i] = true;
                            }
                        }
                    }
                }
            }
            close_gaps(&mut trial, &protected, width, height, params.min_gap_m() / res);
            let count = trial.iter().filter(|&&c| c).count();
            if count > target + overshoot && batch > 1 {
                batch /= 2;
                continue;
            }
            cells = trial;
            occupied = count;
            break;
        }
    }
    cells
}

/// Fills every free region that cannot hold a disk of diameter `gap` (cells):
/// free space is replaced by its morphological opening.
fn close_gaps(cells: &mut [bool], protected: &[bool], w: usize, h: usize, gap: f64) {
    let radius = gap / 2.0;
    let to_obstacle = distance_to_mask(cells, w, h);
    let centers: Vec<bool> = to_obstacle.iter().map(|&d| d >= radius).collect();
    let to_center = distance_to_mask(&centers, w, h);
    for idx in 0..cells.len() {
        if !cells[idx] && !protected[idx] && to_center[idx] > radius {
            cells[idx] = true;
        }
    }
}

fn random_blob(rng: &mut ChaCha8Rng, blocks_x: usize, blocks_y: usize) -> Vec<(usize, usize)> {
    let size = rng.gen_range(1..=3);
    let mut blob = vec![(rng.gen_range(0..blocks_x), rng.gen_range(0..blocks_y))];
    while blob.len() < size {
        let (bx, by) = blob[rng.gen_range(0..blob.len())];
        let (nx, ny) = match rng.gen_range(0..4) {
            0 => (bx as i64 + 1, by as i64),
            1 => (bx as i64 - 1, by as i64),
            2 => (bx as i64, by as i64 + 1),
            _ => (bx as i64, by as i64 - 1),
        };
        if nx < 0 || ny < 0 || nx as usize >= blocks_x || ny as usize >= blocks_y {
            continue;
        }
        let cand = (nx as usize, ny as usize);
        if !blob.contains(&cand) {
            blob.push(cand);
        }
    }
    blob
}

/// 8-connected flood fill over cells the robot footprint can occupy.
pub(crate) fn connected(grid: &OccupancyGrid, robot_radius: f64) -> bool {
    let field = DistanceField::compute(grid);
    let free = |c: Cell| field.at(c.0, c.1) > robot_radius;
    if !free(grid.start) || !free(grid.goal) {
        return false;
    }
    let mut seen = vec![false; grid.width * grid.height];
    let mut queue = VecDeque::from([grid.start]);
    seen[grid.index(grid.start)] = true;
    while let Some((i, j)) = queue.pop_front() {
        if (i, j) == grid.goal {
            return true;
        }
        for (di, dj) in [(-1i64, -1i64), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)] {
            let (ni, nj) = (i as i64 + di, j as i64 + dj);
            if ni < 0 || nj < 0 || ni >= grid.width as i64 || nj >= grid.height as i64 {
                continue;
            }
            let n = (ni as usize, nj as usize);
            let idx = grid.index(n);
            if !seen[idx] && free(n) {
                seen[idx] = true;
                queue.push_back(n);
            }
        }
    }
    false
}

/// splitmix64 over a sequence of words.
pub fn derive_seed(parts: &[u64]) -> u64 {
    let mut h: u64 = 0x9E37_79B9_7F4A_7C15;
    for &p in parts {
        h ^= p;
        h = h.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = h;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h = z ^ (z >> 31);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_grid() {
        let a = generate_map(Difficulty::Easy, 42, 10.0, 10.0).unwrap();
        let b = generate_map(Difficulty::Easy, 42, 10.0, 10.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn seed_changes_grid() {
        let a = generate_map(Difficulty::Easy, 42, 10.0, 10.0).unwrap();
        let b = generate_map(Difficulty::Easy, 43, 10.0, 10.0).unwrap();
        assert_ne!(a.cells(), b.cells());
    }

    #[test]
    fn too_small_is_rejected() {
        assert!(matches!(
            generate_map(Difficulty::Easy, 1, 4.0, 10.0),
            Err(WorldError::DimensionTooSmall(_))
        ));
    }

    #[test]
    fn generated_maps_are_connected_with_clear_endpoints() {
        for d in Difficulty::ALL {
            for seed in 0..5 {
                let g = generate_map(d, seed, 10.0, 10.0).unwrap();
                assert!(connected(&g, ROBOT_RADIUS));
                assert!(!g.is_occupied(g.start) && !g.is_occupied(g.goal));
                assert!(g.cell_center(g.start).0 < 2.0 && g.cell_center(g.goal).0 > 8.0);
            }
        }
    }

    #[test]
    fn density_increases_with_difficulty() {
        let mean = |d| {
            (0..10)
                .map(|s| generate_map(d, s, 10.0, 10.0).unwrap().occupied_fraction())
                .sum::<f64>()
                / 10.0
        };
        let (e, m, h) = (mean(Difficulty::Easy), mean(Difficulty::Medium), mean(Difficulty::Difficult));
        assert!(e < m && m < h, "{e} {m} {h}");
    }
}
