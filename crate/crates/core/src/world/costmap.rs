use super::{OccupancyGrid, WorldError};

/// Decay rate of the inflation cost, 1/m.
pub const INFLATION_DECAY: f64 = 5.0;
pub const INFLATION_RADIUS_MIN: f64 = 0.1;
pub const INFLATION_RADIUS_MAX: f64 = 0.6;

/// Exact Euclidean distance (meters) from every cell center to the nearest
/// occupied cell center.
#[derive(Debug, Clone)]
pub struct DistanceField {
    width: usize,
    height: usize,
    resolution: f64,
    dist: Vec<f64>,
}

impl DistanceField {
    pub fn compute(grid: &OccupancyGrid) -> Self {
        let res = grid.resolution();
        Self {
            width: grid.width,
            height: grid.height,
            resolution: res,
            dist: distance_to_mask(grid.cells(), grid.width, grid.height)
                .into_iter()
                .map(|d| d * res)
                .collect(),
        }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.dist[j * self.width + i]
    }

    pub fn values(&self) -> &[f64] {
        &self.dist
    }
}

/// Exact Euclidean distance, in cells, from each cell to the nearest `true`
/// cell of `mask`. With an empty mask every distance is a large finite value.
pub(crate) fn distance_to_mask(mask: &[bool], w: usize, h: usize) -> Vec<f64> {
    let inf = ((w * w + h * h) as f64) * 4.0 + 1.0;
    let mut sq: Vec<f64> = mask.iter().map(|&m| if m { 0.0 } else { inf }).collect();

    let n = w.max(h);
    let mut f = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut v = vec![0usize; n];
    let mut z = vec![0.0; n + 1];

    for j in 0..h {
        f[..w].copy_from_slice(&sq[j * w..(j + 1) * w]);
        edt_1d(&f[..w], &mut d[..w], &mut v, &mut z);
        sq[j * w..(j + 1) * w].copy_from_slice(&d[..w]);
    }
    for i in 0..w {
        for j in 0..h {
            f[j] = sq[j * w + i];
        }
        edt_1d(&f[..h], &mut d[..h], &mut v, &mut z);
        for j in 0..h {
            sq[j * w + i] = d[j];
        }
    }
    sq.into_iter().map(f64::sqrt).collect()
}

// Felzenszwalb-Huttenlocher lower envelope of parabolas.
fn edt_1d(f: &[f64], d: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        let qf = q as f64;
        let mut s;
        loop {
            let pf = v[k] as f64;
            s = ((f[q] + qf * qf) - (f[v[k]] + pf * pf)) / (2.0 * qf - 2.0 * pf);
            // z[0] is -inf, so this never underflows k.
            if s <= z[k] {
                k -= 1;
            } else {
                break;
            }
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for q in 0..n {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let dq = q as f64 - v[k] as f64;
        d[q] = dq * dq + f[v[k]];
    }
}

/// Inflated obstacle cost in [0, 1]; 1 marks lethal cells.
#[derive(Debug, Clone)]
pub struct Costmap {
    pub width: usize,
    pub height: usize,
    pub resolution: f64,
    pub robot_radius: f64,
    pub inflation_radius: f64,
    cost: Vec<f64>,
}

impl Costmap {
    pub fn from_distance(
        field: &DistanceField,
        robot_radius: f64,
        inflation_radius: f64,
    ) -> Result<Self, WorldError> {
        if !(INFLATION_RADIUS_MIN..=INFLATION_RADIUS_MAX).contains(&inflation_radius) {
            return Err(WorldError::InflationRadius(inflation_radius));
        }
        let cost = field
            .dist
            .iter()
            .map(|&d| inflation_cost(d, robot_radius, inflation_radius))
            .collect();
        Ok(Self {
            width: field.width,
            height: field.height,
            resolution: field.resolution,
            robot_radius,
            inflation_radius,
            cost,
        })
    }

    #[inline]
    pub fn cost(&self, i: usize, j: usize) -> f64 {
        self.cost[j * self.width + i]
    }

    /// Cost of the cell containing a world point; 1 outside the map.
    #[inline]
    pub fn cost_at(&self, x: f64, y: f64) -> f64 {
        if !(x >= 0.0 && y >= 0.0) {
            return 1.0;
        }
        let i = (x / self.resolution).floor() as usize;
        let j = (y / self.resolution).floor() as usize;
        if i >= self.width || j >= self.height {
            return 1.0;
        }
        self.cost(i, j)
    }

    #[inline]
    pub fn is_lethal(&self, i: usize, j: usize) -> bool {
        self.cost(i, j) >= 1.0
    }

    pub fn values(&self) -> &[f64] {
        &self.cost
    }
}

/// Cost as a function of obstacle distance: 1 inside the footprint, a shifted
/// exponential that reaches exactly 0 at `robot_radius + inflation_radius`.
pub fn inflation_cost(d: f64, robot_radius: f64, inflation_radius: f64) -> f64 {
    if d <= robot_radius {
        return 1.0;
    }
    let x = d - robot_radius;
    if x >= inflation_radius {
        return 0.0;
    }
    let floor = (-INFLATION_DECAY * inflation_radius).exp();
    (((-INFLATION_DECAY * x).exp() - floor) / (1.0 - floor)).clamp(0.0, 1.0)
}

/// Builds the inflated costmap of `grid` with the default robot radius.
pub fn inflate(grid: &OccupancyGrid, inflation_radius: f64) -> Result<Costmap, WorldError> {
    Costmap::from_distance(&DistanceField::compute(grid), super::ROBOT_RADIUS, inflation_radius)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_distance(grid: &OccupancyGrid, i: usize, j: usize) -> f64 {
        let mut best = f64::INFINITY;
        for jj in 0..grid.height {
            for ii in 0..grid.width {
                if grid.is_occupied((ii, jj)) {
                    let di = ii as f64 - i as f64;
                    let dj = jj as f64 - j as f64;
                    best = best.min((di * di + dj * dj).sqrt());
                }
            }
        }
        best * grid.resolution()
    }

    fn scattered_grid() -> OccupancyGrid {
        let mut grid = OccupancyGrid::empty(37, 29, 0.05);
        for k in 0..25usize {
            grid.set(((k * 13 + 5) % 35 + 1, (k * 7 + 3) % 27 + 1), true);
        }
        grid
    }

    #[test]
    fn distance_transform_is_exact() {
        let grid = scattered_grid();
        let field = DistanceField::compute(&grid);
        for j in 0..grid.height {
            for i in 0..grid.width {
                let expect = brute_distance(&grid, i, j);
                assert!((field.at(i, j) - expect).abs() < 1e-12, "cell ({i},{j})");
            }
        }
    }

    #[test]
    fn border_only_map_has_zero_interior_cost() {
        let grid = OccupancyGrid::empty(60, 60, 0.05);
        let cm = inflate(&grid, 0.3).unwrap();
        let field = DistanceField::compute(&grid);
        for j in 0..60 {
            for i in 0..60 {
                if field.at(i, j) >= 0.25 + 0.3 {
                    assert_eq!(cm.cost(i, j), 0.0);
                }
            }
        }
        assert_eq!(cm.cost(0, 0), 1.0);
    }

    #[test]
    fn cost_decays_along_rays_from_single_obstacle() {
        let mut grid = OccupancyGrid::empty(161, 161, 0.05);
        grid.set((80, 80), true);
        let cm = inflate(&grid, 0.6).unwrap();
        for &(di, dj) in &[(1i64, 0i64), (0, 1), (1, 1), (-1, 2), (-3, -1)] {
            let mut prev = f64::INFINITY;
            for s in 0..18i64 {
                let (i, j) = ((80 + di * s) as usize, (80 + dj * s) as usize);
                let c = cm.cost(i, j);
                assert!(c <= prev, "ray ({di},{dj}) step {s}");
                prev = c;
            }
        }
    }

    #[test]
    fn cost_at_boundary_is_below_one_percent() {
        for &r in &[0.1, 0.35, 0.6] {
            assert!(inflation_cost(0.25 + r - 1e-9, 0.25, r) < 0.01);
            assert_eq!(inflation_cost(0.25 + r + 1e-12, 0.25, r), 0.0);
            assert_eq!(inflation_cost(0.25, 0.25, r), 1.0);
        }
    }

    #[test]
    fn larger_radius_never_lowers_cost() {
        let grid = scattered_grid();
        let lo = inflate(&grid, 0.1).unwrap();
        let hi = inflate(&grid, 0.6).unwrap();
        for (a, b) in lo.values().iter().zip(hi.values()) {
            assert!(a <= b);
        }
    }

    #[test]
    fn rejects_out_of_range_radius() {
        let grid = OccupancyGrid::empty(10, 10, 0.05);
        assert!(matches!(inflate(&grid, 0.05), Err(WorldError::InflationRadius(_))));
        assert!(inflate(&grid, 0.61).is_err());
    }
}
