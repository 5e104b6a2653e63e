//! Occupancy generators and the occupancy statistic `g`, the expected number
//! of cells holding at least one user.

use rand::Rng;

use crate::engine::Occupancy;
use crate::error::{AoiError, Result};
use crate::rng::{stream_rng, SimRng};
use crate::stats::{BatchMeans, Estimate};

pub trait MobilitySource {
    fn n_users(&self) -> usize;
    fn n_cells(&self) -> usize;
    fn next_occupancy(&mut self, t: u64) -> Result<Occupancy>;
}

/// Stationary occupancy law: `psi[i][j]` is the probability that user `i` is in cell `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyDistribution {
    psi: Vec<Vec<f64>>,
}

impl OccupancyDistribution {
    pub fn new(psi: Vec<Vec<f64>>) -> Result<Self> {
        if psi.is_empty() || psi[0].is_empty() {
            return Err(AoiError::invalid("occupancy distribution must be non-empty"));
        }
        let m = psi[0].len();
        for (i, row) in psi.iter().enumerate() {
            if row.len() != m {
                return Err(AoiError::invalid(format!("row {} has {} cells, expected {m}", i + 1, row.len())));
            }
            if row.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
                return Err(AoiError::invalid(format!("row {} has an entry outside [0, 1]", i + 1)));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-9 {
                return Err(AoiError::invalid(format!("row {} sums to {s}", i + 1)));
            }
        }
        Ok(OccupancyDistribution { psi })
    }

    pub fn uniform(n_users: usize, n_cells: usize) -> Self {
        OccupancyDistribution {
            psi: vec![vec![1.0 / n_cells as f64; n_cells]; n_users],
        }
    }

    /// Point mass on a fixed assignment.
    pub fn from_assignment(occ: &Occupancy) -> Self {
        let psi = occ
            .as_slice()
            .iter()
            .map(|&c| {
                let mut row = vec![0.0; occ.n_cells()];
                row[c] = 1.0;
                row
            })
            .collect();
        OccupancyDistribution { psi }
    }

    pub fn n_users(&self) -> usize {
        self.psi.len()
    }

    pub fn n_cells(&self) -> usize {
        self.psi[0].len()
    }

    pub fn prob(&self, user: usize, cell: usize) -> f64 {
        self.psi[user][cell]
    }
}

/// `g` for users that move independently of each other:
/// `sum_j (1 - prod_i (1 - psi_ij))`.
pub fn g_of_psi_independent(psi: &OccupancyDistribution) -> f64 {
    (0..psi.n_cells())
        .map(|j| {
            let all_absent: f64 = (0..psi.n_users()).map(|i| 1.0 - psi.prob(i, j)).product();
            1.0 - all_absent
        })
        .sum()
}

/// Closed form of `g` under i.i.d. uniform occupancy: `M (1 - (1 - 1/M)^N)`.
pub fn g_uniform(n_users: usize, n_cells: usize) -> f64 {
    let m = n_cells as f64;
    m * (1.0 - (1.0 - 1.0 / m).powi(n_users as i32))
}

/// Monte-Carlo estimate of the mean number of nonempty cells.
pub fn g_estimate(mobility: &mut dyn MobilitySource, slots: u64) -> Result<Estimate> {
    if slots == 0 {
        return Err(AoiError::invalid("g_estimate needs at least one slot"));
    }
    let mut bm = BatchMeans::new(slots, 50);
    for t in 1..=slots {
        let occ = mobility.next_occupancy(t)?;
        bm.push(occ.nonempty_cells() as f64);
    }
    Ok(bm.estimate())
}

/// Per-user, per-cell visit frequencies over `slots` draws.
pub fn empirical_psi(mobility: &mut dyn MobilitySource, slots: u64) -> Result<Vec<Vec<f64>>> {
    let (n, m) = (mobility.n_users(), mobility.n_cells());
    let mut counts = vec![vec![0u64; m]; n];
    for t in 1..=slots {
        let occ = mobility.next_occupancy(t)?;
        for (i, &c) in occ.as_slice().iter().enumerate() {
            counts[i][c] += 1;
        }
    }
    Ok(counts
        .into_iter()
        .map(|row| row.into_iter().map(|c| c as f64 / slots as f64).collect())
        .collect())
}

#[derive(Debug, Clone)]
pub struct StaticMobility {
    occ: Occupancy,
}

pub fn static_source(cell_of: Occupancy) -> StaticMobility {
    StaticMobility { occ: cell_of }
}

impl StaticMobility {
    pub fn occupancy_distribution(&self) -> OccupancyDistribution {
        OccupancyDistribution::from_assignment(&self.occ)
    }
}

impl MobilitySource for StaticMobility {
    fn n_users(&self) -> usize {
        self.occ.n_users()
    }

    fn n_cells(&self) -> usize {
        self.occ.n_cells()
    }

    fn next_occupancy(&mut self, _t: u64) -> Result<Occupancy> {
        Ok(self.occ.clone())
    }
}

#[derive(Debug, Clone)]
pub struct IidUniformMobility {
    n_users: usize,
    n_cells: usize,
    rng: SimRng,
}

pub fn iid_uniform_source(n_users: usize, n_cells: usize, seed: u64) -> Result<IidUniformMobility> {
    if n_users == 0 || n_cells == 0 {
        return Err(AoiError::invalid("i.i.d. mobility needs N >= 1 and M >= 1"));
    }
    Ok(IidUniformMobility {
        n_users,
        n_cells,
        rng: stream_rng(seed, crate::rng::stream::MOBILITY),
    })
}

impl MobilitySource for IidUniformMobility {
    fn n_users(&self) -> usize {
        self.n_users
    }

    fn n_cells(&self) -> usize {
        self.n_cells
    }

    fn next_occupancy(&mut self, _t: u64) -> Result<Occupancy> {
        let m = self.n_cells;
        let cells = (0..self.n_users).map(|_| self.rng.random_range(0..m)).collect();
        Occupancy::new(cells, m)
    }
}

/// Rectangular grid of cells, numbered row-major from 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridSpec {
    pub width: usize,
    pub height: usize,
}

impl GridSpec {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(AoiError::invalid("grid dimensions must be positive"));
        }
        Ok(GridSpec { width, height })
    }

    pub fn n_cells(&self) -> usize {
        self.width * self.height
    }

    /// 4-neighbourhood of `cell`. On the bounded grid, off-grid neighbours are
    /// dropped; on the torus they wrap around (so a side of length 1 or 2
    /// yields self-loops or repeated entries).
    pub fn neighbors(&self, cell: usize, torus: bool) -> Vec<usize> {
        let (w, h) = (self.width as isize, self.height as isize);
        let (r, c) = ((cell / self.width) as isize, (cell % self.width) as isize);
        let mut out = Vec::with_capacity(4);
        for (dr, dc) in [(-1, 0), (1, 0), (0, -1), (0, 1)] {
            let (mut nr, mut nc) = (r + dr, c + dc);
            if torus {
                nr = nr.rem_euclid(h);
                nc = nc.rem_euclid(w);
            } else if nr < 0 || nr >= h || nc < 0 || nc >= w {
                continue;
            }
            out.push((nr * w + nc) as usize);
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct GridWalkMobility {
    grid: GridSpec,
    neighbors: Vec<Vec<usize>>,
    positions: Vec<usize>,
    placed: bool,
    rng: SimRng,
}

/// Independent random walks on a bounded grid. Users start uniformly at
/// random; slot 1 reports the initial placement and every later slot moves
/// each user to a uniformly chosen in-grid neighbour.
pub fn grid_walk_source(grid: GridSpec, n_users: usize, seed: u64) -> GridWalkMobility {
    GridWalkMobility::build(grid, n_users, seed, false)
}

/// Same walk on the wrap-around grid, whose stationary law is uniform.
pub fn torus_walk_source(grid: GridSpec, n_users: usize, seed: u64) -> GridWalkMobility {
    GridWalkMobility::build(grid, n_users, seed, true)
}

impl GridWalkMobility {
    fn build(grid: GridSpec, n_users: usize, seed: u64, torus: bool) -> Self {
        let neighbors = (0..grid.n_cells()).map(|c| grid.neighbors(c, torus)).collect();
        GridWalkMobility {
            grid,
            neighbors,
            positions: vec![0; n_users],
            placed: false,
            rng: stream_rng(seed, crate::rng::stream::MOBILITY),
        }
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }
}

impl MobilitySource for GridWalkMobility {
    fn n_users(&self) -> usize {
        self.positions.len()
    }

    fn n_cells(&self) -> usize {
        self.grid.n_cells()
    }

    fn next_occupancy(&mut self, _t: u64) -> Result<Occupancy> {
        let m = self.grid.n_cells();
        if !self.placed {
            for p in self.positions.iter_mut() {
                *p = self.rng.random_range(0..m);
            }
            self.placed = true;
        } else {
            for p in self.positions.iter_mut() {
                let nb = &self.neighbors[*p];
                if !nb.is_empty() {
                    *p = nb[self.rng.random_range(0..nb.len())];
                }
            }
        }
        Occupancy::new(self.positions.clone(), m)
    }
}

/// Re-emits a recorded occupancy sequence.
#[derive(Debug, Clone)]
pub struct ReplayMobility {
    rows: Vec<Occupancy>,
    n_users: usize,
    n_cells: usize,
    next: usize,
}

impl ReplayMobility {
    pub fn new(rows: Vec<Occupancy>) -> Result<Self> {
        let first = rows
            .first()
            .ok_or_else(|| AoiError::invalid("cannot replay an empty occupancy sequence"))?;
        let (n_users, n_cells) = (first.n_users(), first.n_cells());
        if rows.iter().any(|r| r.n_users() != n_users || r.n_cells() != n_cells) {
            return Err(AoiError::invalid("replayed occupancies change shape"));
        }
        Ok(ReplayMobility {
            rows,
            n_users,
            n_cells,
            next: 0,
        })
    }
}

impl MobilitySource for ReplayMobility {
    fn n_users(&self) -> usize {
        self.n_users
    }

    fn n_cells(&self) -> usize {
        self.n_cells
    }

    fn next_occupancy(&mut self, t: u64) -> Result<Occupancy> {
        let row = self
            .rows
            .get(self.next)
            .cloned()
            .ok_or(AoiError::TruncatedSource { slot: t })?;
        self.next += 1;
        Ok(row)
    }
}
