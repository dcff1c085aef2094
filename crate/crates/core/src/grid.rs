//! Velocity cells of side `delta`, anchored at the origin.
//!
//! A cell `(ix, iy, iz)` is the half-open box `[ix d, (ix+1) d) x ...`, so
//! every finite velocity belongs to exactly one cell.

use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vec3::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellIndex {
    pub ix: i64,
    pub iy: i64,
    pub iz: i64,
}

impl CellIndex {
    pub const fn new(ix: i64, iy: i64, iz: i64) -> Self {
        Self { ix, iy, iz }
    }

    pub fn to_array(self) -> [i64; 3] {
        [self.ix, self.iy, self.iz]
    }
}

/// Cell side, density parameter and particle number tied by `N delta^3 = alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellGrid {
    delta: f64,
    alpha: f64,
    n_particles: usize,
}

impl CellGrid {
    /// Builds the grid with `delta = (alpha / n)^(1/3)`.
    pub fn new(n_particles: usize, alpha: f64) -> Result<Self> {
        if n_particles == 0 {
            return Err(Error::config("number of particles must be positive"));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::config(format!(
                "alpha must lie in (0, 1), got {alpha}"
            )));
        }
        let delta = (alpha / n_particles as f64).cbrt();
        Ok(Self {
            delta,
            alpha,
            n_particles,
        })
    }

    /// Builds the grid from an explicit cell side; `alpha` is derived.
    pub fn from_delta(n_particles: usize, delta: f64) -> Result<Self> {
        if n_particles == 0 {
            return Err(Error::config("number of particles must be positive"));
        }
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::config(format!(
                "delta must be positive, got {delta}"
            )));
        }
        let alpha = n_particles as f64 * delta.powi(3);
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::config(format!(
                "N delta^3 = {alpha} is outside (0, 1)"
            )));
        }
        Ok(Self {
            delta,
            alpha,
            n_particles,
        })
    }

    #[inline]
    pub fn delta(&self) -> f64 {
        self.delta
    }

    #[inline]
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    #[inline]
    pub fn n_particles(&self) -> usize {
        self.n_particles
    }

    #[inline]
    pub fn cell_volume(&self) -> f64 {
        self.delta * self.delta * self.delta
    }

    #[inline]
    pub fn cell_of(&self, v: Vec3) -> CellIndex {
        cell_of(self.delta, v)
    }

    /// Lower corner of a cell.
    pub fn cell_origin(&self, c: CellIndex) -> Vec3 {
        Vec3::new(
            c.ix as f64 * self.delta,
            c.iy as f64 * self.delta,
            c.iz as f64 * self.delta,
        )
    }

    pub fn cell_center(&self, c: CellIndex) -> Vec3 {
        let h = 0.5 * self.delta;
        self.cell_origin(c) + Vec3::new(h, h, h)
    }

    /// Whether two grids describe the same partition and scaling.
    pub fn same_as(&self, other: &CellGrid) -> bool {
        self.n_particles == other.n_particles
            && (self.delta - other.delta).abs() <= 1e-12 * self.delta
    }
}

/// Index of the cell of side `delta` containing `v`.
#[inline]
pub fn cell_of(delta: f64, v: Vec3) -> CellIndex {
    debug_assert!(v.is_finite(), "non-finite velocity {v:?}");
    CellIndex::new(
        (v.x / delta).floor() as i64,
        (v.y / delta).floor() as i64,
        (v.z / delta).floor() as i64,
    )
}

/// True iff no two velocities share a cell.
pub fn is_admissible(grid: &CellGrid, velocities: &[Vec3]) -> bool {
    build_occupancy(grid, velocities).is_ok()
}

/// Sparse map from occupied cells to the id of their single occupant.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OccupancyMap {
    cells: FxHashMap<CellIndex, u32>,
}

impl OccupancyMap {
    pub fn with_capacity(n: usize) -> Self {
        Self {
            cells: FxHashMap::with_capacity_and_hasher(n, Default::default()),
        }
    }

    #[inline]
    pub fn lookup(&self, c: CellIndex) -> Option<usize> {
        self.cells.get(&c).map(|&i| i as usize)
    }

    #[inline]
    pub fn is_occupied(&self, c: CellIndex) -> bool {
        self.cells.contains_key(&c)
    }

    /// Occupation number of a cell, 0 or 1.
    #[inline]
    pub fn occupation(&self, c: CellIndex) -> u32 {
        self.is_occupied(c) as u32
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (CellIndex, usize)> + '_ {
        self.cells.iter().map(|(&c, &i)| (c, i as usize))
    }

    /// Inserts an occupant; returns the previous occupant if the cell was taken.
    pub(crate) fn insert(&mut self, c: CellIndex, id: usize) -> Option<usize> {
        self.cells.insert(c, id as u32).map(|i| i as usize)
    }

    /// Moves particle `id` between two cells. The target must be free.
    #[inline]
    pub(crate) fn relocate(&mut self, from: CellIndex, to: CellIndex, id: usize) {
        let old = self.cells.remove(&from);
        debug_assert_eq!(old, Some(id as u32));
        let prev = self.cells.insert(to, id as u32);
        debug_assert!(prev.is_none());
    }
}

/// Builds the occupancy map, rejecting configurations with a doubly occupied cell.
pub fn build_occupancy(grid: &CellGrid, velocities: &[Vec3]) -> Result<OccupancyMap> {
    let mut occ = OccupancyMap::with_capacity(velocities.len());
    for (i, &v) in velocities.iter().enumerate() {
        let c = grid.cell_of(v);
        if let Some(first) = occ.insert(c, i) {
            return Err(Error::Admissibility {
                cell: c,
                first,
                second: i,
            });
        }
    }
    Ok(occ)
}
