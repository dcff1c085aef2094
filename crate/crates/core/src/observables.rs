//! Occupation-number estimators of the one- and two-particle marginals and the
//! distances built on them.
//!
//! For distinct cells `D_1..D_k` the estimate is
//!
//! ```text
//! f_k(D_1..D_k) = <n(D_1) ... n(D_k)> / (N (N-1) ... (N-k+1) delta^{3k})
//!               = <n(D_1) ... n(D_k)> * T_{k,N} / alpha^k
//! ```
//!
//! where `<.>` averages over snapshots. Counts are stored as integers so
//! merging replica subsets is exact in any order.

use std::io::Write;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{CellGrid, CellIndex};
use crate::process::ParticleEnsemble;
use crate::rng::SimRng;
use crate::uu::DensityField;
use crate::vec3::Vec3;

/// `N^k / (N (N-1) ... (N-k+1))`.
pub fn t_factor(k: usize, n: usize) -> f64 {
    assert!(k <= n, "order {k} exceeds particle number {n}");
    (0..k).map(|m| n as f64 / (n - m) as f64).product()
}

/// Exact upper bound `T_{k,N} / alpha^k` of any order-`k` estimate.
pub fn apriori_bound(k: usize, grid: &CellGrid) -> f64 {
    t_factor(k, grid.n_particles()) / grid.alpha().powi(k as i32)
}

/// Axis-aligned box in velocity space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompactBox {
    pub lower: Vec3,
    pub upper: Vec3,
}

impl CompactBox {
    pub fn new(lower: Vec3, upper: Vec3) -> Result<Self> {
        let ok =
            (0..3).all(|a| lower.axis(a) < upper.axis(a)) && lower.is_finite() && upper.is_finite();
        if !ok {
            return Err(Error::config(format!(
                "box lower {lower:?} must be below upper {upper:?} on every axis"
            )));
        }
        Ok(Self { lower, upper })
    }

    /// `[-r, r]^3`.
    pub fn cube(r: f64) -> Result<Self> {
        Self::new(Vec3::new(-r, -r, -r), Vec3::new(r, r, r))
    }

    /// Inclusive cell index range per axis of the cells meeting the box interior.
    pub fn cell_range(&self, delta: f64) -> [(i64, i64); 3] {
        let mut r = [(0, 0); 3];
        for (a, slot) in r.iter_mut().enumerate() {
            let lo = (self.lower.axis(a) / delta).floor() as i64;
            let hi = (self.upper.axis(a) / delta).ceil() as i64 - 1;
            *slot = (lo, hi.max(lo));
        }
        r
    }

    pub fn contains_cell(&self, delta: f64, c: CellIndex) -> bool {
        let r = self.cell_range(delta);
        c.to_array()
            .iter()
            .zip(r)
            .all(|(&i, (lo, hi))| i >= lo && i <= hi)
    }

    pub fn cell_count(&self, delta: f64) -> u64 {
        self.cell_range(delta)
            .iter()
            .map(|(lo, hi)| (hi - lo + 1) as u64)
            .product()
    }
}

type Key = [CellIndex; 2];

/// Sparse estimate of `f_1` or `f_2` on distinct cell tuples.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalEstimate {
    k: usize,
    grid: CellGrid,
    n_samples: u64,
    // k = 1 keys repeat the cell; k = 2 keys are ordered `a < b`.
    counts: FxHashMap<Key, u64>,
}

impl MarginalEstimate {
    pub fn empty(k: usize, grid: CellGrid) -> Result<Self> {
        if !(k == 1 || k == 2) {
            return Err(Error::config(format!(
                "marginal order must be 1 or 2, got {k}"
            )));
        }
        if grid.n_particles() < k {
            return Err(Error::config("fewer particles than the marginal order"));
        }
        Ok(Self {
            k,
            grid,
            n_samples: 0,
            counts: FxHashMap::default(),
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn grid(&self) -> &CellGrid {
        &self.grid
    }

    pub fn n_samples(&self) -> u64 {
        self.n_samples
    }

    /// Number of stored tuples.
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    fn check_grid(&self, grid: &CellGrid) -> Result<()> {
        if !self.grid.same_as(grid) {
            return Err(Error::config(format!(
                "snapshot grid (N = {}, delta = {}) differs from the estimate grid (N = {}, delta = {})",
                grid.n_particles(),
                grid.delta(),
                self.grid.n_particles(),
                self.grid.delta()
            )));
        }
        Ok(())
    }

    /// Adds one snapshot. With a box only tuples whose cells all meet the box are kept.
    pub fn accumulate(
        &mut self,
        ens: &ParticleEnsemble,
        within: Option<&CompactBox>,
    ) -> Result<()> {
        self.check_grid(ens.grid())?;
        let delta = self.grid.delta();
        let mut cells: Vec<CellIndex> = ens
            .cells()
            .filter(|&c| within.is_none_or(|b| b.contains_cell(delta, c)))
            .collect();
        match self.k {
            1 => {
                for c in cells {
                    *self.counts.entry([c, c]).or_insert(0) += 1;
                }
            }
            _ => {
                cells.sort_unstable();
                for (i, &a) in cells.iter().enumerate() {
                    for &b in &cells[i + 1..] {
                        *self.counts.entry([a, b]).or_insert(0) += 1;
                    }
                }
            }
        }
        self.n_samples += 1;
        Ok(())
    }

    /// Adds `times` copies of another estimate.
    pub fn merge_weighted(&mut self, other: &MarginalEstimate, times: u64) -> Result<()> {
        if other.k != self.k {
            return Err(Error::config("cannot merge estimates of different order"));
        }
        self.check_grid(&other.grid)?;
        if times == 0 {
            return Ok(());
        }
        for (key, &c) in &other.counts {
            *self.counts.entry(*key).or_insert(0) += c * times;
        }
        self.n_samples += other.n_samples * times;
        Ok(())
    }

    pub fn merge(&mut self, other: &MarginalEstimate) -> Result<()> {
        self.merge_weighted(other, 1)
    }

    /// Sum of `parts[r]` taken `mult[r]` times.
    pub fn merge_all(parts: &[MarginalEstimate], mult: &[u32]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::config("no estimates to merge"))?;
        let mut out = Self::empty(first.k, first.grid)?;
        for (p, &m) in parts.iter().zip(mult) {
            out.merge_weighted(p, m as u64)?;
        }
        Ok(out)
    }

    /// Normalized value of a count; a count equal to `n_samples` gives the bound exactly.
    #[inline]
    fn value_of(&self, count: u64) -> f64 {
        if self.n_samples == 0 {
            return 0.0;
        }
        (count as f64 / self.n_samples as f64) * apriori_bound(self.k, &self.grid)
    }

    /// Estimate at a `k`-tuple of cells; zero for unseen or repeated cells.
    pub fn value(&self, cells: &[CellIndex]) -> f64 {
        assert_eq!(cells.len(), self.k, "tuple length must equal the order");
        let key = match *cells {
            [c] => [c, c],
            [a, b] if a < b => [a, b],
            [a, b] if b < a => [b, a],
            _ => return 0.0,
        };
        self.counts.get(&key).map_or(0.0, |&c| self.value_of(c))
    }

    pub fn count(&self, cells: &[CellIndex]) -> u64 {
        match *cells {
            [c] => self.counts.get(&[c, c]).copied().unwrap_or(0),
            [a, b] if a != b => self.counts.get(&[a.min(b), a.max(b)]).copied().unwrap_or(0),
            _ => 0,
        }
    }

    /// Stored tuples with their values, one entry per unordered tuple, in cell order.
    pub fn entries(&self) -> Vec<(Vec<CellIndex>, f64)> {
        let mut out: Vec<(Vec<CellIndex>, f64)> = self
            .counts
            .iter()
            .map(|(key, &c)| (key[..self.k].to_vec(), self.value_of(c)))
            .collect();
        out.sort_by(|a, b| a.0.cmp(&b.0));
        out
    }

    /// `sum_D f_1(D) delta^3`, one for a full-space order-1 estimate.
    pub fn total_mass(&self) -> f64 {
        let d3 = self.grid.cell_volume();
        let per = if self.k == 1 { d3 } else { 2.0 * d3 * d3 };
        self.counts.values().map(|&c| self.value_of(c) * per).sum()
    }

    /// Fermionic entropy `-sum [f ln f + (1 - a f) ln(1 - a f) / a] delta^3` of an order-1 estimate.
    pub fn entropy(&self) -> f64 {
        assert_eq!(self.k, 1, "entropy is defined for order-1 estimates");
        let alpha = self.grid.alpha();
        let d3 = self.grid.cell_volume();
        let mut cells: Vec<u64> = self.counts.values().copied().collect();
        cells.sort_unstable();
        -cells
            .iter()
            .map(|&c| entropy_density(self.value_of(c), alpha) * d3)
            .sum::<f64>()
    }

    /// Writes `t,ix,iy,iz,f1_hat` or `t,ix1,iy1,iz1,ix2,iy2,iz2,f2_hat` rows, without header.
    pub fn write_csv_rows<W: Write>(&self, t: f64, out: &mut W) -> std::io::Result<()> {
        for (cells, v) in self.entries() {
            write!(out, "{t}")?;
            for c in &cells {
                write!(out, ",{},{},{}", c.ix, c.iy, c.iz)?;
            }
            writeln!(out, ",{v:e}")?;
        }
        Ok(())
    }

    pub fn csv_header(&self) -> &'static str {
        if self.k == 1 {
            "t,ix,iy,iz,f1_hat"
        } else {
            "t,ix1,iy1,iz1,ix2,iy2,iz2,f2_hat"
        }
    }
}

#[inline]
fn entropy_density(f: f64, alpha: f64) -> f64 {
    let xlx = |x: f64| if x > 0.0 { x * x.ln() } else { 0.0 };
    if alpha > 0.0 {
        xlx(f) + xlx(1.0 - alpha * f) / alpha
    } else {
        xlx(f)
    }
}

/// Fermionic entropy of a grid field, integrated with trapezoid weights.
pub fn field_entropy(f: &DensityField) -> f64 {
    let alpha = f.alpha();
    let g = f.grid();
    -f.values()
        .iter()
        .enumerate()
        .map(|(i, &v)| g.weight(i) * entropy_density(v.max(0.0), alpha))
        .sum::<f64>()
}

/// Marginal estimate over a snapshot set; order-2 estimates may be restricted to a box.
pub fn estimate_marginal_in(
    snapshots: &[ParticleEnsemble],
    k: usize,
    within: Option<&CompactBox>,
) -> Result<MarginalEstimate> {
    let first = snapshots
        .first()
        .ok_or_else(|| Error::config("at least one snapshot is required"))?;
    let mut est = MarginalEstimate::empty(k, *first.grid())?;
    for s in snapshots {
        est.accumulate(s, within)?;
    }
    Ok(est)
}

pub fn estimate_marginal(snapshots: &[ParticleEnsemble], k: usize) -> Result<MarginalEstimate> {
    estimate_marginal_in(snapshots, k, None)
}

/// Largest stored value, the discrete `delta`-norm of the estimate.
pub fn delta_norm(est: &MarginalEstimate) -> f64 {
    let max = est.counts.values().copied().max().unwrap_or(0);
    est.value_of(max)
}

/// Sub-sample offsets of the 2^3 cell-average rule, in cell units.
const SUB: [f64; 2] = [0.25, 0.75];

/// Average of the interpolated field over one cell by the 2^3 sub-sample rule.
pub fn cell_average(field: &DensityField, grid: &CellGrid, c: CellIndex) -> f64 {
    let o = grid.cell_origin(c);
    let d = grid.delta();
    let mut acc = 0.0;
    for &sx in &SUB {
        for &sy in &SUB {
            for &sz in &SUB {
                acc += field.interpolate(o + Vec3::new(sx * d, sy * d, sz * d));
            }
        }
    }
    acc / 8.0
}

/// One-dimensional interpolation weights of every node at coordinate `x`.
fn hat_weights(field: &DensityField, x: f64, out: &mut [f64]) {
    let g = field.grid();
    let n = g.n();
    let t = (x + g.half_width()) / g.spacing();
    if !(0.0..=(n - 1) as f64).contains(&t) {
        return;
    }
    let b = (t.floor() as usize).min(n - 2);
    let fr = t - b as f64;
    out[b] += 1.0 - fr;
    out[b + 1] += fr;
}

/// `sum over cells in the box of cell_average(field)`, by separability.
fn box_average_sum(field: &DensityField, grid: &CellGrid, range: [(i64, i64); 3]) -> f64 {
    let g = field.grid();
    let n = g.n();
    let d = grid.delta();
    let mut h = vec![vec![0.0; n]; 3];
    for a in 0..3 {
        let (lo, hi) = range[a];
        // only cells overlapping [-L, L] contribute
        let cl = lo.max((-g.half_width() / d).floor() as i64 - 1);
        let ch = hi.min((g.half_width() / d).ceil() as i64 + 1);
        for c in cl..=ch {
            for &s in &SUB {
                hat_weights(field, (c as f64 + s) * d, &mut h[a]);
            }
        }
        h[a].iter_mut().for_each(|w| *w *= 0.5);
    }
    let vals = field.values();
    let mut acc = 0.0;
    for ix in 0..n {
        if h[0][ix] == 0.0 {
            continue;
        }
        for iy in 0..n {
            let wxy = h[0][ix] * h[1][iy];
            if wxy == 0.0 {
                continue;
            }
            let row = &vals[g.index(ix, iy, 0)..][..n];
            let s: f64 = row.iter().zip(&h[2]).map(|(f, w)| f * w).sum();
            acc += wxy * s;
        }
    }
    acc
}

/// `sum_{D in box} |f_1(D) - avg_D(field)| delta^3`.
///
/// Cells without particles contribute `avg_D(field)`, whose total over the
/// box is summed in closed form.
pub fn l1_distance(
    est: &MarginalEstimate,
    field: &DensityField,
    within: &CompactBox,
) -> Result<f64> {
    if est.k != 1 {
        return Err(Error::config("l1_distance needs an order-1 estimate"));
    }
    // cells without particles add |a|, which is a only for a field >= 0
    if field.min() < 0.0 {
        return Ok(l1_distance_scan(est, field, within));
    }
    let grid = est.grid;
    let delta = grid.delta();
    let range = within.cell_range(delta);
    let all = box_average_sum(field, &grid, range);
    let mut occ: Vec<(CellIndex, u64)> = est
        .counts
        .iter()
        .filter(|(k, _)| within.contains_cell(delta, k[0]))
        .map(|(k, &c)| (k[0], c))
        .collect();
    occ.sort_unstable();
    let mut corr = 0.0;
    for (c, n) in occ {
        let a = cell_average(field, &grid, c);
        let e = est.value_of(n);
        corr += (e - a).abs() - a;
    }
    Ok((all + corr) * grid.cell_volume())
}

/// Cell-by-cell version of [`l1_distance`], for small boxes and testing.
pub fn l1_distance_scan(est: &MarginalEstimate, field: &DensityField, within: &CompactBox) -> f64 {
    let grid = est.grid;
    let r = within.cell_range(grid.delta());
    let mut acc = 0.0;
    for ix in r[0].0..=r[0].1 {
        for iy in r[1].0..=r[1].1 {
            for iz in r[2].0..=r[2].1 {
                let c = CellIndex::new(ix, iy, iz);
                acc += (est.value(&[c]) - cell_average(field, &grid, c)).abs();
            }
        }
    }
    acc * grid.cell_volume()
}

/// `sum over tuples in the box of |a - b| delta^{3k}`, with both orders of a pair counted.
pub fn estimate_distance(
    a: &MarginalEstimate,
    b: &MarginalEstimate,
    within: &CompactBox,
) -> Result<f64> {
    if a.k != b.k || !a.grid.same_as(&b.grid) {
        return Err(Error::config("estimates differ in order or grid"));
    }
    let delta = a.grid.delta();
    let inside = |k: &Key| within.contains_cell(delta, k[0]) && within.contains_cell(delta, k[1]);
    let mut keys: Vec<Key> = a
        .counts
        .keys()
        .chain(b.counts.keys().filter(|k| !a.counts.contains_key(*k)))
        .filter(|k| inside(k))
        .copied()
        .collect();
    keys.sort_unstable();
    let value = |e: &MarginalEstimate, k: &Key| e.counts.get(k).map_or(0.0, |&c| e.value_of(c));
    let sum: f64 = keys.iter().map(|k| (value(a, k) - value(b, k)).abs()).sum();
    let per = match a.k {
        1 => a.grid.cell_volume(),
        _ => 2.0 * a.grid.cell_volume().powi(2),
    };
    Ok(sum * per)
}

/// `sum over ordered distinct cell pairs in the box of |f_2 - f_1 (x) f_1| delta^6`.
pub fn chaos_defect(
    est2: &MarginalEstimate,
    est1: &MarginalEstimate,
    within: &CompactBox,
) -> Result<f64> {
    if est2.k != 2 || est1.k != 1 {
        return Err(Error::config(
            "chaos_defect needs an order-2 and an order-1 estimate",
        ));
    }
    if !est1.grid.same_as(&est2.grid) {
        return Err(Error::config("estimates use different grids"));
    }
    let delta = est1.grid.delta();
    let mut ones: Vec<(CellIndex, f64)> = est1
        .counts
        .iter()
        .filter(|(k, _)| within.contains_cell(delta, k[0]))
        .map(|(k, &c)| (k[0], est1.value_of(c)))
        .collect();
    ones.sort_unstable_by_key(|x| x.0);
    let sum: f64 = ones.iter().map(|x| x.1).sum();
    let sum_sq: f64 = ones.iter().map(|x| x.1 * x.1).sum();
    // sum of the product over all ordered distinct pairs
    let product_total = sum * sum - sum_sq;
    let f1 = |c: CellIndex| -> f64 {
        ones.binary_search_by(|x| x.0.cmp(&c))
            .map_or(0.0, |i| ones[i].1)
    };
    let mut pairs: Vec<(Key, u64)> = est2
        .counts
        .iter()
        .filter(|(k, _)| within.contains_cell(delta, k[0]) && within.contains_cell(delta, k[1]))
        .map(|(k, &c)| (*k, c))
        .collect();
    pairs.sort_unstable();
    let mut corr = 0.0;
    for ([a, b], c) in pairs {
        let p = f1(a) * f1(b);
        let e = est2.value_of(c);
        corr += 2.0 * ((e - p).abs() - p);
    }
    let d6 = est1.grid.cell_volume().powi(2);
    Ok(((product_total + corr) * d6).max(0.0))
}

/// Point value and bootstrap standard error of a replica statistic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapStat {
    pub value: f64,
    pub std_err: f64,
    pub resamples: usize,
}

/// Resamples `n_replicas` with replacement; `stat` receives the multiplicity of each replica.
pub fn bootstrap(
    n_replicas: usize,
    resamples: usize,
    seed: u64,
    mut stat: impl FnMut(&[u32]) -> Result<f64>,
) -> Result<BootstrapStat> {
    if n_replicas == 0 {
        return Err(Error::config("bootstrap needs at least one replica"));
    }
    let value = stat(&vec![1; n_replicas])?;
    let mut rng = SimRng::seed_from_u64(seed);
    let mut mult = vec![0u32; n_replicas];
    let mut draws = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        mult.iter_mut().for_each(|m| *m = 0);
        for _ in 0..n_replicas {
            mult[rng.random_range(0..n_replicas)] += 1;
        }
        draws.push(stat(&mult)?);
    }
    let std_err = if resamples > 1 {
        let mean = draws.iter().sum::<f64>() / resamples as f64;
        (draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (resamples - 1) as f64).sqrt()
    } else {
        0.0
    };
    Ok(BootstrapStat {
        value,
        std_err,
        resamples,
    })
}

/// Per-replica occupation lists of one snapshot time, restricted to a box.
///
/// Tuples are interned into dense ids so that estimates with replica
/// multiplicities (bootstrap resamples, half splits) cost one pass over the
/// stored lists.
#[derive(Debug, Clone)]
pub struct ReplicaOccupancy {
    k: usize,
    grid: CellGrid,
    within: CompactBox,
    keys: Vec<Key>,
    index: FxHashMap<Key, u32>,
    replicas: Vec<Vec<u32>>,
}

impl ReplicaOccupancy {
    pub fn new(k: usize, grid: CellGrid, within: CompactBox) -> Result<Self> {
        MarginalEstimate::empty(k, grid)?;
        Ok(Self {
            k,
            grid,
            within,
            keys: Vec::new(),
            index: FxHashMap::default(),
            replicas: Vec::new(),
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn grid(&self) -> &CellGrid {
        &self.grid
    }

    pub fn n_replicas(&self) -> usize {
        self.replicas.len()
    }

    /// Number of distinct tuples seen by any replica.
    pub fn n_keys(&self) -> usize {
        self.keys.len()
    }

    /// Occupied cells of one snapshot in the box, sorted.
    pub fn cells_in_box(&self, ens: &ParticleEnsemble) -> Result<Vec<CellIndex>> {
        if !self.grid.same_as(ens.grid()) {
            return Err(Error::config(
                "snapshot grid differs from the replica set grid",
            ));
        }
        let delta = self.grid.delta();
        let mut cells: Vec<CellIndex> = ens
            .cells()
            .filter(|&c| self.within.contains_cell(delta, c))
            .collect();
        cells.sort_unstable();
        Ok(cells)
    }

    /// Appends one replica given its sorted occupied cells in the box.
    pub fn push_cells(&mut self, cells: &[CellIndex]) {
        let mut ids = Vec::with_capacity(match self.k {
            1 => cells.len(),
            _ => cells.len() * cells.len().saturating_sub(1) / 2,
        });
        let mut intern = |key: Key| -> u32 {
            let next = self.keys.len() as u32;
            *self.index.entry(key).or_insert_with(|| {
                self.keys.push(key);
                next
            })
        };
        match self.k {
            1 => ids.extend(cells.iter().map(|&c| intern([c, c]))),
            _ => {
                for (i, &a) in cells.iter().enumerate() {
                    for &b in &cells[i + 1..] {
                        ids.push(intern([a, b]));
                    }
                }
            }
        }
        self.replicas.push(ids);
    }

    pub fn push(&mut self, ens: &ParticleEnsemble) -> Result<()> {
        let cells = self.cells_in_box(ens)?;
        self.push_cells(&cells);
        Ok(())
    }

    /// Dense counts under replica multiplicities and the resulting sample count.
    fn dense_counts(&self, mult: &[u32], out: &mut Vec<u64>) -> u64 {
        assert_eq!(
            mult.len(),
            self.replicas.len(),
            "one multiplicity per replica"
        );
        out.clear();
        out.resize(self.keys.len(), 0);
        for (ids, &m) in self.replicas.iter().zip(mult) {
            if m == 0 {
                continue;
            }
            for &id in ids {
                out[id as usize] += m as u64;
            }
        }
        mult.iter().map(|&m| m as u64).sum()
    }

    fn value(&self, count: u64, n_samples: u64) -> f64 {
        if n_samples == 0 {
            return 0.0;
        }
        (count as f64 / n_samples as f64) * apriori_bound(self.k, &self.grid)
    }

    /// Estimate built from the replicas taken with the given multiplicities.
    pub fn estimate(&self, mult: &[u32]) -> MarginalEstimate {
        let mut counts = Vec::new();
        let n = self.dense_counts(mult, &mut counts);
        MarginalEstimate {
            k: self.k,
            grid: self.grid,
            n_samples: n,
            counts: self
                .keys
                .iter()
                .zip(&counts)
                .filter(|(_, &c)| c > 0)
                .map(|(k, &c)| (*k, c))
                .collect(),
        }
    }

    /// [`l1_distance`] with bootstrap error over replicas.
    pub fn l1_bootstrap(
        &self,
        field: &DensityField,
        resamples: usize,
        seed: u64,
    ) -> Result<BootstrapStat> {
        if self.k != 1 {
            return Err(Error::config("l1_distance needs an order-1 estimate"));
        }
        if field.min() < 0.0 {
            return bootstrap(self.n_replicas(), resamples, seed, |m| {
                Ok(l1_distance_scan(&self.estimate(m), field, &self.within))
            });
        }
        let all = box_average_sum(field, &self.grid, self.within.cell_range(self.grid.delta()));
        let avg: Vec<f64> = self
            .keys
            .iter()
            .map(|k| cell_average(field, &self.grid, k[0]))
            .collect();
        let d3 = self.grid.cell_volume();
        let mut counts = Vec::new();
        bootstrap(self.n_replicas(), resamples, seed, |m| {
            let n = self.dense_counts(m, &mut counts);
            let corr: f64 = counts
                .iter()
                .zip(&avg)
                .filter(|(&c, _)| c > 0)
                .map(|(&c, &a)| (self.value(c, n) - a).abs() - a)
                .sum();
            Ok((all + corr) * d3)
        })
    }

    /// `sum |f_even - f_odd| delta^k` between the estimates of even and odd
    /// replicas, a direct measure of the sampling noise in the distances.
    pub fn split_half_l1(&self) -> f64 {
        let r = self.n_replicas();
        let even: Vec<u32> = (0..r).map(|i| (i % 2 == 0) as u32).collect();
        let odd: Vec<u32> = (0..r).map(|i| (i % 2 == 1) as u32).collect();
        let (mut ce, mut co) = (Vec::new(), Vec::new());
        let ne = self.dense_counts(&even, &mut ce);
        let no = self.dense_counts(&odd, &mut co);
        let per = match self.k {
            1 => self.grid.cell_volume(),
            _ => 2.0 * self.grid.cell_volume().powi(2),
        };
        ce.iter()
            .zip(&co)
            .map(|(&a, &b)| (self.value(a, ne) - self.value(b, no)).abs())
            .sum::<f64>()
            * per
    }

    /// [`chaos_defect`] with bootstrap error; `ones` must hold the same replicas at order 1.
    pub fn chaos_bootstrap(
        &self,
        ones: &ReplicaOccupancy,
        resamples: usize,
        seed: u64,
    ) -> Result<BootstrapStat> {
        if self.k != 2 || ones.k != 1 {
            return Err(Error::config(
                "chaos_defect needs an order-2 and an order-1 replica set",
            ));
        }
        if ones.n_replicas() != self.n_replicas() || !ones.grid.same_as(&self.grid) {
            return Err(Error::config(
                "order-1 and order-2 replica sets do not match",
            ));
        }
        // both cells of an occupied pair are occupied in the same replica
        let halves: Vec<(u32, u32)> = self
            .keys
            .iter()
            .map(|k| {
                let id = |c: CellIndex| {
                    ones.index.get(&[c, c]).copied().ok_or_else(|| {
                        Error::config("order-1 set misses a cell of an occupied pair")
                    })
                };
                Ok((id(k[0])?, id(k[1])?))
            })
            .collect::<Result<_>>()?;
        let d6 = self.grid.cell_volume().powi(2);
        let (mut c1, mut c2) = (Vec::new(), Vec::new());
        let mut e1 = Vec::new();
        bootstrap(self.n_replicas(), resamples, seed, |m| {
            let n1 = ones.dense_counts(m, &mut c1);
            let n2 = self.dense_counts(m, &mut c2);
            e1.clear();
            e1.extend(c1.iter().map(|&c| ones.value(c, n1)));
            let sum: f64 = e1.iter().sum();
            let sum_sq: f64 = e1.iter().map(|x| x * x).sum();
            let mut corr = 0.0;
            for (&c, &(a, b)) in c2.iter().zip(&halves) {
                if c > 0 {
                    let p = e1[a as usize] * e1[b as usize];
                    corr += 2.0 * ((self.value(c, n2) - p).abs() - p);
                }
            }
            Ok(((sum * sum - sum_sq + corr) * d6).max(0.0))
        })
    }
}
