//! Initial data: the conditioned product measure, the two-scale factorizing
//! construction and the limiting one-particle marginal of the former.

mod profiles;

pub use profiles::{builtin_profiles, OneParticleDensity, ProfileSpec};

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{CellGrid, CellIndex, OccupancyMap};
use crate::process::{ParticleEnsemble, SimConfig};
use crate::quad::GaussRule;
use crate::uu::{DensityField, VelocityGrid};
use crate::vec3::Vec3;

/// Draws per particle allowed when building the first admissible configuration.
pub const DEFAULT_RETRY_BUDGET: usize = 10_000;

fn check_density_bound(f_in: &OneParticleDensity, alpha: f64) -> Result<()> {
    let ag = alpha * f_in.sup_bound();
    if ag >= 1.0 {
        return Err(Error::config(format!(
            "alpha * G = {ag} must be below 1 for the {} profile",
            f_in.name()
        )));
    }
    Ok(())
}

/// Single-site Metropolis chain for `W_0^N ~ chi_delta f_in^{(x)N}`.
///
/// A move redraws one particle from `f_in`. The proposal density cancels in
/// the Metropolis ratio, so a move is accepted exactly when the new
/// configuration is admissible.
#[derive(Debug, Clone)]
pub struct ConditionedProductChain<'a> {
    f_in: &'a OneParticleDensity,
    grid: CellGrid,
    velocities: Vec<Vec3>,
    occupancy: OccupancyMap,
    proposed: u64,
    accepted: u64,
}

impl<'a> ConditionedProductChain<'a> {
    /// Starts from a configuration built particle by particle, redrawing on collisions.
    pub fn new<R: Rng + ?Sized>(
        f_in: &'a OneParticleDensity,
        grid: CellGrid,
        rng: &mut R,
        retry_budget: usize,
    ) -> Result<Self> {
        check_density_bound(f_in, grid.alpha())?;
        let n = grid.n_particles();
        let mut velocities = Vec::with_capacity(n);
        let mut occupancy = OccupancyMap::with_capacity(n);
        for i in 0..n {
            let mut placed = false;
            for _ in 0..retry_budget {
                let v = f_in.sample(rng);
                let c = grid.cell_of(v);
                if !occupancy.is_occupied(c) {
                    occupancy.insert(c, i);
                    velocities.push(v);
                    placed = true;
                    break;
                }
            }
            if !placed {
                return Err(Error::Saturation(format!(
                    "no free cell for particle {i} of {n} after {retry_budget} draws (alpha G = {})",
                    grid.alpha() * f_in.sup_bound()
                )));
            }
        }
        Ok(Self {
            f_in,
            grid,
            velocities,
            occupancy,
            proposed: 0,
            accepted: 0,
        })
    }

    /// One proposal; returns whether it was accepted.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> bool {
        let i = rng.random_range(0..self.velocities.len());
        let v = self.f_in.sample(rng);
        let from = self.grid.cell_of(self.velocities[i]);
        let to = self.grid.cell_of(v);
        self.proposed += 1;
        if to != from {
            if self.occupancy.is_occupied(to) {
                return false;
            }
            self.occupancy.relocate(from, to, i);
        }
        self.velocities[i] = v;
        self.accepted += 1;
        true
    }

    pub fn run<R: Rng + ?Sized>(&mut self, steps: usize, rng: &mut R) {
        for _ in 0..steps {
            self.step(rng);
        }
    }

    pub fn velocities(&self) -> &[Vec3] {
        &self.velocities
    }

    pub fn cells(&self) -> impl Iterator<Item = CellIndex> + '_ {
        self.velocities.iter().map(|&v| self.grid.cell_of(v))
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.proposed == 0 {
            f64::NAN
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }

    pub fn into_ensemble(self) -> Result<ParticleEnsemble> {
        ParticleEnsemble::new(self.grid, self.velocities)
    }
}

/// One draw from the conditioned product measure; `burn_in` defaults to `10 N` proposals.
pub fn sample_conditioned_product<R: Rng + ?Sized>(
    f_in: &OneParticleDensity,
    cfg: &SimConfig,
    rng: &mut R,
    burn_in: Option<usize>,
) -> Result<ParticleEnsemble> {
    let grid = cfg.grid()?;
    let n = grid.n_particles();
    let burn_in = burn_in.unwrap_or(10 * n);
    if burn_in < 10 * n {
        return Err(Error::config(format!(
            "burn_in = {burn_in} is below the minimum 10 N = {}",
            10 * n
        )));
    }
    let mut chain = ConditionedProductChain::new(f_in, grid, rng, DEFAULT_RETRY_BUDGET)?;
    chain.run(burn_in, rng);
    chain.into_ensemble()
}

/// Fraction of independent whole-vector draws from `f_in^{(x)N}` that are admissible,
/// an estimate of the partition function `Z_N`.
pub fn exact_rejection_rate<R: Rng + ?Sized>(
    f_in: &OneParticleDensity,
    grid: &CellGrid,
    trials: usize,
    rng: &mut R,
) -> f64 {
    let n = grid.n_particles();
    let mut cells = Vec::with_capacity(n);
    let mut ok = 0usize;
    for _ in 0..trials {
        cells.clear();
        cells.extend((0..n).map(|_| grid.cell_of(f_in.sample(rng))));
        cells.sort_unstable();
        if cells.windows(2).all(|w| w[0] != w[1]) {
            ok += 1;
        }
    }
    ok as f64 / trials as f64
}

/// Lower bound `(1 - alpha G)^N` of `Z_N`.
pub fn partition_lower_bound(f_in: &OneParticleDensity, grid: &CellGrid) -> f64 {
    (1.0 - grid.alpha() * f_in.sup_bound()).powi(grid.n_particles() as i32)
}

/// Ratio `q` of big to fine cell sides, the integer closest to `delta^{-1/2}`.
pub fn two_scale_ratio(delta: f64) -> usize {
    (1.0 / delta.sqrt()).round().max(1.0) as usize
}

/// Particle counts per big cell of side `q delta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoScaleLayout {
    pub grid: CellGrid,
    pub q: usize,
    /// Big cells in units of `q delta`, with their particle counts, sorted by cell.
    pub counts: Vec<(CellIndex, u32)>,
}

impl TwoScaleLayout {
    /// Apportions `N` particles to big cells by largest remainder on `N int_{big} f_in`.
    pub fn new(f_in: &OneParticleDensity, grid: CellGrid) -> Result<Self> {
        let n = grid.n_particles();
        let q = two_scale_ratio(grid.delta());
        let big = q as f64 * grid.delta();
        let capacity = q * q * q;
        let (lo, hi) = f_in.bounding_box();
        let range: Vec<(i64, i64)> = (0..3)
            .map(|a| {
                (
                    (lo.axis(a) / big).floor() as i64,
                    (hi.axis(a) / big).floor() as i64,
                )
            })
            .collect();
        let rule = GaussRule::new(4);
        let mut masses = Vec::new();
        for ix in range[0].0..=range[0].1 {
            for iy in range[1].0..=range[1].1 {
                for iz in range[2].0..=range[2].1 {
                    let c = CellIndex::new(ix, iy, iz);
                    let o = Vec3::new(ix as f64, iy as f64, iz as f64) * big;
                    let m = f_in.mass_in_box(o, o + Vec3::new(big, big, big), &rule);
                    if m > 0.0 {
                        masses.push((c, m));
                    }
                }
            }
        }
        let total: f64 = masses.iter().map(|x| x.1).sum();
        if !(total > 0.0) {
            return Err(Error::numerical(
                "initial profile has no mass on the big cells",
            ));
        }
        let mut counts: Vec<(CellIndex, u32)> = Vec::with_capacity(masses.len());
        let mut rema: Vec<(f64, usize)> = Vec::with_capacity(masses.len());
        let mut assigned = 0usize;
        for (j, &(c, m)) in masses.iter().enumerate() {
            let target = n as f64 * m / total;
            let fl = target.floor();
            counts.push((c, fl as u32));
            rema.push((target - fl, j));
            assigned += fl as usize;
        }
        rema.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        for &(_, j) in rema.iter().take(n.saturating_sub(assigned)) {
            counts[j].1 += 1;
        }
        if let Some(&(c, k)) = counts.iter().find(|x| x.1 as usize > capacity) {
            return Err(Error::Saturation(format!(
                "big cell {c:?} needs {k} particles but holds only {capacity} fine cells"
            )));
        }
        counts.retain(|x| x.1 > 0);
        counts.sort_unstable();
        Ok(Self { grid, q, counts })
    }

    pub fn big_delta(&self) -> f64 {
        self.q as f64 * self.grid.delta()
    }

    /// Big cell containing `v`.
    pub fn big_cell_of(&self, v: Vec3) -> CellIndex {
        crate::grid::cell_of(self.big_delta(), v)
    }

    pub fn count(&self, big: CellIndex) -> u32 {
        self.counts
            .binary_search_by(|x| x.0.cmp(&big))
            .map_or(0, |i| self.counts[i].1)
    }

    /// Piecewise-constant one-particle marginal `sum_j N_j / N * chi_j(v) / big^3`.
    pub fn marginal_density(&self, v: Vec3) -> f64 {
        self.count(self.big_cell_of(v)) as f64
            / (self.grid.n_particles() as f64 * self.big_delta().powi(3))
    }

    /// Exact draw: each big cell gets its count on distinct uniformly chosen fine cells.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<ParticleEnsemble> {
        let mut vs = Vec::with_capacity(self.grid.n_particles());
        for &(big, k) in &self.counts {
            place_in_big_cell(rng, big, self.q, k as usize, self.grid.delta(), &mut vs)?;
        }
        ParticleEnsemble::new(self.grid, vs)
    }
}

/// Puts `k` particles into distinct fine cells of big cell `big`, uniformly over
/// the `C(q^3, k)` subsets and uniformly inside each chosen cell.
pub fn place_in_big_cell<R: Rng + ?Sized>(
    rng: &mut R,
    big: CellIndex,
    q: usize,
    k: usize,
    delta: f64,
    out: &mut Vec<Vec3>,
) -> Result<()> {
    let cap = q * q * q;
    if k > cap {
        return Err(Error::Saturation(format!(
            "{k} particles do not fit into {cap} fine cells"
        )));
    }
    let q64 = q as i64;
    for id in index::sample(rng, cap, k) {
        let fine = CellIndex::new(
            big.ix * q64 + (id / (q * q)) as i64,
            big.iy * q64 + ((id / q) % q) as i64,
            big.iz * q64 + (id % q) as i64,
        );
        let o = Vec3::new(fine.ix as f64, fine.iy as f64, fine.iz as f64) * delta;
        out.push(
            o + Vec3::new(
                rng.random::<f64>(),
                rng.random::<f64>(),
                rng.random::<f64>(),
            ) * delta,
        );
    }
    Ok(())
}

/// One draw of the two-scale initial data.
pub fn sample_two_scale<R: Rng + ?Sized>(
    f_in: &OneParticleDensity,
    cfg: &SimConfig,
    rng: &mut R,
) -> Result<ParticleEnsemble> {
    TwoScaleLayout::new(f_in, cfg.grid()?)?.sample(rng)
}

/// Limiting one-particle marginal `f_in / (exp(-a) + alpha f_in)` of the conditioned product measure.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitMarginal {
    pub a_coeff: f64,
    pub alpha: f64,
    pub f_in: OneParticleDensity,
}

impl LimitMarginal {
    #[inline]
    pub fn eval(&self, v: Vec3) -> f64 {
        let f = self.f_in.eval(v);
        if f == 0.0 {
            0.0
        } else {
            f / ((-self.a_coeff).exp() + self.alpha * f)
        }
    }

    /// `int f_1 - 1` by the profile's quadrature.
    pub fn residual(&self) -> f64 {
        normalization_residual(&self.f_in, self.alpha, self.a_coeff)
    }

    pub fn to_field(&self, grid: VelocityGrid) -> DensityField {
        DensityField::from_fn(grid, self.alpha, |v| self.eval(v))
    }
}

fn normalization_residual(f_in: &OneParticleDensity, alpha: f64, a: f64) -> f64 {
    let ea = (-a).exp();
    f_in.integrate(|f| f / (ea + alpha * f)) - 1.0
}

/// Residual tolerance of [`solve_a`].
pub const SOLVE_A_TOLERANCE: f64 = 1e-10;

/// Finds `a` in `[0, ln(1 / (1 - alpha G))]` normalizing the limiting marginal, by bisection.
pub fn solve_a(f_in: &OneParticleDensity, alpha: f64) -> Result<LimitMarginal> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::config(format!(
            "alpha must lie in [0, 1), got {alpha}"
        )));
    }
    check_density_bound(f_in, alpha)?;
    let make = |a: f64| LimitMarginal {
        a_coeff: a,
        alpha,
        f_in: f_in.clone(),
    };
    if alpha == 0.0 {
        return Ok(make(0.0));
    }
    let mut lo = 0.0;
    let mut hi = -(1.0 - alpha * f_in.sup_bound()).ln();
    let r_lo = normalization_residual(f_in, alpha, lo);
    let r_hi = normalization_residual(f_in, alpha, hi);
    if r_lo > SOLVE_A_TOLERANCE || r_hi < -SOLVE_A_TOLERANCE {
        return Err(Error::numerical(format!(
            "no root in [0, {hi}]: residuals {r_lo:e} and {r_hi:e}"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if normalization_residual(f_in, alpha, mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (r_lo, r_hi) = (
        normalization_residual(f_in, alpha, lo),
        normalization_residual(f_in, alpha, hi),
    );
    let a = if r_lo.abs() <= r_hi.abs() { lo } else { hi };
    let r = r_lo.abs().min(r_hi.abs());
    if r > SOLVE_A_TOLERANCE {
        return Err(Error::numerical(format!(
            "bisection stalled with residual {r:e}"
        )));
    }
    Ok(make(a))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::CrossSectionSpec;
    use crate::rng::SimRng;
    use rand::SeedableRng;
    use std::collections::HashMap;

    fn unit_box() -> OneParticleDensity {
        OneParticleDensity::uniform(Vec3::ZERO, Vec3::new(1.0, 1.0, 1.0)).unwrap()
    }

    fn cfg(n: usize, alpha: f64) -> SimConfig {
        SimConfig {
            n_particles: n,
            alpha,
            t_final: 1.0,
            seed: 0,
            snapshot_times: vec![],
            kernel: CrossSectionSpec::smooth_ramp(1.0, 1.0),
        }
    }

    #[test]
    fn two_particle_partition_function() {
        let f = unit_box();
        let grid = CellGrid::from_delta(2, 0.5).unwrap();
        let mut rng = SimRng::seed_from_u64(1);
        let trials = 200_000;
        let z = exact_rejection_rate(&f, &grid, trials, &mut rng);
        let sd = (0.875f64 * 0.125 / trials as f64).sqrt();
        assert!((z - 0.875).abs() < 4.0 * sd, "{z}");
        assert!((partition_lower_bound(&f, &grid) - 0.5625).abs() < 1e-15);
    }

    #[test]
    fn chain_pair_law_is_uniform_on_distinct_cells() {
        let f = unit_box();
        let grid = CellGrid::from_delta(2, 0.5).unwrap();
        let mut rng = SimRng::seed_from_u64(2);
        let mut chain = ConditionedProductChain::new(&f, grid, &mut rng, 100).unwrap();
        chain.run(100, &mut rng);
        let mut hist: HashMap<(CellIndex, CellIndex), u64> = HashMap::new();
        let steps = 400_000;
        for _ in 0..steps {
            chain.step(&mut rng);
            let c: Vec<_> = chain.cells().collect();
            assert_ne!(c[0], c[1]);
            *hist.entry((c[0], c[1])).or_default() += 1;
        }
        assert_eq!(hist.len(), 56);
        let p = 1.0 / 56.0;
        // successive states are correlated, allow a generous band
        for &k in hist.values() {
            let rel = k as f64 / steps as f64 / p - 1.0;
            assert!(rel.abs() < 0.08, "{rel}");
        }
        assert!((chain.acceptance_rate() - 7.0 / 8.0).abs() < 0.01);
    }

    #[test]
    fn vanishing_cells_accept_everything() {
        let f = unit_box();
        let mut rng = SimRng::seed_from_u64(3);
        let mut prev = 0.0;
        for alpha in [0.3, 0.03, 0.003, 0.0003] {
            let grid = CellGrid::new(20, alpha).unwrap();
            let mut chain = ConditionedProductChain::new(&f, grid, &mut rng, 100).unwrap();
            chain.run(20_000, &mut rng);
            let r = chain.acceptance_rate();
            assert!(r > prev);
            prev = r;
        }
        assert!(prev > 0.999);
    }

    #[test]
    fn greedy_start_can_saturate() {
        // 8 cells for 7 particles leaves little room for a one-draw budget
        let f = unit_box();
        let grid = CellGrid::from_delta(7, 0.5).unwrap();
        let failures = (0..50)
            .filter(|&s| {
                let mut rng = SimRng::seed_from_u64(s);
                matches!(
                    ConditionedProductChain::new(&f, grid, &mut rng, 1),
                    Err(Error::Saturation(_))
                )
            })
            .count();
        assert!(failures > 40);
        let small = OneParticleDensity::uniform(Vec3::ZERO, Vec3::new(0.5, 0.5, 0.5)).unwrap();
        let grid = CellGrid::from_delta(2, 0.5).unwrap();
        let mut rng = SimRng::seed_from_u64(0);
        assert!(matches!(
            ConditionedProductChain::new(&small, grid, &mut rng, 100),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn sampler_a_respects_burn_in_minimum() {
        let f = OneParticleDensity::truncated_maxwellian(1.0, 4.0).unwrap();
        let mut rng = SimRng::seed_from_u64(4);
        let e = sample_conditioned_product(&f, &cfg(500, 0.2), &mut rng, None).unwrap();
        e.check_admissible().unwrap();
        assert!(matches!(
            sample_conditioned_product(&f, &cfg(500, 0.2), &mut rng, Some(10)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn single_big_cell_allocation() {
        // support inside one big cell of side 4 * 1/16
        let f =
            OneParticleDensity::uniform(Vec3::new(0.01, 0.01, 0.01), Vec3::new(0.24, 0.24, 0.24))
                .unwrap();
        let grid = CellGrid::from_delta(20, 1.0 / 16.0).unwrap();
        let layout = TwoScaleLayout::new(&f, grid).unwrap();
        assert_eq!(layout.q, 4);
        assert_eq!(layout.counts, vec![(CellIndex::new(0, 0, 0), 20)]);
        let mut rng = SimRng::seed_from_u64(5);
        let e = layout.sample(&mut rng).unwrap();
        for v in e.velocities() {
            assert_eq!(layout.big_cell_of(*v), CellIndex::new(0, 0, 0));
        }
    }

    #[test]
    fn fine_cell_subsets_are_uniform() {
        let (q, k, draws) = (2usize, 3usize, 100_000usize);
        let mut rng = SimRng::seed_from_u64(6);
        let mut hist: HashMap<Vec<CellIndex>, u64> = HashMap::new();
        let mut out = Vec::new();
        for _ in 0..draws {
            out.clear();
            place_in_big_cell(&mut rng, CellIndex::new(1, -1, 0), q, k, 0.5, &mut out).unwrap();
            let mut cells: Vec<_> = out.iter().map(|&v| crate::grid::cell_of(0.5, v)).collect();
            cells.sort();
            for c in &cells {
                assert!(
                    (2..4).contains(&c.ix) && (-2..0).contains(&c.iy) && (0..2).contains(&c.iz)
                );
            }
            *hist.entry(cells).or_default() += 1;
        }
        assert_eq!(hist.len(), 56);
        let p = 1.0 / 56.0;
        let sd = (draws as f64 * p * (1.0 - p)).sqrt();
        for &c in hist.values() {
            assert!((c as f64 - draws as f64 * p).abs() < 4.0 * sd);
        }
        let mut out = Vec::new();
        assert!(matches!(
            place_in_big_cell(&mut rng, CellIndex::new(0, 0, 0), 2, 9, 0.5, &mut out),
            Err(Error::Saturation(_))
        ));
    }

    #[test]
    fn two_scale_counts_match_the_layout() {
        let f = OneParticleDensity::truncated_maxwellian(1.0, 4.0).unwrap();
        let c = cfg(4000, 0.2);
        let layout = TwoScaleLayout::new(&f, c.grid().unwrap()).unwrap();
        let total: u32 = layout.counts.iter().map(|x| x.1).sum();
        assert_eq!(total, 4000);
        let mut rng = SimRng::seed_from_u64(7);
        let e = layout.sample(&mut rng).unwrap();
        let mut seen: HashMap<CellIndex, u32> = HashMap::new();
        for &v in e.velocities() {
            *seen.entry(layout.big_cell_of(v)).or_default() += 1;
        }
        for &(big, k) in &layout.counts {
            assert_eq!(seen[&big], k);
        }
        let v = Vec3::new(0.1, 0.0, -0.1);
        let expected =
            layout.count(layout.big_cell_of(v)) as f64 / (4000.0 * layout.big_delta().powi(3));
        assert_eq!(layout.marginal_density(v), expected);
    }

    #[test]
    fn solve_a_cases() {
        let tm = OneParticleDensity::truncated_maxwellian(0.5, 4.0).unwrap();
        assert_eq!(solve_a(&tm, 0.0).unwrap().a_coeff, 0.0);
        let u = OneParticleDensity::uniform(Vec3::ZERO, Vec3::new(2.0, 1.0, 1.5)).unwrap();
        let alpha = 0.3;
        let lim = solve_a(&u, alpha).unwrap();
        let exact = -(1.0 - alpha / 3.0f64).ln();
        assert!(
            (lim.a_coeff - exact).abs() < 1e-9,
            "{} {exact}",
            lim.a_coeff
        );
        let v = Vec3::new(0.5, 0.5, 0.5);
        assert!((lim.eval(v) - u.eval(v)).abs() < 1e-9);
        for p in builtin_profiles() {
            let alpha = 0.5 / p.sup_bound();
            let alpha = alpha.min(0.9);
            let lim = solve_a(&p, alpha).unwrap();
            assert!(lim.residual().abs() <= SOLVE_A_TOLERANCE);
            let (c, _) = p.support();
            assert!(lim.eval(c) <= 1.0 / alpha);
        }
        assert!(matches!(solve_a(&u, 3.5), Err(Error::Config(_))));
    }
}
