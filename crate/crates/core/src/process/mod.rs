//! Kac jump process with exclusion, simulated by thinning a constant-rate
//! proposal stream.
//!
//! Proposals arrive at rate `Lambda = 2 pi (N - 1) c1`. Each one picks an
//! unordered pair uniformly, a direction `omega` uniformly on the sphere and
//! keeps the candidate with probability `B / c1`. A kept candidate is
//! executed only if both arrival cells differ and are empty in the current
//! configuration (the departure cells of the pair count as occupied).
//!
//! The accepted jumps then occur at rate
//!
//! ```text
//! Lambda * 1/(N(N-1)/2) * 1/(4 pi) * B/c1 * A  =  (1/N) B A    per pair and unit d omega
//! ```
//!
//! with `A` the admissibility factor, which is exactly the generator
//! `(1/N) L_N^G`. Discarding the residual waiting time at `t_target` is
//! harmless because exponential clocks are memoryless.

mod generator;

pub use generator::{admissible_rate_k2, generator_apply_k2};

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{build_occupancy, CellGrid, CellIndex, OccupancyMap};
use crate::kernel::{collide_unchecked, eval_kernel, sample_omega, CrossSectionSpec};
use crate::vec3::Vec3;

/// Total proposal rate for `n` particles and kernel bound `c1`.
pub fn majorant_rate(n: usize, c1: f64) -> f64 {
    assert!(n >= 2, "at least two particles are required");
    assert!(c1 >= 0.0, "kernel bound must be non-negative");
    2.0 * PI * (n as f64 - 1.0) * c1
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub n_particles: usize,
    pub alpha: f64,
    pub t_final: f64,
    pub seed: u64,
    pub snapshot_times: Vec<f64>,
    pub kernel: CrossSectionSpec,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_particles < 2 {
            return Err(Error::config(format!(
                "n_particles must be at least 2, got {}",
                self.n_particles
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::config(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return Err(Error::config(format!(
                "t_final must be positive, got {}",
                self.t_final
            )));
        }
        let mut prev = 0.0;
        for &t in &self.snapshot_times {
            if !(t >= prev && t <= self.t_final) {
                return Err(Error::config(format!(
                    "snapshot times must be sorted within [0, t_final], got {:?}",
                    self.snapshot_times
                )));
            }
            prev = t;
        }
        self.kernel.validate()
    }

    pub fn grid(&self) -> Result<CellGrid> {
        CellGrid::new(self.n_particles, self.alpha)
    }

    pub fn delta(&self) -> f64 {
        (self.alpha / self.n_particles as f64).cbrt()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventCounters {
    pub proposed: u64,
    pub kernel_rejected: u64,
    pub exclusion_blocked: u64,
    pub accepted: u64,
}

impl EventCounters {
    pub fn merge(&mut self, other: &EventCounters) {
        self.proposed += other.proposed;
        self.kernel_rejected += other.kernel_rejected;
        self.exclusion_blocked += other.exclusion_blocked;
        self.accepted += other.accepted;
    }

    /// Fraction of kernel-accepted candidates that were admissible.
    pub fn admissible_fraction(&self) -> f64 {
        let tried = self.accepted + self.exclusion_blocked;
        if tried == 0 {
            f64::NAN
        } else {
            self.accepted as f64 / tried as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EventOutcome {
    NullKernel,
    ExclusionBlocked,
    Accepted { i: usize, j: usize, omega: Vec3 },
}

/// One sample of the N-particle state.
#[derive(Debug, Clone)]
pub struct ParticleEnsemble {
    velocities: Vec<Vec3>,
    occupancy: OccupancyMap,
    time: f64,
    grid: CellGrid,
    counters: EventCounters,
}

impl ParticleEnsemble {
    /// Wraps an admissible configuration at time zero.
    pub fn new(grid: CellGrid, velocities: Vec<Vec3>) -> Result<Self> {
        if velocities.len() != grid.n_particles() {
            return Err(Error::config(format!(
                "grid expects {} particles, got {}",
                grid.n_particles(),
                velocities.len()
            )));
        }
        if velocities.len() < 2 {
            return Err(Error::config("an ensemble needs at least two particles"));
        }
        if let Some(i) = velocities.iter().position(|v| !v.is_finite()) {
            return Err(Error::config(format!("velocity {i} is not finite")));
        }
        let occupancy = build_occupancy(&grid, &velocities)?;
        Ok(Self {
            velocities,
            occupancy,
            time: 0.0,
            grid,
            counters: EventCounters::default(),
        })
    }

    pub fn velocities(&self) -> &[Vec3] {
        &self.velocities
    }

    pub fn occupancy(&self) -> &OccupancyMap {
        &self.occupancy
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn grid(&self) -> &CellGrid {
        &self.grid
    }

    pub fn counters(&self) -> &EventCounters {
        &self.counters
    }

    pub fn n_particles(&self) -> usize {
        self.velocities.len()
    }

    pub fn momentum(&self) -> Vec3 {
        self.velocities.iter().copied().sum()
    }

    /// Sum of `|v|^2` (twice the kinetic energy).
    pub fn energy(&self) -> f64 {
        self.velocities.iter().map(|v| v.norm_sq()).sum()
    }

    /// Iterator over occupied cells.
    pub fn cells(&self) -> impl Iterator<Item = CellIndex> + '_ {
        self.velocities.iter().map(|&v| self.grid.cell_of(v))
    }

    /// Full consistency check between velocities and the occupancy index.
    pub fn check_admissible(&self) -> Result<()> {
        let rebuilt = build_occupancy(&self.grid, &self.velocities)?;
        if rebuilt != self.occupancy {
            return Err(Error::numerical(
                "occupancy index is out of sync with the velocities",
            ));
        }
        Ok(())
    }

    /// Cheap check that particles `i` and `j` sit where the index says.
    pub fn check_pair(&self, i: usize, j: usize) -> bool {
        let ci = self.grid.cell_of(self.velocities[i]);
        let cj = self.grid.cell_of(self.velocities[j]);
        ci != cj
            && self.occupancy.lookup(ci) == Some(i)
            && self.occupancy.lookup(cj) == Some(j)
            && self.occupancy.len() == self.velocities.len()
    }

    /// One proposal of the thinned process.
    pub fn attempt_event<R: Rng + ?Sized>(
        &mut self,
        kernel: &CrossSectionSpec,
        rng: &mut R,
    ) -> EventOutcome {
        let n = self.velocities.len();
        let i = rng.random_range(0..n);
        let mut j = rng.random_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        let omega = sample_omega(rng);
        let u: f64 = rng.random();
        self.counters.proposed += 1;

        let (vi, vj) = (self.velocities[i], self.velocities[j]);
        let b = eval_kernel(kernel, vi - vj, omega);
        if u * kernel.c1() >= b {
            self.counters.kernel_rejected += 1;
            return EventOutcome::NullKernel;
        }

        let (wi, wj) = collide_unchecked(vi, vj, omega);
        let (ci_new, cj_new) = (self.grid.cell_of(wi), self.grid.cell_of(wj));
        if ci_new == cj_new
            || self.occupancy.is_occupied(ci_new)
            || self.occupancy.is_occupied(cj_new)
        {
            self.counters.exclusion_blocked += 1;
            return EventOutcome::ExclusionBlocked;
        }

        let (ci, cj) = (self.grid.cell_of(vi), self.grid.cell_of(vj));
        self.occupancy.relocate(ci, ci_new, i);
        self.occupancy.relocate(cj, cj_new, j);
        self.velocities[i] = wi;
        self.velocities[j] = wj;
        self.counters.accepted += 1;
        EventOutcome::Accepted { i, j, omega }
    }

    /// Runs the process up to `t_target`.
    pub fn advance<R: Rng + ?Sized>(
        &mut self,
        kernel: &CrossSectionSpec,
        t_target: f64,
        rng: &mut R,
    ) {
        self.advance_observed(kernel, t_target, rng, |_, _| {});
    }

    /// Like [`advance`](Self::advance), calling `observe` after every proposal.
    pub fn advance_observed<R, F>(
        &mut self,
        kernel: &CrossSectionSpec,
        t_target: f64,
        rng: &mut R,
        mut observe: F,
    ) where
        R: Rng + ?Sized,
        F: FnMut(&ParticleEnsemble, EventOutcome),
    {
        assert!(
            t_target >= self.time,
            "cannot advance backwards from {} to {t_target}",
            self.time
        );
        let rate = majorant_rate(self.velocities.len(), kernel.c1());
        if rate == 0.0 {
            self.time = t_target;
            return;
        }
        let clock = Exp::new(rate).expect("positive rate");
        loop {
            let dt = clock.sample(rng);
            if self.time + dt > t_target {
                self.time = t_target;
                return;
            }
            self.time += dt;
            let outcome = self.attempt_event(kernel, rng);
            observe(self, outcome);
        }
    }
}
