//! Particle experiments: relaxation, N-sweep convergence and chaos propagation.

use rayon::prelude::*;

use super::config::{ExperimentConfig, InitFamily};
use super::output::{write_field, write_marginal, EventsTable};
use super::{decreasing_beyond_error, finish, key, start, RunSummary};
use crate::error::{Error, Result};
use crate::grid::{CellGrid, CellIndex};
use crate::initdata::{
    solve_a, ConditionedProductChain, OneParticleDensity, TwoScaleLayout, DEFAULT_RETRY_BUDGET,
};
use crate::observables::{
    bootstrap, delta_norm, estimate_distance, CompactBox, MarginalEstimate, ReplicaOccupancy,
};
use crate::process::{EventCounters, EventOutcome, ParticleEnsemble, SimConfig};
use crate::rng::{derive_seed, replica_rng, SimRng};
use crate::uu::{CollisionContext, DensityField, Solution, SolverOptions};

/// Replicas simulated between ordered merges.
const CHUNK: usize = 64;

enum Initializer<'a> {
    Chain {
        f_in: &'a OneParticleDensity,
        burn_in: usize,
    },
    TwoScale(TwoScaleLayout),
}

impl<'a> Initializer<'a> {
    fn new(cfg: &ExperimentConfig, f_in: &'a OneParticleDensity, grid: CellGrid) -> Result<Self> {
        Ok(match cfg.init.family {
            InitFamily::ConditionedProduct => {
                let n = grid.n_particles();
                let burn_in = cfg.init.burn_in.unwrap_or(10 * n);
                if burn_in < 10 * n {
                    return Err(Error::config(format!(
                        "init.burn_in = {burn_in} is below the minimum 10 N = {}",
                        10 * n
                    )));
                }
                Initializer::Chain { f_in, burn_in }
            }
            InitFamily::TwoScale => Initializer::TwoScale(TwoScaleLayout::new(f_in, grid)?),
        })
    }

    /// One initial configuration and, for the chain, its acceptance rate.
    fn sample(&self, grid: CellGrid, rng: &mut SimRng) -> Result<(ParticleEnsemble, Option<f64>)> {
        match self {
            Initializer::Chain { f_in, burn_in } => {
                let mut chain =
                    ConditionedProductChain::new(f_in, grid, rng, DEFAULT_RETRY_BUDGET)?;
                chain.run(*burn_in, rng);
                let rate = chain.acceptance_rate();
                Ok((chain.into_ensemble()?, rate.is_finite().then_some(rate)))
            }
            Initializer::TwoScale(layout) => Ok((layout.sample(rng)?, None)),
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Wants {
    region: bool,
    pairs: bool,
    full: bool,
}

/// What one replica reports.
struct Trace {
    region: Vec<Vec<CellIndex>>,
    pairs: Vec<Vec<CellIndex>>,
    full: Vec<MarginalEstimate>,
    counters: Vec<EventCounters>,
    violations: u64,
    momentum_drift: f64,
    energy_drift: f64,
    chain_acceptance: Option<f64>,
}

fn sorted_cells_in(ens: &ParticleEnsemble, within: &CompactBox) -> Vec<CellIndex> {
    let delta = ens.grid().delta();
    let mut cells: Vec<CellIndex> = ens
        .cells()
        .filter(|&c| within.contains_cell(delta, c))
        .collect();
    cells.sort_unstable();
    cells
}

fn simulate(
    cfg: &ExperimentConfig,
    sim: &SimConfig,
    grid: CellGrid,
    init: &Initializer,
    wants: Wants,
    rng: &mut SimRng,
) -> Result<Trace> {
    let (mut ens, chain_acceptance) = init.sample(grid, rng)?;
    let p0 = ens.momentum();
    let e0 = ens.energy();
    let p_scale = (ens.n_particles() as f64 * e0)
        .sqrt()
        .max(f64::MIN_POSITIVE);
    let mut trace = Trace {
        region: Vec::new(),
        pairs: Vec::new(),
        full: Vec::new(),
        counters: Vec::new(),
        violations: 0,
        momentum_drift: 0.0,
        energy_drift: 0.0,
        chain_acceptance,
    };
    for &t in &sim.snapshot_times {
        let mut bad = 0u64;
        ens.advance_observed(&sim.kernel, t, rng, |e, outcome| {
            if let EventOutcome::Accepted { i, j, .. } = outcome {
                if !e.check_pair(i, j) {
                    bad += 1;
                }
            }
        });
        trace.violations += bad + ens.check_admissible().is_err() as u64;
        trace.momentum_drift = trace
            .momentum_drift
            .max((ens.momentum() - p0).norm() / p_scale);
        trace.energy_drift = trace
            .energy_drift
            .max((ens.energy() - e0).abs() / e0.max(f64::MIN_POSITIVE));
        trace.counters.push(*ens.counters());
        if wants.region {
            trace.region.push(sorted_cells_in(&ens, &cfg.region));
        }
        if wants.pairs {
            trace.pairs.push(sorted_cells_in(&ens, &cfg.pair_region));
        }
        if wants.full {
            let mut est = MarginalEstimate::empty(1, grid)?;
            est.accumulate(&ens, None)?;
            trace.full.push(est);
        }
    }
    Ok(trace)
}

/// Replica results of one particle number, merged in replica order.
struct Collected {
    n: usize,
    replicas: usize,
    region: Vec<ReplicaOccupancy>,
    pair1: Vec<ReplicaOccupancy>,
    pair2: Vec<ReplicaOccupancy>,
    full: Vec<MarginalEstimate>,
    counters: Vec<EventCounters>,
    violations: u64,
    momentum_drift: f64,
    energy_drift: f64,
    chain_acceptance: Option<f64>,
}

fn collect(
    cfg: &ExperimentConfig,
    f_in: &OneParticleDensity,
    n: usize,
    wants: Wants,
) -> Result<Collected> {
    let sim = cfg.sim_config(n);
    let grid = sim.grid()?;
    let init = Initializer::new(cfg, f_in, grid)?;
    let replicas = cfg.replicas_for(n);
    let times = sim.snapshot_times.len();
    let per_time = |k: usize, b: CompactBox| -> Result<Vec<ReplicaOccupancy>> {
        (0..times)
            .map(|_| ReplicaOccupancy::new(k, grid, b))
            .collect()
    };
    let mut out = Collected {
        n,
        replicas,
        region: if wants.region {
            per_time(1, cfg.region)?
        } else {
            Vec::new()
        },
        pair1: if wants.pairs {
            per_time(1, cfg.pair_region)?
        } else {
            Vec::new()
        },
        pair2: if wants.pairs {
            per_time(2, cfg.pair_region)?
        } else {
            Vec::new()
        },
        full: if wants.full {
            (0..times)
                .map(|_| MarginalEstimate::empty(1, grid))
                .collect::<Result<_>>()?
        } else {
            Vec::new()
        },
        counters: vec![EventCounters::default(); times],
        violations: 0,
        momentum_drift: 0.0,
        energy_drift: 0.0,
        chain_acceptance: None,
    };
    let stream = derive_seed(cfg.seed, n as u64);
    let mut acc_sum = 0.0;
    let mut acc_count = 0usize;
    let mut next = 0;
    while next < replicas {
        let end = (next + CHUNK).min(replicas);
        let batch: Vec<Result<Trace>> = (next..end)
            .into_par_iter()
            .map(|r| {
                simulate(
                    cfg,
                    &sim,
                    grid,
                    &init,
                    wants,
                    &mut replica_rng(stream, r as u64),
                )
            })
            .collect();
        for trace in batch {
            let trace = trace?;
            for (s, cells) in trace.region.iter().enumerate() {
                out.region[s].push_cells(cells);
            }
            for (s, cells) in trace.pairs.iter().enumerate() {
                out.pair1[s].push_cells(cells);
                out.pair2[s].push_cells(cells);
            }
            for (s, est) in trace.full.iter().enumerate() {
                out.full[s].merge(est)?;
            }
            for (s, c) in trace.counters.iter().enumerate() {
                out.counters[s].merge(c);
            }
            out.violations += trace.violations;
            out.momentum_drift = out.momentum_drift.max(trace.momentum_drift);
            out.energy_drift = out.energy_drift.max(trace.energy_drift);
            if let Some(a) = trace.chain_acceptance {
                acc_sum += a;
                acc_count += 1;
            }
        }
        next = end;
    }
    if acc_count > 0 {
        out.chain_acceptance = Some(acc_sum / acc_count as f64);
    }
    Ok(out)
}

/// Per-interval counters from cumulative ones.
fn intervals(cumulative: &[EventCounters]) -> Vec<EventCounters> {
    let mut prev = EventCounters::default();
    cumulative
        .iter()
        .map(|c| {
            let d = EventCounters {
                proposed: c.proposed - prev.proposed,
                kernel_rejected: c.kernel_rejected - prev.kernel_rejected,
                exclusion_blocked: c.exclusion_blocked - prev.exclusion_blocked,
                accepted: c.accepted - prev.accepted,
            };
            prev = *c;
            d
        })
        .collect()
}

fn record_dynamics(
    s: &mut RunSummary,
    c: &Collected,
    events: &mut EventsTable,
    times: &[f64],
    sweep: bool,
) -> Result<()> {
    let n = sweep.then_some(c.n);
    s.metric(key("replicas", n, None), c.replicas as f64)?;
    s.metric(key("exclusion_violations", n, None), c.violations as f64)?;
    s.metric(key("momentum_drift", n, None), c.momentum_drift)?;
    s.metric(key("energy_drift", n, None), c.energy_drift)?;
    if let Some(a) = c.chain_acceptance {
        s.metric(key("chain_acceptance", n, None), a)?;
    }
    for (&t, d) in times.iter().zip(intervals(&c.counters)) {
        events.push(c.n, t, d);
        if d.proposed > 0 {
            s.metric(
                key("acceptance_ratio", n, Some(t)),
                d.accepted as f64 / d.proposed as f64,
            )?;
        }
        let tried = d.accepted + d.exclusion_blocked;
        if tried > 0 {
            s.metric(
                key("admissible_fraction", n, Some(t)),
                d.accepted as f64 / tried as f64,
            )?;
        }
    }
    Ok(())
}

fn dynamics_checks(s: &mut RunSummary, label: &str, violations: u64, momentum: f64, energy: f64) {
    s.check(
        format!("{label}exclusion_violations"),
        violations == 0,
        format!("{violations} violations"),
    );
    s.check(
        format!("{label}momentum_drift"),
        momentum <= 1e-9,
        format!("max relative momentum drift {momentum:e} (limit 1e-9)"),
    );
    s.check(
        format!("{label}energy_drift"),
        energy <= 1e-9,
        format!("max relative energy drift {energy:e} (limit 1e-9)"),
    );
}

/// Single-N run with marginal snapshots, conservation, exclusion and
/// acceptance diagnostics.
///
/// The stationarity check compares the distance between the estimates at the
/// first and last snapshot with the distance between the even and odd
/// replica halves; it is only reported for conditioned-product data with a
/// truncated Maxwellian profile, whose limit marginal is of Fermi-Dirac form.
pub fn run_relax(cfg: &ExperimentConfig) -> Result<RunSummary> {
    let (mut s, t0) = start(cfg)?;
    let f_in = cfg.f_in()?;
    let n = cfg.sim.n_particles;
    let times = &cfg.sim.snapshot_times;
    let c = collect(
        cfg,
        &f_in,
        n,
        Wants {
            region: true,
            pairs: true,
            full: true,
        },
    )?;
    let mut events = EventsTable::default();
    record_dynamics(&mut s, &c, &mut events, times, false)?;
    events.write(&cfg.out_dir)?;
    let alpha = cfg.sim.alpha;
    let ones = vec![1u32; c.replicas];
    let mut bounds_ok = true;
    for (i, &t) in times.iter().enumerate() {
        let k1_max = delta_norm(&c.full[i]);
        let k2 = c.pair2[i].estimate(&ones);
        let k2_norm = delta_norm(&k2);
        bounds_ok &= k1_max <= 1.0 / alpha && k2_norm <= 4f64.exp() / (alpha * alpha);
        s.metric(key("k1_max", None, Some(t)), k1_max)?;
        s.metric(key("k2_delta_norm", None, Some(t)), k2_norm)?;
        s.metric(key("entropy", None, Some(t)), c.full[i].entropy())?;
        s.metric(key("mass", None, Some(t)), c.full[i].total_mass())?;
        if cfg.output.marginals {
            write_marginal(&cfg.out_dir, &c.full[i], t, None)?;
            write_marginal(&cfg.out_dir, &k2, t, None)?;
        }
    }
    dynamics_checks(&mut s, "", c.violations, c.momentum_drift, c.energy_drift);
    s.check(
        "apriori_bounds",
        bounds_ok,
        "k=1 values <= 1/alpha and k=2 delta-norm <= e^4/alpha^2 at every snapshot",
    );

    let (first, last) = (&c.region[0], &c.region[times.len() - 1]);
    let drift = bootstrap(
        c.replicas,
        cfg.resamples,
        derive_seed(cfg.seed, u64::MAX),
        |m| estimate_distance(&first.estimate(m), &last.estimate(m), &cfg.region),
    )?;
    let noise = 0.5 * (first.split_half_l1() + last.split_half_l1());
    s.metric("l1_drift", drift.value)?;
    s.metric("l1_drift_se", drift.std_err)?;
    s.metric("l1_noise", noise)?;
    let near_equilibrium = cfg.init.family == InitFamily::ConditionedProduct
        && matches!(
            cfg.init.profile,
            crate::initdata::ProfileSpec::TruncatedMaxwellian { .. }
        );
    if near_equilibrium && c.replicas >= 2 {
        s.check(
            "stationarity",
            drift.value <= noise + 3.0 * drift.std_err,
            format!(
                "l1 drift {:.4e} vs replica noise {noise:.4e} + 3 x {:.2e}",
                drift.value, drift.std_err
            ),
        );
    }
    finish(s, t0, cfg)
}

/// Reference U-U solution for the sweep experiments.
fn reference_solution(
    cfg: &ExperimentConfig,
    f_in: &OneParticleDensity,
) -> Result<(Solution, CollisionContext)> {
    let grid = cfg.uu.grid()?;
    let ctx = CollisionContext::new(grid, cfg.kernel.spec(), cfg.uu.quadrature()?)?;
    let alpha = cfg.sim.alpha;
    let f0 = match cfg.init.family {
        InitFamily::ConditionedProduct => solve_a(f_in, alpha)?.to_field(grid),
        InitFamily::TwoScale => DensityField::from_fn(grid, alpha, |v| f_in.eval(v)),
    };
    let opts = SolverOptions {
        conservative: cfg.uu.conservative,
        enforce_dt_max: true,
        snapshot_times: cfg.sim.snapshot_times.clone(),
    };
    let sol = ctx.solve(&f0, cfg.sim.t_final, cfg.uu.dt, &opts)?;
    Ok((sol, ctx))
}

/// `D_N(t) = l1_distance(f_1 estimate, f_UU(t))` on `box` for every `N` of the sweep,
/// with bootstrap errors over replicas.
pub fn run_converge(cfg: &ExperimentConfig) -> Result<RunSummary> {
    let (mut s, t0) = start(cfg)?;
    let f_in = cfg.f_in()?;
    let times = &cfg.sim.snapshot_times;
    let (sol, _) = reference_solution(cfg, &f_in)?;
    s.metric("uu_moment_drift", sol.max_moment_drift())?;
    s.metric("uu_max", sol.max_value())?;
    if cfg.output.fields {
        for &t in times {
            write_field(&cfg.out_dir, sol.at(t), t)?;
        }
    }
    let mut events = EventsTable::default();
    let mut table: Vec<Vec<(f64, f64)>> = vec![Vec::new(); times.len()];
    let mut violations = 0;
    let (mut p_drift, mut e_drift) = (0.0f64, 0.0f64);
    for &n in &cfg.n_sweep {
        let c = collect(
            cfg,
            &f_in,
            n,
            Wants {
                region: true,
                ..Wants::default()
            },
        )?;
        record_dynamics(&mut s, &c, &mut events, times, true)?;
        violations += c.violations;
        p_drift = p_drift.max(c.momentum_drift);
        e_drift = e_drift.max(c.energy_drift);
        let stream = derive_seed(cfg.seed, n as u64);
        for (i, &t) in times.iter().enumerate() {
            let occ = &c.region[i];
            let d = occ.l1_bootstrap(
                sol.at(t),
                cfg.resamples,
                derive_seed(stream, 1 << 40 | i as u64),
            )?;
            s.metric(key("l1_distance", Some(n), Some(t)), d.value)?;
            s.metric(key("l1_distance_se", Some(n), Some(t)), d.std_err)?;
            s.metric(key("l1_split_half", Some(n), Some(t)), occ.split_half_l1())?;
            table[i].push((d.value, d.std_err));
            if cfg.output.marginals {
                write_marginal(
                    &cfg.out_dir,
                    &occ.estimate(&vec![1; c.replicas]),
                    t,
                    Some(n),
                )?;
            }
        }
    }
    events.write(&cfg.out_dir)?;
    dynamics_checks(&mut s, "", violations, p_drift, e_drift);
    let last = times.len() - 1;
    s.check(
        "l1_decreasing",
        decreasing_beyond_error(&table[last]),
        format!(
            "D_N(t = {}) with standard errors {:?}",
            times[last], table[last]
        ),
    );
    finish(s, t0, cfg)
}

/// Chaos defect on `pair_box` at every snapshot for every `N` of the sweep.
pub fn run_chaos(cfg: &ExperimentConfig) -> Result<RunSummary> {
    let (mut s, t0) = start(cfg)?;
    let f_in = cfg.f_in()?;
    let times = &cfg.sim.snapshot_times;
    let mut events = EventsTable::default();
    let mut table: Vec<Vec<(f64, f64)>> = vec![Vec::new(); times.len()];
    let mut violations = 0;
    let (mut p_drift, mut e_drift) = (0.0f64, 0.0f64);
    for &n in &cfg.n_sweep {
        let c = collect(
            cfg,
            &f_in,
            n,
            Wants {
                pairs: true,
                ..Wants::default()
            },
        )?;
        record_dynamics(&mut s, &c, &mut events, times, true)?;
        violations += c.violations;
        p_drift = p_drift.max(c.momentum_drift);
        e_drift = e_drift.max(c.energy_drift);
        let stream = derive_seed(cfg.seed, n as u64);
        for (i, &t) in times.iter().enumerate() {
            let d = c.pair2[i].chaos_bootstrap(
                &c.pair1[i],
                cfg.resamples,
                derive_seed(stream, 1 << 41 | i as u64),
            )?;
            s.metric(key("chaos_defect", Some(n), Some(t)), d.value)?;
            s.metric(key("chaos_defect_se", Some(n), Some(t)), d.std_err)?;
            s.metric(
                key("pair_split_half", Some(n), Some(t)),
                c.pair2[i].split_half_l1(),
            )?;
            table[i].push((d.value, d.std_err));
            if cfg.output.marginals {
                let ones = vec![1; c.replicas];
                write_marginal(&cfg.out_dir, &c.pair1[i].estimate(&ones), t, Some(n))?;
                write_marginal(&cfg.out_dir, &c.pair2[i].estimate(&ones), t, Some(n))?;
            }
        }
    }
    events.write(&cfg.out_dir)?;
    dynamics_checks(&mut s, "", violations, p_drift, e_drift);
    for (i, &t) in times.iter().enumerate() {
        s.check(
            format!("chaos_decreasing/t={t}"),
            decreasing_beyond_error(&table[i]),
            format!("defect with standard errors {:?}", table[i]),
        );
    }
    finish(s, t0, cfg)
}
