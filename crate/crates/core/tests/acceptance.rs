//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary so that the verdict lines reach the terminal under
//! `cargo test`. Every tolerance is a named constant below.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use fermikac_core::harness::{InitFamily, UuStart};
use fermikac_core::hierarchy::random_density_field;
use fermikac_core::initdata::{
    exact_rejection_rate, partition_lower_bound, place_in_big_cell, ConditionedProductChain,
};
use fermikac_core::rng::{replica_rng, SimRng};
use fermikac_core::uu::{CollisionContext, SolverOptions, SphereQuadrature, VelocityGrid};
use fermikac_core::{
    cell_of, collide, generator_apply_k2, run, sample_conditioned_product, sample_omega, solve_a,
    CellGrid, CellIndex, CompactBox, CrossSectionSpec, Experiment, ExperimentConfig,
    OneParticleDensity, ParticleEnsemble, ReplicaOccupancy, RunSummary, SimConfig, Vec3,
    DEFAULT_RETRY_BUDGET,
};
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;

const SEED: u64 = 20_240_611;

// criterion 1
const COLLISION_SAMPLES: usize = 1_000_000;
const COLLISION_TOL: f64 = 1e-12;
const COLLISION_TIME: Duration = Duration::from_secs(10);
// criteria 2 and 4
const EXCLUSION_N: usize = 10_000;
const EXCLUSION_TIME: Duration = Duration::from_secs(300);
// criterion 3
const GENERATOR_REPLICAS: usize = 4_000_000;
const GENERATOR_H: f64 = 1e-4;
const GENERATOR_N_OMEGA: usize = 512;
const GENERATOR_SIGMAS: f64 = 3.0;
// criterion 7
const FD_DT: f64 = 1e-3;
const MAX_PRINCIPLE_SLACK: f64 = 1e-9;
const NEAR_SATURATION: f64 = 1.0 - 1e-3;
const MAX_PRINCIPLE_STEPS: usize = 500;
// criterion 8
const MOMENT_DRIFT_TOL: f64 = 1e-6;
// criteria 9 and 10
const SWEEP: [usize; 3] = [2000, 8000, 32_000];
const SWEEP_REPLICAS: usize = 16;
const SWEEP_GROWTH: f64 = 1.0;
const SWEEP_TIME: Duration = Duration::from_secs(3600);
// criterion 11
const CHAIN_STEPS: usize = 10_000_000;
const TV_TOL: f64 = 0.02;
const SUBSET_DRAWS: usize = 200_000;
const SUBSET_SIGMAS: f64 = 4.0;
const SOLVE_A_TOL: f64 = 1e-9;
const MARGINAL_SWEEP: [usize; 3] = [500, 2000, 8000];
const MARGINAL_REPLICAS: usize = 16;

type Observable = Box<dyn Fn(Vec3, Vec3) -> f64>;

struct Verdict {
    id: &'static str,
    passed: bool,
    detail: String,
}

fn verdict(id: &'static str, passed: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        id,
        passed,
        detail: detail.into(),
    }
}

fn config(experiment: Experiment, dir: &tempfile::TempDir, name: &str) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(experiment);
    cfg.seed = SEED;
    cfg.out_dir = dir.path().join(name);
    cfg
}

fn checks_pass(s: &RunSummary, names: &[&str]) -> (bool, String) {
    let mut ok = true;
    let mut parts = Vec::new();
    for name in names {
        let hits: Vec<_> = s
            .checks
            .iter()
            .filter(|c| c.name.starts_with(name))
            .collect();
        ok &= !hits.is_empty() && hits.iter().all(|c| c.passed);
        for c in hits {
            parts.push(format!("{}: {}", c.name, c.detail));
        }
        if !s.checks.iter().any(|c| c.name.starts_with(name)) {
            parts.push(format!("{name}: missing"));
        }
    }
    (ok, parts.join("; "))
}

fn gaussian(rng: &mut SimRng, scale: f64) -> Vec3 {
    Vec3::new(
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
    ) * scale
}

fn criterion_1() -> Verdict {
    let t0 = Instant::now();
    let mut rng = replica_rng(SEED, 1);
    let (mut dp, mut de, mut inv, mut rel) = (0f64, 0f64, 0f64, 0f64);
    for _ in 0..COLLISION_SAMPLES {
        let a = gaussian(&mut rng, 3.0);
        let b = gaussian(&mut rng, 3.0);
        let w = sample_omega(&mut rng);
        let (a1, b1) = collide(a, b, w);
        let (a2, b2) = collide(a1, b1, w);
        let p_scale = a.norm() + b.norm();
        let e_scale = a.norm_sq() + b.norm_sq();
        dp = dp.max(((a1 + b1) - (a + b)).norm() / p_scale);
        de = de.max((a1.norm_sq() + b1.norm_sq() - e_scale).abs() / e_scale);
        inv = inv.max(((a2 - a).norm() + (b2 - b).norm()) / p_scale);
        rel = rel.max(((a1 - b1).norm() - (a - b).norm()).abs() / p_scale);
    }
    let dt = t0.elapsed();
    let worst = dp.max(de).max(inv).max(rel);
    verdict(
        "1 collision micro-invariants",
        worst <= COLLISION_TOL && dt < COLLISION_TIME,
        format!(
            "{COLLISION_SAMPLES} samples: momentum {dp:.1e}, energy {de:.1e}, involution {inv:.1e}, \
             relative speed {rel:.1e} (limit {COLLISION_TOL:e}); {:.2} s (limit {} s)",
            dt.as_secs_f64(),
            COLLISION_TIME.as_secs()
        ),
    )
}

fn criteria_2_and_4(dir: &tempfile::TempDir) -> Vec<Verdict> {
    let mut cfg = config(Experiment::Relax, dir, "exclusion");
    cfg.replicas = 1;
    cfg.sim.n_particles = EXCLUSION_N;
    cfg.sim.snapshot_times = vec![0.0, 0.25, 0.5, 0.75, 1.0];
    let t0 = Instant::now();
    let s = match run(&cfg) {
        Ok(s) => s,
        Err(e) => {
            return vec![
                verdict("2 exclusion invariant", false, e.to_string()),
                verdict("4 a-priori bounds", false, e.to_string()),
            ]
        }
    };
    let dt = t0.elapsed();
    let (ok2, d2) = checks_pass(&s, &["exclusion_violations"]);
    let (ok4, d4) = checks_pass(&s, &["apriori_bounds"]);
    let k1 = (0..5)
        .map(|i| {
            s.get(&format!("k1_max/t={}", i as f64 * 0.25))
                .unwrap_or(f64::INFINITY)
        })
        .fold(0.0, f64::max);
    let k2 = (0..5)
        .map(|i| {
            s.get(&format!("k2_delta_norm/t={}", i as f64 * 0.25))
                .unwrap_or(f64::INFINITY)
        })
        .fold(0.0, f64::max);
    vec![
        verdict(
            "2 exclusion invariant",
            ok2 && dt <= EXCLUSION_TIME,
            format!(
                "N = {EXCLUSION_N}, alpha = 0.2, T = 1: {d2}; {:.1} s (limit {} s)",
                dt.as_secs_f64(),
                EXCLUSION_TIME.as_secs()
            ),
        ),
        verdict(
            "4 a-priori bounds",
            ok4,
            format!(
                "{d4}; max k=1 value {k1:.4} (bound 5), max k=2 delta-norm {k2:.2} (bound {:.2})",
                4f64.exp() / 0.04
            ),
        ),
    ]
}

fn criterion_3() -> Verdict {
    let alpha = 0.2;
    let grid = CellGrid::new(2, alpha).unwrap();
    let kernel = CrossSectionSpec::smooth_ramp(4.0, 1.0);
    let v1 = Vec3::new(0.05, 0.1, 0.2);
    let v2 = Vec3::new(0.6, 0.35, 0.1);
    let home = grid.cell_of(v1);
    let observables: [(&str, Observable); 3] = [
        ("|v1|^2", Box::new(|a: Vec3, _| a.norm_sq())),
        (
            "sin(2 v1x) + v2y v2z",
            Box::new(|a: Vec3, b: Vec3| (2.0 * a.x).sin() + b.y * b.z),
        ),
        (
            "1[v1 in its cell]",
            Box::new(move |a: Vec3, _| f64::from(grid.cell_of(a) == home)),
        ),
    ];
    let exact: Vec<f64> = observables
        .iter()
        .map(|(_, phi)| {
            0.5 * generator_apply_k2(phi, v1, v2, &grid, &kernel, GENERATOR_N_OMEGA).unwrap()
        })
        .collect();
    let base: Vec<f64> = observables.iter().map(|(_, phi)| phi(v1, v2)).collect();
    let proto = ParticleEnsemble::new(grid, vec![v1, v2]).unwrap();
    let mut rng = replica_rng(SEED, 3);
    let mut sum = [0f64; 3];
    let mut sum_sq = [0f64; 3];
    for _ in 0..GENERATOR_REPLICAS {
        let mut e = proto.clone();
        e.advance(&kernel, GENERATOR_H, &mut rng);
        if e.counters().accepted == 0 {
            continue;
        }
        let v = e.velocities();
        for (m, (_, phi)) in observables.iter().enumerate() {
            let d = (phi(v[0], v[1]) - base[m]) / GENERATOR_H;
            sum[m] += d;
            sum_sq[m] += d * d;
        }
    }
    let r = GENERATOR_REPLICAS as f64;
    let mut ok = true;
    let mut parts = Vec::new();
    for m in 0..3 {
        let mean = sum[m] / r;
        let se = ((sum_sq[m] / r - mean * mean) / (r - 1.0)).sqrt();
        let z = (mean - exact[m]).abs() / se;
        ok &= z <= GENERATOR_SIGMAS;
        parts.push(format!(
            "{}: {mean:.5} vs {:.5} ({z:.2} se)",
            observables[m].0, exact[m]
        ));
    }
    verdict(
        "3 generator consistency",
        ok,
        format!(
            "N = 2, {GENERATOR_REPLICAS} replicas, h = {GENERATOR_H:e}: {} (limit {GENERATOR_SIGMAS} se)",
            parts.join(", ")
        ),
    )
}

fn criteria_5_and_6(dir: &tempfile::TempDir) -> Vec<Verdict> {
    let cfg = config(Experiment::HierarchyCheck, dir, "hierarchy");
    match run(&cfg) {
        Ok(s) => {
            let (ok5, d5) = checks_pass(&s, &["c3_nullity", "c3_counterexample"]);
            let (ok6, d6) = checks_pass(&s, &["factorization"]);
            vec![
                verdict(
                    "5 C3 nullity",
                    ok5,
                    format!("{} fields: {d5}", cfg.hierarchy.fields),
                ),
                verdict(
                    "6 hierarchy / U-U consistency",
                    ok6,
                    format!("{} fields: {d6}", cfg.hierarchy.fields),
                ),
            ]
        }
        Err(e) => vec![
            verdict("5 C3 nullity", false, e.to_string()),
            verdict("6 hierarchy / U-U consistency", false, e.to_string()),
        ],
    }
}

fn criteria_7a_and_8(dir: &tempfile::TempDir) -> Vec<Verdict> {
    let mut cfg = config(Experiment::UuSolve, dir, "fermi-dirac");
    cfg.uu.start = UuStart::FermiDirac;
    cfg.uu.dt = FD_DT;
    cfg.uu.refine_check = true;
    match run(&cfg) {
        Ok(s) => {
            let (ok7, d7) = checks_pass(&s, &["fd_stationarity", "budget_refines"]);
            let (ok8, d8) = checks_pass(&s, &["moment_drift", "raw_defect_refines"]);
            let drift = s.get("uu_moment_drift").unwrap_or(f64::INFINITY);
            vec![
                verdict(
                    "7a Fermi-Dirac stationarity",
                    ok7,
                    format!("n = 21, dt = {FD_DT}, T = 1: {d7}"),
                ),
                verdict("8 U-U conservation", ok8 && drift <= MOMENT_DRIFT_TOL, d8),
            ]
        }
        Err(e) => vec![
            verdict("7a Fermi-Dirac stationarity", false, e.to_string()),
            verdict("8 U-U conservation", false, e.to_string()),
        ],
    }
}

fn criterion_7b() -> Verdict {
    let grid = VelocityGrid::new(11, 3.0).unwrap();
    let kernel = CrossSectionSpec::smooth_ramp(4.0, 1.0);
    let ctx =
        CollisionContext::new(grid, kernel, SphereQuadrature::with_nodes(32).unwrap()).unwrap();
    let mut rng = replica_rng(SEED, 7);
    let mut worst_excess = f64::NEG_INFINITY;
    let mut runs = 0;
    let mut horizon = f64::INFINITY;
    for alpha in [0.2, 0.6] {
        for _ in 0..3 {
            let mut f = random_density_field(grid, alpha, &mut rng);
            let scale = NEAR_SATURATION / alpha / f.max();
            f.values_mut().iter_mut().for_each(|x| *x *= scale);
            let dt = (0.5 * ctx.dt_max(&f)).min(0.01);
            let t_final = MAX_PRINCIPLE_STEPS as f64 * dt;
            let sol = ctx
                .solve(&f, t_final, dt, &SolverOptions::default())
                .unwrap();
            horizon = horizon.min(t_final);
            worst_excess = worst_excess.max(sol.max_value() - 1.0 / alpha);
            runs += 1;
        }
    }
    verdict(
        "7b maximum principle",
        worst_excess <= MAX_PRINCIPLE_SLACK,
        format!(
            "{runs} solves of {MAX_PRINCIPLE_STEPS} steps (shortest horizon {horizon:.2e}) from fields with \
             max (1 - 1e-3)/alpha: max f - 1/alpha = {worst_excess:.3e} (limit {MAX_PRINCIPLE_SLACK:e})"
        ),
    )
}

fn criterion_7c(dir: &tempfile::TempDir) -> Verdict {
    let mut cfg = config(Experiment::Relax, dir, "stationarity");
    cfg.replicas = 32;
    cfg.sim.n_particles = 2000;
    match run(&cfg) {
        Ok(s) => {
            let (ok, d) = checks_pass(&s, &["stationarity"]);
            verdict(
                "7c particle stationarity",
                ok,
                format!("N = 2000, 32 replicas: {d}"),
            )
        }
        Err(e) => verdict("7c particle stationarity", false, e.to_string()),
    }
}

fn sweep(
    dir: &tempfile::TempDir,
    experiment: Experiment,
    family: InitFamily,
    name: &str,
) -> Result<RunSummary, String> {
    let mut cfg = config(experiment, dir, name);
    cfg.n_sweep = SWEEP.to_vec();
    cfg.replicas = SWEEP_REPLICAS;
    cfg.replica_growth = SWEEP_GROWTH;
    cfg.init.family = family;
    run(&cfg).map_err(|e| e.to_string())
}

fn criteria_9_and_10(dir: &tempfile::TempDir) -> Vec<Verdict> {
    let t0 = Instant::now();
    let a = sweep(
        dir,
        Experiment::Converge,
        InitFamily::ConditionedProduct,
        "converge-a",
    );
    let b = sweep(
        dir,
        Experiment::Converge,
        InitFamily::TwoScale,
        "converge-b",
    );
    let c = sweep(dir, Experiment::Chaos, InitFamily::TwoScale, "chaos");
    let dt = t0.elapsed();
    let mut out = Vec::new();
    match (a, b) {
        (Ok(a), Ok(b)) => {
            let (oka, da) = checks_pass(&a, &["l1_decreasing"]);
            let (okb, db) = checks_pass(&b, &["l1_decreasing"]);
            out.push(verdict(
                "9 convergence sweep",
                oka && okb && dt <= SWEEP_TIME,
                format!(
                    "conditioned product {da}; two-scale {db}; sweeps {:.0} s (limit {} s)",
                    dt.as_secs_f64(),
                    SWEEP_TIME.as_secs()
                ),
            ));
        }
        (a, b) => out.push(verdict(
            "9 convergence sweep",
            false,
            format!("{:?} {:?}", a.err(), b.err()),
        )),
    }
    match c {
        Ok(c) => {
            let (ok, d) = checks_pass(&c, &["chaos_decreasing/t=0", "chaos_decreasing/t=1"]);
            out.push(verdict("10 propagation of chaos", ok, d));
        }
        Err(e) => out.push(verdict("10 propagation of chaos", false, e)),
    }
    out
}

fn criterion_11a() -> Verdict {
    // cell masses differ because the support ends mid-cell
    let delta = 0.5;
    let upper = Vec3::new(1.25, 1.25, 0.5);
    let f_in = OneParticleDensity::uniform(Vec3::ZERO, upper).unwrap();
    let grid = CellGrid::from_delta(3, delta).unwrap();
    let cells: Vec<(CellIndex, f64)> = (0..3)
        .flat_map(|ix| (0..3).map(move |iy| (ix, iy)))
        .map(|(ix, iy)| {
            let w = |i: i64| if i < 2 { 0.5 } else { 0.25 };
            (CellIndex::new(ix, iy, 0), w(ix) * w(iy))
        })
        .collect();
    let mut exact: HashMap<[CellIndex; 3], f64> = HashMap::new();
    let mut z = 0.0;
    for a in 0..cells.len() {
        for b in a + 1..cells.len() {
            for c in b + 1..cells.len() {
                let w = cells[a].1 * cells[b].1 * cells[c].1;
                let mut key = [cells[a].0, cells[b].0, cells[c].0];
                key.sort();
                exact.insert(key, w);
                z += w;
            }
        }
    }
    let mut rng = replica_rng(SEED, 11);
    let mut chain =
        ConditionedProductChain::new(&f_in, grid, &mut rng, DEFAULT_RETRY_BUDGET).unwrap();
    chain.run(1000, &mut rng);
    let mut hist: HashMap<[CellIndex; 3], u64> = HashMap::new();
    for _ in 0..CHAIN_STEPS {
        chain.step(&mut rng);
        let mut key = [CellIndex::new(0, 0, 0); 3];
        for (k, c) in key.iter_mut().zip(chain.cells()) {
            *k = c;
        }
        key.sort();
        *hist.entry(key).or_default() += 1;
    }
    let unexpected = hist.keys().filter(|k| !exact.contains_key(*k)).count();
    let tv = 0.5
        * exact
            .iter()
            .map(|(k, w)| {
                (hist.get(k).copied().unwrap_or(0) as f64 / CHAIN_STEPS as f64 - w / z).abs()
            })
            .sum::<f64>();
    verdict(
        "11a sampler-A small-instance law",
        tv <= TV_TOL && unexpected == 0,
        format!(
            "N = 3 on {} cells, {CHAIN_STEPS} chain steps: TV = {tv:.4} (limit {TV_TOL}), {unexpected} states off the support",
            cells.len()
        ),
    )
}

fn criterion_11b() -> Verdict {
    let f_in = OneParticleDensity::truncated_maxwellian(1.0, 4.0).unwrap();
    let mut rng = replica_rng(SEED, 12);
    let mut ok = true;
    let mut parts = Vec::new();
    for n in 2..=8 {
        // large cells make exclusion visible at small N
        let grid = CellGrid::from_delta(n, 0.45).unwrap();
        let z = exact_rejection_rate(&f_in, &grid, 200_000, &mut rng);
        let lower = partition_lower_bound(&f_in, &grid);
        ok &= (lower..=1.0).contains(&z);
        parts.push(format!("N={n}: {z:.4} in [{lower:.4}, 1]"));
    }
    verdict("11b exact-rejection acceptance", ok, parts.join(", "))
}

fn criterion_11c() -> Verdict {
    let f_in = OneParticleDensity::truncated_maxwellian(1.0, 4.0).unwrap();
    let alpha = 0.2;
    let limit = solve_a(&f_in, alpha)
        .unwrap()
        .to_field(VelocityGrid::new(61, 5.0).unwrap());
    let region = CompactBox::cube(1.5).unwrap();
    let mut stats = Vec::new();
    for (i, &n) in MARGINAL_SWEEP.iter().enumerate() {
        let replicas = MARGINAL_REPLICAS * n / MARGINAL_SWEEP[0];
        let cfg = SimConfig {
            n_particles: n,
            alpha,
            t_final: 1.0,
            seed: SEED,
            snapshot_times: vec![],
            kernel: CrossSectionSpec::smooth_ramp(4.0, 1.0),
        };
        let mut occ = ReplicaOccupancy::new(1, cfg.grid().unwrap(), region).unwrap();
        for r in 0..replicas {
            let mut rng = replica_rng(SEED ^ n as u64, r as u64);
            let e = sample_conditioned_product(&f_in, &cfg, &mut rng, None).unwrap();
            occ.push(&e).unwrap();
        }
        stats.push(occ.l1_bootstrap(&limit, 64, SEED + i as u64).unwrap());
    }
    let ok = stats
        .windows(2)
        .all(|w| w[0].value - w[1].value > (w[0].std_err.powi(2) + w[1].std_err.powi(2)).sqrt());
    let parts: Vec<String> = MARGINAL_SWEEP
        .iter()
        .zip(&stats)
        .map(|(n, s)| format!("N={n}: {:.4} +- {:.4}", s.value, s.std_err))
        .collect();
    verdict(
        "11c sampler-A marginal limit",
        ok,
        format!(
            "l1 distance to f_in/(e^-a + alpha f_in): {}",
            parts.join(", ")
        ),
    )
}

fn criterion_11d() -> Verdict {
    let mut rng = SimRng::seed_from_u64(SEED);
    let mut ok = true;
    let mut parts = Vec::new();
    for (q, k) in [(2usize, 3usize), (3, 2)] {
        let delta = 0.1;
        let big = CellIndex::new(2, -1, 0);
        let mut hist: HashMap<Vec<CellIndex>, u64> = HashMap::new();
        let mut out = Vec::new();
        for _ in 0..SUBSET_DRAWS {
            out.clear();
            place_in_big_cell(&mut rng, big, q, k, delta, &mut out).unwrap();
            let mut cells: Vec<_> = out.iter().map(|&v| cell_of(delta, v)).collect();
            cells.sort();
            *hist.entry(cells).or_default() += 1;
        }
        let subsets = binomial(q * q * q, k);
        let p = 1.0 / subsets as f64;
        let mean = SUBSET_DRAWS as f64 * p;
        let sd = (mean * (1.0 - p)).sqrt();
        let worst = hist
            .values()
            .map(|&c| (c as f64 - mean).abs() / sd)
            .fold(0.0, f64::max);
        ok &= hist.len() == subsets && worst <= SUBSET_SIGMAS;
        parts.push(format!(
            "q={q}, k={k}: {} of {subsets} subsets, worst {worst:.2} sd",
            hist.len()
        ));
    }
    verdict(
        "11d sampler-B fine-cell subsets",
        ok,
        format!(
            "{SUBSET_DRAWS} draws each: {} (limit {SUBSET_SIGMAS} sd)",
            parts.join("; ")
        ),
    )
}

fn binomial(n: usize, k: usize) -> usize {
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

fn criterion_11e() -> Verdict {
    let mut worst: f64 = 0.0;
    for (upper, alpha) in [
        (Vec3::new(1.0, 1.0, 1.0), 0.5),
        (Vec3::new(2.0, 1.0, 1.5), 0.3),
        (Vec3::new(0.5, 2.0, 3.0), 0.8),
        (Vec3::new(4.0, 4.0, 4.0), 0.9),
    ] {
        let f = OneParticleDensity::uniform(Vec3::ZERO, upper).unwrap();
        let v = upper.x * upper.y * upper.z;
        let a = solve_a(&f, alpha).unwrap().a_coeff;
        worst = worst.max((a + (1.0 - alpha / v).ln()).abs());
    }
    verdict(
        "11e solve_a on uniform profiles",
        worst <= SOLVE_A_TOL,
        format!("max |a + ln(1 - alpha/V)| = {worst:.2e} (limit {SOLVE_A_TOL:e})"),
    )
}

fn main() {
    // `cargo test` passes libtest flags; a listing request gets an empty list
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let dir = tempfile::tempdir().expect("temporary directory");
    let t0 = Instant::now();
    let mut verdicts = Vec::new();
    // ACCEPTANCE_ONLY=7b,9 runs the stages that name one of the listed criteria
    let only: Option<Vec<String>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').map(|x| x.trim().to_string()).collect());
    let mut stage = |name: &str, f: &dyn Fn() -> Vec<Verdict>| {
        if let Some(only) = &only {
            if !name.split(' ').any(|tok| only.iter().any(|o| o == tok)) {
                return;
            }
        }
        let t = Instant::now();
        let out = f();
        eprintln!("{name} done in {:.1} s", t.elapsed().as_secs_f64());
        verdicts.extend(out);
    };
    stage("criterion 1", &|| vec![criterion_1()]);
    stage("criteria 2 and 4", &|| criteria_2_and_4(&dir));
    stage("criterion 3", &|| vec![criterion_3()]);
    stage("criteria 5 and 6", &|| criteria_5_and_6(&dir));
    stage("criteria 7a and 8", &|| criteria_7a_and_8(&dir));
    stage("criterion 7b", &|| vec![criterion_7b()]);
    stage("criterion 7c", &|| vec![criterion_7c(&dir)]);
    stage("criteria 9 and 10", &|| criteria_9_and_10(&dir));
    stage("criterion 11a", &|| vec![criterion_11a()]);
    stage("criterion 11b", &|| vec![criterion_11b()]);
    stage("criterion 11c", &|| vec![criterion_11c()]);
    stage("criterion 11d", &|| vec![criterion_11d()]);
    stage("criterion 11e", &|| vec![criterion_11e()]);
    verdicts.sort_by_key(|v| {
        let digits: String = v.id.chars().take_while(|c| c.is_ascii_digit()).collect();
        (digits.parse::<u32>().unwrap_or(0), v.id)
    });
    for v in &verdicts {
        println!(
            "{} {}: {}",
            if v.passed { "PASS" } else { "FAIL" },
            v.id,
            v.detail
        );
    }
    let failed = verdicts.iter().filter(|v| !v.passed).count();
    println!(
        "acceptance: {} passed, {failed} failed in {:.0} s",
        verdicts.len() - failed,
        t0.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
