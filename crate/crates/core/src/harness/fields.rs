//! Deterministic experiments on grid functions: hierarchy checks and U-U solves.

use std::fs::File;
use std::io::{BufWriter, Write};

use super::config::{ExperimentConfig, UuStart};
use super::output::write_field;
use super::{finish, start, RunSummary};
use crate::error::Result;
use crate::hierarchy::{
    c3_nullity, factorization_consistency, norm_scaling, random_density_field, sample_tuples,
    SymmetricGridFunction,
};
use crate::initdata::solve_a;
use crate::rng::{derive_seed, replica_rng};
use crate::uu::{
    fermi_dirac_normalized, CollisionContext, DensityField, Solution, SolverOptions, VelocityGrid,
};

/// Relative nullity tolerance of `C_{k,k+3}` on tensor powers.
pub const NULLITY_TOLERANCE: f64 = 1e-12;
/// Relative tolerance of the hierarchy / U-U factorization identity.
pub const FACTORIZATION_TOLERANCE: f64 = 1e-10;

/// Nullity of `C_{k,k+3}`, the factorization identity and operator-norm ratios on random fields.
pub fn run_hierarchy_check(cfg: &ExperimentConfig) -> Result<RunSummary> {
    let (mut s, t0) = start(cfg)?;
    let grid = cfg.uu.grid()?;
    let ctx = CollisionContext::new(grid, cfg.kernel.spec(), cfg.uu.quadrature()?)?;
    let alpha = cfg.sim.alpha;
    let mut rng = replica_rng(cfg.seed, 0);
    let mut worst_null: f64 = 0.0;
    let mut worst_fact: f64 = 0.0;
    let mut first = None;
    for i in 0..cfg.hierarchy.fields {
        let f = random_density_field(grid, alpha, &mut rng);
        let r1 = c3_nullity(
            &ctx,
            &SymmetricGridFunction::tensor_power(&f, 4),
            1,
            alpha,
            None,
        )?;
        let tuples = sample_tuples(
            &grid,
            2,
            cfg.hierarchy.samples,
            derive_seed(cfg.seed, i as u64),
        );
        let r2 = c3_nullity(
            &ctx,
            &SymmetricGridFunction::tensor_power(&f, 5),
            2,
            alpha,
            Some(&tuples),
        )?;
        let fact = factorization_consistency(&ctx, &f)?;
        s.metric(format!("c3_nullity/k=1/field={i}"), r1.max_abs)?;
        s.metric(format!("c3_term_scale/k=1/field={i}"), r1.term_scale)?;
        s.metric(format!("c3_nullity/k=2/field={i}"), r2.max_abs)?;
        s.metric(format!("c3_term_scale/k=2/field={i}"), r2.term_scale)?;
        s.metric(format!("factorization/field={i}"), fact)?;
        worst_null = worst_null.max(r1.relative()).max(r2.relative());
        worst_fact = worst_fact.max(fact);
        first.get_or_insert(f);
    }
    let g = random_density_field(grid, alpha, &mut rng);
    let h = random_density_field(grid, alpha, &mut rng);
    let broken = SymmetricGridFunction::product(vec![g.clone(), h.clone(), g, h])?;
    let counter = c3_nullity(&ctx, &broken, 1, alpha, None)?;
    s.metric("c3_counterexample", counter.max_abs)?;
    s.metric("c3_counterexample_relative", counter.relative())?;
    let f = first.expect("at least one field");
    for row in norm_scaling(
        &ctx,
        &f,
        cfg.hierarchy.samples,
        derive_seed(cfg.seed, u64::MAX),
    )? {
        s.metric(format!("norm_ratio_c1/k={}", row.k), row.c1_ratio)?;
        s.metric(format!("norm_ratio_c2/k={}", row.k), row.c2_ratio)?;
    }
    s.check(
        "c3_nullity",
        worst_null <= NULLITY_TOLERANCE,
        format!("worst |C3| / term scale {worst_null:e} (limit {NULLITY_TOLERANCE:e})"),
    );
    s.check(
        "c3_counterexample",
        counter.relative() > NULLITY_TOLERANCE,
        format!(
            "non-symmetric input gives |C3| / term scale {:e}",
            counter.relative()
        ),
    );
    s.check(
        "factorization",
        worst_fact <= FACTORIZATION_TOLERANCE,
        format!("worst relative residual {worst_fact:e} (limit {FACTORIZATION_TOLERANCE:e})"),
    );
    finish(s, t0, cfg)
}

fn start_field(cfg: &ExperimentConfig, grid: VelocityGrid) -> Result<DensityField> {
    let alpha = cfg.sim.alpha;
    Ok(match cfg.uu.start {
        UuStart::FermiDirac => fermi_dirac_normalized(alpha, cfg.uu.beta, grid)?.0,
        UuStart::Profile => {
            let f_in = cfg.f_in()?;
            DensityField::from_fn(grid, alpha, |v| f_in.eval(v))
        }
        UuStart::Limit => solve_a(&cfg.f_in()?, alpha)?.to_field(grid),
    })
}

/// Rate of change of the conserved moments under `q`, relative to those of `f`.
pub fn moment_defect(q: &DensityField, f: &DensityField) -> f64 {
    let mq = q.moments();
    let mf = f.moments();
    let dm = mq.mass.abs() / mf.mass.abs().max(f64::MIN_POSITIVE);
    let de = mq.energy.abs() / mf.energy.abs().max(f64::MIN_POSITIVE);
    let dp = mq.momentum.norm() / (mf.mass * mf.energy).abs().sqrt().max(f64::MIN_POSITIVE);
    dm.max(de).max(dp)
}

fn write_moments(cfg: &ExperimentConfig, sol: &Solution) -> Result<()> {
    let mut w = BufWriter::new(File::create(cfg.out_dir.join("uu_moments.csv"))?);
    writeln!(w, "step,t,mass,px,py,pz,energy,min,max")?;
    for d in &sol.diagnostics {
        let m = d.moments;
        writeln!(
            w,
            "{},{},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
            d.step,
            d.t,
            m.mass,
            m.momentum.x,
            m.momentum.y,
            m.momentum.z,
            m.energy,
            d.report.min,
            d.report.max
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Fixed-step U-U solve with conservation, maximum-principle and (for a
/// Fermi-Dirac start) stationarity diagnostics.
///
/// The stationarity budget is `t_final * max |rhs(f_0)|`; with
/// `uu.refine_check` the operator is evaluated once more on the grid with half
/// the spacing to confirm that the budget and the raw moment defect shrink.
pub fn run_uu_solve(cfg: &ExperimentConfig) -> Result<RunSummary> {
    let (mut s, t0) = start(cfg)?;
    let grid = cfg.uu.grid()?;
    let ctx = CollisionContext::new(grid, cfg.kernel.spec(), cfg.uu.quadrature()?)?;
    let alpha = cfg.sim.alpha;
    let f0 = start_field(cfg, grid)?;
    let opts = SolverOptions {
        conservative: cfg.uu.conservative,
        enforce_dt_max: true,
        snapshot_times: cfg.sim.snapshot_times.clone(),
    };
    let sol = ctx.solve(&f0, cfg.sim.t_final, cfg.uu.dt, &opts)?;
    let rate = ctx.rhs(&f0, cfg.uu.conservative)?.max_abs();
    let raw = moment_defect(&ctx.collision_operator(&f0)?, &f0);
    let change = sol.last().max_diff(&f0);
    let budget = cfg.sim.t_final * rate;
    let above: usize = sol.diagnostics.iter().map(|d| d.report.above_bound).sum();
    let below: usize = sol.diagnostics.iter().map(|d| d.report.below_zero).sum();
    s.metric("uu_moment_drift", sol.max_moment_drift())?;
    s.metric("uu_max", sol.max_value())?;
    s.metric("uu_start_max", f0.max())?;
    s.metric("uu_above_bound_nodes", above as f64)?;
    s.metric("uu_below_zero_nodes", below as f64)?;
    s.metric("uu_max_change", change)?;
    s.metric("uu_rate_start", rate)?;
    s.metric("uu_stationarity_budget", budget)?;
    s.metric("uu_raw_moment_defect", raw)?;
    s.metric("uu_steps", (sol.diagnostics.len() - 1) as f64)?;
    if cfg.output.fields {
        for (t, f) in &sol.snapshots {
            write_field(&cfg.out_dir, f, *t)?;
        }
    }
    write_moments(cfg, &sol)?;

    if f0.max() <= (1.0 - 1e-3) / alpha {
        s.check(
            "max_principle",
            sol.max_value() <= 1.0 / alpha + 1e-9,
            format!(
                "max f = {:e}, bound 1/alpha + 1e-9 = {:e}",
                sol.max_value(),
                1.0 / alpha + 1e-9
            ),
        );
    }
    if cfg.uu.conservative {
        s.check(
            "moment_drift",
            sol.max_moment_drift() <= 1e-6,
            format!(
                "max relative moment drift {:e} (limit 1e-6)",
                sol.max_moment_drift()
            ),
        );
    }
    let fd = cfg.uu.start == UuStart::FermiDirac;
    if fd {
        s.check(
            "fd_stationarity",
            change <= budget,
            format!("max |f(T) - f(0)| = {change:e}, budget T max|rhs(f0)| = {budget:e}"),
        );
    }
    if cfg.uu.refine_check {
        let fine = VelocityGrid::new(2 * cfg.uu.grid_n - 1, cfg.uu.grid_l)?;
        let ctx2 = CollisionContext::new(fine, cfg.kernel.spec(), cfg.uu.quadrature()?)?;
        let f0_fine = start_field(cfg, fine)?;
        let rate_fine = ctx2.rhs(&f0_fine, cfg.uu.conservative)?.max_abs();
        let raw_fine = moment_defect(&ctx2.collision_operator(&f0_fine)?, &f0_fine);
        s.metric("uu_rate_start_refined", rate_fine)?;
        s.metric("uu_raw_moment_defect_refined", raw_fine)?;
        s.check(
            "raw_defect_refines",
            raw_fine < raw,
            format!("raw moment defect {raw:e} -> {raw_fine:e} at half spacing"),
        );
        if fd {
            s.check(
                "budget_refines",
                rate_fine < rate,
                format!("max |rhs(FD)| {rate:e} -> {rate_fine:e} at half spacing"),
            );
        }
    }
    finish(s, t0, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::Experiment;

    #[test]
    fn hierarchy_check_passes_on_a_small_grid() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = ExperimentConfig::new(Experiment::HierarchyCheck);
        cfg.uu.grid_n = 9;
        cfg.uu.grid_l = 3.0;
        cfg.kernel.m_cut = 1.5;
        cfg.hierarchy.fields = 2;
        cfg.hierarchy.samples = 8;
        cfg.out_dir = dir.path().to_path_buf();
        let s = run_hierarchy_check(&cfg).unwrap();
        assert!(s.all_passed(), "{:?}", s.checks);
        assert!(s.get("c3_counterexample").unwrap() > 0.0);
        assert!(dir.path().join("summary.json").exists());
    }

    #[test]
    fn uu_solve_from_fermi_dirac() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = ExperimentConfig::new(Experiment::UuSolve);
        cfg.uu.grid_n = 11;
        cfg.uu.grid_l = 3.0;
        cfg.kernel.m_cut = 1.5;
        cfg.uu.dt = 0.002;
        cfg.sim.t_final = 0.02;
        cfg.sim.snapshot_times = vec![0.0, 0.02];
        cfg.uu.refine_check = true;
        cfg.out_dir = dir.path().to_path_buf();
        let s = run_uu_solve(&cfg).unwrap();
        assert!(s.all_passed(), "{:?}", s.checks);
        assert!(dir.path().join("uu_field_t0.02.csv").exists());
        assert!(dir.path().join("uu_moments.csv").exists());
        assert_eq!(s.get("uu_steps"), Some(10.0));
        assert!(s.get("uu_rate_start").unwrap() > 0.0);
    }
}
