use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::CrossSectionSpec;
use crate::uu::field::{DensityField, Moments};
use crate::uu::operator::{conservative_projection, CollisionContext};
use crate::uu::quadrature::SphereQuadrature;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Project each operator evaluation onto the moment-preserving subspace.
    pub conservative: bool,
    /// Reject time steps above [`CollisionContext::dt_max`].
    pub enforce_dt_max: bool,
    pub snapshot_times: Vec<f64>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            conservative: true,
            enforce_dt_max: true,
            snapshot_times: Vec::new(),
        }
    }
}

/// Nodes outside `[0, 1/alpha]` after a step. Nothing is clamped.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StepReport {
    pub below_zero: usize,
    pub above_bound: usize,
    pub min: f64,
    pub max: f64,
}

impl StepReport {
    fn of(f: &DensityField) -> Self {
        let (below_zero, above_bound) = f.bound_violations(0.0);
        Self {
            below_zero,
            above_bound,
            min: f.min(),
            max: f.max(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub step: usize,
    pub t: f64,
    pub moments: Moments,
    pub report: StepReport,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub snapshots: Vec<(f64, DensityField)>,
    pub diagnostics: Vec<StepDiagnostics>,
}

impl Solution {
    pub fn last(&self) -> &DensityField {
        &self.snapshots.last().expect("at least the initial field").1
    }

    /// Largest relative moment drift over the run.
    pub fn max_moment_drift(&self) -> f64 {
        let Some(first) = self.diagnostics.first() else {
            return 0.0;
        };
        self.diagnostics
            .iter()
            .map(|d| d.moments.relative_drift(&first.moments))
            .fold(0.0, f64::max)
    }

    /// Largest nodal value seen over the run.
    pub fn max_value(&self) -> f64 {
        self.diagnostics
            .iter()
            .map(|d| d.report.max)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Snapshot closest to time `t`.
    pub fn at(&self, t: f64) -> &DensityField {
        &self
            .snapshots
            .iter()
            .min_by(|a, b| (a.0 - t).abs().total_cmp(&(b.0 - t).abs()))
            .expect("non-empty")
            .1
    }
}

impl CollisionContext {
    /// Collision operator, projected onto the conserved moments when `conservative`.
    pub fn rhs(&self, f: &DensityField, conservative: bool) -> Result<DensityField> {
        let mut q = self.collision_operator(f)?;
        if conservative {
            conservative_projection(f, &mut q);
        }
        Ok(q)
    }

    /// One explicit midpoint step.
    pub fn step(
        &self,
        f: &DensityField,
        dt: f64,
        opts: &SolverOptions,
    ) -> Result<(DensityField, StepReport)> {
        if !(dt >= 0.0 && dt.is_finite()) {
            return Err(Error::config(format!(
                "dt must be finite and >= 0, got {dt}"
            )));
        }
        if dt == 0.0 {
            return Ok((f.clone(), StepReport::of(f)));
        }
        if opts.enforce_dt_max {
            let limit = self.dt_max(f);
            if dt > limit {
                return Err(Error::config(format!(
                    "dt = {dt} exceeds the stability bound {limit:.3e}"
                )));
            }
        }
        let k1 = self.rhs(f, opts.conservative)?;
        let mut mid = f.clone();
        mid.axpy(0.5 * dt, &k1);
        let k2 = self.rhs(&mid, opts.conservative)?;
        let mut next = f.clone();
        next.axpy(dt, &k2);
        let report = StepReport::of(&next);
        Ok((next, report))
    }

    /// Fixed-step integration from `f0` to `t_final`.
    ///
    /// The last step is shortened when `t_final` is not a multiple of `dt`.
    /// Snapshots are taken at the first step reaching each requested time, and
    /// the initial and final fields are always included.
    pub fn solve(
        &self,
        f0: &DensityField,
        t_final: f64,
        dt: f64,
        opts: &SolverOptions,
    ) -> Result<Solution> {
        if !(t_final >= 0.0 && t_final.is_finite()) {
            return Err(Error::config(format!(
                "t_final must be >= 0, got {t_final}"
            )));
        }
        if t_final > 0.0 && !(dt > 0.0) {
            return Err(Error::config(format!("dt must be positive, got {dt}")));
        }
        if let Some(alpha_max) = (f0.alpha() > 0.0).then(|| 1.0 / f0.alpha()) {
            if f0.max() > alpha_max {
                return Err(Error::config(format!(
                    "initial field exceeds 1/alpha = {alpha_max}"
                )));
            }
        }
        let mut snaps = vec![(0.0, f0.clone())];
        let mut diags = vec![StepDiagnostics {
            step: 0,
            t: 0.0,
            moments: f0.moments(),
            report: StepReport::of(f0),
        }];
        let mut pending: Vec<f64> = opts
            .snapshot_times
            .iter()
            .copied()
            .filter(|&t| t > 0.0 && t <= t_final)
            .collect();
        pending.sort_by(f64::total_cmp);
        pending.reverse();

        let n_full = (t_final / dt).floor() as usize;
        let rest = t_final - n_full as f64 * dt;
        let n_steps = if rest > 1e-9 * dt { n_full + 1 } else { n_full };
        let mut f = f0.clone();
        let mut t = 0.0;
        for step in 1..=n_steps {
            let h = if step == n_steps { t_final - t } else { dt };
            let (next, report) = self.step(&f, h, opts).map_err(|e| match e {
                Error::Numerical { message, .. } => Error::Numerical {
                    step: Some(step),
                    message,
                },
                other => other,
            })?;
            if !next.is_finite() {
                return Err(Error::Numerical {
                    step: Some(step),
                    message: "non-finite value in the density field".into(),
                });
            }
            f = next;
            t = if step == n_steps {
                t_final
            } else {
                step as f64 * dt
            };
            diags.push(StepDiagnostics {
                step,
                t,
                moments: f.moments(),
                report,
            });
            while pending.last().is_some_and(|&ts| ts <= t + 1e-12) {
                pending.pop();
                if snaps.last().map(|s| s.0) != Some(t) {
                    snaps.push((t, f.clone()));
                }
            }
        }
        if snaps.last().map(|s| s.0) != Some(t) {
            snaps.push((t, f));
        }
        Ok(Solution {
            snapshots: snaps,
            diagnostics: diags,
        })
    }
}

/// One midpoint step with a freshly built context.
pub fn step(
    f: &DensityField,
    dt: f64,
    kernel: &CrossSectionSpec,
    quad: &SphereQuadrature,
) -> Result<(DensityField, StepReport)> {
    CollisionContext::new(*f.grid(), kernel.clone(), quad.clone())?.step(
        f,
        dt,
        &SolverOptions::default(),
    )
}

/// Integrates to `t_final` with default options.
pub fn solve(
    f0: &DensityField,
    t_final: f64,
    dt: f64,
    kernel: &CrossSectionSpec,
    quad: &SphereQuadrature,
) -> Result<Vec<DensityField>> {
    let ctx = CollisionContext::new(*f0.grid(), kernel.clone(), quad.clone())?;
    Ok(ctx
        .solve(f0, t_final, dt, &SolverOptions::default())?
        .snapshots
        .into_iter()
        .map(|(_, f)| f)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::uu::field::VelocityGrid;
    use crate::vec3::Vec3;

    fn ctx() -> CollisionContext {
        CollisionContext::new(
            VelocityGrid::new(11, 3.0).unwrap(),
            CrossSectionSpec::smooth_ramp(1.0, 1.3),
            SphereQuadrature::with_nodes(32).unwrap(),
        )
        .unwrap()
    }

    fn bump(c: &CollisionContext) -> DensityField {
        let mut f = DensityField::from_fn(*c.grid(), 0.2, |v| {
            let a = (-(v - Vec3::new(0.6, 0.0, 0.0)).norm_sq() / 0.5).exp();
            let b = 0.5 * (-(v + Vec3::new(0.6, 0.2, 0.0)).norm_sq() / 1.2).exp();
            a + b
        });
        f.normalize().unwrap();
        f
    }

    #[test]
    fn zero_step_and_zero_horizon() {
        let c = ctx();
        let f = bump(&c);
        let (g, _) = c.step(&f, 0.0, &SolverOptions::default()).unwrap();
        assert_eq!(g, f);
        let sol = c.solve(&f, 0.0, 0.01, &SolverOptions::default()).unwrap();
        assert_eq!(sol.snapshots.len(), 1);
        assert_eq!(sol.snapshots[0].1, f);
    }

    #[test]
    fn equilibrium_is_fixed() {
        let c = CollisionContext::new(
            VelocityGrid::new(11, 3.0).unwrap(),
            CrossSectionSpec::smooth_ramp(0.0, 1.3),
            SphereQuadrature::with_nodes(32).unwrap(),
        )
        .unwrap();
        let f = bump(&ctx());
        let opts = SolverOptions {
            enforce_dt_max: false,
            ..Default::default()
        };
        let (g, _) = c.step(&f, 0.01, &opts).unwrap();
        assert!(g.max_diff(&f) <= 1e-14);
    }

    #[test]
    fn conservative_steps_keep_moments() {
        let c = ctx();
        let f = bump(&c);
        let sol = c.solve(&f, 0.01, 0.001, &SolverOptions::default()).unwrap();
        assert!(sol.max_moment_drift() < 1e-12, "{}", sol.max_moment_drift());
        let raw = SolverOptions {
            conservative: false,
            ..Default::default()
        };
        let (g, _) = c.step(&f, 0.001, &raw).unwrap();
        assert!((g.integral() - f.integral()).abs() < 1e-3);
    }

    #[test]
    fn snapshots_and_short_last_step() {
        let c = ctx();
        let f = bump(&c);
        let opts = SolverOptions {
            snapshot_times: vec![0.001, 0.002],
            ..Default::default()
        };
        let sol = c.solve(&f, 0.0025, 0.001, &opts).unwrap();
        let times: Vec<f64> = sol.snapshots.iter().map(|s| s.0).collect();
        assert_eq!(times, vec![0.0, 0.001, 0.002, 0.0025]);
        assert_eq!(sol.diagnostics.len(), 4);
    }

    #[test]
    fn oversized_step_is_rejected() {
        let c = ctx();
        let f = bump(&c);
        assert!(matches!(
            c.step(&f, 10.0, &SolverOptions::default()),
            Err(Error::Config(_))
        ));
    }
}
