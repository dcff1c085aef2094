//! Quadrature of the two-particle generator with exclusion factors.
//!
//! With `c = (v1 + v2)/2`, `r = |v1 - v2|/2`, `u = (v1 - v2)/|v1 - v2|` and
//! `omega = cos(theta) u + sin(theta) e(psi)`, the outgoing velocities are
//!
//! ```text
//! v1' = c - r (cos(2 theta) u + sin(2 theta) e(psi))
//! v2' = c + r (cos(2 theta) u + sin(2 theta) e(psi))
//! ```
//!
//! For fixed `psi` both travel along half circles, so the angles at which
//! they cross a cell face are available in closed form. Between consecutive
//! crossings the admissibility factor is constant and the remaining smooth
//! integrand is handled by Gauss–Legendre. The azimuth `psi` uses the
//! periodic trapezoid rule with `n_omega` nodes. Only the hemisphere
//! `omega . u >= 0` is integrated; the other half gives the same value.

use std::f64::consts::{PI, TAU};

use crate::error::{Error, Result};
use crate::grid::CellGrid;
use crate::kernel::{eval_kernel, CrossSectionSpec};
use crate::quad::GaussRule;
use crate::vec3::Vec3;

const GL_ORDER: usize = 8;

/// `sum_{i<j} int d omega B A(omega) [phi(V') - phi(V)]` for `N = 2`, where
/// `A` is the exclusion factor of the jump.
///
/// `n_omega` is the number of azimuthal nodes; the polar direction is
/// resolved exactly up to the Gauss–Legendre error on smooth pieces.
pub fn generator_apply_k2<F>(
    phi: F,
    v1: Vec3,
    v2: Vec3,
    grid: &CellGrid,
    kernel: &CrossSectionSpec,
    n_omega: usize,
) -> Result<f64>
where
    F: Fn(Vec3, Vec3) -> f64,
{
    let base = phi(v1, v2);
    integrate_admissible(v1, v2, grid, kernel, n_omega, |a, b| phi(a, b) - base)
}

/// `int d omega B A(omega)`: the total jump intensity of the pair, before the `1/N` factor.
pub fn admissible_rate_k2(
    v1: Vec3,
    v2: Vec3,
    grid: &CellGrid,
    kernel: &CrossSectionSpec,
    n_omega: usize,
) -> Result<f64> {
    integrate_admissible(v1, v2, grid, kernel, n_omega, |_, _| 1.0)
}

fn integrate_admissible<G>(
    v1: Vec3,
    v2: Vec3,
    grid: &CellGrid,
    kernel: &CrossSectionSpec,
    n_omega: usize,
    g: G,
) -> Result<f64>
where
    G: Fn(Vec3, Vec3) -> f64,
{
    if n_omega == 0 {
        return Err(Error::config("n_omega must be positive"));
    }
    let c1 = grid.cell_of(v1);
    let c2 = grid.cell_of(v2);
    if c1 == c2 {
        return Err(Error::Admissibility {
            cell: c1,
            first: 0,
            second: 1,
        });
    }
    let delta = grid.delta();
    let center = (v1 + v2) * 0.5;
    let rel = v1 - v2;
    let r = 0.5 * rel.norm();
    let u = rel / (2.0 * r);
    let e1 = u.any_orthonormal();
    let e2 = u.cross(e1);
    let rule = GaussRule::new(GL_ORDER);

    let mut breaks: Vec<f64> = Vec::new();
    let mut total = 0.0;
    for m in 0..n_omega {
        let psi = TAU * m as f64 / n_omega as f64;
        let e = e1 * psi.cos() + e2 * psi.sin();
        // s = 2 theta in [0, pi]; breakpoints where either outgoing velocity meets a face
        breaks.clear();
        breaks.push(0.0);
        breaks.push(PI);
        for a in 0..3 {
            let (ua, ea, ca) = (u.axis(a), e.axis(a), center.axis(a));
            let amp = r * ua.hypot(ea);
            if amp == 0.0 {
                continue;
            }
            let phase = ea.atan2(ua);
            let k_lo = ((ca - amp) / delta).ceil() as i64;
            let k_hi = ((ca + amp) / delta).floor() as i64;
            for k in k_lo..=k_hi {
                let y = (ca - k as f64 * delta) / amp;
                for yy in [y, -y] {
                    if yy.abs() > 1.0 {
                        continue;
                    }
                    let base = yy.acos();
                    for s in [phase + base, phase - base] {
                        let s = s.rem_euclid(TAU);
                        if s > 0.0 && s < PI {
                            breaks.push(s);
                        }
                    }
                }
            }
        }
        breaks.sort_by(f64::total_cmp);

        let mut strip = 0.0;
        for w in breaks.windows(2) {
            let (s0, s1) = (w[0], w[1]);
            if s1 - s0 <= 0.0 {
                continue;
            }
            let sm = 0.5 * (s0 + s1);
            let (a1, a2) = outgoing(center, r, u, e, sm);
            let (d1, d2) = (grid.cell_of(a1), grid.cell_of(a2));
            if d1 == d2 || d1 == c1 || d1 == c2 || d2 == c1 || d2 == c2 {
                continue;
            }
            strip += rule.integrate(s0, s1, |s| {
                let (a1, a2) = outgoing(center, r, u, e, s);
                let half = 0.5 * s;
                let omega = u * half.cos() + e * half.sin();
                let b = eval_kernel(kernel, rel, omega);
                // sin(theta) d theta = sin(s/2) ds / 2
                b * g(a1, a2) * 0.5 * half.sin()
            });
        }
        total += strip;
    }
    // azimuthal trapezoid weight, doubled for the opposite hemisphere
    Ok(2.0 * total * TAU / n_omega as f64)
}

#[inline]
fn outgoing(center: Vec3, r: f64, u: Vec3, e: Vec3, s: f64) -> (Vec3, Vec3) {
    let d = (u * s.cos() + e * s.sin()) * r;
    (center - d, center + d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::collide;

    fn setup() -> (CellGrid, CrossSectionSpec, Vec3, Vec3) {
        let grid = CellGrid::from_delta(2, 0.35).unwrap();
        let kernel = CrossSectionSpec::smooth_ramp(1.0, 4.0);
        (
            grid,
            kernel,
            Vec3::new(0.31, -0.52, 0.18),
            Vec3::new(-0.44, 0.27, 0.73),
        )
    }

    /// Independent product-midpoint rule over the full sphere for `int B A g`.
    fn brute_force(
        g: impl Fn(Vec3, Vec3) -> f64,
        v1: Vec3,
        v2: Vec3,
        grid: &CellGrid,
        kernel: &CrossSectionSpec,
        n: usize,
    ) -> f64 {
        let (c1, c2) = (grid.cell_of(v1), grid.cell_of(v2));
        let mut sum = 0.0;
        for a in 0..n {
            let z = -1.0 + (a as f64 + 0.5) * 2.0 / n as f64;
            let s = (1.0 - z * z).sqrt();
            for b in 0..n {
                let p = (b as f64 + 0.5) * TAU / n as f64;
                let w = Vec3::new(s * p.cos(), s * p.sin(), z);
                let (a1, a2) = collide(v1, v2, w);
                let (d1, d2) = (grid.cell_of(a1), grid.cell_of(a2));
                if d1 == d2 || d1 == c1 || d1 == c2 || d2 == c1 || d2 == c2 {
                    continue;
                }
                sum += eval_kernel(kernel, v1 - v2, w) * g(a1, a2);
            }
        }
        sum * 4.0 * PI / (n * n) as f64
    }

    #[test]
    fn annihilates_constants_and_momentum() {
        let (grid, kernel, v1, v2) = setup();
        let c = generator_apply_k2(|_, _| 3.7, v1, v2, &grid, &kernel, 64).unwrap();
        assert!(c.abs() <= 1e-14);
        for a in 0..3 {
            let p = generator_apply_k2(|x, y| x.axis(a) + y.axis(a), v1, v2, &grid, &kernel, 64)
                .unwrap();
            assert!(p.abs() <= 1e-12, "axis {a}: {p}");
        }
    }

    #[test]
    fn rate_without_exclusion_is_full_sphere() {
        // cells far smaller than the relative speed: blocking is negligible but not zero
        let grid = CellGrid::from_delta(2, 1e-3).unwrap();
        let kernel = CrossSectionSpec::smooth_ramp(1.0, 4.0);
        let v1 = Vec3::new(0.5, 0.0, 0.0);
        let v2 = Vec3::new(-0.5, 0.0, 0.0);
        let rate = admissible_rate_k2(v1, v2, &grid, &kernel, 32).unwrap();
        let full = 4.0 * PI * kernel.ramp(1.0);
        assert!((rate - full).abs() / full < 1e-3, "{rate} vs {full}");
    }

    #[test]
    fn converges_under_azimuthal_refinement() {
        let (grid, kernel, v1, v2) = setup();
        let phi = |x: Vec3, _: Vec3| x.norm_sq();
        let coarse = generator_apply_k2(phi, v1, v2, &grid, &kernel, 4096).unwrap();
        let fine = generator_apply_k2(phi, v1, v2, &grid, &kernel, 16384).unwrap();
        assert!(
            (coarse - fine).abs() <= 1e-6 * fine.abs(),
            "{coarse} vs {fine}"
        );
    }

    #[test]
    fn agrees_with_brute_force() {
        let (grid, kernel, v1, v2) = setup();
        let rate = admissible_rate_k2(v1, v2, &grid, &kernel, 4096).unwrap();
        let bf_rate = brute_force(|_, _| 1.0, v1, v2, &grid, &kernel, 1500);
        assert!((rate - bf_rate).abs() <= 2e-3 * rate, "{rate} vs {bf_rate}");
        let phi = |x: Vec3, _: Vec3| x.norm_sq();
        let q = generator_apply_k2(phi, v1, v2, &grid, &kernel, 4096).unwrap();
        let bf = brute_force(phi, v1, v2, &grid, &kernel, 1500) - phi(v1, v2) * bf_rate;
        assert!((q - bf).abs() <= 2e-3 * rate * phi(v1, v2), "{q} vs {bf}");
    }

    #[test]
    fn inadmissible_pair_is_an_error() {
        let (grid, kernel, _, _) = setup();
        let r = generator_apply_k2(
            |_, _| 0.0,
            Vec3::new(0.01, 0.01, 0.01),
            Vec3::new(0.02, 0.02, 0.02),
            &grid,
            &kernel,
            8,
        );
        assert!(matches!(r, Err(Error::Admissibility { .. })));
    }
}
