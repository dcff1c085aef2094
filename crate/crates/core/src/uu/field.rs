use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vec3::Vec3;

/// Uniform Cartesian grid on `[-L, L]^3` with `n` nodes per axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VelocityGrid {
    n: usize,
    l: f64,
}

impl VelocityGrid {
    pub fn new(n: usize, l: f64) -> Result<Self> {
        if n < 3 {
            return Err(Error::config(format!(
                "uu.grid_n must be at least 3, got {n}"
            )));
        }
        if !(l > 0.0 && l.is_finite()) {
            return Err(Error::config(format!(
                "uu.grid_l must be positive, got {l}"
            )));
        }
        Ok(Self { n, l })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn half_width(&self) -> f64 {
        self.l
    }

    #[inline]
    pub fn spacing(&self) -> f64 {
        2.0 * self.l / (self.n - 1) as f64
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn coord(&self, i: usize) -> f64 {
        -self.l + i as f64 * self.spacing()
    }

    #[inline]
    pub fn index(&self, ix: usize, iy: usize, iz: usize) -> usize {
        (ix * self.n + iy) * self.n + iz
    }

    #[inline]
    pub fn unflatten(&self, idx: usize) -> [usize; 3] {
        let n = self.n;
        [idx / (n * n), (idx / n) % n, idx % n]
    }

    pub fn node(&self, idx: usize) -> Vec3 {
        let [a, b, c] = self.unflatten(idx);
        Vec3::new(self.coord(a), self.coord(b), self.coord(c))
    }

    /// One-dimensional trapezoid weight of node `i`.
    #[inline]
    pub fn weight_1d(&self, i: usize) -> f64 {
        if i == 0 || i == self.n - 1 {
            0.5 * self.spacing()
        } else {
            self.spacing()
        }
    }

    /// Trapezoid weight of a node.
    pub fn weight(&self, idx: usize) -> f64 {
        let [a, b, c] = self.unflatten(idx);
        self.weight_1d(a) * self.weight_1d(b) * self.weight_1d(c)
    }

    pub fn weights(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.weight(i)).collect()
    }
}

/// Mass, momentum and second moment `int |v|^2 f`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Moments {
    pub mass: f64,
    pub momentum: Vec3,
    pub energy: f64,
}

impl Moments {
    /// Largest relative change between two moment sets.
    ///
    /// Mass and energy are compared to their own size, momentum to
    /// `sqrt(mass * energy)` since it may vanish.
    pub fn relative_drift(&self, reference: &Moments) -> f64 {
        let dm = (self.mass - reference.mass).abs() / reference.mass.abs().max(f64::MIN_POSITIVE);
        let de =
            (self.energy - reference.energy).abs() / reference.energy.abs().max(f64::MIN_POSITIVE);
        let scale = (reference.mass.abs() * reference.energy.abs())
            .sqrt()
            .max(f64::MIN_POSITIVE);
        let dp = (self.momentum - reference.momentum).norm() / scale;
        dm.max(de).max(dp)
    }
}

/// Grid function on a [`VelocityGrid`], read off-grid by trilinear
/// interpolation and taken as zero outside the box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityField {
    grid: VelocityGrid,
    alpha: f64,
    values: Vec<f64>,
}

impl DensityField {
    pub fn zeros(grid: VelocityGrid, alpha: f64) -> Self {
        Self {
            grid,
            alpha,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn from_fn(grid: VelocityGrid, alpha: f64, mut f: impl FnMut(Vec3) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.node(i))).collect();
        Self {
            grid,
            alpha,
            values,
        }
    }

    pub fn from_values(grid: VelocityGrid, alpha: f64, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::config(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        Ok(Self {
            grid,
            alpha,
            values,
        })
    }

    #[inline]
    pub fn grid(&self) -> &VelocityGrid {
        &self.grid
    }

    #[inline]
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn at(&self, ix: usize, iy: usize, iz: usize) -> f64 {
        self.values[self.grid.index(ix, iy, iz)]
    }

    /// Trilinear interpolation; zero outside `[-L, L]^3`.
    pub fn interpolate(&self, v: Vec3) -> f64 {
        let h = self.grid.spacing();
        let n = self.grid.n();
        let top = (n - 1) as f64;
        let mut base = [0usize; 3];
        let mut frac = [0.0; 3];
        for a in 0..3 {
            let t = (v.axis(a) + self.grid.half_width()) / h;
            if !(0.0..=top).contains(&t) {
                return 0.0;
            }
            let b = (t.floor() as usize).min(n - 2);
            base[a] = b;
            frac[a] = t - b as f64;
        }
        let mut acc = 0.0;
        for corner in 0..8 {
            let mut w = 1.0;
            let mut idx = [0usize; 3];
            for a in 0..3 {
                let up = (corner >> (2 - a)) & 1;
                idx[a] = base[a] + up;
                w *= if up == 1 { frac[a] } else { 1.0 - frac[a] };
            }
            if w != 0.0 {
                acc += w * self.at(idx[0], idx[1], idx[2]);
            }
        }
        acc
    }

    pub fn integral(&self) -> f64 {
        self.moments().mass
    }

    pub fn moments(&self) -> Moments {
        let mut m = Moments::default();
        for (i, &f) in self.values.iter().enumerate() {
            let w = self.grid.weight(i) * f;
            let v = self.grid.node(i);
            m.mass += w;
            m.momentum += v * w;
            m.energy += w * v.norm_sq();
        }
        m
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Nodes below zero and above `1/alpha` (plus `slack`).
    pub fn bound_violations(&self, slack: f64) -> (usize, usize) {
        let top = if self.alpha > 0.0 {
            1.0 / self.alpha + slack
        } else {
            f64::INFINITY
        };
        let below = self.values.iter().filter(|&&f| f < -slack).count();
        let above = self.values.iter().filter(|&&f| f > top).count();
        (below, above)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|f| f.is_finite())
    }

    /// Rescales so that the trapezoid integral is one.
    pub fn normalize(&mut self) -> Result<()> {
        let m = self.integral();
        if !(m > 0.0 && m.is_finite()) {
            return Err(Error::numerical(format!(
                "cannot normalize a field of mass {m}"
            )));
        }
        self.values.iter_mut().for_each(|f| *f /= m);
        Ok(())
    }

    /// `max_i |a_i - b_i|`.
    pub fn max_diff(&self, other: &DensityField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn axpy(&mut self, a: f64, other: &DensityField) {
        for (x, y) in self.values.iter_mut().zip(&other.values) {
            *x += a * y;
        }
    }
}

/// `(1/alpha) / (1 + exp(beta (|v|^2/2 - mu)))`.
#[inline]
pub fn fermi_dirac_value(alpha: f64, beta: f64, mu: f64, v: Vec3) -> f64 {
    let x = beta * (0.5 * v.norm_sq() - mu);
    // logistic written to avoid overflow for large x
    let p = if x > 0.0 {
        let e = (-x).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + x.exp())
    };
    p / alpha
}

/// Fermi–Dirac field with a given chemical potential.
pub fn fermi_dirac(alpha: f64, beta: f64, mu: f64, grid: VelocityGrid) -> Result<DensityField> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::config(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    if !(beta > 0.0) {
        return Err(Error::config(format!("beta must be positive, got {beta}")));
    }
    Ok(DensityField::from_fn(grid, alpha, |v| {
        fermi_dirac_value(alpha, beta, mu, v)
    }))
}

/// Fermi–Dirac field whose trapezoid integral on `grid` is one; returns the field and `mu`.
pub fn fermi_dirac_normalized(
    alpha: f64,
    beta: f64,
    grid: VelocityGrid,
) -> Result<(DensityField, f64)> {
    let mass = |mu: f64| -> Result<f64> { Ok(fermi_dirac(alpha, beta, mu, grid)?.integral()) };
    let (mut lo, mut hi) = (-50.0 / beta, 0.0);
    while mass(hi)? < 1.0 {
        hi = 2.0 * hi + 1.0;
        if hi > 1e6 {
            return Err(Error::numerical(
                "no chemical potential gives unit mass on this grid",
            ));
        }
    }
    if mass(lo)? > 1.0 {
        return Err(Error::numerical(
            "chemical potential bracket is inconsistent",
        ));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mass(mid)? < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 * hi.abs().max(1.0) {
            break;
        }
    }
    let mu = 0.5 * (lo + hi);
    Ok((fermi_dirac(alpha, beta, mu, grid)?, mu))
}
