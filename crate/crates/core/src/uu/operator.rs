//! Discrete-velocity collision operator.
//!
//! For a grid node `v1`, a partner node `v2 = v1 - d h` and a direction
//! `omega`, the outgoing velocities sit at the fixed lattice offsets
//! `-omega (omega . d)` and `-d + omega (omega . d)` from `v1`. Both the
//! offsets and their trilinear weights are therefore independent of `v1`
//! and are tabulated once per `(d, omega)`. The field is copied into a
//! zero-padded array so every table entry becomes a constant index shift.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel::{eval_kernel, CrossSectionSpec};
use crate::uu::field::{DensityField, VelocityGrid};
use crate::uu::quadrature::SphereQuadrature;
use crate::vec3::Vec3;

#[derive(Debug, Clone)]
pub(crate) struct PointStencil {
    pub base: [i64; 3],
    pub frac: [f64; 3],
    pub offsets: [isize; 8],
    pub weights: [f64; 8],
}

impl PointStencil {
    fn new(q: [f64; 3], side: usize) -> Self {
        let mut base = [0i64; 3];
        let mut frac = [0.0; 3];
        for a in 0..3 {
            base[a] = q[a].floor() as i64;
            frac[a] = q[a] - base[a] as f64;
        }
        let s = side as isize;
        let mut offsets = [0isize; 8];
        let mut weights = [0.0; 8];
        for corner in 0..8 {
            let mut w = 1.0;
            let mut off = 0isize;
            for a in 0..3 {
                let up = (corner >> (2 - a)) & 1;
                let k = base[a] as isize + up as isize;
                off = off * s + k;
                w *= if up == 1 { frac[a] } else { 1.0 - frac[a] };
            }
            offsets[corner] = off;
            weights[corner] = w;
        }
        Self {
            base,
            frac,
            offsets,
            weights,
        }
    }

    /// Node indices along axis `a` whose shifted point stays inside the box.
    #[inline]
    pub fn valid_range(&self, a: usize, n: usize) -> (i64, i64) {
        let lo = -self.base[a];
        let hi = if self.frac[a] == 0.0 {
            n as i64 - 1 - self.base[a]
        } else {
            n as i64 - 2 - self.base[a]
        };
        (lo, hi)
    }

    /// Whether the shifted point of `node` lies inside the box.
    #[inline]
    pub fn lands_inside(&self, node: [usize; 3], n: usize) -> bool {
        (0..3).all(|a| {
            let (lo, hi) = self.valid_range(a, n);
            let i = node[a] as i64;
            i >= lo && i <= hi
        })
    }

    /// Trilinear value at the shifted point of padded index `c`.
    #[inline]
    pub fn eval(&self, fp: &[f64], c: usize) -> f64 {
        let mut acc = 0.0;
        for k in 0..8 {
            acc += self.weights[k] * fp[(c as isize + self.offsets[k]) as usize];
        }
        acc
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Stencil {
    pub d: [i64; 3],
    pub partner_offset: isize,
    /// Sphere weight times `B(omega) + B(-omega)`.
    pub weight: f64,
    pub out1: PointStencil,
    pub out2: PointStencil,
}

/// Loop bounds of one stencil pass, in node indices, per axis.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PassBounds {
    pub partner: [(i64, i64); 3],
    pub out1: [(i64, i64); 3],
    pub out2: [(i64, i64); 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Outgoing {
    First,
    Second,
}

/// One contiguous run of nodes `z0..z0+len` at fixed `(ix, iy)` for one stencil.
pub(crate) struct RowPass<'s> {
    pub st: &'s Stencil,
    pub iy: usize,
    pub z0: usize,
    pub len: usize,
    /// Padded index of the first node.
    pub c0: usize,
    /// Local sub-ranges where the outgoing points lie inside the box.
    pub out1: Option<(usize, usize)>,
    pub out2: Option<(usize, usize)>,
}

impl RowPass<'_> {
    #[inline]
    pub fn at<'b>(&self, fp: &'b [f64]) -> &'b [f64] {
        &fp[self.c0..self.c0 + self.len]
    }

    #[inline]
    pub fn partner<'b>(&self, fp: &'b [f64]) -> &'b [f64] {
        let start = (self.c0 as isize + self.st.partner_offset) as usize;
        &fp[start..start + self.len]
    }

    /// Trilinear values at the outgoing point along the row, zero outside the box.
    pub fn interp(&self, fp: &[f64], which: Outgoing, buf: &mut [f64]) {
        let (ps, range) = match which {
            Outgoing::First => (&self.st.out1, self.out1),
            Outgoing::Second => (&self.st.out2, self.out2),
        };
        let buf = &mut buf[..self.len];
        buf.fill(0.0);
        let Some((a, e)) = range else {
            return;
        };
        let dst = &mut buf[a..e];
        for k in 0..8 {
            let w = ps.weights[k];
            if w == 0.0 {
                continue;
            }
            let start = (self.c0 as isize + a as isize + ps.offsets[k]) as usize;
            let src = &fp[start..start + (e - a)];
            for (o, x) in dst.iter_mut().zip(src) {
                *o += w * x;
            }
        }
    }
}

/// Grid, kernel and sphere rule together with the tabulated collision
/// geometry. Shared by the solver and the hierarchy evaluators.
#[derive(Debug, Clone)]
pub struct CollisionContext {
    grid: VelocityGrid,
    kernel: CrossSectionSpec,
    quad: SphereQuadrature,
    pub(crate) pad: usize,
    pub(crate) side: usize,
    pub(crate) stencils: Vec<Stencil>,
    pub(crate) padded_weights: Vec<f64>,
}

impl CollisionContext {
    pub fn new(
        grid: VelocityGrid,
        kernel: CrossSectionSpec,
        quad: SphereQuadrature,
    ) -> Result<Self> {
        kernel.validate()?;
        let h = grid.spacing();
        let reach = (kernel.m_cut / h).floor() as i64;
        let pad = reach as usize + 2;
        let n = grid.n();
        let side = n + 2 * pad;
        let s = side as isize;
        let mut stencils = Vec::new();
        for dx in -reach..=reach {
            for dy in -reach..=reach {
                for dz in -reach..=reach {
                    if dx == 0 && dy == 0 && dz == 0 {
                        continue;
                    }
                    let d = Vec3::new(dx as f64, dy as f64, dz as f64);
                    if d.norm() * h > kernel.m_cut {
                        continue;
                    }
                    let rel = d * h;
                    for (omega, w) in quad.upper_half() {
                        let b =
                            eval_kernel(&kernel, rel, omega) + eval_kernel(&kernel, rel, -omega);
                        let weight = w * b;
                        if weight == 0.0 {
                            continue;
                        }
                        let p = omega * omega.dot(d);
                        let q1 = (-p).to_array();
                        let q2 = (p - d).to_array();
                        stencils.push(Stencil {
                            d: [dx, dy, dz],
                            partner_offset: -((dx as isize * s + dy as isize) * s + dz as isize),
                            weight,
                            out1: PointStencil::new(q1, side),
                            out2: PointStencil::new(q2, side),
                        });
                    }
                }
            }
        }
        let mut padded_weights = vec![0.0; side * side * side];
        for i in 0..grid.len() {
            let [a, b, c] = grid.unflatten(i);
            padded_weights[((a + pad) * side + b + pad) * side + c + pad] = grid.weight(i);
        }
        Ok(Self {
            grid,
            kernel,
            quad,
            pad,
            side,
            stencils,
            padded_weights,
        })
    }

    pub fn grid(&self) -> &VelocityGrid {
        &self.grid
    }

    pub fn kernel(&self) -> &CrossSectionSpec {
        &self.kernel
    }

    pub fn quadrature(&self) -> &SphereQuadrature {
        &self.quad
    }

    /// Number of tabulated `(d, omega)` pairs.
    pub fn stencil_count(&self) -> usize {
        self.stencils.len()
    }

    pub(crate) fn padded(&self, values: &[f64]) -> Vec<f64> {
        let (n, p, s) = (self.grid.n(), self.pad, self.side);
        let mut out = vec![0.0; s * s * s];
        for ix in 0..n {
            for iy in 0..n {
                let src = (ix * n + iy) * n;
                let dst = ((ix + p) * s + iy + p) * s + p;
                out[dst..dst + n].copy_from_slice(&values[src..src + n]);
            }
        }
        out
    }

    #[inline]
    pub(crate) fn row_start(&self, ix: usize, iy: usize) -> usize {
        ((ix + self.pad) * self.side + iy + self.pad) * self.side + self.pad
    }

    pub(crate) fn bounds(&self, st: &Stencil) -> PassBounds {
        let n = self.grid.n();
        let top = n as i64 - 1;
        let mut b = PassBounds {
            partner: [(0, 0); 3],
            out1: [(0, 0); 3],
            out2: [(0, 0); 3],
        };
        for a in 0..3 {
            b.partner[a] = (st.d[a].max(0), top.min(top + st.d[a]));
            b.out1[a] = st.out1.valid_range(a, n);
            b.out2[a] = st.out2.valid_range(a, n);
        }
        b
    }

    fn check_field(&self, f: &DensityField) -> Result<()> {
        if f.grid() != &self.grid {
            return Err(Error::config(
                "field and collision context use different grids",
            ));
        }
        Ok(())
    }

    /// Gather-form collision operator at every node.
    ///
    /// ```text
    /// Q(v1) = sum_{v2} w2 sum_omega w_omega B [ f1' f2' (1 - a f1)(1 - a f2) - f1 f2 (1 - a f1')(1 - a f2') ]
    /// ```
    pub fn collision_operator(&self, f: &DensityField) -> Result<DensityField> {
        self.check_field(f)?;
        let n = self.grid.n();
        let alpha = f.alpha();
        let fp = self.padded(f.values());
        let wp = &self.padded_weights;
        let mut out = vec![0.0; self.grid.len()];
        out.par_chunks_mut(n * n)
            .enumerate()
            .for_each(|(ix, slab)| {
                let mut i1 = vec![0.0; n];
                let mut i2 = vec![0.0; n];
                for st in &self.stencils {
                    self.rows(ix, st, |row| {
                        let len = row.len;
                        row.interp(&fp, Outgoing::First, &mut i1);
                        row.interp(&fp, Outgoing::Second, &mut i2);
                        let f1s = row.at(&fp);
                        let f2s = row.partner(&fp);
                        let w2s = row.partner(wp);
                        let dst = &mut slab[row.iy * n + row.z0..][..len];
                        for z in 0..len {
                            let (f1, f2, g1, g2) = (f1s[z], f2s[z], i1[z], i2[z]);
                            let gain = g1 * g2 * (1.0 - alpha * f1) * (1.0 - alpha * f2);
                            let loss = f1 * f2 * (1.0 - alpha * g1) * (1.0 - alpha * g2);
                            dst[z] += st.weight * w2s[z] * (gain - loss);
                        }
                    });
                }
            });
        DensityField::from_values(self.grid, alpha, out)
    }

    /// Visits the rows `(ix, iy, z0..z0+len)` of one stencil pass whose partner node lies in the box.
    pub(crate) fn rows<'s>(
        &'s self,
        ix: usize,
        st: &'s Stencil,
        mut visit: impl FnMut(&RowPass<'s>),
    ) {
        let b = self.bounds(st);
        let ixi = ix as i64;
        if ixi < b.partner[0].0 || ixi > b.partner[0].1 {
            return;
        }
        let (z0, z1) = b.partner[2];
        if z1 < z0 {
            return;
        }
        let mx1 = ixi >= b.out1[0].0 && ixi <= b.out1[0].1;
        let mx2 = ixi >= b.out2[0].0 && ixi <= b.out2[0].1;
        let local = |(lo, hi): (i64, i64)| -> Option<(usize, usize)> {
            let a = lo.max(z0);
            let e = hi.min(z1);
            (a <= e).then(|| ((a - z0) as usize, (e - z0 + 1) as usize))
        };
        for iy in b.partner[1].0..=b.partner[1].1 {
            let m1 = mx1 && iy >= b.out1[1].0 && iy <= b.out1[1].1;
            let m2 = mx2 && iy >= b.out2[1].0 && iy <= b.out2[1].1;
            let row = RowPass {
                st,
                iy: iy as usize,
                z0: z0 as usize,
                len: (z1 - z0 + 1) as usize,
                c0: self.row_start(ix, iy as usize) + z0 as usize,
                out1: if m1 { local(b.out1[2]) } else { None },
                out2: if m2 { local(b.out2[2]) } else { None },
            };
            visit(&row);
        }
    }

    /// Stability bound `0.1 / (b0 4 pi f_max |ball(m_cut)|)` for the explicit step.
    pub fn dt_max(&self, f: &DensityField) -> f64 {
        let ball = 4.0 / 3.0 * std::f64::consts::PI * self.kernel.m_cut.powi(3);
        let fmax = f.max().max(f64::MIN_POSITIVE);
        0.1 / (self.kernel.b0 * 4.0 * std::f64::consts::PI * fmax * ball)
    }
}

/// Builds a context and evaluates the collision operator once.
pub fn collision_operator(
    f: &DensityField,
    kernel: &CrossSectionSpec,
    quad: &SphereQuadrature,
) -> Result<DensityField> {
    CollisionContext::new(*f.grid(), kernel.clone(), quad.clone())?.collision_operator(f)
}

/// Removes the mass, momentum and energy carried by `q`.
///
/// The correction is the weighted least-squares projection onto the
/// orthogonal complement of `{1, v, |v|^2}` with weights `f (1 - alpha f)`,
/// so it vanishes wherever `f = 0` or `f = 1/alpha`.
pub fn conservative_projection(f: &DensityField, q: &mut DensityField) {
    let grid = *f.grid();
    let alpha = f.alpha();
    let mut a = [[0.0; 5]; 5];
    let mut rhs = [0.0; 5];
    let mut weights = vec![0.0; grid.len()];
    for (i, w) in weights.iter_mut().enumerate() {
        let fi = f.values()[i];
        *w = (fi * (1.0 - alpha * fi)).max(0.0);
        let v = grid.node(i);
        let phi = [1.0, v.x, v.y, v.z, v.norm_sq()];
        let rho = grid.weight(i);
        for m in 0..5 {
            rhs[m] += rho * q.values()[i] * phi[m];
            for k in 0..5 {
                a[m][k] += rho * *w * phi[m] * phi[k];
            }
        }
    }
    let Some(lambda) = solve5(a, rhs) else {
        return;
    };
    for (i, qi) in q.values_mut().iter_mut().enumerate() {
        let v = grid.node(i);
        let phi = [1.0, v.x, v.y, v.z, v.norm_sq()];
        let corr: f64 = (0..5).map(|m| lambda[m] * phi[m]).sum();
        *qi -= weights[i] * corr;
    }
}

/// Gaussian elimination with partial pivoting; `None` for a singular system.
fn solve5(mut a: [[f64; 5]; 5], mut b: [f64; 5]) -> Option<[f64; 5]> {
    let scale = a.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()));
    if scale == 0.0 {
        return None;
    }
    for col in 0..5 {
        let piv = (col..5).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() <= 1e-14 * scale {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..5 {
            let factor = a[row][col] / a[col][col];
            for k in col..5 {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = [0.0; 5];
    for row in (0..5).rev() {
        let s: f64 = (row + 1..5).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}
