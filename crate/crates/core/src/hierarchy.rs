//! Limiting hierarchy operators on factored grid functions.
//!
//! For an order-`k` output and a colliding pair `(v_i, v_{k+1})`:
//!
//! ```text
//! C_{k,k+1} F = sum_i int dv_{k+1} dw B [ F(V^{i}, v'_{k+1}) - F(V, v_{k+1}) ]
//! C_{k,k+2} F = -a sum_i int int B [ F(V^{i}, v'_{k+1}, v_i) + F(V^{i}, v'_{k+1}, v_{k+1})
//!                                 - F(V, v_{k+1}, v'_i)     - F(V, v_{k+1}, v'_{k+1}) ]
//! C_{k,k+3} F = a^2 sum_i int int B [ F(V^{i}, v'_{k+1}, v_{k+1}, v_i) - F(V, v_{k+1}, v'_{k+1}, v'_i) ]
//! ```
//!
//! where `V^{i}` has `v_i` replaced by `v'_i`. Integrals use the grid,
//! kernel and sphere rule of a [`CollisionContext`], so on `f^{(x)m}` the sum
//! `C_{1,2} + C_{1,3}` is the same discrete sum as the U-U operator, arranged
//! differently.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::uu::operator::{Outgoing, RowPass};
use crate::uu::{CollisionContext, DensityField, VelocityGrid};
use crate::vec3::Vec3;

/// One rank-one term `coef * g_1 (x) ... (x) g_m`.
#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub coef: f64,
    pub factors: Vec<DensityField>,
}

/// Grid function on the `m`-fold product grid, kept as a sum of rank-one terms.
///
/// Built by [`SymmetricGridFunction::tensor_power`] or [`SymmetricGridFunction::symmetrized`]
/// it is invariant under permutations of its arguments; [`SymmetricGridFunction::product`]
/// allows non-symmetric inputs for negative controls.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricGridFunction {
    order: usize,
    terms: Vec<Term>,
}

impl SymmetricGridFunction {
    pub fn tensor_power(f: &DensityField, order: usize) -> Self {
        assert!(order >= 1, "order must be positive");
        Self {
            order,
            terms: vec![Term {
                coef: 1.0,
                factors: vec![f.clone(); order],
            }],
        }
    }

    /// Rank-one product `g_1 (x) ... (x) g_m`, symmetric only if all factors agree.
    pub fn product(factors: Vec<DensityField>) -> Result<Self> {
        let first = factors
            .first()
            .ok_or_else(|| Error::config("a product needs at least one factor"))?;
        if factors.iter().any(|g| g.grid() != first.grid()) {
            return Err(Error::config("product factors live on different grids"));
        }
        Ok(Self {
            order: factors.len(),
            terms: vec![Term { coef: 1.0, factors }],
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn grid(&self) -> &VelocityGrid {
        self.terms[0].factors[0].grid()
    }

    /// Average over all argument permutations.
    pub fn symmetrized(&self) -> Self {
        let perms = permutations(self.order);
        let scale = 1.0 / perms.len() as f64;
        let mut terms = Vec::with_capacity(self.terms.len() * perms.len());
        for t in &self.terms {
            for p in &perms {
                terms.push(Term {
                    coef: t.coef * scale,
                    factors: p.iter().map(|&j| t.factors[j].clone()).collect(),
                });
            }
        }
        Self {
            order: self.order,
            terms,
        }
    }

    /// True when every term is a tensor power, which makes the function symmetric.
    pub fn is_tensor_power_sum(&self) -> bool {
        self.terms
            .iter()
            .all(|t| t.factors.windows(2).all(|w| w[0] == w[1]))
    }

    /// Value at a tuple of grid nodes.
    pub fn eval_nodes(&self, nodes: &[usize]) -> f64 {
        assert_eq!(nodes.len(), self.order, "tuple length must equal the order");
        self.terms
            .iter()
            .map(|t| {
                t.coef
                    * t.factors
                        .iter()
                        .zip(nodes)
                        .map(|(g, &i)| g.values()[i])
                        .product::<f64>()
            })
            .sum()
    }

    /// `sum |coef| prod max|g|`, exact for a tensor power of a sign-definite field.
    pub fn sup_bound(&self) -> f64 {
        self.terms
            .iter()
            .map(|t| t.coef.abs() * t.factors.iter().map(|g| g.max_abs()).product::<f64>())
            .sum()
    }
}

fn permutations(m: usize) -> Vec<Vec<usize>> {
    if m == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(m - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, m - 1);
            out.push(q);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Arg {
    /// Pre-collision output variable `v_j`.
    Fixed(usize),
    /// Integration variable `v_{k+1}`.
    Partner,
    /// `v'_i`.
    Out1,
    /// `v'_{k+1}`.
    Out2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HierarchyOp {
    C1,
    C2,
    C3,
}

impl HierarchyOp {
    pub fn shift(self) -> usize {
        match self {
            HierarchyOp::C1 => 1,
            HierarchyOp::C2 => 2,
            HierarchyOp::C3 => 3,
        }
    }

    fn prefactor(self, alpha: f64) -> f64 {
        match self {
            HierarchyOp::C1 => 1.0,
            HierarchyOp::C2 => -alpha,
            HierarchyOp::C3 => alpha * alpha,
        }
    }

    /// Signed argument lists of the integrand for output order `k` and colliding index `i`.
    fn patterns(self, k: usize, i: usize) -> Vec<(f64, Vec<Arg>)> {
        let post: Vec<Arg> = (0..k)
            .map(|j| if j == i { Arg::Out1 } else { Arg::Fixed(j) })
            .chain([Arg::Out2])
            .collect();
        let pre: Vec<Arg> = (0..k).map(Arg::Fixed).chain([Arg::Partner]).collect();
        let with = |base: &[Arg], extra: &[Arg]| -> Vec<Arg> {
            base.iter().chain(extra).copied().collect()
        };
        match self {
            HierarchyOp::C1 => vec![(1.0, post), (-1.0, pre)],
            HierarchyOp::C2 => vec![
                (1.0, with(&post, &[Arg::Fixed(i)])),
                (1.0, with(&post, &[Arg::Partner])),
                (-1.0, with(&pre, &[Arg::Out1])),
                (-1.0, with(&pre, &[Arg::Out2])),
            ],
            HierarchyOp::C3 => vec![
                (1.0, with(&post, &[Arg::Partner, Arg::Fixed(i)])),
                (-1.0, with(&pre, &[Arg::Out2, Arg::Out1])),
            ],
        }
    }
}

/// Products of factor values with signed coefficients, over distinct padded fields.
struct Expansion {
    fields: Vec<Vec<f64>>,
    monomials: Vec<(f64, Vec<(usize, Arg)>)>,
}

impl Expansion {
    fn new(
        ctx: &CollisionContext,
        fun: &SymmetricGridFunction,
        op: HierarchyOp,
        alpha: f64,
        k: usize,
        i: usize,
    ) -> Self {
        let mut distinct: Vec<&DensityField> = Vec::new();
        let mut ids = Vec::new();
        for t in &fun.terms {
            let row: Vec<usize> = t
                .factors
                .iter()
                .map(|g| match distinct.iter().position(|h| *h == g) {
                    Some(p) => p,
                    None => {
                        distinct.push(g);
                        distinct.len() - 1
                    }
                })
                .collect();
            ids.push(row);
        }
        let pre = op.prefactor(alpha);
        let mut monomials = Vec::new();
        for (t, row) in fun.terms.iter().zip(&ids) {
            for (sign, args) in op.patterns(k, i) {
                let factors = row.iter().copied().zip(args).collect();
                monomials.push((pre * sign * t.coef, factors));
            }
        }
        Self {
            fields: distinct.iter().map(|g| ctx.padded(g.values())).collect(),
            monomials,
        }
    }
}

fn check_order(
    fun: &SymmetricGridFunction,
    k: usize,
    op: HierarchyOp,
    ctx: &CollisionContext,
) -> Result<()> {
    if !(k == 1 || k == 2) {
        return Err(Error::config(format!(
            "hierarchy order k must be 1 or 2, got {k}"
        )));
    }
    if fun.order != k + op.shift() {
        return Err(Error::config(format!(
            "{op:?} at k = {k} needs an order-{} input, got order {}",
            k + op.shift(),
            fun.order
        )));
    }
    if fun.grid() != ctx.grid() {
        return Err(Error::config(
            "input and collision context use different grids",
        ));
    }
    Ok(())
}

/// Order-1 output at every node. With `abs` the magnitudes of the
/// individual monomials are summed instead, giving the term scale.
fn dense_k1(
    ctx: &CollisionContext,
    fun: &SymmetricGridFunction,
    op: HierarchyOp,
    alpha: f64,
    abs: bool,
) -> Result<DensityField> {
    check_order(fun, 1, op, ctx)?;
    let ex = Expansion::new(ctx, fun, op, alpha, 1, 0);
    let grid = *ctx.grid();
    let n = grid.n();
    let wp = &ctx.padded_weights;
    let mut needed: Vec<(usize, Arg)> = ex
        .monomials
        .iter()
        .flat_map(|m| m.1.iter().copied())
        .collect();
    needed.sort_by_key(|&(f, a)| (f, format!("{a:?}")));
    needed.dedup();
    let slot = |key: (usize, Arg)| needed.iter().position(|&x| x == key).expect("listed");
    let mono_slots: Vec<(f64, Vec<usize>)> = ex
        .monomials
        .iter()
        .map(|(c, fs)| (*c, fs.iter().map(|&f| slot(f)).collect()))
        .collect();
    let mut out = vec![0.0; grid.len()];
    out.par_chunks_mut(n * n)
        .enumerate()
        .for_each(|(ix, slab)| {
            let mut bufs = vec![vec![0.0; n]; needed.len()];
            let mut acc = vec![0.0; n];
            for st in &ctx.stencils {
                ctx.rows(ix, st, |row: &RowPass| {
                    let len = row.len;
                    for (b, &(f, arg)) in bufs.iter_mut().zip(&needed) {
                        let fp = &ex.fields[f];
                        match arg {
                            Arg::Fixed(_) => b[..len].copy_from_slice(row.at(fp)),
                            Arg::Partner => b[..len].copy_from_slice(row.partner(fp)),
                            Arg::Out1 => row.interp(fp, Outgoing::First, b),
                            Arg::Out2 => row.interp(fp, Outgoing::Second, b),
                        }
                    }
                    acc[..len].fill(0.0);
                    for (c, slots) in &mono_slots {
                        for z in 0..len {
                            let mut p = *c;
                            for &s in slots {
                                p *= bufs[s][z];
                            }
                            acc[z] += if abs { p.abs() } else { p };
                        }
                    }
                    let w2s = row.partner(wp);
                    let dst = &mut slab[row.iy * n + row.z0..][..len];
                    for z in 0..len {
                        dst[z] += st.weight * w2s[z] * acc[z];
                    }
                });
            }
        });
    DensityField::from_values(grid, alpha, out)
}

/// Output value at one node tuple of order `k`, looping over stencils directly.
fn point_eval(ctx: &CollisionContext, expansions: &[Expansion], tuple: &[usize], abs: bool) -> f64 {
    let grid = ctx.grid();
    let n = grid.n();
    let padded_of = |idx: usize| {
        let [a, b, c] = grid.unflatten(idx);
        ctx.row_start(a, b) + c
    };
    let pads: Vec<usize> = tuple.iter().map(|&t| padded_of(t)).collect();
    let wp = &ctx.padded_weights;
    let mut total = 0.0;
    for (i, ex) in expansions.iter().enumerate() {
        let node = grid.unflatten(tuple[i]);
        let c = pads[i];
        for st in &ctx.stencils {
            let inside = (0..3).all(|a| {
                let p = node[a] as i64 - st.d[a];
                p >= 0 && p < n as i64
            });
            if !inside {
                continue;
            }
            let pc = (c as isize + st.partner_offset) as usize;
            let in1 = st.out1.lands_inside(node, n);
            let in2 = st.out2.lands_inside(node, n);
            let value = |f: usize, arg: Arg| -> f64 {
                let fp = &ex.fields[f];
                match arg {
                    Arg::Fixed(j) => fp[pads[j]],
                    Arg::Partner => fp[pc],
                    Arg::Out1 if in1 => st.out1.eval(fp, c),
                    Arg::Out2 if in2 => st.out2.eval(fp, c),
                    _ => 0.0,
                }
            };
            let mut acc = 0.0;
            for (coef, fs) in &ex.monomials {
                let mut p = *coef;
                for &(f, arg) in fs {
                    p *= value(f, arg);
                }
                acc += if abs { p.abs() } else { p };
            }
            total += st.weight * wp[pc] * acc;
        }
    }
    total
}

fn sampled(
    ctx: &CollisionContext,
    fun: &SymmetricGridFunction,
    op: HierarchyOp,
    k: usize,
    alpha: f64,
    tuples: &[Vec<usize>],
    abs: bool,
) -> Result<Vec<f64>> {
    check_order(fun, k, op, ctx)?;
    let len = ctx.grid().len();
    if let Some(t) = tuples
        .iter()
        .find(|t| t.len() != k || t.iter().any(|&i| i >= len))
    {
        return Err(Error::config(format!(
            "invalid node tuple {t:?} for order {k}"
        )));
    }
    let expansions: Vec<Expansion> = (0..k)
        .map(|i| Expansion::new(ctx, fun, op, alpha, k, i))
        .collect();
    Ok(tuples
        .par_iter()
        .map(|t| point_eval(ctx, &expansions, t, abs))
        .collect())
}

/// `C_{1,2} F` at every node.
pub fn apply_c1(ctx: &CollisionContext, fk1: &SymmetricGridFunction) -> Result<DensityField> {
    dense_k1(ctx, fk1, HierarchyOp::C1, alpha_of(fk1), false)
}

/// `C_{1,3} F` at every node, with prefactor `-alpha`.
pub fn apply_c2(
    ctx: &CollisionContext,
    fk2: &SymmetricGridFunction,
    alpha: f64,
) -> Result<DensityField> {
    dense_k1(ctx, fk2, HierarchyOp::C2, alpha, false)
}

/// `C_{k,k+s} F` at the given order-`k` node tuples.
pub fn apply_at(
    ctx: &CollisionContext,
    fun: &SymmetricGridFunction,
    op: HierarchyOp,
    k: usize,
    alpha: f64,
    tuples: &[Vec<usize>],
) -> Result<Vec<f64>> {
    sampled(ctx, fun, op, k, alpha, tuples, false)
}

fn alpha_of(fun: &SymmetricGridFunction) -> f64 {
    fun.terms[0].factors[0].alpha()
}

/// Size of `C_{k,k+3}` next to the size of its individual terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NullityReport {
    /// `max |C_{k,k+3} F|` over output nodes.
    pub max_abs: f64,
    /// `max` over output nodes of the same sum taken over term magnitudes.
    pub term_scale: f64,
}

impl NullityReport {
    pub fn relative(&self) -> f64 {
        if self.term_scale == 0.0 {
            0.0
        } else {
            self.max_abs / self.term_scale
        }
    }
}

/// `C_{k,k+3}` on an order-`k+3` input; all nodes for `k = 1`, the given tuples for `k = 2`.
pub fn c3_nullity(
    ctx: &CollisionContext,
    fun: &SymmetricGridFunction,
    k: usize,
    alpha: f64,
    tuples: Option<&[Vec<usize>]>,
) -> Result<NullityReport> {
    let (vals, scale) = match (k, tuples) {
        (1, None) => (
            dense_k1(ctx, fun, HierarchyOp::C3, alpha, false)?
                .values()
                .to_vec(),
            dense_k1(ctx, fun, HierarchyOp::C3, alpha, true)?
                .values()
                .to_vec(),
        ),
        (_, Some(t)) => (
            sampled(ctx, fun, HierarchyOp::C3, k, alpha, t, false)?,
            sampled(ctx, fun, HierarchyOp::C3, k, alpha, t, true)?,
        ),
        (_, None) => {
            return Err(Error::config(
                "order-2 nullity checks need sampled node tuples",
            ));
        }
    };
    let max = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    Ok(NullityReport {
        max_abs: max(&vals),
        term_scale: max(&scale),
    })
}

/// `max |C_{k,k+3} f^{(x)(k+3)}|` over output nodes (sampled nodes for `k = 2`).
pub fn check_c3_nullity(ctx: &CollisionContext, f: &DensityField, k: usize) -> Result<f64> {
    let fun = SymmetricGridFunction::tensor_power(f, k + 3);
    let tuples = (k == 2).then(|| sample_tuples(ctx.grid(), 2, 64, 0x5eed));
    Ok(c3_nullity(ctx, &fun, k, f.alpha(), tuples.as_deref())?.max_abs)
}

/// `max |C_{1,2} f(x)f + C_{1,3} f(x)f(x)f - Q(f)| / max |Q(f)|`, zero when `Q(f) = 0`.
pub fn factorization_consistency(ctx: &CollisionContext, f: &DensityField) -> Result<f64> {
    let (r, q) = factorization_residual(ctx, f)?;
    Ok(if q == 0.0 { 0.0 } else { r / q })
}

/// Absolute residual and `max |Q(f)|`.
pub fn factorization_residual(ctx: &CollisionContext, f: &DensityField) -> Result<(f64, f64)> {
    let q = ctx.collision_operator(f)?;
    let c1 = apply_c1(ctx, &SymmetricGridFunction::tensor_power(f, 2))?;
    let c2 = apply_c2(ctx, &SymmetricGridFunction::tensor_power(f, 3), f.alpha())?;
    let r = q
        .values()
        .iter()
        .zip(c1.values())
        .zip(c2.values())
        .fold(0.0f64, |m, ((q, a), b)| m.max((a + b - q).abs()));
    Ok((r, q.max_abs()))
}

/// Operator-norm ratios for one input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormScalingRow {
    pub k: usize,
    pub input_sup: f64,
    /// `sup |C_{k,k+1} f^{(x)(k+1)}| / (k sup f^{(x)(k+1)})`.
    pub c1_ratio: f64,
    /// `sup |C_{k,k+2} f^{(x)(k+2)}| / (k alpha sup f^{(x)(k+2)})`.
    pub c2_ratio: f64,
}

/// Ratios for `k = 1` on all nodes and `k = 2` on `samples` node pairs.
pub fn norm_scaling(
    ctx: &CollisionContext,
    f: &DensityField,
    samples: usize,
    seed: u64,
) -> Result<Vec<NormScalingRow>> {
    let alpha = f.alpha();
    let mut rows = Vec::new();
    for k in [1usize, 2] {
        let f1 = SymmetricGridFunction::tensor_power(f, k + 1);
        let f2 = SymmetricGridFunction::tensor_power(f, k + 2);
        let (c1, c2) = if k == 1 {
            (
                apply_c1(ctx, &f1)?.max_abs(),
                apply_c2(ctx, &f2, alpha)?.max_abs(),
            )
        } else {
            let t = sample_tuples(ctx.grid(), 2, samples, seed);
            let m = |v: Vec<f64>| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            (
                m(apply_at(ctx, &f1, HierarchyOp::C1, 2, alpha, &t)?),
                m(apply_at(ctx, &f2, HierarchyOp::C2, 2, alpha, &t)?),
            )
        };
        let s1 = f1.sup_bound();
        let s2 = f2.sup_bound();
        rows.push(NormScalingRow {
            k,
            input_sup: s1,
            c1_ratio: c1 / (k as f64 * s1),
            c2_ratio: if alpha > 0.0 {
                c2 / (k as f64 * alpha * s2)
            } else {
                0.0
            },
        });
    }
    Ok(rows)
}

/// Random node tuples, biased towards the middle half of the box where the field lives.
pub fn sample_tuples(grid: &VelocityGrid, k: usize, count: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = crate::rng::replica_rng(seed, 0);
    let n = grid.n();
    let (lo, hi) = (n / 4, n - n / 4);
    (0..count)
        .map(|_| {
            (0..k)
                .map(|_| {
                    grid.index(
                        rng.random_range(lo..hi),
                        rng.random_range(lo..hi),
                        rng.random_range(lo..hi),
                    )
                })
                .collect()
        })
        .collect()
}

/// Smooth positive field made of three random Gaussian bumps, with maximum
/// below `(1 - 1e-3) / alpha`.
pub fn random_density_field<R: Rng + ?Sized>(
    grid: VelocityGrid,
    alpha: f64,
    rng: &mut R,
) -> DensityField {
    let l = grid.half_width();
    let bumps: Vec<(Vec3, f64, f64)> = (0..3)
        .map(|_| {
            let c = Vec3::new(
                rng.random_range(-l / 3.0..l / 3.0),
                rng.random_range(-l / 3.0..l / 3.0),
                rng.random_range(-l / 3.0..l / 3.0),
            );
            (
                c,
                rng.random_range(0.15..0.4) * l,
                rng.random_range(0.2..1.0),
            )
        })
        .collect();
    let mut f = DensityField::from_fn(grid, alpha, |v| {
        bumps
            .iter()
            .map(|&(c, w, a)| a * (-(v - c).norm_sq() / (2.0 * w * w)).exp())
            .sum()
    });
    let top = if alpha > 0.0 {
        (1.0 - 1e-3) / alpha
    } else {
        1.0
    };
    let target = rng.random_range(0.3..0.9) * top;
    let m = f.max();
    f.values_mut().iter_mut().for_each(|x| *x *= target / m);
    f
}
