use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::GaussRule;
use crate::vec3::Vec3;

/// Parametric description of an initial one-particle density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProfileSpec {
    /// Constant density on a box.
    Uniform { lower: Vec3, upper: Vec3 },
    /// `exp(-|v-c|^2 / 2 s^2) - exp(-R^2 / 2 s^2)` on `|v-c| < R = cutoff * s`, renormalized.
    TruncatedMaxwellian {
        center: Vec3,
        sigma: f64,
        cutoff: f64,
    },
    /// Equal mixture of two truncated Maxwellians centred at `+-separation/2` on the x axis.
    DoubleBump {
        separation: f64,
        sigma: f64,
        cutoff: f64,
    },
}

/// Normalized, bounded, compactly supported initial density `f_in`.
#[derive(Debug, Clone, PartialEq)]
pub struct OneParticleDensity {
    spec: ProfileSpec,
    /// Normalization of one truncated Maxwellian bump.
    norm: f64,
    sup_bound: f64,
}

const RADIAL_PANELS: usize = 16;
const RADIAL_ORDER: usize = 20;

fn bump_shape(r2: f64, sigma: f64, cutoff: f64) -> f64 {
    let rc2 = (cutoff * sigma).powi(2);
    if r2 >= rc2 {
        return 0.0;
    }
    let s2 = 2.0 * sigma * sigma;
    (-r2 / s2).exp() - (-rc2 / s2).exp()
}

/// `4 pi int_0^R r^2 g(r) dr` with composite Gauss–Legendre.
fn radial_integral(r_max: f64, g: impl Fn(f64) -> f64) -> f64 {
    let rule = GaussRule::new(RADIAL_ORDER);
    let h = r_max / RADIAL_PANELS as f64;
    let mut acc = 0.0;
    for p in 0..RADIAL_PANELS {
        let a = p as f64 * h;
        acc += rule.integrate(a, a + h, |r| r * r * g(r));
    }
    4.0 * PI * acc
}

impl OneParticleDensity {
    pub fn new(spec: ProfileSpec) -> Result<Self> {
        let (norm, sup_bound) = match &spec {
            ProfileSpec::Uniform { lower, upper } => {
                let ok = (0..3).all(|a| lower.axis(a) < upper.axis(a))
                    && lower.is_finite()
                    && upper.is_finite();
                if !ok {
                    return Err(Error::config(
                        "uniform profile needs lower < upper on every axis",
                    ));
                }
                let vol = (0..3)
                    .map(|a| upper.axis(a) - lower.axis(a))
                    .product::<f64>();
                (vol, 1.0 / vol)
            }
            ProfileSpec::TruncatedMaxwellian { sigma, cutoff, .. }
            | ProfileSpec::DoubleBump { sigma, cutoff, .. } => {
                let positive = |x: f64| x > 0.0 && x.is_finite();
                if !positive(*sigma) || !positive(*cutoff) {
                    return Err(Error::config(format!(
                        "profile needs positive sigma and cutoff, got sigma = {sigma}, cutoff = {cutoff}"
                    )));
                }
                match &spec {
                    ProfileSpec::DoubleBump { separation, .. }
                        if !(separation.is_finite() && *separation >= 0.0) =>
                    {
                        return Err(Error::config("double bump separation must be >= 0"));
                    }
                    ProfileSpec::TruncatedMaxwellian { center, .. } if !center.is_finite() => {
                        return Err(Error::config("profile centre must be finite"));
                    }
                    _ => {}
                }
                let (s, c) = (*sigma, *cutoff);
                let z = radial_integral(c * s, |r| bump_shape(r * r, s, c));
                let peak = bump_shape(0.0, s, c) / z;
                (z, peak)
            }
        };
        Ok(Self {
            spec,
            norm,
            sup_bound,
        })
    }

    pub fn uniform(lower: Vec3, upper: Vec3) -> Result<Self> {
        Self::new(ProfileSpec::Uniform { lower, upper })
    }

    pub fn truncated_maxwellian(sigma: f64, cutoff: f64) -> Result<Self> {
        Self::new(ProfileSpec::TruncatedMaxwellian {
            center: Vec3::ZERO,
            sigma,
            cutoff,
        })
    }

    pub fn double_bump(separation: f64, sigma: f64, cutoff: f64) -> Result<Self> {
        Self::new(ProfileSpec::DoubleBump {
            separation,
            sigma,
            cutoff,
        })
    }

    pub fn spec(&self) -> &ProfileSpec {
        &self.spec
    }

    pub fn name(&self) -> &'static str {
        match self.spec {
            ProfileSpec::Uniform { .. } => "uniform",
            ProfileSpec::TruncatedMaxwellian { .. } => "maxwellian",
            ProfileSpec::DoubleBump { .. } => "double_bump",
        }
    }

    /// Certified bound `G >= sup f_in`.
    pub fn sup_bound(&self) -> f64 {
        self.sup_bound
    }

    /// Centre and radius of a ball containing the support.
    pub fn support(&self) -> (Vec3, f64) {
        match self.spec {
            ProfileSpec::Uniform { lower, upper } => {
                ((lower + upper) * 0.5, 0.5 * (upper - lower).norm())
            }
            ProfileSpec::TruncatedMaxwellian {
                center,
                sigma,
                cutoff,
            } => (center, sigma * cutoff),
            ProfileSpec::DoubleBump {
                separation,
                sigma,
                cutoff,
            } => (Vec3::ZERO, 0.5 * separation + sigma * cutoff),
        }
    }

    pub fn support_radius(&self) -> f64 {
        self.support().1
    }

    /// Axis-aligned box containing the support.
    pub fn bounding_box(&self) -> (Vec3, Vec3) {
        match self.spec {
            ProfileSpec::Uniform { lower, upper } => (lower, upper),
            ProfileSpec::TruncatedMaxwellian {
                center,
                sigma,
                cutoff,
            } => {
                let r = sigma * cutoff;
                (center - Vec3::new(r, r, r), center + Vec3::new(r, r, r))
            }
            ProfileSpec::DoubleBump {
                separation,
                sigma,
                cutoff,
            } => {
                let r = sigma * cutoff;
                let h = 0.5 * separation;
                (Vec3::new(-h - r, -r, -r), Vec3::new(h + r, r, r))
            }
        }
    }

    pub fn eval(&self, v: Vec3) -> f64 {
        match self.spec {
            ProfileSpec::Uniform { lower, upper } => {
                let inside =
                    (0..3).all(|a| v.axis(a) >= lower.axis(a) && v.axis(a) < upper.axis(a));
                if inside {
                    self.sup_bound
                } else {
                    0.0
                }
            }
            ProfileSpec::TruncatedMaxwellian {
                center,
                sigma,
                cutoff,
            } => bump_shape((v - center).norm_sq(), sigma, cutoff) / self.norm,
            ProfileSpec::DoubleBump {
                separation,
                sigma,
                cutoff,
            } => {
                let c = Vec3::new(0.5 * separation, 0.0, 0.0);
                0.5 * (bump_shape((v - c).norm_sq(), sigma, cutoff)
                    + bump_shape((v + c).norm_sq(), sigma, cutoff))
                    / self.norm
            }
        }
    }

    /// One exact draw from `f_in`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec3 {
        match self.spec {
            ProfileSpec::Uniform { lower, upper } => Vec3::new(
                rng.random_range(lower.x..upper.x),
                rng.random_range(lower.y..upper.y),
                rng.random_range(lower.z..upper.z),
            ),
            ProfileSpec::TruncatedMaxwellian {
                center,
                sigma,
                cutoff,
            } => center + sample_bump(rng, sigma, cutoff),
            ProfileSpec::DoubleBump {
                separation,
                sigma,
                cutoff,
            } => {
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                Vec3::new(sign * 0.5 * separation, 0.0, 0.0) + sample_bump(rng, sigma, cutoff)
            }
        }
    }

    /// `int g(f_in(v)) dv` for a function with `g(0) = 0`.
    pub fn integrate(&self, g: impl Fn(f64) -> f64) -> f64 {
        match self.spec {
            ProfileSpec::Uniform { .. } => self.norm * g(self.sup_bound),
            ProfileSpec::TruncatedMaxwellian { sigma, cutoff, .. } => {
                let z = self.norm;
                radial_integral(sigma * cutoff, |r| g(bump_shape(r * r, sigma, cutoff) / z))
            }
            ProfileSpec::DoubleBump { .. } => self.integrate_axisymmetric(g),
        }
    }

    /// Cylindrical quadrature around the x axis, split where either ball boundary is crossed.
    fn integrate_axisymmetric(&self, g: impl Fn(f64) -> f64) -> f64 {
        let ProfileSpec::DoubleBump {
            separation,
            sigma,
            cutoff,
        } = self.spec
        else {
            unreachable!()
        };
        let r = sigma * cutoff;
        let centers = [-0.5 * separation, 0.5 * separation];
        let mut xs = vec![
            centers[0] - r,
            centers[0],
            centers[0] + r,
            centers[1] - r,
            centers[1],
            centers[1] + r,
        ];
        xs.sort_by(f64::total_cmp);
        xs.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
        let xrule = GaussRule::new(24);
        let rrule = GaussRule::new(24);
        let sub = 16;
        let half_width = |x: f64, c: f64| (r * r - (x - c).powi(2)).max(0.0).sqrt();
        let mut acc = 0.0;
        for w in xs.windows(2) {
            let h = (w[1] - w[0]) / sub as f64;
            for p in 0..sub {
                let a = w[0] + p as f64 * h;
                acc += xrule.integrate(a, a + h, |x| {
                    let mut rho = [0.0, half_width(x, centers[0]), half_width(x, centers[1])];
                    rho.sort_by(f64::total_cmp);
                    let mut inner = 0.0;
                    for k in 0..2 {
                        if rho[k + 1] > rho[k] {
                            inner += rrule.integrate(rho[k], rho[k + 1], |q| {
                                q * g(self.eval(Vec3::new(x, q, 0.0)))
                            });
                        }
                    }
                    inner
                });
            }
        }
        2.0 * PI * acc
    }

    /// `int_{[lo, hi)} f_in`, exact for the uniform profile.
    pub fn mass_in_box(&self, lo: Vec3, hi: Vec3, rule: &GaussRule) -> f64 {
        if let ProfileSpec::Uniform { lower, upper } = self.spec {
            let overlap: f64 = (0..3)
                .map(|a| (hi.axis(a).min(upper.axis(a)) - lo.axis(a).max(lower.axis(a))).max(0.0))
                .product();
            return overlap * self.sup_bound;
        }
        let (c, rad) = self.support();
        // skip boxes that cannot meet the support ball
        let nearest = Vec3::new(
            c.x.clamp(lo.x, hi.x),
            c.y.clamp(lo.y, hi.y),
            c.z.clamp(lo.z, hi.z),
        );
        if (nearest - c).norm() >= rad {
            return 0.0;
        }
        let xs: Vec<_> = rule.on(lo.x, hi.x).collect();
        let ys: Vec<_> = rule.on(lo.y, hi.y).collect();
        let zs: Vec<_> = rule.on(lo.z, hi.z).collect();
        let mut acc = 0.0;
        for &(x, wx) in &xs {
            for &(y, wy) in &ys {
                for &(z, wz) in &zs {
                    acc += wx * wy * wz * self.eval(Vec3::new(x, y, z));
                }
            }
        }
        acc
    }
}

/// Gaussian proposal thinned by `h(r) / exp(-r^2 / 2 s^2)`.
fn sample_bump<R: Rng + ?Sized>(rng: &mut R, sigma: f64, cutoff: f64) -> Vec3 {
    let normal = Normal::new(0.0, sigma).expect("positive sigma");
    let rc2 = (cutoff * sigma).powi(2);
    let s2 = 2.0 * sigma * sigma;
    loop {
        let v = Vec3::new(normal.sample(rng), normal.sample(rng), normal.sample(rng));
        let r2 = v.norm_sq();
        if r2 >= rc2 {
            continue;
        }
        let keep = 1.0 - ((r2 - rc2) / s2).exp();
        if rng.random::<f64>() < keep {
            return v;
        }
    }
}

/// Uniform on `[0,1]^3`, a truncated Maxwellian (`sigma = 1`, cutoff `4 sigma`)
/// and a double bump of separation 2.
pub fn builtin_profiles() -> Vec<OneParticleDensity> {
    vec![
        OneParticleDensity::uniform(Vec3::ZERO, Vec3::new(1.0, 1.0, 1.0)).expect("valid box"),
        OneParticleDensity::truncated_maxwellian(1.0, 4.0).expect("valid parameters"),
        OneParticleDensity::double_bump(2.0, 1.0, 4.0).expect("valid parameters"),
    ]
}
